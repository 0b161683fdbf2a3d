"""Recursive autocomplete interrogation and topical group-bias auditing."""

from .bias import BiasReport, DummyEncoder, PoliticianMeta, ShareVector, audit, compute_shares, dummy_encode
from .cluster import KMeans, kmeans, label_clusters, select_k, silhouette
from .embedding import MeanEmbeddingVectorizer, VectorStore, embed, load_vectors
from .preprocess import AuditCorpus, build_corpus, drop_ambiguous_roots, remove_stopwords, stage_report, strip_root
from .source import LiveSource, Query, ReplaySource, SourceConfig, SuggestionList, fetch_suggestions, record_fixture
from .stats import OLSRegression, ols, t_cdf, two_sided_p
from .synthetic import SyntheticBiasSpec, SyntheticSource, synthesize_source
from .tree import RootTerm, SuggestionTree, TreeNode, build_tree, deserialize_tree, expand_root, prune, serialize_tree

__version__ = "0.1.0"
