"""Pipeline stages wired to files in an output directory.

Each ``stage_*`` function reads only the previous stage's artifacts and
writes its own. :func:`audit_in_memory` runs the same steps without
touching disk (used by simulation studies).
"""

from __future__ import annotations

import hashlib
import json
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from ._text import fold, slugify
from .bias import (BiasReport, PoliticianMeta, ShareVector, audit, compute_shares, format_table,
                   read_metadata, read_report_csv, report_csv, write_metadata, write_report)
from .cluster import KMeans, label_clusters, load_assignments, save_model, select_k
from .config import RunConfig
from .embedding import VectorStore, load_vectors, vectorize_corpus
from .exceptions import AuditError, ConfigError, MissingInputError
from .preprocess import (AuditCorpus, build_corpus, drop_ambiguous_roots, format_stage_report, load_stopwords,
                         read_corpus, stage_report, write_corpus)
from .source import LiveSource, Query, RecordingSource, ReplaySource, SuggestionList
from .synthetic import SyntheticBiasSpec, SyntheticSource, derive_seed
from .tree import RootTerm, SuggestionTree, build_tree, deserialize_tree, prune, read_variants, serialize_tree

logger = logging.getLogger(__name__)

STAGE_ORDER = ("crawl", "prune", "preprocess", "vectorize", "cluster", "analyze", "report")


class CountingSource:
    """Counts fetches passing through to the wrapped source."""

    def __init__(self, inner):
        self.inner = inner
        self.calls = 0

    def fetch(self, query: Query) -> SuggestionList:
        self.calls += 1
        return self.inner.fetch(query)


def make_source(cfg: RunConfig):
    kind = cfg.source["kind"]
    if kind == "live":
        return LiveSource(cfg.source_config())
    if kind == "fixture":
        return ReplaySource.from_file(cfg.source_path("fixture"), cfg.source.get("miss_policy", "empty"))
    spec = SyntheticBiasSpec.from_file(cfg.source_path("synthetic"))
    spec.rng_seed = derive_seed(cfg.seed, "synthetic-source")
    return SyntheticSource(spec)


def load_roots(cfg: RunConfig) -> tuple[list[RootTerm], list[PoliticianMeta]]:
    metas, _ = read_metadata(cfg.roots_file)
    if not metas:
        raise ConfigError(f"{cfg.roots_file}: no root terms")
    roots = []
    for m in metas:
        variants: list[str] = []
        if cfg.variants_dir is not None:
            vfile = Path(cfg.variants_dir) / f"{slugify(m.name)}.txt"
            if vfile.exists():
                variants = read_variants(vfile)
        roots.append(RootTerm(fold(m.name), tuple(variants), m.name))
    return roots, metas


def _out(cfg: RunConfig, *parts) -> Path:
    return Path(cfg.output_dir).joinpath(*parts)


def _require(path: Path, producer: str) -> Path:
    if not path.exists():
        raise MissingInputError(f"{path} not found; run '{producer}' first")
    return path


def _write_json(path: Path, data) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(data, ensure_ascii=False, indent=1) + "\n", encoding="utf-8")
    return path


def _tree_files(directory: Path, producer: str) -> list[Path]:
    _require(directory, producer)
    files = sorted(directory.glob("*.json"))
    if not files:
        raise MissingInputError(f"no tree files in {directory}; run '{producer}' first")
    return files


def update_manifest(cfg: RunConfig, paths: Sequence[Path]) -> None:
    """Record config hash and content digest of each artifact."""
    mpath = _out(cfg, "manifest.json")
    manifest = json.loads(mpath.read_text(encoding="utf-8")) if mpath.exists() else {}
    root = Path(cfg.output_dir)
    for p in paths:
        rel = p.relative_to(root).as_posix()
        manifest[rel] = {"config_hash": cfg.hash(), "sha256": hashlib.sha256(p.read_bytes()).hexdigest()}
    _write_json(mpath, dict(sorted(manifest.items())))


def stage_crawl(cfg: RunConfig, resume: bool = False, source=None) -> dict:
    roots, _ = load_roots(cfg)
    source = CountingSource(source if source is not None else make_source(cfg))
    tree_dir = _out(cfg, "trees")
    tree_dir.mkdir(parents=True, exist_ok=True)
    extra = {"config_hash": cfg.hash()}
    written, per_root, unique = [], {}, set()
    raw = 0
    for rt in roots:
        path = tree_dir / f"{slugify(rt.canonical)}.json"
        previous = deserialize_tree(path) if resume and path.exists() else None

        def checkpoint(tree, path=path):
            serialize_tree(tree, path, extra)

        try:
            tree = build_tree(rt, source, cfg.max_depth, cfg.resolved_alphabet, cfg.locale,
                              workers=cfg.workers, checkpoint=checkpoint, resume=previous)
        except AuditError as exc:
            if getattr(exc, "partial_tree", None) is not None:
                serialize_tree(exc.partial_tree, path, extra)
            raise
        serialize_tree(tree, path, extra)
        written.append(path)
        texts = [fold(n.query) for n in tree.suggestion_nodes()]
        raw += len(texts)
        unique.update(texts)
        per_root[rt.metadata_key] = {"raw": len(texts), "unique": len(set(texts))}
    summary = {"config_hash": cfg.hash(), "roots": len(roots), "raw_count": raw, "unique_count": len(unique),
               "requests": source.calls, "per_root": per_root}
    written.append(_write_json(_out(cfg, "crawl_summary.json"), summary))
    update_manifest(cfg, written)
    return summary


def stage_prune(cfg: RunConfig) -> dict:
    files = _tree_files(_out(cfg, "trees"), "crawl")
    out_dir = _out(cfg, "pruned")
    extra = {"config_hash": cfg.hash()}
    removed, written = {}, []
    for f in files:
        tree, n = prune(deserialize_tree(f))
        removed[tree.root_term.metadata_key] = n
        written.append(serialize_tree(tree, out_dir / f.name, extra))
    summary = {"config_hash": cfg.hash(), "removed": removed, "removed_total": sum(removed.values())}
    written.append(_write_json(_out(cfg, "prune_summary.json"), summary))
    update_manifest(cfg, written)
    return summary


def stage_preprocess(cfg: RunConfig) -> AuditCorpus:
    trees = [deserialize_tree(f) for f in _tree_files(_out(cfg, "pruned"), "prune")]
    corpus = build_corpus(trees, load_stopwords(cfg.stopwords))
    corpus = drop_ambiguous_roots(corpus, cfg.drop_roots)
    path = write_corpus(corpus, _out(cfg, "corpus.jsonl"), extra={"config_hash": cfg.hash()})
    update_manifest(cfg, [path, path.with_suffix(".stages.json")])
    return corpus


def stage_vectorize(cfg: RunConfig, store: VectorStore | None = None):
    corpus = read_corpus(_require(_out(cfg, "corpus.jsonl"), "preprocess"))
    store = store or load_vectors(cfg.vectors)
    corpus, ids, X = vectorize_corpus(corpus, store)
    path = write_corpus(corpus, _out(cfg, "vectorized.jsonl"), extra={"config_hash": cfg.hash()})
    npy = _out(cfg, "vectors.npy")
    np.save(npy, X)
    idp = _write_json(_out(cfg, "vector_ids.json"), {"config_hash": cfg.hash(), "ids": ids})
    table = _out(cfg, "stages.txt")
    table.write_text(format_stage_report(stage_report(corpus)) + f"\nconfig hash: {cfg.hash()}\n", encoding="utf-8")
    update_manifest(cfg, [path, path.with_suffix(".stages.json"), npy, idp, table])
    return corpus, ids, X


def _load_vectors_stage(cfg: RunConfig):
    npy = _require(_out(cfg, "vectors.npy"), "vectorize")
    ids = json.loads(_require(_out(cfg, "vector_ids.json"), "vectorize").read_text(encoding="utf-8"))["ids"]
    return ids, np.load(npy)


def stage_cluster(cfg: RunConfig) -> tuple[KMeans, dict]:
    ids, X = _load_vectors_stage(cfg)
    corpus = read_corpus(_require(_out(cfg, "vectorized.jsonl"), "vectorize"))
    ks = [k for k in cfg.ks if k <= len(X)]
    if not ks:
        raise AuditError(f"only {len(X)} vectors; cannot cluster with k_range {cfg.k_range}")
    diag, model = select_k(X, ks, seed=derive_seed(cfg.seed, "kmeans"), n_restarts=cfg.n_restarts)
    h = {"config_hash": cfg.hash()}
    mpath, apath = _out(cfg, "cluster_model.json"), _out(cfg, "assignments.jsonl")
    save_model(model, ids, mpath, apath, extra=h)
    tokens = corpus.tokens_by_text()
    labels = label_clusters(model, X, ids, [tokens[i] for i in ids], top_n=10)
    kpath = _write_json(_out(cfg, "k_selection.json"), {**diag.to_dict(), **h})
    lpath = _write_json(_out(cfg, "cluster_labels.json"), {"clusters": labels, **h})
    update_manifest(cfg, [mpath, apath, kpath, lpath])
    return model, diag.to_dict()


def stage_analyze(cfg: RunConfig) -> BiasReport:
    corpus = read_corpus(_require(_out(cfg, "vectorized.jsonl"), "vectorize"))
    assignments = load_assignments(_require(_out(cfg, "assignments.jsonl"), "cluster"))
    model = json.loads(_require(_out(cfg, "cluster_model.json"), "cluster").read_text(encoding="utf-8"))
    _, metas = load_roots(cfg)
    corpus.per_root = {k: v for k, v in corpus.per_root.items() if k not in corpus.dropped_roots}
    shares = compute_shares(corpus, assignments, int(model["k"]))
    report = audit(shares, metas, cfg.alpha, cfg.mode, bonferroni=cfg.bonferroni)
    h = {"config_hash": cfg.hash()}
    paths = write_report(report, cfg.output_dir, extra=h)
    spath = _write_json(_out(cfg, "shares.json"), {
        "shares": [{"metadata_key": s.metadata_key, "shares": s.shares.tolist(), "n_suggestions": s.n_suggestions}
                   for s in shares], **h})
    kept = [m for m in metas if m.name not in corpus.dropped_roots]
    mpath = write_metadata(kept, _out(cfg, "politicians_out.csv"), shares)
    update_manifest(cfg, [paths["csv"], paths["json"], spath, mpath])
    return report


def stage_render_report(cfg: RunConfig, significant_only: bool = True) -> str:
    data = json.loads(_require(_out(cfg, "report.json"), "analyze").read_text(encoding="utf-8"))
    report = BiasReport.from_dict(data)
    csv_rows = read_report_csv(_require(_out(cfg, "report.csv"), "analyze").read_text(encoding="utf-8"))
    if sorted(map(repr, csv_rows)) != sorted(map(repr, report.rows)):
        raise AuditError("report.csv and report.json disagree; re-run 'analyze'")
    text = format_table(report, significant_only, cfg.cluster_names or None)
    path = _out(cfg, "report.txt")
    path.write_text(text + f"\nconfig hash: {cfg.hash()}\n", encoding="utf-8")
    update_manifest(cfg, [path])
    return text


def run_all(cfg: RunConfig, resume: bool = False, source=None, significant_only: bool = True) -> str:
    stage_crawl(cfg, resume=resume, source=source)
    stage_prune(cfg)
    stage_preprocess(cfg)
    stage_vectorize(cfg)
    stage_cluster(cfg)
    stage_analyze(cfg)
    return stage_render_report(cfg, significant_only)


@dataclass
class InMemoryAudit:
    trees: list[SuggestionTree]
    corpus: AuditCorpus
    ids: list[str]
    vectors: np.ndarray
    model: KMeans
    shares: list[ShareVector]
    report: BiasReport


def audit_in_memory(roots: Sequence[RootTerm], metas: Sequence[PoliticianMeta], source, stopwords,
                    store: VectorStore, seed: int, max_depth: int = 2, alphabet: Sequence[str] = (),
                    k_range: Sequence[int] = (3,), alpha: float = 0.05, mode: str = "univariate",
                    drop_roots: Sequence[str] = (), n_restarts: int = 10) -> InMemoryAudit:
    """Crawl, prune, preprocess, embed, cluster and audit without any files."""
    trees = [prune(build_tree(rt, source, max_depth, list(alphabet)))[0] for rt in roots]
    corpus = drop_ambiguous_roots(build_corpus(trees, stopwords), drop_roots)
    corpus, ids, X = vectorize_corpus(corpus, store)
    _, model = select_k(X, k_range, seed=derive_seed(seed, "kmeans"), n_restarts=n_restarts)
    assignments = dict(zip(ids, (int(c) for c in model.labels_)))
    shares = compute_shares(corpus, assignments, model.n_clusters)
    report = audit(shares, metas, alpha, mode)
    return InMemoryAudit(trees, corpus, ids, X, model, shares, report)


def record_fixture_crawl(cfg: RunConfig, fixture_path, source=None) -> Path:
    """Crawl every root through a recorder and save the responses as a fixture."""
    recorder = RecordingSource(source if source is not None else make_source(cfg))
    roots, _ = load_roots(cfg)
    for rt in roots:
        build_tree(rt, recorder, cfg.max_depth, cfg.resolved_alphabet, cfg.locale, workers=cfg.workers)
    return recorder.save(fixture_path)
