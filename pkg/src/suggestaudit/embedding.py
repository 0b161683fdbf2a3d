"""Word-vector loading and mean-pooled suggestion embeddings."""

from __future__ import annotations

import gzip
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from ._text import fold
from .exceptions import ParseError
from .preprocess import STAGE_NO_VECTOR, AuditCorpus

logger = logging.getLogger(__name__)


class VectorStore:
    """Immutable token -> vector table backed by one dense matrix."""

    def __init__(self, table: Mapping[str, Sequence[float]], dim: int | None = None):
        tokens = list(table)
        if dim is None:
            if not tokens:
                raise ValueError("dim is required for an empty store")
            dim = len(table[tokens[0]])
        if dim <= 0:
            raise ValueError("dim must be positive")
        matrix = np.zeros((len(tokens), dim), dtype=np.float64)
        for i, tok in enumerate(tokens):
            vec = np.asarray(table[tok], dtype=np.float64)
            if vec.shape != (dim,):
                raise ValueError(f"vector for {tok!r} has shape {vec.shape}, expected ({dim},)")
            matrix[i] = vec
        matrix.setflags(write=False)
        self.dim = dim
        self.matrix = matrix
        self.index = {tok: i for i, tok in enumerate(tokens)}

    @property
    def vocab_size(self) -> int:
        return len(self.index)

    def __contains__(self, token) -> bool:
        return token in self.index

    def __getitem__(self, token) -> np.ndarray:
        return self.matrix[self.index[token]]

    def __len__(self):
        return self.vocab_size

    def tokens(self) -> list[str]:
        return list(self.index)


@dataclass(frozen=True)
class SuggestionVector:
    suggestion_id: str
    vector: np.ndarray
    n_tokens: int


def _open_text(path, mode="rt"):
    path = Path(path)
    if path.suffix == ".gz":
        return gzip.open(path, mode, encoding="utf-8")
    return open(path, mode, encoding="utf-8")


def load_vectors(path) -> VectorStore:
    """Parse the textual word2vec format (``vocab_size dim`` header line).

    Exact duplicate tokens: last line wins. Tokens colliding after case
    folding: the first-seen token keeps the slot.
    """
    raw: dict[str, np.ndarray] = {}
    with _open_text(path) as fh:
        header = fh.readline().split()
        if len(header) != 2:
            raise ParseError("header must be 'vocab_size dim'", 1)
        try:
            declared, dim = int(header[0]), int(header[1])
        except ValueError as exc:
            raise ParseError("header must be two integers", 1) from exc
        if dim <= 0:
            raise ParseError("dim must be positive", 1)
        for lineno, line in enumerate(fh, 2):
            parts = line.rstrip("\n").rstrip(" ").split(" ")
            if not parts or parts == [""]:
                continue
            if len(parts) != dim + 1:
                raise ParseError(f"expected {dim} values, got {len(parts) - 1}", lineno)
            try:
                vec = np.array(parts[1:], dtype=np.float64)
            except ValueError as exc:
                raise ParseError(f"non-numeric value: {exc}", lineno) from exc
            if parts[0] in raw:
                logger.warning("duplicate token %r at line %d; keeping the later vector", parts[0], lineno)
            raw[parts[0]] = vec
    if declared != len(raw):
        logger.warning("header declares %d tokens, file has %d", declared, len(raw))
    folded: dict[str, np.ndarray] = {}
    for tok, vec in raw.items():
        folded.setdefault(fold(tok), vec)
    return VectorStore(folded, dim)


def dump_vectors(store: VectorStore | Mapping[str, Sequence[float]], path, precision: int = 8) -> Path:
    if not isinstance(store, VectorStore):
        store = VectorStore(store)
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with _open_text(path, "wt") as fh:
        fh.write(f"{store.vocab_size} {store.dim}\n")
        for tok, i in store.index.items():
            vals = " ".join(format(float(v), f".{precision}g") for v in store.matrix[i])
            fh.write(f"{tok} {vals}\n")
    return path


def embed(tokens: Sequence[str], store: VectorStore, suggestion_id: str = "") -> SuggestionVector | None:
    """Mean of the token vectors, or ``None`` if any token is out of vocabulary."""
    if not tokens:
        raise ValueError("cannot embed an empty token list")
    idx = []
    for tok in tokens:
        i = store.index.get(fold(tok))
        if i is None:
            return None
        idx.append(i)
    vec = store.matrix[idx].mean(axis=0)
    return SuggestionVector(suggestion_id, vec, len(idx))


def vectorize_corpus(corpus: AuditCorpus, store: VectorStore) -> tuple[AuditCorpus, list[str], np.ndarray]:
    """Embed the global suggestion union and drop texts with OOV tokens.

    Returns the filtered corpus (with the no-vector stage recorded), the
    kept suggestion ids in sorted order and their vectors as rows.
    """
    tokens = corpus.tokens_by_text()
    ids, rows = [], []
    for text in sorted(tokens):
        sv = embed(tokens[text], store, text)
        if sv is not None:
            ids.append(text)
            rows.append(sv.vector)
    keep = set(ids)
    out = corpus.filter(lambda ps: ps.stripped in keep)
    out.record_stage(STAGE_NO_VECTOR)
    X = np.vstack(rows) if rows else np.zeros((0, store.dim))
    return out, ids, X


class MeanEmbeddingVectorizer(BaseEstimator, TransformerMixin):
    """Transformer mapping token lists (or strings) to mean word vectors.

    Parameters
    ----------
    store : VectorStore
        Pretrained vectors. Loaded outside the estimator; never trained.
    on_oov : {"nan", "error"}
        Rows with an out-of-vocabulary token become NaN or raise.
    """

    def __init__(self, store: VectorStore | None = None, on_oov: str = "nan"):
        self.store = store
        self.on_oov = on_oov

    def fit(self, X=None, y=None):
        if self.store is None:
            raise ValueError("a VectorStore is required")
        if self.on_oov not in ("nan", "error"):
            raise ValueError(f"on_oov must be 'nan' or 'error', got {self.on_oov!r}")
        self.n_features_out_ = self.store.dim
        return self

    def transform(self, X: Iterable) -> np.ndarray:
        check_is_fitted(self, "n_features_out_")
        rows = []
        for item in X:
            tokens = fold(item).split() if isinstance(item, str) else list(item)
            sv = embed(tokens, self.store) if tokens else None
            if sv is None:
                if self.on_oov == "error":
                    raise KeyError(f"out-of-vocabulary token in {item!r}")
                rows.append(np.full(self.store.dim, np.nan))
            else:
                rows.append(sv.vector)
        return np.vstack(rows) if rows else np.zeros((0, self.store.dim))

    def oov_mask(self, X: Iterable) -> np.ndarray:
        return np.isnan(self.transform(X)).any(axis=1)
