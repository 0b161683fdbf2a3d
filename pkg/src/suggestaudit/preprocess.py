"""Turn suggestion trees into the analysis corpus.

Root-name tokens are stripped from every suggestion, stopwords removed,
ambiguous roots dropped, and unique-suggestion counts recorded after each
stage.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterable, Mapping, Sequence

from ._text import fold, normalize_ws
from .exceptions import ConfigError, MissingInputError, ParseError
from .tree import RootTerm, SuggestionTree

logger = logging.getLogger(__name__)

STAGE_CRAWL = "RAI crawl"
STAGE_PRUNING = "Pruning"
STAGE_AMBIGUOUS = "removing ambiguous root term"
STAGE_NO_VECTOR = "removing suggestions without vector representation"
STAGES = (STAGE_CRAWL, STAGE_PRUNING, STAGE_AMBIGUOUS, STAGE_NO_VECTOR)


@dataclass(frozen=True)
class ProcessedSuggestion:
    original: str
    stripped: str
    tokens: tuple[str, ...]
    source_root: str
    min_depth: int

    @property
    def empty(self) -> bool:
        return not self.tokens

    def to_record(self) -> dict:
        return {
            "root": self.source_root,
            "original": self.original,
            "stripped": self.stripped,
            "tokens": list(self.tokens),
            "min_depth": self.min_depth,
        }

    @classmethod
    def from_record(cls, rec: dict) -> "ProcessedSuggestion":
        return cls(rec["original"], rec["stripped"], tuple(rec["tokens"]), rec["root"], int(rec["min_depth"]))


@dataclass
class AuditCorpus:
    per_root: dict[str, dict[str, ProcessedSuggestion]] = field(default_factory=dict)
    stage_counts: list[tuple[str, int]] = field(default_factory=list)
    dropped_roots: list[str] = field(default_factory=list)
    raw_count: int = 0

    def unique_texts(self) -> list[str]:
        """Global union of stripped texts, sorted for determinism."""
        return sorted({s for entries in self.per_root.values() for s in entries})

    def unique_count(self) -> int:
        return len({s for entries in self.per_root.values() for s in entries})

    def tokens_by_text(self) -> dict[str, tuple[str, ...]]:
        out = {}
        for entries in self.per_root.values():
            for text, ps in entries.items():
                out.setdefault(text, ps.tokens)
        return out

    def record_stage(self, name: str) -> None:
        self.stage_counts.append((name, self.unique_count()))

    def filter(self, keep) -> "AuditCorpus":
        """Copy keeping only suggestions for which ``keep(ps)`` is true."""
        per_root = {
            root: {t: ps for t, ps in entries.items() if keep(ps)}
            for root, entries in self.per_root.items()
        }
        return replace(self, per_root=per_root, stage_counts=list(self.stage_counts),
                       dropped_roots=list(self.dropped_roots))


def strip_root(query: str, root_term: RootTerm) -> str:
    """Remove whole-word occurrences of the root's tokens (any variant)."""
    if not normalize_ws(query):
        raise ValueError("query is empty")
    root_tokens = root_term.tokens()
    return " ".join(tok for tok in fold(query).split() if tok not in root_tokens)


def remove_stopwords(stripped: str, stopwords: Iterable[str] | None) -> list[str]:
    if stopwords is None:
        raise ConfigError("no stopword list loaded")
    stop = stopwords if isinstance(stopwords, (set, frozenset)) else {fold(w) for w in stopwords}
    return [tok for tok in fold(stripped).split() if tok not in stop]


def load_stopwords(path) -> frozenset[str]:
    try:
        lines = Path(path).read_text(encoding="utf-8").splitlines()
    except FileNotFoundError as exc:
        raise ConfigError(f"stopword file not found: {path}") from exc
    return frozenset(fold(l) for l in lines if l.strip() and not l.lstrip().startswith("#"))


def process_tree(tree: SuggestionTree, stopwords, include_pruned: bool = False) -> dict[str, ProcessedSuggestion]:
    """Unique processed suggestions of one tree, keyed by stripped text.

    Suggestions reducing to nothing after stripping root tokens and
    stopwords are excluded.
    """
    stop = {fold(w) for w in stopwords} if not isinstance(stopwords, frozenset) else stopwords
    key = tree.root_term.metadata_key
    out: dict[str, ProcessedSuggestion] = {}
    for node in tree.suggestion_nodes(include_pruned=include_pruned):
        stripped = strip_root(node.query, tree.root_term)
        if not stripped:
            continue
        tokens = remove_stopwords(stripped, stop)
        if not tokens:
            continue
        prev = out.get(stripped)
        if prev is None:
            out[stripped] = ProcessedSuggestion(node.query, stripped, tuple(tokens), key, node.depth)
        elif node.depth < prev.min_depth:
            out[stripped] = replace(prev, original=node.query, min_depth=node.depth)
    return out


def build_corpus(trees: Sequence[SuggestionTree], stopwords) -> AuditCorpus:
    """Corpus from pruned trees, recording the crawl and pruning stages."""
    stop = frozenset(fold(w) for w in stopwords)
    crawl = AuditCorpus()
    for tree in trees:
        key = tree.root_term.metadata_key
        if key in crawl.per_root:
            raise ConfigError(f"duplicate root {key!r}")
        crawl.per_root[key] = process_tree(tree, stop, include_pruned=True)
        crawl.raw_count += sum(1 for _ in tree.suggestion_nodes())
    crawl.record_stage(STAGE_CRAWL)
    corpus = AuditCorpus(stage_counts=list(crawl.stage_counts), raw_count=crawl.raw_count)
    for tree in trees:
        corpus.per_root[tree.root_term.metadata_key] = process_tree(tree, stop, include_pruned=False)
    corpus.record_stage(STAGE_PRUNING)
    return corpus


def drop_ambiguous_roots(corpus: AuditCorpus, drop_list: Iterable[str]) -> AuditCorpus:
    drop = list(drop_list)
    out = corpus.filter(lambda ps: True)
    for key in drop:
        if key not in out.per_root:
            logger.warning("ambiguous root %r not in corpus; ignored", key)
            continue
        del out.per_root[key]
        out.dropped_roots.append(key)
    out.record_stage(STAGE_AMBIGUOUS)
    return out


def stage_report(corpus: AuditCorpus) -> list[tuple[str, int]]:
    """Stage/count rows in pipeline order; stages not yet run count 0."""
    recorded = dict(corpus.stage_counts)
    return [(name, recorded.get(name, 0)) for name in STAGES]


def format_stage_report(rows: Sequence[tuple[str, int]]) -> str:
    width = max(len("preprocessing step"), *(len(n) for n, _ in rows))
    lines = [f"{'preprocessing step':<{width}} | unique suggestions", "-" * (width + 21)]
    lines += [f"{name:<{width}} | {count:,}" for name, count in rows]
    return "\n".join(lines) + "\n"


def write_corpus(corpus: AuditCorpus, path, stages_path=None, extra: Mapping | None = None) -> Path:
    """JSON Lines, one record per suggestion; stage counts go to a sidecar."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as fh:
        for root in sorted(corpus.per_root):
            for text in sorted(corpus.per_root[root]):
                fh.write(json.dumps(corpus.per_root[root][text].to_record(), ensure_ascii=False) + "\n")
    stages_path = Path(stages_path) if stages_path else path.with_suffix(".stages.json")
    side = {
        "stage_counts": [[n, c] for n, c in corpus.stage_counts],
        "raw_count": corpus.raw_count,
        "dropped_roots": corpus.dropped_roots,
        "roots": sorted(corpus.per_root),
    }
    if extra:
        side.update(extra)
    stages_path.write_text(json.dumps(side, ensure_ascii=False, indent=1) + "\n", encoding="utf-8")
    return path


def read_corpus(path, stages_path=None) -> AuditCorpus:
    path = Path(path)
    stages_path = Path(stages_path) if stages_path else path.with_suffix(".stages.json")
    if not path.exists() or not stages_path.exists():
        raise MissingInputError(f"corpus files missing: {path}, {stages_path}")
    side = json.loads(stages_path.read_text(encoding="utf-8"))
    corpus = AuditCorpus(
        per_root={r: {} for r in side.get("roots", [])},
        stage_counts=[(n, int(c)) for n, c in side["stage_counts"]],
        dropped_roots=list(side.get("dropped_roots", [])),
        raw_count=int(side.get("raw_count", 0)),
    )
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                ps = ProcessedSuggestion.from_record(json.loads(line))
            except (ValueError, KeyError) as exc:
                raise ParseError(f"{path}: {exc}", lineno) from exc
            corpus.per_root.setdefault(ps.source_root, {})[ps.stripped] = ps
    return corpus
