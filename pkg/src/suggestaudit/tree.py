"""Suggestion trees built by recursive interrogation of a suggestion source.

A tree starts at the root query. Its first layer holds the root's own
suggestions plus one letter seed per alphabet character ("root a",
"root b", ...). Every node that has not been expanded before is fed back
to the source, level by level, until ``max_depth`` is reached or a level
produces nothing new.
"""

from __future__ import annotations

import copy
import json
import logging
import string
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Iterator, Sequence

from ._text import fold, normalize_ws
from .exceptions import AuditError, ParseError
from .source import Query, SuggestionSource

logger = logging.getLogger(__name__)

ROOT, LETTER_SEED, SUGGESTION = "root", "letter_seed", "suggestion"
ORIGINS = (ROOT, LETTER_SEED, SUGGESTION)

GERMAN_EXTRA = ("ä", "ö", "ü", "ß")


def default_alphabet(locale: str = "de") -> list[str]:
    letters = list(string.ascii_lowercase)
    if locale.split("-")[0].lower() == "de":
        letters.extend(GERMAN_EXTRA)
    return letters


@dataclass(frozen=True)
class RootTerm:
    canonical: str
    variants: tuple[str, ...] = ()
    metadata_key: str = ""

    def __post_init__(self):
        canonical = normalize_ws(self.canonical)
        if not canonical:
            raise ValueError("root term is empty")
        variants = [canonical] + [normalize_ws(v) for v in self.variants]
        uniq = tuple(dict.fromkeys(v for v in variants if v))
        object.__setattr__(self, "canonical", canonical)
        object.__setattr__(self, "variants", uniq)
        object.__setattr__(self, "metadata_key", self.metadata_key or canonical)

    def matches(self, text: str) -> bool:
        """True if ``text`` contains any variant (case-folded substring)."""
        folded = fold(text)
        return any(fold(v) in folded for v in self.variants)

    def tokens(self) -> set[str]:
        return {tok for v in self.variants for tok in fold(v).split()}


@dataclass
class TreeNode:
    query: str
    added_term: str = ""
    depth: int = 0
    origin: str = SUGGESTION
    pruned: bool = False
    children: list["TreeNode"] = field(default_factory=list)

    def iter_nodes(self) -> Iterator["TreeNode"]:
        """Pre-order traversal, iterative (trees can be wide)."""
        stack = [self]
        while stack:
            node = stack.pop()
            yield node
            stack.extend(reversed(node.children))

    def to_dict(self) -> dict:
        return {
            "query": self.query,
            "added_term": self.added_term,
            "depth": self.depth,
            "origin": self.origin,
            "pruned": self.pruned,
            "children": [c.to_dict() for c in self.children],
        }

    @classmethod
    def from_dict(cls, data: dict) -> "TreeNode":
        try:
            origin = data["origin"]
            if origin not in ORIGINS:
                raise ParseError(f"unknown node origin {origin!r}")
            return cls(
                query=data["query"],
                added_term=data["added_term"],
                depth=int(data["depth"]),
                origin=origin,
                pruned=bool(data["pruned"]),
                children=[cls.from_dict(c) for c in data["children"]],
            )
        except (KeyError, TypeError) as exc:
            raise ParseError(f"malformed tree node: {exc}") from exc


@dataclass
class SuggestionTree:
    root_term: RootTerm
    root: TreeNode
    max_depth: int
    alphabet: list[str]
    crawl_stats: dict = field(default_factory=dict)

    def iter_nodes(self) -> Iterator[TreeNode]:
        return self.root.iter_nodes()

    def levels(self) -> list[list[TreeNode]]:
        """Nodes grouped by depth, each level in breadth-first order."""
        out, level = [], [self.root]
        while level:
            out.append(level)
            level = [c for n in level for c in n.children]
        return out

    def node_count(self) -> int:
        return sum(1 for _ in self.iter_nodes())

    def suggestion_nodes(self, include_pruned: bool = True) -> Iterator[TreeNode]:
        for node in self.iter_nodes():
            if node.origin == SUGGESTION and (include_pruned or not node.pruned):
                yield node

    def to_dict(self) -> dict:
        return {
            "root_term": self.root_term.canonical,
            "variants": list(self.root_term.variants),
            "metadata_key": self.root_term.metadata_key,
            "max_depth": self.max_depth,
            "alphabet": list(self.alphabet),
            "crawl_stats": dict(self.crawl_stats),
            "root": self.root.to_dict(),
        }

    @classmethod
    def from_dict(cls, data: dict) -> "SuggestionTree":
        try:
            root_term = RootTerm(data["root_term"], tuple(data["variants"]), data.get("metadata_key", ""))
            return cls(root_term, TreeNode.from_dict(data["root"]), int(data["max_depth"]),
                       list(data["alphabet"]), dict(data["crawl_stats"]))
        except (KeyError, TypeError) as exc:
            raise ParseError(f"malformed tree file: {exc}") from exc


def expand_root(root_term: RootTerm, alphabet: Sequence[str], locale: str = "de") -> list[Query]:
    """The root query followed by ``root + " " + ch`` for each character."""
    if len(set(alphabet)) != len(alphabet):
        raise ValueError("alphabet characters must be distinct")
    base = root_term.canonical
    return [Query(base, locale)] + [Query(f"{base} {ch}", locale) for ch in alphabet]


def _added_term(parent: TreeNode, text: str, root_query: str) -> str:
    # letter seeds are completed, not extended: "x a" -> "x apple"
    base = root_query if parent.origin == LETTER_SEED else parent.query
    if fold(text).startswith(fold(base) + " "):
        return text[len(base) + 1:]
    return text


def _expanded_flags(tree: SuggestionTree) -> dict[int, bool]:
    """Replays the visited-set rule: first occurrence in level order expands."""
    seen: set[str] = set()
    flags = {}
    for level in tree.levels():
        for node in level:
            key = fold(node.query)
            flags[id(node)] = key not in seen
            seen.add(key)
    return flags


def build_tree(
    root_term: RootTerm,
    source: SuggestionSource,
    max_depth: int = 8,
    alphabet: Sequence[str] | None = None,
    locale: str = "de",
    workers: int = 1,
    checkpoint: Callable[[SuggestionTree], None] | None = None,
    resume: SuggestionTree | None = None,
) -> SuggestionTree:
    """Breadth-first recursive interrogation.

    A query already expanded (or queued for expansion) elsewhere in the tree
    is attached again as a leaf but never fetched twice. ``checkpoint`` is
    called after every committed level; passing a checkpointed tree as
    ``resume`` continues from its last completed level.
    """
    if max_depth < 1:
        raise ValueError("max_depth must be >= 1")
    if alphabet is None:
        alphabet = default_alphabet(locale)

    if resume is not None:
        tree = resume
        stats = tree.crawl_stats
        if stats.get("finished"):
            return tree
        max_depth = tree.max_depth
        flags = _expanded_flags(tree)
        visited = {fold(n.query) for n in tree.iter_nodes()}
        done = stats.get("completed_depth", 0)
        frontier = [n for n in tree.levels()[done] if flags[id(n)]] if done < len(tree.levels()) else []
    else:
        seeds = expand_root(root_term, alphabet, locale)
        root = TreeNode(seeds[0].text, "", 0, ROOT)
        tree = SuggestionTree(root_term, root, max_depth, list(alphabet), {
            "requests": 0, "suggestions_returned": 0, "duplicates_skipped": 0,
            "completed_depth": 0, "finished": False,
        })
        stats = tree.crawl_stats
        visited = {fold(q.text) for q in seeds}
        frontier = [root]
        done = 0

    seed_nodes = {fold(q.text): q.text for q in expand_root(tree.root_term, tree.alphabet, locale)[1:]}

    def fetch(node: TreeNode):
        return source.fetch(Query(node.query, locale))

    pool = ThreadPoolExecutor(max_workers=workers) if workers > 1 else None
    try:
        while frontier and done < max_depth:
            results = []
            try:
                if pool is None:
                    for node in frontier:
                        results.append(fetch(node))
                else:
                    results = list(pool.map(fetch, frontier))
            except AuditError as exc:
                exc.partial_tree = tree
                raise
            next_frontier = []
            for node, result in zip(frontier, results):
                stats["requests"] += 1
                stats["suggestions_returned"] += len(result.suggestions)
                siblings = set()
                for text in result.suggestions:
                    key = fold(text)
                    if key in siblings or (node.origin == ROOT and key in seed_nodes):
                        stats["duplicates_skipped"] += 1
                        continue
                    siblings.add(key)
                    child = TreeNode(text, _added_term(node, text, tree.root_term.canonical), node.depth + 1)
                    node.children.append(child)
                    if key in visited:
                        stats["duplicates_skipped"] += 1
                    else:
                        visited.add(key)
                        next_frontier.append(child)
                if node.origin == ROOT:
                    for key, text in seed_nodes.items():
                        node.children.append(TreeNode(text, "", 1, LETTER_SEED))
                    next_frontier.extend(c for c in node.children if c.origin == LETTER_SEED)
            done += 1
            stats["completed_depth"] = done
            frontier = next_frontier
            if not frontier or done >= max_depth:
                stats["finished"] = True
            if checkpoint is not None:
                checkpoint(tree)
    finally:
        if pool is not None:
            pool.shutdown()
    stats["finished"] = True
    return tree


def prune(tree: SuggestionTree, root_term: RootTerm | None = None) -> tuple[SuggestionTree, int]:
    """Mark nodes whose query lacks every root variant, plus their sub-trees.

    Returns a pruned copy and the number of newly pruned nodes. Root and
    letter-seed nodes are never pruned.
    """
    root_term = root_term or tree.root_term
    out = copy.deepcopy(tree)
    removed = 0
    stack = [(out.root, False)]
    while stack:
        node, inherited = stack.pop()
        if node.origin == SUGGESTION:
            mark = inherited or node.pruned or not root_term.matches(node.query)
            if mark and not node.pruned:
                node.pruned = True
                removed += 1
            inherited = mark
        stack.extend((c, inherited) for c in node.children)
    return out, removed


def dumps_tree(tree: SuggestionTree, extra: dict | None = None) -> str:
    data = tree.to_dict()
    if extra:
        data.update(extra)
    return json.dumps(data, ensure_ascii=False, indent=1) + "\n"


def serialize_tree(tree: SuggestionTree, path, extra: dict | None = None) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_suffix(path.suffix + ".tmp")
    tmp.write_text(dumps_tree(tree, extra), encoding="utf-8")
    tmp.replace(path)
    return path


def deserialize_tree(path) -> SuggestionTree:
    try:
        data = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ParseError(f"{path}: {exc.msg}", exc.lineno) from exc
    return SuggestionTree.from_dict(data)


def read_variants(path) -> list[str]:
    """One variant per line; blank lines and ``#`` comments ignored."""
    lines = Path(path).read_text(encoding="utf-8").splitlines()
    return [normalize_ws(l) for l in lines if l.strip() and not l.lstrip().startswith("#")]
