"""Synthetic suggestion engines and corpora with planted topical bias.

Used to validate the pipeline end to end where live crawls cannot be
reproduced: every politician (root) belongs to a group, every group has a
topic mixture, and generated suggestions extend the query with terms from
the topic lexicons.
"""

from __future__ import annotations

import hashlib
import json
import math
import random
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from ._text import fold, slugify
from .bias import PARTIES, ROLES, PoliticianMeta, write_metadata
from .exceptions import ConfigError
from .source import MAX_SUGGESTIONS, Query, SuggestionList


def derive_seed(seed: int, label: str) -> int:
    """Stable labelled sub-seed so each consumer gets its own stream."""
    digest = hashlib.blake2b(f"{seed}:{label}".encode(), digest_size=8).digest()
    return int.from_bytes(digest, "big") >> 1


@dataclass
class SyntheticBiasSpec:
    mixtures: dict[str, dict[str, float]]
    vocabulary: dict[str, list[str]]
    roots: dict[str, str]
    branching: float = 3.0
    depth_decay: float = 1.0
    rng_seed: int = 0
    # probability that a suggestion abandons the root (pruning fodder)
    drift: float = 0.0

    def __post_init__(self):
        self.validate()

    def validate(self) -> None:
        if not 1 <= self.branching <= MAX_SUGGESTIONS:
            raise ConfigError(f"branching must lie in [1, {MAX_SUGGESTIONS}]")
        if not 0.0 <= self.depth_decay <= 1.0:
            raise ConfigError("depth_decay is a probability")
        if not 0.0 <= self.drift <= 1.0:
            raise ConfigError("drift is a probability")
        for group, mix in self.mixtures.items():
            if abs(sum(mix.values()) - 1.0) > 1e-9:
                raise ConfigError(f"mixture of group {group!r} sums to {sum(mix.values())}, not 1")
            if any(p < 0 for p in mix.values()):
                raise ConfigError(f"mixture of group {group!r} has negative weights")
            unknown = set(mix) - set(self.vocabulary)
            if unknown:
                raise ConfigError(f"mixture of group {group!r} names unknown topics {sorted(unknown)}")
        for topic, terms in self.vocabulary.items():
            if not terms:
                raise ConfigError(f"topic {topic!r} has an empty lexicon")
        missing = set(self.roots.values()) - set(self.mixtures)
        if missing:
            raise ConfigError(f"roots reference undefined groups {sorted(missing)}")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: Mapping) -> "SyntheticBiasSpec":
        return cls(**dict(data))

    @classmethod
    def from_file(cls, path) -> "SyntheticBiasSpec":
        text = Path(path).read_text(encoding="utf-8")
        if str(path).endswith((".yaml", ".yml")):
            import yaml

            return cls.from_dict(yaml.safe_load(text))
        return cls.from_dict(json.loads(text))

    def save(self, path) -> Path:
        path = Path(path)
        path.write_text(json.dumps(self.to_dict(), ensure_ascii=False, indent=1) + "\n", encoding="utf-8")
        return path


class SyntheticSource:
    """Deterministic suggestion engine driven by a :class:`SyntheticBiasSpec`.

    Each query seeds its own RNG from ``(rng_seed, query text)``, so the
    source is pure and safe to share between threads. A node's children
    stay in its topic; the topic of a first-level term is drawn from the
    root's group mixture.
    """

    def __init__(self, spec: SyntheticBiasSpec):
        spec.validate()
        self.spec = spec
        self._roots = sorted(((fold(r), g) for r, g in spec.roots.items()), key=lambda x: -len(x[0]))
        self._topic_of = {}
        for topic, terms in spec.vocabulary.items():
            for term in terms:
                self._topic_of.setdefault(fold(term).split()[0], topic)
        self._by_letter = {
            topic: {ch: [t for t in terms if fold(t).startswith(ch)] for ch in {fold(t)[0] for t in terms}}
            for topic, terms in spec.vocabulary.items()
        }
        self._mix = {g: (list(m), list(m.values())) for g, m in spec.mixtures.items()}
        self._uniform = (list(spec.vocabulary), [1.0] * len(spec.vocabulary))

    def _rng(self, text: str) -> random.Random:
        digest = hashlib.blake2b(f"{self.spec.rng_seed}\x00{text}".encode(), digest_size=8).digest()
        return random.Random(int.from_bytes(digest, "big"))

    def _locate(self, text: str):
        """(root, group, remainder tokens) for the query, root may be None."""
        folded = fold(text)
        for root, group in self._roots:
            if folded == root or folded.startswith(root + " "):
                return root, group, folded[len(root):].split()
        return None, None, folded.split()

    def fetch(self, query: Query) -> SuggestionList:
        spec = self.spec
        rng = self._rng(query.text)
        if rng.random() >= spec.depth_decay:
            return SuggestionList(query, ())
        b = spec.branching
        n = min(MAX_SUGGESTIONS, int(b) + (rng.random() < b - int(b)))
        root, group, rest = self._locate(query.text)
        letter = None
        if root is not None and len(rest) == 1 and len(rest[0]) == 1:
            letter, rest = rest[0], []
        topic = self._topic_of.get(rest[0]) if rest else None
        base = query.text if letter is None else query.text[: -len(letter)].rstrip()
        topics, weights = self._mix[group] if group is not None else self._uniform
        used = set(fold(query.text).split())
        out: list[str] = []
        for _ in range(n):
            for _attempt in range(20):
                t = topic or rng.choices(topics, weights)[0]
                pool = spec.vocabulary[t]
                if letter is not None:
                    pool = self._by_letter[t].get(letter) or pool
                term = pool[rng.randrange(len(pool))]
                if set(fold(term).split()) & used:
                    continue
                if spec.drift and rng.random() < spec.drift:
                    text = term
                else:
                    text = f"{base} {term}"
                if text not in out:
                    out.append(text)
                    break
        return SuggestionList(query, tuple(out))


def synthesize_source(spec: SyntheticBiasSpec) -> SyntheticSource:
    return SyntheticSource(spec)


_SYLLABLES = ["ka", "lo", "mi", "ten", "ra", "sul", "be", "dor", "vi", "gan", "pe", "tur",
              "no", "sa", "fel", "hu", "ri", "mon", "za", "kel", "bra", "tis", "ul", "ven"]


def make_vocabulary(topics: Sequence[str] = ("politics", "locations", "personal"), n_per_topic: int = 120,
                    seed: int = 0) -> dict[str, list[str]]:
    """Pseudo-word lexicons with globally unique words, spread over a-z."""
    rng = random.Random(seed)
    letters = "abcdefghijklmnopqrstuvwxyz"
    seen: set[str] = set()
    vocab = {}
    for t in topics:
        words = []
        while len(words) < n_per_topic:
            w = letters[len(words) % 26] + "".join(rng.choice(_SYLLABLES) for _ in range(rng.randint(1, 3)))
            if w not in seen:
                seen.add(w)
                words.append(w)
        vocab[t] = words
    return vocab


def topic_vectors(vocabulary: Mapping[str, Sequence[str]], dim: int = 16, seed: int = 0, spread: float = 0.15,
                  exclude: Sequence[str] = (), stopwords: Sequence[str] = ()) -> dict[str, np.ndarray]:
    """Word vectors clustered around one random direction per topic."""
    rng = np.random.default_rng(seed)
    skip = {fold(w) for w in exclude} | {fold(w) for w in stopwords}
    table = {}
    for topic in vocabulary:
        center = rng.normal(size=dim)
        center *= 3.0 / np.linalg.norm(center)
        for term in vocabulary[topic]:
            for tok in fold(term).split():
                if tok in skip or tok in table:
                    continue
                table[tok] = center + rng.normal(scale=spread, size=dim)
    return table


# party / role sizes for a 54-person panel shaped like a federal cabinet roster
_PARTY_COUNTS = {"SPD": 12, "CDU": 12, "CSU": 5, "FDP": 6, "AFD": 5, "Left": 6, "Greens": 8}
_ROLE_COUNTS = {"minister_2021": 16, "minister_2017": 16, "prime_minister": 14, "party_leader": 8}


def _apportion(counts: Mapping[str, int], n: int) -> list[str]:
    total = sum(counts.values())
    raw = {k: v * n / total for k, v in counts.items()}
    alloc = {k: math.floor(x) for k, x in raw.items()}
    for k in sorted(raw, key=lambda k: alloc[k] - raw[k])[: n - sum(alloc.values())]:
        alloc[k] += 1
    return [k for k, c in alloc.items() for _ in range(c)]


def make_politicians(n: int = 54, seed: int = 0, female_share: float = 20 / 54) -> list[PoliticianMeta]:
    """Synthetic panel: ~36% female, party and role mix of a federal cabinet."""
    rng = random.Random(seed)
    n_f = round(n * female_share)
    genders = ["female"] * n_f + ["male"] * (n - n_f)
    parties = _apportion(_PARTY_COUNTS, n)
    roles = _apportion(_ROLE_COUNTS, n)
    rng.shuffle(parties)
    rng.shuffle(roles)
    rng.shuffle(genders)
    out = []
    for i in range(n):
        out.append(PoliticianMeta(f"person {i:02d}", genders[i], parties[i], rng.randint(1950, 1990), roles[i]))
    return out


def planted_mixtures(politicians: Sequence[PoliticianMeta], topics: Sequence[str], base: Sequence[float],
                     plant: Mapping[str, float] | None = None, group=("gender", "female"),
                     noise: float = 0.05, seed: int = 0) -> dict[str, dict[str, float]]:
    """Per-politician topic mixtures: base + plant (for ``group``) + N(0, noise).

    Noise is added to every topic but the last, which absorbs the
    remainder so each mixture sums to one.
    """
    rng = np.random.default_rng(seed)
    plant = dict(plant or {})
    attr, level = group
    out = {}
    for p in politicians:
        mix = np.asarray(base, dtype=float).copy()
        if getattr(p, attr) == level:
            mix += np.array([plant.get(t, 0.0) for t in topics])
        mix[:-1] += rng.normal(scale=noise, size=len(topics) - 1)
        mix[:-1] = np.clip(mix[:-1], 0.005, None)
        mix[-1] = 1.0 - mix[:-1].sum()
        if mix[-1] < 0.005:
            mix[-1] = 0.005
            mix = mix / mix.sum()
        mix[-1] = 1.0 - mix[:-1].sum()
        out[p.name] = {t: float(x) for t, x in zip(topics, mix)}
    return out


def planted_spec(politicians: Sequence[PoliticianMeta], vocabulary: Mapping[str, Sequence[str]],
                 plant: Mapping[str, float] | None = None, group=("gender", "female"), noise: float = 0.05,
                 base: Sequence[float] | None = None, seed: int = 0, **kw) -> SyntheticBiasSpec:
    topics = list(vocabulary)
    if base is None:
        base = [1.0 / len(topics)] * len(topics)
    mixtures = planted_mixtures(politicians, topics, base, plant, group, noise, derive_seed(seed, "mixtures"))
    roots = {p.name: p.name for p in politicians}
    return SyntheticBiasSpec(mixtures, {t: list(v) for t, v in vocabulary.items()}, roots,
                             rng_seed=derive_seed(seed, "source"), **kw)


DEMO_STOPWORDS = ("der", "die", "das", "und", "von", "of", "the", "in", "mit")


def write_demo_workspace(directory, seed: int = 7, n_politicians: int = 54, max_depth: int = 3,
                         plant: float = 0.2) -> Path:
    """Write a self-contained synthetic audit setup and return its config path.

    Files: politicians.csv, variants/, synthetic_spec.json, vectors.txt,
    stopwords.txt and config.yaml (output goes to ``out/``).
    """
    import yaml

    from .embedding import dump_vectors

    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    politicians = make_politicians(n_politicians, seed)
    write_metadata(politicians, d / "politicians.csv")
    (d / "variants").mkdir(exist_ok=True)
    for p in politicians[:3]:
        (d / "variants" / f"{slugify(p.name)}.txt").write_text(p.name.replace(" ", "") + "\n", encoding="utf-8")
    vocab = make_vocabulary(seed=seed)
    # a few phrases with stopwords and a handful of OOV terms exercise cleaning
    vocab["politics"] += ["ministry of labor", "coronaidiot"]
    vocab["personal"] += ["wife of the minister"]
    spec = planted_spec(politicians, vocab, {"politics": plant, "locations": -plant / 2, "personal": -plant / 2},
                        seed=seed, branching=3, depth_decay=0.8, drift=0.02)
    spec.save(d / "synthetic_spec.json")
    dump_vectors(topic_vectors(vocab, seed=seed, exclude=["coronaidiot"], stopwords=DEMO_STOPWORDS),
                 d / "vectors.txt")
    (d / "stopwords.txt").write_text("\n".join(DEMO_STOPWORDS) + "\n", encoding="utf-8")
    config = {
        "roots_file": "politicians.csv",
        "variants_dir": "variants",
        "source": {"kind": "synthetic", "synthetic": "synthetic_spec.json"},
        "max_depth": max_depth,
        "alphabet": list("abcdefghij"),
        "locale": "de",
        "stopwords": "stopwords.txt",
        "vectors": "vectors.txt",
        "k_range": [1, 6],
        "seed": seed,
        "alpha": 0.05,
        "mode": "univariate",
        "drop_roots": [politicians[-1].name],
        "output_dir": "out",
    }
    path = d / "config.yaml"
    path.write_text(yaml.safe_dump(config, sort_keys=False, allow_unicode=True), encoding="utf-8")
    return path
