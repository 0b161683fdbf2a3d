"""Run configuration (YAML) and its validation."""

from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any

import yaml

from .exceptions import ConfigError
from .source import SourceConfig
from .tree import default_alphabet

SOURCE_KINDS = ("live", "fixture", "synthetic")


@dataclass
class RunConfig:
    roots_file: Path
    stopwords: Path
    vectors: Path
    output_dir: Path
    seed: int
    variants_dir: Path | None = None
    source: dict = field(default_factory=lambda: {"kind": "live"})
    max_depth: int = 8
    alphabet: list[str] | None = None
    locale: str = "de"
    k_range: tuple[int, int] = (1, 10)
    alpha: float = 0.05
    mode: str = "univariate"
    bonferroni: bool = False
    drop_roots: list[str] = field(default_factory=list)
    workers: int = 1
    n_restarts: int = 10
    cluster_names: dict[int, str] = field(default_factory=dict)

    @property
    def resolved_alphabet(self) -> list[str]:
        return list(self.alphabet) if self.alphabet is not None else default_alphabet(self.locale)

    @property
    def ks(self) -> list[int]:
        lo, hi = self.k_range
        return list(range(lo, hi + 1))

    def source_config(self) -> SourceConfig:
        keys = {"endpoint_template", "min_interval_ms", "max_retries", "backoff_base_ms", "timeout_ms",
                "response_path"}
        kw = {k: v for k, v in self.source.items() if k in keys}
        return SourceConfig(locale=self.locale, **kw)

    def source_path(self, key: str) -> Path:
        value = self.source.get(key)
        if value is None:
            raise ConfigError(f"source.{key} is required for source kind {self.source['kind']!r}")
        return Path(value)

    def validate(self, check_files: bool = True) -> "RunConfig":
        if self.max_depth < 1:
            raise ConfigError("max_depth must be >= 1")
        if self.source.get("kind") not in SOURCE_KINDS:
            raise ConfigError(f"source.kind must be one of {SOURCE_KINDS}")
        lo, hi = self.k_range
        if not 1 <= lo <= hi:
            raise ConfigError("k_range must be [lo, hi] with 1 <= lo <= hi")
        if not 0 < self.alpha < 1:
            raise ConfigError("alpha must lie in (0, 1)")
        if self.mode not in ("univariate", "multivariate"):
            raise ConfigError("mode must be univariate or multivariate")
        if self.alphabet is not None and len(set(self.alphabet)) != len(self.alphabet):
            raise ConfigError("alphabet characters must be distinct")
        if self.source["kind"] == "live":
            self.source_config()
        if check_files:
            files = [self.roots_file, self.stopwords, self.vectors]
            if self.source["kind"] in ("fixture", "synthetic"):
                files.append(self.source_path(self.source["kind"]))
            for f in files:
                if not Path(f).exists():
                    raise ConfigError(f"file not found: {f}")
            if self.variants_dir is not None and not Path(self.variants_dir).is_dir():
                raise ConfigError(f"variants_dir is not a directory: {self.variants_dir}")
        return self

    def to_dict(self) -> dict[str, Any]:
        data = asdict(self)
        for k, v in data.items():
            if isinstance(v, Path):
                data[k] = str(v)
        data["k_range"] = list(self.k_range)
        data["cluster_names"] = {str(k): v for k, v in self.cluster_names.items()}
        return data

    def hash(self) -> str:
        """Digest of the settings that shape outputs (output location excluded)."""
        data = self.to_dict()
        data.pop("output_dir")
        data.pop("workers")
        # inputs enter by content so the hash does not depend on where files live
        for key in ("roots_file", "stopwords", "vectors"):
            data[key] = _digest(Path(data[key]))
        if self.variants_dir is not None:
            vdir = Path(self.variants_dir)
            data["variants_dir"] = {f.name: _digest(f) for f in sorted(vdir.glob("*.txt"))}
        source = dict(data["source"])
        for key in ("fixture", "synthetic"):
            if source.get(key):
                source[key] = _digest(Path(source[key]))
        data["source"] = source
        blob = json.dumps(data, sort_keys=True, ensure_ascii=False).encode()
        return hashlib.sha256(blob).hexdigest()[:16]


def _digest(path: Path) -> str:
    if not path.exists():
        return f"missing:{path.name}"
    return hashlib.sha256(path.read_bytes()).hexdigest()


_PATH_KEYS = ("roots_file", "variants_dir", "stopwords", "vectors", "output_dir")


def load_config(path, overrides: dict | None = None, check_files: bool = True) -> RunConfig:
    path = Path(path)
    try:
        raw = yaml.safe_load(path.read_text(encoding="utf-8")) or {}
    except FileNotFoundError as exc:
        raise ConfigError(f"config not found: {path}") from exc
    except yaml.YAMLError as exc:
        raise ConfigError(f"{path}: {exc}") from exc
    if not isinstance(raw, dict):
        raise ConfigError(f"{path}: top level must be a mapping")
    raw.update({k: v for k, v in (overrides or {}).items() if v is not None})
    base = path.parent
    if "seed" not in raw:
        raise ConfigError("seed must be set explicitly")
    for key in ("roots_file", "stopwords", "vectors"):
        if key not in raw:
            raise ConfigError(f"missing required key {key!r}")
    raw.setdefault("output_dir", "out")
    for key in _PATH_KEYS:
        if raw.get(key) is not None:
            raw[key] = base / raw[key]
    source = dict(raw.get("source") or {"kind": "live"})
    for key in ("fixture", "synthetic"):
        if source.get(key) is not None:
            source[key] = str(base / source[key])
    raw["source"] = source
    if "k_range" in raw:
        kr = raw["k_range"]
        raw["k_range"] = (int(kr[0]), int(kr[-1]))
    if "cluster_names" in raw:
        raw["cluster_names"] = {int(k): str(v) for k, v in (raw["cluster_names"] or {}).items()}
    known = set(RunConfig.__dataclass_fields__)
    unknown = set(raw) - known
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    try:
        cfg = RunConfig(**raw)
    except TypeError as exc:
        raise ConfigError(str(exc)) from exc
    cfg.seed = int(cfg.seed)
    cfg.alpha = float(cfg.alpha)
    cfg.max_depth = int(cfg.max_depth)
    return cfg.validate(check_files)
