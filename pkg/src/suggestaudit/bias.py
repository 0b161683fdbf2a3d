"""Topical group-bias analysis.

Per politician, the share of unique suggestions falling into each topical
cluster is regressed on 0/1 dummies for gender, party and political role
(plus year of birth as a numeric column). A significant slope flags a
topical bias for that group and cluster.
"""

from __future__ import annotations

import csv
import io
import json
import logging
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from .exceptions import AuditError, ParseError
from .preprocess import AuditCorpus
from .stats import OLSRegression

logger = logging.getLogger(__name__)

GENDERS = ("female", "male")
PARTIES = ("SPD", "CDU", "CSU", "FDP", "AFD", "Left", "Greens")
ROLES = ("minister_2021", "minister_2017", "prime_minister", "party_leader")
LEVELS = {"gender": GENDERS, "party": PARTIES, "pol_role": ROLES}
DEFAULT_BASES = {"gender": "male", "party": "SPD", "pol_role": "party_leader"}

METADATA_COLUMNS = ("name", "google-suggestions", "cluster-0", "cluster-1", "cluster-2",
                    "gender", "party", "year-of-birth", "pol-role")

N_SUGGESTIONS = "n_suggestions"

# display labels for the plain-text report
ATTRIBUTE_LABELS = {
    "gender=female": "Gender: female",
    "gender=male": "Gender: male",
    "pol_role=minister_2021": "Minister",
    "pol_role=minister_2017": "Former Minister",
    "pol_role=prime_minister": "Prime Minister",
    "pol_role=party_leader": "Party Leader",
    "year_of_birth": "Year of birth",
}

_ALIASES = {
    "party": {"afd": "AFD", "linke": "Left", "die linke": "Left", "the left": "Left",
              "grüne": "Greens", "gruene": "Greens", "green": "Greens",
              "alliance 90/the greens": "Greens", "bündnis 90/die grünen": "Greens"},
    "gender": {"f": "female", "m": "male", "w": "female"},
    "pol_role": {"minister": "minister_2021", "former_minister": "minister_2017",
                 "former minister": "minister_2017"},
}


def _canonical_level(attr: str, value: str) -> str:
    v = value.strip()
    for level in LEVELS[attr]:
        if v.casefold() == level.casefold():
            return level
    return _ALIASES[attr].get(v.casefold(), v)


@dataclass(frozen=True)
class PoliticianMeta:
    name: str
    gender: str
    party: str
    year_of_birth: int
    pol_role: str

    def __post_init__(self):
        for attr in LEVELS:
            object.__setattr__(self, attr, _canonical_level(attr, getattr(self, attr)))
        if not 1900 <= int(self.year_of_birth) <= 2010:
            raise ValueError(f"{self.name}: implausible year of birth {self.year_of_birth}")
        object.__setattr__(self, "year_of_birth", int(self.year_of_birth))

    @property
    def key(self) -> str:
        return self.name


@dataclass
class ShareVector:
    metadata_key: str
    shares: np.ndarray
    n_suggestions: int

    @property
    def has_suggestions(self) -> bool:
        return self.n_suggestions > 0


def _parse_share_columns(row: Mapping[str, str], k: int):
    raw = [row.get(f"cluster-{c}", "") for c in range(k)]
    total = row.get("google-suggestions", "")
    if not all(x.strip() for x in raw) or not total.strip():
        return None
    vals = np.array([float(x) for x in raw])
    n = int(float(total))
    s = vals.sum()
    if n and abs(s - n) < 1e-6 and abs(s - 1.0) > 1e-6:
        vals = vals / n
    elif abs(s - 100.0) < 1e-6:
        vals = vals / 100.0
    return ShareVector(row["name"], vals, n)


def read_metadata(path, k: int = 3) -> tuple[list[PoliticianMeta], list[ShareVector]]:
    """Read the politician metadata CSV.

    The suggestion-count and cluster columns are optional on input; when
    filled for a row they are returned as share vectors (fractions,
    percentages or counts are all accepted).
    """
    text = Path(path).read_text(encoding="utf-8-sig")
    reader = csv.DictReader(io.StringIO(text))
    required = {"name", "gender", "party", "year-of-birth", "pol-role"}
    missing = required - set(reader.fieldnames or ())
    if missing:
        raise ParseError(f"{path}: missing columns {sorted(missing)}", 1)
    metas, shares = [], []
    for lineno, row in enumerate(reader, 2):
        try:
            meta = PoliticianMeta(row["name"].strip(), row["gender"], row["party"],
                                  int(row["year-of-birth"]), row["pol-role"])
            sv = _parse_share_columns(row, k)
        except ValueError as exc:
            raise ParseError(f"{path}: {exc}", lineno) from exc
        metas.append(meta)
        if sv is not None:
            shares.append(sv)
    names = [m.name for m in metas]
    if len(set(names)) != len(names):
        raise ParseError(f"{path}: duplicate politician names")
    return metas, shares


def write_metadata(metas: Sequence[PoliticianMeta], path, shares: Sequence[ShareVector] = ()) -> Path:
    """Write the politician metadata CSV, filling output columns when shares are given."""
    by_key = {s.metadata_key: s for s in shares}
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(METADATA_COLUMNS)
    for m in metas:
        sv = by_key.get(m.name)
        if sv is not None:
            cl = [f"{x:.4f}" for x in sv.shares[:3]] + [""] * max(0, 3 - len(sv.shares))
            n = str(sv.n_suggestions)
        else:
            cl, n = ["", "", ""], ""
        w.writerow([m.name, n, *cl, m.gender, m.party, m.year_of_birth, m.pol_role])
    path = Path(path)
    path.write_text(buf.getvalue(), encoding="utf-8")
    return path


def compute_shares(corpus: AuditCorpus, assignments: Mapping[str, int], k: int | None = None) -> list[ShareVector]:
    """Cluster shares over each politician's unique clustered suggestions."""
    if k is None:
        k = max(assignments.values(), default=-1) + 1
    known = {t for entries in corpus.per_root.values() for t in entries}
    orphans = [t for t in assignments if t not in known]
    if orphans:
        raise AuditError(f"{len(orphans)} clustered suggestions belong to no politician, e.g. {orphans[0]!r}")
    out = []
    for key in sorted(corpus.per_root):
        counts = np.zeros(k)
        for text in corpus.per_root[key]:
            c = assignments.get(text)
            if c is not None:
                counts[c] += 1
        n = int(counts.sum())
        shares = counts / n if n else counts
        if not n:
            logger.warning("politician %r has no clustered suggestions; excluded from regression", key)
        out.append(ShareVector(key, shares, n))
    return out


class DummyEncoder(TransformerMixin, BaseEstimator):
    """0/1 dummy block for categorical meta-attributes, base level omitted.

    Levels come from the fixed category lists, not from the data, so the
    column layout is stable across corpora. ``year_of_birth`` passes
    through as a numeric column when ``include_age`` is set.
    """

    def __init__(self, bases: Mapping[str, str] | None = None, include_age: bool = True):
        self.bases = bases
        self.include_age = include_age

    def fit(self, metas=None, y=None):
        bases = dict(DEFAULT_BASES)
        bases.update(self.bases or {})
        columns = []
        for attr, levels in LEVELS.items():
            base = _canonical_level(attr, bases[attr])
            if base not in levels:
                raise ValueError(f"base level {base!r} is not a level of {attr}")
            columns += [(attr, lvl) for lvl in levels if lvl != base]
        self.bases_ = bases
        self.columns_ = columns
        self.feature_names_ = [f"{a}={l}" for a, l in columns] + (["year_of_birth"] if self.include_age else [])
        return self

    def get_feature_names_out(self, input_features=None):
        check_is_fitted(self, "columns_")
        return np.array(self.feature_names_, dtype=object)

    def transform(self, metas: Sequence[PoliticianMeta]) -> np.ndarray:
        check_is_fitted(self, "columns_")
        bad = [(m.name, a, getattr(m, a)) for m in metas for a in LEVELS if getattr(m, a) not in LEVELS[a]]
        if bad:
            listing = ", ".join(f"{n} ({a}={v!r})" for n, a, v in bad)
            raise ValueError(f"unseen categories: {listing}")
        X = np.array([[1.0 if getattr(m, a) == lvl else 0.0 for a, lvl in self.columns_] for m in metas])
        X = X.reshape(len(metas), len(self.columns_))
        if self.include_age:
            X = np.column_stack([X, [float(m.year_of_birth) for m in metas]])
        return X


def dummy_encode(metas: Sequence[PoliticianMeta], bases: Mapping[str, str] | None = None,
                 include_age: bool = True) -> tuple[np.ndarray, list[str]]:
    enc = DummyEncoder(bases, include_age).fit(metas)
    return enc.transform(metas), list(enc.feature_names_)


@dataclass(frozen=True)
class BiasRow:
    attribute: str
    dependent: str
    beta: float
    sign: int
    r_squared: float
    p_value: float
    significant: bool
    n: int

    @property
    def signed_r_squared(self) -> float:
        return self.sign * self.r_squared


@dataclass
class BiasReport:
    rows: list[BiasRow] = field(default_factory=list)
    alpha: float = 0.05
    mode: str = "univariate"
    dependents: list[str] = field(default_factory=list)
    bonferroni: bool = False

    def significant(self) -> list[BiasRow]:
        return [r for r in self.rows if r.significant]

    def to_dict(self) -> dict:
        return {
            "alpha": self.alpha,
            "mode": self.mode,
            "bonferroni": self.bonferroni,
            "dependents": list(self.dependents),
            "rows": [asdict(r) for r in self.rows],
        }

    @classmethod
    def from_dict(cls, data: dict) -> "BiasReport":
        rows = [BiasRow(**r) for r in data["rows"]]
        return cls(rows, data["alpha"], data["mode"], list(data["dependents"]), data.get("bonferroni", False))


def _join(shares: Sequence[ShareVector], metas: Sequence[PoliticianMeta]):
    by_key = {m.name: m for m in metas}
    pairs = []
    for sv in shares:
        if not sv.has_suggestions:
            continue
        meta = by_key.get(sv.metadata_key)
        if meta is None:
            raise AuditError(f"no metadata for {sv.metadata_key!r}")
        pairs.append((sv, meta))
    return pairs


def audit(shares: Sequence[ShareVector], metas: Sequence[PoliticianMeta], alpha: float = 0.05,
          mode: str = "univariate", bases: Mapping[str, str] | None = None,
          bonferroni: bool = False) -> BiasReport:
    """Regress every cluster share and the suggestion count on the dummies.

    ``univariate`` fits one simple regression per (dummy, dependent) pair;
    ``multivariate`` fits the full dummy block at once and reports each
    slope with the full-model R². ``bonferroni`` divides alpha by the
    number of tests; the default leaves alpha uncorrected.
    """
    if mode not in ("univariate", "multivariate"):
        raise ValueError(f"unknown mode {mode!r}")
    pairs = _join(shares, metas)
    k = len(pairs[0][0].shares) if pairs else 0
    dependents = [f"cluster-{c}" for c in range(k)] + [N_SUGGESTIONS]
    report = BiasReport([], alpha, mode, dependents, bonferroni)
    if not pairs:
        return report
    X, names = dummy_encode([m for _, m in pairs], bases)
    Y = np.column_stack([np.array([sv.shares for sv, _ in pairs]),
                         np.array([sv.n_suggestions for sv, _ in pairs], dtype=float)])
    informative = [j for j in range(X.shape[1]) if np.ptp(X[:, j]) > 0]
    for j in range(X.shape[1]):
        if j not in informative:
            logger.info("predictor %s is constant over the sample; skipped", names[j])
    results = []
    if mode == "univariate":
        for j in informative:
            for d, dep in enumerate(dependents):
                fit = OLSRegression().fit(X[:, [j]], Y[:, d], feature_names=[names[j]])
                results.append((names[j], dep, fit, 1))
    else:
        Xi = X[:, informative]
        for d, dep in enumerate(dependents):
            fit = OLSRegression().fit(Xi, Y[:, d], feature_names=[names[j] for j in informative])
            for pos, j in enumerate(informative):
                results.append((names[j], dep, fit, 1 + pos))
    level = alpha / len(results) if bonferroni and results else alpha
    order = {n: i for i, n in enumerate(names)}
    dep_order = {d: i for i, d in enumerate(dependents)}
    for attr, dep, fit, idx in sorted(results, key=lambda r: (order[r[0]], dep_order[r[1]])):
        beta = float(fit.params_[idx])
        p = float(fit.pvalues_[idx])
        report.rows.append(BiasRow(attr, dep, beta, int(np.sign(beta)), fit.rsquared_, p,
                                   bool(p <= level), fit.nobs_))
    return report


def _fmt(x: float) -> str:
    return f"{x:.3f}"


def attribute_label(name: str) -> str:
    if name in ATTRIBUTE_LABELS:
        return ATTRIBUTE_LABELS[name]
    attr, _, level = name.partition("=")
    return level if attr == "party" else name


def dependent_label(dep: str, cluster_names: Mapping[int, str] | None = None) -> str:
    if dep == N_SUGGESTIONS:
        return "Number of Suggestions"
    c = int(dep.split("-")[1])
    label = f"Cluster {c + 1}"
    if cluster_names and c in cluster_names:
        label += f": {cluster_names[c]}"
    return label


def format_table(report: BiasReport, significant_only: bool = True,
                 cluster_names: Mapping[int, str] | None = None) -> str:
    """Plain-text table: attributes x dependents, each with a (signed R2, p) pair.

    Significant cells are wrapped in asterisks. With ``significant_only``
    only attributes with at least one significant effect are listed.
    """
    deps = report.dependents
    cells: dict[str, dict[str, BiasRow]] = {}
    for r in report.rows:
        cells.setdefault(r.attribute, {})[r.dependent] = r
    attrs = [a for a in cells if not significant_only or any(r.significant for r in cells[a].values())]
    r2_head = "R2" if report.mode == "univariate" else "R2(model)"
    header1 = [""] + [dependent_label(d, cluster_names) for d in deps]
    body = []
    for a in attrs:
        line = [attribute_label(a)]
        for d in deps:
            r = cells[a].get(d)
            if r is None:
                line.append(("", ""))
                continue
            r2, p = _fmt(r.signed_r_squared), _fmt(r.p_value)
            if r.significant:
                r2, p = f"*{r2}*", f"*{p}*"
            line.append((r2, p))
        body.append(line)
    first_w = max([len(h) for h in [header1[0]]] + [len(l[0]) for l in body] + [9])
    pair_w = []
    for i, d in enumerate(deps):
        vals = [l[i + 1] for l in body]
        w_r2 = max([len(r2_head)] + [len(v[0]) for v in vals])
        w_p = max([1] + [len(v[1]) for v in vals])
        w_r2 = max(w_r2, len(header1[i + 1]) - w_p - 2)
        pair_w.append((w_r2, w_p))
    out = []
    row = [" " * first_w]
    for i, d in enumerate(deps):
        w_r2, w_p = pair_w[i]
        row.append(f"{header1[i + 1]:<{w_r2 + 2 + w_p}}")
    out.append(" | ".join(row).rstrip())
    row = [" " * first_w]
    for w_r2, w_p in pair_w:
        row.append(f"{r2_head:<{w_r2}}  {'p':<{w_p}}")
    out.append(" | ".join(row).rstrip())
    out.append("-+-".join(["-" * first_w] + ["-" * (a + 2 + b) for a, b in pair_w]))
    for l in body:
        row = [f"{l[0]:<{first_w}}"]
        for (r2, p), (w_r2, w_p) in zip(l[1:], pair_w):
            row.append(f"{r2:<{w_r2}}  {p:<{w_p}}")
        out.append(" | ".join(row).rstrip())
    level = "alpha/m (Bonferroni)" if report.bonferroni else f"alpha = {report.alpha:g}"
    out.append("")
    out.append(f"* significant at p <= {level}; {report.mode} OLS; R2 signed by the slope direction")
    return "\n".join(out) + "\n"


REPORT_FIELDS = ("attribute", "dependent", "beta", "sign", "r_squared", "p_value", "significant", "n")


def report_csv(report: BiasReport) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(REPORT_FIELDS)
    for r in report.rows:
        w.writerow([r.attribute, r.dependent, repr(r.beta), r.sign, repr(r.r_squared),
                    repr(r.p_value), str(r.significant).lower(), r.n])
    return buf.getvalue()


def read_report_csv(text: str) -> list[BiasRow]:
    rows = []
    for rec in csv.DictReader(io.StringIO(text)):
        rows.append(BiasRow(rec["attribute"], rec["dependent"], float(rec["beta"]), int(rec["sign"]),
                            float(rec["r_squared"]), float(rec["p_value"]), rec["significant"] == "true",
                            int(rec["n"])))
    return rows


def report_json(report: BiasReport, extra: Mapping | None = None) -> str:
    data = report.to_dict()
    if extra:
        data.update(extra)
    return json.dumps(data, indent=1, ensure_ascii=False) + "\n"


def write_report(report: BiasReport, out_dir, extra: Mapping | None = None) -> dict[str, Path]:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    paths = {"csv": out_dir / "report.csv", "json": out_dir / "report.json"}
    paths["csv"].write_text(report_csv(report), encoding="utf-8")
    paths["json"].write_text(report_json(report, extra), encoding="utf-8")
    return paths


def shares_from_rows(rows: Iterable[Mapping]) -> list[ShareVector]:
    return [ShareVector(r["metadata_key"], np.asarray(r["shares"], dtype=float), int(r["n_suggestions"]))
            for r in rows]
