"""Shared building blocks: canonical-link GLM families, study containers,
coefficient/membership matrices, and the on-disk dataset format.

Conventions used throughout the package:

* study 0 is always the target study; sources carry ids 1..K,
* linear predictors are clamped to [-700, 700] before exponentiation,
* every probability that feeds a weighted fit is kept inside
  [EPS_CLIP, 1 - EPS_CLIP] so that no observation weight collapses to zero.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

# Clamp for linear predictors: exp(700) is still finite in float64.
ETA_CLAMP = 700.0

# Global floor/ceiling for membership and prevalence probabilities.
EPS_CLIP = 1e-6


def clamp_eta(eta):
    """Clamp linear predictors to the numerically safe range."""
    return np.clip(eta, -ETA_CLAMP, ETA_CLAMP)


def _sigmoid(eta):
    # Overflow-free logistic mean; eta may be any finite float array.
    eta = np.asarray(eta, dtype=float)
    out = np.empty_like(eta)
    pos = eta >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-eta[pos]))
    ez = np.exp(eta[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


# ---------------------------------------------------------------------------
# GLM families
# ---------------------------------------------------------------------------

_FAMILY_KINDS = ("logistic", "gaussian")


@dataclass(frozen=True)
class GlmFamily:
    """Canonical-link exponential family, identified by its log-partition
    function g.  Only g, g', g'' and the dispersion enter the algorithms.

    kind        "logistic" (g = softplus) or "gaussian" (g(x) = x^2/2)
    dispersion  a(phi); fixed at 1 for logistic, configurable for gaussian
    """

    kind: str
    dispersion: float = 1.0

    def __post_init__(self):
        if self.kind not in _FAMILY_KINDS:
            raise ValueError(f"unknown GLM family kind: {self.kind!r}")
        if not np.isfinite(self.dispersion) or self.dispersion <= 0:
            raise ValueError("dispersion must be a positive finite number")
        if self.kind == "logistic" and self.dispersion != 1.0:
            raise ValueError("logistic family has fixed dispersion 1")

    @classmethod
    def logistic(cls) -> "GlmFamily":
        return cls("logistic", 1.0)

    @classmethod
    def gaussian(cls, dispersion: float = 1.0) -> "GlmFamily":
        return cls("gaussian", dispersion)

    @classmethod
    def from_name(cls, name: str) -> "GlmFamily":
        if name not in _FAMILY_KINDS:
            raise ValueError(f"unknown GLM family name: {name!r}")
        return cls(name)

    # -- log-partition and derivatives ------------------------------------

    def log_partition(self, eta):
        """g(eta); logistic uses the overflow-safe softplus."""
        if self.kind == "logistic":
            return np.logaddexp(0.0, clamp_eta(eta))
        return 0.5 * np.square(np.asarray(eta, dtype=float))

    def mean(self, eta):
        """g'(eta): the mean function (logistic sigmoid / identity)."""
        if self.kind == "logistic":
            return _sigmoid(clamp_eta(eta))
        return np.asarray(eta, dtype=float)

    def variance(self, eta):
        """g''(eta): the variance function."""
        if self.kind == "logistic":
            mu = self.mean(eta)
            return mu * (1.0 - mu)
        return np.ones_like(np.asarray(eta, dtype=float))

    def log_density(self, y, eta):
        """log f(y | eta) up to the additive c(y, phi) term.

        Exact for logistic outcomes in {0, 1}; for gaussian the dropped
        term does not depend on eta, so density *ratios* across classes
        are exact, which is all the membership updates need.
        """
        eta = clamp_eta(np.asarray(eta, dtype=float))
        y = np.asarray(y, dtype=float)
        return (y * eta - self.log_partition(eta)) / self.dispersion

    def validate_outcomes(self, y) -> None:
        y = np.asarray(y, dtype=float)
        if not np.all(np.isfinite(y)):
            raise ValueError("outcomes must be finite")
        if self.kind == "logistic" and not np.all(np.isin(y, (0.0, 1.0))):
            raise ValueError("logistic outcomes must lie in {0, 1}")


def neg_log_lik_glm(family: GlmFamily, y, eta):
    """Per-observation negative log-likelihood  -y*eta + g(eta).

    The dispersion divisor is omitted (it rescales every candidate by the
    same constant); etas must be finite.
    """
    eta = np.asarray(eta, dtype=float)
    if not np.all(np.isfinite(eta)):
        raise ValueError("linear predictor must be finite")
    return -np.asarray(y, dtype=float) * eta + family.log_partition(eta)


def glm_density(family: GlmFamily, y, eta):
    """Outcome density f(y | eta), exact for logistic, up to exp(c(y, phi))
    for gaussian (sufficient for membership ratios)."""
    eta = np.asarray(eta, dtype=float)
    if not np.all(np.isfinite(eta)):
        raise ValueError("linear predictor must be finite")
    return np.exp(family.log_density(y, eta))


# ---------------------------------------------------------------------------
# Row-stochastic helpers
# ---------------------------------------------------------------------------


def sorted_row_sums(a: np.ndarray) -> np.ndarray:
    """Row sums with a canonical (ascending) summation order so that
    permuting columns never changes the result, not even in the last ulp."""
    return np.sort(a, axis=1).sum(axis=1)


def log_sum_exp_rows(a: np.ndarray) -> np.ndarray:
    """Stable log(sum(exp(rows))), permutation-exact via sorted summation."""
    m = np.max(a, axis=1)
    return m + np.log(sorted_row_sums(np.exp(a - m[:, None])))


def sorted_square_norm(a: np.ndarray) -> float:
    """Frobenius norm with a canonical (ascending) summation order: any
    rearrangement of the entries gives the bit-identical result."""
    sq = np.sort(np.square(np.asarray(a, dtype=float)).ravel())
    return float(np.sqrt(sq.sum()))


def clip_rows(probs: np.ndarray, eps: float = EPS_CLIP) -> np.ndarray:
    """Force each row into the simplex with entries in [eps, 1 - eps].

    Normalize, then waterfill: entries below eps are pinned to exactly eps
    and the remaining entries are rescaled to absorb the deficit, repeating
    until no entry violates the floor (at most C passes).  Row sums land
    within a few ulp of 1 and, because every reduction uses the sorted
    (canonical) summation order, the result is exactly equivariant under
    column permutations.  Single-column inputs degenerate to exact ones.
    """
    probs = np.asarray(probs, dtype=float)
    if probs.ndim != 2:
        raise ValueError("expected a 2-d array of row probabilities")
    n, C = probs.shape
    if C == 1:
        return np.ones_like(probs)
    if C * eps >= 1.0:
        raise ValueError("eps too large for this many columns")
    v = np.maximum(probs, 0.0)
    sums = sorted_row_sums(v)
    dead = sums <= 0.0
    if np.any(dead):
        v[dead] = 1.0
        sums[dead] = float(C)
    v = v / sums[:, None]
    pinned = np.zeros_like(v, dtype=bool)
    for _ in range(C):
        low = ~pinned & (v < eps)
        if not np.any(low):
            break
        pinned |= low
        free_target = 1.0 - pinned.sum(axis=1) * eps
        free_sum = sorted_row_sums(np.where(pinned, 0.0, v))
        scale = np.where(
            free_sum > 0.0, free_target / np.maximum(free_sum, 1e-300), 1.0
        )
        v = np.where(pinned, eps, v * scale[:, None])
    return v


# ---------------------------------------------------------------------------
# Study containers
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Study:
    """One study's data: outcomes y (n,), predictors X (n, p) and binary
    structure variables Z (n, q) used for subpopulation matching."""

    outcomes: np.ndarray
    predictors: np.ndarray
    structure_vars: np.ndarray
    study_id: int

    def __post_init__(self):
        y = np.ascontiguousarray(self.outcomes, dtype=float)
        x = np.ascontiguousarray(self.predictors, dtype=float)
        z = np.ascontiguousarray(self.structure_vars, dtype=float)
        if y.ndim != 1:
            raise ValueError("outcomes must be a 1-d array")
        if x.ndim != 2 or z.ndim != 2:
            raise ValueError("predictors and structure_vars must be 2-d")
        n = y.shape[0]
        if n < 1:
            raise ValueError("a study needs at least one subject")
        if x.shape[0] != n or z.shape[0] != n:
            raise ValueError("row counts of y, X, Z must agree")
        if not (np.all(np.isfinite(y)) and np.all(np.isfinite(x))):
            raise ValueError("y and X must be finite")
        if not np.all(np.isin(z, (0.0, 1.0))):
            raise ValueError("structure variables must be binary (0/1)")
        if int(self.study_id) < 0:
            raise ValueError("study_id must be nonnegative")
        object.__setattr__(self, "outcomes", y)
        object.__setattr__(self, "predictors", x)
        object.__setattr__(self, "structure_vars", z)
        object.__setattr__(self, "study_id", int(self.study_id))

    @property
    def n(self) -> int:
        return self.outcomes.shape[0]

    @property
    def p(self) -> int:
        return self.predictors.shape[1]

    @property
    def q(self) -> int:
        return self.structure_vars.shape[1]


@dataclass(frozen=True)
class StudyCollection:
    """Target study (id 0) plus K source studies (ids 1..K).

    Sources are stored sorted by study_id, so the collection --- and every
    fit downstream --- is invariant to the order sources are supplied in.
    """

    target: Study
    sources: tuple = ()

    def __post_init__(self):
        sources = tuple(sorted(self.sources, key=lambda s: s.study_id))
        if self.target.study_id != 0:
            raise ValueError("target study must carry study_id 0")
        ids = [s.study_id for s in sources]
        if ids != list(range(1, len(sources) + 1)):
            raise ValueError("source study_ids must be exactly 1..K")
        for s in sources:
            if s.p != self.target.p or s.q != self.target.q:
                raise ValueError("all studies must share p and q")
        object.__setattr__(self, "sources", sources)

    @property
    def studies(self) -> tuple:
        return (self.target,) + self.sources

    @property
    def K(self) -> int:
        return len(self.sources)

    @property
    def p(self) -> int:
        return self.target.p

    @property
    def q(self) -> int:
        return self.target.q

    @property
    def n0(self) -> int:
        return self.target.n

    @property
    def n_total(self) -> int:
        return sum(s.n for s in self.studies)

    @property
    def sizes(self) -> tuple:
        return tuple(s.n for s in self.studies)

    def stacked(self):
        """Return (y, X, Z, study_row_index) with rows stacked target-first."""
        y = np.concatenate([s.outcomes for s in self.studies])
        x = np.vstack([s.predictors for s in self.studies])
        z = np.vstack([s.structure_vars for s in self.studies])
        idx = np.concatenate(
            [np.full(s.n, k, dtype=int) for k, s in enumerate(self.studies)]
        )
        return y, x, z, idx

    def row_slices(self):
        """Per-study slices into the stacked row order."""
        out, start = [], 0
        for s in self.studies:
            out.append(slice(start, start + s.n))
            start += s.n
        return out


# ---------------------------------------------------------------------------
# Coefficient and membership matrices
# ---------------------------------------------------------------------------

COEFFICIENT_ROLES = ("pooled_B", "target_B0", "correction_Delta", "per_study_Bk")
MEMBERSHIP_STAGES = ("initial_v", "refined_w")


@dataclass(frozen=True)
class CoefficientMatrix:
    """Class-specific GLM coefficients: values is (p, C) with one column per
    latent class; the unpenalized intercept (when fitted) lives separately."""

    values: np.ndarray
    role: str
    intercept: np.ndarray = None

    def __post_init__(self):
        values = np.ascontiguousarray(self.values, dtype=float)
        if values.ndim != 2:
            raise ValueError("coefficient values must be a (p, C) matrix")
        if not np.all(np.isfinite(values)):
            raise ValueError("coefficients must be finite")
        if self.role not in COEFFICIENT_ROLES:
            raise ValueError(f"unknown coefficient role: {self.role!r}")
        intercept = self.intercept
        if intercept is None:
            intercept = np.zeros(values.shape[1])
        intercept = np.ascontiguousarray(intercept, dtype=float)
        if intercept.shape != (values.shape[1],):
            raise ValueError("intercept must have one entry per class")
        if not np.all(np.isfinite(intercept)):
            raise ValueError("intercepts must be finite")
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "intercept", intercept)

    @property
    def n_features(self) -> int:
        return self.values.shape[0]

    @property
    def n_classes(self) -> int:
        return self.values.shape[1]

    def linear_predictor(self, X: np.ndarray) -> np.ndarray:
        """Per-class linear predictors: (n, C) = X @ values + intercept."""
        X = np.asarray(X, dtype=float)
        return X @ self.values + self.intercept

    def stacked_state(self) -> np.ndarray:
        """Intercept row stacked on top of values; the full parameter state."""
        return np.vstack([self.intercept[None, :], self.values])


@dataclass(frozen=True)
class MembershipMatrix:
    """Per-study membership probabilities: one (n_k, C) row-stochastic block
    per study, rows clipped into [EPS_CLIP, 1 - EPS_CLIP] (C >= 2)."""

    probs: tuple
    stage: str

    def __post_init__(self):
        if self.stage not in MEMBERSHIP_STAGES:
            raise ValueError(f"unknown membership stage: {self.stage!r}")
        blocks = tuple(np.ascontiguousarray(b, dtype=float) for b in self.probs)
        if not blocks:
            raise ValueError("membership matrix needs at least one study block")
        C = blocks[0].shape[1]
        for b in blocks:
            if b.ndim != 2 or b.shape[1] != C:
                raise ValueError("all study blocks must share the class count")
            if not np.all(np.isfinite(b)):
                raise ValueError("membership probabilities must be finite")
            if np.max(np.abs(b.sum(axis=1) - 1.0)) > 1e-12:
                raise ValueError("membership rows must sum to 1 (tol 1e-12)")
            if C >= 2 and (b.min() < EPS_CLIP - 1e-15 or b.max() > 1.0 - EPS_CLIP + 1e-15):
                raise ValueError("membership entries must lie in [eps, 1 - eps]")
        object.__setattr__(self, "probs", blocks)

    @property
    def n_classes(self) -> int:
        return self.probs[0].shape[1]

    @property
    def n_studies(self) -> int:
        return len(self.probs)

    def stacked(self) -> np.ndarray:
        return np.vstack(self.probs)

    def target_block(self) -> np.ndarray:
        return self.probs[0]


# ---------------------------------------------------------------------------
# Dataset format: one CSV per study + a JSON manifest
# ---------------------------------------------------------------------------


def _csv_header(p: int, q: int) -> str:
    cols = ["y"] + [f"x{j}" for j in range(1, p + 1)] + [f"z{j}" for j in range(1, q + 1)]
    return ",".join(cols)


def write_study_csv(study: Study, path) -> None:
    """Write a study as CSV with header y,x1..xp,z1..zq."""
    path = Path(path)
    data = np.column_stack(
        [study.outcomes, study.predictors, study.structure_vars]
    )
    np.savetxt(
        path, data, delimiter=",", fmt="%.17g",
        header=_csv_header(study.p, study.q), comments="",
    )


def read_study_csv(path, study_id: int, p: int = None, q: int = None) -> Study:
    """Read one study CSV; column counts are inferred from the header."""
    path = Path(path)
    with path.open() as fh:
        header = fh.readline().strip()
    cols = header.split(",")
    if not cols or cols[0] != "y":
        raise ValueError(f"{path}: first CSV column must be 'y'")
    n_x = sum(1 for c in cols if c.startswith("x"))
    n_z = sum(1 for c in cols if c.startswith("z"))
    if n_x + n_z + 1 != len(cols):
        raise ValueError(f"{path}: header must be y,x1..xp,z1..zq")
    if p is not None and n_x != p:
        raise ValueError(f"{path}: expected {p} predictor columns, found {n_x}")
    if q is not None and n_z != q:
        raise ValueError(f"{path}: expected {q} structure columns, found {n_z}")
    raw = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    if raw.shape[1] != len(cols):
        raise ValueError(f"{path}: row width does not match header")
    return Study(
        outcomes=raw[:, 0],
        predictors=raw[:, 1 : 1 + n_x],
        structure_vars=raw[:, 1 + n_x :],
        study_id=study_id,
    )


def write_manifest(collection: StudyCollection, directory, force: bool = False) -> Path:
    """Write per-study CSVs plus manifest.json into `directory`."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    manifest_path = directory / "manifest.json"
    paths = [directory / f"study_{s.study_id}.csv" for s in collection.studies]
    for pth in [manifest_path] + paths:
        if pth.exists() and not force:
            raise FileExistsError(f"{pth} exists; pass force=True to overwrite")
    for s, pth in zip(collection.studies, paths):
        write_study_csv(s, pth)
    manifest = {
        "target": paths[0].name,
        "sources": [pth.name for pth in paths[1:]],
    }
    manifest_path.write_text(json.dumps(manifest, indent=2) + "\n")
    return manifest_path


def load_collection(manifest_path) -> StudyCollection:
    """Load a StudyCollection from a manifest.json written by write_manifest."""
    manifest_path = Path(manifest_path)
    manifest = json.loads(manifest_path.read_text())
    base = manifest_path.parent
    if "target" not in manifest:
        raise ValueError("manifest must name a 'target' CSV")
    target = read_study_csv(base / manifest["target"], study_id=0)
    sources = [
        read_study_csv(base / rel, study_id=k + 1, p=target.p, q=target.q)
        for k, rel in enumerate(manifest.get("sources", []))
    ]
    return StudyCollection(target=target, sources=tuple(sources))
