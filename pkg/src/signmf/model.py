"""Count-matrix types, divergences and log-likelihoods for NMF models.

Everything here works on plain ``numpy`` arrays; :class:`CountMatrix` is
accepted wherever a data matrix ``V`` is expected.
"""

from __future__ import annotations

import dataclasses
import enum
import math
from typing import Optional, Sequence

import numpy as np
from scipy.special import gammaln

from .special import lgamma_ratio


class SignmfError(Exception):
    """Base class for errors raised by this package."""


class ValidationError(SignmfError, ValueError):
    """Invalid input data or arguments."""


class NumericalError(SignmfError, ArithmeticError):
    """A computation hit a degenerate numerical state."""


class Model(str, enum.Enum):
    POISSON = "Poisson"
    NB_SHARED = "NegBinShared"
    NB_PATIENT = "NegBinPatient"


@dataclasses.dataclass(frozen=True)
class CountMatrix:
    """N x M non-negative integer catalog (patients x mutation types)."""

    data: np.ndarray
    patient_ids: Sequence[str] = ()
    mutation_types: Sequence[str] = ()

    def __post_init__(self):
        raw = np.asarray(self.data)
        if raw.ndim != 2:
            raise ValidationError(f"count matrix must be 2-D, got shape {raw.shape}")
        n, m = raw.shape
        if n < 1 or m < 1:
            raise ValidationError("count matrix must have at least one row and column")
        if not np.all(np.isfinite(raw)):
            r, c = np.argwhere(~np.isfinite(raw))[0]
            raise ValidationError(f"non-finite count at row {r}, column {c}")
        if np.any(raw < 0):
            r, c = np.argwhere(raw < 0)[0]
            raise ValidationError(f"negative count {raw[r, c]} at row {r}, column {c}")
        if np.any(raw != np.round(raw)):
            r, c = np.argwhere(raw != np.round(raw))[0]
            raise ValidationError(f"non-integer count {raw[r, c]} at row {r}, column {c}")
        data = raw.astype(np.int64)
        data.setflags(write=False)
        zero = np.flatnonzero(data.sum(axis=1) == 0)
        pids = list(self.patient_ids) or [f"P{i + 1}" for i in range(n)]
        mts = list(self.mutation_types) or [f"T{j + 1}" for j in range(m)]
        if len(pids) != n:
            raise ValidationError(f"{len(pids)} patient ids for {n} rows")
        if len(mts) != m:
            raise ValidationError(f"{len(mts)} mutation types for {m} columns")
        if zero.size:
            raise ValidationError(f"patient {pids[zero[0]]!r} (row {zero[0]}) has no mutations")
        object.__setattr__(self, "data", data)
        object.__setattr__(self, "patient_ids", tuple(str(p) for p in pids))
        object.__setattr__(self, "mutation_types", tuple(str(t) for t in mts))

    @property
    def shape(self):
        return self.data.shape

    def subset(self, rows) -> "CountMatrix":
        rows = np.asarray(rows)
        return CountMatrix(self.data[rows], [self.patient_ids[i] for i in rows],
                           self.mutation_types)


@dataclasses.dataclass(frozen=True)
class DispersionVector:
    """Per-patient NB dispersions; ``np.inf`` marks a Poisson-limit patient."""

    alphas: np.ndarray

    def __post_init__(self):
        a = np.atleast_1d(np.asarray(self.alphas, dtype=float)).copy()
        if a.ndim != 1:
            raise ValidationError("dispersion vector must be 1-D")
        if np.any(np.isnan(a)) or np.any(a <= 0):
            raise ValidationError(f"dispersion parameters must be positive, got {a}")
        a.setflags(write=False)
        object.__setattr__(self, "alphas", a)

    def __len__(self):
        return self.alphas.size

    @classmethod
    def shared(cls, alpha: float, n: int) -> "DispersionVector":
        return cls(np.full(n, float(alpha)))

    @property
    def is_shared(self) -> bool:
        return bool(np.all(self.alphas == self.alphas[0]))


@dataclasses.dataclass(frozen=True)
class Factorization:
    exposures: np.ndarray  # W, N x K
    signatures: np.ndarray  # H, K x M
    model: Model
    dispersion: Optional[DispersionVector] = None
    divergence: float = float("nan")
    iterations: int = 0
    seed: Optional[int] = None
    converged: bool = True
    trace: Optional[np.ndarray] = None

    @property
    def rank(self) -> int:
        return self.signatures.shape[0]

    @property
    def mean(self) -> np.ndarray:
        return self.exposures @ self.signatures


@dataclasses.dataclass(frozen=True)
class ModelVariance:
    mean: float
    variance: float


def model_variance(mean, alpha=math.inf):
    """Variance of a count with the given mean: ``mu * (1 + mu / alpha)``.

    ``alpha = inf`` gives the Poisson variance. Broadcasts over arrays.
    """
    mean = np.asarray(mean, dtype=float)
    alpha = np.asarray(alpha, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        extra = np.where(np.isinf(alpha), 0.0, mean / np.where(np.isinf(alpha), 1.0, alpha))
    return mean * (1.0 + extra)


def as_counts(V) -> np.ndarray:
    if isinstance(V, CountMatrix):
        return V.data.astype(float)
    return np.asarray(V, dtype=float)


def _check_pair(V, WH):
    V = as_counts(V)
    WH = np.asarray(WH, dtype=float)
    if V.shape != WH.shape:
        raise ValidationError(f"dimension mismatch: V {V.shape} vs WH {WH.shape}")
    if np.any(WH < 0):
        raise ValidationError("fitted mean has negative entries")
    bad = (WH == 0) & (V > 0)
    if np.any(bad):
        r, c = np.argwhere(bad)[0]
        raise NumericalError(f"fitted mean is zero at ({r}, {c}) where the count is positive")
    return V, WH


def _xlogy_ratio(V, WH):
    """V * log(V / WH) with 0 log 0 = 0."""
    pos = V > 0
    out = np.zeros_like(V)
    # difference of logs: V / WH overflows when WH is subnormal
    out[pos] = V[pos] * (np.log(V[pos]) - np.log(WH[pos]))
    return out


def _alpha_column(alphas, n):
    if isinstance(alphas, DispersionVector):
        a = alphas.alphas
    else:
        a = DispersionVector(alphas).alphas
    if a.size == 1 and n != 1:
        a = np.full(n, a[0])
    if a.size != n:
        raise ValidationError(f"{a.size} dispersion parameters for {n} patients")
    return a[:, None]


def gkl_divergence(V, WH) -> float:
    """Generalized Kullback-Leibler divergence sum(V log(V/WH) - V + WH)."""
    V, WH = _check_pair(V, WH)
    return float(np.sum(_xlogy_ratio(V, WH) - V + WH))


def frobenius_cost(V, WH) -> float:
    V, WH = _check_pair(V, WH)
    return float(np.sum((V - WH) ** 2))


def nb_divergence_cells(V, WH, alphas) -> np.ndarray:
    V, WH = _check_pair(V, WH)
    a = _alpha_column(alphas, V.shape[0])
    inf = np.isinf(a)
    af = np.where(inf, 1.0, a)
    # (a + V) log((a + V) / (a + WH)), written to survive huge a
    tail = (af + V) * np.log1p((V - WH) / (af + WH))
    tail = np.where(inf, V - WH, tail)
    return _xlogy_ratio(V, WH) - tail


def nb_divergence(V, WH, alphas) -> float:
    """Patient-dispersion NB divergence; Poisson rows reduce to GKL."""
    return float(np.sum(nb_divergence_cells(V, WH, alphas)))


def poisson_loglik(V, WH) -> float:
    V, WH = _check_pair(V, WH)
    pos = V > 0
    ll = -WH - gammaln(V + 1)
    ll[pos] += V[pos] * np.log(WH[pos])
    return float(np.sum(ll))


def nb_loglik_cells(V, WH, alphas) -> np.ndarray:
    V, WH = _check_pair(V, WH)
    a = _alpha_column(alphas, V.shape[0])
    inf = np.isinf(a)
    af = np.where(inf, 1.0, a)
    pos = V > 0
    vlogmu = np.zeros_like(V)
    vlogmu[pos] = V[pos] * np.log(WH[pos])
    # log C(V + a - 1, V) + V log(mu / (a + mu)) + a log(a / (a + mu)),
    # regrouped around log(a) so nothing cancels at large a.
    nb = (lgamma_ratio(af, V) - gammaln(V + 1) + vlogmu
          - (af + V) * np.log1p(WH / af))
    po = vlogmu - WH - gammaln(V + 1)
    return np.where(inf, po, nb)


def nb_loglik(V, WH, alphas) -> float:
    return float(np.sum(nb_loglik_cells(V, WH, alphas)))


def normalize_factorization(f: Factorization) -> Factorization:
    """Rescale so every signature row sums to one, keeping W @ H fixed."""
    sums = f.signatures.sum(axis=1)
    if np.any(sums <= 0):
        raise NumericalError(f"signature {int(np.argmin(sums))} is identically zero (rank collapse)")
    if np.all(sums == 1.0):
        return f
    return dataclasses.replace(f, signatures=f.signatures / sums[:, None],
                               exposures=f.exposures * sums[None, :])
