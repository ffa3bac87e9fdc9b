"""Synthetic mutational catalogs: NB exposures times reference signatures,
observed through Poisson or Negative Binomial noise."""

from __future__ import annotations

import dataclasses
import math
from typing import Optional, Sequence, Tuple, Union

import numpy as np

from .model import CountMatrix, DispersionVector, ValidationError

DEFAULT_REQUIRED = ("SBS1", "SBS5")


def mutation_types_96():
    """Standard SBS-96 labels, e.g. ``A[C>A]A``."""
    subs = ("C>A", "C>G", "C>T", "T>A", "T>C", "T>G")
    return [f"{l}[{s}]{r}" for s in subs for l in "ACGT" for r in "ACGT"]


@dataclasses.dataclass(frozen=True)
class SignatureSet:
    names: Tuple[str, ...]
    mutation_types: Tuple[str, ...]
    matrix: np.ndarray  # n_signatures x M, rows sum to 1

    def __post_init__(self):
        mat = np.asarray(self.matrix, dtype=float)
        if mat.shape != (len(self.names), len(self.mutation_types)):
            raise ValidationError("signature matrix does not match its labels")
        if np.any(mat < 0):
            raise ValidationError("signatures must be non-negative")
        sums = mat.sum(axis=1)
        if np.any(np.abs(sums - 1.0) > 1e-6):
            bad = int(np.argmax(np.abs(sums - 1.0)))
            raise ValidationError(f"signature {self.names[bad]!r} sums to {sums[bad]}, not 1")
        if len(set(self.names)) != len(self.names):
            raise ValidationError("duplicate signature names")
        object.__setattr__(self, "matrix", mat)
        object.__setattr__(self, "names", tuple(self.names))
        object.__setattr__(self, "mutation_types", tuple(self.mutation_types))


def random_signatures(n: int, seed: int = 0, concentration: float = 0.3,
                      mutation_types: Optional[Sequence[str]] = None) -> SignatureSet:
    """Dirichlet-distributed stand-in signatures named SBS1..SBSn."""
    types = list(mutation_types or mutation_types_96())
    rng = np.random.default_rng(seed)
    mat = rng.dirichlet(np.full(len(types), concentration), size=n)
    mat /= mat.sum(axis=1, keepdims=True)
    return SignatureSet(tuple(f"SBS{i + 1}" for i in range(n)), tuple(types), mat)


def sample_nb(mean, alpha, rng: np.random.Generator, size=None):
    """Gamma-Poisson draw: ``a ~ Gamma(alpha, rate=alpha)``, then ``Poisson(a * mean)``.

    ``alpha = inf`` gives plain Poisson draws.
    """
    mean = np.asarray(mean, dtype=float)
    alpha = np.asarray(alpha, dtype=float)
    if np.any(mean < 0):
        raise ValidationError("mean must be non-negative")
    if np.any(alpha <= 0):
        raise ValidationError("alpha must be positive")
    shape = np.broadcast_shapes(mean.shape, alpha.shape) if size is None else size
    finite = np.isfinite(alpha)
    a_safe = np.where(finite, alpha, 1.0)
    mult = rng.gamma(np.broadcast_to(a_safe, shape), 1.0 / np.broadcast_to(a_safe, shape))
    mult = np.where(np.broadcast_to(finite, shape), mult, 1.0)
    out = rng.poisson(mult * np.broadcast_to(mean, shape))
    return out if np.ndim(out) else int(out)


@dataclasses.dataclass(frozen=True)
class SimConfig:
    n_patients: int
    n_signatures: int
    signatures: SignatureSet
    required_signatures: Optional[Sequence[str]] = None
    exposure_mean: float = 6000.0
    exposure_dispersion: float = 1.5
    noise: str = "poisson"  # poisson | nb | nb-uniform
    alpha: float = 10.0
    alpha_range: Tuple[float, float] = (10.0, 500.0)
    seed: int = 0

    def __post_init__(self):
        if self.n_patients < 1 or self.n_signatures < 1:
            raise ValidationError("need at least one patient and one signature")
        if self.n_signatures > len(self.signatures.names):
            raise ValidationError(f"{self.n_signatures} signatures requested, "
                                  f"only {len(self.signatures.names)} available")
        if not (self.exposure_mean > 0 and self.exposure_dispersion > 0):
            raise ValidationError("exposure parameters must be positive")
        if self.noise not in ("poisson", "nb", "nb-uniform"):
            raise ValidationError(f"unknown noise model {self.noise!r}")
        if self.noise == "nb" and not self.alpha > 0:
            raise ValidationError("alpha must be positive")
        lo, hi = self.alpha_range
        if self.noise == "nb-uniform" and not 0 < lo <= hi:
            raise ValidationError("alpha_range must satisfy 0 < lo <= hi")


@dataclasses.dataclass(frozen=True)
class SimResult:
    counts: CountMatrix
    exposures: np.ndarray
    signatures: np.ndarray
    signature_names: Tuple[str, ...]
    alphas: DispersionVector


def _required(cfg: SimConfig):
    names = cfg.signatures.names
    if cfg.required_signatures is None:
        req = [s for s in DEFAULT_REQUIRED if s in names]
    else:
        req = list(cfg.required_signatures)
        missing = [s for s in req if s not in names]
        if missing:
            raise ValidationError(f"required signatures not in file: {missing}")
    if len(set(req)) != len(req):
        raise ValidationError("duplicate signature selection")
    return req[: cfg.n_signatures]


def simulate_dataset(cfg: SimConfig) -> SimResult:
    rng = np.random.default_rng(cfg.seed)
    names = cfg.signatures.names
    req = _required(cfg)
    pool = [s for s in names if s not in req]
    extra = rng.choice(len(pool), size=cfg.n_signatures - len(req), replace=False)
    chosen = req + [pool[i] for i in sorted(extra)]
    H = cfg.signatures.matrix[[names.index(s) for s in chosen]]

    N = cfg.n_patients
    W = sample_nb(np.full((N, len(chosen)), cfg.exposure_mean), cfg.exposure_dispersion, rng)
    W = W.astype(float)
    if cfg.noise == "poisson":
        alphas = np.full(N, math.inf)
    elif cfg.noise == "nb":
        alphas = np.full(N, float(cfg.alpha))
    else:
        alphas = rng.uniform(*cfg.alpha_range, size=N)

    V = np.empty((N, H.shape[1]), dtype=np.int64)
    for n in range(N):
        while True:
            mu = W[n] @ H
            row = sample_nb(mu, alphas[n], rng)
            if row.sum() > 0:
                break
            # redraw exposures too: an all-zero exposure row never yields counts
            W[n] = sample_nb(np.full(len(chosen), cfg.exposure_mean), cfg.exposure_dispersion, rng)
        V[n] = row
    counts = CountMatrix(V, [f"P{n + 1}" for n in range(N)], cfg.signatures.mutation_types)
    return SimResult(counts, W, H, tuple(chosen), DispersionVector(alphas))
