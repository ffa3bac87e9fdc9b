"""Multiplicative-update solvers for Poisson and Negative Binomial NMF.

Both solvers are majorize-minimization schemes: each sweep updates W with
H fixed, then H with the refreshed W, and neither step can increase the
objective. Poisson NMF is the ``alpha -> inf`` limit of the NB updates.
"""

from __future__ import annotations

import dataclasses
import logging
import math
import os
from typing import Callable, Optional

import numpy as np

from .model import (
    DispersionVector,
    Factorization,
    Model,
    ValidationError,
    as_counts,
    gkl_divergence,
    nb_divergence,
)

log = logging.getLogger(__name__)

_FLOOR = 1e-16

# Set SIGNMF_PURE_PYTHON=1 to force the numpy reference loop everywhere.
_COMPILED = os.environ.get("SIGNMF_PURE_PYTHON", "") in ("", "0")


@dataclasses.dataclass(frozen=True)
class FitConfig:
    rank: int
    epsilon: float = 1e-8
    max_iters: int = 100_000
    restarts: int = 1
    seed: int = 0
    init_scale: Optional[float] = None
    tol_mode: str = "relative"

    def __post_init__(self):
        if int(self.rank) != self.rank or self.rank < 1:
            raise ValidationError(f"rank must be a positive integer, got {self.rank}")
        if not self.epsilon > 0:
            raise ValidationError("epsilon must be positive")
        if self.max_iters < 1:
            raise ValidationError("max_iters must be at least 1")
        if self.restarts < 1:
            raise ValidationError("restarts must be at least 1")
        if self.init_scale is not None and not self.init_scale > 0:
            raise ValidationError("init_scale must be positive")
        if self.tol_mode not in ("relative", "absolute"):
            raise ValidationError(f"unknown tol_mode {self.tol_mode!r}")


def default_init_scale(V, rank: int) -> float:
    return math.sqrt(float(np.mean(as_counts(V))) / rank)


def init_factors(N: int, M: int, K: int, seed: int, init_scale: float = 1.0):
    """Uniform(lo, init_scale) starting factors with lo = 1e-8 * init_scale."""
    rng = np.random.default_rng(seed)
    lo = 1e-8 * init_scale
    W = rng.uniform(lo, init_scale, size=(N, K))
    H = rng.uniform(lo, init_scale, size=(K, M))
    return W, H


def _check_rank(V, K):
    N, M = V.shape
    if K >= min(N, M):
        raise ValidationError(f"rank {K} must be smaller than min(N, M) = {min(N, M)}")


def _safe_mean(V, W, H):
    WH = W @ H
    bad = (WH <= 0) & (V > 0)
    if np.any(bad):
        log.warning("fitted mean underflowed to zero at a positive count; flooring at %g", _FLOOR)
        WH = np.where(bad, _FLOOR, WH)
    return WH


def _ratio(V, WH):
    return np.divide(V, WH, out=np.zeros_like(V), where=WH > 0)


def _floor_denominator(d):
    if d.min() <= 0:
        log.warning("update denominator underflowed to zero; flooring at %g", _FLOOR)
        d = np.maximum(d, _FLOOR)
    return d


def _converged(prev, cur, eps, mode):
    step = abs(prev - cur)
    if mode == "relative":
        return step < eps * (1.0 + abs(prev))
    return step < eps


def _run(V, W, H, alpha_col, cfg, callback):
    """Reference MM loop. ``alpha_col`` is None for Poisson, else N x 1."""
    poisson = alpha_col is None

    def objective(WH):
        if poisson:
            return gkl_divergence(V, WH)
        return nb_divergence(V, WH, alpha_col[:, 0])

    WH = _safe_mean(V, W, H)
    trace = [objective(WH)]
    converged = False
    it = 0
    for it in range(1, cfg.max_iters + 1):
        # W step
        num = _ratio(V, WH) @ H.T
        if poisson:
            den = H.sum(axis=1)[None, :]
        else:
            den = (1.0 + (V - WH) / (WH + alpha_col)) @ H.T
        W = W * num / _floor_denominator(den)
        WH = _safe_mean(V, W, H)
        # H step, using the refreshed W
        num = W.T @ _ratio(V, WH)
        if poisson:
            den = W.sum(axis=0)[:, None]
        else:
            den = W.T @ (1.0 + (V - WH) / (WH + alpha_col))
        H = H * num / _floor_denominator(den)
        WH = _safe_mean(V, W, H)
        trace.append(objective(WH))
        if callback is not None:
            callback(it, W, H)
        if _converged(trace[-2], trace[-1], cfg.epsilon, cfg.tol_mode):
            converged = True
            break
    return W, H, np.asarray(trace), it, converged


def _run_compiled(V, W, H, alpha_col, cfg):
    from ._kernel import mu_loop

    N = V.shape[0]
    poisson = alpha_col is None
    alpha = np.full(N, np.inf) if poisson else np.ascontiguousarray(alpha_col[:, 0])
    W, H, trace, it, conv, floored = mu_loop(
        np.ascontiguousarray(V), np.ascontiguousarray(W), np.ascontiguousarray(H),
        alpha, poisson, float(cfg.epsilon), cfg.tol_mode == "relative", int(cfg.max_iters))
    if floored:
        log.warning("floored %d zero denominators/means at %g", floored, _FLOOR)
    return W, H, trace, int(it), bool(conv)


def _fit(V, cfg, alphas, init, callback, model):
    V_arr = as_counts(V)
    N, M = V_arr.shape
    K = cfg.rank
    _check_rank(V_arr, K)
    alpha_col = None
    if alphas is not None:
        if alphas.alphas.size != N:
            raise ValidationError(f"{alphas.alphas.size} dispersion parameters for {N} patients")
        alpha_col = alphas.alphas[:, None]
    scale = cfg.init_scale or default_init_scale(V_arr, K)
    best = None
    for r in range(cfg.restarts):
        seed = cfg.seed + r
        if init is not None:
            W0, H0 = init(seed) if callable(init) else init
            W0, H0 = np.array(W0, dtype=float), np.array(H0, dtype=float)
            if W0.shape != (N, K) or H0.shape != (K, M):
                raise ValidationError("initial factors have the wrong shape")
        else:
            W0, H0 = init_factors(N, M, K, seed, scale)
        if callback is None and _COMPILED:
            W, H, trace, iters, conv = _run_compiled(V_arr, W0, H0, alpha_col, cfg)
        else:
            W, H, trace, iters, conv = _run(V_arr, W0, H0, alpha_col, cfg, callback)
        if not conv:
            log.info("rank %d fit (seed %d) stopped at max_iters=%d", K, seed, cfg.max_iters)
        fit = Factorization(
            exposures=W, signatures=H, model=model, dispersion=alphas,
            divergence=float(trace[-1]), iterations=iters, seed=seed,
            converged=conv, trace=trace,
        )
        # strict < keeps the lowest seed on ties
        if best is None or fit.divergence < best.divergence:
            best = fit
    return best


def po_nmf(V, cfg: FitConfig, init=None,
           callback: Optional[Callable] = None) -> Factorization:
    """Poisson NMF (Lee-Seung KL updates).

    ``init`` may be a ``(W0, H0)`` pair or a callable ``seed -> (W0, H0)``;
    ``callback(iteration, W, H)`` is invoked after every sweep.
    """
    return _fit(V, cfg, None, init, callback, Model.POISSON)


def nb_nmf(V, alphas, cfg: FitConfig, init=None,
           callback: Optional[Callable] = None) -> Factorization:
    """NB NMF with fixed per-patient dispersions (``inf`` rows act Poisson)."""
    alphas = alphas if isinstance(alphas, DispersionVector) else DispersionVector(alphas)
    model = Model.NB_SHARED if alphas.is_shared else Model.NB_PATIENT
    return _fit(V, cfg, alphas, init, callback, model)


def fit_model(V, cfg: FitConfig, model=Model.POISSON, init=None,
              alpha_bounds=None) -> Factorization:
    """Fit ``V`` under ``model``.

    For the NB models this is the full three-stage procedure: Poisson NMF,
    dispersion MLE from the Poisson mean, then NB NMF from a fresh random
    start with the dispersions held fixed.
    """
    from .dispersion import DEFAULT_BOUNDS, estimate_dispersion, estimate_shared_dispersion

    model = Model(model)
    log.info("stage po_nmf: rank %d", cfg.rank)
    po = po_nmf(V, cfg, init=init)
    if model is Model.POISSON:
        return po
    bounds = alpha_bounds or DEFAULT_BOUNDS
    log.info("stage dispersion_mle: %s", model.value)
    if model is Model.NB_SHARED:
        alphas = estimate_shared_dispersion(V, po.mean, bounds)
    else:
        alphas = estimate_dispersion(V, po.mean, bounds)
    log.info("stage nb_nmf: rank %d", cfg.rank)
    fit = nb_nmf(V, alphas, cfg, init=init)
    if model is not fit.model:
        # a patient-level fit whose estimates happen to coincide keeps its tag
        fit = dataclasses.replace(fit, model=model)
    return fit


def objective(V, f: Factorization) -> float:
    if f.model is Model.POISSON:
        return gkl_divergence(V, f.mean)
    return nb_divergence(V, f.mean, f.dispersion)
