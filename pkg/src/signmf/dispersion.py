"""Maximum-likelihood NB dispersion for a fixed mean matrix.

Each patient row is solved independently by safeguarded Newton-Raphson on
``t = log(alpha)``. The score's sign-change bracket is maintained at every
step so a rejected Newton step can fall back to bisection.
"""

from __future__ import annotations

import math

import numpy as np

from .model import (
    DispersionVector,
    NumericalError,
    ValidationError,
    as_counts,
    nb_loglik_cells,
)
from .special import digamma_diff, trigamma

DEFAULT_BOUNDS = (1e-3, 1e7)


def row_loglik(v_row, mu_row, alpha) -> float:
    v = np.asarray(v_row, dtype=float)[None, :]
    mu = np.asarray(mu_row, dtype=float)[None, :]
    return float(np.sum(nb_loglik_cells(v, mu, [alpha])))


def nb_score_and_curvature(v_row, mu_row, alpha):
    """First and second derivative in ``alpha`` of one row's NB log-likelihood."""
    if not alpha > 0:
        raise ValidationError(f"alpha must be positive, got {alpha}")
    v = np.asarray(v_row, dtype=float)
    mu = np.asarray(mu_row, dtype=float)
    a = float(alpha)
    score = np.sum(digamma_diff(a, v) - np.log1p(mu / a) + (mu - v) / (a + mu))
    curv = np.sum(trigamma(a + v) - trigamma(a) + mu / (a * (a + mu))
                  - (mu - v) / (a + mu) ** 2)
    return float(score), float(curv)


def _moment_guess(v, mu):
    m = float(np.mean(v))
    s2 = float(np.mean((v - mu) ** 2))
    excess = s2 - float(np.mean(mu))
    if excess <= 0:
        return math.inf
    return m * m / excess


def estimate_row(v_row, mu_row, bounds=DEFAULT_BOUNDS, tol=1e-12, max_iter=200) -> float:
    """MLE of one row's dispersion, clamped to ``bounds``.

    Returns ``inf`` when the likelihood is still increasing at the upper
    bound (data no more dispersed than Poisson).
    """
    v = np.asarray(v_row, dtype=float)
    mu = np.asarray(mu_row, dtype=float)
    if np.any((mu <= 0) & (v > 0)):
        raise ValidationError("fitted mean is zero where the count is positive")
    # cells with zero mean and zero count carry no information about alpha
    keep = mu > 0
    v, mu = v[keep], mu[keep]
    if not np.any(v > 0):
        raise ValidationError("cannot estimate dispersion for an all-zero row")
    a_min, a_max = bounds

    def grad(t):
        a = math.exp(t)
        s, c = nb_score_and_curvature(v, mu, a)
        # derivatives w.r.t. t = log(alpha)
        return a * s, a * a * c + a * s

    def ll(t):
        return row_loglik(v, mu, math.exp(t))

    lo, hi = math.log(a_min), math.log(a_max)
    g_hi, _ = grad(hi)
    if g_hi > 0:
        return math.inf
    g_lo, _ = grad(lo)
    if g_lo <= 0:
        return a_min

    guess = _moment_guess(v, mu)
    t = min(max(math.log(guess), lo), hi) if math.isfinite(guess) else hi
    if not lo < t < hi:
        t = 0.5 * (lo + hi)
    f_t = ll(t)
    for _ in range(max_iter):
        g, h = grad(t)
        if g > 0:
            lo = t
        else:
            hi = t
        if hi - lo < tol:
            break
        step_ok = False
        if h < 0:
            t_new = t - g / h
            if lo < t_new < hi:
                f_new = ll(t_new)
                if f_new >= f_t:
                    step_ok = True
        if not step_ok:
            t_new = 0.5 * (lo + hi)
            f_new = ll(t_new)
        done = abs(t_new - t) < tol
        t, f_t = t_new, f_new
        if done:
            break
    return math.exp(t)


def estimate_dispersion(V, WH, bounds=DEFAULT_BOUNDS) -> DispersionVector:
    """Per-patient dispersion MLEs given the fitted mean ``WH``."""
    V = as_counts(V)
    WH = np.asarray(WH, dtype=float)
    if V.shape != WH.shape:
        raise ValidationError(f"dimension mismatch: V {V.shape} vs WH {WH.shape}")
    if np.any((WH <= 0) & (V > 0)):
        raise NumericalError("fitted mean is zero where the count is positive")
    return DispersionVector([estimate_row(V[n], WH[n], bounds) for n in range(V.shape[0])])


def estimate_shared_dispersion(V, WH, bounds=DEFAULT_BOUNDS) -> DispersionVector:
    """One dispersion shared by all patients, as a constant vector."""
    V = as_counts(V)
    WH = np.asarray(WH, dtype=float)
    if V.shape != WH.shape:
        raise ValidationError(f"dimension mismatch: V {V.shape} vs WH {WH.shape}")
    if np.any((WH <= 0) & (V > 0)):
        raise NumericalError("fitted mean is zero where the count is positive")
    alpha = estimate_row(V.ravel(), WH.ravel(), bounds)
    return DispersionVector.shared(alpha, V.shape[0])
