"""Residual goodness-of-fit checks and signature-recovery metrics."""

from __future__ import annotations

import dataclasses
from typing import Optional, Sequence, Tuple

import numpy as np
from scipy.stats import norm

from .model import Factorization, Model, ValidationError, as_counts, model_variance


@dataclasses.dataclass(frozen=True)
class QuantileCheck:
    observed: Tuple[float, float]
    reference: Tuple[float, float]
    overdispersed: bool


@dataclasses.dataclass(frozen=True)
class ResidualReport:
    raw: np.ndarray
    fitted_mean: np.ndarray
    sigma: np.ndarray
    normalized: np.ndarray
    quantiles: QuantileCheck
    # +-2 sigma bands across all patients' dispersions at each cell's mean;
    # identical to +-2 sigma for Poisson fits
    envelope_median: np.ndarray
    envelope_min: np.ndarray
    envelope_max: np.ndarray

    @property
    def envelope(self):
        return -2.0 * self.sigma, 2.0 * self.sigma

    def exceedance(self, z: float = 2.0) -> float:
        """Fraction of cells with ``|normalized| > z``."""
        return float(np.mean(np.abs(self.normalized) > z))


def quantile_check(normalized, probs: Sequence[float] = (0.025, 0.975),
                   threshold: float = 1.5) -> QuantileCheck:
    """Observed residual quantiles against the standard normal reference.

    Flags overdispersion when the observed interval strictly contains the
    reference interval widened by ``threshold``.
    """
    r = np.asarray(normalized, dtype=float).ravel()
    if r.size == 0:
        raise ValidationError("no residuals")
    lo, hi = (float(q) for q in np.quantile(r, probs))
    ref_lo, ref_hi = (float(q) for q in norm.ppf(probs))
    flag = lo < threshold * ref_lo and hi > threshold * ref_hi
    return QuantileCheck((lo, hi), (ref_lo, ref_hi), bool(flag))


def residual_report(V, f: Factorization, threshold: float = 1.5) -> ResidualReport:
    V = as_counts(V)
    mu = f.mean
    if V.shape != mu.shape:
        raise ValidationError(f"dimension mismatch: V {V.shape} vs fit {mu.shape}")
    N = V.shape[0]
    if f.model is Model.POISSON or f.dispersion is None:
        alphas = np.full(N, np.inf)
    else:
        alphas = f.dispersion.alphas
    raw = V - mu
    sigma = np.sqrt(model_variance(mu, alphas[:, None]))
    normalized = np.divide(raw, sigma, out=np.zeros_like(raw), where=sigma > 0)

    # sigma of every cell under every patient's dispersion: N x M x N
    all_sigma = np.sqrt(model_variance(mu[:, :, None], alphas[None, None, :]))
    return ResidualReport(
        raw=raw, fitted_mean=mu, sigma=sigma, normalized=normalized,
        quantiles=quantile_check(normalized, threshold=threshold),
        envelope_median=2.0 * np.median(all_sigma, axis=2),
        envelope_min=2.0 * all_sigma.min(axis=2),
        envelope_max=2.0 * all_sigma.max(axis=2),
    )


def cosine_match(H_est, H_true):
    """Greedy maximum-cosine pairing of estimated to true signatures.

    Returns ``(assignment, similarity)`` where row ``i`` of ``H_est`` is paired
    with row ``assignment[i]`` of ``H_true`` at cosine ``similarity[i]``.
    """
    A = np.asarray(H_est, dtype=float)
    B = np.asarray(H_true, dtype=float)
    if A.shape != B.shape:
        raise ValidationError(f"signature sets differ in shape: {A.shape} vs {B.shape}")
    C = (A / np.linalg.norm(A, axis=1, keepdims=True)) @ (B / np.linalg.norm(B, axis=1, keepdims=True)).T
    C = np.clip(C, 0.0, 1.0)
    K = A.shape[0]
    assignment = np.full(K, -1)
    sim = np.zeros(K)
    work = C.copy()
    for _ in range(K):
        i, j = np.unravel_index(np.argmax(work), work.shape)
        assignment[i], sim[i] = j, C[i, j]
        work[i, :] = -1.0
        work[:, j] = -1.0
    return assignment, sim
