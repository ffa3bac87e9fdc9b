"""Rank selection: SigMoS train/test splitting and AIC/BIC baselines."""

from __future__ import annotations

import dataclasses
import math
import os
from concurrent.futures import ProcessPoolExecutor
from typing import Dict, List, Optional, Sequence

import numpy as np

from .dispersion import estimate_dispersion
from .engine import FitConfig, default_init_scale, fit_model
from .model import (
    CountMatrix,
    Factorization,
    Model,
    ValidationError,
    as_counts,
    frobenius_cost,
    gkl_divergence,
    nb_divergence,
    nb_loglik,
    normalize_factorization,
    poisson_loglik,
)

COSTS = ("gkl", "frobenius", "nb")


@dataclasses.dataclass(frozen=True)
class SigmosConfig:
    k_range: Sequence[int]
    J: int = 10
    test_fraction: float = 0.10
    cost: str = "gkl"
    nmf_method: Model = Model.POISSON
    seed: int = 0
    epsilon: float = 1e-8
    max_iters: int = 100_000
    restarts: int = 1
    threads: int = 1
    align: bool = True

    def __post_init__(self):
        ks = [int(k) for k in self.k_range]
        if not ks:
            raise ValidationError("k_range is empty")
        if min(ks) < 2:
            raise ValidationError("candidate ranks must be at least 2")
        if self.J < 1:
            raise ValidationError("J must be at least 1")
        if not 0 < self.test_fraction < 0.5:
            raise ValidationError("test_fraction must lie in (0, 0.5)")
        if self.cost not in COSTS:
            raise ValidationError(f"unknown cost {self.cost!r}; choose from {COSTS}")
        object.__setattr__(self, "k_range", tuple(sorted(set(ks))))
        object.__setattr__(self, "nmf_method", Model(self.nmf_method))


@dataclasses.dataclass
class SelectionResult:
    per_k_costs: Dict[int, List[float]]
    scores: Dict[int, float]  # median cost, or the criterion value
    chosen_k: int
    method_label: str
    per_k_fits: Dict[int, Factorization] = dataclasses.field(default_factory=dict)


def _argmin_smallest(scores: Dict[int, float]) -> int:
    best = min(scores.values())
    return min(k for k, s in scores.items() if s == best)


def split_patients(N: int, test_fraction: float, seed: int, j: int):
    """Training and test row indices for split ``j`` (depends only on seed, j)."""
    n_train = math.ceil((1.0 - test_fraction) * N)
    if n_train >= N:
        raise ValidationError(f"test set is empty for N = {N}")
    perm = np.random.default_rng([seed, j]).permutation(N)
    return np.sort(perm[:n_train]), np.sort(perm[n_train:])


def _init_seed(seed: int, K: int, j: int) -> int:
    # restarts use consecutive seeds, so leave room below 2**31
    return int(np.random.SeedSequence([seed, K, j + 1]).generate_state(1)[0] >> 2)


def _rank_fit(V, K, rows, cfg: SigmosConfig, scale, j=-1):
    """Fit rows ``rows`` of ``V`` (all rows when None) at rank ``K``.

    ``j`` indexes the split (-1 for the full data) and selects an
    independent starting point.
    """
    data = V if rows is None else V[rows]
    fc = FitConfig(K, epsilon=cfg.epsilon, max_iters=cfg.max_iters,
                   restarts=cfg.restarts, seed=_init_seed(cfg.seed, K, j), init_scale=scale)
    return fit_model(data, fc, cfg.nmf_method)


def _task(args):
    return _rank_fit(*args)


def align_signatures(H_ref, H):
    """Row permutation of ``H`` maximising total cosine similarity to ``H_ref``."""
    from scipy.optimize import linear_sum_assignment

    A = H_ref / np.linalg.norm(H_ref, axis=1, keepdims=True)
    B = H / np.linalg.norm(H, axis=1, keepdims=True)
    _, cols = linear_sum_assignment(-(A @ B.T))
    return cols


def _prediction(full: Factorization, train: Factorization, test, align: bool):
    if not align:
        return full.exposures[test] @ train.signatures
    full, train = normalize_factorization(full), normalize_factorization(train)
    H = train.signatures[align_signatures(full.signatures, train.signatures)]
    return full.exposures[test] @ H


def _cost(name, V_test, pred, alphas_test):
    if name == "gkl":
        return gkl_divergence(V_test, pred)
    if name == "frobenius":
        return frobenius_cost(V_test, pred)
    return nb_divergence(V_test, pred, alphas_test)


def _map(fn, tasks, threads):
    if threads <= 1 or len(tasks) <= 1:
        return [fn(t) for t in tasks]
    with ProcessPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, tasks))


def default_threads() -> int:
    try:
        return max(1, int(os.environ.get("SIGNMF_THREADS", "1")))
    except ValueError:
        return 1


def _check_ranks(V, k_range, n_train=None):
    N, M = V.shape
    limit = min(N if n_train is None else n_train, M)
    too_big = [k for k in k_range if k >= limit]
    if too_big:
        raise ValidationError(f"ranks {too_big} are too large (must be < {limit})")


def sigmos(V, cfg: SigmosConfig, keep_fits: bool = False) -> SelectionResult:
    V = as_counts(V)
    N, M = V.shape
    if N < 10:
        raise ValidationError("SigMoS needs at least 10 patients")
    splits = [split_patients(N, cfg.test_fraction, cfg.seed, j) for j in range(cfg.J)]
    _check_ranks(V, cfg.k_range, len(splits[0][0]))

    tasks = []
    for K in cfg.k_range:
        scale = default_init_scale(V, K)
        tasks.append((V, K, None, cfg, scale))
        tasks.extend((V, K, train, cfg, scale, j) for j, (train, _) in enumerate(splits))
    fits = _map(_task, tasks, cfg.threads)

    per_k, scores, kept = {}, {}, {}
    stride = cfg.J + 1
    for i, K in enumerate(cfg.k_range):
        full, train_fits = fits[i * stride], fits[i * stride + 1:(i + 1) * stride]
        alphas = None
        if cfg.cost == "nb":
            alphas = (full.dispersion.alphas if full.dispersion is not None
                      else estimate_dispersion(V, full.mean).alphas)
        costs = []
        for (_, test), tf in zip(splits, train_fits):
            pred = _prediction(full, tf, test, cfg.align)
            costs.append(_cost(cfg.cost, V[test], pred,
                               None if alphas is None else alphas[test]))
        per_k[K] = costs
        scores[K] = float(np.median(costs))
        if keep_fits:
            kept[K] = full
    label = f"sigmos[{cfg.nmf_method.value},{cfg.cost},J={cfg.J}]"
    return SelectionResult(per_k, scores, _argmin_smallest(scores), label, kept)


def aic(loglik: float, n_params: int) -> float:
    return -2.0 * loglik + 2.0 * n_params


def bic(loglik: float, n_params: int, n_obs: int) -> float:
    if n_obs < 2:
        raise ValidationError("BIC needs n_obs >= 2")
    return -2.0 * loglik + math.log(n_obs) * n_params


def n_params(N: int, M: int, K: int, model) -> int:
    """Raw parameter count: all of W and H, plus the dispersions."""
    model = Model(model)
    base = K * (N + M)
    if model is Model.NB_PATIENT:
        return base + N
    if model is Model.NB_SHARED:
        return base + 1
    return base


def loglik(V, f: Factorization) -> float:
    if f.model is Model.POISSON:
        return poisson_loglik(V, f.mean)
    return nb_loglik(V, f.mean, f.dispersion)


def information_criteria(V, f: Factorization) -> dict:
    V = as_counts(V)
    N, M = V.shape
    ll = loglik(V, f)
    p = n_params(N, M, f.rank, f.model)
    return {
        "loglik": ll,
        "n_params": p,
        "aic": aic(ll, p),
        "bic_n_patients": bic(ll, p, N),
        "bic_n_cells": bic(ll, p, N * M),
    }


def select_by_ic(V, k_range, method=Model.POISSON, criterion: str = "aic",
                 n_obs: str = "patients", seed: int = 0, epsilon: float = 1e-8,
                 max_iters: int = 100_000, restarts: int = 1, threads: int = 1,
                 keep_fits: bool = False) -> SelectionResult:
    """Fit every rank in ``k_range`` on all of ``V`` and minimise AIC or BIC.

    ``n_obs`` picks the BIC sample size: ``"patients"`` (N) or ``"cells"`` (N*M).
    """
    if criterion not in ("aic", "bic"):
        raise ValidationError(f"unknown criterion {criterion!r}")
    if n_obs not in ("patients", "cells"):
        raise ValidationError(f"unknown n_obs convention {n_obs!r}")
    V = as_counts(V)
    ks = tuple(sorted(set(int(k) for k in k_range)))
    if not ks or min(ks) < 1:
        raise ValidationError("candidate ranks must be positive")
    _check_ranks(V, ks)
    cfg = SigmosConfig(k_range=[max(k, 2) for k in ks], nmf_method=method, seed=seed,
                       epsilon=epsilon, max_iters=max_iters, restarts=restarts)
    tasks = [(V, K, None, cfg, default_init_scale(V, K)) for K in ks]
    fits = _map(_task, tasks, threads)
    key = "aic" if criterion == "aic" else ("bic_n_patients" if n_obs == "patients" else "bic_n_cells")
    per_k, scores, kept = {}, {}, {}
    for K, f in zip(ks, fits):
        value = information_criteria(V, f)[key]
        per_k[K] = [value]
        scores[K] = value
        if keep_fits:
            kept[K] = f
    label = f"{criterion}[{Model(method).value}" + (f",n_obs={n_obs}]" if criterion == "bic" else "]")
    return SelectionResult(per_k, scores, _argmin_smallest(scores), label, kept)
