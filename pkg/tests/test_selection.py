import math

import numpy as np
import pytest

from signmf.engine import FitConfig, po_nmf
from signmf.model import Model, ValidationError
from signmf.selection import (SigmosConfig, _argmin_smallest, aic, align_signatures, bic,
                              information_criteria, n_params, select_by_ic, sigmos,
                              split_patients)

FAST = dict(epsilon=1e-6, max_iters=20_000)


def test_aic_values():
    assert aic(0.0, 3) == 6
    assert aic(-100.0, 10) == 220


def test_aic_prefers_smaller_model_at_equal_loglik():
    assert aic(-50.0, 4) < aic(-50.0, 5)


def test_bic_values():
    assert bic(0.0, 2, math.e ** 2) == pytest.approx(4.0, rel=1e-15)
    assert bic(-10.0, 3, 100) < bic(-10.0, 3, 1000)


def test_bic_penalty_exceeds_aic_from_eight_observations():
    assert bic(-10.0, 5, 8) > aic(-10.0, 5)
    assert bic(-10.0, 5, 7) < aic(-10.0, 5)


def test_bic_needs_two_observations():
    with pytest.raises(ValidationError):
        bic(0.0, 1, 1)


def test_parameter_counts():
    assert n_params(20, 96, 3, Model.POISSON) == 3 * 116
    assert n_params(20, 96, 3, Model.NB_PATIENT) == 3 * 116 + 20
    assert n_params(20, 96, 3, Model.NB_SHARED) == 3 * 116 + 1


def test_ties_choose_smaller_k():
    assert _argmin_smallest({2: 1.0, 3: 1.0, 4: 2.0}) == 2
    assert _argmin_smallest({4: 0.5, 2: 1.0, 3: 0.5}) == 3


def test_config_validation():
    for bad in (dict(k_range=[]), dict(k_range=[1, 2]), dict(k_range=[2], J=0),
                dict(k_range=[2], test_fraction=0.5), dict(k_range=[2], cost="l1")):
        with pytest.raises(ValidationError):
            SigmosConfig(**bad)
    assert SigmosConfig([4, 2, 3, 3]).k_range == (2, 3, 4)


@pytest.mark.parametrize("N", [10, 20, 21, 57])
def test_splits_partition_patients(N):
    for j in range(5):
        train, test = split_patients(N, 0.1, seed=3, j=j)
        assert len(train) == math.ceil(0.9 * N)
        assert not set(train) & set(test)
        assert sorted(set(train) | set(test)) == list(range(N))


def test_splits_are_reproducible_and_vary():
    a = [split_patients(20, 0.1, 1, j)[1] for j in range(10)]
    b = [split_patients(20, 0.1, 1, j)[1] for j in range(10)]
    assert all(np.array_equal(x, y) for x, y in zip(a, b))
    assert len({tuple(x) for x in a}) > 1


def test_empty_test_set_rejected():
    with pytest.raises(ValidationError):
        split_patients(5, 0.1, 0, 0)


def test_rank_and_size_preconditions(poisson_sim):
    with pytest.raises(ValidationError):
        sigmos(poisson_sim.counts, SigmosConfig([2, 18]))
    with pytest.raises(ValidationError):
        sigmos(poisson_sim.counts.data[:9], SigmosConfig([2]))


def test_align_recovers_permutation(rng):
    H = rng.dirichlet(np.ones(30), size=4)
    perm = np.array([3, 1, 0, 2])
    cols = align_signatures(H, H[perm])
    assert np.array_equal(H[perm][cols], H)


def test_sigmos_reproducible_and_order_invariant(poisson_sim):
    cfg = SigmosConfig([4, 5], J=4, seed=11, **FAST)
    a, b = sigmos(poisson_sim.counts, cfg), sigmos(poisson_sim.counts, cfg)
    assert a.per_k_costs == b.per_k_costs and a.scores == b.scores
    for k, costs in a.per_k_costs.items():
        assert len(costs) == 4
        assert a.scores[k] == float(np.median(costs[::-1])) == float(np.median(sorted(costs)))
    assert a.method_label.startswith("sigmos[Poisson,gkl")


def test_sigmos_threads_do_not_change_results(poisson_sim):
    base = dict(k_range=[4, 5], J=2, seed=2, **FAST)
    a = sigmos(poisson_sim.counts, SigmosConfig(**base))
    b = sigmos(poisson_sim.counts, SigmosConfig(**base, threads=2))
    assert a.per_k_costs == b.per_k_costs


@pytest.mark.parametrize("cost", ["frobenius", "nb"])
def test_alternative_costs_run(nb10_sim, cost):
    res = sigmos(nb10_sim.counts, SigmosConfig([4, 5], J=2, cost=cost, seed=1, **FAST),
                 keep_fits=True)
    assert set(res.per_k_fits) == {4, 5}
    assert all(np.isfinite(c) and c >= 0 for cs in res.per_k_costs.values() for c in cs)


def _planted_exact(seed, N=20, M=40, K=3):
    """Integer product with a unique factorization.

    Signatures have disjoint supports and every signature owns three
    single-signature patients, so any training split keeps one of them.
    """
    r = np.random.default_rng(seed)
    W = r.integers(1, 30, size=(N, K))
    pure = np.arange(3 * K)
    W[pure] = 0
    W[pure, pure % K] = r.integers(5, 30, size=3 * K)
    H = np.zeros((K, M), dtype=int)
    H[r.permutation(np.arange(M) % K), np.arange(M)] = r.integers(1, 6, size=M)
    return W @ H


def test_noiseless_planted_rank_is_selected():
    hits, underfit_ok = 0, True
    for seed in range(20):
        V = _planted_exact(seed)
        res = sigmos(V, SigmosConfig(range(2, 7), seed=seed, epsilon=1e-8, max_iters=20_000))
        hits += res.chosen_k == 3
        underfit_ok &= all(c3 <= c2 for c3, c2 in zip(res.per_k_costs[3], res.per_k_costs[2]))
        assert res.scores[2] > res.scores[3]
    assert hits >= 18
    assert underfit_ok


def test_information_criteria_fields(poisson_sim):
    f = po_nmf(poisson_sim.counts, FitConfig(3, seed=0, **FAST))
    ic = information_criteria(poisson_sim.counts, f)
    N, M = poisson_sim.counts.data.shape
    assert ic["n_params"] == 3 * (N + M)
    assert ic["aic"] == pytest.approx(-2 * ic["loglik"] + 2 * ic["n_params"])
    assert ic["bic_n_patients"] == pytest.approx(-2 * ic["loglik"] + math.log(N) * ic["n_params"])
    assert ic["bic_n_cells"] == pytest.approx(-2 * ic["loglik"] + math.log(N * M) * ic["n_params"])


def test_select_by_ic_options(poisson_sim):
    with pytest.raises(ValidationError):
        select_by_ic(poisson_sim.counts, [2, 3], criterion="hqc")
    with pytest.raises(ValidationError):
        select_by_ic(poisson_sim.counts, [2, 3], criterion="bic", n_obs="rows")
    res = select_by_ic(poisson_sim.counts, [2, 3], criterion="bic", n_obs="cells",
                       keep_fits=True, **FAST)
    assert res.method_label == "bic[Poisson,n_obs=cells]"
    assert set(res.per_k_fits) == {2, 3}
    assert res.chosen_k == min(res.scores, key=lambda k: (res.scores[k], k))


def test_nb_ic_counts_dispersions(nb10_sim):
    res = select_by_ic(nb10_sim.counts, [5], method=Model.NB_PATIENT, keep_fits=True, **FAST)
    f = res.per_k_fits[5]
    ic = information_criteria(nb10_sim.counts, f)
    assert ic["n_params"] == 5 * (20 + 96) + 20
    assert res.scores[5] == ic["aic"]


def _bic_poisson_hits(signatures, reps):
    from signmf.simulation import SimConfig, simulate_dataset
    hits = 0
    for r in range(reps):
        sim = simulate_dataset(SimConfig(20, 5, signatures, seed=500 + r))
        hits += select_by_ic(sim.counts, range(2, 9), criterion="bic", seed=r, **FAST).chosen_k == 5
    return hits


@pytest.mark.slow
def test_bic_recovers_rank_on_poisson_data(signatures):
    assert _bic_poisson_hits(signatures, 20) >= 17


@pytest.mark.slow
def test_sigmos_nb_model_on_nb10_data(signatures):
    from signmf.simulation import SimConfig, simulate_dataset
    hits = 0
    for r in range(20):
        sim = simulate_dataset(SimConfig(20, 5, signatures, noise="nb", alpha=10, seed=700 + r))
        res = sigmos(sim.counts, SigmosConfig(range(2, 9), nmf_method=Model.NB_PATIENT,
                                              seed=r, **FAST))
        hits += res.chosen_k == 5
    assert hits >= 9
