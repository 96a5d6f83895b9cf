"""Tests for the light-cone sampler against dense references."""

from __future__ import annotations

import numpy as np
import pytest

from spincone.errors import ResourceLimitError
from spincone.freefermion import central_sz_curve, up_first_for_central_down
from spincone.hilbert import basis_state, enumerate_sector, neel_bits, popcount
from spincone.lightcone import (
    Estimate,
    LightconeConfig,
    LightconeSampler,
    SiteOperator,
    braided_reference,
    exact_subchain_reference,
    prepare_half_states,
    rms_vs_time,
    run_sampling,
    split_hamiltonians,
    sz_center,
    union_sweep,
)
from spincone.models import assemble_dense, build_xxz


def test_config_validation():
    LightconeConfig(l=4, t_f=2.0, n_it=1)
    with pytest.raises(ValueError):
        LightconeConfig(l=5, t_f=2.0)
    with pytest.raises(ValueError):
        LightconeConfig(l=2, t_f=2.0)
    with pytest.raises(ValueError):
        LightconeConfig(l=4, t_f=2.0, dt=0.3)  # 1.0/0.3 not integral
    with pytest.raises(ValueError):
        LightconeConfig(l=4, t_f=2.0, observable=SiteOperator(3, np.eye(2)))
    with pytest.raises(ValueError):
        LightconeConfig(l=4, t_f=-1.0)


def test_times_grid():
    cfg = LightconeConfig(l=4, t_f=3.0, dt=0.25, n_it=1)
    assert cfg.n_times == 7
    assert np.allclose(cfg.times, [1.5, 1.75, 2.0, 2.25, 2.5, 2.75, 3.0])


def test_split_bond_counts():
    for l in (4, 6, 8):
        h = build_xxz(2 * l + 1, 0.5)
        s = split_hamiltonians(h, l)
        assert len(s.left.terms) == l - 1
        assert len(s.right.terms) == l - 1
        assert len(s.middle.terms) == l
        assert len(s.bridge.terms) == 2
        # middle minus bridge = the two inner-half corrections
        assert len(s.left_inner.terms) + len(s.right_inner.terms) == l - 2


def test_split_term_identity():
    # the middle-window terms not in the bridge are exactly the union of
    # the two inner-half corrections, mapped to subchain coordinates
    l = 6
    h = build_xxz(2 * l + 1, 0.7)
    s = split_hamiltonians(h, l)
    mid_off = l // 2  # middle window starts at subchain coordinate l/2
    middle = {(t.site_a + mid_off, t.site_b + mid_off) for t in s.middle.terms}
    bridge = {(t.site_a + l - 1, t.site_b + l - 1) for t in s.bridge.terms}
    left_inner = {(t.site_a, t.site_b) for t in s.left_inner.terms}
    right_inner = {
        (t.site_a + l + 1, t.site_b + l + 1) for t in s.right_inner.terms
    }
    assert middle - bridge == left_inner | right_inner


@pytest.mark.parametrize(
    "l,delta,t_f",
    [(4, 0.0, 2.0), (4, 1.0, 2.0), (4, 0.5, 1.0), (6, 1.0, 2.0)],
)
def test_exhaustive_identity_matches_braided_reference(l, delta, t_f):
    cfg = LightconeConfig(l=l, t_f=t_f, delta=delta, n_it=1)
    sampler = LightconeSampler(cfg)
    got = sampler.exhaustive()
    _, want = braided_reference(cfg)
    assert np.max(np.abs(got - want)) < 1e-10


def test_branch_weights_sum_to_one():
    cfg = LightconeConfig(l=6, t_f=2.0, delta=1.0, n_it=1)
    s = LightconeSampler(cfg)
    assert s.left.weights.sum() == pytest.approx(1.0, abs=1e-12)
    assert s.right.weights.sum() == pytest.approx(1.0, abs=1e-12)
    assert np.all(s.left.weights > 0)


def test_identity_observable_has_zero_spread():
    cfg = LightconeConfig(
        l=4, t_f=2.0, delta=1.0, n_it=25,
        observable=SiteOperator(0, np.eye(2)),
    )
    est = run_sampling(cfg)
    assert np.allclose(est.mean, 1.0, atol=1e-10)
    assert np.allclose(est.rms, 0.0, atol=1e-10)


def test_values_bounded_by_operator_norm():
    cfg = LightconeConfig(l=4, t_f=2.0, delta=1.0, n_it=40, seed=5)
    est = run_sampling(cfg)
    assert np.all(np.abs(est.mean) <= 0.5 + 1e-12)
    sampler = LightconeSampler(cfg)
    for i in range(len(sampler.left.weights)):
        for j in range(len(sampler.right.weights)):
            assert np.all(np.abs(sampler.pair_values(i, j)) <= 0.5 + 1e-12)


def test_sampling_mean_is_unbiased_over_200_seeds():
    # pooled over 200 independent seeds, the sample mean must fall
    # within 4 pooled standard errors of the exhaustive value at every
    # swept time
    cfg0 = LightconeConfig(l=4, t_f=2.0, delta=1.0, n_it=12)
    sampler = LightconeSampler(cfg0)
    target = sampler.exhaustive()
    all_values = []
    for seed in range(200):
        est = run_sampling(
            LightconeConfig(
                l=4, t_f=2.0, delta=1.0, n_it=12, seed=seed, collect_records=True
            )
        )
        all_values.append(est.values)
    pooled = np.concatenate(all_values, axis=0)
    mean = pooled.mean(axis=0)
    stderr = pooled.std(axis=0) / np.sqrt(pooled.shape[0])
    stderr = np.maximum(stderr, 1e-12)
    assert np.all(np.abs(mean - target) < 4 * stderr + 1e-9)


def test_determinism_same_seed():
    cfg = LightconeConfig(l=4, t_f=2.0, delta=0.5, n_it=30, seed=9)
    a = run_sampling(cfg)
    b = run_sampling(cfg)
    assert np.array_equal(a.mean, b.mean)
    assert np.array_equal(a.rms, b.rms)


def test_determinism_across_worker_counts():
    base = dict(l=4, t_f=2.0, delta=0.5, n_it=16, seed=3, collect_records=True)
    a = run_sampling(LightconeConfig(**base, workers=1))
    b = run_sampling(LightconeConfig(**base, workers=2))
    assert np.array_equal(a.mean, b.mean)
    assert a.records == b.records


def test_causality_rms_grows_from_tiny_with_t_f():
    # the sampled cuts sit at distance l/2 = 4 from the observed site;
    # their influence arrives near t = l/2, so early sweeps are nearly
    # deterministic and the spread grows steeply as t_f approaches it
    peaks = []
    for t_f in (1.0, 2.0, 3.0):
        est = run_sampling(LightconeConfig(l=8, t_f=t_f, delta=0.0, n_it=30, seed=1))
        peaks.append(np.max(est.rms))
    assert peaks[0] < 1e-5
    assert peaks[1] < 5e-3
    assert peaks[0] < peaks[1] < peaks[2]


def test_prepare_half_states_against_dense_oracle():
    import scipy.linalg

    l = 4
    h = build_xxz(2 * l + 1, 0.0)
    splits = split_hamiltonians(h, l)
    bits = neel_bits(2 * l + 1, False)
    left_bits = bits & ((1 << l) - 1)
    right_bits = bits >> (l + 1)
    psi_l = basis_state(enumerate_sector(l, popcount(left_bits)), left_bits)
    psi_r = basis_state(enumerate_sector(l, popcount(right_bits)), right_bits)

    # t_f = 0 must leave both states untouched
    lp0, rp0 = prepare_half_states(splits, psi_l, psi_r, 0.0)
    assert np.array_equal(lp0.amps, psi_l.amps)
    assert np.array_equal(rp0.amps, psi_r.amps)

    t_f = 1.5
    lp, rp = prepare_half_states(splits, psi_l, psi_r, t_f)
    for got, psi, block, inner in (
        (lp, psi_l, splits.left, splits.left_inner),
        (rp, psi_r, splits.right, splits.right_inner),
    ):
        u_fwd = scipy.linalg.expm(-0.5j * t_f * assemble_dense(block, psi.basis))
        u_back = scipy.linalg.expm(0.5j * t_f * assemble_dense(inner, psi.basis))
        want = u_back @ (u_fwd @ psi.amps)
        assert np.max(np.abs(got.amps - want)) < 1e-10
        assert got.norm() == pytest.approx(1.0, abs=1e-10)
        assert got.total_sz() == pytest.approx(psi.total_sz(), abs=1e-10)


def test_rms_vs_time_matches_run_and_single_sample_is_zero():
    cfg = LightconeConfig(l=4, t_f=2.0, delta=1.0, n_it=25, seed=11)
    times, rms = rms_vs_time(cfg)
    est = run_sampling(cfg)
    assert np.array_equal(times, est.times)
    assert np.array_equal(rms, est.rms)
    _, rms1 = rms_vs_time(LightconeConfig(l=4, t_f=2.0, delta=1.0, n_it=1, seed=11))
    assert np.array_equal(rms1, np.zeros_like(rms1))


def test_free_fermion_cross_check_small():
    cfg = LightconeConfig(l=8, t_f=4.0, delta=0.0, n_it=200, seed=2)
    est = run_sampling(cfg)
    up = up_first_for_central_down(101)
    assert up is False  # matches the sampler default orientation
    ff = central_sz_curve(101, est.times)
    err = np.abs(est.mean - ff)
    tol = 4.0 * np.maximum(est.stderr, 1e-4)
    assert np.all(err < tol)


def test_exact_subchain_matches_free_fermion_at_xy_point():
    # the full subchain evolved exactly is the same finite open chain the
    # fermion oracle describes, so the curves agree to solver precision
    times, values = exact_subchain_reference(l=6, model=None, t_f=3.0, delta=0.0)
    ff = central_sz_curve(13, times)
    assert np.max(np.abs(values - ff)) < 1e-9
    with pytest.raises(ResourceLimitError):
        exact_subchain_reference(l=12, model=None, t_f=1.0)


def test_braided_reference_approaches_exact_with_growing_l():
    # the braided evolution converges to the true dynamics inside the
    # cone as l grows; errors must shrink monotonically
    errs = []
    for l in (4, 6, 8):
        cfg = LightconeConfig(l=l, t_f=2.0, delta=1.0, n_it=1)
        t_b, braided = braided_reference(cfg)
        t_e, exact = exact_subchain_reference(l=l, model=None, t_f=2.0, delta=1.0)
        sel = np.isin(np.round(t_e, 9), np.round(t_b, 9))
        errs.append(np.max(np.abs(braided - exact[sel])))
    assert errs[0] > errs[1] > errs[2]
    assert errs[2] < 1e-3


def test_union_sweep_prefers_smallest_t_f():
    cfg = LightconeConfig(l=4, t_f=2.0, delta=0.0, n_it=10, seed=7)
    table, estimates = union_sweep(cfg, [1.0, 2.0])
    assert [e.metadata["t_f"] for e in estimates] == [1.0, 2.0]
    # t = 1.0 is covered by both; the t_f = 1 run must win
    k = np.flatnonzero(np.isclose(table["t"], 1.0))[0]
    assert table["t_f"][k] == 1.0
    assert np.isclose(table["t"].min(), 0.5)
    assert np.isclose(table["t"].max(), 2.0)


def test_off_center_and_non_diagonal_observables():
    sx = np.array([[0, 0.5], [0.5, 0]])
    cfg = LightconeConfig(
        l=4, t_f=2.0, delta=1.0, n_it=1, observable=SiteOperator(1, sx)
    )
    sampler = LightconeSampler(cfg)
    got = sampler.exhaustive()
    _, want = braided_reference(cfg)
    assert np.max(np.abs(got - want)) < 1e-10


def test_pair_cache_toggle_gives_identical_results():
    a = run_sampling(LightconeConfig(l=4, t_f=2.0, delta=1.0, n_it=25, seed=4))
    b = run_sampling(
        LightconeConfig(l=4, t_f=2.0, delta=1.0, n_it=25, seed=4, cache_pairs=False)
    )
    assert np.array_equal(a.mean, b.mean)
