from __future__ import annotations

import math

import numpy as np
import pytest

from contmeas.convergence import (
    COVARIANT_KEYS,
    Estimate,
    check_limit_scaling,
    compare_with_master,
    ensemble_average,
    estimate_cycle_moments,
    estimate_mean,
    fit_loglog,
    ito_targets,
    record_scaling,
    refine_record,
    translate,
    translation_check,
)
from contmeas.errors import InsufficientSamples, NonPositiveInput
from contmeas.lattice import GridSpec, ModelParams, gaussian_packet, moments
from contmeas.master import MomentFlow
from contmeas.records import EnsembleRun


@pytest.fixture
def chirped():
    return gaussian_packet(GridSpec(256, -12.0, 12.0), mean_q=0.2, var_q=0.5, cov_qp=0.3)


def test_estimate_mean():
    est = estimate_mean([1.0, 2.0, 3.0, 4.0])
    assert est.value == 2.5
    assert est.stderr == pytest.approx(math.sqrt(5.0 / 3.0 / 4.0))
    assert math.isnan(estimate_mean([1.0, math.nan]).value)
    assert math.isnan(estimate_mean([1.0]).stderr)


def test_z_score():
    assert Estimate(1.5, 0.5).z_score(1.0) == pytest.approx(1.0)
    assert Estimate(1.0, 0.0).z_score(1.0) == 0.0
    assert Estimate(2.0, 0.0).z_score(1.0) == math.inf


def test_ito_targets_closed_forms(chirped):
    model = ModelParams(mass=2.0, gamma=1.5)
    t = ito_targets(chirped, model)
    m = moments(chirped)
    assert t["second_dQ"] == pytest.approx(1.0 / 3.0)
    assert t["mean_dQ"] == pytest.approx(m.mean_q)
    assert t["drift:q"] == pytest.approx(m.mean_p / 2.0, abs=1e-10)
    assert t["drift:p2"] == pytest.approx(0.75, rel=1e-8)
    assert t["drift:q2"] == pytest.approx(2.0 * (m.cov_qp + m.mean_q * m.mean_p) / 2.0, rel=1e-8)
    assert t["cross:q"] == pytest.approx(m.var_q, rel=1e-8)
    assert t["tensor:q,q"] == pytest.approx(0.5 * 1.5 * (2 * m.var_q) ** 2, rel=1e-8)


def test_cycle_moments_near_ito_limit(chirped):
    est = estimate_cycle_moments(chirped, 1e-3, 1e-3, ModelParams(), 4000, seed=2)
    assert est.gamma == pytest.approx(1.0)
    for key in ("second_dQ", "mean_dQ", "cross:q", "drift:q2"):
        assert abs(est[key].z_score(est.targets[key])) < 4, key
    rows = est.table()
    assert {r["quantity"] for r in rows} == set(est.estimates)


def test_cycle_moments_reproducible_and_thread_independent(chirped):
    a = estimate_cycle_moments(chirped, 1e-2, 1e-2, ModelParams(), 600, seed=9, chunk_size=64)
    b = estimate_cycle_moments(chirped, 1e-2, 1e-2, ModelParams(), 600, seed=9, chunk_size=64, threads=4)
    assert a.estimates == b.estimates


def test_cycle_moments_need_two_samples(chirped):
    with pytest.raises(NonPositiveInput):
        estimate_cycle_moments(chirped, 1e-2, 1e-2, ModelParams(), 1, seed=0)


def test_translate_moves_the_state(chirped):
    moved = translate(chirped, 1.0)
    assert moments(moved).mean_q == pytest.approx(moments(chirped).mean_q + 1.0, abs=1e-10)
    assert moments(moved).var_q == pytest.approx(moments(chirped).var_q, abs=1e-10)


def test_translation_covariance(chirped):
    out = translation_check(chirped, 1e-2, 1e-2, ModelParams(), 2000, seed=4)
    assert set(out) == set(COVARIANT_KEYS)
    for key, row in out.items():
        assert row["stderr_units"] <= 1.0, key


def test_limit_scaling_rejects_bad_mesh(chirped):
    with pytest.raises(ValueError):
        check_limit_scaling(chirped, 1.0, [1e-3, 1e-2], ModelParams(), 100, seed=0)
    with pytest.raises(ValueError):
        check_limit_scaling(chirped, 1.0, [1e-2], ModelParams(), 100, seed=0)


def test_limit_scaling_requires_enough_samples(chirped):
    with pytest.raises(InsufficientSamples):
        check_limit_scaling(chirped, 1.0, [1e-2, 1e-3], ModelParams(), 50, seed=0)


def test_fit_loglog():
    x = np.array([1e-3, 1e-2, 1e-1])
    slope, intercept = fit_loglog(x, 3.0 * x**1.5)
    assert slope == pytest.approx(1.5)
    assert intercept == pytest.approx(math.log(3.0))


def _synthetic_run(m=400, seed=0):
    rng = np.random.default_rng(seed)
    q = rng.normal(0.0, 1.0, size=(m, 2))
    p = rng.normal(0.0, 1.0, size=(m, 2))
    panel = {"q": q, "p": p, "q2": q**2 + 0.5, "p2": p**2 + 0.5, "qp_sym": q * p}
    zeros = np.zeros((m, 2))
    return EnsembleRun(np.array([0.0, 1.0]), panel, zeros, zeros, zeros, np.ones((m, 2)))


def test_ensemble_average_mixture_moments():
    run = _synthetic_run()
    avg = ensemble_average(run)
    q = run.panel["q"]
    assert np.allclose(avg.mean["var_q"], (q**2 + 0.5).mean(axis=0) - q.mean(axis=0) ** 2)
    # var_q of the mixture is 1.5 here; the influence-function stderr is about sqrt(2/M)
    assert np.all(avg.stderr["var_q"] > 0.5 * math.sqrt(2 / 400))
    assert np.all(avg.stderr["var_q"] < 2.0 * math.sqrt(2 / 400))


def test_ensemble_average_needs_two():
    with pytest.raises(ValueError):
        ensemble_average(_synthetic_run(m=1))


def test_compare_with_master_rows():
    avg = ensemble_average(_synthetic_run())
    flow = MomentFlow(moments(gaussian_packet(GridSpec(64, -8.0, 8.0))), 0.0)
    rows = compare_with_master(avg, flow, ("var_q",))
    assert [r["t"] for r in rows] == [0.0, 1.0]
    for r in rows:
        assert r["z"] == pytest.approx((r["ensemble"] - r["target"]) / r["stderr"])


def test_record_scaling_on_brownian_records():
    gamma, dt, m, n = 2.0, 0.01, 300, 100
    rng = np.random.default_rng(5)
    steps = rng.normal(0.0, math.sqrt(dt / (2 * gamma)), size=(m, n))
    record = np.concatenate([np.zeros((m, 1)), np.cumsum(steps, axis=1)], axis=1)
    t = np.arange(n + 1) * dt
    rs = record_scaling(t, record, np.zeros_like(record), gamma, [0.01, 0.05, 0.2])
    assert np.allclose(rs.ratio, 1.0, atol=0.1)
    assert rs.slope == pytest.approx(1.0, abs=0.05)
    assert rs.n_records == m


def test_record_scaling_guards():
    t = np.linspace(0.0, 1.0, 11)
    rec = np.zeros((5, 11))
    with pytest.raises(InsufficientSamples):
        record_scaling(t, rec, rec, 1.0, [0.1])
    with pytest.raises(ValueError):
        record_scaling(t, rec, rec, 1.0, [0.15], min_records=2)
    with pytest.raises(NonPositiveInput):
        record_scaling(t, rec, rec, 0.0, [0.1], min_records=2)


def test_refine_record_interpolates():
    t = np.array([0.0, 1.0, 2.0])
    fine, rec, comp = refine_record(t, np.array([[0.0, 2.0, 0.0]]), np.array([[0.0, 1.0, 2.0]]), 4)
    assert len(fine) == 9
    assert rec[0, 2] == pytest.approx(1.0)
    assert comp[0, 6] == pytest.approx(1.5)


def test_compare_with_master_ignores_rounding_spread():
    grid = GridSpec(64, -8.0, 8.0)
    flow = MomentFlow(moments(gaussian_packet(grid)), 1.0)
    run = _synthetic_run(m=4)
    m0 = flow.initial
    run.panel["q"][:, 0] = 0.0
    run.panel["p"][:, 0] = 0.0
    run.panel["q2"][:, 0] = m0.var_q + np.array([0.0, 1e-17, -1e-17, 0.0])
    rows = compare_with_master(ensemble_average(run), flow, ("var_q",))
    assert rows[0]["z"] == 0.0
