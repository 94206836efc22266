from __future__ import annotations

import math

import numpy as np
import pytest

from contmeas.errors import GammaZero, NonPositiveInput
from contmeas.lattice import GridSpec, ModelParams, gaussian_packet, moments, to_density, trace_distance
from contmeas.master import MomentFlow, master_rhs, moment_flow
from contmeas.noise import NoiseStream
from contmeas.sde import (
    SdeParams,
    UnravelingKind,
    diffusion,
    drift,
    integrate_rho,
    run_sde_ensemble,
    run_sde_trajectory,
    step_psi,
    step_rho,
    update_record,
)


def test_kind_parsing():
    assert UnravelingKind.parse("nonlinear").weights == (1.0, 0.0)
    assert UnravelingKind.parse("linear").weights == (0.0, 1.0)
    mixed = UnravelingKind.parse("mixed:0.5")
    assert mixed.weights == pytest.approx((math.cos(0.5), math.sin(0.5)))
    assert UnravelingKind.parse("mixed", beta=0.25).beta == 0.25
    assert mixed.label == "mixed:0.5"
    for bad in ("mixed", "linear:1", "quadratic"):
        with pytest.raises(ValueError):
            UnravelingKind.parse(bad)


def test_sde_params_validation():
    with pytest.raises(NonPositiveInput):
        SdeParams(dt=0.0, gamma=1.0)
    with pytest.raises(NonPositiveInput):
        SdeParams(dt=0.1, gamma=-1.0)


def test_noise_stream_block_equals_single_draws():
    a = NoiseStream(7, 3, gamma=2.0, dt=0.01)
    b = NoiseStream(7, 3, gamma=2.0, dt=0.01)
    block = a.increments(50)
    singles = np.array([b.next_increment() for _ in range(50)])
    assert np.array_equal(block, singles)
    assert a.position == b.position == 50
    assert a.scale == pytest.approx(0.1)


def test_noise_streams_are_distinct():
    x = NoiseStream(7, 0).increments(1000)
    y = NoiseStream(7, 1).increments(1000)
    z = NoiseStream(8, 0).increments(1000)
    assert abs(np.corrcoef(x, y)[0, 1]) < 0.15
    assert not np.array_equal(x, z)


def test_uniform_channel_does_not_shift_normals():
    a = NoiseStream(1)
    b = NoiseStream(1)
    a.uniform(10)
    assert a.normal() == b.normal()


def test_drift_is_master_rhs(packet):
    rho = to_density(packet)
    model = ModelParams(gamma=0.7)
    assert np.allclose(drift(rho, model), master_rhs(rho, model))


@pytest.mark.parametrize("kind", [UnravelingKind.nonlinear(), UnravelingKind.linear(), UnravelingKind.mixed(0.4)])
def test_diffusion_preserves_trace(packet, kind):
    rho = to_density(packet)
    d = diffusion(rho, kind)
    assert abs(np.trace(d)) * rho.grid.dq < 1e-12
    assert np.allclose(d, d.conj().T, atol=1e-12)


def test_off_center_diffusion_changes_trace(packet):
    rho = to_density(packet)
    mu = moments(packet).mean_q
    tr = np.real(np.trace(diffusion(rho, UnravelingKind.nonlinear(), center=mu - 0.4))) * rho.grid.dq
    assert tr == pytest.approx(0.8, rel=1e-10)


def test_step_psi_keeps_norm(packet, model):
    params = SdeParams(dt=1e-3, gamma=1.0)
    for kind in (UnravelingKind.nonlinear(), UnravelingKind.linear()):
        out = step_psi(packet, 0.03, params, model, kind)
        assert out.norm == pytest.approx(1.0, abs=1e-12)


def test_step_rho_keeps_trace_and_hermiticity(packet, model):
    rho = to_density(packet)
    out = step_rho(rho, -0.02, SdeParams(dt=1e-3, gamma=1.0), model, UnravelingKind.nonlinear())
    assert out.trace == pytest.approx(1.0, abs=1e-12)
    assert np.allclose(out.entries, out.entries.conj().T)


def test_update_record():
    params = SdeParams(dt=0.01, gamma=2.0)
    assert update_record(1.0, 0.5, 0.1, params) == pytest.approx(1.0 + 0.005 + 0.05)
    with pytest.raises(GammaZero):
        update_record(0.0, 0.0, 0.0, SdeParams(dt=0.01, gamma=0.0))


def test_rho_path_trace_drift_is_higher_order(packet, model):
    dxi = NoiseStream(4, 0, 1.0, 1e-3).increments(100)
    out = integrate_rho(packet.grid, to_density(packet).entries, dxi, 1e-3, 1.0, 1.0,
                        UnravelingKind.nonlinear())
    # before renormalization the step moves the trace by far less than dt^1.5
    assert np.max(np.abs(out["trace_drift"])) < 1e-10


def test_psi_and_rho_paths_agree_on_shared_noise():
    grid = GridSpec(64, -8.0, 8.0)
    psi = gaussian_packet(grid, mean_q=0.2, var_q=0.5)
    params = SdeParams(dt=1e-4, gamma=1.0)
    model = ModelParams(gamma=1.0)
    kind = UnravelingKind.nonlinear()
    psi_t, rec_psi = run_sde_trajectory(psi, params, model, kind, 0.1, NoiseStream(3, 0, 1.0, 1e-4))
    rho_t, rec_rho = run_sde_trajectory(to_density(psi), params, model, kind, 0.1, NoiseStream(3, 0, 1.0, 1e-4))
    assert trace_distance(to_density(psi_t), rho_t) <= 5e-3
    assert np.allclose(rec_psi.record, rec_rho.record, atol=1e-3)


def test_gamma_zero_trajectory_is_free_flight(packet):
    params = SdeParams(dt=1e-3, gamma=0.0)
    _, rec = run_sde_trajectory(packet, params, ModelParams(), UnravelingKind.nonlinear(), 0.05,
                                NoiseStream(0), stride=10)
    assert np.all(np.isnan(rec.record[1:]))
    assert np.allclose(rec.purity, 1.0)
    # explicit Euler on the kinetic term: free spreading up to O(dt)
    flow = MomentFlow(moments(packet), 0.0)
    want = np.array([moment_flow(flow, t).var_q for t in rec.t])
    assert np.allclose(rec.var_q, want, rtol=1e-3)
    assert np.allclose(rec.var_p, rec.var_p[0], rtol=1e-3)


def test_ensemble_independent_of_threads_and_chunks(packet, model):
    params = SdeParams(dt=1e-3, gamma=1.0)
    kind = UnravelingKind.nonlinear()
    runs = [run_sde_ensemble(packet, params, model, kind, 0.02, 10, seed=5, stride=5,
                             chunk_size=c, threads=t) for c, t in ((4, 1), (4, 3), (10, 1))]
    assert np.array_equal(runs[0].record, runs[1].record)
    assert np.array_equal(runs[0].panel["q2"], runs[1].panel["q2"])
    assert np.allclose(runs[0].record, runs[2].record, rtol=1e-12, atol=1e-14)
    # trajectory i only depends on NoiseStream(seed, i)
    _, single = run_sde_trajectory(packet, params, model, kind, 0.02, NoiseStream(5, 7, 1.0, 1e-3), stride=5)
    assert np.allclose(runs[0].trajectory(7).mean_q, single.mean_q, atol=1e-12)
