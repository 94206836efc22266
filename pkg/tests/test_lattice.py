from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from contmeas.errors import BoundaryLeak, GridMismatch, NonPositiveInput
from contmeas.lattice import (
    DensityMatrix,
    GridSpec,
    ModelParams,
    WaveFunction,
    check_boundary,
    free_step,
    gaussian_packet,
    moments,
    normalize,
    overlap,
    purity,
    to_density,
    trace_distance,
)
from contmeas.master import MomentFlow, moment_flow


def test_grid_geometry():
    g = GridSpec(100, -5.0, 5.0)
    assert g.dq == pytest.approx(0.1)
    assert g.q[0] == -5.0 and g.q[-1] == pytest.approx(4.9)
    assert g.edge_width == 5
    assert g.edge_mask.sum() == 10
    assert g.p_max == pytest.approx(math.pi / 0.1)
    assert np.allclose(np.sort(g.p)[1] - np.sort(g.p)[0], g.dp)


@pytest.mark.parametrize("args", [(4, 0.0, 1.0), (16, 1.0, 1.0), (16.5, 0.0, 1.0)])
def test_grid_rejects_bad_input(args):
    with pytest.raises(NonPositiveInput):
        GridSpec(*args)


def test_model_params_validation():
    with pytest.raises(NonPositiveInput):
        ModelParams(mass=0.0)
    with pytest.raises(NonPositiveInput):
        ModelParams(gamma=-1.0)


def test_packet_moments(packet):
    m = moments(packet)
    assert packet.norm == pytest.approx(1.0, abs=1e-12)
    assert m.mean_q == pytest.approx(0.3, abs=1e-10)
    assert m.mean_p == pytest.approx(0.2, abs=1e-10)
    assert m.var_q == pytest.approx(0.5, abs=1e-10)
    assert m.cov_qp == pytest.approx(0.1, abs=1e-10)
    # pure Gaussian saturates the Robertson-Schroedinger bound
    assert m.uncertainty == pytest.approx(0.25, abs=1e-10)


def test_density_moments_match_wavefunction(packet):
    a = moments(packet).as_tuple()
    b = moments(to_density(packet)).as_tuple()
    assert np.allclose(a, b, atol=1e-10)


def test_free_step_matches_free_spreading(packet):
    model = ModelParams(mass=2.0, gamma=0.0)
    out = free_step(packet, 1.5, model)
    got = moments(out)
    want = moment_flow(MomentFlow(moments(packet), 0.0, 2.0), 1.5)
    assert np.allclose(got.as_tuple(), want.as_tuple(), atol=1e-9)
    assert out.norm == pytest.approx(1.0, abs=1e-12)


def test_free_step_is_reversible(packet, model):
    back = free_step(free_step(packet, 0.7, model), -0.7, model)
    assert abs(overlap(back, packet)) == pytest.approx(1.0, abs=1e-12)


def test_free_step_density_agrees(packet, model):
    rho = free_step(to_density(packet), 0.5, model)
    psi = free_step(packet, 0.5, model)
    assert trace_distance(rho, to_density(psi)) < 1e-10


def test_boundary_leak_detected():
    g = GridSpec(128, -5.0, 5.0)
    psi = gaussian_packet(g, mean_q=4.5, var_q=0.25)
    with pytest.raises(BoundaryLeak):
        moments(psi)
    with pytest.raises(BoundaryLeak):
        check_boundary(g, psi.probability)


def test_grid_mismatch(packet):
    other = gaussian_packet(GridSpec(64, -12.0, 12.0))
    with pytest.raises(GridMismatch):
        overlap(packet, other)
    with pytest.raises(GridMismatch):
        WaveFunction(packet.grid, np.ones(10))
    with pytest.raises(GridMismatch):
        DensityMatrix(packet.grid, np.eye(10))


def test_purity_and_trace_distance(packet):
    rho = to_density(packet)
    assert purity(rho) == pytest.approx(1.0, abs=1e-12)
    assert rho.trace == pytest.approx(1.0, abs=1e-12)
    assert trace_distance(rho, rho) == pytest.approx(0.0, abs=1e-12)
    other = gaussian_packet(packet.grid, mean_q=-1.0)
    far = to_density(other)
    # pure states: D = sqrt(1 - |<a|b>|^2)
    ov2 = abs(overlap(packet, other)) ** 2
    assert trace_distance(rho, far) == pytest.approx(math.sqrt(1.0 - ov2), abs=1e-10)
    mixed = DensityMatrix(packet.grid, 0.5 * (rho.entries + far.entries))
    assert purity(mixed) == pytest.approx(0.5 * (1.0 + ov2), abs=1e-10)


def test_normalize_scales_to_unit_norm(packet):
    doubled = WaveFunction(packet.grid, 3.0 * packet.amplitudes)
    assert normalize(doubled).norm == pytest.approx(1.0, abs=1e-12)


@settings(max_examples=25, deadline=None)
@given(
    mean_q=st.floats(-3.0, 3.0),
    mean_p=st.floats(-2.0, 2.0),
    var_q=st.floats(0.3, 2.0),
    cov=st.floats(-0.5, 0.5),
    dt=st.floats(-1.0, 1.0),
)
def test_free_flight_preserves_norm_and_follows_moment_flow(mean_q, mean_p, var_q, cov, dt):
    grid = GridSpec(256, -20.0, 20.0)
    psi = gaussian_packet(grid, mean_q, mean_p, var_q, cov)
    out = free_step(psi, dt, ModelParams())
    assert out.norm == pytest.approx(1.0, abs=1e-10)
    want = moment_flow(MomentFlow(moments(psi), 0.0), dt)
    assert np.allclose(moments(out).as_tuple(), want.as_tuple(), atol=1e-8)
