"""Repeated instantaneous Gaussian localization of a free particle.

One cycle of period ``delta_t``: exact free flight, then an outcome ``qbar``
drawn from

    P(qbar) = sqrt(alpha/pi) * integral |psi(q)|^2 exp(-alpha (q - qbar)^2) dq

and the state update ``psi -> exp(-alpha (q - qbar)^2 / 2) psi`` (renormalized).
The record accumulates ``Q += qbar * delta_t``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import ndtr

from .errors import BoundaryLeak, NonPositiveInput, SimulationError, ZeroState
from .lattice import (
    ZERO_NORM,
    DensityMatrix,
    GridSpec,
    ModelParams,
    WaveFunction,
    check_boundary,
    free_psi,
    free_step,
    psi_panel,
)
from .master import n_steps
from .noise import NoiseStream
from .parallel import map_chunks
from .records import EnsembleRun, TrajectoryRecord, assemble_ensemble

#: smeared-outcome mass allowed outside the inner grid band for grid sampling
OUTCOME_LEAK_TOL = 1e-6


@dataclass(frozen=True)
class DiscreteParams:
    """Measurement accuracy ``alpha`` (1/length^2) and cycle period ``delta_t``.

    ``alpha == 0`` switches the measurement off (pure free flight).
    """

    alpha: float
    delta_t: float

    def __post_init__(self):
        if not self.alpha >= 0:
            raise NonPositiveInput("alpha must be non-negative")
        if not self.delta_t > 0:
            raise NonPositiveInput("delta_t must be positive")

    @property
    def gamma(self) -> float:
        return self.alpha / self.delta_t

    @classmethod
    def from_gamma(cls, gamma: float, delta_t: float):
        return cls(alpha=gamma * delta_t, delta_t=delta_t)


@dataclass
class MeasurementRecord:
    """Outcome ``k`` is taken at ``times[k]``; ``accumulated`` has one more entry
    (Q at t = 0, delta_t, ..., K delta_t)."""

    times: np.ndarray
    outcomes: np.ndarray
    accumulated: np.ndarray

    def __post_init__(self):
        if not (len(self.times) == len(self.outcomes) == len(self.accumulated) - 1):
            raise ValueError("inconsistent measurement record lengths")


@dataclass
class OutcomeDistribution:
    points: np.ndarray
    density: np.ndarray
    dq: float

    @property
    def total(self) -> float:
        return float(np.sum(self.density) * self.dq)

    @property
    def mean(self) -> float:
        return float(np.sum(self.points * self.density) * self.dq / self.total)

    @property
    def variance(self) -> float:
        m = self.mean
        return float(np.sum((self.points - m) ** 2 * self.density) * self.dq / self.total)

    def cdf(self) -> np.ndarray:
        return _trapezoid_cdf(self.density, self.dq)


def _trapezoid_cdf(density: np.ndarray, dq: float) -> np.ndarray:
    steps = 0.5 * (density[..., 1:] + density[..., :-1]) * dq
    cdf = np.concatenate([np.zeros(density.shape[:-1] + (1,)), np.cumsum(steps, axis=-1)], axis=-1)
    return cdf / cdf[..., -1:]


def inverse_cdf(points: np.ndarray, density: np.ndarray, u: np.ndarray, dq: float) -> np.ndarray:
    """Invert the piecewise-linear CDF of ``density`` at uniforms ``u``.

    ``density`` holds one row per uniform, or a single row shared by all.
    """
    density = np.atleast_2d(density)
    u = np.atleast_1d(u)
    cdf = _trapezoid_cdf(density, dq)
    if cdf.shape[0] == 1:
        cdf = np.broadcast_to(cdf, (len(u), cdf.shape[1]))
    idx = np.clip(np.sum(cdf < u[:, None], axis=-1), 1, len(points) - 1)
    rows = np.arange(len(u))
    lo, hi = cdf[rows, idx - 1], cdf[rows, idx]
    width = hi - lo
    frac = np.where(width > 0, (u - lo) / np.where(width > 0, width, 1.0), 0.0)
    return points[idx - 1] + frac * dq


def smeared_edge_mass(grid: GridSpec, prob: np.ndarray, alpha: float) -> np.ndarray:
    """Mass of P(qbar) lying outside the inner band of the grid (exact, via erfc)."""
    prob = np.atleast_2d(prob)
    weights = prob / np.sum(prob, axis=-1, keepdims=True)
    lo, hi = grid.inner_bounds
    s = math.sqrt(2.0 * alpha)
    tail = ndtr(s * (lo - grid.q)) + ndtr(s * (grid.q - hi))
    return np.sum(weights * tail, axis=-1)


def outcome_distribution(psi: WaveFunction, alpha: float) -> OutcomeDistribution:
    """P(qbar) evaluated at the grid points."""
    if not alpha > 0:
        raise NonPositiveInput("alpha must be positive")
    grid = psi.grid
    prob = psi.probability
    leak = float(smeared_edge_mass(grid, prob, alpha)[0])
    if leak > OUTCOME_LEAK_TOL:
        raise BoundaryLeak(f"outcome distribution puts {leak:.3e} outside the inner grid band")
    prob = prob / (np.sum(prob) * grid.dq)
    q = grid.q
    kernel = np.exp(-alpha * (q[:, None] - q[None, :]) ** 2)
    density = math.sqrt(alpha / math.pi) * (kernel @ prob) * grid.dq
    return OutcomeDistribution(q.copy(), density, grid.dq)


def _sample_batch(grid, psi, alpha, u, z, method):
    """Outcomes for a batch of states.

    ``grid``: inverse CDF of P(qbar) on the grid.  ``compound``: a position drawn
    from |psi|^2 by inverse CDF plus Gaussian smearing of variance 1/(2 alpha),
    which samples the same law without the grid having to hold its tails.
    ``auto`` picks ``grid`` whenever the smeared law fits inside the grid.
    """
    prob = np.abs(psi) ** 2
    if method == "auto":
        use_grid = smeared_edge_mass(grid, prob, alpha) <= OUTCOME_LEAK_TOL
    elif method == "grid":
        leak = smeared_edge_mass(grid, prob, alpha)
        if np.any(leak > OUTCOME_LEAK_TOL):
            raise BoundaryLeak(f"outcome distribution puts {leak.max():.3e} outside the inner grid band")
        use_grid = np.ones(len(prob), dtype=bool)
    elif method == "compound":
        use_grid = np.zeros(len(prob), dtype=bool)
    else:
        raise ValueError(f"unknown sampling method {method!r}")
    out = np.empty(len(prob))
    if np.any(use_grid):
        q = grid.q
        kernel = np.exp(-alpha * (q[:, None] - q[None, :]) ** 2)
        dens = prob[use_grid] @ kernel
        out[use_grid] = inverse_cdf(q, dens, u[use_grid], grid.dq)
    if np.any(~use_grid):
        sel = ~use_grid
        x = inverse_cdf(grid.q, prob[sel], u[sel], grid.dq)
        out[sel] = x + z[sel] / math.sqrt(2.0 * alpha)
    return out


def sample_outcome(psi: WaveFunction, alpha: float, noise: NoiseStream, method: str = "auto") -> float:
    """Draw one continuous outcome qbar.  Consumes one uniform and one normal."""
    if not alpha > 0:
        raise NonPositiveInput("alpha must be positive")
    u = np.array([noise.uniform()])
    z = np.array([noise.normal()])
    return float(_sample_batch(psi.grid, psi.amplitudes[None, :], alpha, u, z, method)[0])


def localization_kernel(grid: GridSpec, alpha: float, qbar) -> np.ndarray:
    return np.exp(-0.5 * alpha * (grid.q - np.reshape(qbar, (-1, 1))) ** 2)


def apply_localization(state, alpha: float, qbar: float):
    """Gaussian reweighting around ``qbar``; returns ``(state', P(qbar))``."""
    grid = state.grid
    kern = localization_kernel(grid, alpha, qbar)[0]
    if isinstance(state, WaveFunction):
        new = kern * state.amplitudes
        norm2 = float(np.sum(np.abs(new) ** 2) * grid.dq)
        if math.sqrt(norm2) < ZERO_NORM:
            raise ZeroState(f"localization at qbar={qbar} annihilated the state")
        likelihood = math.sqrt(alpha / math.pi) * norm2 / (state.norm**2)
        return WaveFunction(grid, new / math.sqrt(norm2)), likelihood
    new = kern[:, None] * state.entries * kern[None, :]
    tr = float(np.real(np.trace(new)) * grid.dq)
    if tr < ZERO_NORM:
        raise ZeroState(f"localization at qbar={qbar} annihilated the state")
    likelihood = math.sqrt(alpha / math.pi) * tr / state.trace
    return DensityMatrix(grid, new / tr), likelihood


def run_cycle(psi: WaveFunction, params: DiscreteParams, model: ModelParams, noise: NoiseStream,
              method: str = "auto", outcome: float | None = None):
    """Free flight over ``delta_t``, then one localization.  Returns ``(psi', qbar)``.

    ``outcome`` injects a prescribed qbar instead of sampling one.  With
    ``alpha == 0`` nothing is measured: the state only flies freely and the
    reported qbar is the noiseless value <q>, so the record stays deterministic.
    """
    psi = free_step(psi, params.delta_t, model)
    if params.alpha == 0:
        return psi, float(np.sum(psi.grid.q * psi.probability) / np.sum(psi.probability))
    qbar = sample_outcome(psi, params.alpha, noise, method) if outcome is None else float(outcome)
    new, _ = apply_localization(psi, params.alpha, qbar)
    return new, qbar


def integrate_discrete_batch(grid: GridSpec, psi0: np.ndarray, u: np.ndarray, z: np.ndarray,
                             params: DiscreteParams, mass: float, stride: int = 1,
                             method: str = "auto", keep_density: bool = False) -> dict:
    """Run B discrete trajectories; ``u``/``z`` are (B, K) uniforms and normals."""
    u = np.atleast_2d(u)
    z = np.atleast_2d(z)
    b, k_steps = u.shape
    psi = np.array(np.broadcast_to(psi0, (b, grid.n_points)), dtype=complex)
    dt, alpha = params.delta_t, params.alpha
    n_rows = 1 + k_steps // stride
    panel = {name: np.empty((b, n_rows)) for name in ("q", "p", "q2", "p2", "qp_sym")}
    record = np.zeros((b, n_rows))
    comp = np.zeros((b, n_rows))
    last = np.full((b, n_rows), np.nan)
    outcomes = np.empty((b, k_steps))
    pre_means = np.empty((b, k_steps))
    rho_sum = np.zeros((n_rows, grid.n_points, grid.n_points), dtype=complex) if keep_density else None
    q_acc = np.zeros(b)
    c_acc = np.zeros(b)

    def sample(row):
        check_boundary(grid, np.abs(psi) ** 2)
        for name, val in psi_panel(grid, psi).items():
            panel[name][:, row] = val
        record[:, row] = q_acc
        comp[:, row] = c_acc
        if keep_density:
            unit = psi / np.sqrt(np.sum(np.abs(psi) ** 2, axis=-1) * grid.dq)[:, None]
            rho_sum[row] = unit.T @ unit.conj()

    sample(0)
    for k in range(k_steps):
        try:
            psi = free_psi(grid, psi, dt, mass)
            prob = np.abs(psi) ** 2
            mu = np.sum(grid.q * prob, axis=-1) / np.sum(prob, axis=-1)
            pre_means[:, k] = mu
            c_acc = c_acc + mu * dt
            if alpha > 0:
                qbar = _sample_batch(grid, psi, alpha, u[:, k], z[:, k], method)
                psi = localization_kernel(grid, alpha, qbar) * psi
                norm = np.sqrt(np.sum(np.abs(psi) ** 2, axis=-1) * grid.dq)
                if np.any(norm < ZERO_NORM):
                    raise ZeroState("localization annihilated the state")
                psi = psi / norm[:, None]
            else:
                qbar = mu
            outcomes[:, k] = qbar
            q_acc = q_acc + qbar * dt
            if (k + 1) % stride == 0:
                row = (k + 1) // stride
                last[:, row] = qbar
                sample(row)
        except SimulationError as exc:
            raise type(exc)(f"cycle {k + 1}: {exc}") from exc
    return {
        "t": np.arange(n_rows) * stride * dt,
        "panel": panel,
        "record": record,
        "mean_q_integral": comp,
        "increment": last,
        "purity": np.ones((b, n_rows)),
        "outcomes": outcomes,
        "pre_means": pre_means,
        "psi": psi,
        "rho_sum": rho_sum,
    }


def _variates(seed, index, k_steps):
    stream = NoiseStream(seed, index)
    return stream.uniform(k_steps), stream.normal(k_steps)


def run_discrete_trajectory(psi0: WaveFunction, params: DiscreteParams, model: ModelParams,
                            horizon: float, noise: NoiseStream, stride: int = 1, method: str = "auto"):
    """Iterate ``run_cycle``; returns ``(final_state, MeasurementRecord, TrajectoryRecord)``.

    The variates for cycle k are the k-th uniform and the k-th normal of
    ``noise``, so a stream reproduces the same run whether drawn in one block
    or cycle by cycle.
    """
    k_steps = n_steps(horizon, params.delta_t)
    grid = psi0.grid
    check_boundary(grid, psi0.probability)
    u = noise.uniform(k_steps)
    z = noise.normal(k_steps)
    out = integrate_discrete_batch(grid, psi0.amplitudes, u[None, :], z[None, :], params, model.mass,
                                   stride, method)
    times = (np.arange(k_steps) + 1) * params.delta_t
    outcomes = out["outcomes"][0]
    accumulated = np.concatenate([[0.0], np.cumsum(outcomes * params.delta_t)])
    meas = MeasurementRecord(times, outcomes, accumulated)
    meta = {"seed": noise.seed, "index": noise.index, "alpha": params.alpha, "delta_t": params.delta_t}
    rec = TrajectoryRecord.from_panel(out["t"], {k: v[0] for k, v in out["panel"].items()},
                                      out["purity"][0], out["record"][0], out["increment"][0],
                                      out["mean_q_integral"][0], meta)
    return WaveFunction(grid, out["psi"][0]), meas, rec


def run_discrete_ensemble(psi0: WaveFunction, params: DiscreteParams, model: ModelParams,
                          horizon: float, n_trajectories: int, seed: int, stride: int = 1,
                          method: str = "auto", chunk_size: int = 64, threads: int = 1,
                          keep_density: bool = False) -> EnsembleRun:
    """M discrete trajectories; trajectory i draws from NoiseStream(seed, i)."""
    k_steps = n_steps(horizon, params.delta_t)
    grid = psi0.grid
    check_boundary(grid, psi0.probability)

    def work(lo, hi):
        draws = [_variates(seed, i, k_steps) for i in range(lo, hi)]
        u = np.stack([d[0] for d in draws])
        z = np.stack([d[1] for d in draws])
        return integrate_discrete_batch(grid, psi0.amplitudes, u, z, params, model.mass, stride,
                                        method, keep_density)

    parts = map_chunks(work, n_trajectories, chunk_size, threads)
    return assemble_ensemble(parts, n_trajectories, keep_density,
                             {"seed": seed, "alpha": params.alpha, "delta_t": params.delta_t})


def momentum_kick(psi: WaveFunction, dp: float) -> WaveFunction:
    """Unitary momentum transfer exp(i dp q)."""
    return WaveFunction(psi.grid, np.exp(1j * dp * psi.grid.q) * psi.amplitudes)


def photon_params(wavenumber: float, intensity: float, cross_section: float) -> DiscreteParams:
    """Order-of-magnitude mapping alpha = k^2, delta_t = 1/(sigma I)."""
    for name, val in (("wavenumber", wavenumber), ("intensity", intensity),
                      ("cross_section", cross_section)):
        if not val > 0:
            raise NonPositiveInput(f"{name} must be positive, got {val}")
    return DiscreteParams(alpha=wavenumber**2, delta_t=1.0 / (cross_section * intensity))
