"""Ensemble-level evolution: the position-decoherence master equation

    d rho/dt = -i [p^2/2m, rho] - (gamma/4) [q, [q, rho]]

together with its closed second-moment solution and the coherence-decay
factor of the dissipator.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .lattice import (
    DensityMatrix,
    GridSpec,
    ModelParams,
    Moments,
    apply_p,
    check_boundary,
    hermitize,
)


def kinetic_commutator(grid: GridSpec, rho: np.ndarray, mass: float,
                       hermitian: bool = False) -> np.ndarray:
    """-i [p^2/2m, rho] for a kernel matrix.

    With ``hermitian`` set, rho H is taken as (H rho)^dagger (one transform pair
    instead of two).
    """
    h_rho = apply_p(grid, rho, power=2, axis=0) / (2.0 * mass)
    if hermitian:
        rho_h = h_rho.conj().T
    else:
        rho_h = apply_p(grid, rho.conj().T, power=2, axis=0).conj().T / (2.0 * mass)
    return -1j * (h_rho - rho_h)


def dissipator(grid: GridSpec, rho: np.ndarray, gamma: float) -> np.ndarray:
    """-(gamma/4) [q, [q, rho]]: multiplication by -(gamma/4)(q - q')^2."""
    q = grid.q
    return -0.25 * gamma * (q[:, None] - q[None, :]) ** 2 * rho


def master_rhs_array(grid, rho, mass, gamma, kinetic=True, hermitian=False):
    out = dissipator(grid, rho, gamma)
    if kinetic:
        out = out + kinetic_commutator(grid, rho, mass, hermitian)
    return out


def master_rhs(rho: DensityMatrix, model: ModelParams, kinetic: bool = True) -> np.ndarray:
    """Right-hand side of the master equation, as a kernel matrix (trace zero)."""
    check_boundary(rho.grid, rho.probability)
    return master_rhs_array(rho.grid, rho.entries, model.mass, model.gamma, kinetic)


def _rk4(grid, rho, dt, mass, gamma, kinetic):
    # RK4 stages are real combinations of Hermitian matrices, hence Hermitian
    f = lambda x: master_rhs_array(grid, x, mass, gamma, kinetic, hermitian=True)  # noqa: E731
    k1 = f(rho)
    k2 = f(rho + 0.5 * dt * k1)
    k3 = f(rho + 0.5 * dt * k2)
    k4 = f(rho + dt * k3)
    return rho + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def n_steps(horizon: float, dt: float) -> int:
    """Integer K with K*dt == horizon (to 1e-9 relative), else ValueError."""
    if not dt > 0:
        raise ValueError("time step must be positive")
    k = round(horizon / dt)
    if k < 0 or abs(k * dt - horizon) > 1e-9 * max(abs(horizon), dt):
        raise ValueError(f"horizon {horizon} is not an integer multiple of dt {dt}")
    return int(k)


def master_path(rho0: DensityMatrix, dt: float, horizon: float, model: ModelParams,
                stride: int = 1, kinetic: bool = True):
    """Yield ``(t, rho)`` every ``stride`` RK4 steps, including t=0 and the end."""
    grid = rho0.grid
    steps = n_steps(horizon, dt)
    rho = rho0.entries
    yield 0.0, rho0
    for k in range(1, steps + 1):
        rho = hermitize(_rk4(grid, rho, dt, model.mass, model.gamma, kinetic))
        if k % stride == 0 or k == steps:
            state = DensityMatrix(grid, rho)
            check_boundary(grid, state.probability)
            yield k * dt, state


def evolve_master(rho0: DensityMatrix, dt: float, horizon: float, model: ModelParams,
                  kinetic: bool = True) -> DensityMatrix:
    """Classical RK4 integration of the master equation up to ``horizon``."""
    state = rho0
    for _, state in master_path(rho0, dt, horizon, model, stride=max(1, n_steps(horizon, dt)),
                                kinetic=kinetic):
        pass
    return state


@dataclass(frozen=True)
class MomentFlow:
    initial: Moments
    gamma: float
    mass: float = 1.0


def moment_flow(flow: MomentFlow, t: float) -> Moments:
    """Closed-form moments under the master equation.

    The second-moment system closes:  d var_q = 2 cov/m,  d cov = var_p/m,
    d var_p = gamma/2  (the dissipator heats p at rate gamma/2 and leaves the
    q-moments alone).
    """
    m0, g, m = flow.initial, flow.gamma, flow.mass
    return Moments(
        mean_q=m0.mean_q + m0.mean_p * t / m,
        mean_p=m0.mean_p,
        var_q=m0.var_q + 2.0 * m0.cov_qp * t / m + m0.var_p * t**2 / m**2 + g * t**3 / (6.0 * m**2),
        var_p=m0.var_p + 0.5 * g * t,
        cov_qp=m0.cov_qp + m0.var_p * t / m + g * t**2 / (4.0 * m),
    )


def coherence_factor(separation: float, t: float, gamma: float) -> float:
    """Decay multiplier of rho(q, q') at |q - q'| = separation under the dissipator."""
    return math.exp(-0.25 * gamma * separation**2 * t)
