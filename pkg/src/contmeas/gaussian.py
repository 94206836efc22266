"""Closed-form Gaussian pure states: an exact oracle for the grid code.

A state is ``psi(q) ∝ exp(-a q^2 / 2 + b q + c)`` with ``Re a > 0``.  Free
flight and Gaussian localization both map this family into itself:

* free flight over t:       a -> a / (1 + i a t/m),  b -> b / (1 + i a t/m)
* localization (alpha, qb): a -> a + alpha,          b -> b + alpha * qb

``c`` only carries normalization and global phase; it is never compared.
"""

from __future__ import annotations

import cmath
import math
from dataclasses import dataclass

import numpy as np

from .discrete import DiscreteParams, apply_localization
from .errors import DegenerateWidth, NonPositiveInput, UnderResolved
from .lattice import GridSpec, ModelParams, Moments, WaveFunction, free_psi, normalize_array, overlap
from .noise import NoiseStream

MIN_POINTS_PER_SIGMA = 16
SUPPORT_SIGMAS = 6.0


@dataclass(frozen=True)
class GaussianPureState:
    a: complex
    b: complex = 0.0
    c: complex = 0.0

    def __post_init__(self):
        if not complex(self.a).real > 0:
            raise NonPositiveInput(f"Re a must be positive, got a={self.a}")

    @classmethod
    def from_moments(cls, mean_q=0.0, mean_p=0.0, var_q=0.5, cov_qp=0.0):
        ar = 1.0 / (2.0 * var_q)
        ai = -cov_qp / var_q
        return cls(complex(ar, ai), complex(mean_q * ar, mean_p + ai * mean_q))

    @property
    def mean_q(self) -> float:
        return self.b.real / self.a.real

    @property
    def var_q(self) -> float:
        return 1.0 / (2.0 * self.a.real)

    @property
    def mean_p(self) -> float:
        return self.b.imag - self.a.imag * self.mean_q

    @property
    def var_p(self) -> float:
        return abs(self.a) ** 2 / (2.0 * self.a.real)

    @property
    def cov_qp(self) -> float:
        return -self.a.imag * self.var_q

    def moments(self) -> Moments:
        return Moments(self.mean_q, self.mean_p, self.var_q, self.var_p, self.cov_qp)


def localize_gaussian(g: GaussianPureState, alpha: float, qbar: float) -> GaussianPureState:
    return GaussianPureState(g.a + alpha, g.b + alpha * qbar, g.c)


def free_gaussian(g: GaussianPureState, dt: float, model: ModelParams) -> GaussianPureState:
    denom = 1.0 + 1j * g.a * dt / model.mass
    if abs(denom) < 1e-12:
        raise DegenerateWidth("free propagation through a focal point")
    # write the packet as exp(b^2/2a) exp(-a (q - b/a)^2 / 2) and spread it
    c = g.c + g.b**2 / (2.0 * g.a) * (1.0 - 1.0 / denom) - 0.5 * cmath.log(denom)
    return GaussianPureState(g.a / denom, g.b / denom, c)


def outcome_stats_gaussian(g: GaussianPureState, alpha: float) -> tuple[float, float]:
    """Mean and variance of the outcome law: (mean_q, var_q + 1/(2 alpha))."""
    if not alpha > 0:
        raise NonPositiveInput("alpha must be positive")
    return g.mean_q, g.var_q + 1.0 / (2.0 * alpha)


def to_wavefunction(g: GaussianPureState, grid: GridSpec) -> WaveFunction:
    """Render on the grid; refuses grids that do not resolve the state."""
    sigma_q = math.sqrt(g.var_q)
    sigma_p = math.sqrt(g.var_p)
    if sigma_q / grid.dq < MIN_POINTS_PER_SIGMA:
        raise UnderResolved(f"{sigma_q / grid.dq:.1f} grid points per standard deviation "
                            f"(need {MIN_POINTS_PER_SIGMA})")
    lo, hi = grid.inner_bounds
    if g.mean_q - SUPPORT_SIGMAS * sigma_q < lo or g.mean_q + SUPPORT_SIGMAS * sigma_q > hi:
        raise UnderResolved("state support extends into the outer grid band")
    if abs(g.mean_p) + SUPPORT_SIGMAS * sigma_p > 0.9 * grid.p_max:
        raise UnderResolved("momentum support exceeds the grid's Nyquist band")
    q = grid.q
    log_amp = -0.5 * g.a * q**2 + g.b * q + g.c
    log_amp = log_amp - np.max(log_amp.real)
    return WaveFunction(grid, normalize_array(grid, np.exp(log_amp)))


def sample_outcome_gaussian(g: GaussianPureState, alpha: float, noise: NoiseStream) -> float:
    """Exact draw from the Gaussian outcome law (consumes one normal)."""
    mean, var = outcome_stats_gaussian(g, alpha)
    return mean + math.sqrt(var) * noise.normal()


def shared_outcome_run(g0: GaussianPureState, grid: GridSpec, params: DiscreteParams,
                       model: ModelParams, n_cycles: int, noise: NoiseStream):
    """Run the discrete process in oracle space and on the grid with the same outcomes.

    Outcomes are drawn from the oracle's exact law and injected into the grid
    path, so the per-cycle defect ``|1 - |<oracle|grid>||`` measures grid error
    alone.  Returns ``(defects, outcomes, final_oracle_state)``.
    """
    g = g0
    psi = to_wavefunction(g0, grid)
    defects = np.empty(n_cycles)
    outcomes = np.empty(n_cycles)
    for k in range(n_cycles):
        g = free_gaussian(g, params.delta_t, model)
        psi = WaveFunction(grid, free_psi(grid, psi.amplitudes, params.delta_t, model.mass))
        qbar = sample_outcome_gaussian(g, params.alpha, noise)
        g = localize_gaussian(g, params.alpha, qbar)
        psi, _ = apply_localization(psi, params.alpha, qbar)
        defects[k] = abs(1.0 - abs(overlap(to_wavefunction(g, grid), psi)))
        outcomes[k] = qbar
    return defects, outcomes, g
