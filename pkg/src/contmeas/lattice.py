"""Uniform 1-D position grid, states on it, expectation values and free flight.

Conventions (hbar = 1):

* ``WaveFunction.amplitudes`` are sampled values psi(q_i); the norm is
  ``sum |psi_i|^2 dq``.
* ``DensityMatrix.entries`` are sampled kernels rho(q_i, q_j); the trace is
  ``sum rho_ii dq`` and the purity ``sum rho_ij rho_ji dq^2``.

Carrying the ``dq`` measure this way lets continuum formulas be written on the
grid unchanged.  The grid is periodic (spectral kinetic propagation), so every
operation that depends on the momentum representation checks that no
probability has reached the outer band of the grid.

Most array helpers accept batches: wave functions of shape ``(..., N)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from .errors import BoundaryLeak, GridMismatch, NonPositiveInput, ZeroState

#: fraction of grid points on *each* side that forms the guarded outer band
EDGE_FRACTION = 0.05
#: probability allowed in the outer band before spectral results are refused
LEAK_TOL = 1e-8
ZERO_NORM = 1e-14

PANEL = ("q", "p", "q2", "p2", "qp_sym")


@dataclass(frozen=True)
class GridSpec:
    n_points: int
    q_min: float
    q_max: float

    def __post_init__(self):
        if int(self.n_points) != self.n_points or self.n_points < 8:
            raise NonPositiveInput(f"n_points must be an integer >= 8, got {self.n_points}")
        if not self.q_max > self.q_min:
            raise NonPositiveInput("q_max must exceed q_min")

    @property
    def length(self) -> float:
        return self.q_max - self.q_min

    @property
    def dq(self) -> float:
        return self.length / self.n_points

    @property
    def dp(self) -> float:
        return 2.0 * math.pi / (self.n_points * self.dq)

    @cached_property
    def q(self) -> np.ndarray:
        # periodic grid: q_max itself is identified with q_min
        return self.q_min + self.dq * np.arange(self.n_points)

    @cached_property
    def p(self) -> np.ndarray:
        """Momentum grid in FFT order."""
        return 2.0 * math.pi * np.fft.fftfreq(self.n_points, d=self.dq)

    @property
    def p_max(self) -> float:
        return math.pi / self.dq

    @cached_property
    def edge_width(self) -> int:
        return max(1, math.ceil(EDGE_FRACTION * self.n_points))

    @cached_property
    def edge_mask(self) -> np.ndarray:
        mask = np.zeros(self.n_points, dtype=bool)
        mask[: self.edge_width] = True
        mask[-self.edge_width :] = True
        return mask

    @property
    def inner_bounds(self) -> tuple[float, float]:
        """Positions delimiting the unguarded interior of the grid."""
        w = self.edge_width
        return float(self.q[w]), float(self.q[-w - 1])


@dataclass(frozen=True)
class ModelParams:
    mass: float = 1.0
    gamma: float = 0.0

    def __post_init__(self):
        if not self.mass > 0:
            raise NonPositiveInput(f"mass must be positive, got {self.mass}")
        if not self.gamma >= 0:
            raise NonPositiveInput(f"gamma must be non-negative, got {self.gamma}")


@dataclass(frozen=True)
class Moments:
    mean_q: float
    mean_p: float
    var_q: float
    var_p: float
    cov_qp: float

    @property
    def uncertainty(self) -> float:
        """var_q * var_p - cov_qp**2 (>= 1/4 for any state)."""
        return self.var_q * self.var_p - self.cov_qp**2

    def as_tuple(self):
        return (self.mean_q, self.mean_p, self.var_q, self.var_p, self.cov_qp)


@dataclass(frozen=True, eq=False)
class WaveFunction:
    grid: GridSpec
    amplitudes: np.ndarray = field(repr=False)

    def __post_init__(self):
        amps = np.asarray(self.amplitudes, dtype=complex)
        if amps.shape != (self.grid.n_points,):
            raise GridMismatch(f"amplitudes shape {amps.shape} does not match grid")
        object.__setattr__(self, "amplitudes", amps)

    @property
    def norm(self) -> float:
        return math.sqrt(float(np.sum(np.abs(self.amplitudes) ** 2)) * self.grid.dq)

    @property
    def probability(self) -> np.ndarray:
        return np.abs(self.amplitudes) ** 2


@dataclass(frozen=True, eq=False)
class DensityMatrix:
    grid: GridSpec
    entries: np.ndarray = field(repr=False)

    def __post_init__(self):
        rho = np.asarray(self.entries, dtype=complex)
        n = self.grid.n_points
        if rho.shape != (n, n):
            raise GridMismatch(f"entries shape {rho.shape} does not match grid")
        object.__setattr__(self, "entries", rho)

    @property
    def trace(self) -> float:
        return float(np.real(np.trace(self.entries))) * self.grid.dq

    @property
    def probability(self) -> np.ndarray:
        return np.real(np.diagonal(self.entries)).copy()

    def eigenvalues(self) -> np.ndarray:
        """Spectrum of the operator (kernel times dq), ascending."""
        herm = 0.5 * (self.entries + self.entries.conj().T)
        return np.linalg.eigvalsh(herm * self.grid.dq)


# -- array helpers -----------------------------------------------------------


def edge_mass(grid: GridSpec, prob: np.ndarray) -> np.ndarray:
    """Probability carried by the outer band; ``prob`` is a density, shape (..., N)."""
    total = np.sum(prob, axis=-1)
    edge = np.sum(prob[..., grid.edge_mask], axis=-1)
    return edge / total


def check_boundary(grid: GridSpec, prob: np.ndarray, tol: float = LEAK_TOL) -> None:
    leak = np.max(edge_mass(grid, prob))
    if leak > tol:
        raise BoundaryLeak(
            f"{leak:.3e} of the probability lies in the outer {EDGE_FRACTION:.0%} band "
            f"of the grid [{grid.q_min}, {grid.q_max}]"
        )


def apply_p(grid: GridSpec, x: np.ndarray, power: int = 1, axis: int = -1) -> np.ndarray:
    """Apply p^power spectrally along ``axis``."""
    shape = [1] * x.ndim
    shape[axis] = grid.n_points
    factor = (grid.p**power).reshape(shape)
    return np.fft.ifft(factor * np.fft.fft(x, axis=axis), axis=axis)


def kinetic_phase(grid: GridSpec, dt: float, mass: float) -> np.ndarray:
    return np.exp(-0.5j * grid.p**2 * dt / mass)


def free_psi(grid: GridSpec, psi: np.ndarray, dt: float, mass: float) -> np.ndarray:
    """Exact free flight of (a batch of) wave functions along the last axis."""
    return np.fft.ifft(kinetic_phase(grid, dt, mass) * np.fft.fft(psi, axis=-1), axis=-1)


def free_rho(grid: GridSpec, rho: np.ndarray, dt: float, mass: float) -> np.ndarray:
    """U rho U^dagger with U the free propagator."""
    phase = kinetic_phase(grid, dt, mass)
    left = np.fft.ifft(phase[:, None] * np.fft.fft(rho, axis=0), axis=0)
    return np.fft.ifft(np.conj(phase)[None, :] * np.fft.fft(left, axis=1), axis=1)


def psi_norm2(grid: GridSpec, psi: np.ndarray) -> np.ndarray:
    return np.sum(np.abs(psi) ** 2, axis=-1) * grid.dq


def normalize_array(grid: GridSpec, psi: np.ndarray) -> np.ndarray:
    norm = np.sqrt(psi_norm2(grid, psi))
    if np.any(norm < ZERO_NORM):
        raise ZeroState(f"state norm {np.min(norm):.3e} is numerically zero")
    return psi / np.asarray(norm)[..., None]


def psi_panel(grid: GridSpec, psi: np.ndarray) -> dict[str, np.ndarray]:
    """Expectations of the operator panel {q, p, q^2, p^2, (qp+pq)/2}.

    Works on batches; values are divided by the norm so unnormalized input is
    allowed.
    """
    q = grid.q
    prob = np.abs(psi) ** 2
    norm = np.sum(prob, axis=-1)
    p_psi = apply_p(grid, psi)
    conj = np.conj(psi)
    return {
        "q": np.sum(q * prob, axis=-1) / norm,
        "q2": np.sum(q**2 * prob, axis=-1) / norm,
        "p": np.real(np.sum(conj * p_psi, axis=-1)) / norm,
        "p2": np.sum(np.abs(p_psi) ** 2, axis=-1) / norm,
        "qp_sym": np.real(np.sum(q * conj * p_psi, axis=-1)) / norm,
    }


def operator_panel(grid: GridSpec, mat: np.ndarray) -> dict[str, complex]:
    """tr(O X) for each panel operator O and a kernel matrix X (dq included).

    X need not be Hermitian or have unit trace: this is also used to project
    increments such as drift(rho).
    """
    q = grid.q
    dq = grid.dq
    diag = np.diagonal(mat)
    p_mat = apply_p(grid, mat, axis=0)
    p2_mat = apply_p(grid, mat, power=2, axis=0)
    qp = np.sum(q * np.diagonal(p_mat)) * dq
    # tr(p q X) = tr(q X p), with X p = (p X^dagger)^dagger
    x_p = apply_p(grid, mat.conj().T, axis=0).conj().T
    pq = np.sum(q * np.diagonal(x_p)) * dq
    return {
        "q": np.sum(q * diag) * dq,
        "q2": np.sum(q**2 * diag) * dq,
        "p": np.sum(np.diagonal(p_mat)) * dq,
        "p2": np.sum(np.diagonal(p2_mat)) * dq,
        "qp_sym": 0.5 * (qp + pq),
    }


def panel_to_moments(panel) -> Moments:
    mq, mp = float(np.real(panel["q"])), float(np.real(panel["p"]))
    return Moments(
        mean_q=mq,
        mean_p=mp,
        var_q=float(np.real(panel["q2"])) - mq**2,
        var_p=float(np.real(panel["p2"])) - mp**2,
        cov_qp=float(np.real(panel["qp_sym"])) - mq * mp,
    )


def gaussian_packet(grid: GridSpec, mean_q=0.0, mean_p=0.0, var_q=0.5, cov_qp=0.0) -> WaveFunction:
    """Minimum-uncertainty Gaussian with the requested first and second moments."""
    if not var_q > 0:
        raise NonPositiveInput("var_q must be positive")
    x = grid.q - mean_q
    chirp = cov_qp / (2.0 * var_q)
    amps = np.exp(-(x**2) / (4.0 * var_q) + 1j * (mean_p * x + chirp * x**2))
    return normalize(WaveFunction(grid, amps))


# -- public operations -------------------------------------------------------


def normalize(psi: WaveFunction) -> WaveFunction:
    return WaveFunction(psi.grid, normalize_array(psi.grid, psi.amplitudes))


def to_density(psi: WaveFunction) -> DensityMatrix:
    a = psi.amplitudes
    return DensityMatrix(psi.grid, np.outer(a, np.conj(a)))


def moments(state: WaveFunction | DensityMatrix) -> Moments:
    """First and second moments of q and p; p-moments are spectral."""
    grid = state.grid
    check_boundary(grid, state.probability)
    if isinstance(state, WaveFunction):
        return panel_to_moments(psi_panel(grid, state.amplitudes))
    panel = operator_panel(grid, state.entries)
    tr = state.trace
    return panel_to_moments({k: v / tr for k, v in panel.items()})


def purity(rho: DensityMatrix) -> float:
    mat = rho.entries
    return float(np.real(np.sum(mat * mat.T))) * rho.grid.dq**2


def free_step(state, dt: float, params: ModelParams):
    """Exact kinetic propagation by ``dt`` (any sign)."""
    grid = state.grid
    check_boundary(grid, state.probability)
    if isinstance(state, WaveFunction):
        return WaveFunction(grid, free_psi(grid, state.amplitudes, dt, params.mass))
    return DensityMatrix(grid, free_rho(grid, state.entries, dt, params.mass))


def overlap(a: WaveFunction, b: WaveFunction) -> complex:
    if a.grid != b.grid:
        raise GridMismatch("wave functions live on different grids")
    return complex(np.vdot(a.amplitudes, b.amplitudes) * a.grid.dq)


def trace_distance(a: DensityMatrix, b: DensityMatrix) -> float:
    if a.grid != b.grid:
        raise GridMismatch("density matrices live on different grids")
    diff = a.entries - b.entries
    diff = 0.5 * (diff + diff.conj().T) * a.grid.dq
    return 0.5 * float(np.sum(np.abs(np.linalg.eigvalsh(diff))))


def hermitize(mat: np.ndarray) -> np.ndarray:
    return 0.5 * (mat + mat.conj().T)
