"""Ito-limit stochastic integrators for continuous position measurement.

State-level equation (density-matrix form)::

    d rho = (-i[p^2/2m, rho] - gamma/4 [q,[q,rho]]) dt + B[rho] d xi
    dQ    = <q> dt + d xi / gamma,          d xi^2 = gamma dt / 2

with the diffusion term ``B`` chosen by the unraveling:

* nonlinear-position:   B = {q - <q>, rho}
* linear-momentum-kick: B = -i [q, rho]
* mixed(beta):          B = cos(beta) {q - <q>, rho} - i sin(beta) [q, rho]

The wave-function form integrates ``d psi = (-iH - gamma/4 S^dag S) psi dt
+ S psi d xi`` with ``S = cos(beta)(q - <q>) - i sin(beta) q``.  Both are
Euler-Maruyama schemes followed by renormalization.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import GammaZero, NonPositiveInput, SimulationError
from .lattice import (
    DensityMatrix,
    GridSpec,
    ModelParams,
    WaveFunction,
    apply_p,
    check_boundary,
    hermitize,
    normalize_array,
    operator_panel,
    psi_panel,
)
from .master import master_rhs, master_rhs_array, n_steps
from .noise import NoiseStream
from .parallel import map_chunks
from .records import EnsembleRun, TrajectoryRecord, assemble_ensemble


@dataclass(frozen=True)
class UnravelingKind:
    tag: str = "nonlinear"
    beta: float = 0.0

    def __post_init__(self):
        if self.tag not in ("nonlinear", "linear", "mixed"):
            raise ValueError(f"unknown unraveling {self.tag!r}")

    @classmethod
    def nonlinear(cls):
        return cls("nonlinear", 0.0)

    @classmethod
    def linear(cls):
        return cls("linear", math.pi / 2)

    @classmethod
    def mixed(cls, beta: float):
        return cls("mixed", float(beta))

    @classmethod
    def parse(cls, text: str, beta: float | None = None):
        """'nonlinear', 'linear', 'mixed' (with ``beta``) or 'mixed:<beta>'."""
        name, _, arg = text.partition(":")
        if name == "mixed":
            value = float(arg) if arg else beta
            if value is None:
                raise ValueError("mixed unraveling needs beta")
            return cls.mixed(value)
        if arg:
            raise ValueError(f"unraveling {name!r} takes no argument")
        return cls(name, math.pi / 2 if name == "linear" else 0.0)

    @property
    def weights(self) -> tuple[float, float]:
        """(cos beta, sin beta), exact for the two named kinds."""
        if self.tag == "nonlinear":
            return 1.0, 0.0
        if self.tag == "linear":
            return 0.0, 1.0
        return math.cos(self.beta), math.sin(self.beta)

    @property
    def label(self) -> str:
        return f"mixed:{self.beta!r}" if self.tag == "mixed" else self.tag


@dataclass(frozen=True)
class SdeParams:
    dt: float
    gamma: float
    renormalize: bool = True

    def __post_init__(self):
        if not self.dt > 0:
            raise NonPositiveInput("dt must be positive")
        if not self.gamma >= 0:
            raise NonPositiveInput("gamma must be non-negative")


def next_increment(stream: NoiseStream) -> float:
    return stream.next_increment()


# -- density-matrix level ----------------------------------------------------


def drift(rho: DensityMatrix, model: ModelParams) -> np.ndarray:
    """Deterministic part of the QSDE; identical to the master-equation RHS."""
    return master_rhs(rho, model)


def _mean_q_rho(grid: GridSpec, rho: np.ndarray) -> float:
    diag = np.real(np.diagonal(rho))
    return float(np.sum(grid.q * diag) / np.sum(diag))


def diffusion_array(grid, rho, kind: UnravelingKind, center=None):
    q = grid.q
    c, s = kind.weights
    out = np.zeros_like(rho)
    if c != 0.0:
        mu = _mean_q_rho(grid, rho) if center is None else center
        out = out + c * (q[:, None] + q[None, :] - 2.0 * mu) * rho
    if s != 0.0:
        out = out - 1j * s * (q[:, None] - q[None, :]) * rho
    return out


def diffusion(rho: DensityMatrix, kind: UnravelingKind, center: float | None = None) -> np.ndarray:
    """Coefficient of d xi.

    ``center`` replaces <q> in {q - center, rho}; the default (<q>) is the only
    choice that keeps the trace conserved.
    """
    check_boundary(rho.grid, rho.probability)
    return diffusion_array(rho.grid, rho.entries, kind, center)


def _rho_step(grid, rho, dxi, dt, gamma, mass, kind, renormalize, realized_qv=True):
    inc = master_rhs_array(grid, rho, mass, gamma, hermitian=True) * dt
    inc += diffusion_array(grid, rho, kind) * dxi
    if realized_qv:
        # S rho S^dag enters the drift through its mean gamma dt/2; use the realized
        # d xi^2 instead so that the step matches psi -> psi + dpsi to O(dt^1.5).
        # The trace part is removed so the correction never moves the trace.
        s = s_factor(grid, kind, _mean_q_rho(grid, rho))[0]
        srs = s[:, None] * rho * np.conj(s)[None, :]
        tr = np.real(np.trace(srs)) / np.real(np.trace(rho))
        inc += (dxi * dxi - 0.5 * gamma * dt) * (srs - tr * rho)
    out = hermitize(rho + inc)
    if renormalize:
        out = out / (np.real(np.trace(out)) * grid.dq)
    return out


def step_rho(rho: DensityMatrix, dxi: float, params: SdeParams, model: ModelParams,
             kind: UnravelingKind) -> DensityMatrix:
    check_boundary(rho.grid, rho.probability)
    return DensityMatrix(rho.grid, _rho_step(rho.grid, rho.entries, dxi, params.dt, params.gamma,
                                             model.mass, kind, params.renormalize))


# -- wave-function level -----------------------------------------------------


def s_factor(grid: GridSpec, kind: UnravelingKind, mean_q: np.ndarray) -> np.ndarray:
    """Diagonal of the jump-free noise operator S for a batch of mean positions."""
    c, s = kind.weights
    q = grid.q
    out = np.zeros((np.size(mean_q), grid.n_points), dtype=complex)
    if c != 0.0:
        out += c * (q[None, :] - np.reshape(mean_q, (-1, 1)))
    if s != 0.0:
        out += -1j * s * q[None, :]
    return out


def _psi_step(grid, psi, mean_q, dxi, dt, gamma, mass, kind, renormalize):
    s = s_factor(grid, kind, mean_q)
    h_psi = apply_p(grid, psi, power=2) / (2.0 * mass)
    dpsi = (-1j * h_psi - 0.25 * gamma * (np.abs(s) ** 2) * psi) * dt + s * psi * np.reshape(dxi, (-1, 1))
    out = psi + dpsi
    return normalize_array(grid, out) if renormalize else out


def _mean_q_psi(grid, psi):
    prob = np.abs(psi) ** 2
    return np.sum(grid.q * prob, axis=-1) / np.sum(prob, axis=-1)


def step_psi(psi: WaveFunction, dxi: float, params: SdeParams, model: ModelParams,
             kind: UnravelingKind) -> WaveFunction:
    grid = psi.grid
    check_boundary(grid, psi.probability)
    amps = psi.amplitudes[None, :]
    out = _psi_step(grid, amps, _mean_q_psi(grid, amps), dxi, params.dt, params.gamma, model.mass,
                    kind, params.renormalize)
    return WaveFunction(grid, out[0])


def update_record(record: float, mean_q: float, dxi: float, params: SdeParams) -> float:
    """Q' = Q + <q> dt + d xi / gamma."""
    if params.gamma == 0:
        raise GammaZero("the measured-coordinate record is undefined for gamma = 0")
    return record + mean_q * params.dt + dxi / params.gamma


# -- trajectories --------------------------------------------------------------


def _with_step(exc: SimulationError, k: int):
    return type(exc)(f"step {k}: {exc}")


def integrate_psi_batch(grid: GridSpec, psi0: np.ndarray, dxi: np.ndarray, dt: float, gamma: float,
                        mass: float, kind: UnravelingKind, stride: int = 1, renormalize: bool = True,
                        keep_density: bool = False) -> dict:
    """Integrate B wave functions driven by increments ``dxi`` of shape (B, K).

    Returns arrays sampled every ``stride`` steps (R = 1 + K // stride rows):
    panel expectations (B, R), record, compensator, last increment, purity,
    final amplitudes and, optionally, the summed kernel sum_b psi_b psi_b^dagger
    per row.
    """
    dxi = np.atleast_2d(dxi)
    b, k_steps = dxi.shape
    psi = np.array(np.broadcast_to(psi0, (b, grid.n_points)), dtype=complex)
    n_rows = 1 + k_steps // stride
    panel = {name: np.empty((b, n_rows)) for name in ("q", "p", "q2", "p2", "qp_sym")}
    record = np.zeros((b, n_rows))
    comp = np.zeros((b, n_rows))
    last = np.full((b, n_rows), np.nan)
    purity = np.empty((b, n_rows))
    rho_sum = np.zeros((n_rows, grid.n_points, grid.n_points), dtype=complex) if keep_density else None
    q_acc = np.zeros(b)
    c_acc = np.zeros(b)

    def sample(row):
        check_boundary(grid, np.abs(psi) ** 2)
        for name, val in psi_panel(grid, psi).items():
            panel[name][:, row] = val
        norm2 = np.sum(np.abs(psi) ** 2, axis=-1) * grid.dq
        # psi psi^dagger / |psi|^2 is a projector
        purity[:, row] = 1.0
        record[:, row] = q_acc
        comp[:, row] = c_acc
        if keep_density:
            unit = psi / np.sqrt(norm2)[:, None]
            rho_sum[row] = unit.T @ unit.conj()

    sample(0)
    for k in range(k_steps):
        mu = _mean_q_psi(grid, psi)
        inc = dxi[:, k]
        if gamma > 0:
            q_acc = q_acc + mu * dt + inc / gamma
        else:
            q_acc = q_acc + np.nan
        c_acc = c_acc + mu * dt
        try:
            psi = _psi_step(grid, psi, mu, inc, dt, gamma, mass, kind, renormalize)
            if (k + 1) % stride == 0:
                row = (k + 1) // stride
                last[:, row] = inc
                sample(row)
        except SimulationError as exc:
            raise _with_step(exc, k + 1) from exc
    return {
        "t": np.arange(n_rows) * stride * dt,
        "panel": panel,
        "record": record,
        "mean_q_integral": comp,
        "increment": last,
        "purity": purity,
        "psi": psi,
        "rho_sum": rho_sum,
    }


def integrate_rho(grid: GridSpec, rho0: np.ndarray, dxi: np.ndarray, dt: float, gamma: float,
                  mass: float, kind: UnravelingKind, stride: int = 1, renormalize: bool = True) -> dict:
    """Density-matrix Euler-Maruyama path for one noise sequence of length K."""
    dxi = np.asarray(dxi, dtype=float)
    k_steps = dxi.size
    n_rows = 1 + k_steps // stride
    rho = np.array(rho0, dtype=complex)
    panel = {name: np.empty(n_rows) for name in ("q", "p", "q2", "p2", "qp_sym")}
    record = np.zeros(n_rows)
    comp = np.zeros(n_rows)
    last = np.full(n_rows, np.nan)
    purity = np.empty(n_rows)
    trace_drift = np.zeros(n_rows)
    q_acc = 0.0
    c_acc = 0.0

    def sample(row):
        check_boundary(grid, np.real(np.diagonal(rho)))
        tr = np.real(np.trace(rho)) * grid.dq
        for name, val in operator_panel(grid, rho).items():
            panel[name][row] = np.real(val) / tr
        purity[row] = np.real(np.sum(rho * rho.T)) * grid.dq**2 / tr**2
        record[row] = q_acc
        comp[row] = c_acc

    sample(0)
    for k in range(k_steps):
        mu = _mean_q_rho(grid, rho)
        inc = dxi[k]
        q_acc = q_acc + mu * dt + inc / gamma if gamma > 0 else math.nan
        c_acc = c_acc + mu * dt
        try:
            raw = _rho_step(grid, rho, inc, dt, gamma, mass, kind, renormalize=False)
            tr_raw = np.real(np.trace(raw)) * grid.dq
            rho = raw / tr_raw if renormalize else raw
            if (k + 1) % stride == 0:
                row = (k + 1) // stride
                last[row] = inc
                trace_drift[row] = tr_raw - 1.0
                sample(row)
        except SimulationError as exc:
            raise _with_step(exc, k + 1) from exc
    return {
        "t": np.arange(n_rows) * stride * dt,
        "panel": panel,
        "record": record,
        "mean_q_integral": comp,
        "increment": last,
        "purity": purity,
        "trace_drift": trace_drift,
        "rho": rho,
    }


def run_sde_trajectory(state0, params: SdeParams, model: ModelParams, kind: UnravelingKind,
                       horizon: float, noise: NoiseStream, stride: int = 1):
    """Integrate one realization; a WaveFunction runs the psi-path, a DensityMatrix the rho-path.

    Returns ``(final_state, TrajectoryRecord)``.  The record column is NaN when
    gamma == 0 (no measurement).
    """
    steps = n_steps(horizon, params.dt)
    dxi = noise.increments(steps) if params.gamma > 0 else np.zeros(steps)
    grid = state0.grid
    meta = {"kind": kind.label, "seed": noise.seed, "index": noise.index}
    if isinstance(state0, WaveFunction):
        out = integrate_psi_batch(grid, state0.amplitudes[None, :], dxi[None, :], params.dt,
                                  params.gamma, model.mass, kind, stride, params.renormalize)
        final = WaveFunction(grid, out["psi"][0])
        rec = TrajectoryRecord.from_panel(out["t"], {k: v[0] for k, v in out["panel"].items()},
                                          out["purity"][0], out["record"][0], out["increment"][0],
                                          out["mean_q_integral"][0], meta)
        return final, rec
    out = integrate_rho(grid, state0.entries, dxi, params.dt, params.gamma, model.mass, kind,
                        stride, params.renormalize)
    rec = TrajectoryRecord.from_panel(out["t"], out["panel"], out["purity"], out["record"],
                                      out["increment"], out["mean_q_integral"], meta)
    return DensityMatrix(grid, out["rho"]), rec


def run_sde_ensemble(psi0: WaveFunction, params: SdeParams, model: ModelParams, kind: UnravelingKind,
                     horizon: float, n_trajectories: int, seed: int, stride: int = 1,
                     chunk_size: int = 64, threads: int = 1, keep_density: bool = False) -> EnsembleRun:
    """M wave-function trajectories; trajectory i is driven by NoiseStream(seed, i)."""
    steps = n_steps(horizon, params.dt)
    grid = psi0.grid
    check_boundary(grid, psi0.probability)

    def work(lo, hi):
        if params.gamma > 0:
            dxi = np.stack([NoiseStream(seed, i, params.gamma, params.dt).increments(steps)
                            for i in range(lo, hi)])
        else:
            dxi = np.zeros((hi - lo, steps))
        return integrate_psi_batch(grid, psi0.amplitudes, dxi, params.dt, params.gamma, model.mass,
                                   kind, stride, params.renormalize, keep_density)

    parts = map_chunks(work, n_trajectories, chunk_size, threads)
    return assemble_ensemble(parts, n_trajectories, keep_density,
                     {"kind": kind.label, "seed": seed, "dt": params.dt, "gamma": params.gamma})
