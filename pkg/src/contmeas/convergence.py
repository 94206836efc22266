"""Statistical checks that the discrete process approaches its Ito limit.

The one-cycle estimators run many independent single cycles (free flight over
``delta_t`` followed by one localization) from the same initial state and
average functionals of the increments

    dQ = qbar * delta_t,        d<O> = <O>_after - <O>_before

over the panel operators O in {q, p, q^2, p^2, (qp+pq)/2}.  Each estimate is
divided by ``delta_t`` and compared with what the Ito equations predict for
the same state:

* first moment of dQ        -> <q>
* second moment of dQ       -> 1 / (2 gamma)
* drift  <d<O>>             -> tr(O L[rho]),  L the master-equation generator
* cross  <dQ d<O>>          -> tr(O {q - <q>, rho}) / 2
* tensor <d<O> d<O'>>       -> gamma/2 tr(O D) tr(O' D),  D = {q - <q>, rho}
* third and fourth moments  -> 0

Every mesh of a scaling study reuses the same uniforms and normals (common
random numbers), so differences between meshes are not masked by sampling
noise.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from itertools import combinations_with_replacement

import numpy as np

from .discrete import DiscreteParams, _sample_batch, localization_kernel
from .errors import InsufficientSamples, NonPositiveInput
from .lattice import (
    PANEL,
    DensityMatrix,
    GridSpec,
    ModelParams,
    WaveFunction,
    check_boundary,
    free_psi,
    normalize_array,
    operator_panel,
    psi_panel,
    to_density,
)
from .master import MomentFlow, master_rhs_array, moment_flow
from .noise import NoiseStream
from .parallel import map_chunks
from .records import EnsembleRun

PAIRS = tuple(combinations_with_replacement(PANEL, 2))
RECORD_KEYS = ("mean_dQ", "second_dQ", "mean_dQc", "second_dQc", "third_dQ", "fourth_dQ")
# relative size below which a standard error is numerical noise
ROUNDING = 1e-10
COVARIANT_KEYS = ("mean_dQc", "second_dQc", "cross:q", "cross:p", "drift:p", "drift:p2", "tensor:q,q")


@dataclass(frozen=True)
class Estimate:
    value: float
    stderr: float

    def z_score(self, target: float) -> float:
        diff = self.value - target
        if self.stderr == 0:
            return 0.0 if diff == 0 else math.copysign(math.inf, diff)
        return diff / self.stderr


def estimate_mean(x) -> Estimate:
    """Sample mean (exactly rounded sum) and its standard error."""
    x = np.asarray(x, dtype=float).ravel()
    n = x.size
    if n == 0 or not np.all(np.isfinite(x)):
        return Estimate(math.nan, math.nan)
    mean = math.fsum(x) / n
    if n < 2:
        return Estimate(mean, math.nan)
    var = math.fsum((x - mean) ** 2) / (n - 1)
    return Estimate(mean, math.sqrt(var / n))


@dataclass
class CycleMomentEstimate:
    """Per-cycle moment estimates (already divided by delta_t)."""

    alpha: float
    delta_t: float
    gamma: float
    n_samples: int
    estimates: dict[str, Estimate]
    targets: dict[str, float] = field(default_factory=dict)

    def __getitem__(self, key: str) -> Estimate:
        return self.estimates[key]

    def table(self) -> list[dict]:
        rows = []
        for key, est in self.estimates.items():
            target = self.targets.get(key, math.nan)
            rows.append({"quantity": key, "estimate": est.value, "stderr": est.stderr,
                         "target": target, "z": est.z_score(target) if math.isfinite(target) else math.nan})
        return rows


def ito_targets(psi: WaveFunction, model: ModelParams) -> dict[str, float]:
    """Ito-limit values of every estimated quantity for the state ``psi``."""
    grid = psi.grid
    rho = to_density(psi).entries
    q = grid.q
    mu = float(np.sum(q * psi.probability) * grid.dq)
    gamma = model.gamma
    drift = operator_panel(grid, master_rhs_array(grid, rho, model.mass, gamma, hermitian=True))
    shifted = q - mu
    anti = shifted[:, None] * rho + rho * shifted[None, :]
    d_proj = {k: float(np.real(v)) for k, v in operator_panel(grid, anti).items()}
    record = gamma > 0
    targets = {
        "mean_dQ": mu if record else math.nan,
        "second_dQ": 1.0 / (2.0 * gamma) if record else math.nan,
        "mean_dQc": 0.0 if record else math.nan,
        "second_dQc": 1.0 / (2.0 * gamma) if record else math.nan,
        "third_dQ": 0.0 if record else math.nan,
        "fourth_dQ": 0.0 if record else math.nan,
        "third:q": 0.0,
    }
    for name in PANEL:
        targets[f"drift:{name}"] = float(np.real(drift[name]))
        targets[f"cross:{name}"] = 0.5 * d_proj[name] if record else math.nan
    for a, b in PAIRS:
        targets[f"tensor:{a},{b}"] = 0.5 * gamma * d_proj[a] * d_proj[b]
    return targets


def _cycle_chunk(grid, psi_f, panel0, alpha, u, z, method):
    b = len(u)
    if alpha > 0:
        batch = np.broadcast_to(psi_f, (b, grid.n_points))
        qbar = _sample_batch(grid, batch, alpha, u, z, method)
        after = normalize_array(grid, localization_kernel(grid, alpha, qbar) * psi_f[None, :])
        panel = psi_panel(grid, after)
    else:
        qbar = np.full(b, float(np.sum(grid.q * np.abs(psi_f) ** 2) / np.sum(np.abs(psi_f) ** 2)))
        panel = {k: np.full(b, v) for k, v in psi_panel(grid, psi_f[None, :]).items()}
    return {"qbar": qbar, **{k: panel[k] - panel0[k] for k in PANEL}}


def cycle_samples(psi: WaveFunction, params: DiscreteParams, model: ModelParams, n_samples: int,
                  seed: int, method: str = "auto", chunk_size: int = 2048, threads: int = 1) -> dict:
    """Raw per-sample increments of ``n_samples`` independent single cycles.

    Sample i uses the i-th uniform and the i-th normal of NoiseStream(seed), so
    runs at different ``delta_t`` share their random numbers.
    """
    grid = psi.grid
    check_boundary(grid, psi.probability)
    stream = NoiseStream(seed, 0)
    u = stream.uniform(n_samples)
    z = stream.normal(n_samples)
    panel0 = {k: float(v[0]) for k, v in psi_panel(grid, psi.amplitudes[None, :]).items()}
    psi_f = free_psi(grid, psi.amplitudes, params.delta_t, model.mass)
    check_boundary(grid, np.abs(psi_f) ** 2)
    parts = map_chunks(
        lambda lo, hi: _cycle_chunk(grid, psi_f, panel0, params.alpha, u[lo:hi], z[lo:hi], method),
        n_samples, chunk_size, threads)
    out = {k: np.concatenate([p[k] for p in parts]) for k in parts[0]}
    out["dQ"] = out.pop("qbar") * params.delta_t
    out["mean_q0"] = panel0["q"]
    return out


def estimate_cycle_moments(psi: WaveFunction, alpha: float, delta_t: float, model: ModelParams,
                           n_samples: int, seed: int, method: str = "auto", chunk_size: int = 2048,
                           threads: int = 1) -> CycleMomentEstimate:
    """Monte-Carlo one-cycle moments from ``n_samples`` single cycles.

    ``model.gamma`` is ignored in favour of ``alpha / delta_t``.
    """
    if n_samples < 2:
        raise NonPositiveInput("need at least two samples")
    params = DiscreteParams(alpha, delta_t)
    s = cycle_samples(psi, params, model, n_samples, seed, method, chunk_size, threads)
    dq, dt = s["dQ"], delta_t
    dqc = dq - s["mean_q0"] * dt
    est = {
        "mean_dQ": estimate_mean(dq / dt),
        "second_dQ": estimate_mean(dq**2 / dt),
        "mean_dQc": estimate_mean(dqc / dt),
        "second_dQc": estimate_mean(dqc**2 / dt),
        "third_dQ": estimate_mean(dqc**3 / dt),
        "fourth_dQ": estimate_mean(dqc**4 / dt),
        "third:q": estimate_mean(s["q"] ** 3 / dt),
    }
    for name in PANEL:
        est[f"drift:{name}"] = estimate_mean(s[name] / dt)
        est[f"cross:{name}"] = estimate_mean(dq * s[name] / dt)
    for a, b in PAIRS:
        est[f"tensor:{a},{b}"] = estimate_mean(s[a] * s[b] / dt)
    gamma = alpha / delta_t
    targets = ito_targets(psi, ModelParams(mass=model.mass, gamma=gamma))
    return CycleMomentEstimate(alpha, delta_t, gamma, n_samples, est, targets)


def translate(psi: WaveFunction, shift: float) -> WaveFunction:
    """psi(q - shift), exact for band-limited states (spectral phase)."""
    grid = psi.grid
    amps = np.fft.ifft(np.exp(-1j * grid.p * shift) * np.fft.fft(psi.amplitudes))
    return WaveFunction(grid, amps)


def translation_check(psi: WaveFunction, alpha: float, delta_t: float, model: ModelParams,
                      n_samples: int, seed: int, shift: float = 1.0, keys=COVARIANT_KEYS) -> dict:
    """Rerun the estimator on the state shifted by ``shift`` with the same random numbers.

    Returns, per translation-covariant quantity, the absolute difference and
    that difference in units of the unshifted standard error.
    """
    base = estimate_cycle_moments(psi, alpha, delta_t, model, n_samples, seed)
    moved = estimate_cycle_moments(translate(psi, shift), alpha, delta_t, model, n_samples, seed)
    out = {}
    for key in keys:
        diff = abs(moved[key].value - base[key].value)
        se = base[key].stderr
        out[key] = {"diff": diff, "stderr_units": diff / se if se > 0 else (0.0 if diff == 0 else math.inf)}
    return out


# -- mesh refinement -----------------------------------------------------------


@dataclass(frozen=True)
class ScalingRow:
    delta_t: float
    estimate: float
    target: float
    error: float
    stderr: float


@dataclass
class ScalingReport:
    quantity: str
    gamma: float
    rows: list[ScalingRow]
    slope: float
    estimates: list[CycleMomentEstimate] = field(default_factory=list)

    def monotone_within_stderr(self) -> bool:
        """|error| never grows by more than one standard error on refinement."""
        return all(abs(b.error) <= abs(a.error) + b.stderr for a, b in zip(self.rows, self.rows[1:]))

    @property
    def finest(self) -> ScalingRow:
        return self.rows[-1]


def fit_loglog(x, y) -> tuple[float, float]:
    """Least-squares slope and intercept of log(y) against log(x)."""
    lx, ly = np.log(np.asarray(x, dtype=float)), np.log(np.asarray(y, dtype=float))
    slope, intercept = np.polyfit(lx, ly, 1)
    return float(slope), float(intercept)


def check_limit_scaling(psi: WaveFunction, gamma: float, delta_ts, model: ModelParams, n_samples: int,
                        seed: int, quantity: str = "second_dQ", tolerance: float = 0.05,
                        method: str = "auto", chunk_size: int = 2048, threads: int = 1) -> ScalingReport:
    """Estimate ``quantity`` on each mesh alpha_k = gamma * delta_t_k.

    Raises InsufficientSamples when the finest-mesh standard error exceeds half
    of the band ``tolerance * |target|`` the comparison has to resolve.
    """
    delta_ts = [float(d) for d in delta_ts]
    if len(delta_ts) < 2 or any(b >= a for a, b in zip(delta_ts, delta_ts[1:])):
        raise ValueError("delta_t sequence must have at least two strictly decreasing entries")
    estimates, rows = [], []
    for dt in delta_ts:
        est = estimate_cycle_moments(psi, gamma * dt, dt, model, n_samples, seed, method, chunk_size, threads)
        e = est[quantity]
        target = est.targets[quantity]
        estimates.append(est)
        rows.append(ScalingRow(dt, e.value, target, e.value - target, e.stderr))
    fin = rows[-1]
    if math.isfinite(fin.target) and fin.target != 0 and fin.stderr > 0.5 * tolerance * abs(fin.target):
        raise InsufficientSamples(
            f"{quantity}: stderr {fin.stderr:.3g} exceeds half the {tolerance:.0%} band "
            f"around {fin.target:.3g}; increase n_samples")
    errs = [abs(r.error) for r in rows]
    slope = fit_loglog(delta_ts, errs)[0] if all(e > 0 and math.isfinite(e) for e in errs) else math.nan
    return ScalingReport(quantity, gamma, rows, slope, estimates)


# -- ensembles -------------------------------------------------------------------


@dataclass
class EnsembleAverage:
    """Mixture moments of an ensemble at each stored time, with standard errors."""

    t: np.ndarray
    mean: dict[str, np.ndarray]
    stderr: dict[str, np.ndarray]
    n_trajectories: int
    rho_mean: np.ndarray | None = None


def ensemble_average(run: EnsembleRun) -> EnsembleAverage:
    """Moments of the averaged state sum_i rho_i / M.

    Variances and covariance are nonlinear in the trajectory averages; their
    standard errors come from the first-order (influence-function) expansion.
    """
    m = run.n_trajectories
    if m < 2:
        raise ValueError("ensemble_average needs at least two trajectories")
    pan = run.panel
    avg = {k: v.mean(axis=0) for k, v in pan.items()}
    mq, mp = avg["q"], avg["p"]
    influence = {
        "mean_q": pan["q"],
        "mean_p": pan["p"],
        "var_q": pan["q2"] - 2.0 * mq * pan["q"],
        "var_p": pan["p2"] - 2.0 * mp * pan["p"],
        "cov_qp": pan["qp_sym"] - mq * pan["p"] - mp * pan["q"],
    }
    mean = {
        "mean_q": mq,
        "mean_p": mp,
        "var_q": avg["q2"] - mq**2,
        "var_p": avg["p2"] - mp**2,
        "cov_qp": avg["qp_sym"] - mq * mp,
    }
    stderr = {k: v.std(axis=0, ddof=1) / math.sqrt(m) for k, v in influence.items()}
    return EnsembleAverage(run.t, mean, stderr, m, run.rho_mean)


def compare_with_master(avg: EnsembleAverage, flow: MomentFlow, quantities=("var_q", "var_p", "cov_qp")):
    """Rows (t, quantity, ensemble, stderr, target, z) against the closed moment flow."""
    rows = []
    for i, t in enumerate(avg.t):
        target = moment_flow(flow, float(t))
        for name in quantities:
            val, se = float(avg.mean[name][i]), float(avg.stderr[name][i])
            tgt = getattr(target, name)
            # spread at rounding level (e.g. t = 0) carries no statistical information
            scale = ROUNDING * max(1.0, abs(tgt))
            if se > scale:
                z = (val - tgt) / se
            else:
                z = 0.0 if abs(val - tgt) <= scale else math.copysign(math.inf, val - tgt)
            rows.append({"t": float(t), "quantity": name, "ensemble": val, "stderr": se,
                         "target": tgt, "z": z})
    return rows


def averaged_density(avg: EnsembleAverage, grid: GridSpec, row: int = -1) -> DensityMatrix:
    if avg.rho_mean is None:
        raise ValueError("ensemble was run without keep_density")
    return DensityMatrix(grid, avg.rho_mean[row])


# -- measured-coordinate record --------------------------------------------------


@dataclass
class RecordScaling:
    windows: np.ndarray
    variance: np.ndarray
    stderr: np.ndarray
    target: np.ndarray
    slope: float
    intercept: float
    n_records: int

    @property
    def ratio(self) -> np.ndarray:
        return self.variance / self.target


def refine_record(t, record, integral, factor: int):
    """Linear interpolation of records (M, R) onto a grid ``factor`` times finer."""
    t = np.asarray(t, dtype=float)
    fine = np.linspace(t[0], t[-1], (len(t) - 1) * factor + 1)
    interp = lambda a: np.stack([np.interp(fine, t, row) for row in np.atleast_2d(a)])  # noqa: E731
    return fine, interp(record), interp(integral)


def record_scaling(t, record, integral, gamma: float, windows, min_records: int = 100) -> RecordScaling:
    """Variance of the compensated record increment over each window tau.

    X = [Q(t+tau) - Q(t)] - integral_t^{t+tau} <q> dt'  is pooled over all start
    times of every record; the standard error treats records (not windows) as
    the independent units.  The white-noise target is tau / (2 gamma).
    """
    record = np.atleast_2d(np.asarray(record, dtype=float))
    integral = np.atleast_2d(np.asarray(integral, dtype=float))
    m = record.shape[0]
    if m < min_records:
        raise InsufficientSamples(f"{m} records supplied, need at least {min_records}")
    if not gamma > 0:
        raise NonPositiveInput("gamma must be positive")
    t = np.asarray(t, dtype=float)
    step = t[1] - t[0]
    comp = record - integral
    windows = np.asarray(windows, dtype=float)
    var = np.empty(len(windows))
    se = np.empty(len(windows))
    for j, tau in enumerate(windows):
        lag = int(round(tau / step))
        if lag < 1 or lag >= len(t) or abs(lag * step - tau) > 1e-9 * max(tau, 1.0):
            raise ValueError(f"window {tau} is not a positive multiple of the row spacing {step}")
        x = comp[:, lag:] - comp[:, :-lag]
        x = x - x.mean()
        per_record = np.mean(x**2, axis=1)
        var[j] = per_record.mean()
        se[j] = per_record.std(ddof=1) / math.sqrt(m)
    slope, intercept = fit_loglog(windows, var)
    return RecordScaling(windows, var, se, windows / (2.0 * gamma), slope, intercept, m)
