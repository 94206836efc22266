"""Experiment pipelines: validated config in, :class:`~contmeas.report.Report` out."""

from __future__ import annotations

import numpy as np

from .config import config_hash
from .convergence import (
    check_limit_scaling,
    compare_with_master,
    ensemble_average,
    record_scaling,
    refine_record,
    translation_check,
)
from .discrete import DiscreteParams, run_discrete_ensemble
from .errors import ConfigError
from .lattice import GridSpec, ModelParams, gaussian_packet, moments, purity, to_density
from .master import MomentFlow, master_path, moment_flow, n_steps
from .noise import NoiseStream
from .parallel import map_chunks
from .records import COLUMNS, EnsembleRun
from .report import Report
from .sde import SdeParams, UnravelingKind, run_sde_ensemble, run_sde_trajectory

Z_LIMIT = 3.0
# projections whose finite-mesh bias stays well below their sampling noise for
# any Gaussian input; the rest of the panel is reported only
BINDING_PROJECTIONS = ("drift:q", "drift:q2", "drift:p2", "cross:q")


def _setup(cfg):
    grid = GridSpec(**cfg["grid"])
    model = ModelParams(**cfg["model"])
    psi0 = gaussian_packet(grid, **cfg["initial"])
    return grid, model, psi0


def _kind(cfg) -> UnravelingKind:
    sde = cfg["sde"]
    return UnravelingKind.parse(sde["kind"], beta=sde["beta"])


def _add_trajectories(report: Report, run: EnsembleRun):
    table = report.table("trajectories", ("trajectory",) + COLUMNS)
    for i in range(run.n_trajectories):
        cols = run.trajectory(i).columns()
        for r in range(len(run.t)):
            values = [cols[name][r] for name in COLUMNS]
            table.add(i, *values)
            report.trajectories.append({"trajectory": i, **dict(zip(COLUMNS, values))})


def _add_series(report: Report, run: EnsembleRun, flow: MomentFlow | None):
    """Mixture moments of the ensemble (or of the single trajectory) against the flow."""
    cols = ["t", "var_q", "var_p", "cov_qp"]
    if flow is not None:
        cols += ["var_q_target", "var_p_target", "cov_qp_target"]
    table = report.table("series", cols)
    pan = run.panel
    avg = {k: v.mean(axis=0) for k, v in pan.items()}
    for r, t in enumerate(run.t):
        mq, mp = avg["q"][r], avg["p"][r]
        row = [t, avg["q2"][r] - mq**2, avg["p2"][r] - mp**2, avg["qp_sym"][r] - mq * mp]
        if flow is not None:
            m = moment_flow(flow, float(t))
            row += [m.var_q, m.var_p, m.cov_qp]
        table.add(*row)


def _add_master_checks(report: Report, run: EnsembleRun, flow: MomentFlow, binding: bool = True):
    avg = ensemble_average(run)
    rows = compare_with_master(avg, flow)
    table = report.table("master_comparison", ("t", "quantity", "ensemble", "stderr", "target", "z"))
    for row in rows:
        table.add(row["t"], row["quantity"], row["ensemble"], row["stderr"], row["target"], row["z"])
    t_end = float(run.t[-1])
    for row in rows:
        if row["t"] == t_end and row["quantity"] in ("var_q", "var_p"):
            passed = abs(row["z"]) <= Z_LIMIT if binding else None
            report.check(f"ensemble {row['quantity']}(T) vs master moments", row["ensemble"], row["target"],
                         f"{Z_LIMIT:g} stderr (stderr={row['stderr']:.3g})", passed)


def run_discrete(cfg, report: Report, threads: int):
    grid, model, psi0 = _setup(cfg)
    d = cfg["discrete"]
    params = DiscreteParams(d["alpha"], d["delta_t"])
    run = run_discrete_ensemble(psi0, params, model, cfg["horizon"], cfg["trajectories"], cfg["seed"],
                                stride=cfg["stride"], method=d["method"], chunk_size=cfg["chunk_size"],
                                threads=threads)
    flow = MomentFlow(moments(psi0), params.gamma, model.mass)
    _add_trajectories(report, run)
    _add_series(report, run, flow)
    if run.n_trajectories >= 2 and params.alpha > 0:
        _add_master_checks(report, run, flow)
    report.notes.append(f"alpha={params.alpha!r} delta_t={params.delta_t!r} gamma=alpha/delta_t={params.gamma!r}")


def _sde_run(cfg, grid, model, psi0, threads) -> EnsembleRun:
    s = cfg["sde"]
    params = SdeParams(s["dt"], model.gamma)
    kind = _kind(cfg)
    m = cfg["trajectories"]
    if s["level"] == "psi":
        return run_sde_ensemble(psi0, params, model, kind, cfg["horizon"], m, cfg["seed"],
                                stride=cfg["stride"], chunk_size=cfg["chunk_size"], threads=threads)
    rho0 = to_density(psi0)

    def work(lo, hi):
        recs = []
        for i in range(lo, hi):
            noise = NoiseStream(cfg["seed"], i, model.gamma, params.dt)
            recs.append(run_sde_trajectory(rho0, params, model, kind, cfg["horizon"], noise, cfg["stride"])[1])
        return recs

    recs = [r for part in map_chunks(work, m, 1, threads) for r in part]
    stack = lambda name: np.stack([getattr(r, name) for r in recs])  # noqa: E731
    mq, mp = stack("mean_q"), stack("mean_p")
    panel = {"q": mq, "p": mp, "q2": stack("var_q") + mq**2, "p2": stack("var_p") + mp**2,
             "qp_sym": stack("cov_qp") + mq * mp}
    return EnsembleRun(recs[0].t, panel, stack("record"), stack("mean_q_integral"), stack("increment"),
                       stack("purity"), metadata={"kind": kind.label, "seed": cfg["seed"]})


def run_sde(cfg, report: Report, threads: int):
    grid, model, psi0 = _setup(cfg)
    run = _sde_run(cfg, grid, model, psi0, threads)
    kind = _kind(cfg)
    flow = MomentFlow(moments(psi0), model.gamma, model.mass)
    _add_trajectories(report, run)
    _add_series(report, run, flow)
    min_purity = float(np.min(run.purity))
    report.check("minimum purity", min_purity, 1.0, "1 - 5e-3", min_purity >= 1.0 - 5e-3)
    if model.gamma == 0:
        spread = max(float(np.max(np.ptp(v, axis=0))) for v in run.panel.values())
        report.check("spread across trajectories (unitary)", spread, 0.0, "1e-12", spread <= 1e-12)
        end = moment_flow(flow, float(run.t[-1]))
        var_q = float(run.panel["q2"][0, -1] - run.panel["q"][0, -1] ** 2)
        # the psi path takes explicit Euler steps, so agreement is only to O(dt)
        dt = cfg["sde"]["dt"]
        report.check("var_q(T) vs free spreading", var_q, end.var_q, f"Euler bound dt={dt!r} relative",
                     abs(var_q - end.var_q) <= dt * end.var_q)
    elif run.n_trajectories >= 2:
        _add_master_checks(report, run, flow, binding=kind.tag != "mixed")
    report.notes.append(f"kind={kind.label} level={cfg['sde']['level']} dt={cfg['sde']['dt']!r}")


def run_master(cfg, report: Report, threads: int):
    grid, model, psi0 = _setup(cfg)
    dt = cfg["master"]["dt"]
    flow = MomentFlow(moments(psi0), model.gamma, model.mass)
    table = report.table("series", ("t", "var_q", "var_p", "cov_qp", "trace", "purity",
                                    "var_q_target", "var_p_target", "cov_qp_target"))
    last = None
    for t, rho in master_path(to_density(psi0), dt, cfg["horizon"], model, stride=cfg["stride"]):
        m = moments(rho)
        target = moment_flow(flow, t)
        table.add(t, m.var_q, m.var_p, m.cov_qp, rho.trace, purity(rho), target.var_q, target.var_p,
                  target.cov_qp)
        last = (m, target, rho)
    m, target, rho = last
    for name in ("var_q", "var_p"):
        val, tgt = getattr(m, name), getattr(target, name)
        report.check(f"{name}(T) vs closed moment flow", val, tgt, "1% relative", abs(val - tgt) <= 0.01 * tgt)
    report.check("trace(T)", rho.trace, 1.0, "1e-9", abs(rho.trace - 1.0) <= 1e-9)


def run_converge(cfg, report: Report, threads: int):
    grid, model, _ = _setup(cfg)
    init = dict(cfg["initial"], mean_q=0.0)
    if cfg["initial"]["mean_q"] != 0:
        report.notes.append("initial state translated to <q> = 0 for the one-cycle estimators")
    psi0 = gaussian_packet(grid, **init)
    c = cfg["converge"]
    rep = check_limit_scaling(psi0, model.gamma, c["delta_ts"], model, c["samples"], cfg["seed"],
                              quantity=c["quantity"], tolerance=c["tolerance"],
                              method=cfg["discrete"]["method"], threads=threads)
    table = report.table("scaling", ("delta_t", "estimate", "target", "error", "stderr"))
    for r in rep.rows:
        table.add(r.delta_t, r.estimate, r.target, r.error, r.stderr)
    fin = rep.finest
    report.check(f"{rep.quantity}: error shrinks monotonically (within stderr)", abs(fin.error),
                 0.0, "|e_k+1| <= |e_k| + stderr_k+1", rep.monotone_within_stderr())
    report.check(f"{rep.quantity}: finest mesh", fin.estimate, fin.target, f"{c['tolerance']:.0%} relative",
                 abs(fin.error) <= c["tolerance"] * abs(fin.target))
    report.check(f"{rep.quantity}: log-log error slope", rep.slope, 1.0, "reported", None)
    est = rep.estimates[-1]
    third = est["third_dQ"]
    report.check("third moment of dQ at finest mesh", third.value, 0.0, f"{Z_LIMIT:g} stderr",
                 abs(third.z_score(0.0)) <= Z_LIMIT)
    finest = report.table("finest_moments", ("quantity", "estimate", "stderr", "target", "z"))
    for row in est.table():
        finest.add(row["quantity"], row["estimate"], row["stderr"], row["target"], row["z"])
        if row["quantity"].startswith(("drift:", "cross:")):
            binding = row["quantity"] in BINDING_PROJECTIONS
            report.check(f"{row['quantity']} at finest mesh", row["estimate"], row["target"],
                         f"{Z_LIMIT:g} stderr", abs(row["z"]) <= Z_LIMIT if binding else None)
    shifted = translation_check(psi0, est.alpha, est.delta_t, model, c["samples"], cfg["seed"])
    worst = max(v["stderr_units"] for v in shifted.values())
    report.check("translation invariance (+1 shift, shared noise)", worst, 0.0, "1 stderr", worst <= 1.0)


def run_ensemble(cfg, report: Report, threads: int):
    grid, model, psi0 = _setup(cfg)
    run = _sde_run(cfg, grid, model, psi0, threads)
    flow = MomentFlow(moments(psi0), model.gamma, model.mass)
    _add_series(report, run, flow)
    _add_master_checks(report, run, flow, binding=_kind(cfg).tag != "mixed")
    report.notes.append(f"kind={_kind(cfg).label} M={run.n_trajectories}")


def run_record_scaling(cfg, report: Report, threads: int):
    grid, model, psi0 = _setup(cfg)
    rs_cfg = cfg["record_scaling"]
    if rs_cfg["source"] == "sde":
        run = _sde_run(cfg, grid, model, psi0, threads)
        t, rec, integ = run.t, run.record, run.mean_q_integral
        period = None
    else:
        d = cfg["discrete"]
        params = DiscreteParams(d["alpha"], d["delta_t"])
        run = run_discrete_ensemble(psi0, params, model, cfg["horizon"], cfg["trajectories"], cfg["seed"],
                                    stride=cfg["stride"], method=d["method"], chunk_size=cfg["chunk_size"],
                                    threads=threads)
        t, rec, integ = refine_record(run.t, run.record, run.mean_q_integral, rs_cfg["refine"])
        period = params.delta_t
    res = record_scaling(t, rec, integ, model.gamma, rs_cfg["windows"], rs_cfg["min_records"])
    table = report.table("record_scaling", ("tau", "variance", "stderr", "target", "ratio"))
    for row in zip(res.windows, res.variance, res.stderr, res.target, res.ratio):
        table.add(*row)
    report.check("log-log slope", res.slope, 1.0, "0.05", abs(res.slope - 1.0) <= 0.05 if period is None else None)
    for tau, ratio in zip(res.windows.tolist(), res.ratio.tolist()):
        if period is None or tau >= 10 * period:
            report.check(f"variance/(tau/2gamma) at tau={tau!r}", ratio, 1.0, "10%", abs(ratio - 1.0) <= 0.1)
        elif tau <= period:
            report.check(f"white-noise law breaks at tau={tau!r} <= delta_t", ratio, 1.0, "deviation > 10%",
                         abs(ratio - 1.0) > 0.1)
        else:
            report.check(f"variance/(tau/2gamma) at tau={tau!r}", ratio, 1.0, "reported", None)
    report.notes.append(f"records={res.n_records} intercept={res.intercept!r}")


PIPELINES = {
    "discrete": run_discrete,
    "sde": run_sde,
    "master": run_master,
    "converge": run_converge,
    "ensemble": run_ensemble,
    "record-scaling": run_record_scaling,
}


def run_experiment(cfg: dict, threads: int = 1) -> Report:
    """Dispatch a validated config to its pipeline and collect the report."""
    step = _step_of(cfg)
    if step is not None:
        try:
            n_steps(cfg["horizon"], step)
        except ValueError as exc:
            raise ConfigError("horizon", str(exc)) from exc
    report = Report(cfg["experiment"], config_hash(cfg), cfg["seed"],
                    config={k: v for k, v in cfg.items() if k != "output"})
    PIPELINES[cfg["experiment"]](cfg, report, threads)
    return report


def _step_of(cfg) -> float | None:
    exp = cfg["experiment"]
    if exp == "master":
        return cfg["master"]["dt"]
    if exp == "discrete" or (exp == "record-scaling" and cfg["record_scaling"]["source"] == "discrete"):
        return cfg["discrete"]["delta_t"]
    if exp == "converge":
        return None
    return cfg["sde"]["dt"]
