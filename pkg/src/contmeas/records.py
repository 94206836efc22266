"""Time-series containers shared by the trajectory runners."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .lattice import Moments

COLUMNS = ("t", "mean_q", "mean_p", "var_q", "var_p", "cov_qp", "purity",
           "record", "increment", "mean_q_integral")


@dataclass
class TrajectoryRecord:
    """Observable history of one realization, sampled every ``stride`` steps.

    ``record`` is the accumulated measured coordinate Q(t); ``increment`` is
    the outcome q (discrete process) or d xi (SDE) of the last step before the
    row, NaN on the first row; ``mean_q_integral`` is the left Riemann sum of
    <q> that compensates ``record``.
    """

    t: np.ndarray
    mean_q: np.ndarray
    mean_p: np.ndarray
    var_q: np.ndarray
    var_p: np.ndarray
    cov_qp: np.ndarray
    purity: np.ndarray
    record: np.ndarray
    increment: np.ndarray
    mean_q_integral: np.ndarray
    metadata: dict = field(default_factory=dict)

    def __len__(self):
        return len(self.t)

    def columns(self) -> dict[str, np.ndarray]:
        return {name: getattr(self, name) for name in COLUMNS}

    def moments_at(self, row: int) -> Moments:
        return Moments(float(self.mean_q[row]), float(self.mean_p[row]), float(self.var_q[row]),
                       float(self.var_p[row]), float(self.cov_qp[row]))

    @classmethod
    def from_panel(cls, t, panel, purity, record, increment, mean_q_integral, metadata=None):
        """Build from raw panel expectations (<q>, <p>, <q^2>, <p^2>, <(qp+pq)/2>)."""
        mq, mp = panel["q"], panel["p"]
        return cls(
            t=np.asarray(t, dtype=float),
            mean_q=np.asarray(mq, dtype=float),
            mean_p=np.asarray(mp, dtype=float),
            var_q=np.asarray(panel["q2"] - mq**2, dtype=float),
            var_p=np.asarray(panel["p2"] - mp**2, dtype=float),
            cov_qp=np.asarray(panel["qp_sym"] - mq * mp, dtype=float),
            purity=np.asarray(purity, dtype=float),
            record=np.asarray(record, dtype=float),
            increment=np.asarray(increment, dtype=float),
            mean_q_integral=np.asarray(mean_q_integral, dtype=float),
            metadata=dict(metadata or {}),
        )


@dataclass
class EnsembleRun:
    """Per-trajectory results of M independent realizations from one initial state.

    ``panel`` maps each panel operator to an (M, R) array of expectations;
    ``record`` / ``mean_q_integral`` / ``increment`` are (M, R).  When requested,
    ``rho_mean`` holds the trajectory-averaged kernel matrix at every row,
    shape (R, N, N).
    """

    t: np.ndarray
    panel: dict
    record: np.ndarray
    mean_q_integral: np.ndarray
    increment: np.ndarray
    purity: np.ndarray
    rho_mean: np.ndarray | None = None
    metadata: dict = field(default_factory=dict)

    @property
    def n_trajectories(self) -> int:
        return self.record.shape[0]

    def trajectory(self, i: int) -> TrajectoryRecord:
        return TrajectoryRecord.from_panel(
            self.t,
            {k: v[i] for k, v in self.panel.items()},
            self.purity[i],
            self.record[i],
            self.increment[i],
            self.mean_q_integral[i],
            metadata={**self.metadata, "trajectory": i},
        )


def assemble_ensemble(parts: list[dict], n_trajectories: int, keep_density: bool, metadata: dict) -> EnsembleRun:
    """Concatenate chunk results (in chunk order) into one EnsembleRun."""
    rho_mean = None
    if keep_density:
        rho_mean = parts[0]["rho_sum"].copy()
        for part in parts[1:]:
            rho_mean += part["rho_sum"]
        rho_mean /= n_trajectories
    return EnsembleRun(
        t=parts[0]["t"],
        panel={k: np.concatenate([p["panel"][k] for p in parts]) for k in parts[0]["panel"]},
        record=np.concatenate([p["record"] for p in parts]),
        mean_q_integral=np.concatenate([p["mean_q_integral"] for p in parts]),
        increment=np.concatenate([p["increment"] for p in parts]),
        purity=np.concatenate([p["purity"] for p in parts]),
        rho_mean=rho_mean,
        metadata=metadata,
    )
