"""Membership tests and trajectory monitors for the invariant regions that
the flow provably never leaves.

Two levels: the factor-level region constrains the product's top singular
value from below and its correlation with the target's top pair; the
matrix-level region adds an upper singular-value cap. Membership is evaluated
with strict inequalities and zero slack; trajectory-level assertions elsewhere
carry explicit step-size slack instead, since a discrete integrator can graze
boundaries the continuous flow cannot cross.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .network import LinearNetwork, end_to_end, min_width
from .spectral import TargetSpectrum

# A state counts as rank one when its second singular value is below this
# fraction of the top one.
RANK_ONE_REL_TOL = 1e-6


@dataclass(frozen=True)
class StableSetParams:
    alpha: float
    beta: float

    def __post_init__(self):
        if not (0.0 < self.alpha < 1.0):
            raise ValueError(f"alpha must lie in (0, 1), got {self.alpha}")
        if not (self.beta > 1.0):
            raise ValueError(f"beta must exceed 1, got {self.beta}")


def _require_usable_target(ts: TargetSpectrum, alpha: float):
    if ts.degenerate:
        raise ValueError("target spectrum is degenerate (zero top singular value)")
    if not (ts.gap <= alpha):
        raise ValueError(
            f"alpha={alpha} must be at least the target's spectral gap {ts.gap:.6g}"
        )


def _rank_one_triple(W):
    """Top singular triple of a numerically rank-one matrix."""
    W = np.atleast_2d(np.asarray(W, dtype=float))
    U, s, Vt = np.linalg.svd(W, full_matrices=False)
    if s.size >= 2 and s[1] > RANK_ONE_REL_TOL * s[0]:
        raise ValueError(
            f"state has numerical rank >= 2 (s2/s1 = {s[1] / s[0]:.3e}); "
            "membership is defined for rank-one states"
        )
    return float(s[0]), U[:, 0], Vt[0]


def in_stable_set_factor(net: LinearNetwork, ts: TargetSpectrum, alpha: float) -> bool:
    """Factor-level membership: narrowest width must be one, so the product
    is structurally rank at most one."""
    if min_width(net) != 1:
        raise ValueError("factor-level stable set is defined for min width 1")
    _require_usable_target(ts, alpha)
    W = end_to_end(net)
    s_w, u, v = _rank_one_triple(W)
    corr = float(u @ ts.rank_one @ v)
    return s_w > (alpha - ts.gap) * ts.s and corr > alpha * ts.s


def in_stable_set_ab(W, ts: TargetSpectrum, params: StableSetParams) -> bool:
    """Matrix-level membership with both singular-value bounds (all strict)."""
    _require_usable_target(ts, params.alpha)
    s_w, u, v = _rank_one_triple(W)
    corr = float(u @ ts.rank_one @ v)
    lower = (params.alpha - ts.gap) * ts.s
    upper = params.beta * ts.s
    return lower < s_w < upper and corr > params.alpha * ts.s


@dataclass
class StableSetExitReport:
    """First membership violation along a recorded trajectory, if any."""

    exited: bool
    first_exit_index: int | None
    times: np.ndarray
    margins: dict

    def write(self, json_path, margins_csv_path) -> Path:
        margins_csv_path = Path(margins_csv_path)
        margins_csv_path.parent.mkdir(parents=True, exist_ok=True)
        with margins_csv_path.open("w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["t", "s_lower_margin", "s_upper_margin", "corr_margin"])
            for k in range(self.times.size):
                writer.writerow(
                    [
                        repr(float(self.times[k])),
                        repr(float(self.margins["s_lower"][k])),
                        repr(float(self.margins["s_upper"][k])),
                        repr(float(self.margins["corr"][k])),
                    ]
                )
        json_path = Path(json_path)
        json_path.parent.mkdir(parents=True, exist_ok=True)
        json_path.write_text(
            json.dumps(
                {
                    "exited": self.exited,
                    "first_exit_index": self.first_exit_index,
                    "margins_csv_path": str(margins_csv_path),
                },
                indent=2,
            )
            + "\n"
        )
        return json_path


def monitor_stable_set(traj, ts: TargetSpectrum, params: StableSetParams) -> StableSetExitReport:
    """Evaluate the three membership margins at every record.

    Margins are (distance above the lower singular-value bound, distance
    below the upper bound, correlation excess over its threshold); the first
    record where any margin is nonpositive is an exit.
    """
    _require_usable_target(ts, params.alpha)
    s_t = np.asarray(traj.metrics["s_t"], dtype=float)
    corr = np.asarray(traj.metrics["corr"], dtype=float)
    margins = {
        "s_lower": s_t - (params.alpha - ts.gap) * ts.s,
        "s_upper": params.beta * ts.s - s_t,
        "corr": corr - params.alpha * ts.s,
    }
    bad = (margins["s_lower"] <= 0) | (margins["s_upper"] <= 0) | (margins["corr"] <= 0)
    hits = np.nonzero(bad)[0]
    return StableSetExitReport(
        exited=bool(hits.size),
        first_exit_index=int(hits[0]) if hits.size else None,
        times=np.asarray(traj.times, dtype=float),
        margins=margins,
    )


def alignment_violations(traj, ts: TargetSpectrum, slack: float = 1e-10) -> np.ndarray:
    """Record indices where the correlation decreases by more than slack
    while above the threshold gap * s, contradicting alignment monotonicity."""
    corr = np.asarray(traj.metrics["corr"], dtype=float)
    above = corr[:-1] > ts.gap * ts.s
    drops = np.diff(corr) < -slack
    return np.nonzero(above & drops)[0]
