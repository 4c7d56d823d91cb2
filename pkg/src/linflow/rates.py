"""Convergence-rate machinery: regime split detection, fast/slow decay rates,
the piecewise exponential distance envelope, domination checking against
measured trajectories, and the time-to-accuracy estimate.

The envelope decays at the fast rate until the first recorded time the top
singular value falls to sqrt(6) times the target value, then at the slow
rate. Rates must both be positive for any of this to apply; with a large
target spectral gap they can go negative, which is reported as inapplicable
rather than an error. Trajectory checks carry an explicit step-size slack,
slack(t) = kappa * dt * (1 + t) * m * s^2, reported alongside every result.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .flows import FAST_REGIME_RATIO, Trajectory
from .spectral import TargetSpectrum
from .stability import RANK_ONE_REL_TOL

SLACK_KAPPA = 10.0
# Multiplicative headroom on the envelope before a record counts as a violation.
DOMINATION_REL_TOL = 1e-6


def discretization_slack(t, dt: float, m: int, target_s: float):
    """Additive slack granted to trajectory inequalities at time t."""
    return SLACK_KAPPA * dt * (1.0 + np.asarray(t, dtype=float)) * m * target_s**2


@dataclass(frozen=True)
class RateParams:
    """Everything the rate formulas need, frozen per run."""

    m: int
    depth: int
    target_s: float
    target_gap: float
    alpha: float
    beta: float
    dist0_sq: float

    def __post_init__(self):
        if self.depth < 1 or self.m < 1:
            raise ValueError("depth and m must be positive")
        if self.target_s < 0 or not (0 <= self.target_gap <= 1):
            raise ValueError("target spectrum values out of range")


def rate_exponents(p: RateParams):
    """(fast_rate, slow_rate) decay constants.

    fast = m N s^(2-2/N) ((alpha-gap)^(2-2/N) - 2 gap beta^(2-2/N))
    slow = m s^(2-2/N) (alpha (alpha-gap)^(2-2/N) - 2 gap N beta^(2-2/N))
    Either can be nonpositive when the gap is large; see rates_applicable.
    """
    e = 2.0 - 2.0 / p.depth
    base = (p.alpha - p.target_gap) ** e
    fast = p.m * p.depth * p.target_s**e * (base - 2.0 * p.target_gap * p.beta**e)
    slow = p.m * p.target_s**e * (p.alpha * base - 2.0 * p.target_gap * p.depth * p.beta**e)
    return float(fast), float(slow)


def rates_applicable(p: RateParams) -> bool:
    fast, slow = rate_exponents(p)
    return fast > 0.0 and slow > 0.0


def detect_tau(traj: Trajectory, ts: TargetSpectrum) -> float:
    """First recorded time the top singular value is at or below the regime
    threshold; 0 if immediately, +inf if never."""
    s_t = np.asarray(traj.metrics["s_t"], dtype=float)
    hits = np.nonzero(s_t <= FAST_REGIME_RATIO * ts.s)[0]
    if not hits.size:
        return math.inf
    return float(traj.times[hits[0]])


@dataclass(frozen=True)
class BoundCurve:
    """Piecewise exponential envelope, continuous at tau by construction."""

    tau: float
    fast_rate: float
    slow_rate: float
    dist0_sq: float
    dist_tau_sq: float

    def value(self, t):
        t = np.asarray(t, dtype=float)
        fast = self.dist0_sq * np.exp(-self.fast_rate * t)
        if math.isinf(self.tau):
            out = fast
        else:
            slow = self.dist_tau_sq * np.exp(-self.slow_rate * (t - self.tau))
            out = np.where(t < self.tau, fast, slow)
        return float(out) if out.ndim == 0 else out


def make_bound_curve(p: RateParams, tau: float) -> BoundCurve:
    """Envelope anchored at dist0_sq with the slow branch starting from the
    fast branch's value at tau."""
    if not rates_applicable(p):
        raise ValueError("rate exponents are not both positive; envelope undefined")
    fast, slow = rate_exponents(p)
    dist_tau_sq = p.dist0_sq if math.isinf(tau) else p.dist0_sq * math.exp(-fast * tau)
    return BoundCurve(
        tau=tau, fast_rate=fast, slow_rate=slow, dist0_sq=p.dist0_sq, dist_tau_sq=dist_tau_sq
    )


def bound_curve(p: RateParams, tau: float, dist_tau_sq: float, t):
    """Envelope value at t with an explicit slow-branch anchor.

    Returns NaN when the exponents are inapplicable (flagged, not raised).
    """
    if not rates_applicable(p):
        t = np.asarray(t, dtype=float)
        return math.nan if t.ndim == 0 else np.full_like(t, math.nan)
    fast, slow = rate_exponents(p)
    curve = BoundCurve(
        tau=tau, fast_rate=fast, slow_rate=slow, dist0_sq=p.dist0_sq, dist_tau_sq=dist_tau_sq
    )
    return curve.value(t)


@dataclass
class DominationReport:
    """Outcome of envelope-vs-measurement comparison along one trajectory."""

    status: str  # "checked" | "precondition-unmet: ..." | "inapplicable-exponents"
    tau: float = math.nan
    fast_rate: float = math.nan
    slow_rate: float = math.nan
    n_violations: int = 0
    max_excess: float = 0.0
    times: np.ndarray = field(default=None, repr=False)
    bound: np.ndarray = field(default=None, repr=False)
    margin: np.ndarray = field(default=None, repr=False)

    @property
    def checked(self) -> bool:
        return self.status == "checked"

    @property
    def passed(self) -> bool:
        return self.checked and self.n_violations == 0


def check_bound_domination(traj: Trajectory, p: RateParams) -> DominationReport:
    """Verify measured squared distance never exceeds the envelope.

    Preconditions (ruled on from the recorded metrics, strictly): rank-one
    initial state, initial singular value inside the two-sided band, initial
    correlation above its threshold, and applicable exponents. An unmet
    precondition yields an inapplicable report, not a failure.
    """
    s0 = float(traj.metrics["s_t"][0])
    corr0 = float(traj.metrics["corr"][0])
    min_sv0 = float(traj.metrics["min_sv"][0])
    lower = (p.alpha - p.target_gap) * p.target_s
    upper = p.beta * p.target_s
    # A single-row or single-column state has one singular value, so min_sv
    # equals s_t there and says nothing about a second direction.
    multi = min(np.asarray(traj.states[0]).shape) > 1
    if multi and min_sv0 > RANK_ONE_REL_TOL * s0:
        return DominationReport(status="precondition-unmet: initial state not rank one")
    if not (lower < s0):
        return DominationReport(status=f"precondition-unmet: s0 = {s0:.6g} <= {lower:.6g}")
    if not (s0 < upper):
        return DominationReport(status=f"precondition-unmet: s0 = {s0:.6g} >= {upper:.6g}")
    if not (corr0 > p.alpha * p.target_s):
        return DominationReport(
            status=f"precondition-unmet: corr0 = {corr0:.6g} <= {p.alpha * p.target_s:.6g}"
        )
    if not rates_applicable(p):
        return DominationReport(status="inapplicable-exponents")

    s_t = np.asarray(traj.metrics["s_t"], dtype=float)
    hits = np.nonzero(s_t <= FAST_REGIME_RATIO * p.target_s)[0]
    tau = float(traj.times[hits[0]]) if hits.size else math.inf
    curve = make_bound_curve(p, tau)
    t = np.asarray(traj.times, dtype=float)
    bound = curve.value(t)
    slack = discretization_slack(t, traj.config.dt, p.m, p.target_s)
    envelope = bound * (1.0 + DOMINATION_REL_TOL) + slack
    measured = np.asarray(traj.metrics["dist_sq"], dtype=float)
    margin = envelope - measured
    excess = np.clip(-margin, 0.0, None)
    return DominationReport(
        status="checked",
        tau=tau,
        fast_rate=curve.fast_rate,
        slow_rate=curve.slow_rate,
        n_violations=int(np.sum(margin < 0)),
        max_excess=float(np.max(excess)) if excess.size else 0.0,
        times=t,
        bound=bound,
        margin=margin,
    )


def time_to_accuracy(p: RateParams, tau: float, eps: float) -> float:
    """Envelope-implied time for the squared distance to reach eps.

    Fast branch until the envelope's value at tau, slow branch after;
    continuous at the junction. Zero when eps already met at t=0.
    """
    if eps <= 0:
        raise ValueError("eps must be positive")
    if not rates_applicable(p):
        raise ValueError("rate exponents are not both positive; estimate undefined")
    C = p.dist0_sq
    if eps >= C:
        return 0.0
    fast, slow = rate_exponents(p)
    if math.isinf(tau):
        return math.log(C / eps) / fast
    eps0 = C * math.exp(-fast * tau)
    if eps >= eps0:
        return math.log(C / eps) / fast
    return tau + math.log(eps0 / eps) / slow


def loss_evolution_rhs(W, ts: TargetSpectrum, depth: int, m: int) -> float:
    """Four-term upper bound on d/dt of the rank-one distance loss.

    Two nonpositive contraction terms plus two gap-driven excess terms; the
    excess terms vanish for a rank-one target.
    """
    W = np.atleast_2d(np.asarray(W, dtype=float))
    U, s, Vt = np.linalg.svd(W, full_matrices=False)
    if s.size >= 2 and s[1] > RANK_ONE_REL_TOL * s[0]:
        raise ValueError("state has numerical rank >= 2; bound defined for rank-one states")
    s_t = float(s[0])
    u = U[:, 0]
    v = Vt[0]
    corr = float(u @ ts.rank_one @ v)
    t1 = 0.5 * (s_t - corr) ** 2
    t2 = ts.s - corr
    pref = s_t ** (2.0 - 2.0 / depth)
    return (
        -2.0 * m * depth * pref * t1
        - 2.0 * m * pref * corr * t2
        + math.sqrt(2.0) * m * depth * pref * ts.gap * math.sqrt(t1) * t2
        + 2.0 * m * pref * ts.s2 * t2
    )


def fast_regime_sufficiency_violations(traj: Trajectory, ts: TargetSpectrum, slack: float = 1e-12) -> np.ndarray:
    """Records in the fast regime where 0.5 (s_t - corr)^2 fails to cover
    s (s - corr). Empty means the fast-rate derivation's pointwise premise
    held throughout."""
    s_t = np.asarray(traj.metrics["s_t"], dtype=float)
    corr = np.asarray(traj.metrics["corr"], dtype=float)
    fast = s_t > FAST_REGIME_RATIO * ts.s
    lhs = 0.5 * (s_t - corr) ** 2
    rhs = ts.s * (ts.s - corr)
    return np.nonzero(fast & (lhs < rhs - slack))[0]


def write_bound_csv(traj: Trajectory, report: DominationReport, path) -> Path:
    """Trajectory CSV plus bound_value and margin columns."""
    from .flows import CSV_FORMAT_VERSION, METRIC_COLUMNS

    if not report.checked:
        raise ValueError(f"cannot export columns for status {report.status!r}")
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    cfg = traj.config
    with path.open("w", newline="") as fh:
        fh.write(f"# linflow-trajectory v{CSV_FORMAT_VERSION}\n")
        fh.write(
            f"# kind={traj.kind} depth={traj.depth} method={cfg.method} "
            f"dt={cfg.dt!r} steps={cfg.steps} record_every={cfg.record_every}\n"
        )
        writer = csv.writer(fh)
        writer.writerow(list(METRIC_COLUMNS) + ["bound_value", "margin"])
        for k in range(len(traj)):
            row = [repr(float(traj.times[k]))]
            for key in METRIC_COLUMNS[1:]:
                val = traj.metrics[key][k]
                row.append(val if key == "regime" else repr(float(val)))
            row.append(repr(float(report.bound[k])))
            row.append(repr(float(report.margin[k])))
            writer.writerow(row)
    return path
