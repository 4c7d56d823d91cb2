"""Time integration of the layer-wise gradient flow and the induced
end-to-end flow, with per-record metrics and derivative-identity checkers.

Integrators are fixed-step (explicit Euler or classic RK4). Metrics are
recorded every record_every steps plus the final step; singular directions
carry sign continuity from record to record so finite differences of u_t and
v_t are meaningful. A divergence guard aborts when a recorded state norm
exceeds DIVERGENCE_LIMIT, which signals a too-large step size rather than a
modeling failure.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .induced import frame_apply
from .network import LinearNetwork, balance_residual, end_to_end
from .spectral import TargetSpectrum, target_spectrum

# Fast/slow regime split: s_t above sqrt(6) times the target value is "fast".
FAST_REGIME_RATIO = math.sqrt(6.0)
DIVERGENCE_LIMIT = 1e8
CSV_FORMAT_VERSION = 1
METRIC_COLUMNS = ("t", "loss", "dist_sq", "s_t", "corr", "balance_residual", "min_sv", "regime")

# Relative-error floors for the finite-difference checkers: per-record
# denominators never drop below this fraction of the series maximum.
REL_FLOOR_FRACTION = 1e-2


class DivergenceError(RuntimeError):
    """State norm exceeded the guard; dt is too large for this instance."""

    def __init__(self, step: int, norm: float):
        super().__init__(
            f"state norm {norm:.3e} exceeded {DIVERGENCE_LIMIT:.0e} at step {step}; "
            "reduce dt"
        )
        self.step = step
        self.norm = norm


@dataclass(frozen=True)
class IntegratorConfig:
    method: str = "explicit-euler"
    dt: float = 1e-6
    steps: int = 100_000
    record_every: int = 100

    def __post_init__(self):
        if self.method not in ("explicit-euler", "rk4"):
            raise ValueError(f"unknown method {self.method!r}")
        if not (self.dt > 0):
            raise ValueError("dt must be positive")
        if self.steps < 1 or self.record_every < 1:
            raise ValueError("steps and record_every must be >= 1")

    @property
    def total_time(self) -> float:
        return self.dt * self.steps


@dataclass(frozen=True)
class AlignmentDiagnostics:
    """Per-record alignment of the top singular triple with the target's.

    a and b are the overlaps of the left and right directions with the
    target's; t1 is half the squared mismatch between s_t and the correlation
    u_t^T Z1 v_t; t2 is the correlation's shortfall from the target value.
    """

    a: float
    b: float
    t1: float
    t2: float


@dataclass
class Trajectory:
    """Recorded flow history: states plus the metric table."""

    kind: str  # "factor" or "induced"
    depth: int
    times: np.ndarray
    states: list
    metrics: dict
    config: IntegratorConfig

    def __len__(self) -> int:
        return self.times.size

    def to_csv(self, path) -> Path:
        return write_trajectory_csv(self, path)


@dataclass(frozen=True)
class DerivativeCheckReport:
    """Outcome of a finite-difference vs closed-form comparison."""

    max_rel_error: float
    records_compared: int
    record_spacing: float
    rel_errors: np.ndarray = field(repr=False)


def _record_steps(steps: int, record_every: int) -> list:
    idx = list(range(0, steps + 1, record_every))
    if idx[-1] != steps:
        idx.append(steps)
    return idx


class _MetricTracker:
    """Computes one metric row per record with sign-continuous directions."""

    def __init__(self, data, target: TargetSpectrum):
        self.X = data.X
        self.Y = data.Y
        self.target = target
        self._prev_u = None

    def top_triple(self, W):
        U, s, Vt = np.linalg.svd(W, full_matrices=False)
        u = U[:, 0].copy()
        v = Vt[0].copy()
        if self._prev_u is not None and float(u @ self._prev_u) < 0.0:
            u, v = -u, -v
        self._prev_u = u
        return float(s[0]), u, v, float(s[-1])

    def row(self, W, balance: float) -> dict:
        s_t, u, v, min_sv = self.top_triple(W)
        tgt = self.target
        R = W @ self.X - self.Y
        corr = tgt.s * float(tgt.u @ u) * float(tgt.v @ v)
        diff = tgt.rank_one - W
        regime = "fast" if s_t > FAST_REGIME_RATIO * tgt.s else "slow"
        return {
            "loss": 0.5 * float(np.sum(R * R)),
            "dist_sq": float(np.sum(diff * diff)),
            "s_t": s_t,
            "corr": corr,
            "balance_residual": balance,
            "min_sv": min_sv,
            "regime": regime,
        }


def _finalize(kind, depth, cfg, times, states, rows) -> Trajectory:
    metrics = {}
    for key in METRIC_COLUMNS[1:]:
        vals = [r[key] for r in rows]
        metrics[key] = np.array(vals) if key != "regime" else np.array(vals, dtype=object)
    return Trajectory(
        kind=kind,
        depth=depth,
        times=np.array(times, dtype=float),
        states=states,
        metrics=metrics,
        config=cfg,
    )


def _guard(step: int, flat_norm_sq: float):
    if not np.isfinite(flat_norm_sq) or flat_norm_sq > DIVERGENCE_LIMIT**2:
        raise DivergenceError(step, math.sqrt(flat_norm_sq) if np.isfinite(flat_norm_sq) else math.inf)


def _layer_grads(layers, XXt, YXt):
    """Per-layer loss gradients; shares partial products across layers."""
    N = len(layers)
    pres = [layers[0]]
    for j in range(1, N):
        pres.append(layers[j] @ pres[-1])
    R = pres[-1] @ XXt - YXt
    grads = [None] * N
    S = R
    for j in range(N - 1, 0, -1):
        grads[j] = S @ pres[j - 1].T
        S = layers[j].T @ S
    grads[0] = S
    return grads


def integrate_factor_flow(net0: LinearNetwork, data, cfg: IntegratorConfig) -> Trajectory:
    """Gradient flow on all layers simultaneously."""
    layers = [np.array(W, dtype=float) for W in net0.layers]
    XXt = data.X @ data.X.T
    YXt = data.Y @ data.X.T
    target = target_spectrum(YXt / data.m)
    tracker = _MetricTracker(data, target)
    dt = cfg.dt

    def rhs(ls):
        return [-G for G in _layer_grads(ls, XXt, YXt)]

    record_at = set(_record_steps(cfg.steps, cfg.record_every))
    times, states, rows = [], [], []

    def record(step):
        net = LinearNetwork(tuple(np.array(W) for W in layers))
        W = end_to_end(net)
        _guard(step, sum(float(np.sum(L * L)) for L in layers))
        times.append(step * dt)
        states.append(net)
        rows.append(tracker.row(W, balance_residual(net)))

    record(0)
    # Overflow on a blown-up run is diagnosed by the record-time guard, not
    # by IEEE warnings mid-step.
    with np.errstate(over="ignore", invalid="ignore"):
        for step in range(1, cfg.steps + 1):
            if cfg.method == "explicit-euler":
                grads = _layer_grads(layers, XXt, YXt)
                layers = [W - dt * G for W, G in zip(layers, grads)]
            else:
                k1 = rhs(layers)
                k2 = rhs([W + 0.5 * dt * K for W, K in zip(layers, k1)])
                k3 = rhs([W + 0.5 * dt * K for W, K in zip(layers, k2)])
                k4 = rhs([W + dt * K for W, K in zip(layers, k3)])
                layers = [
                    W + (dt / 6.0) * (a + 2.0 * b + 2.0 * c + d)
                    for W, a, b, c, d in zip(layers, k1, k2, k3, k4)
                ]
            if step in record_at:
                record(step)
    return _finalize("factor", net0.depth, cfg, times, states, rows)


def _induced_velocity(W, XXt, YXt, depth):
    """-precond(W, W XX^T - Y X^T) without constructing an OperatorContext.

    Rank-one shortcuts cover single-row and single-column states exactly; the
    general path runs the singular-frame evaluation on a fresh SVD.
    """
    G = W @ XXt - YXt
    if depth == 1:
        return -G
    d_y, d_x = W.shape
    if d_y == 1:
        w = W[0]
        s2 = float(w @ w)
        if s2 == 0.0:
            return np.zeros_like(W)
        scale = s2 ** (1.0 - 1.0 / depth)
        g = G[0]
        proj = (g @ w) / s2
        return (-scale * (g + (depth - 1) * proj * w))[None, :]
    if d_x == 1:
        w = W[:, 0]
        s2 = float(w @ w)
        if s2 == 0.0:
            return np.zeros_like(W)
        scale = s2 ** (1.0 - 1.0 / depth)
        g = G[:, 0]
        proj = (g @ w) / s2
        return (-scale * (g + (depth - 1) * proj * w))[:, None]
    U, s, Vt = np.linalg.svd(W, full_matrices=False)
    return -frame_apply(U, s, Vt.T, depth, G)


def integrate_induced_flow(W0, depth: int, data, cfg: IntegratorConfig) -> Trajectory:
    """Flow of the end-to-end matrix under the depth-N preconditioner."""
    W = np.atleast_2d(np.array(W0, dtype=float))
    if depth < 1:
        raise ValueError("depth must be >= 1")
    XXt = data.X @ data.X.T
    YXt = data.Y @ data.X.T
    target = target_spectrum(YXt / data.m)
    tracker = _MetricTracker(data, target)
    dt = cfg.dt

    record_at = set(_record_steps(cfg.steps, cfg.record_every))
    times, states, rows = [], [], []

    def record(step):
        _guard(step, float(np.sum(W * W)))
        times.append(step * dt)
        states.append(np.array(W))
        rows.append(tracker.row(W, math.nan))

    record(0)
    # Same contract as the factor loop: the guard reports blow-ups.
    with np.errstate(over="ignore", invalid="ignore"):
        for step in range(1, cfg.steps + 1):
            if cfg.method == "explicit-euler":
                W = W + dt * _induced_velocity(W, XXt, YXt, depth)
            else:
                k1 = _induced_velocity(W, XXt, YXt, depth)
                k2 = _induced_velocity(W + 0.5 * dt * k1, XXt, YXt, depth)
                k3 = _induced_velocity(W + 0.5 * dt * k2, XXt, YXt, depth)
                k4 = _induced_velocity(W + dt * k3, XXt, YXt, depth)
                W = W + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
            if step in record_at:
                record(step)
    return _finalize("induced", depth, cfg, times, states, rows)


def record_products(traj: Trajectory) -> list:
    """End-to-end matrix at each record, for either trajectory kind."""
    if traj.kind == "induced":
        return list(traj.states)
    return [end_to_end(net) for net in traj.states]


def singular_triples(traj: Trajectory):
    """Sign-continuous top singular triples (s, u, v) across records."""
    products = record_products(traj)
    s_list, u_list, v_list = [], [], []
    prev_u = None
    for W in products:
        U, s, Vt = np.linalg.svd(W, full_matrices=False)
        u = U[:, 0].copy()
        v = Vt[0].copy()
        if prev_u is not None and float(u @ prev_u) < 0.0:
            u, v = -u, -v
        prev_u = u
        s_list.append(float(s[0]))
        u_list.append(u)
        v_list.append(v)
    return np.array(s_list), np.array(u_list), np.array(v_list)


def alignment_series(traj: Trajectory, target: TargetSpectrum) -> list:
    """AlignmentDiagnostics at every record."""
    s_arr, U_arr, V_arr = singular_triples(traj)
    out = []
    for s_t, u, v in zip(s_arr, U_arr, V_arr):
        a = float(target.u @ u)
        b = float(target.v @ v)
        corr = target.s * a * b
        out.append(
            AlignmentDiagnostics(a=a, b=b, t1=0.5 * (s_t - corr) ** 2, t2=target.s - corr)
        )
    return out


def check_product_consistency(traj_factor: Trajectory, traj_induced: Trajectory) -> float:
    """Max gap over records between the layer product and the induced state."""
    if traj_factor.times.size != traj_induced.times.size or not np.allclose(
        traj_factor.times, traj_induced.times, rtol=0.0, atol=1e-12 * (1.0 + traj_factor.times[-1])
    ):
        raise ValueError("trajectories were recorded on different time grids")
    gaps = [
        float(np.linalg.norm(P - W))
        for P, W in zip(record_products(traj_factor), record_products(traj_induced))
    ]
    return max(gaps)


def _require_rank_one(traj: Trajectory):
    s_t = traj.metrics["s_t"]
    min_sv = traj.metrics["min_sv"]
    products = record_products(traj)
    if min(products[0].shape) == 1:
        return
    if np.any(min_sv > 1e-6 * np.maximum(s_t, 1e-300)):
        raise ValueError("trajectory is not numerically rank one; checker unsupported")


def _middle_interior(n_records: int) -> np.ndarray:
    """Interior record indices, trimmed by 10% on each end."""
    inner = np.arange(1, n_records - 1)
    trim = int(math.ceil(0.1 * inner.size))
    if inner.size > 2 * trim:
        inner = inner[trim : inner.size - trim]
    return inner


def _rel_errors(fd: np.ndarray, cf: np.ndarray) -> np.ndarray:
    scale = float(np.max(np.abs(cf))) if cf.size else 0.0
    denom = np.maximum(np.abs(cf), max(REL_FLOOR_FRACTION * scale, 1e-300))
    return np.abs(fd - cf) / denom


def check_singular_value_ode(traj: Trajectory, data, depth: int) -> DerivativeCheckReport:
    """Central-difference ds/dt against -N s^(2-2/N) u^T (W XX^T - Y X^T) v.

    Requires a numerically rank-one trajectory. Errors are reported over the
    middle 80% of interior records; the ends carry one-sided noise.
    """
    _require_rank_one(traj)
    s_arr, U_arr, V_arr = singular_triples(traj)
    products = record_products(traj)
    XXt = data.X @ data.X.T
    YXt = data.Y @ data.X.T
    t = traj.times
    cf = np.empty(t.size)
    for k, W in enumerate(products):
        G = W @ XXt - YXt
        cf[k] = -depth * s_arr[k] ** (2.0 - 2.0 / depth) * float(U_arr[k] @ G @ V_arr[k])
    idx = _middle_interior(t.size)
    fd = (s_arr[idx + 1] - s_arr[idx - 1]) / (t[idx + 1] - t[idx - 1])
    rel = _rel_errors(fd, cf[idx])
    spacing = float(np.median(np.diff(t)))
    return DerivativeCheckReport(
        max_rel_error=float(np.max(rel)) if rel.size else 0.0,
        records_compared=int(idx.size),
        record_spacing=spacing,
        rel_errors=rel,
    )


def check_singular_vector_ode(traj: Trajectory, data, depth: int) -> DerivativeCheckReport:
    """Central differences of u_t and v_t against their whitened closed forms.

    du/dt = m s^(1-2/N) (I - u u^T) Z v and the mirrored equation for v.
    Reported error is the max over both direction series.
    """
    if not data.whitened:
        raise ValueError("direction closed forms assume whitened data")
    _require_rank_one(traj)
    s_arr, U_arr, V_arr = singular_triples(traj)
    Z = data.Y @ data.X.T / data.m
    m = data.m
    t = traj.times
    cf_u = np.empty_like(U_arr)
    cf_v = np.empty_like(V_arr)
    for k in range(t.size):
        u, v = U_arr[k], V_arr[k]
        pref = m * s_arr[k] ** (1.0 - 2.0 / depth)
        Zv = Z @ v
        Ztu = Z.T @ u
        cf_u[k] = pref * (Zv - float(u @ Zv) * u)
        cf_v[k] = pref * (Ztu - float(v @ Ztu) * v)
    idx = _middle_interior(t.size)
    dtpair = (t[idx + 1] - t[idx - 1])[:, None]
    fd_u = (U_arr[idx + 1] - U_arr[idx - 1]) / dtpair
    fd_v = (V_arr[idx + 1] - V_arr[idx - 1]) / dtpair
    rels = []
    for fd, cf in ((fd_u, cf_u[idx]), (fd_v, cf_v[idx])):
        fd_n = np.linalg.norm(fd, axis=1)
        cf_n = np.linalg.norm(cf, axis=1)
        err = np.linalg.norm(fd - cf, axis=1)
        scale = float(np.max(cf_n)) if cf_n.size else 0.0
        denom = np.maximum(cf_n, max(REL_FLOOR_FRACTION * scale, 1e-300))
        rels.append(err / denom)
    rel = np.concatenate(rels) if rels else np.empty(0)
    spacing = float(np.median(np.diff(t)))
    return DerivativeCheckReport(
        max_rel_error=float(np.max(rel)) if rel.size else 0.0,
        records_compared=int(idx.size),
        record_spacing=spacing,
        rel_errors=rel,
    )


def write_trajectory_csv(traj: Trajectory, path) -> Path:
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
        writer.writerow(METRIC_COLUMNS)
        for k in range(len(traj)):
            row = [repr(float(traj.times[k]))]
            for key in METRIC_COLUMNS[1:]:
                val = traj.metrics[key][k]
                row.append(val if key == "regime" else repr(float(val)))
            writer.writerow(row)
    return path


def read_trajectory_csv(path):
    """Load a trajectory CSV back as (meta, columns). Lossless for floats."""
    path = Path(path)
    meta = {}
    with path.open() as fh:
        lines = fh.read().splitlines()
    body = []
    for line in lines:
        if line.startswith("#"):
            for tok in line[1:].split():
                if "=" in tok:
                    key, val = tok.split("=", 1)
                    meta[key] = val
        elif line.strip():
            body.append(line)
    reader = csv.reader(body)
    header = next(reader)
    cols = {name: [] for name in header}
    for row in reader:
        for name, val in zip(header, row):
            cols[name].append(val if name == "regime" else float(val))
    return meta, {
        name: (np.array(vals, dtype=object) if name == "regime" else np.array(vals))
        for name, vals in cols.items()
    }
