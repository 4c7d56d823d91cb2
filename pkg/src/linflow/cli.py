"""Command-line harness: seeded runs, artifact emission, check suites.

One JSON config document drives everything; flags are conveniences that
rewrite config keys, and ``--set a.b=c`` reaches any of them. Every artifact
lands under the config's output_dir next to a manifest naming the files, the
config hash, and the package version, so a run can be re-derived from its
directory alone.

Exit codes are part of the contract: 0 success, 1 failed check, 2 divergent
integration, 3 unreadable config or IO failure, 4 non-stationary endpoint.
"""

from __future__ import annotations

import hashlib
import json
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, replace
from pathlib import Path

import click
import numpy as np

from . import __version__
from .dataset import InstanceSpec, compute_target, generate_instance
from .flows import (
    FAST_REGIME_RATIO,
    DivergenceError,
    IntegratorConfig,
    integrate_factor_flow,
    integrate_induced_flow,
    write_trajectory_csv,
)
from .landscape import classify_stationarity, global_min_value, stationarity_tolerance
from .network import LinearNetwork, balanced_factorization, loss, min_width
from .stability import StableSetParams
from .verify import CHECK_NAMES, DEFAULT_SEED, FIG1_CONFIG, run_all

DEFAULT_DEPTHS = (2, 3, 4, 6)
# Reaching the stationarity tolerance takes about a unit of flow time, far
# beyond the reference-figure horizon, so the landscape command swaps in a
# longer, higher-order integrator unless the user chose one explicitly.
LANDSCAPE_INTEGRATOR = IntegratorConfig(method="rk4", dt=1e-5, steps=150_000, record_every=1000)


class ConfigError(Exception):
    """Unreadable or invalid run configuration."""


@dataclass(frozen=True)
class RunConfig:
    instance: InstanceSpec
    depth_list: tuple
    integrator: IntegratorConfig
    stable_params: StableSetParams
    checks: tuple
    output_dir: str

    def to_dict(self) -> dict:
        return {
            "instance": asdict(self.instance),
            "depth_list": list(self.depth_list),
            "integrator": asdict(self.integrator),
            "stable_params": asdict(self.stable_params),
            "checks": list(self.checks),
            "output_dir": self.output_dir,
        }


def default_config_dict() -> dict:
    return {
        "instance": {
            "d_x": 5,
            "d_y": 1,
            "m": 50,
            "seed": DEFAULT_SEED,
            "init_angle_deg": 30.0,
            "init_scale": 10.0,
        },
        "depth_list": list(DEFAULT_DEPTHS),
        "integrator": asdict(FIG1_CONFIG),
        "stable_params": {"alpha": 0.8, "beta": 2.0},
        "checks": list(CHECK_NAMES),
        "output_dir": "linflow-out",
    }


def _parse_override(text: str):
    if "=" not in text:
        raise ConfigError(f"--set needs KEY=VALUE, got {text!r}")
    key, raw = text.split("=", 1)
    try:
        value = json.loads(raw)
    except json.JSONDecodeError:
        value = raw  # unquoted strings like rk4 arrive verbatim
    return key.strip(), value


def _apply_dotted(doc: dict, key: str, value):
    parts = key.split(".")
    node = doc
    for part in parts[:-1]:
        if not isinstance(node.get(part), dict):
            raise ConfigError(f"config has no section {part!r} (from {key!r})")
        node = node[part]
    if parts[-1] not in node:
        raise ConfigError(f"unknown config key {key!r}")
    node[parts[-1]] = value


def _merge(base: dict, extra: dict, prefix=""):
    for k, v in extra.items():
        if k not in base:
            raise ConfigError(f"unknown config key {prefix + k!r}")
        if isinstance(base[k], dict):
            if not isinstance(v, dict):
                raise ConfigError(f"config key {prefix + k!r} must be an object")
            _merge(base[k], v, prefix + k + ".")
        else:
            base[k] = v


def build_config(doc: dict) -> RunConfig:
    try:
        instance = InstanceSpec(**doc["instance"])
        integrator = IntegratorConfig(**doc["integrator"])
        stable = StableSetParams(**doc["stable_params"])
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc
    depths = tuple(int(N) for N in doc["depth_list"])
    if not depths or any(N < 1 for N in depths):
        raise ConfigError("depth_list must be nonempty with every depth >= 1")
    checks = tuple(doc["checks"])
    unknown = [c for c in checks if c not in CHECK_NAMES]
    if unknown:
        raise ConfigError(f"unknown checks {unknown}; valid: {list(CHECK_NAMES)}")
    return RunConfig(
        instance=instance,
        depth_list=depths,
        integrator=integrator,
        stable_params=stable,
        checks=checks,
        output_dir=str(doc["output_dir"]),
    )


def load_config(config_path, seed, out_dir, overrides, steps=None) -> RunConfig:
    doc = default_config_dict()
    if config_path is not None:
        try:
            with open(config_path) as fh:
                user = json.load(fh)
        except OSError as exc:
            raise ConfigError(f"cannot read config: {exc}") from exc
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config is not valid JSON: {exc}") from exc
        if not isinstance(user, dict):
            raise ConfigError("config document must be a JSON object")
        _merge(doc, user)
    for text in overrides:
        key, value = _parse_override(text)
        _apply_dotted(doc, key, value)
    if seed is not None:
        doc["instance"]["seed"] = seed
    if out_dir is not None:
        doc["output_dir"] = str(out_dir)
    if steps is not None:
        doc["integrator"]["steps"] = steps
    return build_config(doc)


def config_hash(cfg: RunConfig) -> str:
    canonical = json.dumps(cfg.to_dict(), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canonical.encode()).hexdigest()


def _write_artifacts(cfg: RunConfig, named_payloads: dict) -> Path:
    """Write config.json, the given files, and a manifest naming them all."""
    outdir = Path(cfg.output_dir)
    outdir.mkdir(parents=True, exist_ok=True)
    files = ["config.json"]
    with open(outdir / "config.json", "w") as fh:
        json.dump(cfg.to_dict(), fh, indent=2, sort_keys=True)
        fh.write("\n")
    for name, writer in named_payloads.items():
        writer(outdir / name)
        files.append(name)
    manifest = {
        "version": __version__,
        "config_hash": config_hash(cfg),
        "files": sorted(files),
    }
    with open(outdir / "manifest.json", "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return outdir


def _pool_size(n_jobs: int) -> int:
    raw = os.environ.get("LINFLOW_THREADS")
    if raw:
        try:
            cap = int(raw)
        except ValueError as exc:
            raise ConfigError(f"LINFLOW_THREADS must be an integer, got {raw!r}") from exc
        if cap < 1:
            raise ConfigError("LINFLOW_THREADS must be >= 1")
    else:
        cap = os.cpu_count() or 1
    return max(1, min(cap, n_jobs))


def _map_depths(depths, job):
    """Independent per-depth jobs; worker failures surface on collection."""
    with ThreadPoolExecutor(max_workers=_pool_size(len(depths))) as pool:
        futures = [(N, pool.submit(job, N)) for N in depths]
        return {N: fut.result() for N, fut in futures}


def _warn_short_horizons(trajectories: dict, target_s: float):
    for N in sorted(trajectories):
        s_t = np.asarray(trajectories[N].metrics["s_t"], dtype=float)
        if not np.any(s_t <= FAST_REGIME_RATIO * target_s):
            click.echo(
                f"warning: depth {N} horizon ends before the fast/slow regime "
                "transition; increase integrator.steps",
                err=True,
            )


def _write_fig1_svg(path, trajectories: dict):
    import matplotlib

    matplotlib.use("Agg", force=True)
    import matplotlib.pyplot as plt

    plt.rcParams["svg.hashsalt"] = "linflow"
    fig, ax = plt.subplots(figsize=(6.4, 4.2))
    for N in sorted(trajectories):
        traj = trajectories[N]
        dist = np.sqrt(np.asarray(traj.metrics["dist_sq"], dtype=float))
        ax.plot(np.asarray(traj.times), dist, label=f"depth {N}")
    ax.set_yscale("log")
    ax.set_xlabel("time")
    ax.set_ylabel("distance to rank-one target")
    ax.set_title("End-to-end flow: depth comparison")
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)


def _chain_for(cfg: RunConfig, depth: int) -> tuple:
    """Width chain (d_x, d_x, ..., d_y): interior layers keep the input width."""
    return (cfg.instance.d_x,) * depth + (cfg.instance.d_y,)


def _common_options(f):
    for opt in reversed(
        (
            click.option("--config", "config_path", type=click.Path(), default=None,
                         help="JSON config document; missing keys fall back to defaults."),
            click.option("--seed", type=int, default=None, help="Override instance.seed."),
            click.option("--out", "out_dir", type=click.Path(), default=None,
                         help="Override output_dir."),
            click.option("--set", "overrides", multiple=True, metavar="KEY=VALUE",
                         help="Dotted-path config override, e.g. integrator.dt=5e-7."),
        )
    ):
        f = opt(f)
    return f


def _exit(code: int):
    raise SystemExit(code)


def _guard_io(body):
    """Map config/IO failures to exit 3 and divergence to exit 2."""
    try:
        return body()
    except ConfigError as exc:
        click.echo(f"config error: {exc}", err=True)
        _exit(3)
    except DivergenceError as exc:
        click.echo(f"divergence: {exc}", err=True)
        _exit(2)
    except OSError as exc:
        click.echo(f"io error: {exc}", err=True)
        _exit(3)


@click.group()
@click.version_option(__version__, prog_name="linflow")
def main():
    """Deep linear network flows: simulation, landscape probes, rate checks."""


@main.command("reproduce-fig1")
@_common_options
@click.option("--steps", type=int, default=None, help="Override integrator.steps.")
def cmd_reproduce_fig1(config_path, seed, out_dir, overrides, steps):
    """Run the depth-comparison experiment and emit CSVs plus fig1.svg."""

    def body():
        cfg = load_config(config_path, seed, out_dir, overrides, steps)
        data, W0 = generate_instance(cfg.instance)
        target = compute_target(data)
        trajectories = _map_depths(
            cfg.depth_list, lambda N: integrate_induced_flow(W0, N, data, cfg.integrator)
        )
        payloads = {
            f"trajectory_N{N}.csv": (lambda p, t=trajectories[N]: write_trajectory_csv(t, p))
            for N in cfg.depth_list
        }
        payloads["fig1.svg"] = lambda p: _write_fig1_svg(p, trajectories)
        outdir = _write_artifacts(cfg, payloads)
        _warn_short_horizons(trajectories, target.s)
        click.echo(f"wrote {len(payloads) + 2} files to {outdir}")
        _exit(0)

    _guard_io(body)


@main.command("simulate")
@_common_options
@click.option("--steps", type=int, default=None, help="Override integrator.steps.")
@click.option("--flow", type=click.Choice(["induced", "factor"]), default="induced",
              help="Integrate the end-to-end flow or the per-layer flow.")
def cmd_simulate(config_path, seed, out_dir, overrides, steps, flow):
    """Integrate the configured instance for each depth and write CSVs."""

    def body():
        cfg = load_config(config_path, seed, out_dir, overrides, steps)
        data, W0 = generate_instance(cfg.instance)
        target = compute_target(data)

        def job(N):
            if flow == "factor":
                net0 = balanced_factorization(W0, _chain_for(cfg, N))
                return integrate_factor_flow(net0, data, cfg.integrator)
            return integrate_induced_flow(W0, N, data, cfg.integrator)

        trajectories = _map_depths(cfg.depth_list, job)
        payloads = {
            f"trajectory_N{N}.csv": (lambda p, t=trajectories[N]: write_trajectory_csv(t, p))
            for N in cfg.depth_list
        }
        outdir = _write_artifacts(cfg, payloads)
        _warn_short_horizons(trajectories, target.s)
        click.echo(f"wrote {len(payloads) + 2} files to {outdir}")
        _exit(0)

    _guard_io(body)


@main.command("verify")
@_common_options
def cmd_verify(config_path, seed, out_dir, overrides):
    """Run the selected check suites and print a pass/fail table."""

    def body():
        cfg = load_config(config_path, seed, out_dir, overrides)
        # A non-default seed reseeds every suite; the default keeps each
        # suite's own battery.
        base = default_config_dict()["instance"]["seed"]
        suite_seed = cfg.instance.seed if cfg.instance.seed != base else None
        results = run_all(cfg.checks, seed=suite_seed)
        width = max(len(r.name) for r in results)
        for r in results:
            status = "PASS" if r.passed else "FAIL"
            click.echo(f"{status}  {r.name:<{width}}  {r.detail}")
        failed = [r.name for r in results if not r.passed]
        if failed:
            click.echo(f"failed checks: {', '.join(failed)}", err=True)
            _exit(1)
        _exit(0)

    _guard_io(body)


@main.command("landscape")
@_common_options
@click.option("--init", "init_mode", type=click.Choice(["balanced", "zero"]),
              default="balanced", help="Start from the balanced factorization of W0 or from zero layers.")
@click.option("--probe-only", is_flag=True,
              help="Classify the initial point without integrating.")
def cmd_landscape(config_path, seed, out_dir, overrides, init_mode, probe_only):
    """Integrate the per-layer flow toward stationarity and classify the endpoint."""

    def body():
        cfg = load_config(config_path, seed, out_dir, overrides)
        if cfg.integrator == FIG1_CONFIG:
            cfg = replace(cfg, integrator=LANDSCAPE_INTEGRATOR)
        depth = cfg.depth_list[0]
        chain = _chain_for(cfg, depth)
        data, W0 = generate_instance(cfg.instance)
        if init_mode == "zero":
            net = LinearNetwork(
                tuple(np.zeros((chain[j + 1], chain[j])) for j in range(depth))
            )
        else:
            net = balanced_factorization(W0, chain)
        if not probe_only:
            traj = integrate_factor_flow(net, data, cfg.integrator)
            net = traj.states[-1]
        report = classify_stationarity(net, data, num_dirs=64, seed=cfg.instance.seed)
        tol = stationarity_tolerance(data)
        end_loss = loss(net, data)
        gm = global_min_value(data, r=min_width(net))
        gap = end_loss - gm
        payload = report.to_json()
        payload.update(
            {
                "depth": depth,
                "chain": list(chain),
                "init": init_mode,
                "probe_only": probe_only,
                "loss": end_loss,
                "global_min_value": gm,
                "loss_gap": gap,
                "tolerance": tol,
                "spurious": bool(gap > tol),
            }
        )

        def write_report(path):
            with open(path, "w") as fh:
                json.dump(payload, fh, indent=2, sort_keys=True)
                fh.write("\n")

        _write_artifacts(cfg, {"stationarity.json": write_report})
        click.echo(
            f"classification: {report.classification}; grad norm {report.grad_norm:.3e} "
            f"(tol {tol:.3e}); loss gap {gap:.3e}; spurious: {payload['spurious']}"
        )
        if not probe_only and report.grad_norm > tol:
            click.echo("endpoint is not stationary at the configured horizon", err=True)
            _exit(4)
        _exit(0)

    _guard_io(body)


if __name__ == "__main__":
    sys.exit(main())
