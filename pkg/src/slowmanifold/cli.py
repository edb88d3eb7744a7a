"""Command-line interface: simulate, sweep, manifold, oracle, verify-lift.

Configuration comes from a JSON file (--config) with flag overrides taking
precedence; unknown keys are rejected.  Every run writes its outputs
atomically and records the resolved configuration and seed in a
manifest.json, so reruns with equal inputs produce byte-identical files.

Exit codes: 0 success, 2 configuration error, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import math
import os
import sys
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from . import __version__
from .bifurcation import (BifurcationReport, DetectionConfig, sweep,
                          verify_lift_attraction)
from .dynamics import NewtonError, SystemParams, example_system, simulate
from .manifold import (LPOracleConfig, OracleError, driving_history, h_order0,
                       h_order1, lp_oracle)
from .noise import derive_seed, init_stationary, make_path
from .reduction import ReducedState, simulate_reduced

__all__ = ["RunConfig", "ConfigError", "load_config", "main"]

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERICAL = 3


class ConfigError(ValueError):
    """Bad configuration file or flag values."""


@dataclasses.dataclass(frozen=True)
class RunConfig:
    """Resolved run configuration shared by all subcommands.

    JSON layout mirrors the fields; ``params``, ``detection``, and
    ``oracle`` are nested objects.
    """

    params: SystemParams = SystemParams(eps=0.01, sigma=0.1, a=0.6)
    detection: DetectionConfig = DetectionConfig()
    oracle: LPOracleConfig = LPOracleConfig()
    seed: int = 0
    out: str = "out"
    horizon: float = 8.0
    scheme_full: str = "implicit"
    scheme_reduced: str = "explicit"
    thin: int = 1
    threads: int = 1
    a_values: tuple[float, ...] = ()
    xi_min: float = -3.0
    xi_max: float = 3.0
    xi_step: float = 0.25
    lift_a: float | None = None
    lift_perturbation: float = 0.3

    def __post_init__(self) -> None:
        if self.scheme_full not in ("explicit", "implicit"):
            raise ValueError(f"scheme_full must be explicit or implicit, got {self.scheme_full!r}")
        if self.scheme_reduced not in ("explicit", "implicit"):
            raise ValueError(
                f"scheme_reduced must be explicit or implicit, got {self.scheme_reduced!r}")
        if self.horizon <= 0.0:
            raise ValueError(f"horizon must be positive, got {self.horizon}")
        if int(self.thin) < 1:
            raise ValueError(f"thin must be at least 1, got {self.thin}")
        if int(self.threads) < 1:
            raise ValueError(f"threads must be at least 1, got {self.threads}")
        if self.xi_step <= 0.0 or self.xi_max < self.xi_min:
            raise ValueError("xi grid needs xi_step > 0 and xi_max >= xi_min")
        if self.lift_perturbation <= 0.0:
            raise ValueError("lift_perturbation must be positive")


def _build_section(cls, data, context: str):
    if not isinstance(data, dict):
        raise ConfigError(f"{context}: expected a JSON object")
    known = {f.name for f in dataclasses.fields(cls)}
    unknown = sorted(set(data) - known)
    if unknown:
        raise ConfigError(f"{context}: unknown keys {unknown}")
    kwargs = {}
    for name, value in data.items():
        if isinstance(value, list):
            value = tuple(value)
        kwargs[name] = value
    try:
        return cls(**kwargs)
    except (TypeError, ValueError) as err:
        raise ConfigError(f"{context}: {err}") from None


_SECTIONS = {"params": SystemParams, "detection": DetectionConfig, "oracle": LPOracleConfig}


def load_config(path: str | None, overrides: dict | None = None) -> RunConfig:
    """Load a RunConfig from JSON, rejecting unknown keys, then apply flag
    overrides (None values are ignored)."""
    raw: dict = {}
    if path is not None:
        try:
            with open(path, "r", encoding="utf-8") as fh:
                raw = json.load(fh)
        except OSError as err:
            raise ConfigError(f"cannot read config {path}: {err}") from None
        except json.JSONDecodeError as err:
            raise ConfigError(f"{path}: invalid JSON: {err}") from None
    if not isinstance(raw, dict):
        raise ConfigError("config root must be a JSON object")
    known = {f.name for f in dataclasses.fields(RunConfig)}
    unknown = sorted(set(raw) - known)
    if unknown:
        raise ConfigError(f"config: unknown keys {unknown}")
    kwargs = {}
    for name, cls in _SECTIONS.items():
        if name in raw:
            kwargs[name] = _build_section(cls, raw[name], name)
    for field in dataclasses.fields(RunConfig):
        if field.name in _SECTIONS or field.name not in raw:
            continue
        value = raw[field.name]
        if isinstance(value, list):
            value = tuple(value)
        kwargs[field.name] = value
    try:
        cfg = RunConfig(**kwargs)
        if overrides:
            cfg = dataclasses.replace(
                cfg, **{k: v for k, v in overrides.items() if v is not None})
    except (TypeError, ValueError) as err:
        if isinstance(err, ConfigError):
            raise
        raise ConfigError(str(err)) from None
    return cfg


def _atomic_write(path: str, text: str) -> None:
    tmp = f"{path}.tmp.{os.getpid()}"
    with open(tmp, "w", encoding="utf-8") as fh:
        fh.write(text)
    os.replace(tmp, path)


def _fmt(value: float) -> str:
    return repr(float(value))


def _write_csv(path: str, comments: list[str], header: list[str], rows) -> None:
    lines = [f"# {c}" for c in comments]
    lines.append(",".join(header))
    for row in rows:
        lines.append(",".join(_fmt(v) for v in row))
    _atomic_write(path, "\n".join(lines) + "\n")


def _config_doc(cfg: RunConfig) -> dict:
    doc = dataclasses.asdict(cfg)
    # location and parallelism do not affect numerics; keeping them out of
    # the manifest lets byte-identical runs land in different directories
    doc.pop("out", None)
    doc.pop("threads", None)
    return doc


def _write_manifest(cfg: RunConfig, command: str, outputs: list[str],
                    extra: dict | None = None) -> None:
    doc = {
        "package": "slowmanifold",
        "version": __version__,
        "command": command,
        "seed": cfg.seed,
        "config": _config_doc(cfg),
        "outputs": sorted(outputs),
    }
    if extra:
        doc.update(extra)
    _atomic_write(os.path.join(cfg.out, "manifest.json"),
                  json.dumps(doc, indent=2, sort_keys=True) + "\n")


def _param_comment(cfg: RunConfig, **extras) -> str:
    p = cfg.params
    parts = [f"eps={p.eps}", f"sigma={p.sigma}", f"a={p.a}", f"seed={cfg.seed}"]
    parts += [f"{k}={v}" for k, v in extras.items()]
    return " ".join(parts)


def cmd_simulate(cfg: RunConfig, dump_paths: bool = False) -> int:
    """Run the full system and the reduced model from every configured
    initial condition with shared noise, writing one CSV per trajectory."""
    os.makedirs(cfg.out, exist_ok=True)
    p = cfg.params
    system = example_system(p)
    det = cfg.detection

    def run_one(i: int):
        x0 = det.initial_x[i]
        path = make_path(derive_seed(cfg.seed, 0, i), 0.0, cfg.horizon, det.dt)
        drv0 = init_stationary(derive_seed(cfg.seed, 1, i), p.sigma)
        full = simulate(system, (x0, det.initial_y), path, scheme=cfg.scheme_full,
                        window=det.escape_window, driving=drv0)
        reduced = simulate_reduced(ReducedState(x0, drv0), path, p,
                                   scheme=cfg.scheme_reduced, window=det.escape_window)
        return path, full, reduced

    indices = range(len(det.initial_x))
    if cfg.threads > 1:
        with ThreadPoolExecutor(max_workers=cfg.threads) as pool:
            results = list(pool.map(run_one, indices))
    else:
        results = [run_one(i) for i in indices]

    outputs = []
    for i, (path, full, reduced) in zip(indices, results):
        name = f"full_{i}.csv"
        rows = np.column_stack([full.times, full.states, full.driving])[::cfg.thin]
        _write_csv(os.path.join(cfg.out, name),
                   [f"slowmanifold simulate v{__version__}",
                    _param_comment(cfg, system="full", trajectory=i,
                                   scheme=cfg.scheme_full, dt=det.dt, thin=cfg.thin,
                                   divergent=full.divergent)],
                   ["t", "x", "y", "z", "J", "I"], rows)
        outputs.append(name)
        name = f"reduced_{i}.csv"
        rows = np.column_stack([reduced.times, reduced.states[:, 0],
                                reduced.driving[:, 0], reduced.driving[:, 2]])[::cfg.thin]
        _write_csv(os.path.join(cfg.out, name),
                   [f"slowmanifold simulate v{__version__}",
                    _param_comment(cfg, system="reduced", trajectory=i,
                                   scheme=cfg.scheme_reduced, dt=det.dt, thin=cfg.thin,
                                   divergent=reduced.divergent)],
                   ["t", "x", "z", "I"], rows)
        outputs.append(name)
        if dump_paths:
            name = f"path_{i}.csv"
            rows = np.column_stack([path.times, path.increments])
            _write_csv(os.path.join(cfg.out, name),
                       [f"slowmanifold simulate v{__version__}",
                        _param_comment(cfg, trajectory=i, dt=det.dt)],
                       ["t", "dW"], rows)
            outputs.append(name)
    _write_manifest(cfg, "simulate", outputs)
    print(f"wrote {len(outputs)} files to {cfg.out}")
    return EXIT_OK


def _sweep_csv_lines(report: BifurcationReport) -> list[str]:
    max_count = 0
    for entry in report.entries:
        for rep in (entry.full, entry.reduced):
            if rep is not None:
                max_count = max(max_count, rep.count)
    header = (["a", "system", "count"]
              + [f"pos_{j + 1}" for j in range(max_count)]
              + ["divergent", "unsettled"])
    lines = [",".join(header)]
    for entry in report.entries:
        for kind, rep in (("full", entry.full), ("reduced", entry.reduced)):
            if rep is None:
                continue
            cells = [_fmt(entry.a), kind, str(rep.count)]
            cells += [_fmt(x) for x in rep.positions]
            cells += [""] * (max_count - rep.count)
            cells += [str(rep.divergent), str(rep.unsettled)]
            lines.append(",".join(cells))
    return lines


def cmd_sweep(cfg: RunConfig) -> int:
    """Sweep the bifurcation parameter for both systems; inconclusive
    entries are flagged in the report, not fatal."""
    if not cfg.a_values:
        raise ConfigError("sweep needs a non-empty a_values list")
    os.makedirs(cfg.out, exist_ok=True)
    report = sweep(cfg.a_values, cfg.params, cfg.detection, cfg.seed,
                   threads=cfg.threads)
    doc = dataclasses.asdict(report)
    _atomic_write(os.path.join(cfg.out, "bifurcation.json"),
                  json.dumps(doc, indent=2, sort_keys=True) + "\n")
    _atomic_write(os.path.join(cfg.out, "bifurcation.csv"),
                  "\n".join(_sweep_csv_lines(report)) + "\n")
    _write_manifest(cfg, "sweep", ["bifurcation.json", "bifurcation.csv"])
    for entry in report.entries:
        for kind, err in (("full", entry.full_error), ("reduced", entry.reduced_error)):
            if err is not None:
                print(f"warning: a={entry.a} {kind}: {err}", file=sys.stderr)
    counts = {e.a: (None if e.full is None else e.full.count,
                    None if e.reduced is None else e.reduced.count)
              for e in report.entries}
    print(f"sweep complete: counts (full, reduced) by a: {counts}")
    return EXIT_OK


def _xi_grid(cfg: RunConfig) -> np.ndarray:
    n = int(round((cfg.xi_max - cfg.xi_min) / cfg.xi_step)) + 1
    return cfg.xi_min + cfg.xi_step * np.arange(n)


def cmd_manifold(cfg: RunConfig) -> int:
    """Tabulate both manifold expansions against the oracle on a xi grid."""
    os.makedirs(cfg.out, exist_ok=True)
    history = driving_history(derive_seed(cfg.seed, 1, 0), cfg.params.sigma, cfg.oracle)
    end = history.end_state()
    rows = []
    failures = 0
    max_diff = 0.0
    for xi in _xi_grid(cfg):
        v0 = h_order0(float(xi), end.z)
        v1 = h_order1(float(xi), end, cfg.params)
        try:
            value = lp_oracle(float(xi), history, cfg.params, cfg.oracle).value
            max_diff = max(max_diff, abs(v1 - value))
        except OracleError as err:
            print(f"warning: oracle did not converge at xi={xi}: {err}", file=sys.stderr)
            value = math.nan
            failures += 1
        rows.append((xi, v0, v1, value))
    _write_csv(os.path.join(cfg.out, "manifold.csv"),
               [f"slowmanifold manifold v{__version__}",
                _param_comment(cfg, past_horizon=cfg.oracle.past_horizon,
                               quadrature_dt=cfg.oracle.quadrature_dt)],
               ["xi", "h0", "h1", "oracle"], rows)
    _write_manifest(cfg, "manifold", ["manifold.csv"],
                    extra={"max_abs_h1_minus_oracle": max_diff,
                           "oracle_failures": failures})
    print(f"max |h1 - oracle| = {max_diff:.6g} over {len(rows)} points"
          + (f" ({failures} oracle failures)" if failures else ""))
    return EXIT_NUMERICAL if failures else EXIT_OK


def cmd_oracle(cfg: RunConfig, xi: float) -> int:
    """Print oracle convergence diagnostics for a single xi as JSON."""
    history = driving_history(derive_seed(cfg.seed, 1, 0), cfg.params.sigma, cfg.oracle)
    end = history.end_state()
    h1_value = h_order1(xi, end, cfg.params)
    result = lp_oracle(xi, history, cfg.params, cfg.oracle)
    print(json.dumps({
        "xi": xi,
        "value": result.value,
        "sweeps": result.sweeps,
        "deltas": list(result.deltas),
        "h0": h_order0(xi, end.z),
        "h1": h1_value,
        "abs_diff_h1": abs(h1_value - result.value),
    }, indent=2, sort_keys=True))
    return EXIT_OK


def cmd_verify_lift(cfg: RunConfig, a: float | None, perturbation: float | None) -> int:
    """Run the lift-attraction check and write its report."""
    os.makedirs(cfg.out, exist_ok=True)
    a_eff = a if a is not None else (cfg.lift_a if cfg.lift_a is not None else cfg.params.a)
    pert = perturbation if perturbation is not None else cfg.lift_perturbation
    report = verify_lift_attraction(a_eff, cfg.params, cfg.detection, cfg.seed, pert)
    _atomic_write(os.path.join(cfg.out, "lift.json"),
                  json.dumps(dataclasses.asdict(report), indent=2, sort_keys=True) + "\n")
    _write_manifest(cfg, "verify-lift", ["lift.json"])
    verdict = "PASS" if report.passed else "FAIL"
    print(f"lift attraction at a={report.a}: {verdict} "
          f"(threshold {report.threshold:.4g}, hits at {report.times_to_threshold}, "
          f"deadline {report.deadline})")
    return EXIT_OK


def _build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON config file")
    common.add_argument("--seed", type=int, help="master seed (overrides config)")
    common.add_argument("--out", help="output directory (overrides config)")
    common.add_argument("--threads", type=int, help="worker threads (overrides config)")
    common.add_argument("--thin", type=int, help="keep every n-th output sample")

    parser = argparse.ArgumentParser(
        prog="slowmanifold",
        description="Simulate a noisy slow-fast system, its slow-manifold "
                    "reduction, and the equilibria they detect.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", parents=[common],
                       help="integrate full and reduced trajectories with shared noise")
    p.add_argument("--horizon", type=float, help="integration time (overrides config)")
    p.add_argument("--dump-path", action="store_true",
                   help="also write the Brownian increments per trajectory")

    sub.add_parser("sweep", parents=[common],
                   help="detect equilibria for both systems across a_values")

    sub.add_parser("manifold", parents=[common],
                   help="tabulate manifold expansions against the oracle")

    p = sub.add_parser("oracle", parents=[common],
                       help="oracle convergence diagnostics at one xi")
    p.add_argument("--xi", type=float, required=True)

    p = sub.add_parser("verify-lift", parents=[common],
                       help="check that perturbed lifts fall back to the manifold")
    p.add_argument("--a", type=float, help="bifurcation parameter (overrides config)")
    p.add_argument("--perturbation", type=float, help="fast-variable offset")
    return parser


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    override_names = ("seed", "out", "threads", "thin", "horizon")
    overrides = {k: getattr(args, k) for k in override_names if hasattr(args, k)}
    try:
        cfg = load_config(args.config, overrides)
        if args.command == "simulate":
            return cmd_simulate(cfg, dump_paths=args.dump_path)
        if args.command == "sweep":
            return cmd_sweep(cfg)
        if args.command == "manifold":
            return cmd_manifold(cfg)
        if args.command == "oracle":
            return cmd_oracle(cfg, args.xi)
        if args.command == "verify-lift":
            return cmd_verify_lift(cfg, args.a, args.perturbation)
        raise ConfigError(f"unknown command {args.command!r}")
    except ConfigError as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_CONFIG
    except (NewtonError, OracleError) as err:
        print(f"numerical failure: {err}", file=sys.stderr)
        return EXIT_NUMERICAL
