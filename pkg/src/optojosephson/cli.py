"""Command-line front end: ``optojosephson {simulate,fixed-points,lyapunov,sweep,scenarios}``.

Parameter precedence, lowest to highest: built-in defaults (the benchmark
parameters and initial state), ``--scenario``, the JSON ``--config`` file,
individual flags.  Exit codes: 0 success, 2 usage or configuration error,
3 numerical failure.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .analysis.fixed_points import find_fixed_points
from .analysis.lyapunov import LYAPUNOV_CONFIG, lyapunov_spectrum, max_lyapunov_two_trajectory
from .analysis.regime import classify_regime
from .exceptions import (ConvergenceError, DomainError, EigensolverError, IntegrationError,
                         SpecHashMismatch, UnsupportedConfigurationError)
from .integrate import FLOAT_FMT, IntegratorConfig, integrate
from .model import State, SystemParams, control_params
from .scenarios import SCENARIOS, get_scenario
from .sweep import SweepSpec, resume_sweep, run_sweep

EXIT_OK, EXIT_USAGE, EXIT_NUMERICAL = 0, 2, 3

CONFIG_KEYS = {"scenario", "params", "initial", "integrator", "lyapunov", "q"}
PARAM_FLAGS = (("g", "g"), ("lambda", "lambda"), ("n0", "n0"), ("kappa", "kappa"),
               ("gamma", "gamma"), ("n-th", "n_th"))
STATE_FLAGS = (("x0", "x"), ("p0", "p"), ("z0", "z"), ("phi0", "phi"), ("q0", "q"))
INTEGRATOR_FLAGS = (("t-end", "t_end"), ("sample-dt", "sample_dt"), ("rtol", "rtol"),
                    ("atol", "atol"), ("h-max", "h_max"), ("h-init", "h_init"))


class UsageError(Exception):
    pass


def _write_json(path: Path, data) -> Path:
    path.write_text(json.dumps(data, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return path


def _load_config(path: Optional[str]) -> dict:
    if path is None:
        return {}
    try:
        data = json.loads(Path(path).read_text(encoding="utf-8"))
    except FileNotFoundError:
        raise UsageError(f"config: file not found: {path}") from None
    except json.JSONDecodeError as exc:
        raise UsageError(f"config: invalid JSON in {path}: {exc}") from None
    if not isinstance(data, dict):
        raise UsageError("config: top level must be a JSON object")
    unknown = set(data) - CONFIG_KEYS
    if unknown:
        raise UsageError(f"config: unknown field(s) {', '.join(sorted(unknown))}")
    return data


def _section(config: dict, key: str) -> dict:
    value = config.get(key, {})
    if not isinstance(value, dict):
        raise UsageError(f"config: field {key!r} must be an object")
    return value


def _flag_values(args, flags) -> dict:
    out = {}
    for flag, key in flags:
        value = getattr(args, flag.replace("-", "_"), None)
        if value is not None:
            out[key] = value
    return out


def resolve_setup(args, config: dict):
    """Merge defaults, scenario, config file and flags into (params, state, integrator)."""
    name = args.scenario or config.get("scenario") or "fig3a"
    scenario = get_scenario(name)
    params = {**scenario.params.to_dict(), **_section(config, "params"), **_flag_values(args, PARAM_FLAGS)}
    state = {**scenario.initial.to_dict(), **_section(config, "initial"), **_flag_values(args, STATE_FLAGS)}
    integ = {**IntegratorConfig(t_end=scenario.t_end).to_dict(), **_section(config, "integrator"),
             **_flag_values(args, INTEGRATOR_FLAGS)}
    return (SystemParams.from_dict(params), State.from_dict(state),
            IntegratorConfig.from_dict(integ))


def _add_common(p: argparse.ArgumentParser, formats: bool = False):
    p.add_argument("--output-dir", default=".", help="directory for output files (default: .)")
    p.add_argument("--quiet", action="store_true", help="suppress informational output")
    if formats:
        p.add_argument("--format", choices=("csv", "json"), default="csv")


def _add_setup(p: argparse.ArgumentParser, integrator: bool = True):
    p.add_argument("--config", help="JSON file with scenario/params/initial/integrator sections")
    p.add_argument("--scenario", choices=sorted(SCENARIOS))
    for flag, _ in PARAM_FLAGS:
        p.add_argument(f"--{flag}", type=float)
    for flag, _ in STATE_FLAGS:
        p.add_argument(f"--{flag}", type=float)
    if integrator:
        for flag, _ in INTEGRATOR_FLAGS:
            p.add_argument(f"--{flag}", type=float)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="optojosephson",
                                     description="Mean-field photon tunnelling in a membrane-in-the-middle cavity.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="integrate one trajectory")
    _add_setup(p)
    _add_common(p, formats=True)
    p.add_argument("--name", help="output file stem (default: scenario name or 'trajectory')")
    p.add_argument("--classify", action="store_true", help="also write the regime label")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("fixed-points", help="enumerate and classify equilibria")
    _add_setup(p, integrator=False)
    _add_common(p)
    p.add_argument("--q", type=float, help="photon-number level for lossless runs (default 1)")
    p.set_defaults(func=cmd_fixed_points)

    p = sub.add_parser("lyapunov", help="Lyapunov exponents of one trajectory")
    _add_setup(p, integrator=False)
    _add_common(p, formats=True)
    p.add_argument("--horizon", type=float, default=2000.0)
    p.add_argument("--renorm-dt", type=float, default=1.0)
    p.add_argument("--transient", type=float, default=100.0)
    p.add_argument("--method", choices=("qr", "two-trajectory"), default="qr")
    p.add_argument("--d0", type=float, default=1e-8, help="initial separation (two-trajectory)")
    p.set_defaults(func=cmd_lyapunov)

    p = sub.add_parser("sweep", help="phase-diagram sweep from a JSON spec")
    p.add_argument("spec", nargs="?", help="sweep spec JSON (optional with --resume)")
    p.add_argument("--workers", type=int)
    p.add_argument("--checkpoint", help="checkpoint path (NDJSON)")
    p.add_argument("--resume", action="store_true", help="continue from --checkpoint")
    p.add_argument("--max-cells", type=int, help="stop after computing this many new cells")
    _add_common(p)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("scenarios", help="list the preset scenarios")
    _add_common(p)
    p.set_defaults(func=cmd_scenarios)
    return parser


def _say(args, msg):
    if not args.quiet:
        print(msg)


def cmd_simulate(args) -> int:
    config = _load_config(args.config)
    params, s0, integ = resolve_setup(args, config)
    out_dir = Path(args.output_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    stem = out_dir / (args.name or args.scenario or config.get("scenario") or "trajectory")
    try:
        traj = integrate(params, s0, integ)
    except IntegrationError as exc:
        if exc.partial is not None:
            exc.partial.save(str(stem) + ".partial", args.format)
        raise
    paths = traj.save(stem, args.format)
    if args.classify:
        label = classify_regime(traj, params)
        paths.append(_write_json(Path(str(stem) + ".regime.json"), label.to_dict()))
        _say(args, f"regime: {label.label}")
    for path in paths:
        _say(args, f"wrote {path}")
    return EXIT_OK


def cmd_fixed_points(args) -> int:
    config = _load_config(args.config)
    params, _, _ = resolve_setup(args, config)
    q = args.q if args.q is not None else config.get("q")
    fps = find_fixed_points(params, q=q)
    report = {"params": params.to_dict(), "control_params": control_params(params).to_dict(),
              "fixed_points": [fp.to_dict() for fp in fps]}
    out_dir = Path(args.output_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    path = _write_json(out_dir / "fixed_points.json", report)
    for fp in fps:
        s = fp.state
        _say(args, f"{fp.family:15s} {fp.stability:9s} x={s.x:.10g} p={s.p:.10g} "
                   f"z={s.z:.10g} phi={s.phi:.10g} q={s.q:.10g}")
    _say(args, f"wrote {path}")
    return EXIT_OK


def cmd_lyapunov(args) -> int:
    config = _load_config(args.config)
    params, s0, _ = resolve_setup(args, config)
    lyap = {"horizon": args.horizon, "renorm_dt": args.renorm_dt, "transient": args.transient,
            **_section(config, "lyapunov")}
    out_dir = Path(args.output_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    paths = []
    if args.method == "two-trajectory":
        value = max_lyapunov_two_trajectory(params, s0, lyap["horizon"], args.d0,
                                            renorm_dt=lyap["renorm_dt"], transient=lyap["transient"])
        report = {"method": "two-trajectory", "max_exponent": value, "d0": args.d0,
                  "params": params.to_dict(), **lyap}
        _say(args, f"max exponent {value:.6g}")
    else:
        result = lyapunov_spectrum(params, s0, lyap["horizon"], lyap["renorm_dt"], lyap["transient"],
                                   config=LYAPUNOV_CONFIG)
        report = {"method": "qr", "max_exponent": result.max_exponent, **result.to_dict()}
        _say(args, "exponents " + " ".join(f"{v:.6g}" for v in result.exponents)
             + f"  (sum {result.total:.3g})")
        if args.format == "csv":
            path = out_dir / "lyapunov_trace.csv"
            np.savetxt(path, result.trace, delimiter=",", fmt=FLOAT_FMT, comments="",
                       header="t," + ",".join(f"l{i + 1}" for i in range(result.trace.shape[1] - 1)),
                       encoding="utf-8")
            paths.append(path)
    paths.insert(0, _write_json(out_dir / "lyapunov.json", report))
    for path in paths:
        _say(args, f"wrote {path}")
    return EXIT_OK


def cmd_sweep(args) -> int:
    if args.resume:
        if not args.checkpoint:
            raise UsageError("sweep: --resume needs --checkpoint")
        spec = None
        if args.spec:
            spec = SweepSpec.from_dict(_load_json_object(args.spec, "sweep spec"))
        diagram = resume_sweep(args.checkpoint, spec, workers=args.workers, max_new_cells=args.max_cells)
    else:
        if not args.spec:
            raise UsageError("sweep: a spec file is required")
        data = _load_json_object(args.spec, "sweep spec")
        if args.workers is not None:
            data["workers"] = args.workers
        if args.checkpoint is not None:
            data["checkpoint_path"] = args.checkpoint
        diagram = run_sweep(SweepSpec.from_dict(data), max_new_cells=args.max_cells)
    for path in diagram.write(args.output_dir):
        _say(args, f"wrote {path}")
    _say(args, f"{diagram.status}: {len(diagram.cells)}/{diagram.spec.n_cells} cells")
    return EXIT_OK


def _load_json_object(path: str, what: str) -> dict:
    try:
        data = json.loads(Path(path).read_text(encoding="utf-8"))
    except FileNotFoundError:
        raise UsageError(f"{what}: file not found: {path}") from None
    except json.JSONDecodeError as exc:
        raise UsageError(f"{what}: invalid JSON in {path}: {exc}") from None
    if not isinstance(data, dict):
        raise UsageError(f"{what}: top level must be a JSON object")
    return data


def cmd_scenarios(args) -> int:
    listing = {name: sc.to_dict() for name, sc in SCENARIOS.items()}
    if args.output_dir != ".":
        out_dir = Path(args.output_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        _say(args, f"wrote {_write_json(out_dir / 'scenarios.json', listing)}")
    for name, sc in SCENARIOS.items():
        p = sc.params
        _say(args, f"{name}: g={p.g} lambda={p.lam} n0={p.n0} gamma={p.gamma} "
                   f"kappa={p.kappa} n_th={p.n_th} t_end={sc.t_end}  {sc.description}")
    return EXIT_OK


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.WARNING if args.quiet else logging.INFO,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (UsageError, DomainError, UnsupportedConfigurationError, SpecHashMismatch) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (IntegrationError, ConvergenceError, EigensolverError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
