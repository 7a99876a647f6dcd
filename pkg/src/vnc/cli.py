"""Command-line front end.

Exit codes:

* 0: success
* 1: a check failed (``check``), or an unexpected runtime error
* 2: configuration error (bad arguments, schema violation, parse error,
  invalid metric or constraints)
* 3: the control (or the constrained connection) is unavailable: nonexistent
  or nonunique control, or loss of transversality
* 4: integration failure (non-finite state, expression domain error)
"""

from __future__ import annotations

import argparse
import json
import math
import sys
import warnings
from importlib import resources

import numpy as np

from vnc import exprlang
from vnc.checks import run_checks, validate_system
from vnc.connections import christoffel_fd, christoffel_of
from vnc.dynamics import (
    FORMULATIONS,
    Trajectory,
    compare_trajectories,
    random_on_distribution_states,
    simulate,
)
from vnc.errors import (
    ControlUnavailable,
    DomainError,
    GridMismatch,
    InvalidSystem,
    NotTransversal,
    RankDeficientConstraints,
    StepFailure,
)
from vnc.exprlang import ParseError
from vnc.state import TangentState
from vnc.systems import BUILTINS, ROLLING_DISK_APPENDIX, from_config, get_builtin

EXIT_OK, EXIT_CHECK_FAILED, EXIT_CONFIG, EXIT_CONTROL, EXIT_STEP = 0, 1, 2, 3, 4
SCHEMA_VERSION = 1
DRIFT_REPORT_TOL = 1e-8


class ConfigError(Exception):
    pass


def load_schema() -> dict:
    text = resources.files("vnc").joinpath("schemas/system-config.v1.json").read_text()
    return json.loads(text)


def validate_config(cfg: dict) -> None:
    import jsonschema

    try:
        jsonschema.validate(cfg, load_schema())
    except jsonschema.ValidationError as exc:
        path = "/".join(str(p) for p in exc.absolute_path)
        raise ConfigError(f"config invalid at '{path}': {exc.message}") from None


def _vector(text: str | None):
    if text is None:
        return None
    try:
        return [float(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise ConfigError(f"cannot read {text!r} as a comma-separated vector") from None


def _params(items) -> dict[str, float]:
    out = {}
    for item in items or []:
        if "=" not in item:
            raise ConfigError(f"--param expects NAME=VALUE, got {item!r}")
        k, v = item.split("=", 1)
        try:
            out[k.strip()] = float(v)
        except ValueError:
            raise ConfigError(f"--param {k}: {v!r} is not a number") from None
    return out


def load(args) -> tuple[object, dict]:
    """Resolve ``--system``/``--config`` into ``(system, config)``."""
    cfg: dict = {}
    if args.config:
        try:
            with open(args.config) as fh:
                cfg = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config: {exc}") from None
        validate_config(cfg)
    if args.system and cfg.get("custom"):
        raise ConfigError("--system conflicts with a custom system in the config")
    name = args.system or cfg.get("name")
    params = {**cfg.get("parameters", {}), **_params(args.param)}
    if name:
        if name not in BUILTINS:
            raise ConfigError(f"unknown system {name!r}; choose from {', '.join(sorted(BUILTINS))}")
        system = get_builtin(name, **params)
    elif cfg.get("custom"):
        custom = dict(cfg["custom"])
        custom["parameters"] = {**custom.get("parameters", {}), **_params(args.param)}
        system = from_config(custom)
    else:
        raise ConfigError("give --system NAME or --config PATH")
    validate_system(system, np.random.default_rng(args.seed))
    return system, cfg


def _emit(text: str, path: str | None) -> None:
    if path:
        with open(path, "w", newline="") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)
        if not text.endswith("\n"):
            sys.stdout.write("\n")


def _initial(args, cfg, system) -> TangentState:
    q0 = _vector(args.q0)
    v0 = _vector(args.v0)
    init = cfg.get("initial", {})
    q0 = q0 if q0 is not None else init.get("q")
    v0 = v0 if v0 is not None else init.get("qdot")
    if q0 is None and v0 is None:
        return random_on_distribution_states(system, np.random.default_rng(args.seed), 1)[0]
    q0 = q0 if q0 is not None else [0.0] * system.n
    v0 = v0 if v0 is not None else [0.0] * system.n
    if len(q0) != system.n or len(v0) != system.n:
        raise ConfigError(f"initial state needs {system.n} coordinates and {system.n} velocities")
    return TangentState(q0, v0)


def _integrator(args, cfg) -> dict:
    block = cfg.get("integrator", {})

    def pick(name, default):
        v = getattr(args, name, None)
        return v if v is not None else block.get(name, default)

    return {
        "dt": pick("dt", 1e-3),
        "T": pick("T", 10.0),
        "method": pick("method", "rk4"),
        "atol": pick("atol", 1e-9),
        "rtol": pick("rtol", 1e-9),
    }


# ---------------------------------------------------------------------------
# subcommands


def cmd_simulate(args) -> int:
    system, cfg = load(args)
    integ = _integrator(args, cfg)
    formulation = args.formulation or cfg.get("integrator", {}).get("formulation", "closedloop")
    stabilize = args.stabilize if args.stabilize is not None else cfg.get("integrator", {}).get("stabilize", 0.0)
    initial = _initial(args, cfg, system)
    out_cfg = cfg.get("output", {})
    fmt = args.format or out_cfg.get("format", "csv")
    path = args.out or out_cfg.get("path")
    traj = simulate(system, initial, formulation, stabilize=stabilize, **integ)
    text = traj.to_csv() if fmt == "csv" else traj.to_json()
    _emit(text, path)
    summary = traj.summary()
    rel = "<" if summary["max_drift"] < DRIFT_REPORT_TOL else ">="
    lines = [
        f"system: {system.name}",
        f"formulation: {formulation} ({integ['method']}, dt={traj.meta['dt']:g}, T={integ['T']:g})",
        f"samples: {summary['samples']}",
        f"final q: {' '.join(f'{x:.10g}' for x in summary['q_final'])}",
        f"final qdot: {' '.join(f'{x:.10g}' for x in summary['qdot_final'])}",
        f"max_drift: {summary['max_drift']:.3e} (max_drift {rel} {DRIFT_REPORT_TOL:g})",
        f"max |u|: {summary['max_abs_u']:.6g}",
        f"energy span: {summary['energy_span']:.3e}",
    ]
    print("\n".join(lines), file=sys.stdout if path else sys.stderr)
    return EXIT_OK


def cmd_check(args) -> int:
    system, _ = load(args)
    results = run_checks(system, seed=args.seed, samples=args.samples, geodesics=args.geodesics, horizon=args.horizon)
    failed = [r for r in results if r.identity and not r.passed]
    if (args.format or "text") == "json":
        text = json.dumps(
            {"system": system.name, "passed": not failed, "checks": [r.to_dict() for r in results]}, indent=1
        )
    else:
        lines = [f"system: {system.name}"] + [r.line() for r in results]
        lines.append("all identity checks pass" if not failed else f"{len(failed)} check(s) failed")
        text = "\n".join(lines) + "\n"
    _emit(text, args.out)
    return EXIT_OK if not failed else EXIT_CHECK_FAILED


def _names(system) -> list[str]:
    return list(system.chart.coordinates) if system.chart.coordinates else [f"q{i + 1}" for i in range(system.n)]


def appendix_diff(system, q, tol: float = 1e-8) -> dict:
    """Compare computed constrained Christoffels of the rolling disk with the
    printed closed forms; agreement is reported, not asserted."""
    names = _names(system)
    index = {c: i for i, c in enumerate(names)}
    gamma = christoffel_of(system.metric, system.constraints, system.inputs, q, "constrained").gamma
    point = np.concatenate([q, np.zeros(system.n)])
    entries = []
    printed = set()
    for (k, i, j), src in ROLLING_DISK_APPENDIX.items():
        key = (index[k], index[i], index[j])
        printed.add(key)
        computed = float(gamma[key])
        try:
            value = exprlang.evaluate(system.chart.parse(src), point)
        except (DomainError, ZeroDivisionError):
            value = None
        diff = None if value is None else abs(value - computed)
        entries.append({
            "upper": k, "lower": [i, j],
            "computed": computed, "printed": value, "abs_diff": diff,
            "agrees": diff is not None and diff <= tol * max(1.0, abs(computed)),
        })
    unprinted = [
        {"upper": names[a], "lower": [names[b], names[c]], "computed": float(gamma[a, b, c])}
        for a, b, c in zip(*np.nonzero(np.abs(gamma) > 1e-12))
        if (a, b, c) not in printed
    ]
    diffs = [e["abs_diff"] for e in entries if e["abs_diff"] is not None]
    return {
        "entries": entries,
        "agreeing": sum(e["agrees"] for e in entries),
        "printed_total": len(entries),
        "max_abs_diff": max(diffs) if diffs else None,
        "computed_nonzero_not_printed": unprinted,
    }


def cmd_christoffel(args) -> int:
    system, _ = load(args)
    q = _vector(args.point) if args.point else [0.0] * system.n
    if len(q) != system.n:
        raise ConfigError(f"--point needs {system.n} values")
    q = np.array(q)
    inputs = system.inputs if args.kind == "constrained" else None
    coeffs = christoffel_of(system.metric, system.constraints, inputs, q, args.kind)
    fd = christoffel_fd(system.metric, system.constraints, inputs, q, args.kind)
    names = _names(system)
    entries = [
        {"upper": names[k], "lower": [names[i], names[j]], "value": v}
        for k, i, j, v in coeffs.nonzero(args.tol)
    ]
    report = {
        "system": system.name,
        "kind": args.kind,
        "point": q.tolist(),
        "parameters": system.parameters,
        "coordinates": names,
        "convention": "nabla_{d_i} d_j = Gamma^k_{ij} d_k; 'lower' lists [i, j]",
        "entries": entries,
        "fd_max_abs_diff": float(np.max(np.abs(coeffs.gamma - fd.gamma))),
    }
    if args.appendix_diff:
        if system.name != "rolling_disk" or args.kind != "constrained":
            raise ConfigError("--appendix-diff applies to the rolling_disk system with --kind constrained")
        report["appendix_diff"] = appendix_diff(system, q)
    _emit(json.dumps(report, indent=1), args.out)
    return EXIT_OK


def cmd_compare(args) -> int:
    if args.files:
        trs = []
        for p in args.files:
            try:
                with open(p) as fh:
                    trs.append(Trajectory.from_csv(fh.read()))
            except (OSError, ValueError) as exc:
                raise ConfigError(f"cannot read trajectory {p}: {exc}") from None
        report = compare_trajectories(*trs)
        label = f"{args.files[0]} vs {args.files[1]}"
    else:
        system, cfg = load(args)
        forms = [f.strip() for f in args.formulations.split(",")]
        if len(forms) != 2 or any(f not in FORMULATIONS for f in forms):
            raise ConfigError(f"--formulations takes two of {', '.join(FORMULATIONS)}")
        integ = _integrator(args, cfg)
        if args.T is None and "T" not in cfg.get("integrator", {}):
            integ["T"] = 5.0
        initial = _initial(args, cfg, system)
        a = simulate(system, initial, forms[0], **integ)
        b = simulate(system, initial, forms[1], **integ)
        report = compare_trajectories(a, b)
        label = f"{system.name}: {forms[0]} vs {forms[1]}"
    if (args.format or "text") == "json":
        text = json.dumps({"comparison": label, **report.to_dict()}, indent=1)
    else:
        text = (
            f"{label}\n"
            f"max_distance: {report.max_distance:.6e}\n"
            f"q_distance: {report.q_distance:.6e}\n"
            f"qdot_distance: {report.qdot_distance:.6e}\n"
            f"samples: {report.times.size}\n"
        )
    _emit(text, args.out)
    return EXIT_OK


# ---------------------------------------------------------------------------
# parser


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--system", help=f"builtin system: {', '.join(sorted(BUILTINS))}")
    common.add_argument("--config", help="JSON system configuration (schema system-config.v1)")
    common.add_argument("--param", action="append", metavar="NAME=VALUE", help="override a system parameter")
    common.add_argument("--seed", type=int, default=0, help="seed for random sampling (default 0)")
    common.add_argument("--out", help="output path (default stdout)")
    common.add_argument("--format", choices=["csv", "json", "text"], help="output format")

    integ = argparse.ArgumentParser(add_help=False)
    integ.add_argument("--q0", help="initial configuration, comma-separated")
    integ.add_argument("--v0", help="initial velocity, comma-separated")
    integ.add_argument("--T", type=float, help="time horizon")
    integ.add_argument("--dt", type=float, help="RK4 step / output spacing (default 1e-3)")
    integ.add_argument("--method", choices=["rk4", "rk45"])
    integ.add_argument("--atol", type=float)
    integ.add_argument("--rtol", type=float)

    parser = argparse.ArgumentParser(prog="vnc", description="Virtual nonholonomic constraints toolkit")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", parents=[common, integ], help="integrate a trajectory")
    p.add_argument("--formulation", choices=list(FORMULATIONS))
    p.add_argument(
        "--stabilize", type=float,
        help="extension: add -k*phi to the constraint dynamics (default 0, off)",
    )
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("check", parents=[common], help="run the identity and property checks")
    p.add_argument("--samples", type=int, default=20)
    p.add_argument("--geodesics", type=int, default=20)
    p.add_argument("--horizon", type=float, default=10.0)
    p.set_defaults(func=cmd_check)

    p = sub.add_parser("christoffel", parents=[common], help="dump nonzero Christoffel symbols at a point")
    p.add_argument("--point", help="configuration, comma-separated (default origin)")
    p.add_argument("--kind", choices=["constrained", "nonholonomic", "levicivita"], default="constrained")
    p.add_argument("--tol", type=float, default=1e-12, help="threshold for nonzero entries")
    p.add_argument("--appendix-diff", action="store_true", help="diff against the printed rolling-disk table")
    p.set_defaults(func=cmd_christoffel)

    p = sub.add_parser("compare", parents=[common, integ], help="distance between two formulations")
    p.add_argument("--formulations", default="closedloop,constrained")
    p.add_argument("--files", nargs=2, metavar="CSV", help="compare two stored trajectories instead")
    p.set_defaults(func=cmd_compare)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.command == "simulate" and args.format == "text":
        parser.error("simulate writes csv or json")
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("default")
            return args.func(args)
    except (ConfigError, InvalidSystem, ParseError, RankDeficientConstraints, KeyError) as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (ControlUnavailable, NotTransversal) as exc:
        detail = ""
        sol = getattr(exc, "solution", None)
        if sol is not None:
            detail = f" [status={sol.status.value}, residual={sol.residual:.3e}, |b|={np.linalg.norm(sol.b):.3e}]"
        print(f"error: {type(exc).__name__}: {exc}{detail}", file=sys.stderr)
        return EXIT_CONTROL
    except (StepFailure, DomainError) as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_STEP
    except GridMismatch as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except BrokenPipeError:
        # downstream reader closed early (e.g. piped into head)
        sys.stderr.close()
        return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
