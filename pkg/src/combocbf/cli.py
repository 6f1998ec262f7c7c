"""Command-line entry point: run scenarios, audit logs, inspect demos.

Exit codes: 0 clean, 1 parse or validation failure, 2 safety violation
(or failed check), 3 halt on an infeasible safety QP.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

import numpy as np

from . import demos, qp, sim
from .logic import naive_combination_count
from .primitives import check_gradient

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_VIOLATION = 2
EXIT_INFEASIBLE = 3

_ENV_OUT_DIR = "COMBOCBF_OUT_DIR"


def _load_scenario_dict(path: str) -> dict:
    try:
        with open(path) as f:
            return json.load(f)
    except OSError as e:
        raise sim.ScenarioError(path, str(e)) from None
    except json.JSONDecodeError as e:
        raise sim.ScenarioError(path, f"invalid JSON at line {e.lineno}, column {e.colno}: "
                                      f"{e.msg}") from None


def _apply_overrides(data: dict, pairs: list[str]) -> dict:
    """Apply dotted-path key=value overrides, e.g. dt=0.005 or controller.omega.2=0.4."""
    for pair in pairs:
        if "=" not in pair:
            raise sim.ScenarioError("--set", f"expected key=value, got {pair!r}")
        key, _, raw = pair.partition("=")
        try:
            value = json.loads(raw)
        except json.JSONDecodeError:
            value = raw
        node = data
        parts = key.split(".")
        for i, part in enumerate(parts):
            last = i == len(parts) - 1
            if isinstance(node, list):
                try:
                    idx = int(part)
                except ValueError:
                    raise sim.ScenarioError("--set", f"{key}: {part!r} is not a list index") from None
                if not 0 <= idx < len(node):
                    raise sim.ScenarioError("--set", f"{key}: index {idx} out of range")
                if last:
                    node[idx] = value
                else:
                    node = node[idx]
            elif isinstance(node, dict):
                if last:
                    node[part] = value
                else:
                    node = node.setdefault(part, {})
            else:
                raise sim.ScenarioError("--set", f"{key}: cannot descend into {type(node).__name__}")
    return data


def _out_path(args, name: str, ext: str) -> str:
    if getattr(args, "out", None):
        return args.out
    out_dir = os.environ.get(_ENV_OUT_DIR, ".")
    return os.path.join(out_dir, f"{name}-trajectory.{ext}")


def _build_config(args, data: dict) -> sim.ScenarioConfig:
    data = _apply_overrides(data, list(args.set or []))
    if getattr(args, "tol_safety", None) is not None:
        data["tol_safety"] = args.tol_safety
    if getattr(args, "on_infeasible", None):
        data["on_infeasible"] = args.on_infeasible
    return sim.ScenarioConfig.from_dict(data)


def _run_scenario(args, data: dict) -> int:
    config = _build_config(args, data)
    result = sim.run(config)
    fmt = args.format or config.output_format
    path = _out_path(args, config.name, "jsonl" if fmt == "jsonl" else "csv")
    meta = {
        "scenario": config.name,
        "dt": config.dt,
        "horizon": config.horizon,
        "state_dim": config.system.state_dim,
        "input_dim": config.system.input_dim,
        "regions": [r.name for r in config.regions],
    }
    if fmt == "jsonl":
        sim.write_trajectory_jsonl(path, result.records, meta)
    else:
        sim.write_trajectory_csv(path, result.records, meta)
    if not args.quiet:
        print(f"wrote {path}")
        for k, v in result.summary.items():
            print(f"  {k}: {v}")
    if result.summary["halted_at"] is not None:
        if not args.quiet:
            print(f"halted: safety QP {result.records[-1].status} at step "
                  f"{result.summary['halted_at']}", file=sys.stderr)
        return EXIT_INFEASIBLE
    if result.summary["safety_violations"] > 0:
        if not args.quiet:
            print(f"safety violation: min pivot {result.summary['min_pivot']:.6g} "
                  f"below -{config.tol_safety:g}", file=sys.stderr)
        return EXIT_VIOLATION
    return EXIT_OK


def _cmd_run(args) -> int:
    return _run_scenario(args, _load_scenario_dict(args.scenario))


def _cmd_demo(args) -> int:
    try:
        data = demos.demo_scenario(args.name)
    except KeyError as e:
        print(e.args[0], file=sys.stderr)
        return EXIT_USAGE
    if args.emit:
        text = json.dumps(data, indent=2)
        if args.out:
            with open(args.out, "w") as f:
                f.write(text + "\n")
            if not args.quiet:
                print(f"wrote {args.out}")
        else:
            print(text)
        return EXIT_OK
    return _run_scenario(args, data)


def _cmd_count(args) -> int:
    data = _load_scenario_dict(args.scenario)
    config = sim.ScenarioConfig.from_dict(_apply_overrides(data, list(args.set or [])))
    rows = len(config.barriers)
    naive = naive_combination_count(config.tree)
    print(f"{rows} rows vs {naive} naive combinations")
    return EXIT_OK


def _cmd_audit(args) -> int:
    data = _load_scenario_dict(args.scenario)
    config = sim.ScenarioConfig.from_dict(data)
    _, records = sim.read_trajectory_jsonl(args.trajectory)
    report = sim.audit(records, config.tree, config.barriers,
                       alpha=config.alpha, dt=config.dt, tol=config.tol_safety,
                       bound_coeff=config.bound_coeff, check_bound=config.check_bound)
    if report.ok:
        if not args.quiet:
            print(f"audit clean: {report.steps} steps, 0 violations")
        return EXIT_OK
    for v in report.violations[:20]:
        print(f"step {v.step}: {v.kind}: {v.detail}", file=sys.stderr)
    if len(report.violations) > 20:
        print(f"... {len(report.violations) - 20} more", file=sys.stderr)
    print(f"audit failed: {len(report.violations)} violations over {report.steps} steps",
          file=sys.stderr)
    return EXIT_VIOLATION


def _cmd_gradcheck(args) -> int:
    data = _load_scenario_dict(args.scenario)
    config = sim.ScenarioConfig.from_dict(data)
    rng = np.random.default_rng(args.seed)
    n = config.system.state_dim
    worst_overall = 0.0
    failed = []
    for k, bar in enumerate(config.barriers):
        worst = 0.0
        for _ in range(args.states):
            x = config.x0 + rng.uniform(-2.0, 2.0, size=n)
            worst = max(worst, check_gradient(bar, x, step=args.step))
        worst_overall = max(worst_overall, worst)
        status = "ok" if worst < args.threshold else "FAIL"
        if status == "FAIL":
            failed.append(k)
        if not args.quiet:
            print(f"primitive {k} ({bar.label}): max error {worst:.3e} [{status}]")
    if failed:
        print(f"gradient check failed for primitives {failed}", file=sys.stderr)
        return EXIT_VIOLATION
    if not args.quiet:
        print(f"all {len(config.barriers)} gradients ok (max error {worst_overall:.3e})")
    return EXIT_OK


def _add_run_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--out", help="output file path (default: $COMBOCBF_OUT_DIR or cwd)")
    p.add_argument("--format", choices=["jsonl", "csv"], default=None,
                   help="trajectory format (default: scenario's output.format)")
    p.add_argument("--set", action="append", metavar="KEY=VALUE",
                   help="override a scenario field by dotted path (repeatable)")
    p.add_argument("--tol-safety", type=float, default=None, dest="tol_safety")
    p.add_argument("--on-infeasible", choices=["halt", "flag"], default=None,
                   dest="on_infeasible")
    p.add_argument("--quiet", action="store_true")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="combocbf",
        description="p-choose-r safety specifications enforced by a QP filter")
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="simulate a scenario file and write its trajectory")
    p_run.add_argument("scenario", help="scenario JSON path")
    _add_run_flags(p_run)
    p_run.set_defaults(func=_cmd_run)

    p_demo = sub.add_parser("demo", help="run (or emit) a built-in demo scenario")
    p_demo.add_argument("name", choices=list(demos.DEMO_NAMES))
    p_demo.add_argument("--emit", action="store_true",
                        help="print/write the scenario JSON instead of running it")
    _add_run_flags(p_demo)
    p_demo.set_defaults(func=_cmd_demo)

    p_audit = sub.add_parser("audit", help="re-check a trajectory against its scenario")
    p_audit.add_argument("trajectory", help="trajectory .jsonl path")
    p_audit.add_argument("scenario", help="scenario JSON path")
    p_audit.add_argument("--quiet", action="store_true")
    p_audit.set_defaults(func=_cmd_audit)

    p_count = sub.add_parser("count", help="enforced rows vs naive clause count")
    p_count.add_argument("scenario", help="scenario JSON path")
    p_count.add_argument("--set", action="append", metavar="KEY=VALUE")
    p_count.set_defaults(func=_cmd_count)

    p_grad = sub.add_parser("gradcheck", help="finite-difference check of all gradients")
    p_grad.add_argument("scenario", help="scenario JSON path")
    p_grad.add_argument("--states", type=int, default=100)
    p_grad.add_argument("--step", type=float, default=1e-6)
    p_grad.add_argument("--threshold", type=float, default=1e-5)
    p_grad.add_argument("--seed", type=int, default=0)
    p_grad.add_argument("--quiet", action="store_true")
    p_grad.set_defaults(func=_cmd_gradcheck)

    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except sim.ScenarioError as e:
        print(f"scenario error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except ValueError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
