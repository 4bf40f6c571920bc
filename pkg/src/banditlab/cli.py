"""Command-line front end: ``run``, ``gen-dataset`` and ``validate``.

Configs are JSON documents that mirror :class:`~banditlab.harness.RunConfig`
plus two optional blocks::

    {"algorithm": ["moful", "eps_moful_ips"], "l": 12, "offline_size": 4000,
     "sweep": {"axis": "l", "values": [5, 10, 12], "repeats": 10},
     "output": {"dir": "results", "emit_svg": true}}

``--set key=value`` overrides any entry (dotted keys reach into the blocks);
values are read as JSON when they parse and as plain strings otherwise.
Exit codes: 0 success, 1 run or write failure, 2 unusable arguments or config.
"""
from __future__ import annotations

import argparse
import copy
import csv
import io
import json
import os
import sys
from dataclasses import fields, replace
from typing import Optional

import numpy as np

from . import __version__, plots
from .environ import read_offline_dataset, validate_dataset, write_offline_dataset, atomic_write_text
from .errors import BanditLabError, IngestionError, InvalidConfigError
from .harness import (ALGORITHMS, SWEEP_AXES, RunConfig, build_world, run_algorithms,
                      run_sweep, summarize_sweep)

EXIT_OK, EXIT_RUN, EXIT_PARSE = 0, 1, 2
DEFAULT_OUT = "results"

# field -> (accepted python types, nullable)
_NUM = (int, float)
SCHEMA = {
    "seed": ((int,), False),
    "k": ((int,), False),
    "d": ((int,), False),
    "horizon": ((int,), False),
    "n_ua": (_NUM, False),
    "l": ((int,), False),
    "offline_size": ((int,), False),
    "sigma": (_NUM, False),
    "lam": (_NUM, False),
    "delta": (_NUM, False),
    "s_x": (_NUM, True),
    "s_theta": (_NUM, True),
    "dataset_source": ((str,), False),
    "noisy_rewards": ((bool,), False),
    "clip_m_rule": ((str, int, float), False),
    "reward_budget": ((int,), True),
    "fallback_action": ((str,), False),
    "label_column": ((int,), False),
    "normalize": ((bool,), False),
    "logging_fraction": (_NUM, False),
    "radius_scale": (_NUM, False),
}
ALIASES = {"lambda": "lam"}
SWEEP_KEYS = {"axis", "values", "repeats"}
OUTPUT_KEYS = {"dir", "emit_svg"}

assert set(SCHEMA) | {"seed", "algorithm", "record_trace"} == {f.name for f in fields(RunConfig)}


class ConfigError(Exception):
    """A config problem, reported with the JSON path it occurred at."""


class CliPlan:
    """A parsed config: one base RunConfig, the algorithms, and the blocks."""

    def __init__(self, base: RunConfig, algorithms: list, sweep: Optional[dict],
                 out_dir: str, emit_svg: bool):
        self.base = base
        self.algorithms = algorithms
        self.sweep = sweep
        self.out_dir = out_dir
        self.emit_svg = emit_svg


# --------------------------------------------------------------------------
# config parsing


def _type_ok(value, types) -> bool:
    if isinstance(value, bool):
        return bool in types
    return isinstance(value, types)


def _type_name(types) -> str:
    names = {int: "integer", float: "number", str: "string", bool: "boolean"}
    return " or ".join(dict.fromkeys(names[t] for t in types))


def parse_override(text: str) -> tuple[list, object]:
    if "=" not in text:
        raise ConfigError(f"--set {text!r}: expected KEY=VALUE")
    key, raw = text.split("=", 1)
    key = key.strip()
    if not key:
        raise ConfigError(f"--set {text!r}: empty key")
    try:
        value = json.loads(raw)
    except json.JSONDecodeError:
        value = raw
    return key.split("."), value


def apply_overrides(doc: dict, overrides) -> dict:
    doc = copy.deepcopy(doc)
    for text in overrides:
        path, value = parse_override(text)
        node = doc
        for part in path[:-1]:
            child = node.setdefault(part, {})
            if not isinstance(child, dict):
                raise ConfigError(f"{'.'.join(path)}: {part} is not a block")
            node = child
        node[path[-1]] = value
    return doc


def load_document(path: Optional[str]) -> dict:
    if path is None:
        return {}
    if not os.path.isfile(path):
        raise ConfigError(f"config file not found: {path}")
    try:
        with open(path, encoding="utf-8") as fh:
            doc = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON at line {exc.lineno} column {exc.colno}: {exc.msg}") from None
    if not isinstance(doc, dict):
        raise ConfigError(f"{path}: top level must be a JSON object")
    return doc


def plan_from_document(doc: dict, seed: Optional[int] = None,
                       out: Optional[str] = None) -> CliPlan:
    """Check every key and value, then build the run plan."""
    kwargs = {}
    algorithms = ["moful"]
    sweep = None
    out_dir, emit_svg = DEFAULT_OUT, False
    for key, value in doc.items():
        name = ALIASES.get(key, key)
        if name == "algorithm":
            algorithms = value if isinstance(value, list) else [value]
            if not algorithms:
                raise ConfigError("algorithm: empty list")
            for i, a in enumerate(algorithms):
                if a not in ALGORITHMS:
                    raise ConfigError(f"algorithm[{i}]: unknown {a!r}, expected one of {list(ALGORITHMS)}")
            if len(set(algorithms)) != len(algorithms):
                raise ConfigError("algorithm: duplicate entries")
        elif name == "sweep":
            sweep = _parse_sweep(value)
        elif name == "output":
            out_dir, emit_svg = _parse_output(value)
        elif name in SCHEMA:
            types, nullable = SCHEMA[name]
            if value is None and nullable:
                kwargs[name] = None
            elif not _type_ok(value, types):
                raise ConfigError(f"{key}: expected {_type_name(types)}, got {json.dumps(value)}")
            else:
                kwargs[name] = value
        else:
            raise ConfigError(f"{key}: unknown key")
    if seed is not None:
        kwargs["seed"] = seed
    if out is not None:
        out_dir = out
    base = RunConfig(algorithm=algorithms[0], **kwargs)
    for a in algorithms:
        try:
            replace(base, algorithm=a).validate()
        except InvalidConfigError as exc:
            raise ConfigError(f"{exc} (algorithm {a})") from None
    if sweep is not None:
        for v in sweep["values"]:
            for a in algorithms:
                try:
                    replace(base, algorithm=a, **{sweep["axis"]: v}).validate()
                except (InvalidConfigError, TypeError) as exc:
                    raise ConfigError(f"sweep.values: {v!r}: {exc}") from None
    return CliPlan(base, algorithms, sweep, out_dir, emit_svg)


def _parse_sweep(block) -> dict:
    if not isinstance(block, dict):
        raise ConfigError("sweep: expected an object")
    for key in block:
        if key not in SWEEP_KEYS:
            raise ConfigError(f"sweep.{key}: unknown key")
    if "axis" not in block or "values" not in block:
        raise ConfigError("sweep: needs 'axis' and 'values'")
    axis = block["axis"]
    if axis not in SWEEP_AXES:
        raise ConfigError(f"sweep.axis: expected one of {list(SWEEP_AXES)}, got {json.dumps(axis)}")
    values = block["values"]
    if not isinstance(values, list) or not values:
        raise ConfigError("sweep.values: expected a non-empty list")
    want = (int,) if axis in ("l", "horizon") else _NUM
    for i, v in enumerate(values):
        if not _type_ok(v, want):
            raise ConfigError(f"sweep.values[{i}]: expected {_type_name(want)}, got {json.dumps(v)}")
    repeats = block.get("repeats", 1)
    if not _type_ok(repeats, (int,)) or repeats < 1:
        raise ConfigError(f"sweep.repeats: expected a positive integer, got {json.dumps(repeats)}")
    return {"axis": axis, "values": values, "repeats": repeats}


def _parse_output(block) -> tuple[str, bool]:
    if not isinstance(block, dict):
        raise ConfigError("output: expected an object")
    for key in block:
        if key not in OUTPUT_KEYS:
            raise ConfigError(f"output.{key}: unknown key")
    out_dir = block.get("dir", DEFAULT_OUT)
    if not isinstance(out_dir, str) or not out_dir:
        raise ConfigError("output.dir: expected a non-empty string")
    emit = block.get("emit_svg", False)
    if not isinstance(emit, bool):
        raise ConfigError("output.emit_svg: expected a boolean")
    return out_dir, emit


# --------------------------------------------------------------------------
# output rendering


def _cell(v) -> str:
    if v is None:
        return ""
    if isinstance(v, (bool, np.bool_)):
        return "1" if v else "0"
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if isinstance(v, np.integer):
        return str(int(v))
    return str(v)


def _csv(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([_cell(v) for v in row])
    return buf.getvalue()


SUMMARY_COLUMNS = ("algorithm", "seed", "steps", "final_regret", "reward_calls",
                   "t_doubleprime", "epsilon_skips", "average_reward",
                   "online_average_reward", "classification_error", "epsilon_hat", "clip_m")

TRACE_COLUMNS = ("t", "context_id", "action", "reward_called", "skip_reason",
                 "optimistic_value", "instantaneous_regret")


def render_single(plan: CliPlan, results: dict) -> dict:
    """Files for a plain (non-sweep) run, keyed by file name."""
    files = {}
    n = max(m.steps for m in results.values())
    header = ["t"]
    for a in results:
        header += [f"{a}_cumulative_regret", f"{a}_reward_calls"]
    rows = []
    for t in range(n):
        row = [t + 1]
        for m in results.values():
            if t < m.steps:
                row += [m.cumulative_regret[t], m.reward_calls_trajectory[t]]
            else:
                row += [None, None]
        rows.append(row)
    files["metrics.csv"] = _csv(header, rows)
    files["summary.csv"] = _csv(SUMMARY_COLUMNS, [
        [m.algorithm, m.seed, m.steps, m.final_regret, m.reward_calls, m.below_threshold_skips,
         m.epsilon_skips, m.average_reward, m.online_average_reward, m.classification_error,
         m.epsilon_hat, m.clip_m] for m in results.values()])
    trace_rows = []
    for m in results.values():
        tr = m.trace
        for i in range(m.steps):
            trace_rows.append([m.algorithm] + [tr[c][i] for c in TRACE_COLUMNS])
    files[f"trace_{plan.base.seed}.csv"] = _csv(("algorithm",) + TRACE_COLUMNS, trace_rows)
    if plan.emit_svg:
        regret, calls = {}, {}
        for a, m in results.items():
            ts = list(range(1, m.steps + 1))
            regret[a] = plots.downsample(ts, m.cumulative_regret.tolist())
            calls[a] = plots.downsample(ts, m.reward_calls_trajectory.tolist())
        files["regret.svg"] = plots.line_chart(regret, "Cumulative regret", "t", "regret", __version__)
        files["reward_calls.svg"] = plots.line_chart(calls, "Reward calls", "t", "reward calls",
                                                     __version__)
    return files


def render_sweep(plan: CliPlan, rows_by_alg: dict) -> dict:
    files = {}
    axis = plan.sweep["axis"]
    rows = [[r.algorithm, r.axis_value, r.seed, r.final_regret, r.reward_calls, r.t_doubleprime,
             r.average_reward, r.classification_error]
            for rows in rows_by_alg.values() for r in rows]
    files["sweep.csv"] = _csv(("algorithm", "axis_value", "seed", "final_regret", "reward_calls",
                               "t_doubleprime", "average_reward", "classification_error"), rows)
    summary_rows = []
    summaries = {}
    for a, rs in rows_by_alg.items():
        summaries[a] = summarize_sweep(rs)
        for e in summaries[a]:
            summary_rows.append([a, axis, e["axis_value"], e["n"],
                                 e["final_regret_mean"], e["final_regret_std"],
                                 e["reward_calls_mean"], e["reward_calls_std"],
                                 e["average_reward_mean"], e["average_reward_std"]])
    files["summary.csv"] = _csv(("algorithm", "axis", "axis_value", "n", "final_regret_mean",
                                 "final_regret_std", "reward_calls_mean", "reward_calls_std",
                                 "average_reward_mean", "average_reward_std"), summary_rows)
    if plan.emit_svg:
        for metric, title in (("average_reward", "Average reward"), ("reward_calls", "Reward calls"),
                              ("final_regret", "Final regret")):
            series = {a: ([e["axis_value"] for e in s], [e[f"{metric}_mean"] for e in s])
                      for a, s in summaries.items()}
            files[f"{metric}_vs_{axis}.svg"] = plots.line_chart(
                series, f"{title} vs {axis}", axis, metric.replace("_", " "), __version__)
    return files


def write_files(out_dir: str, files: dict) -> None:
    os.makedirs(out_dir, exist_ok=True)
    for name in sorted(files):
        atomic_write_text(os.path.join(out_dir, name), files[name])


def _report(stage: str, exc: BaseException) -> None:
    print(json.dumps({"status": "error", "stage": stage, "type": type(exc).__name__,
                      "message": str(exc)}, sort_keys=True), file=sys.stderr)


# --------------------------------------------------------------------------
# commands


def _plan(args) -> CliPlan:
    doc = apply_overrides(load_document(args.config), args.set or [])
    return plan_from_document(doc, args.seed, args.out)


def cmd_run(args) -> int:
    try:
        plan = _plan(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_PARSE
    try:
        if plan.sweep is None:
            results = run_algorithms(replace(plan.base, record_trace=True), plan.algorithms)
            files = render_single(plan, results)
            line = "; ".join(f"{a}: calls={m.reward_calls} regret={m.final_regret:.3f} "
                             f"avg_reward={m.average_reward:.4f}" for a, m in results.items())
            line = f"seed={plan.base.seed} T={plan.base.horizon} | {line}"
        else:
            sw = plan.sweep
            rows_by_alg = {a: run_sweep(replace(plan.base, algorithm=a), sw["axis"], sw["values"],
                                        sw["repeats"]) for a in plan.algorithms}
            files = render_sweep(plan, rows_by_alg)
            line = (f"sweep {sw['axis']} over {sw['values']} x {sw['repeats']} seeds, "
                    f"{len(plan.algorithms)} algorithm(s)")
        write_files(plan.out_dir, files)
    except (BanditLabError, OSError, ValueError, RuntimeError) as exc:
        _report("run", exc)
        return EXIT_RUN
    print(f"{line} -> {plan.out_dir}")
    return EXIT_OK


def _policy_csv(policy, n: int) -> str:
    rows = []
    for cid in range(n):
        unsup = np.flatnonzero(policy.unsupported[cid])
        rows.append([cid, int(policy.n_supported[cid]), " ".join(str(int(a)) for a in unsup)])
    return _csv(("context_id", "n_supported", "unsupported_actions"), rows)


def cmd_gen_dataset(args) -> int:
    try:
        plan = _plan(args)
        if plan.base.offline_size < 1:
            raise ConfigError("offline_size: must be >= 1 to generate a dataset")
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_PARSE
    path = args.out if args.out is not None else "dataset.csv"
    try:
        cfg = replace(plan.base, horizon=max(plan.base.horizon, 1))
        world = build_world(cfg)
        ds = world.dataset
        stem, _ = os.path.splitext(path)
        policy_path = stem + "_policy.csv"
        parent = os.path.dirname(os.path.abspath(path))
        if not os.path.isdir(parent) or not os.access(parent, os.W_OK):
            raise OSError(f"cannot write to {parent}")
        write_offline_dataset(ds, path)
        atomic_write_text(policy_path, _policy_csv(world.policy, len(ds)))
    except (BanditLabError, OSError, ValueError, RuntimeError) as exc:
        _report("gen-dataset", exc)
        return EXIT_RUN
    print(f"wrote {len(ds)} events (k={ds.k}, d={ds.d}) to {path}; support table {policy_path}")
    return EXIT_OK


def cmd_validate(args) -> int:
    if not os.path.isfile(args.dataset):
        print(f"error: dataset file not found: {args.dataset}", file=sys.stderr)
        return EXIT_PARSE
    try:
        ds = read_offline_dataset(args.dataset, args.k)
    except IngestionError as exc:
        print(f"invalid: {exc}")
        return EXIT_RUN
    problems = validate_dataset(ds)
    for p in problems:
        print(f"violation: {p}")
    if problems:
        print(f"{len(problems)} violation(s) in {args.dataset}")
        return EXIT_RUN
    # one logged event per context, each with propensity 1/|supported|
    n_sup = 1.0 / ds.propensities
    frac = 1.0 - n_sup / ds.k if ds.k else np.zeros(0)
    mean_frac = float(np.mean(frac)) if len(ds) else 0.0
    print(f"ok: {len(ds)} events, k={ds.k}, d={ds.d}; empirical unsupported fraction "
          f"mean={mean_frac:.6f} min={float(np.min(frac)) if len(ds) else 0.0:.6f} "
          f"max={float(np.max(frac)) if len(ds) else 0.0:.6f}")
    return EXIT_OK


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"error: {message}", file=sys.stderr)
        raise SystemExit(EXIT_PARSE)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="banditlab", description=__doc__.split("\n")[0])
    parser.add_argument("--version", action="version", version=f"banditlab {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(p, out_help):
        p.add_argument("--config", metavar="PATH", help="JSON config file")
        p.add_argument("--set", metavar="KEY=VALUE", action="append",
                       help="override a config entry; repeatable, dotted keys allowed")
        p.add_argument("--out", metavar="PATH", help=out_help)
        p.add_argument("--seed", metavar="N", type=int, help="master seed")

    p = sub.add_parser("run", help="run experiments and write CSV (and SVG) results")
    common(p, f"output directory (default: output.dir or {DEFAULT_OUT!r})")
    p.set_defaults(func=cmd_run)
    p = sub.add_parser("gen-dataset", help="write the logged dataset for a config")
    common(p, "dataset CSV path (default: dataset.csv)")
    p.set_defaults(func=cmd_gen_dataset)
    p = sub.add_parser("validate", help="check a logged dataset CSV")
    p.add_argument("dataset", metavar="PATH")
    p.add_argument("--k", type=int, default=None,
                   help="number of actions (default: largest logged action + 1)")
    p.set_defaults(func=cmd_validate)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    raise SystemExit(main())
