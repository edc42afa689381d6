"""Command-line interface.

Subcommands: run, compare, sweep-v, sweep-quality, oracle, gen-trace.
Exit codes: 0 success, 2 usage error, 3 bad configuration or input format,
4 infeasible instance, 5 internal invariant violation. Diagnostics go to
stderr; data goes to stdout only with `-o -`.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import os
import sys
import tempfile

import numpy as np

from .config import ScenarioConfig
from .engine import (
    PolicySpec,
    RunMetrics,
    compare_with_oracle,
    derive_quality_params,
    is_unit_granular,
    oracle_reference,
    run,
)
from .env import generate_trace, load_trace, save_trace
from .errors import ConfigurationError, InfeasibleError, InvariantViolationError
from .oracle import instance_from_trace, solve_dp
from .policy import LyapunovParams, QualityParams, StaticParams
from . import report

OUT_DIR_ENV = "HPCLEASE_OUT_DIR"

# the bundled evaluation setup: 60 concentrators, 10,000 slots, 5 packets
# per slot, per-packet prices uniform on [0.1, 1.0] cents
PRESETS: dict[str, ScenarioConfig] = {
    "reference": ScenarioConfig(seed=101),
}

STATIC_SCHEME_1 = StaticParams(period=1000, burst_len=200)
STATIC_SCHEME_2 = StaticParams(period=1000, burst_len=150)

DEFAULT_V_GRID = [float(v) for v in np.logspace(0.0, 4.0, 10)]
DEFAULT_BUDGET_SHARES = [0.0, 0.1, 0.2, 0.3]


@dataclasses.dataclass
class CommandSpec:
    """Parsed and validated command line."""

    command: str
    config_path: str | None = None
    preset: str = "reference"
    overrides: dict = dataclasses.field(default_factory=dict)
    seed: int | None = None
    seeds: list[int] | None = None
    seed_count: int | None = None
    out: str | None = None
    format: str = "csv"
    policy: str = "lyapunov"
    v_factor: float = 1.0
    epsilon: float | None = None
    period: int = 1000
    burst_len: int = 200
    n_units: int | None = None
    deadline: int | None = None
    quality_budget: int | None = None
    budget_share: float | None = None
    beta_c: float = 1.0
    v_values: list[float] | None = None
    budget_shares: list[float] | None = None
    with_oracle: bool = False
    trace_path: str | None = None
    concentrator: int = 0
    first_slot: int = 1
    last_slot: int | None = None


def _key_value(text: str) -> tuple[str, object]:
    if "=" not in text:
        raise argparse.ArgumentTypeError(
            f"override {text!r} is not of the form key=value"
        )
    key, _, raw = text.partition("=")
    try:
        value: object = json.loads(raw)
    except json.JSONDecodeError:
        value = raw
    return key.strip(), value


def _float_list(text: str) -> list[float]:
    try:
        return [float(part) for part in text.split(",") if part.strip() != ""]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"bad number list {text!r}") from exc


def _seed_list(text: str) -> list[int]:
    try:
        parts = [int(part) for part in text.split(",") if part.strip() != ""]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"bad seed list {text!r}") from exc
    if not parts:
        raise argparse.ArgumentTypeError("empty seed list")
    return parts


def _add_scenario_args(sub: argparse.ArgumentParser) -> None:
    sub.add_argument("--config", dest="config_path", help="scenario JSON file")
    sub.add_argument(
        "--preset",
        default="reference",
        choices=sorted(PRESETS),
        help="bundled scenario to start from when --config is absent",
    )
    sub.add_argument(
        "--set",
        dest="overrides",
        type=_key_value,
        action="append",
        default=[],
        metavar="KEY=VALUE",
        help="override a scenario field (repeatable)",
    )
    sub.add_argument("--seed", type=int, help="base seed, overrides the scenario")
    sub.add_argument(
        "-o",
        "--out",
        help="output directory, or - for stdout (default: "
        f"${OUT_DIR_ENV} or the working directory)",
    )


def parse_args(argv: list[str] | None = None) -> CommandSpec:
    parser = argparse.ArgumentParser(
        prog="hpclease",
        description="Leased-channel simulator for smart-grid concentrator fleets",
    )
    subs = parser.add_subparsers(dest="command", required=True)

    p_run = subs.add_parser("run", help="simulate one policy on one trace")
    _add_scenario_args(p_run)
    p_run.add_argument(
        "--policy", default="lyapunov", choices=["lyapunov", "static", "quality"]
    )
    p_run.add_argument("--v-factor", type=float, default=1.0)
    p_run.add_argument("--epsilon", type=float)
    p_run.add_argument("--period", type=int, default=1000)
    p_run.add_argument("--burst-len", type=int, default=200)
    p_run.add_argument("--n-units", type=int)
    p_run.add_argument("--deadline", type=int)
    p_run.add_argument("--quality-budget", type=int)
    p_run.add_argument(
        "--budget-share",
        type=float,
        help="derive the quality workload from a reference run at --v-factor",
    )
    p_run.add_argument("--beta-c", type=float, default=1.0)

    p_cmp = subs.add_parser(
        "compare", help="matched-trace policy table with offline reference"
    )
    _add_scenario_args(p_cmp)
    p_cmp.add_argument("--v-factor", type=float, default=1.0)
    p_cmp.add_argument(
        "--budget-share",
        type=float,
        help="also run the quality policy at this budget share",
    )
    p_cmp.add_argument("--beta-c", type=float, default=1.0)

    p_sv = subs.add_parser("sweep-v", help="cost-weight sweep, aggregated over seeds")
    _add_scenario_args(p_sv)
    p_sv.add_argument(
        "--v",
        dest="v_values",
        type=_float_list,
        help="comma-separated grid (default: 10 log-spaced points in [1, 1e4])",
    )
    p_sv.add_argument(
        "--seeds",
        type=_seed_list,
        help="count (one number) or explicit comma-separated seed list",
    )
    p_sv.add_argument("--format", default="csv", choices=["csv", "json", "dat"])

    p_sq = subs.add_parser(
        "sweep-quality", help="quality-budget sweep at a matched delay target"
    )
    _add_scenario_args(p_sq)
    p_sq.add_argument(
        "--budgets",
        dest="budget_shares",
        type=_float_list,
        help="comma-separated budget shares (default: 0,0.1,0.2,0.3)",
    )
    p_sq.add_argument("--v-factor", type=float, default=1.0)
    p_sq.add_argument("--beta-c", type=float, default=1.0)
    p_sq.add_argument("--seeds", type=_seed_list)
    p_sq.add_argument("--with-oracle", action="store_true")
    p_sq.add_argument("--format", default="csv", choices=["csv", "json", "dat"])

    p_or = subs.add_parser("oracle", help="solve one offline instance exactly")
    _add_scenario_args(p_or)
    p_or.add_argument("--trace", dest="trace_path", help="saved trace file")
    p_or.add_argument("--n-units", type=int, required=True)
    p_or.add_argument("--quality-budget", type=int, default=0)
    p_or.add_argument("--concentrator", type=int, default=0)
    p_or.add_argument("--first-slot", type=int, default=1)
    p_or.add_argument("--last-slot", type=int)

    p_gt = subs.add_parser("gen-trace", help="draw and save a scenario trace")
    _add_scenario_args(p_gt)

    ns = parser.parse_args(argv)
    spec = CommandSpec(command=ns.command)
    for field in dataclasses.fields(CommandSpec):
        if field.name == "overrides":
            spec.overrides = dict(getattr(ns, "overrides", []) or [])
        elif hasattr(ns, field.name):
            value = getattr(ns, field.name)
            if value is not None:
                setattr(spec, field.name, value)
    if getattr(ns, "seeds", None) is not None and len(ns.seeds) == 1:
        # one number means a seed count anchored at the base seed
        spec.seeds = None
        spec.seed_count = ns.seeds[0]
    return spec


def _scenario(spec: CommandSpec) -> ScenarioConfig:
    if spec.config_path:
        try:
            with open(spec.config_path, "rb") as fh:
                data = json.load(fh)
        except OSError as exc:
            raise ConfigurationError(f"cannot read {spec.config_path}: {exc}") from exc
        except json.JSONDecodeError as exc:
            raise ConfigurationError(
                f"{spec.config_path} is not valid JSON: {exc}"
            ) from exc
        cfg = ScenarioConfig.from_dict(data)
    else:
        cfg = PRESETS[spec.preset]
    changes = dict(spec.overrides)
    if spec.seed is not None:
        changes["seed"] = spec.seed
    if changes:
        cfg = cfg.with_overrides(**changes)
    cfg.validate()
    return cfg


def _seeds(spec: CommandSpec, cfg: ScenarioConfig, default_count: int = 5) -> list[int]:
    if spec.seeds is not None:
        return spec.seeds
    count = spec.seed_count if spec.seed_count is not None else default_count
    if count < 1:
        raise ConfigurationError("seed count must be at least 1")
    return [cfg.seed + i for i in range(count)]


def _out_dir(spec: CommandSpec) -> str:
    if spec.out is not None:
        return spec.out
    return os.environ.get(OUT_DIR_ENV, ".")


def _write(spec: CommandSpec, filename: str, payload: bytes) -> None:
    """Atomic file write, or stdout when the output target is '-'."""
    target = _out_dir(spec)
    if target == "-":
        sys.stdout.buffer.write(payload)
        sys.stdout.buffer.flush()
        return
    os.makedirs(target, exist_ok=True)
    path = os.path.join(target, filename)
    fd, tmp = tempfile.mkstemp(dir=target, prefix=filename + ".")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(payload)
        os.replace(tmp, path)
    except BaseException:
        os.unlink(tmp)
        raise
    print(f"wrote {path}", file=sys.stderr)


def _json_bytes(doc: object) -> bytes:
    return (json.dumps(doc, sort_keys=True, indent=2) + "\n").encode("ascii")


def _policy_spec(spec: CommandSpec, cfg: ScenarioConfig, trace) -> PolicySpec:
    if spec.policy == "lyapunov":
        return PolicySpec(
            "lyapunov", LyapunovParams(v_factor=spec.v_factor, epsilon=spec.epsilon)
        )
    if spec.policy == "static":
        return PolicySpec(
            "static", StaticParams(period=spec.period, burst_len=spec.burst_len)
        )
    explicit = (spec.n_units, spec.deadline, spec.quality_budget)
    if all(v is not None for v in explicit):
        params = QualityParams(
            n_units=spec.n_units,
            deadline=spec.deadline,
            quality_budget=spec.quality_budget,
            beta_c=spec.beta_c,
        )
    elif spec.budget_share is not None:
        reference = run(
            cfg,
            PolicySpec("lyapunov", LyapunovParams(v_factor=spec.v_factor)),
            trace,
        )
        params = derive_quality_params(
            cfg, reference, spec.budget_share, beta_c=spec.beta_c
        )
    else:
        raise ConfigurationError(
            "quality policy needs --n-units/--deadline/--quality-budget "
            "or --budget-share"
        )
    return PolicySpec("quality", params)


def _cmd_run(spec: CommandSpec) -> int:
    cfg = _scenario(spec)
    trace = generate_trace(cfg, cfg.seed)
    pspec = _policy_spec(spec, cfg, trace)
    metrics = run(cfg, pspec, trace)
    summary = report.run_summary(metrics)
    if _out_dir(spec) == "-":
        _write(spec, "", _json_bytes(summary))
    else:
        _write(spec, "run_summary.json", _json_bytes(summary))
        _write(spec, "run_series.csv", report.run_series_csv(metrics))
    return 0


def _cmd_compare(spec: CommandSpec) -> int:
    cfg = _scenario(spec)
    trace = generate_trace(cfg, cfg.seed)
    specs = [
        PolicySpec("lyapunov", LyapunovParams(v_factor=spec.v_factor)),
        PolicySpec("static", STATIC_SCHEME_1),
        PolicySpec("static", STATIC_SCHEME_2),
    ]
    results = [run(cfg, s, trace) for s in specs]
    # the appended oracle row gets the most freedom any online row had, so
    # it lower-bounds every workload-complete row in the table
    oracle_units = cfg.horizon - 1
    oracle_budget = 0
    if spec.budget_share is not None:
        params = derive_quality_params(
            cfg, results[0], spec.budget_share, beta_c=spec.beta_c
        )
        results.append(run(cfg, PolicySpec("quality", params), trace))
        oracle_units = min(oracle_units, params.n_units)
        oracle_budget = params.quality_budget
    rows = [(m, compare_with_oracle(cfg, trace, m)) for m in results]

    oracle_row = None
    if is_unit_granular(cfg):
        total, _ = oracle_reference(cfg, trace, oracle_units, oracle_budget)
        oracle_row = (f"oracle[m={oracle_budget}]", total)
    _write(spec, "comparison.csv", report.comparison_table_csv(rows, oracle_row))
    return 0


def _cmd_sweep_v(spec: CommandSpec) -> int:
    cfg = _scenario(spec)
    seeds = _seeds(spec, cfg)
    grid = spec.v_values if spec.v_values is not None else DEFAULT_V_GRID
    if len(set(grid)) != len(grid):
        raise ConfigurationError("duplicate values in the sweep grid")
    runs_by_v: dict[float, list[RunMetrics]] = {v: [] for v in grid}
    for seed in seeds:
        trace = generate_trace(cfg, seed)
        for v in grid:
            pspec = PolicySpec("lyapunov", LyapunovParams(v_factor=v))
            runs_by_v[v].append(run(cfg, pspec, trace))
    result = report.v_sweep_summary(runs_by_v)
    _write(spec, f"sweep_v.{spec.format}", report.emit(result, spec.format))
    return 0


def _cmd_sweep_quality(spec: CommandSpec) -> int:
    cfg = _scenario(spec)
    seeds = _seeds(spec, cfg)
    shares = (
        spec.budget_shares
        if spec.budget_shares is not None
        else DEFAULT_BUDGET_SHARES
    )
    runs_by_budget: dict[int, list[RunMetrics]] = {}
    oracle_by_budget: dict[int, list[int]] | None = (
        {} if spec.with_oracle else None
    )
    for seed in seeds:
        trace = generate_trace(cfg, seed)
        reference = run(
            cfg, PolicySpec("lyapunov", LyapunovParams(v_factor=spec.v_factor)), trace
        )
        budgets_this_seed = set()
        for share in shares:
            params = derive_quality_params(cfg, reference, share, beta_c=spec.beta_c)
            budget = params.quality_budget
            if budget in budgets_this_seed:
                raise ConfigurationError(
                    f"budget shares collide at {budget} reduced units"
                )
            budgets_this_seed.add(budget)
            metrics = run(cfg, PolicySpec("quality", params), trace)
            runs_by_budget.setdefault(budget, []).append(metrics)
            if oracle_by_budget is not None:
                comparison = compare_with_oracle(cfg, trace, metrics)
                if comparison is None:
                    raise ConfigurationError(
                        "oracle comparison requested but the run is not comparable"
                    )
                oracle_by_budget.setdefault(budget, []).append(
                    comparison.offline_cost_microcents
                )
    result = report.quality_sweep_summary(runs_by_budget, oracle_by_budget)
    _write(spec, f"sweep_quality.{spec.format}", report.emit(result, spec.format))
    return 0


def _cmd_oracle(spec: CommandSpec) -> int:
    if spec.trace_path:
        try:
            with open(spec.trace_path, "rb") as fh:
                trace = load_trace(fh.read())
        except OSError as exc:
            raise ConfigurationError(
                f"cannot read {spec.trace_path}: {exc}"
            ) from exc
    else:
        cfg = _scenario(spec)
        trace = generate_trace(cfg, cfg.seed)
    instance = instance_from_trace(
        trace,
        spec.concentrator,
        spec.n_units,
        spec.quality_budget or 0,
        first_slot=spec.first_slot,
        last_slot=spec.last_slot,
    )
    schedule = solve_dp(instance)
    doc = {
        "concentrator": spec.concentrator,
        "first_slot": spec.first_slot,
        "last_slot": (
            spec.last_slot if spec.last_slot is not None else trace.horizon - 1
        ),
        "n_units": spec.n_units,
        "quality_budget": spec.quality_budget or 0,
        "cost_microcents": schedule.total_cost_microcents,
        "cost_dollars": round(schedule.total_cost_microcents / 1e8, 8),
        "reduced_count": schedule.reduced_count,
        "sends": schedule.sends,
        "action_codes": [int(a) for a in schedule.actions],
        "action_legend": {
            "0": "idle",
            "1": "free_full",
            "2": "free_reduced",
            "3": "buy_full",
            "4": "buy_reduced",
        },
    }
    if _out_dir(spec) == "-":
        _write(spec, "", _json_bytes(doc))
    else:
        _write(spec, "oracle.json", _json_bytes(doc))
    return 0


def _cmd_gen_trace(spec: CommandSpec) -> int:
    cfg = _scenario(spec)
    trace = generate_trace(cfg, cfg.seed)
    payload = save_trace(trace)
    if _out_dir(spec) == "-":
        _write(spec, "", payload)
    else:
        _write(spec, f"trace_{cfg.seed}.json", payload)
    return 0


_COMMANDS = {
    "run": _cmd_run,
    "compare": _cmd_compare,
    "sweep-v": _cmd_sweep_v,
    "sweep-quality": _cmd_sweep_quality,
    "oracle": _cmd_oracle,
    "gen-trace": _cmd_gen_trace,
}


def execute(spec: CommandSpec) -> int:
    return _COMMANDS[spec.command](spec)


def main(argv: list[str] | None = None) -> int:
    spec = parse_args(argv)
    try:
        return execute(spec)
    except ConfigurationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    except InfeasibleError as exc:
        print(f"infeasible: {exc}", file=sys.stderr)
        return 4
    except InvariantViolationError as exc:
        print(f"invariant violation: {exc}", file=sys.stderr)
        return 5


if __name__ == "__main__":
    sys.exit(main())
