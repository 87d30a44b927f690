"""Command-line front door for the subsampling / fitting / analysis pipeline.

Exit codes: 0 success, 1 usage error, 2 data or validation error. Data errors
print a single machine-parseable line ``error[<code>]: <message>`` on stderr;
result data goes to stdout or to files under --output-dir.
"""

import argparse
import json
import sys
from dataclasses import fields
from pathlib import Path

from . import __version__
from .corpus import Strategy, load_examples, load_runs
from .errors import DataFormatError, ExcludedPointError, VolscaleError
from .experiment import (
    SyntheticSpec,
    build_strategy_table,
    compare_pooled_vs_per_strategy,
    comparison_to_dict,
    generate_synthetic,
    load_strategy_table,
    load_volume_grid,
    render_efficiency_csv,
    render_runs_csv,
    render_strategy_table_csv,
    validate_table_consistency,
)
from .scaling_law import (
    FitConfig,
    fit_from_dict,
    fit_grid,
    fit_to_dict,
    predict,
    token_efficiency,
)
from .serialize import fmt_float, json_dumps, write_text_files
from .subsampler import SELECTION_STRATEGIES, check_prefix_nesting, selection_to_dict, subsample

_CONFIG_FIELDS = tuple(field.name for field in fields(FitConfig))


class UsageError(Exception):
    """Bad flags or flag values; maps to exit status 1."""


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _parse_budget_list(text: str) -> list[int]:
    budgets = []
    for piece in text.split(","):
        piece = piece.strip()
        try:
            value = int(piece)
        except ValueError:
            raise argparse.ArgumentTypeError(f"budget {piece!r} is not an integer") from None
        if value < 1:
            raise argparse.ArgumentTypeError(f"budgets must be >= 1, got {value}")
        budgets.append(value)
    return budgets


def _add_output_options(parser: argparse.ArgumentParser) -> None:
    parser.add_argument(
        "--output-dir",
        type=Path,
        default=Path("out"),
        help="directory for emitted files (default: ./out)",
    )
    parser.add_argument(
        "--force", action="store_true", help="overwrite existing output files"
    )


def _add_fit_config_options(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", type=Path, help="JSON file with fit-config fields (flags override it)")
    parser.add_argument("--e-min", type=float, dest="e_grid_min", help="offset grid lower bound")
    parser.add_argument("--e-max", type=float, dest="e_grid_max", help="offset grid upper bound")
    parser.add_argument("--e-step", type=float, dest="e_grid_step", help="offset grid step")
    parser.add_argument("--huber-delta", type=float, dest="huber_delta", help="Huber tuning constant")
    parser.add_argument("--irls-max-iter", type=int, dest="irls_max_iter", help="IRLS iteration cap")
    parser.add_argument("--irls-tol", type=float, dest="irls_tol", help="IRLS convergence tolerance")
    parser.add_argument(
        "--positivity-margin", type=float, dest="positivity_margin",
        help="required accuracy headroom above E",
    )


def _resolve_fit_config(args: argparse.Namespace) -> FitConfig:
    """Flags > config file > defaults."""
    settings: dict = {}
    if getattr(args, "config", None) is not None:
        try:
            payload = json.loads(Path(args.config).read_text(encoding="utf-8"))
        except json.JSONDecodeError as exc:
            raise DataFormatError(f"{args.config}: invalid JSON: {exc}") from exc
        if not isinstance(payload, dict):
            raise DataFormatError(f"{args.config}: expected a JSON object of fit-config fields")
        unknown = sorted(set(payload) - set(_CONFIG_FIELDS))
        if unknown:
            raise DataFormatError(f"{args.config}: unknown fit-config field(s): {', '.join(unknown)}")
        settings.update(payload)
    for name in _CONFIG_FIELDS:
        value = getattr(args, name, None)
        if value is not None:
            settings[name] = value
    return FitConfig(**settings)


def _load_fit_file(path: Path):
    try:
        payload = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise DataFormatError(f"{path}: invalid JSON: {exc}") from exc
    if not isinstance(payload, dict):
        raise DataFormatError(f"{path}: expected a JSON object")
    return fit_from_dict(payload)


def _note(message: str) -> None:
    print(message, file=sys.stderr)


def _emit(args: argparse.Namespace, contents: dict[str, str]) -> None:
    for path in write_text_files(args.output_dir, contents, force=args.force):
        _note(f"wrote {path}")


def _cmd_subsample(args: argparse.Namespace) -> int:
    budgets: list[int] = []
    if args.budget is not None:
        budgets.append(args.budget)
    if args.budgets:
        budgets.extend(args.budgets)
    if not budgets:
        raise UsageError("provide --budget and/or --budgets")
    if budgets != sorted(set(budgets)):
        raise UsageError(f"budgets must be strictly ascending, got {budgets}")
    strategy = Strategy(args.strategy)
    examples = load_examples(args.examples)
    selections = [subsample(examples, strategy, budget) for budget in budgets]
    contents = {
        f"selection_{strategy.value}_{selection.budget}.json": json_dumps(selection_to_dict(selection)) + "\n"
        for selection in selections
    }
    for selection in selections:
        if selection.is_empty:
            _note(f"budget {selection.budget}: empty selection (first example exceeds the budget)")
    if len(selections) > 1:
        nesting = check_prefix_nesting(selections)
        payload = {
            "strategy": strategy.value,
            "budgets": budgets,
            "ok": nesting.ok,
            "violation": None
            if nesting.violation is None
            else {
                "budget_small": nesting.violation.budget_small,
                "budget_large": nesting.violation.budget_large,
                "detail": nesting.violation.detail,
            },
        }
        contents["nesting_check.json"] = json_dumps(payload) + "\n"
    _emit(args, contents)
    return 0


def _cmd_fit(args: argparse.Namespace) -> int:
    records = load_runs(args.runs)
    config = _resolve_fit_config(args)
    if args.pooled:
        fits = [fit_grid(records, config, strategy_label="pooled")]
    else:
        groups: dict[str, list] = {}
        for record in records:
            groups.setdefault(record.strategy.value, []).append(record)
        from .corpus import strategy_sort_key

        fits = [
            fit_grid(groups[label], config, strategy_label=label)
            for label in sorted(groups, key=strategy_sort_key)
        ]
    contents = {f"fit_{fit.strategy_label}.json": json_dumps(fit_to_dict(fit)) + "\n" for fit in fits}
    _emit(args, contents)
    return 0


def _cmd_predict(args: argparse.Namespace) -> int:
    fit = _load_fit_file(args.fit)
    value = predict(fit, args.volume, args.model_size)
    print(fmt_float(value))
    if value > 1.0:
        _note(f"note: prediction {value:g} exceeds 1; outside the accuracy range")
    return 0


def _cmd_efficiency(args: argparse.Namespace) -> int:
    fit = _load_fit_file(args.fit)
    records = load_runs(args.runs)
    points = []
    skipped = 0
    for record in records:
        try:
            points.append(token_efficiency(fit, record))
        except ExcludedPointError:
            skipped += 1
    if skipped:
        _note(f"skipped {skipped} record(s) with accuracy <= E={fit.E:g}")
    _emit(args, {"efficiency.csv": render_efficiency_csv(points)})
    return 0


def _cmd_table(args: argparse.Namespace) -> int:
    rows = build_strategy_table(load_runs(args.runs))
    _emit(args, {"strategy_table.csv": render_strategy_table_csv(rows)})
    return 0


def _cmd_compare(args: argparse.Namespace) -> int:
    report = compare_pooled_vs_per_strategy(load_runs(args.runs), _resolve_fit_config(args))
    _emit(args, {"comparison.json": json_dumps(comparison_to_dict(report)) + "\n"})
    return 0


def _cmd_simulate(args: argparse.Namespace) -> int:
    grid, grid_strategies = load_volume_grid(args.grid)
    strategies = grid_strategies if grid_strategies is not None else Strategy(args.strategy)
    spec = SyntheticSpec(
        A=args.a,
        beta=args.beta,
        gamma=args.gamma,
        E=args.e,
        noise_sigma=args.sigma,
        seed=args.seed,
        grid=grid,
        strategies=strategies,
    )
    result = generate_synthetic(spec)
    if result.n_clipped_low or result.n_clipped_high:
        _note(
            f"clipped {result.n_clipped_low} accuracies up to E + margin and "
            f"{result.n_clipped_high} down to 1"
        )
    _emit(args, {"synthetic_runs.csv": render_runs_csv(result.records)})
    return 0


def _cmd_validate(args: argparse.Namespace) -> int:
    rows = load_strategy_table(args.table)
    flags = validate_table_consistency(rows, [row.mean_volume for row in rows], args.tolerance)
    for flag in flags:
        print(
            f"FLAG {flag.strategy_label}: recomputed_volume={fmt_float(flag.recomputed_volume)} "
            f"reported_volume={fmt_float(flag.reported_volume)} "
            f"relative_deviation={fmt_float(flag.relative_deviation)}"
        )
    print(f"{len(flags)} of {len(rows)} row(s) flagged at tolerance {fmt_float(args.tolerance)}")
    return 2 if flags else 0


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(
        prog="volscale",
        description="Composition-aware scaling-law toolkit: budgeted subsampling, "
        "volume-based power-law fitting, and token-efficiency analysis.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    subcommands = parser.add_subparsers(dest="command", metavar="command", required=True, parser_class=_Parser)

    sub = subcommands.add_parser("subsample", help="select examples under token budgets")
    sub.add_argument("--examples", type=Path, required=True, help="JSONL examples file")
    sub.add_argument(
        "--strategy",
        required=True,
        choices=[s.value for s in SELECTION_STRATEGIES],
        help="selection strategy",
    )
    sub.add_argument("--budget", type=int, help="token budget")
    sub.add_argument(
        "--budgets",
        type=_parse_budget_list,
        help="comma-separated ascending token budgets; also emits a nesting check",
    )
    _add_output_options(sub)
    sub.set_defaults(func=_cmd_subsample)

    fit = subcommands.add_parser("fit", help="fit the scaling law to run records")
    fit.add_argument("--runs", type=Path, required=True, help="run-record CSV")
    mode = fit.add_mutually_exclusive_group()
    mode.add_argument(
        "--per-strategy",
        action="store_true",
        default=True,
        help="one fit per strategy (default)",
    )
    mode.add_argument("--pooled", action="store_true", help="single fit over all records")
    _add_fit_config_options(fit)
    _add_output_options(fit)
    fit.set_defaults(func=_cmd_fit)

    pred = subcommands.add_parser("predict", help="evaluate a fit at (volume, model size)")
    pred.add_argument("--fit", type=Path, required=True, help="fit JSON file")
    pred.add_argument("--volume", type=float, required=True, help="dataset volume in tokens")
    pred.add_argument("--model-size", type=float, required=True, help="model size in millions")
    pred.set_defaults(func=_cmd_predict)

    eff = subcommands.add_parser("efficiency", help="emit normalized token-efficiency plot data")
    eff.add_argument("--fit", type=Path, required=True, help="fit JSON file")
    eff.add_argument("--runs", type=Path, required=True, help="run-record CSV")
    _add_output_options(eff)
    eff.set_defaults(func=_cmd_efficiency)

    table = subcommands.add_parser("table", help="aggregate run records into a strategy table")
    table.add_argument("--runs", type=Path, required=True, help="run-record CSV")
    _add_output_options(table)
    table.set_defaults(func=_cmd_table)

    compare = subcommands.add_parser(
        "compare", help="pooled vs per-strategy fits by leave-one-out RMSE"
    )
    compare.add_argument("--runs", type=Path, required=True, help="run-record CSV")
    _add_fit_config_options(compare)
    _add_output_options(compare)
    compare.set_defaults(func=_cmd_compare)

    sim = subcommands.add_parser("simulate", help="generate synthetic run records from known parameters")
    sim.add_argument("--a", type=float, required=True, help="prefactor A")
    sim.add_argument("--beta", type=float, required=True, help="volume exponent")
    sim.add_argument("--gamma", type=float, required=True, help="model-size exponent")
    sim.add_argument("--e", type=float, required=True, help="irreducible offset E")
    sim.add_argument("--sigma", type=float, default=0.0, help="accuracy noise std dev (default 0)")
    sim.add_argument("--seed", type=int, default=0, help="RNG seed (default 0)")
    sim.add_argument("--grid", type=Path, required=True, help="CSV of volume,model_size_m[,strategy]")
    sim.add_argument(
        "--strategy",
        default=Strategy.OTHER.value,
        choices=[s.value for s in Strategy],
        help="label for all rows when the grid has no strategy column",
    )
    _add_output_options(sim)
    sim.set_defaults(func=_cmd_simulate)

    val = subcommands.add_parser("validate", help="check a strategy table's volume consistency")
    val.add_argument("--table", type=Path, required=True, help="strategy-table CSV (reported volumes)")
    val.add_argument("--tolerance", type=float, required=True, help="relative tolerance")
    val.set_defaults(func=_cmd_validate)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        print(f"volscale: error: {exc}", file=sys.stderr)
        return 1
    except SystemExit as exc:  # --help / --version
        return int(exc.code or 0)
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"volscale: error: {exc}", file=sys.stderr)
        return 1
    except VolscaleError as exc:
        print(f"error[{exc.code}]: {exc}", file=sys.stderr)
        return 2
    except ValueError as exc:
        print(f"error[validation]: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"error[io]: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    raise SystemExit(main())
