"""Strategy-level analyses over run records.

Covers per-strategy table aggregation, consistency validation of published
tables, the pooled-vs-per-strategy baseline comparison (leave-one-out), the
fixed-volume composition ablation, seeded synthetic data generation, and
deterministic report emission.
"""

import io
import csv
import math
from dataclasses import dataclass
from pathlib import Path
from statistics import fmean
from typing import Sequence

import numpy as np

from .corpus import RunRecord, Strategy, strategy_sort_key
from .errors import DataFormatError, VolumeMismatchError
from .scaling_law import (
    FitConfig,
    ScalingLawFit,
    EfficiencyPoint,
    fit_grid,
    fit_to_dict,
    predict,
)
from .serialize import fmt_float, json_dumps, sha256_hex, write_text_files

__all__ = [
    "StrategyTableRow",
    "ConsistencyFlag",
    "ComparisonReport",
    "AblationGroupReport",
    "SyntheticSpec",
    "SyntheticResult",
    "build_strategy_table",
    "validate_table_consistency",
    "compare_pooled_vs_per_strategy",
    "group_records_by_volume",
    "ablation_fixed_volume",
    "generate_synthetic",
    "emit_report",
    "render_strategy_table_csv",
    "render_efficiency_csv",
    "render_runs_csv",
    "load_strategy_table",
    "load_volume_grid",
]

# Two leave-one-out RMSEs are a tie when their relative gap is below this,
# or when both sit under the exactness floor (noiseless data fit exactly).
LOO_TIE_REL_TOL = 1e-9
LOO_EXACT_FLOOR = 1e-8

STRATEGY_TABLE_HEADER = ("strategy", "mean_n", "mean_l", "mean_volume", "mean_accuracy")
EFFICIENCY_HEADER = ("model_size_m", "strategy", "eta_norm")
VOLUME_GRID_HEADER = ("volume", "model_size_m")


@dataclass(frozen=True)
class StrategyTableRow:
    """Per-strategy means of N, L, V (recomputed per record as N*L), and accuracy."""

    strategy_label: str
    mean_n: float
    mean_l: float
    mean_volume: float
    mean_accuracy: float


@dataclass(frozen=True)
class ConsistencyFlag:
    """A table row whose recomputed volume disagrees with the reported one."""

    index: int
    strategy_label: str
    recomputed_volume: float
    reported_volume: float
    relative_deviation: float


@dataclass(frozen=True)
class ComparisonReport:
    """Pooled vs per-strategy fit quality, decided by leave-one-out RMSE."""

    per_strategy_rmse: dict[str, float]
    pooled_rmse: float
    per_strategy_loo_rmse: dict[str, float]
    pooled_loo_rmse: float
    per_strategy_loo_rmse_combined: float
    winner: str


@dataclass(frozen=True)
class AblationGroupReport:
    """Composition effects within one constant-volume group.

    Any volume-form fit predicts identically for all records in the group at
    a given model size, so the per-model-size accuracy spread and per-(N, L)
    mean residuals measure what the form cannot express.
    """

    volume_mean: float
    n_records: int
    spread_by_model_size: dict[float, float]
    mean_residual_by_cell: dict[tuple[int, float], float]


@dataclass(frozen=True)
class SyntheticSpec:
    """Ground truth for generating synthetic run records on a (V, M) grid."""

    A: float
    beta: float
    gamma: float
    E: float
    noise_sigma: float
    seed: int
    grid: tuple[tuple[float, float], ...]
    strategies: Strategy | tuple[Strategy, ...] = Strategy.OTHER
    clip_margin: float = 1e-6

    def __post_init__(self) -> None:
        if self.A <= 0:
            raise ValueError(f"A must be positive, got {self.A}")
        if not 0.0 <= self.E < 1.0:
            raise ValueError(f"E must be in [0, 1), got {self.E}")
        if self.noise_sigma < 0:
            raise ValueError(f"noise_sigma must be nonnegative, got {self.noise_sigma}")
        if self.seed < 0:
            raise ValueError(f"seed must be nonnegative, got {self.seed}")
        if self.clip_margin <= 0:
            raise ValueError(f"clip_margin must be positive, got {self.clip_margin}")
        if not self.grid:
            raise ValueError("grid must be non-empty")
        for volume, model_size in self.grid:
            if volume <= 0 or model_size <= 0:
                raise ValueError(f"grid entries must be positive, got ({volume}, {model_size})")
        if isinstance(self.strategies, tuple) and len(self.strategies) != len(self.grid):
            raise ValueError(
                f"strategies tuple length {len(self.strategies)} does not match grid "
                f"length {len(self.grid)}"
            )


@dataclass(frozen=True)
class SyntheticResult:
    """Generated records plus counts of accuracies clipped into (E + margin, 1]."""

    records: tuple[RunRecord, ...]
    n_clipped_low: int
    n_clipped_high: int


def build_strategy_table(records: Sequence[RunRecord]) -> list[StrategyTableRow]:
    """One row of arithmetic means per strategy present, in canonical order."""
    if not records:
        raise ValueError("records must be non-empty")
    groups: dict[str, list[RunRecord]] = {}
    for record in records:
        groups.setdefault(record.strategy.value, []).append(record)
    rows = []
    for label in sorted(groups, key=strategy_sort_key):
        members = groups[label]
        rows.append(
            StrategyTableRow(
                strategy_label=label,
                mean_n=fmean(r.n_examples for r in members),
                mean_l=fmean(r.mean_token_length for r in members),
                mean_volume=fmean(r.volume for r in members),
                mean_accuracy=fmean(r.accuracy for r in members),
            )
        )
    return rows


def validate_table_consistency(
    rows: Sequence[StrategyTableRow],
    reported_volumes: Sequence[float],
    rel_tol: float,
) -> list[ConsistencyFlag]:
    """Flag rows where mean_n * mean_l deviates from the reported volume beyond rel_tol."""
    if len(rows) != len(reported_volumes):
        raise ValueError(
            f"rows ({len(rows)}) and reported volumes ({len(reported_volumes)}) must align"
        )
    if rel_tol < 0:
        raise ValueError(f"rel_tol must be nonnegative, got {rel_tol}")
    flags = []
    for index, (row, reported) in enumerate(zip(rows, reported_volumes)):
        if reported <= 0:
            raise ValueError(f"reported volume must be positive, got {reported} at row {index}")
        product = row.mean_n * row.mean_l
        deviation = abs(product - reported) / reported
        if deviation > rel_tol:
            flags.append(
                ConsistencyFlag(
                    index=index,
                    strategy_label=row.strategy_label,
                    recomputed_volume=product,
                    reported_volume=reported,
                    relative_deviation=deviation,
                )
            )
    return flags


def _loo_squared_errors(
    records: list[RunRecord], config: FitConfig, strategy_label: str
) -> list[float]:
    errors = []
    for i, held_out in enumerate(records):
        training = records[:i] + records[i + 1 :]
        fit = fit_grid(training, config, strategy_label=strategy_label)
        prediction = predict(fit, held_out.volume, held_out.model_size)
        errors.append((held_out.accuracy - prediction) ** 2)
    return errors


def _decide_winner(per_strategy_loo: float, pooled_loo: float) -> str:
    if per_strategy_loo < LOO_EXACT_FLOOR and pooled_loo < LOO_EXACT_FLOOR:
        return "tie"
    if abs(per_strategy_loo - pooled_loo) / max(per_strategy_loo, pooled_loo) < LOO_TIE_REL_TOL:
        return "tie"
    return "per_strategy" if per_strategy_loo < pooled_loo else "pooled"


def compare_pooled_vs_per_strategy(
    records: Sequence[RunRecord], config: FitConfig | None = None
) -> ComparisonReport:
    """Compare one pooled fit against per-strategy fits by leave-one-out RMSE.

    Per-strategy fitting always wins in-sample by having more parameters, so
    the winner is decided on leave-one-out error: each record is predicted by
    a fit trained without it, within its strategy for the per-strategy arm
    and over the whole pool for the pooled arm.
    """
    records = list(records)
    config = config or FitConfig()
    groups: dict[str, list[RunRecord]] = {}
    for record in records:
        groups.setdefault(record.strategy.value, []).append(record)
    for label in groups:
        if len(groups[label]) < 5:
            raise ValueError(
                f"strategy {label!r} has {len(groups[label])} records; "
                "need >= 5 for a leave-one-out comparison"
            )
    ordered_labels = sorted(groups, key=strategy_sort_key)

    per_strategy_rmse = {
        label: fit_grid(groups[label], config, strategy_label=label).rmse_accuracy
        for label in ordered_labels
    }
    pooled_rmse = fit_grid(records, config, strategy_label="pooled").rmse_accuracy

    per_strategy_sq = {
        label: _loo_squared_errors(groups[label], config, label) for label in ordered_labels
    }
    per_strategy_loo_rmse = {
        label: math.sqrt(fmean(per_strategy_sq[label])) for label in ordered_labels
    }
    combined_sq = [err for label in ordered_labels for err in per_strategy_sq[label]]
    per_strategy_combined = math.sqrt(fmean(combined_sq))
    pooled_loo = math.sqrt(fmean(_loo_squared_errors(records, config, "pooled")))

    return ComparisonReport(
        per_strategy_rmse=per_strategy_rmse,
        pooled_rmse=pooled_rmse,
        per_strategy_loo_rmse=per_strategy_loo_rmse,
        pooled_loo_rmse=pooled_loo,
        per_strategy_loo_rmse_combined=per_strategy_combined,
        winner=_decide_winner(per_strategy_combined, pooled_loo),
    )


def comparison_to_dict(report: ComparisonReport) -> dict:
    return {
        "per_strategy_rmse": dict(report.per_strategy_rmse),
        "pooled_rmse": report.pooled_rmse,
        "per_strategy_loo_rmse": dict(report.per_strategy_loo_rmse),
        "pooled_loo_rmse": report.pooled_loo_rmse,
        "winner": report.winner,
    }


def group_records_by_volume(
    records: Sequence[RunRecord], rel_tol: float = 0.005
) -> list[list[RunRecord]]:
    """Cluster records whose volumes agree within rel_tol of the group anchor."""
    groups: list[list[RunRecord]] = []
    for record in sorted(records, key=lambda r: r.volume):
        if groups and (record.volume - groups[-1][0].volume) / groups[-1][0].volume <= rel_tol:
            groups[-1].append(record)
        else:
            groups.append([record])
    return groups


def ablation_fixed_volume(
    groups: Sequence[Sequence[RunRecord]],
    fit: ScalingLawFit,
    rel_tol: float = 0.005,
) -> list[AblationGroupReport]:
    """Quantify composition effects within constant-volume groups.

    For each group the fit's prediction depends only on (V, M), so the
    accuracy spread at matched model size and the mean residual per
    (n_examples, mean_token_length) cell measure what differing composition
    contributes at fixed volume.
    """
    reports = []
    for gi, group in enumerate(groups):
        group = list(group)
        if len(group) < 2:
            raise ValueError(f"group {gi}: need >= 2 records, got {len(group)}")
        volumes = [record.volume for record in group]
        v_min, v_max = min(volumes), max(volumes)
        if (v_max - v_min) / v_min > rel_tol:
            raise VolumeMismatchError(
                f"group {gi}: volumes span {v_min:g}..{v_max:g} "
                f"({(v_max - v_min) / v_min:.4%} relative), beyond {rel_tol:.4%}"
            )
        by_model: dict[float, list[float]] = {}
        residual_cells: dict[tuple[int, float], list[float]] = {}
        for record in group:
            by_model.setdefault(record.model_size, []).append(record.accuracy)
            residual = record.accuracy - predict(fit, record.volume, record.model_size)
            residual_cells.setdefault(
                (record.n_examples, record.mean_token_length), []
            ).append(residual)
        reports.append(
            AblationGroupReport(
                volume_mean=fmean(volumes),
                n_records=len(group),
                spread_by_model_size={
                    size: max(accs) - min(accs) for size, accs in sorted(by_model.items())
                },
                mean_residual_by_cell={
                    cell: fmean(res) for cell, res in sorted(residual_cells.items())
                },
            )
        )
    return reports


def _decompose_volume(volume: float) -> tuple[int, float]:
    # Near-square split keeps both N and L varied across a volume grid.
    n_examples = max(1, round(math.sqrt(volume)))
    return n_examples, volume / n_examples


def generate_synthetic(spec: SyntheticSpec) -> SyntheticResult:
    """Generate run records following the law exactly plus seeded Gaussian noise.

    Accuracies are clipped into (E + clip_margin, 1] and clip events counted;
    if every point needed clipping the parameters are rejected. Identical
    specs (same seed) produce identical records.
    """
    strategies = (
        spec.strategies
        if isinstance(spec.strategies, tuple)
        else (spec.strategies,) * len(spec.grid)
    )
    rng = np.random.default_rng(spec.seed)
    noise = rng.normal(0.0, spec.noise_sigma, size=len(spec.grid))
    floor = spec.E + spec.clip_margin
    records = []
    clipped_low = clipped_high = 0
    for (volume, model_size), strategy, eps in zip(spec.grid, strategies, noise):
        n_examples, mean_length = _decompose_volume(volume)
        # Evaluate the law on the record's own derived volume so stored rows obey it exactly.
        derived_volume = n_examples * mean_length
        accuracy = spec.A * derived_volume**spec.beta * model_size**spec.gamma + spec.E + eps
        if accuracy < floor:
            accuracy = floor
            clipped_low += 1
        elif accuracy > 1.0:
            accuracy = 1.0
            clipped_high += 1
        records.append(
            RunRecord(
                model_size=model_size,
                strategy=strategy,
                budget=None,
                n_examples=n_examples,
                mean_token_length=mean_length,
                accuracy=accuracy,
            )
        )
    if clipped_low + clipped_high == len(records):
        raise ValueError(
            "generating parameters leave no accuracy inside "
            f"({floor:g}, 1]; every point was clipped"
        )
    return SyntheticResult(
        records=tuple(records), n_clipped_low=clipped_low, n_clipped_high=clipped_high
    )


def _csv_buffer() -> tuple[io.StringIO, "csv._writer"]:
    buffer = io.StringIO()
    return buffer, csv.writer(buffer, lineterminator="\n")


def render_strategy_table_csv(rows: Sequence[StrategyTableRow]) -> str:
    buffer, writer = _csv_buffer()
    writer.writerow(STRATEGY_TABLE_HEADER)
    for row in rows:
        writer.writerow(
            [
                row.strategy_label,
                fmt_float(row.mean_n),
                fmt_float(row.mean_l),
                fmt_float(row.mean_volume),
                fmt_float(row.mean_accuracy),
            ]
        )
    return buffer.getvalue()


def render_efficiency_csv(points: Sequence[EfficiencyPoint]) -> str:
    buffer, writer = _csv_buffer()
    writer.writerow(EFFICIENCY_HEADER)
    for point in points:
        writer.writerow([fmt_float(point.model_size), point.strategy_label, fmt_float(point.eta_norm)])
    return buffer.getvalue()


def render_runs_csv(records: Sequence[RunRecord]) -> str:
    from .corpus import RUN_FILE_HEADER

    buffer, writer = _csv_buffer()
    writer.writerow(RUN_FILE_HEADER)
    for record in records:
        writer.writerow(
            [
                fmt_float(record.model_size),
                record.strategy.value,
                "" if record.budget is None else record.budget,
                record.n_examples,
                fmt_float(record.mean_token_length),
                fmt_float(record.accuracy),
            ]
        )
    return buffer.getvalue()


def load_strategy_table(path: str | Path) -> list[StrategyTableRow]:
    """Load a strategy-table CSV (e.g. a transcription of a published table)."""
    path = Path(path)
    with path.open(newline="", encoding="utf-8") as handle:
        reader = csv.reader(handle)
        header = next(reader, None)
        if header is None or tuple(cell.strip() for cell in header) != STRATEGY_TABLE_HEADER:
            raise DataFormatError(
                f"{path}: expected header {','.join(STRATEGY_TABLE_HEADER)}, got "
                f"{','.join(header) if header else 'an empty file'}"
            )
        rows = []
        for lineno, row in enumerate(reader, start=2):
            if not row or all(not cell.strip() for cell in row):
                continue
            if len(row) != len(STRATEGY_TABLE_HEADER):
                raise DataFormatError(
                    f"{path}: row {lineno}: expected {len(STRATEGY_TABLE_HEADER)} fields, got {len(row)}"
                )
            try:
                values = [float(cell) for cell in row[1:]]
            except ValueError as exc:
                raise DataFormatError(f"{path}: row {lineno}: non-numeric field: {exc}") from None
            if any(not math.isfinite(v) or v <= 0 for v in values):
                raise DataFormatError(f"{path}: row {lineno}: all numeric fields must be positive")
            rows.append(StrategyTableRow(row[0].strip(), *values))
    if not rows:
        raise DataFormatError(f"{path}: no data rows")
    return rows


def load_volume_grid(path: str | Path) -> tuple[tuple[tuple[float, float], ...], tuple[Strategy, ...] | None]:
    """Load a (volume, model_size_m[, strategy]) grid CSV for synthetic generation."""
    path = Path(path)
    with path.open(newline="", encoding="utf-8") as handle:
        reader = csv.reader(handle)
        header = next(reader, None)
        if header is None:
            raise DataFormatError(f"{path}: empty file; expected header {','.join(VOLUME_GRID_HEADER)}")
        found = tuple(cell.strip() for cell in header)
        with_strategy = found == VOLUME_GRID_HEADER + ("strategy",)
        if not with_strategy and found != VOLUME_GRID_HEADER:
            raise DataFormatError(
                f"{path}: expected header {','.join(VOLUME_GRID_HEADER)} "
                f"(optionally plus 'strategy'), got {','.join(found)}"
            )
        grid: list[tuple[float, float]] = []
        strategies: list[Strategy] = []
        for lineno, row in enumerate(reader, start=2):
            if not row or all(not cell.strip() for cell in row):
                continue
            if len(row) != len(found):
                raise DataFormatError(
                    f"{path}: row {lineno}: expected {len(found)} fields, got {len(row)}"
                )
            try:
                volume, model_size = float(row[0]), float(row[1])
            except ValueError as exc:
                raise DataFormatError(f"{path}: row {lineno}: non-numeric field: {exc}") from None
            if volume <= 0 or model_size <= 0:
                raise DataFormatError(f"{path}: row {lineno}: volume and model size must be positive")
            grid.append((volume, model_size))
            if with_strategy:
                strategies.append(Strategy.parse(row[2]))
    if not grid:
        raise DataFormatError(f"{path}: no data rows")
    return tuple(grid), tuple(strategies) if with_strategy else None


def emit_report(
    output_dir: str | Path,
    *,
    fits: Sequence[ScalingLawFit] = (),
    table_rows: Sequence[StrategyTableRow] | None = None,
    efficiency_points: Sequence[EfficiencyPoint] | None = None,
    comparison: ComparisonReport | None = None,
    force: bool = False,
) -> dict:
    """Write the report bundle plus a digest manifest; returns the manifest.

    All content is rendered before anything touches disk and each file is
    written atomically, so a failed run leaves no partial outputs. Equal
    inputs produce byte-identical files.
    """
    if not fits and table_rows is None and efficiency_points is None and comparison is None:
        raise ValueError("emit_report requires at least one input")
    contents: dict[str, str] = {}
    for fit in fits:
        contents[f"fit_{fit.strategy_label}.json"] = json_dumps(fit_to_dict(fit)) + "\n"
    if table_rows is not None:
        contents["strategy_table.csv"] = render_strategy_table_csv(table_rows)
    if efficiency_points is not None:
        contents["efficiency.csv"] = render_efficiency_csv(efficiency_points)
    if comparison is not None:
        contents["comparison.json"] = json_dumps(comparison_to_dict(comparison)) + "\n"
    manifest = {
        "files": [
            {
                "name": name,
                "bytes": len(contents[name].encode("utf-8")),
                "sha256": sha256_hex(contents[name].encode("utf-8")),
            }
            for name in sorted(contents)
        ]
    }
    contents["manifest.json"] = json_dumps(manifest) + "\n"
    write_text_files(output_dir, contents, force=force)
    return manifest
