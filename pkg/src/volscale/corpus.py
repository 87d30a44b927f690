"""Data model and ingestion for example corpora and fine-tuning run records.

The unit of selection is an :class:`Example` (an id plus a token length).
Aggregates over a selection are a :class:`DatasetSummary` whose ``volume``
is the example count times the mean token length, which is identically the
total token count. Observed fine-tuning outcomes are :class:`RunRecord`
rows keyed by model size, selection strategy, and the composition
(``n_examples``, ``mean_token_length``) of the training set.

All types are immutable and safe to share across threads.
"""

import csv
import json
import math
import warnings
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import Iterable, Sequence

from .errors import DataFormatError

__all__ = [
    "Example",
    "DatasetSummary",
    "RunRecord",
    "Strategy",
    "RUN_FILE_HEADER",
    "approximate_token_count",
    "load_examples",
    "dump_examples",
    "dumps_examples",
    "load_runs",
    "strategy_sort_key",
    "summarize",
]


class Strategy(Enum):
    """Selection strategy labels; OTHER absorbs unrecognized labels from external tables."""

    FEW_LONG = "few_long"
    MANY_SHORT = "many_short"
    BALANCED = "balanced"
    OTHER = "other"

    @classmethod
    def parse(cls, label: str) -> "Strategy":
        """Parse a strategy label case-insensitively; unknown labels map to OTHER with a warning."""
        normalized = label.strip().lower()
        for member in cls:
            if member.value == normalized:
                return member
        warnings.warn(f"unknown strategy {label!r}; treating it as 'other'", stacklevel=2)
        return cls.OTHER


_STRATEGY_TABLE_RANK = {"few_long": 0, "many_short": 1, "balanced": 2}


def strategy_sort_key(label: str) -> tuple[int, str]:
    """Canonical report ordering: few_long, many_short, balanced, then others alphabetically."""
    return (_STRATEGY_TABLE_RANK.get(label, 3), label)


@dataclass(frozen=True)
class Example:
    """One training item: a unique id and its length in tokens."""

    id: str
    token_length: int
    text: str | None = None

    def __post_init__(self) -> None:
        if not isinstance(self.id, str) or not self.id:
            raise ValueError(f"example id must be a non-empty string, got {self.id!r}")
        if isinstance(self.token_length, bool) or not isinstance(self.token_length, int):
            raise ValueError(f"example {self.id!r}: token_length must be an integer")
        if self.token_length < 1:
            raise ValueError(f"example {self.id!r}: token_length must be >= 1, got {self.token_length}")


@dataclass(frozen=True)
class DatasetSummary:
    """Aggregate view of a selection: count N, mean length L, and volume V = N*L."""

    n_examples: int
    mean_token_length: float
    volume: float
    total_tokens: int

    def __post_init__(self) -> None:
        if self.n_examples < 1:
            raise ValueError(f"n_examples must be >= 1, got {self.n_examples}")
        if self.total_tokens < 1:
            raise ValueError(f"total_tokens must be >= 1, got {self.total_tokens}")
        if self.mean_token_length <= 0:
            raise ValueError(f"mean_token_length must be positive, got {self.mean_token_length}")
        if self.volume <= 0:
            raise ValueError(f"volume must be positive, got {self.volume}")
        # V = N * L up to float rounding; summarize() pins volume to the exact token total.
        if not math.isclose(self.volume, self.n_examples * self.mean_token_length, rel_tol=1e-12):
            raise ValueError(
                f"volume {self.volume!r} inconsistent with "
                f"n_examples * mean_token_length = {self.n_examples * self.mean_token_length!r}"
            )


@dataclass(frozen=True)
class RunRecord:
    """One observed fine-tuning outcome for a (model size, strategy, selection) condition.

    ``model_size`` is in millions of parameters; ``budget`` is the token budget
    the selection was made under, or None when unknown.
    """

    model_size: float
    strategy: Strategy
    budget: int | None
    n_examples: int
    mean_token_length: float
    accuracy: float

    def __post_init__(self) -> None:
        if not isinstance(self.strategy, Strategy):
            raise ValueError(f"strategy must be a Strategy, got {self.strategy!r}")
        if self.model_size <= 0:
            raise ValueError(f"model_size must be positive, got {self.model_size}")
        if self.budget is not None and self.budget < 1:
            raise ValueError(f"budget must be >= 1 when present, got {self.budget}")
        if self.n_examples < 1:
            raise ValueError(f"n_examples must be >= 1, got {self.n_examples}")
        if self.mean_token_length <= 0:
            raise ValueError(f"mean_token_length must be positive, got {self.mean_token_length}")
        if not 0.0 < self.accuracy <= 1.0:
            raise ValueError(f"accuracy must be in (0, 1], got {self.accuracy}")

    @property
    def volume(self) -> float:
        """Dataset volume V = N * L of the training selection behind this run."""
        return self.n_examples * self.mean_token_length


def approximate_token_count(text: str) -> int:
    """Count maximal whitespace-delimited segments; empty text still occupies one token slot."""
    return max(1, len(text.split()))


def load_examples(path: str | Path) -> list[Example]:
    """Load a JSONL examples file, preserving insertion order.

    Each line is an object with ``id`` (required), ``token_length`` (optional
    integer), and ``text`` (optional string). When ``token_length`` is absent
    it is computed from ``text`` via :func:`approximate_token_count`; a record
    with neither field is malformed. Blank lines are ignored.
    """
    path = Path(path)
    examples: list[Example] = []
    seen: set[str] = set()
    with path.open(encoding="utf-8") as handle:
        for lineno, line in enumerate(handle, start=1):
            if not line.strip():
                continue
            try:
                payload = json.loads(line)
            except json.JSONDecodeError as exc:
                raise DataFormatError(f"{path}: line {lineno}: invalid JSON: {exc}") from exc
            if not isinstance(payload, dict):
                raise DataFormatError(f"{path}: line {lineno}: expected a JSON object")
            example = _example_from_payload(payload, path, lineno)
            if example.id in seen:
                raise DataFormatError(f"{path}: line {lineno}: duplicate example id {example.id!r}")
            seen.add(example.id)
            examples.append(example)
    return examples


def _example_from_payload(payload: dict, path: Path, lineno: int) -> Example:
    identifier = payload.get("id")
    if not isinstance(identifier, str) or not identifier:
        raise DataFormatError(f"{path}: line {lineno}: 'id' must be a non-empty string")
    token_length = payload.get("token_length")
    text = payload.get("text")
    if text is not None and not isinstance(text, str):
        raise DataFormatError(f"{path}: line {lineno}: 'text' must be a string")
    if token_length is None:
        if text is None:
            raise DataFormatError(
                f"{path}: line {lineno}: record {identifier!r} has neither 'token_length' nor 'text'"
            )
        token_length = approximate_token_count(text)
    elif isinstance(token_length, bool) or not isinstance(token_length, int):
        raise DataFormatError(f"{path}: line {lineno}: 'token_length' must be an integer")
    elif token_length < 1:
        raise DataFormatError(f"{path}: line {lineno}: 'token_length' must be >= 1, got {token_length}")
    return Example(id=identifier, token_length=token_length, text=text)


def dumps_examples(examples: Iterable[Example]) -> str:
    """Serialize examples to canonical JSONL (the inverse of :func:`load_examples`)."""
    lines = []
    for example in examples:
        payload: dict = {"id": example.id, "token_length": example.token_length}
        if example.text is not None:
            payload["text"] = example.text
        lines.append(json.dumps(payload, ensure_ascii=False))
    return "".join(line + "\n" for line in lines)


def dump_examples(examples: Iterable[Example], path: str | Path) -> None:
    """Write examples as canonical JSONL."""
    Path(path).write_text(dumps_examples(examples), encoding="utf-8")


def summarize(selection: Sequence[Example]) -> DatasetSummary:
    """Summarize a non-empty selection; volume equals the total token count exactly."""
    if not selection:
        raise ValueError("cannot summarize an empty selection")
    total = sum(example.token_length for example in selection)
    count = len(selection)
    return DatasetSummary(
        n_examples=count,
        mean_token_length=total / count,
        volume=float(total),
        total_tokens=total,
    )


RUN_FILE_HEADER = (
    "model_size_m",
    "strategy",
    "budget_tokens",
    "n_examples",
    "mean_token_length",
    "accuracy",
)


def load_runs(path: str | Path) -> list[RunRecord]:
    """Load a run-record CSV with the exact documented header, preserving row order.

    ``budget_tokens`` may be empty when unknown. Strategy labels are parsed
    case-insensitively; unknown labels map to ``other`` with a warning.
    """
    path = Path(path)
    with path.open(newline="", encoding="utf-8") as handle:
        reader = csv.reader(handle)
        header = next(reader, None)
        if header is None:
            raise DataFormatError(f"{path}: empty file; expected header {','.join(RUN_FILE_HEADER)}")
        _check_run_header(header, path)
        records = []
        for lineno, row in enumerate(reader, start=2):
            if not row or all(not cell.strip() for cell in row):
                continue
            records.append(_run_from_row(row, path, lineno))
    return records


def _check_run_header(header: Sequence[str], path: Path) -> None:
    found = tuple(cell.strip() for cell in header)
    if found == RUN_FILE_HEADER:
        return
    missing = [name for name in RUN_FILE_HEADER if name not in found]
    unknown = [name for name in found if name not in RUN_FILE_HEADER]
    detail = []
    if missing:
        detail.append(f"missing column(s): {', '.join(missing)}")
    if unknown:
        detail.append(f"unknown column(s): {', '.join(unknown)}")
    if not detail:
        detail.append("columns out of order")
    raise DataFormatError(
        f"{path}: bad header ({'; '.join(detail)}); expected exactly {','.join(RUN_FILE_HEADER)}"
    )


def _run_from_row(row: Sequence[str], path: Path, lineno: int) -> RunRecord:
    if len(row) != len(RUN_FILE_HEADER):
        raise DataFormatError(
            f"{path}: row {lineno}: expected {len(RUN_FILE_HEADER)} fields, got {len(row)}"
        )
    model_size = _parse_positive_float(row[0], "model_size_m", path, lineno)
    strategy = Strategy.parse(row[1])
    budget_cell = row[2].strip()
    budget = None if not budget_cell else _parse_positive_int(budget_cell, "budget_tokens", path, lineno)
    n_examples = _parse_positive_int(row[3], "n_examples", path, lineno)
    mean_token_length = _parse_positive_float(row[4], "mean_token_length", path, lineno)
    accuracy = _parse_float(row[5], "accuracy", path, lineno)
    if not 0.0 < accuracy <= 1.0:
        raise DataFormatError(f"{path}: row {lineno}: accuracy {accuracy} outside (0, 1]")
    return RunRecord(
        model_size=model_size,
        strategy=strategy,
        budget=budget,
        n_examples=n_examples,
        mean_token_length=mean_token_length,
        accuracy=accuracy,
    )


def _parse_float(cell: str, field: str, path: Path, lineno: int) -> float:
    try:
        value = float(cell)
    except ValueError as exc:
        raise DataFormatError(f"{path}: row {lineno}: {field} {cell!r} is not a number") from exc
    if not math.isfinite(value):
        raise DataFormatError(f"{path}: row {lineno}: {field} must be finite, got {cell!r}")
    return value


def _parse_positive_float(cell: str, field: str, path: Path, lineno: int) -> float:
    value = _parse_float(cell, field, path, lineno)
    if value <= 0:
        raise DataFormatError(f"{path}: row {lineno}: {field} must be positive, got {value}")
    return value


def _parse_positive_int(cell: str, field: str, path: Path, lineno: int) -> int:
    try:
        value = int(cell)
    except ValueError as exc:
        raise DataFormatError(f"{path}: row {lineno}: {field} {cell!r} is not an integer") from exc
    if value < 1:
        raise DataFormatError(f"{path}: row {lineno}: {field} must be >= 1, got {value}")
    return value
