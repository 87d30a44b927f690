"""Budget-constrained selection strategies with a prefix-nesting guarantee.

Each strategy defines one canonical ordering of the corpus and a selection is
always the longest prefix of that ordering that fits the token budget,
stopping at the first example that would overflow. Prefix selection is what
makes selections at increasing budgets nested: a smaller budget's selection
is always a prefix of a larger budget's.
"""

from dataclasses import dataclass
from statistics import median
from typing import Sequence

from .corpus import DatasetSummary, Example, Strategy, summarize

__all__ = [
    "SELECTION_STRATEGIES",
    "Selection",
    "NestingViolation",
    "NestingResult",
    "canonical_order",
    "subsample",
    "nesting_check",
    "check_prefix_nesting",
    "selection_to_dict",
]

# The three constructible selection strategies; Strategy.OTHER only labels
# externally observed runs and defines no ordering.
SELECTION_STRATEGIES = (Strategy.FEW_LONG, Strategy.MANY_SHORT, Strategy.BALANCED)


@dataclass(frozen=True)
class Selection:
    """A budgeted selection: a prefix of the strategy's canonical corpus ordering."""

    strategy: Strategy
    budget: int
    example_ids: tuple[str, ...]
    summary: DatasetSummary | None

    @property
    def is_empty(self) -> bool:
        return not self.example_ids


@dataclass(frozen=True)
class NestingViolation:
    budget_small: int
    budget_large: int
    detail: str


@dataclass(frozen=True)
class NestingResult:
    ok: bool
    violation: NestingViolation | None = None


def canonical_order(corpus: Sequence[Example], strategy: Strategy) -> list[Example]:
    """Order the corpus deterministically for the given selection strategy.

    few_long sorts by token length descending, many_short ascending, and
    balanced by distance to the median token length of the full corpus
    (even-count median is the mean of the two middle values). Ties break by
    token length ascending, then id ascending.
    """
    if not corpus:
        raise ValueError("cannot order an empty corpus")
    if strategy not in SELECTION_STRATEGIES:
        raise ValueError(f"{strategy} is not a selection strategy; expected one of "
                         f"{', '.join(s.value for s in SELECTION_STRATEGIES)}")
    if strategy is Strategy.FEW_LONG:
        key = lambda e: (-e.token_length, e.token_length, e.id)
    elif strategy is Strategy.MANY_SHORT:
        key = lambda e: (e.token_length, e.id)
    else:
        center = median(e.token_length for e in corpus)
        key = lambda e: (abs(e.token_length - center), e.token_length, e.id)
    return sorted(corpus, key=key)


def subsample(corpus: Sequence[Example], strategy: Strategy, budget: int) -> Selection:
    """Take the longest canonical-order prefix whose token total fits the budget.

    Accumulation stops at the first example that would overflow; no smaller
    later example is skipped to, which is what guarantees nesting across
    budgets. A budget smaller than the first example yields an empty
    Selection with no summary.
    """
    if budget < 1:
        raise ValueError(f"budget must be >= 1, got {budget}")
    chosen: list[Example] = []
    total = 0
    for example in canonical_order(corpus, strategy):
        if total + example.token_length > budget:
            break
        chosen.append(example)
        total += example.token_length
    return Selection(
        strategy=strategy,
        budget=budget,
        example_ids=tuple(example.id for example in chosen),
        summary=summarize(chosen) if chosen else None,
    )


def check_prefix_nesting(selections: Sequence[Selection]) -> NestingResult:
    """Check that each selection's ids are a prefix of the next one's."""
    for smaller, larger in zip(selections, selections[1:]):
        if smaller.example_ids != larger.example_ids[: len(smaller.example_ids)]:
            mismatch = next(
                i
                for i, ident in enumerate(smaller.example_ids)
                if i >= len(larger.example_ids) or larger.example_ids[i] != ident
            )
            return NestingResult(
                ok=False,
                violation=NestingViolation(
                    budget_small=smaller.budget,
                    budget_large=larger.budget,
                    detail=(
                        f"selection at budget {smaller.budget} is not a prefix of budget "
                        f"{larger.budget}: first mismatch at position {mismatch}"
                    ),
                ),
            )
    return NestingResult(ok=True)


def nesting_check(corpus: Sequence[Example], strategy: Strategy, budgets: Sequence[int]) -> NestingResult:
    """Subsample at each budget and verify the prefix-nesting property."""
    for a, b in zip(budgets, budgets[1:]):
        if b <= a:
            raise ValueError(f"budgets must be strictly ascending, got {a} before {b}")
    selections = [subsample(corpus, strategy, budget) for budget in budgets]
    return check_prefix_nesting(selections)


def selection_to_dict(selection: Selection) -> dict:
    """JSON-ready view of a Selection (empty selections carry null aggregates)."""
    summary = selection.summary
    return {
        "strategy": selection.strategy.value,
        "budget_tokens": selection.budget,
        "example_ids": list(selection.example_ids),
        "n_examples": summary.n_examples if summary else 0,
        "mean_token_length": summary.mean_token_length if summary else None,
        "volume": summary.volume if summary else None,
        "total_tokens": summary.total_tokens if summary else 0,
    }
