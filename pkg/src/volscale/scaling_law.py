"""Robust fitting of accuracy = A * V**beta * M**gamma + E.

The fit runs a grid search over the irreducible offset E. For each feasible
offset (every accuracy must exceed it by a positivity margin), the model is
linearized to

    ln(accuracy - E) = ln A + beta * ln V + gamma * ln M

and solved by iteratively reweighted least squares with Huber weights on
MAD-standardized residuals. Candidates are compared by RMSE on the original
accuracy scale, because log responses at different offsets are different
response variables; ties go to the smaller offset. The whole pipeline is
deterministic: equal inputs produce bit-identical fits.
"""

import math
import warnings
from dataclasses import dataclass, fields

import numpy as np

from .corpus import RunRecord
from .errors import (
    DegenerateDesignError,
    ExcludedPointError,
    InfeasibleGridError,
    PositivityError,
)

__all__ = [
    "FitConfig",
    "HuberFit",
    "ScalingLawFit",
    "EfficiencyPoint",
    "offset_grid",
    "linearize",
    "fit_huber",
    "fit_grid",
    "predict",
    "token_efficiency",
    "fit_to_dict",
    "fit_from_dict",
]

# 95%-efficiency tuning constant for the Huber loss on standardized residuals.
DEFAULT_HUBER_DELTA = 1.345
# Consistency factor turning the median absolute deviation into a sigma estimate.
MAD_TO_SIGMA = 1.4826


@dataclass(frozen=True)
class FitConfig:
    """Knobs for the offset grid search and the Huber IRLS solver."""

    e_grid_min: float = 0.20
    e_grid_max: float = 0.30
    e_grid_step: float = 0.005
    huber_delta: float = DEFAULT_HUBER_DELTA
    irls_max_iter: int = 100
    irls_tol: float = 1e-10
    positivity_margin: float = 1e-6

    def __post_init__(self) -> None:
        if self.e_grid_min > self.e_grid_max:
            raise ValueError(f"e_grid_min {self.e_grid_min} exceeds e_grid_max {self.e_grid_max}")
        if self.e_grid_step <= 0:
            raise ValueError(f"e_grid_step must be positive, got {self.e_grid_step}")
        if self.huber_delta <= 0:
            raise ValueError(f"huber_delta must be positive, got {self.huber_delta}")
        if self.irls_max_iter < 1:
            raise ValueError(f"irls_max_iter must be >= 1, got {self.irls_max_iter}")
        if self.irls_tol <= 0:
            raise ValueError(f"irls_tol must be positive, got {self.irls_tol}")
        if self.positivity_margin <= 0:
            raise ValueError(f"positivity_margin must be positive, got {self.positivity_margin}")


@dataclass(frozen=True)
class HuberFit:
    """Result of one robust log-linear solve.

    ``huber_loss`` is the final Huber objective in raw residual units
    (threshold ``delta`` times the MAD residual scale), so exact fits report 0.
    """

    intercept: float
    coefficients: tuple[float, ...]
    n_iterations: int
    converged: bool
    huber_loss: float
    # (objective before, objective after) per IRLS iteration, both evaluated at
    # that iteration's residual scale; the weighted solve guarantees after <= before.
    objective_trace: tuple[tuple[float, float], ...]


@dataclass(frozen=True)
class ScalingLawFit:
    """Fitted parameters of accuracy = A * V**beta * M**gamma + E plus diagnostics."""

    A: float
    beta: float
    gamma: float
    E: float
    rmse_accuracy: float
    huber_loss_log: float
    n_points: int
    strategy_label: str
    config: FitConfig = FitConfig()

    def __post_init__(self) -> None:
        # A == 0 is tolerated only as a hand-built probe; fitted values are exp(intercept) > 0.
        if self.A < 0:
            raise ValueError(f"A must be nonnegative, got {self.A}")
        if not 0.0 <= self.E < 1.0:
            raise ValueError(f"E must be in [0, 1), got {self.E}")
        if self.rmse_accuracy < 0 or self.huber_loss_log < 0:
            raise ValueError("rmse_accuracy and huber_loss_log must be nonnegative")
        if self.n_points < 1:
            raise ValueError(f"n_points must be >= 1, got {self.n_points}")


@dataclass(frozen=True)
class EfficiencyPoint:
    """Normalized token efficiency (accuracy - E) / (V * M**gamma) for one run."""

    model_size: float
    strategy_label: str
    eta_norm: float

    def __post_init__(self) -> None:
        if self.model_size <= 0:
            raise ValueError(f"model_size must be positive, got {self.model_size}")
        if not math.isfinite(self.eta_norm):
            raise ValueError(f"eta_norm must be finite, got {self.eta_norm}")


def offset_grid(config: FitConfig) -> list[float]:
    """Candidate offsets e_grid_min, +step, ... up to e_grid_max inclusive.

    Values are rounded to 12 decimals so that decimal grids hit decimal
    offsets exactly (0.20 + 10 * 0.005 is 0.25, not 0.25000000000000003).
    """
    values = []
    k = 0
    while True:
        value = round(config.e_grid_min + k * config.e_grid_step, 12)
        if value > config.e_grid_max + 1e-12:
            break
        values.append(value)
        k += 1
    return values


def linearize(
    records: list[RunRecord], offset: float, margin: float = 1e-6
) -> tuple[np.ndarray, np.ndarray]:
    """Build the log-linear design (ln V, ln M) and responses ln(accuracy - offset).

    Every record must satisfy accuracy - offset >= margin; the first violator
    is reported together with the offset.
    """
    headroom = np.array([record.accuracy for record in records]) - offset
    if len(records) and float(headroom.min()) < margin:
        i = int(np.argmax(headroom < margin))
        record = records[i]
        raise PositivityError(
            f"record {i} (M={record.model_size:g}, V={record.volume:g}, "
            f"accuracy={record.accuracy:g}): accuracy - E = {headroom[i]:g} is below "
            f"margin {margin:g} at E={offset:g}"
        )
    design = np.column_stack(
        [
            np.log([record.volume for record in records]),
            np.log([record.model_size for record in records]),
        ]
    )
    return design, np.log(headroom)


def _huber_objective(standardized: np.ndarray, delta: float) -> float:
    magnitude = np.abs(standardized)
    penalties = np.where(
        magnitude <= delta,
        0.5 * standardized * standardized,
        delta * (magnitude - 0.5 * delta),
    )
    return float(np.sum(penalties))


def _median(values: np.ndarray) -> float:
    # Same arithmetic as np.median (mean of the two middles for even counts),
    # via np.partition to skip the generic dispatch overhead.
    half = values.size // 2
    if values.size % 2:
        return float(np.partition(values, half)[half])
    part = np.partition(values, (half - 1, half))
    return float((part[half - 1] + part[half]) * 0.5)


def _mad_scale(residuals: np.ndarray) -> float:
    center = _median(residuals)
    return MAD_TO_SIGMA * _median(np.abs(residuals - center))


def _solve_least_squares(design: np.ndarray, responses: np.ndarray) -> np.ndarray:
    # Normal equations: with 3 well-spread columns (rank-checked upstream) this
    # matches the SVD solution to ~1e-12 and is several times faster.
    gram = design.T @ design
    moment = design.T @ responses
    try:
        return np.linalg.solve(gram, moment)
    except np.linalg.LinAlgError:
        solution, *_ = np.linalg.lstsq(design, responses, rcond=None)
        return solution


def fit_huber(
    design: np.ndarray,
    responses: np.ndarray,
    config: FitConfig | None = None,
    column_names: tuple[str, ...] = ("ln_volume", "ln_model_size"),
) -> HuberFit:
    """Solve a robust linear regression with an intercept by Huber IRLS.

    Starts from ordinary least squares. Each iteration standardizes the
    residuals by their MAD scale (times 1.4826), applies Huber weights
    w = 1 for |r/s| <= delta and delta/|r/s| beyond, and re-solves the
    weighted least-squares problem. Stops when the max coefficient change
    drops below ``irls_tol`` or after ``irls_max_iter`` iterations (the
    latter warns and returns the last iterate).
    """
    config = config or FitConfig()
    design = np.asarray(design, dtype=float)
    responses = np.asarray(responses, dtype=float)
    if design.ndim != 2:
        raise ValueError("design must be a 2-d array")
    augmented = _checked_augmented_design(design, column_names)
    return _irls(augmented, responses, config)


def _checked_augmented_design(design: np.ndarray, column_names: tuple[str, ...]) -> np.ndarray:
    """Prepend the intercept column after rejecting degenerate designs."""
    n_points, n_columns = design.shape
    if n_points < n_columns + 2:
        raise ValueError(
            f"need at least {n_columns + 2} points to fit {n_columns + 1} linear parameters, "
            f"got {n_points}"
        )
    for j in range(n_columns):
        if np.ptp(design[:, j]) == 0.0:
            name = column_names[j] if j < len(column_names) else f"column {j}"
            raise DegenerateDesignError(
                f"design column {name} is constant ({design[0, j]:g}); "
                "its exponent is unidentifiable"
            )
    augmented = np.column_stack([np.ones(n_points), design])
    if np.linalg.matrix_rank(augmented) < n_columns + 1:
        raise DegenerateDesignError("design matrix is rank-deficient (collinear regressors)")
    return augmented


def _irls(augmented: np.ndarray, responses: np.ndarray, config: FitConfig) -> HuberFit:
    theta = _solve_least_squares(augmented, responses)
    trace: list[tuple[float, float]] = []
    converged = False
    iterations = 0
    step = math.inf
    for _ in range(config.irls_max_iter):
        iterations += 1
        residuals = responses - augmented @ theta
        if float(np.max(np.abs(residuals))) == 0.0:
            converged = True
            break
        scale = _mad_scale(residuals)
        if scale <= 0.0:
            # More than half the residuals are exactly zero; fall back to a mean scale.
            scale = float(np.mean(np.abs(residuals)))
        standardized = residuals / scale
        objective_before = _huber_objective(standardized, config.huber_delta)
        magnitude = np.abs(standardized)
        weights = np.where(magnitude <= config.huber_delta, 1.0, config.huber_delta / magnitude)
        sqrt_weights = np.sqrt(weights)
        theta_next = _solve_least_squares(
            augmented * sqrt_weights[:, None], responses * sqrt_weights
        )
        objective_after = _huber_objective(
            (responses - augmented @ theta_next) / scale, config.huber_delta
        )
        trace.append((objective_before, objective_after))
        step = float(np.max(np.abs(theta_next - theta)))
        theta = theta_next
        if step < config.irls_tol:
            converged = True
            break
    if not converged:
        warnings.warn(
            f"IRLS did not converge within {config.irls_max_iter} iterations "
            f"(last coefficient change {step:g}); returning the last iterate",
            stacklevel=2,
        )

    residuals = responses - augmented @ theta
    if float(np.max(np.abs(residuals))) == 0.0:
        final_loss = 0.0
    else:
        scale = _mad_scale(residuals)
        if scale <= 0.0:
            scale = float(np.mean(np.abs(residuals)))
        # Objective in raw log-residual units (threshold delta * scale), so a
        # perfect fit reports ~0 rather than a scale-free constant.
        final_loss = scale * scale * _huber_objective(residuals / scale, config.huber_delta)
    return HuberFit(
        intercept=float(theta[0]),
        coefficients=tuple(float(c) for c in theta[1:]),
        n_iterations=iterations,
        converged=converged,
        huber_loss=final_loss,
        objective_trace=tuple(trace),
    )


def fit_grid(
    records: list[RunRecord],
    config: FitConfig | None = None,
    *,
    strategy_label: str | None = None,
) -> ScalingLawFit:
    """Grid-search the offset E and return the fit with the lowest accuracy-scale RMSE.

    Offsets that leave any accuracy within the positivity margin are skipped;
    if none remain the grid is infeasible. RMSE ties resolve to the smaller
    offset, making the result independent of evaluation order.
    """
    records = list(records)
    config = config or FitConfig()
    if len(records) < 4:
        raise ValueError(f"need at least 4 records to fit 3 linear parameters plus E, got {len(records)}")
    if strategy_label is None:
        labels = {record.strategy.value for record in records}
        strategy_label = labels.pop() if len(labels) == 1 else "pooled"

    volumes = np.array([record.volume for record in records])
    model_sizes = np.array([record.model_size for record in records])
    accuracies = np.array([record.accuracy for record in records])
    min_accuracy = float(accuracies.min())
    # The design depends only on (V, M); only the responses change with the offset,
    # so validate it once and rerun only the IRLS core per grid point.
    design = np.column_stack([np.log(volumes), np.log(model_sizes)])
    augmented = _checked_augmented_design(design, ("ln_volume", "ln_model_size"))

    best: ScalingLawFit | None = None
    best_key: tuple[float, float] | None = None
    for offset in offset_grid(config):
        if min_accuracy - offset < config.positivity_margin:
            continue
        responses = np.log(accuracies - offset)
        robust = _irls(augmented, responses, config)
        amplitude = math.exp(robust.intercept)
        beta, gamma = robust.coefficients
        predictions = amplitude * volumes**beta * model_sizes**gamma + offset
        rmse = float(np.sqrt(np.mean((accuracies - predictions) ** 2)))
        key = (rmse, offset)
        if best_key is None or key < best_key:
            best_key = key
            best = ScalingLawFit(
                A=amplitude,
                beta=beta,
                gamma=gamma,
                E=offset,
                rmse_accuracy=rmse,
                huber_loss_log=robust.huber_loss,
                n_points=len(records),
                strategy_label=strategy_label,
                config=config,
            )
    if best is None:
        raise InfeasibleGridError(
            f"no feasible offset on the grid: min accuracy {min_accuracy:g} requires "
            f"E <= {min_accuracy - config.positivity_margin:g}, but the grid starts at "
            f"{config.e_grid_min:g}; lower e_grid_min"
        )
    return best


def predict(fit: ScalingLawFit, volume: float, model_size: float) -> float:
    """Evaluate A * V**beta * M**gamma + E; values above 1 are returned unclamped."""
    if volume <= 0:
        raise ValueError(f"volume must be positive, got {volume}")
    if model_size <= 0:
        raise ValueError(f"model_size must be positive, got {model_size}")
    return fit.A * volume**fit.beta * model_size**fit.gamma + fit.E


def token_efficiency(fit: ScalingLawFit, record: RunRecord) -> EfficiencyPoint:
    """Normalized token efficiency of one record under a fit's E and gamma."""
    if record.accuracy <= fit.E:
        raise ExcludedPointError(
            f"accuracy {record.accuracy:g} does not exceed E {fit.E:g}; "
            "token efficiency is undefined for this record"
        )
    eta = (record.accuracy - fit.E) / (record.volume * record.model_size**fit.gamma)
    return EfficiencyPoint(
        model_size=record.model_size,
        strategy_label=record.strategy.value,
        eta_norm=eta,
    )


def fit_to_dict(fit: ScalingLawFit) -> dict:
    """JSON-ready view of a fit, with the effective config echoed for provenance."""
    return {
        "strategy": fit.strategy_label,
        "A": fit.A,
        "beta": fit.beta,
        "gamma": fit.gamma,
        "E": fit.E,
        "rmse_accuracy": fit.rmse_accuracy,
        "huber_loss_log": fit.huber_loss_log,
        "n_points": fit.n_points,
        "config_echo": {field.name: getattr(fit.config, field.name) for field in fields(FitConfig)},
    }


def fit_from_dict(payload: dict) -> ScalingLawFit:
    """Rebuild a fit from its JSON form; diagnostics default to neutral values."""
    try:
        parameters = {name: float(payload[name]) for name in ("A", "beta", "gamma", "E")}
    except KeyError as exc:
        raise ValueError(f"fit payload is missing required key {exc.args[0]!r}") from None
    echo = payload.get("config_echo", {})
    known = {field.name for field in fields(FitConfig)}
    config = FitConfig(**{name: echo[name] for name in known if name in echo})
    return ScalingLawFit(
        rmse_accuracy=float(payload.get("rmse_accuracy", 0.0)),
        huber_loss_log=float(payload.get("huber_loss_log", 0.0)),
        n_points=int(payload.get("n_points", 1)),
        strategy_label=str(payload.get("strategy", "unknown")),
        config=config,
        **parameters,
    )
