import logging
from typing import NamedTuple, Sequence

import numpy as np
from scipy.linalg import LinAlgError, cho_factor, cho_solve

from app.core.errors import ExplainError
from app.core.seeding import make_rng
from app.models.dataset import FeatureStats
from app.schemas.explain import Attribution, ExplainMethod, LimeConfig, LimeStability
from app.services.shapley_service import Predictor

logger = logging.getLogger(__name__)

# Ridge added to the normal equations when they are (near) singular, scaled
# by the mean diagonal of the weighted Gram matrix
RIDGE_EPSILON = 1e-10
CONDITION_LIMIT = 1e12


class WeightedFit(NamedTuple):
    coefficients: np.ndarray
    regularized: bool
    ridge: float


def weighted_least_squares(
    design: np.ndarray,
    weights: np.ndarray,
    responses: np.ndarray,
    epsilon: float = RIDGE_EPSILON,
) -> WeightedFit:
    """Minimize sum_i w_i (r_i - A_i c)^2 through Cholesky on A^T W A.

    Falls back to (A^T W A + eps * mean(diag) * I) when the Gram matrix is not
    positive definite or its condition number exceeds CONDITION_LIMIT; the
    result is then flagged `regularized`.
    """
    A = np.asarray(design, dtype=np.float64)
    w = np.asarray(weights, dtype=np.float64)
    r = np.asarray(responses, dtype=np.float64)
    if A.ndim != 2 or w.shape != (A.shape[0],) or r.shape != (A.shape[0],):
        raise ExplainError(
            f"Inconsistent shapes: design {A.shape}, weights {w.shape}, responses {r.shape}"
        )
    m, p = A.shape
    if m < p:
        raise ExplainError(f"{m} rows cannot determine {p} coefficients")
    if not np.all(np.isfinite(w)) or np.any(w < 0):
        raise ExplainError("Weights must be finite and non-negative")
    if not np.any(w > 0):
        raise ExplainError("All weights are zero")

    gram = A.T @ (A * w[:, None])
    rhs = A.T @ (w * r)

    if np.linalg.cond(gram) < CONDITION_LIMIT:
        try:
            return WeightedFit(cho_solve(cho_factor(gram), rhs), False, 0.0)
        except LinAlgError:
            pass

    ridge = epsilon * max(float(np.mean(np.diag(gram))), 1.0)
    logger.debug(f"Normal equations near-singular; solving with ridge {ridge:.3g}")
    stabilized = gram + ridge * np.eye(p)
    return WeightedFit(cho_solve(cho_factor(stabilized), rhs), True, ridge)


def top_k_mask(slopes: np.ndarray, k: int) -> np.ndarray:
    """Largest |slope| first, lower index on ties"""
    kept = sorted(range(slopes.shape[0]), key=lambda j: (-abs(slopes[j]), j))[:k]
    mask = np.zeros(slopes.shape[0], dtype=bool)
    mask[kept] = True
    return mask


def _check_inputs(model: Predictor, x: np.ndarray, stats: FeatureStats) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1 or x.shape[0] != model.n_features:
        raise ExplainError(
            f"Instance has shape {x.shape}, model expects {model.n_features} features"
        )
    if len(stats.feature_names) != model.n_features:
        raise ExplainError("Feature statistics do not match the model schema")
    if np.any(stats.std < 0) or not np.all(np.isfinite(stats.std)):
        raise ExplainError("Feature standard deviations must be finite and non-negative")
    return x


def lime_explain(
    model: Predictor,
    x: np.ndarray,
    stats: FeatureStats,
    config: LimeConfig,
    width_factor: float = 0.75,
) -> Attribution:
    """Local linear surrogate around x.

    Perturbations are z ~ Normal(x, diag(std^2)) with constant features held
    at x. The surrogate is fitted on standardized offsets (z - x) / std with
    kernel weights exp(-|offset|^2 / width^2). A feature's contribution is its
    standardized slope times the instance's standardized value (x - mean) / std,
    and only the top_k features by |standardized slope| keep a contribution.
    The ranking uses |coefficient * std|, not the raw |coefficient|.
    """
    x = _check_inputs(model, x, stats)
    d = x.shape[0]
    if config.n_samples < d + 2:
        raise ExplainError(f"n_samples={config.n_samples} is below d+2={d + 2}")

    active = ~stats.constant_mask
    scale = np.where(active, stats.std, 1.0)
    rng = make_rng(config.seed)

    offsets = rng.standard_normal((config.n_samples, d))
    offsets[:, ~active] = 0.0
    offsets[0] = 0.0  # the instance itself anchors the fit
    samples = x + offsets * scale
    responses = model.predict_batch(samples)

    width = config.width_for(d, width_factor)
    weights = np.exp(-np.sum(offsets * offsets, axis=1) / (width * width))

    design = np.column_stack([np.ones(config.n_samples), offsets[:, active]])
    fit = weighted_least_squares(design, weights, responses)

    slopes = np.zeros(d)
    slopes[active] = fit.coefficients[1:]
    coefficients = slopes / scale
    intercept = float(fit.coefficients[0] - coefficients @ x)

    standardized_x = np.where(active, (x - stats.mean) / scale, 0.0)
    phi = slopes * standardized_x
    phi = np.where(top_k_mask(slopes, config.top_k), phi, 0.0)

    if fit.regularized:
        logger.warning(f"LIME surrogate for seed {config.seed} needed ridge stabilization")

    return Attribution(
        feature_names=list(stats.feature_names),
        phi=phi.tolist(),
        base_value=intercept + float(coefficients @ stats.mean),
        prediction=float(model.predict_batch(x[None, :])[0]),
        method=ExplainMethod.LIME,
        feature_values=x.tolist(),
        seed=config.seed,
        coefficients=coefficients.tolist(),
        intercept=intercept,
        regularized=fit.regularized,
    )


def lime_stability(
    model: Predictor,
    x: np.ndarray,
    stats: FeatureStats,
    config: LimeConfig,
    seeds: Sequence[int],
    width_factor: float = 0.75,
) -> LimeStability:
    """Rerun LIME under each seed and report the spread of contributions"""
    if not seeds:
        raise ExplainError("Stability check needs at least one seed")

    runs = [
        lime_explain(model, x, stats, config.model_copy(update={"seed": seed}), width_factor)
        for seed in seeds
    ]
    phis = np.array([run.phi for run in runs])
    scale = np.where(stats.constant_mask, 1.0, stats.std)
    kept = np.array(
        [top_k_mask(np.asarray(run.coefficients) * scale, config.top_k) for run in runs]
    )
    return LimeStability(
        feature_names=list(stats.feature_names),
        seeds=list(seeds),
        mean_phi=phis.mean(axis=0).tolist(),
        std_phi=phis.std(axis=0).tolist(),
        top_k_frequency=kept.mean(axis=0).tolist(),
    )
