"""Interventional (marginal) Shapley values.

The value of a coalition S for instance x is

    v(S) = mean_b f(x on S, b off S)

over the background rows b. Exact values enumerate all 2^d coalitions;
sampled values average marginal contributions over random feature orders.
Every distinct coalition is evaluated once, and all reductions run in a
fixed index order so results do not depend on the worker count.
"""

import logging
import math
from typing import List, Protocol

import numpy as np
from joblib import Parallel, delayed

from app.core.errors import ExplainError
from app.core.seeding import derive_seed, make_rng
from app.models.dataset import Background, Dataset
from app.schemas.explain import Attribution, ExplainMethod, GlobalSummary, SummaryFeature
from app.services.ingest_service import sample_rows

logger = logging.getLogger(__name__)

EXACT_ENUMERATION_LIMIT = 14
# Composite rows handed to the model per evaluation chunk
CHUNK_ROWS = 200_000


class Predictor(Protocol):
    @property
    def n_features(self) -> int: ...

    def predict_batch(self, X: np.ndarray) -> np.ndarray: ...


def make_background(dataset: Dataset, k: int, seed: int) -> Background:
    """k training rows drawn uniformly without replacement"""
    if dataset.n_rows == 0 or k < 1:
        raise ExplainError("Background needs at least one row")
    index = sample_rows(dataset, k, seed, "background")
    return Background(feature_names=dataset.feature_names, rows=dataset.rows[index])


def _check_instance(model: Predictor, x: np.ndarray, background: Background) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1 or x.shape[0] != model.n_features:
        raise ExplainError(
            f"Instance has shape {x.shape}, model expects {model.n_features} features"
        )
    if background.rows.shape[1] != model.n_features:
        raise ExplainError("Background schema does not match the model")
    if background.k == 0:
        raise ExplainError("Empty background")
    return x


def _evaluate_chunk(model: Predictor, x: np.ndarray, rows: np.ndarray, coalitions: np.ndarray) -> np.ndarray:
    m, d = coalitions.shape
    composite = np.where(coalitions[:, None, :], x[None, None, :], rows[None, :, :])
    predictions = model.predict_batch(composite.reshape(-1, d)).reshape(m, rows.shape[0])
    return predictions.mean(axis=1)


def coalition_values(
    model: Predictor,
    x: np.ndarray,
    background: Background,
    coalitions: np.ndarray,
    n_jobs: int = 1,
) -> np.ndarray:
    """v(S) for every boolean coalition row"""
    coalitions = np.asarray(coalitions, dtype=bool)
    per_chunk = max(1, CHUNK_ROWS // background.k)
    chunks = [coalitions[i:i + per_chunk] for i in range(0, coalitions.shape[0], per_chunk)]
    with Parallel(n_jobs=n_jobs) as parallel:
        values = parallel(
            delayed(_evaluate_chunk)(model, x, background.rows, chunk) for chunk in chunks
        )
    return np.concatenate(values)


def _model_output(model: Predictor, x: np.ndarray) -> float:
    return float(model.predict_batch(x[None, :])[0])


def shap_exact(
    model: Predictor,
    x: np.ndarray,
    background: Background,
    limit: int = EXACT_ENUMERATION_LIMIT,
    n_jobs: int = 1,
) -> Attribution:
    """phi_j = sum over S not containing j of |S|!(d-|S|-1)!/d! * (v(S+j) - v(S))"""
    x = _check_instance(model, x, background)
    d = x.shape[0]
    if d > limit:
        raise ExplainError(f"{d} features exceed the exact enumeration limit of {limit}")

    masks = np.arange(2**d, dtype=np.int64)
    coalitions = ((masks[:, None] >> np.arange(d)) & 1).astype(bool)
    v = coalition_values(model, x, background, coalitions, n_jobs)

    sizes = coalitions.sum(axis=1)
    weight_by_size = np.array(
        [math.factorial(s) * math.factorial(d - s - 1) / math.factorial(d) for s in range(d)]
    )
    phi = np.zeros(d)
    for j in range(d):
        bit = np.int64(1) << j
        without = masks[(masks & bit) == 0]
        phi[j] = np.sum(weight_by_size[sizes[without]] * (v[without | bit] - v[without]))

    return Attribution(
        feature_names=list(background.feature_names),
        phi=phi.tolist(),
        base_value=float(v[0]),
        prediction=_model_output(model, x),
        method=ExplainMethod.SHAP_EXACT,
        feature_values=x.tolist(),
    )


def repair_efficiency(phi: np.ndarray, base_value: float, prediction: float) -> np.ndarray:
    """Spread the additivity residual over features in proportion to |phi|"""
    residual = prediction - base_value - float(np.sum(phi))
    magnitude = np.abs(phi)
    total = float(np.sum(magnitude))
    if total > 0:
        return phi + residual * magnitude / total
    return phi + residual / phi.shape[0]


def shap_sampled(
    model: Predictor,
    x: np.ndarray,
    background: Background,
    n_coalitions: int,
    seed: int,
    n_jobs: int = 1,
) -> Attribution:
    """Monte-Carlo permutation sampling; n_coalitions is the number of orders drawn"""
    x = _check_instance(model, x, background)
    d = x.shape[0]
    if n_coalitions < 2 * d:
        raise ExplainError(f"n_coalitions={n_coalitions} is below 2*d={2 * d}")

    rng = make_rng(seed)
    orders = np.argsort(rng.random((n_coalitions, d)), axis=1)
    ranks = np.empty_like(orders)
    np.put_along_axis(ranks, orders, np.arange(d)[None, :].repeat(n_coalitions, axis=0), axis=1)

    # Coalition t of an order holds the features ranked before position t
    prefixes = ranks[:, None, :] < np.arange(d + 1)[None, :, None]
    unique, inverse = np.unique(prefixes.reshape(-1, d), axis=0, return_inverse=True)
    values = coalition_values(model, x, background, unique, n_jobs)
    v = values[inverse.reshape(-1)].reshape(n_coalitions, d + 1)
    logger.debug(f"Sampled {n_coalitions} orders over {unique.shape[0]} distinct coalitions")

    deltas = v[:, 1:] - v[:, :-1]
    phi = np.zeros(d)
    np.add.at(phi, orders.ravel(), deltas.ravel())
    phi /= n_coalitions

    base_value = float(v[0, 0])
    prediction = _model_output(model, x)
    phi = repair_efficiency(phi, base_value, prediction)

    return Attribution(
        feature_names=list(background.feature_names),
        phi=phi.tolist(),
        base_value=base_value,
        prediction=prediction,
        method=ExplainMethod.SHAP_SAMPLED,
        feature_values=x.tolist(),
        seed=seed,
    )


def shap_explain(
    model: Predictor,
    x: np.ndarray,
    background: Background,
    n_coalitions: int,
    seed: int,
    limit: int = EXACT_ENUMERATION_LIMIT,
    n_jobs: int = 1,
) -> Attribution:
    """Exact Shapley within the enumeration limit, sampled above it"""
    if np.asarray(x).shape[-1] <= limit:
        return shap_exact(model, x, background, limit, n_jobs)
    return shap_sampled(model, x, background, max(n_coalitions, 2 * np.asarray(x).shape[-1]), seed, n_jobs)


def shap_summary(
    model: Predictor,
    instances: Dataset,
    background: Background,
    n_coalitions: int = 256,
    seed: int = 42,
    limit: int = EXACT_ENUMERATION_LIMIT,
    n_jobs: int = 1,
) -> GlobalSummary:
    if instances.n_rows < 1:
        raise ExplainError("Summary needs at least one instance")

    attributions: List[Attribution] = [
        shap_explain(
            model,
            row,
            background,
            n_coalitions,
            derive_seed(seed, "summary", i),
            limit,
            n_jobs,
        )
        for i, row in enumerate(instances.rows)
    ]
    phis = np.array([a.phi for a in attributions])
    mean_abs = np.abs(phis).mean(axis=0)
    order = sorted(range(instances.n_features), key=lambda j: (-mean_abs[j], j))

    features = [
        SummaryFeature(
            name=instances.feature_names[j],
            feature_values=instances.rows[:, j].tolist(),
            attributions=phis[:, j].tolist(),
            mean_abs=float(mean_abs[j]),
        )
        for j in order
    ]
    methods = sorted({a.method for a in attributions}, key=lambda m: m.value)
    logger.info(
        f"Summarized {instances.n_rows} instances; top features: "
        f"{[f.name for f in features[:4]]}"
    )
    return GlobalSummary(
        features=features,
        n_instances=instances.n_rows,
        base_value=attributions[0].base_value,
        methods=methods,
    )
