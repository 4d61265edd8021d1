"""Server-side aggregation: frequency/mean estimates, projection, metrics.

Every mechanism is reduced to a single pipeline: views -> unbiased
estimates of the 2d event frequencies -> optional simplex projection ->
mean / non-missing values derived through the exact identities

    mean_j       = f(j_plus) - f(j_minus)
    nonmissing_j = f(j_plus) + f(j_minus).

Aggregation accumulates integer hit counts and debiases once, so the
streaming and bucketed paths produce bit-identical results.
"""

from __future__ import annotations

from dataclasses import dataclass
import numpy as np

from . import baselines as _bl
from . import coco as _coco
from . import collision as _col
from .domain import MechanismParams, PrivateView, hash_buckets, pair_signs, pair_slots


@dataclass(frozen=True)
class FrequencyEstimate:
    """Estimated frequencies of the 2d events, plus the contributing count."""

    values: np.ndarray
    n: int

    def __post_init__(self):
        if self.n < 1:
            raise ValueError("n must be >= 1")
        if np.asarray(self.values).ndim != 1:
            raise ValueError("values must be 1-d over the 2d events")


@dataclass(frozen=True)
class MeanEstimate:
    """Per-dimension mean values, optionally with non-missing frequencies."""

    values: np.ndarray
    nonmissing: np.ndarray | None = None


def _views_to_arrays(views, kind: str, t: int) -> tuple[np.ndarray, np.ndarray]:
    if isinstance(views, tuple) and len(views) == 2 and not isinstance(views[0], PrivateView):
        seeds, z = views
        return np.asarray(seeds, dtype=np.uint64), np.asarray(z, dtype=np.int64)
    seeds = np.empty(len(views), dtype=np.uint64)
    z = np.empty(len(views), dtype=np.int64)
    for i, view in enumerate(views):
        if not isinstance(view, PrivateView):
            raise TypeError("views must be PrivateView instances or (seeds, z) arrays")
        if view.hash.kind != kind or view.hash.t != t:
            raise ValueError("views are not homogeneous with the given params")
        seeds[i] = view.hash.seed
        z[i] = view.z
    return seeds, z


def aggregate_frequencies(views, mechanism: str, params) -> FrequencyEstimate:
    """Average the per-user unbiased contributions for all 2d events."""
    if mechanism == "collision":
        if not isinstance(params, _col.CollisionParams):
            params = _col.CollisionParams(params)
        seeds, z = _views_to_arrays(views, "single", params.base.t)
        n = len(seeds)
        if n == 0:
            raise ValueError("no views to aggregate")
        counts = _col.collision_event_hit_counts(seeds, z, params)
        return FrequencyEstimate(values=_col.collision_debias_counts(counts, n, params), n=n)
    if mechanism == "coco":
        seeds, z = _views_to_arrays(views, "paired", params.t)
        n = len(seeds)
        if n == 0:
            raise ValueError("no views to aggregate")
        plus, minus = _coco.coco_pair_hit_counts(seeds, z, params.d, params.t)
        return FrequencyEstimate(values=_coco_frequencies(plus, minus, n, params), n=n)
    if mechanism in ("privkv", "pckv_grr", "pckv_agrr"):
        values = _bl.baseline_frequency_estimates(views, params)
        n = len(views[0]) if params.variant == "privkv" else len(views)
        return FrequencyEstimate(values=values, n=n)
    raise ValueError(f"unknown mechanism {mechanism!r}")


def _coco_frequencies(plus: np.ndarray, minus: np.ndarray, n: int, params: MechanismParams) -> np.ndarray:
    rates = _coco.collision_rates(params.s, params.epsilon, params.t)
    mean = (plus - minus) / (n * (rates.p_t - rates.p_o))
    nonmissing = (plus + minus - 2.0 * n * rates.p_f) / (n * (rates.p_t + rates.p_o - 2.0 * rates.p_f))
    values = np.empty(2 * params.d)
    values[1::2] = (nonmissing + mean) / 2.0  # j_plus
    values[0::2] = (nonmissing - mean) / 2.0  # j_minus
    return values


def aggregate_frequencies_bucketed(views, mechanism: str, params) -> FrequencyEstimate:
    """Bucketed aggregation path: one indicator evaluation per distinct view.

    Views sharing (hash seed, z) contribute identical indicator vectors, so
    the hit counts are accumulated group-wise with multiplicities.  The
    result is bit-identical to ``aggregate_frequencies``; with hashes drawn
    from a pool of u distinct seeds the cost drops to O(n + u * d).
    """
    if mechanism == "collision":
        if not isinstance(params, _col.CollisionParams):
            params = _col.CollisionParams(params)
        seeds, z = _views_to_arrays(views, "single", params.base.t)
        n = len(seeds)
        if n == 0:
            raise ValueError("no views to aggregate")
        pairs = np.stack([seeds.astype(np.uint64), z.astype(np.uint64)], axis=1)
        uniq, mult = np.unique(pairs, axis=0, return_counts=True)
        counts = np.zeros(2 * params.base.d, dtype=np.int64)
        codes = np.arange(1, 2 * params.base.d + 1, dtype=np.int64)
        h = hash_buckets(uniq[:, 0][:, None], codes[None, :], params.base.t)
        hit = h == uniq[:, 1].astype(np.int64)[:, None]
        counts = (hit * mult[:, None]).sum(axis=0)
        return FrequencyEstimate(values=_col.collision_debias_counts(counts, n, params), n=n)
    if mechanism == "coco":
        seeds, z = _views_to_arrays(views, "paired", params.t)
        n = len(seeds)
        if n == 0:
            raise ValueError("no views to aggregate")
        pairs = np.stack([seeds.astype(np.uint64), z.astype(np.uint64)], axis=1)
        uniq, mult = np.unique(pairs, axis=0, return_counts=True)
        dims = np.arange(1, params.d + 1, dtype=np.int64)
        h1 = pair_slots(uniq[:, 0][:, None], dims[None, :], params.t)
        sg = pair_signs(uniq[:, 0][:, None], dims[None, :])
        hi_bit = (sg + 1) // 2
        half = params.t // 2
        zz = uniq[:, 1].astype(np.int64)[:, None]
        plus = (((h1 + hi_bit * half) == zz) * mult[:, None]).sum(axis=0)
        minus = (((h1 + (1 - hi_bit) * half) == zz) * mult[:, None]).sum(axis=0)
        return FrequencyEstimate(values=_coco_frequencies(plus, minus, n, params), n=n)
    raise ValueError(f"bucketed aggregation supports collision and coco, got {mechanism!r}")


def simplex_projection(v: np.ndarray) -> np.ndarray:
    """Euclidean projection onto the probability simplex (sum 1, nonneg).

    Sort-and-threshold with the cumulative tie rule; O(m log m), no
    randomness, idempotent.
    """
    v = np.asarray(v, dtype=float)
    u = np.sort(v)[::-1]
    css = np.cumsum(u)
    j = np.arange(1, len(v) + 1)
    rho = np.max(j[u + (1.0 - css) / j > 0.0])
    lam = (1.0 - css[rho - 1]) / rho
    return np.maximum(v + lam, 0.0)


def project_to_simplex(estimate: FrequencyEstimate, s: int) -> FrequencyEstimate:
    """Project 1/s-scaled frequencies onto the simplex, rescale back by s."""
    projected = s * simplex_projection(np.asarray(estimate.values, dtype=float) / s)
    return FrequencyEstimate(values=projected, n=estimate.n)


def mean_estimate(freq: FrequencyEstimate) -> MeanEstimate:
    """Mean and non-missing values via the exact frequency identities."""
    values = np.asarray(freq.values, dtype=float)
    return MeanEstimate(values=values[1::2] - values[0::2], nonmissing=values[1::2] + values[0::2])


def conditional_mean(est: MeanEstimate, n: int) -> tuple[np.ndarray, np.ndarray]:
    """Per-dimension conditional mean with a definedness mask.

    Undefined (masked, value NaN) where the non-missing estimate is below
    1/n, i.e. less than one user's worth of mass.
    """
    if est.nonmissing is None:
        raise ValueError("nonmissing frequencies required")
    defined = est.nonmissing >= 1.0 / n
    ratio = np.full_like(est.values, np.nan)
    np.divide(est.values, est.nonmissing, out=ratio, where=defined)
    return ratio, defined


def tve(estimate, truth) -> float:
    """Total variation error: sum of absolute estimation errors."""
    a, b = _as_matched_arrays(estimate, truth)
    return float(np.abs(a - b).sum())


def mae(estimate, truth) -> float:
    """Maximum absolute estimation error."""
    a, b = _as_matched_arrays(estimate, truth)
    return float(np.abs(a - b).max())


def _as_matched_arrays(estimate, truth) -> tuple[np.ndarray, np.ndarray]:
    a = np.asarray(estimate.values if isinstance(estimate, FrequencyEstimate) else estimate, dtype=float)
    b = np.asarray(truth.values if isinstance(truth, FrequencyEstimate) else truth, dtype=float)
    if a.shape != b.shape:
        raise ValueError(f"length mismatch: {a.shape} vs {b.shape}")
    return a, b


def true_event_frequencies(supports: np.ndarray, signs: np.ndarray, d: int) -> np.ndarray:
    """Empirical event frequencies of a dataset given as index/sign arrays."""
    n = supports.shape[0]
    codes = (2 * supports - 1 + (signs > 0)).ravel()
    return np.bincount(codes - 1, minlength=2 * d) / n
