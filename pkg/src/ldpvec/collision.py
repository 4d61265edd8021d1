"""The (d, s, epsilon, t)-Collision randomizer and its indicator estimator.

The randomizer hashes a user's event set into buckets 1..t and emits one
bucket z.  Buckets hit by a hashed event carry relative weight e^eps; the
fixed normaliser Omega = s*e^eps + t - s makes the output law sum to one
for every input, with the probability freed by internal hash conflicts
spread uniformly over the unhit buckets.

The per-user unbiased estimator of the indicator [event in Y_x] is

    ([H(event) = z] - 1/t) / (e^eps/Omega - 1/t).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .domain import (
    EventId,
    MechanismParams,
    PrivateView,
    TernaryVector,
    UserHash,
    hash_buckets,
)


@dataclass(frozen=True)
class CollisionParams:
    """Validated parameters with the normaliser Omega = s*e^eps + t - s."""

    base: MechanismParams

    def __post_init__(self):
        if self.base.t <= self.base.s:
            raise ValueError(
                f"collision mechanism needs t > s, got t={self.base.t}, s={self.base.s}"
            )

    @property
    def omega(self) -> float:
        b = self.base
        return b.s * math.exp(b.epsilon) + b.t - b.s

    @property
    def hit_prob(self) -> float:
        """P[z = b] for a bucket b hit by a hashed event: e^eps / Omega."""
        return math.exp(self.base.epsilon) / self.omega

    @property
    def false_prob(self) -> float:
        """Marginal hit rate 1/t of a uniformly hashed absent event."""
        return 1.0 / self.base.t

    def residual_prob(self, k: int) -> float:
        """P[z = b] for an unhit bucket when k distinct buckets are hit."""
        t = self.base.t
        return (self.omega - math.exp(self.base.epsilon) * k) / ((t - k) * self.omega)


def collision_optimal_t(s: int, epsilon: float) -> int:
    """Variance-minimising output size: max(s+1, floor(s*e^eps + 2s - 1))."""
    if s < 1:
        raise ValueError("s must be >= 1")
    if not epsilon > 0:
        raise ValueError("epsilon must be positive")
    return max(s + 1, math.floor(s * math.exp(epsilon) + 2 * s - 1))


def collision_params(d: int, s: int, epsilon: float, t: int | None = None) -> CollisionParams:
    if t is None:
        t = collision_optimal_t(s, epsilon)
    return CollisionParams(MechanismParams(d=d, s=s, epsilon=epsilon, t=t))


def _check_hash(hash: UserHash, params: CollisionParams) -> None:
    if hash.kind != "single":
        raise ValueError("collision mechanism requires a single-kind hash")
    if hash.t != params.base.t:
        raise ValueError(f"hash range {hash.t} != params t {params.base.t}")


def collision_output_probabilities(hit_buckets: frozenset[int], params: CollisionParams) -> np.ndarray:
    """Exact output law over buckets 1..t given the set of hit buckets."""
    t = params.base.t
    k = len(hit_buckets)
    probs = np.full(t, params.residual_prob(k))
    for b in hit_buckets:
        probs[b - 1] = params.hit_prob
    return probs

def collision_randomize(
    x: TernaryVector,
    hash: UserHash,
    params: CollisionParams,
    rng: np.random.Generator,
) -> PrivateView:
    """Sample one private view; O(s) time and memory.

    A single uniform draw is routed through a two-segment inverse CDF:
    the hit segment selects among the k distinct hashed buckets, the
    residual segment selects uniformly among the t - k others.
    """
    _check_hash(hash, params)
    if x.d != params.base.d or x.s != params.base.s:
        raise ValueError("vector shape does not match params")
    t = params.base.t
    hits = sorted(hash.bucket_set(x.event_codes()))
    k = len(hits)
    p_hit = params.hit_prob
    u = rng.random()
    if u < k * p_hit:
        z = hits[min(int(u / p_hit), k - 1)]
    else:
        q = params.residual_prob(k)
        m = min(int((u - k * p_hit) / q), t - k - 1)
        z = m + 1
        for b in hits:  # ascending; shift past hit buckets
            if b <= z:
                z += 1
    return PrivateView(hash=hash, z=z)


def collision_randomize_batch(
    supports: np.ndarray,
    signs: np.ndarray,
    seeds: np.ndarray,
    params: CollisionParams,
    rng: np.random.Generator,
) -> np.ndarray:
    """Vectorised randomizer: one output symbol per row of ``supports``.

    supports: (n, s) 1-based dimension indices, ascending per row.
    signs:    (n, s) entries in {-1, +1}.
    seeds:    (n,) per-user single-layout hash seeds.
    """
    n, s = supports.shape
    t = params.base.t
    codes = 2 * supports - 1 + (signs > 0)
    h = hash_buckets(seeds[:, None], codes, t)
    hs = np.sort(h, axis=1)
    new = np.ones_like(hs, dtype=bool)
    new[:, 1:] = hs[:, 1:] != hs[:, :-1]
    k = new.sum(axis=1)

    p_hit = params.hit_prob
    u = rng.random(n)
    is_hit = u < k * p_hit

    # Hit branch: pick the idx-th distinct hashed bucket (ascending).
    idx = np.minimum((u / p_hit).astype(np.int64), k - 1)
    rank = np.cumsum(new, axis=1) - 1
    sel = new & (rank == idx[:, None])
    z_hit = (hs * sel).sum(axis=1)

    # Residual branch: the m-th smallest bucket outside the hit set.
    q = (params.omega - math.exp(params.base.epsilon) * k) / ((t - k) * params.omega)
    m = np.minimum(((u - k * p_hit) / q).astype(np.int64), t - k - 1)
    m = np.maximum(m, 0)
    z_miss = m + 1
    for col in range(s):
        z_miss += (new[:, col] & (hs[:, col] <= z_miss)).astype(np.int64)

    return np.where(is_hit, z_hit, z_miss)


def collision_indicator_estimate(view: PrivateView, event: EventId, params: CollisionParams) -> float:
    """Unbiased per-user estimate of [event in Y_x] from one private view."""
    _check_hash(view.hash, params)
    denom = params.hit_prob - params.false_prob
    if abs(denom) < 1e-15:
        raise ValueError("degenerate parameters: e^eps/Omega equals 1/t")
    hit = 1.0 if view.hash.bucket(event.code) == view.z else 0.0
    return (hit - params.false_prob) / denom


def collision_event_hit_counts(seeds: np.ndarray, z: np.ndarray, params: CollisionParams) -> np.ndarray:
    """Number of views whose hash sends each event code onto its own z.

    Returns int64 counts for codes 1..2d; the chunking keeps the
    (users x events) indicator matrix out of memory at large n.
    """
    d, t = params.base.d, params.base.t
    codes = np.arange(1, 2 * d + 1, dtype=np.int64)
    counts = np.zeros(2 * d, dtype=np.int64)
    chunk = max(1, int(4_000_000 // max(1, 2 * d)))
    for lo in range(0, len(seeds), chunk):
        hi = lo + chunk
        h = hash_buckets(seeds[lo:hi, None], codes[None, :], t)
        counts += (h == z[lo:hi, None]).sum(axis=0)
    return counts


def collision_debias_counts(counts: np.ndarray, n: int, params: CollisionParams) -> np.ndarray:
    denom = params.hit_prob - params.false_prob
    if abs(denom) < 1e-15:
        raise ValueError("degenerate parameters: e^eps/Omega equals 1/t")
    return (counts / n - params.false_prob) / denom


def collision_predicted_sum_variance(d: int, s: int, epsilon: float, t: float) -> float:
    """Single-user variance of the 2d indicator estimates, summed.

    Treats t as a real parameter; used for the convexity of the t-choice.
    """
    omega = s * math.exp(epsilon) + t - s
    p = math.exp(epsilon) / omega
    q = 1.0 / t
    return (s * p * (1 - p) + (2 * d - s) * q * (1 - q)) / (p - q) ** 2
