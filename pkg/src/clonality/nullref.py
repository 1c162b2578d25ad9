"""Null reference distributions, p-values and calibrated rejection rules.

The conditional null fixes the observed mutated marker set E and resamples
only the match indicators, each Bernoulli with the null match probability
``q_i = p_i / (2 - p_i)``. For small E the distribution is enumerated
exactly over all 2^|E| match vectors; otherwise it is sampled by Monte
Carlo. The unconditional null simulates whole tumor pairs over a marker
universe under zero clonality signal; it does not depend on the observed
data, so one build per universe is cached and reused.

P-values count null statistics greater than or equal to the observed one
(ties are extreme): the published single-locus p-value equals the
probability of the tied outcome itself, which a strict rule would drop. A
1e-9 tie tolerance absorbs float rounding across code paths.
"""

from __future__ import annotations

import math
import threading
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .errors import ClonalityError
from .inference import (
    ConditionalData,
    conditional_statistic,
    fit_conditional_batch,
    fit_unconditional_batch,
)
from .model import PairObservation, pair_outcome_probabilities, validate_probability
from .rng import DEFAULT_SEED, RngStream

TIE_TOLERANCE = 1e-9
EXACT_MAX_DEFAULT = 20
_FIT_CHUNK = 1 << 16


@dataclass(frozen=True)
class NullDistribution:
    """Reference distribution of a test statistic under independence.

    Monte Carlo mode stores one statistic per simulation; exact mode stores
    one atom per outcome vector with its exact probability.
    """

    mode: str
    statistics: np.ndarray
    probabilities: Optional[np.ndarray] = None

    def __post_init__(self):
        if self.mode not in ("exact", "monte-carlo"):
            raise ValueError(f"unknown mode: {self.mode!r}")
        stats = np.asarray(self.statistics, dtype=float)
        object.__setattr__(self, "statistics", stats)
        if self.mode == "exact":
            probs = np.asarray(self.probabilities, dtype=float)
            if probs.shape != stats.shape:
                raise ValueError("atom probabilities must align with statistics")
            if abs(probs.sum() - 1.0) > 1e-9:
                raise ValueError(f"atom probabilities sum to {probs.sum()}, not 1")
            object.__setattr__(self, "probabilities", probs)
        elif self.probabilities is not None:
            raise ValueError("monte-carlo mode carries no atom probabilities")
        if stats.size == 0:
            raise ValueError("null distribution is empty")

    @property
    def n(self) -> int:
        return int(self.statistics.size)


@dataclass(frozen=True)
class TestResult:
    """Outcome of one clonal-relatedness test."""

    statistic: float
    xi_hat: float
    p_value: float
    method: str
    n_sims: int
    seed: Optional[int]
    n_matches: int
    n_union: int


@dataclass(frozen=True)
class CalibratedRule:
    """Randomized rejection rule with size exactly alpha on the null sample."""

    threshold: float
    randomized_boundary_prob: float
    calibrated_power: float


def _grouped_probabilities(ps: Sequence[float]):
    ps = [validate_probability(p) for p in ps]
    if not ps:
        raise ValueError("need at least one marker probability")
    pg, sizes = np.unique(np.asarray(ps, dtype=float), return_counts=True)
    return pg, sizes.astype(float)


def _fit_patterns_chunked(pg, sizes, patterns):
    """fit_conditional_batch over row chunks to bound peak memory."""
    stats = np.empty(patterns.shape[0])
    for start in range(0, patterns.shape[0], _FIT_CHUNK):
        chunk = patterns[start:start + _FIT_CHUNK]
        stats[start:start + _FIT_CHUNK] = fit_conditional_batch(pg, sizes, chunk)[1]
    return stats


def sample_conditional_null(ps: Sequence[float], n_sims: int, rng: RngStream) -> NullDistribution:
    """Monte Carlo null of the conditional statistic over the marker set E.

    Each simulation draws the match indicator of every marker from its null
    probability ``q_i`` and refits the clonality signal. Markers sharing a
    probability are exchangeable, so only the per-probability match counts
    are fitted (one fit per distinct pattern).
    """
    if n_sims < 1:
        raise ValueError(f"n_sims must be >= 1, got {n_sims}")
    pg, sizes = _grouped_probabilities(ps)
    q0 = pg / (2.0 - pg)
    gen = rng.generator()
    matched = np.column_stack(
        [gen.binomial(int(sizes[g]), q0[g], size=n_sims) for g in range(len(pg))]
    )
    patterns, inverse = np.unique(matched, axis=0, return_inverse=True)
    stats = _fit_patterns_chunked(pg, sizes, patterns.astype(float))
    return NullDistribution(mode="monte-carlo", statistics=stats[inverse])


def exact_conditional_null(ps: Sequence[float], exact_max: int = EXACT_MAX_DEFAULT) -> NullDistribution:
    """Exact null: every match vector over E with its product-Bernoulli mass.

    One atom per outcome vector (2^|E| atoms); vectors with identical
    per-probability match counts share a statistic, so the fit cost is one
    per distinct count pattern.
    """
    if len(ps) > exact_max:
        raise ClonalityError(
            f"exact enumeration over {len(ps)} markers exceeds exact_max={exact_max}; "
            "use Monte Carlo sampling instead"
        )
    pg, sizes = _grouped_probabilities(ps)
    q0 = pg / (2.0 - pg)
    counts = sizes.astype(int)

    axes = np.meshgrid(*[np.arange(c + 1) for c in counts], indexing="ij")
    patterns = np.column_stack([a.ravel() for a in axes]).astype(float)

    stats = _fit_patterns_chunked(pg, sizes, patterns)
    log_vector_prob = patterns @ np.log(q0) + (sizes[None, :] - patterns) @ np.log1p(-q0)
    choose = [np.array([math.comb(c, k) for k in range(c + 1)], dtype=float) for c in counts]
    multiplicity = np.ones(patterns.shape[0])
    for g, table in enumerate(choose):
        multiplicity *= table[patterns[:, g].astype(int)]
    reps = multiplicity.astype(np.int64)
    return NullDistribution(
        mode="exact",
        statistics=np.repeat(stats, reps),
        probabilities=np.repeat(np.exp(log_vector_prob), reps),
    )


def p_value(observed: float, null: NullDistribution) -> float:
    """Mass of null statistics >= observed (ties count as extreme)."""
    extreme = null.statistics >= observed - TIE_TOLERANCE
    if extreme.all():
        return 1.0  # avoids 1-ulp shortfalls from float atom sums
    if null.mode == "exact":
        return float(min(null.probabilities[extreme].sum(), 1.0))
    return float(np.mean(extreme))


def critical_value(null: NullDistribution, alpha: float) -> float:
    """Smallest null value whose strict-exceedance mass is below alpha."""
    if not (0.0 < alpha < 1.0):
        raise ValueError(f"alpha must lie in (0, 1), got {alpha}")
    if null.mode == "exact":
        order = np.argsort(null.statistics)
        vals = null.statistics[order]
        weights = null.probabilities[order]
    else:
        vals = np.sort(null.statistics)
        weights = np.full(vals.size, 1.0 / vals.size)
    distinct, start = np.unique(vals, return_index=True)
    cum = np.cumsum(weights)
    # mass at or below each distinct value = cum just before the next block
    upto = np.append(start[1:], vals.size) - 1
    exceed = 1.0 - cum[upto]
    idx = int(np.argmax(exceed < alpha))
    return float(distinct[idx])


def conditional_test(
    obs: PairObservation,
    *,
    sims: int = 100_000,
    exact_max: int = EXACT_MAX_DEFAULT,
    seed: int = DEFAULT_SEED,
    stream_index: int = 0,
) -> TestResult:
    """End-to-end conditional test of one tumor pair.

    Uses exact enumeration when ``|E| <= exact_max`` (set ``exact_max=0`` to
    force Monte Carlo with ``sims`` draws).
    """
    if obs.union_size == 0:
        raise ValueError("no mutations observed; test undefined")
    data = ConditionalData.from_observation(obs)
    fit = conditional_statistic(data)
    ps = [p for p, _ in data.markers]
    if obs.union_size <= exact_max:
        null = exact_conditional_null(ps, exact_max)
        method, n_sims, used_seed = "exact", 0, None
    else:
        null = sample_conditional_null(ps, sims, RngStream(seed, stream_index))
        method, n_sims, used_seed = "monte-carlo", sims, seed
    return TestResult(
        statistic=fit.statistic,
        xi_hat=fit.xi_hat,
        p_value=p_value(fit.statistic, null),
        method=method,
        n_sims=n_sims,
        seed=used_seed,
        n_matches=obs.n_matches,
        n_union=obs.union_size,
    )


def sample_unconditional_null(
    universe: Sequence[tuple[float, int]], n_sims: int, rng: RngStream
) -> NullDistribution:
    """Monte Carlo null of the unconditional statistic over a marker universe.

    ``universe`` lists ``(p, n_markers)`` groups. Pairs are simulated under
    zero signal; per-group outcome counts are multinomial, which is all the
    grouped likelihood needs.
    """
    if n_sims < 1:
        raise ValueError(f"n_sims must be >= 1, got {n_sims}")
    gen = rng.generator()
    pg = np.array([validate_probability(p) for p, _ in universe])
    ng = np.array([int(n) for _, n in universe], dtype=float)
    matched_cols, single_cols = [], []
    for (p, n) in universe:
        cells = pair_outcome_probabilities(p, 0.0)
        draws = gen.multinomial(int(n), [cells.both, cells.exactly_one, cells.neither], size=n_sims)
        matched_cols.append(draws[:, 0])
        single_cols.append(draws[:, 1])
    matched = np.column_stack(matched_cols).astype(float)
    single = np.column_stack(single_cols).astype(float)
    _, stats, _ = fit_unconditional_batch(pg, ng, matched, single)
    return NullDistribution(mode="monte-carlo", statistics=stats)


_UNCOND_CACHE: dict = {}
_UNCOND_LOCK = threading.Lock()


def cached_unconditional_null(
    universe: Sequence[tuple[float, int]], n_sims: int, rng: RngStream
) -> NullDistribution:
    """Memoized :func:`sample_unconditional_null` keyed by universe and stream."""
    key = (tuple((float(p), int(n)) for p, n in universe), int(n_sims), rng.seed, rng.stream_index)
    with _UNCOND_LOCK:
        hit = _UNCOND_CACHE.get(key)
    if hit is not None:
        return hit
    built = sample_unconditional_null(universe, n_sims, rng)
    with _UNCOND_LOCK:
        return _UNCOND_CACHE.setdefault(key, built)


def calibrated_rejection(
    null_pvalues: Sequence[float], alt_pvalues: Sequence[float], alpha: float
) -> CalibratedRule:
    """Randomize the rejection threshold so the null rejection rate is alpha.

    Rejects p-values at or below the largest threshold whose null mass does
    not exceed alpha, then rejects the next-larger null atom with exactly the
    probability that brings the size to alpha.
    """
    if not (0.0 < alpha < 1.0):
        raise ValueError(f"alpha must lie in (0, 1), got {alpha}")
    null_p = np.sort(np.asarray(null_pvalues, dtype=float))
    alt_p = np.asarray(alt_pvalues, dtype=float)
    if null_p.size == 0 or alt_p.size == 0:
        raise ValueError("both p-value samples must be nonempty")

    values = np.unique(null_p)
    frac_at_or_below = np.searchsorted(null_p, values, side="right") / null_p.size
    eligible = frac_at_or_below <= alpha
    if eligible.any():
        threshold = float(values[eligible][-1])
        size_at_threshold = float(frac_at_or_below[eligible][-1])
    else:
        threshold = 0.0
        size_at_threshold = 0.0

    gamma = 0.0
    boundary = None
    if size_at_threshold < alpha:
        above = values[values > threshold]
        if above.size:
            boundary = float(above[0])
            boundary_mass = float(np.mean(null_p == boundary))
            gamma = (alpha - size_at_threshold) / boundary_mass

    power = float(np.mean(alt_p <= threshold))
    if boundary is not None:
        power += gamma * float(np.mean(alt_p == boundary))
    return CalibratedRule(
        threshold=threshold,
        randomized_boundary_prob=gamma,
        calibrated_power=power,
    )
