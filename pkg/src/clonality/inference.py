"""Likelihood-ratio machinery for the clonal-relatedness test.

Two statistics are provided. The conditional statistic restricts attention
to the markers mutated in at least one tumor (set E) and models each match
indicator as Bernoulli with probability ``q_i(xi) = match_probability(p_i,
xi)``; the statistic is the log-likelihood ratio ``l(xi_hat) - l(0)``. The
unconditional statistic uses the full marker universe, scoring every marker
by its matched / singly-mutated / unmutated outcome probability.

The conditional statistic is computed in the "q-form" (log-ratio of
Bernoulli likelihoods). For interior ``xi_hat`` it is algebraically equal to
the weight form

    sum_{matched} log[(xi/(1-xi))/p + 1] - sum_{E} log[(xi/(1-xi))/(2-p) + 1]

which :func:`weight_form_statistic` exposes as a cross-check; unlike the
weight form, the q-form has a finite limit when every observed mutation is
matched (``xi_hat = 1``), namely ``sum_{matched} log((2-p)/p)``.

The constrained MLE of ``xi`` on [0, 1] is found by a 101-point grid scan
followed by golden-section refinement of the bracketing interval (absolute
tolerance 1e-6). The scan/refinement is vectorized across many match
patterns at once because the null-distribution builders need to fit
thousands of simulated patterns; markers are grouped by distinct ``p`` so
each likelihood evaluation is O(#groups).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable

import numpy as np

from .model import MarkerCatalog, MutationProfile, PairObservation, validate_probability, validate_xi

_COARSE_POINTS = 101
_XI_TOL = 1e-6
_INVPHI = (math.sqrt(5.0) - 1.0) / 2.0
_INVPHI2 = (3.0 - math.sqrt(5.0)) / 2.0
# Iterations needed to shrink the 0.02-wide grid bracket below _XI_TOL.
_GOLDEN_ITER = math.ceil(math.log(_XI_TOL / 0.02) / math.log(_INVPHI))
_GRID = np.linspace(0.0, 1.0, _COARSE_POINTS)
# Finite stand-in for log(0) so matrix products stay NaN-free; any row that
# actually has weight on such a cell ends up astronomically negative.
_LOG_ZERO = -1e30


@dataclass(frozen=True)
class ConditionalData:
    """Match indicators and probabilities for the markers in E."""

    markers: tuple[tuple[float, bool], ...]

    def __post_init__(self):
        clean = tuple((validate_probability(p), bool(x)) for p, x in self.markers)
        object.__setattr__(self, "markers", clean)

    @classmethod
    def from_observation(cls, obs: PairObservation) -> "ConditionalData":
        markers = [(p, True) for _, p in obs.shared]
        markers += [(p, False) for _, p in obs.unshared]
        return cls(tuple(markers))

    @classmethod
    def from_pairs(cls, pairs: Iterable[tuple[float, bool]]) -> "ConditionalData":
        return cls(tuple((p, x) for p, x in pairs))

    def __len__(self) -> int:
        return len(self.markers)


@dataclass(frozen=True)
class UnconditionalSummary:
    """Marker universe aggregated by identical probability.

    Each group is ``(p, n_markers, n_matched, n_single)``; unmutated markers
    are the remainder ``n_markers - n_matched - n_single``.
    """

    groups: tuple[tuple[float, int, int, int], ...]

    def __post_init__(self):
        clean = []
        for p, n, matched, single in self.groups:
            p = validate_probability(p)
            if min(n, matched, single) < 0 or matched + single > n:
                raise ValueError(f"inconsistent group counts: {(p, n, matched, single)}")
            clean.append((p, int(n), int(matched), int(single)))
        object.__setattr__(self, "groups", tuple(clean))

    @classmethod
    def from_profiles(
        cls, a: MutationProfile, b: MutationProfile, catalog: MarkerCatalog
    ) -> "UnconditionalSummary":
        """Aggregate a full catalog against two profiles."""
        per_p: dict[float, list[int]] = {}
        for marker, p in catalog.probabilities.items():
            n, m, s = per_p.setdefault(p, [0, 0, 0])
            in_a = marker in a.mutations
            in_b = marker in b.mutations
            per_p[p][0] = n + 1
            if in_a and in_b:
                per_p[p][1] = m + 1
            elif in_a or in_b:
                per_p[p][2] = s + 1
        return cls(tuple((p, n, m, s) for p, (n, m, s) in sorted(per_p.items())))


@dataclass(frozen=True)
class FitResult:
    """Constrained MLE of the clonality signal and its LR statistic."""

    xi_hat: float
    statistic: float
    log_likelihood_at_mle: float


# ---------------------------------------------------------------------------
# Vectorized likelihood kernels.
# ---------------------------------------------------------------------------

def _q_of(p: np.ndarray, xi: np.ndarray) -> np.ndarray:
    """Match probability, broadcasting p against xi.

    Clipped at 1: float cancellation in the denominator can push the ratio a
    few ulp above 1 at xi = 1, which would turn log1p(-q) into NaN.
    """
    q = (p + xi * (1.0 - p)) / ((2.0 - p) - xi * (1.0 - p))
    return np.minimum(q, 1.0)


def _cond_loglik_rows(pg, sizes, matched, xi_rows):
    """Conditional log-likelihood of each row's counts at its own xi.

    pg, sizes: (G,); matched: (K, G); xi_rows: (K,). Returns (K,).
    """
    q = _q_of(pg[None, :], xi_rows[:, None])
    unmatched = sizes[None, :] - matched
    with np.errstate(divide="ignore", invalid="ignore"):
        t_match = np.where(matched > 0, matched * np.log(q), 0.0)
        t_miss = np.where(unmatched > 0, unmatched * np.log1p(-q), 0.0)
    return (t_match + t_miss).sum(axis=1)


def _golden_max(loglik_rows, lo, hi):
    """Vectorized golden-section maximization over per-row brackets."""
    for _ in range(_GOLDEN_ITER):
        h = hi - lo
        x1 = lo + _INVPHI2 * h
        x2 = lo + _INVPHI * h
        left = loglik_rows(x1) >= loglik_rows(x2)
        hi = np.where(left, x2, hi)
        lo = np.where(left, lo, x1)
    return (lo + hi) / 2.0


def _fit_rows(loglik_rows, grid_ll):
    """Grid argmax + golden refinement + candidate comparison.

    grid_ll: (K, len(_GRID)) log-likelihood at every coarse grid point.
    Returns (xi_hat, ll_at_mle) with ll_at_mle >= every grid value.
    """
    best = np.argmax(grid_ll, axis=1)
    lo = _GRID[np.maximum(best - 1, 0)]
    hi = _GRID[np.minimum(best + 1, _COARSE_POINTS - 1)]
    refined = _golden_max(loglik_rows, lo, hi)
    candidates = np.column_stack([_GRID[best], refined])
    cand_ll = np.column_stack([loglik_rows(candidates[:, j]) for j in range(candidates.shape[1])])
    pick = np.argmax(cand_ll, axis=1)
    rows = np.arange(len(pick))
    return candidates[rows, pick], cand_ll[rows, pick]


def fit_conditional_batch(
    pg: np.ndarray, sizes: np.ndarray, matched: np.ndarray
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Fit the clonality signal for many match-count patterns at once.

    Arguments:
        pg: distinct marker probabilities, shape (G,).
        sizes: markers of each probability present in E, shape (G,).
        matched: matched counts per pattern, shape (K, G).

    Returns ``(xi_hat, statistic, ll_at_mle)``, each shape (K,). Patterns
    with no matches pin ``xi_hat = 0``; fully matched patterns pin
    ``xi_hat = 1`` with the finite q-form limit statistic.
    """
    pg = np.asarray(pg, dtype=float)
    sizes = np.asarray(sizes, dtype=float)
    matched = np.atleast_2d(np.asarray(matched, dtype=float))
    K = matched.shape[0]

    xi_hat = np.zeros(K)
    stat = np.zeros(K)
    ll_mle = np.zeros(K)

    q0 = pg / (2.0 - pg)
    ll0 = matched @ np.log(q0) + (sizes[None, :] - matched) @ np.log1p(-q0)

    total_matched = matched.sum(axis=1)
    none = total_matched == 0
    full = total_matched == sizes.sum()
    ll_mle[none] = ll0[none]

    if full.any():
        xi_hat[full] = 1.0
        stat[full] = matched[full] @ np.log((2.0 - pg) / pg)
        # ll at xi=1 is 0 for fully matched patterns (every q_i = 1)

    mixed = ~(none | full)
    if mixed.any():
        m_mixed = matched[mixed]
        rem = sizes[None, :] - m_mixed
        with np.errstate(divide="ignore"):
            q_grid = _q_of(pg[None, :], _GRID[:, None])
            log_q = np.log(q_grid)
            log_1mq = np.log1p(-q_grid)
        log_1mq[np.isneginf(log_1mq)] = _LOG_ZERO
        grid_ll = m_mixed @ log_q.T + rem @ log_1mq.T

        def rows(xi):
            return _cond_loglik_rows(pg, sizes, m_mixed, xi)

        xi_m, ll_m = _fit_rows(rows, grid_ll)
        xi_hat[mixed] = xi_m
        ll_mle[mixed] = ll_m
        stat[mixed] = np.maximum(ll_m - ll0[mixed], 0.0)

    return xi_hat, stat, ll_mle


def _uncond_cells(p: np.ndarray, xi: np.ndarray):
    both = xi * p + (1.0 - xi) * p * p
    single = 2.0 * (1.0 - xi) * p * (1.0 - p)
    neither = xi * (1.0 - p) + (1.0 - xi) * (1.0 - p) ** 2
    return both, single, neither


def _uncond_loglik_rows(pg, n_markers, matched, single, xi_rows):
    both_p, single_p, neither_p = _uncond_cells(pg[None, :], xi_rows[:, None])
    unmut = n_markers[None, :] - matched - single
    with np.errstate(divide="ignore", invalid="ignore"):
        t_b = np.where(matched > 0, matched * np.log(both_p), 0.0)
        t_s = np.where(single > 0, single * np.log(single_p), 0.0)
        t_n = np.where(unmut > 0, unmut * np.log(neither_p), 0.0)
    return (t_b + t_s + t_n).sum(axis=1)


def fit_unconditional_batch(
    pg: np.ndarray, n_markers: np.ndarray, matched: np.ndarray, single: np.ndarray
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Fit the unconditional likelihood for many outcome-count patterns.

    pg, n_markers: (G,); matched, single: (K, G).
    Returns ``(xi_hat, statistic, ll_at_mle)``.
    """
    pg = np.asarray(pg, dtype=float)
    n_markers = np.asarray(n_markers, dtype=float)
    matched = np.atleast_2d(np.asarray(matched, dtype=float))
    single = np.atleast_2d(np.asarray(single, dtype=float))
    unmut = n_markers[None, :] - matched - single

    with np.errstate(divide="ignore"):
        b, s, n = _uncond_cells(pg[None, :], _GRID[:, None])
        log_b, log_s, log_n = np.log(b), np.log(s), np.log(n)
    log_s[np.isneginf(log_s)] = _LOG_ZERO
    grid_ll = matched @ log_b.T + single @ log_s.T + unmut @ log_n.T

    def rows(xi):
        return _uncond_loglik_rows(pg, n_markers, matched, single, xi)

    xi_hat, ll_mle = _fit_rows(rows, grid_ll)
    ll0 = rows(np.zeros(matched.shape[0]))
    stat = np.maximum(ll_mle - ll0, 0.0)
    return xi_hat, stat, ll_mle


# ---------------------------------------------------------------------------
# Scalar API.
# ---------------------------------------------------------------------------

def _grouped(data: ConditionalData):
    """Group markers by identical probability -> (pg, sizes, matched[1, G])."""
    per_p: dict[float, list[int]] = {}
    for p, x in data.markers:
        entry = per_p.setdefault(p, [0, 0])
        entry[0] += 1
        entry[1] += int(x)
    ps = sorted(per_p)
    pg = np.array(ps)
    sizes = np.array([per_p[p][0] for p in ps], dtype=float)
    matched = np.array([[per_p[p][1] for p in ps]], dtype=float)
    return pg, sizes, matched


def _require_nonempty(data: ConditionalData):
    if len(data) == 0:
        raise ValueError("conditional data is empty; the test is undefined")


def conditional_log_likelihood(data: ConditionalData, xi: float) -> float:
    """Log-likelihood of the match indicators at signal ``xi``.

    Returns ``-inf`` when ``xi = 1`` and any observed mutation is unmatched
    (an impossible outcome under full clonality).
    """
    _require_nonempty(data)
    xi = validate_xi(xi)
    pg, sizes, matched = _grouped(data)
    value = float(_cond_loglik_rows(pg, sizes, matched, np.array([xi]))[0])
    return value


def mle_xi_conditional(data: ConditionalData) -> float:
    """Constrained MLE of the clonality signal on [0, 1].

    Exactly 0 when no marker is matched and exactly 1 when every observed
    mutation is matched; otherwise found numerically to 1e-6.
    """
    return conditional_statistic(data).xi_hat


def conditional_statistic(data: ConditionalData) -> FitResult:
    """Conditional LR statistic ``l(xi_hat) - l(0)`` and its MLE."""
    _require_nonempty(data)
    pg, sizes, matched = _grouped(data)
    xi_hat, stat, ll_mle = fit_conditional_batch(pg, sizes, matched)
    return FitResult(xi_hat=float(xi_hat[0]), statistic=float(stat[0]),
                     log_likelihood_at_mle=float(ll_mle[0]))


def match_weight(p: float, xi: float) -> float:
    """Evidence weight of one matched marker, ``log[(xi/(1-xi))/p + 1]``."""
    p = validate_probability(p)
    if not (0.0 < xi < 1.0):
        raise ValueError(f"weight form requires xi strictly inside (0, 1), got {xi}")
    return math.log(xi / (1.0 - xi) / p + 1.0)


def weight_form_statistic(data: ConditionalData, xi: float) -> float:
    """Weight-form of the conditional statistic (interior xi only).

    Algebraically identical to ``conditional_log_likelihood(data, xi) -
    conditional_log_likelihood(data, 0)``; kept as an independent cross-check
    of the q-form computation.
    """
    _require_nonempty(data)
    if not (0.0 < xi < 1.0):
        raise ValueError(f"weight form requires xi strictly inside (0, 1), got {xi}")
    odds = xi / (1.0 - xi)
    matched_term = sum(math.log(odds / p + 1.0) for p, x in data.markers if x)
    union_term = sum(math.log(odds / (2.0 - p) + 1.0) for p, _ in data.markers)
    return matched_term - union_term


def unconditional_log_likelihood(summary: UnconditionalSummary, xi: float) -> float:
    """Full-universe log-likelihood at signal ``xi`` (grouped by p)."""
    xi = validate_xi(xi)
    pg = np.array([g[0] for g in summary.groups])
    n = np.array([g[1] for g in summary.groups], dtype=float)
    matched = np.array([[g[2] for g in summary.groups]], dtype=float)
    single = np.array([[g[3] for g in summary.groups]], dtype=float)
    return float(_uncond_loglik_rows(pg, n, matched, single, np.array([xi]))[0])


def unconditional_statistic(summary: UnconditionalSummary) -> FitResult:
    """Unconditional LR statistic ``l_u(xi_hat) - l_u(0)`` and its MLE."""
    pg = np.array([g[0] for g in summary.groups])
    n = np.array([g[1] for g in summary.groups], dtype=float)
    matched = np.array([[g[2] for g in summary.groups]], dtype=float)
    single = np.array([[g[3] for g in summary.groups]], dtype=float)
    xi_hat, stat, ll_mle = fit_unconditional_batch(pg, n, matched, single)
    return FitResult(xi_hat=float(xi_hat[0]), statistic=float(stat[0]),
                     log_likelihood_at_mle=float(ll_mle[0]))
