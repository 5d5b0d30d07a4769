"""Log-space combinatorics and exact (Clopper-Pearson) binomial bounds."""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

BISECT_TOL = 1e-12


def log_binomial(n: int, k: int) -> float:
    """Natural log of ``C(n, k)``; ``-inf`` when the coefficient is zero."""
    if n < 0 or k < 0:
        raise ValueError(f"log_binomial needs non-negative arguments, got ({n}, {k})")
    if k > n:
        return -math.inf
    if k == 0 or k == n:
        return 0.0
    return math.lgamma(n + 1) - math.lgamma(k + 1) - math.lgamma(n - k + 1)


def binomial_ratio(a: int, b: int, k: int) -> float:
    """Return ``C(a, k) / C(b, k)`` without forming either coefficient.

    The ratio is the product of ``(a - i) / (b - i)`` for ``i < k``, each factor
    close to one at realistic dataset sizes.
    """
    if k < 0 or b < k:
        raise ValueError(f"binomial_ratio needs b >= k >= 0, got b={b}, k={k}")
    if a < k:
        return 0.0
    ratio = 1.0
    for i in range(k):
        ratio *= (a - i) / (b - i)
    return ratio


def _log_pmf(j: int, trials: int, log_p: float, log_q: float) -> float:
    # 0 * log(0) counts as 0
    out = log_binomial(trials, j)
    if j:
        out += j * log_p
    if trials - j:
        out += (trials - j) * log_q
    return out


def _log_sum(terms) -> float:
    """Streaming log-sum-exp."""
    total = -math.inf
    for t in terms:
        if t == -math.inf:
            continue
        if total == -math.inf:
            total = t
        elif t > total:
            total = t + math.log1p(math.exp(total - t))
        else:
            total = total + math.log1p(math.exp(t - total))
    return total


def _logs(p: float) -> tuple[float, float]:
    log_p = math.log(p) if p > 0 else -math.inf
    log_q = math.log1p(-p) if p < 1 else -math.inf
    return log_p, log_q


def binomial_upper_tail(count: int, trials: int, p: float) -> float:
    """``P(X >= count)`` for ``X ~ Bin(trials, p)``."""
    if count <= 0:
        return 1.0
    if count > trials:
        return 0.0
    if p <= 0.0:
        return 0.0
    if p >= 1.0:
        return 1.0
    log_p, log_q = _logs(p)
    if trials - count + 1 <= count:
        return min(1.0, math.exp(_log_sum(_log_pmf(j, trials, log_p, log_q)
                                          for j in range(count, trials + 1))))
    below = math.exp(_log_sum(_log_pmf(j, trials, log_p, log_q) for j in range(count)))
    return min(1.0, max(0.0, 1.0 - below))


def binomial_lower_tail(count: int, trials: int, p: float) -> float:
    """``P(X <= count)`` for ``X ~ Bin(trials, p)``."""
    # P(X <= k; p) == P(Y >= T - k; 1 - p)
    return binomial_upper_tail(trials - count, trials, 1.0 - p)


def _check(count: int, trials: int, alpha_half: float) -> None:
    if trials <= 0:
        raise ValueError(f"trials must be positive, got {trials}")
    if not 0 <= count <= trials:
        raise ValueError(f"count must lie in [0, {trials}], got {count}")
    if not 0.0 < alpha_half < 1.0:
        raise ValueError(f"alpha_half must lie in (0, 1), got {alpha_half}")


@lru_cache(maxsize=65536)
def cp_lower(count: int, trials: int, alpha_half: float) -> float:
    """One-sided Clopper-Pearson lower bound at level ``alpha_half``.

    Smallest ``p`` with ``P(Bin(trials, p) >= count) >= alpha_half``, found by
    bisection on the exact upper tail.
    """
    _check(count, trials, alpha_half)
    if count == 0:
        return 0.0
    lo, hi = 0.0, 1.0
    while hi - lo > BISECT_TOL:
        mid = 0.5 * (lo + hi)
        if binomial_upper_tail(count, trials, mid) >= alpha_half:
            hi = mid
        else:
            lo = mid
    return 0.5 * (lo + hi)


@lru_cache(maxsize=65536)
def cp_upper(count: int, trials: int, alpha_half: float) -> float:
    """One-sided Clopper-Pearson upper bound at level ``alpha_half``.

    Largest ``p`` with ``P(Bin(trials, p) <= count) >= alpha_half``.
    """
    _check(count, trials, alpha_half)
    if count == trials:
        return 1.0
    lo, hi = 0.0, 1.0
    while hi - lo > BISECT_TOL:
        mid = 0.5 * (lo + hi)
        if binomial_lower_tail(count, trials, mid) >= alpha_half:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


@dataclass(frozen=True)
class BinomialBound:
    """Clopper-Pearson bounds for ``count`` successes out of ``trials``.

    ``level`` is the one-sided miss probability of each bound.
    """

    count: int
    trials: int
    level: float

    def __post_init__(self):
        _check(self.count, self.trials, self.level)

    @property
    def rate(self) -> float:
        return self.count / self.trials

    @property
    def lower(self) -> float:
        return cp_lower(self.count, self.trials, self.level)

    @property
    def upper(self) -> float:
        return cp_upper(self.count, self.trials, self.level)
