"""Certification engine: delta(rho), certified radii, certified prediction and accuracy.

For a clean training set of ``n`` samples and an attacked one of ``m`` samples
sharing the untouched samples ``omega``, the top-2 margin ``p1 - p2`` of the
smoothed classifier must be at least

    miss(n, |omega|) + miss(m, |omega|) / pi(n, m)

for the prediction to survive. ``delta`` is the maximum of that quantity over
every ``(m, |omega|)`` the poisoning model allows at intensity ``rho``.
"""

from __future__ import annotations

import enum
import warnings
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterable, Sequence

import numpy as np

from .combinatorics import cp_lower, cp_upper
from .schemes import (
    SelectionScheme,
    WithoutReplacement,
    log_contained,
    log_pi,
    miss_probability_exact,
    pi_ratio_exact,
)

ABSTAIN = -1
DELTA_CAP = 2.0


class UncertifiableWarning(UserWarning):
    """Without-replacement sampling is impossible on some admissible poisoned dataset."""


class PoisoningModel(enum.Enum):
    """Attacker capabilities; intensity ``rho`` bounds the number of edited samples."""

    P1 = "insert"
    P2 = "delete"
    P3 = "modify"
    P4 = "insert+modify"
    P5 = "delete+modify"
    P6 = "insert+delete+modify"

    @classmethod
    def parse(cls, text: str) -> "PoisoningModel":
        key = text.strip().upper()
        if key in cls.__members__:
            return cls[key]
        for member in cls:
            if member.value == text.strip().lower():
                return member
        raise ValueError(f"unknown poisoning model {text!r}")

    @property
    def inserts(self) -> bool:
        return self in (PoisoningModel.P1, PoisoningModel.P4, PoisoningModel.P6)

    @property
    def deletes(self) -> bool:
        return self in (PoisoningModel.P2, PoisoningModel.P5, PoisoningModel.P6)

    def m_range(self, n: int, rho: int) -> range:
        lo = n - rho if self.deletes else n
        hi = n + rho if self.inserts else n
        return range(lo, hi + 1)

    def max_rho(self, n: int) -> int | None:
        """Largest intensity for which delta is defined (``None``: unbounded)."""
        if self.deletes:
            return n - 1
        if self is PoisoningModel.P1:
            return None
        return n


def configurations(model: PoisoningModel, n: int, rho: int) -> list[tuple[int, int, bool, bool]]:
    """Worst-case ``(m, |omega|, clean_side_escapes, attacked_side_escapes)`` per admissible m."""
    if n < 1 or rho < 0:
        raise ValueError(f"need n >= 1 and rho >= 0, got n={n}, rho={rho}")
    cap = model.max_rho(n)
    if cap is not None and rho > cap:
        raise ValueError(f"rho={rho} leaves nothing to sample under {model.name} with n={n}")
    out = []
    for m in model.m_range(n, rho):
        if model is PoisoningModel.P1:
            out.append((m, n, False, True))
        elif model is PoisoningModel.P2:
            out.append((m, m, True, False))
        else:
            out.append((m, max(m, n) - rho, True, True))
    return out


def _check_scheme(scheme: SelectionScheme, n: int) -> None:
    if isinstance(scheme, WithoutReplacement) and n < scheme.n_s:
        raise ValueError(f"dataset of {n} samples is smaller than n_s={scheme.n_s}")


def delta(scheme: SelectionScheme, model: PoisoningModel, n: int, rho: int) -> float:
    """Minimum top-2 margin certifying robustness at intensity ``rho``, clamped to [0, 2].

    Values above 1 mean no achievable margin certifies ``rho``.
    """
    _check_scheme(scheme, n)
    if rho == 0:
        return 0.0
    conf = configurations(model, n, rho)
    m = np.array([c[0] for c in conf], dtype=float)
    omega = np.array([c[1] for c in conf], dtype=float)
    esc_n = np.array([c[2] for c in conf])
    esc_m = np.array([c[3] for c in conf])

    unsampleable = np.zeros(len(conf), dtype=bool)
    if isinstance(scheme, WithoutReplacement):
        unsampleable = m < scheme.n_s
        if unsampleable.any():
            warnings.warn(f"poisoned dataset can shrink below n_s={scheme.n_s}; "
                          "delta set to 2 (uncertifiable)", UncertifiableWarning, stacklevel=2)
        m_safe = np.where(unsampleable, scheme.n_s, m)
        omega = np.minimum(omega, m_safe)
    else:
        m_safe = m

    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        miss_n = np.where(esc_n, -np.expm1(log_contained(scheme, n, omega)), 0.0)
        miss_m = np.where(esc_m, -np.expm1(log_contained(scheme, m_safe, omega)), 0.0)
        inv_pi = np.exp(-log_pi(scheme, n, m_safe))
        vals = miss_n + np.where(miss_m > 0, miss_m * inv_pi, 0.0)
    vals = np.where(unsampleable, DELTA_CAP, vals)
    return float(min(DELTA_CAP, max(0.0, np.nanmax(vals))))


def delta_exact(scheme: SelectionScheme, model: PoisoningModel, n: int, rho: int) -> Fraction:
    """Rational evaluation of :func:`delta` from the closed forms (small inputs only)."""
    _check_scheme(scheme, n)
    if rho == 0:
        return Fraction(0)
    cap = Fraction(DELTA_CAP)
    best = Fraction(0)
    for m, omega, esc_n, esc_m in configurations(model, n, rho):
        if isinstance(scheme, WithoutReplacement) and m < scheme.n_s:
            return cap
        val = Fraction(0)
        if esc_n:
            val += miss_probability_exact(scheme, n, omega)
        if esc_m:
            val += miss_probability_exact(scheme, m, omega) / pi_ratio_exact(scheme, n, m)
        best = max(best, val)
    return min(best, cap)


def certified_radius(scheme: SelectionScheme, model: PoisoningModel, n: int,
                     margin: float, rho_cap: int) -> int:
    """Largest ``rho <= rho_cap`` with ``delta(rho) <= margin``; ``ABSTAIN`` if ``margin < 0``."""
    if rho_cap < 0:
        raise ValueError(f"rho_cap must be non-negative, got {rho_cap}")
    if margin < 0:
        return ABSTAIN
    _check_scheme(scheme, n)
    limit = model.max_rho(n)
    cap = rho_cap if limit is None else min(rho_cap, limit)

    def ok(rho: int) -> bool:
        return delta(scheme, model, n, rho) <= margin

    lo, step = 0, 1
    while lo + step <= cap and ok(lo + step):
        lo += step
        step *= 2
    hi = min(lo + step, cap + 1)  # first value known (or assumed) to fail
    while hi - lo > 1:
        mid = (lo + hi) // 2
        if ok(mid):
            lo = mid
        else:
            hi = mid
    return lo


@dataclass
class VoteRecord:
    """Per-example class votes of ``trials`` base classifiers."""

    example_id: str
    counts: dict[int, int]
    trials: int
    true_label: int | None = None

    def __post_init__(self):
        self.counts = {int(k): int(v) for k, v in self.counts.items()}
        if self.trials < 1:
            raise ValueError(f"{self.example_id}: trials must be positive")
        if any(v < 0 for v in self.counts.values()):
            raise ValueError(f"{self.example_id}: negative vote count")
        if any(k < 0 for k in self.counts):
            raise ValueError(f"{self.example_id}: negative class id")
        if sum(self.counts.values()) > self.trials:
            raise ValueError(f"{self.example_id}: votes exceed trials")

    def ranked(self) -> list[tuple[int, int]]:
        """Classes ordered by count (descending), then class id."""
        return sorted(self.counts.items(), key=lambda kv: (-kv[1], kv[0]))

    @property
    def majority(self) -> int:
        ranked = self.ranked()
        return ranked[0][0] if ranked else ABSTAIN


@dataclass
class Certificate:
    example_id: str
    label: int
    radius: int
    p1_lower: float
    p2_upper: float
    true_label: int | None = field(default=None, compare=False)

    @property
    def abstained(self) -> bool:
        return self.label == ABSTAIN

    @property
    def margin(self) -> float:
        return self.p1_lower - self.p2_upper


def certify_prediction(vote: VoteRecord, alpha: float, scheme: SelectionScheme,
                       model: PoisoningModel, n: int, rho_cap: int) -> Certificate:
    """Certified prediction from Monte-Carlo votes at joint confidence ``1 - alpha``."""
    if not 0.0 < alpha < 1.0:
        raise ValueError(f"alpha must lie in (0, 1), got {alpha}")
    ranked = vote.ranked()
    if not ranked or ranked[0][1] == 0:
        return Certificate(vote.example_id, ABSTAIN, ABSTAIN, 0.0, 1.0, vote.true_label)
    c1, count1 = ranked[0]
    count2 = ranked[1][1] if len(ranked) > 1 else 0
    p1 = cp_lower(count1, vote.trials, alpha / 2)
    p2 = min(1.0 - p1, cp_upper(count2, vote.trials, alpha / 2))
    # a zero margin cannot separate c1 from c2
    if p1 - p2 <= 0:
        return Certificate(vote.example_id, ABSTAIN, ABSTAIN, p1, p2, vote.true_label)
    radius = certified_radius(scheme, model, n, p1 - p2, rho_cap)
    return Certificate(vote.example_id, c1, radius, p1, p2, vote.true_label)


def certify_all(votes: Iterable[VoteRecord], alpha: float, scheme: SelectionScheme,
                model: PoisoningModel, n: int, rho_cap: int) -> list[Certificate]:
    return [certify_prediction(v, alpha, scheme, model, n, rho_cap) for v in votes]


def _accuracy(certs: Sequence[Certificate], rho: int) -> float:
    hits = sum(1 for c in certs
               if not c.abstained and c.label == c.true_label and c.radius >= rho)
    return hits / len(certs)


def _require_labels(votes: Sequence[VoteRecord]) -> None:
    if not votes:
        raise ValueError("no vote records")
    missing = [v.example_id for v in votes if v.true_label is None]
    if missing:
        raise ValueError(f"{len(missing)} vote records lack a true label, e.g. {missing[0]}")


def certified_accuracy(votes: Sequence[VoteRecord], rho: int, alpha: float,
                       scheme: SelectionScheme, model: PoisoningModel, n: int) -> float:
    """Fraction of examples predicted correctly with certified radius at least ``rho``."""
    _require_labels(votes)
    return _accuracy(certify_all(votes, alpha, scheme, model, n, rho), rho)


def accuracy_curve(votes: Sequence[VoteRecord], rho_grid: Sequence[int], alpha: float,
                   scheme: SelectionScheme, model: PoisoningModel,
                   n: int) -> list[tuple[int, float]]:
    """``(rho, certified accuracy)`` for each ``rho`` in the grid (certificates computed once)."""
    grid = [int(r) for r in rho_grid]
    if not grid:
        raise ValueError("empty rho grid")
    if min(grid) < 0:
        raise ValueError("rho grid contains negative values")
    _require_labels(votes)
    certs = certify_all(votes, alpha, scheme, model, n, max(grid))
    return [(rho, _accuracy(certs, rho)) for rho in grid]


def curve_from_certificates(certs: Sequence[Certificate], rho_grid: Sequence[int]) -> list[tuple[int, float]]:
    if not certs:
        raise ValueError("no certificates")
    return [(int(r), _accuracy(certs, int(r))) for r in rho_grid]
