"""Random selection schemes: sampling, sub-dataset masses and escape probabilities.

Three schemes draw a sub-dataset from a training set of ``n`` samples:

* ``WithoutReplacement(n_s)``: a uniform ``n_s``-subset.
* ``WithReplacement(n_s)``: ``n_s`` independent uniform draws (ordered sequences).
* ``Binomial(p)``: every sample kept independently with probability ``p``.

For a fixed set ``omega`` of untouched samples, :func:`miss_probability` is the
probability that the drawn sub-dataset is *not* contained in ``omega`` and
:func:`pi_ratio` is the constant linking the mass of any in-``omega`` sub-dataset
under a size-``m`` training set to its mass under the size-``n`` one.
"""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass
from fractions import Fraction
from itertools import combinations, combinations_with_replacement
from typing import Iterator, Sequence, Union

import numpy as np
from scipy.special import gammaln

from .combinatorics import binomial_ratio

EXACT_CAP = 20

Seed = Union[int, Sequence[int]]


@dataclass(frozen=True)
class WithoutReplacement:
    n_s: int

    def __post_init__(self):
        if self.n_s < 1:
            raise ValueError(f"n_s must be positive, got {self.n_s}")

    def __str__(self):
        return f"without:{self.n_s}"


@dataclass(frozen=True)
class WithReplacement:
    n_s: int

    def __post_init__(self):
        if self.n_s < 1:
            raise ValueError(f"n_s must be positive, got {self.n_s}")

    def __str__(self):
        return f"with:{self.n_s}"


@dataclass(frozen=True)
class Binomial:
    p: float

    def __post_init__(self):
        if not 0.0 < self.p < 1.0:
            raise ValueError(f"selection probability must lie in (0, 1), got {self.p}")

    @classmethod
    def from_size(cls, n_s: int, n: int) -> "Binomial":
        """Binomial selection with expected size ``n_s`` out of ``n``."""
        return cls(n_s / n)

    def __str__(self):
        return f"binomial:p={self.p!r}"


SelectionScheme = Union[WithoutReplacement, WithReplacement, Binomial]


def parse_scheme(text: str, n: int | None = None) -> SelectionScheme:
    """Parse ``without:10``, ``with:10``, ``binomial:p=0.01`` or ``binomial:10``.

    The last form sets ``p = 10 / n`` and needs ``n``.
    """
    kind, _, arg = text.strip().partition(":")
    kind = kind.strip().lower()
    arg = arg.strip()
    if not arg:
        raise ValueError(f"scheme {text!r} is missing its parameter")
    if kind in ("without", "without-replacement", "wor"):
        return WithoutReplacement(int(arg))
    if kind in ("with", "with-replacement", "wr"):
        return WithReplacement(int(arg))
    if kind in ("binomial", "bin"):
        if arg.startswith("p="):
            return Binomial(float(arg[2:]))
        if n is None:
            raise ValueError("binomial scheme given by size needs the dataset size")
        return Binomial.from_size(int(arg), n)
    raise ValueError(f"unknown selection scheme {kind!r}")


def scheme_to_dict(scheme: SelectionScheme) -> dict:
    if isinstance(scheme, Binomial):
        return {"kind": "binomial", "p": scheme.p}
    kind = "without" if isinstance(scheme, WithoutReplacement) else "with"
    return {"kind": kind, "n_s": scheme.n_s}


def scheme_from_dict(d: dict) -> SelectionScheme:
    kind = d["kind"]
    if kind == "binomial":
        return Binomial(float(d["p"]))
    if kind == "without":
        return WithoutReplacement(int(d["n_s"]))
    if kind == "with":
        return WithReplacement(int(d["n_s"]))
    raise ValueError(f"unknown selection scheme {kind!r}")


def make_rng(seed: Seed) -> np.random.Generator:
    """Generator seeded by an int or a tuple such as ``(master_seed, i)``."""
    entropy = [int(seed)] if np.isscalar(seed) else [int(s) for s in seed]
    return np.random.default_rng(np.random.SeedSequence(entropy))


def sample_indices(scheme: SelectionScheme, n: int, seed: Seed | np.random.Generator) -> np.ndarray:
    """Draw one sub-dataset of ``range(n)``; returned as a sorted index array.

    With-replacement draws may repeat indices. Binomial draws may be empty.
    """
    if n < 1:
        raise ValueError(f"dataset size must be positive, got {n}")
    rng = seed if isinstance(seed, np.random.Generator) else make_rng(seed)
    if isinstance(scheme, WithoutReplacement):
        if scheme.n_s > n:
            raise ValueError(f"cannot draw {scheme.n_s} distinct samples from {n}")
        idx = rng.choice(n, size=scheme.n_s, replace=False)
    elif isinstance(scheme, WithReplacement):
        idx = rng.integers(0, n, size=scheme.n_s)
    elif isinstance(scheme, Binomial):
        idx = np.flatnonzero(rng.random(n) < scheme.p)
    else:
        raise TypeError(f"not a selection scheme: {scheme!r}")
    return np.sort(idx)


def pi_ratio(scheme: SelectionScheme, n: int, m: int) -> float:
    """Constant ``pi`` with ``Pr(mu(D'_m) = S) = pi * Pr(mu(D_n) = S)`` for ``S`` in both."""
    if m < 1 or n < 1:
        raise ValueError("dataset sizes must be positive")
    if isinstance(scheme, WithoutReplacement):
        if m < scheme.n_s:
            raise ValueError(f"m={m} is smaller than n_s={scheme.n_s}")
        if n < scheme.n_s:
            raise ValueError(f"n={n} is smaller than n_s={scheme.n_s}")
        return binomial_ratio(n, m, scheme.n_s)
    if isinstance(scheme, WithReplacement):
        return math.exp(scheme.n_s * (math.log(n) - math.log(m)))
    return math.exp((m - n) * math.log1p(-scheme.p))


def miss_probability(scheme: SelectionScheme, n_total: int, omega_size: int) -> float:
    """Probability that a draw from ``n_total`` samples is not inside a fixed ``omega_size``-subset."""
    if not 0 <= omega_size <= n_total:
        raise ValueError(f"omega_size must lie in [0, {n_total}], got {omega_size}")
    if omega_size == n_total:
        return 0.0
    if isinstance(scheme, WithoutReplacement):
        return 1.0 - binomial_ratio(omega_size, n_total, scheme.n_s)
    if isinstance(scheme, WithReplacement):
        if omega_size == 0:
            return 1.0
        return -math.expm1(scheme.n_s * math.log(omega_size / n_total))
    return -math.expm1((n_total - omega_size) * math.log1p(-scheme.p))


# -- exact closed forms (rational) ------------------------------------------

def pi_ratio_exact(scheme: SelectionScheme, n: int, m: int) -> Fraction:
    if isinstance(scheme, WithoutReplacement):
        return Fraction(math.comb(n, scheme.n_s), math.comb(m, scheme.n_s))
    if isinstance(scheme, WithReplacement):
        return Fraction(n, m) ** scheme.n_s
    return (1 - Fraction(scheme.p)) ** (m - n)


def miss_probability_exact(scheme: SelectionScheme, n_total: int, omega_size: int) -> Fraction:
    if not 0 <= omega_size <= n_total:
        raise ValueError(f"omega_size must lie in [0, {n_total}], got {omega_size}")
    if isinstance(scheme, WithoutReplacement):
        return 1 - Fraction(math.comb(omega_size, scheme.n_s), math.comb(n_total, scheme.n_s))
    if isinstance(scheme, WithReplacement):
        return 1 - Fraction(omega_size, n_total) ** scheme.n_s
    return 1 - (1 - Fraction(scheme.p)) ** (n_total - omega_size)


# -- vectorised log forms used by the certification engine -------------------

_PREFIX_SPAN_MAX = 10**6


def _log_binomial_ratio(a: np.ndarray, b: np.ndarray, k: int) -> np.ndarray:
    """Elementwise ``log C(a,k)/C(b,k)`` for integer-valued ``a, b >= k``.

    Uses ``log C(x,k) - log C(x-1,k) = -log1p(-k/x)`` summed over the integers
    between ``a`` and ``b`` (one prefix sum shared by all elements), which keeps
    full relative precision when ``a`` is close to ``b``; differences of
    ``gammaln`` lose about eight digits there.
    """
    a, b = np.broadcast_arrays(np.asarray(a, dtype=float), np.asarray(b, dtype=float))
    if a.size == 0:
        return np.zeros(a.shape)
    lo = int(min(a.min(), b.min()))
    hi = int(max(a.max(), b.max()))
    if hi - lo > _PREFIX_SPAN_MAX:
        return gammaln(a + 1) - gammaln(a - k + 1) - gammaln(b + 1) + gammaln(b - k + 1)
    x = np.arange(lo + 1, hi + 1, dtype=float)
    prefix = np.concatenate([[0.0], np.cumsum(-np.log1p(-k / x))])
    return prefix[(a - lo).astype(np.int64)] - prefix[(b - lo).astype(np.int64)]


def log_contained(scheme: SelectionScheme, n_total: np.ndarray, omega: np.ndarray) -> np.ndarray:
    """Elementwise ``log Pr(draw from n_total samples lies inside omega)``."""
    n_total = np.asarray(n_total, dtype=float)
    omega = np.asarray(omega, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        if isinstance(scheme, WithoutReplacement):
            k = scheme.n_s
            ok = omega >= k
            safe = np.where(ok, omega, k)
            out = np.where(ok, _log_binomial_ratio(safe, n_total, k), -np.inf)
        elif isinstance(scheme, WithReplacement):
            out = scheme.n_s * np.log1p((omega - n_total) / n_total)
        else:
            out = (n_total - omega) * math.log1p(-scheme.p)
    return np.where(omega >= n_total, 0.0, out)


def log_pi(scheme: SelectionScheme, n: int, m: np.ndarray) -> np.ndarray:
    """Elementwise ``log pi_ratio(scheme, n, m)``; ``-inf`` where D'_m cannot be sampled."""
    m = np.asarray(m, dtype=float)
    if isinstance(scheme, WithoutReplacement):
        k = scheme.n_s
        ok = m >= k
        safe = np.where(ok, m, k)
        return np.where(ok, _log_binomial_ratio(np.full(m.shape, float(n)), safe, k), -np.inf)
    if isinstance(scheme, WithReplacement):
        return scheme.n_s * np.log1p((n - m) / m)
    return (m - n) * math.log1p(-scheme.p)


# -- exact masses for tiny datasets -----------------------------------------

def subset_mass(scheme: SelectionScheme, n: int, subset: Sequence[int]) -> Fraction:
    """Exact probability that the scheme draws exactly ``subset`` from ``range(n)``.

    ``subset`` is a multiset for ``WithReplacement`` (mass collapsed over the
    orderings of the draw sequence) and a set otherwise.
    """
    if n > EXACT_CAP:
        raise ValueError(f"exact masses are limited to n <= {EXACT_CAP}, got {n}")
    items = list(subset)
    if any(not 0 <= i < n for i in items):
        raise ValueError(f"subset indices must lie in range({n})")
    counts = Counter(items)
    if isinstance(scheme, WithReplacement):
        if len(items) != scheme.n_s:
            return Fraction(0)
        orderings = math.factorial(scheme.n_s)
        for c in counts.values():
            orderings //= math.factorial(c)
        return Fraction(orderings, n ** scheme.n_s)
    if any(c > 1 for c in counts.values()):
        return Fraction(0)
    if isinstance(scheme, WithoutReplacement):
        if len(items) != scheme.n_s or n < scheme.n_s:
            return Fraction(0)
        return Fraction(1, math.comb(n, scheme.n_s))
    p = Fraction(scheme.p)
    return p ** len(items) * (1 - p) ** (n - len(items))


def support(scheme: SelectionScheme, n: int) -> Iterator[tuple[int, ...]]:
    """All sub-datasets of ``range(n)`` with positive mass, as sorted tuples."""
    if isinstance(scheme, WithoutReplacement):
        yield from combinations(range(n), scheme.n_s)
    elif isinstance(scheme, WithReplacement):
        yield from combinations_with_replacement(range(n), scheme.n_s)
    else:
        for size in range(n + 1):
            yield from combinations(range(n), size)
