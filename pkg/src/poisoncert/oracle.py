"""Brute-force verification of the certification math on tiny datasets.

Everything here is exact rational arithmetic over explicitly enumerated
sub-datasets. Samples carry identities: the clean dataset is ``0..n-1`` and
every inserted or modified sample gets a fresh id ``>= n``, so a sub-dataset is
"inside omega" exactly when all its ids are untouched clean samples.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from itertools import combinations
from typing import Iterator

from .certify import PoisoningModel
from .schemes import (
    Binomial,
    SelectionScheme,
    WithoutReplacement,
    pi_ratio_exact,
    subset_mass,
    support,
)

MAX_N = 8
MAX_RHO = 3
MAX_CONFIGS = 10**6
UNCERTIFIABLE = Fraction(2)


@dataclass(frozen=True)
class Attack:
    """One poisoning of ``D_n``: which clean samples are removed/modified, plus new samples."""

    n: int
    touched: tuple[int, ...]  # clean ids deleted or modified
    deleted: int
    modified: int
    inserted: int

    @property
    def m(self) -> int:
        return self.n - self.deleted + self.inserted

    @property
    def omega(self) -> frozenset[int]:
        return frozenset(range(self.n)) - frozenset(self.touched)

    def poisoned_ids(self) -> list[int]:
        """Ids of D'_m: untouched clean samples followed by the new ones."""
        fresh = range(self.n, self.n + self.modified + self.inserted)
        return sorted(self.omega) + list(fresh)


@dataclass(frozen=True)
class TinyInstance:
    n: int
    scheme: SelectionScheme
    model: PoisoningModel
    rho: int

    def __post_init__(self):
        if not 1 <= self.n <= MAX_N:
            raise ValueError(f"oracle supports 1 <= n <= {MAX_N}, got {self.n}")
        if not 0 <= self.rho <= MAX_RHO:
            raise ValueError(f"oracle supports 0 <= rho <= {MAX_RHO}, got {self.rho}")
        if self.model.deletes and self.rho >= self.n:
            raise ValueError("deletions would empty the dataset")
        if isinstance(self.scheme, WithoutReplacement) and self.scheme.n_s > self.n:
            raise ValueError("n_s exceeds n")
        size = self.n + self.rho
        count = 2 ** size if isinstance(self.scheme, Binomial) else size ** self.scheme.n_s
        if count > MAX_CONFIGS:
            raise ValueError("enumeration domain too large")


def _budgets(model: PoisoningModel, rho: int) -> Iterator[tuple[int, int, int]]:
    """(inserted, deleted, modified) triples the model admits."""
    for ins in range(rho + 1):
        for dele in range(rho + 1 - ins):
            for mod in range(rho + 1 - ins - dele):
                if ins and not model.inserts:
                    continue
                if dele and not model.deletes:
                    continue
                if mod and model in (PoisoningModel.P1, PoisoningModel.P2):
                    continue
                yield ins, dele, mod


def attacks(inst: TinyInstance, canonical: bool = True) -> Iterator[Attack]:
    """Every admissible attack; ``canonical`` places touched samples at ids ``0..k-1``."""
    for ins, dele, mod in _budgets(inst.model, inst.rho):
        k = dele + mod
        placements = [tuple(range(k))] if canonical else combinations(range(inst.n), k)
        for touched in placements:
            yield Attack(inst.n, tuple(touched), dele, mod, ins)


@dataclass
class Side:
    """Enumerated masses of one dataset's sub-datasets, keyed by sample ids."""

    masses: dict[tuple[int, ...], Fraction]
    escape: Fraction  # total mass of sub-datasets not inside omega


def _side(scheme: SelectionScheme, ids: list[int], omega: frozenset[int]) -> Side:
    masses: dict[tuple[int, ...], Fraction] = {}
    escape = Fraction(0)
    for pos in support(scheme, len(ids)):
        mass = subset_mass(scheme, len(ids), pos)
        key = tuple(sorted(ids[i] for i in pos))
        masses[key] = mass
        if not set(key) <= omega:
            escape += mass
    return Side(masses, escape)


@dataclass
class AttackAnalysis:
    attack: Attack
    clean: Side
    poisoned: Side
    ratios: set[Fraction]  # poisoned/clean mass ratio over sub-datasets inside omega
    sampleable: bool

    @property
    def pi(self) -> Fraction | None:
        return next(iter(self.ratios)) if len(self.ratios) == 1 else None

    @property
    def delta(self) -> Fraction:
        if not self.sampleable or not self.ratios:
            return UNCERTIFIABLE
        if self.pi is None:
            raise AssertionError("sub-dataset mass ratio is not constant inside omega")
        return self.clean.escape + self.poisoned.escape / self.pi


def analyse(inst: TinyInstance, attack: Attack) -> AttackAnalysis:
    scheme = inst.scheme
    omega = attack.omega
    clean = _side(scheme, list(range(inst.n)), omega)
    ids = attack.poisoned_ids()
    if attack.m < 1:
        raise ValueError("attack leaves an empty dataset")
    sampleable = not (isinstance(scheme, WithoutReplacement) and attack.m < scheme.n_s)
    poisoned = _side(scheme, ids, omega) if sampleable else Side({}, Fraction(1))
    ratios = set()
    for key, mass in clean.masses.items():
        if set(key) <= omega and key in poisoned.masses:
            ratios.add(poisoned.masses[key] / mass)
    return AttackAnalysis(attack, clean, poisoned, ratios, sampleable)


def enumerate_delta_exact(inst: TinyInstance, canonical: bool = True) -> Fraction:
    """Exact delta(rho): worst enumerated attack, capped at 2 like the closed form."""
    if inst.rho == 0:
        return Fraction(0)
    worst = max(analyse(inst, a).delta for a in attacks(inst, canonical))
    return min(worst, UNCERTIFIABLE)


@dataclass
class PiReport:
    ok: bool
    checked: int = 0
    failures: list[str] = field(default_factory=list)


def verify_pi_bounds(inst: TinyInstance, scale: Fraction = Fraction(1)) -> PiReport:
    """Check the implemented pi against every in-omega sub-dataset.

    Passes only when both sandwich inequalities hold with equality. ``scale``
    multiplies pi where ``m > n`` (a debugging aid: any scale other than 1 must fail).
    """
    report = PiReport(ok=True)
    for attack in attacks(inst):
        an = analyse(inst, attack)
        if not an.sampleable:
            continue
        pi = pi_ratio_exact(inst.scheme, inst.n, attack.m)
        if attack.m > inst.n:
            pi *= scale
        for key, mass in an.clean.masses.items():
            if not set(key) <= attack.omega:
                continue
            report.checked += 1
            attacked = an.poisoned.masses.get(key, Fraction(0))
            if attacked != pi * mass:
                report.ok = False
                report.failures.append(
                    f"m={attack.m} D_sub={key}: Pr'={attacked} vs pi*Pr={pi * mass}")
    return report


def verify_pi_at(scheme: SelectionScheme, n: int, m: int, scale: Fraction = Fraction(1)) -> bool:
    """Equality check of pi for a clean set of ``n`` and an attacked set of ``m`` samples."""
    common = min(n, m)
    attack = Attack(n, tuple(range(n - common)), n - common, 0, max(0, m - n))
    omega = attack.omega
    clean = _side(scheme, list(range(n)), omega)
    poisoned = _side(scheme, attack.poisoned_ids(), omega)
    pi = pi_ratio_exact(scheme, n, m) * scale
    return all(poisoned.masses.get(k, Fraction(0)) == pi * v
               for k, v in clean.masses.items() if set(k) <= omega)


@dataclass
class Witness:
    """A base classifier whose clean margin is at least the target yet loses after the attack.

    On sub-datasets inside omega it outputs ``c1`` with probability
    ``in_omega_c1`` (``c2`` otherwise); escaping clean sub-datasets vote ``c1``
    and escaping poisoned ones vote ``c2``.
    """

    attack: Attack
    in_omega_c1: Fraction
    p1: Fraction
    p2: Fraction
    q1: Fraction
    q2: Fraction

    def describe(self) -> str:
        a = self.attack
        return (f"insert={a.inserted} delete={a.deleted} modify={a.modified} (m={a.m}): "
                f"clean p1-p2={self.p1 - self.p2}, poisoned q1={self.q1} < q2={self.q2}")


def _choose_bias(margin: Fraction, e_n: Fraction, e_m: Fraction) -> Fraction | None:
    """Pick d = P(c1) - P(c2) on in-omega sub-datasets, or None if impossible.

    Constraints: d in [-1, 1]; clean margin e_n + d(1-e_n) >= margin and > 0;
    poisoned margin e_m - d(1-e_m) > 0 (c2 strictly ahead).
    """
    lo = max(Fraction(-1), (margin - e_n) / (1 - e_n))
    lo_open = -e_n / (1 - e_n)
    hi_open = e_m / (1 - e_m)
    top = min(Fraction(1), hi_open)
    if lo > lo_open:
        d = lo
    else:
        d = (lo_open + top) / 2
    ok = (lo <= d <= 1 and d > lo_open and d < hi_open)
    return d if ok else None


def _score(inst: TinyInstance, an: AttackAnalysis, c1_inside: Fraction):
    omega = an.attack.omega
    p1 = p2 = q1 = q2 = Fraction(0)
    for key, mass in an.clean.masses.items():
        if set(key) <= omega:
            p1 += mass * c1_inside
            p2 += mass * (1 - c1_inside)
        else:
            p1 += mass
    for key, mass in an.poisoned.masses.items():
        if set(key) <= omega:
            q1 += mass * c1_inside
            q2 += mass * (1 - c1_inside)
        else:
            q2 += mass
    return p1, p2, q1, q2


def tightness_witness(inst: TinyInstance, margin: Fraction) -> Witness | None:
    """Search for a classifier with clean margin >= ``margin`` that the attack flips.

    Exists exactly when ``margin < delta`` (and the margin is achievable, i.e. <= 1).
    """
    margin = Fraction(margin)
    if margin > 1:
        return None
    for attack in attacks(inst):
        an = analyse(inst, attack)
        if not an.sampleable:
            # D'_m cannot be subsampled at all: any prediction is possible there
            return Witness(attack, Fraction(1), Fraction(1), Fraction(0), Fraction(0), Fraction(1))
        if not an.ratios:
            d = Fraction(1)
        else:
            d = _choose_bias(margin, an.clean.escape, an.poisoned.escape)
            if d is None:
                continue
        c1_inside = (1 + d) / 2
        p1, p2, q1, q2 = _score(inst, an, c1_inside)
        if p1 - p2 >= margin and p1 > p2 and q2 > q1:
            return Witness(attack, c1_inside, p1, p2, q1, q2)
    return None


def default_grid(n_values=range(3, 8), sizes=(1, 2, 3),
                 probs=(Fraction(1, 4), Fraction(1, 2)), rhos=range(0, 3)) -> Iterator[TinyInstance]:
    from .schemes import WithReplacement

    for n in n_values:
        schemes: list[SelectionScheme] = [WithoutReplacement(k) for k in sizes if k <= n]
        schemes += [WithReplacement(k) for k in sizes]
        schemes += [Binomial(float(p)) for p in probs]
        for scheme in schemes:
            for model in PoisoningModel:
                for rho in rhos:
                    if model.deletes and rho >= n:
                        continue
                    yield TinyInstance(n, scheme, model, rho)
