"""Constraint facts, units and the entailment relation used for rule matching.

Every numeric variable lives on the nonnegative half line, so ``x < c``
denotes ``[0, c)``.  Quantities are normalized on construction of an atom:
times end up in milliseconds and storage in bytes.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Optional, Tuple, Union

from .errors import Contradiction, DimensionMismatch, UnknownUnit

# ---------------------------------------------------------------------------
# units


@dataclass(frozen=True)
class UnitInfo:
    name: str
    dimension: str
    factor: float  # multiply by this to reach `canonical`
    canonical: str


_UNIT_TABLE = [
    UnitInfo("notif/s", "notification_rate", 1.0, "notif/s"),
    UnitInfo("ms", "time", 1.0, "ms"),
    UnitInfo("s", "time", 1000.0, "ms"),
    UnitInfo("pct", "ratio", 1.0, "pct"),
    UnitInfo("usd/month", "cost", 1.0, "usd/month"),
    UnitInfo("count", "count", 1.0, "count"),
    UnitInfo("bytes", "storage", 1.0, "bytes"),
    UnitInfo("GiB", "storage", float(2**30), "bytes"),
    UnitInfo("bytes/s", "bandwidth", 1.0, "bytes/s"),
    UnitInfo("ops/s", "operation_rate", 1.0, "ops/s"),
]

UNITS = {u.name: u for u in _UNIT_TABLE}

# spellings accepted in rule files, traces and data files
UNIT_ALIASES = {
    "%": "pct",
    "percent": "pct",
    "$/month": "usd/month",
    "notifications/s": "notif/s",
    "seconds": "s",
    "Bytes": "bytes",
    "Bytes/s": "bytes/s",
    "operations/s": "ops/s",
    "Count": "count",
    "Count/s": "ops/s",
}

KILO = 1000.0


def resolve_unit(unit: str) -> Tuple[UnitInfo, float]:
    """Return the registered unit behind a spelling plus its prefix multiplier.

    A leading ``k`` (optionally followed by a space) multiplies by 1000.
    """
    if unit in UNITS:
        return UNITS[unit], 1.0
    if unit in UNIT_ALIASES:
        return UNITS[UNIT_ALIASES[unit]], 1.0
    if unit.startswith("k") and len(unit) > 1:
        rest = unit[1:].lstrip()
        name = UNIT_ALIASES.get(rest, rest)
        if name in UNITS:
            return UNITS[name], KILO
    raise UnknownUnit(unit)


def unit_spellings():
    """Every non-prefixed unit spelling, longest first (for lexers)."""
    names = set(UNITS) | set(UNIT_ALIASES)
    return sorted(names, key=lambda s: (-len(s), s))


def dimension_of(unit: Optional[str]) -> str:
    # a bare number is a count
    if unit is None:
        return "count"
    return resolve_unit(unit)[0].dimension


def canonical_unit(unit: Optional[str]) -> Optional[str]:
    if unit is None:
        return None
    return resolve_unit(unit)[0].canonical


def to_canonical(value: float, unit: Optional[str]) -> float:
    if unit is None:
        return value
    info, mult = resolve_unit(unit)
    return value * mult * info.factor


def convert(value: float, from_unit: Optional[str], to_unit: Optional[str]) -> float:
    """Convert between two units of the same dimension."""
    if dimension_of(from_unit) != dimension_of(to_unit):
        raise DimensionMismatch(f"cannot convert {from_unit} to {to_unit}")
    a, b = to_canonical(1.0, from_unit), to_canonical(1.0, to_unit)
    return value if a == b else value * a / b


@dataclass(frozen=True)
class Quantity:
    value: float
    unit: str

    def __post_init__(self):
        if not math.isfinite(self.value):
            raise ValueError(f"quantity value must be finite, got {self.value}")


def normalize_quantity(q: Quantity) -> Quantity:
    """Express `q` in the canonical unit of its dimension (30 k notif/s -> 30000 notif/s)."""
    info, mult = resolve_unit(q.unit)
    return Quantity(q.value * mult * info.factor, info.canonical)


# ---------------------------------------------------------------------------
# intervals


@dataclass(frozen=True)
class Bound:
    value: float
    closed: bool = True


@dataclass(frozen=True)
class NumericInterval:
    """A subinterval of [0, inf).  ``upper is None`` means unbounded."""

    lower: Bound = Bound(0.0, True)
    upper: Optional[Bound] = None

    @classmethod
    def exactly(cls, value: float) -> "NumericInterval":
        return cls(Bound(value, True), Bound(value, True))

    @classmethod
    def at_least(cls, value: float, strict: bool = False) -> "NumericInterval":
        return cls(Bound(value, not strict), None)

    @classmethod
    def at_most(cls, value: float, strict: bool = False) -> "NumericInterval":
        return cls(Bound(0.0, True), Bound(value, not strict))

    def is_empty(self) -> bool:
        if self.upper is None:
            return False
        lo, hi = self.lower, self.upper
        if lo.value > hi.value:
            return True
        return lo.value == hi.value and not (lo.closed and hi.closed)

    def contains(self, x: float) -> bool:
        lo = self.lower
        if x < lo.value or (x == lo.value and not lo.closed):
            return False
        hi = self.upper
        if hi is None:
            return True
        return x < hi.value or (x == hi.value and hi.closed)

    def issubset(self, other: "NumericInterval") -> bool:
        if self.is_empty():
            return True
        if other.is_empty():
            return False
        a, b = self.lower, other.lower
        if a.value < b.value or (a.value == b.value and a.closed and not b.closed):
            return False
        if other.upper is None:
            return True
        if self.upper is None:
            return False
        a, b = self.upper, other.upper
        if a.value > b.value or (a.value == b.value and a.closed and not b.closed):
            return False
        return True

    def intersect(self, other: "NumericInterval") -> "NumericInterval":
        a, b = self.lower, other.lower
        if a.value != b.value:
            lower = a if a.value > b.value else b
        else:
            lower = Bound(a.value, a.closed and b.closed)
        if self.upper is None:
            upper = other.upper
        elif other.upper is None:
            upper = self.upper
        else:
            a, b = self.upper, other.upper
            if a.value != b.value:
                upper = a if a.value < b.value else b
            else:
                upper = Bound(a.value, a.closed and b.closed)
        return NumericInterval(lower, upper)

    def scaled(self, factor: float) -> "NumericInterval":
        upper = None if self.upper is None else Bound(self.upper.value * factor, self.upper.closed)
        return NumericInterval(Bound(self.lower.value * factor, self.lower.closed), upper)


# ---------------------------------------------------------------------------
# atoms


@dataclass(frozen=True, order=True)
class PatternVar:
    name: str

    def __str__(self):
        return f"?{self.name}"


Symbol = Union[str, PatternVar]
Loc = Optional[Tuple[int, int]]


class Atom:
    """Base class of every constraint atom.  ``loc`` is (line, col) in the source."""

    __slots__ = ()

    def __str__(self):
        from .dsl import render_atom

        return render_atom(self)


@dataclass(frozen=True, eq=True)
class NumericConstraint(Atom):
    var: str
    interval: NumericInterval
    unit: Optional[str] = None  # canonical unit, None for bare numbers
    loc: Loc = field(default=None, compare=False, repr=False)


@dataclass(frozen=True)
class SymbolEquality(Atom):
    var: str
    value: Symbol
    loc: Loc = field(default=None, compare=False, repr=False)


@dataclass(frozen=True)
class SetMembership(Atom):
    element: Symbol
    var: str
    loc: Loc = field(default=None, compare=False, repr=False)


@dataclass(frozen=True)
class SetAssignment(Atom):
    """``var = {a, b}``.  With ``exact=False`` the set is only known to contain the members."""

    var: str
    members: Tuple[str, ...]
    exact: bool = True
    loc: Loc = field(default=None, compare=False, repr=False)


@dataclass(frozen=True)
class SetInsert(Atom):
    """Consequent-only assertion ``insert elem into var`` (the set grows by one element)."""

    element: Symbol
    var: str
    loc: Loc = field(default=None, compare=False, repr=False)


@dataclass(frozen=True)
class Negated(Atom):
    inner: Atom
    loc: Loc = field(default=None, compare=False, repr=False)

    @property
    def var(self):
        return self.inner.var


@dataclass(frozen=True)
class Disjunction(Atom):
    disjuncts: Tuple[SymbolEquality, ...]
    loc: Loc = field(default=None, compare=False, repr=False)

    @property
    def var(self):
        return self.disjuncts[0].var


SET_KINDS = (SetMembership, SetAssignment, SetInsert)


def is_ground(atom: Atom) -> bool:
    if isinstance(atom, (Negated, Disjunction)):
        return False
    if isinstance(atom, SymbolEquality):
        return not isinstance(atom.value, PatternVar)
    if isinstance(atom, (SetMembership, SetInsert)):
        return not isinstance(atom.element, PatternVar)
    return True


def numeric(var: str, interval: NumericInterval, unit: Optional[str] = None, loc: Loc = None) -> NumericConstraint:
    """Build a numeric constraint, normalizing the bounds to the canonical unit."""
    if unit is None:
        return NumericConstraint(var, interval, None, loc)
    info, mult = resolve_unit(unit)
    return NumericConstraint(var, interval.scaled(mult * info.factor), info.canonical, loc)


@dataclass(frozen=True)
class ConstraintFact:
    atom: Atom
    timestamp: int = 0
    provenance: Tuple[str, ...] = ()

    @property
    def var(self) -> str:
        return self.atom.var

    def __str__(self):
        return str(self.atom)


# ---------------------------------------------------------------------------
# entailment and merging


def _check_dims(fact: NumericConstraint, other: NumericConstraint):
    if dimension_of(fact.unit) != dimension_of(other.unit):
        raise DimensionMismatch(
            f"{fact.var}: {fact.unit or 'count'} is not comparable with {other.unit or 'count'}"
        )


def _members(atom: Atom):
    if isinstance(atom, SetAssignment):
        return atom.members
    if isinstance(atom, SetMembership) and not isinstance(atom.element, PatternVar):
        return (atom.element,)
    return None


def entails(fact: Atom, antecedent: Atom) -> bool:
    """True when the ground `fact` guarantees `antecedent`.

    Pattern variables in `antecedent` match anything; binding them is the
    inference engine's job.  Negated atoms are not handled here because
    negation is evaluated against the whole working memory.
    """
    if isinstance(antecedent, Negated):
        raise ValueError("negated atoms are evaluated against the working memory, not a single fact")
    if isinstance(antecedent, Disjunction):
        return any(entails(fact, d) for d in antecedent.disjuncts)
    if fact.var != antecedent.var:
        return False

    if isinstance(antecedent, NumericConstraint):
        if not isinstance(fact, NumericConstraint):
            return False
        _check_dims(fact, antecedent)
        return not fact.interval.is_empty() and fact.interval.issubset(antecedent.interval)

    if isinstance(antecedent, SymbolEquality):
        if not isinstance(fact, SymbolEquality):
            return False
        if isinstance(antecedent.value, PatternVar):
            return True
        return fact.value == antecedent.value

    members = _members(fact)
    if members is None:
        return False
    if isinstance(antecedent, SetMembership):
        if isinstance(antecedent.element, PatternVar):
            return len(members) > 0
        return antecedent.element in members
    if isinstance(antecedent, SetAssignment):
        exact = isinstance(fact, SetAssignment) and fact.exact
        if antecedent.exact:
            return exact and set(members) == set(antecedent.members)
        return set(antecedent.members) <= set(members)
    return False


def merge_numeric(existing: ConstraintFact, incoming: ConstraintFact) -> ConstraintFact:
    """Intersect two numeric facts on one variable; an empty result is a contradiction."""
    a, b = existing.atom, incoming.atom
    if not (isinstance(a, NumericConstraint) and isinstance(b, NumericConstraint)):
        raise TypeError("merge_numeric expects numeric constraints")
    if a.var != b.var:
        raise ValueError(f"cannot merge {a.var} with {b.var}")
    _check_dims(a, b)
    merged = a.interval.intersect(b.interval)
    sources = existing.provenance + tuple(p for p in incoming.provenance if p not in existing.provenance)
    if merged.is_empty():
        raise Contradiction(a.var, f"{a} and {b} have no common value", sources)
    unit = a.unit if a.unit is not None else b.unit
    return ConstraintFact(replace(a, interval=merged, unit=unit), incoming.timestamp, sources)
