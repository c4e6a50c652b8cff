"""Check translated conditions against adapter reports."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, List, Optional, Sequence, Tuple

from .dsl import render_atom, render_number, render_symbol
from .facts import (Atom, NumericConstraint, SetAssignment, SetMembership,
                    dimension_of, to_canonical)
from .mapping import GlobalContext, aggregate_context
from .registry import Registry, default_registry

SATISFIED = "satisfied"
VIOLATED = "violated"
UNEVALUATED = "unevaluated"

EXIT_OK = 0
EXIT_VIOLATED = 3
EXIT_UNEVALUATED = 4


@dataclass(frozen=True)
class Evidence:
    """A sample (timestamp, instance, value) or a context value that breaks a condition."""

    value: str
    timestamp: Optional[float] = None
    instance: Optional[str] = None

    def __str__(self):
        if self.timestamp is None:
            return f"context {self.value}"
        return f"t={render_number(self.timestamp)} instance={self.instance} value={self.value}"


@dataclass(frozen=True)
class ConditionResult:
    condition: str
    status: str
    evidence: Tuple[Evidence, ...] = ()
    evaluated: int = 0


@dataclass
class ViolationReport:
    results: List[ConditionResult] = field(default_factory=list)
    context: Optional[GlobalContext] = None
    warnings: List[str] = field(default_factory=list)

    @property
    def exit_code(self) -> int:
        statuses = {r.status for r in self.results}
        if VIOLATED in statuses:
            return EXIT_VIOLATED
        if UNEVALUATED in statuses:
            return EXIT_UNEVALUATED
        return EXIT_OK

    def render(self, max_evidence: int = 10) -> str:
        lines = []
        for r in self.results:
            lines.append(f"{r.status:<12}{r.condition}  [{r.evaluated} checked]")
            for e in r.evidence[:max_evidence]:
                lines.append(f"    {e}")
            if len(r.evidence) > max_evidence:
                lines.append(f"    ... {len(r.evidence) - max_evidence} more")
        counts = {s: sum(r.status == s for r in self.results) for s in (SATISFIED, VIOLATED, UNEVALUATED)}
        lines.append(f"summary: {counts[SATISFIED]} satisfied, {counts[VIOLATED]} violated, "
                     f"{counts[UNEVALUATED]} unevaluated")
        return "\n".join(lines) + "\n"


def _fold(xs) -> frozenset:
    return frozenset(str(x).casefold() for x in xs)


def _render_set(xs) -> str:
    return "{" + ", ".join(render_symbol(x) for x in sorted(xs)) + "}"


def _check_context(atom: Atom, ctx: GlobalContext, cond: str) -> ConditionResult:
    values = ctx.metrics()
    value = values[atom.var]
    if isinstance(atom, NumericConstraint):
        if isinstance(value, frozenset):
            return ConditionResult(cond, UNEVALUATED)
        ok = atom.interval.contains(float(value))
        shown = render_number(value) + ("" if atom.unit is None else f" {atom.unit}")
    elif isinstance(atom, SetAssignment) and atom.exact:
        ok = _fold(value) == _fold(atom.members)
        shown = _render_set(value)
    elif isinstance(atom, (SetAssignment, SetMembership)):
        members = atom.members if isinstance(atom, SetAssignment) else (atom.element,)
        ok = _fold(members) <= _fold(value)
        shown = _render_set(value)
    else:
        return ConditionResult(cond, UNEVALUATED)
    evidence = () if ok else (Evidence(f"{atom.var} = {shown}"),)
    return ConditionResult(cond, SATISFIED if ok else VIOLATED, evidence, 1)


def _check_samples(atom: NumericConstraint, samples, cond: str) -> ConditionResult:
    want = dimension_of(atom.unit)
    evidence = []
    n = 0
    for s in samples:
        if s.metric != atom.var or dimension_of(s.unit) != want:
            continue
        n += 1
        v = to_canonical(s.value, s.unit)
        if not atom.interval.contains(v):
            evidence.append(Evidence(f"{render_number(s.value)} {s.unit}", s.timestamp, s.instance))
    if n == 0:
        return ConditionResult(cond, UNEVALUATED)
    return ConditionResult(cond, VIOLATED if evidence else SATISFIED, tuple(evidence), n)


def check_conditions(conditions: Sequence[Atom], reports: Iterable, registry: Optional[Registry] = None,
                     display_units: bool = True) -> ViolationReport:
    """Evaluate every condition.

    Numeric conditions on service metrics are checked per sample: one sample
    outside the interval violates the condition.  Only samples whose unit has
    the condition's dimension count (memory_usage is a percentage for IaaS
    and a byte count for PaaS).  Context conditions are checked against the
    union of all adapters' partial context, and are always evaluable.
    """
    registry = registry or default_registry()
    reports = list(reports)
    ctx = aggregate_context(r.context for r in reports)
    samples = sorted((s for r in reports for s in r.samples),
                     key=lambda s: (s.timestamp, s.instance, s.metric, s.dimensions))
    out = ViolationReport(context=ctx)
    for r in reports:
        out.warnings.extend(r.warnings)
    for atom in conditions:
        cond = render_condition(atom, registry) if display_units else render_atom(atom)
        var = getattr(atom, "var", None)
        is_context = any(d.tier == "Context" for d in registry.descriptors(var)) if var else False
        if is_context:
            res = _check_context(atom, ctx, cond)
        elif isinstance(atom, NumericConstraint):
            res = _check_samples(atom, samples, cond)
        else:
            res = ConditionResult(cond, UNEVALUATED)
            if not (var and registry.is_vnm(var)):
                out.warnings.append(f"condition {cond!r} is not about a vendor-neutral metric")
        out.results.append(res)
    return out


def render_condition(atom: Atom, registry: Optional[Registry] = None) -> str:
    """Render a condition in the unit its metric is reported in (replica_lag in s)."""
    registry = registry or default_registry()
    unit = None
    if isinstance(atom, NumericConstraint):
        units = {d.unit for d in registry.descriptors(atom.var)
                 if d.unit is not None and dimension_of(d.unit) == dimension_of(atom.unit)}
        if len(units) == 1:
            unit = units.pop()
    return render_atom(atom, unit)
