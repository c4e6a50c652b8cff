"""Forward-chaining production system that turns SLOs into vendor-neutral conditions.

Conflict resolution prefers the instantiation matching the most recent facts
(recency = newest timestamp among its matched facts).  Every SLA fact is
stamped 0 and each derived fact takes the next counter value; ties go to the
lowest rule id in natural order, then to the lexicographically smallest
binding.  A (rule, binding) pair fires at most once.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field, replace
from typing import Dict, List, Optional, Sequence, Tuple

from .dsl import ProductionRule, SlaDocument, render_atom
from .errors import Contradiction, DimensionMismatch, StepLimitExceeded
from .facts import (
    Atom,
    ConstraintFact,
    Disjunction,
    Negated,
    NumericConstraint,
    PatternVar,
    SetAssignment,
    SetInsert,
    SetMembership,
    SymbolEquality,
    entails,
    merge_numeric,
)

Binding = Tuple[Tuple[str, str], ...]

DEFAULT_MAX_STEPS = 10000


def natural_key(rule_id: str):
    """Sort key under which R2 < R10."""
    return tuple((0, int(c), "") if c.isdigit() else (1, 0, c) for c in re.split(r"(\d+)", rule_id) if c)


class WorkingMemory:
    """Facts keyed by variable; one merged fact per variable."""

    def __init__(self):
        self.facts: Dict[str, ConstraintFact] = {}
        self.next_timestamp = 1

    def __len__(self):
        return len(self.facts)

    def __iter__(self):
        return iter(self.facts.values())

    def get(self, var: str) -> Optional[ConstraintFact]:
        return self.facts.get(var)

    def snapshot(self) -> Tuple[ConstraintFact, ...]:
        return tuple(self.facts.values())

    def copy(self) -> "WorkingMemory":
        wm = WorkingMemory()
        wm.facts = dict(self.facts)
        wm.next_timestamp = self.next_timestamp
        return wm

    def insert(self, atom: Atom, timestamp: int, source: str) -> Optional[ConstraintFact]:
        """Add a ground assertion.  Returns the stored fact when memory changed, else None."""
        incoming = ConstraintFact(_as_fact_atom(atom), timestamp, (source,))
        var = incoming.atom.var
        old = self.facts.get(var)
        if old is None:
            self.facts[var] = incoming
            return incoming
        new = _merge(old, incoming)
        if _same_content(old.atom, new.atom):
            if source not in old.provenance:
                self.facts[var] = replace(old, provenance=old.provenance + (source,))
            return None
        self.facts[var] = new
        return new


def _as_fact_atom(atom: Atom) -> Atom:
    # strip source locations so facts compare by content
    if isinstance(atom, SetInsert):
        return SetAssignment(atom.var, (atom.element,), True)
    if isinstance(atom, SetMembership):
        return SetAssignment(atom.var, (atom.element,), False)
    if isinstance(atom, NumericConstraint):
        return NumericConstraint(atom.var, atom.interval, atom.unit)
    if isinstance(atom, SymbolEquality):
        return SymbolEquality(atom.var, atom.value)
    if isinstance(atom, SetAssignment):
        return SetAssignment(atom.var, atom.members, atom.exact)
    raise TypeError(f"{atom!r} cannot be stored as a fact")


def _same_content(a: Atom, b: Atom) -> bool:
    if isinstance(a, SetAssignment) and isinstance(b, SetAssignment):
        return set(a.members) == set(b.members) and a.exact == b.exact
    return a == b


def _merge(old: ConstraintFact, new: ConstraintFact) -> ConstraintFact:
    a, b = old.atom, new.atom
    var = a.var
    sources = old.provenance + tuple(p for p in new.provenance if p not in old.provenance)
    if type(a) is not type(b):
        raise Contradiction(var, f"{a} and {b} constrain it in incompatible ways", sources)
    if isinstance(a, NumericConstraint):
        return merge_numeric(old, new)
    if isinstance(a, SymbolEquality):
        if a.value != b.value:
            raise Contradiction(var, f"{a} and {b} cannot both hold", sources)
        return ConstraintFact(a, old.timestamp, sources)
    members = a.members + tuple(m for m in b.members if m not in a.members)
    return ConstraintFact(SetAssignment(var, members, a.exact or b.exact), new.timestamp, sources)


def seed(sla: SlaDocument) -> WorkingMemory:
    """Load every SLA objective and context fact with timestamp 0."""
    wm = WorkingMemory()
    for source, atom in sla.facts():
        wm.insert(atom, 0, source)
    wm.next_timestamp = 1
    return wm


# ---------------------------------------------------------------------------
# matching


@dataclass(frozen=True)
class RuleInstantiation:
    rule: ProductionRule
    binding: Binding = ()
    matched: Tuple[int, ...] = ()

    @property
    def rule_id(self) -> str:
        return self.rule.id

    @property
    def recency(self) -> int:
        return max(self.matched, default=0)

    @property
    def key(self) -> Tuple[str, Binding]:
        return (self.rule.id, self.binding)

    @property
    def label(self) -> str:
        if not self.binding:
            return self.rule.id
        inner = ",".join(f"?{k}={v}" for k, v in self.binding)
        return f"{self.rule.id}[{inner}]"


def _subst(atom: Atom, env: Dict[str, str]) -> Atom:
    if isinstance(atom, SymbolEquality) and isinstance(atom.value, PatternVar) and atom.value.name in env:
        return replace(atom, value=env[atom.value.name])
    if isinstance(atom, (SetMembership, SetInsert)) and isinstance(atom.element, PatternVar) and atom.element.name in env:
        return replace(atom, element=env[atom.element.name])
    if isinstance(atom, Negated):
        return replace(atom, inner=_subst(atom.inner, env))
    return atom


def _match_positive(atom: Atom, wm: WorkingMemory, env: Dict[str, str]):
    """Yield (extended env, matched timestamp) pairs for one positive atom."""
    atom = _subst(atom, env)
    fact = wm.get(atom.var)
    if fact is None:
        return
    if isinstance(atom, SymbolEquality) and isinstance(atom.value, PatternVar):
        if isinstance(fact.atom, SymbolEquality):
            yield {**env, atom.value.name: fact.atom.value}, fact.timestamp
        return
    if entails(fact.atom, atom):
        yield env, fact.timestamp


def _negation_holds(atom: Negated, wm: WorkingMemory, env: Dict[str, str]) -> bool:
    inner = _subst(atom.inner, env)
    return not any(entails(f.atom, inner) for f in wm if f.atom.var == inner.var)


def match_rule(rule: ProductionRule, wm: WorkingMemory) -> List[RuleInstantiation]:
    """All instantiations of `rule` satisfied by `wm` (negation as failure, checked last)."""
    positives = [a for a in rule.antecedent if not isinstance(a, Negated)]
    negatives = [a for a in rule.antecedent if isinstance(a, Negated)]
    found: Dict[Binding, RuleInstantiation] = {}

    def walk(i, env, stamps):
        if i == len(positives):
            if all(_negation_holds(n, wm, env) for n in negatives):
                binding = tuple(sorted(env.items()))
                if binding not in found:
                    found[binding] = RuleInstantiation(rule, binding, tuple(stamps))
            return
        for env2, ts in _match_positive(positives[i], wm, env):
            walk(i + 1, env2, stamps + [ts])

    walk(0, {}, [])
    return [found[b] for b in sorted(found)]


def compute_conflict_set(kb: Sequence[ProductionRule], wm: WorkingMemory, fired_log=()) -> List[RuleInstantiation]:
    """Satisfied instantiations that have not fired yet, in knowledge-base order."""
    fired = set(fired_log)
    out = []
    for rule in kb:
        out.extend(inst for inst in match_rule(rule, wm) if inst.key not in fired)
    return out


def select_instantiation(conflict_set: Sequence[RuleInstantiation]) -> RuleInstantiation:
    if not conflict_set:
        raise ValueError("conflict set is empty")
    return min(conflict_set, key=lambda inst: (-inst.recency, natural_key(inst.rule_id), inst.binding))


def fire(inst: RuleInstantiation, wm: WorkingMemory, fired_log: list) -> List[ConstraintFact]:
    """Assert the consequent of `inst`; each changed fact takes the next timestamp."""
    env = dict(inst.binding)
    new = []
    for atom in inst.rule.consequent:
        stored = wm.insert(_subst(atom, env), wm.next_timestamp, inst.rule_id)
        if stored is not None:
            wm.next_timestamp += 1
            new.append(stored)
    fired_log.append(inst.key)
    return new


# ---------------------------------------------------------------------------
# translation


@dataclass(frozen=True)
class TraceStep:
    index: int
    facts: Tuple[ConstraintFact, ...]
    conflict_set: Tuple[RuleInstantiation, ...]
    fired: Optional[RuleInstantiation] = None
    derived: Tuple[ConstraintFact, ...] = ()

    @property
    def conflict_rule_ids(self) -> Tuple[str, ...]:
        return tuple(sorted({i.rule_id for i in self.conflict_set}, key=natural_key))


@dataclass
class TranslationResult:
    conditions: List[ConstraintFact]
    trace: List[TraceStep]
    memory: WorkingMemory = field(repr=False)

    @property
    def fired_sequence(self) -> List[str]:
        return [s.fired.rule_id for s in self.trace if s.fired is not None]


def extract_conditions(wm: WorkingMemory, registry) -> List[ConstraintFact]:
    """Facts about registered vendor-neutral metrics, ordered by variable name.

    A set only known to contain some members becomes one membership
    condition per member.
    """
    out = []
    for var in sorted(f.var for f in wm):
        if not registry.is_vnm(var):
            continue
        fact = wm.get(var)
        a = fact.atom
        if isinstance(a, SetAssignment) and not a.exact:
            out.extend(replace(fact, atom=SetMembership(m, var)) for m in a.members)
        else:
            out.append(fact)
    return out


def run_translation(kb: Sequence[ProductionRule], sla: SlaDocument, registry=None,
                    max_steps: int = DEFAULT_MAX_STEPS) -> TranslationResult:
    """Run seed / match / select / fire until quiescence."""
    if max_steps < 1:
        raise ValueError("max_steps must be at least 1")
    if registry is None:
        from .registry import default_registry

        registry = default_registry()
    wm = seed(sla)
    fired_log: list = []
    trace: List[TraceStep] = []
    while True:
        conflict_set = compute_conflict_set(kb, wm, fired_log)
        snapshot = wm.snapshot()
        if not conflict_set:
            trace.append(TraceStep(len(trace), snapshot, ()))
            break
        if len(fired_log) >= max_steps:
            raise StepLimitExceeded(f"no quiescence after {max_steps} firings")
        inst = select_instantiation(conflict_set)
        derived = fire(inst, wm, fired_log)
        trace.append(TraceStep(len(trace), snapshot, tuple(conflict_set), inst, tuple(derived)))
    return TranslationResult(extract_conditions(wm, registry), trace, wm)


# ---------------------------------------------------------------------------
# explanation


@dataclass(frozen=True)
class Explanation:
    table: str
    narrative: Tuple[str, ...]
    records: Tuple[str, ...]

    def __str__(self):
        return self.table + "\n\n" + "\n".join(self.narrative)


def _conflict_cell(step: TraceStep) -> str:
    return "{" + ",".join(step.conflict_rule_ids) + "}"


def render_table(result: TranslationResult) -> str:
    """Step / facts / conflict set / fired table, one block per inference step."""
    rows = []
    for step in result.trace:
        facts = [render_atom(f.atom) for f in step.facts] or ["-"]
        fired = step.fired.label if step.fired else "-"
        rows.append((str(step.index), facts, _conflict_cell(step), fired))
    w_step = max(4, *(len(r[0]) for r in rows))
    w_facts = max(5, *(len(f) for r in rows for f in r[1]))
    w_cs = max(12, *(len(r[2]) for r in rows))
    head = f"{'Step':<{w_step}} | {'Facts':<{w_facts}} | {'Conflict set':<{w_cs}} | Fired"
    sep = f"{'-' * w_step}-+-{'-' * w_facts}-+-{'-' * w_cs}-+-{'-' * 5}"
    lines = [head, sep]
    for idx, facts, cs, fired in rows:
        for k, f in enumerate(facts):
            if k == 0:
                lines.append(f"{idx:<{w_step}} | {f:<{w_facts}} | {cs:<{w_cs}} | {fired}".rstrip())
            else:
                lines.append(f"{'':<{w_step}} | {f:<{w_facts}} |".rstrip())
        lines.append(sep)
    return "\n".join(lines)


def _narrate(step: TraceStep) -> str:
    inst = step.fired
    matched = []
    for a in inst.rule.antecedent:
        if isinstance(a, Negated):
            matched.append(f"no fact satisfies {render_atom(a.inner)}")
            continue
        sub = _subst(a, dict(inst.binding))
        for f in step.facts:
            if isinstance(sub, Disjunction) or f.var == sub.var:
                try:
                    ok = entails(f.atom, sub)
                except DimensionMismatch:
                    ok = False
                if ok:
                    matched.append(f"{render_atom(f.atom)} (t={f.timestamp})")
                    break
    asserted = ", ".join(f"{render_atom(f.atom)} (t={f.timestamp})" for f in step.derived) or "nothing new"
    others = [i.label for i in step.conflict_set if i is not inst]
    why = f"it matched the most recent facts (recency {inst.recency})"
    if others:
        why += f" among {{{', '.join([inst.label] + others)}}}"
    return (f"Step {step.index}: {inst.label} fired because {'; '.join(matched)} held; "
            f"{why}; asserted {asserted}.")


def _q(s: str) -> str:
    return json.dumps(s, ensure_ascii=False)


def render_records(result: TranslationResult) -> Tuple[str, ...]:
    """Line-delimited ``step=<n> kind=<fact|conflict|fired> ...`` records."""
    out = []
    for step in result.trace:
        for f in step.facts:
            out.append(f"step={step.index} kind=fact ts={f.timestamp} "
                       f"src={','.join(f.provenance)} atom={_q(render_atom(f.atom))}")
        out.append(f"step={step.index} kind=conflict set={','.join(i.label for i in step.conflict_set) or '-'}")
        if step.fired is not None:
            asserted = "; ".join(render_atom(f.atom) for f in step.derived)
            out.append(f"step={step.index} kind=fired rule={step.fired.label} "
                       f"recency={step.fired.recency} asserted={_q(asserted)}")
    return tuple(out)


def explain(result: TranslationResult) -> Explanation:
    narrative = tuple(_narrate(s) for s in result.trace if s.fired is not None)
    return Explanation(render_table(result), narrative, render_records(result))
