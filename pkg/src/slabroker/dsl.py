"""Parser and pretty-printer for knowledge-base (``.kb``), SLA (``.sla``) and
condition files.

Grammar (``#`` starts a comment, whitespace is free in ``.kb`` files,
``.sla`` and condition files hold one entry per line)::

    kb          := rule*
    rule        := "rule" ID "{" "if" antecedent "then" consequent "}"
    antecedent  := literal ("and" literal)*
    literal     := "not" atom | atom ("or" atom)*
    consequent  := assertion ("," assertion)*
    assertion   := atom | "insert" (symbol | ?var) "into" ID

    sla         := (line NEWLINE)*
    line        := [ID ":"] atom ("and" atom)*      # labelled lines are SLOs

    atom        := ID op value                       # throughput >= 30k notif/s
                 | quantity ("<"|"<=") ID ("<"|"<=") quantity   # 30 ms <= latency < 50 ms
                 | (symbol | ?var) "in" ID           # "Europe" in continents
    op          := "=" | "!=" | "<" | "<=" | ">" | ">="
    value       := quantity | symbol | ?var | "{" [symbol ("," symbol)*] "}"
    quantity    := NUMBER ["k"] [UNIT]
    symbol      := ID | "quoted string"

Identifiers may start with digits when they contain an underscore
(``4xx_errors``).  Every error is raised as a positioned :class:`DslError`
(or :class:`UnknownUnit` carrying line and column).
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from typing import Iterable, List, Optional, Sequence, Tuple, Union

from .errors import DimensionMismatch, DslError, DslSyntaxError, DuplicateId, UnboundVariable, UnknownUnit
from .facts import (
    Atom,
    Bound,
    Disjunction,
    Negated,
    NumericConstraint,
    NumericInterval,
    PatternVar,
    SetAssignment,
    SetInsert,
    SetMembership,
    SymbolEquality,
    convert,
    dimension_of,
    is_ground,
    resolve_unit,
    unit_spellings,
)

KEYWORDS = frozenset({"rule", "if", "then", "and", "or", "not", "insert", "into", "in"})
COMPARISONS = ("<=", ">=", "!=", "=", "<", ">")

_IDENT = r"(?:[A-Za-z_][A-Za-z0-9_]*|[0-9]+[A-Za-z][A-Za-z0-9]*_[A-Za-z0-9_]*)"
_IDENT_RE = re.compile(_IDENT)
_NUMBER_RE = re.compile(r"[0-9]+(?:\.[0-9]+)?(?:[eE][+-]?[0-9]+)?")
_UNIT_RE = re.compile(
    r"(?P<k>k[ \t]*)?(?P<u>" + "|".join(re.escape(u) for u in unit_spellings()) + r")(?![A-Za-z0-9_])"
)
_KILO_RE = re.compile(r"k(?![A-Za-z0-9_/])")
_WORD_RE = re.compile(r"[A-Za-z$%][A-Za-z0-9_/$%]*")
_STRING_RE = re.compile(r'"(?:[^"\\\n]|\\.)*"')
_PVAR_RE = re.compile(r"\?[A-Za-z_][A-Za-z0-9_]*")


@dataclass(frozen=True)
class Token:
    kind: str  # ID KW PVAR STRING NUMBER OP PUNCT NEWLINE EOF
    text: str
    line: int
    col: int
    value: object = None
    unit: Optional[str] = None

    def describe(self):
        if self.kind == "EOF":
            return "end of input"
        if self.kind == "NEWLINE":
            return "end of line"
        return repr(self.text)


def tokenize(text: str, newlines: bool = False) -> List[Token]:
    """Split `text` into tokens.  With ``newlines=True`` line ends are tokens."""
    toks: List[Token] = []
    i, line, line_start = 0, 1, 0
    n = len(text)
    while i < n:
        c = text[i]
        col = i - line_start + 1
        if c == "\n":
            if newlines:
                toks.append(Token("NEWLINE", "\n", line, col))
            i += 1
            line += 1
            line_start = i
            continue
        if c in " \t\r\f\v":
            i += 1
            continue
        if c == "#":
            while i < n and text[i] != "\n":
                i += 1
            continue
        if c == '"':
            m = _STRING_RE.match(text, i)
            if not m:
                raise DslError("unterminated string literal", line, col)
            try:
                value = json.loads(m.group())
            except ValueError:
                raise DslError("invalid escape in string literal", line, col) from None
            toks.append(Token("STRING", m.group(), line, col, value))
            i = m.end()
            continue
        if c == "?":
            m = _PVAR_RE.match(text, i)
            if not m:
                raise DslSyntaxError(line, col, "pattern variable name after '?'")
            toks.append(Token("PVAR", m.group(), line, col, PatternVar(m.group()[1:])))
            i = m.end()
            continue
        if "0" <= c <= "9":
            m = _IDENT_RE.match(text, i)
            if m and not _NUMBER_RE.fullmatch(m.group()) and "_" in m.group():
                toks.append(Token("ID", m.group(), line, col, m.group()))
                i = m.end()
                continue
            m = _NUMBER_RE.match(text, i)
            value = float(m.group())
            i = m.end()
            j = i
            while j < n and text[j] in " \t":
                j += 1
            unit = None
            um = _UNIT_RE.match(text, j)
            if um:
                unit = um.group("u")
                if um.group("k"):
                    value *= 1000.0
                i = um.end()
            else:
                km = _KILO_RE.match(text, j)
                if km:
                    value *= 1000.0
                    i = km.end()
                    j = i
                    while j < n and text[j] in " \t":
                        j += 1
                    um = _UNIT_RE.match(text, j)
                    if um and not um.group("k"):
                        unit = um.group("u")
                        i = um.end()
                if unit is None:
                    wm = _WORD_RE.match(text, j)
                    if wm and wm.group() not in KEYWORDS:
                        raise UnknownUnit(wm.group(), line, j - line_start + 1)
            toks.append(Token("NUMBER", text[m.start():i], line, col, value, unit))
            continue
        m = _IDENT_RE.match(text, i)
        if m:
            word = m.group()
            kind = "KW" if word in KEYWORDS else "ID"
            toks.append(Token(kind, word, line, col, word))
            i = m.end()
            continue
        two = text[i:i + 2]
        if two in ("<=", ">=", "!="):
            toks.append(Token("OP", two, line, col))
            i += 2
            continue
        if c in "=<>":
            toks.append(Token("OP", c, line, col))
            i += 1
            continue
        if c in "{},:":
            toks.append(Token("PUNCT", c, line, col))
            i += 1
            continue
        raise DslError(f"unexpected character {c!r}", line, col)
    col = i - line_start + 1
    toks.append(Token("EOF", "", line, col))
    return toks


# ---------------------------------------------------------------------------
# documents


@dataclass(frozen=True)
class ProductionRule:
    id: str
    antecedent: Tuple[Atom, ...]
    consequent: Tuple[Atom, ...]
    loc: Optional[Tuple[int, int]] = field(default=None, compare=False, repr=False)

    def __str__(self):
        return render_rule(self)


@dataclass(frozen=True)
class SlaDocument:
    """Objectives are ``(slo_id, atoms)`` pairs; an SLO may conjoin several atoms."""

    objectives: Tuple[Tuple[str, Tuple[Atom, ...]], ...] = ()
    context: Tuple[Atom, ...] = ()

    def facts(self):
        """All ground atoms with their provenance label, in file order."""
        items = [(slo_id, a) for slo_id, atoms in self.objectives for a in atoms]
        items += [("SLA", a) for a in self.context]
        if all(a.loc is not None for _, a in items):
            items.sort(key=lambda item: item[1].loc)
        return iter(items)


# ---------------------------------------------------------------------------
# parser

ANTECEDENT, CONSEQUENT, FACT = "antecedent", "consequent", "fact"


class _Parser:
    def __init__(self, tokens: Sequence[Token]):
        self.toks = tokens
        self.pos = 0

    @property
    def tok(self) -> Token:
        return self.toks[self.pos]

    def peek(self, k=1) -> Token:
        return self.toks[min(self.pos + k, len(self.toks) - 1)]

    def advance(self) -> Token:
        t = self.toks[self.pos]
        if t.kind != "EOF":
            self.pos += 1
        return t

    def fail(self, expected, tok=None):
        tok = tok or self.tok
        raise DslSyntaxError(tok.line, tok.col, expected, tok.describe())

    def at(self, kind, text=None) -> bool:
        t = self.tok
        return t.kind == kind and (text is None or t.text == text)

    def expect(self, kind, text=None, what=None) -> Token:
        if not self.at(kind, text):
            self.fail(what or (repr(text) if text else kind.lower()))
        return self.advance()

    # -- atoms --------------------------------------------------------------

    def symbol(self, allow_pvar=False):
        t = self.tok
        if t.kind in ("ID", "STRING"):
            self.advance()
            return t.value
        if allow_pvar and t.kind == "PVAR":
            self.advance()
            return t.value
        self.fail("a symbol" + (" or pattern variable" if allow_pvar else ""))

    def set_literal(self) -> Tuple[str, ...]:
        self.expect("PUNCT", "{")
        members: List[str] = []
        if not self.at("PUNCT", "}"):
            members.append(self.symbol())
            while self.at("PUNCT", ","):
                self.advance()
                members.append(self.symbol())
        self.expect("PUNCT", "}")
        seen = []
        for m in members:
            if m not in seen:
                seen.append(m)
        return tuple(seen)

    def _numeric(self, var, op_tok, num_tok, ctx):
        loc = (op_tok.line, op_tok.col)
        unit = num_tok.unit
        try:
            info, mult = resolve_unit(unit) if unit else (None, 1.0)
        except UnknownUnit:
            raise UnknownUnit(unit, num_tok.line, num_tok.col) from None
        v = num_tok.value * mult * (info.factor if info else 1.0)
        canon = info.canonical if info else None
        op = op_tok.text
        if op == "!=":
            if ctx != ANTECEDENT:
                raise DslError("'!=' on a number is only allowed in rule antecedents", *loc)
            return Negated(NumericConstraint(var, NumericInterval.exactly(v), canon, loc), loc)
        interval = {
            "=": NumericInterval.exactly(v),
            "<": NumericInterval.at_most(v, strict=True),
            "<=": NumericInterval.at_most(v),
            ">": NumericInterval.at_least(v, strict=True),
            ">=": NumericInterval.at_least(v),
        }[op]
        return NumericConstraint(var, interval, canon, loc)

    def _range(self, ctx):
        lo_tok = self.advance()
        op1 = self.tok
        if not (op1.kind == "OP" and op1.text in ("<", "<=")):
            self.fail("'<' or '<=' in a range")
        self.advance()
        var_tok = self.expect("ID", what="a variable name")
        op2 = self.tok
        if not (op2.kind == "OP" and op2.text in ("<", "<=")):
            self.fail("'<' or '<=' in a range")
        self.advance()
        hi_tok = self.tok
        if hi_tok.kind != "NUMBER":
            self.fail("a number")
        self.advance()
        unit = lo_tok.unit or hi_tok.unit
        vals = []
        for t in (lo_tok, hi_tok):
            u = t.unit or unit
            try:
                if lo_tok.unit and hi_tok.unit and dimension_of(lo_tok.unit) != dimension_of(hi_tok.unit):
                    raise DslError(f"range bounds {lo_tok.unit} and {hi_tok.unit} are not comparable", t.line, t.col)
                info, mult = resolve_unit(u) if u else (None, 1.0)
            except UnknownUnit:
                raise UnknownUnit(u, t.line, t.col) from None
            vals.append(t.value * mult * (info.factor if info else 1.0))
        canon = resolve_unit(unit)[0].canonical if unit else None
        interval = NumericInterval(Bound(vals[0], op1.text == "<="), Bound(vals[1], op2.text == "<="))
        loc = (lo_tok.line, lo_tok.col)
        return NumericConstraint(var_tok.value, interval, canon, loc)

    def simple_atom(self, ctx) -> Atom:
        t = self.tok
        loc = (t.line, t.col)
        if t.kind == "KW" and t.text == "insert":
            if ctx != CONSEQUENT:
                raise DslError("'insert' is only allowed in rule consequents", *loc)
            self.advance()
            elem = self.symbol(allow_pvar=True)
            self.expect("KW", "into")
            var = self.expect("ID", what="a set variable name").value
            return SetInsert(elem, var, loc)
        if t.kind == "NUMBER":
            return self._range(ctx)
        if t.kind in ("STRING", "PVAR") or (t.kind == "ID" and self.peek().kind == "KW" and self.peek().text == "in"):
            elem = self.symbol(allow_pvar=True)
            self.expect("KW", "in")
            var = self.expect("ID", what="a set variable name").value
            return SetMembership(elem, var, loc)
        if t.kind != "ID":
            self.fail("a constraint")
        var = self.advance().value
        op_tok = self.tok
        if op_tok.kind != "OP":
            self.fail("a comparison operator")
        self.advance()
        v = self.tok
        if v.kind == "NUMBER":
            self.advance()
            return self._numeric(var, op_tok, v, ctx)
        if op_tok.text not in ("=", "!="):
            self.fail("a number after " + repr(op_tok.text), v)
        if v.kind == "PUNCT" and v.text == "{":
            if op_tok.text != "=":
                self.fail("'=' before a set literal", op_tok)
            return SetAssignment(var, self.set_literal(), True, loc)
        value = self.symbol(allow_pvar=True)
        atom = SymbolEquality(var, value, loc)
        if op_tok.text == "!=":
            if ctx != ANTECEDENT:
                raise DslError("'!=' is only allowed in rule antecedents", *loc)
            return Negated(atom, loc)
        return atom

    def literal(self, ctx) -> Atom:
        t = self.tok
        loc = (t.line, t.col)
        if t.kind == "KW" and t.text == "not":
            if ctx != ANTECEDENT:
                raise DslError("'not' is only allowed in rule antecedents", *loc)
            self.advance()
            inner = self.simple_atom(ctx)
            if isinstance(inner, Negated):
                return inner.inner
            return Negated(inner, loc)
        first = self.simple_atom(ctx)
        if not self.at("KW", "or"):
            return first
        if ctx != ANTECEDENT:
            raise DslError("'or' is only allowed in rule antecedents", *loc)
        parts = [first]
        while self.at("KW", "or"):
            self.advance()
            parts.append(self.simple_atom(ctx))
        for p in parts:
            if not isinstance(p, SymbolEquality) or isinstance(p.value, PatternVar):
                raise DslError("disjunctions may only combine symbol equalities", *loc)
            if p.var != first.var:
                raise DslError(f"disjunction mixes variables {first.var} and {p.var}", *loc)
        return Disjunction(tuple(parts), loc)

    def check_fact(self, atom: Atom):
        if not is_ground(atom) or isinstance(atom, SetInsert):
            line, col = atom.loc or (self.tok.line, self.tok.col)
            raise DslError("SLA and condition entries must be ground constraints", line, col)

    # -- documents ----------------------------------------------------------

    def rule(self) -> ProductionRule:
        kw = self.expect("KW", "rule")
        rid_tok = self.expect("ID", what="a rule id")
        self.expect("PUNCT", "{")
        self.expect("KW", "if")
        ante = [self.literal(ANTECEDENT)]
        while self.at("KW", "and"):
            self.advance()
            ante.append(self.literal(ANTECEDENT))
        self.expect("KW", "then")
        cons = [self.literal(CONSEQUENT)]
        while self.at("PUNCT", ","):
            self.advance()
            cons.append(self.literal(CONSEQUENT))
        self.expect("PUNCT", "}", what="',' or '}'")
        rule = ProductionRule(rid_tok.value, tuple(ante), tuple(cons), (kw.line, kw.col))
        _check_bindings(rule)
        return rule

    def kb(self) -> List[ProductionRule]:
        rules: List[ProductionRule] = []
        seen = set()
        while not self.at("EOF"):
            if not self.at("KW", "rule"):
                self.fail("'rule'")
            r = self.rule()
            if r.id in seen:
                raise DuplicateId(r.id, *r.loc)
            seen.add(r.id)
            rules.append(r)
        return rules

    def skip_newlines(self):
        while self.at("NEWLINE"):
            self.advance()

    def end_of_line(self):
        if not (self.at("NEWLINE") or self.at("EOF")):
            self.fail("end of line")

    def sla(self) -> SlaDocument:
        objectives, context, seen = [], [], set()
        self.skip_newlines()
        while not self.at("EOF"):
            label = None
            if self.at("ID") and self.peek().kind == "PUNCT" and self.peek().text == ":":
                label = self.advance()
                self.advance()
            atoms = [self.literal(FACT)]
            while self.at("KW", "and"):
                self.advance()
                atoms.append(self.literal(FACT))
            for a in atoms:
                self.check_fact(a)
            self.end_of_line()
            if label is None:
                context.extend(atoms)
            else:
                if label.value in seen:
                    raise DuplicateId(label.value, label.line, label.col)
                seen.add(label.value)
                objectives.append((label.value, tuple(atoms)))
            self.skip_newlines()
        return SlaDocument(tuple(objectives), tuple(context))

    def conditions(self) -> List[Atom]:
        out = []
        self.skip_newlines()
        while not self.at("EOF"):
            a = self.literal(FACT)
            self.check_fact(a)
            self.end_of_line()
            out.append(a)
            self.skip_newlines()
        return out


def _pattern_vars(atom: Atom):
    if isinstance(atom, SymbolEquality) and isinstance(atom.value, PatternVar):
        yield atom.value
    if isinstance(atom, (SetMembership, SetInsert)) and isinstance(atom.element, PatternVar):
        yield atom.element


def _check_bindings(rule: ProductionRule):
    bound = {}
    for a in rule.antecedent:
        for v in _pattern_vars(a):
            if isinstance(a, SymbolEquality):
                if v in bound:
                    line, col = a.loc or rule.loc
                    raise DslError(f"rule {rule.id}: pattern variable {v} is bound twice", line, col)
                bound[v] = a
    for a in rule.consequent:
        if isinstance(a, SymbolEquality) and isinstance(a.value, PatternVar):
            line, col = a.loc or rule.loc
            raise DslError(f"rule {rule.id}: pattern variables may only be asserted through 'insert'", line, col)
        for v in _pattern_vars(a):
            if v not in bound:
                line, col = a.loc or rule.loc
                raise UnboundVariable(rule.id, str(v), line, col)


def _text(text: Union[str, bytes]) -> str:
    if isinstance(text, bytes):
        try:
            return text.decode("utf-8")
        except UnicodeDecodeError as e:
            line = text[: e.start].count(b"\n") + 1
            col = e.start - (text.rfind(b"\n", 0, e.start) + 1) + 1
            raise DslError("input is not valid UTF-8", line, col) from None
    return text


def parse_kb(text: Union[str, bytes]) -> List[ProductionRule]:
    """Parse a knowledge base into production rules, in file order."""
    return _Parser(tokenize(_text(text))).kb()


def parse_sla(text: Union[str, bytes]) -> SlaDocument:
    """Parse an SLA file.  ``ID: atom and atom`` lines are objectives, bare lines context facts."""
    return _Parser(tokenize(_text(text), newlines=True)).sla()


def parse_conditions(text: Union[str, bytes]) -> List[Atom]:
    """Parse a condition file (one ground atom per line), as written by ``broker translate``."""
    return _Parser(tokenize(_text(text), newlines=True)).conditions()


# ---------------------------------------------------------------------------
# pretty printing


def render_symbol(s) -> str:
    if isinstance(s, PatternVar):
        return str(s)
    if _IDENT_RE.fullmatch(s) and s not in KEYWORDS and not _NUMBER_RE.fullmatch(s):
        return s
    return json.dumps(s, ensure_ascii=False)


def render_number(v: float) -> str:
    if v == int(v) and abs(v) < 1e15:
        return str(int(v))
    return repr(v)


def _quantity(v: float, unit: Optional[str]) -> str:
    return render_number(v) if unit is None else f"{render_number(v)} {unit}"


def render_atom(atom: Atom, display_unit: Optional[str] = None) -> str:
    """Render an atom in concrete syntax; numeric values may be shown in `display_unit`."""
    if isinstance(atom, NumericConstraint):
        unit = atom.unit
        iv = atom.interval
        if display_unit is not None and unit is not None and display_unit != unit:
            if dimension_of(display_unit) == dimension_of(unit):
                factor = convert(1.0, unit, display_unit)
                iv, unit = iv.scaled(factor), display_unit
        lo, hi = iv.lower, iv.upper
        v = atom.var
        if hi is None:
            return f"{v} {'>=' if lo.closed else '>'} {_quantity(lo.value, unit)}"
        if lo.closed and hi.closed and lo.value == hi.value:
            return f"{v} = {_quantity(hi.value, unit)}"
        if lo.value == 0 and lo.closed:
            return f"{v} {'<=' if hi.closed else '<'} {_quantity(hi.value, unit)}"
        return (f"{_quantity(lo.value, unit)} {'<=' if lo.closed else '<'} {v} "
                f"{'<=' if hi.closed else '<'} {_quantity(hi.value, unit)}")
    if isinstance(atom, SymbolEquality):
        return f"{atom.var} = {render_symbol(atom.value)}"
    if isinstance(atom, SetMembership):
        return f"{render_symbol(atom.element)} in {atom.var}"
    if isinstance(atom, SetInsert):
        return f"insert {render_symbol(atom.element)} into {atom.var}"
    if isinstance(atom, SetAssignment):
        if not atom.exact:
            return " and ".join(f"{render_symbol(m)} in {atom.var}" for m in atom.members)
        return f"{atom.var} = {{{', '.join(render_symbol(m) for m in atom.members)}}}"
    if isinstance(atom, Negated):
        return f"not {render_atom(atom.inner, display_unit)}"
    if isinstance(atom, Disjunction):
        return " or ".join(render_atom(d) for d in atom.disjuncts)
    raise TypeError(f"cannot render {atom!r}")


def render_rule(rule: ProductionRule) -> str:
    ante = "\n     and ".join(render_atom(a) for a in rule.antecedent)
    cons = ",\n       ".join(render_atom(a) for a in rule.consequent)
    return f"rule {rule.id} {{\n  if {ante}\n  then {cons}\n}}"


def render_kb(rules: Iterable[ProductionRule]) -> str:
    return "\n\n".join(render_rule(r) for r in rules) + "\n"


def render_sla(doc: SlaDocument) -> str:
    lines = [render_atom(a) for a in doc.context]
    for slo_id, atoms in doc.objectives:
        lines.append(f"{slo_id}: " + " and ".join(render_atom(a) for a in atoms))
    return "\n".join(lines) + "\n"
