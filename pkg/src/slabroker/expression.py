"""Mapping expressions: how one vendor-neutral metric is computed from
provider-native metrics and deployment parameters.

Syntax::

    expr    := term (("+" | "-") term)*
    term    := power (("*" | "/") power)*
    power   := atom ["^" power]
    atom    := NUMBER [UNIT] | "(" expr ")" | "$" PARAM | metric
             | "window" "(" "sum" "," metric ")"     # running sum of increments
             | "delta" "(" metric ")"                # change of a cumulative counter
             | "mean" "(" metric ")"                 # average over dimension series
    metric  := (NAME | "quoted name") ["{" key "=" value ("," key "=" value)* "}"]

A selector ``{method=GET}`` restricts a metric to the series carrying those
dimensions; without one, every series of the metric in a bucket is summed.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from typing import Dict, FrozenSet, Iterator, Mapping, Tuple, Union

from .errors import UnitMismatch
from .facts import resolve_unit, unit_spellings

Selector = Tuple[Tuple[str, str], ...]


@dataclass(frozen=True)
class MetricRef:
    name: str
    selector: Selector = ()

    def matches(self, name: str, dimensions: Mapping[str, str]) -> bool:
        return name == self.name and all(dimensions.get(k) == v for k, v in self.selector)

    def __str__(self):
        s = self.name if re.fullmatch(r"[A-Za-z_][A-Za-z0-9_]*", self.name) else f'"{self.name}"'
        if self.selector:
            s += "{" + ",".join(f"{k}={v}" for k, v in self.selector) + "}"
        return s


@dataclass(frozen=True)
class ConfigRef:
    param: str

    def __str__(self):
        return f"${self.param}"


@dataclass(frozen=True)
class Constant:
    value: float
    unit: Union[str, None] = None

    def __str__(self):
        v = str(int(self.value)) if self.value == int(self.value) else repr(self.value)
        return f"{v} {self.unit}" if self.unit else v


@dataclass(frozen=True)
class BinOp:
    op: str  # + - * / ^
    left: "Expr"
    right: "Expr"

    def __str__(self):
        return f"({self.left} {self.op} {self.right})"


@dataclass(frozen=True)
class WindowSum:
    ref: MetricRef

    def __str__(self):
        return f"window(sum, {self.ref})"


@dataclass(frozen=True)
class Delta:
    ref: MetricRef

    def __str__(self):
        return f"delta({self.ref})"


@dataclass(frozen=True)
class Mean:
    ref: MetricRef

    def __str__(self):
        return f"mean({self.ref})"


Expr = Union[MetricRef, ConfigRef, Constant, BinOp, WindowSum, Delta, Mean]
STATEFUL = (WindowSum, Delta)


class ExpressionError(ValueError):
    def __init__(self, text, pos, message):
        self.pos = pos
        super().__init__(f"{message} at offset {pos} in {text!r}")


_TOKEN_RE = re.compile(
    r"""
    (?P<ws>\s+)
  | (?P<num>[0-9]+(?:\.[0-9]+)?(?:[eE][+-]?[0-9]+)?)
  | (?P<str>"[^"]*")
  | (?P<param>\$[A-Za-z_][A-Za-z0-9_]*)
  | (?P<sel>\{[^}]*\})
  | (?P<name>[A-Za-z_][A-Za-z0-9_./#<>-]*)
  | (?P<op>[-+*/^(),])
    """,
    re.VERBOSE,
)
_UNIT_AFTER_NUM = re.compile(
    r"[ \t]*(?P<u>" + "|".join(re.escape(u) for u in unit_spellings()) + r")(?![A-Za-z0-9_])"
)


def _tokens(text: str):
    pos = 0
    out = []
    while pos < len(text):
        m = _TOKEN_RE.match(text, pos)
        if not m:
            raise ExpressionError(text, pos, f"unexpected character {text[pos]!r}")
        kind = m.lastgroup
        if kind == "num":
            value = float(m.group())
            um = _UNIT_AFTER_NUM.match(text, m.end())
            # a unit directly after a number belongs to it, unless it is really an operator
            if um and um.group("u") not in ("%",):
                out.append(("num", (value, um.group("u")), m.start()))
                pos = um.end()
                continue
            out.append(("num", (value, None), m.start()))
        elif kind != "ws":
            out.append((kind, m.group(), m.start()))
        pos = m.end()
    out.append(("eof", None, len(text)))
    return out


def _selector(raw: str, text: str, pos: int) -> Selector:
    body = raw[1:-1].strip()
    if not body:
        return ()
    pairs = []
    for part in body.split(","):
        if "=" not in part:
            raise ExpressionError(text, pos, f"selector entry {part.strip()!r} lacks '='")
        k, v = part.split("=", 1)
        pairs.append((k.strip(), v.strip()))
    return tuple(sorted(pairs))


class _ExprParser:
    def __init__(self, text):
        self.text = text
        self.toks = _tokens(text)
        self.i = 0

    def peek(self):
        return self.toks[self.i]

    def take(self, kind=None, value=None):
        k, v, p = self.toks[self.i]
        if (kind and k != kind) or (value is not None and v != value):
            want = value or kind
            raise ExpressionError(self.text, p, f"expected {want!r}")
        self.i += 1
        return v

    def parse(self) -> Expr:
        e = self.expr()
        k, v, p = self.peek()
        if k != "eof":
            raise ExpressionError(self.text, p, f"unexpected {v!r}")
        return e

    def expr(self):
        left = self.term()
        while self.peek()[0] == "op" and self.peek()[1] in "+-":
            op = self.take()
            left = BinOp(op, left, self.term())
        return left

    def term(self):
        left = self.power()
        while self.peek()[0] == "op" and self.peek()[1] in "*/":
            op = self.take()
            left = BinOp(op, left, self.power())
        return left

    def power(self):
        base = self.atom()
        if self.peek() == ("op", "^", self.peek()[2]):
            self.take()
            return BinOp("^", base, self.power())
        return base

    def metric(self) -> MetricRef:
        k, v, p = self.peek()
        if k == "str":
            name = v[1:-1]
        elif k == "name":
            name = v
        else:
            raise ExpressionError(self.text, p, "expected a metric name")
        self.i += 1
        sel = ()
        if self.peek()[0] == "sel":
            _, raw, sp = self.peek()
            self.i += 1
            sel = _selector(raw, self.text, sp)
        return MetricRef(name, sel)

    def atom(self):
        k, v, p = self.peek()
        if k == "num":
            self.i += 1
            return Constant(v[0], v[1])
        if k == "param":
            self.i += 1
            return ConfigRef(v[1:])
        if k == "op" and v == "(":
            self.i += 1
            e = self.expr()
            self.take("op", ")")
            return e
        if k == "name" and self.toks[self.i + 1][:2] == ("op", "("):
            fn = v
            self.i += 2
            if fn == "window":
                agg = self.take("name")
                if agg != "sum":
                    raise ExpressionError(self.text, p, f"unsupported window aggregate {agg!r}")
                self.take("op", ",")
                node = WindowSum(self.metric())
            elif fn == "delta":
                node = Delta(self.metric())
            elif fn == "mean":
                node = Mean(self.metric())
            else:
                raise ExpressionError(self.text, p, f"unknown function {fn!r}")
            self.take("op", ")")
            return node
        if k in ("name", "str"):
            return self.metric()
        raise ExpressionError(self.text, p, "expected a value")


def parse_expression(text: str) -> Expr:
    expr = _ExprParser(text).parse()
    if sum(isinstance(n, WindowSum) for n in walk(expr)) > 1:
        raise ExpressionError(text, 0, "at most one window(sum, ...) per expression")
    return expr


def walk(node: Expr) -> Iterator[Expr]:
    yield node
    if isinstance(node, BinOp):
        yield from walk(node.left)
        yield from walk(node.right)
    elif isinstance(node, (WindowSum, Delta, Mean)):
        yield node.ref


def metric_refs(node: Expr) -> Tuple[MetricRef, ...]:
    seen = []
    for n in walk(node):
        if isinstance(n, MetricRef) and n not in seen:
            seen.append(n)
    return tuple(seen)


def config_refs(node: Expr) -> Tuple[str, ...]:
    seen = []
    for n in walk(node):
        if isinstance(n, ConfigRef) and n.param not in seen:
            seen.append(n.param)
    return tuple(seen)


def classify(node: Expr) -> str:
    """``direct`` for a bare metric, ``windowed`` if stateful, otherwise ``composite``."""
    if isinstance(node, MetricRef):
        return "direct"
    if any(isinstance(n, STATEFUL) for n in walk(node)):
        return "windowed"
    return "composite"


# ---------------------------------------------------------------------------
# dimensional analysis

Dims = FrozenSet[Tuple[str, int]]

_UNIT_DIMS: Dict[str, Dict[str, int]] = {
    "notif/s": {"notification": 1, "time": -1},
    "ms": {"time": 1},
    "s": {"time": 1},
    "pct": {},
    "usd/month": {"usd": 1, "month": -1},
    "count": {},
    "bytes": {"byte": 1},
    "GiB": {"byte": 1},
    "bytes/s": {"byte": 1, "time": -1},
    "ops/s": {"time": -1},
}


def unit_dims(unit) -> Dims:
    if unit is None:
        return frozenset()
    info, _ = resolve_unit(unit)
    return frozenset(_UNIT_DIMS[info.name].items())


def _combine(a: Dims, b: Dims, sign: int) -> Dims:
    out = dict(a)
    for k, v in b:
        out[k] = out.get(k, 0) + sign * v
    return frozenset((k, v) for k, v in out.items() if v)


def _fmt(d: Dims) -> str:
    return "*".join(f"{k}^{v}" for k, v in sorted(d)) or "dimensionless"


def infer_dims(node: Expr, units: Mapping[str, str]) -> Dims:
    """Dimension of `node`, given the unit of every metric and ``$param``.

    Only dimensions are tracked; scale factors such as the 2^30 in a GiB to
    bytes conversion are the expression author's responsibility.
    """
    if isinstance(node, Constant):
        return unit_dims(node.unit)
    if isinstance(node, MetricRef):
        if node.name not in units:
            raise UnitMismatch(f"no unit declared for metric {node.name}")
        return unit_dims(units[node.name])
    if isinstance(node, ConfigRef):
        key = "$" + node.param
        if key not in units:
            raise UnitMismatch(f"no unit declared for parameter {key}")
        return unit_dims(units[key])
    if isinstance(node, (WindowSum, Delta, Mean)):
        return infer_dims(node.ref, units)
    left = infer_dims(node.left, units)
    right = infer_dims(node.right, units)
    if node.op in "+-":
        if left != right:
            raise UnitMismatch(f"cannot {'add' if node.op == '+' else 'subtract'} {_fmt(left)} and {_fmt(right)} in {node}")
        return left
    if node.op == "*":
        return _combine(left, right, 1)
    if node.op == "/":
        return _combine(left, right, -1)
    if right or not isinstance(node.right, Constant):
        raise UnitMismatch(f"exponent must be a dimensionless constant in {node}")
    n = node.right.value
    if n != int(n):
        raise UnitMismatch(f"exponent must be an integer in {node}")
    return frozenset((k, int(v * n)) for k, v in left if v * n)


def check_units(node: Expr, units: Mapping[str, str], target_unit) -> None:
    got = infer_dims(node, units)
    want = unit_dims(target_unit)
    if got != want:
        raise UnitMismatch(f"{node} has dimension {_fmt(got)}, expected {_fmt(want)} ({target_unit})")
