"""Evaluation of mapping expressions over time-aligned provider samples.

Samples of one service instance are grouped into buckets whose width is the
largest sampling period among the metrics an expression references.  Inside
a bucket a plain metric reference reads the latest sample of every matching
series and sums them; ``window(sum, m)`` adds every increment seen and keeps
a running total; ``delta(m)`` is the change of a cumulative counter since the
previous bucket.

Metric names may carry collectd placeholders (``#``, ``<dn>``, ``<int>``).
The matching dimensions (``cpu``, ``disk``, ``interface``) identify separate
entities, so a direct mapping of such a metric yields one output per entity
and ``mean`` averages across them.
"""

from __future__ import annotations

import math
from collections import defaultdict
from dataclasses import dataclass, field
from typing import Dict, Iterable, List, Mapping, Optional, Sequence, Tuple

from .errors import (DimensionMismatch, DivisionByZero, InsufficientHistory, MappingError, MissingConfig,
                     MissingMetric, OutOfOrderSample, UnknownUnit)
from .expression import (BinOp, ConfigRef, Constant, Delta, Mean, MetricRef, WindowSum,
                         metric_refs)
from .facts import convert

PLACEHOLDER_DIMS = {"#": "cpu", "<dn>": "disk", "<int>": "interface"}
OUT_OF_RANGE = "out_of_range"

Dims = Tuple[Tuple[str, str], ...]


def _dims(d) -> Dims:
    if isinstance(d, Mapping):
        d = d.items()
    return tuple(sorted((str(k), str(v)) for k, v in d))


@dataclass(frozen=True)
class MetricSample:
    timestamp: float
    provider: str
    instance: str
    metric: str
    dimensions: Dims
    value: float
    unit: str
    period: float
    flags: Tuple[str, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "dimensions", _dims(self.dimensions))
        if not math.isfinite(self.value):
            raise ValueError(f"sample value must be finite, got {self.value}")
        if not (self.period > 0):
            raise ValueError(f"sample period must be positive, got {self.period}")

    @property
    def dims(self) -> Dict[str, str]:
        return dict(self.dimensions)

    @property
    def series(self) -> Tuple[str, str, Dims]:
        return (self.instance, self.metric, self.dimensions)


def sort_samples(samples: Iterable[MetricSample]) -> List[MetricSample]:
    return sorted(samples, key=lambda s: (s.timestamp, s.instance, s.metric, s.dimensions))


# ---------------------------------------------------------------------------
# window state

class WindowState:
    """Running totals and last counter readings, keyed per series.

    One state object belongs to one mapping spec; sharing it between specs
    that read the same series would count every increment twice.
    """

    def __init__(self):
        self.totals: Dict[tuple, float] = {}
        self.last_ts: Dict[tuple, float] = {}
        self.counters: Dict[tuple, float] = {}

    def _check_order(self, key, ts):
        last = self.last_ts.get(key)
        if last is not None and ts < last:
            raise OutOfOrderSample(f"sample for {key} at t={ts} arrived after t={last}")

    def add(self, key, ts: float, increment: float) -> float:
        self._check_order(key, ts)
        self.totals[key] = self.totals.get(key, 0.0) + increment
        self.last_ts[key] = ts
        return self.totals[key]

    def swap_counter(self, key, ts: float, reading: float) -> Optional[float]:
        """Store a counter reading and return the previous one (None at first)."""
        self._check_order(key, ts)
        prev = self.counters.get(key)
        self.counters[key] = reading
        self.last_ts[key] = ts
        return prev


def accumulate_window(state: WindowState, sample: MetricSample) -> float:
    return state.add(sample.series, sample.timestamp, sample.value)


# ---------------------------------------------------------------------------
# buckets

@dataclass(frozen=True)
class Bucket:
    instance: str
    timestamp: float
    width: float
    samples: Tuple[MetricSample, ...]


@dataclass
class Alignment:
    buckets: List[Bucket] = field(default_factory=list)
    skipped: int = 0
    warnings: List[str] = field(default_factory=list)


def _split_keys(ref: MetricRef) -> Tuple[str, ...]:
    return tuple(dim for ph, dim in PLACEHOLDER_DIMS.items() if ph in ref.name)


def align(samples: Iterable[MetricSample], spec) -> Alignment:
    """Group the samples `spec` references into complete per-instance buckets."""
    refs = metric_refs(spec.expression)
    relevant = [s for s in samples if any(r.matches(s.metric, s.dims) for r in refs)]
    by_instance: Dict[str, List[MetricSample]] = defaultdict(list)
    for s in relevant:
        by_instance[s.instance].append(s)
    out = Alignment()
    for inst in sorted(by_instance):
        group = sort_samples(by_instance[inst])
        width = max(s.period for s in group)
        slots: Dict[int, List[MetricSample]] = defaultdict(list)
        for s in group:
            slots[math.floor(s.timestamp / width)].append(s)
        for idx in sorted(slots):
            content = slots[idx]
            missing = [r for r in refs if not any(r.matches(s.metric, s.dims) for s in content)]
            ts = idx * width
            if missing:
                out.skipped += 1
                out.warnings.append(
                    f"{spec.vnm}: skipped bucket t={ts:g} of {inst}: no sample for {missing[0]}")
                continue
            out.buckets.append(Bucket(inst, ts, width, tuple(content)))
    return out


# ---------------------------------------------------------------------------
# evaluation

def _latest_per_series(ref: MetricRef, samples: Sequence[MetricSample]) -> Dict[Dims, MetricSample]:
    latest: Dict[Dims, MetricSample] = {}
    for s in samples:
        if ref.matches(s.metric, s.dims):
            prev = latest.get(s.dimensions)
            if prev is None or s.timestamp >= prev.timestamp:
                latest[s.dimensions] = s
    return latest


class _Evaluator:
    def __init__(self, spec, bucket: Bucket, config: Mapping[str, float], state: WindowState):
        self.spec = spec
        self.bucket = bucket
        self.config = config
        self.state = state
        self.units = dict(spec.input_units)

    def value_of(self, s: MetricSample, ref: MetricRef) -> float:
        try:
            return convert(s.value, s.unit, self.units.get(ref.name, s.unit))
        except (DimensionMismatch, UnknownUnit) as e:
            raise MappingError(f"{s.metric} at t={s.timestamp:g}: {e}") from None

    def ev(self, node) -> float:
        if isinstance(node, Constant):
            return node.value
        if isinstance(node, ConfigRef):
            if node.param not in self.config:
                raise MissingConfig(node.param)
            return float(self.config[node.param])
        if isinstance(node, MetricRef):
            latest = _latest_per_series(node, self.bucket.samples)
            if not latest:
                raise MissingMetric(str(node))
            return math.fsum(self.value_of(s, node) for s in latest.values())
        if isinstance(node, Mean):
            ref = node.ref
            latest = _latest_per_series(ref, self.bucket.samples)
            if not latest:
                raise MissingMetric(str(ref))
            keys = _split_keys(ref)
            groups: Dict[tuple, float] = defaultdict(float)
            for d, s in latest.items():
                groups[tuple(dict(d).get(k) for k in keys)] += self.value_of(s, ref)
            return math.fsum(groups.values()) / len(groups)
        if isinstance(node, WindowSum):
            ref = node.ref
            matched = [s for s in self.bucket.samples if ref.matches(s.metric, s.dims)]
            if not matched:
                raise MissingMetric(str(ref))
            for s in sort_samples(matched):
                self.state.add(s.series, s.timestamp, self.value_of(s, ref))
            inst = self.bucket.instance
            return math.fsum(total for (i, name, d), total in self.state.totals.items()
                             if i == inst and ref.matches(name, dict(d)))
        if isinstance(node, Delta):
            ref = node.ref
            latest = _latest_per_series(ref, self.bucket.samples)
            if not latest:
                raise MissingMetric(str(ref))
            reading = math.fsum(self.value_of(s, ref) for s in latest.values())
            prev = self.state.swap_counter(("delta", self.bucket.instance, ref), self.bucket.timestamp, reading)
            if prev is None:
                raise InsufficientHistory(f"{ref} needs a previous bucket before t={self.bucket.timestamp:g}")
            return reading - prev
        if isinstance(node, BinOp):
            # both sides run even if one lacks history, so every counter gets recorded
            try:
                a = self.ev(node.left)
            except InsufficientHistory:
                self.ev(node.right)
                raise
            b = self.ev(node.right)
            if node.op == "+":
                return a + b
            if node.op == "-":
                return a - b
            if node.op == "*":
                return a * b
            if node.op == "/":
                if b == 0:
                    raise DivisionByZero(f"division by zero in {node} at t={self.bucket.timestamp:g}")
                return a / b
            return a ** b
        raise TypeError(f"not an expression node: {node!r}")


def evaluate(spec, bucket: Bucket, config: Mapping[str, float], state: WindowState,
             provider: Optional[str] = None, dimensions: Dims = ()) -> MetricSample:
    """Compute one vendor-neutral sample from a complete bucket."""
    for ref in metric_refs(spec.expression):
        if not any(ref.matches(s.metric, s.dims) for s in bucket.samples):
            raise MissingMetric(str(ref))
    value = _Evaluator(spec, bucket, config, state).ev(spec.expression)
    if not math.isfinite(value):
        raise MappingError(f"{spec.vnm} evaluated to {value} at t={bucket.timestamp:g}")
    flags = ()
    if spec.unit == "pct" and not (0.0 <= value <= 100.0):
        flags = (OUT_OF_RANGE,)
    return MetricSample(bucket.timestamp, provider or spec.provider, bucket.instance, spec.vnm,
                        dimensions, value, spec.unit, bucket.width, flags)


def evaluate_series(spec, bucket: Bucket, config: Mapping[str, float], state: WindowState,
                    provider: Optional[str] = None) -> List[MetricSample]:
    """Like `evaluate`, but a direct mapping of a placeholder metric gives one
    sample per entity (core, disk, interface), labelled with its dimension."""
    ref = spec.expression
    keys = _split_keys(ref) if isinstance(ref, MetricRef) else ()
    if not keys:
        return [evaluate(spec, bucket, config, state, provider)]
    parts: Dict[Dims, List[MetricSample]] = defaultdict(list)
    for s in bucket.samples:
        d = s.dims
        parts[tuple((k, d[k]) for k in keys if k in d)].append(s)
    return [evaluate(spec, Bucket(bucket.instance, bucket.timestamp, bucket.width, tuple(ss)),
                     config, state, provider, dims)
            for dims, ss in sorted(parts.items())]


# ---------------------------------------------------------------------------
# context aggregation

@dataclass(frozen=True)
class ContextPartial:
    """What one adapter knows about its own deployment."""

    adapter_id: str
    regions: frozenset = frozenset()
    countries: frozenset = frozenset()
    continents: frozenset = frozenset()
    total_cost: float = 0.0

    def __post_init__(self):
        for f in ("regions", "countries", "continents"):
            object.__setattr__(self, f, frozenset(getattr(self, f)))


@dataclass(frozen=True)
class GlobalContext:
    regions: frozenset
    countries: frozenset
    continents: frozenset
    total_cost: float

    @property
    def number_regions(self) -> int:
        return len(self.regions)

    @property
    def number_countries(self) -> int:
        return len(self.countries)

    @property
    def number_continents(self) -> int:
        return len(self.continents)

    def metrics(self) -> Dict[str, object]:
        return {
            "regions": self.regions,
            "countries": self.countries,
            "continents": self.continents,
            "number_regions": self.number_regions,
            "number_countries": self.number_countries,
            "number_continents": self.number_continents,
            "total_cost": self.total_cost,
        }


def aggregate_context(partials: Iterable[ContextPartial]) -> GlobalContext:
    """Union the location sets and sum the costs of distinct adapters.

    A report repeated under the same adapter id counts once; two different
    reports under one id are an error, since keeping either would make the
    result depend on arrival order.
    """
    seen: Dict[str, ContextPartial] = {}
    for p in partials:
        old = seen.get(p.adapter_id)
        if old is not None and old != p:
            raise ValueError(f"conflicting context reports for adapter {p.adapter_id!r}")
        seen[p.adapter_id] = p
    ps = [seen[k] for k in sorted(seen)]
    return GlobalContext(
        regions=frozenset().union(*(p.regions for p in ps)),
        countries=frozenset().union(*(p.countries for p in ps)),
        continents=frozenset().union(*(p.continents for p in ps)),
        total_cost=math.fsum(p.total_cost for p in ps),
    )
