"""File-driven cloud adapters: deployment configs in, vendor-neutral samples out.

Deployment config (``.cfg``, INI syntax, keys are case-sensitive)::

    [adapter]
    id = aws-eu              # unique among the adapters being monitored
    provider = aws           # aws | gcp | azure | collectd

    [service db1]            # one section per service instance; db1 is its id
    service_type = mysql     # block_storage | object_storage | postgresql | mysql | compute
    region = eu-central-1    # provider region, resolved through the region table
    monthly_cost = 90        # usd/month, >= 0
    TotalMemory_GiB = 8      # any other key is a numeric deployment parameter

Metric trace (``.csv``)::

    timestamp,provider,instance,metric,dimensions,value,unit,period

``timestamp`` is in seconds, ``dimensions`` is ``k=v;k=v`` (empty for none),
``unit`` is a registered unit spelling and ``period`` (> 0) the sampling period
in seconds.  The header line is optional; blank lines and ``#`` lines are
ignored.  Fields containing commas may be double-quoted.
"""

from __future__ import annotations

import configparser
import csv
import io
import math
import os
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, Iterable, List, Mapping, Optional, Tuple, Union

from .errors import (MappingError, NegativeCost, NonFiniteValue, SchemaError, UnknownRegion,
                     UnknownUnit)
from .facts import resolve_unit
from .mapping import (ContextPartial, MetricSample, OUT_OF_RANGE, WindowState, align,
                      evaluate_series, sort_samples)
from .registry import IAAS_SERVICE, PROVIDERS, SERVICE_TYPES, Registry, default_registry

TRACE_COLUMNS = ("timestamp", "provider", "instance", "metric", "dimensions", "value", "unit", "period")
TRACE_HEADER = ",".join(TRACE_COLUMNS)

PathOrText = Union[str, os.PathLike]


@dataclass(frozen=True)
class ServiceInstance:
    instance_id: str
    service_type: str
    region: str
    monthly_cost: float
    params: Tuple[Tuple[str, float], ...] = ()

    @property
    def config(self) -> Dict[str, float]:
        return dict(self.params)


@dataclass(frozen=True)
class DeploymentConfig:
    adapter_id: str
    provider: str
    services: Tuple[ServiceInstance, ...]
    source: str = ""

    def service(self, instance_id: str) -> Optional[ServiceInstance]:
        return next((s for s in self.services if s.instance_id == instance_id), None)


def _read(source) -> Tuple[str, str]:
    """(name, text) for a path; raise SchemaError on unreadable or non-UTF-8 files."""
    name = str(source)
    try:
        return name, Path(source).read_text(encoding="utf-8")
    except UnicodeDecodeError as e:
        raise SchemaError(name, 0, f"not UTF-8 text ({e.reason})") from None
    except OSError as e:
        raise SchemaError(name, 0, e.strerror or str(e)) from None


def _section_line(text: str, section: str) -> int:
    pat = re.compile(r"^\s*\[" + re.escape(section) + r"\]\s*$")
    for i, line in enumerate(text.splitlines(), 1):
        if pat.match(line):
            return i
    return 0


def _number(name, line, key, raw) -> float:
    try:
        v = float(raw)
    except ValueError:
        raise SchemaError(name, line, f"{key} must be a number, got {raw!r}") from None
    if not math.isfinite(v):
        raise NonFiniteValue(name, line, f"{key} must be finite, got {raw!r}")
    return v


def parse_deployment(text: str, name: str = "<config>", registry: Optional[Registry] = None) -> DeploymentConfig:
    registry = registry or default_registry()
    cp = configparser.ConfigParser(interpolation=None, strict=True, inline_comment_prefixes=("#", ";"))
    cp.optionxform = str
    try:
        cp.read_string(text, source=name)
    except configparser.DuplicateSectionError as e:
        raise SchemaError(name, e.lineno or 0, f"section [{e.section}] appears twice") from None
    except configparser.DuplicateOptionError as e:
        raise SchemaError(name, e.lineno or 0, f"key {e.option!r} repeated in [{e.section}]") from None
    except configparser.Error as e:
        line = getattr(e, "lineno", 0) or 0
        raise SchemaError(name, line, e.message.splitlines()[0]) from None

    if not cp.has_section("adapter"):
        raise SchemaError(name, 0, "missing [adapter] section")
    head = cp["adapter"]
    hline = _section_line(text, "adapter")
    for key in ("id", "provider"):
        if not head.get(key):
            raise SchemaError(name, hline, f"[adapter] lacks {key}")
    provider = head["provider"].strip()
    if provider not in PROVIDERS:
        raise SchemaError(name, hline, f"unknown provider {provider!r}")
    extra = sorted(set(head) - {"id", "provider"})
    if extra:
        raise SchemaError(name, hline, f"unknown key {extra[0]!r} in [adapter]")

    services = []
    for sec in cp.sections():
        if sec == "adapter":
            continue
        line = _section_line(text, sec)
        m = re.fullmatch(r"service\s+(\S+)", sec)
        if not m:
            raise SchemaError(name, line, f"unknown section [{sec}]")
        inst = m.group(1)
        body = cp[sec]
        for key in ("service_type", "region", "monthly_cost"):
            if key not in body:
                raise SchemaError(name, line, f"[{sec}] lacks {key}")
        stype = body["service_type"].strip()
        allowed = (IAAS_SERVICE,) if provider == "collectd" else SERVICE_TYPES
        if stype not in allowed:
            raise SchemaError(name, line, f"service type {stype!r} is not offered by {provider}")
        region = body["region"].strip()
        if provider != "collectd":
            registry.map_region(provider, region)  # raises UnknownRegion
        else:
            _collectd_region(registry, region)
        cost = _number(name, line, "monthly_cost", body["monthly_cost"])
        if cost < 0:
            raise NegativeCost(name, line, f"monthly_cost of {inst} is negative ({cost:g})")
        params = tuple(sorted((k, _number(name, line, k, v)) for k, v in body.items()
                              if k not in ("service_type", "region", "monthly_cost")))
        services.append(ServiceInstance(inst, stype, region, cost, params))
    return DeploymentConfig(head["id"].strip(), provider, tuple(services), name)


def _collectd_region(registry: Registry, region: str) -> Tuple[str, str, str]:
    """collectd instances run on some provider's VMs; their region is written
    ``<provider>:<provider region>``, e.g. ``aws:eu-central-1``."""
    provider, sep, rest = region.partition(":")
    if not sep:
        raise UnknownRegion("collectd", region)
    return registry.map_region(provider, rest)


def load_deployment(path: PathOrText, registry: Optional[Registry] = None) -> DeploymentConfig:
    name, text = _read(path)
    return parse_deployment(text, name, registry)


def region_triple(config: DeploymentConfig, service: ServiceInstance, registry: Registry):
    if config.provider == "collectd":
        return _collectd_region(registry, service.region)
    return registry.map_region(config.provider, service.region)


# ---------------------------------------------------------------------------
# traces

def parse_dimensions(field_: str) -> Tuple[Tuple[str, str], ...]:
    field_ = field_.strip()
    if not field_:
        return ()
    out = {}
    for part in field_.split(";"):
        k, sep, v = part.partition("=")
        if not sep or not k.strip():
            raise ValueError(f"dimension {part!r} is not k=v")
        if k.strip() in out:
            raise ValueError(f"dimension {k.strip()!r} repeated")
        out[k.strip()] = v.strip()
    return tuple(sorted(out.items()))


def format_dimensions(dims) -> str:
    return ";".join(f"{k}={v}" for k, v in dims)


def parse_trace(text: str, name: str = "<trace>") -> List[MetricSample]:
    samples = []
    reader = csv.reader(io.StringIO(text))
    for row in reader:
        line = reader.line_num
        if not row or (len(row) == 1 and not row[0].strip()) or row[0].lstrip().startswith("#"):
            continue
        if tuple(c.strip() for c in row) == TRACE_COLUMNS:
            continue
        if len(row) != len(TRACE_COLUMNS):
            raise SchemaError(name, line, f"expected {len(TRACE_COLUMNS)} fields, got {len(row)}")
        ts, provider, inst, metric, dims, value, unit, period = (c.strip() for c in row)
        t = _number(name, line, "timestamp", ts)
        v = _number(name, line, "value", value)
        p = _number(name, line, "period", period)
        if p <= 0:
            raise SchemaError(name, line, f"period must be positive, got {period}")
        if not provider or not inst or not metric:
            raise SchemaError(name, line, "provider, instance and metric must be non-empty")
        try:
            resolve_unit(unit)
        except UnknownUnit:
            raise SchemaError(name, line, f"unknown unit {unit!r}") from None
        try:
            d = parse_dimensions(dims)
        except ValueError as e:
            raise SchemaError(name, line, str(e)) from None
        samples.append(MetricSample(t, provider, inst, metric, d, v, unit, p))
    return sort_samples(samples)


def ingest_trace(path: PathOrText) -> List[MetricSample]:
    name, text = _read(path)
    return parse_trace(text, name)


def _fmt_num(v: float) -> str:
    v = float(v)
    return str(int(v)) if v.is_integer() and abs(v) < 1e16 else repr(v)


def format_sample(s: MetricSample) -> str:
    dims = list(s.dimensions) + [("flag", f) for f in s.flags]
    buf = io.StringIO()
    csv.writer(buf, lineterminator="").writerow([
        _fmt_num(s.timestamp), s.provider, s.instance, s.metric, format_dimensions(dims),
        _fmt_num(s.value), s.unit, _fmt_num(s.period)])
    return buf.getvalue()


def format_trace(samples: Iterable[MetricSample]) -> str:
    return "\n".join([TRACE_HEADER] + [format_sample(s) for s in samples]) + "\n"


# ---------------------------------------------------------------------------
# adapters

@dataclass
class AdapterReport:
    adapter_id: str
    samples: List[MetricSample] = field(default_factory=list)
    context: ContextPartial = None
    warnings: List[str] = field(default_factory=list)


def context_partial(config: DeploymentConfig, registry: Optional[Registry] = None) -> ContextPartial:
    registry = registry or default_registry()
    triples = [region_triple(config, s, registry) for s in config.services]
    return ContextPartial(
        config.adapter_id,
        regions=frozenset(t[0] for t in triples),
        countries=frozenset(t[1] for t in triples),
        continents=frozenset(t[2] for t in triples),
        total_cost=math.fsum(s.monthly_cost for s in config.services),
    )


class CloudAdapter:
    """One adapter for one deployment.  Window and counter state survives
    between `feed` calls, so feeding a trace in consecutive time slices gives
    the same samples as feeding it whole."""

    def __init__(self, config: DeploymentConfig, registry: Optional[Registry] = None):
        self.config = config
        self.registry = registry or default_registry()
        self._states: Dict[Tuple[str, str], WindowState] = {}
        self.context = context_partial(config, self.registry)

    def feed(self, samples: Iterable[MetricSample]) -> Tuple[List[MetricSample], List[str]]:
        samples = list(samples)
        warnings: List[str] = []
        by_inst: Dict[str, List[MetricSample]] = {}
        for s in samples:
            if s.provider != self.config.provider:
                warnings.append(f"ignored {s.metric} of {s.instance}: provider {s.provider} "
                                f"is not {self.config.provider}")
                continue
            by_inst.setdefault(s.instance, []).append(s)
        unknown = sorted(set(by_inst) - {svc.instance_id for svc in self.config.services})
        for inst in unknown:
            warnings.append(f"ignored samples of {inst}: not configured in {self.config.adapter_id}")
        out: List[MetricSample] = []
        for svc in self.config.services:
            mine = by_inst.get(svc.instance_id)
            if not mine:
                continue
            for spec in self.registry.mappings_for(self.config.provider, svc.service_type):
                state = self._states.setdefault((svc.instance_id, spec.vnm), WindowState())
                al = align(mine, spec)
                warnings.extend(al.warnings)
                for bucket in al.buckets:
                    try:
                        for vs in evaluate_series(spec, bucket, svc.config, state, self.config.provider):
                            out.append(vs)
                            if OUT_OF_RANGE in vs.flags:
                                warnings.append(f"{spec.vnm} of {svc.instance_id} at t={vs.timestamp:g} "
                                                f"is out of range ({vs.value:g} {vs.unit})")
                    except MappingError as e:
                        warnings.append(f"{spec.vnm} of {svc.instance_id} at t={bucket.timestamp:g}: {e}")
        return sort_samples(out), warnings

    def report(self, samples: Iterable[MetricSample]) -> AdapterReport:
        vnm, warnings = self.feed(samples)
        return AdapterReport(self.config.adapter_id, vnm, self.context, warnings)


def produce_vnm(config: DeploymentConfig, samples: Iterable[MetricSample],
                registry: Optional[Registry] = None) -> AdapterReport:
    return CloudAdapter(config, registry).report(samples)
