"""Vendor-neutral metric catalog, provider mapping specs and region table.

Everything is loaded from tab-separated files (see ``data/``).  The first
non-comment line of each file is its header; ``#`` starts a comment line.
File names select the table:

``vnm_iaas.tsv``            name, unit, plugin, description
``vnm_paas_<service>.tsv``  name, unit, description
``vnm_context.tsv``         name, unit, aggregation, description
``mappings_<provider>.tsv`` vnm, service_type, class, expression, inputs
``regions.tsv``             provider, provider_region, vn_region, country, continent, location
"""

from __future__ import annotations

import os
import re
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Dict, Iterable, List, Mapping, Optional, Tuple, Union

from .errors import (DuplicateEntry, NotMapped, SchemaError, UnitMismatch, UnknownMetric,
                     UnknownRegion, UnknownUnit)
from .expression import (ExpressionError, check_units, classify, config_refs, metric_refs,
                         parse_expression)
from .facts import resolve_unit

TIERS = ("IaaS", "PaaS", "Context")
SERVICE_TYPES = ("block_storage", "object_storage", "postgresql", "mysql")
PROVIDERS = ("aws", "gcp", "azure", "collectd")
VN_REGIONS = ("US_EAST", "US_WEST", "CANADA", "SOUTH_AMERICA", "EU_CENTRAL",
              "EU_WEST", "EU_NORTH", "AP_NORTH", "AP_SOUTH")
IAAS_SERVICE = "compute"


@dataclass(frozen=True)
class VnmDescriptor:
    name: str
    tier: str
    unit: Optional[str]  # None for symbol-set context metrics
    description: str = ""
    service_types: Tuple[str, ...] = ()  # PaaS only
    aggregation: Optional[str] = None  # Context only

    @property
    def service_type(self) -> Optional[str]:
        return self.service_types[0] if len(self.service_types) == 1 else None


@dataclass(frozen=True)
class MappingSpec:
    vnm: str
    provider: str
    service_type: str
    expression: object
    kind: str  # direct | composite | windowed
    unit: str
    input_units: Tuple[Tuple[str, str], ...] = ()
    source: str = ""

    @property
    def config_params(self) -> Tuple[str, ...]:
        return config_refs(self.expression)

    @property
    def metrics(self):
        return metric_refs(self.expression)

    def input_unit(self, name: str) -> str:
        return dict(self.input_units)[name]


@dataclass(frozen=True)
class RegionRow:
    provider: str
    provider_region: str
    vn_region: str
    country: str
    continent: str
    location: str = ""

    @property
    def triple(self) -> Tuple[str, str, str]:
        return (self.vn_region, self.country, self.continent)


@dataclass
class Registry:
    vnms: Dict[Tuple[str, str], VnmDescriptor] = field(default_factory=dict)
    mappings: Dict[Tuple[str, str, str], MappingSpec] = field(default_factory=dict)
    regions: Dict[Tuple[str, str], RegionRow] = field(default_factory=dict)

    # -- catalog ------------------------------------------------------------

    def is_vnm(self, name: str) -> bool:
        return any(n == name for n, _ in self.vnms)

    def descriptors(self, name: str) -> List[VnmDescriptor]:
        return [d for (n, _), d in self.vnms.items() if n == name]

    def lookup(self, name: str, tier: Optional[str] = None) -> VnmDescriptor:
        """Descriptor of `name`; `tier` is needed only for names defined in two tiers
        (memory_usage is a percentage in IaaS and a byte count in PaaS)."""
        found = [d for d in self.descriptors(name) if tier is None or d.tier == tier]
        if not found:
            raise UnknownMetric(f"{name!r} is not a vendor-neutral metric"
                                + (f" of tier {tier}" if tier else ""))
        if len(found) > 1:
            tiers = ", ".join(d.tier for d in found)
            raise UnknownMetric(f"{name!r} is defined in tiers {tiers}; pass tier=")
        return found[0]

    def descriptor_for(self, name: str, service_type: str) -> VnmDescriptor:
        """The descriptor a given service type produces for `name`."""
        tier = "IaaS" if service_type == IAAS_SERVICE else "PaaS"
        d = self.lookup(name, tier)
        if tier == "PaaS" and service_type not in d.service_types:
            raise UnknownMetric(f"{name!r} is not defined for service type {service_type}")
        return d

    def names(self, tier: Optional[str] = None) -> List[str]:
        return sorted({n for (n, t) in self.vnms if tier is None or t == tier})

    def service_vnms(self, service_type: str) -> List[str]:
        return sorted(n for (n, t), d in self.vnms.items()
                      if t == "PaaS" and service_type in d.service_types)

    # -- mappings -----------------------------------------------------------

    def mapping_for(self, vnm: str, provider: str, service_type: str) -> MappingSpec:
        if not self.is_vnm(vnm):
            raise UnknownMetric(f"{vnm!r} is not a vendor-neutral metric")
        try:
            return self.mappings[(vnm, provider, service_type)]
        except KeyError:
            raise NotMapped(f"{vnm} has no mapping for {provider}/{service_type}") from None

    def mappings_for(self, provider: str, service_type: str) -> List[MappingSpec]:
        return [m for (v, p, s), m in sorted(self.mappings.items())
                if p == provider and s == service_type]

    # -- regions ------------------------------------------------------------

    def map_region(self, provider: str, provider_region: str) -> Tuple[str, str, str]:
        return self.region_row(provider, provider_region).triple

    def region_row(self, provider: str, provider_region: str) -> RegionRow:
        try:
            return self.regions[(provider, provider_region)]
        except KeyError:
            raise UnknownRegion(provider, provider_region) from None

    def canonical_region(self, symbol: str) -> Optional[str]:
        """Vocabulary spelling of a vendor-neutral region, ignoring case."""
        up = symbol.upper()
        return up if up in VN_REGIONS else None


# ---------------------------------------------------------------------------
# loading

def _rows(path: Path, text: str, columns: Tuple[str, ...]):
    """Yield (line number, dict) for every data row of a TSV table."""
    header = None
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.rstrip("\r")
        if not line.strip() or line.lstrip().startswith("#"):
            continue
        cells = [c.strip() for c in line.split("\t")]
        if header is None:
            if tuple(cells) != columns:
                raise SchemaError(path, lineno, f"header must be {' | '.join(columns)}, got {' | '.join(cells)}")
            header = cells
            continue
        if len(cells) != len(columns):
            raise SchemaError(path, lineno, f"expected {len(columns)} columns, got {len(cells)}")
        if any(c == "" for c in cells[:-1]):
            raise SchemaError(path, lineno, "empty cell")
        yield lineno, dict(zip(columns, cells))
    if header is None:
        raise SchemaError(path, 1, "missing header")


def _unit(path, lineno, unit, allow_none=False):
    if allow_none and unit == "-":
        return None
    try:
        info, mult = resolve_unit(unit)
    except UnknownUnit:
        raise SchemaError(path, lineno, f"unknown unit {unit!r}") from None
    if mult != 1.0:
        raise SchemaError(path, lineno, f"prefixed unit {unit!r} not allowed here")
    return info.name


class _Loader:
    def __init__(self):
        self.reg = Registry()
        self._where: Dict[object, str] = {}
        self._pending_mappings = []

    def _add_vnm(self, path, lineno, name, tier, unit, description, service=None, aggregation=None):
        key = (name, tier)
        old = self.reg.vnms.get(key)
        if old is None:
            self.reg.vnms[key] = VnmDescriptor(name, tier, unit, description,
                                               (service,) if service else (), aggregation)
            self._where[key] = f"{path}:{lineno}"
            return
        if tier != "PaaS" or service in old.service_types:
            raise DuplicateEntry(f"{path}:{lineno}: {tier} metric {name} already defined at {self._where[key]}")
        if old.unit != unit:
            raise UnitMismatch(f"{path}:{lineno}: {name} has unit {unit}, but {old.unit} at {self._where[key]}")
        self.reg.vnms[key] = VnmDescriptor(name, tier, unit, old.description or description,
                                           tuple(sorted(old.service_types + (service,))))

    def iaas(self, path, text):
        for ln, r in _rows(path, text, ("name", "unit", "plugin", "description")):
            self._add_vnm(path, ln, r["name"], "IaaS", _unit(path, ln, r["unit"]), r["description"])

    def paas(self, path, text, service):
        if service not in SERVICE_TYPES:
            raise SchemaError(path, 0, f"unknown service type {service!r}")
        for ln, r in _rows(path, text, ("name", "unit", "description")):
            self._add_vnm(path, ln, r["name"], "PaaS", _unit(path, ln, r["unit"]), r["description"], service)

    def context(self, path, text):
        for ln, r in _rows(path, text, ("name", "unit", "aggregation", "description")):
            agg = r["aggregation"]
            if not (agg in ("union", "sum") or re.fullmatch(r"card:\w+", agg)):
                raise SchemaError(path, ln, f"unknown aggregation {agg!r}")
            unit = _unit(path, ln, r["unit"], allow_none=True)
            if (agg == "union") != (unit is None):
                raise SchemaError(path, ln, "set metrics take unit '-' and only they do")
            self._add_vnm(path, ln, r["name"], "Context", unit, r["description"], aggregation=agg)

    def regions(self, path, text):
        cols = ("provider", "provider_region", "vn_region", "country", "continent", "location")
        for ln, r in _rows(path, text, cols):
            if r["provider"] not in PROVIDERS[:3]:
                raise SchemaError(path, ln, f"unknown provider {r['provider']!r}")
            if r["vn_region"] not in VN_REGIONS:
                raise SchemaError(path, ln, f"{r['vn_region']!r} is not a vendor-neutral region")
            key = (r["provider"], r["provider_region"])
            if key in self.reg.regions:
                raise DuplicateEntry(f"{path}:{ln}: region {key[1]} of {key[0]} listed twice")
            self.reg.regions[key] = RegionRow(**r)

    def mappings(self, path, text, provider):
        if provider not in PROVIDERS:
            raise SchemaError(path, 0, f"unknown provider {provider!r}")
        cols = ("vnm", "service_type", "class", "expression", "inputs")
        for ln, r in _rows(path, text, cols):
            self._pending_mappings.append((path, ln, provider, r))

    def _resolve_mapping(self, path, ln, provider, r):
        vnm, svc = r["vnm"], r["service_type"]
        if svc == IAAS_SERVICE:
            key = (vnm, "IaaS")
        elif svc in SERVICE_TYPES:
            key = (vnm, "PaaS")
        else:
            raise SchemaError(path, ln, f"unknown service type {svc!r}")
        desc = self.reg.vnms.get(key)
        if desc is None or (key[1] == "PaaS" and svc not in desc.service_types):
            raise SchemaError(path, ln, f"{vnm} is not a vendor-neutral metric of {svc}")
        try:
            expr = parse_expression(r["expression"])
        except ExpressionError as e:
            raise SchemaError(path, ln, str(e)) from None
        units = {}
        for item in r["inputs"].split(";"):
            name, sep, unit = item.rpartition("=")
            if not sep or not name.strip():
                raise SchemaError(path, ln, f"input {item!r} is not name=unit")
            units[name.strip()] = _unit(path, ln, unit.strip())
        declared = {m.name for m in metric_refs(expr)} | {"$" + p for p in config_refs(expr)}
        if declared != set(units):
            missing = sorted(declared - set(units))
            extra = sorted(set(units) - declared)
            raise SchemaError(path, ln, f"inputs do not match the expression (undeclared {missing}, unused {extra})")
        kind = classify(expr)
        if kind != r["class"]:
            raise SchemaError(path, ln, f"class is {r['class']} but the expression is {kind}")
        try:
            check_units(expr, units, desc.unit)
        except UnitMismatch as e:
            raise UnitMismatch(f"{path}:{ln}: {vnm}/{provider}: {e}") from None
        mkey = (vnm, provider, svc)
        if mkey in self.reg.mappings:
            raise DuplicateEntry(f"{path}:{ln}: second mapping of {vnm} for {provider}/{svc}")
        self.reg.mappings[mkey] = MappingSpec(vnm, provider, svc, expr, kind, desc.unit,
                                              tuple(sorted(units.items())), r["expression"])

    def finish(self) -> Registry:
        for item in self._pending_mappings:
            self._resolve_mapping(*item)
        return self.reg


def _dispatch(loader: _Loader, name: str, path, text: str) -> bool:
    if name == "vnm_iaas.tsv":
        loader.iaas(path, text)
    elif name == "vnm_context.tsv":
        loader.context(path, text)
    elif name == "regions.tsv":
        loader.regions(path, text)
    elif m := re.fullmatch(r"vnm_paas_(\w+)\.tsv", name):
        loader.paas(path, text, m.group(1))
    elif m := re.fullmatch(r"mappings_(\w+)\.tsv", name):
        loader.mappings(path, text, m.group(1))
    else:
        return False
    return True


def load_registry(source: Union[None, str, os.PathLike, Iterable] = None) -> Registry:
    """Load a registry.

    `source` is a directory (every recognised ``*.tsv`` in it is read), an
    iterable of file paths, or None for the tables shipped with the package.
    Mapping rows are checked after all catalog files are read, so file order
    does not matter.
    """
    loader = _Loader()
    if source is None:
        root = resources.files("slabroker") / "data"
        for entry in sorted(root.iterdir(), key=lambda p: p.name):
            if entry.name.endswith(".tsv"):
                _dispatch(loader, entry.name, f"data/{entry.name}", entry.read_text(encoding="utf-8"))
        return loader.finish()
    if isinstance(source, (str, os.PathLike)):
        paths = sorted(p for p in Path(source).iterdir() if p.suffix == ".tsv")
    else:
        paths = [Path(p) for p in source]
    for p in paths:
        if not _dispatch(loader, p.name, p, p.read_text(encoding="utf-8")):
            if not isinstance(source, (str, os.PathLike)):
                raise SchemaError(p, 0, "file name does not name a registry table")
    return loader.finish()


_DEFAULT: Optional[Registry] = None


def default_registry() -> Registry:
    """The shipped registry, loaded once."""
    global _DEFAULT
    if _DEFAULT is None:
        _DEFAULT = load_registry()
    return _DEFAULT
