"""Small helpers shared by the test modules."""

from slabroker import data_path, parse_kb, parse_sla
from slabroker.dsl import render_atom
from slabroker.registry import default_registry

REL_TOL = 1e-9


def usecase(n):
    kb = parse_kb(data_path(f"usecase{n}.kb").read_text(encoding="utf-8"))
    sla = parse_sla(data_path(f"usecase{n}.sla").read_text(encoding="utf-8"))
    return kb, sla


def usecase_paths(n):
    return str(data_path(f"usecase{n}.kb")), str(data_path(f"usecase{n}.sla"))


def rendered(facts):
    return [render_atom(f.atom) for f in facts]


def registry():
    return default_registry()


def close(a, b, rel=REL_TOL):
    return abs(a - b) <= rel * max(abs(a), abs(b), 1e-300)
