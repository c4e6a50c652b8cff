"""slabroker: translate SLAs into vendor-neutral metric conditions and monitor
them across cloud providers.

>>> from slabroker import parse_kb, parse_sla, run_translation, data_path
>>> kb = parse_kb(data_path("usecase1.kb").read_text())
>>> sla = parse_sla(data_path("usecase1.sla").read_text())
>>> run_translation(kb, sla).fired_sequence
['R1', 'R3', 'R7', 'R8', 'R13']
"""

from importlib import resources as _resources

from .adapters import (AdapterReport, CloudAdapter, DeploymentConfig, ServiceInstance,
                       format_trace, ingest_trace, load_deployment, parse_deployment,
                       parse_trace, produce_vnm)
from .dsl import (ProductionRule, SlaDocument, parse_conditions, parse_kb, parse_sla,
                  render_atom, render_kb, render_rule, render_sla)
from .errors import *  # noqa: F401,F403
from .expression import parse_expression
from .facts import (Bound, ConstraintFact, NumericConstraint, NumericInterval, Quantity,
                    SetAssignment, SetInsert, SetMembership, SymbolEquality, entails,
                    merge_numeric)
from .inference import (TranslationResult, WorkingMemory, compute_conflict_set, explain,
                        run_translation, select_instantiation)
from .mapping import (ContextPartial, GlobalContext, MetricSample, WindowState,
                      accumulate_window, aggregate_context, align, evaluate)
from .monitor import ViolationReport, check_conditions
from .registry import (MappingSpec, RegionRow, Registry, VnmDescriptor, default_registry,
                       load_registry)

__version__ = "0.1.0"


def data_path(name: str):
    """Path of a file shipped in the package's data directory."""
    return _resources.files(__name__) / "data" / name
