"""``broker`` command line.

    broker translate --kb F --sla F [--trace] [--out F]
    broker monitor --conditions F --deployment F [F ...] --metrics F [F ...]
    broker map --provider P --deployment F --metrics F
    broker regions --provider P --region R

Exit codes: 0 success; 1 bad input (parse error, missing file, unknown
region); 2 contradictory SLA (translate); 3 some condition violated and
4 some condition unevaluated with none violated (monitor).
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path
from typing import List, Optional, Sequence

from .adapters import CloudAdapter, format_trace, ingest_trace, load_deployment
from .dsl import parse_conditions, parse_kb, parse_sla
from .errors import BrokerError, Contradiction, DslError, SchemaError, UnknownRegion
from .inference import explain, run_translation
from .monitor import check_conditions, render_condition
from .registry import PROVIDERS, default_registry

EXIT_OK = 0
EXIT_INPUT = 1
EXIT_CONTRADICTION = 2


class _Fail(Exception):
    def __init__(self, message: str, code: int = EXIT_INPUT):
        self.message = message
        self.code = code


def _read_bytes(path: str) -> bytes:
    try:
        return Path(path).read_bytes()
    except OSError as e:
        raise _Fail(f"{path}: {e.strerror or e}") from None


def _parse(path: str, parser):
    try:
        return parser(_read_bytes(path))
    except DslError as e:
        raise _Fail(f"{path}:{e.line}:{e.col}: {e.message}") from None
    except BrokerError as e:  # e.g. an unknown unit caught by the lexer
        line = getattr(e, "line", None)
        where = f"{path}:{line}:{getattr(e, 'col', 0)}" if line is not None else path
        raise _Fail(f"{where}: {e}") from None


def translate_text(kb_path: str, sla_path: str, trace: bool = False) -> tuple:
    """(conditions text, report text or None) for a KB and an SLA file."""
    kb = _parse(kb_path, parse_kb)
    sla = _parse(sla_path, parse_sla)
    registry = default_registry()
    try:
        result = run_translation(kb, sla, registry)
    except Contradiction as e:
        lines = [f"contradiction: {e}"]
        lines += [f"  asserted by {s}" for s in e.sources]
        raise _Fail("\n".join(lines), EXIT_CONTRADICTION) from None
    except BrokerError as e:
        raise _Fail(str(e)) from None
    conditions = "".join(render_condition(c.atom, registry) + "\n" for c in result.conditions)
    report = None
    if trace:
        ex = explain(result)
        body = [ex.table, "", *ex.narrative, "", *ex.records]
        report = "".join(f"# {line}".rstrip() + "\n" for line in "\n".join(body).splitlines())
    return conditions, report


def cmd_translate(args) -> int:
    conditions, report = translate_text(args.kb, args.sla, args.trace)
    if args.out:
        try:
            Path(args.out).write_text(conditions, encoding="utf-8")
        except OSError as e:
            raise _Fail(f"{args.out}: {e.strerror or e}") from None
        if report:
            sys.stdout.write(report)
    else:
        sys.stdout.write(conditions)
        if report:
            sys.stdout.write(report)
    return EXIT_OK


def _load_configs(paths: Sequence[str]):
    registry = default_registry()
    configs = []
    for p in paths:
        try:
            configs.append(load_deployment(p, registry))
        except UnknownRegion as e:
            raise _Fail(f"{p}: {e}") from None
        except SchemaError as e:
            raise _Fail(str(e)) from None
    ids = [c.adapter_id for c in configs]
    dup = sorted({i for i in ids if ids.count(i) > 1})
    if dup:
        raise _Fail(f"adapter id {dup[0]!r} used by more than one deployment")
    return configs


def _load_samples(paths: Sequence[str]):
    out = []
    for p in paths:
        try:
            out.extend(ingest_trace(p))
        except SchemaError as e:
            raise _Fail(str(e)) from None
    return out


def monitor_text(conditions_path: str, deployments: Sequence[str], metrics: Sequence[str]):
    """(report text, warnings, exit code)."""
    conditions = _parse(conditions_path, parse_conditions)
    configs = _load_configs(deployments)
    samples = _load_samples(metrics)
    registry = default_registry()
    reports = []
    claimed = set()
    for cfg in configs:
        keys = {(cfg.provider, s.instance_id) for s in cfg.services}
        claimed |= keys
        mine = [s for s in samples if (s.provider, s.instance) in keys]
        reports.append(CloudAdapter(cfg, registry).report(mine))
    stray = sorted({(s.provider, s.instance) for s in samples} - claimed)
    report = check_conditions(conditions, reports, registry)
    warnings = [f"samples of {p}/{i} match no deployment" for p, i in stray] + report.warnings
    return report.render(), warnings, report.exit_code


def cmd_monitor(args) -> int:
    text, warnings, code = monitor_text(args.conditions, args.deployment, args.metrics)
    for w in warnings:
        print(f"warning: {w}", file=sys.stderr)
    sys.stdout.write(text)
    return code


def cmd_map(args) -> int:
    (cfg,) = _load_configs([args.deployment])
    if cfg.provider != args.provider:
        raise _Fail(f"{args.deployment}: deployment is for {cfg.provider}, not {args.provider}")
    samples = _load_samples([args.metrics])
    vnm, warnings = CloudAdapter(cfg, default_registry()).feed(samples)
    for w in warnings:
        print(f"warning: {w}", file=sys.stderr)
    sys.stdout.write(format_trace(vnm))
    return EXIT_OK


def cmd_regions(args) -> int:
    try:
        triple = default_registry().map_region(args.provider, args.region)
    except UnknownRegion as e:
        raise _Fail(str(e)) from None
    print("\t".join(triple))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="broker", description="Translate SLAs into vendor-neutral "
                                "metric conditions and monitor them across cloud providers.")
    sub = p.add_subparsers(dest="command", required=True)

    t = sub.add_parser("translate", help="translate an SLA into metric conditions")
    t.add_argument("--kb", required=True, help="knowledge base (rule file)")
    t.add_argument("--sla", required=True, help="SLA file")
    t.add_argument("--trace", action="store_true", help="append the inference explanation as # comments")
    t.add_argument("--out", help="write conditions here instead of stdout")
    t.set_defaults(func=cmd_translate)

    m = sub.add_parser("monitor", help="check conditions against deployments and metric traces")
    m.add_argument("--conditions", required=True)
    m.add_argument("--deployment", nargs="+", default=[], action="extend")
    m.add_argument("--metrics", nargs="+", default=[], action="extend")
    m.set_defaults(func=cmd_monitor)

    mp = sub.add_parser("map", help="map a provider trace to vendor-neutral samples")
    mp.add_argument("--provider", required=True, choices=PROVIDERS)
    mp.add_argument("--deployment", required=True)
    mp.add_argument("--metrics", required=True)
    mp.set_defaults(func=cmd_map)

    r = sub.add_parser("regions", help="look up the vendor-neutral region of a provider region")
    r.add_argument("--provider", required=True)
    r.add_argument("--region", required=True)
    r.set_defaults(func=cmd_regions)
    return p


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except _Fail as e:
        print(f"broker: {e.message}", file=sys.stderr)
        return e.code


if __name__ == "__main__":
    sys.exit(main())
