import math

import pytest

from helpers import registry
from slabroker.adapters import (CloudAdapter, TRACE_HEADER, format_trace, ingest_trace, load_deployment,
                                parse_deployment, parse_dimensions, parse_trace, produce_vnm)
from slabroker.errors import NegativeCost, NonFiniteValue, SchemaError, UnknownRegion
from slabroker.mapping import MetricSample

AWS_MYSQL = """\
[adapter]
id = aws-eu
provider = aws

[service db1]
service_type = mysql
region = eu-central-1
monthly_cost = 90
TotalMemory_GiB = 8
"""


def cfg(text=AWS_MYSQL):
    return parse_deployment(text, "test.cfg", registry())


def test_load_valid(tmp_path):
    p = tmp_path / "d.cfg"
    p.write_text(AWS_MYSQL)
    c = load_deployment(p)
    (svc,) = c.services
    assert (c.adapter_id, c.provider) == ("aws-eu", "aws")
    assert (svc.instance_id, svc.service_type, svc.region, svc.monthly_cost) == ("db1", "mysql", "eu-central-1", 90)
    assert svc.config == {"TotalMemory_GiB": 8}


def test_duplicate_instance_id():
    with pytest.raises(SchemaError):
        cfg(AWS_MYSQL + "\n[service db1]\nservice_type = mysql\nregion = eu-west-1\nmonthly_cost = 1\n")


def test_unknown_region():
    with pytest.raises(UnknownRegion):
        cfg(AWS_MYSQL.replace("eu-central-1", "mars-north-1"))


def test_negative_cost():
    with pytest.raises(NegativeCost):
        cfg(AWS_MYSQL.replace("= 90", "= -1"))


@pytest.mark.parametrize("broken", [
    AWS_MYSQL.replace("provider = aws", "provider = ibm"),
    AWS_MYSQL.replace("service_type = mysql", "service_type = dns"),
    AWS_MYSQL.replace("monthly_cost = 90\n", ""),
    AWS_MYSQL.replace("[adapter]", "[adaptor]"),
    AWS_MYSQL.replace("TotalMemory_GiB = 8", "TotalMemory_GiB = lots"),
    AWS_MYSQL + "[weird]\nx = 1\n",
])
def test_schema_errors(broken):
    with pytest.raises(SchemaError):
        cfg(broken)


def test_nonfinite_param():
    with pytest.raises(NonFiniteValue):
        cfg(AWS_MYSQL.replace("TotalMemory_GiB = 8", "TotalMemory_GiB = inf"))


def test_collectd_region_names_host_provider():
    c = cfg("[adapter]\nid = vm\nprovider = collectd\n[service vm1]\nservice_type = compute\n"
            "region = aws:eu-central-1\nmonthly_cost = 5\n")
    assert produce_vnm(c, []).context.regions == {"EU_CENTRAL"}
    with pytest.raises(UnknownRegion):
        cfg("[adapter]\nid = vm\nprovider = collectd\n[service vm1]\nservice_type = compute\n"
            "region = eu-central-1\nmonthly_cost = 5\n")


# -- traces ------------------------------------------------------------------

def test_ingest_one_line(tmp_path):
    p = tmp_path / "t.csv"
    p.write_text("60,aws,db1,FreeableMemory,,1073741824,bytes,60\n")
    (s,) = ingest_trace(p)
    assert s == MetricSample(60, "aws", "db1", "FreeableMemory", (), 1073741824, "bytes", 60)


def test_ingest_nan():
    with pytest.raises(NonFiniteValue) as e:
        parse_trace(TRACE_HEADER + "\n60,aws,db1,FreeableMemory,,NaN,bytes,60\n")
    assert e.value.line == 2


def test_ingest_gcp_dimension():
    (s,) = parse_trace("120,gcp,bkt1,api/request_count,method=GET,17,count,60\n")
    assert s.dims == {"method": "GET"} and s.value == 17


@pytest.mark.parametrize("line", [
    "60,aws,db1,x,,1,bytes",             # too few fields
    "60,aws,db1,x,,1,bytes,0",           # period must be positive
    "60,aws,db1,x,,1,furlongs,60",       # unknown unit
    "soon,aws,db1,x,,1,bytes,60",        # timestamp
    "60,aws,db1,x,novalue,1,bytes,60",   # dimension without '='
])
def test_ingest_schema_errors(line):
    with pytest.raises(SchemaError):
        parse_trace(line + "\n")


def test_ingest_sorts_and_skips_comments():
    xs = parse_trace("# c\n\n120,aws,a,m,,1,count,60\n60,aws,a,m,,2,count,60\n")
    assert [s.timestamp for s in xs] == [60, 120]


def test_dimension_roundtrip():
    assert parse_dimensions("b=2;a=1") == (("a", "1"), ("b", "2"))
    assert parse_dimensions("") == ()


def test_format_trace_roundtrip():
    xs = parse_trace('0,gcp,b,api/request_count,method=GET;response_class=2xx,3.5,count,60\n')
    text = format_trace(xs)
    assert text.splitlines()[0] == TRACE_HEADER
    assert parse_trace(text) == xs


def test_format_empty_trace_is_header_only():
    assert format_trace([]) == TRACE_HEADER + "\n"


# -- produce_vnm -------------------------------------------------------------

def test_azure_memory_percent_direct():
    c = cfg("[adapter]\nid = az\nprovider = azure\n[service db]\nservice_type = mysql\n"
            "region = West Europe\nmonthly_cost = 10\n")
    rep = produce_vnm(c, parse_trace("0,azure,db,memory_percent,,40,pct,60\n"))
    assert [(s.metric, s.value, s.unit) for s in rep.samples] == [("memory_utilization", 40, "pct")]


def test_aws_memory_utilization_75():
    rep = produce_vnm(cfg(), parse_trace(f"0,aws,db1,FreeableMemory,,{2 ** 31},bytes,60\n"))
    util = [s for s in rep.samples if s.metric == "memory_utilization"]
    assert [s.value for s in util] == [75]


def test_empty_trace_keeps_context():
    rep = produce_vnm(cfg(), [])
    assert rep.samples == []
    assert (rep.context.regions, rep.context.countries, rep.context.continents, rep.context.total_cost) == (
        {"EU_CENTRAL"}, {"Germany"}, {"Europe"}, 90)


def test_context_independent_of_trace():
    a = produce_vnm(cfg(), []).context
    b = produce_vnm(cfg(), parse_trace("0,aws,db1,CPUUtilization,,55,pct,60\n")).context
    assert a == b


def test_units_match_registry():
    trace = parse_trace("\n".join(f"{t},aws,db1,{m},,{v},{u},60" for t in (0, 60) for m, v, u in (
        ("CPUUtilization", 55, "pct"), ("FreeableMemory", 2 ** 30, "bytes"), ("FreeStorageSpace", 2 ** 33, "bytes"),
        ("ReplicaLag", 1, "s"), ("DatabaseConnections", 3, "count"), ("ReadIOPS", 4, "ops/s"))))
    c = cfg(AWS_MYSQL + "TotalDisk_GiB = 100\n")
    rep = produce_vnm(c, trace)
    assert rep.samples
    for s in rep.samples:
        assert s.unit == registry().descriptor_for(s.metric, "mysql").unit


def test_mapping_errors_become_warnings():
    c = cfg(AWS_MYSQL.replace("TotalMemory_GiB = 8", ""))
    rep = produce_vnm(c, parse_trace("0,aws,db1,FreeableMemory,,1,bytes,60\n0,aws,db1,CPUUtilization,,5,pct,60\n"))
    assert [s.metric for s in rep.samples] == ["CPU_utilization"]
    assert any("TotalMemory_GiB" in w for w in rep.warnings)


def test_foreign_samples_warned():
    rep = produce_vnm(cfg(), parse_trace("0,gcp,db1,x,,1,count,60\n0,aws,other,CPUUtilization,,1,pct,60\n"))
    assert rep.samples == [] and len(rep.warnings) == 2


GCP_BUCKET = """\
[adapter]
id = gcp-eu
provider = gcp
[service bkt1]
service_type = object_storage
region = europe-west1
monthly_cost = 3
"""


def gcp_trace(n):
    rows = []
    for i in range(n):
        for method, v in (("GET", i + 1), ("PUT", 2 * i)):
            rows.append(f"{60 * (i + 1)},gcp,bkt1,api/request_count,method={method};response_class=2xx,{v},count,60")
    return parse_trace("\n".join(rows) + "\n")


def test_composable_across_time_slices():
    c = cfg(GCP_BUCKET)
    trace = gcp_trace(10)
    whole = produce_vnm(c, trace).samples
    adapter = CloudAdapter(c)
    first, _ = adapter.feed([s for s in trace if s.timestamp <= 300])
    second, _ = adapter.feed([s for s in trace if s.timestamp > 300])
    assert first + second == whole


def test_stateless_mappings_compose_with_fresh_adapters():
    c = cfg()
    trace = parse_trace("".join(f"{t},aws,db1,CPUUtilization,,{t % 97},pct,60\n" for t in range(0, 1200, 60)))
    whole = produce_vnm(c, trace).samples
    split = (produce_vnm(c, [s for s in trace if s.timestamp < 600]).samples
             + produce_vnm(c, [s for s in trace if s.timestamp >= 600]).samples)
    assert whole == split


def test_gcp_total_requests_from_trace():
    rep = produce_vnm(cfg(GCP_BUCKET), gcp_trace(3))
    totals = [s.value for s in rep.samples if s.metric == "total_requests"]
    gets = [s.value for s in rep.samples if s.metric == "get_requests"]
    assert gets == [1, 3, 6] and totals == [1, 5, 12]
