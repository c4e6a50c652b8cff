import pytest

from helpers import registry, usecase_paths
from slabroker.adapters import AdapterReport, parse_deployment, parse_trace, produce_vnm
from slabroker.cli import main
from slabroker.dsl import parse_conditions
from slabroker.mapping import ContextPartial, MetricSample
from slabroker.monitor import SATISFIED, UNEVALUATED, VIOLATED, check_conditions

UC1_CONDITIONS = "total_cost < 200 usd/month\nCPU_usage <= 80 pct\nnumber_regions = 1\nregions = {EU_Central}\n"

VM_CFG = """\
[adapter]
id = vms
provider = collectd
[service vm1]
service_type = compute
region = aws:{region}
monthly_cost = 180
"""


def cpu_trace(idles):
    return "".join(f"{60 * i},collectd,vm1,cpu-#.cpu-idle.value,cpu=0,{v},pct,60\n" for i, v in enumerate(idles))


def files(tmp_path, region="eu-central-1", idles=(50, 30, 20), conditions=UC1_CONDITIONS):
    c = tmp_path / "c.txt"
    c.write_text(conditions)
    d = tmp_path / "d.cfg"
    d.write_text(VM_CFG.format(region=region))
    m = tmp_path / "m.csv"
    m.write_text(cpu_trace(idles))
    return str(c), str(d), str(m)


def status(report):
    return {r.condition: r.status for r in report.results}


# -- check_conditions --------------------------------------------------------

def test_all_satisfied():
    conds = parse_conditions(UC1_CONDITIONS)
    cfg = parse_deployment(VM_CFG.format(region="eu-central-1"))
    rep = check_conditions(conds, [produce_vnm(cfg, parse_trace(cpu_trace((50, 30, 20))))], registry())
    assert set(status(rep).values()) == {SATISFIED} and rep.exit_code == 0


def test_region_outside_set_violates():
    conds = parse_conditions(UC1_CONDITIONS)
    cfg = parse_deployment(VM_CFG.format(region="us-east-1"))
    rep = check_conditions(conds, [produce_vnm(cfg, parse_trace(cpu_trace((50,))))], registry())
    st = status(rep)
    assert st["regions = {EU_Central}"] == VIOLATED and st["number_regions = 1"] == SATISFIED
    assert rep.exit_code == 3
    (bad,) = [r for r in rep.results if r.status == VIOLATED]
    assert "US_EAST" in str(bad.evidence[0])


def test_one_hot_sample_violates_with_evidence():
    conds = parse_conditions("CPU_usage <= 80 pct\n")
    cfg = parse_deployment(VM_CFG.format(region="eu-central-1"))
    rep = check_conditions(conds, [produce_vnm(cfg, parse_trace(cpu_trace((50, 15, 20))))], registry())
    (r,) = rep.results
    assert r.status == VIOLATED and r.evaluated == 3
    (e,) = r.evidence
    assert (e.timestamp, e.instance) == (60, "vm1") and e.value == "85 pct"


def test_no_samples_unevaluated():
    rep = check_conditions(parse_conditions("replica_lag <= 2 s\n"), [], registry())
    assert status(rep) == {"replica_lag <= 2 s": UNEVALUATED} and rep.exit_code == 4


def test_empty_adapter_list_context_literal():
    rep = check_conditions(parse_conditions(UC1_CONDITIONS), [], registry())
    st = status(rep)
    assert st["total_cost < 200 usd/month"] == SATISFIED
    assert st["CPU_usage <= 80 pct"] == UNEVALUATED
    assert st["number_regions = 1"] == VIOLATED and st["regions = {EU_Central}"] == VIOLATED


def test_unit_conversion_in_condition():
    s = MetricSample(0, "aws", "db", "replica_lag", (), 2500, "ms", 60)
    rep = check_conditions(parse_conditions("replica_lag <= 2 s\n"),
                           [AdapterReport("a", [s], ContextPartial("a"))], registry())
    assert rep.results[0].status == VIOLATED


def test_memory_usage_tiers_do_not_mix():
    pct = MetricSample(0, "collectd", "vm", "memory_usage", (), 50, "pct", 60)
    byt = MetricSample(0, "aws", "db", "memory_usage", (), 10 ** 12, "bytes", 60)
    rep = check_conditions(parse_conditions("memory_usage <= 80 pct\n"),
                           [AdapterReport("a", [pct, byt], ContextPartial("a"))], registry())
    assert rep.results[0].status == SATISFIED and rep.results[0].evaluated == 1


def test_context_set_membership_and_cardinality():
    parts = [ContextPartial("a", {"EU_WEST"}, {"Ireland"}, {"Europe"}, 100),
             ContextPartial("b", {"EU_NORTH"}, {"Sweden"}, {"Europe"}, 150)]
    reps = [AdapterReport(p.adapter_id, [], p) for p in parts]
    conds = parse_conditions("number_continents = 1\nEurope in continents\nnumber_regions = 3\n"
                             "total_cost <= 300 usd/month\n")
    st = status(check_conditions(conds, reps, registry()))
    assert list(st.values()) == [SATISFIED, SATISFIED, VIOLATED, SATISFIED]


def test_exit_code_is_function_of_statuses():
    conds = parse_conditions("replica_lag <= 2 s\ntotal_cost < 1 usd/month\n")
    rep = check_conditions(conds, [AdapterReport("a", [], ContextPartial("a", total_cost=5))], registry())
    assert [r.status for r in rep.results] == [UNEVALUATED, VIOLATED] and rep.exit_code == 3


def test_render_summary():
    text = check_conditions(parse_conditions(UC1_CONDITIONS), [], registry()).render()
    assert text.endswith("summary: 1 satisfied, 2 violated, 1 unevaluated\n")


# -- CLI ---------------------------------------------------------------------

def test_cli_translate_uc1(capsys):
    kb, sla = usecase_paths(1)
    assert main(["translate", "--kb", kb, "--sla", sla]) == 0
    out = capsys.readouterr().out
    assert sorted(out.splitlines()) == sorted(UC1_CONDITIONS.splitlines())


def test_cli_translate_output_parses_back(tmp_path, capsys):
    kb, sla = usecase_paths(2)
    out = tmp_path / "c.txt"
    assert main(["translate", "--kb", kb, "--sla", sla, "--out", str(out), "--trace"]) == 0
    text = out.read_text()
    assert len(parse_conditions(text)) == len(text.splitlines()) == 8
    assert capsys.readouterr().out.startswith("# ")


def test_cli_translate_missing_file(capsys):
    assert main(["translate", "--kb", "/nonexistent.kb", "--sla", "/nonexistent.sla"]) == 1
    assert "/nonexistent.kb" in capsys.readouterr().err


def test_cli_translate_contradiction(tmp_path, capsys):
    kb, _ = usecase_paths(1)
    sla = tmp_path / "bad.sla"
    sla.write_text('App = "E-SilboPS"\nthroughput >= 30000 notif/s\nthroughput <= 100 notif/s\n')
    assert main(["translate", "--kb", kb, "--sla", str(sla)]) == 2
    assert "contradiction" in capsys.readouterr().err


def test_cli_translate_parse_error_positioned(tmp_path, capsys):
    kb, _ = usecase_paths(1)
    sla = tmp_path / "bad.sla"
    sla.write_text('App = "E-SilboPS"\nthroughput >= \n')
    assert main(["translate", "--kb", kb, "--sla", str(sla)]) == 1
    assert f"{sla}:2:" in capsys.readouterr().err


def test_cli_monitor_ok(tmp_path, capsys):
    c, d, m = files(tmp_path)
    assert main(["monitor", "--conditions", c, "--deployment", d, "--metrics", m]) == 0
    assert "summary: 4 satisfied" in capsys.readouterr().out


def test_cli_monitor_region_violation(tmp_path):
    c, d, m = files(tmp_path, region="us-east-1")
    assert main(["monitor", "--conditions", c, "--deployment", d, "--metrics", m]) == 3


def test_cli_monitor_unevaluated(tmp_path):
    c, d, m = files(tmp_path, conditions="replica_lag <= 2 s\n")
    assert main(["monitor", "--conditions", c, "--deployment", d, "--metrics", m]) == 4


def test_cli_monitor_duplicate_adapter_ids(tmp_path, capsys):
    c, d, m = files(tmp_path)
    assert main(["monitor", "--conditions", c, "--deployment", d, d, "--metrics", m]) == 1


def test_cli_map_aws_cpu(tmp_path, capsys):
    d = tmp_path / "d.cfg"
    d.write_text("[adapter]\nid = a\nprovider = aws\n[service db1]\nservice_type = mysql\n"
                 "region = eu-central-1\nmonthly_cost = 90\n")
    m = tmp_path / "m.csv"
    m.write_text("0,aws,db1,CPUUtilization,,55,pct,60\n")
    assert main(["map", "--provider", "aws", "--deployment", str(d), "--metrics", str(m)]) == 0
    lines = capsys.readouterr().out.splitlines()
    assert lines[1:] == ["0,aws,db1,CPU_utilization,,55,pct,60"]


def test_cli_map_empty_trace_header_only(tmp_path, capsys):
    d = tmp_path / "d.cfg"
    d.write_text("[adapter]\nid = a\nprovider = aws\n[service db1]\nservice_type = mysql\n"
                 "region = eu-central-1\nmonthly_cost = 90\n")
    m = tmp_path / "m.csv"
    m.write_text("")
    assert main(["map", "--provider", "aws", "--deployment", str(d), "--metrics", str(m)]) == 0
    assert capsys.readouterr().out == "timestamp,provider,instance,metric,dimensions,value,unit,period\n"


def test_cli_map_gcp_running_sum(tmp_path, capsys):
    d = tmp_path / "d.cfg"
    d.write_text("[adapter]\nid = g\nprovider = gcp\n[service bkt1]\nservice_type = object_storage\n"
                 "region = europe-west1\nmonthly_cost = 1\n")
    m = tmp_path / "m.csv"
    m.write_text("".join(f"{t},gcp,bkt1,api/request_count,method=GET,{v},count,60\n"
                         for t, v in ((60, 5), (120, 3), (180, 7))))
    assert main(["map", "--provider", "gcp", "--deployment", str(d), "--metrics", str(m)]) == 0
    rows = [r.split(",") for r in capsys.readouterr().out.splitlines()[1:]]
    assert [float(r[5]) for r in rows if r[3] == "total_requests"] == [5, 8, 15]


def test_cli_map_wrong_provider(tmp_path):
    c, d, m = files(tmp_path)
    assert main(["map", "--provider", "aws", "--deployment", d, "--metrics", m]) == 1


@pytest.mark.parametrize("region", ["us-east-1", "us-east-2"])
def test_cli_regions(region, capsys):
    assert main(["regions", "--provider", "aws", "--region", region]) == 0
    assert capsys.readouterr().out == "US_EAST\tUS\tNorth America\n"


def test_cli_regions_unknown(capsys):
    assert main(["regions", "--provider", "aws", "--region", "atlantis-1"]) == 1
    assert "atlantis-1" in capsys.readouterr().err
