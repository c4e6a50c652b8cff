import pytest

from helpers import registry, rendered, usecase
from slabroker.dsl import parse_kb, parse_sla
from slabroker.errors import Contradiction, StepLimitExceeded
from slabroker.facts import NumericConstraint, SetAssignment, entails, Negated
from slabroker.inference import (_subst, compute_conflict_set, explain, fire, natural_key,
                                 run_translation, seed, select_instantiation)


def test_natural_order():
    assert sorted(["R10", "R2", "R1"], key=natural_key) == ["R1", "R2", "R10"]


def test_seed_usecase1():
    _, sla = usecase(1)
    wm = seed(sla)
    assert len(wm) == 4
    assert {f.timestamp for f in wm} == {0}
    assert wm.next_timestamp == 1


def test_seed_empty():
    assert len(seed(parse_sla(""))) == 0


def test_seed_contradiction():
    with pytest.raises(Contradiction):
        seed(parse_sla("SLO1: throughput >= 30k notif/s\nSLO2: throughput < 10k notif/s"))


def test_initial_conflict_set_usecase1():
    kb, sla = usecase(1)
    cs = compute_conflict_set(kb, seed(sla), [])
    assert sorted({i.rule_id for i in cs}, key=natural_key) == ["R1", "R7", "R13"]
    assert select_instantiation(cs).rule_id == "R1"


def test_empty_kb_conflict_set():
    _, sla = usecase(1)
    assert compute_conflict_set([], seed(sla), []) == []


def test_r8_absent_after_r7_in_usecase2():
    kb, sla = usecase(2)
    res = run_translation(kb, sla, registry())
    step3 = res.trace[3]
    assert step3.conflict_rule_ids == ("R10",)
    assert any(f.var == "replica_lag" for f in step3.facts)


def test_recency_beats_rule_order():
    kb, sla = usecase(1)
    wm = seed(sla)
    log = []
    fire(select_instantiation(compute_conflict_set(kb, wm, log)), wm, log)
    cs = compute_conflict_set(kb, wm, log)
    chosen = select_instantiation(cs)
    assert chosen.rule_id == "R3" and chosen.recency == 1


def test_singleton_conflict_set():
    kb, sla = usecase(1)
    cs = compute_conflict_set(kb[12:], seed(sla), [])
    assert select_instantiation(cs) is cs[0]


def test_fire_r1_and_r13():
    kb, sla = usecase(1)
    wm = seed(sla)
    log = []
    (r1,) = [i for i in compute_conflict_set(kb, wm, log) if i.rule_id == "R1"]
    (new,) = fire(r1, wm, log)
    assert str(new.atom) == "AT = CBPS" and new.timestamp == 1
    (r13,) = [i for i in compute_conflict_set(kb, wm, log) if i.rule_id == "R13"]
    assert r13.label == "R13[?x=EU_Central]"
    fire(r13, wm, log)
    assert wm.get("regions").atom == SetAssignment("regions", ("EU_Central",))


def test_restating_fact_changes_only_provenance():
    kb = parse_kb("rule R1 { if a = b then c <= 5 ms }\nrule R2 { if a = b then c <= 5 ms }")
    wm = seed(parse_sla("a = b"))
    log = []
    for inst in compute_conflict_set(kb, wm, log):
        fire(inst, wm, log)
    fact = wm.get("c")
    assert fact.timestamp == 1 and fact.provenance == ("R1", "R2")
    assert wm.next_timestamp == 2


def test_usecase1_translation():
    kb, sla = usecase(1)
    res = run_translation(kb, sla, registry())
    assert len(res.trace) == 6
    assert res.fired_sequence == ["R1", "R3", "R7", "R8", "R13"]
    assert rendered(res.conditions) == ["CPU_usage <= 80 pct", "number_regions = 1",
                                        "regions = {EU_Central}", "total_cost < 200 usd/month"]


def test_empty_kb_translation():
    _, sla = usecase(1)
    res = run_translation([], sla, registry())
    assert len(res.trace) == 1 and res.trace[0].conflict_set == ()
    assert rendered(res.conditions) == ["total_cost < 200 usd/month"]


def test_usecase2_conditions():
    kb, sla = usecase(2)
    res = run_translation(kb, sla, registry())
    got = set(rendered(res.conditions))
    fig11 = {"number_continents = 1", "Europe in continents", "number_regions = 3",
             "replica_lag <= 2000 ms", "CPU_utilization <= 80 pct", "disk_utilization <= 80 pct",
             "total_cost <= 300 usd/month"}
    assert fig11 <= got
    assert got - fig11 == {"regions = {EU_NORTH, EU_WEST, EU_CENTRAL}"}


def test_non_vnm_facts_excluded():
    kb, sla = usecase(1)
    res = run_translation(kb, sla, registry())
    for var in ("App", "AT", "throughput", "latency", "region"):
        assert res.memory.get(var) is not None
        assert var not in {c.var for c in res.conditions}


def test_step_limit():
    kb = parse_kb("rule R1 { if a = ?x then insert ?x into s }")
    with pytest.raises(ValueError):
        run_translation(kb, parse_sla("a = b"), registry(), max_steps=0)
    # two firings needed (R1 and R2) but only one allowed
    kb = parse_kb("rule R1 { if a = b then c = d }\nrule R2 { if c = d then e = f }")
    with pytest.raises(StepLimitExceeded):
        run_translation(kb, parse_sla("a = b"), registry(), max_steps=1)


def test_symbol_conflict_is_contradiction():
    kb = parse_kb("rule R1 { if a = b then c = d }\nrule R2 { if a = b then c = e }")
    with pytest.raises(Contradiction):
        run_translation(kb, parse_sla("a = b"), registry())


def test_negation_as_failure():
    kb, sla = usecase(2)
    res = run_translation(kb, sla, registry())
    assert "R4" not in {i.rule_id for s in res.trace for i in s.conflict_set}
    sla_no_law = parse_sla("App = MySQL_OLTP\navailability = high")
    res2 = run_translation(kb, sla_no_law, registry())
    assert "R4" in res2.fired_sequence
    assert "number_continents = 3" in rendered(res2.conditions)


@pytest.mark.parametrize("n", [1, 2])
def test_trace_invariants(n):
    kb, sla = usecase(n)
    res = run_translation(kb, sla, registry())
    seen = set()
    prev = {}
    for step in res.trace:
        facts = {f.var: f.atom for f in step.facts}
        # soundness: each conflict-set member is satisfied by the snapshot alone
        for inst in step.conflict_set:
            env = dict(inst.binding)
            for a in inst.rule.antecedent:
                a = _subst(a, env)
                if isinstance(a, Negated):
                    assert not (a.var in facts and entails(facts[a.var], a.inner))
                else:
                    assert a.var in facts and entails(facts[a.var], a)
        if step.fired is not None:
            assert step.fired in step.conflict_set
            assert step.fired.key not in seen
            seen.add(step.fired.key)
        # monotonicity
        for var, atom in prev.items():
            now = facts[var]
            if isinstance(atom, NumericConstraint):
                assert now.interval.issubset(atom.interval)
            elif isinstance(atom, SetAssignment):
                assert set(atom.members) <= set(now.members)
        prev = facts


def test_explain_usecase1():
    kb, sla = usecase(1)
    ex = explain(run_translation(kb, sla, registry()))
    cells = [line.split("|")[2].strip() for line in ex.table.splitlines()[2:]
             if line[:1].isdigit()]
    assert cells == ["{R1,R7,R13}", "{R3,R7,R13}", "{R7,R13}", "{R8,R13}", "{R13}", "{}"]
    assert len(ex.narrative) == 5
    assert ex.narrative[0].startswith('Step 0: R1 fired because App = "E-SilboPS" (t=0) held')
    assert any(r.startswith("step=4 kind=fired rule=R13[?x=EU_Central]") for r in ex.records)


def test_explain_empty_kb():
    _, sla = usecase(1)
    ex = explain(run_translation([], sla, registry()))
    rows = [line for line in ex.table.splitlines()[2:] if line[:1].isdigit()]
    assert len(rows) == 1 and "{}" in rows[0]
    assert ex.narrative == ()


def test_explain_usecase2():
    kb, sla = usecase(2)
    res = run_translation(kb, sla, registry())
    assert ["{" + ",".join(s.conflict_rule_ids) + "}" for s in res.trace] == \
        ["{R1,R2,R7,R10}", "{R2,R7,R10}", "{R7,R10}", "{R10}", "{}"]


def test_records_parse_as_key_values():
    import shlex
    kb, sla = usecase(2)
    for rec in explain(run_translation(kb, sla, registry())).records:
        fields = dict(tok.split("=", 1) for tok in shlex.split(rec))
        assert fields["kind"] in {"fact", "conflict", "fired"}
        int(fields["step"])
