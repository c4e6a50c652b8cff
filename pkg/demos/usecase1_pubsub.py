"""
Publish/subscribe brokers on two clouds
=======================================

A content-based pub/sub service (E-SilboPS) runs on two VMs, one on AWS and
one on Google Cloud.  Its SLA asks for 30 000 notifications per second, a
monthly bill under 200 dollars and deployment in central Europe.  We turn the
SLA into conditions on vendor-neutral metrics, then check a recorded hour of
collectd data against them.
"""

from pathlib import Path

import slabroker as sb

HERE = Path(__file__).parent / "data"

# %%
# The SLA and the knowledge base ship with the package.
kb = sb.parse_kb(sb.data_path("usecase1.kb").read_text())
sla = sb.parse_sla(sb.data_path("usecase1.sla").read_text())
print(sb.render_sla(sla))

# %%
# Forward chaining with recency-based conflict resolution.  The table shows
# the working memory and the conflict set before every firing.
result = sb.run_translation(kb, sla)
report = sb.explain(result)
print(report.table)
for line in report.narrative:
    print(line)

# %%
# Only facts about vendor-neutral metrics survive as conditions.  The
# throughput objective was consumed by the rules and turned into a CPU bound.
for fact in result.conditions:
    print(sb.render_atom(fact.atom))

# %%
# Monitoring.  The deployment file declares both VMs with their regions and
# costs; the trace holds per-core idle percentages as collectd reports them.
config = sb.load_deployment(HERE / "pubsub_vms.cfg")
samples = sb.ingest_trace(HERE / "pubsub_vms.csv")
adapter_report = sb.produce_vnm(config, samples)
cpu = [s for s in adapter_report.samples if s.metric == "CPU_usage"]
print(f"{len(cpu)} CPU_usage samples, peak {max(s.value for s in cpu):.1f} pct")

verdict = sb.check_conditions([f.atom for f in result.conditions], [adapter_report])
print(verdict.render())

# %%
# Move broker-b to Virginia.  Cost and CPU still pass; the deployment now
# spans two regions, one of them US_EAST, so both region conditions fail.
moved = sb.parse_deployment((HERE / "pubsub_vms.cfg").read_text().replace(
    "gcp:europe-west3", "aws:us-east-1"))
verdict = sb.check_conditions([f.atom for f in result.conditions], [sb.produce_vnm(moved, samples)])
print(verdict.render())
print("exit code:", verdict.exit_code)
