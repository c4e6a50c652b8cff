"""
One metric, three providers
===========================

The same disk workload seen through AWS CloudWatch, Azure Monitor and Google
Cloud Monitoring.  AWS reports operations per minute, Azure per-second rates
split into data and OS disks, and Google two cumulative counters.  After
mapping, all three agree on ``io_operations``.
"""

import random

import slabroker as sb

reg = sb.default_registry()
for provider in ("aws", "azure", "gcp"):
    print(f"{provider:6}", reg.mapping_for("io_operations", provider, "block_storage").expression)

# %%
# Ground truth: ten minutes of reads and writes.
rnd = random.Random(0)
minutes = [(rnd.randint(1000, 5000), rnd.randint(500, 3000)) for _ in range(10)]


def sample(t, provider, metric, value, unit):
    return sb.MetricSample(t, provider, "vol1", metric, (), value, unit, 60)


aws, azure, gcp = [], [], []
ops, busy = 0, 0.0
gcp.append(sample(0, "gcp", "operation_count", 0, "count"))
gcp.append(sample(0, "gcp", "operation_time", 0, "s"))
for i, (r, w) in enumerate(minutes, start=1):
    t = 60 * i
    aws += [sample(t, "aws", "VolumeReadOps", r, "count"), sample(t, "aws", "VolumeWriteOps", w, "count")]
    azure += [sample(t, "azure", "Data Disk Read Operations/Sec", r / 60, "ops/s"),
              sample(t, "azure", "Data Disk Write Operations/Sec", w / 60, "ops/s"),
              sample(t, "azure", "OS Disk Read Operations/Sec", 0, "ops/s"),
              sample(t, "azure", "OS Disk Write Operations/Sec", 0, "ops/s")]
    ops, busy = ops + r + w, busy + 60
    gcp += [sample(t, "gcp", "operation_count", ops, "count"), sample(t, "gcp", "operation_time", busy, "s")]


def io_rates(provider, samples):
    cfg = sb.parse_deployment(f"[adapter]\nid = {provider}\nprovider = {provider}\n"
                              f"[service vol1]\nservice_type = block_storage\n"
                              f"region = {dict(aws='eu-west-1', azure='West Europe', gcp='europe-west1')[provider]}\n"
                              f"monthly_cost = 4\n")
    rep = sb.produce_vnm(cfg, samples)
    return {s.timestamp: s.value for s in rep.samples if s.metric == "io_operations"}


rates = {p: io_rates(p, s) for p, s in (("aws", aws), ("azure", azure), ("gcp", gcp))}
print(" t    aws      azure    gcp")
for t in sorted(rates["aws"]):
    print(f"{t:4.0f} " + " ".join(f"{rates[p].get(t, float('nan')):8.3f}" for p in ("aws", "azure", "gcp")))

# %%
# Request counting.  Google exports the increment since the last sample, so
# the mapping keeps a running sum; AWS exports the running total directly.
state = sb.WindowState()
for t, inc in ((60, 5), (120, 3), (180, 7)):
    total = sb.accumulate_window(state, sample(t, "gcp", "api/request_count", inc, "count"))
    print(f"t={t}: +{inc} -> total_requests {total:g}")
