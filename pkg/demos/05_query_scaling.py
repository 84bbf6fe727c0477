"""Query latency versus ensemble size: the fan-out stays linear.

Builds frozen synthetic ensembles of growing expert counts and times the
single-worker query path. Roughly half a minute of compute.
"""

from snnplace import query_time_benchmark

SIZES = [1, 2, 4, 8]

rows = query_time_benchmark(SIZES, n_excitatory=100, n_queries=10, seed=7)
print("experts  ms/query  ms/query/expert")
for n_experts, seconds in rows:
    print(f"{n_experts:7d}  {seconds * 1e3:8.1f}  {seconds * 1e3 / n_experts:15.1f}")

times = dict(rows)
print("\ndoubling ratios (ideal linear scaling -> 2.0):")
for n in SIZES[:-1]:
    if 2 * n in times:
        print(f"  time({2 * n}) / time({n}) = {times[2 * n] / times[n]:.2f}")
