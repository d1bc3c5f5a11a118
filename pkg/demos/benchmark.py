"""Small benchmark over random plants, written as JSON plus SVG figures.

Run with ``python3 demos/benchmark.py [plants] [steps]``. The full-size run
(``mpdimpc bench``) takes hours on one core; this one takes a few minutes.
"""

import json
import sys
from pathlib import Path

from mpdimpc import plots
from mpdimpc.sim import benchmark_suite, summarize

plants = int(sys.argv[1]) if len(sys.argv) > 1 else 2
steps = int(sys.argv[2]) if len(sys.argv) > 2 else 40
out = Path(__file__).parent / "output"
out.mkdir(exist_ok=True)

records = benchmark_suite(
    [2, 3], plants, ["cmpc", "dimpc", "impdimpc", "if15", "if2"], steps=steps, repeats=1,
    progress=lambda r: print(f"M={r.M} seed={r.seed} {r.controller:<8} {r.failure or f'{r.total_wall_time:.3f}s, {r.total_transfers} transfers'}"),
)
agg = summarize(records)
(out / "summary.json").write_text(json.dumps({"records": [r.as_dict() for r in records], "aggregates": agg}, indent=1))
for name, svg in plots.benchmark_figures(agg).items():
    (out / name).write_text(svg)

print(f"\n{'M':>2} {'controller':<9} {'time [s]':>9} {'transfers':>9} {'max iters':>9}")
for M, cells in agg.items():
    for k, cell in cells.items():
        if "mean_total_wall_time" in cell:
            print(f"{M:>2} {k:<9} {cell['mean_total_wall_time']:>9.3f} {cell['mean_total_transfers']:>9.1f} {cell['mean_of_max_iterations']:>9.1f}")
print(f"\nfigures in {out}")
