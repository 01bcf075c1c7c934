"""Replicating a lossless block n times should multiply its optimal cost by n.

Run:  python3 demos/replication_scaling.py [n ...]
"""

import sys
import time

from zonedispatch import bundled_case, solve
from zonedispatch.io import replicate_case

base_case = bundled_case("40unit_block")
base = solve(base_case)
print(f"40-unit block: cost {base.cost:.4f} $/h, {base_case.zone_product} zone combinations")

for n in [int(a) for a in sys.argv[1:]] or [2, 3, 5, 50, 250]:
    case = replicate_case(base_case, n)
    t0 = time.perf_counter()
    sol = solve(case)
    dt = time.perf_counter() - t0
    print(
        f"n={n:4d} ({case.n_units:5d} units): cost {sol.cost:.4f}, "
        f"gap to n*base {sol.cost - n * base.cost:+.2e}, {sol.stats.nodes_created} nodes, {dt:.2f} s"
    )
