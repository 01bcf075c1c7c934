"""Solve the bundled 6-unit case and audit a table of published dispatches.

Run:  python3 demos/six_unit_walkthrough.py
"""

import logging

from zonedispatch import bundled_case, solve
from zonedispatch.audit import audit_solution
from zonedispatch.audit import audit_table, format_table
from zonedispatch.io import bundled_reported_path, load_reported

logging.basicConfig(level=logging.WARNING)

case = bundled_case("6unit")
print(f"{case.n_units} units, demand {case.demand} MW, {case.zone_product} zone combinations")

sol = solve(case)
for u, k, p in zip(case.units, sol.assignment.zone_index, sol.p):
    z = u.zones[k]
    print(f"  unit {u.id}: {p:9.4f} MW in zone {k + 1} [{z.lower:g}, {z.upper:g}]")
print(f"cost {sol.cost:.4f} $/h, loss {sol.loss_mw:.4f} MW")
print(f"{sol.stats.assignments_solved} feasible assignments solved, {sol.stats.assignments_infeasible} infeasible")

check = audit_solution(case, sol)
print(f"self-audit: violation {abs(check.violation):.2e} MW\n")

# Published dispatches often miss the balance once losses are recomputed.
rows = load_reported(bundled_reported_path("6unit_literature"))
print(format_table(audit_table(case, rows)))
