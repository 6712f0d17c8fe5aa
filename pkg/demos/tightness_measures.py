"""Read the three tightness measures off the 14-bus relaxations.

The SOCP solution satisfies each branch cone but its angles need not add up
around a loop, which the cycle measure exposes.  The clique SDP enforces
positive semidefiniteness on whole cliques, so its clique matrices come out
close to rank one and the eigenvalue ratio is large.
"""

from opfrelax.acnl import best_local_solution
from opfrelax.conemodel import network_cliques, solve_relaxation
from opfrelax.graphkit import Clique
from opfrelax.netcase import load_case
from opfrelax.sweep import network_cycles
from opfrelax.tightness import build_report

net = load_case("case14")
_, cliques = network_cliques(net)
cliques = [Clique(tuple(c), k) for k, c in enumerate(cliques)]
cycles = network_cycles(net)

sdp = solve_relaxation(net, "sdp")
local = best_local_solution(net, sdp)
print(f"local optimum {local.objective:.4f} ({local.status})")

for method in ("socp", "sdp"):
    sol = sdp if method == "sdp" else solve_relaxation(net, method)
    rep = build_report(sol, cliques, cycles, 1.0, local.objective)
    print(f"\n{method.upper()}: bound {sol.objective:.4f}, gap {rep.gap_pct:.5f} %")
    trs = [row[4] for row in rep.tr]
    print(f"  clique TR: min {min(trs):.2f}, max {max(trs):.2f} over {len(trs)} cliques")
    for idx, length, _, wrapped in rep.cycles:
        print(f"  cycle {idx} ({length} buses): {wrapped:+.4f} deg")
