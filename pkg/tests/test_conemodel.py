import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from netgen import random_network, small_network, two_bus
from opfrelax.acnl import best_local_solution
from opfrelax.conemodel import audit_units, build_sdp, build_socp, extract_solution, solve_relaxation
from opfrelax.graphkit import Clique
from opfrelax.ipm import IpmResult, IpmSettings, solve
from opfrelax.netcase import scale_demand
from oracles import cone_distance


def _kinds(prog, kind):
    return [c for c in prog.cones if c.kind == kind]


def test_two_bus_cone_count():
    prog, vmap = build_socp(two_bus(c2=0.0), clique_complete=False)
    assert len(_kinds(prog, "rotated_second_order")) == 1
    assert list(vmap.pairs) == [(0, 1)]
    assert _kinds(prog, "second_order") == []
    rated, _ = build_socp(two_bus(c2=0.0, s_max=1.0), clique_complete=False)
    assert len(_kinds(rated, "second_order")) == 2


def test_quadratic_cost_adds_epigraph():
    prog, vmap = build_socp(two_bus(c2=3.0), clique_complete=False)
    assert len(_kinds(prog, "rotated_second_order")) == 2
    assert (vmap.t_g >= 0).all()


def test_zero_load_fixed_point():
    net = two_bus(pd=0.0, c2=2.0, c1=5.0, c0=7.0)
    for method in ("socp", "sdp"):
        sol = solve_relaxation(net, method)
        assert sol.optimal
        assert sol.p_g[0] == pytest.approx(0.0, abs=1e-6)
        assert sol.objective == pytest.approx(7.0, abs=1e-5)


def test_zero_demand_generators_at_lower_bound():
    # lossless lines and no shunts: nothing needs real power
    net = small_network(5, [(1, 2), (2, 3), (3, 4), (4, 1), (4, 5)], r=0.0)
    for method in ("socp", "sdp"):
        sol = solve_relaxation(net, method)
        assert sol.optimal
        assert sol.p_g == pytest.approx(np.zeros(net.n_gen), abs=1e-6)


def test_two_bus_balance_with_losses():
    net = two_bus(pd=0.5, qd=0.1, r=0.02, x=0.1, b=0.02)
    prog, vmap = build_socp(net)
    res = solve(prog)
    sol = extract_solution(prog, vmap, res)
    losses = sol.flows[0, 0] + sol.flows[0, 2]
    assert losses > 0
    assert sol.p_g[0] == pytest.approx(0.5 + losses, abs=1e-6)


def test_infeasible_extraction_is_empty():
    sol = solve_relaxation(two_bus(pd=5.0, p_max=1.0), "socp")
    assert sol.status == "infeasible"
    assert sol.c_ii is None and sol.pairs == {} and sol.p_g is None and np.isnan(sol.objective)


def test_extract_dimension_mismatch():
    prog, vmap = build_socp(two_bus())
    with pytest.raises(ValueError):
        extract_solution(prog, vmap, IpmResult("optimal", np.zeros(3), np.zeros(1), np.zeros(3)))


def test_sdp_blocks():
    tri = small_network(3, [(1, 2), (2, 3), (1, 3)])
    prog, vmap = build_sdp(tri)
    assert [c.size for c in _kinds(prog, "psd")] == [6]
    path = small_network(3, [(1, 2), (2, 3)])
    prog, vmap = build_sdp(path)
    assert [c.size for c in _kinds(prog, "psd")] == [4, 4]
    shared = [lab for lab in prog.row_labels if lab.startswith("share_c")]
    assert shared == ["share_c:1:1[vsq]"]  # bus index 1 (id 2) appears in both cliques


def test_sdp_rejects_bad_cliques():
    path = small_network(3, [(1, 2), (2, 3)])
    with pytest.raises(ValueError):
        build_sdp(path, [Clique((1, 2), 0)])
    with pytest.raises(ValueError):
        build_sdp(path, [Clique((1, 2), 0), Clique((1, 3), 1)])
    with pytest.raises(ValueError):
        build_sdp(path, [Clique((1, 2, 9), 0)])


def test_units_audit(case14):
    for build in (build_socp, build_sdp):
        prog, vmap = build(case14)
        assert audit_units(prog, vmap) == []


def test_every_physical_symbol_one_column(case14):
    prog, vmap = build_sdp(case14)
    cols = [e[0] for e in vmap.c_ii] + [e[0] for pair in vmap.pairs.values() for e in pair]
    cols += list(vmap.p_g) + list(vmap.q_g) + list(vmap.flows.ravel())
    assert len(cols) == len(set(cols))


def test_case14_bounds(case14):
    socp = solve_relaxation(case14, "socp")
    sdp = solve_relaxation(case14, "sdp")
    nl = best_local_solution(case14, sdp)
    assert socp.optimal and sdp.optimal and nl.ok
    assert 0 < socp.objective < nl.objective
    assert sdp.objective >= socp.objective
    for sol, build in ((socp, build_socp), (sdp, build_sdp)):
        prog, _ = build(case14)
        x = sol.ipm.x
        assert max(cone_distance(c, x[c.span]) for c in prog.cones) <= 1e-7


def test_case30_overload_infeasible(case30):
    sol = solve_relaxation(scale_demand(case30, 1.5), "sdp")
    assert sol.status == "infeasible"


@settings(max_examples=6)
@given(st.integers(0, 10_000), st.integers(4, 9))
def test_radial_cones_tight(seed, n):
    net = random_network(np.random.default_rng(seed), n)
    sol = solve_relaxation(net, "socp", IpmSettings(feas_tol=1e-9, gap_tol=1e-9))
    assert sol.optimal
    for (i, j), (c, s) in sol.pairs.items():
        assert sol.c_ii[i] * sol.c_ii[j] - c * c - s * s == pytest.approx(0.0, abs=1e-6)
