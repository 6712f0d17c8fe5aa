"""Acceptance criteria, one test each.

Every test prints a single ``PASS``/``FAIL`` line (also collected into the
terminal summary) and then asserts the same condition.
"""

import math
import time

import numpy as np
import pytest

from conftest import ACCEPTANCE_LINES
from netgen import random_network
from opfrelax.acnl import AcModel, ac_residual, best_local_solution, recover_voltage
from opfrelax.conemodel import RelaxSolution, build_sdp, build_socp, network_cliques, solve_relaxation
from opfrelax.graphkit import Clique, build_graph, cycle_basis
from opfrelax.ipm import IpmSettings, check_certificate, solve
from opfrelax.netcase import load_case, scale_demand
from opfrelax.sweep import CYCLE_COLUMNS, SUMMARY_COLUMNS, TR_COLUMNS, SweepConfig, network_cycles, run_sweep, write_reports
from opfrelax.tightness import TR_CAP, CliqueMatrixView, clique_matrix, cycle_measure, tr_measure
from oracles import central_jacobian, kkt_report, lp_vertex_optimum, random_program, relative_error

TIGHT = IpmSettings(feas_tol=1e-9, gap_tol=1e-9)


def verdict(number, ok, detail):
    line = f"[{'PASS' if ok else 'FAIL'}] criterion {number}: {detail}"
    print(line)
    ACCEPTANCE_LINES.append(line)
    assert ok, line


def test_criterion_1_radial_exactness():
    t0 = time.perf_counter()
    rng = np.random.default_rng(20240601)
    worst_cone = worst_res = 0.0
    statuses, cycle_count = [], 0
    for _ in range(20):
        net = random_network(rng, int(rng.integers(5, 16)), load=float(rng.uniform(0.1, 0.5)))
        sol = solve_relaxation(net, "socp", TIGHT, clique_complete=False)
        statuses.append(sol.status)
        if not sol.optimal:
            continue
        for (i, j), (c, s) in sol.pairs.items():
            worst_cone = max(worst_cone, abs(sol.c_ii[i] * sol.c_ii[j] - c * c - s * s))
        v = recover_voltage(sol, net, "socp")
        worst_res = max(worst_res, ac_residual(net, v, (sol.p_g, sol.q_g)))
        cycle_count += len(cycle_basis(build_graph(net)))
    elapsed = time.perf_counter() - t0
    ok = (all(s == "optimal" for s in statuses) and worst_cone <= 1e-6 and worst_res <= 1e-6
          and cycle_count == 0 and elapsed < 30)
    verdict(1, ok, f"20 radial networks optimal={statuses.count('optimal')}, max cone slack {worst_cone:.2e}, "
                   f"max ac residual {worst_res:.2e} pu, cycles {cycle_count}, {elapsed:.1f} s")


def test_criterion_2_relaxation_ordering():
    t0 = time.perf_counter()
    rows, ok = [], True
    for name in ("case14", "case30"):
        base = load_case(name)
        for lam in (0.5, 0.75, 1.0):
            net = scale_demand(base, lam)
            socp = solve_relaxation(net, "socp")
            sdp = solve_relaxation(net, "sdp")
            nl = best_local_solution(net, sdp)
            solved = socp.optimal and sdp.optimal and nl.ok
            good = solved and socp.objective <= sdp.objective * (1 + 1e-5) and sdp.objective <= nl.objective * (1 + 1e-5)
            ok &= good
            rows.append(f"{name}@{lam}:{'ok' if good else 'BAD'}")
    elapsed = time.perf_counter() - t0
    ok &= elapsed < 300
    verdict(2, ok, f"SOCP <= SDP <= NL within 1e-5 ({', '.join(rows)}), {elapsed:.1f} s")


def _sdp_gap(net):
    sdp = solve_relaxation(net, "sdp")
    if not sdp.optimal:
        return None, f"SDP {sdp.status}"
    nl = best_local_solution(net, sdp)
    if not nl.ok:
        return None, f"NL {nl.status}"
    return 100.0 * (nl.objective - sdp.objective) / nl.objective, "ok"


def test_criterion_3_sdp_gap_case14():
    t0 = time.perf_counter()
    base = load_case("case14")
    g125, why125 = _sdp_gap(scale_demand(base, 1.25))
    g2, why2 = _sdp_gap(scale_demand(base, 2.0))
    elapsed = time.perf_counter() - t0
    part1 = g125 is not None and g125 <= 0.01
    part2 = g2 is not None and abs(g2 - 0.1155) <= 0.05
    fmt = lambda g, why: f"{g:.6f}%" if g is not None else why  # noqa: E731
    verdict(3, part1 and part2 and elapsed < 120,
            f"Gap%(SDP) lambda=1.25 {fmt(g125, why125)} (<= 0.01: {part1}); "
            f"lambda=2 {fmt(g2, why2)} (0.1155 +- 0.05: {part2}); {elapsed:.1f} s")


def _certified(net, build):
    prog, _ = build(net)
    res = solve(prog)
    return res.status, res.status == "infeasible" and check_certificate(prog, res)


def test_criterion_4_infeasibility_detection():
    t0 = time.perf_counter()
    parts, ok = [], True
    for name in ("case30", "case300"):
        net = scale_demand(load_case(name), 1.5)
        for build in (build_socp, build_sdp):
            status, verified = _certified(net, build)
            ok &= verified
            parts.append(f"{name}@1.5 {build.__name__[6:]} {status}{' (certificate verified)' if verified else ''}")
    nominal = load_case("case30")
    for method in ("socp", "sdp"):
        sol = solve_relaxation(nominal, method)
        ok &= sol.optimal
        parts.append(f"case30@1.0 {method} {sol.status}")
    elapsed = time.perf_counter() - t0
    verdict(4, ok and elapsed < 1800, "; ".join(parts) + f"; {elapsed:.1f} s")


def _view(eigs, seed):
    rng = np.random.default_rng(seed)
    k = len(eigs)
    q, _ = np.linalg.qr(rng.normal(size=(k, k)) + 1j * rng.normal(size=(k, k)))
    m = q @ np.diag(eigs).astype(complex) @ q.conj().T
    return CliqueMatrixView.from_matrix(0, tuple(range(k)), 0.5 * (m + m.conj().T))


def test_criterion_5_tr_values():
    rng = np.random.default_rng(5)
    v = rng.normal(size=3) + 1j * rng.normal(size=3)
    rank1 = CliqueMatrixView.from_matrix(0, (0, 1, 2), np.outer(v, v.conj()))
    # the 1e10 spread is built on a diagonal: a rotated basis would bury lambda2 = 1 under
    # roundoff of size 1e10 * eps ~ 1e-6, far above the requested 1e-9
    got = {
        "(1e10, 1)": tr_measure(CliqueMatrixView.from_matrix(0, (0, 1), np.diag([1e10, 1.0]))),
        "(100, 1)": tr_measure(_view([100.0, 1.0], 1)),
        "rank-1": tr_measure(rank1),
    }
    want = {"(1e10, 1)": 10.0, "(100, 1)": 2.0, "rank-1": TR_CAP}
    ok = all(abs(got[k] - want[k]) <= 1e-9 for k in want)
    verdict(5, ok, ", ".join(f"{k} -> {got[k]:.12g}" for k in want))


def _rank_one_relaxation(net, v, cliques):
    sol = RelaxSolution(status="optimal", method="sdp", objective=0.0)
    sol.c_ii = np.abs(v) ** 2
    for members in cliques:
        for a, i in enumerate(members):
            for j in members[a + 1:]:
                w = np.conj(v[i]) * v[j]
                sol.pairs[(i, j)] = (w.real, w.imag)
    sol.cliques = list(cliques)
    return sol


def test_criterion_6_cycle_consistency():
    rng = np.random.default_rng(6)
    worst, capped_all = 0.0, True
    for _ in range(20):
        net = random_network(rng, int(rng.integers(5, 12)), extra_edges=int(rng.integers(1, 5)))
        _, cliques = network_cliques(net)
        # realistic operating points keep every branch angle well inside (-90, 90) degrees
        v = rng.uniform(0.9, 1.1, net.n_bus) * np.exp(1j * rng.uniform(-np.pi / 4, np.pi / 4, net.n_bus))
        sol = _rank_one_relaxation(net, v, cliques)
        trs = [tr_measure(clique_matrix(sol, Clique(c, k))) for k, c in enumerate(cliques)]
        capped_all &= all(t == TR_CAP for t in trs)
        for cyc in network_cycles(net):
            worst = max(worst, abs(cycle_measure(sol, cyc)))
    case14 = load_case("case14")
    socp = solve_relaxation(case14, "socp")
    sums = [abs(cycle_measure(socp, c)) for c in network_cycles(case14)]
    ok = capped_all and worst <= 1e-6 and max(sums) > 1.0
    verdict(6, ok, f"rank-1 solutions: all TR capped {capped_all}, max |cycle| {worst:.2e} deg; "
                   f"case14 SOCP lambda=1 max |basis cycle| {max(sums):.3f} deg")


def test_criterion_7_solver_correctness():
    t0 = time.perf_counter()
    rng = np.random.default_rng(7)
    lp_err = 0.0
    lp_ok = 0
    for _ in range(100):
        prog = random_program(rng, ["nonnegative"], max_cones=3, sizes=(1, 4))
        res = solve(prog, TIGHT)
        ref = lp_vertex_optimum(prog.A.toarray(), prog.b, prog.c)
        if res.optimal and ref is not None:
            lp_ok += 1
            lp_err = max(lp_err, abs(res.primal_objective - ref) / max(1.0, abs(ref)))
    worst = {}
    solved = {}
    for label, kinds in (("SOCP", ["second_order", "rotated_second_order", "nonnegative"]), ("SDP", ["psd", "nonnegative"])):
        worst[label], solved[label] = 0.0, 0
        for _ in range(20):
            prog = random_program(rng, kinds, sizes=(2, 4))
            res = solve(prog, TIGHT)
            if res.optimal:
                solved[label] += 1
                worst[label] = max(worst[label], max(kkt_report(prog, res.x, res.y, res.s).values()))
    elapsed = time.perf_counter() - t0
    ok = (lp_ok == 100 and lp_err <= 1e-6 and solved == {"SOCP": 20, "SDP": 20}
          and max(worst.values()) <= 1e-7 and elapsed < 120)
    verdict(7, ok, f"LP {lp_ok}/100 max err {lp_err:.1e}; SOCP {solved['SOCP']}/20 KKT {worst['SOCP']:.1e}; "
                   f"SDP {solved['SDP']}/20 KKT {worst['SDP']:.1e}; {elapsed:.1f} s")


def test_criterion_8_gradient_check():
    rng = np.random.default_rng(8)
    worst = 0.0
    for _ in range(10):
        net = random_network(rng, 5, extra_edges=int(rng.integers(0, 4)), rated=True)
        model = AcModel(net)
        n, ng = model.n, model.ng
        mag, ang = rng.uniform(0.9, 1.1, n), rng.uniform(-0.3, 0.3, n)
        x = np.concatenate([mag * np.cos(ang), mag * np.sin(ang), rng.uniform(0, 1, ng), rng.uniform(-1, 1, ng)])
        worst = max(worst, relative_error(model.balance_jacobian(x), central_jacobian(model.balance, x)))
        worst = max(worst, relative_error(model.inequality_jacobian(x), central_jacobian(model.inequalities, x)))
    verdict(8, worst <= 1e-6, f"max relative Jacobian error over 10 random 5-bus networks {worst:.2e}")


def test_criterion_9_demand_trend(tmp_path):
    t0 = time.perf_counter()
    recs = run_sweep(SweepConfig("case30", lambdas=(0.5, 1.0), methods=("sdp",)))
    paths = write_reports(recs, tmp_path)
    import csv

    shapes_ok = True
    for name, cols in (("summary.csv", SUMMARY_COLUMNS), ("tr.csv", TR_COLUMNS), ("cycles.csv", CYCLE_COLUMNS)):
        with open(tmp_path / name, newline="") as fh:
            rows = list(csv.reader(fh))
        shapes_ok &= tuple(rows[0]) == cols and all(len(r) == len(cols) for r in rows) and len(rows) > 1
    by = {r.lam: {row[0]: row[4] for row in r.tr_rows} for r in recs}
    decreasing = sum(1 for k in by[1.0] if by[0.5][k] < by[1.0][k])
    total = len(by[1.0])
    elapsed = time.perf_counter() - t0
    ok = all(r.status == "optimal" for r in recs) and shapes_ok and len(paths) >= 3
    verdict(9, ok, f"case30 SDP sweep complete, CSVs well formed {shapes_ok}; TR decreases from lambda=1.0 to 0.5 "
                   f"for {decreasing} of {total} cliques (reported, not asserted); {elapsed:.1f} s")


if __name__ == "__main__":
    raise SystemExit(pytest.main([__file__, "-q", "-s"]))
