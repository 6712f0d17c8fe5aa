import math
import re
from importlib import resources

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from netgen import random_network
from opfrelax.netcase import (
    Branch,
    CaseFormatError,
    branch_admittances,
    bus_shunt,
    flow_coefficients,
    format_case,
    load_case,
    parse_case,
    scale_demand,
)

TWO_BUS = """
function mpc = two
mpc.version = '2';
mpc.baseMVA = 100;
mpc.bus = [
    1 3 0 0 0 0 1 1 0 0 1 1.1 0.9;
    2 1 50 10 0 0 1 1 0 0 1 1.1 0.9;
];
mpc.gen = [
    1 0 0 100 -100 1 100 1 200 0;
];
mpc.branch = [
    1 2 0 0.1 0 0 0 0 0 0 1 -360 360;
];
mpc.gencost = [
    2 0 0 3 0.01 10 0;
];
"""


def _case_text(name):
    return (resources.files("opfrelax") / "data" / f"{name}.m").read_text()


def _count_rows(text, section):
    # independent row count: lines between "mpc.<section> = [" and "];"
    block = re.search(rf"mpc\.{section}\s*=\s*\[(.*?)\];", text, re.S).group(1)
    rows = [ln.split("%")[0].strip() for ln in block.splitlines()]
    return sum(1 for r in rows if r)


def test_two_bus_units():
    net = parse_case(TWO_BUS)
    assert net.n_bus == 2 and net.n_branch == 1 and net.n_gen == 1
    assert net.buses[1].p_demand == 0.5
    assert net.buses[1].q_demand == 0.1
    g = net.generators[0]
    assert g.p_max == 2.0
    # $/MWh^2 coefficients become $/pu^2
    assert math.isclose(g.cost_c2, 0.01 * 100 * 100)
    assert math.isclose(g.cost_c1, 10 * 100)


def test_case14_counts(case14):
    text = _case_text("case14")
    assert case14.n_bus == _count_rows(text, "bus") == 14
    assert case14.n_branch == _count_rows(text, "branch") == 20
    assert case14.n_gen == _count_rows(text, "gen") == 5


def test_missing_gencost():
    text = TWO_BUS.split("mpc.gencost")[0]
    with pytest.raises(CaseFormatError, match="gencost"):
        parse_case(text)


def test_bad_number_reports_line():
    text = TWO_BUS.replace("0 0.1 0 0 0 0 0 0 1", "0 0.1x 0 0 0 0 0 0 1")
    with pytest.raises(CaseFormatError) as exc:
        parse_case(text)
    assert exc.value.line == 13


def test_unknown_bus_reference():
    with pytest.raises(CaseFormatError, match="unknown bus"):
        parse_case(TWO_BUS.replace("1 2 0 0.1", "1 7 0 0.1"))


def test_zero_impedance_rejected():
    with pytest.raises(CaseFormatError, match="zero-impedance"):
        parse_case(TWO_BUS.replace("1 2 0 0.1", "1 2 0 0"))


def test_piecewise_cost_rejected():
    with pytest.raises(CaseFormatError, match="polynomial"):
        parse_case(TWO_BUS.replace("2 0 0 3 0.01 10 0", "1 0 0 2 0 0 100 1000"))


def test_invalid_voltage_limits():
    with pytest.raises(CaseFormatError, match="voltage"):
        parse_case(TWO_BUS.replace("1 1.1 0.9;\n    2", "1 0.8 0.9;\n    2"))


def test_load_bundled_and_path(tmp_path):
    p = tmp_path / "two.m"
    p.write_text(TWO_BUS)
    assert load_case(p).n_bus == 2
    assert load_case("case14.m") == load_case("case14")
    with pytest.raises(FileNotFoundError):
        load_case("no_such_case")


def test_scale_identity_and_values(case14):
    assert scale_demand(case14, 1.0) == case14
    net = parse_case(TWO_BUS)
    doubled = scale_demand(net, 2.0)
    assert (doubled.buses[1].p_demand, doubled.buses[1].q_demand) == (1.0, 0.2)
    assert doubled.branches == net.branches and doubled.generators == net.generators
    with pytest.raises(ValueError):
        scale_demand(net, 0.0)


def test_scale_half_total_case14(case14):
    text = _case_text("case14")
    block = re.search(r"mpc\.bus\s*=\s*\[(.*?)\];", text, re.S).group(1)
    total_mw = sum(float(r.split()[2]) for r in block.splitlines() if r.split("%")[0].strip())
    half = scale_demand(case14, 0.5)
    assert math.isclose(half.p_demand.sum() * case14.base_mva, total_mw / 2, rel_tol=1e-12)


def test_admittance_lossless_line():
    vals = branch_admittances(Branch(1, 2, 0.0, 0.1))
    gff, bff, gft, bft = vals[:4]
    assert gff == 0 and math.isclose(bff, -10) and gft == 0 and math.isclose(bft, 10)


def test_admittance_lossy_line():
    gff = branch_admittances(Branch(1, 2, 0.01, 0.1))[0]
    assert math.isclose(gff, 0.01 / (0.01**2 + 0.1**2))
    assert math.isclose(gff, 0.9901, abs_tol=1e-4)


def test_tap_scales_from_block():
    plain = branch_admittances(Branch(1, 2, 0.01, 0.1))
    tapped = branch_admittances(Branch(1, 2, 0.01, 0.1, tap=2.0))
    assert math.isclose(tapped[0], plain[0] / 4) and math.isclose(tapped[1], plain[1] / 4)
    assert math.isclose(tapped[4], plain[4]) and math.isclose(tapped[5], plain[5])


def _two_bus(br):
    from opfrelax.netcase import Bus, Generator, Network

    buses = [Bus(1, 0, 0, 0, 0, 0.9, 1.1, is_slack=True), Bus(2, 0, 0, 0, 0, 0.9, 1.1)]
    return Network(100.0, buses, [br], [Generator(1, 0, 1, -1, 1)])


def test_flow_coefficients_match_complex_power():
    # S = V conj(I) at both ends vs the linear map on (c_ff, c_tt, c_ft, s_ft)
    rng = np.random.default_rng(3)
    for _ in range(20):
        br = Branch(1, 2, rng.uniform(0, 0.1), rng.uniform(0.01, 0.3), rng.uniform(0, 0.2),
                    tap=rng.uniform(0.9, 1.1), shift=rng.uniform(-10, 10))
        ys = 1 / complex(br.r, br.x)
        t = br.tap * np.exp(1j * np.radians(br.shift))
        vf, vt = rng.normal(size=2) + 1j * rng.normal(size=2)
        i_f = (ys + 0.5j * br.b_charge) / abs(t) ** 2 * vf - ys / np.conj(t) * vt
        i_t = -ys / t * vf + (ys + 0.5j * br.b_charge) * vt
        sf, st_ = vf * np.conj(i_f), vt * np.conj(i_t)
        w = np.conj(vf) * vt
        flows = flow_coefficients(_two_bus(br), 0) @ [abs(vf) ** 2, abs(vt) ** 2, w.real, w.imag]
        assert flows == pytest.approx([sf.real, sf.imag, st_.real, st_.imag], rel=1e-12, abs=1e-12)


def test_bus_shunt_values(case14):
    net = parse_case(TWO_BUS.replace("2 1 50 10 0 0", "2 1 50 10 5 0"))
    assert bus_shunt(net, 2) == (0.05, 0.0)
    assert bus_shunt(net, 1) == (0.0, 0.0)
    assert bus_shunt(case14, 9)[1] > 0
    with pytest.raises(KeyError):
        bus_shunt(case14, 99)


@given(st.integers(0, 10_000), st.integers(3, 9), st.integers(0, 3))
def test_round_trip(seed, n, extra):
    net = parse_case(format_case(random_network(np.random.default_rng(seed), n, extra)))
    assert parse_case(format_case(net)) == net


def test_round_trip_bundled(case14, case30):
    for net in (case14, case30):
        assert parse_case(format_case(net)) == net


@given(st.floats(0, 0.2), st.floats(0.01, 0.5), st.floats(0, 0.5))
def test_mirror_symmetry(r, x, b):
    gff, bff, gft, bft, gtt, btt, gtf, btf = branch_admittances(Branch(1, 2, r, x, b))
    assert (gff, bff, gft, bft) == pytest.approx((gtt, btt, gtf, btf), rel=1e-12, abs=1e-12)


@given(st.floats(0, 0.2), st.floats(0.01, 0.5), st.floats(0, 0.5))
def test_mirror_symmetry_in_lifted_coordinates(r, x, b):
    # swapping ends maps s_ft to -s_ft: the to-side rows mirror the from-side rows
    C = flow_coefficients(_two_bus(Branch(1, 2, r, x, b)), 0)
    assert C[2] == pytest.approx([C[0][1], C[0][0], C[0][2], -C[0][3]], abs=1e-12)
    assert C[3] == pytest.approx([C[1][1], C[1][0], C[1][2], -C[1][3]], abs=1e-12)


@given(st.floats(0.1, 3), st.floats(0.1, 3))
def test_scale_composition(a, b):
    net = parse_case(TWO_BUS)
    lhs = scale_demand(scale_demand(net, a), b)
    rhs = scale_demand(net, a * b)
    for u, v in zip(lhs.buses, rhs.buses):
        assert u.p_demand == pytest.approx(v.p_demand, rel=1e-15)
