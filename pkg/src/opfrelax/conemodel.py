"""SOCP and clique-SDP relaxations of AC optimal power flow as conic programs.

Both builders share one linear skeleton (power balance, branch flows,
voltage and generation limits, line ratings and the quadratic cost
epigraph).  They differ only in where the lifted voltage products live:

* SOCP: each lifted pair ``(c_ij, s_ij)`` sits in a rotated cone
  ``2 (c_ii/sqrt2)(c_jj/sqrt2) >= c_ij^2 + s_ij^2``;
* SDP: every maximal clique of the chordal extension owns the realified
  moment matrix ``[[Re W, -Im W], [Im W, Re W]]`` in one PSD block.

Lifted quantities use bus *indices* (positions in ``net.buses``), with
``c_ij + j s_ij = conj(V_i) V_j`` so that ``s_ji = -s_ij``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .conic import Cone, ConicProgram, SQRT2, packed_index, packed_size, smat
from .graphkit import Clique, build_graph, chordal_extension, maximal_cliques
from .netcase import Network, flow_coefficients

__all__ = [
    "VariableMap",
    "RelaxSolution",
    "build_socp",
    "build_sdp",
    "network_cliques",
    "extract_solution",
    "solve_relaxation",
    "audit_units",
]

# column / row unit tags used by audit_units
VSQ, POWER, COST, AUX = "vsq", "power", "cost", "aux"


@dataclass
class VariableMap:
    """Where every physical quantity lives in the column vector.

    Entries are ``(column, scale)`` pairs: the physical value is
    ``scale * x[column]``.
    """

    method: str
    n_bus: int
    c_ii: list
    pairs: dict  # (i, j), i < j -> ((col_c, scale_c), (col_s, scale_s))
    p_g: np.ndarray
    q_g: np.ndarray
    t_g: np.ndarray  # -1 where the cost is linear
    flows: np.ndarray  # (n_branch, 4) columns of p_ft, q_ft, p_tf, q_tf
    n_cols: int
    cliques: list = field(default_factory=list)  # bus-index tuples
    blocks: list = field(default_factory=list)  # (start column, clique size) per clique
    col_units: list = field(default_factory=list)

    def value(self, x, entry):
        col, scale = entry
        return scale * x[col]

    def pair_entry(self, i, j):
        """``((col_c, scale_c), (col_s, scale_s))`` oriented for ``(i, j)``."""
        if i < j:
            return self.pairs[(i, j)]
        (cc, sc), (cs, ss) = self.pairs[(j, i)]
        return (cc, sc), (cs, -ss)


@dataclass
class RelaxSolution:
    status: str
    method: str
    objective: float = math.nan
    c_ii: np.ndarray | None = None
    pairs: dict = field(default_factory=dict)  # (i, j), i < j -> (c_ij, s_ij)
    p_g: np.ndarray | None = None
    q_g: np.ndarray | None = None
    flows: np.ndarray | None = None  # (n_branch, 4)
    clique_matrices: list = field(default_factory=list)  # Hermitian W per clique (SDP)
    cliques: list = field(default_factory=list)
    ipm: object = None

    @property
    def optimal(self) -> bool:
        return self.status == "optimal"

    def pair(self, i, j):
        """``(c_ij, s_ij)`` for bus indices, with ``s_ji = -s_ij``."""
        if i == j:
            return float(self.c_ii[i]), 0.0
        if i < j:
            return self.pairs[(i, j)]
        c, s = self.pairs[(j, i)]
        return c, -s

    def has_pair(self, i, j) -> bool:
        return i == j or (min(i, j), max(i, j)) in self.pairs


class _Builder:
    def __init__(self):
        self.cones: list[Cone] = []
        self.ncols = 0
        self.rows, self.cols, self.vals = [], [], []
        self.rhs: list[float] = []
        self.labels: list[str] = []
        self.obj: dict[int, float] = {}
        self.offset = 0.0
        self.col_units: list[str] = []

    def cone(self, kind, size, unit=AUX):
        c = Cone(kind, self.ncols, size)
        self.cones.append(c)
        self.ncols = c.stop
        if isinstance(unit, str):
            self.col_units.extend([unit] * c.ncols)
        else:
            self.col_units.extend(unit)
        return c.start

    def row(self, terms, rhs, label):
        r = len(self.rhs)
        for col, val in terms:
            if val != 0.0:
                self.rows.append(r)
                self.cols.append(col)
                self.vals.append(val)
        self.rhs.append(float(rhs))
        self.labels.append(label)

    def program(self):
        c = np.zeros(self.ncols)
        for k, v in self.obj.items():
            c[k] += v
        return ConicProgram.from_triplets(
            c, self.rows, self.cols, self.vals, self.rhs, self.cones, self.offset, self.labels
        )


def network_cliques(net: Network):
    """Maximal cliques of the chordal extension, as bus-index tuples."""
    g = build_graph(net)
    chordal, order = chordal_extension(g)
    cliques = maximal_cliques(chordal, order)
    idx = net.bus_index
    return cliques, [tuple(sorted(idx[b] for b in cl.members)) for cl in cliques]


def _clique_pairs(index_cliques):
    pairs = set()
    for cl in index_cliques:
        for a, i in enumerate(cl):
            for j in cl[a + 1 :]:
                pairs.add((min(i, j), max(i, j)))
    return pairs


def _skeleton(bld: _Builder, net: Network, c_ii, pair):
    """Balance, flow, bound, rating and cost rows shared by both relaxations.

    ``c_ii[i]`` is a ``(col, scale)`` entry and ``pair(i, j)`` returns the
    oriented entries of ``(c_ij, s_ij)``.
    """
    ends = net.branch_ends
    nb, ng = net.n_branch, net.n_gen
    gens = net.generators

    # free columns: dispatch and flows of unrated branches
    rated = np.array([br.rated for br in net.branches], dtype=bool)
    n_free = 2 * ng + 4 * int((~rated).sum())
    free0 = bld.cone("free", n_free, [POWER] * n_free) if n_free else bld.ncols
    p_g = free0 + np.arange(ng)
    q_g = free0 + ng + np.arange(ng)
    flows = np.full((nb, 4), -1, dtype=int)
    nxt = free0 + 2 * ng
    for k in np.flatnonzero(~rated):
        flows[k] = nxt + np.arange(4)
        nxt += 4
    for k in np.flatnonzero(rated):
        for side in (0, 1):
            start = bld.cone("second_order", 3, POWER)
            flows[k, 2 * side : 2 * side + 2] = (start + 1, start + 2)
            bld.row([(start, 1.0)], net.branches[k].s_max, f"rating:{k}:{'ft' if side == 0 else 'tf'}[power]")

    # voltage bounds through slacks
    n = net.n_bus
    vs = bld.cone("nonnegative", 2 * n, VSQ)
    for i, bus in enumerate(net.buses):
        col, sc = c_ii[i]
        bld.row([(col, sc), (vs + 2 * i, -1.0)], bus.v_min**2, f"vmin:{i}[vsq]")
        bld.row([(col, sc), (vs + 2 * i + 1, 1.0)], bus.v_max**2, f"vmax:{i}[vsq]")

    # generation limits
    gs = bld.cone("nonnegative", 4 * ng, POWER) if ng else bld.ncols
    for g, gen in enumerate(gens):
        for k, (col, lo, hi, tag) in enumerate(((p_g[g], gen.p_min, gen.p_max, "p"), (q_g[g], gen.q_min, gen.q_max, "q"))):
            if math.isfinite(lo):
                bld.row([(col, 1.0), (gs + 4 * g + 2 * k, -1.0)], lo, f"{tag}min:{g}[power]")
            if math.isfinite(hi):
                bld.row([(col, 1.0), (gs + 4 * g + 2 * k + 1, 1.0)], hi, f"{tag}max:{g}[power]")

    # branch flow definitions
    for k in range(nb):
        f, t = ends[k]
        coef = flow_coefficients(net, k)
        (cc, scc), (cs_, scs) = pair(f, t)
        lifted = [c_ii[f], c_ii[t], (cc, scc), (cs_, scs)]
        for r in range(4):
            terms = [(flows[k, r], 1.0)]
            terms += [(col, -coef[r, q] * sc) for q, (col, sc) in enumerate(lifted)]
            bld.row(terms, 0.0, f"flow:{k}:{r}[power]")

    # nodal balance
    out_p = [[] for _ in range(n)]
    out_q = [[] for _ in range(n)]
    for k in range(nb):
        f, t = ends[k]
        out_p[f].append(flows[k, 0])
        out_q[f].append(flows[k, 1])
        out_p[t].append(flows[k, 2])
        out_q[t].append(flows[k, 3])
    gen_at = [[] for _ in range(n)]
    for g, bi in enumerate(net.gen_bus):
        gen_at[bi].append(g)
    for i, bus in enumerate(net.buses):
        col, sc = c_ii[i]
        terms = [(p_g[g], 1.0) for g in gen_at[i]] + [(c, -1.0) for c in out_p[i]]
        terms.append((col, -net.g_sh[i] * sc))
        bld.row(terms, bus.p_demand, f"balance_p:{i}[power]")
        terms = [(q_g[g], 1.0) for g in gen_at[i]] + [(c, -1.0) for c in out_q[i]]
        terms.append((col, net.b_sh[i] * sc))
        bld.row(terms, bus.q_demand, f"balance_q:{i}[power]")

    # cost: sum_g t_g + c1 p_g + c0 with t_g >= c2 p_g^2
    t_g = np.full(ng, -1, dtype=int)
    for g, gen in enumerate(gens):
        bld.offset += gen.cost_c0
        if gen.cost_c1:
            bld.obj[p_g[g]] = bld.obj.get(p_g[g], 0.0) + gen.cost_c1
        if gen.cost_c2 > 0:
            start = bld.cone("rotated_second_order", 3, [COST, AUX, AUX])
            t_g[g] = start
            bld.obj[start] = 1.0
            bld.row([(start + 1, 1.0)], 0.5, f"epi_half:{g}[aux]")
            bld.row([(start + 2, 1.0), (p_g[g], -math.sqrt(gen.cost_c2))], 0.0, f"epi_link:{g}[aux]")
    return p_g, q_g, t_g, flows


def build_socp(net: Network, clique_complete: bool = True):
    """SOCP relaxation; returns ``(ConicProgram, VariableMap)``.

    With ``clique_complete`` every pair inside a maximal clique of the
    chordal extension is lifted, otherwise only branch endpoints are.
    """
    bld = _Builder()
    n = net.n_bus
    ends = net.branch_ends
    pairs_needed = {(min(f, t), max(f, t)) for f, t in ends}
    cliques_idx = []
    if clique_complete:
        _, cliques_idx = network_cliques(net)
        pairs_needed |= _clique_pairs(cliques_idx)
    pair_list = sorted(pairs_needed)

    cbase = bld.cone("free", n, VSQ)
    c_ii = [(cbase + i, 1.0) for i in range(n)]
    pairs = {}
    for i, j in pair_list:
        start = bld.cone("rotated_second_order", 4, VSQ)
        bld.row([(start, 1.0), (c_ii[i][0], -1.0 / SQRT2)], 0.0, f"rsoc_u:{i}:{j}[vsq]")
        bld.row([(start + 1, 1.0), (c_ii[j][0], -1.0 / SQRT2)], 0.0, f"rsoc_v:{i}:{j}[vsq]")
        pairs[(i, j)] = ((start + 2, 1.0), (start + 3, 1.0))

    def pair(i, j):
        if i < j:
            return pairs[(i, j)]
        (cc, sc), (cs_, ss) = pairs[(j, i)]
        return (cc, sc), (cs_, -ss)

    p_g, q_g, t_g, flows = _skeleton(bld, net, c_ii, pair)
    prog = bld.program()
    vmap = VariableMap("socp", n, c_ii, pairs, p_g, q_g, t_g, flows, prog.n, list(cliques_idx), [], bld.col_units)
    return prog, vmap


def build_sdp(net: Network, cliques=None):
    """Clique-decomposed SDP relaxation; returns ``(ConicProgram, VariableMap)``.

    ``cliques`` holds :class:`~opfrelax.graphkit.Clique` objects (bus ids)
    or bus-index tuples; by default the maximal cliques of the chordal
    extension are used.
    """
    n = net.n_bus
    if cliques is None:
        _, cl_idx = network_cliques(net)
    else:
        cl_idx = []
        for cl in cliques:
            members = cl.members if isinstance(cl, Clique) else tuple(cl)
            try:
                cl_idx.append(tuple(sorted(net.bus_index[b] for b in members)))
            except KeyError as exc:
                raise ValueError(f"clique references unknown bus {exc.args[0]}") from None
    covered = set()
    for cl in cl_idx:
        covered.update(cl)
    if covered != set(range(n)):
        raise ValueError("cliques do not cover every bus")
    have = _clique_pairs(cl_idx)
    for f, t in net.branch_ends:
        if (min(f, t), max(f, t)) not in have:
            raise ValueError(f"branch {net.buses[f].id}-{net.buses[t].id} is not inside any clique")

    bld = _Builder()
    blocks = []
    c_ii: dict[int, tuple] = {}
    pairs: dict[tuple, tuple] = {}
    h = 1.0 / SQRT2
    for q, cl in enumerate(cl_idx):
        k = len(cl)
        side = 2 * k
        start = bld.cone("psd", side, VSQ)
        blocks.append((start, k))

        def col(a, b, _start=start, _side=side):
            return _start + packed_index(_side, a, b)

        # realified Hermitian structure
        for a in range(k):
            for b in range(a + 1):
                if a == b:
                    bld.row([(col(k + a, k + a), 1.0), (col(a, a), -1.0)], 0.0, f"herm_re:{q}:{a}:{b}[vsq]")
                    bld.row([(col(k + a, a), 1.0)], 0.0, f"herm_im0:{q}:{a}[vsq]")
                else:
                    bld.row([(col(k + a, k + b), 1.0), (col(a, b), -1.0)], 0.0, f"herm_re:{q}:{a}:{b}[vsq]")
                    bld.row([(col(k + a, b), 1.0), (col(k + b, a), 1.0)], 0.0, f"herm_im:{q}:{a}:{b}[vsq]")
        # shared entries: the first clique holding a quantity owns it
        for a, i in enumerate(cl):
            entry = (col(a, a), 1.0)
            if i in c_ii:
                (oc, os_) = c_ii[i]
                bld.row([(entry[0], entry[1]), (oc, -os_)], 0.0, f"share_c:{q}:{i}[vsq]")
            else:
                c_ii[i] = entry
            for b in range(a + 1, k):
                j = cl[b]
                # s_ij = Im W[a, b] = M[k + a, b]
                ec = (col(b, a), h)
                es = (col(k + a, b), h)
                key = (i, j)
                if key in pairs:
                    (oc, osc), (os_col, oss) = pairs[key]
                    bld.row([(ec[0], ec[1]), (oc, -osc)], 0.0, f"share_re:{q}:{i}:{j}[vsq]")
                    bld.row([(es[0], es[1]), (os_col, -oss)], 0.0, f"share_im:{q}:{i}:{j}[vsq]")
                else:
                    pairs[key] = (ec, es)
    c_list = [c_ii[i] for i in range(n)]

    def pair(i, j):
        if i < j:
            return pairs[(i, j)]
        (cc, sc), (cs_, ss) = pairs[(j, i)]
        return (cc, sc), (cs_, -ss)

    p_g, q_g, t_g, flows = _skeleton(bld, net, c_list, pair)
    prog = bld.program()
    vmap = VariableMap("sdp", n, c_list, pairs, p_g, q_g, t_g, flows, prog.n, cl_idx, blocks, bld.col_units)
    return prog, vmap


def extract_solution(prog: ConicProgram, vmap: VariableMap, result) -> RelaxSolution:
    """Read physical quantities out of a solver result."""
    sol = RelaxSolution(status=result.status, method=vmap.method, cliques=list(vmap.cliques), ipm=result)
    if result.status != "optimal":
        return sol
    x = result.x
    if x is None or x.size != vmap.n_cols or prog.n != vmap.n_cols:
        raise ValueError("solution vector does not match the variable map")
    sol.objective = prog.objective(x)
    sol.c_ii = np.array([vmap.value(x, e) for e in vmap.c_ii])
    sol.pairs = {key: (vmap.value(x, ec), vmap.value(x, es)) for key, (ec, es) in vmap.pairs.items()}
    sol.p_g = x[vmap.p_g].copy()
    sol.q_g = x[vmap.q_g].copy()
    sol.flows = x[vmap.flows].copy()
    for (start, k) in vmap.blocks:
        side = 2 * k
        packed = x[start : start + packed_size(side)]
        M = smat(packed, side)
        W = 0.5 * (M[:k, :k] + M[k:, k:]) + 0.5j * (M[k:, :k] - M[:k, k:])
        sol.clique_matrices.append(W)
    return sol


def solve_relaxation(net: Network, method: str, settings=None, clique_complete: bool = True) -> RelaxSolution:
    """Build, solve and extract one relaxation (``"socp"`` or ``"sdp"``)."""
    from .ipm import solve

    if method == "socp":
        prog, vmap = build_socp(net, clique_complete=clique_complete)
    elif method == "sdp":
        prog, vmap = build_sdp(net)
    else:
        raise ValueError(f"unknown relaxation {method!r}")
    result = solve(prog, settings)
    return extract_solution(prog, vmap, result)


_ALLOWED = {
    VSQ: {VSQ},
    POWER: {POWER, VSQ},  # admittance * voltage^2 is power
    "aux": {POWER, AUX, COST},
}


def audit_units(prog: ConicProgram, vmap: VariableMap) -> list[str]:
    """Rows whose columns mix incompatible physical units (empty when clean)."""
    bad = []
    A = prog.A.tocsr()
    for r, label in enumerate(prog.row_labels):
        unit = label[label.index("[") + 1 : label.index("]")]
        allowed = _ALLOWED.get(unit, set())
        cols = A.indices[A.indptr[r] : A.indptr[r + 1]]
        units = {vmap.col_units[c] for c in cols}
        if not units <= allowed:
            bad.append(label)
    return bad
