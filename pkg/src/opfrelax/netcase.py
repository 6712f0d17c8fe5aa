"""Network model and MATPOWER case-file reader.

All stored quantities are per-unit on the system MVA base.  Generator cost
coefficients are rescaled so that ``cost(p)`` with ``p`` in per-unit returns
$/h directly.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, field, replace
from importlib import resources
from pathlib import Path

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components

__all__ = [
    "Bus",
    "Branch",
    "Generator",
    "Network",
    "CaseFormatError",
    "parse_case",
    "load_case",
    "format_case",
    "scale_demand",
    "branch_admittances",
    "bus_shunt",
    "flow_coefficients",
]


class CaseFormatError(ValueError):
    """Raised for malformed or unsupported case data."""

    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


@dataclass(frozen=True)
class Bus:
    id: int
    p_demand: float
    q_demand: float
    gs_shunt: float
    bs_shunt: float
    v_min: float
    v_max: float
    base_kv: float = 0.0
    is_slack: bool = False


@dataclass(frozen=True)
class Branch:
    from_bus: int
    to_bus: int
    r: float
    x: float
    b_charge: float = 0.0
    tap: float = 1.0
    shift: float = 0.0  # degrees
    s_max: float = 0.0  # 0 means unlimited

    @property
    def rated(self) -> bool:
        return self.s_max > 0


@dataclass(frozen=True)
class Generator:
    bus: int
    p_min: float
    p_max: float
    q_min: float
    q_max: float
    cost_c2: float = 0.0
    cost_c1: float = 0.0
    cost_c0: float = 0.0

    def cost(self, p):
        return self.cost_c2 * p * p + self.cost_c1 * p + self.cost_c0


@dataclass(frozen=True, eq=False)
class Network:
    """Validated, immutable bus-branch model.

    Besides the raw element tuples the network carries per-branch pi-model
    admittance arrays (``g_ff`` ... ``b_tf``) and per-bus shunt totals
    (``g_sh``, ``b_sh``), all aligned with ``branches`` and ``buses``.
    """

    base_mva: float
    buses: tuple[Bus, ...]
    branches: tuple[Branch, ...]
    generators: tuple[Generator, ...]
    name: str = "case"
    bus_index: dict = field(init=False, repr=False)
    g_ff: np.ndarray = field(init=False, repr=False)
    b_ff: np.ndarray = field(init=False, repr=False)
    g_ft: np.ndarray = field(init=False, repr=False)
    b_ft: np.ndarray = field(init=False, repr=False)
    g_tt: np.ndarray = field(init=False, repr=False)
    b_tt: np.ndarray = field(init=False, repr=False)
    g_tf: np.ndarray = field(init=False, repr=False)
    b_tf: np.ndarray = field(init=False, repr=False)
    g_sh: np.ndarray = field(init=False, repr=False)
    b_sh: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        set_ = object.__setattr__
        set_(self, "buses", tuple(self.buses))
        set_(self, "branches", tuple(self.branches))
        set_(self, "generators", tuple(self.generators))
        _validate(self)
        set_(self, "bus_index", {b.id: k for k, b in enumerate(self.buses)})
        coeffs = np.array([branch_admittances(br) for br in self.branches], dtype=float)
        coeffs = coeffs.reshape(len(self.branches), 8)
        for k, name in enumerate(("g_ff", "b_ff", "g_ft", "b_ft", "g_tt", "b_tt", "g_tf", "b_tf")):
            arr = coeffs[:, k].copy()
            arr.setflags(write=False)
            set_(self, name, arr)
        g_sh = np.array([b.gs_shunt for b in self.buses])
        b_sh = np.array([b.bs_shunt for b in self.buses])
        g_sh.setflags(write=False)
        b_sh.setflags(write=False)
        set_(self, "g_sh", g_sh)
        set_(self, "b_sh", b_sh)

    @property
    def n_bus(self) -> int:
        return len(self.buses)

    @property
    def n_branch(self) -> int:
        return len(self.branches)

    @property
    def n_gen(self) -> int:
        return len(self.generators)

    @property
    def slack(self) -> int:
        """Index (not id) of the slack bus."""
        return next(k for k, b in enumerate(self.buses) if b.is_slack)

    @property
    def branch_ends(self) -> np.ndarray:
        """(n_branch, 2) array of bus indices."""
        idx = self.bus_index
        return np.array([(idx[br.from_bus], idx[br.to_bus]) for br in self.branches], dtype=int).reshape(-1, 2)

    @property
    def gen_bus(self) -> np.ndarray:
        idx = self.bus_index
        return np.array([idx[g.bus] for g in self.generators], dtype=int)

    @property
    def p_demand(self) -> np.ndarray:
        return np.array([b.p_demand for b in self.buses])

    @property
    def q_demand(self) -> np.ndarray:
        return np.array([b.q_demand for b in self.buses])

    def __eq__(self, other):
        if not isinstance(other, Network):
            return NotImplemented
        return (
            self.base_mva == other.base_mva
            and self.buses == other.buses
            and self.branches == other.branches
            and self.generators == other.generators
        )

    __hash__ = None


def _validate(net: Network) -> None:
    if not net.base_mva > 0:
        raise CaseFormatError("baseMVA must be positive")
    if not net.buses:
        raise CaseFormatError("network has no buses")
    ids = [b.id for b in net.buses]
    if len(set(ids)) != len(ids):
        raise CaseFormatError("duplicate bus ids")
    n_slack = sum(b.is_slack for b in net.buses)
    if n_slack != 1:
        raise CaseFormatError(f"expected exactly one slack bus, found {n_slack}")
    for b in net.buses:
        if not (b.v_min > 0 and b.v_min <= b.v_max):
            raise CaseFormatError(f"bus {b.id}: invalid voltage limits [{b.v_min}, {b.v_max}]")
    known = set(ids)
    for br in net.branches:
        if br.from_bus not in known or br.to_bus not in known:
            raise CaseFormatError(f"branch {br.from_bus}-{br.to_bus} references unknown bus")
        if br.from_bus == br.to_bus:
            raise CaseFormatError(f"branch {br.from_bus}-{br.to_bus} is a self-loop")
        if br.r == 0 and br.x == 0:
            raise CaseFormatError(f"branch {br.from_bus}-{br.to_bus} has zero impedance")
        if not br.tap > 0:
            raise CaseFormatError(f"branch {br.from_bus}-{br.to_bus} has non-positive tap")
    for g in net.generators:
        if g.bus not in known:
            raise CaseFormatError(f"generator references unknown bus {g.bus}")
        if g.p_min > g.p_max or g.q_min > g.q_max:
            raise CaseFormatError(f"generator at bus {g.bus} has inverted limits")
        if g.cost_c2 < 0:
            raise CaseFormatError(f"generator at bus {g.bus} has negative quadratic cost")
    pos = {bid: k for k, bid in enumerate(ids)}
    n = len(ids)
    if net.branches:
        rows = [pos[br.from_bus] for br in net.branches]
        cols = [pos[br.to_bus] for br in net.branches]
        adj = coo_matrix((np.ones(len(rows)), (rows, cols)), shape=(n, n))
        n_comp, _ = connected_components(adj, directed=False)
    else:
        n_comp = n
    if n_comp != 1:
        raise CaseFormatError(f"network is not connected ({n_comp} islands)")


# ---------------------------------------------------------------- parsing

_ASSIGN = re.compile(r"^\s*mpc\.(\w+)\s*=\s*(.*)$")
_SECTIONS = ("bus", "gen", "branch", "gencost")


def _tokens_to_floats(tokens, lineno):
    out = []
    for tok in tokens:
        t = tok.strip().rstrip(",")
        if not t:
            continue
        low = t.lower()
        if low in ("inf", "+inf"):
            out.append(math.inf)
        elif low == "-inf":
            out.append(-math.inf)
        else:
            try:
                out.append(float(t))
            except ValueError:
                raise CaseFormatError(f"cannot parse number {t!r}", lineno) from None
    return out


def _read_sections(text: str):
    """Return (baseMVA, {section: [(lineno, row), ...]})."""
    base_mva = None
    matrices: dict[str, list] = {}
    current = None  # name of the matrix block being read, or "" for ignored blocks
    closing = "]"
    pending: list[float] = []
    pending_line = None

    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("%", 1)[0].strip()
        if not line:
            continue
        if current is None:
            m = _ASSIGN.match(line)
            if not m:
                continue
            name, rhs = m.group(1), m.group(2).strip()
            if rhs.startswith("[") or rhs.startswith("{"):
                closing = "]" if rhs.startswith("[") else "}"
                current = name if (name in _SECTIONS and closing == "]") else ""
                if current:
                    if current in matrices:
                        raise CaseFormatError(f"duplicate section mpc.{name}", lineno)
                    matrices[current] = []
                line = rhs[1:]
                pending, pending_line = [], None
            else:
                if name == "baseMVA":
                    value = rhs.rstrip(";").strip()
                    try:
                        base_mva = float(value)
                    except ValueError:
                        raise CaseFormatError(f"bad baseMVA value {value!r}", lineno) from None
                continue
        # inside a matrix block
        done = False
        if closing in line:
            line, _, tail = line.partition(closing)
            if tail.strip() not in ("", ";"):
                raise CaseFormatError(f"unexpected text after {closing!r}", lineno)
            done = True
        if current:
            pieces = line.split(";")
            for k, piece in enumerate(pieces):
                vals = _tokens_to_floats(piece.replace(",", " ").split(), lineno)
                if vals:
                    if pending_line is None:
                        pending_line = lineno
                    pending.extend(vals)
                is_last = k == len(pieces) - 1
                if not is_last or (done and pending):
                    if pending:
                        matrices[current].append((pending_line, pending))
                    pending, pending_line = [], None
        if done:
            if current and pending:
                matrices[current].append((pending_line, pending))
            current = None
            pending, pending_line = [], None
    if current is not None:
        raise CaseFormatError("unterminated matrix block")
    if base_mva is None:
        raise CaseFormatError("missing section: mpc.baseMVA")
    for name in _SECTIONS:
        if name not in matrices:
            raise CaseFormatError(f"missing section: mpc.{name}")
    return base_mva, matrices


def _need(row, ncol, what, lineno):
    if len(row) < ncol:
        raise CaseFormatError(f"{what} row has {len(row)} columns, need {ncol}", lineno)


def parse_case(text: str, name: str = "case") -> Network:
    """Parse MATPOWER v2 case text into a per-unit :class:`Network`.

    Out-of-service generators and branches (status column 0) are dropped.
    Piecewise-linear costs and polynomial costs above degree two are rejected.
    """
    base, mats = _read_sections(text)

    buses = []
    for lineno, row in mats["bus"]:
        _need(row, 13, "bus", lineno)
        bus_type = int(row[1])
        if bus_type == 4:
            raise CaseFormatError(f"isolated bus {int(row[0])} not supported", lineno)
        buses.append(
            Bus(
                id=int(row[0]),
                p_demand=row[2] / base,
                q_demand=row[3] / base,
                gs_shunt=row[4] / base,
                bs_shunt=row[5] / base,
                v_min=row[12],
                v_max=row[11],
                base_kv=row[9],
                is_slack=bus_type == 3,
            )
        )
    known = {b.id for b in buses}

    gens_raw = []
    for lineno, row in mats["gen"]:
        _need(row, 10, "gen", lineno)
        if int(row[0]) not in known:
            raise CaseFormatError(f"generator references unknown bus {int(row[0])}", lineno)
        gens_raw.append((lineno, row))
    costs = mats["gencost"]
    if len(costs) < len(gens_raw):
        raise CaseFormatError(
            f"gencost has {len(costs)} rows for {len(gens_raw)} generators", costs[-1][0] if costs else None
        )
    generators = []
    for (lineno, row), (clineno, crow) in zip(gens_raw, costs):
        if row[7] <= 0:
            continue
        _need(crow, 4, "gencost", clineno)
        if int(crow[0]) != 2:
            raise CaseFormatError("only polynomial cost model (2) is supported", clineno)
        ncost = int(crow[3])
        coef = crow[4 : 4 + ncost]
        if len(coef) != ncost:
            raise CaseFormatError("gencost row shorter than NCOST", clineno)
        coef = list(reversed(coef))  # c0, c1, c2, ...
        if any(c != 0 for c in coef[3:]):
            raise CaseFormatError("cost polynomials above degree 2 are not supported", clineno)
        coef = (coef + [0.0, 0.0, 0.0])[:3]
        generators.append(
            Generator(
                bus=int(row[0]),
                p_min=row[9] / base,
                p_max=row[8] / base,
                q_min=row[4] / base,
                q_max=row[3] / base,
                cost_c2=coef[2] * base * base,
                cost_c1=coef[1] * base,
                cost_c0=coef[0],
            )
        )

    branches = []
    for lineno, row in mats["branch"]:
        _need(row, 11, "branch", lineno)
        f, t = int(row[0]), int(row[1])
        for b in (f, t):
            if b not in known:
                raise CaseFormatError(f"branch references unknown bus {b}", lineno)
        if row[10] <= 0:
            continue
        if row[2] == 0 and row[3] == 0:
            raise CaseFormatError(f"zero-impedance branch {f}-{t}", lineno)
        branches.append(
            Branch(
                from_bus=f,
                to_bus=t,
                r=row[2],
                x=row[3],
                b_charge=row[4],
                tap=row[8] if row[8] != 0 else 1.0,
                shift=row[9],
                s_max=row[5] / base,
            )
        )
    return Network(base_mva=base, buses=buses, branches=branches, generators=generators, name=name)


def load_case(source) -> Network:
    """Load a case from a path or from a bundled case name (``"case14"``)."""
    path = Path(source)
    if path.exists():
        return parse_case(path.read_text(), name=path.stem)
    stem = path.stem
    bundled = resources.files("opfrelax") / "data" / f"{stem}.m"
    if bundled.is_file():
        return parse_case(bundled.read_text(), name=stem)
    raise FileNotFoundError(f"no case file {source!r}")


def _file_number(v: float, parse, guess: float) -> float:
    """A file value that ``parse`` maps back to ``v`` exactly (searching a few ulps)."""
    if parse(guess) == v or not math.isfinite(guess):
        return guess
    lo = hi = guess
    for _ in range(16):
        lo, hi = math.nextafter(lo, -math.inf), math.nextafter(hi, math.inf)
        for cand in (lo, hi):
            if parse(cand) == v:
                return cand
    return guess


def format_case(net: Network) -> str:
    """Serialize to MATPOWER text; ``parse_case(format_case(net)) == net`` for
    any network that itself came from :func:`parse_case`."""
    base = net.base_mva

    def pu(v, k=1):
        scale = base**k
        return _file_number(v, lambda x: x / scale, v * scale)

    def cost(v, k):
        scale = base**k
        return _file_number(v, lambda x: x * scale, v / scale)

    def line(vals):
        return "\t" + "\t".join(repr(float(v)) if isinstance(v, float) else str(v) for v in vals) + ";"

    out = [f"function mpc = {net.name}", "mpc.version = '2';", f"mpc.baseMVA = {float(base)!r};", "", "mpc.bus = ["]
    for b in net.buses:
        out.append(line([b.id, 3 if b.is_slack else 1, pu(b.p_demand), pu(b.q_demand), pu(b.gs_shunt),
                         pu(b.bs_shunt), 1, 1.0, 0.0, b.base_kv, 1, b.v_max, b.v_min]))
    out += ["];", "", "mpc.gen = ["]
    for g in net.generators:
        out.append(line([g.bus, 0.0, 0.0, pu(g.q_max), pu(g.q_min), 1.0, base, 1, pu(g.p_max), pu(g.p_min)]))
    out += ["];", "", "mpc.branch = ["]
    for br in net.branches:
        out.append(line([br.from_bus, br.to_bus, br.r, br.x, br.b_charge, pu(br.s_max), 0.0, 0.0, br.tap,
                         br.shift, 1, -360.0, 360.0]))
    out += ["];", "", "mpc.gencost = ["]
    for g in net.generators:
        out.append(line([2, 0.0, 0.0, 3, cost(g.cost_c2, 2), cost(g.cost_c1, 1), g.cost_c0]))
    out.append("];")
    return "\n".join(out) + "\n"


# ---------------------------------------------------------------- derived data


def scale_demand(net: Network, lam: float) -> Network:
    """Multiply every bus demand by ``lam``; everything else is unchanged."""
    if not lam > 0:
        raise ValueError(f"demand ratio must be positive, got {lam}")
    buses = [replace(b, p_demand=b.p_demand * lam, q_demand=b.q_demand * lam) for b in net.buses]
    return Network(net.base_mva, buses, net.branches, net.generators, name=net.name)


def branch_admittances(br: Branch):
    """Pi-model admittance entries ``(g_ff, b_ff, g_ft, b_ft, g_tt, b_tt, g_tf, b_tf)``.

    These are the real/imaginary parts of Y_ff, Y_ft, Y_tt, Y_tf in
    ``I_f = Y_ff V_f + Y_ft V_t`` and ``I_t = Y_tf V_f + Y_tt V_t`` with the
    tap ratio on the from side.
    """
    ys = 1.0 / complex(br.r, br.x)
    t = br.tap * np.exp(1j * math.radians(br.shift))
    ytt = ys + 0.5j * br.b_charge
    yff = ytt / (br.tap * br.tap)
    yft = -ys / np.conj(t)
    ytf = -ys / t
    return (yff.real, yff.imag, yft.real, yft.imag, ytt.real, ytt.imag, ytf.real, ytf.imag)


def bus_shunt(net: Network, bus_id: int):
    """Fixed shunt ``(g_sh, b_sh)`` at a bus, per-unit.

    Line charging and series self terms are part of the branch flow
    expressions, so only the bus's own shunt element appears here.
    """
    try:
        k = net.bus_index[bus_id]
    except KeyError:
        raise KeyError(f"unknown bus {bus_id}") from None
    return float(net.g_sh[k]), float(net.b_sh[k])


def flow_coefficients(net: Network, k: int) -> np.ndarray:
    """Linear map from ``(c_ff, c_tt, c_ft, s_ft)`` to ``(p_ft, q_ft, p_tf, q_tf)``.

    ``c_ft + j s_ft = conj(V_f) V_t``.  Returned as a (4, 4) array, rows are
    the flows and columns the lifted quantities.
    """
    gff, bff, gft, bft = net.g_ff[k], net.b_ff[k], net.g_ft[k], net.b_ft[k]
    gtt, btt, gtf, btf = net.g_tt[k], net.b_tt[k], net.g_tf[k], net.b_tf[k]
    return np.array(
        [
            [gff, 0.0, gft, -bft],
            [-bff, 0.0, -bft, -gft],
            [0.0, gtt, gtf, btf],
            [0.0, -btt, -btf, gtf],
        ]
    )
