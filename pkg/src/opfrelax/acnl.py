"""Local solution of the rectangular AC optimal power flow.

Voltages are carried as ``V = e + j f``.  Every power quantity is linear in
the lifted vector ``L = (c_ii, c_ft, s_ft)`` with ``c_ft + j s_ft =
conj(V_f) V_t``, and each entry of ``L`` is a quadratic form ``v'H v / 2`` in
``v = (e, f)`` with a constant ``H``.  That makes exact first and second
derivatives cheap, which the primal-dual barrier method below relies on.
"""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .netcase import Network, branch_admittances, flow_coefficients

__all__ = [
    "VoltageProfile",
    "NlResult",
    "NlSettings",
    "AcModel",
    "solve_acopf",
    "best_local_solution",
    "recover_voltage",
    "flat_profile",
    "ac_residual",
]


@dataclass(frozen=True, eq=False)
class VoltageProfile:
    """Rectangular bus voltages with the slack bus on the positive real axis."""

    e: np.ndarray
    f: np.ndarray
    slack: int

    def __post_init__(self):
        e = np.array(self.e, dtype=float)
        f = np.array(self.f, dtype=float)
        if e.shape != f.shape or e.ndim != 1:
            raise ValueError("e and f must be 1-d arrays of equal length")
        if not 0 <= self.slack < e.size:
            raise ValueError("slack index out of range")
        if not e[self.slack] > 0 or abs(f[self.slack]) > 1e-9 * max(1.0, e[self.slack]):
            raise ValueError("slack bus must have f = 0 and e > 0")
        f[self.slack] = 0.0
        e.setflags(write=False)
        f.setflags(write=False)
        object.__setattr__(self, "e", e)
        object.__setattr__(self, "f", f)

    @classmethod
    def from_complex(cls, v, slack: int) -> "VoltageProfile":
        """Rotate phasors so the slack angle is zero, then split them."""
        v = np.asarray(v, dtype=complex)
        ref = v[slack]
        if ref == 0:
            raise ValueError("slack voltage is zero")
        v = v * (abs(ref) / ref)
        return cls(v.real, v.imag, slack)

    @property
    def complex(self) -> np.ndarray:
        return self.e + 1j * self.f

    @property
    def magnitude(self) -> np.ndarray:
        return np.hypot(self.e, self.f)

    @property
    def angle_deg(self) -> np.ndarray:
        return np.degrees(np.arctan2(self.f, self.e))


def flat_profile(net: Network) -> VoltageProfile:
    n = net.n_bus
    return VoltageProfile(np.ones(n), np.zeros(n), net.slack)


@dataclass
class NlResult:
    status: str  # "local_optimal" or "infeasible_or_stalled"
    voltage: VoltageProfile | None
    p_g: np.ndarray
    q_g: np.ndarray
    objective: float
    max_violation: float
    iterations: int = 0
    message: str = ""
    history: list = field(default_factory=list, repr=False)

    @property
    def ok(self) -> bool:
        return self.status == "local_optimal"


@dataclass(frozen=True)
class NlSettings:
    max_iterations: int = 150
    feas_tol: float = 1e-9
    grad_tol: float = 1e-7
    comp_tol: float = 1e-8
    cost_tol: float = 1e-9
    violation_tol: float = 1e-6
    sigma: float = 0.1
    step_fraction: float = 0.99995
    min_step: float = 1e-10
    stall_iterations: int = 40


# ---------------------------------------------------------------- model


class AcModel:
    """Constraint functions of the ACOPF over ``x = (e, f, p_g, q_g)``."""

    def __init__(self, net: Network):
        self.net = net
        n, nb, ng = net.n_bus, net.n_branch, net.n_gen
        self.n, self.nb, self.ng = n, nb, ng
        self.nv = 2 * n
        self.nx = 2 * n + 2 * ng
        self.nl = n + 2 * nb
        ends = net.branch_ends
        self.ends = ends

        # quadratic-form tensor: entry j of L equals 0.5 * v' H_j v
        tj, ta, tb, tv = [], [], [], []

        def put(j, a, b, val):
            tj.append(j)
            ta.append(a)
            tb.append(b)
            tv.append(val)

        for i in range(n):
            put(i, i, i, 2.0)
            put(i, n + i, n + i, 2.0)
        for k, (fb, tbus) in enumerate(ends):
            jc, js = n + k, n + nb + k
            ef, ff, et, ft = fb, n + fb, tbus, n + tbus
            for a, b in ((ef, et), (ff, ft)):
                put(jc, a, b, 1.0)
                put(jc, b, a, 1.0)
            put(js, ef, ft, 1.0)
            put(js, ft, ef, 1.0)
            put(js, ff, et, -1.0)
            put(js, et, ff, -1.0)
        self._tj = np.array(tj)
        self._ta = np.array(ta)
        self._tb = np.array(tb)
        self._tv = np.array(tv, dtype=float)

        # flows = F @ L, rows (p_ft, q_ft, p_tf, q_tf) per branch
        fr, fc, fv = [], [], []
        for k, (fb, tbus) in enumerate(ends):
            C = flow_coefficients(net, k)
            cols = (fb, tbus, n + k, n + nb + k)
            for r in range(4):
                for q in range(4):
                    if C[r, q] != 0.0:
                        fr.append(4 * k + r)
                        fc.append(cols[q])
                        fv.append(C[r, q])
        self.F = sp.csr_matrix((fv, (fr, fc)), shape=(4 * nb, self.nl))

        # nodal balance: G_p @ L + Cg p_g - p_d = 0, same for q
        inc_r, inc_c = [], []
        for k, (fb, tbus) in enumerate(ends):
            inc_r += [fb, tbus]
            inc_c += [4 * k, 4 * k + 2]
        inc_p = sp.csr_matrix((np.ones(len(inc_r)), (inc_r, inc_c)), shape=(n, 4 * nb))
        inc_q = sp.csr_matrix((np.ones(len(inc_r)), (inc_r, np.array(inc_c) + 1)), shape=(n, 4 * nb))
        eye_c = sp.csr_matrix((np.ones(n), (np.arange(n), np.arange(n))), shape=(n, self.nl))
        self.Bp = (-(inc_p @ self.F) - sp.diags(net.g_sh) @ eye_c).tocsr()
        self.Bq = (-(inc_q @ self.F) + sp.diags(net.b_sh) @ eye_c).tocsr()
        self.Cg = sp.csr_matrix((np.ones(ng), (net.gen_bus, np.arange(ng))), shape=(n, ng))

        gens = net.generators
        self.c2 = np.array([g.cost_c2 for g in gens])
        self.c1 = np.array([g.cost_c1 for g in gens])
        self.c0 = np.array([g.cost_c0 for g in gens])
        self.pmin = np.array([g.p_min for g in gens])
        self.pmax = np.array([g.p_max for g in gens])
        self.qmin = np.array([g.q_min for g in gens])
        self.qmax = np.array([g.q_max for g in gens])
        self.vmin = np.array([b.v_min for b in net.buses])
        self.vmax = np.array([b.v_max for b in net.buses])
        self.rated = np.array([br.rated for br in net.branches], dtype=bool)
        self.smax = np.array([br.s_max for br in net.branches])

    # -- slices of x
    def split(self, x):
        n, ng = self.n, self.ng
        return x[:n], x[n : 2 * n], x[2 * n : 2 * n + ng], x[2 * n + ng :]

    def pack(self, v: VoltageProfile, p_g, q_g):
        return np.concatenate([v.e, v.f, p_g, q_g])

    # -- lifted quantities
    def lifted(self, v):
        vals = 0.5 * self._tv * v[self._ta] * v[self._tb]
        return np.bincount(self._tj, weights=vals, minlength=self.nl)

    def lifted_jacobian(self, v):
        return sp.csr_matrix((self._tv * v[self._tb], (self._tj, self._ta)), shape=(self.nl, self.nv))

    def lifted_hessian(self, w):
        """``sum_j w_j H_j`` as a sparse (2n, 2n) matrix."""
        return sp.csr_matrix((w[self._tj] * self._tv, (self._ta, self._tb)), shape=(self.nv, self.nv))

    # -- objective
    def cost(self, x):
        p = self.split(x)[2]
        return float(np.sum(self.c2 * p * p + self.c1 * p + self.c0))

    def cost_grad(self, x):
        g = np.zeros(self.nx)
        p = self.split(x)[2]
        g[2 * self.n : 2 * self.n + self.ng] = 2 * self.c2 * p + self.c1
        return g

    def cost_hess(self):
        d = np.zeros(self.nx)
        d[2 * self.n : 2 * self.n + self.ng] = 2 * self.c2
        return sp.diags(d)

    # -- nodal balance
    def balance(self, x):
        """``(2n,)`` vector of real then reactive balance residuals (pu)."""
        v = x[: self.nv]
        _, _, p, q = self.split(x)
        L = self.lifted(v)
        rp = self.Bp @ L + self.Cg @ p - self.net.p_demand
        rq = self.Bq @ L + self.Cg @ q - self.net.q_demand
        return np.concatenate([rp, rq])

    def balance_jacobian(self, x):
        v = x[: self.nv]
        JL = self.lifted_jacobian(v)
        top = sp.hstack([self.Bp @ JL, self.Cg, sp.csr_matrix((self.n, self.ng))])
        bot = sp.hstack([self.Bq @ JL, sp.csr_matrix((self.n, self.ng)), self.Cg])
        return sp.vstack([top, bot]).tocsr()

    def balance_hessian(self, lam):
        w = self.Bp.T @ lam[: self.n] + self.Bq.T @ lam[self.n :]
        return self._embed(self.lifted_hessian(w))

    def _embed(self, Hv):
        Hv = Hv.tocoo()
        return sp.csr_matrix((Hv.data, (Hv.row, Hv.col)), shape=(self.nx, self.nx))

    # -- branch flows
    def flows(self, x):
        return (self.F @ self.lifted(x[: self.nv])).reshape(-1, 4)

    # -- inequality set h(x) <= 0
    def inequalities(self, x):
        v = x[: self.nv]
        _, _, p, q = self.split(x)
        L = self.lifted(v)
        cii = L[: self.n]
        fl = (self.F @ L).reshape(-1, 4)[self.rated]
        s2 = self.smax[self.rated] ** 2
        return np.concatenate([
            self.vmin**2 - cii,
            cii - self.vmax**2,
            self.pmin - p,
            p - self.pmax,
            self.qmin - q,
            q - self.qmax,
            fl[:, 0] ** 2 + fl[:, 1] ** 2 - s2,
            fl[:, 2] ** 2 + fl[:, 3] ** 2 - s2,
        ])

    def _rated_rows(self):
        idx = np.flatnonzero(self.rated)
        return idx

    def inequality_jacobian(self, x):
        v = x[: self.nv]
        n, ng = self.n, self.ng
        JL = self.lifted_jacobian(v)
        L = self.lifted(v)
        Jc = JL[:n]
        zg = sp.csr_matrix((n, 2 * ng))
        Jv = sp.vstack([sp.hstack([-Jc, zg]), sp.hstack([Jc, zg])])
        eye = sp.identity(ng, format="csr")
        zv = sp.csr_matrix((ng, self.nv))
        zn = sp.csr_matrix((ng, ng))
        Jg = sp.vstack([
            sp.hstack([zv, -eye, zn]),
            sp.hstack([zv, eye, zn]),
            sp.hstack([zv, zn, -eye]),
            sp.hstack([zv, zn, eye]),
        ])
        rows = self._rated_rows()
        blocks = [Jv, Jg]
        if rows.size:
            fl = (self.F @ L).reshape(-1, 4)
            JF = self.F @ JL  # (4 nb, 2n)
            for a, b in ((0, 1), (2, 3)):
                ra, rb = 4 * rows + a, 4 * rows + b
                J = sp.diags(2 * fl[rows, a]) @ JF[ra] + sp.diags(2 * fl[rows, b]) @ JF[rb]
                blocks.append(sp.hstack([J, sp.csr_matrix((rows.size, 2 * ng))]))
        return sp.vstack(blocks).tocsr()

    def inequality_hessian(self, x, mu):
        v = x[: self.nv]
        n = self.n
        # voltage rows are linear in L
        w = np.zeros(self.nl)
        w[:n] = mu[n : 2 * n] - mu[:n]
        H = self.lifted_hessian(w)
        rows = self._rated_rows()
        if rows.size:
            nr = rows.size
            off = 2 * n + 4 * self.ng
            m1, m2 = mu[off : off + nr], mu[off + nr : off + 2 * nr]
            JL = self.lifted_jacobian(v)
            fl = (self.F @ self.lifted(v)).reshape(-1, 4)
            JF = (self.F @ JL).tocsr()
            wf = np.zeros(4 * self.nb)
            for m, (a, b) in ((m1, (0, 1)), (m2, (2, 3))):
                wf[4 * rows + a] += 2 * m * fl[rows, a]
                wf[4 * rows + b] += 2 * m * fl[rows, b]
                for c in (a, b):
                    Jc = JF[4 * rows + c]
                    H = H + Jc.T @ sp.diags(2 * m) @ Jc
            H = H + self.lifted_hessian(self.F.T @ wf)
        return self._embed(H)


# ---------------------------------------------------------------- solver


def _equalities(model: AcModel, x, fixed_p, fixed_q):
    g = model.balance(x)
    extra = [x[model.n + model.net.slack]]  # slack f = 0
    _, _, p, q = model.split(x)
    extra += list(p[fixed_p] - model.pmax[fixed_p])
    extra += list(q[fixed_q] - model.qmax[fixed_q])
    return np.concatenate([g, extra])


def _equality_jacobian(model: AcModel, x, fixed_p, fixed_q):
    J = model.balance_jacobian(x)
    rows = [sp.csr_matrix(([1.0], ([0], [model.n + model.net.slack])), shape=(1, model.nx))]
    base_p = 2 * model.n
    for k in np.flatnonzero(fixed_p):
        rows.append(sp.csr_matrix(([1.0], ([0], [base_p + k])), shape=(1, model.nx)))
    base_q = 2 * model.n + model.ng
    for k in np.flatnonzero(fixed_q):
        rows.append(sp.csr_matrix(([1.0], ([0], [base_q + k])), shape=(1, model.nx)))
    return sp.vstack([J] + rows).tocsr()


def solve_acopf(net: Network, start: VoltageProfile | None = None, settings: NlSettings | None = None) -> NlResult:
    """Primal-dual log-barrier Newton method from ``start`` (flat if omitted)."""
    st = settings or NlSettings()
    model = AcModel(net)
    if start is None:
        start = flat_profile(net)
    if start.slack != net.slack or start.e.size != net.n_bus:
        raise ValueError("start profile does not match the network")

    fixed_p = (model.pmax - model.pmin) <= 1e-10
    fixed_q = (model.qmax - model.qmin) <= 1e-10
    x = model.pack(start, 0.5 * (model.pmin + model.pmax), 0.5 * (model.qmin + model.qmax))

    # cost scaling keeps the Lagrangian gradient near unit size
    scale = 1.0 / max(1.0, float(np.abs(2 * model.c2 * model.pmax + model.c1).max(initial=1.0)))

    # ignore the bound pairs that are fixed by equalities
    h_keep = np.ones(model.inequalities(x).size, dtype=bool)
    n, ng = model.n, model.ng
    h_keep[2 * n : 2 * n + ng] &= ~fixed_p
    h_keep[2 * n + ng : 2 * n + 2 * ng] &= ~fixed_p
    h_keep[2 * n + 2 * ng : 2 * n + 3 * ng] &= ~fixed_q
    h_keep[2 * n + 3 * ng : 2 * n + 4 * ng] &= ~fixed_q
    keep_idx = np.flatnonzero(h_keep)

    def h_of(x):
        return model.inequalities(x)[keep_idx]

    def dh_of(x):
        return model.inequality_jacobian(x)[keep_idx]

    def d2h_of(x, mu):
        full = np.zeros(h_keep.size)
        full[keep_idx] = mu
        return model.inequality_hessian(x, full)

    h = h_of(x)
    z = np.maximum(-h, 1.0)
    gamma = 1.0
    mu = gamma / z
    g = _equalities(model, x, fixed_p, fixed_q)
    lam = np.zeros(g.size)
    niq = h.size
    f_prev = model.cost(x) * scale
    history = []
    best_merit, best_it = math.inf, 0
    recent = []
    status, message = "infeasible_or_stalled", "iteration limit"
    it = 0

    def kkt_vector(x, z, lam, mu, gamma):
        g = _equalities(model, x, fixed_p, fixed_q)
        h = h_of(x)
        Lx = model.cost_grad(x) * scale + _equality_jacobian(model, x, fixed_p, fixed_q).T @ lam + dh_of(x).T @ mu
        return np.concatenate([Lx, g, h + z, z * mu - gamma])

    for it in range(1, st.max_iterations + 1):
        g = _equalities(model, x, fixed_p, fixed_q)
        dg = _equality_jacobian(model, x, fixed_p, fixed_q)
        h = h_of(x)
        dh = dh_of(x)
        Lx = model.cost_grad(x) * scale + dg.T @ lam + dh.T @ mu
        Lxx = model.cost_hess() * scale + model.balance_hessian(lam[: 2 * n]) + d2h_of(x, mu)
        zinv = 1.0 / z
        M = Lxx + dh.T @ sp.diags(mu * zinv) @ dh
        N = Lx + dh.T @ (zinv * (mu * h + gamma))
        K = sp.bmat([[M, dg.T], [dg, None]], format="csc")
        rhs = np.concatenate([-N, -g])
        try:
            sol = spla.splu(K).solve(rhs)
        except RuntimeError:
            reg = sp.diags(np.concatenate([np.full(model.nx, 1e-8), np.full(g.size, -1e-8)]))
            try:
                sol = spla.splu((K + reg).tocsc()).solve(rhs)
            except RuntimeError:
                message = "singular Newton system"
                break
        if not np.all(np.isfinite(sol)):
            message = "non-finite Newton step"
            break
        dx, dlam = sol[: model.nx], sol[model.nx :]
        dz = -h - z - dh @ dx
        dmu = -mu + zinv * (gamma - mu * dz)

        neg = dz < 0
        ap = min(st.step_fraction * float(np.min(-z[neg] / dz[neg])), 1.0) if neg.any() else 1.0
        neg = dmu < 0
        ad = min(st.step_fraction * float(np.min(-mu[neg] / dmu[neg])), 1.0) if neg.any() else 1.0
        # a common step keeps (dx, dz, dlam, dmu) a Newton direction for the residual
        ap = ad = min(ap, ad)

        # backtrack on the norm of the perturbed KKT residual; comparing with the
        # worst of the last few norms lets the iterates leave narrow valleys
        r0 = np.linalg.norm(kkt_vector(x, z, lam, mu, gamma))
        recent.append(r0)
        rref = max(recent[-5:])
        t = 1.0
        while True:
            xn, zn = x + t * ap * dx, z + t * ap * dz
            ln, mn = lam + t * ad * dlam, mu + t * ad * dmu
            rn = np.linalg.norm(kkt_vector(xn, zn, ln, mn, gamma))
            if np.isfinite(rn) and rn <= (1.0 - 1e-4 * t) * rref:
                break
            t *= 0.5
            if t * max(ap, ad) < st.min_step:
                break
        if t * max(ap, ad) < st.min_step:
            message = "line search failed"
            break
        x, z, lam, mu = xn, zn, ln, mn
        gamma = st.sigma * float(z @ mu) / niq if niq else 0.0

        g = _equalities(model, x, fixed_p, fixed_q)
        h = h_of(x)
        Lx = model.cost_grad(x) * scale + _equality_jacobian(model, x, fixed_p, fixed_q).T @ lam + dh_of(x).T @ mu
        f = model.cost(x) * scale
        nx_ = max(1.0, float(np.abs(x).max()))
        feas = max(float(np.abs(g).max(initial=0.0)), float(h.max(initial=0.0)))
        grad = float(np.abs(Lx).max()) / (1.0 + max(float(np.abs(lam).max(initial=0.0)), float(np.abs(mu).max(initial=0.0))))
        comp = float(z @ mu) / nx_
        costc = abs(f - f_prev) / (1.0 + abs(f_prev))
        f_prev = f
        history.append(dict(iteration=it, objective=f / scale, feas=feas, grad=grad, comp=comp, step=t * ap))
        if not np.all(np.isfinite(x)) or nx_ > 1e8:
            message = "iterates diverged"
            break
        if feas <= st.feas_tol and grad <= st.grad_tol and comp <= st.comp_tol and costc <= st.cost_tol:
            status, message = "local_optimal", "converged"
            break
        merit = max(feas, grad, comp)
        if merit < 0.5 * best_merit:
            best_merit, best_it = merit, it
        elif it - best_it >= st.stall_iterations:
            message = "no progress toward a KKT point"
            break

    e, fv, p, q = model.split(x)
    try:
        prof = VoltageProfile.from_complex(e + 1j * fv, net.slack)
    except ValueError:
        prof = None
    viol = ac_residual(net, prof, (p, q)) if prof is not None else math.inf
    if status == "local_optimal" and not viol <= st.violation_tol:
        status, message = "infeasible_or_stalled", f"converged point violates constraints by {viol:.2e}"
    return NlResult(
        status=status,
        voltage=prof,
        p_g=p.copy(),
        q_g=q.copy(),
        objective=model.cost(x),
        max_violation=viol,
        iterations=it,
        message=message,
        history=history,
    )


def best_local_solution(net: Network, relaxation=None, settings: NlSettings | None = None) -> NlResult:
    """Run from the relaxation-recovered start (when given) and from a flat
    start; return the better locally optimal result."""
    runs = []
    if relaxation is not None and relaxation.optimal:
        try:
            runs.append(solve_acopf(net, recover_voltage(relaxation, net), settings))
        except (KeyError, ValueError):
            pass
    runs.append(solve_acopf(net, None, settings))
    good = [r for r in runs if r.ok]
    if good:
        return min(good, key=lambda r: r.objective)
    return runs[0]


# ---------------------------------------------------------------- recovery


def recover_voltage(sol, net: Network, method: str | None = None) -> VoltageProfile:
    """Voltage phasors from lifted values: magnitudes from ``c_ii``, angles
    accumulated over a BFS tree from the slack bus."""
    if not sol.optimal:
        raise ValueError("relaxation is not optimal")
    if method is not None and method != sol.method:
        raise ValueError(f"solution came from {sol.method!r}, not {method!r}")
    n = net.n_bus
    adj = [set() for _ in range(n)]
    for a, b in net.branch_ends:
        adj[a].add(b)
        adj[b].add(a)
    mag = np.sqrt(np.maximum(sol.c_ii, 0.0))
    theta = np.full(n, np.nan)
    root = net.slack
    theta[root] = 0.0
    queue = deque([root])
    while queue:
        i = queue.popleft()
        for j in sorted(adj[i]):
            if not np.isnan(theta[j]):
                continue
            if not sol.has_pair(i, j):
                raise KeyError(f"no lifted value for tree edge ({i}, {j})")
            c, s = sol.pair(i, j)
            theta[j] = theta[i] + math.atan2(s, c)
            queue.append(j)
    if np.isnan(theta).any():
        raise ValueError("network is disconnected")
    return VoltageProfile(mag * np.cos(theta), mag * np.sin(theta), root)


# ---------------------------------------------------------------- feasibility


def _branch_power(net: Network, v: np.ndarray):
    sf = np.empty(net.n_branch, complex)
    st = np.empty(net.n_branch, complex)
    for k, br in enumerate(net.branches):
        gff, bff, gft, bft, gtt, btt, gtf, btf = branch_admittances(br)
        i, j = net.bus_index[br.from_bus], net.bus_index[br.to_bus]
        i_f = complex(gff, bff) * v[i] + complex(gft, bft) * v[j]
        i_t = complex(gtf, btf) * v[i] + complex(gtt, btt) * v[j]
        sf[k] = v[i] * np.conj(i_f)
        st[k] = v[j] * np.conj(i_t)
    return sf, st


def ac_residual(net: Network, v: VoltageProfile, dispatch) -> float:
    """Largest nodal power mismatch plus largest bound violation (pu)."""
    p_g, q_g = (np.asarray(a, dtype=float) for a in dispatch)
    V = v.complex
    sf, st = _branch_power(net, V)
    inj = np.zeros(net.n_bus, complex)
    np.add.at(inj, net.branch_ends[:, 0], sf)
    np.add.at(inj, net.branch_ends[:, 1], st)
    inj += np.conj(net.g_sh + 1j * net.b_sh) * np.abs(V) ** 2
    gen = np.zeros(net.n_bus, complex)
    np.add.at(gen, net.gen_bus, p_g + 1j * q_g)
    mis = gen - (net.p_demand + 1j * net.q_demand) - inj
    balance = float(max(np.abs(mis.real).max(), np.abs(mis.imag).max()))

    vm = np.abs(V)
    vmin = np.array([b.v_min for b in net.buses])
    vmax = np.array([b.v_max for b in net.buses])
    gens = net.generators
    viol = [
        np.maximum(vmin - vm, 0.0),
        np.maximum(vm - vmax, 0.0),
        np.maximum(np.array([g.p_min for g in gens]) - p_g, 0.0),
        np.maximum(p_g - np.array([g.p_max for g in gens]), 0.0),
        np.maximum(np.array([g.q_min for g in gens]) - q_g, 0.0),
        np.maximum(q_g - np.array([g.q_max for g in gens]), 0.0),
    ]
    rated = np.array([br.rated for br in net.branches], dtype=bool)
    if rated.any():
        smax = np.array([br.s_max for br in net.branches])[rated]
        viol.append(np.maximum(np.abs(sf[rated]) - smax, 0.0))
        viol.append(np.maximum(np.abs(st[rated]) - smax, 0.0))
    bound = max((float(a.max(initial=0.0)) for a in viol), default=0.0)
    return balance + bound
