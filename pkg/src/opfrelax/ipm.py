"""Primal-dual interior-point solver for :class:`~opfrelax.conic.ConicProgram`.

The method runs Mehrotra predictor-corrector steps on the homogeneous
self-dual embedding

    A x - b tau = 0,   A'y + s - c tau = 0,   b'y - c'x - kappa = 0,

with Nesterov-Todd scaling for every cone, so optimality and both kinds of
infeasibility come out of one loop.  Rotated cones are mapped to standard
second-order cones by an orthogonal change of variables before solving.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as la
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .conic import Cone, ConicProgram, SQRT2, _packed_rc, packed_size, smat, svec

__all__ = [
    "IpmSettings",
    "IpmResult",
    "PresolveError",
    "solve",
    "kkt_residuals",
    "check_certificate",
]


class PresolveError(ValueError):
    """Equality rows removed in presolve are inconsistent."""


@dataclass(frozen=True)
class IpmSettings:
    max_iterations: int = 200
    feas_tol: float = 1e-8
    gap_tol: float = 1e-8
    step_fraction: float = 0.99
    infeas_tol: float = 1e-8
    equilibrate: bool = True
    dense_limit: int = 1500
    log: object = None  # file-like; one line per iteration when set

    def __post_init__(self):
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be positive")
        for name in ("feas_tol", "gap_tol", "infeas_tol"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if not 0 < self.step_fraction < 1:
            raise ValueError("step_fraction must lie in (0, 1)")


@dataclass
class IpmResult:
    status: str
    x: np.ndarray | None
    y: np.ndarray | None
    s: np.ndarray | None
    primal_objective: float = math.nan
    dual_objective: float = math.nan
    iterations: int = 0
    primal_residual: float = math.nan
    dual_residual: float = math.nan
    gap: float = math.nan
    certificate: np.ndarray | None = None
    solve_time: float = 0.0
    history: list = field(default_factory=list)

    @property
    def optimal(self) -> bool:
        return self.status == "optimal"


# ---------------------------------------------------------------- cone algebra


class _ConeSet:
    """Vectorised cone operations, grouped by cone kind and size."""

    def __init__(self, cones, n):
        self.n = n
        free, nn = [], []
        soc: dict[int, list] = {}
        psd: dict[int, list] = {}
        for cone in cones:
            cols = np.arange(cone.start, cone.stop)
            if cone.kind == "free":
                free.append(cols)
            elif cone.kind == "nonnegative":
                nn.append(cols)
            elif cone.kind == "second_order":
                soc.setdefault(cone.size, []).append(cols)
            elif cone.kind == "psd":
                psd.setdefault(cone.size, []).append(cols)
            else:  # rotated cones are transformed away before this point
                raise ValueError(f"unexpected cone kind {cone.kind}")
        self.free = np.concatenate(free) if free else np.zeros(0, int)
        self.nn = np.concatenate(nn) if nn else np.zeros(0, int)
        self.soc = {d: np.vstack(v) for d, v in sorted(soc.items())}
        self.psd = {k: np.vstack(v) for k, v in sorted(psd.items())}
        self.degree = self.nn.size + sum(v.shape[0] for v in self.soc.values()) + sum(
            k * v.shape[0] for k, v in self.psd.items()
        )
        self.diag_pos = {}
        for k in self.psd:
            r, c = _packed_rc(k)
            self.diag_pos[k] = np.flatnonzero(r == c)

    def identity(self):
        e = np.zeros(self.n)
        e[self.nn] = 1.0
        for idx in self.soc.values():
            e[idx[:, 0]] = 1.0
        for k, idx in self.psd.items():
            e[idx[:, self.diag_pos[k]]] = 1.0
        return e

    def margins(self, v):
        """Smallest interior margin per cone family (for diagnostics)."""
        out = math.inf
        if self.nn.size:
            out = min(out, float(v[self.nn].min()))
        for idx in self.soc.values():
            u = v[idx]
            out = min(out, float((u[:, 0] - np.linalg.norm(u[:, 1:], axis=1)).min()))
        for k, idx in self.psd.items():
            out = min(out, float(np.linalg.eigvalsh(smat(v[idx], k))[:, 0].min()))
        return out

    def dot(self, u, v):
        return float(u @ v) - float(u[self.free] @ v[self.free])

    # Jordan products in the scaled space, where the PSD part of lambda
    # is diagonal and stored as its eigenvalues.

    def lam_prod(self, sc, u):
        out = np.zeros(self.n)
        out[self.nn] = sc.nn_lam * u[self.nn]
        for d, idx in self.soc.items():
            lam = sc.soc_lam[d]
            uu = u[idx]
            res = np.empty_like(uu)
            res[:, 0] = np.einsum("ij,ij->i", lam, uu)
            res[:, 1:] = lam[:, :1] * uu[:, 1:] + uu[:, :1] * lam[:, 1:]
            out[idx] = res
        for k, idx in self.psd.items():
            sig = sc.psd_sig[k]
            r, c = _packed_rc(k)
            out[idx] = u[idx] * 0.5 * (sig[:, r] + sig[:, c])
        return out

    def lam_div(self, sc, r):
        """Solve ``lambda o u = r`` for ``u``."""
        out = np.zeros(self.n)
        out[self.nn] = r[self.nn] / sc.nn_lam
        for d, idx in self.soc.items():
            lam = sc.soc_lam[d]
            rr = r[idx]
            det = _soc_det(lam)
            u0 = (lam[:, 0] * rr[:, 0] - np.einsum("ij,ij->i", lam[:, 1:], rr[:, 1:])) / det
            res = np.empty_like(rr)
            res[:, 0] = u0
            res[:, 1:] = (rr[:, 1:] - u0[:, None] * lam[:, 1:]) / lam[:, :1]
            out[idx] = res
        for k, idx in self.psd.items():
            sig = sc.psd_sig[k]
            r_, c_ = _packed_rc(k)
            out[idx] = r[idx] * 2.0 / (sig[:, r_] + sig[:, c_])
        return out

    def prod(self, u, v):
        """General Jordan product ``u o v``."""
        out = np.zeros(self.n)
        out[self.nn] = u[self.nn] * v[self.nn]
        for d, idx in self.soc.items():
            uu, vv = u[idx], v[idx]
            res = np.empty_like(uu)
            res[:, 0] = np.einsum("ij,ij->i", uu, vv)
            res[:, 1:] = uu[:, :1] * vv[:, 1:] + vv[:, :1] * uu[:, 1:]
            out[idx] = res
        for k, idx in self.psd.items():
            U, V = smat(u[idx], k), smat(v[idx], k)
            P = U @ V
            out[idx] = svec(0.5 * (P + np.swapaxes(P, 1, 2)))
        return out

    def max_step_scaled(self, sc, d):
        """Largest alpha with ``lambda + alpha d`` in the cone."""
        alpha = math.inf
        if self.nn.size:
            dn = d[self.nn]
            neg = dn < 0
            if neg.any():
                alpha = min(alpha, float((-sc.nn_lam[neg] / dn[neg]).min()))
        for dim, idx in self.soc.items():
            alpha = min(alpha, _soc_step(sc.soc_lam[dim], d[idx]))
        for k, idx in self.psd.items():
            D = smat(d[idx], k)
            isq = 1.0 / np.sqrt(sc.psd_sig[k])
            M = isq[:, :, None] * D * isq[:, None, :]
            ev = np.linalg.eigvalsh(M)[:, 0]
            mn = float(ev.min())
            if mn < 0:
                alpha = min(alpha, -1.0 / mn)
        return alpha

    def scaling(self, x, s):
        return _Scaling(self, x, s)


def _soc_det(u):
    """``u0^2 - ||u1||^2`` in factored form to avoid cancellation."""
    nrm = np.linalg.norm(u[:, 1:], axis=1)
    return (u[:, 0] - nrm) * (u[:, 0] + nrm)


def _soc_step(u, d):
    """Vectorised boundary crossing for ``u + alpha d`` in second-order cones."""
    # rescale each direction to unit size to keep the quadratic in range
    nd = np.abs(d).max(axis=1, keepdims=True)
    nd[nd == 0] = 1.0
    d = d / nd
    a = d[:, 0] ** 2 - np.einsum("ij,ij->i", d[:, 1:], d[:, 1:])
    b = u[:, 0] * d[:, 0] - np.einsum("ij,ij->i", u[:, 1:], d[:, 1:])
    c = _soc_det(u)
    disc = b * b - a * c
    alpha = np.full(a.shape, np.inf)
    with np.errstate(divide="ignore", invalid="ignore"):
        sq = np.sqrt(np.maximum(disc, 0.0))
        q = -(b + np.copysign(sq, b))
        r1 = q / a
        r2 = c / q
        lin = np.abs(a) <= 1e-14 * (np.abs(b) + 1e-300)
        for r in (r1, r2):
            ok = (disc >= 0) & (r > 0) & np.isfinite(r) & ~lin
            alpha = np.where(ok, np.minimum(alpha, r), alpha)
        rl = -c / (2 * b)
        okl = lin & (b < 0)
        alpha = np.where(okl, np.minimum(alpha, rl), alpha)
    # guard against points leaving through the apex when u0 + alpha d0 < 0
    with np.errstate(divide="ignore", invalid="ignore"):
        apex = np.where(d[:, 0] < 0, -u[:, 0] / d[:, 0], np.inf)
    alpha = np.minimum(alpha, apex) / nd[:, 0]
    return float(alpha.min()) if alpha.size else math.inf


class _Scaling:
    """Nesterov-Todd scaling ``W`` with ``W x = W^{-T} s = lambda``."""

    def __init__(self, cs: _ConeSet, x, s):
        self.cs = cs
        self.nn_w = np.sqrt(s[cs.nn] / x[cs.nn])  # W = diag(nn_w)
        self.nn_lam = np.sqrt(x[cs.nn] * s[cs.nn])
        self.soc_beta, self.soc_v, self.soc_lam = {}, {}, {}
        for d, idx in cs.soc.items():
            xx, ss = x[idx], s[idx]
            dx = _soc_det(xx)
            ds = _soc_det(ss)
            if (dx <= 0).any() or (ds <= 0).any() or (xx[:, 0] <= 0).any() or (ss[:, 0] <= 0).any():
                raise FloatingPointError("iterate left the second-order cone interior")
            xb = xx / np.sqrt(dx)[:, None]
            sb = ss / np.sqrt(ds)[:, None]
            # x'b s'b split into two non-negative parts (no cancellation)
            na = np.linalg.norm(xb[:, 1:], axis=1)
            nb = np.linalg.norm(sb[:, 1:], axis=1)
            head = (1.0 + na**2 + nb**2) / (xb[:, 0] * sb[:, 0] + na * nb)
            with np.errstate(invalid="ignore", divide="ignore"):
                ua = np.where(na[:, None] > 0, xb[:, 1:] / na[:, None], 0.0)
                ub = np.where(nb[:, None] > 0, sb[:, 1:] / nb[:, None], 0.0)
            tail = na * nb * 0.5 * np.einsum("ij,ij->i", ua + ub, ua + ub)
            gamma = np.sqrt(0.5 * (1.0 + head + tail))
            wb = sb.copy()
            wb[:, 0] += xb[:, 0]
            wb[:, 1:] -= xb[:, 1:]
            wb /= (2.0 * gamma)[:, None]
            v = wb.copy()
            v[:, 0] += 1.0
            v /= np.sqrt(2.0 * (wb[:, 0] + 1.0))[:, None]
            beta = (ds / dx) ** 0.25
            self.soc_beta[d], self.soc_v[d] = beta, v
            # closed form of lambda = W x
            lam = np.empty_like(xx)
            lam[:, 0] = gamma
            den = 2.0 * gamma + xb[:, 0] + sb[:, 0]
            lam[:, 1:] = ((gamma + sb[:, 0])[:, None] * xb[:, 1:] + (gamma + xb[:, 0])[:, None] * sb[:, 1:]) / den[:, None]
            lam *= np.sqrt(np.sqrt(dx * ds))[:, None]
            self.soc_lam[d] = lam
        self.psd_R, self.psd_Rinv, self.psd_sig = {}, {}, {}
        for k, idx in cs.psd.items():
            X, S = smat(x[idx], k), smat(s[idx], k)
            try:
                L1 = np.linalg.cholesky(X)
                L2 = np.linalg.cholesky(S)
            except np.linalg.LinAlgError:
                raise FloatingPointError("iterate left the PSD cone interior") from None
            U, sig, Vt = np.linalg.svd(np.swapaxes(L2, 1, 2) @ L1)
            isq = 1.0 / np.sqrt(sig)
            R = (L1 @ np.swapaxes(Vt, 1, 2)) * isq[:, None, :]
            # R^{-1} = diag(sqrt(sig)) V' L1^{-1}
            L1inv = np.linalg.inv(L1)
            Rinv = np.sqrt(sig)[:, :, None] * (Vt @ L1inv)
            self.psd_R[k], self.psd_Rinv[k], self.psd_sig[k] = R, Rinv, sig

    @staticmethod
    def _soc_apply(beta, v, u, inverse):
        # W u = beta (2 v v'u - J u);  W^{-1} u = (2 Jv v'Ju - J u) / beta
        Ju = u.copy()
        Ju[:, 1:] *= -1
        if not inverse:
            return beta[:, None] * (2.0 * v * np.einsum("ij,ij->i", v, u)[:, None] - Ju)
        Jv = v.copy()
        Jv[:, 1:] *= -1
        return (2.0 * Jv * np.einsum("ij,ij->i", v, Ju)[:, None] - Ju) / beta[:, None]

    def lam(self):
        """Scaled point ``lambda = W x = W^{-T} s`` from the stored factors."""
        cs = self.cs
        out = np.zeros(cs.n)
        out[cs.nn] = self.nn_lam
        for d, idx in cs.soc.items():
            out[idx] = self.soc_lam[d]
        for k, idx in cs.psd.items():
            vals = np.zeros((idx.shape[0], packed_size(k)))
            vals[:, cs.diag_pos[k]] = self.psd_sig[k]
            out[idx] = vals
        return out

    def W(self, u):
        cs = self.cs
        out = np.zeros(cs.n)
        out[cs.nn] = self.nn_w * u[cs.nn]
        for d, idx in cs.soc.items():
            out[idx] = self._soc_apply(self.soc_beta[d], self.soc_v[d], u[idx], False)
        for k, idx in cs.psd.items():
            Ri = self.psd_Rinv[k]
            out[idx] = svec(Ri @ smat(u[idx], k) @ np.swapaxes(Ri, 1, 2))
        return out

    def Wt(self, u):
        """Adjoint ``W'``."""
        cs = self.cs
        out = np.zeros(cs.n)
        out[cs.nn] = self.nn_w * u[cs.nn]
        for d, idx in cs.soc.items():
            out[idx] = self._soc_apply(self.soc_beta[d], self.soc_v[d], u[idx], False)
        for k, idx in cs.psd.items():
            Ri = self.psd_Rinv[k]
            out[idx] = svec(np.swapaxes(Ri, 1, 2) @ smat(u[idx], k) @ Ri)
        return out

    def Winv_t(self, u):
        """``W^{-T}``."""
        cs = self.cs
        out = np.zeros(cs.n)
        out[cs.nn] = u[cs.nn] / self.nn_w
        for d, idx in cs.soc.items():
            out[idx] = self._soc_apply(self.soc_beta[d], self.soc_v[d], u[idx], True)
        for k, idx in cs.psd.items():
            R = self.psd_R[k]
            out[idx] = svec(np.swapaxes(R, 1, 2) @ smat(u[idx], k) @ R)
        return out

    def hessian_triplets(self):
        """Block-diagonal ``H = W'W`` as COO triplets."""
        cs = self.cs
        rows = [cs.nn]
        cols = [cs.nn]
        vals = [self.nn_w**2]
        for d, idx in cs.soc.items():
            beta, v = self.soc_beta[d], self.soc_v[d]
            M = 2.0 * v[:, :, None] * v[:, None, :]
            M[:, 0, 0] -= 1.0
            ii = np.arange(1, d)
            M[:, ii, ii] += 1.0
            H = (beta**2)[:, None, None] * (M @ M)
            rows.append(np.repeat(idx, d, axis=1).ravel())
            cols.append(np.tile(idx, (1, d)).ravel())
            vals.append(H.ravel())
        for k, idx in cs.psd.items():
            Ri = self.psd_Rinv[k]
            G = np.swapaxes(Ri, 1, 2) @ Ri
            N = packed_size(k)
            E = smat(np.eye(N), k)  # (N, k, k) basis matrices
            # H[:, j] = svec(G E_j G) for every block
            GEG = np.einsum("bik,jkl,blm->bjim", G, E, G, optimize=True)
            H = svec(GEG)  # (blocks, N(col j), N(row))
            H = np.swapaxes(H, 1, 2)
            rows.append(np.repeat(idx, N, axis=1).ravel())
            cols.append(np.tile(idx, (1, N)).ravel())
            vals.append(H.ravel())
        return np.concatenate(rows), np.concatenate(cols), np.concatenate(vals)


# ---------------------------------------------------------------- presolve


def _presolve(A: sp.csr_matrix, b: np.ndarray, tol=1e-9):
    """Drop zero, duplicate and linearly dependent rows; returns kept row indices."""
    A = A.tocsr()
    m = A.shape[0]
    keep = []
    seen = {}
    scale_b = max(1.0, float(np.abs(b).max(initial=0.0)))
    for i in range(m):
        lo, hi = A.indptr[i], A.indptr[i + 1]
        cols = A.indices[lo:hi]
        vals = A.data[lo:hi]
        nz = np.abs(vals) > 0
        cols, vals = cols[nz], vals[nz]
        if cols.size == 0:
            if abs(b[i]) > tol * scale_b:
                raise PresolveError(f"row {i} is 0 = {b[i]}")
            continue
        order = np.argsort(cols)
        cols, vals = cols[order], vals[order]
        lead = vals[0]
        key = (tuple(cols.tolist()), tuple(np.round(vals / lead, 12).tolist()))
        if key in seen:
            j, lead_j = seen[key]
            if abs(b[i] / lead - b[j] / lead_j) > tol * scale_b:
                raise PresolveError(f"rows {j} and {i} are parallel but inconsistent")
            continue
        seen[key] = (i, lead)
        keep.append(i)
    keep = np.array(keep, dtype=int)
    Ak = A[keep]
    mk, n = Ak.shape
    if 0 < mk and mk * n <= 4_000_000:
        dense = Ak.toarray()
        _, R, piv = la.qr(dense.T, mode="economic", pivoting=True)
        diag = np.abs(np.diag(R))
        if diag.size and diag[0] > 0:
            rank = int((diag > 1e-10 * diag[0]).sum())
            if rank < mk:
                indep = np.sort(piv[:rank])
                dep = np.sort(piv[rank:])
                coef, *_ = la.lstsq(dense[indep].T, dense[dep].T)
                pred = coef.T @ b[keep][indep]
                if np.abs(pred - b[keep][dep]).max() > 1e-7 * scale_b:
                    raise PresolveError("linearly dependent equality rows are inconsistent")
                keep = keep[indep]
    return keep


# ---------------------------------------------------------------- KKT


class _Kkt:
    def __init__(self, A: sp.csr_matrix, free, dense_limit):
        self.A = A
        self.m, self.n = A.shape
        self.free = free
        self.dense = (self.m + self.n) <= dense_limit
        Acoo = A.tocoo()
        self._arow = np.concatenate([Acoo.row + self.n, Acoo.col])
        self._acol = np.concatenate([Acoo.col, Acoo.row + self.n])
        self._aval = np.concatenate([Acoo.data, Acoo.data])
        self.reg = 1e-8

    def factor(self, hrows, hcols, hvals):
        n, m = self.n, self.m
        N = n + m
        diag_reg = np.full(N, self.reg)
        diag_reg[n:] = -self.reg
        diag_reg[self.free] = max(self.reg, 1e-8)
        idx = np.arange(N)
        rows = np.concatenate([hrows, self._arow, idx])
        cols = np.concatenate([hcols, self._acol, idx])
        true_vals = np.concatenate([hvals, self._aval, np.zeros(N)])
        reg_vals = np.concatenate([hvals, self._aval, diag_reg])
        self.K = sp.csc_matrix((true_vals, (rows, cols)), shape=(N, N))
        Kreg = sp.csc_matrix((reg_vals, (rows, cols)), shape=(N, N))
        if self.dense:
            self._lu = la.lu_factor(Kreg.toarray(), check_finite=False)
            self._solve = lambda r: la.lu_solve(self._lu, r, check_finite=False)
        else:
            lu = spla.splu(Kreg, permc_spec="MMD_AT_PLUS_A", diag_pivot_thresh=0.0,
                           options={"SymmetricMode": True})
            self._solve = lu.solve

    def solve(self, rhs, refine=3):
        z = self._solve(rhs)
        for _ in range(refine):
            res = rhs - self.K @ z
            if np.linalg.norm(res, np.inf) <= 1e-14 * max(1.0, np.linalg.norm(rhs, np.inf)):
                break
            z = z + self._solve(res)
        self.last_res = float(np.linalg.norm(rhs - self.K @ z, np.inf) / max(1.0, np.linalg.norm(rhs, np.inf)))
        return z


# ---------------------------------------------------------------- driver


def _rotated_to_standard(prog: ConicProgram):
    """Orthogonal, self-inverse map sending rotated cones to standard ones."""
    n = prog.n
    rows, cols, vals = [], [], []
    cones = []
    touched = np.zeros(n, bool)
    h = 1.0 / SQRT2
    for cone in prog.cones:
        if cone.kind == "rotated_second_order":
            a, b = cone.start, cone.start + 1
            rows += [a, a, b, b]
            cols += [a, b, a, b]
            vals += [h, h, h, -h]
            touched[[a, b]] = True
            cones.append(Cone("second_order", cone.start, cone.size))
        else:
            cones.append(cone)
    rest = np.flatnonzero(~touched)
    rows += rest.tolist()
    cols += rest.tolist()
    vals += [1.0] * rest.size
    T = sp.csr_matrix((vals, (rows, cols)), shape=(n, n))
    return T, cones


def _equilibrate(A, cs: _ConeSet, cones, iters=10):
    """Ruiz scaling with one column factor per non-elementwise cone."""
    m, n = A.shape
    dr = np.ones(m)
    dc = np.ones(n)
    B = A.tocsr().copy()
    groups = [c for c in cones if c.kind in ("second_order", "psd")]
    for _ in range(iters):
        rn = np.sqrt(abs(B).max(axis=1).toarray().ravel())
        rn[rn == 0] = 1.0
        cn = abs(B).max(axis=0).toarray().ravel()
        for cone in groups:
            cn[cone.span] = cn[cone.span].max()
        cn = np.sqrt(cn)
        cn[cn == 0] = 1.0
        B = sp.diags(1 / rn) @ B @ sp.diags(1 / cn)
        dr /= rn
        dc /= cn
    return B.tocsr(), dr, dc


def _inf(v):
    return float(np.abs(v).max(initial=0.0))


def solve(prog: ConicProgram, settings: IpmSettings | None = None) -> IpmResult:
    """Solve a conic program; never raises on infeasible or unbounded input."""
    settings = settings or IpmSettings()
    t0 = time.perf_counter()
    log = settings.log

    T, cones = _rotated_to_standard(prog)
    A0 = (prog.A @ T).tocsr()
    c0 = T @ prog.c
    keep = _presolve(A0, prog.b)
    A = A0[keep]
    b = prog.b[keep].copy()
    n = prog.n
    cs = _ConeSet(cones, n)

    if settings.equilibrate and A.shape[0]:
        A, dr, dc = _equilibrate(A, cs, cones)
    else:
        dr, dc = np.ones(A.shape[0]), np.ones(n)
    b = dr * b
    c = dc * c0
    sb = max(1.0, float(np.abs(b).max(initial=0.0)))
    sc_ = max(1.0, float(np.abs(c).max(initial=0.0)))
    b /= sb
    c /= sc_
    m = A.shape[0]
    At = A.T.tocsr()

    kkt = _Kkt(A, cs.free, settings.dense_limit)
    e = cs.identity()
    x = e.copy()
    s = e.copy()
    y = np.zeros(m)
    tau = kappa = 1.0
    nu = cs.degree
    frac = settings.step_fraction
    status = "numerical_failure"
    history = []
    cert = None
    best_pinf, best_y = math.inf, None
    it = 0

    if log is not None:
        log.write(f"{'it':>3} {'pobj':>13} {'dobj':>13} {'pres':>9} {'dres':>9} {'gap':>9} {'step':>7}\n")

    # maps from the scaled problem back to the caller's variables
    def unscale_x(v):
        return T @ (dc * v)

    def unscale_s(v):
        return T @ (v / dc)

    def unscale_y(v):
        full = np.zeros(prog.m)
        full[keep] = dr * v
        return full

    bnorm0, cnorm0 = _inf(prog.b), _inf(prog.c)
    step = 0.0
    for it in range(settings.max_iterations + 1):
        rp = b * tau - A @ x
        rd = At @ y + s - c * tau
        rg = kappa + c @ x - b @ y
        xs = cs.dot(x, s)
        mu = (xs + tau * kappa) / (nu + 1)
        # convergence is judged on the unscaled problem
        xo, yo, so = unscale_x(x / tau) * sb, unscale_y(y / tau) * sc_, unscale_s(s / tau) * sc_
        pobj, dobj = float(prog.c @ xo), float(prog.b @ yo)
        Ax, Aty = prog.A @ xo, prog.A.T @ yo
        pres = _inf(Ax - prog.b) / (1.0 + max(bnorm0, _inf(Ax)))
        dres = _inf(Aty + so - prog.c) / (1.0 + max(cnorm0, _inf(Aty), _inf(so)))
        relgap = abs(pobj - dobj) / (1.0 + min(abs(pobj), abs(dobj)))
        history.append(
            dict(iteration=it, pobj=pobj + prog.offset, dobj=dobj + prog.offset, pres=pres, dres=dres, gap=relgap,
                 tau=tau, kappa=kappa, margin_x=cs.margins(x), margin_s=cs.margins(s), step=step)
        )
        if log is not None:
            log.write(f"{it:3d} {pobj + prog.offset:13.6e} {dobj + prog.offset:13.6e} {pres:9.2e} {dres:9.2e} "
                      f"{relgap:9.2e} {step:7.4f}\n")

        if pres <= settings.feas_tol and dres <= settings.feas_tol and relgap <= settings.gap_tol:
            status = "optimal"
            break
        by, cx = b @ y, c @ x
        if by > 0:
            r = np.linalg.norm(At @ y + s) / by
            history[-1]["farkas"] = r
            if r < best_pinf and tau < kappa:
                best_pinf, best_y = r, y / by
            if r <= settings.infeas_tol:
                status = "infeasible"
                cert = y / by
                break
        if cx < 0:
            r = np.linalg.norm(A @ x) / (-cx)
            if r <= settings.infeas_tol:
                status = "unbounded"
                cert = x / (-cx)
                break
        if it == settings.max_iterations:
            break

        try:
            W = cs.scaling(x, s)
        except FloatingPointError:
            break
        lam = W.lam()
        hr, hc, hv = W.hessian_triplets()
        try:
            kkt.factor(hr, hc, hv)
        except (RuntimeError, la.LinAlgError, ValueError):
            break
        rhs2 = np.concatenate([-c, b])
        z2 = kkt.solve(rhs2)
        x2, y2 = z2[:n], z2[n:]

        lam_sq = cs.lam_prod(W, lam)

        def direction(rc, rtau, eta):
            d = cs.lam_div(W, rc)
            d[cs.free] = 0.0
            r1 = eta * rd + W.Wt(d)
            r1[cs.free] = eta * rd[cs.free]
            z1 = kkt.solve(np.concatenate([r1, eta * rp]))
            x1, y1 = z1[:n], z1[n:]
            denom = -kappa / tau + c @ x2 + b @ y2
            dtau = (-eta * rg - rtau / tau - c @ x1 - b @ y1) / denom
            dx = x1 + dtau * x2
            dy = -(y1 + dtau * y2)
            Wdx = W.W(dx)
            ds_scaled = d - Wdx  # W^{-T} ds
            ds = W.Wt(ds_scaled)
            ds[cs.free] = 0.0
            dkappa = (rtau - kappa * dtau) / tau
            return dx, dy, ds, dtau, dkappa, Wdx, ds_scaled

        def max_step(Wdx, ds_scaled, dtau, dkappa):
            a = min(cs.max_step_scaled(W, Wdx), cs.max_step_scaled(W, ds_scaled))
            if dtau < 0:
                a = min(a, -tau / dtau)
            if dkappa < 0:
                a = min(a, -kappa / dkappa)
            return a

        # predictor
        dxa, dya, dsa, dta, dka, Wdxa, dssa = direction(-lam_sq, -tau * kappa, 1.0)
        alpha_a = min(1.0, max_step(Wdxa, dssa, dta, dka))
        sigma = (1.0 - alpha_a) ** 3
        # corrector
        rc = sigma * mu * e - lam_sq - cs.prod(Wdxa, dssa)
        rtau = sigma * mu - tau * kappa - dta * dka
        dx, dy, ds, dtau, dkappa, Wdx, dss = direction(rc, rtau, 1.0 - sigma)
        if not (np.all(np.isfinite(dx)) and np.all(np.isfinite(dy))):
            break
        step = min(1.0, frac * max_step(Wdx, dss, dtau, dkappa))
        x = x + step * dx
        y = y + step * dy
        s = s + step * ds
        tau = tau + step * dtau
        kappa = kappa + step * dkappa
        if step < 1e-10:
            break

    # a stalled run whose tau collapsed may still carry a usable certificate
    if (status == "numerical_failure" and best_y is not None
            and best_pinf <= math.sqrt(settings.infeas_tol) and tau <= 1e-3 * kappa):
        status = "infeasible"
        cert = best_y
    res = IpmResult(status=status, x=None, y=None, s=None, iterations=it, history=history)
    if status == "optimal" or status == "numerical_failure":
        res.x = unscale_x(x / tau) * sb
        res.y = unscale_y(y / tau) * sc_
        res.s = unscale_s(s / tau) * sc_
        res.primal_objective = prog.objective(res.x)
        res.dual_objective = float(prog.b @ res.y) + prog.offset
        res.primal_residual, res.dual_residual, res.gap = kkt_residuals(prog, res)
    elif status == "infeasible":
        ycert = unscale_y(cert)
        ycert /= prog.b @ ycert
        res.certificate = ycert
        res.y = ycert
        res.s = -(prog.A.T @ ycert)
        if not check_certificate(prog, res):
            res.status, res.certificate = "numerical_failure", None
    elif status == "unbounded":
        xcert = unscale_x(cert)
        xcert /= -(prog.c @ xcert)
        res.certificate = xcert
        res.x = xcert
    res.solve_time = time.perf_counter() - t0
    return res


def kkt_residuals(prog: ConicProgram, result: IpmResult):
    """``(||Ax - b||, ||A'y + s - c||, c'x - b'y)`` for a primal-dual point."""
    x, y, s = result.x, result.y, result.s
    if x is None or y is None or s is None:
        raise ValueError("result carries no primal-dual point")
    pres = float(np.linalg.norm(prog.A @ x - prog.b))
    dres = float(np.linalg.norm(prog.A.T @ y + s - prog.c))
    gap = float(prog.c @ x - prog.b @ y)
    return pres, dres, gap


def _dual_cone_violation(prog: ConicProgram, v: np.ndarray) -> float:
    worst = 0.0
    for cone in prog.cones:
        part = v[cone.span]
        if cone.kind == "free":
            worst = max(worst, float(np.abs(part).max(initial=0.0)))
        else:
            worst = max(worst, -cone.margin(part))
    return worst


def check_certificate(prog: ConicProgram, result: IpmResult, tol: float = 1e-6) -> bool:
    """Mechanically verify an infeasibility certificate.

    Primal infeasible: ``b'y = 1`` and ``-A'y`` lies in the dual cone (all
    cones here are self-dual; free columns need a zero entry).  Then no
    ``x`` in the cone can satisfy ``Ax = b`` because ``0 <= -y'Ax = -1``.

    Dual infeasible: ``c'x = -1``, ``Ax = 0`` and ``x`` in the cone.
    """
    cert = result.certificate
    if cert is None:
        return False
    if result.status == "infeasible":
        if not prog.b @ cert > 0:
            return False
        scale = max(1.0, float(np.abs(cert).max()))
        return _dual_cone_violation(prog, -(prog.A.T @ cert)) <= tol * scale
    if result.status == "unbounded":
        if not prog.c @ cert < 0:
            return False
        scale = max(1.0, float(np.abs(cert).max()))
        return (np.linalg.norm(prog.A @ cert) <= tol * scale) and prog.cone_violation(cert) <= tol * scale
    return False
