"""Independent reference computations for solver tests."""

from __future__ import annotations

import itertools
import math

import numpy as np

from opfrelax.conic import Cone, ConicProgram, smat, svec


def lp_vertex_optimum(A, b, c, tol=1e-9):
    """Brute-force ``min c'x, Ax = b, x >= 0`` over all basic feasible solutions.

    Assumes the LP is bounded.  Returns ``None`` when no vertex is feasible.
    """
    A = np.asarray(A, float)
    m, n = A.shape
    rank = np.linalg.matrix_rank(A)
    best = None
    for cols in itertools.combinations(range(n), rank):
        B = A[:, cols]
        if np.linalg.matrix_rank(B) < rank:
            continue
        xb, *_ = np.linalg.lstsq(B, b, rcond=None)
        if np.linalg.norm(B @ xb - b) > tol * (1 + np.linalg.norm(b)):
            continue
        if xb.min() < -tol:
            continue
        x = np.zeros(n)
        x[list(cols)] = xb
        val = float(c @ x)
        if best is None or val < best:
            best = val
    return best


def _interior(rng, cone):
    k = cone.size
    if cone.kind == "psd":
        M = rng.normal(size=(k, k))
        return svec(M @ M.T + np.eye(k))
    if cone.kind == "nonnegative":
        return rng.random(k) + 0.1
    if cone.kind == "second_order":
        v = rng.normal(size=k)
        v[0] = np.linalg.norm(v[1:]) + 1.0
        return v
    v = rng.normal(size=k)
    v[0] = 1.0 + rng.random()
    v[1] = (v[2:] @ v[2:]) / (2 * v[0]) + 0.5
    return v


def random_program(rng, kinds, max_cones=3, sizes=(2, 5)):
    """Feasible, bounded random conic program with strictly interior primal and dual points."""
    cones, pos = [], 0
    for _ in range(int(rng.integers(1, max_cones + 1))):
        kind = str(rng.choice(kinds))
        lo = 3 if kind in ("second_order", "rotated_second_order") else 1
        size = int(rng.integers(max(lo, sizes[0]), sizes[1] + 1))
        cone = Cone(kind, pos, size)
        cones.append(cone)
        pos = cone.stop
    n = pos
    m = max(1, min(int(rng.integers(1, n + 1)), n - 1))
    A = rng.normal(size=(m, n))
    x0 = np.concatenate([_interior(rng, c) for c in cones])
    s0 = np.concatenate([_interior(rng, c) for c in cones])
    b = A @ x0
    c = A.T @ rng.normal(size=m) + s0
    r, k = np.nonzero(A)
    return ConicProgram.from_triplets(c, r, k, A[r, k], b, cones)


def cone_distance(cone, v):
    """How far ``v`` lies outside ``cone`` (0 inside), computed from first principles."""
    v = np.asarray(v, float)
    if cone.kind == "free":
        return 0.0
    if cone.kind == "nonnegative":
        return max(0.0, -float(v.min()))
    if cone.kind == "second_order":
        return max(0.0, float(np.linalg.norm(v[1:]) - v[0]))
    if cone.kind == "rotated_second_order":
        u, w, rest = v[0], v[1], v[2:]
        # 2uw >= |rest|^2, u, w >= 0  <=>  ((u+w)/sqrt2, (u-w)/sqrt2, rest) in the Lorentz cone
        t = (u + w) / math.sqrt(2)
        return max(0.0, float(math.hypot((u - w) / math.sqrt(2), np.linalg.norm(rest)) - t))
    return max(0.0, -float(np.linalg.eigvalsh(smat(v, cone.size)).min()))


def kkt_report(prog: ConicProgram, x, y, s):
    """KKT residuals of a primal-dual point.

    Equality residuals and cone violations are absolute (max-norm).  The
    complementarity entry is ``|x's|`` divided by ``1 + |c'x| + |b'y|`` as in
    the DIMACS error measures, so that it does not grow with the objective's
    units.
    """
    primal = float(np.abs(prog.A @ x - prog.b).max(initial=0.0))
    dual = float(np.abs(prog.A.T @ y + s - prog.c).max(initial=0.0))
    xcone = max(cone_distance(c, x[c.span]) for c in prog.cones)
    scone = max(cone_distance(c, s[c.span]) for c in prog.cones)
    comp = abs(float(x @ s)) / (1.0 + abs(float(prog.c @ x)) + abs(float(prog.b @ y)))
    return dict(primal=primal, dual=dual, x_cone=xcone, s_cone=scone, comp=comp)


def central_jacobian(fun, x, h=1e-6):
    """Central finite-difference Jacobian of a vector function."""
    x = np.asarray(x, float)
    cols = []
    for k in range(x.size):
        e = np.zeros_like(x)
        e[k] = h
        cols.append((np.asarray(fun(x + e)) - np.asarray(fun(x - e))) / (2 * h))
    return np.column_stack(cols)


def relative_error(analytic, numeric):
    """Max entrywise difference scaled by the larger matrix's magnitude (at least 1)."""
    a = analytic.toarray() if hasattr(analytic, "toarray") else np.asarray(analytic)
    scale = max(1.0, float(np.abs(numeric).max(initial=0.0)), float(np.abs(a).max(initial=0.0)))
    return float(np.abs(a - numeric).max(initial=0.0)) / scale
