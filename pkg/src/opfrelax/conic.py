"""Canonical conic programs.

A program is ``min c'x + offset  s.t.  A x = b,  x in K`` where ``K`` is a
product of cones, each owning a contiguous span of columns.  Supported
cones:

``free``
    no constraint (dimension ``n``).
``nonnegative``
    ``x >= 0`` elementwise.
``second_order``
    ``x[0] >= ||x[1:]||``.
``rotated_second_order``
    ``2 x[0] x[1] >= ||x[2:]||^2``, ``x[0], x[1] >= 0``.
``psd``
    symmetric ``side x side`` matrices stored as a packed lower triangle,
    column by column, with off-diagonal entries scaled by sqrt(2) so that
    the packed dot product equals the trace inner product.
"""

from __future__ import annotations

import io
import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
import scipy.sparse as sp

__all__ = [
    "Cone",
    "ConicProgram",
    "CONE_KINDS",
    "packed_size",
    "packed_index",
    "svec",
    "smat",
    "write_program",
    "read_program",
]

CONE_KINDS = ("free", "nonnegative", "second_order", "rotated_second_order", "psd")
SQRT2 = math.sqrt(2.0)


def packed_size(side: int) -> int:
    return side * (side + 1) // 2


@lru_cache(maxsize=None)
def _packed_rc(side: int):
    rows, cols = [], []
    for j in range(side):
        for i in range(j, side):
            rows.append(i)
            cols.append(j)
    r = np.array(rows, dtype=int)
    c = np.array(cols, dtype=int)
    r.setflags(write=False)
    c.setflags(write=False)
    return r, c


def packed_index(side: int, i: int, j: int) -> int:
    """Position of matrix entry (i, j) in the packed vector."""
    if i < j:
        i, j = j, i
    # columns 0..j-1 hold side, side-1, ... entries
    return j * side - j * (j - 1) // 2 + (i - j)


def svec(m: np.ndarray) -> np.ndarray:
    """Pack a symmetric matrix (or a stack of them along axis 0)."""
    m = np.asarray(m)
    side = m.shape[-1]
    r, c = _packed_rc(side)
    v = m[..., r, c].copy()
    v[..., r != c] *= SQRT2
    return v


def smat(v: np.ndarray, side: int | None = None) -> np.ndarray:
    """Inverse of :func:`svec`; works on stacks along axis 0."""
    v = np.asarray(v)
    if side is None:
        side = int(round((math.sqrt(8 * v.shape[-1] + 1) - 1) / 2))
    r, c = _packed_rc(side)
    m = np.zeros(v.shape[:-1] + (side, side), dtype=v.dtype)
    vals = v.copy()
    vals[..., r != c] /= SQRT2
    m[..., r, c] = vals
    m[..., c, r] = vals
    return m


@dataclass(frozen=True)
class Cone:
    kind: str
    start: int
    size: int  # dimension, or matrix side for psd

    def __post_init__(self):
        if self.kind not in CONE_KINDS:
            raise ValueError(f"unknown cone kind {self.kind!r}")
        if self.size < 1:
            raise ValueError("cone size must be positive")
        if self.kind == "second_order" and self.size < 1:
            raise ValueError("second-order cone needs dimension >= 1")
        if self.kind == "rotated_second_order" and self.size < 2:
            raise ValueError("rotated cone needs dimension >= 2")

    @property
    def ncols(self) -> int:
        return packed_size(self.size) if self.kind == "psd" else self.size

    @property
    def stop(self) -> int:
        return self.start + self.ncols

    @property
    def span(self) -> slice:
        return slice(self.start, self.stop)

    def contains(self, v: np.ndarray, tol: float = 0.0) -> bool:
        """Membership test with absolute slack ``tol``."""
        return self.margin(v) >= -tol

    def margin(self, v: np.ndarray) -> float:
        """Signed distance-like interior margin (negative means outside)."""
        v = np.asarray(v, dtype=float)
        if self.kind == "free":
            return math.inf
        if self.kind == "nonnegative":
            return float(v.min())
        if self.kind == "second_order":
            return float(v[0] - np.linalg.norm(v[1:]))
        if self.kind == "rotated_second_order":
            u, w, rest = v[0], v[1], v[2:]
            return float(min((u + w - math.hypot(u - w, SQRT2 * np.linalg.norm(rest))) / SQRT2, u, w))
        return float(np.linalg.eigvalsh(smat(v, self.size))[0])


@dataclass(eq=False)
class ConicProgram:
    """``min c'x + offset  s.t.  A x = b,  x in cones``."""

    c: np.ndarray
    A: sp.csr_matrix
    b: np.ndarray
    cones: list[Cone]
    offset: float = 0.0
    row_labels: list[str] = field(default_factory=list)

    def __post_init__(self):
        self.c = np.asarray(self.c, dtype=float)
        self.b = np.asarray(self.b, dtype=float)
        self.A = sp.csr_matrix(self.A, dtype=float)
        n = self.c.size
        if self.A.shape != (self.b.size, n):
            raise ValueError(f"A has shape {self.A.shape}, expected {(self.b.size, n)}")
        pos = 0
        for cone in self.cones:
            if cone.start != pos:
                raise ValueError(f"cone spans do not partition columns (gap at {pos})")
            pos = cone.stop
        if pos != n:
            raise ValueError(f"cones cover {pos} columns, program has {n}")

    @classmethod
    def from_triplets(cls, c, rows, cols, vals, b, cones, offset=0.0, row_labels=None):
        c = np.asarray(c, dtype=float)
        b = np.asarray(b, dtype=float)
        A = sp.coo_matrix((vals, (rows, cols)), shape=(b.size, c.size)).tocsr()
        A.sum_duplicates()
        return cls(c, A, b, list(cones), offset, list(row_labels or []))

    @property
    def n(self) -> int:
        return self.c.size

    @property
    def m(self) -> int:
        return self.b.size

    def objective(self, x: np.ndarray) -> float:
        return float(self.c @ x) + self.offset

    def cone_violation(self, x: np.ndarray) -> float:
        """Largest amount by which ``x`` sits outside any cone (0 if inside)."""
        worst = 0.0
        for cone in self.cones:
            worst = max(worst, -cone.margin(x[cone.span]))
        return worst


# ---------------------------------------------------------------- text dump
#
#   conic-program v1
#   n <cols> m <rows> nnz <nonzeros> offset <value>
#   cone <kind> <start> <size>          (one line per cone)
#   c <col> <value>                     (nonzero objective entries)
#   b <row> <value>                     (nonzero right-hand sides)
#   <row> <col> <value>                 (constraint triplets, 0-based)


def write_program(prog: ConicProgram, fh=None) -> str | None:
    """Write the sparse-triplet text dump; returns the text when ``fh`` is None."""
    out = io.StringIO() if fh is None else fh
    A = prog.A.tocoo()
    out.write("conic-program v1\n")
    out.write(f"n {prog.n} m {prog.m} nnz {A.nnz} offset {float(prog.offset)!r}\n")
    for cone in prog.cones:
        out.write(f"cone {cone.kind} {cone.start} {cone.size}\n")
    for j in np.flatnonzero(prog.c):
        out.write(f"c {j} {float(prog.c[j])!r}\n")
    for i in np.flatnonzero(prog.b):
        out.write(f"b {i} {float(prog.b[i])!r}\n")
    order = np.lexsort((A.col, A.row))
    for k in order:
        out.write(f"{A.row[k]} {A.col[k]} {float(A.data[k])!r}\n")
    if fh is None:
        return out.getvalue()
    return None


def read_program(text: str) -> ConicProgram:
    lines = iter(text.splitlines())
    if next(lines).strip() != "conic-program v1":
        raise ValueError("not a conic-program v1 dump")
    head = next(lines).split()
    n, m, offset = int(head[1]), int(head[3]), float(head[7])
    cones, rows, cols, vals = [], [], [], []
    c = np.zeros(n)
    b = np.zeros(m)
    for line in lines:
        parts = line.split()
        if not parts:
            continue
        if parts[0] == "cone":
            cones.append(Cone(parts[1], int(parts[2]), int(parts[3])))
        elif parts[0] == "c":
            c[int(parts[1])] = float(parts[2])
        elif parts[0] == "b":
            b[int(parts[1])] = float(parts[2])
        else:
            rows.append(int(parts[0]))
            cols.append(int(parts[1]))
            vals.append(float(parts[2]))
    return ConicProgram.from_triplets(c, rows, cols, vals, b, cones, offset)
