"""Tightness measures for solved relaxations.

Three numbers describe how far a relaxed solution is from a physical one:
the eigenvalue ratio of each clique matrix, the cost gap against a local
nonlinear solution, and the summed angle differences around cycles.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "TR_CAP",
    "NotPsdError",
    "CliqueMatrixView",
    "TightnessReport",
    "clique_matrix",
    "tr_measure",
    "gap_measure",
    "cycle_measure",
    "cycle_angle_sums",
    "wrap_angle_sum",
    "build_report",
]

TR_CAP = 16.0
_NEG_EIG_TOL = 1e-9


class NotPsdError(ValueError):
    """A clique matrix is not positive semidefinite within tolerance."""


@dataclass(frozen=True, eq=False)
class CliqueMatrixView:
    index: int
    members: tuple
    matrix: np.ndarray
    eigenvalues: np.ndarray  # decreasing

    @classmethod
    def from_matrix(cls, index, members, matrix):
        m = np.asarray(matrix, dtype=complex)
        if m.shape != (len(members), len(members)):
            raise ValueError("matrix size does not match the clique")
        scale = max(1.0, float(np.abs(m).max(initial=0.0)))
        if np.abs(m - m.conj().T).max(initial=0.0) > 1e-9 * scale:
            raise ValueError("clique matrix is not Hermitian")
        m = 0.5 * (m + m.conj().T)
        ev = np.linalg.eigvalsh(m)[::-1].copy()
        m.setflags(write=False)
        ev.setflags(write=False)
        return cls(index, tuple(members), m, ev)

    @property
    def size(self) -> int:
        return len(self.members)

    @property
    def lambda1(self) -> float:
        return float(self.eigenvalues[0])

    @property
    def lambda2(self) -> float:
        return float(self.eigenvalues[1]) if self.eigenvalues.size > 1 else 0.0


def clique_matrix(sol, clique, method: str | None = None) -> CliqueMatrixView:
    """Hermitian matrix over a clique's buses built from lifted values.

    Entry ``(a, b)`` holds ``c_ab + j s_ab``; diagonal entries are ``c_aa``.
    ``clique`` carries bus indices (``members``) and an ``index``.
    """
    if method is not None and method != sol.method:
        raise ValueError(f"solution came from {sol.method!r}, not {method!r}")
    members = tuple(clique.members)
    k = len(members)
    m = np.zeros((k, k), dtype=complex)
    for a, i in enumerate(members):
        for b, j in enumerate(members):
            if b < a:
                continue
            if not sol.has_pair(i, j):
                raise KeyError(f"no lifted value for pair ({i}, {j})")
            c, s = sol.pair(i, j)
            m[a, b] = complex(c, s)
            m[b, a] = complex(c, -s)
    return CliqueMatrixView.from_matrix(clique.index, members, m)


def tr_measure(view: CliqueMatrixView | np.ndarray, require_psd: bool = True) -> float:
    """``log10(lambda1 / lambda2)`` with ``lambda2`` floored at ``1e-16 lambda1``.

    A ``lambda2`` within a few ulps of ``lambda1`` (times the matrix size) is
    indistinguishable from zero for a dense eigensolver and counts as zero.

    Accepts a view or a plain array of eigenvalues.  ``require_psd=False``
    skips the negative-eigenvalue check, for matrices assembled from a
    model that never constrained them to be semidefinite.
    """
    ev = view.eigenvalues if isinstance(view, CliqueMatrixView) else np.sort(np.asarray(view, dtype=float))[::-1]
    l1 = float(ev[0])
    if not l1 > 0:
        raise NotPsdError("largest eigenvalue is not positive; the relaxation did not solve cleanly")
    if require_psd and float(ev[-1]) < -_NEG_EIG_TOL * l1:
        raise NotPsdError(f"eigenvalue {ev[-1]:.3e} is too negative for lambda1 = {l1:.3e}")
    l2 = float(ev[1]) if ev.size > 1 else 0.0
    if l2 <= 4.0 * ev.size * np.finfo(float).eps * l1:
        l2 = 0.0  # below eigensolver resolution: numerically rank-1
    l2 = max(l2, 1e-16 * l1)
    return min(TR_CAP, math.log10(l1 / l2))


def gap_measure(obj_nl: float, obj_relax: float) -> float:
    """Percentage gap between a feasible cost and a relaxation bound."""
    if not (math.isfinite(obj_nl) and math.isfinite(obj_relax)):
        raise ValueError("objectives must be finite")
    if obj_nl == 0:
        raise ZeroDivisionError("nonlinear objective is zero")
    return 100.0 * (obj_nl - obj_relax) / obj_nl


def wrap_angle_sum(total_deg: float, length: int) -> float:
    """Fold a sum of ``length`` angles into ``(-180 length, 180 length]``."""
    half = 180.0 * length
    period = 2.0 * half
    w = math.fmod(total_deg + half, period)
    if w <= 0:
        w += period
    return w - half


def cycle_angle_sums(sol, cycle, method: str | None = None):
    """``(raw, wrapped)`` sum in degrees of pair angles around a cycle.

    ``cycle`` yields bus indices in order; the closing edge is implied.
    """
    if method is not None and method != sol.method:
        raise ValueError(f"solution came from {sol.method!r}, not {method!r}")
    buses = list(cycle.buses if hasattr(cycle, "buses") else cycle)
    total = 0.0
    for a, b in zip(buses, buses[1:] + buses[:1]):
        if not sol.has_pair(a, b):
            raise KeyError(f"no lifted value for cycle edge ({a}, {b})")
        c, s = sol.pair(a, b)
        total += math.degrees(math.atan2(s, c))
    return total, wrap_angle_sum(total, len(buses))


def cycle_measure(sol, cycle, method: str | None = None) -> float:
    """Wrapped angle sum (degrees); zero for any solution that comes from
    actual voltage phasors."""
    return cycle_angle_sums(sol, cycle, method)[1]


@dataclass
class TightnessReport:
    demand_ratio: float
    method: str
    tr: list = field(default_factory=list)  # (clique index, size, lambda1, lambda2, TR)
    cycles: list = field(default_factory=list)  # (cycle index, length, raw deg, wrapped deg)
    gap_pct: float | None = None
    objective_relax: float = math.nan
    objective_nl: float | None = None


def build_report(sol, cliques, cycles, demand_ratio: float, nl_objective: float | None = None) -> TightnessReport:
    """Evaluate every measure for one optimal relaxation.

    ``cliques`` and ``cycles`` must use bus indices.  Cycle edges without a
    lifted value are skipped.
    """
    if not sol.optimal:
        raise ValueError("measures need an optimal relaxation")
    rep = TightnessReport(demand_ratio, sol.method, objective_relax=sol.objective, objective_nl=nl_objective)
    for cl in cliques:
        view = clique_matrix(sol, cl)
        tr = tr_measure(view, require_psd=sol.method == "sdp")
        rep.tr.append((cl.index, view.size, view.lambda1, view.lambda2, tr))
    for cyc in cycles:
        try:
            raw, wrapped = cycle_angle_sums(sol, cyc)
        except KeyError:
            continue
        rep.cycles.append((cyc.index, len(cyc.buses), raw, wrapped))
    if nl_objective is not None:
        rep.gap_pct = gap_measure(nl_objective, sol.objective)
    return rep
