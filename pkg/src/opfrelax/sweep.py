"""Demand sweeps: solve each (lambda, method) pair and collect measures.

Reports are plain CSV files plus standalone SVG charts written by hand.
"""

from __future__ import annotations

import csv
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from xml.sax.saxutils import escape

from .acnl import best_local_solution
from .conemodel import solve_relaxation
from .graphkit import Clique, Cycle, build_graph, cycle_basis, enumerate_chordless_cycles
from .ipm import IpmSettings
from .netcase import Network, load_case, scale_demand
from .tightness import build_report

__all__ = [
    "DEFAULT_LAMBDAS",
    "METHODS",
    "SweepConfig",
    "RunRecord",
    "ConfigError",
    "parse_lambdas",
    "network_cycles",
    "run_sweep",
    "write_reports",
    "read_summary",
    "summary_table",
    "write_plots",
    "SUMMARY_COLUMNS",
    "TR_COLUMNS",
    "CYCLE_COLUMNS",
]

DEFAULT_LAMBDAS = (0.5, 0.75, 1.0, 1.25, 1.5, 1.75, 2.0)
METHODS = ("socp", "sdp", "nl")
SUMMARY_COLUMNS = ("case", "lambda", "method", "status", "objective", "gap_pct", "walltime_s")
TR_COLUMNS = ("case", "lambda", "method", "clique_id", "clique_size", "lambda1", "lambda2", "tr")
CYCLE_COLUMNS = ("case", "lambda", "method", "cycle_id", "cycle_len", "angle_sum_deg_raw", "angle_sum_deg_wrapped")


class ConfigError(ValueError):
    pass


def parse_lambdas(text: str) -> tuple[float, ...]:
    """``"a:b:step"`` (inclusive grid) or a comma-separated list."""
    text = text.strip()
    if not text:
        raise ConfigError("empty demand-ratio list")
    try:
        if ":" in text:
            parts = [float(p) for p in text.split(":")]
            if len(parts) != 3:
                raise ConfigError(f"expected start:stop:step, got {text!r}")
            a, b, step = parts
            if step <= 0 or b < a:
                raise ConfigError(f"bad grid {text!r}")
            count = int(math.floor((b - a) / step + 1e-9)) + 1
            vals = tuple(round(a + k * step, 12) for k in range(count))
        else:
            vals = tuple(float(p) for p in text.split(",") if p.strip())
    except ValueError as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(f"cannot parse demand ratios {text!r}") from None
    if not vals:
        raise ConfigError("empty demand-ratio list")
    return vals


@dataclass(frozen=True)
class SweepConfig:
    case: str
    lambdas: tuple = DEFAULT_LAMBDAS
    methods: tuple = ("socp", "sdp")
    cycle_source: str = "basis"  # or "chordless"
    max_cycle_len: int = 8
    out_dir: str | None = None
    tol: float | None = None
    workers: int = 1

    def __post_init__(self):
        lams = tuple(float(v) for v in self.lambdas)
        if not lams:
            raise ConfigError("empty demand-ratio list")
        if any(not (v > 0 and math.isfinite(v)) for v in lams):
            raise ConfigError("demand ratios must be positive")
        object.__setattr__(self, "lambdas", lams)
        methods = tuple(self.methods)
        if not methods:
            raise ConfigError("no methods selected")
        bad = [m for m in methods if m not in METHODS]
        if bad:
            raise ConfigError(f"unknown method(s): {', '.join(bad)}")
        # keep the canonical order so records come out the same way every time
        object.__setattr__(self, "methods", tuple(m for m in METHODS if m in methods))
        if self.cycle_source not in ("basis", "chordless"):
            raise ConfigError(f"unknown cycle source {self.cycle_source!r}")
        if self.max_cycle_len < 3:
            raise ConfigError("max cycle length must be at least 3")
        if self.tol is not None and not self.tol > 0:
            raise ConfigError("tolerance must be positive")
        if self.workers < 1:
            raise ConfigError("workers must be at least 1")

    def ipm_settings(self) -> IpmSettings:
        if self.tol is None:
            return IpmSettings()
        return IpmSettings(feas_tol=self.tol, gap_tol=self.tol)


@dataclass
class RunRecord:
    case: str
    lam: float
    method: str
    status: str
    objective: float = math.nan
    wall_time: float = 0.0
    tr_rows: list = field(default_factory=list)  # (clique_id, size, lambda1, lambda2, tr)
    cycle_rows: list = field(default_factory=list)  # (cycle_id, len, raw, wrapped)
    gap_pct: float | None = None

    @property
    def key(self):
        return (self.lam, METHODS.index(self.method))


def network_cycles(net: Network, source: str = "basis", max_len: int = 8) -> list[Cycle]:
    """Cycles of the bus graph expressed in bus indices."""
    g = build_graph(net)
    if source == "basis":
        cyc = cycle_basis(g, g.root)
    elif source == "chordless":
        cyc = enumerate_chordless_cycles(g, max_len)
    else:
        raise ConfigError(f"unknown cycle source {source!r}")
    idx = net.bus_index
    return [Cycle(tuple(idx[b] for b in c.buses), c.index) for c in cyc]


def _run_lambda(cfg: SweepConfig, net: Network, lam: float, cycles) -> list[RunRecord]:
    scaled = scale_demand(net, lam)
    settings = cfg.ipm_settings()
    solutions, records = {}, []
    for method in cfg.methods:
        t0 = time.perf_counter()
        if method == "nl":
            warm = solutions.get("sdp") or solutions.get("socp")
            res = best_local_solution(scaled, warm)
            rec = RunRecord(net.name, lam, method, res.status, res.objective if res.ok else math.nan)
        else:
            sol = solve_relaxation(scaled, method, settings)
            solutions[method] = sol
            rec = RunRecord(net.name, lam, method, sol.status, sol.objective if sol.optimal else math.nan)
        rec.wall_time = time.perf_counter() - t0
        records.append(rec)

    nl = next((r for r in records if r.method == "nl"), None)
    nl_obj = nl.objective if nl is not None and nl.status == "local_optimal" else None
    for rec in records:
        sol = solutions.get(rec.method)
        if sol is None or not sol.optimal:
            continue
        cliques = [Clique(members, k) for k, members in enumerate(sol.cliques)]
        rep = build_report(sol, cliques, cycles, lam, nl_obj)
        rec.tr_rows = rep.tr
        rec.cycle_rows = rep.cycles
        rec.gap_pct = rep.gap_pct
    return records


def run_sweep(cfg: SweepConfig, net: Network | None = None) -> list[RunRecord]:
    """All (lambda, method) runs in lambda-major, method-minor order."""
    if net is None:
        net = load_case(cfg.case)
    cycles = network_cycles(net, cfg.cycle_source, cfg.max_cycle_len)
    lams = list(dict.fromkeys(cfg.lambdas))
    if cfg.workers > 1 and len(lams) > 1:
        with ProcessPoolExecutor(max_workers=cfg.workers) as pool:
            futures = [pool.submit(_run_lambda, cfg, net, lam, cycles) for lam in lams]
            chunks = [f.result() for f in futures]
    else:
        chunks = [_run_lambda(cfg, net, lam, cycles) for lam in lams]
    records = [r for chunk in chunks for r in chunk]
    records.sort(key=lambda r: r.key)
    return records


# ---------------------------------------------------------------- reports


def _num(v) -> str:
    if v is None or (isinstance(v, float) and math.isnan(v)):
        return ""
    return repr(float(v))


def _lam(v: float) -> str:
    return repr(float(v))


def write_reports(records: list[RunRecord], out_dir, plots: bool = True) -> list[Path]:
    """Write summary.csv, tr.csv, cycles.csv and SVG charts; returns paths."""
    if not records:
        raise ConfigError("no records to report")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = []

    def table(name, header, rows):
        path = out / name
        with path.open("w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(header)
            w.writerows(rows)
        written.append(path)

    table(
        "summary.csv",
        SUMMARY_COLUMNS,
        [(r.case, _lam(r.lam), r.method, r.status, _num(r.objective), _num(r.gap_pct), f"{r.wall_time:.3f}") for r in records],
    )
    table(
        "tr.csv",
        TR_COLUMNS,
        [
            (r.case, _lam(r.lam), r.method, cid, size, _num(l1), _num(l2), _num(tr))
            for r in records
            for (cid, size, l1, l2, tr) in r.tr_rows
        ],
    )
    table(
        "cycles.csv",
        CYCLE_COLUMNS,
        [
            (r.case, _lam(r.lam), r.method, cid, ln, _num(raw), _num(wr))
            for r in records
            for (cid, ln, raw, wr) in r.cycle_rows
        ],
    )
    if plots:
        written += write_plots(out)
    return written


def read_summary(out_dir) -> list[dict]:
    with (Path(out_dir) / "summary.csv").open(newline="") as fh:
        return list(csv.DictReader(fh))


def _read(path: Path) -> list[dict]:
    if not path.exists():
        return []
    with path.open(newline="") as fh:
        return list(csv.DictReader(fh))


def write_plots(out_dir) -> list[Path]:
    """Regenerate SVG charts from the CSV tables in ``out_dir``."""
    out = Path(out_dir)
    written = []
    summary = _read(out / "summary.csv")
    tr = _read(out / "tr.csv")
    cyc = _read(out / "cycles.csv")
    cases = sorted({row["case"] for row in summary})
    for case in cases:
        for method in ("socp", "sdp"):
            rows = [r for r in tr if r["case"] == case and r["method"] == method]
            if rows:
                path = out / f"{case}_{method}_tr.svg"
                path.write_text(_grouped_bars(
                    rows, "clique_id", "tr",
                    f"{case}: tightness ratio per clique ({method.upper()})", "clique", "TR (log10)",
                ))
                written.append(path)
            rows = [r for r in cyc if r["case"] == case and r["method"] == method]
            if rows:
                path = out / f"{case}_{method}_cycles.svg"
                path.write_text(_grouped_bars(
                    rows, "cycle_id", "angle_sum_deg_wrapped",
                    f"{case}: angle sum per cycle ({method.upper()})", "cycle", "degrees",
                ))
                written.append(path)
        rows = [r for r in summary if r["case"] == case and r["gap_pct"]]
        if rows:
            path = out / f"{case}_gap.svg"
            path.write_text(_lines(rows, f"{case}: optimality gap", "demand ratio", "gap (%)"))
            written.append(path)
    return written


# ---------------------------------------------------------------- svg

_PALETTE = ("#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf")
_W, _H = 900, 420
_ML, _MR, _MT, _MB = 70, 150, 40, 50


def _nice_range(lo, hi):
    if not math.isfinite(lo) or not math.isfinite(hi):
        return 0.0, 1.0
    lo, hi = min(lo, 0.0), max(hi, 0.0)
    if hi - lo < 1e-12:
        hi = lo + 1.0
    return lo, hi


def _frame(title, xlabel, ylabel, lo, hi):
    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{_W}" height="{_H}" viewBox="0 0 {_W} {_H}" '
        'font-family="sans-serif" font-size="12">',
        f'<rect width="{_W}" height="{_H}" fill="white"/>',
        f'<text x="{_W / 2:.1f}" y="22" text-anchor="middle" font-size="15">{escape(title)}</text>',
        f'<text x="{(_ML + _W - _MR) / 2:.1f}" y="{_H - 10}" text-anchor="middle">{escape(xlabel)}</text>',
        f'<text x="16" y="{(_MT + _H - _MB) / 2:.1f}" text-anchor="middle" '
        f'transform="rotate(-90 16 {(_MT + _H - _MB) / 2:.1f})">{escape(ylabel)}</text>',
    ]
    ph = _H - _MT - _MB
    for k in range(6):
        val = lo + (hi - lo) * k / 5
        y = _MT + ph * (1 - k / 5)
        parts.append(f'<line x1="{_ML}" y1="{y:.1f}" x2="{_W - _MR}" y2="{y:.1f}" stroke="#ddd"/>')
        parts.append(f'<text x="{_ML - 6}" y="{y + 4:.1f}" text-anchor="end">{val:.3g}</text>')
    return parts


def _ymap(v, lo, hi):
    ph = _H - _MT - _MB
    return _MT + ph * (1 - (v - lo) / (hi - lo))


def _legend(parts, labels):
    for k, label in enumerate(labels):
        y = _MT + 18 * k
        x = _W - _MR + 12
        parts.append(f'<rect x="{x}" y="{y}" width="12" height="12" fill="{_PALETTE[k % len(_PALETTE)]}"/>')
        parts.append(f'<text x="{x + 18}" y="{y + 10}">{escape(label)}</text>')


def _grouped_bars(rows, xkey, ykey, title, xlabel, ylabel):
    cats = sorted({int(r[xkey]) for r in rows})
    series = sorted({float(r["lambda"]) for r in rows})
    vals = {(float(r["lambda"]), int(r[xkey])): float(r[ykey]) for r in rows if r[ykey]}
    lo, hi = _nice_range(min(vals.values(), default=0.0), max(vals.values(), default=1.0))
    parts = _frame(title, xlabel, ylabel, lo, hi)
    pw = _W - _ML - _MR
    slot = pw / max(len(cats), 1)
    bw = 0.8 * slot / max(len(series), 1)
    y0 = _ymap(0.0, lo, hi)
    for ci, cat in enumerate(cats):
        x_cat = _ML + ci * slot + 0.1 * slot
        for si, lam in enumerate(series):
            v = vals.get((lam, cat))
            if v is None:
                continue
            y = _ymap(v, lo, hi)
            top, h = min(y, y0), abs(y - y0)
            parts.append(
                f'<rect x="{x_cat + si * bw:.2f}" y="{top:.2f}" width="{bw:.2f}" height="{h:.2f}" '
                f'fill="{_PALETTE[si % len(_PALETTE)]}"/>'
            )
        parts.append(f'<text x="{_ML + (ci + 0.5) * slot:.1f}" y="{_H - _MB + 14}" text-anchor="middle">{cat}</text>')
    parts.append(f'<line x1="{_ML}" y1="{y0:.1f}" x2="{_W - _MR}" y2="{y0:.1f}" stroke="black"/>')
    _legend(parts, [f"λ = {lam:g}" for lam in series])
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


def _lines(rows, title, xlabel, ylabel):
    methods = [m for m in METHODS if any(r["method"] == m for r in rows)]
    pts = {m: sorted((float(r["lambda"]), float(r["gap_pct"])) for r in rows if r["method"] == m) for m in methods}
    xs = [x for p in pts.values() for x, _ in p]
    ys = [y for p in pts.values() for _, y in p]
    lo, hi = _nice_range(min(ys), max(ys))
    xlo, xhi = min(xs), max(xs)
    if xhi - xlo < 1e-12:
        xlo, xhi = xlo - 0.5, xhi + 0.5
    parts = _frame(title, xlabel, ylabel, lo, hi)
    pw = _W - _ML - _MR

    def xm(x):
        return _ML + pw * (x - xlo) / (xhi - xlo)

    for x in sorted(set(xs)):
        parts.append(f'<text x="{xm(x):.1f}" y="{_H - _MB + 14}" text-anchor="middle">{x:g}</text>')
    for k, m in enumerate(methods):
        colour = _PALETTE[k % len(_PALETTE)]
        coords = " ".join(f"{xm(x):.2f},{_ymap(y, lo, hi):.2f}" for x, y in pts[m])
        parts.append(f'<polyline points="{coords}" fill="none" stroke="{colour}" stroke-width="2"/>')
        for x, y in pts[m]:
            parts.append(f'<circle cx="{xm(x):.2f}" cy="{_ymap(y, lo, hi):.2f}" r="3" fill="{colour}"/>')
    _legend(parts, [m.upper() for m in methods])
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


def summary_table(records: list[RunRecord]) -> str:
    """Fixed-width text table of the headline numbers."""
    lines = [f"{'lambda':>7} {'method':>6} {'status':>22} {'objective':>16} {'gap %':>10} {'time s':>8}"]
    for r in records:
        obj = "" if math.isnan(r.objective) else f"{r.objective:.6f}"
        gap = "" if r.gap_pct is None else f"{r.gap_pct:.5f}"
        lines.append(f"{r.lam:7g} {r.method:>6} {r.status:>22} {obj:>16} {gap:>10} {r.wall_time:8.2f}")
    return "\n".join(lines)
