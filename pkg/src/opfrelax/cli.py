"""Command-line entry point: ``opfrelax <command> [options]``."""

from __future__ import annotations

import argparse
import sys

from .conemodel import network_cliques
from .netcase import CaseFormatError, load_case
from .sweep import (
    DEFAULT_LAMBDAS,
    METHODS,
    ConfigError,
    SweepConfig,
    network_cycles,
    parse_lambdas,
    read_summary,
    run_sweep,
    summary_table,
    write_plots,
    write_reports,
)

EXIT_OK, EXIT_CONFIG, EXIT_SOLVER = 0, 1, 2


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise _UsageError(f"{self.format_usage()}{self.prog}: error: {message}")


def _methods(args, default):
    chosen = []
    if getattr(args, "methods", None):
        chosen += [m.strip() for m in args.methods.split(",") if m.strip()]
    if getattr(args, "method", None):
        chosen.append(args.method)
    return tuple(chosen) if chosen else default


def _build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="opfrelax", description="Convex relaxations of AC optimal power flow and their tightness.")
    sub = p.add_subparsers(dest="command", parser_class=_Parser)

    def common(sp, lambdas=False):
        sp.add_argument("--case", required=True, help="case file path or bundled name (case9, case14, case30, case118, case300)")
        sp.add_argument("--tol", type=float, default=None, help="solver feasibility and gap tolerance")
        if lambdas:
            sp.add_argument("--lambdas", default=None, help="demand ratios: start:stop:step or a comma list")
            sp.add_argument("--lambda", dest="lam", type=float, default=None, help="a single demand ratio")
        sp.add_argument("--methods", default=None, help=f"comma list drawn from {','.join(METHODS)}")
        sp.add_argument("--method", choices=METHODS, default=None, help="a single method")
        sp.add_argument("--cycle-source", choices=("basis", "chordless"), default="basis")
        sp.add_argument("--max-cycle-len", type=int, default=8)
        sp.add_argument("--out", default=None, help="directory for CSV reports and charts")

    s = sub.add_parser("solve", help="solve one demand ratio and print objectives and gaps")
    common(s, lambdas=True)
    s = sub.add_parser("sweep", help="run a demand sweep and write reports")
    common(s, lambdas=True)
    s.add_argument("--workers", type=int, default=1)

    s = sub.add_parser("cycles", help="list the cycles used by the angle-sum measure")
    s.add_argument("--case", required=True)
    s.add_argument("--cycle-source", choices=("basis", "chordless"), default="basis")
    s.add_argument("--max-cycle-len", type=int, default=8)

    s = sub.add_parser("cliques", help="list maximal cliques of the chordal extension")
    s.add_argument("--case", required=True)

    s = sub.add_parser("report", help="summarize an output directory and redraw its charts")
    s.add_argument("--out", required=True)
    return p


def _cmd_run(args, out, sweep: bool) -> int:
    if args.lambdas is not None and args.lam is not None:
        raise ConfigError("give either --lambda or --lambdas, not both")
    if args.lambdas is not None:
        lams = parse_lambdas(args.lambdas)
    elif args.lam is not None:
        lams = (args.lam,)
    else:
        lams = DEFAULT_LAMBDAS if sweep else (1.0,)
    methods = _methods(args, ("socp", "sdp", "nl") if sweep else ("sdp",))
    if not sweep:
        methods += ("nl",)  # gaps need the local solution
    cfg = SweepConfig(
        case=args.case,
        lambdas=lams,
        methods=tuple(dict.fromkeys(methods)),
        cycle_source=args.cycle_source,
        max_cycle_len=args.max_cycle_len,
        out_dir=args.out if args.out else ("opfrelax_out" if sweep else None),
        tol=args.tol,
        workers=getattr(args, "workers", 1),
    )
    net = load_case(cfg.case)
    records = run_sweep(cfg, net)
    out.write(summary_table(records) + "\n")
    if not sweep:
        for r in records:
            if r.gap_pct is not None:
                out.write(f"gap {r.method} vs nl at lambda={r.lam:g}: {r.gap_pct:.6f} %\n")
            if r.cycle_rows:
                worst = max(abs(row[3]) for row in r.cycle_rows)
                out.write(f"largest |cycle angle sum| {r.method}: {worst:.6f} deg\n")
            if r.tr_rows:
                low = min(row[4] for row in r.tr_rows)
                out.write(f"smallest clique TR {r.method}: {low:.4f}\n")
    if cfg.out_dir:
        paths = write_reports(records, cfg.out_dir)
        out.write(f"wrote {len(paths)} files to {cfg.out_dir}\n")
    failed = [r for r in records if r.status == "numerical_failure"]
    if failed and (not sweep or len(failed) == len(records)):
        return EXIT_SOLVER
    return EXIT_OK


def _cmd_cycles(args, out) -> int:
    net = load_case(args.case)
    if args.max_cycle_len < 3:
        raise ConfigError("max cycle length must be at least 3")
    cycles = network_cycles(net, args.cycle_source, args.max_cycle_len)
    ids = [b.id for b in net.buses]
    out.write(f"{len(cycles)} cycles ({args.cycle_source})\n")
    for c in cycles:
        out.write(f"{c.index}: {' '.join(str(ids[i]) for i in c.buses)}\n")
    return EXIT_OK


def _cmd_cliques(args, out) -> int:
    net = load_case(args.case)
    cliques, _ = network_cliques(net)
    out.write(f"{len(cliques)} maximal cliques, largest {max(len(c) for c in cliques)}\n")
    for c in cliques:
        out.write(f"{c.index}: {' '.join(str(b) for b in c.members)}\n")
    return EXIT_OK


def _cmd_report(args, out) -> int:
    rows = read_summary(args.out)
    if not rows:
        raise ConfigError(f"no records in {args.out}")
    header = f"{'case':>10} {'lambda':>7} {'method':>6} {'status':>22} {'objective':>16} {'gap %':>10}"
    out.write(header + "\n")
    for r in rows:
        obj = f"{float(r['objective']):.6f}" if r["objective"] else ""
        gap = f"{float(r['gap_pct']):.5f}" if r["gap_pct"] else ""
        out.write(f"{r['case']:>10} {float(r['lambda']):7g} {r['method']:>6} {r['status']:>22} {obj:>16} {gap:>10}\n")
    paths = write_plots(args.out)
    out.write(f"redrew {len(paths)} charts\n")
    return EXIT_OK


def cli_main(argv=None, out=None, err=None) -> int:
    out = out or sys.stdout
    err = err or sys.stderr
    parser = _build_parser()
    argv = list(sys.argv[1:] if argv is None else argv)
    try:
        args = parser.parse_args(argv)
    except _UsageError as exc:
        err.write(f"{exc}\n")
        return EXIT_CONFIG
    except SystemExit as exc:  # --help
        return EXIT_OK if exc.code in (0, None) else EXIT_CONFIG
    if args.command is None:
        err.write(parser.format_help())
        return EXIT_CONFIG
    try:
        if args.command in ("solve", "sweep"):
            return _cmd_run(args, out, sweep=args.command == "sweep")
        if args.command == "cycles":
            return _cmd_cycles(args, out)
        if args.command == "cliques":
            return _cmd_cliques(args, out)
        return _cmd_report(args, out)
    except (ConfigError, CaseFormatError, FileNotFoundError) as exc:
        err.write(f"opfrelax: {exc}\n")
        return EXIT_CONFIG
    except (ArithmeticError, ValueError) as exc:
        err.write(f"opfrelax: solver failure: {exc}\n")
        return EXIT_SOLVER


def main() -> None:
    sys.exit(cli_main())


if __name__ == "__main__":
    main()

