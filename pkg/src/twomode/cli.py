"""Command-line interface: ``twomode {typicality,scan,moments,pattern}``.

Descriptor grammar (``name:key=val,...``)::

    modes   planewave:q=1
            gaussian:d=10,sigma=1,t=50[,exact=1]   centres at -d/2 and +d/2
            tabulated:path=modes.txt               columns x re_a im_a re_b im_b
    kernel  c2:x=0.13
            c3:x1=0.13,x2=0.29[,eps=0.01]          eps smears each delta

Exit codes: 0 success (typical), 2 not typical, 1 usage or runtime error.
Every output file starts with a schema string.  The thread budget for
pattern runs comes from ``TWOMODE_THREADS``.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from .correlations import kernel_observable, second_moment
from .fock import SystemParams
from .modes import PlaneWave, parse_modes
from .montecarlo import (
    detect_crossover,
    empirical_C2,
    n_sweep_exponent,
    pattern_runs,
    phase_uniformity,
    scaling_scan,
    write_pattern,
    write_scan_csv,
    SCAN_COLUMNS,
    SCAN_SCHEMA,
)
from .poly import moment_sum
from .typicality import NotTypicalError, parse_kernel, typicality_report, variance_polynomial

EXIT_OK, EXIT_ERROR, EXIT_NOT_TYPICAL = 0, 1, 2
DEFAULT_SEED = 20260101


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_ERROR, f"{self.prog}: error: {message}\n")


def _float_list(text: str) -> list[float]:
    try:
        vals = [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None
    return vals


def _int_list(text: str) -> list[int]:
    vals = _float_list(text)
    if any(v != int(v) for v in vals):
        raise argparse.ArgumentTypeError(f"expected integers, got {text!r}")
    return [int(v) for v in vals]


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="twomode", description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    t = sub.add_parser("typicality", help="typicality report for a kernel and mode pair")
    t.add_argument("--modes", required=True)
    t.add_argument("--kernel", required=True)
    t.add_argument("--alpha", type=float, default=0.5, help="n ~ N^alpha for the regime prediction")
    t.add_argument("--method", choices=["auto", "quadrature"], default="auto")
    t.add_argument("--out", type=Path, help="JSON output (stdout if omitted)")
    t.add_argument("--figure", type=Path, help="optional PNG of |I[m, m']|")

    s = sub.add_parser("scan", help="fluctuation scaling along n = N^alpha or over n at fixed N")
    s.add_argument("--modes", default="planewave:q=1")
    s.add_argument("--kernel", default="c2:x=0.2")
    grp = s.add_mutually_exclusive_group(required=True)
    grp.add_argument("--alpha", type=_float_list, help="one or more exponents, comma separated")
    grp.add_argument("--N", type=int, dest="fixed_N", help="fixed N for an n sweep")
    s.add_argument("--N-grid", type=_int_list, help="particle numbers for an alpha scan")
    s.add_argument("--n-grid", type=_int_list, help="odd subspace sizes for an n sweep")
    s.add_argument("--method", choices=["auto", "exact", "montecarlo"], default="auto")
    s.add_argument("--variance", choices=["full-field", "two-mode"], default="full-field",
                   help="square C_k in the full field (default) or inside the two-mode algebra")
    s.add_argument("--contact-width", type=float, default=None)
    s.add_argument("--samples", type=int, default=2000)
    s.add_argument("--seed", type=int, default=DEFAULT_SEED)
    s.add_argument("--out", type=Path, required=True, help="CSV path; the JSON summary goes next to it")
    s.add_argument("--figure", type=Path)

    m = sub.add_parser("moments", help="exact moment-sum or variance polynomial as JSON")
    m.add_argument("--k", type=int)
    m.add_argument("--m", type=int)
    m.add_argument("--modes", help="with --kernel: dump the leading variance polynomial instead")
    m.add_argument("--kernel")
    m.add_argument("--out", type=Path)

    q = sub.add_parser("pattern", help="simulate single-run interference patterns")
    q.add_argument("--N", type=int, default=10_000)
    q.add_argument("--n", type=int, default=101)
    q.add_argument("--q", type=int, default=1, help="plane-wave harmonic")
    q.add_argument("--bins", type=int, default=100)
    q.add_argument("--c2-bins", type=int, default=256)
    q.add_argument("--runs", type=int, default=1)
    q.add_argument("--seed", type=int, default=DEFAULT_SEED)
    q.add_argument("--out", type=Path, required=True, help="histogram CSV of the first run; fit JSON next to it")
    q.add_argument("--figure", type=Path)
    return p


def _write_json(obj: dict, path: Path | None) -> None:
    text = json.dumps(obj, indent=2) + "\n"
    if path is None:
        sys.stdout.write(text)
    else:
        path.write_text(text)


def cmd_typicality(args) -> int:
    modes = parse_modes(args.modes)
    kernel = parse_kernel(args.kernel)
    report = typicality_report(kernel, modes, alpha=args.alpha, method=args.method)
    _write_json(report.to_json(), args.out)
    if args.figure:
        from .plotting import plot_i_table
        plot_i_table(report.I_table, args.figure)
    return EXIT_OK if report.typical else EXIT_NOT_TYPICAL


def _observable(args):
    modes = parse_modes(args.modes)
    kernel = parse_kernel(args.kernel)
    obs = kernel_observable(kernel, modes)
    m2 = second_moment(obs, contact_width=args.contact_width) if args.variance == "full-field" else None
    return obs, m2


def cmd_scan(args) -> int:
    obs, m2 = _observable(args)
    if args.fixed_N is not None:
        if args.N_grid:
            raise UsageError("--N-grid belongs to alpha scans; use --n-grid with --N")
        if not args.n_grid:
            raise UsageError("an n sweep needs a non-empty --n-grid")
        fit, excess = n_sweep_exponent(obs, args.fixed_N, args.n_grid, m2)
        with open(args.out, "w") as fh:
            fh.write("# twomode.nsweep/v1\nN,n,excess\n")
            for n, e in zip(args.n_grid, excess):
                fh.write(f"{args.fixed_N},{n},{e!r}\n")
        summary = {"schema": "twomode.nsweep-summary/v1", "N": args.fixed_N, "exponent": fit.slope,
                   "stderr": fit.stderr, "ci": [fit.ci_low, fit.ci_high]}
        args.out.with_suffix(".json").write_text(json.dumps(summary, indent=2) + "\n")
        if args.figure:
            from .plotting import plot_n_sweep
            plot_n_sweep(args.n_grid, excess, fit, args.figure)
        return EXIT_OK
    if args.n_grid:
        raise UsageError("--n-grid belongs to n sweeps; use --N-grid with --alpha")
    if not args.N_grid:
        raise UsageError("an alpha scan needs a non-empty --N-grid")
    if not args.alpha:
        raise UsageError("--alpha needs at least one value")
    scans = [scaling_scan(a, args.N_grid, obs, m2, method=args.method, samples=args.samples, seed=args.seed)
             for a in args.alpha]
    if len(scans) == 1:
        write_scan_csv(args.out, scans[0])
    else:
        with open(args.out, "w") as fh:
            fh.write(SCAN_SCHEMA + "\n" + ",".join(SCAN_COLUMNS) + "\n")
            for sc in scans:
                for pt in sc.points:
                    fh.write(",".join([str(pt.N), str(pt.n), repr(pt.alpha), repr(pt.mean), repr(pt.var),
                                       repr(pt.relfluct), repr(pt.stderr)]) + "\n")
        summary = {"schema": "twomode.scan-summary/v1", "scans": [sc.summary() for sc in scans]}
        try:
            cross = detect_crossover(scans)
            summary["crossover_alpha"] = cross.alpha_star
        except ValueError:
            summary["crossover_alpha"] = None
        args.out.with_suffix(".json").write_text(json.dumps(summary, indent=2) + "\n")
    if args.figure:
        from .plotting import plot_scans
        plot_scans(scans, args.figure)
    return EXIT_OK


def cmd_moments(args) -> int:
    if args.kernel or args.modes:
        if not (args.kernel and args.modes):
            raise UsageError("--kernel and --modes go together")
        poly = variance_polynomial(parse_kernel(args.kernel), parse_modes(args.modes))
        out = {"schema": "twomode.poly/v1", "quantity": "leading ensemble variance",
               "kernel": args.kernel, "modes": args.modes, **poly.to_json()}
    else:
        if args.k is None or args.m is None:
            raise UsageError("moments needs --k and --m (or --kernel with --modes)")
        poly = moment_sum(args.k, args.m)
        out = {"schema": "twomode.poly/v1", "quantity": "moment sum", "k": args.k, "m": args.m,
               **poly.to_json()}
    _write_json(out, args.out)
    return EXIT_OK


def cmd_pattern(args) -> int:
    params = SystemParams(args.N, args.n)
    modes = PlaneWave(args.q)
    if args.runs < 1:
        raise UsageError("--runs must be at least 1")
    results = pattern_runs(params, modes, args.runs, seed=args.seed, bins=args.bins)
    first = results[0]
    fit_path = write_pattern(args.out, first)
    x, curve = empirical_C2(first.positions, bins=args.c2_bins)
    ref = 1 + 0.5 * np.cos(2 * modes.k0 * x)
    record = first.fit_record()
    record["c2_rel_rms"] = float(np.sqrt(np.mean(((curve - ref) / ref) ** 2)))
    if args.runs > 1:
        Vs = [r.V for r in results]
        chi2, pval = phase_uniformity([r.phi for r in results])
        record["runs"] = {"count": args.runs, "V": Vs, "phi": [r.phi for r in results],
                          "fraction_V_ge_0.8": float(np.mean(np.array(Vs) >= 0.8)),
                          "phi_uniformity_chi2": chi2, "phi_uniformity_p": pval}
    fit_path.write_text(json.dumps(record, indent=2) + "\n")
    if args.figure:
        from .plotting import plot_pattern
        plot_pattern(first, modes.k0, args.figure, c2=(x, curve))
    return EXIT_OK


COMMANDS = {"typicality": cmd_typicality, "scan": cmd_scan, "moments": cmd_moments, "pattern": cmd_pattern}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return COMMANDS[args.command](args)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"twomode {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_ERROR
    except (ValueError, ArithmeticError, OSError, RuntimeError, NotTypicalError) as exc:
        print(f"twomode {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
