"""Command-line front end: ``rrnit run``, ``rrnit compare`` and ``rrnit verify``."""

import argparse
import csv
import json
import statistics
import sys
from pathlib import Path

from . import __version__
from .iteration import SolverConfig, solve, verify_trace
from .problems import SYNTHETIC_IMAGES, X_STAR_CHOICES, build_problem
from .tikhonov import METHODS as LINEAR_SOLVERS
from . import traceio

EXIT_OK = 0
EXIT_VERIFY_FAILED = 1
EXIT_MAX_OUTER = 2
EXIT_INNER_FAILURE = 3
EXIT_UNSTABLE = 4
EXIT_USAGE = 64
EXIT_DATA = 65

STOP_EXIT = {
    "discrepancy": EXIT_OK,
    "max_outer": EXIT_MAX_OUTER,
    "inner_failure": EXIT_INNER_FAILURE,
    "unstable": EXIT_UNSTABLE,
}

EXIT_HELP = """\
exit codes:
  0   run: stopped by the discrepancy principle; verify: all checks passed
  1   verify: at least one check failed
  2   run: hit --max-outer before the discrepancy principle
  3   run: the multiplier search or a linear solve failed
  4   run: gNIT was flagged unstable (residual blow-up)
  64  usage error (bad flags or values)
  65  malformed or unreadable input file (trace, manifest, image)

compare returns the largest run exit code over all of its runs.
"""

# deblur runs default to a larger safety factor
DEFAULT_TAU = {"hilbert": 2.0, "deblur": 3.0}


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, "{}: error: {}\n".format(self.prog, message))


def _add_problem_args(p):
    g = p.add_argument_group("problem")
    g.add_argument("--problem", choices=("hilbert", "deblur"), default="hilbert")
    g.add_argument("--noise-level", type=float, default=1e-5,
                   help="relative noise ||y_delta - y|| / ||y|| (1e-5 is 1e-3%%)")
    g.add_argument("--seed", type=int, default=0, help="noise seed (numpy PCG64)")
    g.add_argument("--n", type=int, default=25, help="Hilbert matrix size")
    g.add_argument("--x-star", choices=X_STAR_CHOICES, default="ones")
    g.add_argument("--image", help="PGM image to blur (overrides --synthetic)")
    g.add_argument("--synthetic", choices=SYNTHETIC_IMAGES, default="checkerboard")
    g.add_argument("--size", type=int, default=32, help="synthetic image side")
    g.add_argument("--psf-size", type=int, default=9)
    g.add_argument("--sigma", type=float, default=1.5)
    g.add_argument("--boundary", choices=("periodic", "zero"), default="periodic")


def _add_solver_args(p, with_method=True):
    g = p.add_argument_group("solver")
    if with_method:
        g.add_argument("--method", choices=("rrnit", "gnit", "sit"), default="rrnit")
    g.add_argument("--p", type=float, default=0.2, help="rrNIT range parameter in (0, 1)")
    g.add_argument("--q", type=float, default=2.0, help="gNIT ratio, lam_k = q**k")
    g.add_argument("--lambda-bar", type=float, default=2.0, help="SIT multiplier")
    g.add_argument("--tau", type=float, default=None,
                   help="discrepancy factor (default 2 for hilbert, 3 for deblur)")
    g.add_argument("--max-outer", type=int, default=1000)
    g.add_argument("--max-inner", type=int, default=50)
    g.add_argument("--solver", choices=LINEAR_SOLVERS, default="auto",
                   help="SPD solver: cg, direct, or auto (exact FFT/dense when cheap)")
    g.add_argument("--tol", type=float, default=1e-10, help="CG relative tolerance")
    for m, what in (("m1", "greedy Newton numerator"), ("m2", "step over-relaxation"),
                    ("m3", "warm-started multiplier")):
        g.add_argument("--" + m, action=argparse.BooleanOptionalAction, default=True,
                       help=what)
    g.add_argument("--warm-start", choices=("extrapolate", "previous"), default="extrapolate")


def build_parser():
    parser = _Parser(
        prog="rrnit",
        description="Range-relaxed iterated Tikhonov regularization experiments.",
        epilog=EXIT_HELP, formatter_class=argparse.RawDescriptionHelpFormatter)
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    run = sub.add_parser("run", help="run one method on one problem",
                         epilog=EXIT_HELP, formatter_class=argparse.RawDescriptionHelpFormatter)
    _add_problem_args(run)
    _add_solver_args(run)
    o = run.add_argument_group("output")
    o.add_argument("--out", default="trace.csv", help="trace file")
    o.add_argument("--format", choices=("csv", "json"), default=None,
                   help="trace format (default: from the --out suffix)")
    o.add_argument("--no-iterates", action="store_true",
                   help="skip the <stem>.iterates.npz side file")
    o.add_argument("--quiet", action="store_true")

    cmp_ = sub.add_parser(
        "compare", help="summary table of several methods over noise levels and seeds",
        epilog=EXIT_HELP + """
method specs look like  rrnit  gnit:q=2  sit:lambda_bar=2  rrnit:p=0.3,m3=false
""", formatter_class=argparse.RawDescriptionHelpFormatter)
    _add_problem_args(cmp_)
    _add_solver_args(cmp_, with_method=False)
    cmp_.add_argument("--methods", nargs="+", default=["gnit:q=2", "rrnit"])
    cmp_.add_argument("--noise-levels", nargs="+", type=float, default=[1e-3, 1e-5, 1e-8])
    cmp_.add_argument("--seeds", nargs="+", type=int, default=[0, 1, 2, 3, 4])
    cmp_.add_argument("--out", default="summary.csv")
    cmp_.add_argument("--format", choices=("csv", "json"), default=None)
    cmp_.add_argument("--quiet", action="store_true")

    ver = sub.add_parser("verify", help="check a trace against the method's guarantees",
                         epilog=EXIT_HELP, formatter_class=argparse.RawDescriptionHelpFormatter)
    ver.add_argument("trace", help="trace file written by 'rrnit run'")
    ver.add_argument("--manifest", help="default: <trace stem>.manifest.json")
    ver.add_argument("--gain-rtol", type=float, default=1e-6)
    return parser


def problem_descriptor(args):
    d = dict(kind=args.problem, noise_level=args.noise_level, seed=args.seed)
    if args.problem == "hilbert":
        d.update(n=args.n, x_star=args.x_star)
    else:
        d.update(psf_size=args.psf_size, sigma=args.sigma, boundary=args.boundary)
        if args.image:
            d["image_path"] = str(Path(args.image).resolve())
        else:
            d.update(image=args.synthetic, size=args.size)
    return d


def solver_config(args, method, overrides=None, keep_iterates=True):
    tau = args.tau if args.tau is not None else DEFAULT_TAU[args.problem]
    kw = dict(method=method, p=args.p, q=args.q, lambda_bar=args.lambda_bar, tau=tau,
              max_outer=args.max_outer, max_inner=args.max_inner, tol=args.tol,
              linear_solver=args.solver, m1=args.m1, m2=args.m2, m3=args.m3,
              warm_start_mode=args.warm_start, keep_iterates=keep_iterates)
    kw.update(overrides or {})
    try:
        return SolverConfig(**kw)
    except (TypeError, ValueError) as exc:
        raise UsageError(str(exc)) from None


def _make_problem(descriptor):
    try:
        return build_problem(descriptor)
    except OSError as exc:
        raise traceio.TraceFormatError("cannot read image: {}".format(exc)) from None
    except ValueError as exc:
        if "image_path" in descriptor:
            raise traceio.TraceFormatError(str(exc)) from None
        raise UsageError(str(exc)) from None


def cmd_run(args):
    started = traceio.now()
    problem = _make_problem(problem_descriptor(args))
    config = solver_config(args, args.method, keep_iterates=not args.no_iterates)
    trace = solve(problem, config)

    out = Path(args.out)
    fmt = args.format or ("json" if out.suffix.lower() == ".json" else "csv")
    traceio.write_trace(trace, out, fmt)
    npz = None
    if config.keep_iterates:
        npz = traceio.write_iterates(trace, traceio.iterates_path(out))
    traceio.write_manifest(traceio.manifest_path(out), trace, problem, config, out,
                           started, __version__, npz)
    if not args.quiet:
        print("{}: stop={} iterations={} linear_solves={} residual={:.6g} (tau*delta={:.6g})"
              .format(trace.method, trace.stop_reason, trace.iterations,
                      trace.total_linear_solves, trace.residuals[-1],
                      config.tau * problem.delta))
        if trace.message:
            print(trace.message)
    return STOP_EXIT[trace.stop_reason]


_BOOL = {"true": True, "on": True, "yes": True, "1": True,
         "false": False, "off": False, "no": False, "0": False}


def parse_method_spec(spec):
    """``'gnit:q=2'`` -> ``('gnit', {'q': 2.0})``."""
    name, _, rest = spec.partition(":")
    if name not in ("rrnit", "gnit", "sit"):
        raise UsageError("unknown method {!r} in spec {!r}".format(name, spec))
    fields = SolverConfig.__dataclass_fields__
    overrides = {}
    for item in filter(None, rest.split(",")):
        key, eq, value = item.partition("=")
        key = key.strip().replace("-", "_")
        if key == "warm_start":
            key = "warm_start_mode"
        if not eq or key not in fields or key == "method":
            raise UsageError("bad option {!r} in method spec {!r}".format(item, spec))
        kind = fields[key].type
        try:
            if kind in (bool, "bool"):
                overrides[key] = _BOOL[value.strip().lower()]
            elif key == "cg_max_iter":
                overrides[key] = None if value.strip().lower() == "none" else int(value)
            elif kind in (int, "int"):
                overrides[key] = int(value)
            elif kind in (float, "float"):
                overrides[key] = float(value)
            else:
                overrides[key] = value.strip()
        except (KeyError, ValueError):
            raise UsageError("bad value {!r} in method spec {!r}".format(item, spec)) from None
    return name, overrides


def run_compare(args):
    """Run every (method, noise level, seed) and return the summary document."""
    methods = [(spec,) + parse_method_spec(spec) for spec in args.methods]
    configs = {spec: solver_config(args, name, ov, keep_iterates=False)
               for spec, name, ov in methods}
    rows, worst = [], EXIT_OK
    for spec, _, _ in methods:
        cells = []
        for level in args.noise_levels:
            runs = []
            for seed in args.seeds:
                args.noise_level, args.seed = level, seed
                problem = _make_problem(problem_descriptor(args))
                trace = solve(problem, configs[spec])
                worst = max(worst, STOP_EXIT[trace.stop_reason])
                runs.append(dict(seed=seed, linear_solves=trace.total_linear_solves,
                                 iterations=trace.iterations, k_star=trace.k_star,
                                 stop_reason=trace.stop_reason))
            solves = statistics.median(r["linear_solves"] for r in runs)
            iters = statistics.median(r["iterations"] for r in runs)
            cells.append(dict(noise_level=level, median_linear_solves=solves,
                              median_iterations=iters,
                              cell="{:g} ({:g})".format(solves, iters), runs=runs))
        rows.append(dict(method=spec, config=configs[spec].to_dict(), cells=cells))
    args.noise_level, args.seed = None, None
    base = problem_descriptor(args)
    base.pop("noise_level"), base.pop("seed")
    doc = dict(format="rrnit-compare", library_version=__version__, problem=base,
               noise_levels=list(args.noise_levels), seeds=list(args.seeds), rows=rows)
    return doc, worst


def write_summary(doc, path, fmt):
    path = Path(path)
    if fmt == "json":
        path.write_text(json.dumps(doc, indent=1) + "\n")
        return
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["method"] + ["{:g}".format(v) for v in doc["noise_levels"]])
        for row in doc["rows"]:
            w.writerow([row["method"]] + [c["cell"] for c in row["cells"]])


def format_summary(doc):
    head = ["method"] + ["{:g}".format(v) for v in doc["noise_levels"]]
    body = [[r["method"]] + [c["cell"] for c in r["cells"]] for r in doc["rows"]]
    widths = [max(len(row[i]) for row in [head] + body) for i in range(len(head))]
    return "\n".join("  ".join(c.ljust(wd) for c, wd in zip(row, widths)).rstrip()
                     for row in [head] + body)


def cmd_compare(args):
    doc, worst = run_compare(args)
    out = Path(args.out)
    fmt = args.format or ("json" if out.suffix.lower() == ".json" else "csv")
    write_summary(doc, out, fmt)
    if not args.quiet:
        print("total linear solves (iterations), median over seeds {}".format(args.seeds))
        print(format_summary(doc))
    return worst


def load_run(trace_file, manifest_file=None):
    """Rebuild ``(trace, problem, config)`` from a trace and its manifest."""
    manifest = traceio.read_manifest(manifest_file or traceio.manifest_path(trace_file))
    trace = traceio.read_trace(trace_file, manifest["trace"])
    try:
        config = SolverConfig.from_dict(manifest["config"])
    except (TypeError, ValueError) as exc:
        raise traceio.TraceFormatError("bad config in manifest: {}".format(exc)) from None
    try:
        problem = build_problem(manifest["problem"])
    except (OSError, KeyError, ValueError) as exc:
        raise traceio.TraceFormatError("cannot rebuild problem: {}".format(exc)) from None
    npz = manifest.get("iterates_file")
    if npz:
        npz = Path(trace_file).with_name(npz)
        if npz.exists():
            try:
                trace.iterates = traceio.read_iterates(npz)
            except (OSError, KeyError, ValueError) as exc:
                raise traceio.TraceFormatError("bad iterates file: {}".format(exc)) from None
    return trace, problem, config


def cmd_verify(args):
    trace, problem, config = load_run(args.trace, args.manifest)
    report = verify_trace(trace, problem, config, gain_rtol=args.gain_rtol)
    print(report)
    return EXIT_OK if report.passed else EXIT_VERIFY_FAILED


COMMANDS = {"run": cmd_run, "compare": cmd_compare, "verify": cmd_verify}


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return COMMANDS[args.command](args)
    except UsageError as exc:
        print("rrnit {}: error: {}".format(args.command, exc), file=sys.stderr)
        return EXIT_USAGE
    except traceio.TraceFormatError as exc:
        print("rrnit {}: error: {}".format(args.command, exc), file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
