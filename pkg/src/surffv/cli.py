"""Command line entry point ``surffv``.

``surffv run`` reproduces a test problem and writes its convergence table,
step logs and VTK frames; ``surffv diagnose`` measures geometric and flux
approximation orders.  The exit code is 0 when the pass criterion holds,
1 when it fails and 2 on usage errors.  ``SURFFV_THREADS`` caps the number
of threads used by the numerical libraries.
"""

from __future__ import annotations

import argparse
import logging
import os
import sys

EXIT_PASS, EXIT_FAIL, EXIT_USAGE = 0, 1, 2

SUITES = ("normals", "ratios", "conormals", "flux", "quotients")


def _apply_thread_cap():
    n = os.environ.get("SURFFV_THREADS")
    if not n:
        return
    if not n.isdigit() or int(n) < 1:
        raise ValueError("SURFFV_THREADS must be a positive integer")
    for var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS", "NUMEXPR_NUM_THREADS"):
        os.environ[var] = n


def parse_levels(text: str):
    """``"a..b"`` or a single level ``"a"`` to a tuple of levels."""
    try:
        if ".." in text:
            a, b = text.split("..", 1)
            a, b = int(a), int(b)
        else:
            a = b = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"levels must look like 'a..b', got {text!r}")
    if a < 0 or b < a:
        raise argparse.ArgumentTypeError(f"invalid level range {text!r}")
    return tuple(range(a, b + 1))


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def build_parser():
    p = _Parser(prog="surffv", description="Finite volume schemes on moving surfaces.")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    r = sub.add_parser("run", help="run a test problem and tabulate convergence")
    r.add_argument("--tp", type=int, required=True, choices=range(1, 8), metavar="{1..7}")
    r.add_argument("--levels", type=parse_levels, default=None, help="refinement levels 'a..b'")
    r.add_argument("--lambda", dest="lam", type=float, default=None, help="Lax-Friedrichs viscosity")
    r.add_argument("--cfl", type=float, default=1.0, help="CFL factor in (0, 1]")
    r.add_argument("--out", default="out", help="output directory")
    r.add_argument("--second-order", action="store_true", help="use the second-order flat scheme (TP5/TP6)")
    r.add_argument("--vtk-every", type=int, default=0, help="write a VTK frame every n steps")

    d = sub.add_parser("diagnose", help="measure geometric approximation orders")
    d.add_argument("--suite", required=True, choices=SUITES)
    d.add_argument("--levels", type=parse_levels, default=parse_levels("1..5"))
    d.add_argument("--out", default="out")
    return p


def _cmd_run(args):
    from .experiments import RunConfig, check_test_problem, run_test_problem

    levels = args.levels or ((0, 1, 2) if args.tp == 7 else (0, 1, 2, 3, 4))
    second = True if args.second_order else None
    cfg = RunConfig(args.tp, levels, lam=args.lam, cfl=args.cfl, out=args.out,
                    vtk_every=args.vtk_every, second_order=second)
    result = run_test_problem(cfg)
    if hasattr(result, "format"):
        print(result.format())
    verdict = check_test_problem(cfg, result)
    print(("PASS " if verdict.passed else "FAIL ") + verdict.message)
    return EXIT_PASS if verdict.passed else EXIT_FAIL


def _cmd_diagnose(args):
    from pathlib import Path

    from . import diagnostics as dg
    from .flux import make_flux
    from .mesh import build_icosphere, icosphere_family
    from .motion import squeezed_sphere

    if len(args.levels) < 3:
        raise ValueError("diagnostics need at least three levels")
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    meshes = icosphere_family(args.levels)
    if args.suite == "normals":
        checks = [(dg.normal_deviation(meshes), 0.85, 1.15)]
    elif args.suite == "ratios":
        checks = [(r, 1.8, 2.2) for r in dg.length_area_ratios(meshes)]
    elif args.suite == "conormals":
        a, b, c = dg.conormal_estimates(meshes)
        checks = [(a, 1.8, 2.2), (b, 0.85, 1.15), (c, 1.8, 2.2)]
    elif args.suite == "flux":
        r0 = dg.flux_difference(meshes, make_flux("stationary_V", lambda_override=0.0))
        r1 = dg.flux_difference(meshes, make_flux("stationary_V", lambda_override=3.141592653589793))
        same = bool((r0.values == r1.values).all())
        print(f"lambda=0 and lambda=pi reports identical: {same}")
        checks = [(r0, 1.8, 2.2), (r1, 1.8, 2.2)]
        if not same:
            checks.append((r1, float("inf"), float("inf")))
    else:
        motion = squeezed_sphere()
        mid = build_icosphere(args.levels[len(args.levels) // 2])
        checks = [(r, 0.8, 1.2) for r in dg.quotient_lemma(meshes, motion, 0.05, mid, [0.2, 0.1, 0.05, 0.025])]
    ok = True
    for k, (rep, lo, hi) in enumerate(checks):
        rep.to_csv(out / f"{args.suite}_{k}.csv")
        print(rep.summary(lo, hi) + f" (accepted range [{lo}, {hi}])")
        ok &= rep.passed(lo, hi)
    return EXIT_PASS if ok else EXIT_FAIL


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if exc.code is not None else EXIT_USAGE
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        _apply_thread_cap()
        if args.command == "run":
            return _cmd_run(args)
        return _cmd_diagnose(args)
    except ValueError as exc:
        # parameter and capacity errors are usage errors
        print(f"surffv: error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
