import argparse
import logging
import sys
from dataclasses import asdict

import numpy as np
import pandas as pd
from hopflax import backward_forward, characteristics, regularity, viscosity_verify
from hopflax import hopflax_core as core
from hopflax.convex_calculus import convexity_report, fenchel_conjugate
from hopflax.exceptions import HopfLaxError, InputError
from hopflax.utils import ProblemSpec, emit, read_candidate


class _Parser(argparse.ArgumentParser):
    """Usage errors are input errors."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(InputError.exit_code, f"{self.prog}: error: {message}\n")


COMMON = _Parser(add_help=False)
COMMON.add_argument("--problem", metavar="FILE", required=True, help="Problem file (.ini)")
COMMON.add_argument("--out", metavar="FILE", default=None, help="Output file. Default: stdout")
COMMON.add_argument(
    "--format", choices=["csv", "json"], default="json", help="Output format. Default: %(default)s"
)
COMMON.add_argument("--tol", metavar="FLOAT", type=float, default=None, help="Tolerance")
COMMON.add_argument("--resolution", metavar="INT", type=int, default=None, help="Scan resolution")
COMMON.add_argument(
    "--jobs", metavar="INT", type=int, default=1, help="Worker threads. Default: %(default)s"
)
COMMON.add_argument("--verbose", action="store_true", help="Debug logging")

PARSER = _Parser(
    description="Hopf-Lax solutions of u_t + H(Du) = 0, their characteristics and regularity"
)
subparsers = PARSER.add_subparsers(help="Sub-commands (use with -h for more info)")


def _load(args) -> tuple:
    spec = ProblemSpec.from_file(args.problem)
    if args.resolution is not None:
        spec.resolution = args.resolution
    if args.tol is not None:
        spec.tolerance = args.tol
    logging.info(f"Load problem: {args.problem}")
    return spec, spec.to_problem()


def _split(prob, row) -> tuple:
    row = np.asarray(row, dtype=float)
    return float(row[0]), row[1:] if prob.dimension == 2 else float(row[1])


# Solve -------------------------------------------------------------------------------------------

def _cmd_solve(args):
    """Values, gradients and singleton flags on the grid or at the query points"""
    logging.info("Start - solve")
    spec, prob = _load(args)
    if args.points:
        frames = [
            core.solve_grid(prob, [t], [x], epsilon=args.tol, jobs=1).to_frame()
            for t, x in (_split(prob, row) for row in spec.points)
        ]
        names = ["x"] if prob.dimension == 1 else ["x1", "x2"]
        gradient = ["p"] if prob.dimension == 1 else ["p1", "p2"]
        columns = ["t"] + names + ["value", "p_t"] + gradient + ["singleton", "failed"]
        frame = pd.concat(frames, ignore_index=True) if frames else pd.DataFrame(columns=columns)
    else:
        frame = core.solve_grid(
            prob, spec.t_grid(), spec.x_grid(), epsilon=args.tol, jobs=args.jobs
        ).to_frame()
    emit(frame, args.format, args.out)
    logging.info("End - solve")
    return 0


parser_solve = subparsers.add_parser("solve", parents=[COMMON], help=_cmd_solve.__doc__)
parser_solve.add_argument("--points", action="store_true", help="Solve at the [queries] points")
parser_solve.set_defaults(func=_cmd_solve)


# Conjugate ---------------------------------------------------------------------------------------

def _cmd_conjugate(args):
    """Fenchel conjugate of H and its convexity constants"""
    logging.info("Start - conjugate")
    spec, prob = _load(args)
    H = prob.convex_hamiltonian
    window = (args.z_min, args.z_max)
    conjugate = fenchel_conjugate(H, window, args.nodes)
    report = convexity_report(H, prob.h_window)
    if prob.dimension == 1:
        frame = pd.DataFrame(
            {"z": conjugate.nodes, "value": conjugate.values, "argmax": conjugate.argmax}
        )
    else:
        z1, z2 = np.meshgrid(*conjugate.nodes, indexing="ij")
        frame = pd.DataFrame({
            "z1": z1.ravel(),
            "z2": z2.ravel(),
            "value": conjugate.values.ravel(),
            "argmax1": conjugate.argmax[..., 0].ravel(),
            "argmax2": conjugate.argmax[..., 1].ravel(),
        })
    if args.format == "csv":
        emit(frame, "csv", args.out)
    else:
        emit({"report": report.to_dict(), "conjugate": frame.to_dict(orient="list")}, "json",
             args.out)
    logging.info("End - conjugate")
    return 0


parser_conjugate = subparsers.add_parser(
    "conjugate", parents=[COMMON], help=_cmd_conjugate.__doc__
)
parser_conjugate.add_argument("--z-min", metavar="FLOAT", type=float, default=-2.0,
                              help="Dual window lower end. Default: %(default)s")
parser_conjugate.add_argument("--z-max", metavar="FLOAT", type=float, default=2.0,
                              help="Dual window upper end. Default: %(default)s")
parser_conjugate.add_argument("--nodes", metavar="INT", type=int, default=257,
                              help="Dual nodes per axis. Default: %(default)s")
parser_conjugate.set_defaults(func=_cmd_conjugate)


# Characteristics ---------------------------------------------------------------------------------

def _scan_dict(scan) -> dict:
    return {
        "times": scan.times.tolist(),
        "types": list(scan.types),
        "theta_hat": scan.theta_hat,
        "switch": scan.switch,
        "violations": scan.violations,
    }


def _cmd_characteristics(args):
    """Preimage sets, reachable gradients, curve families and type classification"""
    logging.info("Start - characteristics")
    spec, prob = _load(args)
    curves = []
    for row in spec.curves:
        d = prob.dimension
        curves.append(characteristics.forward_curve(prob, row[:d], row[d:]))
    if args.bundle is not None:
        origin = args.bundle if prob.dimension == 2 else args.bundle[0]
        curves.extend(characteristics.bundle(prob, origin, args.count))
    if args.format == "csv":
        t_nodes = np.concatenate([[0.0], spec.t_grid()])
        emit(characteristics.polylines(prob, curves, t_nodes), "csv", args.out)
        logging.info("End - characteristics")
        return 0
    queries = []
    for row in spec.points:
        t, x = _split(prob, row)
        preimages = characteristics.preimage_set(prob, t, x)
        reachable = characteristics.reachable_gradients(prob, t, x)
        queries.append({"preimages": preimages.to_dict(), "reachable": reachable.to_dict()})
    scans = [
        {"curve": curve.to_dict(), "scan": _scan_dict(characteristics.classify_along(prob, curve))}
        for curve in curves
    ]
    emit({"points": queries, "curves": scans}, "json", args.out)
    logging.info("End - characteristics")
    return 0


parser_characteristics = subparsers.add_parser(
    "characteristics", parents=[COMMON], help=_cmd_characteristics.__doc__
)
parser_characteristics.add_argument("--bundle", metavar="FLOAT", type=float, nargs="+",
                                    default=None, help="Add the bundle of curves from this origin")
parser_characteristics.add_argument("--count", metavar="INT", type=int, default=9,
                                    help="Slopes per piece of a bundle. Default: %(default)s")
parser_characteristics.set_defaults(func=_cmd_characteristics)


# Regularity --------------------------------------------------------------------------------------

def _cmd_regularity(args):
    """Differentiability strip, analytic bound and semiconvexity constants"""
    logging.info("Start - regularity")
    spec, prob = _load(args)
    report = regularity.differentiability_strip(
        prob, spec.t_grid(), spec.window, resolution=spec.x_nodes, jobs=args.jobs
    )
    if args.format == "csv":
        emit(pd.DataFrame({"t": report.times, "differentiable": report.verdicts}), "csv", args.out)
        logging.info("End - regularity")
        return 0
    data = report.to_dict()
    params = regularity.estimate_params(prob, spec.window)
    data["params"] = asdict(params)
    if args.t0 is not None:
        try:
            data["bound"] = asdict(regularity.semiconvexity_bound(params, args.t0))
        except HopfLaxError as error:
            logging.warning(f"No semiconvexity bound: {error}")
            data["bound"] = None
        data["observed_semiconvexity"] = regularity.semiconvexity_observed(prob, args.t0,
                                                                           spec.window)
    if prob.dimension == 1:
        data["injectivity_time"] = regularity.injectivity_time(prob, spec.window, spec.t_grid())
    emit(data, "json", args.out)
    logging.info("End - regularity")
    return 0


parser_regularity = subparsers.add_parser(
    "regularity", parents=[COMMON], help=_cmd_regularity.__doc__
)
parser_regularity.add_argument("--t0", metavar="FLOAT", type=float, default=None,
                               help="Time of the semiconvexity bound")
parser_regularity.set_defaults(func=_cmd_regularity)


# Verify ------------------------------------------------------------------------------------------

def _cmd_verify(args):
    """Viscosity verdict of the Hopf-Lax solution or of a candidate grid (.csv)"""
    logging.info("Start - verify")
    spec, prob = _load(args)
    candidate = read_candidate(args.candidate) if args.candidate else None
    t_window = (spec.horizon / spec.t_nodes, spec.horizon)
    verdict = viscosity_verify.verify_region(
        prob, t_window, spec.window, samples=(spec.t_nodes, spec.x_nodes), candidate=candidate,
        tolerance=spec.tolerance, jobs=args.jobs,
    )
    if not verdict.passed:
        logging.warning("Viscosity inequalities fail, see the witnesses")
    emit(verdict, args.format, args.out)
    logging.info("End - verify")
    return 0


parser_verify = subparsers.add_parser("verify", parents=[COMMON], help=_cmd_verify.__doc__)
parser_verify.add_argument("--candidate", metavar="FILE", default=None,
                           help="Candidate solution, columns t,x,value (.csv)")
parser_verify.set_defaults(func=_cmd_verify)


# Roundtrip ---------------------------------------------------------------------------------------

def _cmd_roundtrip(args):
    """Backward solution, reachability condition and forward round-trip"""
    logging.info("Start - roundtrip")
    spec, prob = _load(args)
    if not spec.terminal:
        logging.warning("No terminal data in the problem file, sigma is used as g")
    tolerance = backward_forward.BF_TOLERANCE if args.tol is None else args.tol
    report = backward_forward.roundtrip(prob, spec.t_grid(), spec.x_axis(), tolerance, args.jobs)
    emit(report, args.format, args.out)
    logging.info("End - roundtrip")
    return 0


parser_roundtrip = subparsers.add_parser(
    "roundtrip", parents=[COMMON], help=_cmd_roundtrip.__doc__
)
parser_roundtrip.set_defaults(func=_cmd_roundtrip)


# Help --------------------------------------------------------------------------------------------

def print_help():
    """Display this program"s help"""
    PARSER.print_help()
    PARSER.exit()


# Main --------------------------------------------------------------------------------------------

def parse_args(args=None):
    """Parse the command line"""
    return PARSER.parse_args(args=args)


def main(argv=None):
    """Entrypoint to commandline"""
    args = parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if getattr(args, "verbose", False) else logging.INFO,
        format="%(asctime)s - %(levelname)s - %(message)s",
        datefmt="%d-%m-%Y %H:%M",
    )
    # No arguments or subcommands were given.
    if not hasattr(args, "func"):
        print_help()
    if args.jobs < 1:
        logging.error(f"--jobs must be positive, got {args.jobs}")
        return InputError.exit_code
    try:
        return args.func(args)
    except HopfLaxError as error:
        logging.error(f"{type(error).__name__}: {error}")
        witness = getattr(error, "witness", None)
        if witness is not None:
            logging.error(f"Witness: {witness}")
        return error.exit_code


if __name__ == "__main__":
    sys.exit(main())
