# Copyright (C) 2026 The sofup authors
#
# This program is free software: you can redistribute it and/or modify
# it under the terms of the GNU Affero General Public License as
# published by the Free Software Foundation, either version 3 of the
# License, or (at your option) any later version.
#
# This program is distributed in the hope that it will be useful,
# but WITHOUT ANY WARRANTY; without even the implied warranty of
# MERCHANTABILITY or FITNESS FOR A PARTICULAR PURPOSE.  See the
# GNU Affero General Public License for more details.
#
# You should have received a copy of the GNU Affero General Public License
# along with this program.  If not, see <https://www.gnu.org/licenses/>.
#

import argparse
import logging
import sys
from typing import List, Optional

import numpy as np

import sofup.cfg as cfg
import sofup.mdrp as mdrp
import sofup.region as region
import sofup.scan as scan
import sofup.sim as sim
from sofup.compose import Metadata, compose_csv, compose_json
from sofup.errors import EXIT_OK, EXIT_VALIDATION, SofupError, UsageError, exit_code_for
from sofup.modelfile import input_digest, load_delta, load_gain, load_model, load_x0
from sofup.perturb import PerturbationCoords, closed_form_cost, synthesize
from sofup.statespace import closed_loop, validate
from sofup.update import apply_update

# One verb per process. Every verb:
#  1) loads its inputs through modelfile, which validates shapes
#  2) runs one library pipeline; library code raises, only this module catches
#  3) writes JSON or CSV through compose, with the metadata block attached
# Exit codes: 0 ok, 2 validation failure, 3 numerical failure, 64 usage error.


class _Parser(argparse.ArgumentParser):
    """ArgumentParser that raises UsageError instead of exiting."""

    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(message)


def _add_model(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--model", required=True, help="JSON model file with A, B, C")


def _add_out(parser: argparse.ArgumentParser, what: str) -> None:
    parser.add_argument("--out", default=None, help=f"{what} output path (default: stdout)")


def _add_seed(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--seed", type=int, default=0, help="random seed (default: 0)")


def cmd_validate(args: argparse.Namespace) -> int:
    document = load_model(args.model)
    report = validate(document.model, rank_tol=args.rank_tol, strict=False)

    metadata = Metadata(input_digest=input_digest(args.model))
    compose_json(report.as_dict(), metadata, args.out).write()

    if not report.passed:
        logging.error(f"{args.model}: {report.offending} is rank deficient")
        return EXIT_VALIDATION

    logging.info(f"{args.model}: {document.model} passes the rank checks")
    return EXIT_OK


def cmd_update(args: argparse.Namespace) -> int:
    document = load_model(args.model)
    F_nominal = document.require_gain()
    delta = load_delta(args.delta) if args.delta else document.require_delta()

    result = apply_update(document.model, F_nominal, delta, beta=args.beta)

    payload = dict(
        G_star=result.G_star,
        F_updated=result.F_updated.F,
        J_star=result.J_star,
        alpha_closed=result.alpha_closed,
        certified=result.certified,
        beta=result.beta,
        alpha_nominal=result.alpha_nominal,
        alpha_perturbed=result.alpha_perturbed,
        relative_perturbation_percent=result.relative_perturbation_percent,
        spectrum_perturbed=result.spectrum_perturbed,
        spectrum_updated=result.spectrum_updated,
    )
    paths = [args.model] + ([args.delta] if args.delta else [])
    compose_json(payload, Metadata(input_digest=input_digest(*paths)), args.out).write()
    return EXIT_OK


def cmd_mdrp(args: argparse.Namespace) -> int:
    document = load_model(args.model)
    validate(document.model)
    M = closed_loop(document.model, document.require_gain())

    estimate = mdrp.nominal_mdrp(
        M,
        force_bisection=args.force_bisection,
        seed=args.seed,
        tol=args.tol,
        inner_starts=args.starts,
        max_iterations=args.max_iterations,
    )

    metadata = Metadata(seed=args.seed, input_digest=input_digest(args.model))
    compose_json(estimate.as_dict(), metadata, args.out).write()
    return EXIT_OK


def cmd_synth(args: argparse.Namespace) -> int:
    document = load_model(args.model)
    model = document.model
    validate(model)

    rng = mdrp.stream(args.seed, 0, 0)
    coords = PerturbationCoords.random(
        model.n, model.m, model.p, rho=args.rho, tau=args.tau, theta=args.theta, rng=rng
    )
    delta = synthesize(model.B, model.C, coords)

    payload = dict(
        Delta=delta.delta,
        rho=delta.rho,
        tau=coords.tau,
        theta=coords.theta,
        fro_norm=delta.fro_norm,
        J_closed=closed_form_cost(coords.rho, coords.tau, coords.theta),
    )
    metadata = Metadata(seed=args.seed, input_digest=input_digest(args.model))
    compose_json(payload, metadata, args.out).write()
    return EXIT_OK


def cmd_region(args: argparse.Namespace) -> int:
    result = region.stability_region(args.beta, args.rho)

    payload = dict(
        beta=args.beta,
        rho=args.rho,
        kappa=result.kappa,
        full_square=result.full_square,
        xi=region.xi_for(args.beta, args.rho),
    )
    payload["xi_percent"] = 100.0 * payload["xi"]

    samples = [] if result.full_square else region.boundary(result.kappa, args.grid)
    payload["boundary"] = samples

    if args.beta < args.rho:
        payload["dxi_drho"] = region.dxi_drho(args.beta, args.rho)
        payload["dxi_dbeta"] = region.dxi_dbeta(args.beta, args.rho)

    # no input files: the digest is that of the empty input
    metadata = Metadata(input_digest=input_digest())
    compose_json(payload, metadata, args.out).write()

    if args.csv:
        compose_csv(["tau", "zeta"], samples, metadata, args.csv).write()

    return EXIT_OK


def cmd_scan(args: argparse.Namespace) -> int:
    document = load_model(args.model)
    rho = args.rho if args.rho is not None else document.require_rho()
    grid = scan.GridSpec.parse(args.grid)

    result = scan.scan(
        document.model, document.require_gain(), rho, args.beta, grid=grid, seed=args.seed
    )

    metadata = Metadata(seed=args.seed, input_digest=input_digest(args.model))
    rows = [cell.row() for cell in result.cells]
    compose_csv(scan.CSV_HEADER, rows, metadata, args.out).write()

    summary = dict(
        kappa=result.kappa,
        rho=result.rho,
        beta=result.beta,
        grid=[len(result.taus), len(result.thetas)],
        violations=result.violations(),
        xi=region.xi_for(result.beta, result.rho),
    )
    summary.update(scan.region_fraction(result))
    logging.info(
        f"scan: guaranteed {summary['guaranteed_frac']:.4f}, exact {summary['exact_frac']:.4f}, "
        f"{summary['violations']} violations"
    )
    if args.summary:
        compose_json(summary, metadata, args.summary).write()

    return EXIT_OK


def cmd_sim(args: argparse.Namespace) -> int:
    if args.error_out and not args.reference_gain:
        raise UsageError("--error-out needs --reference-gain")

    document = load_model(args.model)
    model = document.model
    F = load_gain(args.gain) if args.gain else document.require_gain()
    delta = load_delta(args.delta) if args.delta else document.delta
    x0 = load_x0(args.x0)

    trajectory = sim.simulate(model, F, delta, x0, args.t, args.dt)

    paths = [args.model, args.x0] + [p for p in (args.gain, args.delta) if p]
    metadata = Metadata(input_digest=input_digest(*paths))

    header = ["t"] + [f"x{i + 1}" for i in range(model.n)] + [f"u{i + 1}" for i in range(model.m)]
    rows = [
        [t, *x, *u]
        for t, x, u in zip(trajectory.times, trajectory.states, trajectory.inputs)
    ]
    compose_csv(header, rows, metadata, args.out).write()

    if args.reference_gain:
        reference = sim.simulate(model, load_gain(args.reference_gain), delta, x0, args.t, args.dt)
        error = sim.input_relative_error(trajectory, reference)
        if args.error_out:
            compose_csv(
                ["t", "error_percent"], zip(trajectory.times, error), metadata, args.error_out
            ).write()
        if np.any(np.isfinite(error)):
            logging.info(f"max relative input error {np.nanmax(error):.6g} %")

    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(
        prog="sofup",
        description="Quick static output feedback gain updates with stability certificates.",
    )
    parser.add_argument("--config", default=None, help="JSON file with configuration overrides")
    parser.add_argument("--debug", action="store_true", help="print debug information")
    subparsers = parser.add_subparsers(dest="verb", metavar="verb")
    subparsers.required = True

    p = subparsers.add_parser("validate", help="check the rank assumptions on B and C")
    _add_model(p)
    p.add_argument("--rank-tol", type=float, default=None, help="override the rank cutoff")
    _add_out(p, "report")
    p.set_defaults(func=cmd_validate)

    p = subparsers.add_parser("update", help="compute the optimal gain update for a known Delta")
    _add_model(p)
    p.add_argument("--delta", default=None, help="perturbation file (default: Delta in model)")
    p.add_argument("--beta", type=float, default=None, help="MDRP used for the certificate")
    _add_out(p, "result")
    p.set_defaults(func=cmd_update)

    p = subparsers.add_parser("mdrp", help="estimate the MDRP of the nominal closed loop")
    _add_model(p)
    p.add_argument("--tol", type=float, default=None, help="bracket width (default: 1e-3 upper)")
    _add_seed(p)
    p.add_argument("--starts", type=int, default=None, help="inner search restarts")
    p.add_argument("--max-iterations", type=int, default=None, help="bisection step cap")
    p.add_argument(
        "--force-bisection", action="store_true", help="bisect even for a symmetric closed loop"
    )
    _add_out(p, "estimate")
    p.set_defaults(func=cmd_mdrp)

    p = subparsers.add_parser("synth", help="build a perturbation from (rho, tau, theta)")
    _add_model(p)
    p.add_argument("--rho", type=float, required=True)
    p.add_argument("--tau", type=float, required=True)
    p.add_argument("--theta", type=float, required=True)
    _add_seed(p)
    _add_out(p, "perturbation")
    p.set_defaults(func=cmd_synth)

    p = subparsers.add_parser("region", help="guaranteed stability region for (beta, rho)")
    p.add_argument("--beta", type=float, required=True)
    p.add_argument("--rho", type=float, required=True)
    p.add_argument("--grid", type=int, default=101, help="boundary samples (default: 101)")
    p.add_argument("--csv", default=None, help="also write the boundary as CSV")
    _add_out(p, "region")
    p.set_defaults(func=cmd_region)

    p = subparsers.add_parser("scan", help="guaranteed versus exact stability over a grid")
    _add_model(p)
    p.add_argument("--rho", type=float, default=None, help="default: rho in model")
    p.add_argument("--beta", type=float, required=True)
    p.add_argument("--grid", default="41x41", help="tau x theta samples (default: 41x41)")
    _add_seed(p)
    _add_out(p, "CSV")
    p.add_argument("--summary", default=None, help="JSON summary output path")
    p.set_defaults(func=cmd_scan)

    p = subparsers.add_parser("sim", help="simulate the closed loop with RK4")
    _add_model(p)
    p.add_argument("--gain", default=None, help="gain file (default: F_nominal in model)")
    p.add_argument("--delta", default=None, help="perturbation file (default: Delta in model)")
    p.add_argument("--x0", required=True, help="initial state file")
    p.add_argument("--t", type=float, default=10.0, help="end time (default: 10)")
    p.add_argument("--dt", type=float, default=1e-3, help="step size (default: 1e-3)")
    p.add_argument("--reference-gain", default=None, help="second gain to compare inputs with")
    p.add_argument("--error-out", default=None, help="relative input error CSV path")
    _add_out(p, "trajectory CSV")
    p.set_defaults(func=cmd_sim)

    return parser


def _configure(args: argparse.Namespace) -> None:
    data = cfg.from_environment()
    if args.config:
        try:
            data.update(cfg.from_file(args.config))
        except (OSError, ValueError) as e:
            raise UsageError(f"cannot use config file {args.config}: {e}")
    if args.debug:
        data["debug"] = "yes"

    cfg.reconfigure(data)


def main(argv: Optional[List[str]] = None) -> int:
    cfg.reconfigure_logging()

    try:
        args = build_parser().parse_args(argv)
        _configure(args)
        logging.debug(f"sofup {args.verb} starting")
        return args.func(args)
    except SofupError as e:
        logging.error(f"{type(e).__name__}: {e}")
        return exit_code_for(e)


if __name__ == "__main__":
    sys.exit(main())
