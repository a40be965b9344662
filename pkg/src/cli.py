import argparse
import sys
import time
from pathlib import Path

from loguru import logger

from src.app import orchestration
from src.config import settings
from src.domain.errors import (
    DimensionMismatchError,
    GrapeDivergenceError,
    NonFiniteError,
    PmpQocError,
    ScenarioParseError,
    ScenarioValidationError,
    SingularArcError,
    SingularJacobianError,
    TraceDriftError,
)
from src.infra.logging import setup_logging
from src.infra.persistence import OutputWriter, RunManifest
from src.infra.scenario_store import load_scenario

EXIT_OK = 0
EXIT_VALIDATION = 2
EXIT_NOT_CONVERGED = 3
EXIT_USAGE = 64

VALIDATION_ERRORS = (ScenarioParseError, ScenarioValidationError, DimensionMismatchError, ValueError)
# numerical breakdowns during integration or iteration report as "not converged"
NOT_CONVERGED_ERRORS = (SingularJacobianError, GrapeDivergenceError, SingularArcError, TraceDriftError, NonFiniteError)


class UsageParser(argparse.ArgumentParser):
    """argparse with the sysexits usage code instead of 2."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def build_parser() -> UsageParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--out", type=str, default=None, help="output directory (default OUTPUT_DIR/<cmd>-<name>)")
    common.add_argument("--seed", type=int, default=settings.DEFAULT_SEED)
    common.add_argument("--log-level", type=str, default=None)

    parser = UsageParser(prog="pmp-qoc", description="PMP-based quantum optimal control toolkit")
    sub = parser.add_subparsers(dest="cmd", required=True, parser_class=UsageParser)

    check = sub.add_parser("check", parents=[common], help="Lie-algebra controllability test")
    check.add_argument("--scenario", required=True)
    check.add_argument("--samples", type=int, default=50)
    check.add_argument("--mode", choices=["drifted", "driftless"], default=None)

    exists = sub.add_parser("exists", parents=[common], help="Filippov existence test")
    exists.add_argument("--scenario", required=True)

    sh = sub.add_parser("shoot", parents=[common], help="multi-start indirect shooting")
    sh.add_argument("--scenario", required=True)
    sh.add_argument("--starts", type=int, default=settings.SHOOT_STARTS)
    sh.add_argument("--workers", type=int, default=settings.PMP_QOC_THREADS)
    sh.add_argument("--abnormal", action="store_true", help="look for abnormal extremals (p0 = 0)")
    sh.add_argument("--junction", choices=["switch", "singular", "continue"], default="switch")
    sh.add_argument("--max-iter", type=int, default=50)
    sh.add_argument("--t-min", type=float, default=None)
    sh.add_argument("--t-max", type=float, default=None)
    sh.add_argument("--force", action="store_true", help="run even when existence cannot be concluded")

    gr = sub.add_parser("grape", parents=[common], help="GRAPE gradient ascent")
    gr.add_argument("--scenario", required=True)
    gr.add_argument("--guess", type=str, default=None, help="constant value or CSV with u_1..u_m")
    gr.add_argument("--max-iters", type=int, default=500)
    gr.add_argument("--eps0", type=float, default=1.0)
    gr.add_argument("--grad-tol", type=float, default=1e-8)
    gr.add_argument("--polish", action="store_true", help="refine the result by shooting from its costate")
    gr.add_argument("--force", action="store_true", help="run even when existence cannot be concluded")

    syn = sub.add_parser("synthesize", parents=[common], help="closed-form solutions and syntheses")
    syn.add_argument("--problem", choices=list(orchestration.SYNTHESIS_PROBLEMS), required=True)
    syn.add_argument("--delta", type=float, default=0.5)
    syn.add_argument("--samples", type=int, default=400)
    syn.add_argument("--T", type=float, default=1.0, help="horizon of the warmup transfer")

    ch = sub.add_parser("chattering", parents=[common], help="distance sweep for the chattering example")
    ch.add_argument("--max-switches", type=int, default=256)
    ch.add_argument("--T", type=float, default=1.0)
    ch.add_argument("--workers", type=int, default=settings.PMP_QOC_THREADS)

    pr = sub.add_parser("propagate", parents=[common], help="propagate a scenario under a given control")
    pr.add_argument("--scenario", required=True)
    pr.add_argument("--control", type=str, default=None, help="constant value or CSV with u_1..u_m")
    return parser


def _out_dir(args, label: str) -> Path:
    if args.out:
        return Path(args.out)
    return Path(settings.OUTPUT_DIR) / f"{args.cmd}-{label}"


def _parameters(args) -> dict:
    skip = {"cmd", "out", "log_level"}
    return {k: v for k, v in sorted(vars(args).items()) if k not in skip}


def _gate(scenario, args) -> bool:
    report = orchestration.filippov_gate(scenario)
    print(f"existence verdict: {report.verdict}")
    if report.verdict == "cannot-conclude" and not args.force:
        logger.error("existence cannot be concluded; the PMP may have solutions none of which is optimal. Pass --force.")
        return False
    return True


def run(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    setup_logging(args.log_level)

    started = time.perf_counter()
    scenario = None
    scenario_ref = getattr(args, "scenario", None)
    label = getattr(args, "problem", None) or args.cmd
    code = EXIT_OK
    writer = None
    try:
        if scenario_ref is not None:
            scenario = load_scenario(scenario_ref)
            label = scenario.name
        writer = OutputWriter(_out_dir(args, label))

        if args.cmd == "check":
            result = orchestration.run_check(scenario, writer, args.samples, args.seed, args.mode)
            print(result.summary["verdict"])

        elif args.cmd == "exists":
            result = orchestration.run_exists(scenario, writer)
            print(f"existence verdict: {result.summary['verdict']}")

        elif args.cmd == "shoot":
            if not _gate(scenario, args):
                code = EXIT_VALIDATION
            else:
                t_range = None
                if args.t_min is not None and args.t_max is not None:
                    t_range = (args.t_min, args.t_max)
                result = orchestration.run_shoot(
                    scenario, writer, args.starts, args.seed, args.workers, args.abnormal,
                    args.junction, args.max_iter, t_range,
                )
                if not result.converged:
                    code = EXIT_NOT_CONVERGED

        elif args.cmd == "grape":
            if not _gate(scenario, args):
                code = EXIT_VALIDATION
            else:
                result = orchestration.run_grape(
                    scenario, writer, args.guess, args.max_iters, args.eps0, args.grad_tol, args.polish
                )
                print(f"fidelity: {result.summary['fidelity']:.12f} ({result.summary['status']})")
                if not result.converged:
                    code = EXIT_NOT_CONVERGED

        elif args.cmd == "synthesize":
            orchestration.run_synthesize(args.problem, writer, args.delta, args.samples, args.T)

        elif args.cmd == "chattering":
            result = orchestration.run_chattering(writer, args.max_switches, args.T, args.workers)
            print(f"d({args.max_switches}) = {result.summary['d_last']:.6g}")

        elif args.cmd == "propagate":
            orchestration.run_propagate(scenario, writer, args.control)

    except NOT_CONVERGED_ERRORS as exc:
        logger.error(str(exc))
        code = EXIT_NOT_CONVERGED
    except VALIDATION_ERRORS as exc:
        logger.error(str(exc))
        code = EXIT_VALIDATION
    except PmpQocError as exc:
        logger.error(str(exc))
        code = EXIT_VALIDATION

    if writer is None:
        # the scenario failed to load; the manifest still records the run
        writer = OutputWriter(_out_dir(args, label))
    manifest = RunManifest(
        subcommand=args.cmd,
        scenario=None if scenario_ref is None else str(scenario_ref),
        parameters=_parameters(args),
        output_dir=str(writer.out_dir),
        seed=args.seed,
        wall_clock_seconds=time.perf_counter() - started,
        exit_code=code,
    )
    manifest.write(writer)
    return code


def main():
    sys.exit(run())


if __name__ == "__main__":
    main()
