import argparse
import json
import logging
import sys
from pathlib import Path

import colorlog
from pythonjsonlogger import jsonlogger

from hyperstab import io_utils
from hyperstab.debug_utils import log_system_info
from hyperstab.errors import HyperstabError, IoError, SchemaError, ValidationError
from hyperstab.runner.scenario_runner import ScenarioRunner, format_synthesis
from hyperstab.runner.suite import SUITES, run_suite
from hyperstab.scenario import parse_scenario

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_VERDICT = 1
EXIT_USAGE = 2


class CustomJsonFormatter(jsonlogger.JsonFormatter):
    def add_fields(self, log_record, record, message):
        super().add_fields(log_record, record, message)

        # Merge fields passed as extra={"extra_fields": {...}}.
        if hasattr(record, "extra_fields"):
            for key, value in record.extra_fields.items():
                log_record[key] = value


def setup_logging(debug: bool = False, json_logs: bool = False):
    root_logger = logging.getLogger()
    root_logger.setLevel(logging.DEBUG if debug else logging.INFO)
    for h in list(root_logger.handlers):
        root_logger.removeHandler(h)
    if json_logs:
        handler = logging.StreamHandler()
        handler.setFormatter(CustomJsonFormatter("%(asctime)s %(levelname)s %(name)s %(message)s"))
    else:
        handler = colorlog.StreamHandler()
        handler.setFormatter(
            colorlog.ColoredFormatter("%(green)s%(levelname)s:%(name)s:%(message)s")
        )
    root_logger.addHandler(handler)


def _float_list(text: str) -> list[float]:
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError as e:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from e


def _int_list(text: str) -> list[int]:
    try:
        return [int(v) for v in text.split(",") if v.strip()]
    except ValueError as e:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from e


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="hyperstab",
        description="Finite-time boundary stabilization of 1-D hyperbolic systems.",
    )
    parser.add_argument("--debug", action="store_true", help="debug logging and host info")
    parser.add_argument("--json-logs", action="store_true", help="log records as JSON lines")
    sub = parser.add_subparsers(dest="command", required=True)

    synth = sub.add_parser("synth", help="synthesize the feedback law of a scenario")
    synth.add_argument("scenario", type=Path)

    simulate = sub.add_parser("simulate", help="simulate the closed loop of a scenario")
    simulate.add_argument("scenario", type=Path)
    simulate.add_argument("--snapshots", type=_float_list, default=[], help="t1,t2,...")

    verify = sub.add_parser("verify", help="run the built-in verification suite")
    verify.add_argument("--suite", choices=SUITES, default="all")
    verify.add_argument("--output-dir", type=Path, default=None)
    verify.add_argument("--seed", type=int, default=0)

    sweep = sub.add_parser("sweep", help="simulate a grid of (Lambda, q, nx) cells")
    sweep.add_argument("scenario", type=Path)
    sweep.add_argument("--lambda", dest="lambdas", type=_float_list, default=None)
    sweep.add_argument("--q", dest="qs", type=_float_list, default=None)
    sweep.add_argument("--nx", dest="nxs", type=_int_list, default=None)
    return parser


def cmd_synth(args) -> int:
    runner = ScenarioRunner(parse_scenario(args.scenario))
    report = runner.synth()
    print(format_synthesis(report))
    print(json.dumps(io_utils.to_jsonable(report), indent=2))
    return EXIT_OK


def cmd_simulate(args) -> int:
    scenario = parse_scenario(args.scenario)
    runner = ScenarioRunner(scenario)
    snapshots = sorted(set(scenario.snapshots) | set(args.snapshots))
    result = runner.simulate(snapshots=snapshots)
    if not result.decay.passed:
        t, margin = result.decay.failures[0]
        logger.error(f"Lyapunov decay fails at t = {t:.6g} (margin {margin:.3e})")
        return EXIT_VERDICT
    return EXIT_OK


def cmd_verify(args) -> int:
    output_dir = args.output_dir or io_utils.resolve_output_dir("runs")
    claims = run_suite(args.suite, io_utils.ensure_dir(output_dir), seed=args.seed)
    failed = [c for c in claims if not c.passed]
    if failed:
        logger.error(f"claim {failed[0].criterion} ({failed[0].name}) fails: {failed[0].summary}")
        return EXIT_VERDICT
    logger.info(f"🎉 All {len(claims)} claims hold")
    return EXIT_OK


def cmd_sweep(args) -> int:
    scenario = parse_scenario(args.scenario)
    runner = ScenarioRunner(scenario)
    rows = runner.sweep(
        args.lambdas or scenario.lyapunov.Lambda,
        args.qs or scenario.lyapunov.q,
        args.nxs or [scenario.numerics.nx],
    )
    failed = [r for r in rows if not r["decay_pass"]]
    if failed:
        r = failed[0]
        logger.error(f"decay fails for Lambda = {r['lambda']:g}, q = {r['q']:g}, nx = {r['nx']}")
        return EXIT_VERDICT
    return EXIT_OK


COMMANDS = {
    "synth": cmd_synth,
    "simulate": cmd_simulate,
    "verify": cmd_verify,
    "sweep": cmd_sweep,
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    setup_logging(debug=args.debug, json_logs=args.json_logs)
    if args.debug:
        log_system_info()
    try:
        return COMMANDS[args.command](args)
    except (SchemaError, IoError, ValidationError) as e:
        logger.error(str(e))
        return EXIT_USAGE
    except HyperstabError as e:
        logger.error(f"{type(e).__name__}: {e}")
        return EXIT_VERDICT


if __name__ == "__main__":
    sys.exit(main())
