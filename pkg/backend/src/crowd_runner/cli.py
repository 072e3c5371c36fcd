"""Command-line driver: run one scenario and write frames, logs and metrics."""

import argparse
import datetime
import logging
import os
import sys
import time
from pathlib import Path
from typing import List, Optional

from dotenv import load_dotenv

from crowd_mfg import config
from crowd_mfg import logging as run_logging
from crowd_mfg.fields import DensityField
from crowd_mfg.mfg_engine import MFGEngine, WindowSolveOptions
from crowd_mfg.scenarios import BUILTIN_SCENARIOS, builtin_scenario, load_scenario, validate_scenario
from crowd_mfg.utils import CFLViolation, ConfigurationError, SchemeError
from crowd_runner.metrics import metrics_table, summarize
from crowd_runner.models import RunManifest, RunStatus

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_CONFIG = 3
EXIT_CFL = 4
EXIT_INTERNAL = 5

LOG_FORMAT = "%(asctime)s - %(name)s - %(levelname)s - %(message)s"


def _time_list(text: str) -> List[float]:
    try:
        times = [float(item) for item in text.split(",") if item.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated times, got '{text}'")
    if any(t < 0 for t in times):
        raise argparse.ArgumentTypeError("frame times must be >= 0")
    return times


def _on_off(text: str) -> bool:
    if text not in ("on", "off"):
        raise argparse.ArgumentTypeError("expected 'on' or 'off'")
    return text == "on"


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="crowd-mfg",
        description="Limited-prediction mean-field game crowd simulation",
    )
    source = parser.add_mutually_exclusive_group(required=True)
    source.add_argument("--scenario", choices=sorted(BUILTIN_SCENARIOS), help="Builtin test scenario")
    source.add_argument("--config", help="Scenario document (TOML, or YAML by suffix)")
    parser.add_argument("--theta", type=float, help="Override the prediction horizon")
    parser.add_argument("--out", help="Output directory (default: a timestamped run folder)")
    parser.add_argument("--frames", type=_time_list, default=[], help="Frame times, e.g. 0.12,0.55,0.75")
    parser.add_argument("--every", type=int, default=0, help="Also write every N-th frame")
    parser.add_argument("--fictitious-play", type=_on_off, default=None, help="on|off")
    parser.add_argument("--tol", type=float, help="Fixed-point tolerance on E_k")
    parser.add_argument("--max-iters", type=int, help="Fixed-point iteration cap")
    parser.add_argument("--seed", type=int, help="Reserved; the schemes are deterministic")
    parser.add_argument(
        "--log-level",
        default=os.environ.get("CROWD_MFG_LOG_LEVEL", "INFO"),
        help="Logging level",
    )
    parser.add_argument("--no-progress", action="store_true", help="Disable the progress bar")
    return parser


def _apply_overrides(scenario, args):
    data = scenario.model_dump()
    if args.theta is not None:
        data["model"]["theta"] = args.theta
    if args.fictitious_play is not None:
        data["solver"]["fictitious_play"] = args.fictitious_play
    if args.tol is not None:
        data["solver"]["tol"] = args.tol
    if args.max_iters is not None:
        data["solver"]["max_iters"] = args.max_iters
    return validate_scenario(data)


def frame_indices(times: List[float], every: int, grid) -> List[int]:
    """Requested times snapped to the nearest t^n, plus every N-th step."""
    indices = {grid.step_index(t) for t in times}
    if every > 0:
        indices.update(range(0, grid.nT + 1, every))
    if not indices:
        indices = {0, grid.nT}
    return sorted(indices)


def _engine_defaults(opts: WindowSolveOptions) -> dict:
    return {
        "tol": opts.tol,
        "max_iters": opts.max_iters,
        "min_iters": config.MIN_ITERS,
        "stagnation_window": opts.stagnation_window,
        "fictitious_play": opts.use_fictitious_play,
        "warm_start": opts.warm_start,
        "wall_value_factor": config.WALL_VALUE_FACTOR,
        "cfl_slack": config.CFL_SLACK,
    }


def run(args) -> int:
    if args.scenario:
        scenario = builtin_scenario(args.scenario)
    else:
        scenario = load_scenario(args.config, check=False)
    scenario = _apply_overrides(scenario, args)

    engine = MFGEngine(scenario)
    engine.check_stability()
    opts = WindowSolveOptions.from_scenario(scenario, engine.initial_mass)

    out = args.out or run_logging.run_directory(os.environ.get("CROWD_MFG_OUTPUT_ROOT"), scenario.name)
    os.makedirs(out, exist_ok=True)
    manifest = RunManifest(
        scenario=scenario.model_dump(mode="json", exclude_none=True),
        engine=_engine_defaults(opts),
        started_at=datetime.datetime.now().isoformat(timespec="seconds"),
    )
    run_logging.write_manifest(manifest.to_document(), out)

    started = time.monotonic()
    try:
        result = engine.run_simulation(opts, progress=not args.no_progress)
    except Exception:
        manifest.status = RunStatus.FAILED
        manifest.duration_seconds = time.monotonic() - started
        run_logging.write_manifest(manifest.to_document(), out)
        raise

    g = engine.grid
    outputs = []
    scale = float(engine.rho0.values.max()) or 1.0
    for n in frame_indices(args.frames, args.every, g):
        slice_ = DensityField(result.density_history.values[n])
        csv_path = run_logging.write_density_csv(slice_, Path(out) / run_logging.frame_name(n, "csv"), g, g.time(n))
        pgm_path = run_logging.write_pgm(slice_, Path(out) / run_logging.frame_name(n, "pgm"), scale)
        outputs += [csv_path.name, pgm_path.name]

    run_logging.write_convergence_log(result.convergence, Path(out) / "convergence.csv")
    metrics_table(result).to_csv(Path(out) / "metrics.csv", index=False, float_format="%.17g")
    outputs += ["convergence.csv", "metrics.csv"]

    manifest.outputs = outputs
    manifest.summary = summarize(result)
    manifest.duration_seconds = time.monotonic() - started
    manifest.status = RunStatus.COMPLETE
    run_logging.write_manifest(manifest.to_document(), out)
    logger.info(f"Wrote {len(outputs)} files to {out}")
    return EXIT_OK


def main(argv: Optional[List[str]] = None) -> int:
    load_dotenv()
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return EXIT_USAGE if e.code else EXIT_OK

    level = logging.getLevelName(args.log_level.upper())
    if not isinstance(level, int):
        parser.print_usage(sys.stderr)
        print(f"crowd-mfg: unknown log level '{args.log_level}'", file=sys.stderr)
        return EXIT_USAGE
    logging.basicConfig(level=level, format=LOG_FORMAT)
    try:
        return run(args)
    except CFLViolation as e:
        logger.error(f"CFL failure: {e}")
        return EXIT_CFL
    except ConfigurationError as e:
        logger.error(f"Configuration error: {e}")
        return EXIT_CONFIG
    except SchemeError as e:
        logger.error(f"Internal error: {e}")
        return EXIT_INTERNAL
    except Exception as e:
        logger.exception(f"Unexpected failure: {e}")
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
