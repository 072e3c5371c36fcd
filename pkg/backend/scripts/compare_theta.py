"""Run one builtin scenario at each of its theta presets and print the metrics side by side.

Usage:
    python backend/scripts/compare_theta.py test2
    python backend/scripts/compare_theta.py test4 --thetas 0,0.15 --csv test4.csv
"""

import argparse
import logging
import sys

import pandas as pd

from crowd_mfg.mfg_engine import run_simulation
from crowd_mfg.scenarios import builtin_scenario, check_numerics
from crowd_runner.metrics import summarize

# Setup logging
logging.basicConfig(level=logging.INFO, format="%(asctime)s - %(levelname)s - %(message)s")
logger = logging.getLogger(__name__)


def compare(name: str, thetas=None, fictitious_play=None) -> pd.DataFrame:
    base = builtin_scenario(name)
    if fictitious_play is not None:
        base = base.model_copy(update={"solver": base.solver.model_copy(update={"fictitious_play": fictitious_play})})
    rows = []
    for theta in thetas or base.theta_presets:
        scenario = base.with_theta(theta)
        check_numerics(scenario)
        logger.info(f"{name}: theta={theta}")
        summary = summarize(run_simulation(scenario, progress=True))
        row = {"theta": theta}
        row.update(summary.model_dump(exclude={"exit_masses"}))
        row.update({f"exit_{exit_name}": mass for exit_name, mass in summary.exit_masses.items()})
        rows.append(row)
    return pd.DataFrame(rows).set_index("theta")


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("scenario", help="Builtin scenario name (test1 .. test5)")
    parser.add_argument("--thetas", help="Comma-separated horizons instead of the presets")
    parser.add_argument("--fictitious-play", choices=["on", "off"])
    parser.add_argument("--csv", help="Also write the table to this file")
    args = parser.parse_args()

    thetas = [float(x) for x in args.thetas.split(",")] if args.thetas else None
    fictitious_play = None if args.fictitious_play is None else args.fictitious_play == "on"
    try:
        table = compare(args.scenario, thetas, fictitious_play)
    except KeyError as e:
        logger.error(f"❌ {e}")
        sys.exit(2)

    with pd.option_context("display.max_columns", None, "display.width", 160):
        print(table)
    if args.csv:
        table.to_csv(args.csv)
        logger.info(f"✅ Table written to {args.csv}")


if __name__ == "__main__":
    main()
