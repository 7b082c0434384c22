"""Command-line entry point: ``paralab [config.yaml] [--only ID ...]``."""

from __future__ import annotations

import argparse
import logging
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

from paralab.calibration import load_dials, save_dials
from paralab.config import ConfigError, load_config, selected_ids
from paralab.experiments import EXPERIMENT_IDS, run

log = logging.getLogger("paralab")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="paralab", description="Run the parabolic-estimate experiments.")
    ap.add_argument("config", nargs="?", help="YAML config merged over the shipped defaults")
    ap.add_argument("--output-root", help="directory receiving one sub-directory per experiment")
    ap.add_argument("--seed", type=int, help="override the configured seed")
    ap.add_argument("--calibrate", action="store_true", help="recalibrate the dials instead of reusing dials.json")
    ap.add_argument("--only", nargs="+", metavar="ID", choices=EXPERIMENT_IDS, help="run only these experiments")
    ap.add_argument("--jobs", type=int, help="worker processes")
    ap.add_argument("--plots", action="store_true", help="also write SVG plots")
    ap.add_argument("--list", action="store_true", help="list experiment ids and exit")
    return ap


def _job(args):
    """Run one experiment; failures come back as messages so the other jobs finish."""
    exp_id, params, outdir, seed, dials, calibrate_mode, plots = args
    try:
        return run(exp_id, params, outdir, seed, dials, calibrate_mode, plots), None
    except Exception as exc:  # noqa: BLE001 - reported per experiment, details persisted in outdir
        return None, f"{exp_id} failed ({type(exc).__name__}: {exc}); see {outdir / 'failure.txt'}"


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO, format="%(message)s")
    if args.list:
        print("\n".join(EXPERIMENT_IDS))
        return 0
    overrides = {}
    if args.output_root:
        overrides["output_root"] = args.output_root
    if args.seed is not None:
        overrides["seed"] = args.seed
    if args.jobs is not None:
        overrides["jobs"] = args.jobs
    if args.plots:
        overrides["plots"] = True
    try:
        cfg = load_config(args.config, overrides)
        ids = selected_ids(cfg, args.only)
    except (ConfigError, OSError) as exc:
        print(f"paralab: configuration error: {exc}", file=sys.stderr)
        return 2
    root = Path(cfg["output_root"])
    root.mkdir(parents=True, exist_ok=True)
    dials_path = root / "dials.json"
    dials = load_dials(dials_path)
    jobs = [(i, cfg["experiments"][i], root / i, cfg["seed"], dials, args.calibrate, cfg["plots"]) for i in ids]
    if cfg["jobs"] > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(cfg["jobs"]) as pool:
            results = list(pool.map(_job, jobs))
    else:
        results = [_job(j) for j in jobs]
    errors = [err for _, err in results if err]
    for m in (m for m, _ in results if m is not None):
        for fam, cal in m.calibrations.items():
            if cal["compliant"]:
                dials[fam] = cal["C"]
            else:
                log.warning("calibration failed for family %s: no compliant C below %g", fam, cal["ceiling"])
        log.info("%-22s %6.1fs  %s", m.experiment, m.wall_clock, ", ".join(f"{k}={v}" for k, v in m.summary.items()))
    save_dials(dials_path, dials)
    for err in errors:
        log.error("paralab: %s", err)
    return 1 if errors else 0


if __name__ == "__main__":
    sys.exit(main())
