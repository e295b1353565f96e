"""Command-line entry point: ``rsma-ris-swipt sweep ...``."""
from __future__ import annotations

import argparse
import json
import logging
import sys

import yaml

from .experiments import DEFAULT_ETH_GRID_UW, MODE_REALIZATIONS, SweepSpec, default_weight_grid, run_sweep, \
    summarize_rows, verify_solutions
from .scenario import ScenarioConfig, config_from_dict


def _csv_list(text: str) -> list:
    return [t.strip() for t in text.split(",") if t.strip()]


def _override(data: dict, assignment: str) -> None:
    """Apply ``section.key=value`` (value parsed as YAML) to a nested config dict."""
    path, sep, raw = assignment.partition("=")
    if not sep:
        raise argparse.ArgumentTypeError(f"--set expects key=value, got {assignment!r}")
    keys = path.strip().split(".")
    node = data
    for key in keys[:-1]:
        node = node.setdefault(key, {})
    node[keys[-1]] = yaml.safe_load(raw)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="rsma-ris-swipt", description="RSMA/RIS SWIPT beamforming sweeps")
    parser.add_argument("-v", "--verbose", action="count", default=0)
    sub = parser.add_subparsers(dest="command", required=True)

    sweep = sub.add_parser("sweep", help="run a Monte-Carlo experiment and write CSV/JSON results")
    sweep.add_argument("--experiment", required=True, choices=["rate-energy", "rate-region", "convergence"])
    sweep.add_argument("--config", help="YAML scenario file")
    sweep.add_argument("--set", dest="overrides", action="append", default=[], metavar="SECTION.KEY=VALUE",
                       help="override one config entry, e.g. power.tx_power_dbm=10")
    sweep.add_argument("--strategies", type=_csv_list, help="comma-separated, e.g. RSMA+RIS,SDMA")
    sweep.add_argument("--eth-grid", type=_csv_list, help="energy thresholds in microwatts, comma-separated")
    sweep.add_argument("--realizations", type=int, help="overrides the mode default")
    sweep.add_argument("--seed", type=int, help="defaults to the config seed")
    sweep.add_argument("--mode", choices=sorted(MODE_REALIZATIONS), default="ci")
    sweep.add_argument("--weight-points", type=int, default=13, help="rate-region grid size per direction")
    sweep.add_argument("--workers", type=int, default=1)
    sweep.add_argument("--no-warm-start", action="store_true")
    sweep.add_argument("--out", required=True, help="output directory")
    return parser


def spec_from_args(args) -> SweepSpec:
    data: dict = {}
    if args.config:
        with open(args.config) as fh:
            data = yaml.safe_load(fh) or {}
    for assignment in args.overrides:
        _override(data, assignment)
    cfg = config_from_dict(data) if data else ScenarioConfig()
    experiment = args.experiment.replace("-", "_")

    if args.eth_grid:
        eth = [float(e) / 1e6 for e in args.eth_grid]
    elif experiment == "convergence":
        eth = [cfg.energy_threshold]
    else:
        eth = [e / 1e6 for e in DEFAULT_ETH_GRID_UW]

    if experiment == "rate_region":
        weights = default_weight_grid(args.weight_points)
        if not args.eth_grid:
            eth = [cfg.energy_threshold]
    else:
        weights = [cfg.ir_weights]

    realizations = args.realizations or MODE_REALIZATIONS[args.mode]
    if experiment == "convergence":
        realizations = 1
    kwargs = dict(experiment=experiment, eth_grid=eth, weight_grid=weights, realizations=realizations,
                  seed=cfg.rng_seed if args.seed is None else args.seed, output=args.out, config=cfg,
                  workers=args.workers, warm_start=not args.no_warm_start)
    if args.strategies:
        kwargs["strategies"] = args.strategies
    return SweepSpec(**kwargs)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.WARNING - 10 * args.verbose, format="%(levelname)s %(name)s: %(message)s")
    try:
        spec = spec_from_args(args)
    except (KeyError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    rows = run_sweep(spec)
    failures = verify_solutions(spec)
    summary = summarize_rows(rows, spec.config.num_irs)
    for cell in summary["cells"]:
        print(f"{cell['strategy']:>9}  E_th={cell['e_th'] * 1e6:6.2f} uW  u=({cell['u1']:.3g}, {cell['u2']:.3g})  "
              f"WSR={cell['wsr_mean']:.4f} +/- {cell['wsr_stderr']:.4f}  "
              f"converged {cell['converged']}/{cell['runs']}")
    print(json.dumps({"out": str(spec.output), "rows": len(rows), "feasibility_failures": len(failures)}))
    return 1 if failures else 0


if __name__ == "__main__":
    sys.exit(main())
