"""Outer WSR trace of every strategy on one channel draw.

Every strategy starts from MRT unless ``--warm-start`` is given; warm-started
RIS runs often begin at their final value. Strategies without a RIS finish in
a single beamforming pass, so their trace has two entries (start and end).
"""
import argparse

from rsma_ris_swipt.experiments import SweepSpec, run_convergence_trace

parser = argparse.ArgumentParser()
parser.add_argument("--seed", type=int, default=0)
parser.add_argument("--eth-uw", type=float, default=20.0)
parser.add_argument("--warm-start", action="store_true")
args = parser.parse_args()

spec = SweepSpec("convergence", eth_grid=(args.eth_uw / 1e6,), realizations=1, seed=args.seed,
                 warm_start=args.warm_start)
for name, trace in run_convergence_trace(spec).items():
    steps = " ".join(f"{v:.4f}" for v in trace)
    print(f"{name:>9} ({len(trace) - 1:2d} iter): {steps}")
