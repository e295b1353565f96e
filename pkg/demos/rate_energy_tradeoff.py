"""Mean WSR against the energy threshold for all six strategies.

Runs the CI-size sweep (10 draws) on the default scenario and prints one
table row per threshold plus the RSMA+RIS gains at 20 uW.

    python3 demos/rate_energy_tradeoff.py --realizations 10 --out runs/rate_energy
"""
import argparse

from rsma_ris_swipt.ao import ALL_STRATEGIES
from rsma_ris_swipt.experiments import SweepSpec, run_rate_energy_sweep, summarize_rows

parser = argparse.ArgumentParser()
parser.add_argument("--realizations", type=int, default=10)
parser.add_argument("--seed", type=int, default=0)
parser.add_argument("--out", default=None)
args = parser.parse_args()

spec = SweepSpec("rate_energy", realizations=args.realizations, seed=args.seed, output=args.out)
rows = run_rate_energy_sweep(spec)
cells = summarize_rows(rows, spec.config.num_irs)["cells"]
names = [s.name for s in ALL_STRATEGIES]

print("E_th [uW] " + "".join(f"{n:>11}" for n in names))
for e in spec.eth_grid:
    mean = {c["strategy"]: c["wsr_mean"] for c in cells if c["e_th"] == e}
    print(f"{e * 1e6:9.1f} " + "".join(f"{mean[n]:11.3f}" for n in names))

at20 = {c["strategy"]: c["wsr_mean"] for c in cells if abs(c["e_th"] - 20e-6) < 1e-12}
if at20:
    print("\nRSMA+RIS gain at 20 uW:")
    for n in names[1:]:
        print(f"  over {n:<9} {at20['RSMA+RIS'] - at20[n]:+.4f} bits/s/Hz "
              f"({100 * (at20['RSMA+RIS'] / at20[n] - 1):+.2f} %)")
