"""Sweeping the battery threshold xi under EDK-AC.

A higher threshold keeps more energy in reserve but makes devices sleep
more often. The sweep prints the final error and battery for each xi,
using the same seeds at every point so the comparison is paired.
"""

import argparse
import csv

from ehfl.cli import SweepSpec, run_sweep
from ehfl.sim import SimConfig

parser = argparse.ArgumentParser()
parser.add_argument("--replications", type=int, default=10)
parser.add_argument("--out", default="demo_out")
args = parser.parse_args()

spec = SweepSpec(
    axis="threshold",
    values=tuple(round(0.1 * i, 1) for i in range(1, 10)),
    base=SimConfig(T=1000, replications=args.replications),
    strategies=("EDK-AC", "LUN"),
)
path = run_sweep(spec, args.out)

with open(path, newline="") as fh:
    rows = list(csv.DictReader(fh))
print(f"{'xi/B_max':>8} {'strategy':>8} {'alpha':>8} {'error':>8} {'battery':>8}")
for row in rows:
    alpha = f"{float(row['alpha']):8.4f}" if row["alpha"] else f"{'-':>8}"
    print(f"{float(row['axis_value']):8.1f} {row['strategy']:>8} {alpha} "
          f"{float(row['error_mean']):8.4f} {float(row['battery_norm_mean']):8.3f}")
print(f"\nfull table: {path}")
