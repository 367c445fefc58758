"""Batteries settle at the threshold under EDK/EMK and drain under LUN.

Runs the default network (100 devices, 10 channels, mean income 0.2 units
per slot) and prints the replication-mean normalized battery every 200
iterations. Pass --plot to save a figure (needs matplotlib).
"""

import argparse

from ehfl.sim import SimConfig, run_experiment

parser = argparse.ArgumentParser()
parser.add_argument("--replications", type=int, default=10)
parser.add_argument("--T", type=int, default=2000)
parser.add_argument("--plot", metavar="PNG")
args = parser.parse_args()

results = {}
for strategy in ("EDK-AC", "EMK-AC", "LUN"):
    results[strategy] = run_experiment(SimConfig(strategy=strategy, T=args.T, replications=args.replications))

print(f"{'t':>6} " + " ".join(f"{s:>8}" for s in results))
for t in range(200, args.T + 1, 200):
    print(f"{t:6d} " + " ".join(f"{r.at(t, 'mean_battery_norm'):8.3f}" for r in results.values()))
print("\nerror at the end: " + ", ".join(f"{s} {r.at(args.T, 'error'):.4f}" for s, r in results.items()))

if args.plot:
    import matplotlib.pyplot as plt

    fig, ax = plt.subplots(figsize=(6, 3.5))
    for s, r in results.items():
        ax.plot(r.t, r.mean["mean_battery_norm"], label=s)
    ax.axhline(SimConfig().xi / SimConfig().B_max, color="grey", ls=":", lw=1)
    ax.set(xlabel="iteration", ylabel="mean battery / B_max")
    ax.legend()
    fig.tight_layout()
    fig.savefig(args.plot, dpi=150)
