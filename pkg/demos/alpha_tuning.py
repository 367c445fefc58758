"""How the sleep slope alpha is chosen.

A device sleeps with probability 1 - alpha * B / B_max. Pick alpha so that,
on average, a device sitting at the threshold xi spends what it harvests.
EMK uses only the mean income. EDK also accounts for income that would
overflow a battery already at xi, so its slope is never larger.
"""

from ehfl.energy import EhProcess
from ehfl.policy import alpha_edk, alpha_emk, truncated_mean_income
from ehfl.sim import SimConfig

cfg = SimConfig()
ep = cfg.energy()
print(f"per-iteration costs: compute {ep.E_cmp:.3e} J, receive {ep.E_rx:.3e} J, transmit {ep.E_tx:.3e} J")
print(f"one energy unit = {ep.unit:.4e} J, battery holds {cfg.B_max / ep.unit:.1f} units\n")

print(f"{'m':>5} {'xi/B_max':>8} {'E[min]/E':>9} {'alpha_emk':>10} {'alpha_edk':>10}")
for m in (0.1, 0.2, 1.0, 5.0):
    proc = EhProcess(cfg.r, m, ep.unit)
    for frac in (0.2, 0.4, 0.8):
        xi = frac * cfg.B_max
        ratio = truncated_mean_income(proc, cfg.B_max - xi) / proc.mean_income
        a_emk = alpha_emk(proc.mean_income, xi, cfg.B_max, cfg.M, cfg.K, ep)
        a_edk = alpha_edk(proc, xi, cfg.B_max, cfg.M, cfg.K, ep)
        print(f"{m:5.1f} {frac:8.1f} {ratio:9.4f} {a_emk:10.4f} {a_edk:10.4f}")

# With rare, large arrivals (r = 0.02 means one burst every ~50 slots) the
# truncation only matters once a burst no longer fits on top of xi.
