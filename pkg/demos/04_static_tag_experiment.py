"""
With and without mitigation over all 26 test points
===================================================

Runs the packaged scenario (10 paired replications per point), prints the
summary and a few quantiles of the pooled error CDFs. A plot is drawn if
matplotlib is installed.
"""

import json
import sys

import numpy as np

from uwbnlos.harness import default_config, empirical_cdf, run_scenario, summarize

cfg = default_config()
result, _ = run_scenario(cfg, workers=4)
print(json.dumps(summarize(result), indent=2))

print("\nquantile   off (m)   on (m)")
for q in (0.25, 0.5, 0.75, 0.9, 0.95):
    off = np.quantile(result.pooled_errors("off"), q)
    on = np.quantile(result.pooled_errors("on"), q)
    print(f"{q:8.2f}   {off:7.3f}   {on:6.3f}")

print("\npoint  converged off   converged on")
for p_off, p_on in zip(result.points["off"], result.points["on"]):
    mark = "*" if p_on.converged_error < p_off.converged_error else " "
    print(f"{p_off.index:5d}  {p_off.converged_error:13.3f}   {p_on.converged_error:12.3f} {mark}")

try:
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt
except ImportError:
    sys.exit(0)

fig, ax = plt.subplots(figsize=(5, 3.5))
for mode, label in (("off", "EKF"), ("on", "EKF + NLOS mitigation")):
    x, y = zip(*empirical_cdf(result.pooled_errors(mode)))
    ax.step(x, y, where="post", label=label)
ax.set_xlabel("localization error [m]")
ax.set_ylabel("empirical CDF")
ax.legend()
fig.tight_layout()
fig.savefig("error_cdf.png", dpi=120)
print("\nwrote error_cdf.png")
