"""
Tracking a static tag with the TDOA EKF
=======================================

The filter starts at rest in the middle of the apartment. Both variants
see exactly the same readings.
"""

import numpy as np

from uwbnlos import ekf
from uwbnlos.channel import NlosStats, PowerModel, simulate_epoch
from uwbnlos.geometry import Point2
from uwbnlos.harness import default_config
from uwbnlos.mitigation import mitigate_epoch

cfg = default_config()
site = cfg.site
model = cfg.ekf_model()
stats = NlosStats()
tag = Point2(0.8, 4.3)
truth = np.array([tag.x, tag.y])

rng = np.random.default_rng(3)
states = {"off": ekf.init_state(site.floorplan), "on": ekf.init_state(site.floorplan)}
errors = {k: [] for k in states}
for k in range(300):
    meas, classes = simulate_epoch(tag, site.anchors, site.floorplan, stats, PowerModel(), rng)
    for mode in states:
        z = mitigate_epoch(meas, stats, cfg.thresholds, enabled=mode == "on")
        states[mode] = ekf.step(states[mode], z, model)
        errors[mode].append(np.linalg.norm(states[mode].position - truth))

print("link classes:", {a: c.name for a, c in classes.items()})
print("epoch   error off   error on")
for k in (0, 4, 9, 49, 99, 199, 299):
    print(f"{k + 1:5d}   {errors['off'][k]:9.3f}   {errors['on'][k]:8.3f}")

for mode, s in states.items():
    sd = np.sqrt(np.diag(s.P)[:2])
    print(f"{mode:>3s}: final estimate {s.position.round(3)}, 1-sigma {sd.round(3)} m")
