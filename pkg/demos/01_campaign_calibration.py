"""
Calibrating the classifier from a simulated measurement campaign
================================================================

A tag visits every test point of the synthetic apartment. Each anchor link
gets its ground-truth class from the floorplan (count of walls crossed).
From the labeled readings we fit the two power thresholds and the
per-class TOA bias statistics.
"""

import numpy as np

from uwbnlos.classification import (
    Thresholds,
    calibrate_thresholds,
    estimate_bias_stats,
    success_rate,
)
from uwbnlos.geometry import PropagationClass, geometric_toa
from uwbnlos.harness import class_counts, default_config, simulate_campaign

cfg = default_config()
print("links per class:", class_counts(cfg))

powers, ranging = simulate_campaign(cfg, epochs=40, seed=1)
print(f"{len(powers)} labeled readings")

###############################################################################
# Threshold search over a 0.1 dB grid

thresholds, rate = calibrate_thresholds(powers)
print(f"fitted thresholds: LOS > {thresholds.los_floor} dBm, NLOS > {thresholds.nlos_floor} dBm")
print(f"training success rate: {rate:.1%}")

###############################################################################
# How do the stock thresholds (-78.5 / -85 dBm) fare on fresh data?

held_out, _ = simulate_campaign(cfg, epochs=40, seed=2)
print(f"held-out success, fitted:  {success_rate(held_out, thresholds):.1%}")
print(f"held-out success, default: {success_rate(held_out, Thresholds()):.1%}")

###############################################################################
# Bias statistics: measured TOA minus geometric TOA, per class

stats = estimate_bias_stats(ranging, cfg.site.anchors)
print(f"NLOS  bias mean {stats.nlos_mean:5.2f} ns, std {stats.nlos_std:5.2f} ns")
print(f"SNLOS bias mean {stats.snlos_mean:5.2f} ns, std {stats.snlos_std:5.2f} ns")

# Some realized biases are negative, as in real campaigns.
bias = np.array(
    [
        r.toa_measured - geometric_toa(r.tag_position, cfg.site.anchors[r.anchor_id])
        for r in ranging
        if r.true_class is PropagationClass.NLOS
    ]
)
print(f"negative NLOS biases: {np.mean(bias < 0):.0%}")
