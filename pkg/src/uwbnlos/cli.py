"""Command line entry point: ``uwbnlos run | calibrate | cdf | campaign``."""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import replace
from pathlib import Path

from . import classification as clf
from .harness import (
    default_config,
    empirical_cdf,
    load_config,
    run_scenario,
    simulate_campaign,
    write_outputs,
)
from .geometry import load_site

MODE_CHOICES = {"on": ("on",), "off": ("off",), "both": ("off", "on")}


def _config(path):
    return default_config() if path is None else load_config(path)


def cmd_run(args) -> int:
    cfg = _config(args.config)
    overrides = {}
    if args.mode is not None:
        overrides["modes"] = MODE_CHOICES[args.mode]
    if args.seed is not None:
        overrides["seed"] = args.seed
    if overrides:
        cfg = replace(cfg, **overrides)
    result, records = run_scenario(cfg, trace=args.trace, workers=args.workers)
    summary = write_outputs(result, args.out, records)
    json.dump(summary, sys.stdout, indent=2, sort_keys=True)
    sys.stdout.write("\n")
    return 0


def cmd_calibrate(args) -> int:
    powers = clf.read_power_samples(args.powers)
    thresholds, rate = clf.calibrate_thresholds(powers)
    doc = {
        "thresholds": thresholds.to_dict(),
        "success_rate": rate,
        "samples": len(powers),
    }
    if args.ranging:
        site = load_site(args.site) if args.site else default_config().site
        ranging = clf.read_ranging_samples(args.ranging)
        stats = clf.estimate_bias_stats(ranging, site.anchors, toa_noise_std=args.toa_noise_std)
        doc["nlos_stats"] = stats.to_dict()
    text = json.dumps(doc, indent=2, sort_keys=True) + "\n"
    if args.out:
        Path(args.out).write_text(text)
    sys.stdout.write(text)
    return 0


def cmd_cdf(args) -> int:
    with open(args.errors) as f:
        errors = [float(line) for line in f if line.strip()]
    sys.stdout.write("error_m,cdf\n")
    for e, p in empirical_cdf(errors):
        sys.stdout.write(f"{e!r},{p!r}\n")
    return 0


def cmd_campaign(args) -> int:
    cfg = _config(args.config)
    powers, ranging = simulate_campaign(cfg, epochs=args.epochs, seed=args.seed)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    clf.write_power_samples(out / "powers.csv", powers)
    clf.write_ranging_samples(out / "ranging.csv", ranging)
    print(f"wrote {len(powers)} samples to {out}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="uwbnlos", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="static-tag experiment with and without mitigation")
    r.add_argument("--config", help="scenario YAML (default: packaged apartment scenario)")
    r.add_argument("--out", required=True, help="output directory")
    r.add_argument("--mode", choices=sorted(MODE_CHOICES), help="override the config's modes")
    r.add_argument("--seed", type=int, help="override the master seed")
    r.add_argument("--trace", action="store_true", help="write per-epoch trace.jsonl")
    r.add_argument("--workers", type=int, default=1, help="worker processes")
    r.set_defaults(func=cmd_run)

    c = sub.add_parser("calibrate", help="fit thresholds and bias statistics")
    c.add_argument("--powers", required=True, help="CSV rows: power_dbm,class")
    c.add_argument("--ranging", help="CSV rows: tag_x,tag_y,anchor_id,toa_ns,class")
    c.add_argument("--site", help="floorplan/anchor YAML for --ranging")
    c.add_argument("--toa-noise-std", type=float, default=0.2, help="assumed TOA noise std, ns")
    c.add_argument("--out", help="write the JSON result here as well")
    c.set_defaults(func=cmd_calibrate)

    d = sub.add_parser("cdf", help="empirical CDF of an error list (one value per line)")
    d.add_argument("--errors", required=True)
    d.set_defaults(func=cmd_cdf)

    s = sub.add_parser("campaign", help="simulate a labeled measurement campaign")
    s.add_argument("--config", help="scenario YAML (default: packaged apartment scenario)")
    s.add_argument("--out", required=True, help="output directory")
    s.add_argument("--epochs", type=int, default=20, help="readings per test point")
    s.add_argument("--seed", type=int)
    s.set_defaults(func=cmd_campaign)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (OSError, ValueError) as exc:
        print(f"uwbnlos: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
