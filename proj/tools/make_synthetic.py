#!/usr/bin/env python3
# SPDX-License-Identifier: Apache-2.0
"""Regenerate data/synthetic_train.csv: synthetic training runs whose GPU-hours
follow the logarithmic throughput curve with log10(alpha) drawn inside each
family's reference range. Run from the repository root."""
import csv
import pathlib
import random

import mpmath as mp

mp.mp.dps = 50

FAMILIES = {
    "NVIDIA A100 80GB": (20, 50, 400),
    "NVIDIA H100 80GB": (100, 110, 700),
    "Tesla V100 32GB": (-2, 10, 300),
    "TPU v3": (3, 13, 450),
}


def solve_seconds(tflop, log10_alpha):
    a = mp.power(10, log10_alpha)
    f = lambda t: ((1 + a * t) * mp.log1p(a * t) - a * t) / a - tflop
    lo, hi = mp.mpf(0), mp.mpf(1)
    while f(hi) < 0:
        hi *= 2
    for _ in range(300):
        mid = (lo + hi) / 2
        lo, hi = (mid, hi) if f(mid) < 0 else (lo, mid)
    return (lo + hi) / 2


def main():
    rng = random.Random(20240601)
    out = pathlib.Path("data/synthetic_train.csv")
    with out.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["model", "params", "data_size", "total_flops", "device", "device_count",
                    "gpu_hours", "wall_hours", "region", "intensity_g_per_kwh", "actual_tco2",
                    "metric_name", "metric_value"])
        names = sorted(FAMILIES)
        for i in range(24):
            device = names[i % len(names)]
            lo, hi, tdp = FAMILIES[device]
            params = 10 ** rng.uniform(8, 11.5)
            tokens = 10 ** rng.uniform(10, 13)
            count = 2 ** rng.randint(3, 11)
            log10_alpha = rng.uniform(lo, hi)
            flops = 6 * params * tokens
            gpuh = solve_seconds(mp.mpf(flops) / mp.mpf("1e12"), log10_alpha) / 3600
            intensity = rng.choice([57, 155, 369, 424, 581])
            tco2 = tdp / 1000 * gpuh * intensity / 1e6
            w.writerow([f"synth-{i:02d}", f"{params:.6g}", f"{tokens:.6g}", "", device, count,
                        mp.nstr(gpuh, 12), "", "", intensity, mp.nstr(tco2, 10), "", ""])


if __name__ == "__main__":
    main()
