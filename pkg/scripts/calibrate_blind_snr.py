#!/usr/bin/env python3
"""Compare the blind (detrended) SNR estimate with the oracle SNR.

For a uniform fibre with white noise at several input SNRs and detrend
window lengths, prints the mean and spread of blind - oracle over seeds.
"""
import argparse

import numpy as np

from botda_deconv.analysis import snr_time_trace
from botda_deconv.core_model import FiberProfile, PulseScheme, SamplingGrid
from botda_deconv.simulator import NoiseSpec, add_noise, simulate_trace


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--snr", type=float, nargs="+", default=[15.0, 23.0, 30.0])
    ap.add_argument("--windows", type=int, nargs="+", default=[10, 20, 60, 120])
    ap.add_argument("--seeds", type=int, default=20)
    ap.add_argument("--length-m", type=float, default=200.0)
    args = ap.parse_args()

    grid = SamplingGrid.covering(args.length_m, 1e9, 60e-9)
    clean = simulate_trace(FiberProfile(args.length_m, 10.8e9), PulseScheme.single(60e-9), 10.8e9, grid)
    i0 = grid.lead_in_samples + 100
    section = (i0, i0 + int(args.length_m / grid.dz_m) - 200)
    print(f"{'snr_db':>7} {'window':>7} {'mean(blind-oracle)':>19} {'std':>7}")
    for snr in args.snr:
        for L in args.windows:
            d = []
            for s in range(args.seeds):
                noisy = add_noise(clean, NoiseSpec(snr, seed=s))
                d.append(snr_time_trace(noisy, section, kernel_length=L)
                         - snr_time_trace(noisy, section, reference=clean))
            print(f"{snr:7.1f} {L:7d} {np.mean(d):19.3f} {np.std(d):7.3f}")


if __name__ == "__main__":
    main()
