#!/usr/bin/env python3
"""Verification EER of one device pair as white noise floods the responses.

Noise is injected into the raw cut segments before RMS normalization, at a
fixed SNR relative to each segment's own power, and every SNR level is
repeated with fresh noise so the table carries standard errors.
"""

import argparse

from magprint.evaluation import noise_sweep, simulate_park_matrix, verify_pair
from magprint.learn import DEFAULT_HYPER, SvmHyperParams
from magprint.simulator import default_park
from magprint.stimulus import waveform_preset


def main() -> int:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--device-a", default="phone_a_1")
    ap.add_argument("--device-b", default="phone_b_1")
    ap.add_argument("--snrs", default="30,20,10,0", help="comma separated dB values")
    ap.add_argument("--reps", type=int, default=50, help="noise draws per SNR")
    ap.add_argument("--bursts", type=int, default=260)
    ap.add_argument("--folds", type=int, default=10)
    ap.add_argument("--seed", type=int, default=42)
    ap.add_argument("--gamma", type=float, default=DEFAULT_HYPER.gamma)
    ap.add_argument("--c", type=float, default=DEFAULT_HYPER.c)
    args = ap.parse_args()

    snrs = [float(v) for v in args.snrs.split(",") if v.strip()]
    devices = default_park(rng_seed=args.seed)
    spec = waveform_preset("B", burst_repetitions=args.bursts)
    print(f"simulating the park ({args.bursts} bursts per device) ...")
    run = simulate_park_matrix(devices, spec, base_seed=args.seed)

    hyper = SvmHyperParams(gamma=args.gamma, c=args.c)
    clean = verify_pair(run.matrix, args.device_a, args.device_b,
                        folds=args.folds, hyper=hyper)
    print(f"clean EER {args.device_a} vs {args.device_b}: {clean.eer:.4f}")

    print(f"sweeping {len(snrs)} SNR levels x {args.reps} repetitions ...")
    result = noise_sweep(run.segments, args.device_a, args.device_b, snrs,
                         repetitions=args.reps, folds=args.folds, hyper=hyper)
    print(f"\n{'SNR dB':>8} {'mean EER':>10} {'stderr':>8} {'n':>4}")
    for snr, mean, se in zip(result.snr_dbs, result.mean_eers, result.stderrs):
        print(f"{snr:>8g} {mean:>10.4f} {se:>8.4f} {len(result.eers[snr]):>4}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
