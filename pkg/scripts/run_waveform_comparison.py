#!/usr/bin/env python3
"""Compare stimulation waveforms at a matched pulse budget.

Waveform C packs two pulses into each burst, so it runs half as many bursts
as the single-pulse waveforms for the same total pulse count. Reports mean
verification EER per waveform, split into same-model and cross-model pairs.
"""

import argparse

from magprint.evaluation import waveform_comparison
from magprint.learn import DEFAULT_HYPER, SvmHyperParams
from magprint.simulator import default_park
from magprint.stimulus import waveform_preset


def main() -> int:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--budget", type=int, default=260, help="total pulses per device")
    ap.add_argument("--waveforms", default="A,B,C")
    ap.add_argument("--folds", type=int, default=10)
    ap.add_argument("--seed", type=int, default=42)
    ap.add_argument("--gamma", type=float, default=DEFAULT_HYPER.gamma)
    ap.add_argument("--c", type=float, default=DEFAULT_HYPER.c)
    args = ap.parse_args()

    devices = default_park(rng_seed=args.seed)
    specs = []
    for wid in (w.strip().upper() for w in args.waveforms.split(",")):
        pulses = waveform_preset(wid).pulse_count_per_burst
        reps = max(1, args.budget // pulses)
        specs.append(waveform_preset(wid, burst_repetitions=reps))
        print(f"waveform {wid}: {reps} bursts x {pulses} pulse(s)")

    hyper = SvmHyperParams(gamma=args.gamma, c=args.c)
    result = waveform_comparison(devices, specs, folds=args.folds,
                                 hyper=hyper, base_seed=args.seed)
    model_of = {d.device_id: d.model_id for d in devices}
    print(f"\n{'waveform':>9} {'intra-model':>12} {'inter-model':>12}")
    for wid in result.waveform_ids:
        print(f"{wid:>9} {result.intra_eer[wid]:>12.4f} {result.inter_eer[wid]:>12.4f}")

    print("\nhardest pairs per waveform:")
    for wid in result.waveform_ids:
        worst = sorted(result.pair_eers[wid].items(), key=lambda kv: -kv[1])[:3]
        for (a, b), v in worst:
            tag = "same " if model_of[a] == model_of[b] else "cross"
            print(f"  {wid}  {tag}  {a} vs {b}  {v:.4f}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
