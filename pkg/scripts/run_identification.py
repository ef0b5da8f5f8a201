#!/usr/bin/env python3
"""Nine-way identification on the default simulated park.

Simulates every device answering the same square-wave session, runs the full
segmentation/feature pipeline, then reports stratified k-fold confusion for
the pairwise-SVM classifier and the per-pair verification EERs split into
same-model and cross-model groups.
"""

import argparse
import os

from magprint.evaluation import (
    accuracy,
    all_pair_eers,
    cross_validate,
    simulate_park_matrix,
    write_confusion_csv,
)
from magprint.learn import DEFAULT_HYPER, SvmHyperParams
from magprint.simulator import default_park
from magprint.stimulus import waveform_preset


def main() -> int:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--waveform", default="B", choices=["A", "B", "C"])
    ap.add_argument("--reps", type=int, default=260, help="bursts per device")
    ap.add_argument("--folds", type=int, default=10)
    ap.add_argument("--seed", type=int, default=42)
    ap.add_argument("--gamma", type=float, default=DEFAULT_HYPER.gamma)
    ap.add_argument("--c", type=float, default=DEFAULT_HYPER.c)
    ap.add_argument("--out-dir", default=None, help="write confusion/EER CSVs here")
    args = ap.parse_args()

    devices = default_park(rng_seed=args.seed)
    spec = waveform_preset(args.waveform, burst_repetitions=args.reps)
    print(f"simulating {len(devices)} devices, waveform {spec.id}, "
          f"{args.reps} bursts each ...")
    run = simulate_park_matrix(devices, spec, base_seed=args.seed)
    matrix = run.matrix
    print(f"feature matrix: {matrix.n_rows} x {matrix.values.shape[1]} "
          f"(segment length {run.common_length})")

    hyper = SvmHyperParams(gamma=args.gamma, c=args.c)
    counts = cross_validate(matrix, folds=args.folds, hyper=hyper)
    print(f"\n{args.folds}-fold identification accuracy: {accuracy(counts):.4f}")
    width = max(len(c) for c in counts.classes)
    header = " ".join(f"{c[-4:]:>5}" for c in counts.classes)
    print(f"{'':>{width}}  {header}")
    for i, cls in enumerate(counts.classes):
        row = " ".join(f"{int(v):>5}" for v in counts.matrix[i])
        print(f"{cls:>{width}}  {row}")

    model_of = {d.device_id: d.model_id for d in devices}
    eers = all_pair_eers(matrix, folds=args.folds, hyper=hyper)
    print("\npairwise verification EER")
    for label, keep in (("same model", True), ("different model", False)):
        group = {p: v for p, v in eers.items()
                 if (model_of[p[0]] == model_of[p[1]]) is keep}
        print(f"  {label}:")
        for (a, b), v in sorted(group.items(), key=lambda kv: kv[1]):
            print(f"    {a:>{width}} vs {b:<{width}}  {v:.4f}")

    if args.out_dir:
        os.makedirs(args.out_dir, exist_ok=True)
        write_confusion_csv(counts, os.path.join(args.out_dir, "confusion.csv"))
        with open(os.path.join(args.out_dir, "pair_eers.csv"), "w", encoding="utf-8") as fh:
            fh.write("device_a,device_b,same_model,eer\n")
            for (a, b), v in sorted(eers.items()):
                same = int(model_of[a] == model_of[b])
                fh.write(f"{a},{b},{same},{v:.17g}\n")
        print(f"\nwrote confusion.csv and pair_eers.csv to {args.out_dir}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
