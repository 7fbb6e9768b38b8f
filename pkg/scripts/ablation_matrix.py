"""Toymol conditional ablation table: one row per (seed, ablation), written as CSV.

    python scripts/ablation_matrix.py --seeds 1 2 3 --out runs/ablations.csv
"""

import argparse
import time
from dataclasses import replace
from pathlib import Path

from targetaug.config import ExperimentConfig
from targetaug.experiment import load_data, run_eval, run_train, write_rows

CONFIGS = Path(__file__).resolve().parent.parent / "configs"


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--seeds", type=int, nargs="+", default=[1, 2, 3])
    ap.add_argument("--workers", type=int, default=1)
    ap.add_argument("--out", default="runs/ablations.csv")
    args = ap.parse_args()

    rows = []
    for seed in args.seeds:
        cfg = replace(ExperimentConfig.load(CONFIGS / "toymol_qed.json"), seed=seed)
        data = load_data(cfg)
        base = run_train(replace(cfg, ablation="baseline"), data, args.workers)
        full = run_train(cfg, data, args.workers)
        nofilt_cfg = replace(cfg, ablation="no_filter")
        nofilt = run_train(nofilt_cfg, data, args.workers)
        runs = [("baseline", base), ("test_only", base), ("train_only", full), ("full", full), ("no_filter", nofilt)]
        for ab, res in runs:
            m = run_eval(replace(cfg, ablation=ab), res.model, data, args.workers)
            rows.append({"seed": seed, "ablation": ab, **m})
            print(rows[-1], flush=True)
        for name in ("toymol_qed_semi", "toymol_qed_transductive"):
            c = replace(ExperimentConfig.load(CONFIGS / f"{name}.json"), seed=seed)
            d = load_data(c)
            t0 = time.perf_counter()
            m = run_eval(c, run_train(c, d, args.workers).model, d, args.workers)
            rows.append({"seed": seed, "ablation": name.removeprefix("toymol_qed_"), **m})
            print(rows[-1], f"{time.perf_counter() - t0:.0f}s", flush=True)
    write_rows(Path(args.out), rows)


if __name__ == "__main__":
    main()
