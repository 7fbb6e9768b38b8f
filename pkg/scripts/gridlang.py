"""Gridlang top-1 generalization, baseline vs augmented, per seed.

    python scripts/gridlang.py --seeds 1 --out runs/gridlang.csv
"""

import argparse
from dataclasses import replace
from pathlib import Path

from targetaug.config import ExperimentConfig
from targetaug.experiment import load_data, run_eval, run_train, write_rows

CONFIGS = Path(__file__).resolve().parent.parent / "configs"


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--seeds", type=int, nargs="+", default=[1])
    ap.add_argument("--workers", type=int, default=1)
    ap.add_argument("--out", default="runs/gridlang.csv")
    args = ap.parse_args()

    rows = []
    for seed in args.seeds:
        cfg = replace(ExperimentConfig.load(CONFIGS / "gridlang.json"), seed=seed)
        data = load_data(cfg)
        for ab in ("baseline", "full"):
            c = replace(cfg, ablation=ab)
            res = run_train(c, data, args.workers)
            pass_rates = ";".join(f"{s.pass_rate:.4f}" for s in res.stats)
            rows.append({"seed": seed, "ablation": ab, **run_eval(c, res.model, data, args.workers),
                         "pass_rates": pass_rates})
            print(rows[-1], flush=True)
    write_rows(Path(args.out), rows)


if __name__ == "__main__":
    main()
