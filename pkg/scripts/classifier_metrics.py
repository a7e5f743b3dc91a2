"""Generate the desk-scale dataset, train every classifier and print test metrics per rank.

    python3 scripts/classifier_metrics.py --out runs/metrics
"""

import argparse
import csv
from pathlib import Path

from mlconstructive.cli import main


def parse():
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--out", type=Path, default=Path("runs/metrics"))
    p.add_argument("--count", type=int, default=500)
    p.add_argument("--seed", type=int, default=1)
    return p.parse_args()


def run():
    args = parse()
    data, models = args.out / "data", args.out / "models"
    if main(["generate", "--count", str(args.count), "--seed", str(args.seed),
             "--out", str(data)]) != 0:
        raise SystemExit(1)
    if main(["train", "--data", str(data / "dataset.csv"), "--models-dir", str(models),
             "--seed", str(args.seed)]) != 0:
        raise SystemExit(1)
    with open(models / "metrics.csv") as fh:
        rows = [r for r in csv.DictReader(fh) if r["split"] == "test"]
    print("\ntest split")
    print(f"{'model':<10} {'rank':>4} {'acc':>6} {'bal':>6} {'prec':>6} {'tpr':>6} {'fpr':>6}")
    for r in rows:
        print(f"{r['model']:<10} {r['rank']:>4} " + " ".join(
            f"{float(r[c]):>6.3f}" for c in ("accuracy", "balanced_accuracy", "precision",
                                               "tpr", "fpr")))


if __name__ == "__main__":
    run()
