"""Gap table over the bundled EUC_2D TSPLIB subset for every policy, with and without 2-opt.

Needs trained models (see classifier_metrics.py):

    python3 scripts/tsplib_gaps.py --models-dir runs/metrics/models --out runs/gaps
"""

import argparse
from pathlib import Path

from mlconstructive.cli import POLICY_MODELS, read_thresholds
from mlconstructive.constructive import Policy
from mlconstructive.evaluation import (OPT_FROM_TOUR, BenchmarkConfig, PolicySpec,
                                       run_benchmark, tsplib_subset)
from mlconstructive.instance import load_bundled_tour, read_optima_table
from mlconstructive.models import load_model


def parse():
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--models-dir", type=Path, default=Path("runs/metrics/models"))
    p.add_argument("--out", type=Path, default=Path("runs/gaps"))
    p.add_argument("--cl", choices=("knn", "delaunay"), default="knn")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--workers", type=int, default=1)
    return p.parse_args()


def model_policy(models_dir, key, label):
    name = POLICY_MODELS[key]
    m1, m2 = (load_model(models_dir / f"{name}-rank{r}.model") for r in (1, 2))
    if key == "b":
        return Policy.baseline((m1.rate, m2.rate), label=label)
    thr = read_thresholds(models_dir)
    return Policy.model(m1, m2, (thr.get((name, 1), 0.5), thr.get((name, 2), 0.5)), label=label)


def run():
    args = parse()
    insts = tsplib_subset()
    tours = {i.name: t for i in insts if (t := load_bundled_tour(i.name)) is not None}
    bases = [("B", model_policy(args.models_dir, "b", "B")), ("NN", Policy.nearest())]
    for key in ("logistic", "svm", "ensemble"):
        bases.append((key.upper(), model_policy(args.models_dir, key, key.upper())))
    bases.append(("OPT", OPT_FROM_TOUR))
    specs = [PolicySpec(label + suffix, policy, ls)
             for label, policy in bases for suffix, ls in (("", False), ("+LS", True))]
    cfg = BenchmarkConfig(cl_kind=args.cl, seed=args.seed, workers=args.workers)
    rep = run_benchmark(insts, specs, cfg, read_optima_table(), tours)
    args.out.mkdir(parents=True, exist_ok=True)
    rep.write_csv(args.out / "gaps.csv")
    rep.write_markdown(args.out / "gaps.md")
    rep.write_manifest(args.out / "manifest.json", models_dir=str(args.models_dir))
    print(rep.to_markdown(), end="")


if __name__ == "__main__":
    run()
