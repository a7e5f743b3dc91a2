"""Command-line entry point: generate, train, solve, benchmark.

Every option can also come from a ``key = value`` file given with
``--config``; flags on the command line win over the file, the file wins
over built-in defaults. Each command writes ``manifest.json`` next to its
outputs with the fully resolved configuration.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
import time
from pathlib import Path

from . import __version__
from .constructive import Policy, SolveConfig, solve
from .dataset import Dataset, generate_dataset, under_sample, write_manifest
from .evaluation import OPT_FROM_TOUR, BenchmarkConfig, PolicySpec, run_benchmark
from .instance import (bundled_names, format_tour, load_bundled,
                       load_bundled_tour, parse_tour, read_optima_table, read_tsplib, tour_edges)
from .models import (DEFAULT_MAX_FPR, METRIC_COLUMNS, Baseline, evaluate_metrics, load_model,
                     make_ensemble, save_model, select_threshold, train_gb_stumps,
                     train_linear_svm, train_logistic)
from .oracle import HELD_KARP_LIMIT, held_karp

log = logging.getLogger("mlconstructive")

MODEL_NAMES = ("baseline", "linear", "linear-us", "svm", "stumps", "ensemble")
#: which trained model file a --policy choice uses
POLICY_MODELS = {"b": "baseline", "logistic": "linear-us", "svm": "svm", "ensemble": "ensemble"}
POLICY_CHOICES = ("b", "nn", "logistic", "svm", "ensemble", "opt")
THRESHOLDS_FILE = "thresholds.txt"


class CLIError(Exception):
    pass


# -- argument parsing -----------------------------------------------------

def _positive_int(s: str) -> int:
    v = int(s)
    if v < 1:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {s}")
    return v


def _probability(s: str) -> float:
    v = float(s)
    if not 0.0 <= v <= 1.01:
        raise argparse.ArgumentTypeError(f"threshold must lie in [0, 1.01], got {s}")
    return v


def _k(s: str) -> int:
    v = int(s)
    if v < 2:
        raise argparse.ArgumentTypeError(f"k must be at least 2, got {s}")
    return v


def _common(p: argparse.ArgumentParser, out_default: str | None = "out") -> None:
    p.add_argument("--config", type=Path, help="key = value file with defaults for any option")
    p.add_argument("--k", type=_k, default=5, help="candidate list size")
    p.add_argument("--cl", choices=("knn", "delaunay"), default="knn")
    p.add_argument("--seed", type=int, default=0)
    if out_default is not None:
        p.add_argument("--out", type=Path, default=Path(out_default), help="output directory")
    p.add_argument("-v", "--verbose", action="store_true")


def _policy_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--models-dir", type=Path, default=Path("models"))
    p.add_argument("--threshold1", type=_probability, default=None,
                   help="rank-1 acceptance threshold (default: the one stored with the models)")
    p.add_argument("--threshold2", type=_probability, default=None)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="mlconstructive",
                                     description="ML-gated constructive TSP heuristic")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    g = sub.add_parser("generate", help="generate a labelled training set")
    _common(g, "data")
    g.add_argument("--count", type=_positive_int, default=500, help="number of instances")
    g.add_argument("--n-min", type=_positive_int, default=100)
    g.add_argument("--n-max", type=_positive_int, default=300)
    g.add_argument("--oracle", choices=("pseudo", "exact"), default="pseudo")

    t = sub.add_parser("train", help="train the classifiers on a generated dataset")
    _common(t, None)
    t.add_argument("--data", type=Path, default=Path("data/dataset.csv"))
    t.add_argument("--models-dir", type=Path, default=Path("models"))
    t.add_argument("--us-ratio", type=float, default=1.0, help="majority/minority after under-sampling")
    t.add_argument("--max-fpr", type=float, default=DEFAULT_MAX_FPR,
                   help="validation FPR bound used to pick each model's threshold")
    t.add_argument("--rounds", type=_positive_int, default=200, help="boosting rounds")

    s = sub.add_parser("solve", help="solve one instance")
    _common(s, "out")
    s.add_argument("--instance", required=True,
                   help="TSPLIB file, or the name of a bundled instance")
    s.add_argument("--policy", choices=POLICY_CHOICES, default="nn")
    s.add_argument("--phase3", choices=("on", "off"), default="on")
    s.add_argument("--opt-tour", type=Path, help="optimal tour for --policy opt")
    _policy_args(s)

    b = sub.add_parser("benchmark", help="gap report over a set of instances")
    _common(b, "results")
    b.add_argument("--instances-dir", type=Path,
                   help="directory of .tsp files (default: the bundled instances)")
    b.add_argument("--instance", action="append", default=None,
                   help="restrict to these instance names (repeatable)")
    b.add_argument("--optima-table", type=Path, help="CSV of name,optimum (default: bundled)")
    b.add_argument("--policy", default="nn,nn+ls",
                   help="comma-separated policies; a '+ls' suffix turns phase 3 on")
    b.add_argument("--phase3", choices=("on", "off"), default="off",
                   help="phase 3 for policies given without a suffix")
    b.add_argument("--workers", type=_positive_int, default=1)
    _policy_args(b)
    return parser


def read_config_file(path: Path) -> dict[str, str]:
    out = {}
    for num, raw in enumerate(path.read_text().splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        if not sep:
            raise CLIError(f"{path}:{num}: expected 'key = value'")
        out[key.strip().lstrip("-").replace("-", "_")] = value.strip()
    return out


def parse_args(argv=None) -> argparse.Namespace:
    parser = build_parser()
    argv = list(sys.argv[1:] if argv is None else argv)
    pre = argparse.ArgumentParser(add_help=False)
    pre.add_argument("--config", type=Path)
    known, _ = pre.parse_known_args(argv)
    command = next((a for a in argv if a in COMMANDS), None)
    if known.config is None or command is None:
        return parser.parse_args(argv)
    if not known.config.is_file():
        raise CLIError(f"config file not found: {known.config}")
    sub = parser._subparsers._group_actions[0].choices[command]  # noqa: SLF001
    actions = {a.dest: a for a in sub._actions}  # noqa: SLF001
    defaults = {}
    for key, value in read_config_file(known.config).items():
        if key not in actions or key in ("config", "help"):
            raise CLIError(f"{known.config}: unknown option {key!r} for {command}")
        act = actions[key]
        if isinstance(act, argparse._StoreTrueAction):  # noqa: SLF001
            defaults[key] = value.lower() in ("1", "true", "yes", "on")
            continue
        try:
            conv = act.type(value) if act.type else value
        except (ValueError, argparse.ArgumentTypeError) as exc:
            raise CLIError(f"{known.config}: bad value for {key}: {exc}") from exc
        if act.choices is not None and conv not in act.choices:
            raise CLIError(f"{known.config}: {key} must be one of {list(act.choices)}")
        defaults[key] = [conv] if isinstance(act, argparse._AppendAction) else conv  # noqa: SLF001
        act.required = False
    sub.set_defaults(**defaults)
    return parser.parse_args(argv)


def resolved(args: argparse.Namespace) -> dict:
    return {k: (str(v) if isinstance(v, Path) else v) for k, v in sorted(vars(args).items())}


def _manifest(path: Path, args, **extra) -> None:
    body = {"command": args.command, "version": __version__, "config": resolved(args), **extra}
    path.write_text(json.dumps(body, indent=2, sort_keys=True, default=str) + "\n")


# -- models ---------------------------------------------------------------

def _model_path(models_dir: Path, name: str, rank: int) -> Path:
    return models_dir / f"{name}-rank{rank}.model"


def read_thresholds(models_dir: Path) -> dict[tuple[str, int], float]:
    path = models_dir / THRESHOLDS_FILE
    out = {}
    if path.is_file():
        for line in path.read_text().splitlines():
            if line.strip() and not line.startswith("#"):
                name, rank, value = line.split()
                out[name, int(rank)] = float(value)
    return out


def load_policy(args, inst, opt_tour=None) -> Policy:
    if args.policy == "nn":
        return Policy.nearest()
    if args.policy == "opt":
        if opt_tour is None:
            raise CLIError(f"no optimal tour available for {inst.name}")
        return Policy.opt(tour_edges(list(opt_tour)))
    name = POLICY_MODELS[args.policy]
    paths = [_model_path(args.models_dir, name, r) for r in (1, 2)]
    for p in paths:
        if not p.is_file():
            raise CLIError(f"model file not found: {p} (run 'train' first)")
    m1, m2 = (load_model(p) for p in paths)
    if args.policy == "b":
        return Policy.baseline((m1.rate, m2.rate))
    stored = read_thresholds(args.models_dir)
    t1 = args.threshold1 if args.threshold1 is not None else stored.get((name, 1), 0.5)
    t2 = args.threshold2 if args.threshold2 is not None else stored.get((name, 2), 0.5)
    return Policy.model(m1, m2, (t1, t2), label=args.policy)


# -- commands -------------------------------------------------------------

def cmd_generate(args) -> int:
    if args.n_min < 3 or args.n_max < args.n_min:
        raise CLIError(f"bad size range [{args.n_min}, {args.n_max}]")
    args.out.mkdir(parents=True, exist_ok=True)
    t0 = time.perf_counter()
    data = generate_dataset(args.count, (args.n_min, args.n_max), args.k, args.seed,
                            args.oracle, args.cl)
    data.save_csv(args.out / "dataset.csv")
    write_manifest(data, args.out / "manifest.json", command="generate", config=resolved(args),
                   seconds=time.perf_counter() - t0)
    print(f"{len(data)} examples from {args.count} instances -> {args.out / 'dataset.csv'}")
    for r in (1, 2):
        print(f"rank-{r} positive rate (train): {data.where('train', r).positive_rate():.3f}")
    return 0


def train_zoo(data: Dataset, rank: int, seed: int = 0, us_ratio: float = 1.0,
              max_fpr: float = DEFAULT_MAX_FPR, rounds: int = 200):
    """All classifiers for one rank, each with a validation-chosen threshold."""
    train = data.where("train", rank)
    val = data.where("validation", rank)
    us = under_sample(train, us_ratio, seed)
    models = {
        "baseline": Baseline(rank, train.X.shape[1], train.positive_rate()),
        "linear": train_logistic(train.X, train.y, rank=rank, seed=seed),
        "linear-us": train_logistic(us.X, us.y, rank=rank, seed=seed),
        "svm": train_linear_svm(us.X, us.y, rank=rank, seed=seed),
        "stumps": train_gb_stumps(us.X, us.y, rank=rank, rounds=rounds, seed=seed),
    }
    models["ensemble"] = make_ensemble([models["linear-us"], models["svm"], models["stumps"]])
    thresholds = {name: (0.5 if name == "baseline" else
                         select_threshold(m, val.X, val.y, max_fpr) if len(val) else 0.5)
                  for name, m in models.items()}
    return models, thresholds


def cmd_train(args) -> int:
    if not args.data.is_file():
        raise CLIError(f"dataset not found: {args.data}")
    data = Dataset.load_csv(args.data)
    args.models_dir.mkdir(parents=True, exist_ok=True)
    rows = []
    thr_lines = ["# model rank threshold (chosen on the validation split)"]
    header = f"{'model':<10} {'rank':>4} {'split':<10} {'thr':>5} " + " ".join(
        f"{c[:9]:>9}" for c in METRIC_COLUMNS)
    print(header)
    for rank in (1, 2):
        models, thresholds = train_zoo(data, rank, args.seed, args.us_ratio, args.max_fpr,
                                       args.rounds)
        for name in MODEL_NAMES:
            m, thr = models[name], thresholds[name]
            save_model(m, _model_path(args.models_dir, name, rank))
            thr_lines.append(f"{name} {rank} {thr!r}")
            for split in ("train", "validation", "test"):
                part = data.where(split, rank)
                if len(part) == 0:
                    continue
                met = evaluate_metrics(m, part.X, part.y, thr)
                rows.append({"model": name, "rank": rank, "split": split, "threshold": thr,
                             **dict(zip(METRIC_COLUMNS, met.row()))})
                print(f"{name:<10} {rank:>4} {split:<10} {thr:>5.3f} "
                      + " ".join(f"{v:>9.3f}" for v in met.row()))
    (args.models_dir / THRESHOLDS_FILE).write_text("\n".join(thr_lines) + "\n")
    with open(args.models_dir / "metrics.csv", "w") as fh:
        cols = ["model", "rank", "split", "threshold", *METRIC_COLUMNS]
        fh.write(",".join(cols) + "\n")
        for r in rows:
            fh.write(",".join(str(r[c]) if isinstance(r[c], (str, int)) else f"{r[c]:.6f}"
                              for c in cols) + "\n")
    _manifest(args.models_dir / "manifest.json", args, dataset=dict(data.meta),
              models=[n for n in MODEL_NAMES])
    return 0


def _load_instance(spec: str):
    p = Path(spec)
    if p.is_file():
        return read_tsplib(p), None
    if spec in bundled_names():
        return load_bundled(spec), load_bundled_tour(spec)
    raise CLIError(f"instance not found: {spec}")


def cmd_solve(args) -> int:
    inst, tour = _load_instance(args.instance)
    if args.opt_tour is not None:
        if not args.opt_tour.is_file():
            raise CLIError(f"tour file not found: {args.opt_tour}")
        tour = parse_tour(args.opt_tour.read_bytes())
    if args.policy == "opt" and tour is None and inst.n <= HELD_KARP_LIMIT:
        tour = held_karp(inst).tour
    policy = load_policy(args, inst, tour)
    res = solve(inst, SolveConfig(policy=policy, cl_kind=args.cl, k=args.k,
                                  enable_phase3=args.phase3 == "on", seed=args.seed))
    args.out.mkdir(parents=True, exist_ok=True)
    tour_path = args.out / f"{inst.name}.tour"
    tour_path.write_text(format_tour(inst.name, res.tour.tolist(),
                                     f"length {res.length} policy {policy.name}"))
    summary = {"instance": inst.name, "n": inst.n, "length": res.length,
               "phase2_length": res.phase2_length, "fixed_edges": res.fixed_count,
               "promising": res.promising_size, "timings": res.timings,
               "tour": str(tour_path)}
    _manifest(args.out / "manifest.json", args, result=summary)
    print(f"{inst.name}: n={inst.n} length={res.length} (after phase 2: {res.phase2_length}) "
          f"fixed={res.fixed_count} time={sum(res.timings.values()):.3f}s -> {tour_path}")
    return 0


def _benchmark_instances(args):
    if args.instances_dir is not None:
        if not args.instances_dir.is_dir():
            raise CLIError(f"not a directory: {args.instances_dir}")
        files = sorted(args.instances_dir.glob("*.tsp"))
        insts = [read_tsplib(p) for p in files]
        tours = {}
        for p in files:
            tp = p.with_suffix(".opt.tour")
            if tp.is_file():
                tours[p.stem] = parse_tour(tp.read_bytes())
    else:
        insts = [load_bundled(nm) for nm in bundled_names()]
        tours = {nm: t for nm in bundled_names() if (t := load_bundled_tour(nm)) is not None}
    if args.instance:
        want = set(args.instance)
        missing = want - {i.name for i in insts}
        if missing:
            raise CLIError(f"unknown instances: {sorted(missing)}")
        insts = [i for i in insts if i.name in want]
    return insts, tours


def cmd_benchmark(args) -> int:
    insts, tours = _benchmark_instances(args)
    if args.optima_table is not None and not args.optima_table.is_file():
        raise CLIError(f"optima table not found: {args.optima_table}")
    optima = read_optima_table(args.optima_table)
    specs = []
    for item in (s.strip() for s in args.policy.split(",") if s.strip()):
        base, ls = (item[:-3], True) if item.endswith("+ls") else (item, args.phase3 == "on")
        if base not in POLICY_CHOICES:
            raise CLIError(f"unknown policy {base!r}; choose from {', '.join(POLICY_CHOICES)}")
        label = base.upper() + ("+LS" if ls else "")
        if base == "opt":
            policy = OPT_FROM_TOUR
        else:
            ns = argparse.Namespace(**{**vars(args), "policy": base})
            policy = load_policy(ns, None)
        specs.append(PolicySpec(label, policy, ls))
    cfg = BenchmarkConfig(cl_kind=args.cl, k=args.k, seed=args.seed, workers=args.workers)
    report = run_benchmark(insts, specs, cfg, optima, tours)
    args.out.mkdir(parents=True, exist_ok=True)
    report.write_csv(args.out / "gaps.csv")
    report.write_markdown(args.out / "gaps.md")
    _manifest(args.out / "manifest.json", args, benchmark=report.config,
              summary=[vars(s) for s in report.summary()], instances=report.instances)
    print(report.to_markdown(), end="")
    return 0


COMMANDS = {"generate": cmd_generate, "train": cmd_train, "solve": cmd_solve,
            "benchmark": cmd_benchmark}


def main(argv=None) -> int:
    try:
        args = parse_args(argv)
    except CLIError as exc:
        print(f"mlconstructive: error: {exc}", file=sys.stderr)
        return 2
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except CLIError as exc:
        print(f"mlconstructive: error: {exc}", file=sys.stderr)
        return 1
    except (OSError, ValueError) as exc:
        print(f"mlconstructive: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
