"""Command-line entry point.

Exit codes: 0 success, 1 pipeline error, 2 usage, configuration or missing-file error.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import simulate as sim
from .association import Assignment
from .device_filter import FACE_RSS_THRESHOLD
from .errors import ConfigError, CrosslinkError
from .evaluation import evaluate, feasibility_curve, write_curve
from .ingest import bundled_oui_path, load_dataset, load_oui, load_truth
from .linkage_tree import build_tree
from .model import bits_from_str
from .pipeline import RunConfig, prepare, run

log = logging.getLogger("crosslink")

INPUT_FILES = {
    "sessions": "sessions.jsonl",
    "sightings": "sightings.csv",
    "embeddings": "embeddings.jsonl",
    "registry": "registry.csv",
    "oui": "oui.csv",
    "truth": "truth.jsonl",
}


class UsageError(Exception):
    pass


def write_json(path: Path, obj) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True)
        fh.write("\n")


# -- argument helpers --------------------------------------------------------


def _add_inputs(p: argparse.ArgumentParser, *names: str) -> None:
    p.add_argument("--data", type=Path, help="directory holding the standard input file names")
    for name in names:
        p.add_argument(f"--{name}", type=Path, help=f"path to {INPUT_FILES[name]}")


def _add_run_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--rss-threshold", type=int, default=FACE_RSS_THRESHOLD)
    p.add_argument("--omega", type=float, default=0.5)
    k = p.add_mutually_exclusive_group()
    k.add_argument("--k", type=int, help="number of (node, device) pairs to select")
    k.add_argument("--k-ratio", type=float, help="K relative to the registry size (default 1.25)")
    p.add_argument("--metric", choices=("dice", "euclidean"), default="dice")
    p.add_argument("--baseline", choices=("ours", "naive"), default="ours")
    p.add_argument("--min-cluster-size", type=int, default=1)
    p.add_argument("--seed", type=int, default=0)


def _add_sim_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", type=Path, help="JSON file of simulation settings")
    p.add_argument("--seed", type=int)
    p.add_argument("--victims", type=int)
    p.add_argument("--oos-subjects", type=int)
    p.add_argument("--sessions", type=int)
    p.add_argument("--embed-dim", type=int)
    p.add_argument("--sigma", dest="embed_noise_sigma", type=float)
    p.add_argument("--samples-mean", dest="samples_per_attendee_mean", type=float)
    p.add_argument("--miss", dest="device_miss_prob", type=float)
    p.add_argument("--phantom", dest="phantom_prob", type=float)


def _resolve(args, name: str, required: bool = True) -> Path | None:
    path = getattr(args, name, None)
    if path is None and args.data is not None:
        path = args.data / INPUT_FILES[name]
        if not path.exists() and not required:
            return None
    if path is None:
        if required:
            raise UsageError(f"--{name} (or --data) is required")
        return None
    if not path.is_file():
        raise FileNotFoundError(f"no such file: {path}")
    return path


def _run_config(args) -> RunConfig:
    return RunConfig(
        rss_threshold=args.rss_threshold,
        omega=args.omega,
        k=args.k,
        k_ratio=args.k_ratio,
        metric=args.metric,
        baseline=args.baseline,
        min_cluster_size=args.min_cluster_size,
        seed=args.seed,
    )


def _sim_config(args) -> sim.SimConfig:
    base = {}
    if args.config is not None:
        if not args.config.is_file():
            raise FileNotFoundError(f"no such file: {args.config}")
        base = json.loads(args.config.read_text(encoding="utf-8"))
    for f in dataclasses.fields(sim.SimConfig):
        value = getattr(args, f.name, None)
        if value is not None:
            base[f.name] = value
    return sim.SimConfig.from_dict(base)


def _load(args, need_sightings=True, need_embeddings=True):
    sessions = _resolve(args, "sessions")
    sightings = _resolve(args, "sightings") if need_sightings else None
    embeddings = _resolve(args, "embeddings") if need_embeddings else None
    registry = _resolve(args, "registry", required=False)
    oui = _resolve(args, "oui", required=False) or bundled_oui_path()
    strict = not getattr(args, "lenient", False)
    if embeddings is None:
        from .ingest import load_sessions, load_sightings, load_registry
        from .model import Dataset

        ds = Dataset(
            load_sessions(sessions, strict=strict),
            [],
            load_sightings(sightings, strict=strict) if sightings else [],
            load_registry(registry) if registry else None,
        )
    else:
        ds = load_dataset(sessions, embeddings, sightings, registry, strict=strict)
    return ds, load_oui(oui)


def _labels(args, dataset) -> dict[str, str]:
    truth = _resolve(args, "truth", required=False)
    if truth is not None:
        return load_truth(truth)[0]
    return {s.sample_id: s.true_label for s in dataset.samples}


# -- subcommands -------------------------------------------------------------


def cmd_filter(args) -> int:
    from .device_filter import FilterConfig, run_filter

    dataset, oui = _load(args, need_embeddings=False)
    report = run_filter(dataset, oui, FilterConfig(args.rss_threshold))
    write_json(args.out / "filter_report.json", report.to_dict())
    print(f"{len(report.survivors)} of {report.input_distinct} MACs survive")
    return 0


def cmd_tree(args) -> int:
    dataset, _ = _load(args, need_sightings=False)
    tree = build_tree(dataset.samples, dataset.sessions)
    write_json(args.out / "tree.json", tree.to_dict())
    print(f"tree with {tree.n_leaves} leaves written")
    return 0


def _assignment_doc(result, config: RunConfig, k: int) -> dict:
    doc = result.assignment.to_dict()
    doc["config"] = {
        "baseline": config.baseline,
        "metric": config.metric,
        "omega": config.omega,
        "rss_threshold": config.rss_threshold,
        "min_cluster_size": config.min_cluster_size,
        "k": k,
    }
    return doc


def cmd_associate(args) -> int:
    config = _run_config(args)
    dataset, oui = _load(args)
    result = run(dataset, oui, config)
    k = config.resolve_k(dataset.registry)
    write_json(args.out / "filter_report.json", result.filter_report.to_dict())
    write_json(args.out / "tree.json", result.tree.to_dict())
    write_json(args.out / "assignment.json", _assignment_doc(result, config, k))
    a = result.assignment
    note = " (clamped)" if a.clamped else ""
    print(f"{a.k_achieved} pairs selected{note}, objective {a.objective:.6f}")
    return 0


def cmd_evaluate(args) -> int:
    dataset, _ = _load(args, need_sightings=False)
    if not dataset.registry:
        raise UsageError("evaluation needs a registry (--registry or --data)")
    path = args.assignment or (args.out / "assignment.json")
    if not Path(path).is_file():
        raise FileNotFoundError(f"no such file: {path}")
    assignment = Assignment.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))
    tree = build_tree(dataset.samples, dataset.sessions)
    report = evaluate(assignment, tree, _labels(args, dataset), dataset.registry)
    write_json(args.out / "eval.json", report.to_dict())
    purity = "n/a" if report.mean_purity is None else f"{report.mean_purity:.4f}"
    print(f"accuracy {report.accuracy:.4f}, mean purity {purity}")
    return 0


def cmd_simulate(args) -> int:
    config = _sim_config(args)
    out = sim.generate(config, args.out)
    print(f"dataset written to {out}")
    return 0


SWEEP_METHODS = (
    ("ours", dict(metric="dice", baseline="ours")),
    ("ours-euclidean", dict(metric="euclidean", baseline="ours")),
    ("naive", dict(metric="dice", baseline="naive")),
)


def _parse_values(text: str, parameter: str) -> list:
    if not text.strip():
        return []
    cast = float if parameter == "omega" else int
    try:
        return [cast(v) for v in text.split(",")]
    except ValueError:
        raise ConfigError(f"cannot parse sweep values {text!r}") from None


def cmd_sweep(args) -> int:
    base = _sim_config(args)
    values = _parse_values(args.values, args.parameter)
    dirs = sim.sweep(base, args.parameter, values, args.out / "datasets")
    rows = []
    for value, d in zip(values, dirs):
        dataset = load_dataset(d / "sessions.jsonl", d / "embeddings.jsonl", d / "sightings.csv", d / "registry.csv")
        labels = load_truth(d / "truth.jsonl")[0]
        oui = load_oui(d / "oui.csv")
        common = dict(k=args.k, k_ratio=args.k_ratio, min_cluster_size=args.min_cluster_size, omega=args.omega,
                      rss_threshold=args.rss_threshold)
        if args.parameter == "omega":
            common["omega"] = value
        elif args.parameter == "rss_threshold":
            common["rss_threshold"] = value
        prepared = prepare(dataset, oui, RunConfig(**common))
        for name, extra in SWEEP_METHODS:
            result = run(dataset, oui, RunConfig(**common, **extra), labels, prepared=prepared)
            rep = result.report
            rows.append((value, name, rep.accuracy, "" if rep.mean_purity is None else rep.mean_purity))
    args.out.mkdir(parents=True, exist_ok=True)
    with open(args.out / "sweep.csv", "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["parameter_value", "method", "accuracy", "mean_purity"])
        for value, name, acc, pur in sorted(rows, key=lambda r: ([m for m, _ in SWEEP_METHODS].index(r[1]), r[0])):
            w.writerow([value, name, repr(float(acc)), "" if pur == "" else repr(float(pur))])
    print(f"{len(rows)} rows written to {args.out / 'sweep.csv'}")
    return 0


def _read_attendance(path: Path) -> np.ndarray:
    rows = []
    for line in path.read_text(encoding="utf-8").splitlines():
        text = line.strip().replace(",", "")
        if text:
            rows.append(bits_from_str(text))
    if not rows or len({len(r) for r in rows}) != 1:
        raise ConfigError(f"{path}: attendance rows must be nonempty and of equal length")
    return np.vstack(rows)


def _victim_attendance(args) -> np.ndarray:
    dataset, _ = _load(args, need_sightings=False)
    labels, owners = load_truth(_resolve(args, "truth"))
    victims = sorted(set(owners.values()))
    index = {v: i for i, v in enumerate(victims)}
    att = np.zeros((len(victims), dataset.n_sessions), dtype=bool)
    sidx = dataset.session_index
    for s in dataset.samples:
        subject = labels.get(s.sample_id)
        if subject in index:
            att[index[subject], sidx[s.session_id]] = True
    return att


def cmd_feasibility(args) -> int:
    att = _read_attendance(args.attendance) if args.attendance else _victim_attendance(args)
    if args.g_values:
        gs = [int(v) for v in args.g_values.split(",")]
    else:
        gs = list(range(1, att.shape[1] + 1))
    curve = feasibility_curve(att, gs, args.mode, args.trials, args.seed)
    args.out.mkdir(parents=True, exist_ok=True)
    write_curve(args.out / "feasibility.csv", curve)
    print(f"{len(curve)} points written to {args.out / 'feasibility.csv'}")
    return 0


# -- parser --------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="crosslink", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", metavar="COMMAND")
    sub.required = True

    def common(p):
        p.add_argument("--out", type=Path, default=Path("."), help="output directory")
        p.add_argument("--lenient", action="store_true", help="skip malformed rows instead of failing")

    p = sub.add_parser("filter", help="filter sniffed MACs down to candidate devices")
    _add_inputs(p, "sessions", "sightings", "registry", "oui")
    p.add_argument("--rss-threshold", type=int, default=FACE_RSS_THRESHOLD)
    common(p)
    p.set_defaults(func=cmd_filter)

    p = sub.add_parser("tree", help="build the linkage tree")
    _add_inputs(p, "sessions", "embeddings", "registry", "oui")
    common(p)
    p.set_defaults(func=cmd_tree)

    p = sub.add_parser("associate", help="run the full association pipeline")
    _add_inputs(p, "sessions", "sightings", "embeddings", "registry", "oui")
    _add_run_flags(p)
    common(p)
    p.set_defaults(func=cmd_associate)

    p = sub.add_parser("evaluate", help="score an assignment against ground truth")
    _add_inputs(p, "sessions", "embeddings", "registry", "oui", "truth")
    p.add_argument("--assignment", type=Path, help="assignment.json (default: OUT/assignment.json)")
    common(p)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("simulate", help="write a synthetic dataset")
    _add_sim_flags(p)
    common(p)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("sweep", help="simulate a parameter sweep and evaluate every method")
    _add_sim_flags(p)
    p.add_argument("--parameter", required=True, choices=sim.SWEEP_PARAMETERS)
    p.add_argument("--values", required=True, help="comma-separated values")
    p.add_argument("--rss-threshold", type=int, default=FACE_RSS_THRESHOLD)
    p.add_argument("--omega", type=float, default=0.5)
    k = p.add_mutually_exclusive_group()
    k.add_argument("--k", type=int)
    k.add_argument("--k-ratio", type=float)
    p.add_argument("--min-cluster-size", type=int, default=1)
    common(p)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("feasibility", help="attendance distinguishability curve")
    _add_inputs(p, "sessions", "embeddings", "registry", "oui", "truth")
    p.add_argument("--attendance", type=Path, help="file of 0/1 rows, one victim per line")
    p.add_argument("--g-values", help="comma-separated g values (default 1..G)")
    p.add_argument("--mode", choices=("rand", "cont"), default="rand")
    p.add_argument("--trials", type=int, default=20)
    p.add_argument("--seed", type=int, default=0)
    common(p)
    p.set_defaults(func=cmd_feasibility)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s: %(message)s")
    try:
        return args.func(args)
    except (UsageError, ConfigError) as exc:
        parser.print_usage(sys.stderr)
        print(f"crosslink: error: {exc}", file=sys.stderr)
        return 2
    except FileNotFoundError as exc:
        print(f"crosslink: error: {exc}", file=sys.stderr)
        return 2
    except (CrosslinkError, ValueError, OSError) as exc:
        print(f"crosslink: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
