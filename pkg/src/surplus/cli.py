"""Command line: simulate data, run importance methods, score and compare them.

Five subcommands:

  simulate     write a generated dataset as CSV
  analyze      run one method on one dataset, write the report JSON
  evaluate     analyze plus scoring against derived reference answers
  consistency  angle between method outputs on random halves (5 trials)
  compare      full method x dataset grid with per-dataset metrics

Every JSON document embeds a manifest with the fully resolved
configuration and seed, so a run can be reproduced from its output alone.
Reports rerun with the same configuration are byte-identical apart from
wall_time.  Exit codes: 0 success, 1 runtime failure, 2 bad configuration;
failures print a one-line error JSON to stderr.
"""

from __future__ import annotations

import argparse
import json
import os
import shlex
import sys
from pathlib import Path

from . import __version__
from .data import DGP_IDS, Dataset, DgpSpec, SplitPlan, generate, load_csv, save_csv
from .evaluation import (
    METRIC_FOR,
    ComparisonTable,
    angle_score,
    derive_ground_truth,
    rank_summary,
    selective_ratio,
    split_consistency,
)
from .importance import (
    METHODS,
    ImportanceReport,
    LocoConfig,
    SmssmConfig,
    gain_report,
    loco,
    mcr_simplified,
    replacement_cv,
    report_to_dict,
    smssm,
)
from .learner import LearnerSpec
from .seeding import child_seed

SCHEMA_VERSION = 1
_CELL_STREAM = 71  # per-cell seeds in compare grids

_METHOD_DEFAULT_K = {"smssm": 200, "mcr": 20}


class ValidationError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    # argparse prints usage text by default; the contract is error JSON
    def error(self, message):
        _print_error("validation", message)
        raise SystemExit(2)


def _print_error(kind: str, message: str) -> None:
    doc = {"error": {"type": kind, "message": message}}
    sys.stderr.write(json.dumps(doc, sort_keys=True) + "\n")


def _add_dataset_flags(p, csv_ok: bool = True):
    p.add_argument("--dataset", choices=DGP_IDS, help="simulated generator id")
    if csv_ok:
        p.add_argument("--csv", help="CSV file with a header row")
        p.add_argument("--target", default="y", help="target column name for --csv")
    p.add_argument("--n", type=int, default=2000, help="rows to generate (simulated only)")


def _add_method_flags(p):
    p.add_argument("--method", choices=METHODS, required=True)
    p.add_argument("--k", type=int, default=None,
                   help="sampled subsets (smssm, default 200) or models (mcr, default 20)")
    p.add_argument("--top-fraction", type=float, default=0.25)
    p.add_argument("--repeats", type=int, default=20)
    p.add_argument("--delta", type=float, default=0.0)
    p.add_argument("--n-perms", type=int, default=20)


def _add_learner_flags(p):
    p.add_argument("--learner", choices=("ols", "gbt", "external"), default="gbt")
    p.add_argument("--rounds", type=int, default=100)
    p.add_argument("--depth", type=int, default=3)
    p.add_argument("--lr", type=float, default=0.1)
    p.add_argument("--external-cmd", default=None,
                   help="learner process command line (required with --learner external)")


def _add_common_flags(p):
    p.add_argument("--folds", type=int, default=5)
    p.add_argument("--seed", type=int, default=None,
                   help="run seed; falls back to SURPLUS_SEED, then 0")
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--out", default=None, help="output path (stdout when omitted)")


def build_parser() -> _Parser:
    parser = _Parser(prog="surplus", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("simulate", help="write a generated dataset as CSV")
    _add_dataset_flags(p, csv_ok=False)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--out", required=True)

    p = sub.add_parser("analyze", help="run one importance method, write the report JSON")
    _add_dataset_flags(p)
    _add_method_flags(p)
    _add_learner_flags(p)
    _add_common_flags(p)

    p = sub.add_parser("evaluate",
                       help="analyze plus scores against derived reference answers")
    _add_dataset_flags(p, csv_ok=False)
    _add_method_flags(p)
    _add_learner_flags(p)
    _add_common_flags(p)
    p.add_argument("--no-clip", action="store_true",
                   help="keep negative weights when computing the angle")

    p = sub.add_parser("consistency", help="mean angle between outputs on random halves")
    _add_dataset_flags(p)
    _add_method_flags(p)
    _add_learner_flags(p)
    _add_common_flags(p)

    p = sub.add_parser("compare", help="full method x dataset score grid")
    p.add_argument("--n", type=int, default=2000)
    p.add_argument("--k", type=int, default=None)
    p.add_argument("--top-fraction", type=float, default=0.25)
    p.add_argument("--repeats", type=int, default=20)
    p.add_argument("--delta", type=float, default=0.0)
    p.add_argument("--n-perms", type=int, default=20)
    p.add_argument("--rounds", type=int, default=100)
    p.add_argument("--depth", type=int, default=3)
    p.add_argument("--lr", type=float, default=0.1)
    _add_common_flags(p)
    p.add_argument("--no-clip", action="store_true")
    return parser


def _resolve_seed(args) -> int:
    if getattr(args, "seed", None) is not None:
        return args.seed
    env = os.environ.get("SURPLUS_SEED")
    if env is not None:
        try:
            return int(env)
        except ValueError:
            raise ValidationError("SURPLUS_SEED must be an integer, got %r" % env)
    return 0


def _load_dataset(args, seed: int) -> tuple[Dataset, DgpSpec | None]:
    has_csv = getattr(args, "csv", None) is not None
    if (args.dataset is None) == (not has_csv):
        raise ValidationError("exactly one of --dataset and --csv is required")
    if args.dataset is not None:
        if args.n < 2:
            raise ValidationError("--n must be at least 2")
        spec = DgpSpec(args.dataset, args.n, seed)
        return generate(spec), spec
    return load_csv(args.csv, target=args.target), None


def _learner_spec(args, seed: int, kind: str | None = None) -> LearnerSpec:
    kind = kind or args.learner
    if kind == "gbt":
        hp = {"n_rounds": args.rounds, "max_depth": args.depth, "learning_rate": args.lr}
        return LearnerSpec("gbt", hp, seed=seed)
    if kind == "ols":
        return LearnerSpec("ols", seed=seed)
    if not args.external_cmd:
        raise ValidationError("--learner external requires --external-cmd")
    return LearnerSpec("external", seed=seed, external_cmd=tuple(shlex.split(args.external_cmd)))


def _method_k(args, method: str) -> int:
    if args.k is not None:
        return args.k
    return _METHOD_DEFAULT_K.get(method, 0)


def _run_method(ds: Dataset, method: str, args, seed: int, n_jobs: int) -> ImportanceReport:
    plan = SplitPlan("kfold", args.folds, seed)
    if method == "smssm":
        cfg = SmssmConfig(
            k=_method_k(args, "smssm"),
            top_fraction=args.top_fraction,
            learner=_learner_spec(args, seed),
            cv=plan,
            seed=seed,
        )
        return smssm(ds, cfg, n_jobs=n_jobs)
    if method == "loco":
        cfg = LocoConfig(
            repeats=args.repeats, learner=_learner_spec(args, seed), cv=plan, seed=seed
        )
        return loco(ds, cfg, n_jobs=n_jobs)
    if method == "mcr":
        return mcr_simplified(
            ds,
            k_models=_method_k(args, "mcr"),
            delta=args.delta,
            n_perms=args.n_perms,
            seed=seed,
            plan=SplitPlan("kfold", args.folds, child_seed(seed, 37)),
            n_jobs=n_jobs,
        )
    if method == "replacement":
        return replacement_cv(ds, _learner_spec(args, seed), plan, constant="mean")
    return gain_report(ds, _learner_spec(args, seed, kind="gbt"))


def _method_manifest(args, method: str) -> dict:
    out = {"method": method, "folds": args.folds}
    if method == "smssm":
        out.update(k=_method_k(args, "smssm"), top_fraction=args.top_fraction)
    elif method == "loco":
        out.update(repeats=args.repeats, alpha=0.05)
    elif method == "mcr":
        out.update(k=_method_k(args, "mcr"), delta=args.delta, n_perms=args.n_perms)
    elif method == "replacement":
        out["constant"] = "mean"
    return out


def _learner_manifest(args, method: str) -> dict:
    kind = "gbt" if method == "gain" else getattr(args, "learner", "gbt")
    if kind == "gbt":
        return {"kind": "gbt", "n_rounds": args.rounds, "max_depth": args.depth,
                "learning_rate": args.lr}
    if kind == "ols":
        return {"kind": "ols"}
    return {"kind": "external", "cmd": args.external_cmd}


def _dataset_manifest(args) -> dict:
    if getattr(args, "csv", None):
        return {"csv": str(args.csv), "target": args.target}
    return {"dataset": args.dataset, "n": args.n}


def _emit(doc: dict, out: str | None, also_print: str | None = None) -> None:
    payload = json.dumps(doc, sort_keys=True, indent=2) + "\n"
    if out is None:
        sys.stdout.write(payload)
    else:
        Path(out).write_text(payload, encoding="utf-8")
        if also_print is not None:
            sys.stdout.write(also_print + "\n")


def _cmd_simulate(args) -> int:
    seed = _resolve_seed(args)
    if args.dataset is None:
        raise ValidationError("simulate requires --dataset")
    if args.n < 2:
        raise ValidationError("--n must be at least 2")
    spec = DgpSpec(args.dataset, args.n, seed)
    save_csv(generate(spec), args.out)
    manifest = {
        "command": "simulate",
        "schema_version": SCHEMA_VERSION,
        "package_version": __version__,
        "seed": seed,
        "out": str(args.out),
        **_dataset_manifest(args),
    }
    path = Path(str(args.out) + ".manifest.json")
    path.write_text(json.dumps(manifest, sort_keys=True, indent=2) + "\n", encoding="utf-8")
    return 0


def _base_manifest(args, command: str, seed: int) -> dict:
    return {
        "command": command,
        "schema_version": SCHEMA_VERSION,
        "package_version": __version__,
        "seed": seed,
        "jobs": args.jobs,
        "out": None if args.out is None else str(args.out),
        **_dataset_manifest(args),
        **_method_manifest(args, args.method),
        "learner": _learner_manifest(args, args.method),
    }


def _cmd_analyze(args) -> int:
    seed = _resolve_seed(args)
    _validate_run_flags(args)
    ds, _ = _load_dataset(args, seed)
    report = _run_method(ds, args.method, args, seed, args.jobs)
    doc = {"manifest": _base_manifest(args, "analyze", seed), "report": report_to_dict(report)}
    _emit(doc, args.out)
    return 0


def _cmd_evaluate(args) -> int:
    seed = _resolve_seed(args)
    _validate_run_flags(args)
    if args.dataset is None:
        raise ValidationError("evaluate requires --dataset (reference answers are derived)")
    ds, spec = _load_dataset(args, seed)
    truth = derive_ground_truth(spec)
    report = _run_method(ds, args.method, args, seed, args.jobs)
    flags: set = set()
    scores = {
        "angle": angle_score(report.phi, truth.weights, clip=not args.no_clip, flags=flags),
        "selective_ratio": selective_ratio(report.phi, truth.true_set, flags=flags),
        "metric": METRIC_FOR[args.dataset],
    }
    scores["score"] = scores[scores["metric"]]
    scores["flags"] = sorted(flags)
    manifest = _base_manifest(args, "evaluate", seed)
    manifest["clip"] = not args.no_clip
    doc = {
        "manifest": manifest,
        "report": report_to_dict(report),
        "scores": scores,
        "truth": {
            "weights": [float(v) for v in truth.weights],
            "true_set": sorted(truth.true_set),
        },
    }
    _emit(doc, args.out)
    return 0


def _cmd_consistency(args) -> int:
    seed = _resolve_seed(args)
    _validate_run_flags(args)
    ds, _ = _load_dataset(args, seed)

    def runner(half: Dataset, run_seed: int) -> ImportanceReport:
        return _run_method(half, args.method, args, run_seed, args.jobs)

    flags: set = set()
    value = split_consistency(ds, runner, trials=5, seed=seed, flags=flags)
    manifest = _base_manifest(args, "consistency", seed)
    manifest["trials"] = 5
    doc = {
        "manifest": manifest,
        "result": {"consistency_angle": value, "trials": 5, "flags": sorted(flags)},
    }
    _emit(doc, args.out)
    return 0


def _cmd_compare(args) -> int:
    seed = _resolve_seed(args)
    if args.n < 2:
        raise ValidationError("--n must be at least 2")
    datasets = DGP_IDS
    methods = METHODS
    cell_flags: set = set()
    truths, data, run_seeds = {}, {}, {}
    for di, ds_id in enumerate(datasets):
        truths[ds_id] = derive_ground_truth(DgpSpec(ds_id, args.n, seed))
        run_seeds[ds_id] = child_seed(seed, _CELL_STREAM, di)
        data[ds_id] = generate(DgpSpec(ds_id, args.n, run_seeds[ds_id]))

    args.learner = "gbt"  # the grid compares the canonical boosted-tree setups
    args.external_cmd = None
    cells = []
    for method in methods:
        row = []
        for ds_id in datasets:
            report = _run_method(data[ds_id], method, args, run_seeds[ds_id], args.jobs)
            truth = truths[ds_id]
            if METRIC_FOR[ds_id] == "angle":
                score = angle_score(report.phi, truth.weights,
                                    clip=not args.no_clip, flags=cell_flags)
            else:
                score = selective_ratio(report.phi, truth.true_set, flags=cell_flags)
            row.append(score)
        cells.append(row)

    table = ComparisonTable(
        methods=methods,
        datasets=datasets,
        metric_kinds=tuple(METRIC_FOR[d] for d in datasets),
        cells=cells,
        seeds_per_cell=1,
    )
    ranks = rank_summary(table)
    manifest = {
        "command": "compare",
        "schema_version": SCHEMA_VERSION,
        "package_version": __version__,
        "seed": seed,
        "jobs": args.jobs,
        "n": args.n,
        "folds": args.folds,
        "k_smssm": _method_k(args, "smssm"),
        "k_mcr": _method_k(args, "mcr"),
        "top_fraction": args.top_fraction,
        "repeats": args.repeats,
        "delta": args.delta,
        "n_perms": args.n_perms,
        "learner": {"kind": "gbt", "n_rounds": args.rounds, "max_depth": args.depth,
                    "learning_rate": args.lr},
        "clip": not args.no_clip,
        "out": None if args.out is None else str(args.out),
    }
    doc = {
        "manifest": manifest,
        "table": table.to_json_dict(),
        "rank_summary": {
            m: {"mean": r.mean, "best": r.best, "worst": r.worst} for m, r in ranks.items()
        },
        "flags": sorted(cell_flags),
    }
    _emit(doc, args.out, also_print=table.to_text())
    return 0


def _validate_run_flags(args) -> None:
    if args.jobs < 1:
        raise ValidationError("--jobs must be at least 1")
    if args.folds < 2:
        raise ValidationError("--folds must be at least 2")
    if args.k is not None and args.k < 1:
        raise ValidationError("--k must be positive")


_COMMANDS = {
    "simulate": _cmd_simulate,
    "analyze": _cmd_analyze,
    "evaluate": _cmd_evaluate,
    "consistency": _cmd_consistency,
    "compare": _cmd_compare,
}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return exc.code or 0
    try:
        return _COMMANDS[args.command](args)
    except ValidationError as exc:
        _print_error("validation", str(exc))
        return 2
    except ValueError as exc:
        _print_error("validation", str(exc))
        return 2
    except Exception as exc:  # noqa: BLE001 - the CLI boundary reports, not raises
        _print_error("runtime", "%s: %s" % (type(exc).__name__, exc))
        return 1


if __name__ == "__main__":
    sys.exit(main())
