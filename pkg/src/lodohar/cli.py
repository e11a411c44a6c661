"""Command-line front end.

Exit codes: 0 success, 1 validation or configuration error, 2 runtime
failure. Diagnostics go to stderr; machine outputs go to files. Every
subcommand that writes outputs also writes ``<command>_config.json`` with
its fully resolved arguments next to them.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .canon import read_corpus, write_corpus
from .errors import (
    CheckpointError,
    ConfigError,
    LodoharError,
    ParseError,
    ShapeError,
    UnmappedLabelError,
    UnsupportedOperation,
    ValidationError,
)
from .harness import (
    RunConfig,
    checkpoint_path,
    cross_matrix,
    export_embeddings,
    finetune,
    load_model,
    normalize_strategy,
    pretrain,
    run_lodo,
    write_matrix,
    write_results,
)
from .metrics import aggregate, read_results_csv, report_csv, report_text, sort_results, write_results_csv
from .nnc import ArchSpec, conv_ref, describe
from .pipeline import LabelSpace, PipelineConfig, prepare, read_windows, stats_digest, write_windows
from .splits import RATIOS, FoldPlan, plan_all, plan_lodo
from .synth import SynthSpec, amplified, generate

log = logging.getLogger("lodohar")

USER_ERRORS = (ConfigError, ValidationError, ParseError, UnmappedLabelError, ShapeError,
               CheckpointError, UnsupportedOperation)


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise ConfigError(f"{self.prog}: {message}")


def _write_json(path, doc) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(doc, indent=2, sort_keys=True, ensure_ascii=False) + "\n",
                    encoding="utf-8")


def _record_config(args, out_dir) -> None:
    doc = {k: v for k, v in vars(args).items() if k not in ("func", "config")}
    _write_json(Path(out_dir) / f"{args.command}_config.json", doc)


def _ratio_list(text):
    return [float(x) for x in str(text).split(",") if x.strip()]


def _str_list(text):
    return [x.strip() for x in str(text).split(",") if x.strip()]


def _int_list(text):
    return [int(x) for x in str(text).split(",") if x.strip()]


# -- subcommands -------------------------------------------------------------


def cmd_synth(args) -> int:
    if args.spec:
        spec = SynthSpec.from_json(json.loads(Path(args.spec).read_text(encoding="utf-8")))
    else:
        spec = SynthSpec()
    overrides = {"seed": args.seed}
    if args.datasets is not None:
        overrides["dataset_count"] = args.datasets
    if args.subjects is not None:
        overrides["subjects_per_dataset"] = args.subjects
    doc = spec.to_json()
    doc.update(overrides)
    spec = amplified(SynthSpec.from_json(doc)) if args.amplified else SynthSpec.from_json(doc)
    corpus = generate(spec)
    out = Path(args.out)
    write_corpus(corpus, out)
    (out / "synth_spec.json").write_text(spec.dumps(), encoding="utf-8")
    _record_config(args, out)
    return 0


def cmd_validate(args) -> int:
    corpus = read_corpus(args.corpus)
    if not corpus:
        raise ValidationError(args.corpus, "corpus has at least one dataset")
    for manifest, recs in corpus:
        samples = sum(r.n_samples for r in recs)
        subjects = len({r.subject_id for r in recs})
        print(f"{manifest.dataset_id}: ok, {len(recs)} recordings, {subjects} subjects, "
              f"{samples} samples, {len(manifest.declared_activities)} activities")
    return 0


def cmd_prep(args) -> int:
    corpus = read_corpus(args.corpus)
    config = PipelineConfig(target_rate_hz=args.hz, window_length=args.window,
                            overlap_fraction=args.overlap, position_filter=args.position,
                            std_epsilon=args.std_epsilon)
    if args.labels:
        space = LabelSpace.from_json(json.loads(Path(args.labels).read_text(encoding="utf-8")))
    else:
        space = LabelSpace.default()
    ws, stats, summary = prepare(corpus, config, space)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    write_windows(ws, out / "windows.harw")
    _write_json(out / "stats.json", {"digest": stats_digest(stats),
                                     "datasets": {k: v.to_json() for k, v in sorted(stats.items())}})
    _write_json(out / "label_space.json", space.to_json())
    _write_json(out / "pipeline.json", config.to_json())
    _write_json(out / "summary.json", {"subjects": summary.subjects, "labels": summary.labels,
                                       "windows": summary.windows, "digest": ws.digest()})
    _record_config(args, out)
    return 0


def cmd_plan(args) -> int:
    ws = read_windows(args.windows)
    ratios = sorted(set(RATIOS) | set(_ratio_list(args.ratios)))
    wpath = str(Path(args.windows).resolve())
    if args.held_out:
        plans = [plan_lodo(ws, args.held_out, args.seed, ratios, wpath)]
    else:
        plans = plan_all(ws, args.seed, ratios, wpath)
    out = Path(args.out)
    for p in plans:
        p.check(ws)
        p.save(out / f"fold_{p.held_out_dataset_id}.json")
    _record_config(args, out)
    return 0


def _stats_digest_beside(windows_path):
    stats = Path(windows_path).with_name("stats.json")
    if stats.exists():
        return json.loads(stats.read_text(encoding="utf-8")).get("digest")
    return None


def _run_config(args, phase, strategy=None, ratio=None) -> RunConfig:
    return RunConfig(phase=phase, epochs=args.epochs, batch_size=args.batch_size, lr=args.lr,
                     strategy=strategy, ratio=ratio, seed=args.seed,
                     checkpoint_in=args.checkpoint, out_dir=args.out,
                     record_wall_time=not args.no_wall_time, debug_hygiene=args.debug_hygiene,
                     metadata={"stats_digest": _stats_digest_beside(args.windows)} if args.windows else {})


def cmd_run(args) -> int:
    out = Path(args.out)
    if args.all_folds:
        if not args.windows:
            raise ConfigError("--all-folds needs --windows")
        ws = read_windows(args.windows)
        cfg = _run_config(args, "pretrain")
        results = run_lodo(ws, _ratio_list(args.ratios), _str_list(args.strategies),
                           _int_list(args.seeds), cfg, jobs=args.jobs)
        write_results(results, out / "results.csv")
        _record_config(args, out)
        return 0
    if not args.plan:
        raise ConfigError("run needs --plan (or --all-folds with --windows)")
    plan = FoldPlan.load(args.plan)
    windows = args.windows or plan.windows_path
    if not windows:
        raise ConfigError("fold plan names no windows file; pass --windows")
    args.windows = windows
    ws = read_windows(windows)
    plan.check(ws)
    if args.phase == "pretrain":
        if args.strategy is not None or args.ratio is not None:
            raise ConfigError("--strategy/--ratio only apply to --phase finetune")
        cfg = _run_config(args, "pretrain")
        pretrain(plan, ws, cfg)
        _record_config(args, out)
        return 0
    if args.strategy is None or args.ratio is None:
        raise ConfigError("fine-tuning needs --strategy and --ratio")
    cfg = _run_config(args, "finetune", args.strategy, args.ratio)
    ckpt = args.checkpoint
    if ckpt is None and cfg.strategy != "Rd" and checkpoint_path(plan, cfg).exists():
        ckpt = str(checkpoint_path(plan, cfg))
    fold = ws.dataset_ids().index(plan.held_out_dataset_id)
    _, result = finetune(plan, ws, cfg.strategy, cfg.ratio, cfg, ckpt, fold)
    name = f"result_{plan.held_out_dataset_id}_{cfg.strategy}_r{cfg.ratio:g}_s{cfg.seed}.csv"
    write_results([result], out / name)
    _record_config(args, out)
    return 0


def cmd_xmatrix(args) -> int:
    ws = read_windows(args.windows)
    cfg = RunConfig(phase="finetune", strategy="Rd", ratio=1.0, epochs=args.epochs,
                    batch_size=args.batch_size, lr=args.lr, seed=args.seed, out_dir=args.out)
    mats = []
    for s in _int_list(args.seeds):
        M, datasets = cross_matrix(ws, cfg, s)
        mats.append(M)
        write_matrix(M, datasets, Path(args.out) / f"xmatrix_seed{s}.csv")
    write_matrix(np.mean(mats, axis=0), datasets, Path(args.out) / "xmatrix.csv")
    _record_config(args, args.out)
    return 0


def cmd_report(args) -> int:
    files = []
    for item in args.results:
        p = Path(item)
        files += sorted(p.glob("result*.csv")) if p.is_dir() else [p]
    if not files:
        raise ConfigError("no results files found")
    rows = sort_results([r for f in files for r in read_results_csv(f)])
    table = aggregate(rows, args.metric)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    write_results_csv(rows, out / "results_merged.csv")
    (out / "report.csv").write_text(report_csv(table), encoding="utf-8")
    label = "macro F1" if args.metric == "macro_f1" else args.metric
    (out / "report.txt").write_text(report_text(table, label), encoding="utf-8")
    _record_config(args, out)
    return 0


def cmd_embed(args) -> int:
    model = load_model(args.checkpoint)
    ws = read_windows(args.windows)
    idx = None
    if args.plan:
        plan = FoldPlan.load(args.plan)
        parts = {"test": plan.target_test, "val": plan.target_val, "pool": plan.target_train_pool,
                 "pretrain": plan.pretrain}
        idx = parts[args.split]
    export_embeddings(model, ws, idx, args.out)
    _record_config(args, Path(args.out).parent)
    return 0


def cmd_describe(args) -> int:
    if args.checkpoint:
        arch = load_model(args.checkpoint).arch
    elif args.arch:
        arch = ArchSpec.from_json(json.loads(Path(args.arch).read_text(encoding="utf-8")))
    else:
        arch = conv_ref(args.classes, (args.window, args.channels))
    arch.validate()
    params, flops = describe(arch)
    doc = {"params": params, "flops": flops, "input_shape": list(arch.input_shape),
           "layers": [dict(layer) for layer in arch.layers]}
    if args.out:
        _write_json(args.out, doc)
    else:
        print(f"params {params}  flops {flops}  input {tuple(arch.input_shape)}")
    return 0


# -- parser ------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    fmt = argparse.ArgumentDefaultsHelpFormatter
    p = _Parser(prog="lodohar", description="Leave-one-dataset-out HAR pre-training experiments.",
                formatter_class=fmt)
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def add(name, func, help_):
        sp = sub.add_parser(name, help=help_, description=help_, formatter_class=fmt)
        sp.add_argument("--config", help="JSON file of flag defaults; explicit flags win")
        sp.set_defaults(func=func)
        return sp

    sp = add("synth", cmd_synth, "generate a synthetic multi-dataset corpus")
    sp.add_argument("--out", required=True, help="corpus directory to write")
    sp.add_argument("--spec", help="SynthSpec JSON")
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--datasets", type=int, default=None, help="override dataset_count")
    sp.add_argument("--subjects", type=int, default=None, help="override subjects_per_dataset")
    sp.add_argument("--amplified", action="store_true", help="strong per-dataset device shift")

    sp = add("validate", cmd_validate, "validate a canon corpus directory")
    sp.add_argument("--corpus", required=True)

    sp = add("prep", cmd_prep, "resample, normalize, window and canonicalize a corpus")
    sp.add_argument("--corpus", required=True)
    sp.add_argument("--out", required=True)
    sp.add_argument("--hz", type=float, default=50.0, help="target sample rate")
    sp.add_argument("--window", type=int, default=128, help="window length in samples")
    sp.add_argument("--overlap", type=float, default=0.5, help="window overlap fraction")
    sp.add_argument("--position", default="waist", help="body position to keep")
    sp.add_argument("--std-epsilon", type=float, default=1e-8)
    sp.add_argument("--labels", help="LabelSpace JSON (default rules otherwise)")

    sp = add("plan", cmd_plan, "materialize LODO fold plans")
    sp.add_argument("--windows", required=True)
    sp.add_argument("--out", required=True)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--held-out", default=None, help="single held-out dataset (all otherwise)")
    sp.add_argument("--ratios", default="0,0.01,0.05,0.1,1", help="comma-separated pool ratios")

    sp = add("run", cmd_run, "pre-train or fine-tune one fold, or run every fold")
    sp.add_argument("--plan", help="fold plan JSON")
    sp.add_argument("--windows", help="windows file (defaults to the plan's)")
    sp.add_argument("--out", default="runs")
    sp.add_argument("--phase", choices=("pretrain", "finetune"), default="finetune")
    sp.add_argument("--strategy", type=normalize_strategy, default=None,
                    help="one of Rd, PF, PU (case-insensitive)")
    sp.add_argument("--ratio", type=float, default=None)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--epochs", type=int, default=200)
    sp.add_argument("--batch-size", type=int, default=None,
                    help="128 for pre-training, 64 for fine-tuning when unset")
    sp.add_argument("--lr", type=float, default=0.0005)
    sp.add_argument("--checkpoint", help="pre-trained checkpoint for PF/PU; pretrain_<held-out>.lodc in --out is "
                    "used when unset")
    sp.add_argument("--all-folds", action="store_true", help="full LODO over --windows")
    sp.add_argument("--strategies", default="Rd,PF,PU", help="with --all-folds")
    sp.add_argument("--ratios", default="0,0.01,0.05,0.1,1", help="with --all-folds")
    sp.add_argument("--seeds", default="0", help="with --all-folds")
    sp.add_argument("--jobs", type=int, default=1, help="parallel processes with --all-folds")
    sp.add_argument("--no-wall-time", action="store_true",
                    help="write wall_time_s as 0 so results files are byte-reproducible")
    sp.add_argument("--debug-hygiene", action="store_true",
                    help="assert no held-out window enters a pre-training batch")

    sp = add("xmatrix", cmd_xmatrix, "cross-dataset train-on-i, test-on-j macro F1 matrix")
    sp.add_argument("--windows", required=True)
    sp.add_argument("--out", required=True)
    sp.add_argument("--epochs", type=int, default=200)
    sp.add_argument("--batch-size", type=int, default=64)
    sp.add_argument("--lr", type=float, default=0.0005)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--seeds", default="0", help="comma-separated; the matrix is their mean")

    sp = add("report", cmd_report, "merge results files into report tables")
    sp.add_argument("results", nargs="+", help="results CSV files or directories")
    sp.add_argument("--out", required=True)
    sp.add_argument("--metric", choices=("macro_f1", "accuracy"), default="macro_f1")

    sp = add("embed", cmd_embed, "export extractor embeddings as CSV")
    sp.add_argument("--checkpoint", required=True)
    sp.add_argument("--windows", required=True)
    sp.add_argument("--out", required=True, help="CSV file to write")
    sp.add_argument("--plan", help="restrict to one split of this fold plan")
    sp.add_argument("--split", choices=("test", "val", "pool", "pretrain"), default="test")

    sp = add("describe", cmd_describe, "parameter and FLOP count of an architecture")
    sp.add_argument("--classes", type=int, default=10)
    sp.add_argument("--window", type=int, default=128)
    sp.add_argument("--channels", type=int, default=6)
    sp.add_argument("--arch", help="ArchSpec JSON")
    sp.add_argument("--checkpoint", help="read the architecture from a checkpoint")
    sp.add_argument("--out", help="write a JSON description instead of printing")
    # every flag shows its default in --help
    for sp in sub.choices.values():
        for action in sp._actions:
            if action.help is None:
                action.help = "(default: %(default)s)"
    return p


def _apply_config_file(parser, argv):
    """Re-parse with the JSON config as defaults so that explicit flags win."""
    args = parser.parse_args(argv)
    if not getattr(args, "config", None):
        return args
    try:
        doc = json.loads(Path(args.config).read_text(encoding="utf-8"))
    except OSError as exc:
        raise ConfigError(f"cannot read config {args.config}: {exc.strerror}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config {args.config}: {exc}") from exc
    if not isinstance(doc, dict):
        raise ConfigError(f"config {args.config}: expected a JSON object")
    sub = parser._subparsers._group_actions[0].choices[args.command]
    known = {a.dest for a in sub._actions} - {"help", "config"}
    doc = {k.replace("-", "_"): v for k, v in doc.items()}
    unknown = sorted(set(doc) - known)
    if unknown:
        raise ConfigError(f"config {args.config}: unknown keys {unknown}")
    sub.set_defaults(**doc)
    return parser.parse_args(argv)


def main(argv=None) -> int:
    parser = build_parser()
    argv = sys.argv[1:] if argv is None else list(argv)
    try:
        args = _apply_config_file(parser, argv)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        stream=sys.stderr, format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except USER_ERRORS as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (LodoharError, OSError, MemoryError) as exc:
        print(f"failed: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # noqa: BLE001
        print(f"failed: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
