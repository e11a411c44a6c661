"""Pre-training, fine-tuning strategies, evaluation and LODO orchestration.

Fine-tuning strategies:

* ``Rd`` - extractor and head randomly initialized, everything trained.
* ``PF`` - extractor loaded from the fold's pre-trained checkpoint and frozen;
  fresh head trained.
* ``PU`` - extractor loaded and trained together with a fresh head. With
  ratio 0 no training happens: the pre-trained model is evaluated directly,
  its outputs read as canonical class ids.
"""

from __future__ import annotations

import csv
import logging
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Sequence

import numpy as np
from threadpoolctl import threadpool_limits

from .errors import ConfigError, TrainingError
from .metrics import accuracy, confusion_matrix, macro_f1, sort_results, strategy_rank
from .nnc import (
    EXTRACTOR,
    ArchSpec,
    OptimizerState,
    ParamTree,
    adam_step,
    conv_ref,
    embed,
    freeze_mask,
    init_params,
    load_checkpoint,
    loss_and_grad,
    predict,
    save_checkpoint,
)
from .pipeline import WindowSet
from .seeding import derive_seed, rng_for
from .splits import SplitSpec, FoldPlan, plan_all, ratio_key, subject_split, RATIOS

log = logging.getLogger(__name__)

STRATEGIES = ("Rd", "PF", "PU")
PRETRAIN_BATCH = 128
FINETUNE_BATCH = 64


def normalize_strategy(name: str) -> str:
    for s in STRATEGIES:
        if s.lower() == str(name).lower():
            return s
    raise ConfigError(f"unknown strategy {name!r}; expected one of {', '.join(STRATEGIES)}")


@dataclass
class RunConfig:
    phase: str = "finetune"
    epochs: int = 200
    batch_size: int | None = None
    lr: float = 0.0005
    strategy: str | None = None
    ratio: float | None = None
    seed: int = 0
    checkpoint_in: str | None = None
    out_dir: str = "runs"
    dtype: str = "float32"
    record_wall_time: bool = True
    debug_hygiene: bool = False
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.phase not in ("pretrain", "finetune"):
            raise ConfigError(f"phase must be 'pretrain' or 'finetune', got {self.phase!r}")
        if self.phase == "finetune":
            if self.strategy is None or self.ratio is None:
                raise ConfigError("fine-tuning needs both a strategy and a ratio")
            self.strategy = normalize_strategy(self.strategy)
            self.ratio = float(self.ratio)
        elif self.strategy is not None or self.ratio is not None:
            raise ConfigError("strategy and ratio only apply to fine-tuning")
        if self.epochs < 0:
            raise ConfigError("epochs must be >= 0")
        if self.batch_size is None:
            self.batch_size = PRETRAIN_BATCH if self.phase == "pretrain" else FINETUNE_BATCH
        if self.batch_size < 1:
            raise ConfigError("batch_size must be >= 1")
        if self.dtype not in ("float32", "float64"):
            raise ConfigError("dtype must be float32 or float64")

    def to_json(self) -> dict:
        return asdict(self)

    def as_pretrain(self) -> "RunConfig":
        bs = self.batch_size if self.phase == "pretrain" else PRETRAIN_BATCH
        return replace(self, phase="pretrain", strategy=None, ratio=None, batch_size=bs)

    def as_finetune(self, strategy: str, ratio: float, seed: int | None = None) -> "RunConfig":
        bs = self.batch_size if self.phase == "finetune" else FINETUNE_BATCH
        return replace(self, phase="finetune", strategy=strategy, ratio=ratio, batch_size=bs,
                       seed=self.seed if seed is None else seed)


@dataclass
class RunResult:
    fold: int
    target_dataset: str
    strategy: str
    ratio: float
    seed: int
    macro_f1: float
    accuracy: float
    best_epoch: int
    epochs_run: int
    wall_time_s: float


@dataclass
class Model:
    """Architecture, parameters, and the canonical class id of every head output."""

    arch: ArchSpec
    params: ParamTree
    classes: list[int]


# -- training ----------------------------------------------------------------


@dataclass
class TrainOutcome:
    params: ParamTree
    best_epoch: int
    epochs_run: int
    best_val_accuracy: float
    history: list = field(default_factory=list)


def train(arch: ArchSpec, params: ParamTree, X, y, epochs: int, batch_size: int, lr: float,
          seed: int, mask=None, val=None, batch_check=None) -> TrainOutcome:
    """Mini-batch Adam, one validation pass per epoch, best-epoch weights kept.

    Each epoch is one seeded shuffled pass; the last short batch is kept.
    Validation ties keep the earlier epoch. Without a validation set the
    final epoch wins.
    """
    n = len(X)
    state = OptimizerState.for_params(params, lr=lr)
    best = params.copy()
    best_epoch, best_acc = 0, -1.0
    history = []
    for epoch in range(1, epochs + 1):
        order = rng_for(seed, "shuffle", epoch).permutation(n)
        losses = []
        for s in range(0, n, batch_size):
            idx = order[s:s + batch_size]
            if batch_check is not None:
                batch_check(idx)
            loss, grads = loss_and_grad(arch, params, X[idx], y[idx],
                                        dropout_seed=derive_seed(seed, "dropout", epoch, s))
            if not np.isfinite(loss):
                raise TrainingError(f"non-finite loss {loss} at epoch {epoch}, batch {s // batch_size}"
                                    f" (lr={lr}, batch_size={batch_size})")
            adam_step(params, grads, state, mask)
            losses.append(loss)
        if val is not None and len(val[0]):
            acc = float(np.mean(predict(arch, params, val[0]) == val[1]))
        else:
            acc = float(epoch)
        history.append({"epoch": epoch, "loss": float(np.mean(losses)) if losses else 0.0,
                        "val_accuracy": acc if val is not None else None})
        if acc > best_acc:
            best_acc, best_epoch, best = acc, epoch, params.copy()
    return TrainOutcome(best if epochs else params, best_epoch, epochs,
                        best_acc if val is not None else float("nan"), history)


def _dtype(config: RunConfig):
    return np.float64 if config.dtype == "float64" else np.float32


def _local_labels(labels, classes):
    lut = {c: i for i, c in enumerate(classes)}
    return np.array([lut[int(v)] for v in labels], dtype=np.int64)


# -- phases ------------------------------------------------------------------


def checkpoint_path(plan: FoldPlan, config: RunConfig) -> Path:
    return Path(config.out_dir) / f"pretrain_{plan.held_out_dataset_id}.lodc"


def pretrain(plan: FoldPlan, ws: WindowSet, config: RunConfig, path=None) -> Path:
    """Train the full network on the fold's pre-training corpus and save the best checkpoint."""
    config = config if config.phase == "pretrain" else config.as_pretrain()
    if len(plan.pretrain_train) == 0:
        raise ConfigError(f"fold {plan.held_out_dataset_id}: empty pre-training corpus")
    classes = list(plan.pretrain_classes)
    arch = conv_ref(len(classes), ws.X.shape[1:])
    dtype = _dtype(config)
    params = init_params(arch, derive_seed(config.seed, "pretrain-init", plan.held_out_dataset_id), dtype)
    X = ws.X[plan.pretrain_train].astype(dtype)
    y = _local_labels(ws.labels[plan.pretrain_train], classes)
    val_idx = plan.pretrain_val
    val = (ws.X[val_idx].astype(dtype), _local_labels(ws.labels[val_idx], classes))

    check = None
    if config.debug_hygiene:
        train_ds = ws.datasets[plan.pretrain_train]

        def check(idx):
            if np.any(train_ds[idx] == plan.held_out_dataset_id):
                raise TrainingError(f"held-out dataset {plan.held_out_dataset_id!r} window "
                                    "in a pre-training batch")

    out = train(arch, params, X, y, config.epochs, config.batch_size, config.lr,
                derive_seed(config.seed, "pretrain", plan.held_out_dataset_id), val=val,
                batch_check=check)
    meta = {
        "phase": "pretrain",
        "held_out_dataset_id": plan.held_out_dataset_id,
        "classes": classes,
        "label_names": [ws.label_names[c] for c in classes],
        "label_space_digest": ws.label_space_digest,
        "stats_digest": config.metadata.get("stats_digest"),
        "corpus_digest": plan.corpus_digest,
        "seed": config.seed,
        "epoch": out.best_epoch,
        "epochs_run": out.epochs_run,
        "val_accuracy": out.best_val_accuracy,
    }
    path = Path(path) if path is not None else checkpoint_path(plan, config)
    save_checkpoint(path, arch, out.params, meta)
    return path


def load_model(path) -> Model:
    arch, params, meta = load_checkpoint(path)
    classes = meta.get("classes") or list(range(arch.n_classes or 0))
    return Model(arch, params, [int(c) for c in classes])


def evaluate(model: Model, ws: WindowSet, indices):
    """``(macro_f1, accuracy, confusion, class_ids)`` on ``indices``, in canonical label space.

    Predictions are the arg-max head output (ties to the lowest index) read
    as canonical ids; the confusion matrix spans the union of model classes
    and the true labels present.
    """
    indices = np.asarray(indices, dtype=np.int64)
    if len(indices) == 0:
        raise ConfigError("cannot evaluate on an empty window set")
    X = ws.X[indices].astype(model.params.dtype)
    pred = np.asarray(model.classes)[predict(model.arch, model.params, X)]
    true = ws.labels[indices]
    class_ids = sorted(set(model.classes) | set(true.tolist()))
    lut = {c: i for i, c in enumerate(class_ids)}
    cm = confusion_matrix([lut[int(v)] for v in true], [lut[int(v)] for v in pred], len(class_ids))
    return macro_f1(cm), accuracy(cm), cm, class_ids


def finetune(plan: FoldPlan, ws: WindowSet, strategy: str, ratio: float, config: RunConfig,
             checkpoint=None, fold: int = 0) -> tuple[Model, RunResult]:
    strategy = normalize_strategy(strategy)
    ratio = float(ratio)
    config = config.as_finetune(strategy, ratio, config.seed)
    t0 = time.perf_counter()
    checkpoint = checkpoint if checkpoint is not None else config.checkpoint_in
    if strategy in ("PF", "PU") and checkpoint is None:
        raise ConfigError(f"strategy {strategy} needs the fold's pre-trained checkpoint")
    if ratio == 0 and strategy != "PU":
        raise ConfigError(f"ratio 0 is only defined for PU (no data to train {strategy} on)")
    dtype = _dtype(config)

    if ratio == 0:
        model = load_model(checkpoint)
        model.params = model.params.astype(dtype)
        f1, acc, _, _ = evaluate(model, ws, plan.target_test)
        return model, _result(plan, fold, strategy, ratio, config, f1, acc, 0, 0, t0)

    subset = plan.subset(ratio)
    if len(subset) == 0:
        raise ConfigError(f"ratio {ratio} subset of fold {plan.held_out_dataset_id} is empty")
    classes = list(plan.target_classes)
    seed = derive_seed(config.seed, "finetune", plan.held_out_dataset_id, strategy, ratio_key(ratio))
    # same initial weights at every ratio, so ratios differ only in their data
    init_seed = derive_seed(config.seed, "finetune-init", plan.held_out_dataset_id, strategy)
    if strategy == "Rd":
        arch = conv_ref(len(classes), ws.X.shape[1:])
        params = init_params(arch, init_seed, dtype)
        mask = None
    else:
        src_arch, src_params, _ = load_checkpoint(checkpoint)
        arch = src_arch.with_head(len(classes))
        params = init_params(arch, init_seed, dtype)
        for name in params.names(EXTRACTOR):
            if src_params[name].shape != params[name].shape:
                raise ConfigError(f"checkpoint array {name!r} has shape {src_params[name].shape}, "
                                  f"expected {params[name].shape}")
            params.arrays[name] = src_params[name].astype(dtype)
        mask = freeze_mask(params, EXTRACTOR) if strategy == "PF" else None
    X = ws.X[subset].astype(dtype)
    y = _local_labels(ws.labels[subset], classes)
    val = (ws.X[plan.target_val].astype(dtype), _local_labels(ws.labels[plan.target_val], classes))
    out = train(arch, params, X, y, config.epochs, config.batch_size, config.lr, seed,
                mask=mask, val=val)
    model = Model(arch, out.params, classes)
    f1, acc, _, _ = evaluate(model, ws, plan.target_test)
    return model, _result(plan, fold, strategy, ratio, config, f1, acc, out.best_epoch,
                          out.epochs_run, t0)


def _result(plan, fold, strategy, ratio, config, f1, acc, best_epoch, epochs_run, t0) -> RunResult:
    wall = time.perf_counter() - t0 if config.record_wall_time else 0.0
    return RunResult(fold, plan.held_out_dataset_id, strategy, ratio, config.seed, float(f1),
                     float(acc), int(best_epoch), int(epochs_run), float(wall))


# -- LODO --------------------------------------------------------------------

_WORKER_WS: WindowSet | None = None


def _init_worker(ws):
    global _WORKER_WS
    _WORKER_WS = ws
    threadpool_limits(limits=1)


def _pretrain_task(args):
    plan, config = args
    return str(pretrain(plan, _WORKER_WS, config))


def _finetune_task(args):
    plan, strategy, ratio, seed, config, ckpt, fold = args
    _, result = finetune(plan, _WORKER_WS, strategy, ratio, replace(config, seed=seed), ckpt, fold)
    return result


def _map(fn, tasks, ws, jobs):
    if jobs <= 1:
        _init_worker(ws)
        return [fn(t) for t in tasks]
    with ProcessPoolExecutor(max_workers=jobs, initializer=_init_worker, initargs=(ws,)) as ex:
        return list(ex.map(fn, tasks))


def valid_combos(strategies, ratios, seeds):
    """(strategy, ratio, seed) triples in report order, without (Rd|PF, 0)."""
    out = []
    for s in sorted({normalize_strategy(s) for s in strategies}, key=strategy_rank):
        for r in sorted({float(r) for r in ratios}):
            if r == 0 and s != "PU":
                continue
            for seed in sorted({int(x) for x in seeds}):
                out.append((s, r, seed))
    return out


def run_lodo(ws: WindowSet, ratios=(0.0, 0.01, 0.05, 0.1, 1.0), strategies=STRATEGIES,
             seeds=(0,), config: RunConfig | None = None, jobs: int = 1,
             plans: Sequence[FoldPlan] | None = None) -> list[RunResult]:
    """Every dataset held out once: one pre-training, then every valid fine-tuning run."""
    config = config or RunConfig(phase="pretrain")
    if len(ws.dataset_ids()) < 2:
        raise ConfigError("LODO needs at least two datasets")
    plan_ratios = sorted(set(RATIOS) | {float(r) for r in ratios})
    plans = list(plans) if plans is not None else plan_all(ws, config.seed, plan_ratios)
    combos = valid_combos(strategies, ratios, seeds)
    need_ckpt = any(s in ("PF", "PU") for s, _, _ in combos)
    pre_cfg = config.as_pretrain()
    ckpts = {}
    if need_ckpt:
        _map(_pretrain_task, [(p, pre_cfg) for p in plans], ws, jobs)
        ckpts = {p.held_out_dataset_id: str(checkpoint_path(p, pre_cfg)) for p in plans}
    tasks = []
    for fold, plan in enumerate(plans):
        for strategy, ratio, seed in combos:
            ck = ckpts.get(plan.held_out_dataset_id) if strategy != "Rd" else None
            tasks.append((plan, strategy, ratio, seed, config.as_finetune(strategy, ratio, seed),
                          ck, fold))
    return sort_results(_map(_finetune_task, tasks, ws, jobs))


def write_results(results: Sequence[RunResult], path) -> None:
    from .metrics import write_results_csv

    Path(path).parent.mkdir(parents=True, exist_ok=True)
    write_results_csv(results, path)


# -- cross-dataset matrix ----------------------------------------------------


def cross_matrix(ws: WindowSet, config: RunConfig, seed: int | None = None):
    """Macro F1 of a model trained on 70% of dataset i and tested on 30% of dataset j.

    Returns ``(matrix, dataset_ids)``. Each row's model only knows the
    classes present in its own training split; classes it never saw score 0.
    """
    seed = config.seed if seed is None else seed
    datasets = ws.dataset_ids()
    splits = {}
    for ds in datasets:
        idx = np.flatnonzero(ws.datasets == ds)
        splits[ds] = subject_split(ws, SplitSpec({"train": 0.7, "test": 0.3},
                                                 derive_seed(seed, "xmatrix", ds)), idx)
    dtype = _dtype(config)
    M = np.zeros((len(datasets), len(datasets)))
    bs = config.batch_size if config.phase == "finetune" else FINETUNE_BATCH
    for i, src in enumerate(datasets):
        tr = splits[src]["train"]
        classes = sorted(set(ws.labels[tr].tolist()))
        arch = conv_ref(len(classes), ws.X.shape[1:])
        params = init_params(arch, derive_seed(seed, "xmatrix-init", src), dtype)
        out = train(arch, params, ws.X[tr].astype(dtype), _local_labels(ws.labels[tr], classes),
                    config.epochs, bs, config.lr, derive_seed(seed, "xmatrix-train", src))
        model = Model(arch, out.params, classes)
        for j, dst in enumerate(datasets):
            M[i, j] = evaluate(model, ws, splits[dst]["test"])[0]
    return M, datasets


def write_matrix(M, datasets, path) -> None:
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["train\\test"] + list(datasets))
        for ds, row in zip(datasets, M):
            w.writerow([ds] + [f"{v:.6f}" for v in row])


# -- embeddings --------------------------------------------------------------


def export_embeddings(model: Model, ws: WindowSet, indices=None, path=None) -> np.ndarray:
    """Extractor output per window; written as CSV when ``path`` is given."""
    indices = np.arange(len(ws)) if indices is None else np.asarray(indices, dtype=np.int64)
    feats = embed(model.arch, model.params, ws.X[indices].astype(model.params.dtype))
    if path is not None:
        Path(path).parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["window_id", "dataset_id", "subject_id", "label"]
                       + [f"f{k}" for k in range(feats.shape[1])])
            for i, row in zip(indices.tolist(), feats):
                w.writerow([i, ws.datasets[i], ws.subjects[i], ws.label_names[ws.labels[i]]]
                           + [repr(float(v)) for v in row])
    return feats


def read_embeddings(path) -> tuple[np.ndarray, np.ndarray]:
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))[1:]
    ids = np.array([int(r[0]) for r in rows], dtype=np.int64)
    feats = np.array([[float(v) for v in r[4:]] for r in rows])
    return ids, feats
