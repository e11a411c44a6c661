"""Subject-wise splitting, leave-one-dataset-out fold plans and ratio subsets."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ConfigError, ValidationError
from .pipeline import WindowSet
from .seeding import derive_seed, rng_for

PRETRAIN_FRACTIONS = {"train": 0.9, "val": 0.1}
TARGET_FRACTIONS = {"test": 0.2, "val": 0.1, "train_pool": 0.7}
RATIOS = (0.0, 0.01, 0.05, 0.10, 1.0)


def ratio_key(ratio: float) -> str:
    return format(float(ratio), "g")


@dataclass
class SplitSpec:
    fractions: dict[str, float]
    seed: int = 0

    def __post_init__(self):
        if not self.fractions:
            raise ConfigError("split needs at least one partition")
        for name, frac in self.fractions.items():
            if not 0 < frac <= 1:
                raise ConfigError(f"fraction for {name!r} must be in (0, 1], got {frac}")
        if abs(sum(self.fractions.values()) - 1.0) > 1e-9:
            raise ConfigError(f"fractions must sum to 1, got {sum(self.fractions.values())}")


def _kl(global_p: np.ndarray, hist: np.ndarray) -> float:
    total = hist.sum()
    if total == 0:
        return math.inf
    q = (hist + 0.5) / (total + 0.5 * len(hist))
    mask = global_p > 0
    return float(np.sum(global_p[mask] * np.log(global_p[mask] / q[mask])))


def assign_subjects(subject_counts: dict[str, np.ndarray], fractions: dict[str, float],
                    seed: int) -> dict[str, str]:
    """Greedy subject -> partition assignment.

    Subjects go largest first (equal sizes in seeded random order) to the
    partition with the largest remaining window deficit; ties go to the
    partition whose class histogram moves closest to the overall one (largest
    drop in KL divergence, empty partitions first), then to the
    alphabetically first name. Once the remaining subjects are
    just enough to give every empty partition one subject, only empty
    partitions are eligible.
    """
    names = sorted(fractions)
    if len(subject_counts) < len(names):
        raise ValidationError("subject_split", "at least as many subjects as partitions",
                              f"{len(subject_counts)} subjects for {len(names)} partitions")
    subjects = sorted(subject_counts)
    n_classes = len(next(iter(subject_counts.values())))
    totals = {s: int(subject_counts[s].sum()) for s in subjects}
    grand = np.sum([subject_counts[s] for s in subjects], axis=0).astype(np.float64)
    total = grand.sum()
    global_p = grand / total if total else grand
    tiebreak = rng_for(seed, "subject-order").permutation(len(subjects))
    order = sorted(range(len(subjects)), key=lambda i: (-totals[subjects[i]], tiebreak[i]))

    target = {p: fractions[p] * total for p in names}
    count = {p: 0 for p in names}
    n_assigned = {p: 0 for p in names}
    hist = {p: np.zeros(n_classes) for p in names}
    tol = 1e-9 * max(1.0, total)
    out = {}
    for rank, i in enumerate(order):
        s = subjects[i]
        remaining = len(order) - rank
        empty = [p for p in names if n_assigned[p] == 0]
        candidates = empty if len(empty) >= remaining else names
        best = None
        for p in candidates:
            deficit = target[p] - count[p]
            before = _kl(global_p, hist[p])
            gain = math.inf if math.isinf(before) else before - _kl(global_p, hist[p] + subject_counts[s])
            if best is None:
                best = (p, deficit, gain)
                continue
            _, bd, bgain = best
            if deficit > bd + tol or (abs(deficit - bd) <= tol and gain > bgain):
                best = (p, deficit, gain)
        p = best[0]
        out[s] = p
        count[p] += totals[s]
        n_assigned[p] += 1
        hist[p] += subject_counts[s]
    return out


def subject_split(ws: WindowSet, spec: SplitSpec, indices=None) -> dict[str, np.ndarray]:
    """Partition windows (optionally only ``indices``) so each subject lands in one partition."""
    idx = np.arange(len(ws)) if indices is None else np.asarray(indices, dtype=np.int64)
    keys = ws.subject_keys()[idx]
    labels = ws.labels[idx]
    n_classes = max(len(ws.label_names), int(labels.max()) + 1 if len(labels) else 1)
    counts = {}
    for key in sorted(set(keys.tolist())):
        counts[key] = np.bincount(labels[keys == key], minlength=n_classes)
    assignment = assign_subjects(counts, spec.fractions, spec.seed)
    part_of = np.array([assignment[k] for k in keys.tolist()], dtype=object)
    return {p: np.sort(idx[part_of == p]) for p in sorted(spec.fractions)}


def subsample_pool(labels: np.ndarray, pool, ratio: float, seed: int) -> np.ndarray:
    """Class-stratified window subset of ``pool`` of ``ceil(ratio * n_class)`` per class.

    Every ratio draws from the same per-class permutation, so subsets for
    increasing ratios under one seed are nested.
    """
    pool = np.sort(np.asarray(pool, dtype=np.int64))
    ratio = float(ratio)
    if not 0 <= ratio <= 1:
        raise ConfigError(f"ratio must be in [0, 1], got {ratio}")
    if ratio == 0 or len(pool) == 0:
        return np.zeros(0, dtype=np.int64)
    if ratio == 1:
        return pool.copy()
    chosen = []
    pool_labels = np.asarray(labels)[pool]
    for c in np.unique(pool_labels):
        members = pool[pool_labels == c]
        k = min(len(members), max(1, math.ceil(ratio * len(members) - 1e-9)))
        perm = rng_for(seed, "pool", int(c)).permutation(len(members))
        chosen.append(members[perm[:k]])
    return np.sort(np.concatenate(chosen))


@dataclass
class FoldPlan:
    held_out_dataset_id: str
    seed: int
    pretrain_train: np.ndarray
    pretrain_val: np.ndarray
    target_test: np.ndarray
    target_val: np.ndarray
    target_train_pool: np.ndarray
    ratio_subsets: dict[str, np.ndarray]
    pretrain_classes: list[int]
    target_classes: list[int]
    corpus_digest: str = ""
    windows_path: str | None = None
    extra: dict = field(default_factory=dict)

    @property
    def pretrain(self) -> np.ndarray:
        return np.concatenate([self.pretrain_train, self.pretrain_val])

    @property
    def target(self) -> np.ndarray:
        return np.concatenate([self.target_test, self.target_val, self.target_train_pool])

    def subset(self, ratio: float) -> np.ndarray:
        key = ratio_key(ratio)
        if key not in self.ratio_subsets:
            raise ConfigError(f"fold has no ratio {ratio}; available {sorted(self.ratio_subsets)}")
        return self.ratio_subsets[key]

    def to_json(self) -> dict:
        as_list = lambda a: [int(v) for v in a]  # noqa: E731
        return {
            "held_out_dataset_id": self.held_out_dataset_id,
            "seed": int(self.seed),
            "corpus_digest": self.corpus_digest,
            "windows_path": self.windows_path,
            "pretrain_classes": list(self.pretrain_classes),
            "target_classes": list(self.target_classes),
            "pretrain_train": as_list(self.pretrain_train),
            "pretrain_val": as_list(self.pretrain_val),
            "target_test": as_list(self.target_test),
            "target_val": as_list(self.target_val),
            "target_train_pool": as_list(self.target_train_pool),
            "ratio_subsets": {k: as_list(v) for k, v in sorted(self.ratio_subsets.items(),
                                                              key=lambda kv: float(kv[0]))},
        }

    @classmethod
    def from_json(cls, doc: dict) -> "FoldPlan":
        arr = lambda k: np.asarray(doc[k], dtype=np.int64)  # noqa: E731
        return cls(
            held_out_dataset_id=doc["held_out_dataset_id"],
            seed=int(doc["seed"]),
            pretrain_train=arr("pretrain_train"),
            pretrain_val=arr("pretrain_val"),
            target_test=arr("target_test"),
            target_val=arr("target_val"),
            target_train_pool=arr("target_train_pool"),
            ratio_subsets={k: np.asarray(v, dtype=np.int64) for k, v in doc["ratio_subsets"].items()},
            pretrain_classes=[int(c) for c in doc["pretrain_classes"]],
            target_classes=[int(c) for c in doc["target_classes"]],
            corpus_digest=doc.get("corpus_digest", ""),
            windows_path=doc.get("windows_path"),
        )

    def dumps(self) -> str:
        return json.dumps(self.to_json(), sort_keys=True) + "\n"

    def save(self, path) -> None:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(self.dumps(), encoding="utf-8")

    @classmethod
    def load(cls, path) -> "FoldPlan":
        return cls.from_json(json.loads(Path(path).read_text(encoding="utf-8")))

    def check(self, ws: WindowSet) -> None:
        """Raise :class:`ValidationError` if any fold invariant is broken."""
        who = f"fold[{self.held_out_dataset_id}]"
        ds = ws.datasets
        if np.any(ds[self.pretrain] == self.held_out_dataset_id):
            raise ValidationError(who, "pre-train sets exclude the held-out dataset")
        target = self.target
        held = np.flatnonzero(ds == self.held_out_dataset_id)
        if len(np.unique(target)) != len(target) or not np.array_equal(np.sort(target), held):
            raise ValidationError(who, "target sets partition the held-out dataset")
        keys = ws.subject_keys()
        parts = [set(keys[p].tolist()) for p in (self.target_test, self.target_val,
                                                 self.target_train_pool)]
        if parts[0] & parts[1] or parts[0] & parts[2] or parts[1] & parts[2]:
            raise ValidationError(who, "target subjects are disjoint across test/val/pool")
        pre_tr = set(keys[self.pretrain_train].tolist())
        pre_va = set(keys[self.pretrain_val].tolist())
        if pre_tr & pre_va:
            raise ValidationError(who, "pre-train subjects are disjoint across train/val")
        ordered = sorted(self.ratio_subsets.items(), key=lambda kv: float(kv[0]))
        pool = set(self.target_train_pool.tolist())
        prev = set()
        for key, idx in ordered:
            cur = set(idx.tolist())
            if float(key) == 0 and cur:
                raise ValidationError(who, "ratio 0 subset is empty")
            if not prev <= cur or not cur <= pool:
                raise ValidationError(who, "ratio subsets are nested inside the pool", key)
            prev = cur
            ratio = float(key)
            if 0 < ratio < 1:
                pool_labels = ws.labels[self.target_train_pool]
                sub_labels = ws.labels[idx]
                for c in np.unique(pool_labels):
                    want = math.ceil(ratio * np.sum(pool_labels == c) - 1e-9)
                    if abs(int(np.sum(sub_labels == c)) - want) > 1:
                        raise ValidationError(who, "ratio subsets are class-stratified",
                                              f"ratio {key}, class {c}")


def plan_lodo(ws: WindowSet, held_out: str, seed: int, ratios=RATIOS,
              windows_path: str | None = None, corpus_digest: str | None = None) -> FoldPlan:
    """Materialize the leave-one-dataset-out fold that holds out ``held_out``."""
    datasets = ws.dataset_ids()
    if held_out not in datasets:
        raise ValidationError("plan_lodo", "held-out dataset is in the corpus",
                              f"{held_out!r} not in {datasets}")
    if len(datasets) < 2:
        raise ValidationError("plan_lodo", "corpus has at least two datasets")
    pre_train, pre_val = [], []
    for ds in datasets:
        if ds == held_out:
            continue
        idx = np.flatnonzero(ws.datasets == ds)
        parts = subject_split(ws, SplitSpec(PRETRAIN_FRACTIONS, derive_seed(seed, "pretrain", ds)), idx)
        pre_train.append(parts["train"])
        pre_val.append(parts["val"])
    held = np.flatnonzero(ws.datasets == held_out)
    tparts = subject_split(ws, SplitSpec(TARGET_FRACTIONS, derive_seed(seed, "target", held_out)), held)
    pool = tparts["train_pool"]
    subsets = {ratio_key(r): subsample_pool(ws.labels, pool, r, derive_seed(seed, "ratio", held_out))
               for r in sorted(set(float(r) for r in ratios))}
    pretrain_train = np.sort(np.concatenate(pre_train))
    pretrain_val = np.sort(np.concatenate(pre_val))
    pre_all = np.concatenate([pretrain_train, pretrain_val])
    return FoldPlan(
        held_out_dataset_id=held_out,
        seed=int(seed),
        pretrain_train=pretrain_train,
        pretrain_val=pretrain_val,
        target_test=tparts["test"],
        target_val=tparts["val"],
        target_train_pool=pool,
        ratio_subsets=subsets,
        pretrain_classes=sorted(set(ws.labels[pre_all].tolist())),
        target_classes=sorted(set(ws.labels[held].tolist())),
        corpus_digest=corpus_digest if corpus_digest is not None else ws.digest(),
        windows_path=windows_path,
    )


def plan_all(ws: WindowSet, seed: int, ratios=RATIOS, windows_path=None) -> list[FoldPlan]:
    digest = ws.digest()
    return [plan_lodo(ws, ds, seed, ratios, windows_path, digest) for ds in ws.dataset_ids()]
