"""Dataset combination: resample, per-dataset z-normalization, windowing, label union.

The order mirrors how heterogeneous HAR corpora are merged in practice: keep
one body position, bring every dataset to a common rate, standardize each
dataset on its own statistics, cut fixed-length windows inside single-activity
segments, then map every dataset's raw activity names onto one vocabulary.
"""

from __future__ import annotations

import hashlib
import json
import math
import struct
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .canon import CHANNELS, Recording, Segment, filter_position
from .errors import ConfigError, ParseError, UnmappedLabelError, UnsupportedOperation, ValidationError

N_CHANNELS = len(CHANNELS)


# -- configuration -----------------------------------------------------------


@dataclass
class PipelineConfig:
    target_rate_hz: float = 50.0
    window_length: int = 128
    overlap_fraction: float = 0.5
    position_filter: str = "waist"
    std_epsilon: float = 1e-8
    # "dataset": stats over each whole dataset (default); "strict": stats only
    # from the subjects passed to prepare(stats_subjects=...)
    normalization: str = "dataset"

    def __post_init__(self):
        if self.window_length < 2:
            raise ConfigError(f"window_length must be >= 2, got {self.window_length}")
        if not self.target_rate_hz > 0:
            raise ConfigError(f"target_rate_hz must be > 0, got {self.target_rate_hz}")
        if not 0 <= self.overlap_fraction < 1:
            raise ConfigError(f"overlap_fraction must be in [0, 1), got {self.overlap_fraction}")
        if self.normalization not in ("dataset", "strict"):
            raise ConfigError(f"normalization must be 'dataset' or 'strict'")

    @property
    def stride(self) -> int:
        return window_stride(self.window_length, self.overlap_fraction)

    def to_json(self) -> dict:
        return asdict(self)

    @classmethod
    def from_json(cls, doc: dict) -> "PipelineConfig":
        unknown = set(doc) - set(cls.__dataclass_fields__)
        if unknown:
            raise ConfigError(f"unknown pipeline config keys: {sorted(unknown)}")
        return cls(**doc)


def window_stride(window_length: int, overlap_fraction: float) -> int:
    # half-up rounding; round(L*(1-f)) for L=128, f=0.5 is exactly 64
    return max(1, int(math.floor(window_length * (1.0 - overlap_fraction) + 0.5)))


# -- label space -------------------------------------------------------------

DROP = None
ANY_DATASET = "*"

DEFAULT_CANONICAL = (
    "Downstairs", "Upstairs", "Running", "Sitting", "Standing",
    "Walking", "Lying", "Cycling", "Nordic Walking", "Jumping",
)
DEFAULT_ALIASES = {
    "biking": "Cycling",
    "jogging": "Running",
    "rope jumping": "Jumping",
    "nordic walking": "Nordic Walking",
    "ascending stairs": "Upstairs",
    "descending stairs": "Downstairs",
}
DEFAULT_DROPS = ("car step in", "car step out", "vacuum cleaning", "ironing")


def _fold(label: str) -> str:
    return " ".join(str(label).split()).casefold()


@dataclass
class LabelSpace:
    """Canonical activity vocabulary plus per-dataset raw-label rules.

    ``rules`` maps ``(dataset_id, raw_label)`` to a canonical label, or to
    ``None`` for "drop". Raw labels are compared case-folded;
    ``dataset_id == "*"`` applies to every dataset unless a dataset-specific
    rule exists.
    """

    canonical_labels: tuple[str, ...]
    rules: dict[tuple[str, str], str | None] = field(default_factory=dict)

    def __post_init__(self):
        self.canonical_labels = tuple(self.canonical_labels)
        if len(set(self.canonical_labels)) != len(self.canonical_labels):
            raise ValidationError("LabelSpace", "canonical labels are unique")
        self.rules = {(ds, _fold(raw)): tgt for (ds, raw), tgt in self.rules.items()}
        for (ds, raw), tgt in self.rules.items():
            if tgt is not None and tgt not in self.canonical_labels:
                raise ValidationError("LabelSpace", "every MapTo target is canonical",
                                      f"({ds!r}, {raw!r}) -> {tgt!r}")

    @classmethod
    def default(cls) -> "LabelSpace":
        rules = {(ANY_DATASET, lab): lab for lab in DEFAULT_CANONICAL}
        rules.update({(ANY_DATASET, raw): tgt for raw, tgt in DEFAULT_ALIASES.items()})
        rules.update({(ANY_DATASET, raw): DROP for raw in DEFAULT_DROPS})
        return cls(DEFAULT_CANONICAL, rules)

    @classmethod
    def identity(cls, labels: Iterable[str]) -> "LabelSpace":
        labels = tuple(dict.fromkeys(labels))
        return cls(labels, {(ANY_DATASET, lab): lab for lab in labels})

    def lookup(self, dataset_id: str, raw_label: str):
        """Return ``(found, target)``; target is ``None`` for a drop rule."""
        key = _fold(raw_label)
        for ds in (dataset_id, ANY_DATASET):
            if (ds, key) in self.rules:
                return True, self.rules[(ds, key)]
        return False, None

    def index(self, label: str) -> int:
        return self.canonical_labels.index(label)

    def map_labels(self, dataset_id: str, raw_labels: Iterable[str]) -> set[str]:
        """Canonical labels reached from ``raw_labels`` (drops excluded)."""
        out = set()
        missing = []
        for raw in raw_labels:
            found, tgt = self.lookup(dataset_id, raw)
            if not found:
                missing.append((dataset_id, raw))
            elif tgt is not None:
                out.add(tgt)
        if missing:
            raise UnmappedLabelError(missing)
        return out

    def to_json(self) -> dict:
        rules = []
        for (ds, raw), tgt in sorted(self.rules.items(), key=lambda kv: kv[0]):
            rules.append({"dataset": ds, "raw": raw, "drop": True} if tgt is None
                         else {"dataset": ds, "raw": raw, "map_to": tgt})
        return {"canonical_labels": list(self.canonical_labels), "rules": rules}

    @classmethod
    def from_json(cls, doc: dict) -> "LabelSpace":
        rules = {}
        for r in doc.get("rules", []):
            rules[(r.get("dataset", ANY_DATASET), r["raw"])] = None if r.get("drop") else r["map_to"]
        return cls(tuple(doc["canonical_labels"]), rules)

    def digest(self) -> str:
        return _digest(self.to_json())


def _digest(doc) -> str:
    blob = json.dumps(doc, sort_keys=True, separators=(",", ":"), ensure_ascii=False)
    return hashlib.sha256(blob.encode("utf-8")).hexdigest()


# -- resampling --------------------------------------------------------------


def _smooth(x: np.ndarray, width: int) -> np.ndarray:
    """Centered moving average along the last axis, zero phase.

    Odd widths average ``width`` samples; even widths use ``width + 1`` taps
    with half weight at both ends so the filter stays centered. Edges are
    padded by point reflection about the end samples, which keeps constants
    and straight lines exact.
    """
    if width <= 1:
        return x
    if width % 2:
        taps = np.full(width, 1.0 / width)
    else:
        taps = np.ones(width + 1)
        taps[0] = taps[-1] = 0.5
        taps /= width
    h = len(taps) // 2
    if x.shape[-1] == 1:
        return x.copy()
    padded = np.pad(x, ((0, 0), (h, h)), mode="reflect", reflect_type="odd")
    out = np.empty_like(x)
    for c in range(x.shape[0]):
        out[c] = np.convolve(padded[c], taps, mode="valid")
    return out


def resample(rec: Recording, target_rate_hz: float) -> Recording:
    """Downsample ``rec`` to ``target_rate_hz``.

    Ratio ``r = source/target``: identity when ``r == 1``; a centered moving
    average of width ``round(r)`` first when ``r >= 2``; then linear
    interpolation onto the uniform target grid. Segment starts are floored
    and ends ceiled onto the new grid (starts are then clipped to the previous
    end so segments stay disjoint; empty segments vanish).
    """
    src = float(rec.sample_rate_hz)
    target = float(target_rate_hz)
    if not target > 0:
        raise ConfigError(f"target rate must be > 0, got {target_rate_hz}")
    if target > src:
        raise UnsupportedOperation(
            f"{rec.name}: upsampling {src:g} Hz -> {target:g} Hz is not supported")
    if target == src:
        return rec
    ratio = src / target
    n = rec.n_samples
    x = rec.channels.astype(np.float64)
    if ratio >= 2:
        x = _smooth(x, int(math.floor(ratio + 0.5)))
    n_out = int(math.floor((n - 1) / ratio + 1e-9)) + 1
    pos = np.arange(n_out, dtype=np.float64) * ratio
    grid = np.arange(n, dtype=np.float64)
    out = np.stack([np.interp(pos, grid, x[c]) for c in range(x.shape[0])])

    segments = []
    prev_end = 0
    for seg in rec.segments:
        start = int(math.floor(seg.start / ratio + 1e-9))
        end = min(int(math.ceil(seg.end / ratio - 1e-9)), n_out)
        start = max(start, prev_end)
        if end > start:
            segments.append(Segment(start, end, seg.label))
            prev_end = end
    return rec.replace(sample_rate_hz=target, channels=out.astype(np.float32),
                       segments=tuple(segments))


# -- normalization -----------------------------------------------------------


@dataclass
class ChannelStats:
    """Per-channel population mean/std of one dataset."""

    dataset_id: str
    mean: np.ndarray
    std: np.ndarray
    count: int = 0
    std_epsilon: float = 1e-8

    @property
    def degenerate(self) -> np.ndarray:
        """Channels whose std is replaced by the epsilon floor."""
        return self.std < self.std_epsilon

    def scale(self) -> np.ndarray:
        return np.maximum(self.std, self.std_epsilon)

    def to_json(self) -> dict:
        return {
            "dataset_id": self.dataset_id,
            "mean": [float(v) for v in self.mean],
            "std": [float(v) for v in self.std],
            "count": int(self.count),
            "std_epsilon": self.std_epsilon,
            "degenerate": [bool(v) for v in self.degenerate],
        }

    @classmethod
    def from_json(cls, doc: dict) -> "ChannelStats":
        return cls(doc["dataset_id"], np.asarray(doc["mean"], dtype=np.float64),
                   np.asarray(doc["std"], dtype=np.float64), int(doc.get("count", 0)),
                   float(doc.get("std_epsilon", 1e-8)))


def _partial(x: np.ndarray):
    # (count, mean, M2) for a (6, n) block; merged with Chan's pairwise rule
    n = x.shape[1]
    mean = x.mean(axis=1)
    m2 = ((x - mean[:, None]) ** 2).sum(axis=1)
    return n, mean, m2


def _merge(a, b):
    na, ma, m2a = a
    nb, mb, m2b = b
    n = na + nb
    if n == 0:
        return a
    delta = mb - ma
    mean = ma + delta * (nb / n)
    m2 = m2a + m2b + delta * delta * (na * nb / n)
    return n, mean, m2


def compute_stats(recordings: Sequence[Recording], std_epsilon: float = 1e-8,
                  dataset_id: str | None = None) -> ChannelStats:
    """Pooled per-channel mean and population std over all samples of one dataset."""
    recordings = list(recordings)
    if dataset_id is None:
        ids = {r.dataset_id for r in recordings}
        if len(ids) > 1:
            raise ValidationError("compute_stats", "recordings come from one dataset", str(sorted(ids)))
        dataset_id = ids.pop() if ids else "?"
    parts = [_partial(r.channels.astype(np.float64)) for r in recordings if r.n_samples]
    if not parts:
        raise ValidationError(dataset_id, "dataset has at least one sample")
    # fixed pairwise tree so the result does not depend on how work was split
    while len(parts) > 1:
        parts = [_merge(parts[i], parts[i + 1]) if i + 1 < len(parts) else parts[i]
                 for i in range(0, len(parts), 2)]
    n, mean, m2 = parts[0]
    std = np.sqrt(np.maximum(m2 / n, 0.0))
    return ChannelStats(dataset_id, mean, std, n, std_epsilon)


def apply_znorm(rec: Recording, stats: ChannelStats) -> Recording:
    if rec.dataset_id != stats.dataset_id:
        raise ValidationError(rec.name, "stats belong to the recording's dataset",
                              f"stats for {stats.dataset_id!r}")
    x = (rec.channels.astype(np.float64) - stats.mean[:, None]) / stats.scale()[:, None]
    return rec.replace(channels=x.astype(np.float32))


# -- windows -----------------------------------------------------------------


@dataclass(eq=False)
class WindowSet:
    """Fixed-shape labeled windows with provenance.

    ``labels`` index into ``label_names``. Before canonicalization the names
    are the raw activity strings; afterwards they are the label space's
    canonical list and ``label_space_digest`` is set.
    """

    X: np.ndarray                      # (n, L, C) float32
    labels: np.ndarray                 # (n,) int64
    label_names: tuple[str, ...]
    subjects: np.ndarray               # (n,) str
    datasets: np.ndarray               # (n,) str
    starts: np.ndarray | None = None   # (n,) int64 offset within the source recording
    label_space_digest: str | None = None

    def __post_init__(self):
        self.X = np.asarray(self.X, dtype=np.float32)
        if self.X.ndim != 3:
            self.X = self.X.reshape(len(self.X), -1, N_CHANNELS)
        self.labels = np.asarray(self.labels, dtype=np.int64).reshape(-1)
        self.subjects = np.asarray(self.subjects, dtype=str).reshape(-1)
        self.datasets = np.asarray(self.datasets, dtype=str).reshape(-1)
        self.label_names = tuple(self.label_names)
        if self.starts is not None:
            self.starts = np.asarray(self.starts, dtype=np.int64).reshape(-1)
        n = len(self.X)
        for name in ("labels", "subjects", "datasets"):
            if len(getattr(self, name)) != n:
                raise ValidationError("WindowSet", "parallel arrays have equal length", name)

    def __len__(self):
        return len(self.X)

    @property
    def window_length(self) -> int:
        return int(self.X.shape[1])

    @property
    def channel_count(self) -> int:
        return int(self.X.shape[2])

    @classmethod
    def empty(cls, window_length=128, label_names=()) -> "WindowSet":
        return cls(np.zeros((0, window_length, N_CHANNELS), np.float32), np.zeros(0, np.int64),
                   label_names, np.zeros(0, str), np.zeros(0, str), np.zeros(0, np.int64))

    def subset(self, idx) -> "WindowSet":
        idx = np.asarray(idx, dtype=np.int64)
        return WindowSet(self.X[idx], self.labels[idx], self.label_names, self.subjects[idx],
                         self.datasets[idx], None if self.starts is None else self.starts[idx],
                         self.label_space_digest)

    def dataset_ids(self) -> list[str]:
        return sorted(set(self.datasets.tolist()))

    def subject_keys(self) -> np.ndarray:
        """``dataset/subject`` strings; subject ids are only unique per dataset."""
        return np.char.add(np.char.add(self.datasets, "/"), self.subjects)

    def validate(self) -> "WindowSet":
        if self.X.shape[1:] != (self.window_length, N_CHANNELS):
            raise ValidationError("WindowSet", "windows are L x 6", str(self.X.shape))
        if not np.isfinite(self.X).all():
            raise ValidationError("WindowSet", "finite window values")
        if len(self.labels) and (self.labels.min() < 0 or self.labels.max() >= len(self.label_names)):
            raise ValidationError("WindowSet", "label ids index the label list")
        return self

    def digest(self) -> str:
        h = hashlib.sha256()
        h.update(encode_windows(self))
        return h.hexdigest()


def window(rec: Recording, window_length: int = 128, overlap_fraction: float = 0.5) -> WindowSet:
    """Cut windows inside each single-activity segment of ``rec``.

    A segment of ``M`` samples yields ``(M - L) // S + 1`` windows at offsets
    ``start + i*S`` (none if ``M < L``), with stride ``S = round(L*(1-f))``.
    """
    if not 0 <= overlap_fraction < 1:
        raise ConfigError(f"overlap_fraction must be in [0, 1), got {overlap_fraction}")
    L = int(window_length)
    S = window_stride(L, overlap_fraction)
    names: dict[str, int] = {}
    offsets, labels = [], []
    for seg in rec.segments:
        m = seg.end - seg.start
        if m < L:
            continue
        k = (m - L) // S + 1
        lab = names.setdefault(seg.label, len(names))
        offsets.extend(seg.start + S * np.arange(k))
        labels.extend([lab] * k)
    offsets = np.asarray(offsets, dtype=np.int64)
    data = np.ascontiguousarray(rec.channels.T)  # (N, 6)
    if len(offsets):
        X = data[offsets[:, None] + np.arange(L)[None, :]]
    else:
        X = np.zeros((0, L, N_CHANNELS), np.float32)
    n = len(offsets)
    return WindowSet(X, labels, tuple(names), np.full(n, rec.subject_id),
                     np.full(n, rec.dataset_id), offsets)


def canonicalize(ws: WindowSet, label_space: LabelSpace) -> WindowSet:
    """Relabel raw windows to canonical ids, removing windows with drop rules."""
    ds_of_label: dict[int, set[str]] = {}
    for lab, ds in set(zip(ws.labels.tolist(), ws.datasets.tolist())):
        ds_of_label.setdefault(lab, set()).add(ds)
    missing = []
    table = {}
    for lab, dss in ds_of_label.items():
        raw = ws.label_names[lab]
        for ds in dss:
            found, tgt = label_space.lookup(ds, raw)
            if not found:
                missing.append((ds, raw))
            else:
                table[(lab, ds)] = -1 if tgt is None else label_space.index(tgt)
    if missing:
        raise UnmappedLabelError(missing)
    new = np.array([table[(l, d)] for l, d in zip(ws.labels.tolist(), ws.datasets.tolist())],
                   dtype=np.int64)
    keep = np.flatnonzero(new >= 0)
    out = ws.subset(keep)
    out.labels = new[keep]
    out.label_names = label_space.canonical_labels
    out.label_space_digest = label_space.digest()
    return out


@dataclass
class CombineSummary:
    subjects: int
    labels: int
    windows: int


def combine(sets: Sequence[WindowSet]) -> tuple[WindowSet, CombineSummary]:
    """Concatenate canonicalized window sets that share one label space and shape."""
    sets = [s for s in sets]
    if not sets:
        return WindowSet.empty(), CombineSummary(0, 0, 0)
    first = sets[0]
    for s in sets[1:]:
        if s.X.shape[1:] != first.X.shape[1:]:
            raise ValidationError("combine", "inputs share one window shape",
                                  f"{s.X.shape[1:]} vs {first.X.shape[1:]}")
        if s.label_names != first.label_names or s.label_space_digest != first.label_space_digest:
            raise ValidationError("combine", "inputs share one label space")
    starts = None
    if all(s.starts is not None for s in sets):
        starts = np.concatenate([s.starts for s in sets])
    out = WindowSet(
        np.concatenate([s.X for s in sets]),
        np.concatenate([s.labels for s in sets]),
        first.label_names,
        np.concatenate([s.subjects for s in sets]),
        np.concatenate([s.datasets for s in sets]),
        starts,
        first.label_space_digest,
    )
    summary = CombineSummary(
        subjects=len(set(out.subject_keys().tolist())),
        labels=len(set(out.labels.tolist())),
        windows=len(out),
    )
    return out, summary


def prepare(corpus, config: PipelineConfig | None = None, label_space: LabelSpace | None = None,
            stats_subjects: dict[str, set[str]] | None = None):
    """Run the whole combination pipeline over a canon corpus.

    Returns ``(windows, stats_by_dataset, summary)``.
    """
    config = config or PipelineConfig()
    label_space = label_space or LabelSpace.default()
    if config.normalization == "strict" and stats_subjects is None:
        raise ConfigError("strict normalization needs the subjects to compute stats from")
    sets = []
    all_stats = {}
    for manifest, recordings in corpus:
        recs = filter_position(recordings, config.position_filter)
        if not recs:
            continue
        label_space.map_labels(manifest.dataset_id,
                               set().union(*(r.labels() for r in recs)))
        recs = [resample(r, config.target_rate_hz) for r in recs]
        basis = recs
        if config.normalization == "strict":
            keep = stats_subjects.get(manifest.dataset_id, set())
            basis = [r for r in recs if r.subject_id in keep]
        stats = compute_stats(basis, config.std_epsilon, dataset_id=manifest.dataset_id)
        all_stats[manifest.dataset_id] = stats
        for r in recs:
            ws = window(apply_znorm(r, stats), config.window_length, config.overlap_fraction)
            sets.append(canonicalize(ws, label_space))
    if not sets:
        return WindowSet.empty(config.window_length, label_space.canonical_labels), all_stats, \
            CombineSummary(0, 0, 0)
    merged, summary = combine(sets)
    return merged, all_stats, summary


def stats_digest(stats: dict[str, ChannelStats]) -> str:
    return _digest({k: v.to_json() for k, v in sorted(stats.items())})


# -- window file -------------------------------------------------------------

WINDOWS_MAGIC = b"HARW"
WINDOWS_VERSION = 1
_WPREFIX = struct.Struct("<4sII")


def encode_windows(ws: WindowSet) -> bytes:
    """Binary layout: prefix | JSON header | float32 X | u16 labels | u32 subject/dataset/start."""
    strings = sorted(set(ws.subjects.tolist()) | set(ws.datasets.tolist()))
    lookup = {s: i for i, s in enumerate(strings)}
    n = len(ws)
    if len(ws.label_names) > 65535:
        raise ValidationError("WindowSet", "label ids fit in u16")
    header = {
        "count": n,
        "window_length": ws.window_length,
        "channel_count": ws.channel_count,
        "label_names": list(ws.label_names),
        "label_space_digest": ws.label_space_digest,
        "strings": strings,
        "has_starts": ws.starts is not None,
    }
    hbytes = json.dumps(header, sort_keys=True, ensure_ascii=False).encode("utf-8")
    prov = np.stack([
        np.fromiter((lookup[s] for s in ws.subjects.tolist()), np.uint32, n),
        np.fromiter((lookup[s] for s in ws.datasets.tolist()), np.uint32, n),
    ], axis=1) if n else np.zeros((0, 2), np.uint32)
    parts = [
        _WPREFIX.pack(WINDOWS_MAGIC, WINDOWS_VERSION, len(hbytes)), hbytes,
        np.ascontiguousarray(ws.X, dtype="<f4").tobytes(),
        ws.labels.astype("<u2").tobytes(),
        prov.astype("<u4").tobytes(),
    ]
    if ws.starts is not None:
        parts.append(ws.starts.astype("<i8").tobytes())
    return b"".join(parts)


def decode_windows(data: bytes, path="<bytes>") -> WindowSet:
    if len(data) < _WPREFIX.size:
        raise ParseError(path, len(data), "file shorter than the 12-byte prefix")
    magic, version, hlen = _WPREFIX.unpack_from(data, 0)
    if magic != WINDOWS_MAGIC:
        raise ParseError(path, 0, f"bad magic {magic!r}, expected {WINDOWS_MAGIC!r}")
    if version != WINDOWS_VERSION:
        raise ParseError(path, 4, f"unsupported version {version}")
    pos = _WPREFIX.size
    if pos + hlen > len(data):
        raise ParseError(path, 8, "header length runs past end of file")
    try:
        h = json.loads(data[pos:pos + hlen].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise ParseError(path, pos + getattr(exc, "pos", getattr(exc, "start", 0)),
                         f"header: {exc}") from exc
    pos += hlen
    n, L, C = h["count"], h["window_length"], h["channel_count"]
    sizes = [("X", 4 * n * L * C), ("labels", 2 * n), ("prov", 8 * n)]
    if h.get("has_starts"):
        sizes.append(("starts", 8 * n))
    need = pos + sum(s for _, s in sizes)
    if len(data) != need:
        raise ParseError(path, min(len(data), need), f"expected {need} bytes, file has {len(data)}")
    X = np.frombuffer(data, "<f4", n * L * C, pos).reshape(n, L, C)
    pos += 4 * n * L * C
    labels = np.frombuffer(data, "<u2", n, pos).astype(np.int64)
    pos += 2 * n
    prov = np.frombuffer(data, "<u4", 2 * n, pos).reshape(n, 2)
    pos += 8 * n
    strings = np.asarray(h["strings"], dtype=str)
    starts = np.frombuffer(data, "<i8", n, pos).copy() if h.get("has_starts") else None
    return WindowSet(X.copy(), labels, tuple(h["label_names"]),
                     strings[prov[:, 0]] if n else np.zeros(0, str),
                     strings[prov[:, 1]] if n else np.zeros(0, str),
                     starts, h.get("label_space_digest"))


def write_windows(ws: WindowSet, path) -> None:
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    Path(path).write_bytes(encode_windows(ws))


def read_windows(path) -> WindowSet:
    path = Path(path)
    try:
        data = path.read_bytes()
    except OSError as exc:
        raise ParseError(path, 0, f"cannot read: {exc.strerror or exc}") from exc
    return decode_windows(data, path)
