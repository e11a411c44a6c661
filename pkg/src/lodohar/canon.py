"""Canonical data model and on-disk interchange format for inertial corpora.

A corpus directory holds one sub-directory per dataset::

    <root>/<dataset_id>/manifest.json
    <root>/<dataset_id>/<recording files>

Recording files are binary (``.harc``)::

    b"HARC" | format_version u32 LE | header_length u32 LE
    | UTF-8 JSON header | 6*N float32 LE, channel-major (ax, ay, az, gx, gy, gz)

Hand-authored fixtures may instead be CSV files with a header row
``ax,ay,az,gx,gy,gz,label``; consecutive rows sharing a label form one
segment (empty label = unlabeled gap).
"""

from __future__ import annotations

import csv
import json
import os
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import NamedTuple, Sequence

import numpy as np

from .errors import ParseError, ValidationError

CHANNELS = ("ax", "ay", "az", "gx", "gy", "gz")
KNOWN_POSITIONS = ("waist", "wrist", "chest")

RECORDING_MAGIC = b"HARC"
RECORDING_VERSION = 1
RECORDING_SUFFIX = ".harc"
MANIFEST_NAME = "manifest.json"

_PREFIX = struct.Struct("<4sII")


class Segment(NamedTuple):
    start: int
    end: int
    label: str


def normalize_position(position: str) -> str:
    """Lower-case a body position; unknown names are kept as "other" positions."""
    return str(position).strip().lower()


@dataclass(frozen=True, eq=False)
class Recording:
    """One subject/device/session stream of six inertial channels.

    ``channels`` is a read-only ``(6, N)`` float32 array (accelerometer in
    m/s², gyroscope in rad/s). Segments are half-open sample ranges.
    """

    dataset_id: str
    subject_id: str
    device_id: str
    body_position: str
    sample_rate_hz: float
    channels: np.ndarray
    segments: tuple[Segment, ...] = ()

    def __post_init__(self):
        ch = np.array(self.channels, dtype=np.float32, copy=True)
        if ch.ndim == 2 and ch.shape[0] != len(CHANNELS) and ch.shape[1] == len(CHANNELS):
            ch = np.ascontiguousarray(ch.T)
        ch.setflags(write=False)
        object.__setattr__(self, "channels", ch)
        object.__setattr__(self, "body_position", normalize_position(self.body_position))
        object.__setattr__(self, "sample_rate_hz", float(self.sample_rate_hz))
        object.__setattr__(
            self,
            "segments",
            tuple(Segment(int(s), int(e), str(lab)) for s, e, lab in self.segments),
        )

    @property
    def n_samples(self) -> int:
        return int(self.channels.shape[1]) if self.channels.ndim == 2 else 0

    @property
    def name(self) -> str:
        return f"{self.dataset_id}/{self.subject_id}/{self.device_id}"

    def labels(self) -> set[str]:
        return {seg.label for seg in self.segments}

    def replace(self, **changes) -> "Recording":
        fields = dict(
            dataset_id=self.dataset_id,
            subject_id=self.subject_id,
            device_id=self.device_id,
            body_position=self.body_position,
            sample_rate_hz=self.sample_rate_hz,
            channels=self.channels,
            segments=self.segments,
        )
        fields.update(changes)
        return Recording(**fields)

    def validate(self) -> "Recording":
        """Check every invariant; raise :class:`ValidationError` on the first failure."""
        name = self.name
        if self.channels.ndim != 2 or self.channels.shape[0] != len(CHANNELS):
            raise ValidationError(name, "six equal-length channels",
                                  f"got array of shape {self.channels.shape}")
        n = self.n_samples
        if n < 1:
            raise ValidationError(name, "channel length >= 1")
        if not (self.sample_rate_hz > 0 and np.isfinite(self.sample_rate_hz)):
            raise ValidationError(name, "sample_rate_hz > 0", repr(self.sample_rate_hz))
        if not np.isfinite(self.channels).all():
            bad = np.argwhere(~np.isfinite(self.channels))[0]
            raise ValidationError(name, "finite sample values",
                                  f"channel {CHANNELS[bad[0]]} sample {bad[1]}")
        prev_end = 0
        for i, seg in enumerate(self.segments):
            if not 0 <= seg.start < seg.end <= n:
                raise ValidationError(name, "segment bounds 0 <= start < end <= N",
                                      f"segment {i} = {tuple(seg)}, N={n}")
            if seg.start < prev_end:
                raise ValidationError(name, "segments sorted and non-overlapping",
                                      f"segment {i} starts at {seg.start} before {prev_end}")
            prev_end = seg.end
        return self

    def equals(self, other: "Recording") -> bool:
        return (
            self.dataset_id == other.dataset_id
            and self.subject_id == other.subject_id
            and self.device_id == other.device_id
            and self.body_position == other.body_position
            and self.sample_rate_hz == other.sample_rate_hz
            and self.segments == other.segments
            and self.channels.shape == other.channels.shape
            and self.channels.tobytes() == other.channels.tobytes()
        )


@dataclass
class DatasetManifest:
    dataset_id: str
    recordings: list[str]
    declared_rate_hz: float
    declared_positions: set[str] = field(default_factory=set)
    declared_activities: set[str] = field(default_factory=set)
    subject_count: int = 0

    def to_json(self) -> dict:
        return {
            "dataset_id": self.dataset_id,
            "declared_rate_hz": self.declared_rate_hz,
            "declared_positions": sorted(self.declared_positions),
            "declared_activities": sorted(self.declared_activities),
            "subject_count": self.subject_count,
            "recordings": list(self.recordings),
        }

    @classmethod
    def from_json(cls, doc: dict, path="<manifest>") -> "DatasetManifest":
        missing = [k for k in ("dataset_id", "declared_rate_hz", "recordings") if k not in doc]
        if missing:
            raise ValidationError(str(path), "manifest has required keys", f"missing {missing}")
        return cls(
            dataset_id=str(doc["dataset_id"]),
            recordings=list(doc["recordings"]),
            declared_rate_hz=float(doc["declared_rate_hz"]),
            declared_positions={normalize_position(p) for p in doc.get("declared_positions", [])},
            declared_activities=set(doc.get("declared_activities", [])),
            subject_count=int(doc.get("subject_count", 0)),
        )

    @classmethod
    def describe(cls, dataset_id: str, recordings: Sequence[Recording],
                 paths: Sequence[str]) -> "DatasetManifest":
        """Build a manifest whose declarations exactly cover ``recordings``."""
        rates = {r.sample_rate_hz for r in recordings}
        return cls(
            dataset_id=dataset_id,
            recordings=list(paths),
            declared_rate_hz=max(rates) if rates else 50.0,
            declared_positions={r.body_position for r in recordings},
            declared_activities=set().union(*(r.labels() for r in recordings)) if recordings else set(),
            subject_count=len({r.subject_id for r in recordings}),
        )


Corpus = list  # list[tuple[DatasetManifest, list[Recording]]]


# -- recording codec ---------------------------------------------------------


def encode_recording(rec: Recording) -> bytes:
    header = {
        "dataset_id": rec.dataset_id,
        "subject_id": rec.subject_id,
        "device_id": rec.device_id,
        "body_position": rec.body_position,
        "sample_rate_hz": rec.sample_rate_hz,
        "sample_count": rec.n_samples,
        "segments": [[s.start, s.end, s.label] for s in rec.segments],
    }
    hbytes = json.dumps(header, sort_keys=True, ensure_ascii=False).encode("utf-8")
    body = np.ascontiguousarray(rec.channels, dtype="<f4").tobytes()
    return _PREFIX.pack(RECORDING_MAGIC, RECORDING_VERSION, len(hbytes)) + hbytes + body


def decode_recording(data: bytes, path="<bytes>") -> Recording:
    if len(data) < _PREFIX.size:
        raise ParseError(path, len(data), "file shorter than the 12-byte prefix")
    magic, version, hlen = _PREFIX.unpack_from(data, 0)
    if magic != RECORDING_MAGIC:
        raise ParseError(path, 0, f"bad magic {magic!r}, expected {RECORDING_MAGIC!r}")
    if version != RECORDING_VERSION:
        raise ParseError(path, 4, f"unsupported format version {version}")
    hstart = _PREFIX.size
    if hstart + hlen > len(data):
        raise ParseError(path, 8, f"header length {hlen} runs past end of file ({len(data)} bytes)")
    try:
        header = json.loads(data[hstart:hstart + hlen].decode("utf-8"))
    except UnicodeDecodeError as exc:
        raise ParseError(path, hstart + exc.start, "header is not UTF-8") from exc
    except json.JSONDecodeError as exc:
        raise ParseError(path, hstart + exc.pos, f"header JSON: {exc.msg}") from exc
    try:
        n = int(header["sample_count"])
        segments = [Segment(int(s), int(e), str(lab)) for s, e, lab in header["segments"]]
        meta = {k: header[k] for k in ("dataset_id", "subject_id", "device_id",
                                       "body_position", "sample_rate_hz")}
    except (KeyError, TypeError, ValueError) as exc:
        raise ParseError(path, hstart, f"header missing or malformed field: {exc}") from exc
    body_start = hstart + hlen
    expected = 4 * len(CHANNELS) * n
    actual = len(data) - body_start
    if actual != expected:
        raise ParseError(path, body_start + min(actual, expected),
                         f"sample block has {actual} bytes, expected {expected} for N={n}")
    channels = np.frombuffer(data, dtype="<f4", count=len(CHANNELS) * n,
                             offset=body_start).reshape(len(CHANNELS), n)
    return Recording(channels=channels, segments=tuple(segments), **meta)


def read_recording(path) -> Recording:
    path = Path(path)
    try:
        data = path.read_bytes()
    except OSError as exc:
        raise ParseError(path, 0, f"cannot read: {exc.strerror or exc}") from exc
    return decode_recording(data, path)


def write_recording(rec: Recording, path) -> None:
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_bytes(encode_recording(rec))
    except OSError as exc:
        raise OSError(exc.errno, f"writing {path}: {exc.strerror}") from exc


def read_csv_recording(path, dataset_id: str, subject_id: str, device_id: str = "csv",
                       body_position: str = "waist", sample_rate_hz: float = 50.0) -> Recording:
    """Read a hand-authored CSV fixture (header ``ax,ay,az,gx,gy,gz,label``)."""
    path = Path(path)
    rows = []
    labels = []
    try:
        with open(path, newline="", encoding="utf-8") as fh:
            reader = csv.reader(fh)
            header = next(reader, None)
            expected = list(CHANNELS) + ["label"]
            if header is None or [h.strip() for h in header] != expected:
                raise ParseError(path, 0, f"CSV header must be {','.join(expected)}")
            for lineno, row in enumerate(reader, start=2):
                if len(row) != 7:
                    raise ParseError(path, _line_offset(path, lineno),
                                     f"line {lineno}: expected 7 fields, got {len(row)}")
                try:
                    rows.append([float(v) for v in row[:6]])
                except ValueError as exc:
                    raise ParseError(path, _line_offset(path, lineno),
                                     f"line {lineno}: {exc}") from exc
                labels.append(row[6].strip())
    except OSError as exc:
        raise ParseError(path, 0, f"cannot read: {exc.strerror or exc}") from exc
    segments = []
    start = 0
    for i in range(1, len(labels) + 1):
        if i == len(labels) or labels[i] != labels[start]:
            if labels[start]:
                segments.append(Segment(start, i, labels[start]))
            start = i
    channels = np.asarray(rows, dtype=np.float32).reshape(-1, 6).T
    return Recording(dataset_id, subject_id, device_id, body_position, sample_rate_hz,
                     channels, tuple(segments))


def _line_offset(path, lineno):
    with open(path, "rb") as fh:
        for _ in range(lineno - 1):
            fh.readline()
        return fh.tell()


# -- corpus ------------------------------------------------------------------


def _read_manifest(path: Path) -> DatasetManifest:
    try:
        raw = path.read_bytes()
    except OSError as exc:
        raise ParseError(path, 0, f"cannot read: {exc.strerror or exc}") from exc
    try:
        doc = json.loads(raw.decode("utf-8"))
    except UnicodeDecodeError as exc:
        raise ParseError(path, exc.start, "manifest is not UTF-8") from exc
    except json.JSONDecodeError as exc:
        raise ParseError(path, exc.pos, f"manifest JSON: {exc.msg}") from exc
    if not isinstance(doc, dict):
        raise ParseError(path, 0, "manifest must be a JSON object")
    return DatasetManifest.from_json(doc, path)


def _load_entry(ddir: Path, entry, manifest: DatasetManifest) -> Recording:
    if isinstance(entry, dict):
        rel = entry["path"]
        meta = entry
    else:
        rel = entry
        meta = {}
    path = ddir / rel
    if not path.exists():
        raise ValidationError(f"{manifest.dataset_id}/{rel}", "referenced file exists")
    if path.suffix.lower() == ".csv":
        positions = sorted(manifest.declared_positions)
        return read_csv_recording(
            path,
            dataset_id=meta.get("dataset_id", manifest.dataset_id),
            subject_id=str(meta.get("subject_id", path.stem)),
            device_id=str(meta.get("device_id", "csv")),
            body_position=meta.get("body_position", positions[0] if len(positions) == 1 else "waist"),
            sample_rate_hz=float(meta.get("sample_rate_hz", manifest.declared_rate_hz)),
        )
    return read_recording(path)


def validate_dataset(manifest: DatasetManifest, recordings: Sequence[Recording]) -> None:
    for rec in recordings:
        rec.validate()
        if rec.dataset_id != manifest.dataset_id:
            raise ValidationError(rec.name, "recording dataset_id matches manifest",
                                  f"manifest says {manifest.dataset_id!r}")
    seen = set().union(*(r.labels() for r in recordings)) if recordings else set()
    undeclared = seen - set(manifest.declared_activities)
    if undeclared:
        raise ValidationError(f"{manifest.dataset_id}/manifest.json",
                              "declared_activities covers all segment labels",
                              f"undeclared: {sorted(undeclared)}")
    if not manifest.declared_rate_hz > 0:
        raise ValidationError(f"{manifest.dataset_id}/manifest.json", "declared_rate_hz > 0")


def read_corpus(root) -> Corpus:
    """Read and validate every ``<root>/<dataset>/manifest.json`` and its recordings."""
    root = Path(root)
    if not root.is_dir():
        raise ParseError(root, 0, "corpus root is not a directory")
    corpus = []
    for ddir in sorted(p for p in root.iterdir() if p.is_dir()):
        mpath = ddir / MANIFEST_NAME
        if not mpath.exists():
            continue
        manifest = _read_manifest(mpath)
        recordings = [_load_entry(ddir, entry, manifest) for entry in manifest.recordings]
        validate_dataset(manifest, recordings)
        corpus.append((manifest, recordings))
    return corpus


def recording_filename(rec: Recording, index: int) -> str:
    safe = "".join(ch if ch.isalnum() or ch in "-_." else "_"
                   for ch in f"{rec.subject_id}_{rec.device_id}")
    return f"{index:04d}_{safe}{RECORDING_SUFFIX}"


def write_corpus(corpus: Corpus, root) -> None:
    """Write ``corpus`` under ``root``; everything is validated before the first write."""
    root = Path(root)
    planned = []
    for manifest, recordings in corpus:
        validate_dataset(manifest, recordings)
        names = [recording_filename(r, i) for i, r in enumerate(recordings)]
        doc = manifest.to_json()
        doc["recordings"] = names
        planned.append((manifest.dataset_id, doc, list(zip(names, recordings))))
    for dataset_id, doc, files in planned:
        ddir = root / dataset_id
        try:
            ddir.mkdir(parents=True, exist_ok=True)
            for name, rec in files:
                (ddir / name).write_bytes(encode_recording(rec))
            tmp = ddir / (MANIFEST_NAME + ".tmp")
            tmp.write_text(json.dumps(doc, indent=2, sort_keys=True, ensure_ascii=False) + "\n",
                           encoding="utf-8")
            os.replace(tmp, ddir / MANIFEST_NAME)
        except OSError as exc:
            raise OSError(exc.errno, f"writing {exc.filename or ddir}: {exc.strerror}") from exc


def filter_position(recordings: Sequence[Recording], position: str) -> list[Recording]:
    """Keep recordings worn at ``position``, preserving order."""
    want = normalize_position(position)
    return [r for r in recordings if r.body_position == want]


def corpus_equal(a: Corpus, b: Corpus) -> bool:
    if len(a) != len(b):
        return False
    for (ma, ra), (mb, rb) in zip(a, b):
        if ma.to_json() | {"recordings": None} != mb.to_json() | {"recordings": None}:
            return False
        if len(ra) != len(rb) or not all(x.equals(y) for x, y in zip(ra, rb)):
            return False
    return True
