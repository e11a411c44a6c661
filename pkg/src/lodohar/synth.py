"""Seeded synthetic multi-dataset inertial corpora.

Each activity class is a band-limited oscillation (fundamental plus one
harmonic, optionally gated on/off) riding on a class-specific gravity
direction. Subjects perturb cadence, amplitude, phase and posture. Each
dataset then applies its own device transform: an optional axis rotation,
a per-channel affine map ``gain * x + offset`` and Gaussian noise. Datasets
share the first ``shared_class_fraction`` of the classes; the remaining
classes are each owned by exactly one dataset.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field

import numpy as np

from .canon import DatasetManifest, Recording, Segment
from .errors import ConfigError
from .seeding import rng_for

GRAVITY = 9.81


@dataclass
class ClassSpec:
    name: str
    freq_hz: float
    amplitude: float
    duty: float = 1.0                 # active fraction of each 2 s cycle
    posture: tuple = (0.0, 0.0, 1.0)  # gravity direction in the body frame


DEFAULT_CLASSES = (
    ClassSpec("Walking", 1.8, 3.0),
    ClassSpec("Sitting", 0.0, 0.0, posture=(0.6, 0.0, 0.8)),
    ClassSpec("Standing", 0.0, 0.0, posture=(0.0, 0.0, 1.0)),
    ClassSpec("Running", 2.9, 7.0),
    ClassSpec("Upstairs", 1.4, 4.0, posture=(0.25, 0.0, 0.97)),
    ClassSpec("Jumping", 2.3, 9.0, duty=0.5),
)


@dataclass
class SynthSpec:
    dataset_count: int = 4
    subjects_per_dataset: int = 8
    classes: tuple = DEFAULT_CLASSES
    shared_class_fraction: float = 0.67
    gain_range: tuple = (0.7, 1.4)
    offset_range: tuple = (-1.0, 1.0)
    rotation_deg: float = 0.0         # max per-dataset device rotation
    freq_shift: float = 0.0           # max per-dataset relative cadence change
    freq_jitter: float = 0.08         # per-subject relative cadence change
    amp_jitter: float = 0.15
    posture_jitter: float = 0.05
    sample_rates: tuple = (50.0, 100.0)  # cycled over datasets
    segment_seconds: tuple = (20.0, 30.0)
    noise_sigma: float = 0.3
    wrist_fraction: float = 0.0       # subjects that also carry a wrist device
    aliases: dict = field(default_factory=lambda: {"1": {"Running": "Jogging"}})
    seed: int = 0

    def __post_init__(self):
        self.classes = tuple(c if isinstance(c, ClassSpec) else ClassSpec(**c) for c in self.classes)
        self.gain_range = tuple(self.gain_range)
        self.offset_range = tuple(self.offset_range)
        self.sample_rates = tuple(float(r) for r in self.sample_rates)
        self.segment_seconds = tuple(self.segment_seconds)
        self.aliases = {str(k): dict(v) for k, v in self.aliases.items()}

    @property
    def n_shared(self) -> int:
        return int(round(self.shared_class_fraction * len(self.classes)))

    def dataset_ids(self) -> list[str]:
        return [f"ds{d + 1}" for d in range(self.dataset_count)]

    def rate_of(self, d: int) -> float:
        return self.sample_rates[d % len(self.sample_rates)]

    def classes_of(self, d: int) -> list[ClassSpec]:
        """Shared classes plus the exclusive ones owned by dataset ``d``."""
        shared = list(self.classes[:self.n_shared])
        extra = [c for j, c in enumerate(self.classes[self.n_shared:]) if j % self.dataset_count == d]
        return shared + extra

    def validate(self) -> "SynthSpec":
        if self.dataset_count < 1 or self.subjects_per_dataset < 1:
            raise ConfigError("need at least one dataset and one subject")
        if not self.classes:
            raise ConfigError("need at least one class")
        if not 0 <= self.shared_class_fraction <= 1:
            raise ConfigError("shared_class_fraction must be in [0, 1]")
        if min(self.gain_range) <= 0:
            raise ConfigError("gains must be > 0")
        nyquist = min(self.sample_rates) / 2
        for c in self.classes:
            # fastest content: harmonic at 2f, pushed up by cadence jitter and shift
            top = 2 * c.freq_hz * (1 + self.freq_jitter) * (1 + self.freq_shift)
            if top >= nyquist:
                raise ConfigError(f"class {c.name!r}: content up to {top:.2f} Hz "
                                  f"is not below Nyquist {nyquist:g} Hz")
            if not 0 < c.duty <= 1:
                raise ConfigError(f"class {c.name!r}: duty must be in (0, 1]")
        if self.segment_seconds[0] <= 0 or self.segment_seconds[1] < self.segment_seconds[0]:
            raise ConfigError("segment_seconds must be a positive (low, high) range")
        return self

    def to_json(self) -> dict:
        doc = asdict(self)
        doc["classes"] = [asdict(c) for c in self.classes]
        return doc

    @classmethod
    def from_json(cls, doc: dict) -> "SynthSpec":
        unknown = set(doc) - set(cls.__dataclass_fields__)
        if unknown:
            raise ConfigError(f"unknown synth spec keys: {sorted(unknown)}")
        return cls(**doc)

    def dumps(self) -> str:
        return json.dumps(self.to_json(), indent=2, sort_keys=True) + "\n"


def amplified(spec: SynthSpec | None = None, **overrides) -> SynthSpec:
    """Same corpus recipe with strong device shift: axis rotations and cadence changes."""
    base = (spec or SynthSpec()).to_json()
    base.update(rotation_deg=120.0, freq_shift=0.25, gain_range=(0.5, 2.0),
                offset_range=(-3.0, 3.0))
    base.update(overrides)
    return SynthSpec.from_json(base)


def _rotation(rng: np.random.Generator, max_deg: float) -> np.ndarray:
    if max_deg <= 0:
        return np.eye(3)
    axis = rng.normal(size=3)
    axis /= np.linalg.norm(axis)
    angle = math.radians(rng.uniform(0.5 * max_deg, max_deg))
    k = np.array([[0, -axis[2], axis[1]], [axis[2], 0, -axis[0]], [-axis[1], axis[0], 0]])
    return np.eye(3) + math.sin(angle) * k + (1 - math.cos(angle)) * (k @ k)


def _class_pattern(spec: SynthSpec, c: ClassSpec):
    # fixed spatial signature of a class, shared by every dataset
    rng = rng_for(spec.seed, "class", c.name)
    acc = rng.uniform(0.3, 1.0, 3) * rng.choice([-1, 1], 3)
    gyr = rng.uniform(0.1, 0.6, 3) * rng.choice([-1, 1], 3)
    return acc, gyr, rng.uniform(0, 2 * np.pi, 6)


def _segment_signal(spec: SynthSpec, c: ClassSpec, t: np.ndarray, subj: dict,
                    cadence: float, rng: np.random.Generator) -> np.ndarray:
    acc_w, gyr_w, phases = _class_pattern(spec, c)
    posture = np.asarray(c.posture, dtype=np.float64) + subj["tilt"]
    posture /= np.linalg.norm(posture)
    out = np.empty((6, len(t)))
    out[:3] = GRAVITY * posture[:, None]
    out[3:] = 0.0
    if c.amplitude > 0 and c.freq_hz > 0:
        f = c.freq_hz * subj["freq"] * cadence
        amp = c.amplitude * subj["amp"]
        phi = rng.uniform(0, 2 * np.pi)
        gate = np.ones_like(t)
        if c.duty < 1:
            cycle = (t + rng.uniform(0, 2.0)) % 2.0
            # smooth on/off envelope keeps the content band-limited
            gate = 0.5 - 0.5 * np.cos(2 * np.pi * np.clip(cycle / (2.0 * c.duty), 0, 1))
        for a in range(3):
            base = np.sin(2 * np.pi * f * t + phi + phases[a])
            harm = 0.35 * np.sin(4 * np.pi * f * t + 2 * phi + phases[a])
            out[a] += amp * acc_w[a] * gate * (base + harm)
            out[3 + a] += 0.3 * amp * gyr_w[a] * gate * np.cos(2 * np.pi * f * t + phi + phases[3 + a])
    return out


def generate(spec: SynthSpec | None = None):
    """Build a canon corpus ``[(DatasetManifest, [Recording, ...]), ...]``."""
    spec = (spec or SynthSpec()).validate()
    corpus = []
    for d, dataset_id in enumerate(spec.dataset_ids()):
        rate = spec.rate_of(d)
        drng = rng_for(spec.seed, "dataset", d)
        gain = drng.uniform(*spec.gain_range, 6)
        offset = drng.uniform(*spec.offset_range, 6) * np.array([1, 1, 1, 0.2, 0.2, 0.2])
        rot = _rotation(drng, spec.rotation_deg)
        cadence = 1 + drng.uniform(-spec.freq_shift, spec.freq_shift)
        aliases = spec.aliases.get(str(d), {})
        classes = spec.classes_of(d)
        recordings = []
        for s in range(spec.subjects_per_dataset):
            srng = rng_for(spec.seed, "subject", d, s)
            subj = {
                "freq": 1 + srng.uniform(-spec.freq_jitter, spec.freq_jitter),
                "amp": 1 + srng.uniform(-spec.amp_jitter, spec.amp_jitter),
                "tilt": srng.normal(0, spec.posture_jitter, 3),
            }
            positions = ["waist"]
            if srng.random() < spec.wrist_fraction:
                positions.append("wrist")
            for position in positions:
                prng = rng_for(spec.seed, "recording", d, s, position)
                order = prng.permutation(len(classes))
                pieces, segments, pos = [], [], 0
                for k in order:
                    c = classes[k]
                    n = int(round(prng.uniform(*spec.segment_seconds) * rate))
                    t = (pos + np.arange(n)) / rate
                    sig = _segment_signal(spec, c, t, subj, cadence, prng)
                    if position == "wrist":
                        sig = sig[[1, 2, 0, 4, 5, 3]] * 1.5
                    pieces.append(sig)
                    segments.append(Segment(pos, pos + n, aliases.get(c.name, c.name)))
                    pos += n
                x = np.concatenate(pieces, axis=1)
                x[:3] = rot @ x[:3]
                x[3:] = rot @ x[3:]
                x = gain[:, None] * x + offset[:, None]
                if spec.noise_sigma > 0:
                    x = x + prng.normal(0, spec.noise_sigma, x.shape)
                recordings.append(Recording(dataset_id, f"s{s + 1:02d}", f"dev-{position}",
                                            position, rate, x.astype(np.float32),
                                            tuple(segments)).validate())
        names = [f"{i:04d}_{r.subject_id}_{r.device_id}.harc" for i, r in enumerate(recordings)]
        corpus.append((DatasetManifest.describe(dataset_id, recordings, names), recordings))
    return corpus


def spectral_features(X: np.ndarray, bands: int = 12) -> np.ndarray:
    """Per-window log energy in equal-width FFT bands, per channel (DC kept)."""
    spec = np.abs(np.fft.rfft(X, axis=1)) ** 2
    edges = np.linspace(0, spec.shape[1], bands + 1).astype(int)
    feats = [spec[:, a:b].sum(axis=1) for a, b in zip(edges[:-1], edges[1:])]
    dc = X.mean(axis=1)
    return np.concatenate([np.log1p(np.stack(feats, axis=1).reshape(len(X), -1)), dc], axis=1)


def nearest_centroid_accuracy(X: np.ndarray, y: np.ndarray, train_mask: np.ndarray) -> float:
    """Fit class centroids of standardized spectral features on ``train_mask``, score the rest."""
    F = spectral_features(X)
    mu, sd = F[train_mask].mean(0), F[train_mask].std(0) + 1e-9
    F = (F - mu) / sd
    classes = np.unique(y[train_mask])
    cents = np.stack([F[train_mask & (y == c)].mean(0) for c in classes])
    test = ~train_mask
    d = ((F[test][:, None, :] - cents[None]) ** 2).sum(-1)
    return float(np.mean(classes[d.argmin(1)] == y[test]))
