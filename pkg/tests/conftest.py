import os
import sys

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from lodohar.canon import Recording, Segment
from lodohar.pipeline import LabelSpace, PipelineConfig, prepare
from lodohar.synth import SynthSpec, generate

settings.register_profile(
    "default", deadline=None, suppress_health_check=[HealthCheck.too_slow, HealthCheck.function_scoped_fixture]
)
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))


def make_recording(n=256, rate=50.0, dataset="dsA", subject="s1", position="waist",
                   segments=None, seed=0, device="dev"):
    rng = np.random.default_rng(seed)
    if segments is None:
        segments = (Segment(0, n, "Walking"),)
    return Recording(dataset, subject, device, position, rate,
                     rng.normal(size=(6, n)).astype(np.float32), segments)


def small_spec(**kw):
    base = dict(dataset_count=3, subjects_per_dataset=4, segment_seconds=(8.0, 12.0), seed=3)
    base.update(kw)
    return SynthSpec(**base)


@pytest.fixture(scope="session")
def small_corpus():
    return generate(small_spec())


@pytest.fixture(scope="session")
def small_windows(small_corpus):
    ws, stats, summary = prepare(small_corpus, PipelineConfig(), LabelSpace.default())
    return ws


@pytest.fixture(scope="session")
def default_windows():
    ws, _, _ = prepare(generate(SynthSpec()), PipelineConfig(), LabelSpace.default())
    return ws


def pytest_terminal_summary(terminalreporter):
    lines = []
    for name, mod in list(sys.modules.items()):
        if name.rsplit(".", 1)[-1] == "test_acceptance":
            lines = getattr(mod, "RESULTS", [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines):
            terminalreporter.write_line(line)
