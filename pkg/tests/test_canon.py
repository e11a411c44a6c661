import json
import struct

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from lodohar.canon import (
    DatasetManifest,
    Recording,
    Segment,
    corpus_equal,
    decode_recording,
    encode_recording,
    filter_position,
    read_corpus,
    read_csv_recording,
    write_corpus,
)
from lodohar.errors import ParseError, ValidationError

from conftest import make_recording


def _corpus(recs_by_ds):
    out = []
    for ds, recs in recs_by_ds.items():
        out.append((DatasetManifest.describe(ds, recs, [f"r{i}" for i in range(len(recs))]), recs))
    return out


def test_empty_directory_reads_as_empty_corpus(tmp_path):
    assert read_corpus(tmp_path) == []


def test_single_recording_round_trip(tmp_path):
    rec = make_recording(n=256, rate=50.0)
    write_corpus(_corpus({"dsA": [rec]}), tmp_path)
    back = read_corpus(tmp_path)
    assert len(back) == 1 and len(back[0][1]) == 1
    got = back[0][1][0]
    assert got.n_samples == 256
    assert got.equals(rec)


def test_overlapping_segments_rejected():
    rec = make_recording(n=100, segments=[(0, 60, "Walking"), (50, 100, "Sitting")])
    with pytest.raises(ValidationError, match="non-overlapping"):
        rec.validate()


@pytest.mark.parametrize("segs", [[(0, 0, "a")], [(-1, 5, "a")], [(0, 101, "a")], [(10, 5, "a")]])
def test_segment_bounds_rejected(segs):
    with pytest.raises(ValidationError, match="segment bounds"):
        make_recording(n=100, segments=segs).validate()


def test_nan_refused_before_any_write(tmp_path):
    good = make_recording()
    x = np.array(good.channels)
    x[2, 7] = np.nan
    bad = good.replace(channels=x, subject_id="s2")
    with pytest.raises(ValidationError, match="finite"):
        write_corpus(_corpus({"dsA": [good], "dsB": [bad.replace(dataset_id="dsB")]}), tmp_path)
    assert list(tmp_path.iterdir()) == []


def test_dataset_id_mismatch_rejected(tmp_path):
    rec = make_recording(dataset="other")
    with pytest.raises(ValidationError, match="dataset_id"):
        write_corpus([(DatasetManifest.describe("dsA", [rec], ["x"]), [rec])], tmp_path)


def test_synthetic_three_datasets_round_trip(tmp_path, small_corpus):
    write_corpus(small_corpus, tmp_path)
    manifests = sorted(p.name for p in tmp_path.glob("*/manifest.json"))
    assert len(manifests) == 3
    for ds, recs in small_corpus:
        assert len(list((tmp_path / ds.dataset_id).glob("*.harc"))) == len(recs)
    assert corpus_equal(read_corpus(tmp_path), small_corpus)


def test_filter_position():
    recs = [make_recording(subject=f"s{i}", position=p)
            for i, p in enumerate(["waist", "wrist", "Waist", "chest", "waist"])]
    got = filter_position(recs, "waist")
    assert [r.subject_id for r in got] == ["s0", "s2", "s4"]
    waist_only = [r for r in recs if r.body_position == "waist"]
    assert filter_position(waist_only, "waist") == waist_only
    assert filter_position(waist_only, "chest") == []


def test_truncated_recording_names_offset():
    data = encode_recording(make_recording(n=10))
    with pytest.raises(ParseError) as err:
        decode_recording(data[:-3], "x.harc")
    assert "x.harc" in str(err.value) and isinstance(err.value.offset, int)
    with pytest.raises(ParseError) as err:
        decode_recording(data[:6])
    with pytest.raises(ParseError, match="magic"):
        decode_recording(b"NOPE" + data[4:])


def test_corrupt_header_names_offset():
    data = bytearray(encode_recording(make_recording(n=10)))
    data[12] = ord("}")
    with pytest.raises(ParseError) as err:
        decode_recording(bytes(data), "y.harc")
    assert err.value.offset >= 12


def test_bad_version_rejected():
    data = bytearray(encode_recording(make_recording(n=10)))
    struct.pack_into("<I", data, 4, 99)
    with pytest.raises(ParseError, match="version"):
        decode_recording(bytes(data))


def test_malformed_manifest_is_parse_error(tmp_path):
    (tmp_path / "dsA").mkdir()
    (tmp_path / "dsA" / "manifest.json").write_text('{"dataset_id": "dsA",', encoding="utf-8")
    with pytest.raises(ParseError) as err:
        read_corpus(tmp_path)
    assert "manifest.json" in str(err.value)


def test_missing_recording_file(tmp_path):
    rec = make_recording()
    write_corpus(_corpus({"dsA": [rec]}), tmp_path)
    for f in (tmp_path / "dsA").glob("*.harc"):
        f.unlink()
    with pytest.raises(ValidationError, match="exists"):
        read_corpus(tmp_path)


def test_undeclared_activity_rejected(tmp_path):
    rec = make_recording()
    write_corpus(_corpus({"dsA": [rec]}), tmp_path)
    mpath = tmp_path / "dsA" / "manifest.json"
    doc = json.loads(mpath.read_text())
    doc["declared_activities"] = ["Sitting"]
    mpath.write_text(json.dumps(doc))
    with pytest.raises(ValidationError, match="declared_activities"):
        read_corpus(tmp_path)


def test_csv_fixture(tmp_path):
    path = tmp_path / "dsA" / "s9.csv"
    path.parent.mkdir()
    lines = ["ax,ay,az,gx,gy,gz,label"]
    lines += [f"{i},0,9.8,0,0,0,Walking" for i in range(5)]
    lines += [f"{i},1,9.8,0,0,0,Sitting" for i in range(3)]
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    rec = read_csv_recording(path, "dsA", "s9")
    assert rec.n_samples == 8
    assert rec.segments == (Segment(0, 5, "Walking"), Segment(5, 8, "Sitting"))
    np.testing.assert_array_equal(rec.channels[0], [0, 1, 2, 3, 4, 0, 1, 2])
    manifest = {"dataset_id": "dsA", "declared_rate_hz": 50, "declared_positions": ["waist"],
                "declared_activities": ["Walking", "Sitting"], "subject_count": 1,
                "recordings": [{"path": "s9.csv", "subject_id": "s9"}]}
    (path.parent / "manifest.json").write_text(json.dumps(manifest), encoding="utf-8")
    corpus = read_corpus(tmp_path)
    assert corpus[0][1][0].equals(rec)


def test_csv_bad_row_offset(tmp_path):
    path = tmp_path / "x.csv"
    path.write_text("ax,ay,az,gx,gy,gz,label\n1,2,3,4,5,6,a\n1,2,oops,4,5,6,a\n", encoding="utf-8")
    with pytest.raises(ParseError) as err:
        read_csv_recording(path, "d", "s")
    assert err.value.offset == len("ax,ay,az,gx,gy,gz,label\n1,2,3,4,5,6,a\n")


def test_recording_is_immutable():
    rec = make_recording()
    with pytest.raises(ValueError):
        rec.channels[0, 0] = 1.0


# -- property: codec round trip over random corpora ----------------------------

_label = st.sampled_from(["Walking", "Sitting", "Jogging", "Car step in", "Ünïcode"])
_name = st.text(alphabet="abcdefgh-_0123", min_size=1, max_size=6)


@st.composite
def recordings(draw, dataset_id):
    n = draw(st.integers(1, 300))
    cuts = sorted(draw(st.sets(st.integers(0, n), max_size=6)))
    segs = []
    for a, b in zip(cuts[:-1], cuts[1:]):
        if b > a and draw(st.booleans()):
            segs.append((a, b, draw(_label)))
    seed = draw(st.integers(0, 2**31))
    x = np.random.default_rng(seed).normal(scale=draw(st.sampled_from([1e-3, 1.0, 1e4])), size=(6, n))
    return Recording(dataset_id, draw(_name), draw(_name),
                     draw(st.sampled_from(["waist", "wrist", "chest", "Thigh"])),
                     draw(st.sampled_from([20.0, 50.0, 100.0, 33.3])), x, tuple(segs))


@st.composite
def corpora(draw):
    ids = draw(st.lists(st.sampled_from(["A", "B", "C", "D"]), min_size=1, max_size=3, unique=True))
    out = []
    for ds in sorted(ids):
        recs = draw(st.lists(recordings(ds), min_size=1, max_size=3))
        out.append((DatasetManifest.describe(ds, recs, [""] * len(recs)), recs))
    return out


@settings(max_examples=100)
@given(corpora())
def test_codec_round_trip_property(tmp_path_factory, corpus):
    root = tmp_path_factory.mktemp("c")
    write_corpus(corpus, root)
    assert corpus_equal(read_corpus(root), corpus)
    for _, recs in corpus:
        for r in recs:
            assert decode_recording(encode_recording(r)).equals(r)


@settings(max_examples=200)
@given(st.binary(max_size=200))
def test_decoder_is_total_on_garbage(data):
    try:
        decode_recording(data)
    except (ParseError, ValidationError):
        pass
