import json
import os
import subprocess
import sys
from pathlib import Path

import numpy as np
import pytest

from comfort_index.errors import ParseError, VersionError
from comfort_index.features import EmotionReport, TrialRecord
from comfort_index.io import (
    atomic_write, dumps_json, load_bundle, load_config, load_features, load_json_doc, load_trial,
    parse_trial, read_csv, save_bundle, save_features, save_json_doc, save_trial, serialize_trial,
    write_prediction_log,
)
from comfort_index.pipeline import estimate_batch
from comfort_index.signals import Signal


@pytest.fixture(scope="module")
def trial_text(small_dataset):
    return serialize_trial(small_dataset[0][0])


def test_trial_round_trip_is_byte_identical(small_dataset, tmp_path):
    for rec in small_dataset[0]:
        path = tmp_path / f"{rec.trial_id}.trial"
        save_trial(rec, path)
        back = load_trial(path)
        assert serialize_trial(back) == path.read_text()
        np.testing.assert_array_equal(back.ecg.samples, rec.ecg.samples)
        assert back.reports == rec.reports
        assert back.condition == rec.condition


def test_trial_round_trip_keeps_optional_uncomfort_and_offsets():
    rec = TrialRecord("S07", "S07T03", {"velocity": "fast"},
                      Signal([0.1, 1 / 3], 250.0, 0.5), Signal([2.0], 128.0), Signal([], 120.0),
                      [EmotionReport(1.0, 0.1, 0.2, 0.3, 0.4, 0.5, 0.6), EmotionReport(2.0, 0, 0, 0, 1, 1)])
    back = parse_trial(serialize_trial(rec))
    assert back.reports == rec.reports
    assert back.ecg.t0 == 0.5 and back.pupil.samples.size == 0
    assert serialize_trial(back) == serialize_trial(rec)


@pytest.mark.parametrize("fraction", [0.01, 0.3, 0.5, 0.97, 0.9995])
def test_truncated_trial_names_byte_offset(trial_text, fraction):
    data = trial_text.encode()
    cut = data[:int(len(data) * fraction)]
    with pytest.raises(ParseError) as err:
        parse_trial(cut)
    assert err.value.offset is not None and 0 <= err.value.offset <= len(cut)
    assert "byte offset" in str(err.value)


def test_truncation_at_every_line_boundary_is_detected(small_dataset):
    rec = small_dataset[0][0]
    short = TrialRecord(rec.subject_id, rec.trial_id, rec.condition, Signal(rec.ecg.samples[:3], 250.0),
                        Signal(rec.gsr.samples[:2], 128.0), Signal(rec.pupil.samples[:2], 120.0), rec.reports[:3])
    data = serialize_trial(short).encode()
    ends = [i + 1 for i, b in enumerate(data) if b == ord("\n")][:-1]
    for end in ends:
        with pytest.raises(ParseError):
            parse_trial(data[:end])


def test_corrupt_fields_report_line(trial_text):
    lines = trial_text.split("\n")
    k = lines.index("[channel gsr]") + 4
    lines[k] = "not-a-number"
    with pytest.raises(ParseError) as err:
        parse_trial("\n".join(lines))
    assert err.value.line == k + 1
    assert err.value.offset == len("\n".join(lines[:k])) + 1


def test_trial_version_mismatch(trial_text):
    with pytest.raises(VersionError):
        parse_trial(trial_text.replace("format_version = 1.0", "format_version = 2.0", 1))
    parse_trial(trial_text.replace("format_version = 1.0", "format_version = 1.7", 1))
    with pytest.raises(ParseError):
        parse_trial("hello\n")


def test_bundle_round_trip_is_byte_identical(small_pipeline, tmp_path):
    a, b = tmp_path / "a.json", tmp_path / "b.json"
    save_bundle(small_pipeline, a)
    save_bundle(load_bundle(a), b)
    assert a.read_bytes() == b.read_bytes()


def test_bundle_version_and_kind_checks(small_pipeline, tmp_path):
    path = tmp_path / "m.json"
    save_bundle(small_pipeline, path)
    doc = json.loads(path.read_text())
    doc["format_version"] = "9.0"
    path.write_text(json.dumps(doc))
    with pytest.raises(VersionError):
        load_bundle(path)
    save_json_doc({"x": 1}, path, "other-kind")
    with pytest.raises(ParseError):
        load_bundle(path)
    path.write_text('{"format": ')
    with pytest.raises(ParseError) as err:
        load_json_doc(path, "other-kind")
    assert err.value.offset is not None


_CHILD = """
import sys, json
import numpy as np
from comfort_index.io import load_bundle
from comfort_index.pipeline import METHODS, estimate_batch
p = load_bundle(sys.argv[1])
X = np.load(sys.argv[2])
out = {}
for m in METHODS:
    for k in ("rf", "nn"):
        r = estimate_batch(p, X, m, k)
        out[m + "/" + k] = [r["ci"].tolist(), r["unci"].tolist(), r["emotions"].tolist()]
print(json.dumps(out))
"""


def test_bundle_predictions_equal_across_processes(small_pipeline, small_dataset, tmp_path):
    bundle, feats = tmp_path / "m.json", tmp_path / "x.npy"
    save_bundle(small_pipeline, bundle)
    X = np.array([s.features for s in small_dataset[2][::3]])
    np.save(feats, X)
    env = dict(os.environ, PYTHONHASHSEED="1")
    res = subprocess.run([sys.executable, "-c", _CHILD, str(bundle), str(feats)],
                         capture_output=True, text=True, check=True, env=env)
    child = json.loads(res.stdout)
    for key, (ci, unci, emo) in child.items():
        m, k = key.split("/")
        r = estimate_batch(small_pipeline, X, m, k)
        assert ci == r["ci"].tolist()
        assert unci == r["unci"].tolist()
        assert emo == r["emotions"].tolist()


def test_features_round_trip(small_dataset, tmp_path):
    samples = small_dataset[2][:15]
    path = tmp_path / "f.csv"
    save_features(samples, path)
    back = load_features(path)
    for a, b in zip(samples, back):
        np.testing.assert_array_equal(a.features, b.features)
        assert a.report == b.report and a.trial_id == b.trial_id and a.coverage == b.coverage
    save_features(back, tmp_path / "g.csv")
    assert (tmp_path / "g.csv").read_bytes() == path.read_bytes()
    text = path.read_text().replace("format_version=1.0", "format_version=3.0")
    path.write_text(text)
    with pytest.raises(VersionError):
        load_features(path)


def test_prediction_log_appends(tmp_path):
    path = tmp_path / "log.csv"
    write_prediction_log(path, [("a", 1.5)], header=("name", "value"))
    first = path.read_bytes()
    write_prediction_log(path, [("b", 0.25), ("c", 2)], header=("name", "value"))
    assert path.read_bytes().startswith(first)
    header, rows = read_csv(path)
    assert header == ["name", "value"]
    assert rows == [["a", "1.5"], ["b", "0.25"], ["c", "2"]]


def test_atomic_write_leaves_old_file_on_failure(tmp_path, monkeypatch):
    path = tmp_path / "x.txt"
    atomic_write(path, "old")

    def boom(*_):
        raise OSError("disk full")

    monkeypatch.setattr(os, "replace", boom)
    with pytest.raises(OSError):
        atomic_write(path, "new")
    assert path.read_text() == "old"
    assert [p.name for p in tmp_path.iterdir()] == ["x.txt"]


def test_json_is_canonical():
    assert dumps_json({"b": 1, "a": [1.5]}) == '{\n "a": [\n  1.5\n ],\n "b": 1\n}\n'
    with pytest.raises(ValueError):
        dumps_json({"x": float("nan")})


def test_config_file_types(tmp_path):
    path = tmp_path / "c.cfg"
    path.write_text("# comment\nseed = 4\njitter_deg = 2.5\nmodels = rf,nn\nbootstrap = yes\nname = abc\n")
    assert load_config(path) == {"seed": 4, "jitter_deg": 2.5, "models": ("rf", "nn"),
                                 "bootstrap": True, "name": "abc"}
    path.write_text("just words\n")
    with pytest.raises(ParseError):
        load_config(path)
