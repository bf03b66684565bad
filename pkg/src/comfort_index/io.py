"""Trial files, feature tables, model bundles, prediction logs and config files.

Trial files are plain text: ``key = value`` header lines, then one block per
channel (``[channel <name>]`` with ``fs``/``t0``/``n`` and one sample per
line), then a ``[reports]`` CSV block. Floats are written with ``repr`` so
parsing and re-serializing is byte-identical. All writes go through a temp
file and ``os.replace``.
"""
from __future__ import annotations

import configparser
import csv
import io
import json
import os
import tempfile
from pathlib import Path

import numpy as np

from .errors import ParseError, VersionError
from .features import CHANNELS, EMOTIONS, FEATURE_NAMES, EmotionReport, TrialRecord, WindowedSample
from .signals import Signal

TRIAL_MAGIC = "# comfort-index trial"
TRIAL_VERSION = "1.0"
TRIAL_END = "[end]"
BUNDLE_FORMAT = "comfort-index-bundle"
BUNDLE_VERSION = "1.0"
FEATURES_VERSION = "1.0"
REPORT_COLUMNS = ("t",) + EMOTIONS + ("comfort", "uncomfort")
FEATURE_COLUMNS = ("subject_id", "trial_id", "t", "coverage") + FEATURE_NAMES + EMOTIONS + ("comfort", "uncomfort")


def atomic_write(path, data: bytes | str):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    if isinstance(data, str):
        data = data.encode("utf-8")
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as f:
            f.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def check_version(found: str, supported: str, what: str):
    major = str(found).split(".")[0]
    if major != supported.split(".")[0]:
        raise VersionError(f"{what} format version {found} is not supported (reader handles {supported})")


def _fmt(v) -> str:
    return "" if v is None else repr(float(v))


# trial files ---------------------------------------------------------------

def serialize_trial(trial: TrialRecord) -> str:
    out = [TRIAL_MAGIC, f"format_version = {TRIAL_VERSION}",
           f"subject_id = {trial.subject_id}", f"trial_id = {trial.trial_id}"]
    for k in sorted(trial.condition):
        out.append(f"condition.{k} = {trial.condition[k]}")
    out.append(f"channels = {','.join(CHANNELS)}")
    for name in CHANNELS:
        sig = trial.channel(name)
        out += [f"[channel {name}]", f"fs = {sig.fs!r}", f"t0 = {sig.t0!r}", f"n = {len(sig)}"]
        out += map(repr, sig.samples.tolist())
    out += ["[reports]", f"n = {len(trial.reports)}", ",".join(REPORT_COLUMNS)]
    for r in trial.reports:
        out.append(",".join([_fmt(r.t)] + [_fmt(getattr(r, e)) for e in EMOTIONS]
                            + [_fmt(r.comfort), _fmt(r.uncomfort)]))
    out.append(TRIAL_END)
    return "\n".join(out) + "\n"


class _Lines:
    """Line cursor that knows each line's byte offset."""

    def __init__(self, data: bytes):
        self.lines = data.split(b"\n")
        if self.lines and self.lines[-1] == b"":
            self.lines.pop()
        self.offsets = []
        pos = 0
        for ln in self.lines:
            self.offsets.append(pos)
            pos += len(ln) + 1
        self.size = len(data)
        self.i = 0

    def eof(self):
        return self.i >= len(self.lines)

    def next(self, what="line"):
        if self.eof():
            raise ParseError(f"unexpected end of file while reading {what}", line=self.i + 1, offset=self.size)
        ln = self.lines[self.i].decode("utf-8")
        self.i += 1
        return ln

    def error(self, msg):
        j = max(self.i - 1, 0)
        return ParseError(msg, line=j + 1, offset=self.offsets[j] if j < len(self.offsets) else self.size)

    def key_value(self, key):
        ln = self.next(key)
        k, sep, v = ln.partition(" = ")
        if not sep or k != key:
            raise self.error(f"expected '{key} = ...', found {ln[:40]!r}")
        return v


def parse_trial(data: bytes | str) -> TrialRecord:
    if isinstance(data, str):
        data = data.encode("utf-8")
    cur = _Lines(data)
    if cur.next("magic") != TRIAL_MAGIC:
        raise cur.error("not a trial file")
    check_version(cur.key_value("format_version"), TRIAL_VERSION, "trial")
    subject = cur.key_value("subject_id")
    trial = cur.key_value("trial_id")
    condition = {}
    while True:
        ln = cur.next("header")
        if ln.startswith("condition."):
            k, _, v = ln[len("condition."):].partition(" = ")
            condition[k] = v
            continue
        k, _, v = ln.partition(" = ")
        if k != "channels":
            raise cur.error(f"expected channels line, found {ln[:40]!r}")
        names = v.split(",")
        break
    if sorted(names) != sorted(CHANNELS):
        raise cur.error(f"trial needs channels {CHANNELS}, found {names}")
    sigs = {}
    for _ in names:
        head = cur.next("channel header")
        if not (head.startswith("[channel ") and head.endswith("]")):
            raise cur.error(f"expected channel block, found {head[:40]!r}")
        name = head[len("[channel "):-1]
        try:
            fs = float(cur.key_value("fs"))
            t0 = float(cur.key_value("t0"))
            n = int(cur.key_value("n"))
        except ValueError as exc:
            raise cur.error(f"bad channel header: {exc}") from None
        vals = np.empty(n)
        for j in range(n):
            ln = cur.next(f"sample {j} of channel {name}")
            try:
                vals[j] = float(ln)
            except ValueError:
                raise cur.error(f"bad sample value {ln[:40]!r} in channel {name}") from None
        sigs[name] = Signal(vals, fs, t0)
    if cur.next("reports header") != "[reports]":
        raise cur.error("expected [reports] block")
    try:
        n_reports = int(cur.key_value("n"))
    except ValueError as exc:
        raise cur.error(f"bad report count: {exc}") from None
    if tuple(cur.next("report columns").split(",")) != REPORT_COLUMNS:
        raise cur.error("unexpected report columns")
    reports = []
    for j in range(n_reports):
        ln = cur.next(f"report {j}")
        parts = ln.split(",")
        if len(parts) != len(REPORT_COLUMNS):
            raise cur.error(f"report row has {len(parts)} fields, expected {len(REPORT_COLUMNS)}")
        try:
            v = [float(x) if x != "" else None for x in parts]
            reports.append(EmotionReport(*v))
        except (ValueError, TypeError) as exc:
            raise cur.error(f"bad report row: {exc}") from None
    if cur.next("end marker") != TRIAL_END:
        raise cur.error(f"expected {TRIAL_END} after the last report")
    if not cur.eof():
        cur.next()
        raise cur.error(f"unexpected content after {TRIAL_END}")
    return TrialRecord(subject, trial, condition, sigs["ecg"], sigs["gsr"], sigs["pupil"], reports)


def save_trial(trial: TrialRecord, path):
    atomic_write(path, serialize_trial(trial))


def load_trial(path) -> TrialRecord:
    return parse_trial(Path(path).read_bytes())


def trial_paths(directory):
    return sorted(Path(directory).glob("*.trial"))


# feature tables ------------------------------------------------------------

def save_features(samples, path):
    buf = io.StringIO()
    buf.write(f"# comfort-index features format_version={FEATURES_VERSION}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(FEATURE_COLUMNS)
    for s in samples:
        r = s.report
        w.writerow([s.subject_id, s.trial_id, repr(float(r.t)), repr(float(s.coverage))]
                   + [repr(float(x)) for x in s.features]
                   + [repr(float(getattr(r, e))) for e in EMOTIONS]
                   + [repr(float(r.comfort)), _fmt(r.uncomfort)])
    atomic_write(path, buf.getvalue())


def load_features(path) -> list[WindowedSample]:
    data = Path(path).read_text(encoding="utf-8")
    lines = data.splitlines()
    if not lines or not lines[0].startswith("# comfort-index features"):
        raise ParseError("not a feature table", line=1, offset=0)
    check_version(lines[0].rpartition("=")[2], FEATURES_VERSION, "feature table")
    rows = list(csv.reader(lines[1:]))
    if not rows or tuple(rows[0]) != FEATURE_COLUMNS:
        raise ParseError("unexpected feature table columns", line=2)
    out = []
    nf = len(FEATURE_NAMES)
    for i, row in enumerate(rows[1:], start=3):
        if len(row) != len(FEATURE_COLUMNS):
            raise ParseError(f"row has {len(row)} fields, expected {len(FEATURE_COLUMNS)}", line=i)
        try:
            t, cov = float(row[2]), float(row[3])
            feats = np.array([float(x) for x in row[4:4 + nf]])
            emo = [float(x) for x in row[4 + nf:4 + nf + 4]]
            comfort = float(row[-2])
            unc = float(row[-1]) if row[-1] != "" else None
            rep = EmotionReport(t, *emo, comfort, unc)
        except ValueError as exc:
            raise ParseError(f"bad value: {exc}", line=i) from None
        out.append(WindowedSample(feats, rep, row[0], row[1], cov))
    return out


# bundles and other JSON documents ------------------------------------------

def dumps_json(doc) -> str:
    return json.dumps(doc, sort_keys=True, indent=1, allow_nan=False) + "\n"


def save_json_doc(doc: dict, path, kind: str, version: str = BUNDLE_VERSION):
    atomic_write(path, dumps_json({"format": kind, "format_version": version, **doc}))


def load_json_doc(path, kind: str, version: str = BUNDLE_VERSION) -> dict:
    raw = Path(path).read_bytes()
    try:
        doc = json.loads(raw)
    except json.JSONDecodeError as exc:
        raise ParseError(f"malformed JSON: {exc.msg}", line=exc.lineno, offset=exc.pos) from None
    if doc.get("format") != kind:
        raise ParseError(f"expected a {kind} document, found {doc.get('format')!r}")
    check_version(doc.get("format_version", "?"), version, kind)
    return doc


def save_bundle(pipeline, path):
    save_json_doc(pipeline.to_dict(), path, BUNDLE_FORMAT)


def load_bundle(path):
    from .pipeline import PipelineModel

    return PipelineModel.from_dict(load_json_doc(path, BUNDLE_FORMAT))


# prediction logs and traces ------------------------------------------------

def write_prediction_log(path, rows, header=None):
    """Append rows to a CSV log, writing the header when the file is new.

    The existing content plus the new rows are written to a temp file and
    swapped in, so readers never observe a partial row.
    """
    from .pipeline import PREDICTION_LOG_COLUMNS

    header = header or PREDICTION_LOG_COLUMNS
    path = Path(path)
    old = path.read_text(encoding="utf-8") if path.exists() else ""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    if not old:
        w.writerow(header)
    for r in rows:
        w.writerow([repr(float(x)) if isinstance(x, (float, np.floating)) else x for x in r])
    atomic_write(path, old + buf.getvalue())


def write_csv(path, header, rows):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow([repr(float(x)) if isinstance(x, (float, np.floating)) else x for x in r])
    atomic_write(path, buf.getvalue())


def read_csv(path):
    with open(path, newline="", encoding="utf-8") as f:
        rows = list(csv.reader(f))
    return rows[0], rows[1:]


# key = value config files ---------------------------------------------------

def _coerce(v: str):
    low = v.strip().lower()
    if low in ("true", "yes", "on"):
        return True
    if low in ("false", "no", "off"):
        return False
    for cast in (int, float):
        try:
            return cast(v)
        except ValueError:
            pass
    if "," in v:
        return tuple(_coerce(x.strip()) for x in v.split(",") if x.strip())
    return v.strip()


def load_config(path) -> dict:
    """Flat ``key = value`` file (``#`` comments) into a dict of typed values."""
    parser = configparser.ConfigParser(interpolation=None, comment_prefixes=("#", ";"))
    parser.optionxform = str
    try:
        parser.read_string("[config]\n" + Path(path).read_text(encoding="utf-8"))
    except configparser.Error as exc:
        raise ParseError(f"bad config file {path}: {exc}") from None
    return {k: _coerce(v) for k, v in parser["config"].items()}
