"""Corpus access: manifests, frame matrices, feature tables, deltas and z-scoring.

All numeric files are plain CSV written with shortest round-trip decimals, so
a load/save/load cycle is bit-identical.
"""

import csv
import os
from dataclasses import dataclass, field

import numpy as np

from ._io import check_version, dump_json, fmt, load_json, to_list, write_text
from .errors import AlignmentError, DataError, FormatError, IntegrityError, ParameterError

SPLITS = ("train", "dev", "test")
REQUIRED_COLUMNS = ("utterance_id", "speaker_id", "split")
RESERVED_COLUMNS = REQUIRED_COLUMNS + ("frame_feature_path", "alignment_id")
# short spellings accepted in manifest headers
COLUMN_ALIASES = {
    "id": "utterance_id",
    "speaker": "speaker_id",
    "frames": "frame_feature_path",
    "alignment": "alignment_id",
}
EXTFEAT_PREFIX = "extfeat:"
DEFAULT_FRAME_STEP = 0.010


@dataclass(frozen=True)
class UtteranceRecord:
    utterance_id: str
    speaker_id: str
    split: str
    labels: dict = field(default_factory=dict)
    frame_feature_path: str | None = None
    alignment_present: bool = False
    external_feature_paths: dict = field(default_factory=dict)


@dataclass(frozen=True)
class Manifest:
    records: list
    task_names: list

    def __len__(self):
        return len(self.records)

    @property
    def utterance_ids(self):
        return [r.utterance_id for r in self.records]

    def by_split(self, *splits):
        return [r for r in self.records if r.split in splits]

    def labels(self, task, records=None):
        records = self.records if records is None else records
        return [r.labels.get(task) for r in records]

    def speakers(self):
        """Distinct speaker ids in first-appearance order."""
        return list(dict.fromkeys(r.speaker_id for r in self.records))


def load_manifest(path):
    """Parse a manifest CSV into a :class:`Manifest`.

    Relative frame/feature paths are resolved against the manifest's folder.
    """
    if not os.path.exists(path):
        raise FileNotFoundError(path)
    base = os.path.dirname(os.path.abspath(path))
    with open(path, encoding="utf-8", newline="") as f:
        rows = list(csv.reader(f))
    if not rows:
        raise FormatError(f"{path}: empty manifest, header row required")
    header = [COLUMN_ALIASES.get(h.strip(), h.strip()) for h in rows[0]]
    for col in REQUIRED_COLUMNS:
        if col not in header:
            raise FormatError(f"{path}: missing required column {col}")
    if len(set(header)) != len(header):
        raise FormatError(f"{path}: duplicate column names in header")
    task_names = [
        h for h in header if h not in RESERVED_COLUMNS and not h.startswith(EXTFEAT_PREFIX)
    ]

    def resolve(p):
        return p if os.path.isabs(p) else os.path.join(base, p)

    records, seen = [], set()
    for lineno, row in enumerate(rows[1:], start=2):
        if not any(cell.strip() for cell in row):
            continue
        if len(row) != len(header):
            raise FormatError(f"{path}: line {lineno} has {len(row)} cells, expected {len(header)}")
        cells = {h: c.strip() for h, c in zip(header, row)}
        uid, spk, split = cells["utterance_id"], cells["speaker_id"], cells["split"]
        if not uid:
            raise FormatError(f"{path}: line {lineno}: empty utterance_id")
        if uid in seen:
            raise IntegrityError(f"{path}: line {lineno}: duplicate utterance_id {uid!r}")
        seen.add(uid)
        if not spk:
            raise FormatError(f"{path}: line {lineno}: empty speaker_id")
        if split not in SPLITS:
            raise FormatError(f"{path}: line {lineno}: split {split!r} not in {SPLITS}")
        labels = {t: cells[t] for t in task_names if cells[t]}
        if split != "test":
            for t in task_names:
                if t not in labels:
                    raise FormatError(f"{path}: line {lineno}: missing label {t}")
        frames = cells.get("frame_feature_path") or None
        ext = {
            h[len(EXTFEAT_PREFIX):]: resolve(cells[h])
            for h in header
            if h.startswith(EXTFEAT_PREFIX) and cells[h]
        }
        records.append(
            UtteranceRecord(
                utterance_id=uid,
                speaker_id=spk,
                split=split,
                labels=labels,
                frame_feature_path=resolve(frames) if frames else None,
                alignment_present=bool(cells.get("alignment_id")),
                external_feature_paths=ext,
            )
        )
    return Manifest(records=records, task_names=task_names)


@dataclass(frozen=True)
class FrameMatrix:
    utterance_id: str
    frames: np.ndarray
    frame_step: float = DEFAULT_FRAME_STEP

    def __post_init__(self):
        a = np.asarray(self.frames, dtype=float)
        if a.ndim != 2 or a.shape[0] < 1 or a.shape[1] < 1:
            raise DataError(f"{self.utterance_id}: frame matrix must be T x D with T, D >= 1")
        if not np.all(np.isfinite(a)):
            raise DataError(f"{self.utterance_id}: non-finite frame values")
        a.setflags(write=False)
        object.__setattr__(self, "frames", a)

    @property
    def n_frames(self):
        return self.frames.shape[0]

    @property
    def dim(self):
        return self.frames.shape[1]

    def with_frames(self, frames):
        return FrameMatrix(self.utterance_id, frames, self.frame_step)


def _parse_numeric_rows(path):
    with open(path, encoding="utf-8") as f:
        lines = f.read().splitlines()
    rows, width = [], None
    for i, line in enumerate(lines, start=1):
        if not line.strip():
            continue
        cells = line.split(",")
        if width is None:
            width = len(cells)
        elif len(cells) != width:
            raise FormatError(f"{path}: ragged row {i}")
        try:
            rows.append([float(c) for c in cells])
        except ValueError:
            for j, c in enumerate(cells, start=1):
                try:
                    float(c)
                except ValueError:
                    raise FormatError(f"{path}: non-numeric cell at row {i}, column {j}: {c!r}") from None
    return rows


def load_frame_matrix(path, frame_step=DEFAULT_FRAME_STEP, utterance_id=None):
    if not os.path.exists(path):
        raise FileNotFoundError(path)
    rows = _parse_numeric_rows(path)
    if not rows:
        raise FormatError(f"{path}: no frames")
    uid = utterance_id if utterance_id is not None else os.path.splitext(os.path.basename(path))[0]
    try:
        return FrameMatrix(uid, np.array(rows, dtype=float), frame_step)
    except DataError as exc:
        raise FormatError(f"{path}: {exc}") from exc


def save_frame_matrix(m, path):
    write_text(path, "".join(",".join(fmt(v) for v in row) + "\n" for row in m.frames))


def load_utterance_frames(records, frame_step=DEFAULT_FRAME_STEP):
    """Frame matrices for manifest records, in record order."""
    out = []
    for r in records:
        if r.frame_feature_path is None:
            raise FormatError(f"utterance {r.utterance_id}: no frame_feature_path in manifest")
        out.append(load_frame_matrix(r.frame_feature_path, frame_step, r.utterance_id))
    return out


def compute_deltas(m, window=2):
    """First-order regression deltas with edge-frame replication.

    delta_t = sum_w w * (x[t+w] - x[t-w]) / (2 * sum_w w**2), w = 1..window.
    """
    if int(window) != window or window < 1:
        raise ParameterError(f"delta window must be a positive integer, got {window}")
    x = m.frames
    T = x.shape[0]
    padded = np.concatenate([np.repeat(x[:1], window, axis=0), x, np.repeat(x[-1:], window, axis=0)])
    num = np.zeros_like(x)
    for w in range(1, window + 1):
        num += w * (padded[window + w:window + w + T] - padded[window - w:window - w + T])
    denom = 2.0 * sum(w * w for w in range(1, window + 1))
    return m.with_frames(num / denom)


@dataclass(frozen=True)
class StandardizerModel:
    mean: np.ndarray
    std: np.ndarray
    fitted_on: int

    def to_json(self):
        return {
            "format_version": 1,
            "mean": to_list(self.mean),
            "std": to_list(self.std),
            "fitted_on": int(self.fitted_on),
        }

    @classmethod
    def from_json(cls, obj, path="<json>"):
        check_version(obj, path)
        try:
            return cls(np.asarray(obj["mean"], float), np.asarray(obj["std"], float), int(obj["fitted_on"]))
        except (KeyError, TypeError, ValueError) as exc:
            raise FormatError(f"{path}: malformed standardizer ({exc})") from exc

    def save(self, path):
        dump_json(self.to_json(), path)

    @classmethod
    def load(cls, path):
        return cls.from_json(load_json(path), path)


def fit_standardizer(matrices):
    """Pooled per-dimension mean and population std over all frames supplied."""
    matrices = list(matrices)
    if not matrices:
        raise DataError("fit_standardizer needs at least one frame matrix")
    dims = {m.dim for m in matrices}
    if len(dims) != 1:
        raise AlignmentError(f"frame dimension mismatch across matrices: {sorted(dims)}")
    pooled = np.concatenate([m.frames for m in matrices])
    mean = pooled.mean(axis=0)
    std = np.sqrt(((pooled - mean) ** 2).mean(axis=0))
    return StandardizerModel(mean, std, pooled.shape[0])


def _scale(s, x):
    x = np.asarray(x, dtype=float)
    if x.shape[-1] != s.mean.shape[0]:
        raise AlignmentError(f"dimension mismatch: standardizer D={s.mean.shape[0]}, input D={x.shape[-1]}")
    safe = np.where(s.std > 0, s.std, 1.0)
    return np.where(s.std > 0, (x - s.mean) / safe, 0.0)


def apply_standardizer(s, m):
    return m.with_frames(_scale(s, m.frames))


@dataclass(frozen=True)
class FeatureTable:
    utterance_ids: list
    vectors: np.ndarray
    feature_set_name: str = "features"

    def __post_init__(self):
        v = np.asarray(self.vectors, dtype=float)
        if v.ndim == 1 and len(self.utterance_ids) == 0:
            v = v.reshape(0, 0)
        if v.ndim != 2 or v.shape[0] != len(self.utterance_ids):
            raise AlignmentError(
                f"{self.feature_set_name}: {len(self.utterance_ids)} ids but vectors of shape {v.shape}"
            )
        if not np.all(np.isfinite(v)):
            raise DataError(f"{self.feature_set_name}: non-finite feature values")
        if len(set(self.utterance_ids)) != len(self.utterance_ids):
            raise IntegrityError(f"{self.feature_set_name}: duplicate utterance ids")
        object.__setattr__(self, "utterance_ids", list(self.utterance_ids))
        object.__setattr__(self, "vectors", v)

    def __len__(self):
        return len(self.utterance_ids)

    @property
    def dim(self):
        return self.vectors.shape[1]

    def select(self, ids):
        """Rows for ``ids`` in the given order."""
        index = {u: i for i, u in enumerate(self.utterance_ids)}
        rows = []
        for u in ids:
            if u not in index:
                raise AlignmentError(f"{self.feature_set_name}: utterance {u!r} missing")
            rows.append(index[u])
        return FeatureTable(list(ids), self.vectors[rows].reshape(len(rows), self.dim), self.feature_set_name)


def save_feature_table(t, path):
    lines = [",".join(["utterance_id"] + [f"f{i}" for i in range(t.dim)])]
    for uid, row in zip(t.utterance_ids, t.vectors):
        lines.append(",".join([uid] + [fmt(v) for v in row]))
    write_text(path, "\n".join(lines) + "\n")


def load_feature_table(path, name=None):
    if not os.path.exists(path):
        raise FileNotFoundError(path)
    with open(path, encoding="utf-8", newline="") as f:
        rows = [r for r in csv.reader(f) if r]
    if not rows or rows[0][0] != "utterance_id":
        raise FormatError(f"{path}: header must start with utterance_id")
    width = len(rows[0])
    ids, vecs = [], []
    for i, row in enumerate(rows[1:], start=2):
        if len(row) != width:
            raise FormatError(f"{path}: ragged row {i}")
        ids.append(row[0])
        try:
            vecs.append([float(c) for c in row[1:]])
        except ValueError:
            raise FormatError(f"{path}: non-numeric cell in row {i}") from None
    name = name or os.path.splitext(os.path.basename(path))[0]
    try:
        return FeatureTable(ids, np.array(vecs, dtype=float).reshape(len(ids), width - 1), name)
    except (DataError, IntegrityError) as exc:
        raise FormatError(f"{path}: {exc}") from exc


def load_labels(path):
    """``utterance_id,label`` CSV into an ordered {id: label} dict."""
    if not os.path.exists(path):
        raise FileNotFoundError(path)
    with open(path, encoding="utf-8", newline="") as f:
        rows = [r for r in csv.reader(f) if r]
    if not rows or [c.strip() for c in rows[0][:1]] != ["utterance_id"] or len(rows[0]) != 2:
        raise FormatError(f"{path}: header must be utterance_id,label")
    out = {}
    for i, row in enumerate(rows[1:], start=2):
        if len(row) != 2 or not row[1].strip():
            raise FormatError(f"{path}: line {i}: expected utterance_id,label")
        if row[0] in out:
            raise IntegrityError(f"{path}: line {i}: duplicate utterance_id {row[0]!r}")
        out[row[0]] = row[1].strip()
    return out


def save_labels(labels, path):
    write_text(path, "utterance_id,label\n" + "".join(f"{u},{l}\n" for u, l in labels.items()))


def load_external_features(manifest, system):
    """FeatureTable for an ``extfeat:<system>`` manifest column.

    The column may point every row at one shared feature-table CSV, or each
    row at its own single-vector numeric CSV.
    """
    recs = [r for r in manifest.records if system in r.external_feature_paths]
    if not recs:
        raise FormatError(f"manifest has no extfeat:{system} entries")
    paths = {r.external_feature_paths[system] for r in recs}
    if len(paths) == 1:
        return load_feature_table(paths.pop(), system).select([r.utterance_id for r in recs])
    vecs = []
    for r in recs:
        m = load_frame_matrix(r.external_feature_paths[system], utterance_id=r.utterance_id)
        if m.n_frames != 1:
            raise FormatError(f"{r.external_feature_paths[system]}: expected a single feature row")
        vecs.append(m.frames[0])
    dims = {len(v) for v in vecs}
    if len(dims) != 1:
        raise FormatError(f"extfeat:{system}: vectors of differing lengths {sorted(dims)}")
    return FeatureTable([r.utterance_id for r in recs], np.array(vecs), system)
