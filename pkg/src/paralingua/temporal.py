"""Speech tempo and pause statistics from phone-level alignments.

Alignment files hold one segment per line::

    <utterance_id> <start_seconds> <duration_seconds> <token>

Lines of one utterance must be contiguous. ``#`` starts a comment line, and
``!length <utterance_id> <seconds>`` overrides the utterance length, which
otherwise defaults to the end of the last segment.
"""

import math
import os
from dataclasses import dataclass

import numpy as np

from .dataset import FeatureTable
from .errors import FormatError, IntegrityError, ParameterError

DEFAULT_SILENT_TOKENS = frozenset({"sil", "sp", "br"})
DEFAULT_FILLED_TOKENS = frozenset({"fp"})
KINDS = ("phone", "silent_pause", "filled_pause")
SCOPES = ("silent", "filled", "any")
PAUSE_STATS = ("pause_occurrence_rate", "pause_duration_rate", "pause_frequency", "average_pause_duration")
FEATURE_NAMES = ("speech_tempo", "articulation_rate") + tuple(
    f"{scope}_{stat}" for scope in SCOPES for stat in PAUSE_STATS
)
# tolerated floating-point slack when checking segment overlap
_OVERLAP_EPS = 1e-9


@dataclass(frozen=True)
class AlignmentSegment:
    start: float
    duration: float
    token: str
    kind: str

    def __post_init__(self):
        if not self.duration > 0 or not self.start >= 0:
            raise IntegrityError(f"segment {self.token!r}: need start >= 0 and duration > 0")
        if self.kind not in KINDS:
            raise ParameterError(f"unknown segment kind {self.kind!r}")

    @property
    def end(self):
        return self.start + self.duration


@dataclass(frozen=True)
class UtteranceAlignment:
    utterance_id: str
    segments: tuple
    total_length: float

    def __post_init__(self):
        segs = tuple(self.segments)
        for a, b in zip(segs, segs[1:]):
            if b.start < a.end - _OVERLAP_EPS:
                raise IntegrityError(f"{self.utterance_id}: overlap between {a.token!r} and {b.token!r}")
        if segs and self.total_length < segs[-1].end - _OVERLAP_EPS:
            raise IntegrityError(f"{self.utterance_id}: total_length shorter than the last segment end")
        object.__setattr__(self, "segments", segs)

    def scaled(self, c):
        """Copy with every time value multiplied by ``c``."""
        return UtteranceAlignment(
            self.utterance_id,
            tuple(AlignmentSegment(s.start * c, s.duration * c, s.token, s.kind) for s in self.segments),
            self.total_length * c,
        )


@dataclass(frozen=True)
class TemporalFeatureVector:
    speech_tempo: float
    articulation_rate: float
    silent_pause_occurrence_rate: float
    silent_pause_duration_rate: float
    silent_pause_frequency: float
    silent_average_pause_duration: float
    filled_pause_occurrence_rate: float
    filled_pause_duration_rate: float
    filled_pause_frequency: float
    filled_average_pause_duration: float
    any_pause_occurrence_rate: float
    any_pause_duration_rate: float
    any_pause_frequency: float
    any_average_pause_duration: float

    def as_array(self):
        return np.array([getattr(self, n) for n in FEATURE_NAMES])

    def scope(self, name):
        """The four pause statistics of one scope as a dict."""
        return {stat: getattr(self, f"{name}_{stat}") for stat in PAUSE_STATS}


def classify_token(token, silent_tokens, filled_tokens):
    if token in silent_tokens:
        return "silent_pause"
    if token in filled_tokens:
        return "filled_pause"
    return "phone"


def parse_alignment(path, silent_tokens=DEFAULT_SILENT_TOKENS, filled_tokens=DEFAULT_FILLED_TOKENS):
    """Read an alignment file into UtteranceAlignment objects, in file order."""
    silent_tokens, filled_tokens = frozenset(silent_tokens), frozenset(filled_tokens)
    if silent_tokens & filled_tokens:
        raise ParameterError(f"tokens marked both silent and filled: {sorted(silent_tokens & filled_tokens)}")
    if not os.path.exists(path):
        raise FileNotFoundError(path)

    order, segs, lines, lengths = [], {}, {}, {}
    with open(path, encoding="utf-8") as f:
        for lineno, raw in enumerate(f, start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            parts = line.split()
            if parts[0] == "!length":
                if len(parts) != 3:
                    raise FormatError(f"{path}:{lineno}: expected '!length <utterance_id> <seconds>'")
                lengths[parts[1]] = _number(parts[2], path, lineno)
                continue
            if len(parts) != 4:
                raise FormatError(f"{path}:{lineno}: expected 4 fields, got {len(parts)}")
            uid, start, dur, token = parts[0], _number(parts[1], path, lineno), _number(parts[2], path, lineno), parts[3]
            if not order or order[-1] != uid:
                if uid in segs:
                    raise FormatError(f"{path}:{lineno}: lines of utterance {uid!r} are not contiguous")
                order.append(uid)
                segs[uid], lines[uid] = [], []
            try:
                seg = AlignmentSegment(start, dur, token, classify_token(token, silent_tokens, filled_tokens))
            except IntegrityError as exc:
                raise IntegrityError(f"{path}:{lineno}: {exc}") from None
            if segs[uid]:
                prev = segs[uid][-1]
                if seg.start < prev.end - _OVERLAP_EPS:
                    raise IntegrityError(
                        f"{path}: overlap between lines {lines[uid][-1]} and {lineno} of utterance {uid!r}"
                    )
            segs[uid].append(seg)
            lines[uid].append(lineno)

    unknown = set(lengths) - set(segs)
    if unknown:
        raise FormatError(f"{path}: length directive for unknown utterance {sorted(unknown)[0]!r}")
    out = []
    for uid in order:
        total = lengths.get(uid, segs[uid][-1].end)
        out.append(UtteranceAlignment(uid, tuple(segs[uid]), total))
    return out


def _number(text, path, lineno):
    try:
        v = float(text)
    except ValueError:
        raise FormatError(f"{path}:{lineno}: not a number: {text!r}") from None
    if not math.isfinite(v):
        raise FormatError(f"{path}:{lineno}: non-finite number {text!r}")
    return v


def _ratio(num, den):
    return num / den if den > 0 else 0.0


def compute_temporal_features(a):
    """The 14 tempo and pause parameters of one utterance.

    Filled pauses count as phones for speech tempo; articulation rate and
    pause occurrence rate use non-hesitation phones only. Every undefined
    ratio (no pauses, no phones, no speaking time) is reported as 0.
    """
    total = a.total_length
    if not total > 0:
        raise ParameterError(f"{a.utterance_id}: total_length must be positive, got {total}")
    n_phone = sum(1 for s in a.segments if s.kind == "phone")
    count = {
        "silent": sum(1 for s in a.segments if s.kind == "silent_pause"),
        "filled": sum(1 for s in a.segments if s.kind == "filled_pause"),
    }
    dur = {
        "silent": math.fsum(s.duration for s in a.segments if s.kind == "silent_pause"),
        "filled": math.fsum(s.duration for s in a.segments if s.kind == "filled_pause"),
    }
    count["any"] = count["silent"] + count["filled"]
    dur["any"] = dur["silent"] + dur["filled"]

    values = {
        "speech_tempo": (n_phone + count["filled"]) / total,
        "articulation_rate": _ratio(n_phone, total - dur["any"]),
    }
    for scope in SCOPES:
        values[f"{scope}_pause_occurrence_rate"] = _ratio(count[scope], n_phone)
        values[f"{scope}_pause_duration_rate"] = dur[scope] / total
        values[f"{scope}_pause_frequency"] = count[scope] / total
        values[f"{scope}_average_pause_duration"] = _ratio(dur[scope], count[scope])
    return TemporalFeatureVector(**values)


def temporal_feature_table(alignments, name="temporal"):
    return FeatureTable(
        [a.utterance_id for a in alignments],
        np.array([compute_temporal_features(a).as_array() for a in alignments]).reshape(len(alignments), 14),
        name,
    )
