"""Synthetic corpora with known class structure, for demos and end-to-end checks."""

import os

import numpy as np

from ._io import write_text
from .dataset import FrameMatrix, Manifest, UtteranceRecord, save_frame_matrix


def make_corpus(n_speakers=40, utts_per_speaker=6, dim=4, separation=6.0, n_components=2,
                frames=(40, 80), classes=("low", "high"), task="label", seed=0):
    """Frame matrices drawn from one diagonal GMM per class.

    The class GMMs share component layout; class ``c`` is shifted by
    ``c * separation`` unit standard deviations along every dimension's
    diagonal direction, so component means of neighbouring classes are
    ``separation`` sigma apart. Each speaker gets utterances of every class in
    turn. Returns ``(manifest, {utterance_id: FrameMatrix})``.
    """
    rng = np.random.default_rng(seed)
    base = rng.normal(scale=2.0, size=(n_components, dim))
    direction = np.ones(dim) / np.sqrt(dim)
    records, mats = [], {}
    for s in range(n_speakers):
        spk = f"spk{s:03d}"
        offset = rng.normal(scale=0.3, size=dim)
        for u in range(utts_per_speaker):
            cls = u % len(classes)
            uid = f"{spk}_u{u:02d}"
            T = int(rng.integers(frames[0], frames[1] + 1))
            comp = rng.integers(n_components, size=T)
            mu = base[comp] + cls * separation * direction + offset
            mats[uid] = FrameMatrix(uid, mu + rng.normal(size=(T, dim)))
            records.append(UtteranceRecord(uid, spk, "train", {task: classes[cls]}))
    return Manifest(records, [task]), mats


def write_corpus(manifest, mats, directory):
    """Write frame CSVs plus a manifest.csv pointing at them; returns the manifest path."""
    os.makedirs(os.path.join(directory, "frames"), exist_ok=True)
    lines = [",".join(["utterance_id", "speaker_id", "split", "frame_feature_path"] + manifest.task_names)]
    for r in manifest.records:
        rel = f"frames/{r.utterance_id}.csv"
        save_frame_matrix(mats[r.utterance_id], os.path.join(directory, rel))
        lines.append(",".join([r.utterance_id, r.speaker_id, r.split, rel] +
                              [r.labels.get(t, "") for t in manifest.task_names]))
    path = os.path.join(directory, "manifest.csv")
    write_text(path, "\n".join(lines) + "\n")
    return path


def shuffled_labels(manifest, task, seed):
    """Copy of ``manifest`` with the ``task`` labels randomly permuted."""
    labels = [r.labels[task] for r in manifest.records]
    perm = np.random.default_rng(seed).permutation(len(labels))
    records = [
        UtteranceRecord(r.utterance_id, r.speaker_id, r.split, {**r.labels, task: labels[j]})
        for r, j in zip(manifest.records, perm)
    ]
    return Manifest(records, manifest.task_names)
