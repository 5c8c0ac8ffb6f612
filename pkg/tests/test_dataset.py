import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from paralingua.dataset import (
    FeatureTable,
    FrameMatrix,
    StandardizerModel,
    apply_standardizer,
    compute_deltas,
    fit_standardizer,
    load_external_features,
    load_feature_table,
    load_frame_matrix,
    load_labels,
    load_manifest,
    save_feature_table,
    save_frame_matrix,
)
from paralingua.errors import AlignmentError, FormatError, IntegrityError, ParameterError

finite = st.floats(-1e6, 1e6, allow_nan=False, allow_infinity=False)


def frames_strategy(max_t=30, max_d=4):
    return st.tuples(st.integers(1, max_t), st.integers(1, max_d)).flatmap(
        lambda s: arrays(np.float64, s, elements=finite)
    )


def write(tmp_path, name, text):
    p = tmp_path / name
    p.write_text(text, encoding="utf-8")
    return str(p)


def regression_delta_oracle(x, window):
    """Direct loop over the regression-slope definition with clamped indices."""
    T, D = x.shape
    out = np.zeros((T, D))
    denom = 2 * sum(w * w for w in range(1, window + 1))
    for t in range(T):
        for w in range(1, window + 1):
            out[t] += w * (x[min(t + w, T - 1)] - x[max(t - w, 0)])
    return out / denom


# -- manifest -----------------------------------------------------------------


def test_manifest_short_header(tmp_path):
    path = write(tmp_path, "m.csv", "id,speaker,split,mask,frames\n"
                 "a,s1,train,clear,a.csv\nb,s1,dev,mask,b.csv\nc,s2,test,,c.csv\n")
    m = load_manifest(path)
    assert len(m) == 3
    assert m.task_names == ["mask"]
    assert m.records[0].frame_feature_path == str(tmp_path / "a.csv")
    assert m.records[2].labels == {}


def test_manifest_duplicate_id(tmp_path):
    path = write(tmp_path, "m.csv", "utterance_id,speaker_id,split\nu1,s,train\nu1,s,dev\n")
    with pytest.raises(IntegrityError):
        load_manifest(path)


def test_manifest_missing_label(tmp_path):
    path = write(tmp_path, "m.csv", "utterance_id,speaker_id,split,arousal\nu1,s,train,\n")
    with pytest.raises(FormatError, match="missing label arousal"):
        load_manifest(path)


@pytest.mark.parametrize("text, match", [
    ("utterance_id,split\nu1,train\n", "speaker_id"),
    ("utterance_id,speaker_id,split\nu1,,train\n", "speaker_id"),
    ("utterance_id,speaker_id,split\nu1,s,holdout\n", "split"),
])
def test_manifest_format_errors(tmp_path, text, match):
    with pytest.raises(FormatError, match=match):
        load_manifest(write(tmp_path, "m.csv", text))


def test_manifest_extfeat_and_alignment(tmp_path):
    path = write(tmp_path, "m.csv", "utterance_id,speaker_id,split,alignment_id,extfeat:bert,valence\n"
                 "u1,s,train,ali1,bert.csv,low\nu2,s,train,,bert.csv,high\n")
    m = load_manifest(path)
    assert m.task_names == ["valence"]
    assert m.records[0].alignment_present and not m.records[1].alignment_present
    assert m.records[0].external_feature_paths == {"bert": str(tmp_path / "bert.csv")}


def test_external_feature_table(tmp_path):
    write(tmp_path, "bert.csv", "utterance_id,f0,f1\nu2,3,4\nu1,1,2\n")
    m = load_manifest(write(tmp_path, "m.csv", "utterance_id,speaker_id,split,extfeat:bert\n"
                            "u1,s,train,bert.csv\nu2,s,train,bert.csv\n"))
    t = load_external_features(m, "bert")
    assert t.utterance_ids == ["u1", "u2"]
    np.testing.assert_array_equal(t.vectors, [[1, 2], [3, 4]])


# -- frame matrices -------------------------------------------------------------


def test_load_frame_matrix(tmp_path):
    m = load_frame_matrix(write(tmp_path, "f.csv", "1,2\n3,4\n"))
    assert (m.n_frames, m.dim) == (2, 2)
    np.testing.assert_array_equal(m.frames, [[1, 2], [3, 4]])


def test_load_frame_matrix_empty(tmp_path):
    with pytest.raises(FormatError, match="no frames"):
        load_frame_matrix(write(tmp_path, "f.csv", ""))


def test_load_frame_matrix_ragged(tmp_path):
    with pytest.raises(FormatError, match="ragged row 2"):
        load_frame_matrix(write(tmp_path, "f.csv", "1,2\n3\n"))


def test_load_frame_matrix_non_numeric(tmp_path):
    with pytest.raises(FormatError, match="row 2, column 2"):
        load_frame_matrix(write(tmp_path, "f.csv", "1,2\n3,x\n"))


@settings(max_examples=50, deadline=None)
@given(frames_strategy())
def test_frame_matrix_roundtrip_bit_identical(tmp_path_factory, x):
    d = tmp_path_factory.mktemp("rt")
    m = FrameMatrix("u", x)
    save_frame_matrix(m, d / "a.csv")
    m2 = load_frame_matrix(str(d / "a.csv"))
    save_frame_matrix(m2, d / "b.csv")
    assert np.array_equal(m.frames, m2.frames)
    assert (d / "a.csv").read_bytes() == (d / "b.csv").read_bytes()


def test_feature_table_roundtrip(tmp_path):
    t = FeatureTable(["a", "b"], np.array([[0.1, 1e-300], [-2.5, 3.0]]), "x")
    save_feature_table(t, tmp_path / "t.csv")
    assert (tmp_path / "t.csv").read_text().splitlines()[0] == "utterance_id,f0,f1"
    t2 = load_feature_table(str(tmp_path / "t.csv"))
    assert t2.utterance_ids == ["a", "b"] and np.array_equal(t.vectors, t2.vectors)


def test_feature_table_select_missing():
    t = FeatureTable(["a"], np.zeros((1, 2)))
    with pytest.raises(AlignmentError, match="'b'"):
        t.select(["b"])


def test_labels_csv(tmp_path):
    assert load_labels(write(tmp_path, "l.csv", "utterance_id,label\na,x\nb,y\n")) == {"a": "x", "b": "y"}


# -- deltas ---------------------------------------------------------------------


def test_deltas_constant_is_zero():
    m = FrameMatrix("u", np.tile([1.0, -2.0, 3.0], (7, 1)))
    np.testing.assert_array_equal(compute_deltas(m).frames, 0.0)


def test_deltas_ramp_interior_is_one():
    m = FrameMatrix("u", np.arange(10.0)[:, None])
    d = compute_deltas(m, 2).frames[:, 0]
    np.testing.assert_allclose(d[2:-2], 1.0, rtol=0, atol=1e-15)
    # edges are damped by replication; the oracle gives them
    np.testing.assert_allclose(d, regression_delta_oracle(m.frames, 2)[:, 0], atol=1e-15)


def test_deltas_single_frame():
    np.testing.assert_array_equal(compute_deltas(FrameMatrix("u", [[4.0, 5.0]])).frames, [[0.0, 0.0]])


def test_deltas_bad_window():
    with pytest.raises(ParameterError):
        compute_deltas(FrameMatrix("u", [[1.0]]), 0)


@settings(max_examples=60, deadline=None)
@given(frames_strategy(), st.integers(1, 4))
def test_deltas_match_loop_oracle(x, window):
    got = compute_deltas(FrameMatrix("u", x), window).frames
    np.testing.assert_allclose(got, regression_delta_oracle(x, window), rtol=1e-9, atol=1e-6)


@settings(max_examples=60, deadline=None)
@given(frames_strategy(), st.integers(1, 3), arrays(np.float64, 4, elements=st.floats(-1e3, 1e3)))
def test_deltas_shift_equivariant(x, window, offset):
    c = offset[: x.shape[1]]
    a = compute_deltas(FrameMatrix("u", x), window).frames
    b = compute_deltas(FrameMatrix("u", x + c), window).frames
    np.testing.assert_allclose(a, b, atol=1e-6 * (1 + np.abs(x).max() + np.abs(c).max()))


# -- standardizer ---------------------------------------------------------------


def test_fit_standardizer_hand_values():
    s = fit_standardizer([FrameMatrix("a", [[0.0]]), FrameMatrix("b", [[2.0]])])
    assert s.mean.tolist() == [1.0] and s.std.tolist() == [1.0] and s.fitted_on == 2


def test_fit_standardizer_single_frame():
    s = fit_standardizer([FrameMatrix("a", [[5.0, 7.0]])])
    assert s.mean.tolist() == [5.0, 7.0] and s.std.tolist() == [0.0, 0.0]


def test_fit_standardizer_constant():
    s = fit_standardizer([FrameMatrix("a", [[1.0, 1.0], [1.0, 1.0]])])
    assert s.std.tolist() == [0.0, 0.0]


def test_fit_standardizer_dim_mismatch():
    with pytest.raises(AlignmentError):
        fit_standardizer([FrameMatrix("a", [[1.0]]), FrameMatrix("b", [[1.0, 2.0]])])


def test_apply_standardizer():
    s = StandardizerModel(np.array([1.0]), np.array([1.0]), 2)
    assert apply_standardizer(s, FrameMatrix("u", [[3.0]])).frames.tolist() == [[2.0]]
    z = StandardizerModel(np.array([1.0]), np.array([0.0]), 2)
    assert apply_standardizer(z, FrameMatrix("u", [[9.0], [-4.0]])).frames.tolist() == [[0.0], [0.0]]
    with pytest.raises(AlignmentError):
        apply_standardizer(s, FrameMatrix("u", [[1.0, 2.0]]))


def test_standardizer_json_roundtrip(tmp_path):
    s = fit_standardizer([FrameMatrix("a", [[0.1, 3.0], [0.7, -1.0]])])
    s.save(tmp_path / "s.json")
    obj = json.loads((tmp_path / "s.json").read_text())
    assert set(obj) == {"format_version", "mean", "std", "fitted_on"}
    s2 = StandardizerModel.load(str(tmp_path / "s.json"))
    assert np.array_equal(s.mean, s2.mean) and np.array_equal(s.std, s2.std)


def test_standardize_own_data_gives_zero_mean_unit_std(rng):
    mats = [FrameMatrix(str(i), rng.normal(3.0, 5.0, size=(rng.integers(5, 40), 3))) for i in range(6)]
    s = fit_standardizer(mats)
    pooled = np.concatenate([apply_standardizer(s, m).frames for m in mats])
    np.testing.assert_allclose(pooled.mean(axis=0), 0.0, atol=1e-9)
    np.testing.assert_allclose(pooled.std(axis=0), 1.0, atol=1e-9)
