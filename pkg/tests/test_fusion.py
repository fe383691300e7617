import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from oracles import elementwise_mean, unit
from tdff.core import DimMismatchError, EmptyVideoError, MediaKind, MediaRecord, MixedTemplateError, ZeroVectorError
from tdff.fusion import (
    FeatureStreamSpec,
    build_template,
    concat_streams,
    fuse_media,
    l2_normalize,
    mean_frames,
    pool_video,
)

finite = st.floats(-100, 100, allow_nan=False, allow_infinity=False)


def test_normalize_examples():
    np.testing.assert_allclose(l2_normalize([3.0, 4.0]), [0.6, 0.8], rtol=0, atol=1e-15)
    np.testing.assert_array_equal(l2_normalize([0.0, 1.0]), [0.0, 1.0])


def test_normalize_random_3072():
    v = np.random.default_rng(3).normal(size=3072)
    assert abs(np.linalg.norm(l2_normalize(v)) - 1.0) <= 1e-6


def test_normalize_zero_vector():
    with pytest.raises(ZeroVectorError):
        l2_normalize(np.zeros(5))
    with pytest.raises(ZeroVectorError):
        l2_normalize([1e-13, 0.0])


@settings(max_examples=200, deadline=None)
@given(arrays(np.float64, st.integers(1, 40), elements=finite), st.floats(1e-3, 1e3))
def test_normalize_scale_invariant(v, c):
    if np.linalg.norm(v) < 1e-6:
        return
    u = l2_normalize(v)
    np.testing.assert_allclose(l2_normalize(c * v), u, atol=1e-6, rtol=0)
    assert abs(np.linalg.norm(u) - 1.0) <= 1e-6
    # direction preserved: positive multiple
    k = np.argmax(np.abs(v))
    assert u[k] / v[k] > 0
    np.testing.assert_allclose(u * np.linalg.norm(v), v, atol=1e-9 * np.linalg.norm(v))


def test_concat_examples():
    spec = FeatureStreamSpec((("a", 2), ("b", 3)))
    np.testing.assert_array_equal(concat_streams([[1, 0], [0, 0, 1]], spec), [1, 0, 0, 0, 1])
    single = FeatureStreamSpec((("only", 3),))
    np.testing.assert_array_equal(concat_streams([[0.5, 2.0, -1.0]], single), [0.5, 2.0, -1.0])


def test_concat_2048_plus_1024():
    spec = FeatureStreamSpec((("R", 2048), ("G", 1024)))
    assert spec.fused_dim == 3072
    rng = np.random.default_rng(0)
    out = concat_streams([rng.normal(size=2048), rng.normal(size=1024)], spec)
    assert out.shape == (3072,)


def test_concat_dim_mismatch_names_stream():
    spec = FeatureStreamSpec((("R", 4), ("G", 2)))
    with pytest.raises(DimMismatchError, match="G"):
        concat_streams([np.ones(4), np.ones(3)], spec)
    with pytest.raises(DimMismatchError):
        concat_streams([np.ones(4)], spec)


@settings(max_examples=100, deadline=None)
@given(st.lists(st.integers(1, 6), min_size=1, max_size=4), st.randoms(use_true_random=False))
def test_concat_then_slice_is_exact(dims, rnd):
    spec = FeatureStreamSpec(tuple((f"s{i}", d) for i, d in enumerate(dims)))
    parts = [np.array([rnd.uniform(-5, 5) for _ in range(d)]) for d in dims]
    fused = concat_streams(parts, spec)
    assert fused.shape == (spec.fused_dim,)
    for off, part in zip(spec.offsets(), parts):
        assert np.array_equal(fused[off:off + len(part)], part)


def test_pool_examples():
    np.testing.assert_array_equal(pool_video([[1.0, 0.0]]), [1.0, 0.0])
    np.testing.assert_allclose(pool_video([[1.0, 0.0], [0.0, 1.0]]), [0.7071, 0.7071], atol=1e-4)


def test_pool_matches_elementwise_mean():
    rng = np.random.default_rng(11)
    frames = [unit(rng.normal(size=16)) for _ in range(7)]
    np.testing.assert_allclose(mean_frames(frames), elementwise_mean(frames), atol=1e-9, rtol=0)
    np.testing.assert_allclose(pool_video(frames), unit(elementwise_mean(frames)), atol=1e-9, rtol=0)


def test_pool_long_video_uses_tree_sum():
    rng = np.random.default_rng(5)
    frames = rng.normal(size=(1001, 8))
    np.testing.assert_allclose(mean_frames(frames), np.mean(frames, axis=0), atol=1e-12)


def test_pool_errors():
    with pytest.raises(EmptyVideoError):
        pool_video([])
    with pytest.raises(ZeroVectorError):
        pool_video([[1.0, 0.0], [-1.0, 0.0]])


@settings(max_examples=100, deadline=None)
@given(st.integers(1, 30), st.integers(1, 12), st.integers(0, 2**32 - 1))
def test_pool_permutation_invariant(n, d, seed):
    rng = np.random.default_rng(seed)
    frames = rng.normal(size=(n, d)) + 3.0
    perm = rng.permutation(n)
    np.testing.assert_allclose(mean_frames(frames[perm]), mean_frames(frames), atol=1e-9, rtol=0)


def _records(spec):
    """spec: list of ('img', media) or ('vid', video, [frames])"""
    out = []
    for item in spec:
        if item[0] == "img":
            out.append(MediaRecord(item[1], MediaKind.IMAGE, "T", "S"))
        else:
            for f in item[2]:
                out.append(MediaRecord(f, MediaKind.FRAME, "T", "S", item[1]))
    return out


def test_template_counts_images_and_videos():
    rng = np.random.default_rng(2)
    recs = _records([("img", "i1"), ("vid", "v1", ["f1", "f2", "f3"]), ("img", "i2")])
    fused = {r.media_id: l2_normalize(rng.normal(size=6)) for r in recs}
    t = build_template(recs, fused)
    assert len(t) == 3
    assert [e.source_id for e in t.encodings] == ["i1", "v1", "i2"]
    assert [e.frame_count for e in t.encodings] == [0, 3, 0]
    assert all(abs(np.linalg.norm(e.vector) - 1) < 1e-12 for e in t.encodings)


def test_single_image_template():
    v = l2_normalize([1.0, 2.0, 2.0])
    t = build_template(_records([("img", "i")]), {"i": v})
    assert len(t) == 1
    np.testing.assert_allclose(t.encodings[0].vector, v, atol=1e-15)


def test_video_only_template_matches_pooling_oracle():
    rng = np.random.default_rng(8)
    recs = _records([("vid", "va", ["a1", "a2", "a3", "a4"]), ("vid", "vb", ["b1", "b2"])])
    fused = {r.media_id: l2_normalize(rng.normal(size=5)) for r in recs}
    t = build_template(recs, fused)
    assert len(t) == 2
    for enc, frames in zip(t.encodings, (["a1", "a2", "a3", "a4"], ["b1", "b2"])):
        expected = unit(elementwise_mean([fused[f] for f in frames]))
        np.testing.assert_allclose(enc.vector, expected, atol=1e-6)


def test_interleaved_frames_pool_per_video():
    recs = _records([("vid", "v1", ["a"]), ("vid", "v2", ["b"]), ("vid", "v1", ["c"])])
    fused = {"a": np.array([1.0, 0.0]), "b": np.array([0.0, 1.0]), "c": np.array([0.0, 1.0])}
    t = build_template(recs, fused)
    assert [(e.source_id, e.frame_count) for e in t.encodings] == [("v1", 2), ("v2", 1)]


def test_mixed_template_rejected():
    recs = [MediaRecord("a", MediaKind.IMAGE, "T1", "S"), MediaRecord("b", MediaKind.IMAGE, "T2", "S")]
    with pytest.raises(MixedTemplateError):
        build_template(recs, {"a": np.ones(2), "b": np.ones(2)})


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_template_permutation_gives_same_multiset(seed):
    rng = np.random.default_rng(seed)
    spec = [("img", f"i{k}") for k in range(rng.integers(0, 4))]
    spec += [("vid", f"v{k}", [f"v{k}f{j}" for j in range(rng.integers(1, 4))]) for k in range(rng.integers(1, 3))]
    recs = _records(spec)
    fused = {r.media_id: l2_normalize(rng.normal(size=4)) for r in recs}
    a = build_template(recs, fused)
    shuffled = [recs[i] for i in rng.permutation(len(recs))]
    b = build_template(shuffled, fused)
    key = lambda e: e.source_id
    for ea, eb in zip(sorted(a.encodings, key=key), sorted(b.encodings, key=key)):
        assert ea.source_id == eb.source_id and ea.frame_count == eb.frame_count
        np.testing.assert_allclose(ea.vector, eb.vector, atol=1e-9)
    assert len(a) == len(b)


def test_fuse_media_normalizes_each_stream_then_the_concatenation():
    spec = FeatureStreamSpec((("R", 2), ("G", 1)))
    fused = fuse_media([{"m": np.array([3.0, 4.0])}, {"m": np.array([-7.0])}], spec)
    # streams become [0.6, 0.8] and [-1]; concatenation norm sqrt(2)
    np.testing.assert_allclose(fused["m"], np.array([0.6, 0.8, -1.0]) / np.sqrt(2), atol=1e-15)
