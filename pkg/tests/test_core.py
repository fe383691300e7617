import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from tdff.core import (
    EmptyTemplateError,
    MediaEncoding,
    MediaKind,
    MediaRecord,
    ProtocolSplit,
    Template,
    validate_dataset,
)


def rec(mid, tid="t1", sid="s1", kind=MediaKind.IMAGE, video=None, split=1):
    return MediaRecord(mid, kind, tid, sid, video, None, split)


def test_consistent_dataset_is_ok():
    records = [rec("a"), rec("b"), rec("c")]
    feats = {m: np.ones(4) for m in "abc"}
    report = validate_dataset(records, feats)
    assert report.ok
    assert report.issues == []


def test_missing_feature_is_named():
    records = [rec("a"), rec("b"), rec("c")]
    feats = {"a": np.ones(4), "c": np.ones(4)}
    report = validate_dataset(records, feats)
    assert [(i.kind, i.media_id) for i in report.issues] == [("missing-feature", "b")]


def test_dimension_mismatch_against_declared_dim():
    records = [rec("a"), rec("b"), rec("c")]
    feats = {"a": np.ones(2048), "b": np.ones(2048), "c": np.ones(1024)}
    report = validate_dataset(records, feats, dim=2048)
    assert [(i.kind, i.media_id) for i in report.issues] == [("dim-mismatch", "c")]


def test_reports_rather_than_raises():
    records = [rec("a"), rec("a"), rec("f", kind=MediaKind.FRAME), rec("i", video="v9"),
               rec("g", tid="t1", kind=MediaKind.FRAME, video="v1"),
               rec("h", tid="t2", kind=MediaKind.FRAME, video="v1")]
    feats = {"a": np.array([1.0, np.nan]), "zzz": np.ones(2), "f": np.ones(2), "i": np.ones(2),
             "g": np.ones(2), "h": np.ones(2)}
    kinds = validate_dataset(records, feats).counts()
    assert kinds == {"duplicate-media": 1, "non-finite": 1, "orphan-feature": 1,
                     "frame-without-video": 1, "image-with-video": 1, "video-spans-templates": 1}


@settings(max_examples=50, deadline=None)
@given(st.permutations(list(range(8))), st.integers(0, 3))
def test_validation_is_order_insensitive_and_idempotent(perm, n_drop):
    records = [rec(f"m{i}", tid=f"t{i % 3}") for i in range(8)]
    records.append(rec("m0"))
    feats = {f"m{i}": np.ones(3) for i in range(n_drop, 10)}
    feats["m9"] = np.ones(5)
    base = validate_dataset(records, feats)
    shuffled = [records[i] for i in perm] + records[8:]
    again = validate_dataset(shuffled, feats)
    assert sorted(base.issues, key=repr) == sorted(again.issues, key=repr)
    assert validate_dataset(shuffled, feats).issues == again.issues


def test_template_rejects_empty_and_double_pooled_video():
    with pytest.raises(EmptyTemplateError):
        Template("t", "s", ())
    v = np.array([1.0, 0.0])
    with pytest.raises(ValueError):
        Template("t", "s", (MediaEncoding("v1", v, True, 2), MediaEncoding("v1", v, True, 3)))
    with pytest.raises(ValueError):
        MediaEncoding("v2", v, is_video=True, frame_count=0)


def test_encodings_are_read_only():
    e = MediaEncoding("m", np.array([0.6, 0.8]))
    with pytest.raises(ValueError):
        e.vector[0] = 1.0


def test_protocol_split_checks():
    t = lambda tid: Template(tid, "s", (MediaEncoding("m" + tid, np.array([1.0, 0.0])),))
    with pytest.raises(ValueError):
        ProtocolSplit(1, (), (t("a"),), (t("a"),))
    with pytest.raises(KeyError):
        ProtocolSplit(1, (), (t("a"),), (t("b"),), (("a", "zz", False),))
    split = ProtocolSplit(1, (t("x"),), (t("a"),), (t("b"),), (("b", "a", True),))
    assert set(split.templates()) == {"x", "a", "b"}
