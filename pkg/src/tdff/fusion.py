"""First-stage fusion: normalization, stream concatenation, video pooling, template assembly."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from .core import (
    DimMismatchError,
    EmptyVideoError,
    MediaEncoding,
    MediaKind,
    MediaRecord,
    MixedTemplateError,
    Template,
    ZeroVectorError,
)

EPS = 1e-12


@dataclass(frozen=True)
class FeatureStreamSpec:
    """Ordered extractor streams, e.g. ``(("R", 2048), ("G", 1024))``."""

    streams: tuple[tuple[str, int], ...]

    def __post_init__(self):
        if not self.streams:
            raise ValueError("need at least one stream")
        for name, dim in self.streams:
            if dim < 1:
                raise ValueError(f"stream {name} has non-positive dim {dim}")

    @property
    def fused_dim(self) -> int:
        return sum(d for _, d in self.streams)

    @property
    def names(self) -> list[str]:
        return [n for n, _ in self.streams]

    def offsets(self) -> list[int]:
        out, acc = [], 0
        for _, d in self.streams:
            out.append(acc)
            acc += d
        return out


def l2_normalize(v) -> np.ndarray:
    v = np.asarray(v, dtype=np.float64)
    if not np.all(np.isfinite(v)):
        raise ValueError("cannot normalize a non-finite vector")
    norm = np.linalg.norm(v)
    if norm <= EPS:
        raise ZeroVectorError(f"vector norm {norm:.3g} is below {EPS}")
    return v / norm


def concat_streams(parts: Sequence, spec: FeatureStreamSpec) -> np.ndarray:
    """Concatenate per-stream vectors in spec order. The result is not normalized."""
    if len(parts) != len(spec.streams):
        raise DimMismatchError(f"expected {len(spec.streams)} stream parts, got {len(parts)}")
    out = []
    for part, (name, dim) in zip(parts, spec.streams):
        part = np.asarray(part, dtype=np.float64)
        if part.shape != (dim,):
            raise DimMismatchError(f"stream {name}: expected dim {dim}, got shape {part.shape}")
        out.append(part)
    return np.concatenate(out)


def _pairwise_sum(rows: np.ndarray) -> np.ndarray:
    n = rows.shape[0]
    if n <= 8:
        acc = rows[0].copy()
        for r in rows[1:]:
            acc += r
        return acc
    half = n // 2
    return _pairwise_sum(rows[:half]) + _pairwise_sum(rows[half:])


def mean_frames(frames: Sequence) -> np.ndarray:
    """Elementwise mean of equally sized frame vectors (tree summation)."""
    if len(frames) == 0:
        raise EmptyVideoError("video has no frames")
    rows = np.asarray(np.stack([np.asarray(f, dtype=np.float64) for f in frames]))
    if rows.ndim != 2:
        raise DimMismatchError("frames differ in dimension")
    if not np.all(np.isfinite(rows)):
        raise ValueError("non-finite frame feature")
    return _pairwise_sum(rows) / rows.shape[0]


def pool_video(frames: Sequence) -> np.ndarray:
    """Average the frame features of one video and return the unit-norm result."""
    try:
        return l2_normalize(mean_frames(frames))
    except ZeroVectorError as exc:
        raise ZeroVectorError(f"video mean is degenerate: {exc}") from None


def fuse_media(stream_features: Sequence[Mapping[str, np.ndarray]], spec: FeatureStreamSpec,
               media_ids: Sequence[str] | None = None) -> dict[str, np.ndarray]:
    """Normalize each stream, concatenate, normalize again.

    ``stream_features`` holds one media_id -> vector map per stream, in spec
    order. Only ``media_ids`` are fused when given, otherwise the ids of the
    first stream.
    """
    if len(stream_features) != len(spec.streams):
        raise DimMismatchError(f"expected {len(spec.streams)} feature maps, got {len(stream_features)}")
    if media_ids is None:
        media_ids = list(stream_features[0])
    fused = {}
    for mid in media_ids:
        parts = []
        for feats, (name, _) in zip(stream_features, spec.streams):
            if mid not in feats:
                raise KeyError(f"stream {name} has no feature for media {mid}")
            parts.append(l2_normalize(feats[mid]))
        fused[mid] = l2_normalize(concat_streams(parts, spec))
    return fused


def build_template(records: Sequence[MediaRecord], fused: Mapping[str, np.ndarray]) -> Template:
    """One encoding per image and one pooled encoding per distinct video.

    Encodings follow the order in which each image / video first appears in
    ``records``.
    """
    if not records:
        raise MixedTemplateError("no records given")
    tid, sid = records[0].template_id, records[0].subject_id
    order: list[tuple[bool, str]] = []
    frames: dict[str, list[np.ndarray]] = {}
    for r in records:
        if r.template_id != tid or r.subject_id != sid:
            raise MixedTemplateError(
                f"record {r.media_id} is ({r.template_id}, {r.subject_id}), expected ({tid}, {sid})")
        if r.media_id not in fused:
            raise KeyError(f"template {tid}: no fused feature for media {r.media_id}")
        if r.kind is MediaKind.FRAME:
            if r.video_id not in frames:
                frames[r.video_id] = []
                order.append((True, r.video_id))
            frames[r.video_id].append(fused[r.media_id])
        else:
            order.append((False, r.media_id))

    encodings = []
    for is_video, key in order:
        if is_video:
            vec = pool_video(frames[key])
            encodings.append(MediaEncoding(key, vec, is_video=True, frame_count=len(frames[key])))
        else:
            encodings.append(MediaEncoding(key, l2_normalize(fused[key])))
    return Template(tid, sid, tuple(encodings))
