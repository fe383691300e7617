"""Shared data model: media records, encodings, templates and protocol splits."""

from __future__ import annotations

import enum
from collections import Counter
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np

UNIT_NORM_ATOL = 1e-5


class TdffError(Exception):
    """Base class for every error raised by this package."""


class ZeroVectorError(TdffError):
    pass


class DimMismatchError(TdffError):
    pass


class EmptyVideoError(TdffError):
    pass


class MixedTemplateError(TdffError):
    pass


class EmptyTemplateError(TdffError):
    pass


class EmptyScoresError(TdffError):
    pass


class MediaKind(str, enum.Enum):
    IMAGE = "image"
    FRAME = "frame"


class SplitRole(str, enum.Enum):
    TRAIN = "train"
    GALLERY = "gallery"
    PROBE = "probe"


@dataclass(frozen=True)
class MediaRecord:
    """One row of the metadata table.

    ``split_role``/``split_id`` are optional so that records can be used
    outside of a protocol (e.g. when building a single template).
    """

    media_id: str
    kind: MediaKind
    template_id: str
    subject_id: str
    video_id: str | None = None
    split_role: SplitRole | None = None
    split_id: int | None = None


@dataclass(frozen=True)
class MediaEncoding:
    """A unit-norm vector for a single image or an average-pooled video.

    ``source_id`` is the media_id for an image and the video_id for a video;
    ``frame_count`` is 0 for images.
    """

    source_id: str
    vector: np.ndarray = field(repr=False)
    is_video: bool = False
    frame_count: int = 0

    def __post_init__(self):
        if self.is_video and self.frame_count < 1:
            raise ValueError("pooled video needs frame_count >= 1")
        self.vector.setflags(write=False)


@dataclass(frozen=True)
class Template:
    template_id: str
    subject_id: str
    encodings: tuple[MediaEncoding, ...]

    def __post_init__(self):
        if not self.encodings:
            raise EmptyTemplateError(f"template {self.template_id} has no encodings")
        videos = [e.source_id for e in self.encodings if e.is_video]
        if len(videos) != len(set(videos)):
            raise ValueError(f"template {self.template_id} pools a video twice")

    def __len__(self) -> int:
        return len(self.encodings)

    @property
    def dim(self) -> int:
        return self.encodings[0].vector.shape[0]

    def matrix(self) -> np.ndarray:
        """Encodings stacked row-wise, shape (N_a, dim)."""
        return np.stack([e.vector for e in self.encodings])


@dataclass(frozen=True)
class ProtocolSplit:
    split_id: int
    training: tuple[Template, ...]
    gallery: tuple[Template, ...]
    probe: tuple[Template, ...]
    verification_pairs: tuple[tuple[str, str, bool], ...] = ()

    def __post_init__(self):
        g = {t.template_id for t in self.gallery}
        p = {t.template_id for t in self.probe}
        shared = g & p
        if shared:
            raise ValueError(f"split {self.split_id}: templates both gallery and probe: {sorted(shared)}")
        known = g | p | {t.template_id for t in self.training}
        for a, b, _ in self.verification_pairs:
            for tid in (a, b):
                if tid not in known:
                    raise KeyError(f"split {self.split_id}: pair references unknown template {tid}")

    def templates(self) -> dict[str, Template]:
        return {t.template_id: t for t in (*self.training, *self.gallery, *self.probe)}


def is_unit(v: np.ndarray, atol: float = UNIT_NORM_ATOL) -> bool:
    return abs(float(np.linalg.norm(v)) - 1.0) <= atol


@dataclass(frozen=True)
class Issue:
    kind: str
    media_id: str
    detail: str = ""


@dataclass
class ValidationReport:
    issues: list[Issue]

    @property
    def ok(self) -> bool:
        return not self.issues

    def counts(self) -> Counter:
        return Counter(i.kind for i in self.issues)

    def __str__(self) -> str:
        if self.ok:
            return "ok: no issues"
        lines = [f"{len(self.issues)} issue(s)"]
        lines += [f"  {i.kind}: {i.media_id} {i.detail}".rstrip() for i in self.issues]
        return "\n".join(lines)


def validate_dataset(
    records: Iterable[MediaRecord],
    features: Mapping[str, np.ndarray],
    dim: int | None = None,
) -> ValidationReport:
    """Collect every consistency problem between metadata and features.

    Nothing is raised. When ``dim`` is not given the most common feature
    dimension (smallest on ties) is taken as the expected one. Issues are
    returned sorted, so the result does not depend on record order.
    """
    records = list(records)
    issues: list[Issue] = []

    dims = Counter(int(np.shape(v)[0]) if np.ndim(v) == 1 else -1 for v in features.values())
    if dim is None and dims:
        dim = min(dims, key=lambda d: (-dims[d], d))

    seen: Counter = Counter((r.split_id, r.media_id) for r in records)
    for (split_id, media_id), n in seen.items():
        if n > 1:
            issues.append(Issue("duplicate-media", media_id, f"{n} rows in split {split_id}"))

    referenced = {r.media_id for r in records}
    for media_id in referenced - set(features):
        issues.append(Issue("missing-feature", media_id))
    for media_id in set(features) - referenced:
        issues.append(Issue("orphan-feature", media_id))

    for media_id, v in features.items():
        v = np.asarray(v)
        if v.ndim != 1 or v.shape[0] != dim:
            issues.append(Issue("dim-mismatch", media_id, f"got {v.shape}, expected ({dim},)"))
        if not np.all(np.isfinite(v)):
            issues.append(Issue("non-finite", media_id))

    video_owner: dict[tuple, set[str]] = {}
    for r in records:
        if r.kind is MediaKind.FRAME:
            if not r.video_id:
                issues.append(Issue("frame-without-video", r.media_id))
            else:
                video_owner.setdefault((r.split_id, r.video_id), set()).add(r.template_id)
        elif r.video_id:
            issues.append(Issue("image-with-video", r.media_id, r.video_id))
    for (split_id, video_id), owners in video_owner.items():
        if len(owners) > 1:
            issues.append(Issue("video-spans-templates", video_id, ",".join(sorted(owners))))

    issues.sort(key=lambda i: (i.kind, i.media_id, i.detail))
    return ValidationReport(issues)


def group_by_template(records: Sequence[MediaRecord]) -> dict[str, list[MediaRecord]]:
    """Group records by template_id, keeping first-appearance order."""
    groups: dict[str, list[MediaRecord]] = {}
    for r in records:
        groups.setdefault(r.template_id, []).append(r)
    return groups
