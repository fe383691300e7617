"""Synthetic clustered embeddings standing in for the deep feature extractors.

Every subject gets one random unit-norm class centre per stream. Each image,
and each frame of a video, is ``normalize(centre + noise_sigma * N(0, I))``
drawn independently per stream. Subjects are split into training and test
sets per protocol split; test subjects enrol their first template in the
gallery and query with the rest, except for a held-out fraction whose
templates are all probes (the non-mated probes of open-set search).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import MediaKind, MediaRecord, SplitRole


@dataclass(frozen=True)
class SyntheticSpec:
    n_subjects: int = 50
    media_per_subject: int = 12
    frames_per_video: int = 4
    dim: int = 64
    noise_sigma: float = 0.3
    seed: int = 0
    templates_per_subject: int = 2
    video_fraction: float = 0.5
    train_fraction: float = 0.5
    open_fraction: float = 0.2
    n_splits: int = 1
    # per-stream dims; default splits ``dim`` two to one like 2048 + 1024
    stream_dims: tuple[int, ...] | None = None

    def __post_init__(self):
        for name in ("n_subjects", "media_per_subject", "frames_per_video", "templates_per_subject", "n_splits"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")
        if self.dim < 2:
            raise ValueError("dim must be >= 2")
        if self.noise_sigma < 0:
            raise ValueError("noise_sigma must be >= 0")
        if self.media_per_subject < self.templates_per_subject:
            raise ValueError("every template needs at least one media")
        for name in ("video_fraction", "train_fraction", "open_fraction"):
            if not 0.0 <= getattr(self, name) <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1]")
        if self.stream_dims is not None and sum(self.stream_dims) != self.dim:
            raise ValueError(f"stream dims {self.stream_dims} do not add up to {self.dim}")

    @property
    def streams(self) -> tuple[int, ...]:
        if self.stream_dims is not None:
            return tuple(self.stream_dims)
        first = max(1, (2 * self.dim) // 3)
        return (first, self.dim - first)

    def stream_names(self) -> list[str]:
        return [f"s{i}" for i in range(len(self.streams))]


def _unit_rows(x: np.ndarray) -> np.ndarray:
    return x / np.linalg.norm(x, axis=-1, keepdims=True)


def _sample(rng: np.random.Generator, centre: np.ndarray, sigma: float) -> np.ndarray:
    if sigma == 0:
        return centre.copy()
    return _unit_rows(centre + sigma * rng.standard_normal(centre.shape))


def generate_synthetic(spec: SyntheticSpec) -> tuple[list[MediaRecord], list[dict[str, np.ndarray]]]:
    """Return metadata records and one media_id -> float32 vector map per stream."""
    rng = np.random.default_rng(spec.seed)
    dims = spec.streams
    centres = [_unit_rows(rng.standard_normal((spec.n_subjects, d))) for d in dims]

    features: list[dict[str, np.ndarray]] = [{} for _ in dims]
    # per subject: list of templates, each a list of (media_id, kind, video_id)
    layout: list[list[list[tuple[str, MediaKind, str | None]]]] = []
    media_no = video_no = 0
    for s in range(spec.n_subjects):
        templates = [[] for _ in range(spec.templates_per_subject)]
        for j in range(spec.media_per_subject):
            owner = templates[j % spec.templates_per_subject]
            is_video = rng.random() < spec.video_fraction
            if is_video:
                video_id = f"v{video_no:06d}"
                video_no += 1
                n_items = spec.frames_per_video
            else:
                video_id, n_items = None, 1
            for _ in range(n_items):
                media_id = f"m{media_no:07d}"
                media_no += 1
                for k, feats in enumerate(features):
                    feats[media_id] = _sample(rng, centres[k][s], spec.noise_sigma).astype(np.float32)
                owner.append((media_id, MediaKind.FRAME if is_video else MediaKind.IMAGE, video_id))
        layout.append(templates)

    records: list[MediaRecord] = []
    for split_id in range(1, spec.n_splits + 1):
        split_rng = np.random.default_rng([spec.seed, split_id])
        order = split_rng.permutation(spec.n_subjects)
        n_train = int(round(spec.train_fraction * spec.n_subjects))
        test = order[n_train:]
        n_open = int(round(spec.open_fraction * len(test)))
        roles: dict[int, list[SplitRole]] = {}
        for s in order[:n_train]:
            roles[int(s)] = [SplitRole.TRAIN] * spec.templates_per_subject
        for i, s in enumerate(test):
            if i < n_open:
                roles[int(s)] = [SplitRole.PROBE] * spec.templates_per_subject
            else:
                roles[int(s)] = [SplitRole.GALLERY] + [SplitRole.PROBE] * (spec.templates_per_subject - 1)
        for s in range(spec.n_subjects):
            subject_id = f"s{s:04d}"
            for t, items in enumerate(layout[s]):
                template_id = f"t{s:04d}_{t}"
                for media_id, kind, video_id in items:
                    records.append(MediaRecord(media_id, kind, template_id, subject_id, video_id,
                                               roles[s][t], split_id))
    return records, features


def cosine_statistics(records: list[MediaRecord], fused: dict[str, np.ndarray]) -> tuple[float, float]:
    """Mean within-subject and between-subject cosine similarity over distinct media pairs."""
    subjects: dict[str, str] = {}
    for r in records:
        subjects.setdefault(r.media_id, r.subject_id)
    ids = sorted(subjects)
    X = _unit_rows(np.stack([np.asarray(fused[m], dtype=np.float64) for m in ids]))
    labels = np.array([subjects[m] for m in ids])
    sim = X @ X.T
    same = labels[:, None] == labels[None, :]
    off = ~np.eye(len(ids), dtype=bool)
    return float(sim[same & off].mean()), float(sim[~same].mean())
