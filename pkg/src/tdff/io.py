"""File formats: binary feature files, SVM model records, metadata/score CSVs, reports.

Feature file layout (little-endian)::

    b"TDFF" | version u16 | dim u32 | count u64 |
    count x (len u32 | media_id utf-8 | dim x float)

Version 1 stores float32 vectors. Version 2 stores float64 and is used for
fused intermediates so that they reload bit-exactly.

SVM model record::

    b"TSVM" | version u16 | dim u32 | dim x f64 weights | f64 bias | len u32 | owner utf-8

A model file is a plain concatenation of such records.

Template file::

    b"TDTP" | version u16 | dim u32 | count u64 |
    count x (template_id str | subject_id str | n u32 |
             n x (source_id str | is_video u8 | frame_count u32 | dim x f64))

where str is a u32 length followed by utf-8 bytes.
"""

from __future__ import annotations

import csv
import json
import os
import struct
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from .core import MediaEncoding, MediaKind, MediaRecord, SplitRole, TdffError, Template
from .scoring import PairScore
from .svm import SvmModel

FEATURE_MAGIC = b"TDFF"
MODEL_MAGIC = b"TSVM"
MODEL_VERSION = 1
TEMPLATE_MAGIC = b"TDTP"
TEMPLATE_VERSION = 1
_FEATURE_DTYPES = {1: np.dtype("<f4"), 2: np.dtype("<f8")}
_HEADER = struct.Struct("<4sHIQ")
_MODEL_HEADER = struct.Struct("<4sHI")
_U32 = struct.Struct("<I")
_F64 = struct.Struct("<d")
_ENC = struct.Struct("<BI")

METADATA_COLUMNS = ["template_id", "subject_id", "media_id", "kind", "video_id", "split_role", "split_id"]
SCORE_COLUMNS = ["probe_template", "gallery_template", "score"]


class FormatError(TdffError):
    pass


class BadMagicError(FormatError):
    pass


class UnsupportedVersionError(FormatError):
    pass


class TruncatedError(FormatError):
    """``offset`` is where the incomplete field starts."""

    def __init__(self, offset: int, what: str = "data", size: int | None = None):
        tail = "" if size is None else f" (file is {size} bytes)"
        super().__init__(f"truncated {what} at byte offset {offset}{tail}")
        self.offset = offset


class DuplicateMediaIdError(FormatError):
    pass


class MetadataError(FormatError):
    pass


class _Reader:
    def __init__(self, data: bytes):
        self.data = memoryview(data)
        self.pos = 0

    def take(self, n: int, what: str) -> memoryview:
        if self.pos + n > len(self.data):
            raise TruncatedError(self.pos, what, len(self.data))
        chunk = self.data[self.pos:self.pos + n]
        self.pos += n
        return chunk

    def string(self, what: str) -> str:
        (n,) = _U32.unpack(self.take(4, f"{what} length"))
        return bytes(self.take(n, what)).decode("utf-8")

    @property
    def done(self) -> bool:
        return self.pos >= len(self.data)


# -- feature files -----------------------------------------------------------

def write_feature_file(features: Mapping[str, np.ndarray], path: os.PathLike, dim: int | None = None,
                       dtype=np.float32) -> None:
    dtype = np.dtype(dtype)
    version = {np.dtype(np.float32): 1, np.dtype(np.float64): 2}.get(dtype)
    if version is None:
        raise ValueError(f"feature files hold float32 or float64, not {dtype}")
    if dim is None:
        if not features:
            raise ValueError("dim is required for an empty feature map")
        dim = len(next(iter(features.values())))
    if dim < 1:
        raise ValueError("dim must be positive")
    le = _FEATURE_DTYPES[version]
    parts = [_HEADER.pack(FEATURE_MAGIC, version, dim, len(features))]
    for media_id, vec in features.items():
        vec = np.asarray(vec)
        if vec.shape != (dim,):
            raise ValueError(f"media {media_id}: shape {vec.shape}, expected ({dim},)")
        key = str(media_id).encode("utf-8")
        parts += [_U32.pack(len(key)), key, vec.astype(le).tobytes()]
    Path(path).write_bytes(b"".join(parts))


def read_feature_file(path: os.PathLike) -> dict[str, np.ndarray]:
    """Read a feature file; vectors keep their stored precision (float32 or float64)."""
    r = _Reader(Path(path).read_bytes())
    magic, version, dim, count = _HEADER.unpack(r.take(_HEADER.size, "header"))
    if magic != FEATURE_MAGIC:
        raise BadMagicError(f"{path}: bad magic {magic!r}")
    if version not in _FEATURE_DTYPES:
        raise UnsupportedVersionError(f"{path}: feature file version {version}")
    if dim == 0:
        raise FormatError(f"{path}: dim is 0")
    dt = _FEATURE_DTYPES[version]
    out: dict[str, np.ndarray] = {}
    for i in range(count):
        media_id = r.string(f"media id of record {i}")
        raw = r.take(dim * dt.itemsize, f"vector of record {i}")
        if media_id in out:
            raise DuplicateMediaIdError(f"{path}: media id {media_id!r} appears twice")
        out[media_id] = np.frombuffer(raw, dtype=dt).astype(dt.newbyteorder("="))
    if not r.done:
        raise FormatError(f"{path}: {len(r.data) - r.pos} trailing bytes after {count} records")
    return out


def feature_dim(path: os.PathLike) -> int:
    with open(path, "rb") as fh:
        head = fh.read(_HEADER.size)
    if len(head) < _HEADER.size:
        raise TruncatedError(0, "header", len(head))
    return _HEADER.unpack(head)[2]


# -- SVM models --------------------------------------------------------------

def model_to_bytes(model: SvmModel) -> bytes:
    owner = model.owner_template.encode("utf-8")
    return b"".join([
        _MODEL_HEADER.pack(MODEL_MAGIC, MODEL_VERSION, model.dim),
        np.asarray(model.weights, dtype="<f8").tobytes(),
        _F64.pack(model.bias),
        _U32.pack(len(owner)),
        owner,
    ])


def _read_model(r: _Reader) -> SvmModel:
    magic, version, dim = _MODEL_HEADER.unpack(r.take(_MODEL_HEADER.size, "model header"))
    if magic != MODEL_MAGIC:
        raise BadMagicError(f"bad model magic {magic!r} at byte {r.pos - _MODEL_HEADER.size}")
    if version != MODEL_VERSION:
        raise UnsupportedVersionError(f"model record version {version}")
    weights = np.frombuffer(r.take(8 * dim, "model weights"), dtype="<f8").astype(np.float64)
    (bias,) = _F64.unpack(r.take(8, "model bias"))
    owner = r.string("model owner")
    return SvmModel(weights, bias, owner)


def model_from_bytes(data: bytes) -> SvmModel:
    r = _Reader(data)
    model = _read_model(r)
    if not r.done:
        raise FormatError("trailing bytes after model record")
    return model


def write_models(models: Iterable[SvmModel], path: os.PathLike) -> None:
    Path(path).write_bytes(b"".join(model_to_bytes(m) for m in models))


def read_models(path: os.PathLike) -> dict[str, SvmModel]:
    r = _Reader(Path(path).read_bytes())
    out: dict[str, SvmModel] = {}
    while not r.done:
        m = _read_model(r)
        out[m.owner_template] = m
    return out


# -- templates ---------------------------------------------------------------

def _str(value: str) -> bytes:
    raw = value.encode("utf-8")
    return _U32.pack(len(raw)) + raw


def write_templates(templates: Sequence[Template], path: os.PathLike) -> None:
    dim = templates[0].dim if templates else 0
    parts = [_HEADER.pack(TEMPLATE_MAGIC, TEMPLATE_VERSION, dim, len(templates))]
    for t in templates:
        parts += [_str(t.template_id), _str(t.subject_id), _U32.pack(len(t.encodings))]
        for e in t.encodings:
            if e.vector.shape != (dim,):
                raise ValueError(f"template {t.template_id}: encoding dim {e.vector.shape} != {dim}")
            parts += [_str(e.source_id), _ENC.pack(int(e.is_video), e.frame_count),
                      np.asarray(e.vector, dtype="<f8").tobytes()]
    Path(path).write_bytes(b"".join(parts))


def read_templates(path: os.PathLike) -> list[Template]:
    r = _Reader(Path(path).read_bytes())
    magic, version, dim, count = _HEADER.unpack(r.take(_HEADER.size, "header"))
    if magic != TEMPLATE_MAGIC:
        raise BadMagicError(f"{path}: bad magic {magic!r}")
    if version != TEMPLATE_VERSION:
        raise UnsupportedVersionError(f"{path}: template file version {version}")
    out = []
    for _ in range(count):
        tid = r.string("template id")
        sid = r.string("subject id")
        (n,) = _U32.unpack(r.take(4, "encoding count"))
        encs = []
        for _ in range(n):
            src = r.string("encoding source")
            is_video, frames = _ENC.unpack(r.take(_ENC.size, "encoding flags"))
            vec = np.frombuffer(r.take(8 * dim, "encoding vector"), dtype="<f8").astype(np.float64)
            encs.append(MediaEncoding(src, vec, bool(is_video), frames))
        out.append(Template(tid, sid, tuple(encs)))
    if not r.done:
        raise FormatError(f"{path}: trailing bytes after {count} templates")
    return out


# -- metadata ----------------------------------------------------------------

def write_metadata(records: Sequence[MediaRecord], path: os.PathLike) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(METADATA_COLUMNS)
        for r in records:
            w.writerow([r.template_id, r.subject_id, r.media_id, r.kind.value, r.video_id or "",
                        r.split_role.value if r.split_role else "",
                        "" if r.split_id is None else r.split_id])


def read_metadata(path: os.PathLike) -> list[MediaRecord]:
    records = []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or set(reader.fieldnames) != set(METADATA_COLUMNS):
            raise MetadataError(f"{path}: header must be {','.join(METADATA_COLUMNS)}, got {reader.fieldnames}")
        for line, row in enumerate(reader, start=2):
            try:
                kind = MediaKind(row["kind"])
                role = SplitRole(row["split_role"]) if row["split_role"] else None
                split_id = int(row["split_id"]) if row["split_id"] else None
            except ValueError as exc:
                raise MetadataError(f"{path}:{line}: {exc}") from None
            if not row["media_id"] or not row["template_id"] or not row["subject_id"]:
                raise MetadataError(f"{path}:{line}: empty identifier")
            records.append(MediaRecord(
                media_id=row["media_id"], kind=kind, template_id=row["template_id"],
                subject_id=row["subject_id"], video_id=row["video_id"] or None,
                split_role=role, split_id=split_id))
    return records


def read_pairs(path: os.PathLike) -> dict[int, list[tuple[str, str]]]:
    """Optional verification comparison list: ``split_id,template_a,template_b``."""
    out: dict[int, list[tuple[str, str]]] = {}
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames != ["split_id", "template_a", "template_b"]:
            raise MetadataError(f"{path}: header must be split_id,template_a,template_b")
        for row in reader:
            out.setdefault(int(row["split_id"]), []).append((row["template_a"], row["template_b"]))
    return out


# -- scores, reports, curves -------------------------------------------------

def write_scores(scores: Iterable[PairScore], path: os.PathLike) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(SCORE_COLUMNS)
        for s in scores:
            w.writerow([s.probe_template, s.gallery_template, format(s.score, ".17g")])


def read_scores(path: os.PathLike) -> list[tuple[str, str, float]]:
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != SCORE_COLUMNS:
            raise FormatError(f"{path}: header must be {','.join(SCORE_COLUMNS)}")
        return [(a, b, float(s)) for a, b, s in reader]


def write_report(report, json_path: os.PathLike, text_path: os.PathLike | None = None) -> None:
    Path(json_path).write_text(json.dumps(report.to_dict(), indent=2) + "\n", encoding="utf-8")
    if text_path is not None:
        Path(text_path).write_text(report.to_text(), encoding="utf-8")


def write_roc_csv(points, path: os.PathLike) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["threshold", "far", "tar"])
        for p in points:
            w.writerow([format(p.threshold, ".17g"), format(p.far, ".17g"), format(p.tar, ".17g")])


def write_cmc_csv(cmc: Sequence[float], path: os.PathLike) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["rank", "accuracy"])
        for k, acc in enumerate(cmc, start=1):
            w.writerow([k, format(acc, ".17g")])
