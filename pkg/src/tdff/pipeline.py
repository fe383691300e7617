"""End-to-end orchestration: validate, fuse, build templates, train, score, evaluate.

Every stage can run on its own from the files the previous stage left in
``work_dir``; ``run_pipeline`` chains them in memory and persists the same
files on the way. Parallel work is gathered in identifier order, so outputs
do not depend on the number of threads.
"""

from __future__ import annotations

import contextlib
import logging
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Iterable, Mapping, Sequence, TypeVar

import numpy as np

from . import io
from .config import PipelineConfig
from .core import (
    ProtocolSplit,
    SplitRole,
    MediaRecord,
    TdffError,
    Template,
    ValidationReport,
    group_by_template,
    validate_dataset,
)
from .evaluation import (
    MetricReport,
    aggregate_splits,
    cmc_curve,
    open_set_metrics,
    roc_curve,
    tar_at_far,
)
from .fusion import build_template, fuse_media
from .scoring import FusionConfig, PairScore, score_template_pair
from .svm import NegativeRole, SolverConfig, SvmModel, build_negative_set, train_for_template
from .synth import generate_synthetic

logger = logging.getLogger(__name__)
T = TypeVar("T")


class PipelineError(TdffError):
    def __init__(self, stage: str, message: str):
        super().__init__(f"[{stage}] {message}")
        self.stage = stage


@contextlib.contextmanager
def stage(name: str):
    try:
        yield
    except PipelineError:
        raise
    except (TdffError, OSError, ValueError, KeyError) as exc:
        raise PipelineError(name, f"{type(exc).__name__}: {exc}") from exc


def _pmap(fn: Callable[..., T], items: Sequence, threads: int | None) -> list[T]:
    if threads == 1 or len(items) < 2:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, items))


@dataclass(frozen=True)
class WorkDir:
    root: Path

    @property
    def fused(self) -> Path:
        return self.root / "fused.tdff"

    def models(self, split_id: int, kind: str) -> Path:
        return self.root / "models" / f"split{split_id}_{kind}.tsvm"

    def scores(self, split_id: int, kind: str) -> Path:
        return self.root / "scores" / f"split{split_id}_{kind}.csv"

    def curve(self, split_id: int, kind: str) -> Path:
        return self.root / "curves" / f"split{split_id}_{kind}.csv"

    @property
    def report_json(self) -> Path:
        return self.root / "report.json"

    @property
    def report_text(self) -> Path:
        return self.root / "report.txt"

    def make(self) -> None:
        for sub in ("models", "scores", "curves"):
            (self.root / sub).mkdir(parents=True, exist_ok=True)


# -- inputs ------------------------------------------------------------------

def synthesize(cfg: PipelineConfig) -> None:
    if cfg.synthetic is None:
        raise PipelineError("synth", "config has no synthetic section")
    with stage("synth"):
        spec = cfg.synthetic
        if len(cfg.streams) != len(spec.streams):
            raise ValueError(f"config lists {len(cfg.streams)} streams, synthetic spec makes {len(spec.streams)}")
        records, features = generate_synthetic(spec)
        cfg.metadata.parent.mkdir(parents=True, exist_ok=True)
        io.write_metadata(records, cfg.metadata)
        for s, feats, d in zip(cfg.streams, features, spec.streams):
            if s.dim != d:
                raise ValueError(f"stream {s.name} declared dim {s.dim}, synthetic dim {d}")
            s.path.parent.mkdir(parents=True, exist_ok=True)
            io.write_feature_file(feats, s.path, dim=d)


def load_inputs(cfg: PipelineConfig) -> tuple[list[MediaRecord], list[dict[str, np.ndarray]]]:
    with stage("load"):
        records = io.read_metadata(cfg.metadata)
        streams = [io.read_feature_file(s.path) for s in cfg.streams]
    return records, streams


def validate_inputs(cfg: PipelineConfig, records=None, streams=None) -> dict[str, ValidationReport]:
    if records is None:
        records, streams = load_inputs(cfg)
    with stage("validate"):
        return {s.name: validate_dataset(records, feats, dim=s.dim) for s, feats in zip(cfg.streams, streams)}


def fuse(cfg: PipelineConfig, records: Sequence[MediaRecord], streams) -> dict[str, np.ndarray]:
    with stage("fuse"):
        media_ids = sorted({r.media_id for r in records})
        return fuse_media(streams, cfg.stream_spec, media_ids)


# -- protocol splits ---------------------------------------------------------

def split_layout(records: Iterable[MediaRecord]) -> dict[int, dict[str, list[MediaRecord]]]:
    """split_id -> template_id -> records, in metadata order."""
    by_split: dict[int, list[MediaRecord]] = {}
    for r in records:
        if r.split_id is None or r.split_role is None:
            raise ValueError(f"media {r.media_id} has no split assignment")
        by_split.setdefault(r.split_id, []).append(r)
    return {sid: group_by_template(rs) for sid, rs in sorted(by_split.items())}


def template_roles(groups: Mapping[str, list[MediaRecord]]) -> dict[str, tuple[str, SplitRole]]:
    """template_id -> (subject_id, role); a template must keep one role within a split."""
    out = {}
    for tid, rs in groups.items():
        roles = {r.split_role for r in rs}
        if len(roles) != 1:
            raise ValueError(f"template {tid} has several roles {sorted(r.value for r in roles)}")
        out[tid] = (rs[0].subject_id, roles.pop())
    return out


def build_splits(records: Sequence[MediaRecord], fused: Mapping[str, np.ndarray],
                 pairs: Mapping[int, list[tuple[str, str]]] | None = None) -> list[ProtocolSplit]:
    """Assemble templates per split.

    Without an explicit comparison list every probe template is compared
    with every gallery template for verification.
    """
    cache: dict[tuple, Template] = {}
    splits = []
    for sid, groups in split_layout(records).items():
        roles = template_roles(groups)
        by_role: dict[SplitRole, list[Template]] = {role: [] for role in SplitRole}
        for tid in sorted(groups):
            rs = groups[tid]
            key = (tid, tuple(r.media_id for r in rs))
            if key not in cache:
                cache[key] = build_template(rs, fused)
            by_role[roles[tid][1]].append(cache[key])
        if pairs is not None and sid in pairs:
            comparisons = pairs[sid]
        else:
            comparisons = [(p.template_id, g.template_id)
                           for p in by_role[SplitRole.PROBE] for g in by_role[SplitRole.GALLERY]]
        labelled = tuple((a, b, roles[a][0] == roles[b][0]) for a, b in comparisons)
        splits.append(ProtocolSplit(sid, tuple(by_role[SplitRole.TRAIN]), tuple(by_role[SplitRole.GALLERY]),
                                    tuple(by_role[SplitRole.PROBE]), labelled))
    return splits


# -- training and scoring ----------------------------------------------------

@dataclass(frozen=True)
class SplitModels:
    """``verify``: models trained against the training set only (verification
    templates and identification probes). ``gallery``: identification gallery
    models trained against the training set plus the other gallery templates."""

    verify: dict[str, SvmModel]
    gallery: dict[str, SvmModel]


def train_split(split: ProtocolSplit, solver: SolverConfig, threads: int | None = None) -> SplitModels:
    templates = split.templates()
    verify_ids = sorted({t.template_id for t in split.probe}
                        | {a for a, _, _ in split.verification_pairs}
                        | {b for _, b, _ in split.verification_pairs})
    jobs = [(tid, NegativeRole.VERIFICATION_PROBE) for tid in verify_ids]
    jobs += [(t.template_id, NegativeRole.GALLERY_TEMPLATE) for t in sorted(split.gallery, key=lambda t: t.template_id)]

    def fit(job):
        tid, role = job
        target = templates[tid]
        negatives = build_negative_set(role, target, split.training, split.gallery)
        return train_for_template(target, negatives, solver)

    with stage("train"):
        models = _pmap(fit, jobs, threads)
    verify, gallery = {}, {}
    for (tid, role), m in zip(jobs, models):
        (gallery if role is NegativeRole.GALLERY_TEMPLATE else verify)[tid] = m
    return SplitModels(verify, gallery)


def score_split(split: ProtocolSplit, models: SplitModels, fusion: FusionConfig,
                threads: int | None = None) -> tuple[list[PairScore], list[PairScore]]:
    templates = split.templates()
    ver_jobs = [(a, b, models.verify[a], models.verify[b]) for a, b, _ in split.verification_pairs]
    probes = sorted(t.template_id for t in split.probe)
    gallery = sorted(t.template_id for t in split.gallery)
    id_jobs = [(p, g, models.verify[p], models.gallery[g]) for p in probes for g in gallery]

    def pair(job):
        a, b, ma, mb = job
        return score_template_pair(templates[a], templates[b], ma, mb, fusion)

    with stage("score"):
        return _pmap(pair, ver_jobs, threads), _pmap(pair, id_jobs, threads)


# -- evaluation --------------------------------------------------------------

def _fmt(x: float) -> str:
    return format(x, "g")


def evaluate_split(subjects: Mapping[str, str], gallery_ids: Iterable[str],
                   verify_scores: Iterable[tuple[str, str, float]],
                   identify_scores: Iterable[tuple[str, str, float]],
                   cfg: PipelineConfig) -> tuple[dict[str, float], dict]:
    """Metrics for one split from raw (probe, gallery, score) rows.

    Closed-set CMC uses the mated probes only; open-set TPIR is reported
    when the split has non-mated probes.
    """
    with stage("eval"):
        metrics: dict[str, float] = {}
        curves: dict = {}
        gen, imp = [], []
        for a, b, s in verify_scores:
            (gen if subjects[a] == subjects[b] else imp).append(s)
        if gen and imp:
            for f, tar in tar_at_far(gen, imp, cfg.far_targets):
                metrics[f"verify.tar@far={_fmt(f)}"] = tar
            curves["roc"] = roc_curve(gen, imp)

        gallery_subjects = {g: subjects[g] for g in gallery_ids}
        probe_scores: dict[str, list[tuple[str, float]]] = {}
        for p, g, s in identify_scores:
            probe_scores.setdefault(p, []).append((g, s))
        if probe_scores:
            truth = {p: subjects[p] for p in probe_scores}
            enrolled = set(gallery_subjects.values())
            mated = {p: e for p, e in probe_scores.items() if truth[p] in enrolled}
            if mated:
                cmc = cmc_curve(mated, truth, gallery_subjects, max(cfg.ranks))
                for k in cfg.ranks:
                    metrics[f"identify.rank{k}"] = cmc[k - 1]
                curves["cmc"] = cmc
            if len(mated) < len(probe_scores):
                tpir = open_set_metrics(probe_scores, truth, gallery_subjects, cfg.fpir_targets)
                for f in cfg.fpir_targets:
                    metrics[f"identify.tpir@fpir={_fmt(f)}"] = tpir[f]
        return metrics, curves


def _score_rows(scores: Iterable[PairScore]) -> list[tuple[str, str, float]]:
    return [(s.probe_template, s.gallery_template, s.score) for s in scores]


# -- stage entry points (each reads what the previous one wrote) --------------

def stage_fuse(cfg: PipelineConfig) -> dict[str, np.ndarray]:
    records, streams = load_inputs(cfg)
    _require_valid(validate_inputs(cfg, records, streams))
    fused = fuse(cfg, records, streams)
    with stage("fuse"):
        WorkDir(cfg.work_dir).make()
        io.write_feature_file(fused, WorkDir(cfg.work_dir).fused, dim=cfg.stream_spec.fused_dim,
                              dtype=np.float64)
    return fused


def _load_splits(cfg: PipelineConfig, fused=None) -> tuple[list[MediaRecord], list[ProtocolSplit]]:
    wd = WorkDir(cfg.work_dir)
    with stage("load"):
        records = io.read_metadata(cfg.metadata)
        if fused is None:
            fused = io.read_feature_file(wd.fused)
        pairs = io.read_pairs(cfg.pairs) if cfg.pairs else None
    with stage("templates"):
        return records, build_splits(records, fused, pairs)


def stage_train(cfg: PipelineConfig, threads: int | None = None, splits=None) -> dict[int, SplitModels]:
    if splits is None:
        _, splits = _load_splits(cfg)
    wd = WorkDir(cfg.work_dir)
    wd.make()
    out = {}
    for split in splits:
        models = train_split(split, cfg.solver, threads)
        with stage("train"):
            io.write_models([models.verify[k] for k in sorted(models.verify)], wd.models(split.split_id, "verify"))
            io.write_models([models.gallery[k] for k in sorted(models.gallery)], wd.models(split.split_id, "gallery"))
        out[split.split_id] = models
        logger.info("split %d: trained %d verification and %d gallery models", split.split_id,
                    len(models.verify), len(models.gallery))
    return out


def stage_score(cfg: PipelineConfig, threads: int | None = None, splits=None, models=None) -> None:
    if splits is None:
        _, splits = _load_splits(cfg)
    wd = WorkDir(cfg.work_dir)
    wd.make()
    for split in splits:
        sid = split.split_id
        if models is not None:
            m = models[sid]
        else:
            with stage("score"):
                m = SplitModels(io.read_models(wd.models(sid, "verify")), io.read_models(wd.models(sid, "gallery")))
        ver, ident = score_split(split, m, cfg.fusion, threads)
        with stage("score"):
            io.write_scores(ver, wd.scores(sid, "verify"))
            io.write_scores(ident, wd.scores(sid, "identify"))


def stage_eval(cfg: PipelineConfig) -> MetricReport:
    wd = WorkDir(cfg.work_dir)
    wd.make()
    with stage("load"):
        layout = split_layout(io.read_metadata(cfg.metadata))
    per_split = []
    for sid, groups in layout.items():
        with stage("eval"):
            roles = template_roles(groups)
            ver = io.read_scores(wd.scores(sid, "verify"))
            ident = io.read_scores(wd.scores(sid, "identify"))
        subjects = {tid: subj for tid, (subj, _) in roles.items()}
        gallery = sorted(tid for tid, (_, role) in roles.items() if role is SplitRole.GALLERY)
        metrics, curves = evaluate_split(subjects, gallery, ver, ident, cfg)
        with stage("eval"):
            if "roc" in curves:
                io.write_roc_csv(curves["roc"], wd.curve(sid, "roc"))
            if "cmc" in curves:
                io.write_cmc_csv(curves["cmc"], wd.curve(sid, "cmc"))
        per_split.append((sid, metrics))
    with stage("aggregate"):
        report = aggregate_splits(per_split)
        io.write_report(report, wd.report_json, wd.report_text)
    return report


def _require_valid(reports: Mapping[str, ValidationReport]) -> None:
    bad = {name: r for name, r in reports.items() if not r.ok}
    if bad:
        detail = "; ".join(f"stream {n}: {dict(r.counts())}" for n, r in bad.items())
        raise PipelineError("validate", f"inputs are inconsistent ({detail})")


def run_pipeline(cfg: PipelineConfig, threads: int | None = None) -> MetricReport:
    """Run every stage; synthetic inputs are regenerated first when configured."""
    if threads is None:
        threads = cfg.threads or os.cpu_count() or 1
    if cfg.synthetic is not None:
        synthesize(cfg)
    fused = stage_fuse(cfg)
    _, splits = _load_splits(cfg, fused)
    models = stage_train(cfg, threads, splits)
    stage_score(cfg, threads, splits, models)
    return stage_eval(cfg)
