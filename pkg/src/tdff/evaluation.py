"""Verification and identification metrics, and mean/std aggregation over splits.

Thresholding everywhere uses step semantics with no interpolation: for a
target false-alarm rate f the operating threshold is the smallest value tau
with #{impostor >= tau} / #impostor <= f, and a score is accepted iff it is
>= tau.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .core import EmptyScoresError, TdffError


class EvaluationError(TdffError):
    pass


class MissingMateError(EvaluationError):
    pass


class NoNonMatedProbesError(EvaluationError):
    pass


class KeyMismatchError(EvaluationError):
    pass


@dataclass(frozen=True)
class RocPoint:
    threshold: float
    far: float
    tar: float


@dataclass(frozen=True)
class IdentificationResult:
    cmc: list[float]
    tpir_at_fpir: dict[float, float]


def allowed_false(n: int, target: float) -> int:
    """Largest k in [0, n] with k / n <= target."""
    k = min(n, max(0, math.floor(target * n)))
    while k < n and (k + 1) / n <= target:
        k += 1
    while k > 0 and k / n > target:
        k -= 1
    return k


def reject_level(negatives: Sequence[float], target: float) -> float:
    """Scores strictly above the returned value are accepted at ``target``.

    Equivalent to accepting scores >= tau for the minimal admissible tau;
    -inf means everything is accepted.
    """
    neg = np.sort(np.asarray(negatives, dtype=np.float64))[::-1]
    k = allowed_false(neg.size, target)
    return -np.inf if k >= neg.size else float(neg[k])


def tar_at_far(genuine: Sequence[float], impostor: Sequence[float],
               far_targets: Sequence[float]) -> list[tuple[float, float]]:
    gen = np.asarray(genuine, dtype=np.float64)
    imp = np.asarray(impostor, dtype=np.float64)
    if gen.size == 0 or imp.size == 0:
        raise EmptyScoresError(f"need genuine and impostor scores, got {gen.size}/{imp.size}")
    out = []
    for f in far_targets:
        if not 0.0 < f <= 1.0:
            raise ValueError(f"FAR target must lie in (0, 1], got {f}")
        level = reject_level(imp, f)
        out.append((f, int(np.count_nonzero(gen > level)) / gen.size))
    return out


def roc_curve(genuine: Sequence[float], impostor: Sequence[float]) -> list[RocPoint]:
    """Step ROC with one point per distinct score, thresholds ascending."""
    gen = np.sort(np.asarray(genuine, dtype=np.float64))
    imp = np.sort(np.asarray(impostor, dtype=np.float64))
    if gen.size == 0 or imp.size == 0:
        raise EmptyScoresError("need genuine and impostor scores")
    thresholds = np.unique(np.concatenate([gen, imp]))
    tar = 1.0 - np.searchsorted(gen, thresholds, side="left") / gen.size
    far = 1.0 - np.searchsorted(imp, thresholds, side="left") / imp.size
    return [RocPoint(float(t), float(f), float(a)) for t, f, a in zip(thresholds, far, tar)]


def _ranked(entries) -> list[tuple[str, float]]:
    # descending score, ties by gallery id ascending
    return sorted(((str(g), float(s)) for g, s in entries), key=lambda e: (-e[1], e[0]))


def mate_rank(entries, subject, gallery_subjects: Mapping[str, str]) -> int | None:
    """1-based rank of the best-placed mated gallery template, None if absent."""
    for pos, (g, _) in enumerate(_ranked(entries), start=1):
        if gallery_subjects[g] == subject:
            return pos
    return None


def cmc_curve(probe_scores: Mapping[str, Sequence[tuple[str, float]]], truth: Mapping[str, str],
              gallery_subjects: Mapping[str, str], K: int) -> list[float]:
    if K < 1:
        raise ValueError("K must be >= 1")
    if not probe_scores:
        raise EmptyScoresError("no probes")
    ranks = []
    for probe, entries in probe_scores.items():
        r = mate_rank(entries, truth[probe], gallery_subjects)
        if r is None:
            raise MissingMateError(f"probe {probe} (subject {truth[probe]}) has no mated gallery entry")
        ranks.append(r)
    ranks = np.asarray(ranks)
    return [int(np.count_nonzero(ranks <= k)) / ranks.size for k in range(1, K + 1)]


def open_set_metrics(probe_scores: Mapping[str, Sequence[tuple[str, float]]], truth: Mapping[str, str],
                     gallery_subjects: Mapping[str, str],
                     fpir_targets: Sequence[float]) -> dict[float, float]:
    """TPIR at each FPIR target.

    A mated probe counts as a true positive when its mate is ranked first
    and that score clears the threshold; a non-mated probe is a false
    alarm when its top score clears it.
    """
    enrolled = set(gallery_subjects.values())
    nonmated_top, mated_hits = [], []
    for probe, entries in probe_scores.items():
        ranked = _ranked(entries)
        if not ranked:
            raise EmptyScoresError(f"probe {probe} has no gallery scores")
        g, s = ranked[0]
        if truth[probe] in enrolled:
            mated_hits.append(s if gallery_subjects[g] == truth[probe] else None)
        else:
            nonmated_top.append(s)
    if not nonmated_top:
        raise NoNonMatedProbesError("open-set metrics need probes whose subject is not enrolled")
    if not mated_hits:
        raise EvaluationError("open-set metrics need at least one mated probe")
    hits = np.asarray([s for s in mated_hits if s is not None], dtype=np.float64)
    out = {}
    for f in fpir_targets:
        if not 0.0 < f <= 1.0:
            raise ValueError(f"FPIR target must lie in (0, 1], got {f}")
        level = reject_level(nonmated_top, f)
        out[f] = int(np.count_nonzero(hits > level)) / len(mated_hits)
    return out


@dataclass
class MetricReport:
    per_split: list[tuple[int, dict[str, float]]]
    mean: dict[str, float] = field(default_factory=dict)
    std: dict[str, float] = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "splits": [{"split_id": sid, "metrics": m} for sid, m in self.per_split],
            "mean": self.mean,
            "std": self.std,
        }

    def to_text(self) -> str:
        lines = []
        for key in self.mean:
            lines.append(f"{key} = {self.mean[key]:.3f} +- {self.std[key]:.3f}")
        for sid, m in self.per_split:
            for key, v in m.items():
                lines.append(f"split{sid}.{key} = {v!r}")
        return "\n".join(lines) + "\n"


def aggregate_splits(per_split: Sequence) -> MetricReport:
    """Mean and sample standard deviation (n - 1) of every metric across splits.

    Accepts either plain metric dicts (numbered from 1) or (split_id, dict) pairs.
    """
    if not per_split:
        raise ValueError("need at least one split")
    items = [p if isinstance(p, tuple) else (i, p) for i, p in enumerate(per_split, start=1)]
    keys = list(items[0][1])
    for sid, m in items:
        if set(m) != set(keys):
            raise KeyMismatchError(f"split {sid} keys {sorted(m)} differ from {sorted(keys)}")
    mean, std = {}, {}
    for k in keys:
        vals = np.array([m[k] for _, m in items], dtype=np.float64)
        mean[k] = float(vals.mean())
        std[k] = float(vals.std(ddof=1)) if vals.size > 1 else 0.0
    return MetricReport([(sid, dict(m)) for sid, m in items], mean, std)
