"""One-shot similarity between encodings and second-stage (score-level) fusion."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .core import EmptyScoresError, Template
from .svm import SvmModel, decision_value, decision_values


@dataclass(frozen=True)
class FusionConfig:
    beta: float = 0.0

    def __post_init__(self):
        if not (np.isfinite(self.beta) and self.beta >= 0):
            raise ValueError(f"beta must be finite and >= 0, got {self.beta}")


@dataclass(frozen=True)
class PairScore:
    probe_template: str
    gallery_template: str
    score: float
    n_component_scores: int


def oss_score(model_p: SvmModel, model_q: SvmModel, p, q) -> float:
    """Average of each template's SVM evaluated on the other side's encoding."""
    return 0.5 * decision_value(model_p, q) + 0.5 * decision_value(model_q, p)


def fuse_scores(scores: Sequence[float], config: FusionConfig = FusionConfig()) -> float:
    """Softmax-weighted average sum(s * e^(beta s)) / sum(e^(beta s)).

    beta = 0 gives the plain mean; large beta tends to the max.
    """
    # sorted so the result does not depend on input order
    s = np.sort(np.asarray(scores, dtype=np.float64).ravel())
    if s.size == 0:
        raise EmptyScoresError("no scores to fuse")
    if not np.all(np.isfinite(s)):
        raise ValueError("non-finite score")
    if config.beta == 0.0:
        return float(np.mean(s))
    weights = np.exp(config.beta * (s - s.max()))
    fused = float(weights @ s / weights.sum())
    # rounding can leave the weighted mean a hair outside the range
    return min(max(fused, float(s.min())), float(s.max()))


def component_scores(T_a: Template, T_b: Template, model_a: SvmModel, model_b: SvmModel) -> np.ndarray:
    """All N_a x N_b OSS values; entry (i, j) pairs encoding i of T_a with j of T_b."""
    A = T_a.matrix()
    B = T_b.matrix()
    a_on_b = decision_values(model_a, B)   # P(t_j) for every t_j in T_b
    b_on_a = decision_values(model_b, A)   # Q(t_i) for every t_i in T_a
    return 0.5 * a_on_b[None, :] + 0.5 * b_on_a[:, None]


def score_template_pair(T_a: Template, T_b: Template, model_a: SvmModel, model_b: SvmModel,
                        config: FusionConfig = FusionConfig()) -> PairScore:
    if model_a.owner_template and model_a.owner_template != T_a.template_id:
        raise ValueError(f"model for {model_a.owner_template} paired with template {T_a.template_id}")
    if model_b.owner_template and model_b.owner_template != T_b.template_id:
        raise ValueError(f"model for {model_b.owner_template} paired with template {T_b.template_id}")
    comps = component_scores(T_a, T_b, model_a, model_b)
    return PairScore(T_a.template_id, T_b.template_id, fuse_scores(comps.ravel(), config), comps.size)
