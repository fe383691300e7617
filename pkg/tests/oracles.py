"""Independent reference computations used to freeze and check expected values.

Nothing here imports the solver, fusion, scoring or metric code under test.
"""

import math

import numpy as np


def svm_objective(w, X, y, cost):
    total = 0.5 * sum(v * v for v in w)
    for xi, yi, ci in zip(X, y, cost):
        margin = 1.0 - yi * sum(a * b for a, b in zip(w, xi))
        if margin > 0:
            total += ci * margin * margin
    return total


def svm_gradient(w, X, y, cost):
    X = np.asarray(X, dtype=float)
    slack = np.maximum(0.0, 1.0 - y * (X @ w))
    return w - 2.0 * X.T @ (cost * y * slack)


def gradient_descent_svm(X, y, cost, max_iter=1_000_000, gtol=1e-11):
    """Accelerated gradient descent with step 1/L on the squared-hinge primal.

    The primal is unconstrained, so the projection is the identity. L bounds
    the gradient's Lipschitz constant: 1 + 2 * sum(cost_i |x_i|^2); the
    objective is 1-strongly convex, which fixes the momentum.
    """
    X = np.asarray(X, dtype=float)
    L = 1.0 + 2.0 * float(np.sum(cost * np.sum(X * X, axis=1)))
    momentum = (math.sqrt(L) - 1.0) / (math.sqrt(L) + 1.0)
    w = np.zeros(X.shape[1])
    v = w.copy()
    for _ in range(max_iter):
        g = svm_gradient(v, X, y, cost)
        w_next = v - g / L
        v = w_next + momentum * (w_next - w)
        w = w_next
        if np.max(np.abs(svm_gradient(w, X, y, cost))) < gtol:
            break
    return w


def elementwise_mean(frames):
    dim = len(frames[0])
    return [sum(float(f[k]) for f in frames) / len(frames) for k in range(dim)]


def unit(v):
    n = math.sqrt(sum(float(x) * float(x) for x in v))
    return [float(x) / n for x in v]


def fused_pair_score(A, B, wa, ba, wb, bb, beta=0.0):
    """Double loop over encodings; A, B are lists of vectors."""
    comps = []
    for p in A:
        for q in B:
            pq = sum(x * y for x, y in zip(wa, q)) + ba
            qp = sum(x * y for x, y in zip(wb, p)) + bb
            comps.append(0.5 * pq + 0.5 * qp)
    if beta == 0.0:
        return sum(comps) / len(comps), len(comps)
    weights = [math.exp(beta * c) for c in comps]
    return sum(c * w for c, w in zip(comps, weights)) / sum(weights), len(comps)


def tar_sweep(genuine, impostor, target):
    """Try every candidate threshold; keep the smallest admissible one."""
    candidates = sorted(set(genuine) | set(impostor)) + [math.inf]
    for tau in candidates:
        if sum(1 for s in impostor if s >= tau) / len(impostor) <= target:
            return sum(1 for s in genuine if s >= tau) / len(genuine)
    raise AssertionError("unreachable: +inf always qualifies")


def _best_mate(entries, subject, gallery_subjects):
    mates = [(g, s) for g, s in entries if gallery_subjects[g] == subject]
    if not mates:
        return None
    return min(mates, key=lambda e: (-e[1], e[0]))


def rank_of_mate(entries, subject, gallery_subjects):
    m = _best_mate(entries, subject, gallery_subjects)
    g_m, s_m = m
    better = sum(1 for g, s in entries if s > s_m or (s == s_m and g < g_m))
    return better + 1


def cmc_count(probe_scores, truth, gallery_subjects, K):
    ranks = [rank_of_mate(e, truth[p], gallery_subjects) for p, e in probe_scores.items()]
    return [sum(1 for r in ranks if r <= k) / len(ranks) for k in range(1, K + 1)]


def tpir_sweep(probe_scores, truth, gallery_subjects, target):
    enrolled = set(gallery_subjects.values())
    mated = {p: e for p, e in probe_scores.items() if truth[p] in enrolled}
    nonmated = {p: e for p, e in probe_scores.items() if truth[p] not in enrolled}
    tops = [max(s for _, s in e) for e in nonmated.values()]
    candidates = sorted({s for e in probe_scores.values() for _, s in e}) + [math.inf]
    for tau in candidates:
        if sum(1 for t in tops if t >= tau) / len(tops) <= target:
            hits = 0
            for p, e in mated.items():
                if rank_of_mate(e, truth[p], gallery_subjects) == 1:
                    if _best_mate(e, truth[p], gallery_subjects)[1] >= tau:
                        hits += 1
            return hits / len(mated)
    raise AssertionError("unreachable")


def two_pass_mean_std(values):
    n = len(values)
    mean = sum(values) / n
    if n == 1:
        return mean, 0.0
    return mean, math.sqrt(sum((v - mean) ** 2 for v in values) / (n - 1))


def cosine_template_scores(templates_a, templates_b):
    """Cosine similarity between mean encodings; {(a, b): score}."""
    def centre(vectors):
        m = np.mean(np.asarray(vectors, dtype=float), axis=0)
        return m / np.linalg.norm(m)
    out = {}
    for a, va in templates_a.items():
        ca = centre(va)
        for b, vb in templates_b.items():
            out[(a, b)] = float(ca @ centre(vb))
    return out


def media_vectors(records, streams):
    """Fused unit vectors per template built directly from metadata and raw streams.

    Returns {split_id: {template_id: (subject_id, role, [vectors])}}; frames of a
    video are averaged into one vector.
    """
    def fused(mid):
        parts = [unit(np.asarray(s[mid], dtype=float)) for s in streams]
        return unit(np.concatenate(parts))

    media = {}
    for r in records:
        key = (r.split_id, r.template_id)
        slot = media.setdefault(key, (r.subject_id, r.split_role.value, {}))[2]
        slot.setdefault(r.video_id or r.media_id, []).append(fused(r.media_id))
    out = {}
    for (sid, tid), (subj, role, groups) in media.items():
        out.setdefault(sid, {})[tid] = (subj, role, [unit(np.mean(v, axis=0)) for v in groups.values()])
    return out


def cosine_baseline(records, streams, split_id, far):
    """TAR at ``far`` and rank-1 accuracy of plain cosine matching between template means."""
    tmpl = media_vectors(records, streams)[split_id]
    probes = {t: v for t, (_, role, v) in tmpl.items() if role == "probe"}
    gallery = {t: v for t, (_, role, v) in tmpl.items() if role == "gallery"}
    subj = {t: s for t, (s, _, _) in tmpl.items()}
    scores = cosine_template_scores(probes, gallery)
    gen = [s for (a, b), s in scores.items() if subj[a] == subj[b]]
    imp = [s for (a, b), s in scores.items() if subj[a] != subj[b]]
    gallery_subjects = {g: subj[g] for g in gallery}
    enrolled = set(gallery_subjects.values())
    mated = [p for p in probes if subj[p] in enrolled]
    rank1 = sum(1 for p in mated
                if rank_of_mate([(g, scores[(p, g)]) for g in gallery], subj[p], gallery_subjects) == 1)
    return tar_sweep(gen, imp, far), rank1 / len(mated), (min(gen), max(imp))
