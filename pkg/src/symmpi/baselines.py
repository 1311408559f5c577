"""Comparison methods for the hierarchical benchmarks.

Three reference constructions: conformal within the last branch only, split
conformal over the pooled data, and conformal over one subsampled observation
per other branch. All are valid; they differ from the adaptive method in
width under branch heterogeneity.
"""

from __future__ import annotations

import numpy as np

from .calibrate import PredictionSet, _LEVEL_EPS


def _pool(values) -> np.ndarray:
    if isinstance(values, (list, tuple)):
        return np.concatenate([np.asarray(v, dtype=float).ravel() for v in values])
    return np.asarray(values, dtype=float).ravel()


def _self_inclusive_members(cal_scores, cand_scores, alpha: float):
    """Membership of each candidate in a conformal set that pools the
    candidate's own score with the calibration scores.

    ``cal_scores`` is (G, m) or (m,); ``cand_scores`` is (G,). Returns
    (member, unbounded) where unbounded means the quantile index hits the
    pooled maximum so every candidate is kept.
    """
    cand = np.asarray(cand_scores, dtype=float)
    cal = np.asarray(cal_scores, dtype=float)
    if cal.ndim == 1:
        cal = np.broadcast_to(cal, (cand.size, cal.size))
    m = cal.shape[1]
    n_total = m + 1
    k = int(np.ceil((1.0 - alpha) * n_total - _LEVEL_EPS))
    k = min(max(k, 1), n_total)
    if k > m:
        return np.ones(cand.shape, dtype=bool), True
    pooled = np.concatenate([cal, cand[:, None]], axis=1)
    t = np.partition(pooled, k - 1, axis=1)[:, k - 1]
    return cand <= t, False


def single_tree_set(
    branch_values,
    candidates,
    alpha: float,
    score=None,
) -> PredictionSet:
    """Conformal set using only the target's own branch.

    ``branch_values`` are the branch's observed points; the candidate joins
    them as the final value. The default score is the absolute deviation from
    the branch mean (candidate included); pass ``score(values) -> scores`` for
    alternatives such as plain absolute value. Unbounded whenever
    ceil(M (1 - alpha)) exceeds the observed count.
    """
    obs = np.asarray(branch_values, dtype=float).ravel()
    cands = np.asarray(candidates, dtype=float)
    if score is None:
        centers = (obs.sum() + cands) / (obs.size + 1)
        cal = np.abs(obs[None, :] - centers[:, None])
        cand_scores = np.abs(cands - centers)
    else:
        cal = np.empty((cands.size, obs.size))
        cand_scores = np.empty(cands.size)
        for i, c in enumerate(cands):
            s = np.asarray(score(np.append(obs, c)), dtype=float)
            cal[i] = s[:-1]
            cand_scores[i] = s[-1]
    member, unbounded = _self_inclusive_members(cal, cand_scores, alpha)
    return PredictionSet(cands, member, unbounded=unbounded)


def split_conformal_set(
    values,
    candidates,
    alpha: float,
    mu=None,
    x=None,
    x_new=None,
) -> PredictionSet:
    """Split conformal over all pooled observations.

    Unsupervised (``mu`` None): scores are absolute deviations from the grand
    average, candidate included in both the average and the quantile.
    Supervised: scores are |y - mu(x)| with the pooled regressor, and the
    candidate scored at ``x_new``.
    """
    obs = _pool(values)
    cands = np.asarray(candidates, dtype=float)
    if mu is None:
        centers = (obs.sum() + cands) / (obs.size + 1)
        cal = np.abs(obs[None, :] - centers[:, None])
        cand_scores = np.abs(cands - centers)
    else:
        xs = _pool(x)
        cal = np.abs(obs - np.asarray(mu(xs), dtype=float))
        cand_scores = np.abs(cands - float(np.asarray(mu(np.array([x_new])), dtype=float)[0]))
    member, unbounded = _self_inclusive_members(cal, cand_scores, alpha)
    return PredictionSet(cands, member, unbounded=unbounded)


def subsampling_set(
    branches,
    candidates,
    alpha: float,
    rng: np.random.Generator,
    mu=None,
    branch_x=None,
    x_new=None,
) -> PredictionSet:
    """Conformal over one uniformly drawn observation per non-target branch.

    The draws and the target are exchangeable under the hierarchical model,
    so a conformal set over the K pooled values is valid.
    """
    branch_list = [np.asarray(b, dtype=float).ravel() for b in branches]
    if not branch_list:
        raise ValueError("need at least one donor branch")
    cands = np.asarray(candidates, dtype=float)
    idx = [int(rng.integers(b.size)) for b in branch_list]
    picks = np.array([b[i] for b, i in zip(branch_list, idx)])
    if mu is None:
        centers = (picks.sum() + cands) / (picks.size + 1)
        cal = np.abs(picks[None, :] - centers[:, None])
        cand_scores = np.abs(cands - centers)
    else:
        xs = np.array([np.asarray(bx, dtype=float).ravel()[i] for bx, i in zip(branch_x, idx)])
        cal = np.abs(picks - np.asarray(mu(xs), dtype=float))
        cand_scores = np.abs(cands - float(np.asarray(mu(np.array([x_new])), dtype=float)[0]))
    member, unbounded = _self_inclusive_members(cal, cand_scores, alpha)
    return PredictionSet(cands, member, unbounded=unbounded)
