"""Thresholds and prediction sets calibrated over group orbits.

The core recipe: score the completed data, take the 1-alpha quantile of the
score over the (sampled or enumerated) group orbit, and keep candidates whose
score does not exceed it. Variants cover randomized exact-coverage sets,
Monte-Carlo thresholds, weighted non-symmetric sets, ragged branch sizes, and
the over-coverage diagnostic.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .groups import GroupAction, CosetDecomposition, NotEnumerableError

# Guard against float fuzz in level * n (e.g. 0.95 * 20 = 19.000000000000004).
_LEVEL_EPS = 1e-9


def finite_quantile(values, level: float, weights=None) -> float:
    """Smallest x among ``values`` whose cumulative weight reaches ``level``.

    Unweighted inputs get equal weights 1/m. Returns +inf when the level
    exceeds the total weight (only possible for level > 1).
    """
    v = np.asarray(values, dtype=float).ravel()
    if v.size == 0:
        raise ValueError("cannot take a quantile of an empty sample")
    if weights is None:
        if level > 1.0 + _LEVEL_EPS:
            return float("inf")
        k = int(np.ceil(level * v.size - _LEVEL_EPS))
        k = min(max(k, 1), v.size)
        return float(np.partition(v, k - 1)[k - 1])
    w = np.asarray(weights, dtype=float).ravel()
    if w.shape != v.shape:
        raise ValueError("weights must match values")
    if np.any(w < 0):
        raise ValueError("weights must be nonnegative")
    order = np.argsort(v, kind="stable")
    cum = np.cumsum(w[order])
    idx = np.searchsorted(cum, level - _LEVEL_EPS, side="left")
    if idx >= v.size:
        if level <= cum[-1] + _LEVEL_EPS:
            return float(v[order[-1]])
        return float("inf")
    return float(v[order[idx]])


@dataclass(frozen=True)
class Threshold:
    """A group-quantile threshold with its CDF bookkeeping at the threshold."""

    value: float
    cdf_at_t: float
    cdf_left: float
    jump: float
    delta: float


def threshold_from_scores(scores, alpha: float, weights=None) -> Threshold:
    """Threshold plus CDF left limit, jump, and tie-breaking probability."""
    s = np.asarray(scores, dtype=float).ravel()
    level = 1.0 - alpha
    t = finite_quantile(s, level, weights)
    if weights is None:
        w = np.full(s.size, 1.0 / s.size)
    else:
        w = np.asarray(weights, dtype=float).ravel()
        w = w / w.sum()
    cdf = float(np.sum(w[s <= t]))
    cdf_left = float(np.sum(w[s < t]))
    jump = cdf - cdf_left
    if jump <= 0.0:
        delta = 0.0
    else:
        delta = (level - cdf_left) / jump
        delta = min(max(delta, 0.0), 1.0)
    return Threshold(value=t, cdf_at_t=cdf, cdf_left=cdf_left, jump=jump, delta=delta)


def orbit_scores(
    z_tilde,
    psi,
    group: GroupAction,
    *,
    cosets: CosetDecomposition | None = None,
    mode: str = "exact",
    mc_draws: int | None = None,
    rng: np.random.Generator | None = None,
) -> np.ndarray:
    """Values of psi over the orbit of z_tilde.

    Exact mode enumerates coset representatives when given (the quantile only
    depends on them), else the full group; it requires a finite group.
    Monte-Carlo mode returns psi(z_tilde) itself followed by ``mc_draws``
    sampled orbit values -- the point's own score is part of the sample.
    """
    z = np.asarray(z_tilde, dtype=float)
    if mode == "exact":
        if cosets is not None:
            return np.array([float(psi(_act(group, g, z))) for g in cosets.representatives])
        try:
            batches = group.iter_mapping_batches()
        except NotEnumerableError:
            batches = None
        if batches is not None:
            flat = z.reshape(-1)
            chunks = []
            for maps in batches:
                inv = np.argsort(maps, axis=1)
                acted = flat[inv].reshape((maps.shape[0],) + z.shape)
                chunks.append(np.asarray(psi(acted), dtype=float).ravel())
            return np.concatenate(chunks)
        return np.array([float(psi(group.act(g, z))) for g in group.elements()])
    if mode == "mc":
        if mc_draws is None or mc_draws < 1:
            raise ValueError("Monte-Carlo mode needs mc_draws >= 1")
        if rng is None:
            raise ValueError("Monte-Carlo mode needs an rng")
        vals = [float(psi(z))]
        for _ in range(mc_draws):
            vals.append(float(psi(group.act(group.sample(rng), z))))
        return np.array(vals)
    raise ValueError(f"unknown mode {mode!r}")


def _act(group: GroupAction, g, z):
    if hasattr(g, "act"):
        return g.act(z)
    return group.act(g, z)


def threshold(
    z_tilde,
    psi,
    group: GroupAction,
    alpha: float,
    *,
    cosets: CosetDecomposition | None = None,
    mode: str = "exact",
    mc_draws: int | None = None,
    rng: np.random.Generator | None = None,
) -> Threshold:
    """Group-quantile threshold for one transformed data point."""
    scores = orbit_scores(
        z_tilde, psi, group, cosets=cosets, mode=mode, mc_draws=mc_draws, rng=rng
    )
    return threshold_from_scores(scores, alpha)


# --------------------------------------------------------------------------
# Prediction sets over a candidate grid
# --------------------------------------------------------------------------


@dataclass
class PredictionSet:
    """Membership of each candidate on a grid, with interval extraction."""

    candidates: np.ndarray
    member: np.ndarray
    unbounded: bool = False
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.candidates = np.asarray(self.candidates, dtype=float)
        self.member = np.asarray(self.member, dtype=bool)
        if self.candidates.shape != self.member.shape:
            raise ValueError("candidates and member must align")
        if self.unbounded and not bool(self.member.all()):
            raise ValueError("an unbounded set must contain every candidate")

    @property
    def spacing(self) -> float:
        if self.candidates.size < 2:
            return 0.0
        return float((self.candidates[-1] - self.candidates[0]) / (self.candidates.size - 1))

    @property
    def length(self) -> float:
        if self.unbounded:
            return float("inf")
        return float(self.member.sum()) * self.spacing

    def intervals(self) -> list[tuple[float, float]]:
        """Maximal runs of member candidates, as (low, high) candidate values."""
        out = []
        m = self.member
        i = 0
        while i < m.size:
            if m[i]:
                j = i
                while j + 1 < m.size and m[j + 1]:
                    j += 1
                out.append((float(self.candidates[i]), float(self.candidates[j])))
                i = j + 1
            else:
                i += 1
        return out

    def covers(self, value: float) -> bool:
        """Whether ``value`` falls in one of the extracted intervals."""
        if self.unbounded:
            return True
        half = self.spacing / 2.0
        return any(lo - half <= value <= hi + half for lo, hi in self.intervals())


def candidate_grid(values, n_points: int = 2001, pad_sd: float = 4.0) -> np.ndarray:
    """Uniform grid over the data range widened by ``pad_sd`` sample SDs."""
    v = np.asarray(values, dtype=float).ravel()
    sd = float(np.std(v))
    pad = pad_sd * (sd if sd > 0 else max(abs(float(np.mean(v))), 1.0) * 1e-3)
    return np.linspace(v.min() - pad, v.max() + pad, n_points)


def symmpi_set(
    observed,
    candidates,
    embed,
    V,
    psi,
    group: GroupAction,
    alpha: float,
    *,
    cosets: CosetDecomposition | None = None,
    mode: str = "exact",
    mc_draws: int | None = None,
    rng: np.random.Generator | None = None,
) -> PredictionSet:
    """Keep each candidate whose completed-data score is within its orbit quantile.

    ``embed(observed, candidate)`` must rebuild the full data point; ``V``
    maps it to score space and ``psi`` to a scalar.
    """
    cands = np.asarray(candidates, dtype=float)
    if cands.size == 0:
        raise ValueError("candidate grid is empty")
    member = np.zeros(cands.shape, dtype=bool)
    for idx, c in enumerate(cands):
        zt = np.asarray(V(embed(observed, c)), dtype=float)
        th = threshold(zt, psi, group, alpha, cosets=cosets, mode=mode, mc_draws=mc_draws, rng=rng)
        member[idx] = float(psi(zt)) <= th.value
    return PredictionSet(cands, member, unbounded=bool(member.all()))


def randomized_set(
    observed,
    candidates,
    embed,
    V,
    psi,
    group: GroupAction,
    alpha: float,
    u_prime: float,
    *,
    cosets: CosetDecomposition | None = None,
    mode: str = "exact",
    mc_draws: int | None = None,
    rng: np.random.Generator | None = None,
) -> PredictionSet:
    """Randomized variant with exact coverage: ties at the threshold are kept
    only when the shared uniform draw ``u_prime`` falls below the tie mass."""
    cands = np.asarray(candidates, dtype=float)
    if cands.size == 0:
        raise ValueError("candidate grid is empty")
    member = np.zeros(cands.shape, dtype=bool)
    for idx, c in enumerate(cands):
        zt = np.asarray(V(embed(observed, c)), dtype=float)
        th = threshold(zt, psi, group, alpha, cosets=cosets, mode=mode, mc_draws=mc_draws, rng=rng)
        s = float(psi(zt))
        member[idx] = s < th.value or (s == th.value and u_prime < th.delta)
    return PredictionSet(cands, member, unbounded=bool(member.all()))


@dataclass(frozen=True)
class WeightSpec:
    """Coset representatives with sampling weights for the non-symmetric set."""

    representatives: list
    weights: np.ndarray

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=float).ravel()
        if len(self.representatives) != w.size:
            raise ValueError("one weight per representative")
        if np.any(w < 0) or abs(w.sum() - 1.0) > 1e-12:
            raise ValueError("weights must be nonnegative and sum to one")
        object.__setattr__(self, "weights", w)


def nonsym_set(
    observed,
    candidates,
    embed,
    V,
    psi,
    spec: WeightSpec,
    group: GroupAction,
    alpha: float,
    rng: np.random.Generator,
) -> PredictionSet:
    """Weighted prediction set that stays valid without equivariance of V.

    One representative g is drawn from the weight distribution; each candidate
    is kept when its g-aligned score is within the weighted quantile of the
    representative scores of the realigned data.
    """
    cands = np.asarray(candidates, dtype=float)
    if cands.size == 0:
        raise ValueError("candidate grid is empty")
    g_idx = int(rng.choice(len(spec.representatives), p=spec.weights))
    g = spec.representatives[g_idx]
    g_inv = group.inverse(g)
    member = np.zeros(cands.shape, dtype=bool)
    for idx, c in enumerate(cands):
        z = embed(observed, c)
        v = np.asarray(V(group.act(g_inv, z)), dtype=float)
        rep_scores = np.array([float(psi(_act(group, gj, v))) for gj in spec.representatives])
        q = finite_quantile(rep_scores, 1.0 - alpha, spec.weights)
        member[idx] = float(psi(_act(group, g, v))) <= q
    return PredictionSet(cands, member, unbounded=bool(member.all()), meta={"drawn_rep": g_idx})


# --------------------------------------------------------------------------
# Ragged branch sizes
# --------------------------------------------------------------------------


def randomsize_threshold(branch_scores, alpha: float) -> float:
    """Weighted quantile where each of branch k's points carries weight 1/(K n_k)."""
    branches = [np.asarray(b, dtype=float).ravel() for b in branch_scores]
    if any(b.size == 0 for b in branches):
        raise ValueError("every branch must be nonempty")
    K = len(branches)
    values = np.concatenate(branches)
    weights = np.concatenate([np.full(b.size, 1.0 / (K * b.size)) for b in branches])
    return finite_quantile(values, 1.0 - alpha, weights)


def adaptive_center_scores_ragged(branches, c: float) -> list[np.ndarray]:
    """Standardized adaptive-centering scores for ragged branches.

    Same construction as the fixed-size hierarchical transform: branches whose
    mean sits within c sigma_k / sqrt(n_k) of the grand branch-mean average are
    centered there, the rest at their own mean; all are scaled by sigma_k.
    """
    arrs = [np.asarray(b, dtype=float).ravel() for b in branches]
    if any(a.size == 0 for a in arrs):
        raise ValueError("every branch must be nonempty")
    means = np.array([a.mean() for a in arrs])
    grand = means.mean()
    out = []
    for a, m in zip(arrs, means):
        sd = float(np.std(a, ddof=1)) if a.size > 1 else 1.0
        safe = sd if sd > 0 else 1.0
        near = abs(m - grand) <= c * safe / np.sqrt(a.size)
        center = grand if near else m
        out.append(np.abs(a - center) / safe)
    return out


def symmpi_set_randomsize(
    observed_branches,
    candidates,
    alpha: float,
    c: float = 2.0,
    transform=adaptive_center_scores_ragged,
) -> PredictionSet:
    """Prediction set for the last entry of the last branch under ragged sizes.

    ``observed_branches`` holds K branches where the last one misses its final
    observation; each candidate completes it and is kept when its score is
    within the branch-weighted quantile.
    """
    cands = np.asarray(candidates, dtype=float)
    if cands.size == 0:
        raise ValueError("candidate grid is empty")
    branches = [np.asarray(b, dtype=float).ravel() for b in observed_branches]
    member = np.zeros(cands.shape, dtype=bool)
    for idx, cand in enumerate(cands):
        full = branches[:-1] + [np.append(branches[-1], cand)]
        scores = transform(full, c)
        t = randomsize_threshold(scores, alpha)
        member[idx] = float(scores[-1][-1]) <= t
    return PredictionSet(cands, member, unbounded=bool(member.all()))


def supervised_hierarchical_set(
    train_x,
    train_y,
    cal_x,
    cal_y,
    x_new,
    candidates,
    alpha: float,
    c: float = 2.0,
) -> PredictionSet:
    """Prediction set for the response at ``x_new`` in the last branch.

    Regressors are fit on the training lists (pooled plus per-branch
    corrections); each candidate response completes the calibration data,
    whose adaptive residual scores are scaled per branch by the RMS residual
    (candidate included for its own branch) and compared against the
    branch-weighted score quantile. Ragged branch sizes are allowed.
    """
    from .transforms import fit_regressors

    reg = fit_regressors(train_x, train_y)
    K = len(cal_x)
    cands = np.asarray(candidates, dtype=float)
    if cands.size == 0:
        raise ValueError("candidate grid is empty")
    cal_x = [np.asarray(v, dtype=float) for v in cal_x]
    cal_y = [np.asarray(v, dtype=float) for v in cal_y]
    sizes = np.array([v.size + (1 if k == K - 1 else 0) for k, v in enumerate(cal_y)])

    x_new = np.asarray(x_new, dtype=float)
    centers, scores_fixed = [], []
    for k in range(K):
        if k < K - 1:
            xk = cal_x[k]
        elif cal_x[k].ndim > 1:
            xk = np.concatenate([cal_x[k], x_new.reshape(1, -1)], axis=0)
        else:
            xk = np.append(cal_x[k], x_new)
        mu_p = reg.mu(xk)
        mu_b = reg.mu_k(k, xk)
        sig = reg.sigma_k(k, xk)
        if np.any(sig <= 0):
            raise ValueError("degenerate confidence band: sigma_k(x) = 0")
        center = np.where(np.abs(mu_b - mu_p) / sig <= c, mu_p, mu_b)
        centers.append(center)
        if k < K - 1:
            raw = np.abs(cal_y[k] - center)
            eps = np.sqrt(np.sum(raw**2) / (raw.size - 1)) if raw.size > 1 else 1.0
            scores_fixed.append(raw / (eps if eps > 0 else 1.0))

    raw_last = np.abs(cal_y[-1] - centers[-1][:-1])
    m_K = raw_last.size + 1
    member = np.zeros(cands.shape, dtype=bool)
    level = 1.0 - alpha
    equal = len(set(sizes.tolist())) == 1
    for i, cand in enumerate(cands):
        raw_cand = abs(cand - centers[-1][-1])
        if m_K > 1:
            eps = np.sqrt((np.sum(raw_last**2) + raw_cand**2) / (m_K - 1))
            eps = eps if eps > 0 else 1.0
        else:
            eps = 1.0
        own = raw_cand / eps
        branch_scores = [s for s in scores_fixed] + [np.append(raw_last, raw_cand) / eps]
        if equal:
            pool = np.concatenate(branch_scores)
            member[i] = own <= finite_quantile(pool, level)
        else:
            weights = np.concatenate([np.full(s.size, 1.0 / (K * s.size)) for s in branch_scores])
            member[i] = own <= finite_quantile(np.concatenate(branch_scores), level, weights)
    return PredictionSet(cands, member, unbounded=bool(member.all()))


def hcp_first_obs_set(complete_branches, candidates, alpha: float) -> PredictionSet:
    """Prediction set for the first observation of a brand-new branch.

    Scores are plain absolute deviations from the average of branch means
    (always-pool centering, unit scale); the candidate forms its own branch
    carrying weight 1/K in the quantile.
    """
    cands = np.asarray(candidates, dtype=float)
    if cands.size == 0:
        raise ValueError("candidate grid is empty")
    branches = [np.asarray(b, dtype=float).ravel() for b in complete_branches]
    if any(b.size == 0 for b in branches):
        raise ValueError("every complete branch must be nonempty")
    K = len(branches) + 1
    base_mean_sum = sum(b.mean() for b in branches)
    values = np.concatenate(branches)
    weights = np.concatenate(
        [np.full(b.size, 1.0 / (K * b.size)) for b in branches] + [np.array([1.0 / K])]
    )
    member = np.zeros(cands.shape, dtype=bool)
    for idx, cand in enumerate(cands):
        grand = (base_mean_sum + cand) / K
        scores = np.concatenate([np.abs(values - grand), [abs(cand - grand)]])
        t = finite_quantile(scores, 1.0 - alpha, weights)
        member[idx] = abs(cand - grand) <= t
    return PredictionSet(cands, member, unbounded=bool(member.all()))


# --------------------------------------------------------------------------
# Diagnostics
# --------------------------------------------------------------------------


def overcoverage_bound(group: GroupAction, psi, z_tilde, probes=None) -> float:
    """|H|/|G| where H fixes psi on the probe set; bounds coverage slack."""
    z = np.asarray(z_tilde, dtype=float)
    if probes is None:
        probes = [z]
    probes = [np.asarray(p, dtype=float).reshape(-1) for p in probes]
    base = np.array([float(psi(p)) for p in probes])
    total = 0
    matches = 0
    try:
        batches = group.iter_mapping_batches()
    except NotEnumerableError:
        batches = None
    if batches is not None:
        for maps in batches:
            inv = np.argsort(maps, axis=1)
            ok = np.ones(maps.shape[0], dtype=bool)
            for c, p in enumerate(probes):
                ok &= np.asarray(psi(p[inv]), dtype=float) == base[c]
            matches += int(ok.sum())
            total += maps.shape[0]
    else:
        for g in group.elements():
            total += 1
            if all(float(psi(group.act(g, p))) == base[c] for c, p in enumerate(probes)):
                matches += 1
    return matches / total


def estimate_shift_gap(samples_a, samples_b, nu=None, bins: int = 64) -> float:
    """Empirical total-variation distance between two score samples.

    A diagnostic, not a certified bound: discrete supports are matched
    exactly, continuous ones through a shared histogram.
    """
    if nu is not None:
        a = np.asarray([float(nu(x)) for x in samples_a])
        b = np.asarray([float(nu(x)) for x in samples_b])
    else:
        a = np.asarray(samples_a, dtype=float).ravel()
        b = np.asarray(samples_b, dtype=float).ravel()
    support = np.unique(np.concatenate([a, b]))
    if support.size <= bins:
        pa = np.array([np.mean(a == s) for s in support])
        pb = np.array([np.mean(b == s) for s in support])
        return 0.5 * float(np.abs(pa - pb).sum())
    lo = min(a.min(), b.min())
    hi = max(a.max(), b.max())
    edges = np.linspace(lo, hi, bins + 1)
    pa, _ = np.histogram(a, bins=edges)
    pb, _ = np.histogram(b, bins=edges)
    return 0.5 * float(np.abs(pa / a.size - pb / b.size).sum())
