"""Data generators and the benchmark harness for the hierarchical and
rotational experiments.

Benchmarks draw fresh hierarchical datasets, build each method's prediction
set for the final observation of the last branch on a shared candidate grid,
and aggregate lengths and coverage indicators across trials. All randomness
flows through per-trial generators keyed by (seed, trial) so results are
reproducible under any worker count.

Set membership is evaluated in rank form: a candidate is kept when the pool
mass of scores strictly below its own score stays under the target level,
which is exactly the quantile rule. Because only the target branch's
statistics move with the candidate, the per-branch counts reduce to interval
searches against sorted branch values, keeping the grid sweep cheap.
"""

from __future__ import annotations

from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np

from .calibrate import _LEVEL_EPS, PredictionSet, candidate_grid
from .groups import sample_haar_orthogonal
from .transforms import fit_linear, fit_regressors

ALL_METHODS = ("symmpi", "conformal", "subsampling", "single_tree", "hcp")


@dataclass(frozen=True)
class HierarchicalConfig:
    """Benchmark configuration for the two-layer hierarchical model.

    ``sigma2`` follows the benchmark tables' column label: it is the scale
    (standard deviation) of the branch-level effects -- branch means in the
    unsupervised model, branch slopes in the supervised one. ``branch_size``
    is the per-branch observation count (unsupervised) or the total count
    before the train/calibration split (supervised); a tuple makes sizes
    random uniform over its entries.
    """

    n_branches: int = 20
    branch_size: int | tuple = 15
    sigma2: float = 10.0
    noise_sd: float = 0.5
    supervised: bool = False
    x_low: float = -0.5
    x_high: float = 0.5
    c: float = 2.0
    alphas: tuple = (0.05, 0.15)
    trials: int = 40
    tests: int = 100
    grid_points: int = 2001
    grid_pad_sd: float = 4.0
    seed: int = 0
    # The benchmark model has equal within-branch noise scales, so the
    # adaptive scores use a unit denominator by default (the branch SD still
    # gates the centering choice). Set True for the fully studentized scores.
    studentize: bool = False

    def __post_init__(self):
        if self.n_branches < 1:
            raise ValueError("need at least one branch")
        if self.noise_sd <= 0:
            raise ValueError("noise_sd must be positive")
        if self.sigma2 < 0:
            raise ValueError("sigma2 must be nonnegative")

    @property
    def random_sizes(self) -> bool:
        return isinstance(self.branch_size, (tuple, list))


# --------------------------------------------------------------------------
# Generators
# --------------------------------------------------------------------------


def gen_unsup(cfg: HierarchicalConfig, rng: np.random.Generator, size: int | None = None):
    """Gaussian branches: mu_k ~ N(0, sigma2^2), z ~ N(mu_k, noise_sd^2).

    Returns (K, M) or (size, K, M) for fixed branch sizes; the final entry of
    the last branch is the held-out truth.
    """
    if cfg.random_sizes:
        raise ValueError("gen_unsup is for fixed sizes; use gen_unsup_ragged")
    K, M = cfg.n_branches, cfg.branch_size
    shape = (K, M) if size is None else (size, K, M)
    mu_shape = (K,) if size is None else (size, K)
    mu = rng.normal(0.0, cfg.sigma2, mu_shape)
    return mu[..., None] + rng.normal(0.0, cfg.noise_sd, shape)


def gen_unsup_ragged(cfg: HierarchicalConfig, rng: np.random.Generator) -> list[np.ndarray]:
    """One dataset with branch sizes drawn uniformly from cfg.branch_size."""
    sizes = rng.choice(np.asarray(cfg.branch_size), size=cfg.n_branches)
    mu = rng.normal(0.0, cfg.sigma2, cfg.n_branches)
    return [mu[k] + rng.normal(0.0, cfg.noise_sd, int(n)) for k, n in enumerate(sizes)]


def gen_sup(cfg: HierarchicalConfig, rng: np.random.Generator):
    """Linear branches: theta_k ~ N(0, sigma2^2), y = theta_k x + noise.

    Returns per-branch lists (x_k, y_k); sizes are cfg.branch_size or drawn
    from it when it is a tuple.
    """
    K = cfg.n_branches
    if cfg.random_sizes:
        sizes = rng.choice(np.asarray(cfg.branch_size), size=K)
    else:
        sizes = np.full(K, cfg.branch_size)
    theta = rng.normal(0.0, cfg.sigma2, K)
    xs, ys = [], []
    for k, n in enumerate(sizes):
        x = rng.uniform(cfg.x_low, cfg.x_high, int(n))
        xs.append(x)
        ys.append(theta[k] * x + rng.normal(0.0, cfg.noise_sd, int(n)))
    return xs, ys


def gen_rotational(n: int, p: int, scale: float, rng: np.random.Generator) -> np.ndarray:
    """n i.i.d. points from N(0, scale * I_p): exchangeable and rotation-invariant."""
    return rng.normal(0.0, np.sqrt(scale), (n, p))


# --------------------------------------------------------------------------
# Membership primitives (rank form of the quantile rule)
# --------------------------------------------------------------------------


def _count_within(sorted_vals, center, radius) -> np.ndarray:
    """How many values fall strictly inside (center - radius, center + radius).

    ``center`` and ``radius`` are (G,) arrays; values are sorted ascending.
    """
    hi = np.searchsorted(sorted_vals, center + radius, side="left")
    lo = np.searchsorted(sorted_vals, center - radius, side="right")
    return hi - lo


def _finish(member, spacing, forced_unbounded=False):
    """(length, covered, unbounded) with the final grid entry as the truth."""
    unbounded = forced_unbounded or bool(member[:-1].all())
    length = float("inf") if unbounded else float(member[:-1].sum()) * spacing
    return length, bool(member[-1]), unbounded


class _TestFrame:
    """Shared per-test context: candidate grid plus the appended truth."""

    def __init__(self, observed_pool, truth, cfg):
        grid = candidate_grid(observed_pool, cfg.grid_points, cfg.grid_pad_sd)
        self.spacing = float(grid[1] - grid[0])
        self.gridp = np.append(grid, truth)
        self.G = self.gridp.size


# --------------------------------------------------------------------------
# Unsupervised evaluation
# --------------------------------------------------------------------------


def _branch_stats(values):
    n = values.size
    mean = float(values.mean())
    sd = float(values.std(ddof=1)) if n > 1 else 1.0
    return mean, sd if sd > 0 else 1.0


def _symmpi_unsup_below(branches, frame, c, studentize, weighted):
    """Below-own score mass for the adaptive-centering scores, per candidate.

    ``branches`` holds the complete donor branches plus the target branch's
    observed values last; the candidate completes the target branch. The
    branch SD always gates the centering choice; it divides the scores only
    when ``studentize``. With ``weighted`` each branch carries total mass
    1/K (the random-size quantile), else points are equally weighted.
    """
    gridp = frame.gridp
    target_obs = branches[-1]
    donors = branches[:-1]
    K = len(branches)
    n_t = target_obs.size + 1
    mean_t = (target_obs.sum() + gridp) / n_t
    if n_t > 1:
        ssq_t = (target_obs**2).sum() + gridp**2 - n_t * mean_t**2
        sd_t = np.sqrt(np.maximum(ssq_t, 0.0) / (n_t - 1))
        sd_t = np.where(sd_t > 0, sd_t, 1.0)
    else:
        sd_t = np.ones(frame.G)

    stats = [_branch_stats(b) for b in donors]
    grand = (sum(m for m, _ in stats) + mean_t) / K

    near_t = np.abs(mean_t - grand) <= c * sd_t / np.sqrt(n_t)
    center_t = np.where(near_t, grand, mean_t)
    own = np.abs(gridp - center_t) / (sd_t if studentize else 1.0)

    total = sum(b.size for b in donors) + n_t
    below = np.zeros(frame.G)
    for b, (m_k, sd_k) in zip(donors, stats):
        near = np.abs(m_k - grand) <= c * sd_k / np.sqrt(b.size)
        center = np.where(near, grand, m_k)
        radius = own * sd_k if studentize else own
        w = 1.0 / (K * b.size) if weighted else 1.0 / total
        below += _count_within(np.sort(b), center, radius) * w
    # within the target branch the shared scale cancels either way
    w_t = 1.0 / (K * n_t) if weighted else 1.0 / total
    below += _count_within(np.sort(target_obs), center_t, np.abs(gridp - center_t)) * w_t
    return below


def _centered_conformal_rows(pool_values, frame, alphas, spacing):
    """Self-inclusive conformal around the pooled mean, one row per alpha."""
    vals = np.asarray(pool_values, dtype=float).ravel()
    gridp = frame.gridp
    n = vals.size + 1
    centers = (vals.sum() + gridp) / n
    own = np.abs(gridp - centers)
    counts = _count_within(np.sort(vals), centers, own)
    rows = []
    for alpha in alphas:
        k_idx = int(np.ceil((1.0 - alpha) * n - _LEVEL_EPS))
        if k_idx > n - 1:
            rows.append((float("inf"), True, True))
            continue
        member = counts / n < (1.0 - alpha) - _LEVEL_EPS
        rows.append(_finish(member, spacing))
    return rows


def _hcp_rows(donor_branches, frame, alphas, spacing):
    """First-observation-of-a-new-branch rows.

    Scores are deviations from the average of the complete branches' means;
    the threshold is the branch-weighted quantile over those branches (each
    contributing equal total mass regardless of its size).
    """
    K = len(donor_branches)
    gridp = frame.gridp
    grand = sum(float(np.mean(b)) for b in donor_branches) / K
    own = np.abs(gridp - grand)
    below = np.zeros(frame.G)
    for b in donor_branches:
        below += _count_within(np.sort(b), np.full(frame.G, grand), own) / (K * b.size)
    rows = []
    for alpha in alphas:
        member = below < (1.0 - alpha) - _LEVEL_EPS
        rows.append(_finish(member, spacing))
    return rows


def _unsup_eval(branches, cfg, rng, methods):
    """Per-test evaluation; ``branches`` has the truth appended to the last one."""
    K = len(branches)
    truth = float(branches[-1][-1])
    obs_branches = branches[:-1] + [branches[-1][:-1]]
    obs = np.concatenate(obs_branches)
    frame = _TestFrame(obs, truth, cfg)
    equal_sizes = len({b.size for b in branches}) == 1
    out = {}

    if "symmpi" in methods:
        below = _symmpi_unsup_below(
            obs_branches, frame, cfg.c, cfg.studentize, weighted=not equal_sizes
        )
        rows = []
        for alpha in cfg.alphas:
            member = below < (1.0 - alpha) - _LEVEL_EPS
            rows.append(_finish(member, frame.spacing))
        out["symmpi"] = rows

    if "conformal" in methods:
        out["conformal"] = _centered_conformal_rows(obs, frame, cfg.alphas, frame.spacing)

    if "subsampling" in methods:
        picks = np.array([b[int(rng.integers(b.size))] for b in obs_branches[:-1]])
        out["subsampling"] = _centered_conformal_rows(picks, frame, cfg.alphas, frame.spacing)

    if "single_tree" in methods:
        out["single_tree"] = _centered_conformal_rows(
            obs_branches[-1], frame, cfg.alphas, frame.spacing
        )

    if "hcp" in methods:
        out["hcp"] = _hcp_rows(obs_branches[:-1], frame, cfg.alphas, frame.spacing)

    return out


# --------------------------------------------------------------------------
# Supervised evaluation
# --------------------------------------------------------------------------


def _sup_eval(xs, ys, cfg, rng, methods):
    """Supervised evaluation; per-branch ragged feature/response arrays."""
    K = len(xs)
    n_train = [int(np.ceil(x.size / 2)) for x in xs]
    tr_x = [x[:m] for x, m in zip(xs, n_train)]
    tr_y = [y[:m] for y, m in zip(ys, n_train)]
    cal_x = [x[m:] for x, m in zip(xs, n_train)]
    cal_y = [y[m:] for y, m in zip(ys, n_train)]
    sizes = np.array([x.size for x in cal_x])
    x_target = float(cal_x[-1][-1])
    truth = float(cal_y[-1][-1])

    reg = fit_regressors(tr_x, tr_y)
    mu_p = [reg.mu(cx) for cx in cal_x]
    mu_b = [reg.mu_k(k, cal_x[k]) for k in range(K)]
    sig = [reg.sigma_k(k, cal_x[k]) for k in range(K)]
    center = [
        np.where(np.abs(mu_b[k] - mu_p[k]) / sig[k] <= cfg.c, mu_p[k], mu_b[k]) for k in range(K)
    ]

    obs_y = np.concatenate([cy for cy in cal_y[:-1]] + [cal_y[-1][:-1]])
    frame = _TestFrame(obs_y, truth, cfg)
    gridp = frame.gridp
    equal_sizes = len(set(sizes.tolist())) == 1
    out = {}

    if "symmpi" in methods:
        fixed_scores = []
        for k in range(K - 1):
            raw = np.abs(cal_y[k] - center[k])
            if cfg.studentize and raw.size > 1:
                eps = np.sqrt(np.sum(raw**2) / (raw.size - 1))
                raw = raw / (eps if eps > 0 else 1.0)
            fixed_scores.append(raw)
        raw_last = np.abs(cal_y[-1][:-1] - center[-1][:-1])
        raw_cand = np.abs(gridp - center[-1][-1])
        m_K = raw_last.size + 1
        # Within the target branch any shared scale cancels, so the sibling
        # comparison is on raw residual magnitudes in both modes.
        below_target = np.searchsorted(np.sort(raw_last), raw_cand, side="left")
        if cfg.studentize and m_K > 1:
            eps_cand = np.sqrt((np.sum(raw_last**2) + raw_cand**2) / (m_K - 1))
            own = raw_cand / np.where(eps_cand > 0, eps_cand, 1.0)
        else:
            own = raw_cand
        rows = []
        if equal_sizes:
            all_fixed = np.sort(np.concatenate(fixed_scores)) if K > 1 else np.empty(0)
            below = (np.searchsorted(all_fixed, own, side="left") + below_target) / sizes.sum()
        else:
            below = below_target / (K * m_K)
            for k in range(K - 1):
                s = np.sort(fixed_scores[k])
                below = below + np.searchsorted(s, own, side="left") / (K * s.size)
        for alpha in cfg.alphas:
            member = below < (1.0 - alpha) - _LEVEL_EPS
            rows.append(_finish(member, frame.spacing))
        out["symmpi"] = rows

    if "conformal" in methods:
        cal_scores = np.concatenate(
            [np.abs(cal_y[k] - mu_p[k]) for k in range(K - 1)]
            + [np.abs(cal_y[-1][:-1] - mu_p[-1][:-1])]
        )
        out["conformal"] = _fixed_score_rows(
            cal_scores, np.abs(gridp - mu_p[-1][-1]), frame, cfg.alphas
        )

    if "subsampling" in methods:
        idx = [int(rng.integers(cal_x[k].size)) for k in range(K - 1)]
        pick_scores = np.array([abs(cal_y[k][i] - mu_p[k][i]) for k, i in zip(range(K - 1), idx)])
        out["subsampling"] = _fixed_score_rows(
            pick_scores, np.abs(gridp - mu_p[-1][-1]), frame, cfg.alphas
        )

    if "single_tree" in methods:
        solo = fit_linear(tr_x[-1], tr_y[-1])
        cal_scores = np.abs(cal_y[-1][:-1] - solo.predict(cal_x[-1][:-1]))
        own = np.abs(gridp - float(solo.predict(np.array([x_target]))[0]))
        out["single_tree"] = _fixed_score_rows(cal_scores, own, frame, cfg.alphas)

    return out


def _fixed_score_rows(cal_scores, own, frame, alphas):
    """Conformal rows when calibration scores do not depend on the candidate."""
    s = np.sort(np.asarray(cal_scores, dtype=float).ravel())
    n = s.size + 1
    below = np.searchsorted(s, own, side="left")
    rows = []
    for alpha in alphas:
        k_idx = int(np.ceil((1.0 - alpha) * n - _LEVEL_EPS))
        if k_idx > n - 1:
            rows.append((float("inf"), True, True))
            continue
        member = below / n < (1.0 - alpha) - _LEVEL_EPS
        rows.append(_finish(member, frame.spacing))
    return rows


# --------------------------------------------------------------------------
# Benchmark driver
# --------------------------------------------------------------------------


@dataclass
class BenchRow:
    method: str
    alpha: float
    sigma2: float
    mean_length: float
    se_length: float
    mean_coverage: float
    se_coverage: float
    unbounded_rate: float


def _run_trial(cfg: HierarchicalConfig, methods, trial: int):
    rng = np.random.default_rng((cfg.seed, trial))
    acc = {
        (m, ai): {"lengths": [], "covers": [], "unbounded": 0}
        for m in methods
        for ai in range(len(cfg.alphas))
    }
    for _ in range(cfg.tests):
        if cfg.supervised:
            xs, ys = gen_sup(cfg, rng)
            res = _sup_eval(xs, ys, cfg, rng, methods)
        elif cfg.random_sizes:
            branches = gen_unsup_ragged(cfg, rng)
            res = _unsup_eval(branches, cfg, rng, methods)
        else:
            z = gen_unsup(cfg, rng)
            res = _unsup_eval([z[k] for k in range(cfg.n_branches)], cfg, rng, methods)
        for m, rows in res.items():
            for ai, (length, covered, unbounded) in enumerate(rows):
                cell = acc[(m, ai)]
                cell["lengths"].append(length)
                cell["covers"].append(covered)
                cell["unbounded"] += int(unbounded)
    summary = {}
    for key, cell in acc.items():
        finite = [l for l in cell["lengths"] if np.isfinite(l)]
        mean_len = float(np.mean(finite)) if finite else float("inf")
        summary[key] = (
            mean_len,
            float(np.mean(cell["covers"])),
            cell["unbounded"] / cfg.tests,
        )
    return summary


def run_benchmark(
    cfg: HierarchicalConfig,
    methods=("symmpi", "conformal", "subsampling", "single_tree"),
    threads: int = 1,
) -> list[BenchRow]:
    """Run the benchmark protocol and aggregate per-trial averages.

    Reported spread is the across-trial sample SD of the per-trial averages.
    Trials whose lengths are all unbounded contribute Inf and are excluded
    from finite-length averaging (the table then shows Inf).
    """
    for m in methods:
        if m not in ALL_METHODS:
            raise ValueError(f"unknown method {m!r}")
    if cfg.supervised and "hcp" in methods:
        raise ValueError("the first-observation method is unsupervised-only here")
    trials = list(range(cfg.trials))
    if threads > 1:
        with ProcessPoolExecutor(max_workers=threads) as pool:
            per_trial = list(
                pool.map(_run_trial, [cfg] * len(trials), [methods] * len(trials), trials)
            )
    else:
        per_trial = [_run_trial(cfg, methods, t) for t in trials]

    rows = []
    for ai, alpha in enumerate(cfg.alphas):
        for m in methods:
            lens = np.array([pt[(m, ai)][0] for pt in per_trial])
            covs = np.array([pt[(m, ai)][1] for pt in per_trial])
            unb = np.array([pt[(m, ai)][2] for pt in per_trial])
            finite = lens[np.isfinite(lens)]
            mean_len = float(finite.mean()) if finite.size else float("inf")
            se_len = float(finite.std(ddof=1)) if finite.size > 1 else 0.0
            rows.append(
                BenchRow(
                    method=m,
                    alpha=alpha,
                    sigma2=cfg.sigma2,
                    mean_length=mean_len,
                    se_length=se_len,
                    mean_coverage=float(covs.mean()),
                    se_coverage=float(covs.std(ddof=1)) if covs.size > 1 else 0.0,
                    unbounded_rate=float(unb.mean()),
                )
            )
    return rows


def bench_table(rows: list[BenchRow]) -> str:
    """Plain-text table of benchmark rows, one line per (alpha, method)."""
    lines = [
        f"{'alpha':>6} {'method':>12} {'sigma2':>7} {'length':>16} {'coverage':>16} {'unbounded':>9}"
    ]
    for r in rows:
        length = (
            "Inf" if not np.isfinite(r.mean_length) else f"{r.mean_length:.3f} ({r.se_length:.3f})"
        )
        cov = f"{r.mean_coverage:.3f} ({r.se_coverage:.3f})"
        lines.append(
            f"{r.alpha:>6} {r.method:>12} {r.sigma2:>7} {length:>16} {cov:>16} {r.unbounded_rate:>9.2f}"
        )
    return "\n".join(lines)


# --------------------------------------------------------------------------
# Rotationally invariant prediction
# --------------------------------------------------------------------------


def rotation_region(
    observed,
    alpha: float,
    mc_draws: int = 400,
    rng: np.random.Generator | None = None,
    grid_points: int = 2001,
) -> PredictionSet:
    """Region for the next point keeping |first coordinate| large.

    The score is -|z_1| of the held-out point; its orbit under joint
    permutation and rotation is sampled via uniform index draws and Gaussian
    projections (a rotated vector's first coordinate matches w.z/||w|| in
    law). Away from the first axis the kept region is the complement of a
    vertical strip |z_1| < C, so the grid scans candidates (x, h, 0, ...)
    at the observed RMS transverse height h; points very close to the axis
    itself are always covered (their own score is their orbit minimum).
    The boundary C is in ``meta['strip_halfwidth']``.
    """
    rng = rng or np.random.default_rng()
    z = np.asarray(observed, dtype=float)
    n, p = z.shape
    idx = rng.integers(0, n + 1, mc_draws)
    W = rng.standard_normal((mc_draws, p))
    Wn = W / np.linalg.norm(W, axis=1, keepdims=True)
    fixed_mask = idx < n
    fixed_scores = -np.abs(np.einsum("mp,mp->m", Wn[fixed_mask], z[idx[fixed_mask]]))
    w_cand = Wn[~fixed_mask]

    height = float(np.sqrt(np.mean(z[:, 1:] ** 2))) if p > 1 else 0.0
    radius = float(np.abs(z).max()) * 1.5 + 1.0
    grid = np.linspace(-radius, radius, grid_points)
    own = -np.abs(grid)
    # candidate draw scores at the representative point (x, h, 0, ...)
    trans = w_cand[:, 1] * height if p > 1 else 0.0
    cand_scores = -np.abs(w_cand[:, 0][None, :] * grid[:, None] + trans[None, :])
    below = (fixed_scores[None, :] < own[:, None]).sum(axis=1)
    below = below + (cand_scores < own[:, None]).sum(axis=1)
    member = below / (mc_draws + 1) < (1.0 - alpha) - _LEVEL_EPS
    kept = np.abs(grid[member])
    strip = float(kept.min()) if member.any() and not member.all() else 0.0
    return PredictionSet(
        grid,
        member,
        unbounded=bool(member.all()),
        meta={"strip_halfwidth": strip, "mc_draws": mc_draws, "transverse_height": height},
    )


def rotation_region_covers(
    observed,
    test_points,
    alpha: float,
    mc_draws: int = 400,
    rng: np.random.Generator | None = None,
) -> np.ndarray:
    """Membership of each fresh point in its own completed-data region."""
    rng = rng or np.random.default_rng()
    z = np.asarray(observed, dtype=float)
    tp = np.atleast_2d(np.asarray(test_points, dtype=float))
    n, p = z.shape
    idx = rng.integers(0, n + 1, mc_draws)
    W = rng.standard_normal((mc_draws, p))
    Wn = W / np.linalg.norm(W, axis=1, keepdims=True)
    fixed_mask = idx < n
    fixed_scores = -np.abs(np.einsum("mp,mp->m", Wn[fixed_mask], z[idx[fixed_mask]]))
    cand_scores = -np.abs(tp @ Wn[~fixed_mask].T)
    own = -np.abs(tp[:, 0])
    below = (fixed_scores[None, :] < own[:, None]).sum(axis=1)
    below = below + (cand_scores < own[:, None]).sum(axis=1)
    return below / (mc_draws + 1) < (1.0 - alpha) - _LEVEL_EPS


def rotation_supervised_set(
    x,
    y,
    x_new,
    score,
    candidates,
    alpha: float,
    mc_draws: int = 400,
    rng: np.random.Generator | None = None,
) -> PredictionSet:
    """Supervised set under joint permutation-rotation invariance of features.

    ``score(y_values, x_points)`` must return nonconformity values and be
    vectorized; calibration scores are sampled at rotated feature vectors
    while each candidate's own score uses the unrotated ``x_new``.
    """
    rng = rng or np.random.default_rng()
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float).ravel()
    x_new = np.asarray(x_new, dtype=float)
    cands = np.asarray(candidates, dtype=float)
    n, p = x.shape
    idx = rng.integers(0, n + 1, mc_draws)
    rotations = [sample_haar_orthogonal(p, rng) for _ in range(mc_draws)]

    fixed_scores = []
    cand_cols = []
    for j, O in zip(idx, rotations):
        if j < n:
            fixed_scores.append(float(score(np.array([y[j]]), (O @ x[j])[None, :])[0]))
        else:
            xr = np.tile(O @ x_new, (cands.size, 1))
            cand_cols.append(np.asarray(score(cands, xr), dtype=float))
    fixed_scores = np.asarray(fixed_scores)
    cand_mat = np.stack(cand_cols, axis=1) if cand_cols else np.empty((cands.size, 0))
    own = np.asarray(score(cands, np.tile(x_new, (cands.size, 1))), dtype=float)

    below = (fixed_scores[None, :] < own[:, None]).sum(axis=1)
    below = below + (cand_mat < own[:, None]).sum(axis=1)
    member = below / (mc_draws + 1) < (1.0 - alpha) - _LEVEL_EPS
    return PredictionSet(cands, member, unbounded=bool(member.all()))
