"""Population-level dependence and error metrics.

All functions are pure, operate on numpy arrays in float64, and raise on
degenerate input rather than guessing. The dependence estimators used to
audit confounder removal:

* `pearson`   -- exact textbook linear correlation (no epsilon guard).
* `dcor2`     -- squared distance correlation, Szekely V-statistic.
* `mutual_info` -- Kraskov-Stoegbauer-Grassberger type-1 kNN estimator
  (k=3, max-norm), with a deterministic tie-breaking jitter.

dcor2 and mutual_info cost O(n^2) / O(n log n); above `subsample_to` points
they estimate on a seeded subsample (the seed is part of the result record).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.spatial import cKDTree
from scipy.special import digamma

from confae.errors import NumericFault

SUBSAMPLE_TO = 4000        # dcor2 is O(n^2); cap the pairwise matrices
MI_SUBSAMPLE_TO = 100_000  # KSG is O(n log n); effectively uncapped at desk scale
_JITTER_SEED = 0xD17E
_JITTER_SCALE = 1e-10


@dataclass(frozen=True)
class DependenceResult:
    statistic: float
    method: str                  # pearson | dcor2 | mi_ksg
    sample_count: int
    subsample_seed: int | None = None

    def __post_init__(self):
        s = self.statistic
        if self.method == "pearson" and not -1.0 <= s <= 1.0:
            raise NumericFault(f"pearson statistic {s} outside [-1, 1]")
        if self.method == "dcor2" and not 0.0 <= s <= 1.0:
            raise NumericFault(f"dcor2 statistic {s} outside [0, 1]")
        if self.method == "mi_ksg" and s < -0.05:
            raise NumericFault(f"mi estimate {s} below the -0.05 noise floor")


def _column(x, name: str) -> np.ndarray:
    arr = np.asarray(x, dtype=np.float64).reshape(-1)
    if arr.size == 0:
        raise ValueError(f"{name} is empty")
    return arr


# -- linear correlation and error metrics -------------------------------------

def pearson(a, b) -> float:
    """Textbook Pearson correlation; errors on constant input."""
    a = _column(a, "a")
    b = _column(b, "b")
    if a.size != b.size:
        raise ValueError(f"length mismatch: {a.size} vs {b.size}")
    if a.size < 3:
        raise ValueError("pearson requires at least 3 samples")
    ac = a - a.mean()
    bc = b - b.mean()
    sa = np.sqrt((ac * ac).mean())
    sb = np.sqrt((bc * bc).mean())
    if sa == 0.0 or sb == 0.0:
        raise ValueError("pearson undefined for a constant input (zero variance)")
    return float((ac * bc).mean() / (sa * sb))


def rmse(predicted, actual) -> float:
    p = _column(predicted, "predicted")
    t = _column(actual, "actual")
    if p.size != t.size:
        raise ValueError(f"length mismatch: {p.size} vs {t.size}")
    return float(np.sqrt(np.mean((p - t) ** 2)))


def auc(scores, labels) -> float:
    """Area under the ROC curve via the Mann-Whitney rank statistic (mid-rank ties)."""
    s = _column(scores, "scores")
    y = np.asarray(labels).reshape(-1)
    if s.size != y.size:
        raise ValueError("scores and labels must have equal length")
    pos = y == 1
    neg = y == 0
    if not (np.all(pos | neg)):
        raise ValueError("labels must be binary 0/1")
    n_pos, n_neg = int(pos.sum()), int(neg.sum())
    if n_pos == 0 or n_neg == 0:
        raise ValueError("AUC requires both classes present")
    order = np.argsort(s, kind="stable")
    ranks = np.empty(s.size, dtype=np.float64)
    sorted_s = s[order]
    i = 0
    while i < s.size:
        j = i
        while j + 1 < s.size and sorted_s[j + 1] == sorted_s[i]:
            j += 1
        ranks[order[i:j + 1]] = 0.5 * (i + j) + 1.0  # mid-rank, 1-based
        i = j + 1
    rank_sum = ranks[pos].sum()
    return float((rank_sum - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg))


def l1_metric(x, y) -> float:
    """Mean absolute difference over all pixels."""
    xa = np.asarray(x, dtype=np.float64)
    ya = np.asarray(y, dtype=np.float64)
    if xa.shape != ya.shape:
        raise ValueError(f"shape mismatch: {xa.shape} vs {ya.shape}")
    return float(np.mean(np.abs(xa - ya)))


# -- windowed normalized cross-correlation -------------------------------------

NCC_WINDOW = 9
NCC_EPS = 1e-5


def _windows(img: np.ndarray) -> np.ndarray:
    """Tile the trailing HxW axes into non-overlapping 9x9 windows."""
    h, w = img.shape[-2:]
    nh, nw = h // NCC_WINDOW, w // NCC_WINDOW
    if nh == 0 or nw == 0:
        raise ValueError(f"image {h}x{w} smaller than the {NCC_WINDOW}x{NCC_WINDOW} window")
    lead = img.shape[:-2]
    img = img[..., :nh * NCC_WINDOW, :nw * NCC_WINDOW]
    img = img.reshape(*lead, nh, NCC_WINDOW, nw, NCC_WINDOW)
    img = np.moveaxis(img, -2, -3)
    return img.reshape(*lead, nh * nw, NCC_WINDOW * NCC_WINDOW)


def ncc_metric(x, y) -> float:
    """Mean windowed zero-normalized cross-correlation, in [-1, 1] (higher is better)."""
    xa = np.asarray(x, dtype=np.float64)
    ya = np.asarray(y, dtype=np.float64)
    if xa.shape != ya.shape:
        raise ValueError(f"shape mismatch: {xa.shape} vs {ya.shape}")
    xw = _windows(xa)
    yw = _windows(ya)
    xc = xw - xw.mean(axis=-1, keepdims=True)
    yc = yw - yw.mean(axis=-1, keepdims=True)
    sx = np.sqrt((xc * xc).mean(axis=-1) + NCC_EPS)
    sy = np.sqrt((yc * yc).mean(axis=-1) + NCC_EPS)
    zncc = (xc * yc).mean(axis=-1) / (sx * sy)
    return float(zncc.mean())


# -- distance correlation --------------------------------------------------------

def _maybe_subsample(arrs, subsample_to, seed):
    n = arrs[0].size
    if n <= subsample_to:
        return arrs, None
    idx = np.random.default_rng(seed).choice(n, size=subsample_to, replace=False)
    return [a[idx] for a in arrs], seed


def dcor2(a, b, subsample_to: int = SUBSAMPLE_TO, subsample_seed: int = 0) -> float:
    """Squared distance correlation (biased V-statistic), in [0, 1].

    Double-centers the pairwise-distance matrices and normalizes the squared
    distance covariance by the marginal distance variances; returns 0 when
    either marginal distance variance is 0.
    """
    a = _column(a, "a")
    b = _column(b, "b")
    if a.size != b.size:
        raise ValueError(f"length mismatch: {a.size} vs {b.size}")
    if a.size < 4:
        raise ValueError("dcor2 requires at least 4 samples")
    (a, b), _ = _maybe_subsample([a, b], subsample_to, subsample_seed)

    da = np.abs(a[:, None] - a[None, :])
    db = np.abs(b[:, None] - b[None, :])
    A = da - da.mean(axis=0, keepdims=True) - da.mean(axis=1, keepdims=True) + da.mean()
    B = db - db.mean(axis=0, keepdims=True) - db.mean(axis=1, keepdims=True) + db.mean()
    v_ab = (A * B).mean()
    v_aa = (A * A).mean()
    v_bb = (B * B).mean()
    if v_aa <= 0.0 or v_bb <= 0.0:
        return 0.0
    return float(min(max(v_ab / np.sqrt(v_aa * v_bb), 0.0), 1.0))


# -- mutual information (KSG type 1) ----------------------------------------------

def mutual_info(a, b, k: int = 3, subsample_to: int = MI_SUBSAMPLE_TO,
                subsample_seed: int = 0) -> float:
    """KSG type-1 mutual information estimate in nats (k=3, max-norm).

    Marginals are standardized to unit variance (MI is invariant under
    per-variable affine maps) and perturbed by a deterministic tie-breaking
    jitter of 1e-10 x data scale drawn from a fixed sub-seed.
    """
    a = _column(a, "a")
    b = _column(b, "b")
    if a.size != b.size:
        raise ValueError(f"length mismatch: {a.size} vs {b.size}")
    if a.size < 50:
        raise ValueError("mutual_info requires at least 50 samples")
    (a, b), _ = _maybe_subsample([a, b], subsample_to, subsample_seed)
    n = a.size

    def prep(v, stream):
        sd = v.std()
        v = v / sd if sd > 0 else v.copy()
        scale = max(v.std(), 1.0)
        jitter = np.random.default_rng((_JITTER_SEED, stream)).standard_normal(n)
        return v + _JITTER_SCALE * scale * jitter

    x = prep(a, 0)
    y = prep(b, 1)
    joint = np.column_stack([x, y])
    tree = cKDTree(joint)
    # distance to the k-th true neighbor (query includes the point itself)
    eps = tree.query(joint, k=k + 1, p=np.inf)[0][:, k]

    def strict_counts(v):
        order = np.argsort(v, kind="stable")
        vs = v[order]
        hi = np.searchsorted(vs, v + eps, side="left")
        lo = np.searchsorted(vs, v - eps, side="right")
        return hi - lo - 1  # exclude the point itself

    nx = strict_counts(x)
    ny = strict_counts(y)
    mi = digamma(k) + digamma(n) - np.mean(digamma(nx + 1) + digamma(ny + 1))
    return float(mi)


def dependence(a, b, method: str, **kwargs) -> DependenceResult:
    """Compute one dependence statistic and wrap it with its provenance."""
    n = np.asarray(a).size
    if method == "pearson":
        value = pearson(a, b)
        used, sub_seed = n, None
    elif method == "dcor2":
        value = dcor2(a, b, **kwargs)
        cap = kwargs.get("subsample_to", SUBSAMPLE_TO)
        used = min(n, cap)
        sub_seed = kwargs.get("subsample_seed", 0) if n > cap else None
    elif method == "mi_ksg":
        value = mutual_info(a, b, **kwargs)
        cap = kwargs.get("subsample_to", MI_SUBSAMPLE_TO)
        used = min(n, cap)
        sub_seed = kwargs.get("subsample_seed", 0) if n > cap else None
    else:
        raise ValueError(f"unknown dependence method {method!r}")
    return DependenceResult(statistic=value, method=method,
                            sample_count=used, subsample_seed=sub_seed)


# -- across-fold significance -------------------------------------------------------

# two-sided critical values of Student's t at alpha=0.05, df 1..30
_T_CRIT_05 = [
    12.706, 4.303, 3.182, 2.776, 2.571, 2.447, 2.365, 2.306, 2.262, 2.228,
    2.201, 2.179, 2.160, 2.145, 2.131, 2.120, 2.110, 2.101, 2.093, 2.086,
    2.080, 2.074, 2.069, 2.064, 2.060, 2.056, 2.052, 2.048, 2.045, 2.042,
]


def t_critical(df: int, alpha: float = 0.05) -> float:
    if alpha != 0.05:
        raise ValueError("only alpha=0.05 is supported (embedded critical-value table)")
    if not 1 <= df <= len(_T_CRIT_05):
        raise ValueError(f"df {df} outside the embedded table range 1..{len(_T_CRIT_05)}")
    return _T_CRIT_05[df - 1]


def ttest_mask(per_fold_values, alpha: float = 0.05) -> np.ndarray:
    """Per-position one-sample two-sided t-test across folds against 0.

    Input is (folds, positions); returns a boolean significance mask. A
    position with zero across-fold variance is significant iff its mean is
    nonzero (all-zero positions are never significant).
    """
    v = np.asarray(per_fold_values, dtype=np.float64)
    if v.ndim != 2:
        raise ValueError("expected a (folds, positions) array")
    folds = v.shape[0]
    if folds < 2:
        raise ValueError("t-test needs at least 2 folds")
    crit = t_critical(folds - 1, alpha)
    m = v.mean(axis=0)
    sd = v.std(axis=0, ddof=1)
    mask = np.zeros(v.shape[1], dtype=bool)
    degenerate = sd == 0.0
    mask[degenerate] = m[degenerate] != 0.0
    ok = ~degenerate
    t = np.abs(m[ok]) / (sd[ok] / np.sqrt(folds))
    mask[ok] = t > crit
    return mask
