"""Classifiers and model selection.

The binary classifier is a soft-margin RBF SVM trained by simplified
sequential minimal optimization: sweep the training rows, pick a KKT violator
as the first index, draw the second index uniformly at random (deterministic
inline xorshift so runs reproduce bit-for-bit), and solve the two-variable
subproblem in closed form. Multiclass identification is one-against-one with
majority voting. A k-nearest-neighbour classifier serves as the baseline.

Feature selection evaluates subsets by cross-validated confusion-matrix
accuracy: exhaustively over all size-6 subsets, or greedily (sequential
forward selection). Hyperparameters come from a power-of-two grid search.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from itertools import combinations

import numpy as np

from .errors import (
    DimensionMismatch,
    EmptyTrain,
    InvalidHyperParams,
    SingleClassInput,
    UnknownFeatureIndex,
)
from .features import ALL_FEATURES, N_FEATURES, FeatureMatrix, Standardization, standardize

log = logging.getLogger("magprint.learn")

DEFAULT_TOL = 1e-3
DEFAULT_MAX_PASSES = 50      # consecutive sweeps without an alpha update
DEFAULT_MAX_SWEEPS = 4000    # hard cap so a pathological problem cannot spin
_MIN_ALPHA_STEP = 1e-5

GAMMA_GRID = tuple(2.0**e for e in range(-8, 9))   # 2^-8 .. 2^8, 17 values
C_GRID = tuple(2.0**e for e in range(-8, 29))      # 2^-8 .. 2^28, 37 values


@dataclass(frozen=True)
class SvmHyperParams:
    gamma: float
    c: float

    def validate(self) -> "SvmHyperParams":
        if self.gamma <= 0 or self.c <= 0:
            raise InvalidHyperParams(f"gamma and C must be > 0, got gamma={self.gamma}, C={self.c}")
        return self


DEFAULT_HYPER = SvmHyperParams(gamma=0.125, c=16.0)


def rbf_kernel(x: np.ndarray, y: np.ndarray, gamma: float) -> float:
    """k(x, y) = exp(-gamma * ||x - y||^2)."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.shape != y.shape:
        raise DimensionMismatch(f"kernel arguments differ in shape: {x.shape} vs {y.shape}")
    d = x - y
    return float(np.exp(-gamma * np.dot(d, d)))


def rbf_gram(a: np.ndarray, b: np.ndarray | None, gamma: float) -> np.ndarray:
    """Kernel matrix K[i, j] = k(a_i, b_j); b=None means K(a, a) with exact unit diagonal."""
    a = np.asarray(a, dtype=float)
    symmetric = b is None
    b = a if symmetric else np.asarray(b, dtype=float)
    sq = (
        np.sum(a * a, axis=1)[:, None]
        + np.sum(b * b, axis=1)[None, :]
        - 2.0 * (a @ b.T)
    )
    np.maximum(sq, 0.0, out=sq)
    k = np.exp(-gamma * sq)
    if symmetric:
        np.fill_diagonal(k, 1.0)
    return np.ascontiguousarray(k)


def _pair_update_impl(K, y, alpha, E, b, c, i, j):
    """One SMO pair step on (i, j). Mutates alpha and E on success.

    Returns (stepped, b). The box bounds are computed quantities; rounding can
    leave an alpha a few ulps inside the box, where the strict KKT bound tests
    flag it as a violation forever while the box blocks any further step, so
    alphas snap to the exact bound inside an ulp-scale band. The upper band
    follows c, but the zero band must follow the pair's own magnitude: a
    c-scaled band at zero would wipe small alphas wholesale when c is huge,
    breaking the sum(alpha*y) = 0 conservation that pair updates otherwise
    maintain.
    """
    ai_old = alpha[i]
    aj_old = alpha[j]
    if y[i] != y[j]:
        lo = max(0.0, aj_old - ai_old)
        hi = min(c, c + aj_old - ai_old)
    else:
        lo = max(0.0, ai_old + aj_old - c)
        hi = min(c, ai_old + aj_old)
    if lo == hi:
        return False, b
    eta = 2.0 * K[i, j] - K[i, i] - K[j, j]
    if eta >= 0.0:
        return False, b
    snap_hi = 1e-13 * c
    snap_lo = 1e-13 * (ai_old + aj_old)
    aj = aj_old - y[j] * (E[i] - E[j]) / eta
    if aj < lo:
        aj = lo
    elif aj > hi:
        aj = hi
    if aj < snap_lo:
        aj = 0.0
    elif aj > c - snap_hi:
        aj = c
    if abs(aj - aj_old) < _MIN_ALPHA_STEP:
        return False, b
    ai = ai_old + y[i] * y[j] * (aj_old - aj)
    if ai < snap_lo:
        ai = 0.0
    elif ai > c - snap_hi:
        ai = c
    d_i = y[i] * (ai - ai_old)
    d_j = y[j] * (aj - aj_old)
    b1 = b - E[i] - d_i * K[i, i] - d_j * K[i, j]
    b2 = b - E[j] - d_i * K[i, j] - d_j * K[j, j]
    if 0.0 < ai < c:
        b_new = b1
    elif 0.0 < aj < c:
        b_new = b2
    else:
        b_new = 0.5 * (b1 + b2)
    db = b_new - b
    m = K.shape[0]
    for t in range(m):
        E[t] += d_i * K[i, t] + d_j * K[j, t] + db
    alpha[i] = ai
    alpha[j] = aj
    return True, b_new


def _smo_impl(K, y, c, tol, max_passes, max_sweeps, seed):
    """Simplified SMO on a precomputed Gram matrix. Returns (alpha, b, sweeps, kkt_ok).

    Plain Python by construction so the numba-compiled and fallback paths run
    the same arithmetic. For each KKT violator the partner search runs in
    three stages: the free alpha with the largest error gap (it moves the
    objective most per step), then every free alpha from a random start, then
    every remaining point. A sweep that steps nowhere is conclusive, not bad
    luck, because the fallback stages try every partner.
    """
    m = K.shape[0]
    alpha = np.zeros(m, dtype=np.float64)
    b = 0.0
    E = -y.copy()  # E_i = f(x_i) - y_i with f = 0 at the start
    state = (seed & 0xFFFFFFFF) or 0x9E3779B9
    passes = 0
    sweeps = 0
    while passes < max_passes and sweeps < max_sweeps:
        changed = 0
        for i in range(m):
            y_e = y[i] * E[i]
            if not ((y_e < -tol and alpha[i] < c) or (y_e > tol and alpha[i] > 0.0)):
                continue
            stepped = False
            best_j = -1
            best_gap = -1.0
            for t in range(m):
                if t != i and 0.0 < alpha[t] < c:
                    gap = abs(E[i] - E[t])
                    if gap > best_gap:
                        best_gap = gap
                        best_j = t
            if best_j >= 0:
                stepped, b = _pair_update(K, y, alpha, E, b, c, i, best_j)
            if not stepped:
                state = (state ^ (state << 13)) & 0xFFFFFFFF
                state ^= state >> 17
                state = (state ^ (state << 5)) & 0xFFFFFFFF
                start = state % m
                for stage in range(2):
                    for off in range(m):
                        t = (start + off) % m
                        if t == i:
                            continue
                        free = 0.0 < alpha[t] < c
                        if free != (stage == 0):
                            continue
                        stepped, b = _pair_update(K, y, alpha, E, b, c, i, t)
                        if stepped:
                            break
                    if stepped:
                        break
            if stepped:
                changed += 1
        sweeps += 1
        passes = passes + 1 if changed == 0 else 0

    # Final bias from the finished alphas. The in-loop b is a per-step
    # working value; at the end, free alphas pin b exactly through their
    # equality conditions, and when every alpha sits on a bound (so no
    # equality pins it) the bound inequalities leave an interval and the
    # midpoint is the stable pick. y_i - g_i is the constraint value for
    # both label signs.
    g = K @ (alpha * y)
    n_free = 0
    acc = 0.0
    for i in range(m):
        if 0.0 < alpha[i] < c:
            n_free += 1
            acc += y[i] - g[i]
    if n_free > 0:
        b = acc / n_free
    else:
        b_lo = -np.inf
        b_hi = np.inf
        for i in range(m):
            v = y[i] - g[i]
            if alpha[i] <= 0.0:
                if y[i] > 0.0:
                    b_lo = max(b_lo, v)
                else:
                    b_hi = min(b_hi, v)
            else:
                if y[i] > 0.0:
                    b_hi = min(b_hi, v)
                else:
                    b_lo = max(b_lo, v)
        if np.isfinite(b_lo) and np.isfinite(b_hi):
            b = 0.5 * (b_lo + b_hi)
        elif np.isfinite(b_lo):
            b = b_lo
        elif np.isfinite(b_hi):
            b = b_hi

    # Exact KKT audit on recomputed errors (incremental E can drift slightly).
    kkt_ok = True
    for i in range(m):
        y_e = y[i] * (g[i] + b - y[i])
        if (y_e < -tol and alpha[i] < c) or (y_e > tol and alpha[i] > 0.0):
            kkt_ok = False
            break
    return alpha, b, sweeps, kkt_ok


_run_smo_py = _smo_impl  # uncompiled reference path, kept for cross-checks

try:  # pragma: no cover - exercised implicitly by every training call
    from numba import njit

    _pair_update = njit(cache=True)(_pair_update_impl)
    _run_smo = njit(cache=True)(_smo_impl)
except ImportError:  # pragma: no cover
    _pair_update = _pair_update_impl
    _run_smo = _smo_impl
    log.warning("numba unavailable: SMO runs in pure Python (slower, same results)")


@dataclass
class SvmModel:
    """A trained binary machine. Keeps the full training set and duals so the
    optimality conditions stay auditable; decision values use only rows with
    alpha > 0."""

    x: np.ndarray
    y: np.ndarray            # +1 / -1 per training row
    alpha: np.ndarray
    bias: float
    hyper: SvmHyperParams
    pos_label: str
    neg_label: str
    converged: bool = True
    sweeps: int = 0

    @property
    def support_mask(self) -> np.ndarray:
        return self.alpha > 0.0

    @property
    def dual_coef(self) -> np.ndarray:
        sv = self.support_mask
        return self.alpha[sv] * self.y[sv]

    @property
    def support_vectors(self) -> np.ndarray:
        return self.x[self.support_mask]


def train_binary_svm(
    x: np.ndarray,
    labels: np.ndarray,
    hyper: SvmHyperParams = DEFAULT_HYPER,
    tol: float = DEFAULT_TOL,
    max_passes: int = DEFAULT_MAX_PASSES,
    max_sweeps: int = DEFAULT_MAX_SWEEPS,
    rng_seed: int = 1,
    pos_label: str | None = None,
) -> SvmModel:
    """Train one soft-margin RBF machine with simplified SMO.

    labels may be any two distinct values; pos_label picks which maps to +1
    (default: the lexicographically larger one, for determinism).
    """
    hyper.validate()
    x = np.ascontiguousarray(np.asarray(x, dtype=float))
    labels = np.asarray(labels)
    if x.shape[0] != labels.shape[0]:
        raise DimensionMismatch(f"{x.shape[0]} rows vs {labels.shape[0]} labels")
    if x.shape[0] == 0:
        raise EmptyTrain("no training rows")
    uniq = sorted({str(v) for v in labels})
    if len(uniq) != 2:
        raise SingleClassInput(f"need exactly 2 classes, got {uniq}")
    if pos_label is None:
        pos_label = uniq[1]
    elif str(pos_label) not in uniq:
        raise SingleClassInput(f"pos_label {pos_label!r} not among {uniq}")
    neg_label = uniq[0] if str(pos_label) == uniq[1] else uniq[1]
    y = np.where(labels.astype(str) == str(pos_label), 1.0, -1.0)

    k = rbf_gram(x, None, hyper.gamma)
    alpha, bias, sweeps, kkt_ok = _run_smo(
        k, y, float(hyper.c), float(tol), int(max_passes), int(max_sweeps), int(rng_seed)
    )
    if not kkt_ok:
        log.warning(
            "SMO stopped after %d sweeps with KKT violations remaining (classes %s/%s)",
            sweeps, pos_label, neg_label,
        )
    assert np.all(alpha >= 0.0) and np.all(alpha <= hyper.c + 1e-12)
    assert abs(float(np.dot(alpha, y))) <= 1e-8 * max(1.0, float(np.sum(alpha)))
    return SvmModel(x=x, y=y, alpha=alpha, bias=float(bias), hyper=hyper,
                    pos_label=str(pos_label), neg_label=str(neg_label),
                    converged=bool(kkt_ok), sweeps=int(sweeps))


def decision_values(model: SvmModel, x: np.ndarray) -> np.ndarray:
    """f(x) = sum_i alpha_i y_i k(x_i, x) + b for each query row."""
    x = np.atleast_2d(np.asarray(x, dtype=float))
    if x.shape[1] != model.x.shape[1]:
        raise DimensionMismatch(f"query has {x.shape[1]} features, model expects {model.x.shape[1]}")
    sv = model.support_vectors
    if sv.shape[0] == 0:
        return np.full(x.shape[0], model.bias)
    k = rbf_gram(x, sv, model.hyper.gamma)
    return k @ model.dual_coef + model.bias


def decision_value(model: SvmModel, x: np.ndarray) -> float:
    return float(decision_values(model, x)[0])


@dataclass
class OaoModel:
    """One-against-one multiclass SVM: one machine per unordered class pair."""

    classes: list[str]
    machines: dict[tuple[str, str], SvmModel]

    def pairs(self) -> list[tuple[str, str]]:
        return sorted(self.machines.keys())


def train_oao(
    x: np.ndarray,
    labels: np.ndarray,
    hyper: SvmHyperParams = DEFAULT_HYPER,
    tol: float = DEFAULT_TOL,
    max_passes: int = DEFAULT_MAX_PASSES,
    rng_seed: int = 1,
) -> OaoModel:
    """Train all N(N-1)/2 pairwise machines."""
    labels = np.asarray(labels).astype(str)
    classes = sorted(set(labels))
    if len(classes) < 2:
        raise SingleClassInput(f"need >= 2 classes, got {classes}")
    machines: dict[tuple[str, str], SvmModel] = {}
    for idx, (a, b) in enumerate(combinations(classes, 2)):
        rows = np.flatnonzero((labels == a) | (labels == b))
        machines[(a, b)] = train_binary_svm(
            x[rows], labels[rows], hyper, tol=tol, max_passes=max_passes,
            rng_seed=rng_seed + idx, pos_label=a,
        )
    return OaoModel(classes=classes, machines=machines)


def predict_oao(model: OaoModel, x: np.ndarray) -> tuple[str, dict[str, int]]:
    """Majority vote over pairwise machines.

    Vote ties break toward the class whose winning machines were most
    confident (largest summed |decision value|), then lexicographically.
    """
    votes = {c: 0 for c in model.classes}
    confidence = {c: 0.0 for c in model.classes}
    for (a, b), machine in model.machines.items():
        f = decision_value(machine, x)
        winner = a if f > 0 else b
        votes[winner] += 1
        confidence[winner] += abs(f)
    best = max(model.classes, key=lambda c: (votes[c], confidence[c], _revkey(c)))
    return best, votes


def _revkey(label: str):
    # max() keeps the lexicographically smallest label on full ties
    return tuple(-ord(ch) for ch in label)


def predict_oao_batch(model: OaoModel, x: np.ndarray) -> list[str]:
    x = np.atleast_2d(np.asarray(x, dtype=float))
    fs = {pair: decision_values(machine, x) for pair, machine in model.machines.items()}
    out: list[str] = []
    for i in range(x.shape[0]):
        votes = {c: 0 for c in model.classes}
        confidence = {c: 0.0 for c in model.classes}
        for (a, b), f_all in fs.items():
            f = float(f_all[i])
            winner = a if f > 0 else b
            votes[winner] += 1
            confidence[winner] += abs(f)
        out.append(max(model.classes, key=lambda c: (votes[c], confidence[c], _revkey(c))))
    return out


def knn_classify(
    train_x: np.ndarray,
    train_labels: np.ndarray,
    query: np.ndarray,
    k: int = 1,
) -> list[str]:
    """k-nearest-neighbour baseline, Euclidean metric.

    Equidistant training rows rank by row order; vote ties go to the candidate
    with the smallest mean distance, then the lexicographically first label.
    """
    train_x = np.asarray(train_x, dtype=float)
    labels = np.asarray(train_labels).astype(str)
    if train_x.shape[0] == 0:
        raise EmptyTrain("kNN needs at least one training row")
    if k < 1:
        raise InvalidHyperParams(f"k must be >= 1, got {k}")
    k = min(k, train_x.shape[0])
    query = np.atleast_2d(np.asarray(query, dtype=float))
    if query.shape[1] != train_x.shape[1]:
        raise DimensionMismatch(f"query has {query.shape[1]} features, train has {train_x.shape[1]}")
    out: list[str] = []
    for row in query:
        d = np.sqrt(np.sum((train_x - row) ** 2, axis=1))
        nearest = np.argsort(d, kind="stable")[:k]
        candidates = sorted(set(labels[nearest]))
        tallies = {c: 0 for c in candidates}
        dists: dict[str, list[float]] = {c: [] for c in candidates}
        for idx in nearest:
            tallies[labels[idx]] += 1
            dists[labels[idx]].append(float(d[idx]))
        out.append(min(candidates, key=lambda c: (-tallies[c], float(np.mean(dists[c])), c)))
    return out


# ---------------------------------------------------------------------------
# feature selection and hyperparameter search


@dataclass
class SelectionResult:
    method: str
    chosen: tuple[int, ...]
    metric: float
    search_log: list[tuple[tuple[int, ...], float]] = field(default_factory=list)


def _validate_features(features: tuple[int, ...]) -> tuple[int, ...]:
    feats = tuple(sorted(int(f) for f in features))
    bad = [f for f in feats if not 1 <= f <= N_FEATURES]
    if bad:
        raise UnknownFeatureIndex(f"feature indices out of range 1..{N_FEATURES}: {bad}")
    if len(set(feats)) != len(feats):
        raise UnknownFeatureIndex(f"duplicate feature indices in {features}")
    return feats


def _cv_metric(matrix: FeatureMatrix, folds, hyper: SvmHyperParams, mask: tuple[int, ...]) -> float:
    from .evaluation import accuracy, cross_validate  # late import: evaluation builds on learn

    return accuracy(cross_validate(matrix, folds, hyper, feature_mask=mask))


def brute_force_select(
    matrix: FeatureMatrix,
    folds,
    hyper: SvmHyperParams = DEFAULT_HYPER,
    subset_size: int = 6,
    candidates: tuple[int, ...] = ALL_FEATURES,
) -> SelectionResult:
    """Score every size-subset_size feature subset; the log holds all of them.

    Ties keep the first subset in lexicographic enumeration order.
    """
    candidates = _validate_features(candidates)
    search_log: list[tuple[tuple[int, ...], float]] = []
    best: tuple[int, ...] | None = None
    best_metric = -1.0
    for subset in combinations(candidates, subset_size):
        metric = _cv_metric(matrix, folds, hyper, subset)
        search_log.append((subset, metric))
        if metric > best_metric:
            best, best_metric = subset, metric
    assert best is not None
    return SelectionResult("brute_force", best, best_metric, search_log)


def sfs_select(
    matrix: FeatureMatrix,
    folds,
    hyper: SvmHyperParams = DEFAULT_HYPER,
    start: tuple[int, ...] = (),
    candidates: tuple[int, ...] | None = None,
) -> SelectionResult:
    """Sequential forward selection: greedily add the feature that improves the
    cross-validated accuracy most; stop when nothing improves it strictly.

    The search log (one entry per accepted set, starting from `start`) is
    monotone non-decreasing in the metric by construction.
    """
    pool = _validate_features(candidates if candidates is not None else ALL_FEATURES)
    current = _validate_features(start) if start else ()
    remaining = [f for f in pool if f not in current]
    current_metric = _cv_metric(matrix, folds, hyper, current) if current else 0.0
    search_log: list[tuple[tuple[int, ...], float]] = [(current, current_metric)]
    while remaining:
        scored = [
            (_cv_metric(matrix, folds, hyper, tuple(sorted(current + (f,)))), f)
            for f in remaining
        ]
        best_metric, best_f = max(scored, key=lambda t: (t[0], -t[1]))
        if best_metric <= current_metric:
            break
        current = tuple(sorted(current + (best_f,)))
        current_metric = best_metric
        remaining.remove(best_f)
        search_log.append((current, current_metric))
    return SelectionResult("sfs", current, current_metric, search_log)


@dataclass
class GridSearchResult:
    best: SvmHyperParams
    accuracy: float
    surface: np.ndarray          # shape (len(gammas), len(cs))
    gammas: tuple[float, ...]
    cs: tuple[float, ...]


def grid_search(
    matrix: FeatureMatrix,
    folds,
    gammas: tuple[float, ...] = GAMMA_GRID,
    cs: tuple[float, ...] = C_GRID,
    feature_mask: tuple[int, ...] | None = None,
) -> GridSearchResult:
    """Cross-validated accuracy over the (gamma, C) grid.

    Ties resolve toward the smallest C, then the smallest gamma.
    """
    surface = np.empty((len(gammas), len(cs)), dtype=float)
    for gi, gamma in enumerate(gammas):
        for ci, c in enumerate(cs):
            surface[gi, ci] = _cv_metric(
                matrix, folds, SvmHyperParams(gamma=gamma, c=c),
                feature_mask if feature_mask is not None else ALL_FEATURES,
            )
    best_acc = float(surface.max())
    hit = [
        (cs[ci], gammas[gi], gi, ci)
        for gi in range(len(gammas))
        for ci in range(len(cs))
        if surface[gi, ci] == best_acc
    ]
    c_best, gamma_best, _, _ = min(hit)
    return GridSearchResult(
        best=SvmHyperParams(gamma=gamma_best, c=c_best),
        accuracy=best_acc, surface=surface, gammas=tuple(gammas), cs=tuple(cs),
    )


@dataclass
class ClassifierBundle:
    """Everything needed to classify raw 18-feature rows: the mask, the
    training standardization, and the one-against-one machines."""

    feature_mask: tuple[int, ...]
    stats: Standardization
    oao: OaoModel

    @property
    def classes(self) -> list[str]:
        return self.oao.classes

    def transform(self, values: np.ndarray) -> np.ndarray:
        values = np.atleast_2d(np.asarray(values, dtype=float))
        if values.shape[1] == N_FEATURES:
            values = values[:, [f - 1 for f in self.feature_mask]]
        elif values.shape[1] != len(self.feature_mask):
            raise DimensionMismatch(
                f"expected {N_FEATURES} raw or {len(self.feature_mask)} masked features, "
                f"got {values.shape[1]}"
            )
        return self.stats.apply(values)

    def predict(self, values: np.ndarray) -> list[str]:
        return predict_oao_batch(self.oao, self.transform(values))


def train_bundle(
    matrix: FeatureMatrix,
    hyper: SvmHyperParams = DEFAULT_HYPER,
    feature_mask: tuple[int, ...] | None = None,
    rng_seed: int = 1,
) -> ClassifierBundle:
    """Standardize the full matrix, then train OAO machines on every row."""
    mask = _validate_features(feature_mask) if feature_mask else ALL_FEATURES
    raw = matrix.columns(mask)
    z, _, stats = standardize(raw)
    oao = train_oao(z, matrix.labels(), hyper, rng_seed=rng_seed)
    return ClassifierBundle(feature_mask=mask, stats=stats, oao=oao)
