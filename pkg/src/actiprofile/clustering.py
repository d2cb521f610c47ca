"""
k-means over daily profiles and prediction-strength model selection.

k-means is Lloyd's algorithm from distance-weighted (k-means++) seeds, best
of several restarts by inertia. Prediction strength (Tibshirani & Walther
2005) splits the rows in half, clusters both halves, and asks how often
pairs that share a test cluster are also put together by the model fitted
on the training half.

All randomness flows from ``np.random.SeedSequence`` keyed by the caller's
seed and the task index, so results do not depend on worker scheduling.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
import pandas as pd
from scipy.spatial.distance import cdist

from .errors import AlignmentError, DataError, InfeasibleKError

log = logging.getLogger(__name__)

DEFAULT_THRESHOLD = 0.75


def _as_array(matrix):
    values = matrix.values if hasattr(matrix, "values") and not isinstance(matrix, np.ndarray) else matrix
    values = np.asarray(values, dtype=float)
    if values.ndim != 2:
        raise AlignmentError("expected a 2-D matrix of rows")
    return values


def squared_distances(X, C):
    """Exact squared Euclidean distances, (n, k), computed by differences."""
    return cdist(X, C, "sqeuclidean")


def _nearest(X, C):
    d2 = squared_distances(X, C)
    labels = np.argmin(d2, axis=1)  # first minimum: ties go to the lowest label
    return labels, d2[np.arange(len(X)), labels]


@dataclass
class ClusterModel:
    k: int
    centroids: np.ndarray
    labels: np.ndarray
    inertia: float
    seed: int | None
    n_iter: int = 0
    converged: bool = True
    inertia_history: list = field(default_factory=list, repr=False)

    def to_dict(self):
        return {"k": self.k, "seed": self.seed, "inertia": float(self.inertia),
                "n_iter": self.n_iter, "converged": self.converged,
                "centroids": self.centroids.tolist()}


def n_distinct_rows(X):
    return len(np.unique(X, axis=0)) if len(X) else 0


def _kmeans_pp(X, k, rng):
    n = len(X)
    centers = [int(rng.integers(n))]
    d2 = squared_distances(X, X[centers])[:, 0]
    for _ in range(1, k):
        total = d2.sum()
        if total <= 0:
            raise InfeasibleKError(f"cannot seed {k} distinct centroids")
        idx = int(rng.choice(n, p=d2 / total))
        centers.append(idx)
        d2 = np.minimum(d2, squared_distances(X, X[idx:idx + 1])[:, 0])
    return X[centers].copy()


def _fill_empty(X, C, labels, d2):
    """Give each empty cluster the point farthest from its current centroid."""
    k = len(C)
    filled = False
    sizes = np.bincount(labels, minlength=k)
    for j in np.flatnonzero(sizes == 0):
        donors = sizes[labels] >= 2
        candidates = np.where(donors, d2, -np.inf)
        f = int(np.argmax(candidates))
        sizes[labels[f]] -= 1
        sizes[j] += 1
        labels[f] = j
        C[j] = X[f]
        d2[f] = 0.0
        filled = True
    return filled


def _centroid_means(X, labels, k):
    C = np.empty((k, X.shape[1]))
    for j in range(k):
        C[j] = X[labels == j].mean(axis=0)
    return C


def _lloyd(X, k, rng, max_iter, tol):
    C = _kmeans_pp(X, k, rng)
    labels, d2 = _nearest(X, C)
    _fill_empty(X, C, labels, d2)
    history = [float(d2.sum())]
    converged = False
    it = 0
    for it in range(1, max_iter + 1):
        new = _centroid_means(X, labels, k)
        shift = float(np.sqrt(((new - C) ** 2).sum(axis=1)).max())
        C = new
        labels, d2 = _nearest(X, C)
        filled = _fill_empty(X, C, labels, d2)
        history.append(float(d2.sum()))
        if shift <= tol and not filled:
            converged = True
            break
    return C, labels, float(d2.sum()), it, converged, history


def _seed_int(seed, *key):
    return int(np.random.SeedSequence(seed, spawn_key=key).generate_state(1)[0])


def kmeans_fit(matrix, k, seed=0, restarts=10, max_iter=300, tol=1e-4, n_jobs=1):
    """Best-of-``restarts`` Lloyd k-means.

    Raises ``InfeasibleKError`` when ``k`` exceeds the number of distinct rows.
    """
    X = _as_array(matrix)
    if k < 1:
        raise InfeasibleKError("k must be at least 1")
    distinct = n_distinct_rows(X)
    if k > distinct:
        raise InfeasibleKError(f"k={k} exceeds the {distinct} distinct rows")
    if k == 1:
        C = X.mean(axis=0, keepdims=True)
        labels = np.zeros(len(X), dtype=int)
        inertia = float(squared_distances(X, C).sum())
        return ClusterModel(1, C, labels, inertia, seed, 1, True, [inertia])

    def run(r):
        rng = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(r,)))
        return _lloyd(X, k, rng, max_iter, tol)

    runs = _parallel_map(run, range(restarts), n_jobs)
    best = min(range(len(runs)), key=lambda r: (runs[r][2], r))
    C, labels, inertia, n_iter, converged, history = runs[best]
    return ClusterModel(k, C, labels.astype(int), inertia, seed, n_iter, converged, history)


def _parallel_map(fn, items, n_jobs):
    items = list(items)
    if n_jobs == 1 or len(items) < 2:
        return [fn(i) for i in items]
    from joblib import Parallel, delayed
    return Parallel(n_jobs=n_jobs, prefer="threads")(delayed(fn)(i) for i in items)


def assign(model, rows):
    """Nearest-centroid labels, ties to the lowest label."""
    X = np.atleast_2d(np.asarray(rows, dtype=float))
    if X.shape[1] != model.centroids.shape[1]:
        raise AlignmentError(f"rows have width {X.shape[1]}, centroids {model.centroids.shape[1]}")
    return _nearest(X, model.centroids)[0]


def _strength(test_labels, predicted, k):
    """Minimum over test clusters of the share of ordered pairs co-assigned by the train model."""
    worst = 1.0
    for j in range(k):
        members = predicted[test_labels == j]
        n = len(members)
        if n < 2:
            continue
        c = np.bincount(members, minlength=k).astype(float)
        worst = min(worst, float((c * (c - 1)).sum() / (n * (n - 1))))
    return worst


@dataclass
class PredictionStrength:
    k: int
    values: np.ndarray  # one score per split

    @property
    def mean(self):
        return float(np.mean(self.values))


def prediction_strength(matrix, k, splits=20, seed=0, restarts=10, max_iter=300, tol=1e-4,
                        n_jobs=1):
    X = _as_array(matrix)
    if len(X) < 2 * k:
        raise InfeasibleKError(f"{len(X)} rows are too few for prediction strength at k={k}")
    if k == 1:
        return PredictionStrength(1, np.ones(splits))

    def one(s):
        rng = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(0, s)))
        perm = rng.permutation(len(X))
        train, test = X[perm[: len(X) // 2]], X[perm[len(X) // 2:]]
        m_train = kmeans_fit(train, k, _seed_int(seed, 1, s, k, 0), restarts, max_iter, tol)
        m_test = kmeans_fit(test, k, _seed_int(seed, 1, s, k, 1), restarts, max_iter, tol)
        return _strength(m_test.labels, assign(m_train, test), k)

    return PredictionStrength(k, np.array(_parallel_map(one, range(splits), n_jobs)))


@dataclass
class PredictionStrengthCurve:
    ks: np.ndarray
    values: np.ndarray  # (len(ks), splits)

    @property
    def means(self):
        return self.values.mean(axis=1)

    def to_frame(self):
        return pd.DataFrame({"k": self.ks, "ps_mean": self.means,
                             "ps_min": self.values.min(axis=1), "ps_max": self.values.max(axis=1)})


def prediction_strength_curve(matrix, k_max=50, splits=20, seed=0, restarts=10, max_iter=300,
                              tol=1e-4, n_jobs=1):
    """ps(k) for k = 1..k_max, capped at n/2 and at the first infeasible k."""
    X = _as_array(matrix)
    k_max = min(k_max, len(X) // 2)
    if k_max < 1:
        raise InfeasibleKError("need at least two rows for a prediction-strength curve")
    ks, rows = [], []
    for k in range(1, k_max + 1):
        try:
            ps = prediction_strength(X, k, splits, seed, restarts, max_iter, tol, n_jobs)
        except InfeasibleKError as exc:
            log.info("prediction-strength curve stops at k=%d: %s", k - 1, exc)
            break
        ks.append(k)
        rows.append(ps.values)
    return PredictionStrengthCurve(np.array(ks), np.vstack(rows))


def select_k(curve, threshold=DEFAULT_THRESHOLD):
    """Choose k from a prediction-strength curve.

    Largest k whose strength reaches ``threshold``. When only k=1 does, fall
    back to the smallest k >= 2 that beats both neighbours. Returns
    ``(k, rule)`` with rule in {"threshold", "local_max", "none"}.
    """
    if isinstance(curve, PredictionStrengthCurve):
        ks, ps = list(curve.ks), list(curve.means)
    else:
        ps = list(curve)
        ks = list(range(1, len(ps) + 1))
    above = [k for k, v in zip(ks, ps) if v >= threshold]
    if above and max(above) >= 2:
        return max(above), "threshold"
    for i in range(1, len(ps) - 1):
        if ks[i] >= 2 and ps[i] > ps[i - 1] and ps[i] > ps[i + 1]:
            return ks[i], "local_max"
    return 1, "none"


@dataclass
class MembershipDistribution:
    participant_ids: list
    proportions: np.ndarray  # (n_participants, k)
    days: np.ndarray

    def to_frame(self):
        k = self.proportions.shape[1]
        frame = pd.DataFrame(self.proportions, columns=[f"C{j + 1}" for j in range(k)])
        frame.insert(0, "days_observed", self.days)
        frame.insert(0, "participant_id", self.participant_ids)
        return frame


def membership_distribution(labels, participants, k):
    """Share of each participant's days falling in each cluster."""
    labels = np.asarray(labels, dtype=int)
    participants = [str(p) for p in participants]
    if len(labels) != len(participants):
        raise AlignmentError("every labelled day needs a participant")
    if len(labels) and (labels.min() < 0 or labels.max() >= k):
        raise DataError(f"labels fall outside 0..{k - 1}")
    pids = sorted(set(participants))
    row = {p: i for i, p in enumerate(pids)}
    counts = np.zeros((len(pids), k))
    for p, lab in zip(participants, labels):
        counts[row[p], lab] += 1
    days = counts.sum(axis=1)
    return MembershipDistribution(pids, counts / days[:, None], days.astype(int))


def cluster_report(model, participants):
    """Per cluster: number of day shapes, unique participants, and their ratio."""
    participants = [str(p) for p in participants]
    rows = []
    for j in range(model.k if len(participants) else 0):
        members = [p for p, lab in zip(participants, model.labels) if lab == j]
        shapes = len(members)
        unique = len(set(members))
        rows.append({"cluster": j + 1, "shapes": shapes, "participants": unique,
                     "ratio": unique / shapes if shapes else float("nan")})
    return pd.DataFrame(rows, columns=["cluster", "shapes", "participants", "ratio"])


def centroid_frame(model, bin_minutes=10, start_minute=7 * 60):
    """Centroids as a long plot series: cluster, bin, clock, cpm."""
    k, n_bins = model.centroids.shape
    minutes = start_minute + bin_minutes * np.arange(n_bins)
    clock = [f"{m // 60:02d}:{m % 60:02d}" for m in minutes]
    return pd.DataFrame({
        "cluster": np.repeat(np.arange(1, k + 1), n_bins),
        "bin": np.tile(np.arange(n_bins), k),
        "clock": np.tile(clock, k),
        "cpm": model.centroids.ravel(),
    })


def standardize(X):
    """Column z-scores; constant columns are centred only."""
    X = _as_array(X)
    sd = X.std(axis=0)
    sd[sd == 0] = 1.0
    return (X - X.mean(axis=0)) / sd
