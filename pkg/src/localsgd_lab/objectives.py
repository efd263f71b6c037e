"""Optimization problems with per-worker objectives and stochastic gradients.

Every problem exposes N local objectives f_i with exact gradients, an
aggregate objective used for reporting, and a stochastic gradient oracle.
Stochasticity is additive isotropic Gaussian noise scaled so that the
second moment of the noise vector is sigma**2 regardless of dimension; a
mini-batch of size b averages b independent draws, which divides the noise
variance by b.
"""
from __future__ import annotations

import csv

import numpy as np

from .core import ConfigError, vec_mean


class Problem:
    """Base interface: N local objectives plus an aggregate view."""

    dimension: int
    worker_count: int
    sigma: float = 0.0
    lipschitz: float | None = None
    lipschitz_estimated: bool = False
    x_star: np.ndarray | None = None
    f_star: float | None = None
    n_samples: int | None = None

    # -- per-worker interface -------------------------------------------

    def local_loss(self, worker_id: int, x: np.ndarray) -> float:
        raise NotImplementedError

    def full_gradient(self, worker_id: int, x: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def stochastic_gradient(
        self,
        worker_id: int,
        x: np.ndarray,
        rng: np.random.Generator | None,
        batch_size: int = 1,
    ) -> np.ndarray:
        """Full local gradient plus averaged Gaussian noise draws.

        With sigma == 0 this returns exactly the full gradient and consumes
        no randomness.  Each of the ``batch_size`` draws is one unit of the
        stream's draw index.
        """
        g = self.full_gradient(worker_id, x)
        if self.sigma == 0.0:
            return g
        if batch_size < 1:
            raise ConfigError("batch_size must be >= 1")
        if rng is None:
            raise ValueError("a positioned generator is required when sigma > 0")
        scale = self.sigma / np.sqrt(self.dimension)
        noise = rng.standard_normal((batch_size, self.dimension))
        return g + scale * noise.mean(axis=0)

    # -- aggregate interface --------------------------------------------

    def loss(self, x: np.ndarray) -> float:
        """Aggregate objective; defaults to the mean of the local losses."""
        vals = [self.local_loss(i, x) for i in range(self.worker_count)]
        return float(sum(vals) / self.worker_count)

    def global_gradient(self, x: np.ndarray) -> np.ndarray:
        """Gradient of the aggregate objective (mean of local gradients)."""
        return vec_mean([self.full_gradient(i, x) for i in range(self.worker_count)])

    def check_worker_id(self, worker_id: int) -> None:
        if not (0 <= worker_id < self.worker_count):
            raise ValueError(f"worker_id {worker_id} out of range 0..{self.worker_count - 1}")


# ---------------------------------------------------------------- quadratic pair


class QuadraticPairProblem(Problem):
    """Two one-dimensional quadratics with different curvatures and centers.

    Worker 0 owns (x + 2b)**2 and worker 1 owns 2*(x - b)**2.  Their sum is
    the aggregate objective 3x**2 + 6b**2, minimized at x = 0 no matter how
    far apart the two local minima (-2b and +b) sit, which makes this the
    canonical stress test for client drift: plain local SGD stalls at a
    b-dependent offset while the variance-corrected method reaches 0.

    The aggregate reported here is the sum of the two local losses, not
    their mean; both have the same minimizer and the sum matches the
    closed forms 3x**2 + 6b**2 and 6x used throughout the tests.
    """

    dimension = 1
    worker_count = 2

    def __init__(self, b_param: float = 1.0, sigma: float = 0.0):
        if not np.isfinite(b_param):
            raise ConfigError("b_param must be finite")
        if sigma < 0:
            raise ConfigError("sigma must be >= 0")
        self.b_param = float(b_param)
        self.sigma = float(sigma)
        self.lipschitz = 4.0
        self.lipschitz_estimated = False
        self.x_star = np.zeros(1)
        self.f_star = 6.0 * self.b_param**2

    def local_loss(self, worker_id: int, x: np.ndarray) -> float:
        self.check_worker_id(worker_id)
        b = self.b_param
        if worker_id == 0:
            return float((x[0] + 2.0 * b) ** 2)
        return float(2.0 * (x[0] - b) ** 2)

    def full_gradient(self, worker_id: int, x: np.ndarray) -> np.ndarray:
        self.check_worker_id(worker_id)
        b = self.b_param
        if worker_id == 0:
            return np.array([2.0 * (x[0] + 2.0 * b)])
        return np.array([4.0 * (x[0] - b)])

    def loss(self, x: np.ndarray) -> float:
        return float(3.0 * x[0] ** 2 + 6.0 * self.b_param**2)

    def global_gradient(self, x: np.ndarray) -> np.ndarray:
        return np.array([6.0 * x[0]])


# ---------------------------------------------------------------- partitioning


def make_partition(labels: np.ndarray, n_workers: int, mode: str) -> list[np.ndarray]:
    """Assign sample indices to workers.

    ``identical`` gives every worker the whole index set.  ``non_identical``
    sorts the label values and hands each worker a contiguous block of
    whole classes, ceil(m/N) classes for the first workers and floor(m/N)
    for the rest, so with 10 classes and 5 workers worker i holds classes
    {2i, 2i+1}.
    """
    labels = np.asarray(labels)
    if labels.ndim != 1 or labels.shape[0] == 0:
        raise ConfigError("labels must be a non-empty 1-D array")
    if n_workers < 1:
        raise ConfigError("n_workers must be >= 1")
    n = labels.shape[0]
    if mode == "identical":
        return [np.arange(n) for _ in range(n_workers)]
    if mode != "non_identical":
        raise ConfigError(f"unknown partition mode {mode!r}")

    classes = np.unique(labels)
    m = classes.shape[0]
    if n_workers > m:
        raise ConfigError(
            f"non-identical partition needs at least one class per worker "
            f"({m} classes < {n_workers} workers)"
        )
    base, extra = divmod(m, n_workers)
    shards = []
    start = 0
    for i in range(n_workers):
        count = base + (1 if i < extra else 0)
        owned = classes[start : start + count]
        start += count
        idx = np.concatenate([np.flatnonzero(labels == c) for c in owned])
        shards.append(np.sort(idx))
    return shards


# ---------------------------------------------------------------- least squares


class PartitionedLeastSquares(Problem):
    """Linear least squares split across workers by sample shards.

    Worker i minimizes (1/(2 m_i)) * ||A_i x - y_i||^2 over its shard; the
    aggregate objective is the mean of the worker objectives.  The
    smoothness constant is exact (largest shard Hessian eigenvalue).
    """

    def __init__(
        self,
        features: np.ndarray,
        targets: np.ndarray,
        shards: list[np.ndarray],
        sigma: float = 0.0,
    ):
        features = np.asarray(features, dtype=np.float64)
        targets = np.asarray(targets, dtype=np.float64)
        if features.ndim != 2 or targets.ndim != 1:
            raise ConfigError("features must be 2-D and targets 1-D")
        if features.shape[0] != targets.shape[0]:
            raise ConfigError("features and targets disagree on sample count")
        if sigma < 0:
            raise ConfigError("sigma must be >= 0")
        for s in shards:
            if len(s) == 0:
                raise ConfigError("every shard needs at least one sample")
        self.features = features
        self.targets = targets
        self.shards = [np.asarray(s, dtype=np.int64) for s in shards]
        self.sigma = float(sigma)
        self.dimension = features.shape[1]
        self.worker_count = len(shards)
        self.n_samples = features.shape[0]

        hessians = []
        for s in self.shards:
            a = self.features[s]
            hessians.append(a.T @ a / len(s))
        self.lipschitz = float(max(np.linalg.eigvalsh(h)[-1] for h in hessians))
        self.lipschitz_estimated = False

        # Minimizer of the mean objective: solve mean(H_i) x = mean(c_i).
        h_bar = sum(hessians) / self.worker_count
        c_bar = sum(
            self.features[s].T @ self.targets[s] / len(s) for s in self.shards
        ) / self.worker_count
        self.x_star = np.linalg.solve(h_bar, c_bar)
        self.f_star = self.loss(self.x_star)

    def local_loss(self, worker_id: int, x: np.ndarray) -> float:
        self.check_worker_id(worker_id)
        s = self.shards[worker_id]
        r = self.features[s] @ x - self.targets[s]
        return float(0.5 * (r @ r) / len(s))

    def full_gradient(self, worker_id: int, x: np.ndarray) -> np.ndarray:
        self.check_worker_id(worker_id)
        s = self.shards[worker_id]
        a = self.features[s]
        return a.T @ (a @ x - self.targets[s]) / len(s)


# ---------------------------------------------------------------- logistic


class PartitionedLogistic(Problem):
    """Multinomial logistic regression split across workers by shards.

    The model vector is the flattened (classes x features) weight matrix.
    The smoothness constant is a finite-difference power-iteration estimate
    and is flagged as such.
    """

    def __init__(
        self,
        features: np.ndarray,
        labels: np.ndarray,
        shards: list[np.ndarray],
        sigma: float = 0.0,
        estimate_l: bool = True,
    ):
        features = np.asarray(features, dtype=np.float64)
        labels = np.asarray(labels, dtype=np.int64)
        if features.ndim != 2 or labels.ndim != 1:
            raise ConfigError("features must be 2-D and labels 1-D")
        if features.shape[0] != labels.shape[0]:
            raise ConfigError("features and labels disagree on sample count")
        if labels.min() < 0:
            raise ConfigError("labels must be non-negative class indices")
        if sigma < 0:
            raise ConfigError("sigma must be >= 0")
        self.features = features
        self.labels = labels
        self.n_classes = int(labels.max()) + 1
        self.shards = [np.asarray(s, dtype=np.int64) for s in shards]
        for s in self.shards:
            if len(s) == 0:
                raise ConfigError("every shard needs at least one sample")
        self.sigma = float(sigma)
        self.n_features = features.shape[1]
        self.dimension = self.n_classes * self.n_features
        self.worker_count = len(shards)
        self.n_samples = features.shape[0]
        if estimate_l:
            self.lipschitz = estimate_lipschitz(self)
            self.lipschitz_estimated = True

    def _weights(self, x: np.ndarray) -> np.ndarray:
        return x.reshape(self.n_classes, self.n_features)

    def _probs(self, w: np.ndarray, a: np.ndarray) -> np.ndarray:
        logits = a @ w.T
        logits -= logits.max(axis=1, keepdims=True)
        e = np.exp(logits)
        return e / e.sum(axis=1, keepdims=True)

    def local_loss(self, worker_id: int, x: np.ndarray) -> float:
        self.check_worker_id(worker_id)
        s = self.shards[worker_id]
        a = self.features[s]
        p = self._probs(self._weights(x), a)
        picked = p[np.arange(len(s)), self.labels[s]]
        return float(-np.log(np.maximum(picked, 1e-300)).mean())

    def full_gradient(self, worker_id: int, x: np.ndarray) -> np.ndarray:
        self.check_worker_id(worker_id)
        s = self.shards[worker_id]
        a = self.features[s]
        p = self._probs(self._weights(x), a)
        p[np.arange(len(s)), self.labels[s]] -= 1.0
        return (p.T @ a / len(s)).reshape(-1)


# ---------------------------------------------------------------- synthetic data


def make_cluster_data(
    n_samples: int,
    n_features: int,
    n_classes: int,
    seed: int,
    center_scale: float = 1.5,
    spread: float = 1.0,
) -> tuple[np.ndarray, np.ndarray]:
    """Gaussian cluster features with the cluster id as the label."""
    if n_samples < n_classes:
        raise ConfigError("need at least one sample per class")
    rng = np.random.default_rng(seed)
    centers = center_scale * rng.standard_normal((n_classes, n_features))
    labels = np.arange(n_samples) % n_classes
    noise = spread * rng.standard_normal((n_samples, n_features))
    features = centers[labels] + noise
    return features, labels


def least_squares_problem(
    n_workers: int,
    partition: str,
    n_samples: int = 200,
    n_features: int = 5,
    n_classes: int | None = None,
    sigma: float = 0.0,
    data_seed: int = 1,
    target_noise: float = 0.1,
    heterogeneity: float = 1.0,
) -> PartitionedLeastSquares:
    """Synthetic clustered regression problem.

    Targets follow a shared linear model plus a per-cluster offset scaled
    by ``heterogeneity``, so non-identical shards have genuinely different
    local minimizers while the identical partition behaves like plain SGD
    on one dataset.
    """
    if n_classes is None:
        n_classes = max(2 * n_workers, 2)
    features, labels = make_cluster_data(n_samples, n_features, n_classes, data_seed)
    rng = np.random.default_rng(data_seed + 1)
    w_true = rng.standard_normal(n_features)
    offsets = heterogeneity * rng.standard_normal(n_classes)
    targets = features @ w_true + offsets[labels]
    if target_noise > 0:
        targets = targets + target_noise * rng.standard_normal(n_samples)
    shards = make_partition(labels, n_workers, partition)
    return PartitionedLeastSquares(features, targets, shards, sigma=sigma)


def logistic_problem(
    n_workers: int,
    partition: str,
    n_samples: int = 200,
    n_features: int = 5,
    n_classes: int | None = None,
    sigma: float = 0.0,
    data_seed: int = 1,
) -> PartitionedLogistic:
    """Synthetic clustered classification problem."""
    if n_classes is None:
        n_classes = max(2 * n_workers, 2)
    features, labels = make_cluster_data(n_samples, n_features, n_classes, data_seed)
    shards = make_partition(labels, n_workers, partition)
    return PartitionedLogistic(features, labels, shards, sigma=sigma)


# ---------------------------------------------------------------- CSV import


def load_csv_dataset(path) -> tuple[np.ndarray, np.ndarray]:
    """Read a header CSV whose last column is an integer label.

    Returns (features, labels).  All columns before the last are parsed as
    float features.
    """
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or len(header) < 2:
            raise ConfigError("CSV needs a header row and at least two columns")
        rows = list(reader)
    if not rows:
        raise ConfigError("CSV has no data rows")
    width = len(header)
    feats = np.empty((len(rows), width - 1))
    labels = np.empty(len(rows), dtype=np.int64)
    for r, row in enumerate(rows):
        if len(row) != width:
            raise ConfigError(f"CSV row {r + 2} has {len(row)} fields, expected {width}")
        feats[r] = [float(v) for v in row[:-1]]
        raw = float(row[-1])
        if raw != int(raw):
            raise ConfigError(f"CSV row {r + 2} label {row[-1]!r} is not an integer")
        labels[r] = int(raw)
    return feats, labels


# ---------------------------------------------------------------- smoothness


def estimate_lipschitz(
    problem: Problem,
    n_probe: int = 3,
    iters: int = 30,
    seed: int = 0,
    h: float = 1e-5,
) -> float:
    """Estimate the largest local-Hessian eigenvalue over all workers.

    Power iteration on finite-difference Hessian-vector products at a few
    random points; returns the max over workers and probe points.
    """
    rng = np.random.default_rng(seed)
    d = problem.dimension
    best = 0.0
    for _ in range(n_probe):
        x = rng.standard_normal(d)
        for i in range(problem.worker_count):
            v = rng.standard_normal(d)
            v /= np.linalg.norm(v)
            lam = 0.0
            for _ in range(iters):
                hv = (
                    problem.full_gradient(i, x + h * v)
                    - problem.full_gradient(i, x - h * v)
                ) / (2.0 * h)
                lam = float(np.linalg.norm(hv))
                if lam == 0.0:
                    break
                v = hv / lam
            best = max(best, lam)
    return best
