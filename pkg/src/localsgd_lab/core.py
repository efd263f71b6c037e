"""Shared types, vector arithmetic, and the deterministic random-number contract.

Model vectors are 1-D float64 numpy arrays.  All reductions over workers use a
fixed deterministic order so that reruns, thread counts, and algorithm
rewrites that are supposed to agree actually agree bit-for-bit.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

ALGORITHMS = ("ssgd", "localsgd", "easgd", "vrlsgd")
PARTITIONS = ("identical", "non_identical")

DIVERGENCE_LOSS_LIMIT = 1e12


class ConfigError(ValueError):
    """Raised for configurations that cannot be run."""


# ---------------------------------------------------------------- vectors


def as_vector(values, dim: int | None = None) -> np.ndarray:
    """Coerce to a finite float64 1-D array, optionally checking its length.

    Raises ConfigError because this guards user-supplied vectors (initial
    points and the like), which must surface as configuration problems.
    """
    v = np.asarray(values, dtype=np.float64)
    if v.ndim == 0:
        v = v.reshape(1)
    if v.ndim != 1:
        raise ConfigError(f"model vector must be 1-D, got shape {v.shape}")
    if not np.all(np.isfinite(v)):
        raise ConfigError("model vector has non-finite entries")
    if dim is not None and v.shape[0] != dim:
        raise ConfigError(f"expected dimension {dim}, got {v.shape[0]}")
    return v


def _check_same_dim(vectors) -> int:
    if len(vectors) == 0:
        raise ValueError("empty vector list")
    d = vectors[0].shape[0]
    for v in vectors[1:]:
        if v.shape[0] != d:
            raise ValueError("dimension mismatch in reduction")
    return d


def vec_sum(vectors: list[np.ndarray]) -> np.ndarray:
    """Sum over workers in ascending id order using a balanced pairwise tree.

    The tree shape is fixed (split at the midpoint), which makes the result
    reproducible and, for power-of-two worker counts, makes the sum of N
    identical vectors exactly N times the vector.
    """
    _check_same_dim(vectors)

    def _reduce(lo: int, hi: int) -> np.ndarray:
        if hi - lo == 1:
            return vectors[lo].copy()
        mid = (lo + hi) // 2
        return _reduce(lo, mid) + _reduce(mid, hi)

    return _reduce(0, len(vectors))


def vec_mean(vectors: list[np.ndarray]) -> np.ndarray:
    """Element-wise mean over workers, deterministic reduction order."""
    s = vec_sum(vectors)
    s /= len(vectors)
    return s


def vec_axpy(a: float, x: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Return a * x + y without mutating the inputs."""
    if x.shape != y.shape:
        raise ValueError("dimension mismatch in axpy")
    return a * x + y


# ---------------------------------------------------------------- RNG

_MIX_MULT_1 = 0xBF58476D1CE4E5B9
_MIX_MULT_2 = 0x94D049BB133111EB
_MASK64 = (1 << 64) - 1


def _mix64(z: int) -> int:
    """SplitMix64 finalizer; spreads low-entropy integers over 64 bits."""
    z = (z + 0x9E3779B97F4A7C15) & _MASK64
    z = ((z ^ (z >> 30)) * _MIX_MULT_1) & _MASK64
    z = ((z ^ (z >> 27)) * _MIX_MULT_2) & _MASK64
    return z ^ (z >> 31)


def stream_key(seed: int, worker_id: int) -> list[int]:
    """128-bit Philox key for one worker's gradient-noise stream."""
    return [_mix64(seed), _mix64((worker_id << 32) ^ seed ^ 0x5851F42D4C957F2D)]


class GradientStream:
    """Counter-based sample stream for one worker.

    Draws are a pure function of (seed, worker_id, iteration, draw index):
    the Philox counter is reset to the iteration index before each batch, so
    the values a worker sees at iteration t do not depend on the algorithm,
    the communication schedule, or any draws made at other iterations.
    """

    def __init__(self, seed: int, worker_id: int):
        self.seed = seed
        self.worker_id = worker_id
        self._bits = np.random.Philox(key=stream_key(seed, worker_id))
        self._gen = np.random.Generator(self._bits)
        self._key = self._bits.state["state"]["key"]

    def generator_at(self, iteration: int) -> np.random.Generator:
        """Position the stream at the start of an iteration's draw block."""
        if iteration < 0:
            raise ValueError("iteration must be non-negative")
        self._bits.state = {
            "bit_generator": "Philox",
            "state": {
                "counter": np.array([0, 0, 0, iteration], dtype=np.uint64),
                "key": self._key,
            },
            "buffer": np.zeros(4, dtype=np.uint64),
            "buffer_pos": 4,
            "has_uint32": 0,
            "uinteger": 0,
        }
        return self._gen

    def normal(self, iteration: int, shape) -> np.ndarray:
        return self.generator_at(iteration).standard_normal(shape)


# ---------------------------------------------------------------- states


@dataclass
class WorkerState:
    """One worker's model and its running variance-correction term."""

    worker_id: int
    x: np.ndarray
    delta: np.ndarray

    def copy(self) -> "WorkerState":
        return WorkerState(self.worker_id, self.x.copy(), self.delta.copy())


@dataclass
class GlobalState:
    """Coordinator view: iteration counter, averaged model, worker states."""

    t: int
    x_hat: np.ndarray
    workers: list[WorkerState]

    def copy(self) -> "GlobalState":
        return GlobalState(self.t, self.x_hat.copy(), [w.copy() for w in self.workers])


# ---------------------------------------------------------------- schedule


@dataclass(frozen=True)
class SyncSchedule:
    """Synchronization calendar for a run of ``total`` iterations.

    Workers synchronize at the start of each communication period and once
    more at the end of the run, so the reported average is a true average.
    With ``warm_up`` the first period has length 1 and later periods keep
    their configured length.
    """

    k: int
    warm_up: bool = False

    def __post_init__(self):
        if self.k < 1:
            raise ConfigError("communication period k must be >= 1")

    def period_start(self, t: int) -> int:
        """Start of the period containing iteration t (plain schedule)."""
        if t < 0:
            raise ValueError("t must be non-negative")
        if not self.warm_up:
            return (t // self.k) * self.k
        if t < 1:
            return 0
        return 1 + ((t - 1) // self.k) * self.k

    def previous_period_start(self, t: int) -> int:
        """Start of the period before the one containing t (clamped at 0)."""
        start = self.period_start(t)
        if start == 0:
            return 0
        if self.warm_up and start == 1:
            return 0
        return start - self.k

    def boundaries(self, total: int) -> list[int]:
        """All synchronization points in [0, total], in increasing order.

        Includes the no-op t=0 alignment and the forced terminal sync; a
        final partial period is allowed when total is not a multiple of k.
        """
        if total < 0:
            raise ConfigError("total iteration count must be >= 0")
        points = [0]
        t = 1 if (self.warm_up and total >= 1) else 0
        if t > 0:
            points.append(t)
        while t + self.k < total:
            t += self.k
            points.append(t)
        if total > points[-1]:
            points.append(total)
        return points


# ---------------------------------------------------------------- config


@dataclass(frozen=True)
class RunConfig:
    """Hyperparameters and execution switches for one simulated run."""

    algorithm: str
    gamma: float
    k: int
    n_workers: int
    total_iters: int
    batch_size: int = 1
    warm_up: bool = False
    seed: int = 0
    easgd_alpha: float | None = None
    partition: str = "non_identical"
    metric_stride: int | None = None
    diagnostics: bool = False
    freeze_delta: bool = False
    x0: tuple[float, ...] | None = None

    def validate(self) -> "RunConfig":
        if self.algorithm not in ALGORITHMS:
            raise ConfigError(
                f"unknown algorithm {self.algorithm!r}; expected one of {ALGORITHMS}"
            )
        if self.partition not in PARTITIONS:
            raise ConfigError(
                f"unknown partition {self.partition!r}; expected one of {PARTITIONS}"
            )
        if not (self.gamma > 0 and math.isfinite(self.gamma)):
            raise ConfigError("gamma must be a positive finite real")
        if self.k < 1:
            raise ConfigError("communication period k must be >= 1")
        if self.algorithm == "ssgd" and self.k != 1:
            raise ConfigError("ssgd synchronizes every iteration; set k=1")
        if self.n_workers < 1:
            raise ConfigError("n_workers must be >= 1")
        if self.total_iters < 0:
            raise ConfigError("total_iters must be >= 0")
        if self.batch_size < 1:
            raise ConfigError("batch_size must be >= 1")
        if self.metric_stride is not None and self.metric_stride < 1:
            raise ConfigError("metric_stride must be >= 1")
        if self.warm_up and self.algorithm != "vrlsgd":
            raise ConfigError("warm_up only applies to the vrlsgd algorithm")
        if self.freeze_delta and self.algorithm != "vrlsgd":
            raise ConfigError("freeze_delta only applies to the vrlsgd algorithm")
        if self.algorithm == "easgd":
            alpha = self.resolved_easgd_alpha()
            if not (0.0 < alpha <= 1.0 / self.n_workers):
                raise ConfigError(
                    f"easgd_alpha must lie in (0, 1/N] = (0, {1.0 / self.n_workers:g}]"
                )
        return self

    def resolved_easgd_alpha(self) -> float:
        """Elastic pull strength; defaults to 0.9/N to stay inside (0, 1/N]."""
        if self.easgd_alpha is not None:
            return self.easgd_alpha
        return 0.9 / self.n_workers

    def resolved_metric_stride(self) -> int:
        """Sampling stride for metric rows: about 1000 rows per run."""
        if self.metric_stride is not None:
            return self.metric_stride
        return max(1, math.ceil(self.total_iters / 1000))

    def schedule(self) -> SyncSchedule:
        return SyncSchedule(k=self.k, warm_up=self.warm_up)

    def with_overrides(self, **kwargs) -> "RunConfig":
        return replace(self, **kwargs)


def initial_vector(cfg: RunConfig, dim: int) -> np.ndarray:
    """Starting point shared by all workers (zeros unless configured)."""
    if cfg.x0 is None:
        return np.zeros(dim, dtype=np.float64)
    return as_vector(list(cfg.x0), dim=dim)
