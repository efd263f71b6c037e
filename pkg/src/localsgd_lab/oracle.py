"""Independent reference implementations used to cross-check the engine.

The oracle favors transparency over speed: single-threaded, fresh
allocations, and for the variance-corrected algorithm it recomputes every
step direction from explicit gradient windows instead of carrying the
engine's recursive correction terms.  A bookkeeping bug in either route
cannot plausibly reproduce itself in the other.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .core import ConfigError, GradientStream, RunConfig, initial_vector, vec_mean
from .metrics import v_variance

ORACLE_MAX_WORKERS = 4
ORACLE_MAX_DIM = 8
ORACLE_MAX_ITERS = 1_000_000


@dataclass
class OracleTrajectory:
    """Positions at every iteration plus per-sync correction values."""

    xs: list[list[np.ndarray]] = field(default_factory=list)
    vs: list[list[np.ndarray]] = field(default_factory=list)
    sync_points: list[int] = field(default_factory=list)
    deltas: dict[int, list[np.ndarray]] = field(default_factory=dict)

    @property
    def final_mean(self) -> np.ndarray:
        return vec_mean(self.xs[-1])


def _check_instance(problem, cfg: RunConfig) -> None:
    if cfg.n_workers > ORACLE_MAX_WORKERS:
        raise ConfigError(f"oracle handles at most {ORACLE_MAX_WORKERS} workers")
    if problem.dimension > ORACLE_MAX_DIM:
        raise ConfigError(f"oracle handles at most dimension {ORACLE_MAX_DIM}")
    if cfg.total_iters > ORACLE_MAX_ITERS:
        raise ConfigError(f"oracle handles at most {ORACLE_MAX_ITERS} iterations")


def _grad(problem, streams, i, x, t, batch_size):
    rng = streams[i].generator_at(t) if problem.sigma > 0 else None
    return problem.stochastic_gradient(i, x, rng, batch_size)


def oracle_run(problem, cfg: RunConfig) -> OracleTrajectory:
    """Re-derive a full run directly from the update definitions.

    Positions are recorded at every t in [0, T]; at synchronization points
    the recorded position is the post-sync one, matching the engine's
    diagnostic trajectory, so the two can be compared element by element.
    """
    cfg.validate()
    _check_instance(problem, cfg)
    if problem.worker_count != cfg.n_workers:
        raise ConfigError("worker count mismatch between problem and config")

    n = cfg.n_workers
    gamma = cfg.gamma
    streams = [GradientStream(cfg.seed, i) for i in range(n)]
    x0 = initial_vector(cfg, problem.dimension)
    boundaries = cfg.schedule().boundaries(cfg.total_iters)
    out = OracleTrajectory(sync_points=boundaries[1:])

    if cfg.algorithm == "ssgd":
        _oracle_ssgd(problem, cfg, streams, x0, out)
        return out

    xs = [x0.copy() for _ in range(n)]
    center = x0.copy()
    window: list[list[np.ndarray]] = []  # gradients of the finished period
    out.xs.append([x.copy() for x in xs])

    for start, end in zip(boundaries[:-1], boundaries[1:]):
        current: list[list[np.ndarray]] = []
        for t in range(start, end):
            grads = [_grad(problem, streams, i, xs[i], t, cfg.batch_size) for i in range(n)]
            current.append(grads)
            vs = _oracle_directions(cfg, grads, window, n)
            xs = [xs[i] - gamma * vs[i] for i in range(n)]
            out.vs.append(vs)
            if t + 1 < end:
                out.xs.append([x.copy() for x in xs])
        # synchronize
        if cfg.algorithm == "easgd":
            alpha = cfg.resolved_easgd_alpha()
            diffs = [xs[i] - center for i in range(n)]
            xs = [xs[i] - alpha * diffs[i] for i in range(n)]
            total = diffs[0].copy()
            for d in diffs[1:]:
                total = total + d
            center = center + alpha * total
        else:
            x_hat = vec_mean(xs)
            xs = [x_hat.copy() for _ in range(n)]
        out.xs.append([x.copy() for x in xs])
        if cfg.algorithm == "vrlsgd" and not cfg.freeze_delta:
            out.deltas[end] = _window_deltas(current, n)
        window = current
    return out


def _oracle_directions(cfg, grads, window, n):
    """Step directions from explicit sums over the previous period."""
    if cfg.algorithm != "vrlsgd" or cfg.freeze_delta or not window:
        return [g.copy() for g in grads]
    length = len(window)
    all_total = np.zeros_like(grads[0])
    for gs in window:
        for g in gs:
            all_total = all_total + g
    all_mean = all_total / (n * length)
    vs = []
    for i in range(n):
        own = np.zeros_like(grads[i])
        for gs in window:
            own = own + gs[i]
        vs.append(grads[i] - own / length + all_mean)
    return vs


def _window_deltas(window, n):
    """Correction terms equivalent to one finished gradient window."""
    length = len(window)
    deltas = []
    for i in range(n):
        acc = np.zeros_like(window[0][i])
        for gs in window:
            acc = acc + (gs[i] - vec_mean(list(gs)))
        deltas.append(acc / length)
    return deltas


def _oracle_ssgd(problem, cfg, streams, x0, out):
    """Coordinator-form synchronous SGD: the average moves, workers copy it."""
    n = cfg.n_workers
    x_hat = x0.copy()
    out.xs.append([x_hat.copy() for _ in range(n)])
    for t in range(cfg.total_iters):
        grads = [_grad(problem, streams, i, x_hat, t, cfg.batch_size) for i in range(n)]
        out.vs.append([g.copy() for g in grads])
        x_hat = x_hat - cfg.gamma * vec_mean(grads)
        out.xs.append([x_hat.copy() for _ in range(n)])


# ---------------------------------------------------------------- closed forms


def _pair_rates(gamma: float) -> tuple[float, float]:
    r1 = 1.0 - 2.0 * gamma
    r2 = 1.0 - 4.0 * gamma
    if abs(r1) >= 1.0 or abs(r2) >= 1.0:
        raise ConfigError(
            "local maps are not contractions; need |1-2*gamma| < 1 and |1-4*gamma| < 1"
        )
    return r1, r2


def localsgd_fixed_point(b_param: float, k: int, gamma: float) -> float:
    """Where plain local SGD stalls on the paired quadratic.

    Each worker's k gradient steps compose to an affine map; averaging the
    two maps gives the period map of the shared iterate, whose fixed point
    is returned.  It is 0 for k = 1 (period-1 averaging is synchronous
    descent on the pair) and drifts away from the optimum as k or the
    center separation b grows.
    """
    if k < 1:
        raise ConfigError("k must be >= 1")
    r1, r2 = _pair_rates(gamma)
    if k == 1:
        return 0.0
    a1 = r1**k
    a2 = r2**k
    c1 = -2.0 * b_param * (1.0 - a1)
    c2 = b_param * (1.0 - a2)
    a_bar = 0.5 * (a1 + a2)
    c_bar = 0.5 * (c1 + c2)
    return c_bar / (1.0 - a_bar)


def localsgd_limit_variance(b_param: float, k: int, gamma: float) -> float:
    """Step-direction variance of local SGD at its limit cycle.

    Starts both workers at the fixed point of the period map, runs the k
    deterministic local steps, and returns the across-worker variance of
    the final step's directions; this is the positive floor the engine's
    v_variance metric settles on.
    """
    x_start = localsgd_fixed_point(b_param, k, gamma)
    x1 = x2 = x_start
    g1 = g2 = 0.0
    for _ in range(k):
        g1 = 2.0 * (x1 + 2.0 * b_param)
        g2 = 4.0 * (x2 - b_param)
        x1 -= gamma * g1
        x2 -= gamma * g2
    return v_variance([np.array([g1]), np.array([g2])])
