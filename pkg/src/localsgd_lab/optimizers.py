"""Update rules for the four algorithms.

All algorithms share one local-step expression, x <- x - gamma * (g - delta),
with delta frozen at zero for the plain baselines.  Synchronization averages
worker models (or, for the elastic variant, pulls workers toward a center).
Keeping a single arithmetic path is what makes the documented equivalences
(period-1 variance reduction == synchronous SGD, frozen corrections ==
plain local SGD) hold bit-for-bit rather than just to rounding error.
"""
from __future__ import annotations

import numpy as np

from .core import GlobalState, RunConfig, WorkerState, vec_mean, vec_sum


# ---------------------------------------------------------------- local steps


def local_update(worker: WorkerState, g: np.ndarray, gamma: float) -> np.ndarray:
    """Apply one local step and return the step direction v = g - delta."""
    v = g - worker.delta
    worker.x = worker.x - gamma * v
    return v


def vrl_local_step(
    worker: WorkerState,
    problem,
    cfg: RunConfig,
    t: int,
    rng: np.random.Generator | None,
) -> tuple[np.ndarray, np.ndarray]:
    """Variance-corrected local step: move along the corrected gradient."""
    g = problem.stochastic_gradient(worker.worker_id, worker.x, rng, cfg.batch_size)
    v = local_update(worker, g, cfg.gamma)
    return g, v


def local_sgd_step(
    worker: WorkerState,
    problem,
    cfg: RunConfig,
    t: int,
    rng: np.random.Generator | None,
) -> tuple[np.ndarray, np.ndarray]:
    """Plain local SGD step; the worker's correction term stays zero."""
    return vrl_local_step(worker, problem, cfg, t, rng)


# ---------------------------------------------------------------- syncs


def vrl_sync(state: GlobalState, gamma: float, elapsed: int, update_delta: bool = True) -> GlobalState:
    """Average worker models and refresh correction terms.

    ``elapsed`` is the actual length of the period that just finished; the
    correction update divides the average-vs-worker displacement by
    elapsed * gamma and must read worker positions before they are reset
    to the average.  elapsed == 0 marks the initial alignment, where the
    correction update is skipped.
    """
    if elapsed < 0:
        raise ValueError("elapsed period length must be >= 0")
    x_hat = vec_mean([w.x for w in state.workers])
    if update_delta and elapsed > 0:
        denom = elapsed * gamma
        for w in state.workers:
            w.delta = w.delta + (x_hat - w.x) / denom
    for w in state.workers:
        w.x = x_hat.copy()
    state.x_hat = x_hat
    return state


def averaging_sync(state: GlobalState) -> GlobalState:
    """Average worker models without touching correction terms."""
    return vrl_sync(state, gamma=1.0, elapsed=0, update_delta=False)


def easgd_sync(state: GlobalState, center: np.ndarray, alpha: float) -> np.ndarray:
    """Elastic synchronization: symmetric pull between workers and center.

    Both updates use the pre-sync positions: each worker moves toward the
    old center, and the center moves toward the old workers.  Workers are
    not equalized; the reported average remains the plain worker mean.
    """
    diffs = [w.x - center for w in state.workers]
    for w, d in zip(state.workers, diffs):
        w.x = w.x - alpha * d
    new_center = center + alpha * vec_sum(diffs)
    state.x_hat = vec_mean([w.x for w in state.workers])
    return new_center


def ssgd_step(state: GlobalState, problem, cfg: RunConfig, streams, t: int) -> GlobalState:
    """One synchronous round in coordinator form.

    Every worker evaluates its stochastic gradient at the shared average,
    the average moves along the mean gradient, and all workers adopt it.
    The engine realizes synchronous SGD through the period-1 worker
    machine instead; this closed form is kept as the independent
    reference implementation.
    """
    grads = []
    for w in state.workers:
        rng = streams[w.worker_id].generator_at(t) if problem.sigma > 0 else None
        grads.append(
            problem.stochastic_gradient(w.worker_id, state.x_hat, rng, cfg.batch_size)
        )
    state.x_hat = state.x_hat - cfg.gamma * vec_mean(grads)
    for w in state.workers:
        w.x = state.x_hat.copy()
    state.t = t + 1
    return state


def warm_up_init(state: GlobalState, problem, cfg: RunConfig, streams) -> list[tuple[np.ndarray, np.ndarray]]:
    """Initialize correction terms with one synchronous round.

    Runs iteration 0 as a single plain-SGD round, then sets each worker's
    correction to its displacement from the new average divided by gamma,
    which equals that worker's first-round gradient minus the mean of all
    first-round gradients.  Uses the same step and sync primitives as the
    engine, so scheduling the first period with length 1 produces exactly
    the same state.
    """
    if state.t != 0:
        raise ValueError("warm-up must run from iteration 0")
    recorded = []
    for w in state.workers:
        rng = streams[w.worker_id].generator_at(0) if problem.sigma > 0 else None
        g, v = vrl_local_step(w, problem, cfg, 0, rng)
        recorded.append((g, v))
    vrl_sync(state, gamma=cfg.gamma, elapsed=1, update_delta=True)
    state.t = 1
    return recorded


# ---------------------------------------------------------------- direct forms


def _check_window(history: list[list[np.ndarray]]) -> tuple[int, int]:
    if not history:
        raise ValueError("empty gradient window")
    n = len(history[0])
    for gs in history:
        if len(gs) != n:
            raise ValueError("gradient window rows disagree on worker count")
    return len(history), n


def delta_direct(history: list[list[np.ndarray]]) -> list[np.ndarray]:
    """Correction terms recomputed from a full gradient window.

    ``history[tau][i]`` is worker i's sampled gradient at the tau-th
    iteration of the previous period.  The correction equals the window
    average of each worker's gradient minus the window average of the
    all-worker mean gradient.  This is the direct-sum route used to
    cross-check the engine's recursive update.
    """
    length, n = _check_window(history)
    means = [vec_mean(list(gs)) for gs in history]
    out = []
    for i in range(n):
        acc = np.zeros_like(history[0][i])
        for tau in range(length):
            acc = acc + (history[tau][i] - means[tau])
        out.append(acc / length)
    return out


def v_direct(
    current_grads: list[np.ndarray],
    history: list[list[np.ndarray]] | None,
) -> list[np.ndarray]:
    """Step directions recomputed from gradients alone.

    v_i = g_i - (own previous-period average) + (all-worker previous-period
    average).  With no completed period yet the corrections vanish and
    v_i = g_i.
    """
    if not history:
        return [g.copy() for g in current_grads]
    length, n = _check_window(history)
    if len(current_grads) != n:
        raise ValueError("current gradient list disagrees with window worker count")
    total = np.zeros_like(current_grads[0])
    for gs in history:
        for g in gs:
            total = total + g
    all_mean = total / (n * length)
    out = []
    for i, g in enumerate(current_grads):
        own = np.zeros_like(g)
        for tau in range(length):
            own = own + history[tau][i]
        out.append(g - own / length + all_mean)
    return out
