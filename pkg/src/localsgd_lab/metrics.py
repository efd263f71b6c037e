"""Pure metric functions and the trace container.

Every function here observes state without mutating it or consuming
randomness, so sampling metrics can never perturb a run.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import vec_mean, vec_sum

TRACE_COLUMNS = (
    "t",
    "epoch",
    "loss",
    "grad_norm_sq",
    "drift",
    "v_variance",
    "delta_residual",
    "dist_to_opt",
)


@dataclass(frozen=True)
class TraceRow:
    """One sampled observation of the run at iteration t."""

    t: int
    epoch: float
    loss: float
    grad_norm_sq: float
    drift: float
    v_variance: float
    delta_residual: float
    dist_to_opt: float | None

    def csv_fields(self) -> list[str]:
        vals = [
            str(self.t),
            _fmt(self.epoch),
            _fmt(self.loss),
            _fmt(self.grad_norm_sq),
            _fmt(self.drift),
            _fmt(self.v_variance),
            _fmt(self.delta_residual),
        ]
        vals.append("" if self.dist_to_opt is None else _fmt(self.dist_to_opt))
        return vals


def _fmt(x: float) -> str:
    """17 significant digits: enough to round-trip any float64 exactly."""
    return format(float(x), ".17g")


def trace_to_csv(rows: list[TraceRow]) -> str:
    lines = [",".join(TRACE_COLUMNS)]
    for r in rows:
        lines.append(",".join(r.csv_fields()))
    return "\n".join(lines) + "\n"


def sweep_to_csv(axis: str, cells: list[tuple[object, list[TraceRow]]]) -> str:
    """All cell traces in one file, each row prefixed by its axis value."""
    lines = [",".join((axis,) + TRACE_COLUMNS)]
    for value, rows in cells:
        label = _fmt(value) if isinstance(value, float) else str(value)
        for r in rows:
            lines.append(",".join([label] + r.csv_fields()))
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------- metrics


def grad_norm_sq(problem, x_hat: np.ndarray) -> float:
    """Squared norm of the aggregate-objective gradient at the average."""
    g = problem.global_gradient(x_hat)
    return float(g @ g)


def worker_drift(xs: list[np.ndarray], x_hat: np.ndarray) -> float:
    """Mean squared distance of worker models from their average."""
    total = 0.0
    for x in xs:
        d = x - x_hat
        total += float(d @ d)
    return total / len(xs)


def v_variance(vs: list[np.ndarray]) -> float:
    """Variance of the step directions across workers.

    Mean squared distance of each worker's v from the worker-mean v; this
    is the quantity that collapses to zero when the variance correction
    has locked on and stays positive for uncorrected local SGD.
    """
    center = vec_mean(vs)
    total = 0.0
    for v in vs:
        d = v - center
        total += float(d @ d)
    return total / len(vs)


def delta_residual(deltas: list[np.ndarray]) -> float:
    """Infinity norm of the sum of all correction terms (zero in theory)."""
    s = vec_sum(deltas)
    return float(np.max(np.abs(s))) if s.size else 0.0


def distance_to_opt(problem, x_hat: np.ndarray) -> float | None:
    """Euclidean distance to the known minimizer, when there is one."""
    if problem.x_star is None:
        return None
    d = x_hat - problem.x_star
    return float(np.sqrt(d @ d))


def c_constant(problem, x_hat_history: list[np.ndarray]) -> float:
    """Accumulated-heterogeneity constant of the first period.

    For each iteration t of the first period, sums over workers the squared
    norm of the accumulated difference between the worker's full gradient
    and the all-worker mean gradient along the averaged iterates up to
    t - 1, then divides by the worker count.  Empty accumulations (period
    length 1) and identical workers give exactly zero.
    """
    n = problem.worker_count
    if not x_hat_history:
        return 0.0
    partial = [np.zeros(problem.dimension) for _ in range(n)]
    total = 0.0
    for idx, xh in enumerate(x_hat_history):
        if idx > 0:
            for p in partial:
                total += float(p @ p)
        grads = [problem.full_gradient(i, xh) for i in range(n)]
        center = vec_mean(grads)
        for i in range(n):
            partial[i] = partial[i] + (grads[i] - center)
    # First-period iterations contribute at t = 1 .. len-1; the t = 0 term
    # is an empty sum.  The loop above adds each term just before folding
    # in the t-th gradients, so the last fold is intentionally unused.
    return total / n


def epoch_of(t: int, n_workers: int, batch_size: int, n_samples: int | None) -> float:
    """Dataset passes implied by iteration t; iterations when no dataset."""
    if n_samples:
        return t * n_workers * batch_size / n_samples
    return float(t)
