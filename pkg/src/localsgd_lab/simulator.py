"""Run engine: periods of local steps separated by synchronization barriers.

Workers own their state between barriers, so worker updates can run on a
thread pool without changing any result: every reduction happens on the
coordinator in ascending worker order, and every random draw is keyed by
(seed, worker, iteration).  A run therefore produces bit-identical traces
for any thread count.
"""
from __future__ import annotations

import bisect
import math
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .core import (
    DIVERGENCE_LOSS_LIMIT,
    ConfigError,
    GlobalState,
    GradientStream,
    RunConfig,
    WorkerState,
    initial_vector,
    vec_mean,
)
from .metrics import (
    TraceRow,
    c_constant,
    delta_residual,
    distance_to_opt,
    epoch_of,
    grad_norm_sq,
    v_variance,
    worker_drift,
)
from .optimizers import (
    averaging_sync,
    delta_direct,
    easgd_sync,
    v_direct,
    vrl_local_step,
    vrl_sync,
    warm_up_init,
)

THREADS_ENV_VAR = "LOCALSGD_LAB_THREADS"


@dataclass
class DiagReport:
    """Worst-case residuals of identities checked during a diagnostic run."""

    max_avg_recursion_residual: float = 0.0
    max_delta_window_diff: float = 0.0
    max_v_window_diff: float = 0.0
    trajectory: list[list[np.ndarray]] = field(default_factory=list)
    sync_deltas: list[tuple[int, list[np.ndarray]]] = field(default_factory=list)


@dataclass
class RunResult:
    """Everything observable about one finished (or aborted) run."""

    config: RunConfig
    final_state: GlobalState
    trace: list[TraceRow]
    diverged: bool
    diverged_at: int | None
    sync_count: int
    grad_evals_per_worker: list[int]
    wall_ms: float
    max_delta_sum_inf: float
    c_value: float
    diag: DiagReport | None

    @property
    def grad_evals(self) -> int:
        return int(sum(self.grad_evals_per_worker))

    def summary(self) -> dict:
        last = self.trace[-1] if self.trace else None
        return {
            "algorithm": self.config.algorithm,
            "final_loss": last.loss if last else None,
            "final_grad_norm_sq": last.grad_norm_sq if last else None,
            "final_dist_to_opt": last.dist_to_opt if last else None,
            "diverged": self.diverged,
            "syncs": self.sync_count,
            "grad_evals": self.grad_evals,
            "wall_ms": self.wall_ms,
        }


def resolve_threads(requested: int | None, n_workers: int) -> int:
    """Thread budget: explicit argument, then the env var, then serial."""
    value = requested
    if value is None:
        raw = os.environ.get(THREADS_ENV_VAR)
        if raw is None:
            value = 1
        else:
            try:
                value = int(raw)
            except ValueError as exc:
                raise ConfigError(f"{THREADS_ENV_VAR} must be an integer") from exc
    if value < 0:
        raise ConfigError("thread count must be >= 0")
    if value == 0:
        value = min(n_workers, os.cpu_count() or 1)
    return max(1, min(value, n_workers))


@dataclass
class _PeriodOutcome:
    """What one worker reports back at a barrier."""

    snaps: dict[int, tuple[np.ndarray, np.ndarray]]
    last_v: np.ndarray | None
    evals: int
    xs_all: list[np.ndarray] | None
    gs_all: list[np.ndarray] | None
    vs_all: list[np.ndarray] | None


def _worker_period(
    problem,
    cfg: RunConfig,
    worker: WorkerState,
    stream: GradientStream,
    start: int,
    end: int,
    sampled,
    record_iterates: bool,
) -> _PeriodOutcome:
    """Run one worker's local iterations for the period [start, end).

    Owns the worker state for the duration; touches nothing shared.
    Snapshots at sampled iterations record the pre-step position at t and
    the step direction from t-1, which is what a trace row at t reports.
    """
    gamma = cfg.gamma
    stochastic = problem.sigma > 0
    snaps: dict[int, tuple[np.ndarray, np.ndarray]] = {}
    xs_all = [] if record_iterates else None
    gs_all = [] if record_iterates else None
    vs_all = [] if record_iterates else None
    v_prev: np.ndarray | None = None
    evals = 0
    for t in range(start, end):
        if t in sampled and t > start:
            snaps[t] = (worker.x, v_prev)
        if record_iterates:
            xs_all.append(worker.x)
        rng = stream.generator_at(t) if stochastic else None
        g, v = vrl_local_step(worker, problem, cfg, t, rng)
        evals += cfg.batch_size
        if record_iterates:
            gs_all.append(g)
            vs_all.append(v)
        v_prev = v
    return _PeriodOutcome(snaps, v_prev, evals, xs_all, gs_all, vs_all)


class _Runner:
    """Holds the mutable pieces of one run while it executes."""

    def __init__(self, problem, cfg: RunConfig, threads: int):
        dim = problem.dimension
        x0 = initial_vector(cfg, dim)
        workers = [
            WorkerState(i, x0.copy(), np.zeros(dim)) for i in range(cfg.n_workers)
        ]
        self.problem = problem
        self.cfg = cfg
        self.state = GlobalState(0, x0.copy(), workers)
        self.center = x0.copy() if cfg.algorithm == "easgd" else None
        self.streams = [GradientStream(cfg.seed, i) for i in range(cfg.n_workers)]
        self.threads = threads
        self.pool: ThreadPoolExecutor | None = None
        self.rows: list[TraceRow] = []
        self.sync_count = 0
        self.evals = [0] * cfg.n_workers
        self.max_delta_sum = 0.0
        self.first_period_xhats: list[np.ndarray] = []
        self.prev_window: list[list[np.ndarray]] | None = None
        self._last_period_grads: list[list[np.ndarray]] | None = None
        self.diag = DiagReport() if cfg.diagnostics else None
        self.diverged = False
        self.diverged_at: int | None = None

    # -- rows -----------------------------------------------------------

    def _emit(self, t: int, xs: list[np.ndarray], vs: list[np.ndarray] | None) -> bool:
        """Append a trace row at t; returns False when the run must stop."""
        p, cfg = self.problem, self.cfg
        x_hat = vec_mean(xs)
        if not np.all(np.isfinite(x_hat)):
            self.diverged = True
            self.diverged_at = t
            return False
        loss = p.loss(x_hat)
        if not math.isfinite(loss):
            self.diverged = True
            self.diverged_at = t
            return False
        row = TraceRow(
            t=t,
            epoch=epoch_of(t, cfg.n_workers, cfg.batch_size, p.n_samples),
            loss=loss,
            grad_norm_sq=grad_norm_sq(p, x_hat),
            drift=worker_drift(xs, x_hat),
            v_variance=v_variance(vs) if vs else 0.0,
            delta_residual=delta_residual([w.delta for w in self.state.workers]),
            dist_to_opt=distance_to_opt(p, x_hat),
        )
        self.rows.append(row)
        if loss > DIVERGENCE_LOSS_LIMIT:
            self.diverged = True
            self.diverged_at = t
            return False
        return True

    # -- periods --------------------------------------------------------

    def _sampled_set(self, boundaries: list[int]) -> set[int]:
        stride = self.cfg.resolved_metric_stride()
        sampled = set(boundaries)
        sampled.update(range(0, self.cfg.total_iters + 1, stride))
        return sampled

    def _execute_period(self, start: int, end: int, sampled) -> list[_PeriodOutcome]:
        cfg = self.cfg
        record = cfg.diagnostics or start == 0
        tasks = [
            (self.problem, cfg, w, self.streams[w.worker_id], start, end, sampled, record)
            for w in self.state.workers
        ]
        if self.pool is not None:
            futures = [self.pool.submit(_worker_period, *t) for t in tasks]
            return [f.result() for f in futures]
        return [_worker_period(*t) for t in tasks]

    def _sync(self, elapsed: int) -> None:
        cfg = self.cfg
        if cfg.algorithm == "easgd":
            self.center = easgd_sync(
                self.state, self.center, cfg.resolved_easgd_alpha()
            )
        elif cfg.algorithm == "localsgd" or cfg.freeze_delta:
            averaging_sync(self.state)
        else:  # vrlsgd and its period-1 instance, ssgd
            vrl_sync(self.state, cfg.gamma, elapsed, update_delta=True)
        self.sync_count += 1
        self.max_delta_sum = max(
            self.max_delta_sum, delta_residual([w.delta for w in self.state.workers])
        )

    def _period_diagnostics(self, start: int, end: int, outcomes, pre_sync_xs) -> None:
        """Check the averaging recursion and the window forms on this period."""
        diag, cfg = self.diag, self.cfg
        gamma = cfg.gamma
        n_iters = end - start
        positions = [
            [o.xs_all[j] for o in outcomes] for j in range(n_iters)
        ] + [pre_sync_xs]
        grads = [[o.gs_all[j] for o in outcomes] for j in range(n_iters)]
        for j in range(n_iters):
            lhs = vec_mean(positions[j + 1])
            rhs = vec_mean(positions[j]) - gamma * vec_mean(grads[j])
            diag.max_avg_recursion_residual = max(
                diag.max_avg_recursion_residual, float(np.max(np.abs(lhs - rhs)))
            )
        if cfg.algorithm == "vrlsgd" and not cfg.freeze_delta:
            vs = [[o.vs_all[j] for o in outcomes] for j in range(n_iters)]
            for j in range(n_iters):
                direct = v_direct(grads[j], self.prev_window)
                for v_rec, v_dir in zip(vs[j], direct):
                    diag.max_v_window_diff = max(
                        diag.max_v_window_diff, float(np.max(np.abs(v_rec - v_dir)))
                    )
        diag.trajectory.extend(positions[:-1])
        self._last_period_grads = grads

    def run(self, warm_up_direct: bool = False) -> None:
        cfg = self.cfg
        boundaries = cfg.schedule().boundaries(cfg.total_iters)
        sampled = self._sampled_set(boundaries)
        ordered = sorted(sampled)
        self.state.x_hat = vec_mean([w.x for w in self.state.workers])
        if not self._emit(0, [w.x for w in self.state.workers], None):
            return
        if self.threads > 1:
            self.pool = ThreadPoolExecutor(max_workers=self.threads)
        try:
            for start, end in zip(boundaries[:-1], boundaries[1:]):
                if not self._run_period(start, end, sampled, ordered, warm_up_direct):
                    return
        finally:
            if self.pool is not None:
                self.pool.shutdown()
                self.pool = None
        if self.diag is not None:
            self.diag.trajectory.append([w.x for w in self.state.workers])

    def _run_period(self, start, end, sampled, ordered, warm_up_direct) -> bool:
        cfg = self.cfg
        first = start == 0
        if warm_up_direct and first:
            # Correction bootstrap in closed form instead of a scheduled
            # period; arithmetic matches the scheduled path exactly.
            self.first_period_xhats = [self.state.workers[0].x.copy()]
            if self.diag is not None:
                self.diag.trajectory.append([w.x for w in self.state.workers])
            recorded = warm_up_init(self.state, self.problem, cfg, self.streams)
            for i in range(cfg.n_workers):
                self.evals[i] += cfg.batch_size
            self.sync_count += 1
            self.max_delta_sum = max(
                self.max_delta_sum,
                delta_residual([w.delta for w in self.state.workers]),
            )
            if self.diag is not None:
                self.prev_window = [[g for (g, _) in recorded]]
                self.diag.sync_deltas.append(
                    (end, [w.delta.copy() for w in self.state.workers])
                )
            vs = [v for (_, v) in recorded]
            if not self._emit(1, [w.x for w in self.state.workers], vs):
                return False
            self.state.t = end
            return True

        outcomes = self._execute_period(start, end, sampled)
        for i, o in enumerate(outcomes):
            self.evals[i] += o.evals
        if first:
            self.first_period_xhats = [
                vec_mean([o.xs_all[j] for o in outcomes]) for j in range(end - start)
            ]
        if self.diag is not None:
            self._period_diagnostics(start, end, outcomes, [w.x for w in self.state.workers])

        # Mid-period rows are emitted before the sync so their correction
        # terms are the ones that were actually in force at those steps.
        lo = bisect.bisect_right(ordered, start)
        hi = bisect.bisect_left(ordered, end)
        for t in ordered[lo:hi]:
            xs = [o.snaps[t][0] for o in outcomes]
            vs = [o.snaps[t][1] for o in outcomes]
            if not self._emit(t, xs, vs):
                return False

        self._sync(end - start)
        if self.diag is not None:
            if cfg.algorithm == "vrlsgd" and not cfg.freeze_delta:
                direct = delta_direct(self._last_period_grads)
                for w, d in zip(self.state.workers, direct):
                    self.diag.max_delta_window_diff = max(
                        self.diag.max_delta_window_diff,
                        float(np.max(np.abs(w.delta - d))),
                    )
            self.diag.sync_deltas.append(
                (end, [w.delta.copy() for w in self.state.workers])
            )
            self.prev_window = self._last_period_grads
        vs = [o.last_v for o in outcomes]
        if not self._emit(end, [w.x for w in self.state.workers], vs):
            return False
        self.state.t = end
        return True


def run(
    problem,
    cfg: RunConfig,
    *,
    threads: int | None = None,
    warm_up_direct: bool = False,
) -> RunResult:
    """Execute one configured run and return its trace and final state."""
    cfg.validate()
    if problem.worker_count != cfg.n_workers:
        raise ConfigError(
            f"problem defines {problem.worker_count} workers, config says {cfg.n_workers}"
        )
    if warm_up_direct and not cfg.warm_up:
        raise ConfigError("warm_up_direct requires warm_up")
    n_threads = resolve_threads(threads, cfg.n_workers)
    started = time.perf_counter()
    runner = _Runner(problem, cfg, n_threads)
    runner.run(warm_up_direct=warm_up_direct)
    wall_ms = (time.perf_counter() - started) * 1000.0
    c_value = c_constant(problem, runner.first_period_xhats)
    return RunResult(
        config=cfg,
        final_state=runner.state,
        trace=runner.rows,
        diverged=runner.diverged,
        diverged_at=runner.diverged_at,
        sync_count=runner.sync_count,
        grad_evals_per_worker=runner.evals,
        wall_ms=wall_ms,
        max_delta_sum_inf=runner.max_delta_sum,
        c_value=c_value,
        diag=runner.diag,
    )


# ---------------------------------------------------------------- advisor


@dataclass(frozen=True)
class ConditionCheck:
    name: str
    lhs: float
    rhs: float
    satisfied: bool


@dataclass(frozen=True)
class HyperReport:
    """Stability conditions and schedule suggestions for a configuration."""

    conditions: list[ConditionCheck]
    l_value: float | None
    l_estimated: bool
    suggested_gamma: float | None
    suggested_k: int

    def render(self) -> str:
        lines = []
        if self.l_value is not None:
            tag = " (estimated)" if self.l_estimated else ""
            lines.append(f"smoothness L = {self.l_value:g}{tag}")
        for c in self.conditions:
            verdict = "PASS" if c.satisfied else "FAIL"
            lines.append(f"condition {c.name}: {c.lhs:g} <= {c.rhs:g} -> {verdict}")
        if self.suggested_gamma is not None:
            lines.append(f"suggested gamma = sqrt(b*N)/(sigma*sqrt(T)): {self.suggested_gamma:g}")
        lines.append(f"suggested k = floor(sqrt(T)/N^(3/2)): {self.suggested_k}")
        return "\n".join(lines)


def suggested_k(total_iters: int, n_workers: int) -> int:
    """Largest communication period with no asymptotic convergence penalty."""
    if total_iters < 1 or n_workers < 1:
        raise ConfigError("need total_iters >= 1 and n_workers >= 1")
    return max(1, math.floor(math.sqrt(total_iters) / n_workers**1.5))


def check_hyperparams(
    cfg: RunConfig,
    problem=None,
    l_value: float | None = None,
    sigma: float | None = None,
) -> HyperReport:
    """Evaluate the stability conditions; advisory only, never blocks a run.

    The two conditions require gamma <= 1/(2L) and 72 k^2 gamma^2 L^2 <= 1.
    Suggestions follow the scaling schedule gamma = sqrt(b*N)/(sigma*sqrt(T))
    and k = floor(sqrt(T)/N^(3/2)).
    """
    l_estimated = False
    if l_value is None and problem is not None:
        l_value = problem.lipschitz
        l_estimated = bool(problem.lipschitz_estimated)
    if sigma is None and problem is not None:
        sigma = problem.sigma
    conditions: list[ConditionCheck] = []
    if l_value is not None:
        lhs = cfg.gamma
        rhs = 1.0 / (2.0 * l_value)
        conditions.append(ConditionCheck("gamma <= 1/(2L)", lhs, rhs, lhs <= rhs))
        lhs2 = 72.0 * cfg.k**2 * cfg.gamma**2 * l_value**2
        conditions.append(ConditionCheck("72 k^2 gamma^2 L^2 <= 1", lhs2, 1.0, lhs2 <= 1.0))
    gamma_star = None
    if sigma and sigma > 0 and cfg.total_iters >= 1:
        gamma_star = math.sqrt(cfg.batch_size * cfg.n_workers) / (
            sigma * math.sqrt(cfg.total_iters)
        )
    return HyperReport(
        conditions=conditions,
        l_value=l_value,
        l_estimated=l_estimated,
        suggested_gamma=gamma_star,
        suggested_k=suggested_k(max(cfg.total_iters, 1), cfg.n_workers),
    )


# ---------------------------------------------------------------- sweeps

SWEEP_AXES = ("k", "gamma", "n_workers", "b_param", "batch_size", "algorithm")


def sweep(
    base_cfg: RunConfig,
    axis: str,
    values,
    build_problem,
    *,
    threads: int | None = None,
) -> list[tuple[object, RunConfig, RunResult]]:
    """Run one configuration per value of a single swept axis.

    ``build_problem(cfg, b_param)`` must return the problem instance for a
    given configuration; ``b_param`` is None except when sweeping it.  All
    runs share the base seed.  Sweeping algorithms onto ssgd coerces k to 1,
    since that algorithm synchronizes every iteration by definition.
    """
    if axis not in SWEEP_AXES:
        raise ConfigError(f"unknown sweep axis {axis!r}; expected one of {SWEEP_AXES}")
    if len(values) == 0:
        raise ConfigError("sweep needs at least one value")
    results = []
    for value in values:
        b_param = None
        if axis == "b_param":
            cfg = base_cfg
            b_param = float(value)
        elif axis == "algorithm":
            cfg = base_cfg.with_overrides(algorithm=str(value))
            if value != "vrlsgd":
                # warm-up and the frozen correction only exist for vrlsgd
                cfg = cfg.with_overrides(warm_up=False, freeze_delta=False)
            if value == "ssgd":
                cfg = cfg.with_overrides(k=1)
        elif axis == "gamma":
            cfg = base_cfg.with_overrides(gamma=float(value))
        else:
            cfg = base_cfg.with_overrides(**{axis: int(value)})
        cfg.validate()
        problem = build_problem(cfg, b_param)
        results.append((value, cfg, run(problem, cfg, threads=threads)))
    return results
