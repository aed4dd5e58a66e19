"""Projected gradient descent for SCL over the unit sphere (and orthant).

Each iterate moves along the negative Euclidean gradient and projects every
column back onto the feasible set.  The step is chosen by Armijo
backtracking on the projected point, which makes the loss sequence
monotone.
"""

from __future__ import annotations

import csv
import json
import logging
import math
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from .batching import BatchSet
from .geometry import LabelSet, is_feasible, project_columns
from .loss import LossConfig, loss_and_gradient, lower_bound
from .metrics import beta_nc, class_means, delta_gm, mean_pairwise_cosine

log = logging.getLogger(__name__)

CONVERGED_TO_BOUND = "converged_to_bound"
CONVERGED = "converged"
STALLED = "stalled"
MAX_ITERS = "max_iters"

TRAJECTORY_FIELDS = ("iter", "loss", "gap", "delta_gm", "beta_nc", "mean_cos")


class NumericalError(RuntimeError):
    def __init__(self, msg, iteration, trajectory=None):
        super().__init__(f"{msg} at iteration {iteration}")
        self.iteration = iteration
        self.trajectory = trajectory


@dataclass(frozen=True)
class SolverConfig:
    nonneg: bool = True
    step_size: float | None = None  # None -> 0.5 * tau
    decay: float = 0.5
    max_iters: int = 50000
    rel_tol: float = 1e-12
    seed: int = 0
    init: str = "random_nonneg"
    plateau: int = 200
    max_decays: int = 8
    max_backtracks: int = 30
    grow: float = 2.0
    max_step_factor: float = 64.0
    armijo: float = 1e-4
    gap_tol: float = 1e-12
    bound_rtol: float = 1e-6
    metrics_every: int = 50

    def __post_init__(self):
        if self.step_size is not None and not self.step_size > 0:
            raise ValueError("step_size must be positive")
        if not 0 < self.decay <= 1:
            raise ValueError("decay must lie in (0, 1]")
        if self.max_iters < 1:
            raise ValueError("max_iters must be >= 1")
        if self.init not in ("random_nonneg", "random_sphere", "provided"):
            raise ValueError(f"unknown init {self.init!r}")
        if self.grow < 1:
            raise ValueError("grow must be >= 1")
        if self.metrics_every < 1:
            raise ValueError("metrics_every must be >= 1")


@dataclass
class Trajectory:
    records: list = field(default_factory=list)
    H: np.ndarray | None = None
    reason: str = ""
    iterations: int = 0
    loss: float = math.nan
    lower_bound: float | None = None
    seed: int = 0

    @property
    def gap(self) -> float:
        if self.lower_bound is None:
            return math.nan
        return self.loss - self.lower_bound

    @property
    def rel_gap(self) -> float:
        if self.lower_bound is None:
            return math.nan
        return self.gap / abs(self.lower_bound) if self.lower_bound else self.gap

    def losses(self) -> np.ndarray:
        return np.array([r["loss"] for r in self.records])

    def write_csv(self, fh) -> None:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(TRAJECTORY_FIELDS)
        for r in self.records:
            w.writerow([r["iter"]] + [repr(float(r[f])) for f in TRAJECTORY_FIELDS[1:]])

    def summary(self) -> dict:
        return {
            "reason": self.reason,
            "iterations": self.iterations,
            "loss": self.loss,
            "lower_bound": self.lower_bound,
            "gap": None if self.lower_bound is None else self.gap,
            "rel_gap": None if self.lower_bound is None else self.rel_gap,
            "achieved": self.reason == CONVERGED_TO_BOUND,
            "seed": self.seed,
        }


def _metric(fn, *args):
    try:
        return fn(*args)
    except ValueError:
        return math.nan


def _record(it, f, bound, H, y):
    M = class_means(H, y)
    return {
        "iter": it,
        "loss": f,
        "gap": math.nan if bound is None else f - bound,
        "delta_gm": _metric(delta_gm, M),
        "beta_nc": _metric(beta_nc, H, y),
        "mean_cos": _metric(mean_pairwise_cosine, M),
    }


def initial_embeddings(y: LabelSet, d: int, cfg: SolverConfig, H0=None) -> np.ndarray:
    if cfg.init == "provided":
        if H0 is None:
            raise ValueError("init='provided' needs an initial matrix")
        H0 = np.array(H0, dtype=np.float64)
        if H0.shape != (d, y.n):
            raise ValueError(f"initial matrix has shape {H0.shape}, expected {(d, y.n)}")
        if not is_feasible(H0, cfg.nonneg):
            raise ValueError("provided initial matrix is infeasible")
        return H0
    rng = np.random.default_rng(cfg.seed)
    if cfg.init == "random_nonneg":
        H = rng.uniform(0.0, 1.0, size=(d, y.n))
    else:
        H = rng.standard_normal((d, y.n))
    return project_columns(H, cfg.nonneg)[0]


def solve(y: LabelSet, d: int, batches: BatchSet | None = None,
          loss_cfg: LossConfig = LossConfig(), cfg: SolverConfig = SolverConfig(),
          H0=None, backend=None) -> Trajectory:
    """Minimize the (mini-)batch SCL over the feasible set.

    ``batches=None`` optimizes the full-batch loss.  The lower bound is only
    used as a stopping target when ``cfg.nonneg`` is set; without the
    orthant constraint it is not a valid bound.
    """
    if d < y.k:
        warnings.warn(f"d={d} < k={y.k}: the orthogonal-frame optimum is not representable",
                      stacklevel=2)
    if batches is not None and batches.n != y.n:
        raise ValueError("labels and batches disagree on n")
    bound = lower_bound(y, batches, loss_cfg) if cfg.nonneg else None
    eta = cfg.step_size if cfg.step_size is not None else 0.5 * loss_cfg.tau

    H = initial_embeddings(y, d, cfg, H0)
    traj = Trajectory(lower_bound=bound, seed=cfg.seed)

    def evaluate(X, it):
        f, G = loss_and_gradient(X, y, batches, loss_cfg, backend=backend)
        if not (math.isfinite(f) and np.all(np.isfinite(G))):
            traj.H, traj.loss, traj.iterations = X, f, it
            raise NumericalError("non-finite loss or gradient", it, traj)
        return f, G

    def classify():
        if bound is None:
            return CONVERGED
        if f - bound <= cfg.bound_rtol * max(1.0, abs(bound)):
            return CONVERGED_TO_BOUND
        return STALLED

    f, G = evaluate(H, 0)
    traj.records.append(_record(0, f, bound, H, y))
    small = decays = 0
    it = 0
    t_last = eta / cfg.grow
    reason = MAX_ITERS
    while it < cfg.max_iters:
        if bound is not None and f - bound <= cfg.gap_tol * max(1.0, abs(bound)):
            reason = CONVERGED_TO_BOUND
            break
        t = min(t_last * cfg.grow, eta * cfg.max_step_factor)
        accepted = stationary = False
        for _ in range(cfg.max_backtracks + 1):
            Hn = project_columns(H - t * G, cfg.nonneg)[0]
            step_sq = float(np.sum((Hn - H) ** 2))
            if step_sq == 0.0:
                stationary = True
                break
            fn, Gn = evaluate(Hn, it + 1)
            if fn <= f - cfg.armijo / t * step_sq:
                accepted = True
                break
            t *= 0.5
        if not accepted:
            reason = classify()
            log.debug("%s: no descent step at iteration %d (stationary=%s)",
                      reason, it, stationary)
            break
        it += 1
        t_last = t
        improvement = f - fn
        H, f, G = Hn, fn, Gn
        if improvement < cfg.rel_tol * abs(f):
            small += 1
            if small >= cfg.plateau:
                small = 0
                decays += 1
                eta *= cfg.decay
                t_last = min(t_last, eta / cfg.grow)
                if decays > cfg.max_decays:
                    reason = classify()
                    break
        else:
            small = 0
        if it % cfg.metrics_every == 0:
            traj.records.append(_record(it, f, bound, H, y))
    else:
        if bound is not None and f - bound <= cfg.gap_tol * max(1.0, abs(bound)):
            reason = CONVERGED_TO_BOUND

    if traj.records[-1]["iter"] != it:
        traj.records.append(_record(it, f, bound, H, y))
    traj.H, traj.loss, traj.iterations, traj.reason = H, f, it, reason
    return traj


def _solve_star(args):
    return solve(*args)


def multi_start(y: LabelSet, d: int, batches: BatchSet | None = None,
                loss_cfg: LossConfig = LossConfig(), cfg: SolverConfig = SolverConfig(),
                n_starts: int = 10, workers: int = 1) -> list[Trajectory]:
    """Independent runs with seeds ``cfg.seed, cfg.seed + 1, ...``."""
    if n_starts < 1:
        raise ValueError("n_starts must be >= 1")
    jobs = [(y, d, batches, loss_cfg, replace(cfg, seed=cfg.seed + s)) for s in range(n_starts)]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(_solve_star, jobs))
    return [_solve_star(j) for j in jobs]


def restart_summary(runs: list[Trajectory]) -> dict:
    gaps = [r.rel_gap for r in runs if r.lower_bound is not None]
    return {
        "n_starts": len(runs),
        "best_rel_gap": min(gaps) if gaps else None,
        "worst_rel_gap": max(gaps) if gaps else None,
        "reasons": [r.reason for r in runs],
    }


def config_to_dict(cfg: SolverConfig) -> dict:
    return asdict(cfg)


def trajectory_json(traj: Trajectory) -> str:
    return json.dumps(traj.summary())
