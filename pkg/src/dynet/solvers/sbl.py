"""Sparse Bayesian learning with a grouped ARD prior and per-experiment noise.

Model: ``y = A w + xi`` with ``xi ~ N(0, diag(sigma_l^2 I_l))`` (one variance
per experiment) and ``w_k ~ N(0, gamma_k I)`` for every large group ``k``.
The hyperparameters maximize the evidence ``p(y; gamma, sigma^2)`` by EM.

All algebra runs through the scaled matrix
``K = I + G^(1/2) A' S^-1 A G^(1/2)`` (``G = Gamma``, ``S = Sigma``) on the
active columns, which stays well conditioned as ``gamma_k -> 0``:

* ``Sigma_w = G^(1/2) K^-1 G^(1/2)`` and ``mu = Sigma_w A' S^-1 y``
* ``log det Sigma_y = log det S + log det K``
* ``y' Sigma_y^-1 y = y' S^-1 y - (A' S^-1 y)' mu``
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np
import scipy.linalg

from ..regression import GroupedRegressionProblem
from .result import SolverResult

__all__ = ["SblConfig", "SblState", "SblCache", "evidence", "posterior", "em_step",
           "init_state", "evidence_drops", "solve_sbl"]

LOG2PI = np.log(2.0 * np.pi)


@dataclass
class SblConfig:
    """EM settings.

    ``prune_rel`` is the numerical pruning threshold relative to the largest
    ``gamma`` (a group with ``gamma_k < prune_rel * max(gamma)`` is removed
    during EM); set it to 0 to disable pruning. After EM has converged, every
    group whose removal lowers the log evidence by less than ``select_nats``
    is dropped and EM resumes on the rest, for at most ``max_rounds``
    rounds; ``select_nats=None`` keeps all surviving groups.
    ``sigma2_init`` of ``None`` means ``sigma2_scale * var(y^[l])`` per
    experiment (``sigma2_scale`` when that variance is zero).
    """

    gamma_init: float = 1.0
    sigma2_init: Optional[object] = None
    sigma2_scale: float = 0.1
    max_iter: int = 2000
    tol: float = 1e-6
    prune_rel: float = 1e-8
    select_nats: Optional[float] = 3.0
    max_rounds: int = 10
    sigma2_floor_rel: float = 1e-12
    estimate_sigma2: bool = True

    def __post_init__(self):
        if self.gamma_init <= 0 or self.sigma2_scale <= 0 or self.tol <= 0 or self.max_iter < 1:
            raise ValueError("SBL settings must be positive")
        if self.prune_rel < 0:
            raise ValueError("prune_rel must be nonnegative")
        if self.select_nats is not None and self.select_nats < 0:
            raise ValueError("select_nats must be nonnegative")


class SblCache:
    """Per-experiment Gram blocks, so no EM step touches the raw rows."""

    def __init__(self, problem: GroupedRegressionProblem):
        self.problem = problem
        self.G, self.b, self.yy, self.N = [], [], [], []
        for l in range(len(problem.row_ranges)):
            rows = problem.experiment_rows(l)
            Al, yl = problem.A[rows], problem.y[rows]
            self.G.append(Al.T @ Al)
            self.b.append(Al.T @ yl)
            self.yy.append(float(yl @ yl))
            self.N.append(yl.size)
        self.G = np.array(self.G)
        self.b = np.array(self.b)
        self.yy = np.array(self.yy)
        self.N = np.array(self.N)
        self.group_of_col = problem.group_index()
        self.group_size = problem.rho_S

    def weighted(self, sigma2: np.ndarray):
        w = 1.0 / sigma2
        return (np.tensordot(w, self.G, axes=1), w @ self.b, float(w @ self.yy))


@dataclass
class _Core:
    cols: np.ndarray
    mu: np.ndarray
    Sw: np.ndarray
    logdet: float
    quad: float
    n_rows: int

    @property
    def log_evidence(self) -> float:
        return -0.5 * (self.n_rows * LOG2PI + self.logdet + self.quad)


def _core(cache: SblCache, gamma: np.ndarray, sigma2: np.ndarray) -> _Core:
    gamma = np.asarray(gamma, dtype=float)
    sigma2 = np.asarray(sigma2, dtype=float)
    if np.any(gamma < 0) or np.any(sigma2 <= 0):
        raise ValueError("gamma must be nonnegative and sigma^2 positive")
    gcol = gamma[cache.group_of_col]
    cols = np.flatnonzero(gcol > 0)
    Gs, bs, yq = cache.weighted(sigma2)
    logdet_S = float(np.sum(cache.N * np.log(sigma2)))
    n_rows = int(cache.N.sum())
    if cols.size == 0:
        return _Core(cols, np.zeros(0), np.zeros((0, 0)), logdet_S, yq, n_rows)
    g = np.sqrt(gcol[cols])
    K = g[:, None] * Gs[np.ix_(cols, cols)] * g[None, :]
    K[np.diag_indices_from(K)] += 1.0
    try:
        c, low = scipy.linalg.cho_factor(K, lower=True)
    except np.linalg.LinAlgError:
        cond = np.linalg.cond(K)
        raise np.linalg.LinAlgError(f"evidence matrix not positive definite (cond {cond:.3e})")
    Kinv = scipy.linalg.cho_solve((c, low), np.eye(cols.size))
    Sw = g[:, None] * Kinv * g[None, :]
    Sw = 0.5 * (Sw + Sw.T)
    mu = Sw @ bs[cols]
    logdet_K = 2.0 * float(np.sum(np.log(np.diag(c))))
    return _Core(cols, mu, Sw, logdet_S + logdet_K, yq - float(bs[cols] @ mu), n_rows)


def _check(problem, gamma, sigma2):
    gamma = np.asarray(gamma, dtype=float).reshape(-1)
    sigma2 = np.asarray(sigma2, dtype=float).reshape(-1)
    if gamma.size == 1:
        gamma = np.full(problem.M, gamma[0])
    if sigma2.size == 1:
        sigma2 = np.full(len(problem.row_ranges), sigma2[0])
    if gamma.size != problem.M or sigma2.size != len(problem.row_ranges):
        raise ValueError("gamma needs one entry per group and sigma2 one per experiment")
    return gamma, sigma2


def evidence(problem: GroupedRegressionProblem, gamma, sigma2,
             cache: Optional[SblCache] = None) -> float:
    """Log marginal likelihood ``log N(y; 0, Sigma + A Gamma A')``.

    ``gamma`` has one entry per large group (zero means the group is out of
    the model); ``sigma2`` has one entry per experiment.
    """
    gamma, sigma2 = _check(problem, gamma, sigma2)
    return _core(cache or SblCache(problem), gamma, sigma2).log_evidence


def posterior(problem: GroupedRegressionProblem, gamma, sigma2,
              cache: Optional[SblCache] = None):
    """Posterior mean and covariance of ``w`` over all columns.

    Columns of groups with ``gamma_k = 0`` have zero mean and zero
    covariance rows.
    """
    gamma, sigma2 = _check(problem, gamma, sigma2)
    core = _core(cache or SblCache(problem), gamma, sigma2)
    n = problem.n_cols
    mu = np.zeros(n)
    Sw = np.zeros((n, n))
    mu[core.cols] = core.mu
    Sw[np.ix_(core.cols, core.cols)] = core.Sw
    return mu, Sw


@dataclass
class SblState:
    """EM iterate: hyperparameters plus the posterior they imply."""

    active: np.ndarray
    gamma: np.ndarray
    sigma2: np.ndarray
    core: _Core
    evidence_trace: list = field(default_factory=list)
    pruned_at: dict = field(default_factory=dict)
    prune_events: list = field(default_factory=list)
    iteration: int = 0
    last_change: float = np.inf


def init_state(problem: GroupedRegressionProblem, cfg: SblConfig,
               cache: Optional[SblCache] = None) -> SblState:
    cache = cache or SblCache(problem)
    gamma = np.full(problem.M, cfg.gamma_init)
    if cfg.sigma2_init is None:
        # a constant response carries no scale information; fall back to 1
        var = [np.var(problem.y[problem.experiment_rows(l)]) for l in range(len(cache.N))]
        sigma2 = cfg.sigma2_scale * np.array([v if v > 0 else 1.0 for v in var])
    else:
        sigma2 = _check(problem, gamma, cfg.sigma2_init)[1].copy()
    core = _core(cache, gamma, sigma2)
    return SblState(np.ones(problem.M, dtype=bool), gamma, sigma2, core, [core.log_evidence])


def em_step(state: SblState, problem: GroupedRegressionProblem, cfg: SblConfig,
            cache: Optional[SblCache] = None) -> SblState:
    """One EM update of ``gamma`` and the per-experiment noise variances.

    ``gamma_k <- mean over the group's columns of mu_i^2 + (Sigma_w)_ii`` and
    ``sigma_l^2 <- (||y^[l] - A^[l] mu||^2 + tr(A^[l] Sigma_w A^[l]')) / N_l``,
    both from the posterior at the current hyperparameters. Groups falling
    under the pruning threshold are then removed.
    """
    cache = cache or SblCache(problem)
    core = state.core
    cols = core.cols
    gamma = np.zeros(problem.M)
    sigma2 = state.sigma2.copy()
    if cols.size:
        second = core.mu ** 2 + np.diag(core.Sw)
        sums = np.bincount(cache.group_of_col[cols], weights=second, minlength=problem.M)
        gamma = np.where(state.active, sums / cache.group_size, 0.0)
    if cfg.estimate_sigma2:
        for l in range(len(cache.N)):
            Gl = cache.G[l][np.ix_(cols, cols)]
            bl = cache.b[l][cols]
            resid = cache.yy[l] - 2.0 * bl @ core.mu + core.mu @ Gl @ core.mu
            trace = float(np.sum(Gl * core.Sw))
            power = cache.yy[l] / cache.N[l]
            floor = cfg.sigma2_floor_rel * (power if power > 0 else 1.0)
            sigma2[l] = max((resid + trace) / cache.N[l], floor)
    active = state.active.copy()
    pruned = dict(state.pruned_at)
    events = list(state.prune_events)
    top = gamma.max() if gamma.size else 0.0
    if cfg.prune_rel > 0:
        kill = active & (gamma < cfg.prune_rel * top)
        if kill.any():
            # pruning is a thresholding step outside EM; keep the evidence of
            # the unpruned EM update so both effects can be told apart
            before = _core(cache, gamma, sigma2).log_evidence
            events.append((state.iteration + 1, before))
        for k in np.flatnonzero(kill):
            pruned[int(k)] = state.iteration + 1
        active &= ~kill
    gamma = np.where(active, gamma, 0.0)
    both = state.active & active
    change = float(np.max(np.abs(gamma[both] - state.gamma[both]) / (1.0 + np.abs(state.gamma[both])),
                          initial=0.0))
    new_core = _core(cache, gamma, sigma2)
    return SblState(active, gamma, sigma2, new_core, state.evidence_trace + [new_core.log_evidence],
                    pruned, events, state.iteration + 1, change)


def evidence_drops(state: SblState, problem: GroupedRegressionProblem,
                   cache: Optional[SblCache] = None) -> np.ndarray:
    """Log-evidence loss from switching each active group off, others fixed.

    Inactive groups get 0. Unlike ``gamma`` itself this does not depend on
    how the regressors are scaled.
    """
    cache = cache or SblCache(problem)
    full = state.core.log_evidence
    drops = np.zeros(problem.M)
    for k in np.flatnonzero(state.active):
        g = state.gamma.copy()
        g[k] = 0.0
        drops[k] = full - _core(cache, g, state.sigma2).log_evidence
    return drops


def _deactivate(state: SblState, kill: np.ndarray, cache: SblCache) -> SblState:
    pruned = dict(state.pruned_at)
    for k in np.flatnonzero(kill):
        pruned[int(k)] = state.iteration
    active = state.active & ~kill
    gamma = np.where(active, state.gamma, 0.0)
    core = _core(cache, gamma, state.sigma2)
    events = state.prune_events + [(state.iteration, state.core.log_evidence)]
    trace = state.evidence_trace[:-1] + [core.log_evidence]
    return SblState(active, gamma, state.sigma2, core, trace, pruned, events, state.iteration, np.inf)


def solve_sbl(problem: GroupedRegressionProblem, cfg: Optional[SblConfig] = None,
              callback=None) -> SolverResult:
    """EM until the relative ``gamma`` change is below ``tol``, then evidence-based selection.

    ``w = mu`` at the final hyperparameters, with exact zeros on removed
    groups. The evidence trace is non-decreasing between removals; each
    removal is listed in ``prune_events`` with the evidence just before it.
    """
    cfg = cfg or SblConfig()
    cache = SblCache(problem)
    state = init_state(problem, cfg, cache)
    converged = False
    rounds = 0
    selected_out = []
    while True:
        converged = False
        while state.iteration < cfg.max_iter:
            state = em_step(state, problem, cfg, cache)
            if callback is not None:
                callback(state)
            if not state.active.any() or state.last_change < cfg.tol:
                converged = True
                break
        if cfg.select_nats is None or not state.active.any() or rounds >= cfg.max_rounds:
            break
        weak = state.active & (evidence_drops(state, problem, cache) < cfg.select_nats)
        if not weak.any():
            break
        selected_out += [int(k) for k in np.flatnonzero(weak)]
        state = _deactivate(state, weak, cache)
        rounds += 1
        if state.iteration >= cfg.max_iter:
            break
    w = np.zeros(problem.n_cols)
    w[state.core.cols] = state.core.mu
    starts = np.concatenate([[0], np.cumsum(problem.rho_S)[:-1]])
    norms = np.sqrt(np.add.reduceat(w * w, starts))
    info = {"sigma2_per_experiment": state.sigma2, "evidence_trace": state.evidence_trace,
            "gamma": state.gamma, "pruned_at_iteration": {str(k): v for k, v in state.pruned_at.items()},
            "prune_events": [[i, e] for i, e in state.prune_events],
            "removed_by_evidence": selected_out, "selection_rounds": rounds}
    return SolverResult("sbl", w, norms, state.active.copy(), state.iteration, converged,
                        [], [], [], info)
