"""Group selection by Metropolis-Hastings within systematic-scan Gibbs.

The weights are ``w = S theta`` with group indicators ``s_k`` in ``S`` and
``theta ~ N(0, Gamma)``. After integrating ``theta`` out,

    p(s, gamma, sigma^2 | y) ~ p(s) p(gamma) p(sigma^2) N(y; 0, Sigma + A S Gamma S A')

with Bernoulli priors on ``s`` and inverse-Gamma priors on every ``gamma_k``
and ``sigma_l^2``. One sweep updates ``s`` by a single uniformly chosen flip,
then ``gamma`` and ``sigma^2`` by Gaussian random walks; all three moves are
symmetric, so each is accepted with probability
``min(1, posterior ratio)``. Proposals outside the positive orthant have
zero prior density and are always rejected.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.linalg.lapack import dpotrf as _potrf, dtrtrs as _trtrs
from scipy.special import gammaln

from ..regression import GroupedRegressionProblem
from .result import SolverResult

__all__ = ["McmcConfig", "ChainState", "McmcModel", "log_collapsed_posterior", "gibbs_sweep",
           "solve_mcmc", "enumerate_inclusion"]


@dataclass
class McmcConfig:
    """Chain settings.

    ``gamma_mode`` is ``"scalar"`` (``Gamma = gamma I``, the default) or
    ``"vector"`` (one ``gamma_k`` per group). With a per-group ``gamma`` the
    variance of an excluded group only sees its vague prior, so switching
    that group on costs little and spurious inclusions become common; the
    shared scalar keeps an Occam penalty on every extra group. Random-walk standard deviations of
    ``None`` start at 0.1 times the initial value of each coordinate; with
    ``adapt`` they are rescaled during burn-in towards 20-50 % acceptance
    and frozen afterwards, so the retained chain uses fixed symmetric
    proposals. ``fix_hyperparameters`` skips the ``gamma`` and ``sigma^2``
    moves.
    """

    n_iter: int = 20_000
    burn_in: int = 5_000
    thin: int = 5
    prior_inclusion: float = 0.5
    a: float = 1e-4
    b: float = 1e-4
    c: float = 1e-4
    d: float = 1e-4
    gamma_mode: str = "scalar"
    gamma_init: float = 1.0
    sigma2_init: Optional[object] = None
    sigma2_scale: float = 0.1
    s_init: Optional[object] = None
    rw_gamma_std: Optional[object] = None
    rw_sigma2_std: Optional[object] = None
    adapt: bool = True
    adapt_every: int = 100
    fix_hyperparameters: bool = False
    threshold: float = 0.5
    seed: int = 0

    def __post_init__(self):
        if not self.n_iter > self.burn_in >= 0:
            raise ValueError("chain length must exceed burn-in")
        if self.thin < 1:
            raise ValueError("thin must be at least 1")
        if min(self.a, self.b, self.c, self.d) <= 0 or self.gamma_init <= 0:
            raise ValueError("hyperparameters must be positive")
        if not 0 < self.prior_inclusion < 1:
            raise ValueError("prior inclusion probability must lie in (0, 1)")
        if self.gamma_mode not in ("vector", "scalar"):
            raise ValueError(f"unknown gamma_mode {self.gamma_mode!r}")


@dataclass
class ChainState:
    s: np.ndarray
    gamma: np.ndarray
    sigma2: np.ndarray
    log_post: float = -np.inf


def _log_invgamma(x: np.ndarray, shape: float, rate: float) -> float:
    x = np.asarray(x, dtype=float)
    if np.any(x <= 0):
        return -np.inf
    return float(np.sum(shape * np.log(rate) - gammaln(shape) - (shape + 1.0) * np.log(x) - rate / x))


class McmcModel:
    """Collapsed posterior for one problem with Gram blocks precomputed.

    The precision-weighted Gram ``A' Sigma^-1 A`` is cached per ``sigma^2``
    value and the column layout per indicator pattern, so one evaluation
    costs a single Cholesky factorization on the active columns.
    """

    def __init__(self, problem: GroupedRegressionProblem, cfg: McmcConfig):
        self.problem = problem
        self.cfg = cfg
        self.M = problem.M
        self.L = len(problem.row_ranges)
        self.G, self.b, self.yy, self.N = [], [], [], []
        for l in range(self.L):
            rows = problem.experiment_rows(l)
            Al, yl = problem.A[rows], problem.y[rows]
            self.G.append(Al.T @ Al)
            self.b.append(Al.T @ yl)
            self.yy.append(float(yl @ yl))
            self.N.append(yl.size)
        self.G, self.b = np.array(self.G), np.array(self.b)
        self.yy, self.N = np.array(self.yy), np.array(self.N)
        self.cols_of = [np.arange(sl.start, sl.stop) for sl in problem.group_slices()]
        self.group_of_col = problem.group_index()
        self._const = -0.5 * float(self.N.sum()) * np.log(2.0 * np.pi)
        self._log_p = np.log(cfg.prior_inclusion)
        self._log_q = np.log1p(-cfg.prior_inclusion)
        self._ig_gamma = cfg.c * np.log(cfg.d) - gammaln(cfg.c)
        self._ig_sigma = cfg.a * np.log(cfg.b) - gammaln(cfg.a)
        self._sigma_cache: dict = {}
        self._layout_cache: dict = {}

    def _weighted(self, sigma2):
        sigma2 = np.asarray(sigma2, dtype=float).reshape(-1)
        if sigma2.size == 1 and self.L > 1:
            sigma2 = np.full(self.L, sigma2[0])
        key = sigma2.tobytes()
        hit = self._sigma_cache.get(key)
        if hit is None:
            w = 1.0 / sigma2
            Gs = self.G[0] * w[0]
            for l in range(1, self.L):
                Gs = Gs + self.G[l] * w[l]
            hit = (Gs, w @ self.b, float(w @ self.yy), float(self.N @ np.log(sigma2)))
            if len(self._sigma_cache) > 8:
                self._sigma_cache.clear()
            self._sigma_cache[key] = hit
        return hit

    def _layout(self, s):
        key = s.tobytes()
        hit = self._layout_cache.get(key)
        if hit is None:
            on = np.flatnonzero(s)
            if on.size:
                cols = np.concatenate([self.cols_of[k] for k in on])
                hit = (cols, self.group_of_col[cols], np.ix_(cols, cols))
            else:
                hit = (None, None, None)
            if len(self._layout_cache) > 4096:
                self._layout_cache.clear()
            self._layout_cache[key] = hit
        return hit

    def gamma_per_group(self, gamma: np.ndarray) -> np.ndarray:
        gamma = np.asarray(gamma, dtype=float).reshape(-1)
        return np.full(self.M, gamma[0]) if gamma.size == 1 else gamma

    def log_likelihood(self, s, gamma, sigma2) -> float:
        """``log N(y; 0, Sigma + A S Gamma S A')``."""
        Gs, bs, yq, logdet_S = self._weighted(sigma2)
        cols, grp, ix = self._layout(np.asarray(s, dtype=np.int8))
        if cols is None:
            return self._const - 0.5 * (logdet_S + yq)
        gamma = np.asarray(gamma, dtype=float).reshape(-1)
        g = np.sqrt(gamma[0] if gamma.size == 1 else gamma[grp])
        if np.ndim(g) == 0:
            K = (g * g) * Gs[ix]
            bt = g * bs[cols]
        else:
            K = g[:, None] * Gs[ix] * g[None, :]
            bt = g * bs[cols]
        K.flat[::K.shape[0] + 1] += 1.0
        c, info = _potrf(K, lower=1, clean=0)
        if info != 0:
            raise np.linalg.LinAlgError(
                f"collapsed covariance not positive definite (cond {np.linalg.cond(K):.3e})")
        z, _ = _trtrs(c, bt, lower=1)
        logdet_K = 2.0 * float(np.log(c.diagonal()).sum())
        return self._const - 0.5 * (logdet_S + logdet_K + yq - float(z @ z))

    def log_prior(self, s, gamma, sigma2) -> float:
        cfg = self.cfg
        gamma = np.asarray(gamma, dtype=float)
        sigma2 = np.asarray(sigma2, dtype=float)
        if gamma.min() <= 0 or sigma2.min() <= 0:
            return -np.inf
        n_on = int(np.count_nonzero(s))
        lp = n_on * self._log_p + (self.M - n_on) * self._log_q
        lp += gamma.size * self._ig_gamma - float((cfg.c + 1.0) * np.log(gamma).sum() + cfg.d * (1.0 / gamma).sum())
        lp += sigma2.size * self._ig_sigma - float((cfg.a + 1.0) * np.log(sigma2).sum() + cfg.b * (1.0 / sigma2).sum())
        return lp

    def log_posterior(self, s, gamma, sigma2) -> float:
        lp = self.log_prior(s, gamma, sigma2)
        if not np.isfinite(lp):
            return -np.inf
        return lp + self.log_likelihood(s, gamma, sigma2)


def log_collapsed_posterior(state: ChainState, problem: GroupedRegressionProblem,
                            cfg: Optional[McmcConfig] = None,
                            model: Optional[McmcModel] = None) -> float:
    """Unnormalized ``log p(s, gamma, sigma^2 | y)``; ``-inf`` off the prior support."""
    model = model or McmcModel(problem, cfg or McmcConfig())
    return model.log_posterior(state.s, state.gamma, state.sigma2)


@dataclass
class _Tuning:
    gamma_std: np.ndarray
    sigma2_std: np.ndarray
    accepted: dict = field(default_factory=lambda: {"s": 0, "gamma": 0, "sigma2": 0})
    proposed: dict = field(default_factory=lambda: {"s": 0, "gamma": 0, "sigma2": 0})


def _default_tuning(state: ChainState, cfg: McmcConfig) -> _Tuning:
    def std(v, ref):
        if v is None:
            return 0.1 * np.abs(ref)
        return np.broadcast_to(np.asarray(v, dtype=float), ref.shape).copy()
    return _Tuning(std(cfg.rw_gamma_std, state.gamma), std(cfg.rw_sigma2_std, state.sigma2))


def gibbs_sweep(state: ChainState, problem: GroupedRegressionProblem, cfg: McmcConfig,
                rng: np.random.Generator, model: Optional[McmcModel] = None,
                tuning: Optional[_Tuning] = None) -> ChainState:
    """One systematic scan: indicator flip, then ``gamma``, then ``sigma^2``.

    Without ``tuning`` the random-walk standard deviations are taken from
    ``cfg`` (or 0.1 times the current values).
    """
    model = model or McmcModel(problem, cfg)
    tuning = tuning or _default_tuning(state, cfg)
    s, gamma, sigma2, lp = state.s, state.gamma, state.sigma2, state.log_post
    if not np.isfinite(lp):
        lp = model.log_posterior(s, gamma, sigma2)
    # indicator: flip one uniformly chosen group
    k = rng.integers(model.M)
    s_new = s.copy()
    s_new[k] = 1 - s_new[k]
    lp_new = model.log_posterior(s_new, gamma, sigma2)
    tuning.proposed["s"] += 1
    if np.log(rng.random()) <= lp_new - lp:
        s, lp = s_new, lp_new
        tuning.accepted["s"] += 1
    if cfg.fix_hyperparameters:
        return ChainState(s, gamma, sigma2, lp)
    # gamma random walk
    g_new = gamma + tuning.gamma_std * rng.standard_normal(gamma.shape)
    tuning.proposed["gamma"] += 1
    lp_new = model.log_posterior(s, g_new, sigma2) if np.all(g_new > 0) else -np.inf
    if np.log(rng.random()) <= lp_new - lp:
        gamma, lp = g_new, lp_new
        tuning.accepted["gamma"] += 1
    # noise-variance random walk
    v_new = sigma2 + tuning.sigma2_std * rng.standard_normal(sigma2.shape)
    tuning.proposed["sigma2"] += 1
    lp_new = model.log_posterior(s, gamma, v_new) if np.all(v_new > 0) else -np.inf
    if np.log(rng.random()) <= lp_new - lp:
        sigma2, lp = v_new, lp_new
        tuning.accepted["sigma2"] += 1
    return ChainState(s, gamma, sigma2, lp)


def _initial_state(problem, model, cfg):
    n_gamma = 1 if cfg.gamma_mode == "scalar" else problem.M
    gamma = np.full(n_gamma, cfg.gamma_init)
    if cfg.sigma2_init is None:
        var = [np.var(problem.y[problem.experiment_rows(l)]) for l in range(model.L)]
        sigma2 = cfg.sigma2_scale * np.array([v if v > 0 else 1.0 for v in var])
    else:
        sigma2 = np.asarray(cfg.sigma2_init, dtype=float).reshape(-1)
        if sigma2.size == 1:
            sigma2 = np.full(model.L, sigma2[0])
    if cfg.s_init is None:
        s = np.zeros(problem.M, dtype=np.int8)
    else:
        s = np.asarray(cfg.s_init, dtype=np.int8).reshape(problem.M).copy()
    if cfg.gamma_mode == "vector" and np.asarray(cfg.gamma_init).size == problem.M:
        gamma = np.asarray(cfg.gamma_init, dtype=float).copy()
    return ChainState(s, gamma, sigma2, model.log_posterior(s, gamma, sigma2))


def _rate(acc, prop):
    return acc / prop if prop else 0.0


def solve_mcmc(problem: GroupedRegressionProblem, cfg: Optional[McmcConfig] = None) -> SolverResult:
    """Posterior inclusion probabilities, then least squares on the selected groups."""
    cfg = cfg or McmcConfig()
    rng = np.random.default_rng(cfg.seed)
    model = McmcModel(problem, cfg)
    state = _initial_state(problem, model, cfg)

    tuning = _default_tuning(state, cfg)
    window = {"gamma": [0, 0], "sigma2": [0, 0]}
    samples = []
    for it in range(cfg.n_iter):
        before = (tuning.accepted["gamma"], tuning.accepted["sigma2"])
        state = gibbs_sweep(state, problem, cfg, rng, model, tuning)
        if cfg.adapt and not cfg.fix_hyperparameters and it < cfg.burn_in:
            window["gamma"][0] += tuning.accepted["gamma"] - before[0]
            window["sigma2"][0] += tuning.accepted["sigma2"] - before[1]
            window["gamma"][1] += 1
            window["sigma2"][1] += 1
            if (it + 1) % cfg.adapt_every == 0:
                for key, attr in (("gamma", "gamma_std"), ("sigma2", "sigma2_std")):
                    r = window[key][0] / max(window[key][1], 1)
                    if r < 0.2:
                        setattr(tuning, attr, getattr(tuning, attr) * 0.7)
                    elif r > 0.5:
                        setattr(tuning, attr, getattr(tuning, attr) * 1.4)
                    window[key] = [0, 0]
            if it + 1 == cfg.burn_in:
                tuning.accepted = {k: 0 for k in tuning.accepted}
                tuning.proposed = {k: 0 for k in tuning.proposed}
        if it >= cfg.burn_in and (it - cfg.burn_in) % cfg.thin == 0:
            samples.append(state.s.copy())
    S = np.array(samples, dtype=float)
    incl = S.mean(axis=0) if S.size else np.zeros(problem.M)
    active = incl > cfg.threshold
    w, rank_deficient = _restricted_lstsq(problem, active)
    starts = np.concatenate([[0], np.cumsum(problem.rho_S)[:-1]])
    norms = np.sqrt(np.add.reduceat(w * w, starts))
    rates = {k: _rate(tuning.accepted[k], tuning.proposed[k]) for k in tuning.accepted}
    info = {"inclusion_probabilities": incl, "acceptance_rates": rates,
            "chain_length": cfg.n_iter, "n_samples": len(samples), "burn_in": cfg.burn_in,
            "thin": cfg.thin, "final_gamma": state.gamma, "final_sigma2": state.sigma2,
            "rank_deficient": rank_deficient, "model_size_trace_mean": float(S.sum(axis=1).mean())
            if S.size else 0.0}
    return SolverResult("mcmc", w, norms, active, cfg.n_iter, True, [], [], [], info)


def _restricted_lstsq(problem: GroupedRegressionProblem, active: np.ndarray):
    w = np.zeros(problem.n_cols)
    if not active.any():
        return w, False
    cols = np.concatenate([np.arange(sl.start, sl.stop)
                           for k, sl in enumerate(problem.group_slices()) if active[k]])
    sol, _, rank, _ = np.linalg.lstsq(problem.A[:, cols], problem.y, rcond=None)
    w[cols] = sol
    return w, bool(rank < cols.size)


def enumerate_inclusion(problem: GroupedRegressionProblem, gamma, sigma2,
                        prior_inclusion: float = 0.5) -> np.ndarray:
    """Exact inclusion probabilities at fixed hyperparameters by visiting all ``2^M`` patterns."""
    M = problem.M
    if M > 16:
        raise ValueError("enumeration is limited to M <= 16 groups")
    model = McmcModel(problem, McmcConfig(prior_inclusion=prior_inclusion))
    gamma = np.asarray(gamma, dtype=float)
    sigma2 = np.asarray(sigma2, dtype=float)
    pats = np.array(list(itertools.product([0, 1], repeat=M)), dtype=np.int8)
    logw = np.array([model.log_likelihood(s, gamma, sigma2)
                     + np.sum(np.where(s > 0, np.log(prior_inclusion), np.log1p(-prior_inclusion)))
                     for s in pats])
    p = np.exp(logw - logw.max())
    p /= p.sum()
    return p @ pats
