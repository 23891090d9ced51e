"""Group lasso and iterative reweighted l1 via ADMM or accelerated proximal gradient.

The objective is

    1/2 ||y - A w||^2 + lam * sum_k nu_k sqrt(rho^S_k) ||w_k||_2

with ``nu_k = 1`` for the plain group lasso. The 1/2 on the loss is the
ADMM convention; the same minimizer is obtained for
``||y - A w||^2 + (2 lam) * sum_k ...``, so a penalty quoted for the
un-halved loss must be halved before it is passed here.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Optional

import numpy as np
import scipy.linalg

from ..regression import GroupedRegressionProblem
from .result import SolverResult

__all__ = [
    "L1Config",
    "prox_group",
    "prox_blocks",
    "QuadraticProx",
    "group_lasso_objective",
    "kkt_residual",
    "solve_group_lasso",
    "solve_irl1",
    "solve_l1",
    "epsilon_schedule",
    "lambda_density_sweep",
]


@dataclass
class L1Config:
    """Settings for :func:`solve_group_lasso` and :func:`solve_irl1`.

    ``zero_threshold`` is relative: a group whose norm is below
    ``zero_threshold * max group norm`` is set exactly to zero.
    """

    lam: float = 0.1
    mode: str = "irl1"
    method: str = "admm"
    eps0: float = 0.1
    eps_factor: float = 10.0
    eps_floor: float = 1e-8
    adaptive_eps: bool = False
    outer_max_iter: int = 10
    outer_tol: float = 1e-4
    tol: float = 1e-6
    max_iter: int = 10_000
    gamma0: float = 1.0
    beta: float = 0.5
    zero_threshold: float = 1e-5

    def __post_init__(self):
        if not self.lam > 0:
            raise ValueError("lam must be positive")
        if not 0 < self.beta < 1:
            raise ValueError("beta must lie in (0, 1)")
        if not self.eps_floor > 0 or not self.eps0 > 0 or not self.eps_factor > 1:
            raise ValueError("epsilon schedule needs eps0 > 0, eps_floor > 0, eps_factor > 1")
        if self.mode not in ("irl1", "group-lasso"):
            raise ValueError(f"unknown mode {self.mode!r}")
        if self.method not in ("admm", "fista"):
            raise ValueError(f"unknown method {self.method!r}")


def prox_group(v: np.ndarray, tau: float) -> np.ndarray:
    """Block soft threshold ``(1 - tau/||v||)_+ v``."""
    if tau < 0:
        raise ValueError("threshold must be nonnegative")
    v = np.asarray(v, dtype=float)
    nv = np.linalg.norm(v)
    if nv <= tau:
        return np.zeros_like(v)
    return (1.0 - tau / nv) * v


def prox_blocks(v: np.ndarray, starts: np.ndarray, sizes: np.ndarray,
                taus: np.ndarray) -> np.ndarray:
    """:func:`prox_group` applied to every contiguous block at once."""
    norms = np.sqrt(np.add.reduceat(v * v, starts))
    with np.errstate(divide="ignore", invalid="ignore"):
        scale = np.where(norms > taus, 1.0 - taus / norms, 0.0)
    return np.repeat(scale, sizes) * v


class QuadraticProx:
    """``argmin_x 1/2||y - A x||^2 + ||x - v||^2 / (2 gamma)``.

    Equivalently ``(I + gamma A'A)^-1 (gamma A'y + v)``; the Cholesky factor
    is cached and recomputed only when ``gamma`` changes.
    """

    def __init__(self, AtA: np.ndarray, Aty: np.ndarray):
        self.AtA = AtA
        self.Aty = Aty
        self._gamma = None
        self._factor = None
        self.factorizations = 0

    def __call__(self, v: np.ndarray, gamma: float) -> np.ndarray:
        if gamma <= 0:
            raise ValueError("gamma must be positive")
        if gamma != self._gamma:
            M = gamma * self.AtA
            M[np.diag_indices_from(M)] += 1.0
            self._factor = scipy.linalg.cho_factor(M, lower=True)
            self._gamma = gamma
            self.factorizations += 1
        return scipy.linalg.cho_solve(self._factor, gamma * self.Aty + v)


def _layout(problem: GroupedRegressionProblem):
    sizes = problem.rho_S
    starts = np.concatenate([[0], np.cumsum(sizes)[:-1]])
    return starts, sizes, np.sqrt(sizes)


def group_lasso_objective(problem: GroupedRegressionProblem, w: np.ndarray, lam: float,
                          nu: Optional[np.ndarray] = None) -> float:
    starts, sizes, root = _layout(problem)
    nu = np.ones(problem.M) if nu is None else nu
    r = problem.y - problem.A @ w
    norms = np.sqrt(np.add.reduceat(w * w, starts))
    return float(0.5 * r @ r + lam * np.sum(nu * root * norms))


def kkt_residual(problem: GroupedRegressionProblem, w: np.ndarray, lam: float,
                 nu: Optional[np.ndarray] = None) -> float:
    """Largest violation of the group-lasso optimality conditions at ``w``.

    Active groups need ``A_k'(Aw - y) + t_k w_k/||w_k|| = 0`` and zero groups
    need ``||A_k'(Aw - y)|| <= t_k`` with ``t_k = lam nu_k sqrt(rho^S_k)``.
    """
    nu = np.ones(problem.M) if nu is None else nu
    g = problem.A.T @ (problem.A @ w - problem.y)
    worst = 0.0
    for k, sl in enumerate(problem.group_slices()):
        t = lam * nu[k] * np.sqrt(sl.stop - sl.start)
        wk = w[sl]
        nk = np.linalg.norm(wk)
        if nk > 0:
            viol = np.linalg.norm(g[sl] + t * wk / nk)
        else:
            viol = max(0.0, np.linalg.norm(g[sl]) - t)
        worst = max(worst, viol)
    return float(worst)


class _Gram:
    def __init__(self, problem: GroupedRegressionProblem):
        self.AtA = problem.A.T @ problem.A
        self.Aty = problem.A.T @ problem.y


def _admm(gram: _Gram, qprox: QuadraticProx, starts, sizes, taus, cfg: L1Config, state: dict):
    """Scaled-form ADMM with the backtracking step of the reference algorithm.

    ``state`` holds ``w, z, u, gamma`` and is updated in place so outer
    reweighting loops can warm start.
    """
    w, z, u, gamma = state["w"], state["z"], state["u"], state["gamma"]
    n = w.size
    thresh = cfg.tol * np.sqrt(n)
    primal, dual, gammas = [], [], []
    converged = False
    it = 0
    for it in range(1, cfg.max_iter + 1):
        while True:
            w_hat = qprox(z - u, gamma)
            d = w_hat - w
            # f is quadratic, so f(w_hat) <= f(w) + grad'd + ||d||^2/(2 gamma)
            # reduces to d'A'Ad <= ||d||^2/gamma without the cancellation.
            if d @ (gram.AtA @ d) <= (d @ d) / gamma * (1.0 + 1e-12):
                break
            gamma *= cfg.beta
            u = u * cfg.beta  # keep the unscaled dual variable fixed
        w = w_hat
        z_old = z
        z = prox_blocks(w + u, starts, sizes, gamma * taus)
        u = u + w - z
        r = float(np.linalg.norm(w - z))
        s = float(np.linalg.norm(z - z_old) / gamma)
        primal.append(r)
        dual.append(s)
        if not gammas or gammas[-1] != gamma:
            gammas.append(gamma)
        if r < thresh and s < thresh:
            converged = True
            break
    state.update(w=w, z=z, u=u, gamma=gamma)
    return z, it, converged, primal, dual, gammas


def _fista(gram: _Gram, starts, sizes, taus, cfg: L1Config, state: dict):
    """Accelerated proximal gradient with adaptive restart."""
    x = state["z"]
    step = state.get("step")
    if step is None:
        step = 1.0 / max(np.linalg.eigvalsh(gram.AtA)[-1], 1e-300)
        state["step"] = step
    yv, t = x.copy(), 1.0
    thresh = cfg.tol * np.sqrt(x.size)
    primal, dual = [], []
    converged = False
    it = 0
    for it in range(1, cfg.max_iter + 1):
        grad = gram.AtA @ yv - gram.Aty
        x_new = prox_blocks(yv - step * grad, starts, sizes, step * taus)
        # gradient-mapping norm plays the role of the primal residual
        r = float(np.linalg.norm(x_new - yv) / step)
        s = float(np.linalg.norm(x_new - x))
        primal.append(r)
        dual.append(s)
        if (yv - x_new) @ (x_new - x) > 0:
            t = 1.0
        t_new = 0.5 * (1.0 + np.sqrt(1.0 + 4.0 * t * t))
        yv = x_new + ((t - 1.0) / t_new) * (x_new - x)
        x, t = x_new, t_new
        if s < thresh * step and r * step < thresh:
            converged = True
            break
    state.update(w=x, z=x, u=np.zeros_like(x))
    return x, it, converged, primal, dual, [step]


def _finish(problem, w, cfg: L1Config):
    starts, sizes, _ = _layout(problem)
    norms = np.sqrt(np.add.reduceat(w * w, starts))
    top = norms.max() if norms.size else 0.0
    dead = norms <= cfg.zero_threshold * top if top > 0 else np.ones(problem.M, dtype=bool)
    w = w * np.repeat(~dead, sizes)
    norms = np.where(dead, 0.0, norms)
    return w, norms, ~dead


def _new_state(problem, w0=None):
    n = problem.n_cols
    w = np.zeros(n) if w0 is None else np.array(w0, dtype=float)
    return {"w": w, "z": w.copy(), "u": np.zeros(n), "gamma": None}


def _inner(problem, gram, qprox, taus, cfg, state):
    starts, sizes, _ = _layout(problem)
    if cfg.method == "admm":
        if state["gamma"] is None:
            state["gamma"] = cfg.gamma0
        return _admm(gram, qprox, starts, sizes, taus, cfg, state)
    return _fista(gram, starts, sizes, taus, cfg, state)


def solve_group_lasso(problem: GroupedRegressionProblem, cfg: L1Config,
                      nu: Optional[np.ndarray] = None, w0: Optional[np.ndarray] = None) -> SolverResult:
    """Minimize the (optionally weighted) group-lasso objective.

    Returns the sparse iterate; groups under the relative zero threshold are
    zeroed. ``info["gamma_path"]`` lists the step sizes taken by the line
    search (ADMM) or the fixed step (FISTA).
    """
    _, _, root = _layout(problem)
    nu = np.ones(problem.M) if nu is None else np.asarray(nu, dtype=float)
    gram = _Gram(problem)
    qprox = QuadraticProx(gram.AtA, gram.Aty)
    state = _new_state(problem, w0)
    z, it, conv, primal, dual, gammas = _inner(problem, gram, qprox, cfg.lam * nu * root, cfg, state)
    w, norms, active = _finish(problem, z, cfg)
    obj = group_lasso_objective(problem, w, cfg.lam, nu)
    return SolverResult("group-lasso", w, norms, active, it, conv, [obj], primal, dual,
                        {"gamma_path": gammas, "lam": cfg.lam, "solver": cfg.method})


def epsilon_schedule(cfg: L1Config, n: Optional[int] = None) -> list:
    """Decreasing smoothing constants, ``eps0 / factor^k`` clipped at the floor."""
    out, e = [], cfg.eps0
    while True:
        out.append(max(e, cfg.eps_floor))
        if e <= cfg.eps_floor * (1 + 1e-12) or (n is not None and len(out) >= n):
            break
        e /= cfg.eps_factor
    if n is not None:
        out += [cfg.eps_floor] * (n - len(out))
    return out


def solve_irl1(problem: GroupedRegressionProblem, cfg: L1Config) -> SolverResult:
    """Iteratively reweighted group l1.

    The first pass is the unweighted group lasso; later passes use
    ``nu_k = 1/(||w_k|| + eps)`` with ``eps`` walking down the schedule.
    Iteration stops when the relative weight change is below
    ``outer_tol`` once ``eps`` has reached its floor, or after
    ``outer_max_iter`` passes.
    """
    starts, sizes, root = _layout(problem)
    gram = _Gram(problem)
    qprox = QuadraticProx(gram.AtA, gram.Aty)
    state = _new_state(problem)
    eps_list = epsilon_schedule(cfg)
    nu = np.ones(problem.M)
    objective, primal, dual, gammas, eps_used = [], [], [], [], []
    total, all_conv = 0, True
    w_prev = None
    eps = None
    outer = 0
    for outer in range(cfg.outer_max_iter):
        z, it, conv, pr, du, gm = _inner(problem, gram, qprox, cfg.lam * nu * root, cfg, state)
        total += it
        all_conv &= conv
        primal += pr
        dual += du
        gammas += gm
        objective.append(group_lasso_objective(problem, z, cfg.lam, nu))
        norms = np.sqrt(np.add.reduceat(z * z, starts))
        if w_prev is not None:
            change = np.linalg.norm(z - w_prev) / max(np.linalg.norm(w_prev), 1e-300)
            if change < cfg.outer_tol and eps is not None and eps <= cfg.eps_floor:
                break
        w_prev = z.copy()
        if cfg.adaptive_eps:
            # Candes-style: tie eps to the size of the weaker groups
            nz = np.sort(norms)[::-1]
            cand = nz[min(len(nz) - 1, max(1, len(nz) // 2))]
            eps = max(cand, cfg.eps_floor) if eps is None else max(min(eps, cand), cfg.eps_floor)
        else:
            eps = eps_list[min(outer, len(eps_list) - 1)]
        eps_used.append(eps)
        nu = 1.0 / (norms + eps)
    w, norms, active = _finish(problem, state["z"], cfg)
    return SolverResult("irl1", w, norms, active, total, all_conv, objective, primal, dual,
                        {"gamma_path": gammas, "epsilon_trace": eps_used, "outer_iterations": outer + 1,
                         "lam": cfg.lam, "final_nu": nu, "solver": cfg.method})


def solve_l1(problem: GroupedRegressionProblem, cfg: L1Config) -> SolverResult:
    if cfg.mode == "irl1":
        return solve_irl1(problem, cfg)
    return solve_group_lasso(problem, cfg)


def lambda_density_sweep(problem: GroupedRegressionProblem, lams, cfg: Optional[L1Config] = None):
    """Fraction of active groups for each penalty in ``lams`` (log grid helper)."""
    cfg = cfg or L1Config()
    out = []
    for lam in lams:
        res = solve_l1(problem, replace(cfg, lam=float(lam)))
        out.append((float(lam), res.n_active / problem.M))
    return out
