"""Random grouped problems and reference solvers shared by the tests."""

import numpy as np

from dynet.regression import stack_experiments


def random_grouped(rng, n_rows=40, n_cols=60, L=2, M=10, sparsity=0.3, noise=0.1):
    """Stacked problem with ``L`` equal row blocks and ``M`` equal groups."""
    rho = np.full(M, n_cols // (L * M))
    rows = n_rows // L
    w_true = np.zeros(n_cols)
    on = rng.random(M) < sparsity
    on[rng.integers(M)] = True
    parts = []
    for l in range(L):
        A = rng.standard_normal((rows, int(rho.sum())))
        parts.append((A, np.zeros(rows)))
    prob = stack_experiments(parts, rho)
    for k in np.flatnonzero(on):
        sl = prob.group_slices()[k]
        w_true[sl] = rng.standard_normal(sl.stop - sl.start)
    prob.y[:] = prob.A @ w_true + noise * rng.standard_normal(prob.n_rows)
    return prob, w_true


def reference_group_lasso(prob, lam, nu=None):
    """High-accuracy convex reference via cvxpy (interior point)."""
    import cvxpy as cp

    nu = np.ones(prob.M) if nu is None else nu
    w = cp.Variable(prob.n_cols)
    pen = sum(lam * nu[k] * np.sqrt(sl.stop - sl.start) * cp.norm(w[sl.start:sl.stop], 2)
              for k, sl in enumerate(prob.group_slices()))
    obj = cp.Minimize(0.5 * cp.sum_squares(prob.y - prob.A @ w) + pen)
    problem = cp.Problem(obj)
    problem.solve(solver=cp.CLARABEL, tol_gap_abs=1e-8, tol_gap_rel=1e-8,
                  tol_feas=1e-8)
    return np.asarray(w.value), float(problem.value)


def dense_log_evidence(prob, gamma, sigma2, s=None):
    """``log N(y; 0, Sigma + A S Gamma S A')`` straight from the dense covariance."""
    gamma = np.broadcast_to(np.asarray(gamma, float), (prob.M,))
    sigma2 = np.broadcast_to(np.asarray(sigma2, float), (len(prob.row_ranges),))
    s = np.ones(prob.M) if s is None else np.asarray(s, float)
    gcol = (gamma * s)[prob.group_index()]
    noise = np.concatenate([[sigma2[l]] * (b - a) for l, (a, b) in enumerate(prob.row_ranges)])
    Sy = np.diag(noise) + (prob.A * gcol) @ prob.A.T
    sign, logdet = np.linalg.slogdet(Sy)
    assert sign > 0
    quad = prob.y @ np.linalg.solve(Sy, prob.y)
    return -0.5 * (prob.n_rows * np.log(2 * np.pi) + logdet + quad)


def dense_inclusion(prob, gamma, sigma2, prior=0.5):
    """Exact inclusion probabilities by brute force over all ``2^M`` patterns."""
    import itertools

    pats = np.array(list(itertools.product([0, 1], repeat=prob.M)))
    logw = np.array([dense_log_evidence(prob, gamma, sigma2, s)
                     + s.sum() * np.log(prior) + (prob.M - s.sum()) * np.log1p(-prior)
                     for s in pats])
    p = np.exp(logw - logw.max())
    return (p / p.sum()) @ pats


def toy_selection(seed=0, n=30):
    """Three one-column groups: one strong, one weak, one absent."""
    rng = np.random.default_rng(seed)
    A = rng.standard_normal((n, 3))
    y = A @ np.array([1.0, 0.12, 0.0]) + 0.5 * rng.standard_normal(n)
    return stack_experiments([(A, y)], [1, 1, 1])
