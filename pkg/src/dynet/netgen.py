"""Random stable sparse networks and their simulation.

Discrete-time ARX networks are built on a random Boolean structure made of a
forward chain ``y_1 -> y_2 -> ... -> y_p``, extra feed-forward arcs and a few
feedback arcs. Feedback gains are chosen one loop at a time, innermost first,
by the small-gain test on the H-infinity norm of each loop, and the final network is
checked through the zeros of ``det(I - Q)``.

Continuous-time systems are sparse Hurwitz state-space models simulated by
Euler-Maruyama and sampled at a multiple of their fastest mode.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .lti import Polynomial, TransferFunction, hinf_norm
from .network import ArxNetworkModel, BooleanNetwork, StateSpaceModel, arx_to_dsf, dsf_is_stable
from .regression import ExperimentData

__all__ = [
    "GenConfig",
    "GeneratedBenchmarkCase",
    "GenerationError",
    "random_boolean_structure",
    "random_stable_poly",
    "random_arc_polynomials",
    "feedback_gain",
    "stabilize_network",
    "generate_case",
    "simulate_arx",
    "make_replica",
    "random_ct_system",
    "sampling_frequency",
    "simulate_ct",
    "splitmix64",
]

SAFETY = 0.9
MAX_ATTEMPTS = 20


class GenerationError(RuntimeError):
    """Raised when no stable model is found within the attempt budget."""


def splitmix64(seed: int, index: int) -> int:
    """Derive an independent 64-bit seed for stream ``index``."""
    mask = (1 << 64) - 1
    z = (seed + (index + 1) * 0x9E3779B97F4A7C15) & mask
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & mask
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & mask
    return z ^ (z >> 31)


@dataclass
class GenConfig:
    """Knobs for random ARX network cases.

    Every node gets its own input (``u_i -> y_i``), so ``m = p``. Arc transfer
    functions ``By_ij / A_i`` are rescaled to a random peak gain drawn from
    ``arc_gain``; feedback arcs are afterwards scaled down by the small-gain
    rule when needed.
    """

    p: int = 10
    density: float = 0.2
    order: int = 2
    pole_radius: float = 0.9
    max_feedback: int = 3
    snr_db: float = 10.0
    L: int = 2
    n_samples: int = 500
    perturbation: float = 0.1
    arc_gain: tuple = (0.5, 1.0)
    input_gain: tuple = (0.5, 1.0)
    feedback_bound: str = "exact"
    seed: int = 0

    def __post_init__(self):
        if not 0 < self.density < 1:
            raise ValueError("density must lie in (0, 1)")
        if not 0 < self.pole_radius < 1:
            raise ValueError("pole radius cap must lie in (0, 1)")
        if self.p < 1 or self.order < 1 or self.L < 1:
            raise ValueError("p, order and L must be positive")
        if not 0 <= self.perturbation < 1:
            raise ValueError("perturbation must lie in [0, 1)")
        if math.isnan(self.snr_db):
            raise ValueError("snr_db must be a number or inf")

    @property
    def n_arcs(self) -> int:
        return int(math.floor(self.density * self.p ** 2 + 1e-9))


@dataclass
class GeneratedBenchmarkCase:
    truth: BooleanNetwork
    models: list
    data: list
    seed: int
    snr_realized: list = field(default_factory=list)
    attempts: int = 1

    @property
    def L(self) -> int:
        return len(self.models)


# ---------------------------------------------------------------- structure

def _laminar(iv, others) -> bool:
    a, b = iv
    for c, d in others:
        disjoint = b < c or d < a
        nested = (c <= a and b <= d) or (a <= c and d <= b)
        if not (disjoint or nested) or (a, b) == (c, d):
            return False
    return True


def random_boolean_structure(p: int, density: float, max_feedback: int,
                             rng: np.random.Generator, n_feedback: Optional[int] = None,
                             m: Optional[int] = None) -> BooleanNetwork:
    """Forward chain, random feed-forward arcs and at most ``max_feedback`` feedback arcs.

    A feedback arc ``y_j -> y_i`` (``j > i``) closes loops through every
    forward path from ``y_i`` to ``y_j``, all of which stay on nodes
    ``i..j``. Requiring these index intervals to be nested or disjoint keeps
    the loops nested or non-touching. Inputs are one per node unless ``m=0``.
    """
    n_arcs = int(math.floor(density * p * p + 1e-9))
    if n_arcs < p - 1:
        raise ValueError(f"density {density} leaves room for {n_arcs} arcs but the chain "
                         f"needs {p - 1}")
    m = p if m is None else m
    chain = {(k - 1, k) for k in range(1, p)}
    extra = n_arcs - len(chain)
    lower = [(j, i) for i in range(p) for j in range(i - 1)]  # j < i - 1
    upper = [(j, i) for i in range(p) for j in range(i + 1, p)]
    if n_feedback is None:
        hi = min(max_feedback, extra, len(upper))
        n_feedback = int(rng.integers(1, hi + 1)) if hi >= 1 else 0
    if n_feedback > max_feedback:
        raise ValueError("n_feedback exceeds max_feedback")
    if extra - n_feedback > len(lower):
        raise ValueError(f"density {density} is infeasible for p={p}")

    feedback = []
    order = rng.permutation(len(upper))
    for idx in order:
        if len(feedback) == n_feedback:
            break
        j, i = upper[idx]
        if _laminar((i, j), [(b, a) for a, b in feedback]):
            feedback.append((j, i))
    if len(feedback) < n_feedback:
        raise ValueError("could not place the requested feedback arcs")
    ff = [lower[k] for k in rng.choice(len(lower), extra - n_feedback, replace=False)] \
        if extra - n_feedback > 0 else []
    yy = chain | set(feedback) | set(ff)
    uy = {(k, k) for k in range(min(m, p))}
    return BooleanNetwork(p, m, frozenset(yy), frozenset(uy))


# ---------------------------------------------------------------- polynomials

def random_stable_poly(degree: int, radius: float, rng: np.random.Generator) -> np.ndarray:
    """Monic ``1 + c1 q^-1 + ...`` with roots uniform in the disk ``|z| < radius``.

    Complex roots come in conjugate pairs; the choice between a pair and two
    real roots is a fair coin.
    """
    roots = []
    while len(roots) < degree:
        if degree - len(roots) >= 2 and rng.random() < 0.5:
            r = radius * np.sqrt(rng.random())
            th = rng.uniform(0.0, np.pi)
            roots += [r * np.exp(1j * th), r * np.exp(-1j * th)]
        else:
            roots.append(rng.uniform(-radius, radius))
    return Polynomial.from_roots(roots).coeffs


def _numerator(order: int, radius: float, rng) -> np.ndarray:
    # q^-1 times a stable monic factor, so the arc starts at lag 1
    return np.concatenate([[0.0], random_stable_poly(order - 1, radius, rng)]) if order > 1 \
        else np.array([0.0, 1.0])


def random_arc_polynomials(structure: BooleanNetwork, cfg: GenConfig, rng: np.random.Generator):
    """Random stable ``A_i`` and arc numerators scaled to random peak gains."""
    p, m = structure.p, structure.m
    A = [random_stable_poly(cfg.order, cfg.pole_radius, rng) for _ in range(p)]
    By = [[None] * p for _ in range(p)]
    Bu = [[None] * m for _ in range(p)]
    for j, i in sorted(structure.yy):
        b = _numerator(cfg.order, cfg.pole_radius, rng)
        g = hinf_norm(TransferFunction(b, A[i]))
        By[i][j] = b * rng.choice([-1.0, 1.0]) * rng.uniform(*cfg.arc_gain) / g
    for k, i in sorted(structure.uy):
        b = _numerator(cfg.order, cfg.pole_radius, rng)
        g = hinf_norm(TransferFunction(b, A[i]))
        Bu[i][k] = b * rng.choice([-1.0, 1.0]) * rng.uniform(*cfg.input_gain) / g
    return A, By, Bu


# ---------------------------------------------------------------- stabilization

def feedback_gain(forward_bound: float, feedback_norm: float, safety: float = SAFETY) -> float:
    """Small-gain scale for a feedback arc: ``safety / (||T|| * ||G_fb||)``."""
    if forward_bound <= 0 or feedback_norm <= 0:
        return 1.0
    return safety / (forward_bound * feedback_norm)


def _path_bounds(N: np.ndarray) -> np.ndarray:
    # entry [a, b] bounds the peak gain from a signal injected at y_b to y_a:
    # sum of N^k (series: products, parallel: sums, closed loops: geometric series)
    return np.linalg.inv(np.eye(N.shape[0]) - N)


def _q_response(A: list, By: list, z: np.ndarray) -> np.ndarray:
    p = len(A)
    zi = 1.0 / z
    Q = np.zeros((z.size, p, p), dtype=complex)
    for i in range(p):
        den = np.polyval(A[i][::-1], zi)
        for j in range(p):
            if By[i][j] is not None:
                Q[:, i, j] = np.polyval(By[i][j][::-1], zi) / den
    return Q


def _lumped_peak(A: list, By: list, j: int, i: int, z: np.ndarray) -> float:
    # peak over the grid of [(I - Q)^-1]_{j,i}: everything that reaches y_j from y_i
    Q = _q_response(A, By, z)
    e = np.zeros((z.size, len(A), 1))
    e[:, i, 0] = 1.0
    R = np.linalg.solve(np.eye(len(A))[None] - Q, e)
    return float(np.max(np.abs(R[:, j, 0])))


def stabilize_network(structure: BooleanNetwork, A: list, By: list, Bu: list,
                      safety: float = SAFETY, bound: str = "exact",
                      grid_size: int = 4096) -> ArxNetworkModel:
    """Scale the feedback arcs so that every loop passes the small-gain test.

    Feedback arcs are inserted one at a time, the innermost (shortest index
    span) first. For arc ``y_j -> y_i`` with gain ``G_fb`` the loop it
    closes has forward part ``T = [(I - Q)^-1]_{j,i}`` computed on the
    network tuned so far, and the arc is scaled by
    ``min(1, safety / (||T|| ||G_fb||))``.

    ``bound="exact"`` takes ``||T||`` as the peak of the lumped response on a
    ``grid_size`` frequency grid. ``bound="path"`` instead uses the
    Mason-style bound ``[(I - N)^-1]_{j,i}`` with
    ``N[i, j] = ||By_ij / A_i||_inf``, which never underestimates but can
    shrink long loops by orders of magnitude.
    """
    if bound not in ("exact", "path"):
        raise ValueError(f"unknown bound {bound!r}")
    p = structure.p
    By = [[None if b is None else np.array(b, dtype=float) for b in row] for row in By]
    norms = np.zeros((p, p))
    for j, i in structure.yy:
        norms[i, j] = hinf_norm(TransferFunction(By[i][j], A[i]))
    fb = sorted([(j, i) for j, i in structure.yy if j > i], key=lambda a: (a[0] - a[1], a))
    N = np.where(np.triu(np.ones((p, p)), 1) > 0, 0.0, norms)
    pending = {(j, i): By[i][j] for j, i in fb}
    for j, i in fb:
        By[i][j] = None
    z = np.exp(1j * np.linspace(0.0, np.pi, grid_size))
    for j, i in fb:
        if bound == "exact":
            T = _lumped_peak(A, By, j, i, z)
        else:
            T = _path_bounds(N)[j, i]
        g = min(1.0, feedback_gain(T, norms[i, j], safety))
        By[i][j] = pending[(j, i)] * g
        N[i, j] = norms[i, j] * g
    return ArxNetworkModel(A, By, Bu)


def _model_ok(model: ArxNetworkModel) -> bool:
    return dsf_is_stable(arx_to_dsf(model))


def generate_case(cfg: GenConfig, seed: Optional[int] = None,
                  structure: Optional[BooleanNetwork] = None) -> GeneratedBenchmarkCase:
    """Structure, base model, ``L`` perturbed replica and their simulated data."""
    seed = cfg.seed if seed is None else seed
    rng = np.random.default_rng(seed)
    base = None
    for attempt in range(1, MAX_ATTEMPTS + 1):
        truth = structure or random_boolean_structure(cfg.p, cfg.density, cfg.max_feedback, rng)
        A, By, Bu = random_arc_polynomials(truth, cfg, rng)
        model = stabilize_network(truth, A, By, Bu, bound=cfg.feedback_bound)
        if _model_ok(model):
            base = model
            break
    if base is None:
        raise GenerationError(f"no stable network after {MAX_ATTEMPTS} attempts (seed {seed})")
    models = make_replica(base, cfg.perturbation, cfg.L, rng)
    data, snr = [], []
    for mdl in models:
        u = rng.standard_normal((cfg.n_samples, mdl.m))
        d, realized = simulate_arx(mdl, u, cfg.snr_db, rng, return_snr=True)
        data.append(d)
        snr.append(realized)
    return GeneratedBenchmarkCase(truth, models, data, seed, snr, attempt)


# ---------------------------------------------------------------- simulation

def _run_arx(Phi: np.ndarray, Psi: np.ndarray, u: np.ndarray, e: np.ndarray) -> np.ndarray:
    """``y(t) = sum_k Phi_k y(t-k) + Psi_k u(t-k) + e(t)`` from rest.

    ``e`` is ``(N, p)`` or ``(N, p, r)`` for ``r`` noise channels run at once;
    the input drive is added to every channel.
    """
    n = Phi.shape[0]
    N = e.shape[0]
    drive = np.array(e, dtype=float)
    if u.shape[1]:
        ud = np.zeros((N, Phi.shape[1]))
        for k in range(1, min(n, N - 1) + 1):
            ud[k:] += u[:-k] @ Psi[k - 1].T
        drive += ud if e.ndim == 2 else ud[:, :, None]
    y = np.zeros_like(drive)
    for t in range(N):
        acc = drive[t]
        for k in range(1, min(n, t) + 1):
            acc = acc + Phi[k - 1] @ y[t - k]
        y[t] = acc
    return y


def simulate_arx(model: ArxNetworkModel, u: np.ndarray, snr_db: float,
                 rng: np.random.Generator, return_snr: bool = False, dt: float = 1.0):
    """Simulate the ARX network driven by ``u`` and white Gaussian ``e``.

    Noise enters every equation (``A_i y_i = ... + e_i``). Its per-output
    variances are set so that, for every output, the variance of the
    noiseless trajectory over the variance of the noise-driven part equals
    ``10^(snr_db/10)`` on this realization. The noise-driven part is linear
    in the standard deviations, so they are found by a fixed-point iteration
    over the responses to each noise channel.
    """
    u = np.asarray(u, dtype=float).reshape(u.shape[0], -1)
    if model.C is not None:
        raise ValueError("only ARX (C = 1) models can be simulated")
    Phi, Psi = model.lag_matrices()
    p = model.p
    N = u.shape[0]
    y0 = _run_arx(Phi, Psi, u, np.zeros((N, p)))
    if not np.all(np.isfinite(y0)) or np.max(np.abs(y0), initial=0.0) > 1e12:
        raise GenerationError("simulation diverged; the model is not stable")
    if np.isinf(snr_db) and snr_db > 0:
        data = ExperimentData(y0, u, dt)
        return (data, [math.inf] * p) if return_snr else data
    xi = rng.standard_normal((N, p))
    # response of every output to unit-scale noise on every channel: (N, p, p)
    E = np.zeros((N, p, p))
    E[:, np.arange(p), np.arange(p)] = xi
    R = _run_arx(Phi, Psi, np.zeros((N, 0)), E)
    Rc = R - R.mean(axis=0)
    C = np.einsum("tij,tik->ijk", Rc, Rc) / N       # C[i]: channel covariance at output i
    target = y0.var(axis=0) / 10.0 ** (snr_db / 10.0)
    sigma = np.sqrt(np.maximum(target, 0.0) / np.maximum(np.einsum("iii->i", C), 1e-300))
    for _ in range(200):
        v = np.einsum("j,ijk,k->i", sigma, C, sigma)
        new = sigma * np.sqrt(np.where(v > 0, target / v, 1.0))
        if np.allclose(new, sigma, rtol=1e-12, atol=0.0):
            sigma = new
            break
        sigma = new
    y = y0 + R @ sigma
    if not np.all(np.isfinite(y)):
        raise GenerationError("simulation diverged")
    nv = (y - y0).var(axis=0)
    realized = [float(10 * np.log10(a / b)) if b > 0 else math.inf
                for a, b in zip(y0.var(axis=0), nv)]
    data = ExperimentData(y, u, dt)
    return (data, realized) if return_snr else data


def make_replica(model: ArxNetworkModel, perturbation: float, L: int,
                 rng: np.random.Generator) -> list:
    """``L`` copies with every nonzero coefficient scaled by ``1 + delta``.

    ``delta`` is uniform on ``[-perturbation, perturbation]``, drawn per
    coefficient; the leading 1 of each ``A_i`` is kept so the copies stay
    monic. Unstable draws are redrawn up to 20 times.
    """
    if not 0 <= perturbation < 1:
        raise ValueError("perturbation must lie in [0, 1)")

    def jitter(c, keep_first=False):
        if c is None:
            return None
        d = rng.uniform(-perturbation, perturbation, c.size)
        if keep_first:
            d[0] = 0.0
        return c * (1.0 + d)

    out = []
    for _ in range(L):
        for _attempt in range(MAX_ATTEMPTS):
            cand = ArxNetworkModel([jitter(a, True) for a in model.A],
                                   [[jitter(b) for b in row] for row in model.By],
                                   [[jitter(b) for b in row] for row in model.Bu])
            if perturbation == 0 or _model_ok(cand):
                out.append(cand)
                break
        else:
            raise GenerationError("could not draw a stable replicum")
    return out


# ---------------------------------------------------------------- continuous time

def random_ct_system(n: int, p: int, density: float, rng: np.random.Generator,
                     input_state: Optional[int] = None) -> StateSpaceModel:
    """Sparse Hurwitz ``A`` with a filled superdiagonal, ``B`` a unit column, ``C = [I 0]``.

    Each diagonal entry is more negative than minus the absolute sum of its
    row's off-diagonal entries, so every Gershgorin disk lies in the open
    left half-plane.
    """
    if n < p:
        raise ValueError("need n >= p")
    Amat = np.zeros((n, n))
    mask = rng.random((n, n)) < density
    np.fill_diagonal(mask, False)
    vals = rng.uniform(0.5, 1.5, (n, n)) * rng.choice([-1.0, 1.0], (n, n))
    Amat[mask] = vals[mask]
    for i in range(n - 1):
        Amat[i, i + 1] = rng.uniform(0.5, 1.5) * rng.choice([-1.0, 1.0])
    off = np.abs(Amat).sum(axis=1)
    Amat[np.diag_indices(n)] = -(off + rng.uniform(0.2, 1.0, n))
    B = np.zeros((n, 1))
    B[rng.integers(n) if input_state is None else input_state, 0] = 1.0
    C = np.hstack([np.eye(p), np.zeros((p, n - p))])
    return StateSpaceModel(Amat, B, C, continuous=True)


def sampling_frequency(ss: StateSpaceModel, fs_multiplier: float = 40.0) -> float:
    """``fs_multiplier * (max|Im eig| + max|Re eig|) / (2 pi)``."""
    ev = np.linalg.eigvals(ss.A)
    return fs_multiplier * (np.max(np.abs(ev.imag)) + np.max(np.abs(ev.real))) / (2 * np.pi)


def simulate_ct(ss: StateSpaceModel, step_amplitude: float = 1.0, step_time: float = 0.0,
                process_noise_std: float = 0.0, fs_multiplier: float = 40.0, T: float = 10.0,
                rng: Optional[np.random.Generator] = None, substeps: int = 100,
                fs: Optional[float] = None) -> ExperimentData:
    """Euler-Maruyama integration of ``dx = (Ax + Bu) dt + sigma dW`` from ``x = 0``.

    The input is a step of ``step_amplitude`` switched on at ``step_time``
    on every input channel. Outputs ``Cx + Du`` are recorded every
    ``substeps`` integration steps, i.e. at ``fs`` (default from
    :func:`sampling_frequency`).
    """
    if T <= 0:
        raise ValueError("T must be positive")
    rng = rng or np.random.default_rng()
    fs = sampling_frequency(ss, fs_multiplier) if fs is None else fs
    h = 1.0 / (substeps * fs)
    n_out = int(np.floor(T * fs)) + 1
    x = np.zeros(ss.n)
    Y = np.zeros((n_out, ss.p))
    U = np.zeros((n_out, ss.m))
    F = np.eye(ss.n) + h * ss.A
    sq = np.sqrt(h) * process_noise_std
    t = 0.0
    for k in range(n_out):
        u = np.full(ss.m, step_amplitude if t >= step_time else 0.0)
        Y[k] = ss.C @ x + ss.D @ u
        U[k] = u
        if k == n_out - 1:
            break
        if sq > 0:
            noise = rng.standard_normal((substeps, ss.n)) * sq
        for s in range(substeps):
            ts = t + s * h
            us = np.full(ss.m, step_amplitude if ts >= step_time else 0.0)
            x = F @ x + h * (ss.B @ us)
            if sq > 0:
                x = x + noise[s]
        t = (k + 1) / fs
        if not np.all(np.isfinite(x)) or np.max(np.abs(x)) > 1e12:
            raise GenerationError("continuous-time simulation diverged")
    return ExperimentData(Y, U, 1.0 / fs)
