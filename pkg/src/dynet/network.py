"""Network model types and the conversions between them.

Index conventions follow the transfer-matrix layout: ``Q[i][j]`` maps node
``y_j`` into node ``y_i``, so a nonzero ``Q[i][j]`` is the arc ``y_j -> y_i``.
Everything is 0-based in Python.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence, Union

import numpy as np
import scipy.linalg

from .lti import Polynomial, TransferFunction, is_stable

__all__ = [
    "BooleanNetwork",
    "ArxNetworkModel",
    "DsfModel",
    "StateSpaceModel",
    "dsf_from_state_space",
    "dsf_response",
    "arx_to_dsf",
    "boolean_structure",
    "dsf_is_stable",
    "polynomial_matrix_det",
]

STRUCTURE_TOL = 1e-8
MAX_HIDDEN_SYMBOLIC = 6


@dataclass(frozen=True)
class BooleanNetwork:
    """Directed graph over outputs ``y`` and inputs ``u``.

    ``yy`` holds ``(j, i)`` pairs for arcs ``y_j -> y_i`` and ``uy`` holds
    ``(k, i)`` pairs for arcs ``u_k -> y_i``.
    """

    p: int
    m: int = 0
    yy: frozenset = field(default_factory=frozenset)
    uy: frozenset = field(default_factory=frozenset)
    ey: Optional[frozenset] = None

    def __post_init__(self):
        object.__setattr__(self, "yy", frozenset((int(j), int(i)) for j, i in self.yy))
        object.__setattr__(self, "uy", frozenset((int(k), int(i)) for k, i in self.uy))
        for j, i in self.yy:
            if j == i:
                raise ValueError(f"self-arc on y_{i} is not allowed (Q_ii = 0)")
            if not (0 <= i < self.p and 0 <= j < self.p):
                raise ValueError(f"arc ({j}, {i}) out of range for p={self.p}")
        for k, i in self.uy:
            if not (0 <= i < self.p and 0 <= k < self.m):
                raise ValueError(f"input arc ({k}, {i}) out of range")

    @property
    def n_arcs(self) -> int:
        return len(self.yy)

    @property
    def density(self) -> float:
        return len(self.yy) / self.p ** 2

    def q_matrix(self) -> np.ndarray:
        """0/1 matrix with ``[i, j] = 1`` iff ``y_j -> y_i``."""
        Q = np.zeros((self.p, self.p), dtype=int)
        for j, i in self.yy:
            Q[i, j] = 1
        return Q

    def p_matrix(self) -> np.ndarray:
        P = np.zeros((self.p, self.m), dtype=int)
        for k, i in self.uy:
            P[i, k] = 1
        return P

    @classmethod
    def from_matrices(cls, Q, P=None) -> "BooleanNetwork":
        Q = np.asarray(Q)
        p = Q.shape[0]
        yy = {(int(j), int(i)) for i, j in zip(*np.nonzero(Q))}
        if P is None:
            return cls(p, 0, frozenset(yy))
        P = np.asarray(P).reshape(p, -1)
        uy = {(int(k), int(i)) for i, k in zip(*np.nonzero(P))}
        return cls(p, P.shape[1], frozenset(yy), frozenset(uy))

    def to_dict(self) -> dict:
        return {"schema": "dynet/v1", "type": "boolean", "p": self.p, "m": self.m,
                "Q": self.q_matrix().tolist(), "P": self.p_matrix().tolist()}

    @classmethod
    def from_dict(cls, d: dict) -> "BooleanNetwork":
        if d.get("type") != "boolean":
            raise ValueError("expected a boolean network document")
        p, m = int(d["p"]), int(d.get("m", 0))
        Q = np.asarray(d["Q"], dtype=int).reshape(p, p)
        P = np.asarray(d.get("P", []), dtype=int).reshape(p, m)
        return cls.from_matrices(Q, P)


def _arr(c) -> Optional[np.ndarray]:
    if c is None:
        return None
    return np.atleast_1d(np.asarray(c, dtype=float))


@dataclass
class ArxNetworkModel:
    """Per-output ARX polynomials ``A_i y_i = sum_j By_ij y_j + sum_k Bu_ik u_k + C_i e_i``.

    Coefficient arrays are constant-first in ``q^-1``. ``A[i]`` and ``C[i]``
    are monic; every ``B`` array has a zero constant term. Absent arcs are
    ``None``.
    """

    A: list
    By: list
    Bu: list
    C: Optional[list] = None

    def __post_init__(self):
        self.A = [_arr(a) for a in self.A]
        p = len(self.A)
        self.By = [[_arr(b) for b in row] for row in self.By]
        self.Bu = [[_arr(b) for b in row] for row in self.Bu]
        if self.C is not None:
            self.C = [_arr(c) for c in self.C]
        if len(self.By) != p or any(len(r) != p for r in self.By):
            raise ValueError("By must be p x p")
        if len(self.Bu) != p or len({len(r) for r in self.Bu}) > 1:
            raise ValueError("Bu must be p x m")
        for i, a in enumerate(self.A):
            if a[0] != 1.0:
                raise ValueError(f"A[{i}] must be monic (constant term 1)")
            if self.By[i][i] is not None and np.any(self.By[i][i] != 0):
                raise ValueError("By diagonal must be empty")
            self.By[i][i] = None
            for b in list(self.By[i]) + list(self.Bu[i]):
                if b is not None and b[0] != 0.0:
                    raise ValueError("B polynomials must start at q^-1 (zero constant term)")
            if self.C is not None and self.C[i][0] != 1.0:
                raise ValueError(f"C[{i}] must be monic")

    @property
    def p(self) -> int:
        return len(self.A)

    @property
    def m(self) -> int:
        return len(self.Bu[0]) if self.Bu else 0

    def na(self, i: int) -> int:
        return self.A[i].size - 1

    def nby(self, i: int, j: int) -> int:
        b = self.By[i][j]
        return 0 if b is None else b.size - 1

    def nbu(self, i: int, k: int) -> int:
        b = self.Bu[i][k]
        return 0 if b is None else b.size - 1

    def max_lag(self) -> int:
        lags = [self.na(i) for i in range(self.p)]
        lags += [self.nby(i, j) for i in range(self.p) for j in range(self.p)]
        lags += [self.nbu(i, k) for i in range(self.p) for k in range(self.m)]
        return max(lags)

    def lag_matrices(self):
        """Return ``(Phi, Psi)`` with ``y(t) = sum_k Phi[k-1] y(t-k) + sum_k Psi[k-1] u(t-k) + e(t)``."""
        n = max(self.max_lag(), 1)
        p, m = self.p, self.m
        Phi = np.zeros((n, p, p))
        Psi = np.zeros((n, p, m))
        for i in range(p):
            a = self.A[i]
            Phi[: a.size - 1, i, i] = -a[1:]
            for j in range(p):
                b = self.By[i][j]
                if b is not None:
                    Phi[: b.size - 1, i, j] = b[1:]
            for k in range(m):
                b = self.Bu[i][k]
                if b is not None:
                    Psi[: b.size - 1, i, k] = b[1:]
        return Phi, Psi

    def coefficient_scale(self) -> float:
        vals = [np.max(np.abs(b)) for row in self.By + self.Bu for b in row if b is not None]
        return max(vals) if vals else 0.0

    def copy(self) -> "ArxNetworkModel":
        cp = lambda c: None if c is None else c.copy()  # noqa: E731
        return ArxNetworkModel([a.copy() for a in self.A],
                               [[cp(b) for b in r] for r in self.By],
                               [[cp(b) for b in r] for r in self.Bu],
                               None if self.C is None else [c.copy() for c in self.C])

    def to_dict(self) -> dict:
        coeffs = {}
        for i in range(self.p):
            coeffs[f"A[{i + 1}]"] = self.A[i].tolist()
            for j in range(self.p):
                if self.By[i][j] is not None:
                    coeffs[f"By[{i + 1}][{j + 1}]"] = self.By[i][j].tolist()
            for k in range(self.m):
                if self.Bu[i][k] is not None:
                    coeffs[f"Bu[{i + 1}][{k + 1}]"] = self.Bu[i][k].tolist()
            if self.C is not None:
                coeffs[f"C[{i + 1}]"] = self.C[i].tolist()
        return {"schema": "dynet/v1", "type": "arx", "p": self.p, "m": self.m,
                "coefficients": coeffs}

    @classmethod
    def from_dict(cls, d: dict) -> "ArxNetworkModel":
        if d.get("type") != "arx":
            raise ValueError("expected an arx model document")
        p, m = int(d["p"]), int(d["m"])
        c = d["coefficients"]
        A = [c[f"A[{i + 1}]"] for i in range(p)]
        By = [[c.get(f"By[{i + 1}][{j + 1}]") for j in range(p)] for i in range(p)]
        Bu = [[c.get(f"Bu[{i + 1}][{k + 1}]") for k in range(m)] for i in range(p)]
        C = None
        if "C[1]" in c:
            C = [c[f"C[{i + 1}]"] for i in range(p)]
        return cls(A, By, Bu, C)


@dataclass
class DsfModel:
    """Dynamical structure function ``y = Q y + P u + H e`` with SISO entries."""

    Q: list
    P: list
    H: list
    continuous: bool = False
    diagonal_H: bool = False

    def __post_init__(self):
        p = len(self.Q)
        for i in range(p):
            if not self.Q[i][i].is_zero():
                raise ValueError(f"Q[{i}][{i}] must be identically zero")
            for j in range(p):
                if i != j and not self.Q[i][j].is_zero() and not self.Q[i][j].is_strictly_proper():
                    raise ValueError(f"Q[{i}][{j}] must be strictly proper")
        for row in self.P + self.H:
            for g in row:
                if not g.is_zero() and not g.is_proper():
                    raise ValueError("P and H entries must be proper")
        if self.diagonal_H:
            for i in range(p):
                for l in range(p):
                    if i != l and not self.H[i][l].is_zero():
                        raise ValueError("H flagged diagonal has off-diagonal entries")
                if self.H[i][i].is_zero():
                    raise ValueError("H flagged diagonal is rank deficient")

    @property
    def p(self) -> int:
        return len(self.Q)

    @property
    def m(self) -> int:
        return len(self.P[0]) if self.P else 0

    def response(self, points):
        """Evaluate ``(Q, P, H)`` at each point; arrays shaped ``(npts, rows, cols)``."""
        pts = np.atleast_1d(np.asarray(points, dtype=complex))

        def ev(M):
            if not M or not M[0]:
                return np.zeros((pts.size, len(M), 0), dtype=complex)
            return np.stack([np.stack([g(pts) for g in row], axis=-1) for row in M], axis=-2)

        return ev(self.Q), ev(self.P), ev(self.H)

    def to_dict(self) -> dict:
        def tf(g):
            return {"num": g.num.coeffs.tolist(), "den": g.den.coeffs.tolist()}

        return {"schema": "dynet/v1", "type": "dsf", "p": self.p, "m": self.m,
                "continuous": self.continuous,
                "Q": [[tf(g) for g in r] for r in self.Q],
                "P": [[tf(g) for g in r] for r in self.P],
                "H": [[tf(g) for g in r] for r in self.H]}

    @classmethod
    def from_dict(cls, d: dict) -> "DsfModel":
        ct = bool(d.get("continuous", False))

        def tf(e):
            return TransferFunction(e["num"], e["den"], continuous=ct)

        return cls([[tf(e) for e in r] for r in d["Q"]],
                   [[tf(e) for e in r] for r in d["P"]],
                   [[tf(e) for e in r] for r in d["H"]], continuous=ct)


@dataclass
class StateSpaceModel:
    """Innovations-form state space ``x+ = Ax + Bu + Ke``, ``y = Cx + Du + e``."""

    A: np.ndarray
    B: np.ndarray
    C: np.ndarray
    D: Optional[np.ndarray] = None
    K: Optional[np.ndarray] = None
    R: Optional[np.ndarray] = None
    m0: Optional[np.ndarray] = None
    R0: Optional[np.ndarray] = None
    continuous: bool = False

    def __post_init__(self):
        self.A = np.atleast_2d(np.asarray(self.A, dtype=float))
        n = self.A.shape[0]
        self.B = np.asarray(self.B, dtype=float).reshape(n, -1)
        self.C = np.atleast_2d(np.asarray(self.C, dtype=float))
        p, m = self.C.shape[0], self.B.shape[1]
        if self.C.shape[1] != n:
            raise ValueError("C must have n columns")
        if n < p:
            raise ValueError("state dimension must be at least the output dimension")
        self.D = np.zeros((p, m)) if self.D is None else np.asarray(self.D, float).reshape(p, m)
        self.K = np.zeros((n, p)) if self.K is None else np.asarray(self.K, float).reshape(n, p)
        self.R = np.eye(p) if self.R is None else np.asarray(self.R, float)

    @property
    def n(self) -> int:
        return self.A.shape[0]

    @property
    def p(self) -> int:
        return self.C.shape[0]

    @property
    def m(self) -> int:
        return self.B.shape[1]

    def transfer(self, points) -> np.ndarray:
        """``C (zI - A)^-1 B + D`` at each point, shape ``(npts, p, m)``."""
        pts = np.atleast_1d(np.asarray(points, dtype=complex))
        I = np.eye(self.n)
        return np.stack([self.C @ np.linalg.solve(z * I - self.A, self.B) + self.D for z in pts])

    def to_dict(self) -> dict:
        return {"schema": "dynet/v1", "type": "ss", "p": self.p, "m": self.m, "n": self.n,
                "continuous": self.continuous, "A": self.A.tolist(), "B": self.B.tolist(),
                "C": self.C.tolist(), "D": self.D.tolist(), "K": self.K.tolist()}

    @classmethod
    def from_dict(cls, d: dict) -> "StateSpaceModel":
        return cls(np.array(d["A"]), np.array(d["B"]), np.array(d["C"]),
                   np.array(d["D"]), np.array(d["K"]), continuous=bool(d.get("continuous")))


def _transform(ss: StateSpaceModel, basis: Optional[np.ndarray]):
    C = ss.C
    p, n = C.shape
    if np.linalg.matrix_rank(C) < p:
        raise ValueError("C is rank deficient; the full-row-rank construction does not apply "
                         "(a general-C procedure is required)")
    E = scipy.linalg.null_space(C) if basis is None else np.asarray(basis, float).reshape(n, n - p)
    T = np.vstack([C, E.T])
    Tinv = np.linalg.inv(T)
    Ah = T @ ss.A @ Tinv
    Bh = T @ ss.B
    Kh = T @ ss.K
    return (Ah[:p, :p], Ah[:p, p:], Ah[p:, :p], Ah[p:, p:],
            Bh[:p], Bh[p:], Kh[:p], Kh[p:])


def dsf_from_state_space(ss: StateSpaceModel, basis: Optional[np.ndarray] = None,
                         max_hidden: int = MAX_HIDDEN_SYMBOLIC) -> DsfModel:
    """DSF of a state-space model with full-row-rank ``C``.

    The hidden block ``(qI - A22)^-1`` is expanded through its polynomial
    adjugate, so all entries of row ``i`` share one denominator ``d_i``. For
    more than ``max_hidden`` hidden states use :func:`dsf_response`, which
    evaluates the same quantities numerically.
    """
    A11, A12, A21, A22, B1, B2, K1, K2 = _transform(ss, basis)
    p, m = ss.p, ss.m
    k = A22.shape[0]
    if k > max_hidden:
        raise ValueError(f"{k} hidden states exceed the symbolic limit {max_hidden}; "
                         "use dsf_response for numeric evaluation")
    ct = ss.continuous
    # characteristic coefficients [1, a1, ..., ak] and adjugate terms B_j
    a = np.real(np.poly(A22)) if k else np.ones(1)
    adj = [np.eye(k)]
    for j in range(1, k):
        adj.append(A22 @ adj[-1] + a[j] * np.eye(k))

    def numer(X1, X2):
        # numerator of X1 + A12 (zI - A22)^-1 X2 over the characteristic polynomial
        out = np.zeros((k + 1,) + X1.shape)
        if ct:
            # chi(s) constant-first is a reversed; adj(sI - A22) = sum_j s^(k-1-j) B_j
            chi = a[::-1]
            for d in range(k + 1):
                out[d] = X1 * chi[d]
            for j in range(k):
                out[k - 1 - j] += A12 @ adj[j] @ X2
        else:
            # det(I - x A22) = sum a_j x^j; (qI - A22)^-1 = x adj(I - x A22) / det
            for d in range(k + 1):
                out[d] = X1 * a[d]
            for j in range(k):
                out[j + 1] += A12 @ adj[j] @ X2
        return out

    NW = numer(A11, A21)
    NV = numer(B1, B2)
    NL = numer(K1, K2)
    base = a[::-1] if ct else a

    def poly(c):
        return Polynomial(c, ct)

    def lift(c):
        # multiply by x for the discrete form; identity for continuous
        return c if ct else np.concatenate([[0.0], c])

    den = []
    for i in range(p):
        if ct:
            d = np.concatenate([[0.0], base]) - np.concatenate([NW[:, i, i], [0.0]])
        else:
            d = np.concatenate([base, [0.0]]) - np.concatenate([[0.0], NW[:, i, i]])
        den.append(poly(d))

    def tf(num, i):
        return TransferFunction(poly(num), den[i])

    zero = TransferFunction.zero(ct)
    Q = [[zero if i == j else tf(lift(NW[:, i, j]), i) for j in range(p)] for i in range(p)]
    P, H = [], []
    for i in range(p):
        di = den[i].coeffs
        prow = []
        for kk in range(m):
            c = np.zeros(k + 2)
            nv = lift(NV[:, i, kk])
            c[: nv.size] += nv
            c[: di.size] += ss.D[i, kk] * di
            for j in range(p):
                if j != i and ss.D[j, kk] != 0.0:
                    nq = lift(NW[:, i, j])
                    c[: nq.size] -= ss.D[j, kk] * nq
            prow.append(tf(c, i))
        P.append(prow)
        hrow = []
        for l in range(p):
            c = np.zeros(k + 2)
            nl = lift(NL[:, i, l])
            c[: nl.size] += nl
            if l == i:
                c[: di.size] += di
            else:
                nq = lift(NW[:, i, l])
                c[: nq.size] -= nq
            hrow.append(tf(c, i))
        H.append(hrow)
    return DsfModel(Q, P, H, continuous=ct)


def dsf_response(ss: StateSpaceModel, points, basis: Optional[np.ndarray] = None):
    """Numeric ``(Q, P, H)`` of the state-space DSF at each point.

    Same construction as :func:`dsf_from_state_space` without forming
    polynomials; usable for any number of hidden states.
    """
    A11, A12, A21, A22, B1, B2, K1, K2 = _transform(ss, basis)
    p = ss.p
    I = np.eye(p)
    out_q, out_p, out_h = [], [], []
    for z in np.atleast_1d(np.asarray(points, dtype=complex)):
        if A22.size:
            R = np.linalg.solve(z * np.eye(A22.shape[0]) - A22, np.hstack([A21, B2, K2]))
            W = A11 + A12 @ R[:, :p]
            V = B1 + A12 @ R[:, p:p + ss.m]
            L = K1 + A12 @ R[:, p + ss.m:]
        else:
            W, V, L = A11.astype(complex), B1.astype(complex), K1.astype(complex)
        dw = np.diag(W)
        inv = 1.0 / (z - dw)
        Qh = inv[:, None] * (W - np.diag(dw))
        Ph = inv[:, None] * V
        Hh = inv[:, None] * L
        out_q.append(Qh)
        out_p.append(Ph + (I - Qh) @ ss.D)
        out_h.append(Hh + I - Qh)
    return np.array(out_q), np.array(out_p), np.array(out_h)


def arx_to_dsf(arx: ArxNetworkModel) -> DsfModel:
    """``Q = A^-1 By``, ``P = A^-1 Bu``, ``H = A^-1 C`` entrywise."""
    p, m = arx.p, arx.m
    zero = TransferFunction.zero()
    Q, P, H = [], [], []
    for i in range(p):
        Ai = Polynomial(arx.A[i])
        if Ai.is_zero():
            raise ValueError(f"A[{i}] is zero")
        Q.append([zero if arx.By[i][j] is None else TransferFunction(arx.By[i][j], Ai)
                  for j in range(p)])
        P.append([zero if arx.Bu[i][k] is None else TransferFunction(arx.Bu[i][k], Ai)
                  for k in range(m)])
        ci = np.ones(1) if arx.C is None else arx.C[i]
        H.append([TransferFunction(ci, Ai) if l == i else zero for l in range(p)])
    return DsfModel(Q, P, H, diagonal_H=True)


def boolean_structure(model: Union[DsfModel, ArxNetworkModel, StateSpaceModel],
                      tol: float = STRUCTURE_TOL, relative: bool = True) -> BooleanNetwork:
    """Arcs wherever a transfer function (or polynomial block) is nonzero.

    With ``relative=True`` the threshold is ``tol`` times the largest
    coefficient magnitude found among the model's arc blocks.
    """
    if isinstance(model, ArxNetworkModel):
        p, m = model.p, model.m
        scale = model.coefficient_scale() if relative else 1.0
        thr = tol * scale

        def nz(b):
            return b is not None and bool(np.any(np.abs(b) > thr))

        yy = {(j, i) for i in range(p) for j in range(p) if j != i and nz(model.By[i][j])}
        uy = {(k, i) for i in range(p) for k in range(m) if nz(model.Bu[i][k])}
        return BooleanNetwork(p, m, frozenset(yy), frozenset(uy))

    if isinstance(model, StateSpaceModel):
        k = model.n - model.p
        if k <= MAX_HIDDEN_SYMBOLIC:
            return boolean_structure(dsf_from_state_space(model), tol, relative)
        # generic evaluation points: exact cancellation is the only way to get zero
        rng = np.random.default_rng(0)
        if model.continuous:
            radius = 1.0 + np.max(np.abs(np.linalg.eigvals(model.A)))
            pts = 1j * rng.uniform(0.1, 3.0, 4) * radius
        else:
            pts = np.exp(1j * rng.uniform(0.3, 2.8, 4))
        Qz, Pz, _ = dsf_response(model, pts)
        mq, mp = np.max(np.abs(Qz), axis=0), np.max(np.abs(Pz), axis=0)
        scale = max(mq.max(initial=0.0), mp.max(initial=0.0)) if relative else 1.0
        thr = tol * scale
        Qb = (mq > thr).astype(int)
        np.fill_diagonal(Qb, 0)
        return BooleanNetwork.from_matrices(Qb, (mp > thr).astype(int))

    p, m = model.p, model.m
    nums = [g.num.coeffs for row in model.Q + model.P for g in row]
    scale = max(float(np.max(np.abs(c))) for c in nums) if (relative and nums) else 1.0
    thr = tol * scale
    yy = {(j, i) for i in range(p) for j in range(p)
          if j != i and not model.Q[i][j].is_zero(thr)}
    uy = {(k, i) for i in range(p) for k in range(m) if not model.P[i][k].is_zero(thr)}
    return BooleanNetwork(p, m, frozenset(yy), frozenset(uy))


def polynomial_matrix_det(entries: Sequence[Sequence[Polynomial]]) -> Polynomial:
    """Determinant of a square matrix of polynomials.

    Evaluated at roots of unity of the indeterminate and interpolated back
    with an FFT, which is well conditioned for moderate degrees.
    """
    p = len(entries)
    ct = entries[0][0].continuous
    bound = sum(max(e.degree for e in row) for row in entries)
    n = 1
    while n < bound + 1:
        n *= 2
    x = np.exp(2j * np.pi * np.arange(n) / n)
    V = np.empty((n, p, p), dtype=complex)
    for i, row in enumerate(entries):
        for j, e in enumerate(row):
            V[:, i, j] = np.polyval(e.coeffs[::-1], x)
    vals = np.linalg.det(V)
    c = np.real(np.fft.fft(vals) / n)[: bound + 1]
    scale = np.max(np.abs(c)) if c.size else 0.0
    if scale > 0:
        c = np.where(np.abs(c) < 1e-10 * scale, 0.0, c)
    return Polynomial(c, ct)


def _row_cleared(Q: list, ct: bool) -> list:
    p = len(Q)
    rows = []
    for i in range(p):
        dens = []
        for j in range(p):
            g = Q[i][j]
            if j != i and not g.is_zero():
                if not any(np.array_equal(g.den.coeffs, d.coeffs) for d in dens):
                    dens.append(g.den)
        common = Polynomial.one(ct)
        for d in dens:
            common = common * d
        row = []
        for j in range(p):
            if j == i:
                row.append(common)
                continue
            g = Q[i][j]
            if g.is_zero():
                row.append(Polynomial.zero(ct))
                continue
            mult = Polynomial.one(ct)
            skipped = False
            for d in dens:
                if not skipped and np.array_equal(d.coeffs, g.den.coeffs):
                    skipped = True
                    continue
                mult = mult * d
            row.append(-(g.num * mult))
        rows.append(row)
    return rows


def dsf_is_stable(dsf: DsfModel) -> bool:
    """Entrywise stability of ``Q, P, H`` plus stable zeros of ``det(I - Q)``."""
    for row in dsf.Q + dsf.P + dsf.H:
        for g in row:
            if not g.is_zero() and not is_stable(g):
                return False
    det = polynomial_matrix_det(_row_cleared(dsf.Q, dsf.continuous))
    if det.is_zero():
        return False
    if det.degree == 0:
        return True
    r = det.roots()
    if dsf.continuous:
        return bool(np.all(r.real < 0.0))
    return bool(np.all(np.abs(r) < 1.0))
