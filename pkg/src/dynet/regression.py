"""Grouped regression problems built from multi-experiment ARX data.

For output ``y_i`` each experiment contributes a design matrix whose column
blocks are, in order: lags of ``y_1 .. y_p`` (the ``i``-th block holds the
negated lags of ``y_i`` that multiply the ``A_i`` coefficients), then lags of
``u_1 .. u_m``. The block sizes form the order vector ``rho``.

Stacking ``L`` experiments produces the layout used throughout the solvers:
large group ``k`` occupies ``L * rho[k]`` contiguous columns, ordered by
experiment, and the columns of experiment ``l`` are nonzero only on the rows
of experiment ``l``.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

__all__ = [
    "ExperimentData",
    "GroupOrders",
    "GroupedRegressionProblem",
    "build_regressors",
    "stack_experiments",
    "stack_homogeneous",
    "build_problem",
    "block_columns",
    "group_norms",
    "read_experiment_csv",
    "write_experiment_csv",
]


@dataclass
class ExperimentData:
    """One experiment: ``y`` is ``N x p`` and ``u`` is ``N x m`` (rows are samples)."""

    y: np.ndarray
    u: np.ndarray
    dt: float = 1.0

    def __post_init__(self):
        self.y = np.asarray(self.y, dtype=float)
        if self.y.ndim == 1:
            self.y = self.y[:, None]
        u = np.asarray(self.u, dtype=float)
        if u.size == 0:
            u = np.zeros((self.y.shape[0], 0))
        elif u.ndim == 1:
            u = u[:, None]
        self.u = u
        if self.y.shape[0] != self.u.shape[0]:
            raise ValueError(f"y has {self.y.shape[0]} samples but u has {self.u.shape[0]}")
        if self.y.shape[0] < 1:
            raise ValueError("an experiment needs at least one sample")
        if not (np.all(np.isfinite(self.y)) and np.all(np.isfinite(self.u))):
            raise ValueError("experiment data contains non-finite values")

    @property
    def n_samples(self) -> int:
        return self.y.shape[0]

    @property
    def p(self) -> int:
        return self.y.shape[1]

    @property
    def m(self) -> int:
        return self.u.shape[1]

    def head(self, n: int) -> "ExperimentData":
        return ExperimentData(self.y[:n], self.u[:n], self.dt)


@dataclass
class GroupOrders:
    """Lag orders for the regression of output ``i``.

    ``nby[i]`` is ignored; the ``i``-th ``y`` block uses ``na``. ``nc`` is
    carried for ARMAX bookkeeping but regressors for it are never built.
    """

    i: int
    na: int
    nby: Sequence[int]
    nbu: Sequence[int]
    nc: Optional[int] = None

    def __post_init__(self):
        self.nby = [int(v) for v in self.nby]
        self.nbu = [int(v) for v in self.nbu]
        if not 0 <= self.i < len(self.nby):
            raise ValueError("output index out of range")
        orders = [self.na] + [v for j, v in enumerate(self.nby) if j != self.i] + self.nbu
        if self.nc is not None:
            orders.append(self.nc)
        if min(orders) < 1:
            raise ValueError("all orders must be at least 1")

    @classmethod
    def uniform(cls, i: int, p: int, m: int, order: int = 2) -> "GroupOrders":
        return cls(i, order, [order] * p, [order] * m)

    @property
    def p(self) -> int:
        return len(self.nby)

    @property
    def m(self) -> int:
        return len(self.nbu)

    @property
    def rho(self) -> np.ndarray:
        r = [self.na if j == self.i else n for j, n in enumerate(self.nby)] + list(self.nbu)
        if self.nc is not None:
            r.append(self.nc)
        return np.array(r, dtype=int)

    @property
    def M(self) -> int:
        return self.p + self.m + (1 if self.nc is not None else 0)

    @property
    def max_lag(self) -> int:
        return int(self.rho.max())

    def labels(self) -> list:
        lab = [("y", j) for j in range(self.p)] + [("u", k) for k in range(self.m)]
        if self.nc is not None:
            lab.append(("e", self.i))
        return lab


def _lagged(x: np.ndarray, n: int, start: int, stop: int) -> np.ndarray:
    # columns x(t-1), ..., x(t-n) for rows t = start .. stop-1 (0-based samples)
    return np.column_stack([x[start - k: stop - k] for k in range(1, n + 1)])


def build_regressors(data: ExperimentData, i: int, orders: GroupOrders):
    """Design matrix and response for output ``i`` of one experiment.

    Rows are samples ``t = maxlag+1 .. N`` (1-based), i.e. the first
    ``maxlag`` samples only feed the lags.
    """
    if orders.nc is not None:
        raise ValueError("ARMAX noise regressors depend on the unknown parameters; "
                         "only ARX problems (nc=None) can be built for solving")
    if orders.i != i:
        raise ValueError(f"orders were made for output {orders.i}, not {i}")
    if data.p != orders.p or data.m != orders.m:
        raise ValueError("data dimensions do not match the orders")
    N = data.n_samples
    lag = orders.max_lag
    if N <= lag:
        raise ValueError(f"insufficient samples: N={N} but the maximum lag is {lag}")
    blocks = []
    for j in range(data.p):
        if j == i:
            blocks.append(-_lagged(data.y[:, i], orders.na, lag, N))
        else:
            blocks.append(_lagged(data.y[:, j], orders.nby[j], lag, N))
    for k in range(data.m):
        blocks.append(_lagged(data.u[:, k], orders.nbu[k], lag, N))
    return np.hstack(blocks), data.y[lag:, i].copy()


@dataclass
class GroupedRegressionProblem:
    """Stacked multi-experiment regression ``y = A w + xi`` with group layout."""

    A: np.ndarray
    y: np.ndarray
    rho: np.ndarray
    L: int
    output: int = 0
    row_ranges: list = field(default_factory=list)
    labels: Optional[list] = None

    def __post_init__(self):
        self.rho = np.asarray(self.rho, dtype=int)
        if self.A.shape[1] != self.L * int(self.rho.sum()):
            raise ValueError("column count does not match L * sum(rho)")
        if self.A.shape[0] != self.y.shape[0]:
            raise ValueError("design and response row counts differ")
        if not self.row_ranges:
            self.row_ranges = [(0, self.A.shape[0])]

    @property
    def M(self) -> int:
        return self.rho.size

    @property
    def rho_E(self) -> np.ndarray:
        return np.repeat(self.rho, self.L)

    @property
    def rho_S(self) -> np.ndarray:
        return self.L * self.rho

    @property
    def n_cols(self) -> int:
        return self.A.shape[1]

    @property
    def n_rows(self) -> int:
        return self.A.shape[0]

    def group_slices(self) -> list:
        """0-based column slices of the large groups."""
        edges = np.concatenate([[0], np.cumsum(self.rho_S)])
        return [slice(int(a), int(b)) for a, b in zip(edges[:-1], edges[1:])]

    def group_index(self) -> np.ndarray:
        """Large-group id of every column."""
        return np.repeat(np.arange(self.M), self.rho_S)

    def experiment_index(self) -> np.ndarray:
        """Experiment id of every column."""
        return np.concatenate([np.repeat(np.arange(self.L), r) for r in self.rho])

    def experiment_rows(self, l: int) -> slice:
        a, b = self.row_ranges[l]
        return slice(a, b)

    def with_unit_columns(self):
        """Copy with unit-norm columns plus the scales to undo it (``w = w_scaled / scale``)."""
        scale = np.linalg.norm(self.A, axis=0)
        scale[scale == 0] = 1.0
        return GroupedRegressionProblem(self.A / scale, self.y, self.rho, self.L, self.output,
                                        list(self.row_ranges), self.labels), scale


def stack_experiments(problems: Sequence, rho, output: int = 0,
                      labels: Optional[list] = None) -> GroupedRegressionProblem:
    """Combine per-experiment ``(design, response)`` pairs into the grouped layout.

    ``rho`` is the common order vector (a :class:`GroupOrders` is accepted too).
    """
    if isinstance(rho, GroupOrders):
        labels = rho.labels() if labels is None else labels
        output = rho.i
        rho = rho.rho
    rho = np.asarray(rho, dtype=int)
    L = len(problems)
    if L < 1:
        raise ValueError("need at least one experiment")
    width = int(rho.sum())
    for Al, yl in problems:
        if Al.shape[1] != width:
            raise ValueError("experiments have mismatched orders; a common rho is required")
        if Al.shape[0] != len(yl):
            raise ValueError("design/response length mismatch")
    rows = [Al.shape[0] for Al, _ in problems]
    row_edges = np.concatenate([[0], np.cumsum(rows)])
    A = np.zeros((row_edges[-1], L * width))
    col_edges = np.concatenate([[0], np.cumsum(rho)])
    col = 0
    for k in range(rho.size):
        a, b = col_edges[k], col_edges[k + 1]
        for l, (Al, _) in enumerate(problems):
            A[row_edges[l]:row_edges[l + 1], col:col + rho[k]] = Al[:, a:b]
            col += rho[k]
    y = np.concatenate([np.asarray(yl, dtype=float) for _, yl in problems])
    ranges = [(int(row_edges[l]), int(row_edges[l + 1])) for l in range(L)]
    return GroupedRegressionProblem(A, y, rho, L, output, ranges, labels)


def stack_homogeneous(problems: Sequence):
    """Row-concatenate experiments that share one parameter vector."""
    widths = {Al.shape[1] for Al, _ in problems}
    if len(widths) != 1:
        raise ValueError("experiments have mismatched orders")
    return (np.vstack([Al for Al, _ in problems]),
            np.concatenate([np.asarray(yl, dtype=float) for _, yl in problems]))


def build_problem(datasets: Sequence[ExperimentData], i: int,
                  orders: Optional[GroupOrders] = None, order: int = 2) -> GroupedRegressionProblem:
    """Regressors for output ``i`` from every experiment, stacked."""
    if orders is None:
        orders = GroupOrders.uniform(i, datasets[0].p, datasets[0].m, order)
    return stack_experiments([build_regressors(d, i, orders) for d in datasets], orders)


def block_columns(k: int, rho, L: int, large: bool = False) -> range:
    """Columns of small group ``k`` (``w_k'^[l]``) or large group ``k`` (``w_k``).

    Closed-form index arithmetic, 0-based: small group ``k`` belongs to large
    group ``k // L`` and experiment ``k % L``.
    """
    rho = np.asarray(rho, dtype=int)
    M = rho.size
    if large:
        if not 0 <= k < M:
            raise IndexError(f"large group {k} out of range 0..{M - 1}")
        start = L * int(rho[:k].sum())
        return range(start, start + L * int(rho[k]))
    if not 0 <= k < L * M:
        raise IndexError(f"small group {k} out of range 0..{L * M - 1}")
    big, l = divmod(k, L)
    start = L * int(rho[:big].sum()) + l * int(rho[big])
    return range(start, start + int(rho[big]))


def group_norms(w: np.ndarray, problem: GroupedRegressionProblem) -> np.ndarray:
    """l2 norm of every large group of ``w``."""
    w = np.asarray(w, dtype=float)
    if w.shape != (problem.n_cols,):
        raise ValueError(f"weight vector has length {w.size}, expected {problem.n_cols}")
    return np.array([np.linalg.norm(w[s]) for s in problem.group_slices()])


def read_experiment_csv(path, p: Optional[int] = None) -> ExperimentData:
    """Read ``t,y1..yp,u1..um`` with uniform sampling."""
    path = Path(path)
    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise ValueError(f"{path}: empty file") from None
        if not header or header[0] != "t":
            raise ValueError(f"{path}:1: header must start with 't'")
        ycols = [h for h in header[1:] if h.startswith("y")]
        ucols = [h for h in header[1:] if h.startswith("u")]
        if ycols != [f"y{j + 1}" for j in range(len(ycols))] or \
                ucols != [f"u{k + 1}" for k in range(len(ucols))] or \
                header[1:] != ycols + ucols:
            raise ValueError(f"{path}:1: header must be t,y1..yp,u1..um")
        if p is not None and len(ycols) != p:
            raise ValueError(f"{path}:1: expected {p} outputs, found {len(ycols)}")
        rows = []
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(header):
                raise ValueError(f"{path}:{lineno}: expected {len(header)} fields, got {len(row)}")
            try:
                rows.append([float(v) for v in row])
            except ValueError as exc:
                raise ValueError(f"{path}:{lineno}: {exc}") from None
    if not rows:
        raise ValueError(f"{path}: no samples")
    data = np.array(rows)
    t = data[:, 0]
    dt = 1.0
    if t.size > 1:
        steps = np.diff(t)
        dt = float(steps.mean())
        if dt <= 0 or not np.allclose(steps, dt, rtol=1e-6, atol=1e-9 * abs(dt)):
            raise ValueError(f"{path}: sampling is not uniform")
    py = len(ycols)
    return ExperimentData(data[:, 1:1 + py], data[:, 1 + py:], dt)


def write_experiment_csv(path, data: ExperimentData, t0: float = 0.0) -> None:
    header = ["t"] + [f"y{j + 1}" for j in range(data.p)] + [f"u{k + 1}" for k in range(data.m)]
    t = t0 + data.dt * np.arange(data.n_samples)
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for r in range(data.n_samples):
            w.writerow([repr(float(t[r]))] + [repr(float(v)) for v in data.y[r]]
                       + [repr(float(v)) for v in data.u[r]])
