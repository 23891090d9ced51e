"""Polynomials and SISO rational transfer functions.

Coefficients are stored constant-term first. For discrete-time objects the
indeterminate is the backward shift ``q^-1``, so ``[1, -0.5]`` is
``1 - 0.5 q^-1`` and difference equations read straight off the array. For
continuous-time objects the indeterminate is ``s`` and ``[2, 1]`` is ``s + 2``
(reverse the array to get the usual highest-power-first ``numpy`` layout).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable

import numpy as np

__all__ = [
    "Polynomial",
    "TransferFunction",
    "poly_roots",
    "is_stable",
    "hinf_norm",
    "frequency_response",
]

TRIM_RTOL = 1e-12
_GOLDEN = (np.sqrt(5.0) - 1.0) / 2.0


def _trim(c: np.ndarray) -> np.ndarray:
    c = np.atleast_1d(np.asarray(c, dtype=float))
    if c.size == 0:
        return np.zeros(1)
    scale = np.max(np.abs(c))
    if scale == 0.0:
        return np.zeros(1)
    keep = np.nonzero(np.abs(c) >= TRIM_RTOL * scale)[0]
    return c[: keep[-1] + 1].copy()


@dataclass(frozen=True, eq=False)
class Polynomial:
    """Real polynomial in ``q^-1`` (discrete) or ``s`` (continuous)."""

    coeffs: np.ndarray
    continuous: bool = False

    def __post_init__(self):
        object.__setattr__(self, "coeffs", _trim(self.coeffs))

    @classmethod
    def one(cls, continuous: bool = False) -> "Polynomial":
        return cls(np.ones(1), continuous)

    @classmethod
    def zero(cls, continuous: bool = False) -> "Polynomial":
        return cls(np.zeros(1), continuous)

    @classmethod
    def from_roots(cls, roots: Iterable[complex], continuous: bool = False,
                   gain: float = 1.0) -> "Polynomial":
        """Monic polynomial (in ``q`` or ``s``) with the given roots.

        In the discrete convention the result is ``prod(1 - r q^-1)``, i.e.
        constant term one.
        """
        c = np.real_if_close(np.poly(np.asarray(list(roots), dtype=complex)))
        c = np.asarray(np.real(c), dtype=float) * gain
        return cls(c if not continuous else c[::-1], continuous)

    @property
    def degree(self) -> int:
        return self.coeffs.size - 1

    def is_zero(self) -> bool:
        return bool(self.coeffs.size == 1 and self.coeffs[0] == 0.0)

    def low_order(self) -> int:
        """Index of the first nonzero coefficient (the delay, for ``q^-1``)."""
        nz = np.nonzero(self.coeffs)[0]
        return int(nz[0]) if nz.size else 0

    def _check(self, other: "Polynomial"):
        if self.continuous != other.continuous:
            raise ValueError("cannot combine discrete and continuous polynomials")

    def __add__(self, other: "Polynomial") -> "Polynomial":
        self._check(other)
        n = max(self.coeffs.size, other.coeffs.size)
        c = np.zeros(n)
        c[: self.coeffs.size] += self.coeffs
        c[: other.coeffs.size] += other.coeffs
        return Polynomial(c, self.continuous)

    def __neg__(self) -> "Polynomial":
        return Polynomial(-self.coeffs, self.continuous)

    def __sub__(self, other: "Polynomial") -> "Polynomial":
        return self + (-other)

    def __mul__(self, other) -> "Polynomial":
        if isinstance(other, Polynomial):
            self._check(other)
            return Polynomial(np.convolve(self.coeffs, other.coeffs), self.continuous)
        return Polynomial(self.coeffs * float(other), self.continuous)

    __rmul__ = __mul__

    def shift(self, k: int = 1) -> "Polynomial":
        """Multiply by the indeterminate ``k`` times (``q^-k`` or ``s^k``)."""
        return Polynomial(np.concatenate([np.zeros(k), self.coeffs]), self.continuous)

    def __call__(self, z):
        """Evaluate at the value ``z`` of ``q`` (discrete) or ``s``."""
        z = np.asarray(z, dtype=complex)
        if self.continuous:
            return np.polyval(self.coeffs[::-1], z)
        with np.errstate(divide="ignore", invalid="ignore"):
            return np.polyval(self.coeffs[::-1], 1.0 / z)

    def roots(self) -> np.ndarray:
        return poly_roots(self)

    def __repr__(self) -> str:
        kind = "s" if self.continuous else "q^-1"
        return f"Polynomial({np.array2string(self.coeffs, precision=4)}, in {kind})"


def poly_roots(p: Polynomial) -> np.ndarray:
    """Roots of ``p`` viewed as a polynomial in ``q`` (or ``s``).

    A discrete polynomial ``c0 + c1 q^-1 + ... + cn q^-n`` is multiplied by
    ``q^n`` first; leading zeros (pure delays) drop out as roots at infinity.
    """
    if p.is_zero():
        raise ValueError("roots of the zero polynomial are undefined")
    c = p.coeffs[::-1] if p.continuous else p.coeffs
    return np.roots(c)


class TransferFunction:
    """SISO real-rational transfer function ``num/den``."""

    __slots__ = ("num", "den")

    def __init__(self, num, den=None, continuous: bool = False):
        if not isinstance(num, Polynomial):
            num = Polynomial(num, continuous)
        if den is None:
            den = Polynomial.one(num.continuous)
        elif not isinstance(den, Polynomial):
            den = Polynomial(den, num.continuous)
        if num.continuous != den.continuous:
            raise ValueError("numerator and denominator conventions differ")
        if den.is_zero():
            raise ValueError("denominator is identically zero")
        self.num = num
        self.den = den

    @property
    def continuous(self) -> bool:
        return self.num.continuous

    @classmethod
    def zero(cls, continuous: bool = False) -> "TransferFunction":
        return cls(Polynomial.zero(continuous), Polynomial.one(continuous))

    def is_zero(self, tol: float = 0.0) -> bool:
        return bool(np.all(np.abs(self.num.coeffs) <= tol))

    def relative_degree(self) -> int:
        """Degree of ``den`` minus degree of ``num`` as rational functions of q or s."""
        if self.num.is_zero():
            return np.iinfo(np.int32).max
        if self.continuous:
            return self.den.degree - self.num.degree
        return self.num.low_order() - self.den.low_order()

    def is_proper(self) -> bool:
        return self.relative_degree() >= 0

    def is_strictly_proper(self) -> bool:
        return self.relative_degree() >= 1

    def poles(self) -> np.ndarray:
        return poly_roots(self.den)

    def __call__(self, z):
        return frequency_response(self, z)

    def __mul__(self, other) -> "TransferFunction":
        if isinstance(other, TransferFunction):
            return TransferFunction(self.num * other.num, self.den * other.den)
        return TransferFunction(self.num * float(other), self.den)

    __rmul__ = __mul__

    def __add__(self, other: "TransferFunction") -> "TransferFunction":
        if np.array_equal(self.den.coeffs, other.den.coeffs):
            return TransferFunction(self.num + other.num, self.den)
        return TransferFunction(self.num * other.den + other.num * self.den,
                                self.den * other.den)

    def __neg__(self) -> "TransferFunction":
        return TransferFunction(-self.num, self.den)

    def __sub__(self, other: "TransferFunction") -> "TransferFunction":
        return self + (-other)

    def __repr__(self) -> str:
        return f"TransferFunction(num={self.num.coeffs}, den={self.den.coeffs}, " \
               f"continuous={self.continuous})"


def is_stable(g: TransferFunction) -> bool:
    """All poles strictly inside the unit disk (discrete) or left half-plane."""
    if g.den.degree == 0 or g.num.is_zero():
        return True
    r = g.poles()
    if r.size == 0:
        return True
    if g.continuous:
        return bool(np.all(r.real < 0.0))
    return bool(np.all(np.abs(r) < 1.0))


def frequency_response(g: TransferFunction, points) -> np.ndarray:
    """Evaluate ``g`` pointwise at values of ``q`` (or ``s``)."""
    pts = np.asarray(points, dtype=complex)
    num = g.num(pts)
    den = g.den(pts)
    scale = np.max(np.abs(g.den.coeffs))
    bad = np.abs(den) <= 1e-13 * scale
    if np.any(bad):
        where = np.atleast_1d(pts)[np.atleast_1d(bad)][0]
        raise ValueError(f"transfer function evaluated at a pole: z = {where}")
    return num / den


def _golden_max(f, a: float, b: float, tol: float = 1e-10, maxiter: int = 200):
    c = b - _GOLDEN * (b - a)
    d = a + _GOLDEN * (b - a)
    fc, fd = f(c), f(d)
    for _ in range(maxiter):
        if abs(b - a) <= tol * (1.0 + abs(a) + abs(b)):
            break
        if fc > fd:
            b, d, fd = d, c, fc
            c = b - _GOLDEN * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + _GOLDEN * (b - a)
            fd = f(d)
    return max(fc, fd)


def hinf_norm(g: TransferFunction, grid_size: int = 1024) -> float:
    """Peak gain over frequency of a stable transfer function.

    The gain is sampled on ``grid_size`` frequencies (``[0, pi]`` on the unit
    circle, or a log grid on the imaginary axis) and the best sample is
    refined with a golden-section search over its neighbouring interval. The
    value is therefore a lower estimate of the true norm.
    """
    if grid_size < 2:
        raise ValueError("grid_size must be at least 2")
    if not is_stable(g):
        raise ValueError("H-infinity norm requested for an unstable transfer function")
    if g.num.is_zero():
        return 0.0

    if not g.continuous:
        w = np.linspace(0.0, np.pi, grid_size)
        mag = np.abs(frequency_response(g, np.exp(1j * w)))

        def gain(x):
            return float(np.abs(frequency_response(g, np.exp(1j * x))))
    else:
        if g.relative_degree() < 0:
            raise ValueError("improper continuous transfer function has unbounded gain")
        roots = np.concatenate([g.poles(), poly_roots(g.num) if g.num.degree > 0 else []])
        mags = np.abs(roots[np.abs(roots) > 0])
        lo = 1e-3 * (mags.min() if mags.size else 1.0)
        hi = 1e3 * (mags.max() if mags.size else 1.0)
        logw = np.linspace(np.log10(lo), np.log10(hi), grid_size)
        mag = np.abs(frequency_response(g, 1j * 10.0 ** logw))

        def gain(x):
            return float(np.abs(frequency_response(g, 1j * 10.0 ** x)))

        w = logw
        dc = abs(complex(frequency_response(g, 0.0))) if abs(g.den(0.0)) > 0 else 0.0
        hf = 0.0
        if g.relative_degree() == 0:
            hf = abs(g.num.coeffs[-1] / g.den.coeffs[-1])
        edge = max(dc, hf)
    k = int(np.argmax(mag))
    a = w[max(k - 1, 0)]
    b = w[min(k + 1, w.size - 1)]
    best = max(float(mag[k]), _golden_max(gain, a, b))
    if g.continuous:
        best = max(best, edge)
    return best
