"""Dense linear-algebra and special-function kernels.

Eigendecomposition, singular values and least squares are thin wrappers
around LAPACK (via numpy) that pin ordering, sign and degenerate-case
conventions. The F-distribution tail is computed here from the regularized
incomplete beta function by continued fraction.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from graphdim.errors import InvalidInputError

__all__ = [
    "EigenDecomposition",
    "LeastSquaresResult",
    "sym_eigen_desc",
    "smallest_singular_value",
    "least_squares_solve",
    "betainc_regularized",
    "f_survival",
]


@dataclass(frozen=True)
class EigenDecomposition:
    """Eigenpairs of a symmetric matrix, eigenvalues descending.

    ``eigenvectors[:, i]`` pairs with ``eigenvalues[i]``.
    """

    eigenvalues: np.ndarray
    eigenvectors: np.ndarray


@dataclass(frozen=True)
class LeastSquaresResult:
    coef: np.ndarray
    rank: int
    singular_values: np.ndarray


def _as_finite_matrix(a, name: str) -> np.ndarray:
    arr = np.asarray(a, dtype=float)
    if arr.ndim != 2 or arr.shape[0] < 1 or arr.shape[1] < 1:
        raise InvalidInputError(f"{name} must be a non-empty 2-D array, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise InvalidInputError(f"{name} contains non-finite entries")
    return arr


def sym_eigen_desc(s) -> EigenDecomposition:
    """Eigendecomposition of a symmetric matrix with descending eigenvalues.

    The input is symmetrized as ``(S + S.T) / 2`` first. Each eigenvector is
    sign-normalized so that its largest-magnitude component is positive (the
    first such component on exact ties), which makes the output reproducible.
    """
    s = _as_finite_matrix(s, "S")
    if s.shape[0] != s.shape[1]:
        raise InvalidInputError(f"S must be square, got shape {s.shape}")
    s = 0.5 * (s + s.T)
    w, v = np.linalg.eigh(s)
    w = w[::-1].copy()
    v = v[:, ::-1].copy()
    _fix_signs(v)
    return EigenDecomposition(eigenvalues=w, eigenvectors=v)


def _fix_signs(v: np.ndarray) -> None:
    # in place: largest |component| of each column made positive
    idx = np.argmax(np.abs(v), axis=0)
    signs = np.sign(v[idx, np.arange(v.shape[1])])
    signs[signs == 0] = 1.0
    v *= signs


def smallest_singular_value(a) -> float:
    """Smallest singular value of a tall matrix (``m >= k``)."""
    a = _as_finite_matrix(a, "A")
    m, k = a.shape
    if m < k:
        raise InvalidInputError(f"A must have at least as many rows as columns, got {m}x{k}")
    sv = np.linalg.svd(a, compute_uv=False)
    return float(max(sv[-1], 0.0))


def least_squares_solve(x, y) -> LeastSquaresResult:
    """Minimum-norm least-squares solution of ``X @ beta ~= y``.

    Rank-deficient designs are not an error: the minimum-norm solution is
    returned and the numerical rank is reported alongside it.
    """
    x = _as_finite_matrix(x, "X")
    y = np.asarray(y, dtype=float)
    if y.ndim != 1 or y.shape[0] != x.shape[0]:
        raise InvalidInputError(f"y must be a vector of length {x.shape[0]}, got shape {y.shape}")
    if not np.all(np.isfinite(y)):
        raise InvalidInputError("y contains non-finite entries")
    if x.shape[0] < x.shape[1]:
        raise InvalidInputError(f"X must have at least as many rows as columns, got {x.shape}")
    coef, _, rank, sv = np.linalg.lstsq(x, y, rcond=None)
    return LeastSquaresResult(coef=coef, rank=int(rank), singular_values=sv)


_TINY = 1e-300
_CF_EPS = 1e-16
_CF_MAX_ITER = 10_000


def _betacf(a: float, b: float, x: float) -> float:
    """Continued fraction for I_x(a, b), modified Lentz evaluation."""
    qab = a + b
    qap = a + 1.0
    qam = a - 1.0
    c = 1.0
    d = 1.0 - qab * x / qap
    if abs(d) < _TINY:
        d = _TINY
    d = 1.0 / d
    h = d
    for m in range(1, _CF_MAX_ITER + 1):
        m2 = 2 * m
        aa = m * (b - m) * x / ((qam + m2) * (a + m2))
        d = 1.0 + aa * d
        if abs(d) < _TINY:
            d = _TINY
        c = 1.0 + aa / c
        if abs(c) < _TINY:
            c = _TINY
        d = 1.0 / d
        h *= d * c
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2))
        d = 1.0 + aa * d
        if abs(d) < _TINY:
            d = _TINY
        c = 1.0 + aa / c
        if abs(c) < _TINY:
            c = _TINY
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < _CF_EPS:
            return h
    raise ArithmeticError(f"incomplete beta continued fraction did not converge (a={a}, b={b}, x={x})")


def betainc_regularized(a: float, b: float, x: float) -> float:
    """Regularized incomplete beta function I_x(a, b) for a, b > 0, 0 <= x <= 1."""
    if not (a > 0 and b > 0):
        raise InvalidInputError(f"shape parameters must be positive, got a={a}, b={b}")
    if not (0.0 <= x <= 1.0):
        raise InvalidInputError(f"x must lie in [0, 1], got {x}")
    if x == 0.0:
        return 0.0
    if x == 1.0:
        return 1.0
    log_front = (
        math.lgamma(a + b) - math.lgamma(a) - math.lgamma(b)
        + a * math.log(x) + b * math.log1p(-x)
    )
    front = math.exp(log_front)
    # the fraction converges fast only below the mean of Beta(a, b)
    if x < (a + 1.0) / (a + b + 2.0):
        val = front * _betacf(a, b, x) / a
    else:
        val = 1.0 - front * _betacf(b, a, 1.0 - x) / b
    return min(max(val, 0.0), 1.0)


def f_survival(f: float, d1: int, d2: int) -> float:
    """Upper tail P(F > f) of the F distribution with (d1, d2) degrees of freedom."""
    if d1 < 1 or d2 < 1:
        raise InvalidInputError(f"degrees of freedom must be >= 1, got ({d1}, {d2})")
    if math.isnan(f) or f < 0:
        raise InvalidInputError(f"F statistic must be non-negative, got {f}")
    if f == 0.0:
        return 1.0
    if math.isinf(f):
        return 0.0
    x = d2 / (d2 + d1 * f)
    return betainc_regularized(0.5 * d2, 0.5 * d1, x)
