"""Quadratic regression of one principal coordinate on the preceding ones.

Two backends share the same feature expansion: ordinary least squares with
the overall F-test (used by QE) and total least squares via the smallest
singular value of the centered augmented matrix (used by TLS).
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from graphdim.errors import InvalidInputError
from graphdim.neighborhood import LocalChart
from graphdim.numerics import f_survival, least_squares_solve, smallest_singular_value

__all__ = [
    "QuadraticFit",
    "TlsFit",
    "n_quadratic_terms",
    "feature_terms",
    "quadratic_features",
    "quadratic_design",
    "ols_quadratic",
    "constant_response_fit",
    "tls_quadratic",
    "relative_drops",
]


def n_quadratic_terms(j: int) -> int:
    """Predictor count for ``j`` inputs: linear, squares and pairwise products."""
    return j * (j - 1) // 2 + 2 * j


@lru_cache(maxsize=None)
def feature_terms(j: int) -> tuple[tuple[str, int, int], ...]:
    """Label of every feature column as ``(kind, a, b)`` with 0-based inputs.

    Order: ``("lin", a, a)`` for each input, then ``("sq", a, a)``, then
    ``("cross", a, b)`` for ``a < b`` in lexicographic order.
    """
    if j < 1:
        raise InvalidInputError(f"need at least one input coordinate, got j={j}")
    terms = [("lin", a, a) for a in range(j)]
    terms += [("sq", a, a) for a in range(j)]
    terms += [("cross", a, b) for a in range(j) for b in range(a + 1, j)]
    return tuple(terms)


def quadratic_design(x) -> np.ndarray:
    """Quadratic feature matrix for the rows of an ``(m, j)`` input array."""
    x = np.asarray(x, dtype=float)
    if x.ndim != 2:
        raise InvalidInputError(f"expected a 2-D input array, got shape {x.shape}")
    j = x.shape[1]
    if j < 1:
        raise InvalidInputError("need at least one input coordinate")
    a, b = np.triu_indices(j, k=1)
    return np.hstack([x, x * x, x[:, a] * x[:, b]])


def quadratic_features(x) -> np.ndarray:
    """Quadratic features of a single input vector (see :func:`feature_terms`)."""
    x = np.asarray(x, dtype=float)
    if x.ndim != 1:
        raise InvalidInputError(f"expected a 1-D vector, got shape {x.shape}")
    return quadratic_design(x[None, :])[0]


@dataclass(frozen=True)
class QuadraticFit:
    j: int
    q_j: int
    n_samples: int
    rss: float
    tss: float
    r2: float
    adj_r2: float
    f_stat: float
    p_value: float


@dataclass(frozen=True)
class TlsFit:
    j: int
    sigma: float


def _split(chart: LocalChart, j: int) -> tuple[np.ndarray, np.ndarray]:
    coords = chart.coords
    n, p = coords.shape
    if j < 1:
        raise InvalidInputError(f"candidate dimension must be >= 1, got {j}")
    if j + 1 > p:
        raise InvalidInputError(f"response coordinate {j + 1} does not exist for p={p}")
    q_j = n_quadratic_terms(j)
    if n < q_j + 2:
        raise InvalidInputError(
            f"j={j} needs at least {q_j + 2} samples for one residual degree of freedom, chart has {n}"
        )
    return coords[:, :j], coords[:, j]


def ols_quadratic(chart: LocalChart, j: int) -> QuadraticFit:
    """OLS fit of coordinate ``j+1`` on an intercept plus quadratic features of coordinates ``1..j``.

    The F statistic tests the full model against intercept only. A constant
    response (zero total sum of squares) is reported as a vacuous fit with
    ``r2 = adj_r2 = 0`` and ``p_value = 1``.
    """
    inputs, y = _split(chart, j)
    n = len(y)
    q_j = n_quadratic_terms(j)
    df_resid = n - q_j - 1
    tss = float(np.sum((y - y.mean()) ** 2))
    if tss == 0.0:
        return constant_response_fit(j, n)
    design = np.hstack([np.ones((n, 1)), quadratic_design(inputs)])
    beta = least_squares_solve(design, y).coef
    resid = y - design @ beta
    rss = min(float(resid @ resid), tss)
    r2 = 1.0 - rss / tss
    adj_r2 = 1.0 - (1.0 - r2) * (n - 1) / df_resid
    if rss == 0.0:
        f_stat = float("inf")
    else:
        f_stat = ((tss - rss) / q_j) / (rss / df_resid)
    p_value = f_survival(f_stat, q_j, df_resid)
    return QuadraticFit(j, q_j, n, rss, tss, r2, adj_r2, f_stat, p_value)


def constant_response_fit(j: int, n_samples: int) -> QuadraticFit:
    """The vacuous fit reported for a constant response: ``p_value = 1``, no explained variance."""
    return QuadraticFit(j, n_quadratic_terms(j), n_samples, 0.0, 0.0, 0.0, 0.0, 0.0, 1.0)


def tls_quadratic(chart: LocalChart, j: int) -> TlsFit:
    """Total TLS error for candidate dimension ``j``.

    Squared smallest singular value of the column-centered matrix
    ``[features(coords 1..j) | coord j+1]``: the sum of squared orthogonal
    distances from the rows to their best-fit affine hyperplane.
    """
    inputs, y = _split(chart, j)
    aug = np.hstack([quadratic_design(inputs), y[:, None]])
    aug -= aug.mean(axis=0)
    s = smallest_singular_value(aug)
    return TlsFit(j, s * s)


def relative_drops(sigmas) -> np.ndarray:
    """Relative decrease between consecutive total errors.

    Entry ``i`` is ``(sigmas[i] - sigmas[i+1]) / sigmas[i]``, with 0 where
    ``sigmas[i]`` is already 0.
    """
    s = np.asarray(sigmas, dtype=float)
    if s.ndim != 1 or len(s) < 2:
        raise InvalidInputError("need at least two total errors")
    if np.any(s < 0) or not np.all(np.isfinite(s)):
        raise InvalidInputError("total errors must be finite and non-negative")
    prev, nxt = s[:-1], s[1:]
    out = np.zeros(len(prev))
    pos = prev > 0
    out[pos] = (prev[pos] - nxt[pos]) / prev[pos]
    return out
