"""Intrinsic dimension estimators: QE, TLS and the Local PCA / TwoNN baselines.

QE and TLS share one pipeline per point: find the K nearest neighbors,
re-express the neighborhood in local PCA coordinates, then for each
candidate dimension j regress coordinate j+1 on a quadratic expansion of
coordinates 1..j. QE picks the smallest j whose F-test and every later one
is significant, weighting it by the adjusted R^2. TLS picks the j with the
largest relative drop in total least-squares error.
"""
from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from graphdim.errors import DegenerateNeighborhoodError, EstimationFailedError, InvalidInputError
from graphdim.neighborhood import (
    LocalChart,
    PointCloud,
    as_cloud,
    chart_from_indices,
    knn_table,
    nonconstant_index,
)
from graphdim.regression import (
    constant_response_fit,
    n_quadratic_terms,
    ols_quadratic,
    relative_drops,
    tls_quadratic,
)

__all__ = [
    "METHODS",
    "EstimatorConfig",
    "LocalEstimate",
    "GlobalEstimate",
    "pmax",
    "qe_local",
    "tls_local",
    "pca_local",
    "qe_estimate",
    "tls_estimate",
    "local_pca_estimate",
    "twonn_estimate",
    "twonn_from_ratios",
    "local_estimates",
    "aggregate_weighted",
    "aggregate_mean",
    "qe_select",
    "tls_select",
    "estimate",
]

METHODS = ("qe", "tls", "local_pca", "twonn")


@dataclass(frozen=True)
class EstimatorConfig:
    K: int
    alpha: float = 0.01
    rel_tol: float = 1e-8
    pca_alpha: float = 0.05
    twonn_trim: float = 0.1

    def __post_init__(self):
        if int(self.K) != self.K or self.K < 3:
            raise InvalidInputError(f"K must be an integer >= 3, got {self.K}")
        if not 0 < self.alpha < 1:
            raise InvalidInputError(f"alpha must lie in (0, 1), got {self.alpha}")
        if not self.rel_tol > 0:
            raise InvalidInputError(f"rel_tol must be positive, got {self.rel_tol}")
        if not 0 < self.pca_alpha < 1:
            raise InvalidInputError(f"pca_alpha must lie in (0, 1), got {self.pca_alpha}")
        if not 0 <= self.twonn_trim < 0.5:
            raise InvalidInputError(f"twonn_trim must lie in [0, 0.5), got {self.twonn_trim}")


@dataclass(frozen=True)
class LocalEstimate:
    """Per-neighborhood estimate.

    ``weight`` is the adjusted R^2 of the selected QE model (0 when no model
    qualified); TLS and Local PCA use weight 1. ``fits`` keeps the per-j fit
    table that produced the estimate.
    """

    center_index: int
    d_k: int
    weight: float
    valid: bool = True
    fits: tuple = field(default=(), repr=False, compare=False)


@dataclass(frozen=True)
class GlobalEstimate:
    d_hat: float
    d_rounded: int
    n_local: int
    n_weighted: int


def pmax(p: int, q: int, K: int) -> int:
    """Number of candidate dimensions to fit in one neighborhood.

    ``min(p - 1, q, m)`` where ``m`` is the largest model size whose
    quadratic fit on ``K + 1`` samples keeps a residual degree of freedom
    (``m(m+3)/2 <= K - 1``). The ``p - 1`` cap makes response ``j + 1``
    exist. 0 means the neighborhood is skipped.
    """
    if p < 2 or q < 0 or K < 3:
        raise InvalidInputError(f"pmax needs p >= 2, q >= 0, K >= 3; got p={p}, q={q}, K={K}")
    # largest m with m(m+3)/2 <= K-1
    m = int((math.isqrt(9 + 8 * (K - 1)) - 3) // 2)
    while n_quadratic_terms(m + 1) <= K - 1:
        m += 1
    while m > 0 and n_quadratic_terms(m) > K - 1:
        m -= 1
    return max(0, min(p - 1, q, m))


def qe_local(chart: LocalChart, cfg: EstimatorConfig) -> Optional[LocalEstimate]:
    """QE estimate for one chart, or ``None`` when the chart must be skipped.

    Models whose response lies beyond the last nonconstant coordinate ``q``
    get the vacuous constant-response fit. They stay in the fit table but
    carry no evidence, so they do not block selection of a smaller ``j``.
    When nothing qualifies the chart reports ``pmax`` with weight 0.
    """
    q = nonconstant_index(chart, cfg.rel_tol)
    top = pmax(chart.p, q, chart.K)
    if top < 1:
        return None
    informative = min(top, q - 1)
    fits = tuple(
        ols_quadratic(chart, j) if j <= informative else constant_response_fit(j, chart.coords.shape[0])
        for j in range(1, top + 1)
    )
    d_k, weight = qe_select(fits, cfg.alpha, informative)
    return LocalEstimate(chart.center_index, d_k, weight, True, fits)


def qe_select(fits, alpha: float, n_informative: Optional[int] = None) -> tuple[int, float]:
    """Smallest ``j`` with ``adj_r2 > 0`` and every p-value from ``j`` on below ``alpha``.

    ``fits`` holds the models for ``j = 1..len(fits)`` in order; only the
    first ``n_informative`` (default all) take part in the scan. Returns
    ``(j, adj_r2_j)``, or ``(len(fits), 0.0)`` when no model qualifies.
    """
    if not fits:
        raise InvalidInputError("qe_select needs at least one fit")
    scan = fits[: len(fits) if n_informative is None else max(0, n_informative)]
    # all_sig[i]: every scanned p-value from model i onward is below alpha
    all_sig = np.logical_and.accumulate([f.p_value < alpha for f in scan][::-1])[::-1]
    for i, fit in enumerate(scan):
        if fit.adj_r2 > 0 and all_sig[i]:
            return i + 1, float(fit.adj_r2)
    return len(fits), 0.0


def tls_local(chart: LocalChart, cfg: EstimatorConfig) -> Optional[LocalEstimate]:
    """TLS estimate for one chart, or ``None`` when fewer than two models fit.

    Only models with a nonconstant response are fitted: a constant response
    has zero TLS error and would fake a perfect drop.
    """
    q = nonconstant_index(chart, cfg.rel_tol)
    top = min(pmax(chart.p, q, chart.K), q - 1)
    if top < 2:
        return None
    fits = tuple(tls_quadratic(chart, j) for j in range(1, top + 1))
    return LocalEstimate(chart.center_index, tls_select([f.sigma for f in fits]), 1.0, True, fits)


def tls_select(sigmas) -> int:
    """``j`` in ``2..len(sigmas)`` with the largest relative drop; ties go to the smallest ``j``."""
    drops = relative_drops(sigmas)
    # drops[0] belongs to j = 2; argmax returns the first maximum
    return int(np.argmax(drops)) + 2


def pca_local(chart: LocalChart, cfg: EstimatorConfig) -> LocalEstimate:
    lam = chart.eigenvalues
    d_k = int(np.count_nonzero(lam >= cfg.pca_alpha * lam[0]))
    return LocalEstimate(chart.center_index, d_k, 1.0, True)


_LOCAL_RULES: dict[str, Callable[[LocalChart, EstimatorConfig], Optional[LocalEstimate]]] = {
    "qe": qe_local,
    "tls": tls_local,
    "local_pca": pca_local,
}


def _resolve_workers(workers: Optional[int]) -> int:
    if workers is None:
        return 1
    if workers < 1:
        raise InvalidInputError(f"workers must be >= 1, got {workers}")
    return workers


def local_estimates(
    cloud,
    cfg: EstimatorConfig,
    method: str,
    workers: Optional[int] = None,
) -> list[Optional[LocalEstimate]]:
    """Run one local rule at every point; entry ``k`` belongs to point ``k``.

    Skipped neighborhoods give ``None``; degenerate ones an invalid estimate.
    """
    if method not in _LOCAL_RULES:
        raise InvalidInputError(f"no local rule for method {method!r}")
    rule = _LOCAL_RULES[method]
    cloud = as_cloud(cloud)
    if cloud.n < cfg.K + 1:
        raise InvalidInputError(f"need n >= K + 1 = {cfg.K + 1} points, got {cloud.n}")
    table = knn_table(cloud, cfg.K)
    pts = cloud.points

    def run(k: int) -> Optional[LocalEstimate]:
        try:
            chart = chart_from_indices(pts, k, table[k])
        except DegenerateNeighborhoodError:
            return LocalEstimate(k, 1, 0.0, False)
        return rule(chart, cfg)

    n_workers = _resolve_workers(workers)
    if n_workers == 1:
        return [run(k) for k in range(cloud.n)]
    with ThreadPoolExecutor(max_workers=n_workers) as pool:
        return list(pool.map(run, range(cloud.n), chunksize=max(1, cloud.n // (4 * n_workers))))


def _usable(local: list[Optional[LocalEstimate]]) -> list[LocalEstimate]:
    usable = [e for e in local if e is not None and e.valid]
    if not usable:
        raise EstimationFailedError("every neighborhood was degenerate or skipped")
    return usable


def _global(d_hat: float, usable: list[LocalEstimate], n_weighted: int) -> GlobalEstimate:
    return GlobalEstimate(float(d_hat), int(np.floor(d_hat + 0.5)), len(usable), n_weighted)


def aggregate_weighted(local: list[Optional[LocalEstimate]]) -> GlobalEstimate:
    """Weighted mean of local estimates; unweighted mean if every weight is 0."""
    usable = _usable(local)
    d = np.array([e.d_k for e in usable], dtype=float)
    w = np.array([e.weight for e in usable], dtype=float)
    total = w.sum()
    if total > 0:
        d_hat = (w * d).sum() / total
    else:
        d_hat = d.mean()
    return _global(d_hat, usable, int(np.count_nonzero(w > 0)))


def aggregate_mean(local: list[Optional[LocalEstimate]]) -> GlobalEstimate:
    """Unweighted mean of the valid local estimates."""
    usable = _usable(local)
    d = np.array([e.d_k for e in usable], dtype=float)
    return _global(d.mean(), usable, len(usable))


def qe_estimate(cloud, cfg: EstimatorConfig, workers: Optional[int] = None) -> GlobalEstimate:
    return aggregate_weighted(local_estimates(cloud, cfg, "qe", workers))


def tls_estimate(cloud, cfg: EstimatorConfig, workers: Optional[int] = None) -> GlobalEstimate:
    return aggregate_mean(local_estimates(cloud, cfg, "tls", workers))


def local_pca_estimate(cloud, cfg: EstimatorConfig, workers: Optional[int] = None) -> GlobalEstimate:
    return aggregate_mean(local_estimates(cloud, cfg, "local_pca", workers))


def twonn_from_ratios(mu, trim: float = 0.1) -> float:
    """Maximum-likelihood TwoNN dimension from second/first neighbor distance ratios.

    Undefined ratios (NaN or infinite) are dropped first. The ``trim``
    fraction of largest ratios is then treated as right-censored at the
    largest retained ratio, so ``d = m / (sum(log mu_kept) + (N - m) log mu_(m))``;
    with ``trim = 0`` this is the plain ``N / sum(log mu)``.
    """
    mu = np.asarray(mu, dtype=float)
    mu = mu[np.isfinite(mu)]
    if len(mu) == 0:
        raise EstimationFailedError("no finite neighbor-distance ratio")
    total = len(mu)
    keep = int(math.floor(total * (1.0 - trim)))
    if keep < 1:
        raise EstimationFailedError("trimming removed every ratio")
    logs = np.log(np.sort(mu, kind="stable")[:keep])
    log_sum = float(logs.sum()) + (total - keep) * float(logs[-1])
    if not log_sum > 0:
        raise EstimationFailedError("all retained neighbor-distance ratios equal 1")
    return keep / log_sum


def twonn_estimate(cloud, cfg: EstimatorConfig, workers: Optional[int] = None) -> GlobalEstimate:
    """TwoNN baseline; independent of ``cfg.K``."""
    cloud = as_cloud(cloud)
    if cloud.n < 3:
        raise InvalidInputError(f"TwoNN needs at least 3 points, got {cloud.n}")
    pts = cloud.points
    nbrs = knn_table(cloud, 2)
    r1 = np.linalg.norm(pts[nbrs[:, 0]] - pts, axis=1)
    r2 = np.linalg.norm(pts[nbrs[:, 1]] - pts, axis=1)
    ok = r1 > 0
    mu = np.full(cloud.n, np.nan)
    mu[ok] = r2[ok] / r1[ok]
    d_hat = twonn_from_ratios(mu, cfg.twonn_trim)
    n_used = int(np.count_nonzero(ok))
    return GlobalEstimate(d_hat, int(np.floor(d_hat + 0.5)), n_used, n_used)


_GLOBAL = {
    "qe": qe_estimate,
    "tls": tls_estimate,
    "local_pca": local_pca_estimate,
    "twonn": twonn_estimate,
}


def estimate(cloud, method: str, cfg: EstimatorConfig, workers: Optional[int] = None) -> GlobalEstimate:
    """Dispatch to one of :data:`METHODS`."""
    key = method.replace("-", "_")
    if key not in _GLOBAL:
        raise InvalidInputError(f"unknown method {method!r}; expected one of {', '.join(METHODS)}")
    return _GLOBAL[key](cloud, cfg, workers)
