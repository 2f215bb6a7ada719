"""Synthetic manifold samplers for the benchmark suite.

Every sampler draws intrinsic coordinates, maps them to raw ambient
coordinates, zero-pads to ``p`` dimensions, optionally applies a seeded
random orthogonal map and finally adds isotropic Gaussian noise.

All randomness comes from one ``numpy.random.Generator`` backed by the
counter-based Philox bit generator, seeded with ``SampleConfig.seed``.
Draw order is fixed: intrinsic coordinates, then the rotation, then noise.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from graphdim.errors import InvalidInputError, InvalidSpecError
from graphdim.neighborhood import PointCloud, as_cloud

__all__ = [
    "KINDS",
    "NOISY_BENCHMARK_SIGMA",
    "ManifoldSpec",
    "SampleConfig",
    "make_rng",
    "raw_dimension",
    "sample",
    "add_noise",
    "random_orthogonal",
    "deformed_sphere_map",
    "BENCHMARK_MANIFOLDS",
    "benchmark_manifold",
]

KINDS = (
    "sphere",
    "ball",
    "gaussian_surface",
    "deformed_sphere",
    "cylinder",
    "helix",
    "swiss_roll",
    "moebius",
    "torus",
    "hyperbolic",
)

# kinds whose intrinsic dimension is fixed by the construction
_FIXED_D = {"cylinder": 2, "helix": 1, "swiss_roll": 2, "moebius": 2, "torus": 2, "hyperbolic": 2}

_DEFAULT_PARAMS = {
    "sphere": {"R": 1.0},
    "ball": {"R": 1.0},
    "gaussian_surface": {"variance": 0.25},
    "deformed_sphere": {"R": 1.0, "r": 0.5, "c": 0.01},
}

SWISS_ROLL_SCALE = 21.0
# noise level used for the noisy variants of the benchmark suite
NOISY_BENCHMARK_SIGMA = 0.05
MOEBIUS_WIDTH = 0.4


def make_rng(seed: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(int(seed) % 2**64))


@dataclass(frozen=True)
class ManifoldSpec:
    kind: str
    d: int
    p: int
    params: dict = field(default_factory=dict)
    name: str = ""

    def __post_init__(self):
        if self.kind not in KINDS:
            raise InvalidSpecError(f"unknown manifold kind {self.kind!r}")
        merged = dict(_DEFAULT_PARAMS.get(self.kind, {}))
        unknown = set(self.params) - set(merged)
        if unknown:
            raise InvalidSpecError(f"unknown parameter(s) for {self.kind}: {sorted(unknown)}")
        merged.update({k: float(v) for k, v in self.params.items()})
        object.__setattr__(self, "params", merged)
        if not self.name:
            object.__setattr__(self, "name", f"{self.kind}-d{self.d}-p{self.p}")
        self._validate()

    def _validate(self) -> None:
        d, p, kind = self.d, self.p, self.kind
        if int(d) != d or int(p) != p or d < 1 or d >= p:
            raise InvalidSpecError(f"need integers 1 <= d < p, got d={d}, p={p}")
        if kind in _FIXED_D and d != _FIXED_D[kind]:
            raise InvalidSpecError(f"{kind} has intrinsic dimension {_FIXED_D[kind]}, got d={d}")
        raw = raw_dimension(kind, d)
        if p < raw:
            raise InvalidSpecError(f"{kind} with d={d} needs p >= {raw}, got p={p}")
        prm = self.params
        if kind in ("sphere", "ball") and not prm["R"] > 0:
            raise InvalidSpecError(f"radius must be positive, got R={prm['R']}")
        if kind == "gaussian_surface" and not prm["variance"] > 0:
            raise InvalidSpecError(f"variance must be positive, got {prm['variance']}")
        if kind == "deformed_sphere":
            if not prm["R"] > prm["r"] > 0 or not prm["c"] > 0:
                raise InvalidSpecError(f"deformed sphere needs R > r > 0 and c > 0, got {prm}")

    def to_dict(self) -> dict:
        return {"name": self.name, "kind": self.kind, "d": self.d, "p": self.p, "params": dict(self.params)}

    @classmethod
    def from_dict(cls, data: dict) -> "ManifoldSpec":
        try:
            return cls(
                kind=data["kind"],
                d=int(data["d"]),
                p=int(data["p"]),
                params=dict(data.get("params", {})),
                name=data.get("name", ""),
            )
        except KeyError as exc:
            raise InvalidSpecError(f"manifold spec missing field {exc}") from None


@dataclass(frozen=True)
class SampleConfig:
    n: int
    seed: int = 0
    noise_sigma: float = 0.0
    embed_rotation: bool = False

    def __post_init__(self):
        if int(self.n) != self.n or self.n < 1:
            raise InvalidInputError(f"n must be a positive integer, got {self.n}")
        if not self.noise_sigma >= 0:
            raise InvalidInputError(f"noise_sigma must be >= 0, got {self.noise_sigma}")


def raw_dimension(kind: str, d: int) -> int:
    """Number of coordinates produced before zero-padding."""
    if kind in ("sphere", "gaussian_surface"):
        return d + 1
    if kind == "ball":
        return d
    if kind == "deformed_sphere":
        return 2 * d
    if kind == "torus":
        return 4
    if kind in _FIXED_D:
        return 3
    raise InvalidSpecError(f"unknown manifold kind {kind!r}")


def deformed_sphere_map(u, R: float = 1.0, r: float = 0.5, c: float = 0.01) -> np.ndarray:
    """Map ``u`` in ``[0, 1]^d`` (rows) to the deformed sphere in ``R^{2d}``.

    Column ``j`` holds ``(R + r cos(2 c pi u_j)) cos(2 pi u_j)`` and column
    ``j + d`` the matching sine term.
    """
    u = np.atleast_2d(np.asarray(u, dtype=float))
    radius = R + r * np.cos(2.0 * c * np.pi * u)
    angle = 2.0 * np.pi * u
    return np.hstack([radius * np.cos(angle), radius * np.sin(angle)])


def _sphere(rng, n, d, prm):
    g = rng.standard_normal((n, d + 1))
    return prm["R"] * g / np.linalg.norm(g, axis=1, keepdims=True)


def _ball(rng, n, d, prm):
    g = rng.standard_normal((n, d))
    direction = g / np.linalg.norm(g, axis=1, keepdims=True)
    radius = prm["R"] * rng.random(n) ** (1.0 / d)
    return direction * radius[:, None]


def _gaussian_surface(rng, n, d, prm):
    var = prm["variance"]
    u = rng.standard_normal((n, d)) * math.sqrt(var)
    density = (2.0 * math.pi * var) ** (-d / 2.0) * np.exp(-np.sum(u * u, axis=1) / (2.0 * var))
    return np.hstack([u, density[:, None]])


def _deformed_sphere(rng, n, d, prm):
    return deformed_sphere_map(rng.random((n, d)), prm["R"], prm["r"], prm["c"])


def _cylinder(rng, n, d, prm):
    theta = 2.0 * np.pi * rng.random(n)
    h = rng.random(n)
    return np.column_stack([np.cos(theta), np.sin(theta), h])


def _helix(rng, n, d, prm):
    t = 2.0 * np.pi * rng.random(n)
    return np.column_stack([np.cos(t), np.sin(t), t / (2.0 * np.pi)])


def _swiss_roll(rng, n, d, prm):
    t = 1.5 * np.pi * (1.0 + 2.0 * rng.random(n))
    h = 21.0 * rng.random(n)
    return np.column_stack([t * np.cos(t), t * np.sin(t), h]) / SWISS_ROLL_SCALE


def _moebius(rng, n, d, prm):
    u = 2.0 * np.pi * rng.random(n)
    v = MOEBIUS_WIDTH * (rng.random(n) - 0.5)
    radial = 1.0 + v * np.cos(u / 2.0)
    return np.column_stack([radial * np.cos(u), radial * np.sin(u), v * np.sin(u / 2.0)])


def _torus(rng, n, d, prm):
    u = 2.0 * np.pi * rng.random(n)
    v = 2.0 * np.pi * rng.random(n)
    return np.column_stack([np.cos(u), np.sin(u), np.cos(v), np.sin(v)]) / math.sqrt(2.0)


def _hyperbolic(rng, n, d, prm):
    u = 2.0 * rng.random(n) - 1.0
    v = 2.0 * rng.random(n) - 1.0
    return np.column_stack([u, v, u * u - v * v])


_SAMPLERS: dict[str, Callable] = {
    "sphere": _sphere,
    "ball": _ball,
    "gaussian_surface": _gaussian_surface,
    "deformed_sphere": _deformed_sphere,
    "cylinder": _cylinder,
    "helix": _helix,
    "swiss_roll": _swiss_roll,
    "moebius": _moebius,
    "torus": _torus,
    "hyperbolic": _hyperbolic,
}


def random_orthogonal(p: int, rng: np.random.Generator) -> np.ndarray:
    """Haar-distributed orthogonal ``p x p`` matrix (QR of a Gaussian, sign-corrected)."""
    q, r = np.linalg.qr(rng.standard_normal((p, p)))
    signs = np.sign(np.diag(r))
    signs[signs == 0] = 1.0
    return q * signs


def sample(spec: ManifoldSpec, cfg: SampleConfig) -> PointCloud:
    rng = make_rng(cfg.seed)
    raw = _SAMPLERS[spec.kind](rng, cfg.n, spec.d, spec.params)
    pts = np.zeros((cfg.n, spec.p))
    pts[:, : raw.shape[1]] = raw
    if cfg.embed_rotation:
        pts = pts @ random_orthogonal(spec.p, rng).T
    if cfg.noise_sigma > 0:
        pts = pts + cfg.noise_sigma * rng.standard_normal(pts.shape)
    return PointCloud(pts)


def add_noise(cloud, sigma: float, seed: int) -> PointCloud:
    """Add i.i.d. ``N(0, sigma^2)`` noise to every coordinate."""
    cloud = as_cloud(cloud)
    if not sigma >= 0:
        raise InvalidInputError(f"sigma must be >= 0, got {sigma}")
    if sigma == 0:
        return PointCloud(cloud.points.copy())
    rng = make_rng(seed)
    return PointCloud(cloud.points + sigma * rng.standard_normal(cloud.points.shape))


def _bm(name, kind, d, p, **params):
    return name, ManifoldSpec(kind=kind, d=d, p=p, params=params, name=name)


# The 18-manifold noiseless/noisy benchmark suite.
BENCHMARK_MANIFOLDS: dict[str, ManifoldSpec] = dict(
    [
        _bm("M11", "sphere", 5, 10, R=1.0),
        _bm("M12", "sphere", 10, 20, R=1.0),
        _bm("M13", "sphere", 20, 40, R=1.0),
        _bm("M21", "ball", 5, 10, R=1.0),
        _bm("M22", "ball", 10, 20, R=1.0),
        _bm("M23", "ball", 20, 40, R=1.0),
        _bm("M31", "gaussian_surface", 5, 10, variance=0.25),
        _bm("M32", "gaussian_surface", 10, 20, variance=0.25),
        _bm("M33", "gaussian_surface", 20, 40, variance=0.25),
        _bm("M41", "deformed_sphere", 3, 6, c=0.01),
        _bm("M42", "deformed_sphere", 3, 6, c=0.1),
        _bm("M43", "deformed_sphere", 3, 6, c=1.0),
        _bm("M5", "cylinder", 2, 4),
        _bm("M6", "helix", 1, 3),
        _bm("M7", "swiss_roll", 2, 4),
        _bm("M8", "moebius", 2, 4),
        _bm("M9", "torus", 2, 4),
        _bm("M10", "hyperbolic", 2, 4),
    ]
)


def benchmark_manifold(name: str) -> ManifoldSpec:
    try:
        return BENCHMARK_MANIFOLDS[name]
    except KeyError:
        raise InvalidSpecError(
            f"unknown benchmark manifold {name!r}; known: {', '.join(BENCHMARK_MANIFOLDS)}"
        ) from None
