"""Discrete model manifolds with lumped (diagonal) measures.

Two closed model spaces are supported: flat tori of dimension 1-3 on a
uniform periodic grid, and the round 2-sphere built from a subdivided
icosahedron.  Every integral is a weighted dot product against either the
Riemannian measure ``mu`` or the weighted measure ``nu = exp(-h) mu``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np

from .errors import InvalidDimensionError, InvalidDiscretizationError

TOPOLOGIES = ("flat_torus", "sphere", "euclidean_oracle")
MEASURES = ("mu", "nu")


@dataclass(frozen=True)
class CurvatureModel:
    """Constant sectional curvature ``K``, optionally upgraded by a weight.

    ``weighted_derived`` keeps the base ``K``; the Hessian of ``h`` is
    supplied per vertex by :mod:`entroflow.operators`.
    """

    kind: str = "constant_sectional"
    K: float = 0.0

    def ricci(self, n: int, v_sq):
        # Ric(v, v) = (n - 1) K |v|^2 on a constant-curvature space
        return (n - 1) * self.K * np.asarray(v_sq, dtype=float)


def _frozen(a):
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class DiscreteManifold:
    dimension: int
    positions: np.ndarray
    mu_weights: np.ndarray
    topology: str
    curvature: CurvatureModel
    nu_weights: np.ndarray
    weight_field: Optional[np.ndarray] = None
    be_dimension: Optional[float] = None
    # grid data (flat_torus)
    shape: Optional[tuple] = None
    side_lengths: Optional[tuple] = None
    # mesh data (sphere)
    triangles: Optional[np.ndarray] = None
    radius: Optional[float] = None
    # shared by a manifold and its weighted variants: fields stay valid
    vertex_key: object = field(default_factory=object)

    @property
    def vertex_count(self) -> int:
        return self.mu_weights.shape[0]

    @property
    def spacing(self) -> tuple:
        """Grid spacing per axis (torus) or mean edge length (sphere)."""
        if self.topology == "flat_torus":
            return tuple(L / r for L, r in zip(self.side_lengths, self.shape))
        tri = self.triangles
        p = self.positions
        e = np.concatenate([
            np.linalg.norm(p[tri[:, 1]] - p[tri[:, 0]], axis=1),
            np.linalg.norm(p[tri[:, 2]] - p[tri[:, 1]], axis=1),
            np.linalg.norm(p[tri[:, 0]] - p[tri[:, 2]], axis=1),
        ])
        return (float(e.mean()),)

    @property
    def mesh_size(self) -> float:
        return max(self.spacing)

    @property
    def is_weighted(self) -> bool:
        return self.weight_field is not None

    def weights(self, measure: str = "mu") -> np.ndarray:
        """Vertex weights of the requested measure.

        ``nu`` on an unweighted manifold falls back to ``mu`` (the two
        coincide when ``h`` is absent).
        """
        if measure not in MEASURES:
            raise ValueError(f"unknown measure {measure!r}")
        return self.nu_weights if measure == "nu" else self.mu_weights

    def volume(self, measure: str = "mu") -> float:
        return float(np.sum(self.weights(measure)))

    def field(self, values) -> "ScalarField":
        return ScalarField(np.asarray(values, dtype=float), self)

    def constant(self, c: float) -> "ScalarField":
        return self.field(np.full(self.vertex_count, float(c)))

    def evaluate(self, fn) -> "ScalarField":
        """Sample ``fn(*coords)`` at the vertex positions."""
        return self.field(fn(*self.positions.T))

    def describe(self) -> dict:
        d = {"topology": self.topology, "dimension": self.dimension,
             "vertex_count": self.vertex_count, "curvature_K": self.curvature.K}
        if self.shape is not None:
            d["resolution"] = list(self.shape)
            d["side_lengths"] = list(self.side_lengths)
        if self.radius is not None:
            d["radius"] = self.radius
        if self.be_dimension is not None:
            d["be_dimension"] = self.be_dimension
        return d

    def dump_csv(self, path) -> None:
        """Debug dump: ``index, coords..., mu, nu`` per line."""
        with open(path, "w") as fh:
            for i in range(self.vertex_count):
                coords = ",".join(f"{c:.17g}" for c in self.positions[i])
                fh.write(f"{i},{coords},{self.mu_weights[i]:.17g},{self.nu_weights[i]:.17g}\n")


@dataclass(frozen=True, eq=False)
class ScalarField:
    values: np.ndarray
    manifold: DiscreteManifold

    def __post_init__(self):
        if self.values.shape != (self.manifold.vertex_count,):
            raise ValueError(
                f"field has shape {self.values.shape}, manifold has "
                f"{self.manifold.vertex_count} vertices")

    def on(self, manifold: DiscreteManifold) -> bool:
        return self.manifold.vertex_key is manifold.vertex_key

    def with_values(self, values) -> "ScalarField":
        return ScalarField(np.asarray(values, dtype=float), self.manifold)


def check_field(fld: ScalarField, manifold: DiscreteManifold) -> None:
    if not fld.on(manifold):
        raise ValueError("field does not belong to this manifold")


def build_flat_torus(resolution_per_axis, side_lengths) -> DiscreteManifold:
    """Uniform periodic grid on ``prod [0, L_i)`` with Ric = 0.

    Vertices are ordered C-style over the grid index; positions are chart
    coordinates ``i * dx`` in ``[0, L)``.
    """
    res = tuple(int(r) for r in resolution_per_axis)
    Ls = tuple(float(L) for L in side_lengths)
    if len(res) != len(Ls) or not 1 <= len(res) <= 3:
        raise InvalidDiscretizationError(
            "resolution and side_lengths must have equal length n in {1, 2, 3}")
    if any(r < 4 for r in res):
        raise InvalidDiscretizationError(f"resolution {list(res)}: every axis needs >= 4 points")
    if any(not (L > 0 and math.isfinite(L)) for L in Ls):
        raise InvalidDiscretizationError(f"side lengths must be positive, got {list(Ls)}")
    axes = [np.arange(r) * (L / r) for r, L in zip(res, Ls)]
    grid = np.meshgrid(*axes, indexing="ij")
    positions = np.stack([g.ravel() for g in grid], axis=1)
    cell = math.prod(L / r for L, r in zip(Ls, res))
    mu = _frozen(np.full(positions.shape[0], cell))
    return DiscreteManifold(
        dimension=len(res), positions=_frozen(positions), mu_weights=mu,
        nu_weights=mu, topology="flat_torus",
        curvature=CurvatureModel("constant_sectional", 0.0),
        shape=res, side_lengths=Ls)


def _icosahedron():
    p = (1.0 + math.sqrt(5.0)) / 2.0
    v = [(-1, p, 0), (1, p, 0), (-1, -p, 0), (1, -p, 0),
         (0, -1, p), (0, 1, p), (0, -1, -p), (0, 1, -p),
         (p, 0, -1), (p, 0, 1), (-p, 0, -1), (-p, 0, 1)]
    f = [(0, 11, 5), (0, 5, 1), (0, 1, 7), (0, 7, 10), (0, 10, 11),
         (1, 5, 9), (5, 11, 4), (11, 10, 2), (10, 7, 6), (7, 1, 8),
         (3, 9, 4), (3, 4, 2), (3, 2, 6), (3, 6, 8), (3, 8, 9),
         (4, 9, 5), (2, 4, 11), (6, 2, 10), (8, 6, 7), (9, 8, 1)]
    v = np.array(v, dtype=float)
    return v / np.linalg.norm(v, axis=1, keepdims=True), np.array(f, dtype=np.int64)


def _subdivide(verts, faces):
    verts = list(map(tuple, verts))
    cache = {}

    def midpoint(i, j):
        key = (i, j) if i < j else (j, i)
        if key not in cache:
            m = (np.asarray(verts[i]) + np.asarray(verts[j])) / 2.0
            m /= np.linalg.norm(m)
            cache[key] = len(verts)
            verts.append(tuple(m))
        return cache[key]

    out = []
    for a, b, c in faces:
        ab, bc, ca = midpoint(a, b), midpoint(b, c), midpoint(c, a)
        out += [(a, ab, ca), (b, bc, ab), (c, ca, bc), (ab, bc, ca)]
    return np.array(verts), np.array(out, dtype=np.int64)


def triangle_areas(positions, triangles) -> np.ndarray:
    p0, p1, p2 = (positions[triangles[:, k]] for k in range(3))
    return 0.5 * np.linalg.norm(np.cross(p1 - p0, p2 - p0), axis=1)


def build_sphere(subdivision_level: int, radius: float) -> DiscreteManifold:
    """Icosphere of radius ``r``: 10 * 4**level + 2 vertices, K = 1/r^2.

    Vertex weights are one third of the incident (flat) triangle areas.
    """
    level = int(subdivision_level)
    if not 1 <= level <= 8:
        raise InvalidDiscretizationError(f"subdivision_level must be in [1, 8], got {level}")
    if not radius > 0:
        raise InvalidDiscretizationError(f"radius must be positive, got {radius}")
    v, f = _icosahedron()
    for _ in range(level):
        v, f = _subdivide(v, f)
    v = v * float(radius)
    area = triangle_areas(v, f)
    mu = np.zeros(v.shape[0])
    for k in range(3):
        np.add.at(mu, f[:, k], area / 3.0)
    mu = _frozen(mu)
    f.setflags(write=False)
    return DiscreteManifold(
        dimension=2, positions=_frozen(v), mu_weights=mu, nu_weights=mu,
        topology="sphere",
        curvature=CurvatureModel("constant_sectional", 1.0 / radius**2),
        triangles=f, radius=float(radius))


def attach_weight(manifold: DiscreteManifold, h: ScalarField, m: float) -> DiscreteManifold:
    """Turn ``(M, g, mu)`` into the metric measure space ``(M, g, e^{-h} mu)``.

    ``m`` is the Bakry-Emery dimension and must exceed the manifold
    dimension strictly.
    """
    check_field(h, manifold)
    m = float(m)
    if not m > manifold.dimension:
        raise InvalidDimensionError(
            f"Bakry-Emery dimension m={m} must exceed n={manifold.dimension} "
            "(the 1/(m-n) terms degenerate)")
    hv = np.asarray(h.values, dtype=float)
    if not np.all(np.isfinite(hv)):
        raise InvalidDimensionError("weight field h must be finite at every vertex")
    nu = _frozen(np.exp(-hv) * manifold.mu_weights)
    return replace(
        manifold, weight_field=_frozen(hv), nu_weights=nu, be_dimension=m,
        curvature=CurvatureModel("weighted_derived", manifold.curvature.K))


def integrate(fld: ScalarField, measure: str = "mu") -> float:
    """Sum of ``values * weights`` for the chosen measure."""
    return float(np.dot(fld.values, fld.manifold.weights(measure)))
