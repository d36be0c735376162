"""Discrete Laplace-Beltrami and drift-Laplacian operators.

The operator is stored as an edge list ``(i, j, w_ij)`` with the convention

    u . S . u = sum_edges w_ij (u_i - u_j)^2  ~  int |grad u|^2 d(measure)

so ``S`` is symmetric positive semidefinite and the generator of the heat
flow is ``-M^{-1} S`` with ``M = diag(measure weights)``.  On tori the
edges are the axis neighbours of the periodic grid; on the sphere they carry
cotangent weights.  For the weighted measure every edge weight is multiplied
by ``exp(-h)`` at the edge midpoint, which discretizes ``L = Lap - grad h . grad``
in flux form and keeps ``S`` exactly symmetric.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Optional

import numpy as np
import scipy.linalg
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import AssemblyError, InvalidDimensionError, SpectralError, UnsupportedTopologyError
from .manifold import DiscreteManifold, ScalarField, check_field

log = logging.getLogger(__name__)

DEGENERATE_AREA = 1e-14


class LaplacianOperator:
    """Stiffness ``S`` paired with a vertex measure (``mu`` or ``nu``)."""

    def __init__(self, manifold: DiscreteManifold, measure: str, edges_i, edges_j, edge_w):
        self.manifold = manifold
        self.measure = measure
        self.edges_i = np.asarray(edges_i, dtype=np.int64)
        self.edges_j = np.asarray(edges_j, dtype=np.int64)
        self.edge_w = np.asarray(edge_w, dtype=float)
        for a in (self.edges_i, self.edges_j, self.edge_w):
            a.setflags(write=False)
        N = manifold.vertex_count
        i, j, w = self.edges_i, self.edges_j, self.edge_w
        off = sp.coo_matrix((np.concatenate([-w, -w]), (np.concatenate([i, j]), np.concatenate([j, i]))),
                            shape=(N, N)).tocsr()
        diag = np.zeros(N)
        np.add.at(diag, i, w)
        np.add.at(diag, j, w)
        self.stiffness = (off + sp.diags(diag)).tocsr()
        self.stiffness.sum_duplicates()
        self._factor_cache = {}

    @property
    def weights(self) -> np.ndarray:
        return self.manifold.weights(self.measure)

    @property
    def vertex_count(self) -> int:
        return self.manifold.vertex_count

    def apply(self, u) -> np.ndarray:
        """``S u`` from edge differences; exactly zero on constants."""
        u = np.asarray(u, dtype=float)
        flux = self.edge_w * (u[self.edges_i] - u[self.edges_j])
        out = np.zeros_like(u)
        np.add.at(out, self.edges_i, flux)
        np.subtract.at(out, self.edges_j, flux)
        return out

    def bilinear(self, v, w) -> float:
        """``v . S . w`` summed edgewise, symmetric in (v, w) bit for bit."""
        v = np.asarray(v, dtype=float)
        w = np.asarray(w, dtype=float)
        dv = v[self.edges_i] - v[self.edges_j]
        dw = w[self.edges_i] - w[self.edges_j]
        return float(np.sum(self.edge_w * (dv * dw)))

    def quadratic_form(self, u) -> float:
        return self.bilinear(u, u)

    def generator(self, u) -> np.ndarray:
        """Discrete ``Lap u`` (or ``L u``): ``-M^{-1} S u``."""
        return -self.apply(u) / self.weights

    def dump_triplets(self, path) -> None:
        coo = self.stiffness.tocoo()
        with open(path, "w") as fh:
            for r, c, v in zip(coo.row, coo.col, coo.data):
                fh.write(f"{r},{c},{v:.17g}\n")


def _edge_factor(manifold: DiscreteManifold, i, j, measure: str):
    if measure == "mu":
        return 1.0
    h = manifold.weight_field
    return np.exp(-(h[i] + h[j]) / 2.0)


def _torus_edges(manifold: DiscreteManifold):
    shape = manifold.shape
    idx = np.arange(manifold.vertex_count).reshape(shape)
    cell = manifold.mu_weights[0]
    I, J, W = [], [], []
    for ax, dx in enumerate(manifold.spacing):
        I.append(idx.ravel())
        J.append(np.roll(idx, -1, axis=ax).ravel())
        W.append(np.full(idx.size, cell / dx**2))
    return np.concatenate(I), np.concatenate(J), np.concatenate(W)


def _cotan_edges(manifold: DiscreteManifold):
    p = manifold.positions
    tri = manifold.triangles
    area = 0.5 * np.linalg.norm(
        np.cross(p[tri[:, 1]] - p[tri[:, 0]], p[tri[:, 2]] - p[tri[:, 0]]), axis=1)
    bad = np.flatnonzero(area < DEGENERATE_AREA)
    if bad.size:
        t = int(bad[0])
        raise AssemblyError(f"degenerate triangle {t} {tri[t].tolist()} with area {area[t]:.3e}")
    I, J, W = [], [], []
    for k in range(3):
        a, b, c = tri[:, k], tri[:, (k + 1) % 3], tri[:, (k + 2) % 3]
        u = p[b] - p[a]
        v = p[c] - p[a]
        cot = np.einsum("ij,ij->i", u, v) / (2.0 * area)
        # angle at a faces edge (b, c)
        I.append(b)
        J.append(c)
        W.append(0.5 * cot)
    I, J, W = np.concatenate(I), np.concatenate(J), np.concatenate(W)
    lo, hi = np.minimum(I, J), np.maximum(I, J)
    key = lo * manifold.vertex_count + hi
    uniq, inv = np.unique(key, return_inverse=True)
    w = np.zeros(uniq.size)
    np.add.at(w, inv, W)
    return uniq // manifold.vertex_count, uniq % manifold.vertex_count, w


def assemble_laplacian(manifold: DiscreteManifold, measure: str = "mu") -> LaplacianOperator:
    if measure not in ("mu", "nu"):
        raise ValueError(f"unknown measure {measure!r}")
    if measure == "nu" and not manifold.is_weighted:
        raise InvalidDimensionError("measure='nu' requires a weight field (attach_weight first)")
    if manifold.topology == "flat_torus":
        i, j, w = _torus_edges(manifold)
    elif manifold.topology == "sphere":
        i, j, w = _cotan_edges(manifold)
    else:
        raise UnsupportedTopologyError(f"no discrete operator for topology {manifold.topology!r}")
    w = w * _edge_factor(manifold, i, j, measure)
    return LaplacianOperator(manifold, measure, i, j, w)


@dataclass(frozen=True, eq=False)
class SpectralData:
    eigenvalues: np.ndarray
    eigenfields: np.ndarray  # (N, k), orthonormal w.r.t. the operator's measure
    op: LaplacianOperator

    @property
    def k(self) -> int:
        return self.eigenvalues.shape[0]

    @property
    def complete(self) -> bool:
        return self.k == self.op.vertex_count

    @property
    def first_nonzero(self) -> float:
        lam = self.eigenvalues
        thresh = max(10.0 * abs(lam[0]), 1e-9)
        above = lam[lam > thresh]
        if above.size == 0:
            raise SpectralError("no nonzero eigenvalue among the computed eigenpairs")
        return float(above[0])

    def multiplicity(self, value: Optional[float] = None, rtol: float = 1e-6) -> int:
        value = self.first_nonzero if value is None else value
        return int(np.sum(np.abs(self.eigenvalues - value) <= rtol * abs(value)))

    def report_lines(self):
        lines = [f"{i},{v:.17g}" for i, v in enumerate(self.eigenvalues)]
        try:
            lam = self.first_nonzero
        except SpectralError:
            return lines
        return lines + [f"first_nonzero={lam:.12g} multiplicity={self.multiplicity(lam)}"]


def _fix_signs(vecs: np.ndarray) -> np.ndarray:
    tol = 1e-12 * np.max(np.abs(vecs), axis=0)
    first = np.argmax(np.abs(vecs) > tol, axis=0)
    s = np.sign(vecs[first, np.arange(vecs.shape[1])])
    s[s == 0] = 1.0
    return vecs * s


def low_spectrum(op: LaplacianOperator, k: int, seed: int = 42, maxiter: Optional[int] = None,
                 tol: float = 1e-12) -> SpectralData:
    """The ``k`` smallest eigenpairs of ``S phi = lam M phi``.

    Shift-invert Lanczos (ARPACK) against the weighted mass for small ``k``;
    a dense symmetric eigendecomposition when ``k`` is a sizeable fraction of
    the vertex count (including ``k = N``, the complete spectrum).
    """
    N = op.vertex_count
    k = int(k)
    if k < 2 or k > N:
        raise SpectralError(f"k={k} must satisfy 2 <= k <= vertex_count={N}")
    m = op.weights
    if 4 * k >= N or N <= 64:
        s = 1.0 / np.sqrt(m)
        A = op.stiffness.toarray() * s[:, None] * s[None, :]
        vals, vecs = scipy.linalg.eigh(A, subset_by_index=None if k == N else [0, k - 1])
        vecs = vecs * s[:, None]
    else:
        rng = np.random.default_rng(seed)
        v0 = rng.standard_normal(N)
        scale = float(np.mean(op.stiffness.diagonal() / m))
        sigma = -1e-3 * scale
        try:
            vals, vecs = spla.eigsh(op.stiffness, k=k, M=sp.diags(m).tocsc(), sigma=sigma,
                                    which="LM", v0=v0, tol=tol, maxiter=maxiter)
        except spla.ArpackNoConvergence as exc:
            if exc.eigenvalues.size:
                r = op.stiffness @ exc.eigenvectors - (m[:, None] * exc.eigenvectors) * exc.eigenvalues
                res = float(np.max(np.linalg.norm(r, axis=0)))
            else:
                res = float("nan")
            raise SpectralError(f"eigensolver did not converge for k={k}; max residual {res:.3e}") from exc
        order = np.argsort(vals)
        vals, vecs = vals[order], vecs[:, order]
        # re-orthonormalize inside near-degenerate clusters w.r.t. M
        G = vecs.T @ (m[:, None] * vecs)
        L = np.linalg.cholesky(G)
        vecs = np.linalg.solve(L, vecs.T).T
    vecs = _fix_signs(vecs)
    vals = np.ascontiguousarray(vals)
    vecs = np.ascontiguousarray(vecs)
    vals.setflags(write=False)
    vecs.setflags(write=False)
    return SpectralData(vals, vecs, op)


# -- pointwise differential quantities ---------------------------------------

def _grid(values, manifold):
    return np.asarray(values, dtype=float).reshape(manifold.shape)


def _require_grid(manifold: DiscreteManifold, what: str):
    if manifold.topology != "flat_torus":
        raise UnsupportedTopologyError(
            f"{what} is only supported on flat_torus grids, not {manifold.topology}")


def _sphere_gradient(values, manifold):
    p = manifold.positions
    tri = manifold.triangles
    u = np.asarray(values, dtype=float)
    p0, p1, p2 = p[tri[:, 0]], p[tri[:, 1]], p[tri[:, 2]]
    nrm = np.cross(p1 - p0, p2 - p0)
    dbl = np.linalg.norm(nrm, axis=1)
    nhat = nrm / dbl[:, None]
    g = np.zeros_like(p0)
    for k, (a, b) in enumerate(((p1, p2), (p2, p0), (p0, p1))):
        # grad of the barycentric hat of vertex k is nhat x (opposite edge) / 2A
        g += u[tri[:, k], None] * np.cross(nhat, b - a) / dbl[:, None]
    area = dbl / 2.0
    acc = np.zeros_like(p)
    wsum = np.zeros(p.shape[0])
    for k in range(3):
        np.add.at(acc, tri[:, k], g * area[:, None])
        np.add.at(wsum, tri[:, k], area)
    acc /= wsum[:, None]
    # project onto the tangent plane of the vertex
    r = p / np.linalg.norm(p, axis=1, keepdims=True)
    return acc - np.einsum("ij,ij->i", acc, r)[:, None] * r


def gradient(fld: ScalarField, op: LaplacianOperator) -> np.ndarray:
    """Per-vertex gradient vectors, shape ``(N, n)`` (torus) or ``(N, 3)`` (sphere).

    Torus: centred differences in the periodic chart.  A field that is not
    periodic in the chart (e.g. the coordinate ``x``) shows its jump at the
    wrap seam.
    """
    manifold = op.manifold
    check_field(fld, manifold)
    if manifold.topology == "sphere":
        return _sphere_gradient(fld.values, manifold)
    _require_grid(manifold, "gradient")
    u = _grid(fld.values, manifold)
    comps = [(np.roll(u, -1, ax) - np.roll(u, 1, ax)) / (2.0 * dx)
             for ax, dx in enumerate(manifold.spacing)]
    return np.stack([c.ravel() for c in comps], axis=1)


def gradient_sq(fld: ScalarField, op: LaplacianOperator) -> ScalarField:
    g = gradient(fld, op)
    return fld.with_values(np.einsum("ij,ij->i", g, g))


@dataclass(frozen=True, eq=False)
class HessianData:
    values: np.ndarray  # (N, n, n), symmetric per vertex

    def trace(self) -> np.ndarray:
        return np.trace(self.values, axis1=1, axis2=2)

    def frobenius_sq_shifted(self, c) -> np.ndarray:
        """Per-vertex ``|H - c g|^2`` for a scalar or per-vertex ``c``."""
        n = self.values.shape[1]
        c = np.broadcast_to(np.asarray(c, dtype=float), (self.values.shape[0],))
        d = self.values - c[:, None, None] * np.eye(n)[None]
        return np.einsum("kij,kij->k", d, d)


def hessian(fld: ScalarField, op: LaplacianOperator) -> HessianData:
    """Centred second differences; mixed terms from the symmetric cross stencil."""
    manifold = op.manifold
    check_field(fld, manifold)
    _require_grid(manifold, "hessian")
    u = _grid(fld.values, manifold)
    h = manifold.spacing
    n = manifold.dimension
    H = np.empty((manifold.vertex_count, n, n))
    for a in range(n):
        H[:, a, a] = ((np.roll(u, -1, a) - 2.0 * u + np.roll(u, 1, a)) / h[a] ** 2).ravel()
        for b in range(a + 1, n):
            pp = np.roll(np.roll(u, -1, a), -1, b)
            pm = np.roll(np.roll(u, -1, a), 1, b)
            mp = np.roll(np.roll(u, 1, a), -1, b)
            mm = np.roll(np.roll(u, 1, a), 1, b)
            H[:, a, b] = H[:, b, a] = ((pp - pm - mp + mm) / (4.0 * h[a] * h[b])).ravel()
    return HessianData(H)


def fisher_density(density, op: LaplacianOperator) -> np.ndarray:
    """Per-vertex discrete Fisher information of a positive density.

    Returns ``q`` with ``sum(q * weights) = sum_edges w (log p_i - log p_j)(p_i - p_j)``,
    the discrete counterpart of ``int |grad log p|^2 p``; each edge term is
    split evenly between its endpoints.  For ``p = u^2`` this equals
    ``4 |grad u|^2`` in the continuum limit.
    """
    p = np.asarray(density, dtype=float)
    lp = np.log(p)
    i, j = op.edges_i, op.edges_j
    e = 0.5 * op.edge_w * (lp[i] - lp[j]) * (p[i] - p[j])
    q = np.zeros_like(p)
    np.add.at(q, i, e)
    np.add.at(q, j, e)
    return q / op.weights


# -- curvature quadratic forms -------------------------------------------------

def ricci_form(manifold: DiscreteManifold, v_sq) -> np.ndarray:
    """``Ric(v, v)`` per vertex given ``|v|^2`` per vertex."""
    return manifold.curvature.ricci(manifold.dimension, v_sq)


def bakry_emery_form(manifold: DiscreteManifold, grad_f, hess_h, grad_h) -> np.ndarray:
    """``Ric_{m,n}(L)(grad f, grad f)`` per vertex.

    ``(n-1) K |grad f|^2 + grad f . Hess h . grad f - (grad h . grad f)^2 / (m - n)``
    """
    m = manifold.be_dimension
    n = manifold.dimension
    if m is None:
        raise InvalidDimensionError("bakry_emery_form needs a Bakry-Emery dimension (attach_weight)")
    if not m > n:
        raise InvalidDimensionError(f"Bakry-Emery dimension m={m} must exceed n={n}")
    grad_f = np.asarray(grad_f, dtype=float)
    H = hess_h.values if isinstance(hess_h, HessianData) else np.asarray(hess_h, dtype=float)
    gf_sq = np.einsum("ij,ij->i", grad_f, grad_f)
    hess_term = np.einsum("ki,kij,kj->k", grad_f, H, grad_f)
    drift = np.einsum("ij,ij->i", np.asarray(grad_h, dtype=float), grad_f)
    return ricci_form(manifold, gf_sq) + hess_term - drift**2 / (m - n)


def weight_derivatives(op: LaplacianOperator):
    """Grid gradient and Hessian of the weight field ``h``."""
    manifold = op.manifold
    if not manifold.is_weighted:
        raise InvalidDimensionError("manifold has no weight field")
    h = manifold.field(manifold.weight_field)
    return gradient(h, op), hessian(h, op)
