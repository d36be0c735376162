"""Linear (weighted) heat flow of the density ``u_tilde = u^2``.

The nonlinear equation ``u_t = Lap u + |grad u|^2 / u`` is never stepped
directly: its square ``u_tilde`` solves the linear heat equation, so we
evolve ``u_tilde`` and recover ``u`` by a pointwise square root.  Delta
initial data only enter through the spectral heat kernel.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Optional

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import DegenerateDensityError, FlowError, KernelTruncationError
from .manifold import ScalarField, check_field
from .operators import LaplacianOperator, SpectralData

log = logging.getLogger(__name__)

SCHEMES = ("implicit_euler", "crank_nicolson")
DT_MAX = 0.1
TRUNCATION_TOL = 1e-8
DENSITY_FLOOR = 1e-14  # relative to max u_tilde
MASKED_MASS_LIMIT = 0.01


@dataclass(frozen=True, eq=False)
class HeatState:
    u_tilde: ScalarField
    time: float
    measure: str = "mu"
    mass_correction: float = 0.0  # mass drift removed by the last renormalization
    clamped: float = 0.0  # total magnitude of negative values clipped to zero

    @property
    def manifold(self):
        return self.u_tilde.manifold

    @property
    def values(self) -> np.ndarray:
        return self.u_tilde.values

    @property
    def mass(self) -> float:
        return float(np.dot(self.values, self.manifold.weights(self.measure)))


@dataclass(frozen=True)
class KernelSpec:
    source_vertex: int
    eigenpairs_used: int
    measure: str = "mu"


def _normalized(values, weights):
    values = np.asarray(values, dtype=float)
    neg = values < 0
    clamped = float(-np.sum(values[neg] * weights[neg])) if neg.any() else 0.0
    if clamped:
        values = np.where(neg, 0.0, values)
        log.debug("clamped negative density, magnitude %.3e", clamped)
    mass = float(np.dot(values, weights))
    if not mass > 0:
        raise FlowError(f"density has nonpositive mass {mass}")
    return values / mass, mass, clamped


def state_from_density(fld: ScalarField, time: float, measure: str = "mu") -> HeatState:
    """Wrap a nonnegative density as a unit-mass heat state."""
    w = fld.manifold.weights(measure)
    vals, mass, clamped = _normalized(fld.values, w)
    return HeatState(fld.with_values(vals), float(time), measure, mass - 1.0, clamped)


class HeatStepper:
    """Time stepper with a cached sparse LU factorization.

    Solves ``(M + theta dt S) u' = (M - (1 - theta) dt S) u`` with
    ``theta = 1`` (implicit Euler) or ``1/2`` (Crank-Nicolson).
    """

    def __init__(self, op: LaplacianOperator, dt: float, scheme: str = "crank_nicolson",
                 dt_max: float = DT_MAX, residual_tol: float = 1e-10):
        if scheme not in SCHEMES:
            raise FlowError(f"unknown scheme {scheme!r}; expected one of {SCHEMES}")
        if not 0 < dt <= dt_max:
            raise FlowError(f"time step dt={dt} must lie in (0, {dt_max}]")
        self.op = op
        self.dt = float(dt)
        self.scheme = scheme
        self.residual_tol = residual_tol
        theta = 1.0 if scheme == "implicit_euler" else 0.5
        M = sp.diags(op.weights)
        S = op.stiffness
        self._lhs = (M + theta * self.dt * S).tocsc()
        self._rhs = (M - (1.0 - theta) * self.dt * S).tocsr()
        key = (self.dt, scheme)
        if key not in op._factor_cache:
            op._factor_cache[key] = spla.splu(self._lhs)
        self._lu = op._factor_cache[key]

    def step(self, state: HeatState) -> HeatState:
        check_field(state.u_tilde, self.op.manifold)
        if state.measure != self.op.measure:
            raise FlowError(f"state measure {state.measure!r} differs from operator measure {self.op.measure!r}")
        b = self._rhs @ state.values
        u = self._lu.solve(b)
        res = np.max(np.abs(self._lhs @ u - b)) / max(np.max(np.abs(b)), 1e-300)
        if not res <= self.residual_tol:
            raise FlowError(f"linear solve failed: relative residual {res:.3e}")
        w = self.op.weights
        vals, mass, clamped = _normalized(u, w)
        drift = mass - state.mass
        log.debug("t=%.6g mass drift %.3e", state.time + self.dt, drift)
        return HeatState(state.u_tilde.with_values(vals), state.time + self.dt,
                         state.measure, drift, clamped)


def step(state: HeatState, dt: float, op: LaplacianOperator, scheme: str = "crank_nicolson",
         dt_max: float = DT_MAX) -> HeatState:
    return HeatStepper(op, dt, scheme, dt_max).step(state)


def truncation_bound(eigenvalues, k: int, t: float) -> float:
    """``k * exp(-lam_{k-1} t)``, the bound on the dropped spectral tail."""
    return k * math.exp(-float(eigenvalues[k - 1]) * t)


def required_eigenpairs(spectrum: SpectralData, t: float, tol: float = TRUNCATION_TOL) -> Optional[int]:
    """Smallest usable ``k`` for time ``t``; None if the computed spectrum is too short."""
    if spectrum.complete:
        return 1
    lam = spectrum.eigenvalues
    for k in range(1, spectrum.k + 1):
        if truncation_bound(lam, k, t) <= tol:
            return k
    return None


def _kernel_weights(spectrum: SpectralData, k: int, t: float) -> np.ndarray:
    return np.exp(-np.asarray(spectrum.eigenvalues[:k]) * t)


def heat_kernel(spectrum: SpectralData, spec: KernelSpec, t: float) -> HeatState:
    """``u_tilde(y) = sum_{i<k} exp(-lam_i t) phi_i(x0) phi_i(y)``, mass-renormalized.

    A complete spectrum (k = vertex count) is the exact semi-discrete kernel
    and skips the truncation test.
    """
    op = spectrum.op
    k = int(spec.eigenpairs_used)
    if spec.measure != op.measure:
        raise FlowError(f"kernel measure {spec.measure!r} differs from spectrum measure {op.measure!r}")
    if not 1 <= k <= spectrum.k:
        raise KernelTruncationError(f"eigenpairs_used={k} outside available spectrum size {spectrum.k}")
    if not t > 0:
        raise KernelTruncationError(f"kernel time must be positive, got {t}")
    exact = k == op.vertex_count
    if not exact:
        bound = truncation_bound(spectrum.eigenvalues, k, t)
        if bound > TRUNCATION_TOL:
            need = required_eigenpairs(spectrum, t)
            hint = f"k={need}" if need else (
                f"more than the {spectrum.k} computed eigenpairs (full spectrum: {op.vertex_count})")
            raise KernelTruncationError(
                f"t={t} too small for k={k} eigenpairs: tail bound {bound:.3e} > {TRUNCATION_TOL:g}; "
                f"requires {hint}", required_k=need or op.vertex_count)
    phi = spectrum.eigenfields[:, :k]
    x0 = int(spec.source_vertex)
    vals = (phi * phi[x0]) @ _kernel_weights(spectrum, k, t)
    fld = op.manifold.field(vals)
    return state_from_density(fld, t, spec.measure)


def kernel_value(spectrum: SpectralData, x: int, y: int, t: float, k: Optional[int] = None) -> float:
    """Single kernel entry ``H(x, y, t)``, symmetric in (x, y) bit for bit."""
    k = spectrum.k if k is None else k
    phi = spectrum.eigenfields
    prod = phi[x, :k] * phi[y, :k]
    return float(np.sum(_kernel_weights(spectrum, k, t) * prod))


def sqrt_state(state: HeatState) -> ScalarField:
    return state.u_tilde.with_values(np.sqrt(np.maximum(state.values, 0.0)))


@dataclass(frozen=True, eq=False)
class Potential:
    """``f = -log u_tilde - (d/2) log(4 pi tau)`` with its density mask.

    Masked vertices (``u_tilde <= floor``) carry the floor value of ``f`` so
    that stencils stay finite; they are excluded from every integral.
    """

    f: ScalarField
    mask: np.ndarray  # True where the vertex is used
    floor: float
    tau: float
    d: float
    masked_mass: float


def density_floor(values) -> float:
    return DENSITY_FLOOR * float(np.max(values))


def compute_f(state: HeatState, tau: float, d: float,
              masked_mass_limit: float = MASKED_MASS_LIMIT) -> Potential:
    if not tau > 0:
        raise ValueError(f"tau must be positive, got {tau}")
    v = state.values
    floor = density_floor(v)
    mask = v > floor
    w = state.manifold.weights(state.measure)
    masked_mass = float(np.dot(np.where(mask, 0.0, v), w))
    if masked_mass > masked_mass_limit:
        raise DegenerateDensityError(
            f"masked density carries mass {masked_mass:.3e} > limit {masked_mass_limit:g}")
    if not mask.all():
        log.debug("compute_f: %d of %d vertices masked (mass %.3e)", (~mask).sum(), v.size, masked_mass)
    f = -np.log(np.maximum(v, floor)) - 0.5 * d * math.log(4.0 * math.pi * tau)
    return Potential(state.u_tilde.with_values(f), mask, floor, float(tau), float(d), masked_mass)
