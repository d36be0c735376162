"""Entropy functionals, scale minimization, and dissipation integrands.

All functionals of ``u`` (with ``int u^2 = 1``) share one discrete Dirichlet
energy: a quarter of the discrete Fisher information of ``u^2``,

    int |grad u|^2  :=  1/4 sum_edges w_ij (log u_i^2 - log u_j^2)(u_i^2 - u_j^2),

which is also what ``int |grad f|^2 u_tilde`` means inside Ni's ``W``.  With
a single primitive the algebraic relations between ``W``, ``Y_a`` and the
lower bound hold to rounding error, and ``-int u^2 log u^2`` has exactly
this Fisher information as its time derivative along the discrete flow.

The dimension parameter ``d`` is always explicit: ``d = n`` for the
Laplacian, ``d = m`` (Bakry-Emery dimension) for the drift Laplacian.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from .errors import (DegenerateDensityError, InvalidDimensionError, NonpositiveOmegaError,
                     NormalizationError, RemainderConstraintError)
from .flow import DENSITY_FLOOR, MASKED_MASS_LIMIT, HeatState, Potential, compute_f, sqrt_state
from .manifold import ScalarField, check_field
from .operators import (LaplacianOperator, bakry_emery_form, fisher_density, gradient, hessian,
                        ricci_form, weight_derivatives)

NORMALIZATION_TOL = 1e-8


@dataclass(frozen=True)
class EntropyParams:
    """Remainder ``a``, dimension ``d``, measure, and the spectral gap ``lam``.

    Enforces the remainder condition ``a > -lambda`` (``a > -kappa`` for the
    drift Laplacian).
    """

    a: float
    d: float
    measure: str = "mu"
    first_nonzero: float = 0.0

    def __post_init__(self):
        sym = "kappa" if self.measure == "nu" else "lambda"
        if not self.a > -self.first_nonzero:
            raise RemainderConstraintError(
                f"remainder constraint a > -{sym} violated: a={self.a:g}, "
                f"{sym}={self.first_nonzero:.6g} (logarithmic entropy with remainder a "
                f"requires a > -{sym})")


@dataclass(frozen=True)
class EntropyValue:
    value: float
    omega: float = float("nan")
    components: dict = field(default_factory=dict)

    def __float__(self):
        return self.value


class DensityTerms(NamedTuple):
    mass: float
    neg_entropy: float  # -int u^2 log u^2
    dirichlet: float  # int |grad u|^2
    mask: np.ndarray


def density_terms(u: ScalarField, op: LaplacianOperator, check_mass: bool = True) -> DensityTerms:
    check_field(u, op.manifold)
    w = op.weights
    p = np.asarray(u.values, dtype=float) ** 2
    mass = float(np.dot(p, w))
    if check_mass and abs(mass - 1.0) > NORMALIZATION_TOL:
        raise NormalizationError(f"int u^2 = {mass:.12g}; entropies need 1 within {NORMALIZATION_TOL:g}")
    floor = DENSITY_FLOOR * float(np.max(p))
    mask = p > floor
    masked = float(np.dot(np.where(mask, 0.0, p), w))
    if masked > MASKED_MASS_LIMIT:
        raise DegenerateDensityError(f"masked density carries mass {masked:.3e} > limit {MASKED_MASS_LIMIT:g}")
    pc = np.maximum(p, floor)
    wm = np.where(mask, w, 0.0)
    neg_entropy = -float(np.dot(wm, pc * np.log(pc)))
    dirichlet = 0.25 * float(np.dot(wm, fisher_density(pc, op)))
    return DensityTerms(mass, neg_entropy, dirichlet, mask)


def dirichlet_energy(u: ScalarField, op: LaplacianOperator) -> float:
    return density_terms(u, op).dirichlet


def _omega(terms: DensityTerms, a: float) -> float:
    om = terms.dirichlet + a
    if not om > 0:
        raise NonpositiveOmegaError(
            f"omega = int|grad u|^2 + a = {terms.dirichlet:.6g} + ({a:g}) = {om:.6g} <= 0; "
            "log entropy undefined")
    return om


def omega(u: ScalarField, params: EntropyParams, op: LaplacianOperator) -> float:
    return _omega(density_terms(u, op), params.a)


# -- Ni / Li entropy -------------------------------------------------------------

def ni_entropy(pot: Potential, state: HeatState, op: LaplacianOperator) -> EntropyValue:
    """``int (tau |grad f|^2 + f - d) u_tilde d(measure)`` over unmasked vertices.

    With ``d = m`` and the weighted measure this is Li's entropy for the
    weighted heat equation.
    """
    check_field(state.u_tilde, op.manifold)
    w = np.where(pot.mask, op.weights, 0.0)
    p = np.maximum(state.values, pot.floor)
    fisher = float(np.dot(w, fisher_density(p, op)))
    f_term = float(np.dot(w, pot.f.values * state.values))
    mass = float(np.dot(w, state.values))
    value = pot.tau * fisher + f_term - pot.d * mass
    return EntropyValue(value, components={"fisher": fisher, "f_moment": f_term, "mass": mass})


def ni_entropy_rewritten(u: ScalarField, a: float, tau: float, d: float, op: LaplacianOperator) -> float:
    """The same entropy written through ``u = sqrt(u_tilde)`` and an arbitrary ``a``:

    ``-int u^2 log u^2 + 4 tau (int |grad u|^2 + a) - 4 a tau - (d/2) log(4 pi tau) - d``
    """
    t = density_terms(u, op)
    return (t.neg_entropy + 4.0 * tau * (t.dirichlet + a) - 4.0 * a * tau
            - 0.5 * d * math.log(4.0 * math.pi * tau) - d)


# -- logarithmic entropies -----------------------------------------------------------

def log_entropy_Y0(u: ScalarField, op: LaplacianOperator, d: float) -> float:
    """``-int u^2 log u^2 + (d/2) log int |grad u|^2``; needs a nonconstant ``u``."""
    t = density_terms(u, op)
    return t.neg_entropy + 0.5 * d * math.log(_omega(t, 0.0))


def log_entropy_Ya(u: ScalarField, params: EntropyParams, op: LaplacianOperator) -> float:
    t = density_terms(u, op)
    return t.neg_entropy + 0.5 * params.d * math.log(_omega(t, params.a))


def adjusted_Ya(u: ScalarField, params: EntropyParams, t: float, op: LaplacianOperator) -> EntropyValue:
    """``Y_a(u, t) = -int u^2 log u^2 + (d/2) log(int |grad u|^2 + a) - 4 a t``."""
    terms = density_terms(u, op)
    om = _omega(terms, params.a)
    log_term = 0.5 * params.d * math.log(om)
    lin = -4.0 * params.a * t
    return EntropyValue(terms.neg_entropy + log_term + lin, om,
                        {"dirichlet": terms.dirichlet, "log_density": terms.neg_entropy,
                         "log_omega": log_term, "linear_t": lin})


def weighted_Ha(u: ScalarField, params: EntropyParams, t: float, op: LaplacianOperator) -> EntropyValue:
    """Adjusted logarithmic entropy of a metric measure space (integrals against ``nu``)."""
    if op.manifold.be_dimension is None:
        raise InvalidDimensionError("weighted_Ha needs a Bakry-Emery dimension (attach_weight)")
    if params.measure != "nu" or op.measure != "nu":
        raise ValueError("weighted_Ha integrates against nu: use the nu operator and measure='nu'")
    return adjusted_Ya(u, params, t, op)


# -- scale minimization and lower bounds ------------------------------------------

def h_min(omega: float, d: float):
    """Minimizer and minimum of ``s -> omega s - (d/2) log s`` on ``s > 0``."""
    if not omega > 0:
        raise NonpositiveOmegaError(f"h_min needs omega > 0, got {omega}")
    s_star = d / (2.0 * omega)
    return s_star, 0.5 * d * math.log(omega) + 0.5 * d * (1.0 - math.log(d / 2.0))


def b_const(n: float) -> float:
    return -0.5 * n * math.log(math.pi) - 0.5 * n * (1.0 + math.log(n / 2.0))


def c_const(m: float) -> float:
    return b_const(m)


def entropy_lower_bound(u: ScalarField, params: EntropyParams, tau: float, op: LaplacianOperator) -> float:
    """``-int u^2 log u^2 + (d/2) log omega - 4 a tau + b(d)``, a lower bound for W(f, tau)."""
    t = density_terms(u, op)
    om = _omega(t, params.a)
    return t.neg_entropy + 0.5 * params.d * math.log(om) - 4.0 * params.a * tau + b_const(params.d)


def optimal_scale(u: ScalarField, params: EntropyParams, op: LaplacianOperator) -> float:
    """``tau* = d / (8 omega)``, where the lower bound is attained."""
    return params.d / (8.0 * omega(u, params, op))


def entropy_at_optimal_scale(u: ScalarField, params: EntropyParams, op: LaplacianOperator) -> float:
    """Closed form of ``W(f, d / (8 omega))``:
    ``-int u^2 log u^2 + (d/2) log omega - d a / (2 omega) + b(d)``."""
    t = density_terms(u, op)
    om = _omega(t, params.a)
    d = params.d
    return t.neg_entropy + 0.5 * d * math.log(om) - d * params.a / (2.0 * om) + b_const(d)


# -- dissipation integrands ----------------------------------------------------------

class Dissipation(NamedTuple):
    value: float  # f-form
    u_form: float = float("nan")


def _masked_weights(mask, op):
    return np.where(mask, op.weights, 0.0)


def ni_dissipation(state: HeatState, tau: float, op: LaplacianOperator, d: float | None = None) -> float:
    """``int 2 tau (|Hess f - g/(2 tau)|^2 + Ric(grad f, grad f)) u_tilde``, the decrease rate of W."""
    manifold = op.manifold
    d = manifold.dimension if d is None else d
    pot = compute_f(state, tau, d)
    H = hessian(pot.f, op)
    g = gradient(pot.f, op)
    integrand = H.frobenius_sq_shifted(1.0 / (2.0 * tau)) + ricci_form(manifold, np.einsum("ij,ij->i", g, g))
    w = _masked_weights(pot.mask, op)
    return float(2.0 * tau * np.dot(w, integrand * state.values))


def adjusted_dissipation(state: HeatState, params: EntropyParams, t: float,
                         op: LaplacianOperator) -> Dissipation:
    """Lower bound for ``-dY_a/dt`` in both algebraic forms.

    f-form: ``(d/4w) int (|fbar_ij - (4w/d) g|^2 + Ric(grad fbar, grad fbar)) u_tilde``
    u-form: ``(d/4w) int [|-2 Hess u/u + 2 grad u (x) grad u/u^2 - (4w/d) g|^2
    + 4 Ric(grad u/u, grad u/u)] u^2``.
    The two agree in the continuum; on a grid they differ at O(dx^2).
    """
    manifold = op.manifold
    d = params.d
    u = sqrt_state(state)
    om = omega(u, params, op)
    c = 4.0 * om / d
    pot = compute_f(state, t, d)
    w = _masked_weights(pot.mask, op)
    H = hessian(pot.f, op)
    g = gradient(pot.f, op)
    f_int = H.frobenius_sq_shifted(c) + ricci_form(manifold, np.einsum("ij,ij->i", g, g))
    f_form = d / (4.0 * om) * float(np.dot(w, f_int * state.values))

    uv = np.where(pot.mask, u.values, 1.0)
    Hu = hessian(u, op).values
    gu = gradient(u, op) / uv[:, None]
    T = -2.0 * Hu / uv[:, None, None] + 2.0 * np.einsum("ki,kj->kij", gu, gu)
    T = T - c * np.eye(manifold.dimension)[None]
    u_int = np.einsum("kij,kij->k", T, T) + 4.0 * ricci_form(manifold, np.einsum("ij,ij->i", gu, gu))
    u_form = d / (4.0 * om) * float(np.dot(w, u_int * state.values))
    return Dissipation(f_form, u_form)


class WeightedDissipation(NamedTuple):
    tau_form: float  # decrease rate of Li's W at scale tau
    omega_form: float  # lower bound for -dH_a/dt


def _weighted_integrand(pot, op, pref, c, alpha, beta):
    manifold = op.manifold
    H = hessian(pot.f, op)
    g = gradient(pot.f, op)
    grad_h, hess_h = weight_derivatives(op)
    ric = bakry_emery_form(manifold, g, hess_h, grad_h)
    drift = (alpha * np.einsum("ij,ij->i", grad_h, g) + beta) ** 2
    return pref * (H.frobenius_sq_shifted(c) + ric) + drift


def weighted_dissipation(state: HeatState, params: EntropyParams, tau: float, t: float,
                         op: LaplacianOperator) -> WeightedDissipation:
    """Drift-Laplacian dissipation in its ``tau`` form and its ``omega`` form.

    tau form:  ``int 2 tau [|Hess f - g/(2 tau)|^2 + Ric_mn(grad f, grad f)] u_tilde dnu
    + int (sqrt(2 tau/(m-n)) grad h . grad f + sqrt((m-n)/(2 tau)))^2 u_tilde dnu``

    omega form: ``(m/4w) int (|fbar_ij - (4w/m) g|^2 + Ric_mn(grad fbar, grad fbar)) u_tilde dnu
    + int (sqrt(m/(4w(m-n))) grad h . grad fbar + sqrt(4w(m-n)/m))^2 u_tilde dnu``
    """
    manifold = op.manifold
    m = manifold.be_dimension
    if m is None or op.measure != "nu":
        raise InvalidDimensionError("weighted_dissipation needs a weighted manifold and the nu operator")
    n = manifold.dimension
    if not m > n:
        raise InvalidDimensionError(f"Bakry-Emery dimension m={m} must exceed n={n}")
    pot = compute_f(state, tau, m)
    w = _masked_weights(pot.mask, op)
    tau_int = _weighted_integrand(pot, op, 2.0 * tau, 1.0 / (2.0 * tau),
                                  math.sqrt(2.0 * tau / (m - n)), math.sqrt((m - n) / (2.0 * tau)))
    tau_form = float(np.dot(w, tau_int * state.values))

    om = omega(sqrt_state(state), params, op)
    pot_t = compute_f(state, t, m)
    om_int = _weighted_integrand(pot_t, op, m / (4.0 * om), 4.0 * om / m,
                                 math.sqrt(m / (4.0 * om * (m - n))), math.sqrt(4.0 * om * (m - n) / m))
    om_form = float(np.dot(_masked_weights(pot_t.mask, op), om_int * state.values))
    return WeightedDissipation(tau_form, om_form)


def rigidity_gap(state: HeatState, t: float, op: LaplacianOperator) -> float:
    """``int |Hess f - g/(2t)|^2 u_tilde dmu``; zero exactly for the Euclidean heat kernel."""
    pot = compute_f(state, t, op.manifold.dimension)
    H = hessian(pot.f, op)
    return float(np.dot(_masked_weights(pot.mask, op), H.frobenius_sq_shifted(1.0 / (2.0 * t)) * state.values))
