import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import optimize

from conftest import torus
from entroflow import entropy as E
from entroflow.errors import (InvalidDimensionError, NonpositiveOmegaError, NormalizationError,
                              RemainderConstraintError, UnsupportedTopologyError)
from entroflow.flow import compute_f, sqrt_state, state_from_density
from entroflow.manifold import attach_weight
from entroflow.operators import assemble_laplacian


def _const_u(M, measure="mu"):
    return M.constant(M.volume(measure) ** -0.5)


# -- scale minimization -------------------------------------------------------------

def test_h_min_examples():
    assert E.h_min(1.0, 2.0) == (1.0, 1.0)
    for n in (1, 2, 3, 5):
        assert E.h_min(n / 2, n)[1] == pytest.approx(n / 2, abs=1e-14)
    with pytest.raises(NonpositiveOmegaError):
        E.h_min(0.0, 2)


@settings(max_examples=60, deadline=None)
@given(st.floats(1e-3, 100.0), st.floats(1.0, 5.0))
def test_h_min_is_the_minimum(omega, d):
    s_star, val = E.h_min(omega, d)

    def h(s):
        return omega * s - 0.5 * d * math.log(s)
    assert h(s_star) == pytest.approx(val, rel=1e-12, abs=1e-12)
    for s in (0.5 * s_star, 0.99 * s_star, 1.01 * s_star, 3 * s_star):
        assert h(s) >= val - 1e-12


def test_h_min_against_golden_section():
    rng = np.random.default_rng(11)
    for omega, d in zip(rng.uniform(1e-3, 100, 20), rng.uniform(1, 5, 20)):
        _, val = E.h_min(omega, d)
        # search over x = log s, where h is convex, from a bracket blind to the closed form
        res = optimize.minimize_scalar(lambda x: omega * math.exp(x) - 0.5 * d * x,
                                       bracket=(-30.0, 30.0), method="golden",
                                       options={"xtol": 1e-12})
        assert abs(res.fun - val) <= 1e-8


def test_b_constant():
    assert E.b_const(2) == pytest.approx(-math.log(math.pi) - 1, rel=1e-15)
    assert E.c_const(4.0) == E.b_const(4.0)


# -- parameters and omega ----------------------------------------------------------------

def test_remainder_constraint_named():
    with pytest.raises(RemainderConstraintError, match=r"a > -lambda"):
        E.EntropyParams(-5.0, 2, "mu", 1.0)
    with pytest.raises(RemainderConstraintError, match=r"a > -kappa"):
        E.EntropyParams(-1.0, 4, "nu", 1.0)
    E.EntropyParams(-0.5, 2, "mu", 1.0)


def test_omega_of_constant(torus16):
    u = _const_u(torus16.manifold)
    assert E.omega(u, E.EntropyParams(0.5, 2), torus16.op) == 0.5
    with pytest.raises(NonpositiveOmegaError):
        E.omega(u, E.EntropyParams(-0.1, 2, first_nonzero=1.0), torus16.op)


def test_normalization_enforced(torus16):
    u = torus16.manifold.constant(1.0)
    for fn in (lambda: E.omega(u, E.EntropyParams(0.5, 2), torus16.op),
               lambda: E.log_entropy_Y0(u, torus16.op, 2),
               lambda: E.adjusted_Ya(u, E.EntropyParams(0.5, 2), 1.0, torus16.op)):
        with pytest.raises(NormalizationError):
            fn()


def test_dirichlet_form_converges_to_gradient_energy():
    # quarter Fisher information of u^2 against the plain |grad u|^2 of a smooth field
    rel = []
    for res in (32, 64):
        M = torus(res)
        op = assemble_laplacian(M)
        u = np.exp(0.5 * np.cos(M.positions[:, 0]) + 0.3 * np.sin(M.positions[:, 1]))
        u = M.field(u / math.sqrt(np.dot(u * u, op.weights)))
        x, y = M.positions.T
        exact = np.dot(u.values**2 * (0.25 * np.sin(x) ** 2 + 0.09 * np.cos(y) ** 2), op.weights)
        rel.append(abs(E.dirichlet_energy(u, op) - exact) / exact)
    assert rel[1] < rel[0] / 3.5


# -- W ----------------------------------------------------------------------------------

def test_ni_entropy_constant_density(torus16):
    M = torus16.manifold
    s = state_from_density(M.constant(1.0), 0.0)
    W = E.ni_entropy(compute_f(s, 1.0, 2), s, torus16.op).value
    assert W == pytest.approx(math.log(math.pi) - 2, abs=1e-13)


@pytest.mark.parametrize("t", [0.05, 0.3, 1.5])
def test_ni_entropy_rewrite(torus32, t):
    s = torus32.kernel(t)
    u = sqrt_state(s)
    W = E.ni_entropy(compute_f(s, t, 2), s, torus32.op).value
    for a in (-0.5, 0.0, 0.25, 3.0):
        assert abs(W - E.ni_entropy_rewritten(u, a, t, 2, torus32.op)) <= 1e-10


def test_entropy_at_optimal_scale(torus32, weighted32):
    for setup, d in ((torus32, 2.0), (weighted32, 4.0)):
        lam = setup.spectrum.first_nonzero
        for t in (0.1, 0.7):
            s = setup.kernel(t)
            u = sqrt_state(s)
            P = E.EntropyParams(0.5, d, setup.op.measure, lam)
            tau = E.optimal_scale(u, P, setup.op)
            W = E.ni_entropy(compute_f(s, tau, d), s, setup.op).value
            assert abs(W - E.entropy_at_optimal_scale(u, P, setup.op)) <= 1e-10
            # and through the adjusted entropy
            ya = E.adjusted_Ya(u, P, t, setup.op)
            rel = ya.value + 4 * P.a * t + E.b_const(d) - d * P.a / (2 * ya.omega)
            assert abs(W - rel) <= 1e-10


def test_lower_bound_holds(torus32):
    lam = torus32.spectrum.first_nonzero
    s = torus32.kernel(0.2)
    u = sqrt_state(s)
    for a in (-0.5, 0.5, 2.0):
        P = E.EntropyParams(a, 2, "mu", lam)
        for tau in (0.1, 0.5, 1.0, 2.0):
            W = E.ni_entropy(compute_f(s, tau, 2), s, torus32.op).value
            assert W - E.entropy_lower_bound(u, P, tau, torus32.op) >= -1e-9


# -- logarithmic entropies ------------------------------------------------------------------

def test_Y0_needs_nonconstant(torus16):
    with pytest.raises(NonpositiveOmegaError):
        E.log_entropy_Y0(_const_u(torus16.manifold), torus16.op, 2)


def test_Ya_of_constant(torus16):
    M = torus16.manifold
    u = _const_u(M)
    V = M.volume()
    assert E.log_entropy_Ya(u, E.EntropyParams(1.0, 2), torus16.op) == pytest.approx(math.log(V), rel=1e-14)
    ya = E.adjusted_Ya(u, E.EntropyParams(1.0, 2), 2.0, torus16.op)
    assert ya.value == pytest.approx(math.log(V) - 8, rel=1e-14)
    assert set(ya.components) == {"dirichlet", "log_density", "log_omega", "linear_t"}


def test_Ya_decreases_to_minus_infinity_as_a_drops(torus16):
    u = _const_u(torus16.manifold)
    lam = torus16.spectrum.first_nonzero
    vals = []
    for a in (1e-2, 1e-4, 1e-8):
        try:
            vals.append(E.log_entropy_Ya(u, E.EntropyParams(a, 2, first_nonzero=lam), torus16.op))
        except NonpositiveOmegaError:
            pytest.fail("omega must stay positive for a > 0")
    assert vals[0] > vals[1] > vals[2]
    assert vals[2] < vals[0] - 10


def test_adjusted_with_zero_remainder_is_Y0(torus32):
    s = torus32.kernel(0.3)
    u = sqrt_state(s)
    P = E.EntropyParams(0.0, 2, first_nonzero=torus32.spectrum.first_nonzero)
    for t in (0.0, 1.0, 5.0):
        assert E.adjusted_Ya(u, P, t, torus32.op).value == E.log_entropy_Y0(u, torus32.op, 2)


def test_derivative_in_a(torus32):
    s = torus32.kernel(0.4)
    u = sqrt_state(s)
    lam = torus32.spectrum.first_nonzero
    t, a, h = 0.4, 0.3, 1e-5
    ya = lambda a_: E.adjusted_Ya(u, E.EntropyParams(a_, 2, first_nonzero=lam), t, torus32.op)
    fd = (ya(a + h).value - ya(a - h).value) / (2 * h)
    assert abs(fd - (1.0 / ya(a).omega - 4 * t)) <= 1e-6


def test_weighted_Ha_with_zero_weight_matches_Ya(torus16):
    M = torus16.manifold
    W = attach_weight(M, M.constant(0.0), 4.0)
    op_nu = assemble_laplacian(W, "nu")
    s = torus16.kernel(0.3)
    u = sqrt_state(s)
    lam = torus16.spectrum.first_nonzero
    ha = E.weighted_Ha(W.field(u.values), E.EntropyParams(0.5, 4.0, "nu", lam), 0.3, op_nu)
    ya = E.adjusted_Ya(u, E.EntropyParams(0.5, 4.0, "mu", lam), 0.3, torus16.op)
    assert ha.value == ya.value


def test_weighted_Ha_of_constant(weighted32):
    W = weighted32.manifold
    u = _const_u(W, "nu")
    ha = E.weighted_Ha(u, E.EntropyParams(0.5, 4.0, "nu", 1.0), 1.5, weighted32.op)
    assert ha.value == pytest.approx(math.log(W.volume("nu")) + 2 * math.log(0.5) - 3.0, rel=1e-13)


def test_weighted_Ha_argument_checks(torus16, weighted32):
    u = _const_u(torus16.manifold)
    with pytest.raises(InvalidDimensionError):
        E.weighted_Ha(u, E.EntropyParams(0.5, 2), 1.0, torus16.op)
    with pytest.raises(ValueError):
        E.weighted_Ha(_const_u(weighted32.manifold, "nu"), E.EntropyParams(0.5, 4.0, "mu"), 1.0,
                      weighted32.op)


# -- dissipation -------------------------------------------------------------------------

def test_ni_dissipation_constant(torus16):
    M = torus16.manifold
    s = state_from_density(M.constant(1.0), 0.0)
    for tau in (0.5, 2.0):
        assert E.ni_dissipation(s, tau, torus16.op) == pytest.approx(2 / (2 * tau), rel=1e-13)
        assert E.rigidity_gap(s, tau, torus16.op) == pytest.approx(2 / (4 * tau**2), rel=1e-13)


def test_adjusted_dissipation_constant(torus16):
    M = torus16.manifold
    s = state_from_density(M.constant(1.0), 0.0)
    d = E.adjusted_dissipation(s, E.EntropyParams(0.7, 2), 1.0, torus16.op)
    # omega = a for a constant state, and the integrand is |(4w/n) g|^2
    assert d.value == pytest.approx(4 * 0.7, rel=1e-13)
    assert d.u_form == pytest.approx(4 * 0.7, rel=1e-13)


def test_adjusted_dissipation_forms_converge():
    from conftest import Setup
    gaps = []
    for res in (32, 64):
        S = Setup(torus(res))
        s = S.kernel(0.5)
        P = E.EntropyParams(0.5, 2, first_nonzero=S.spectrum.first_nonzero)
        d = E.adjusted_dissipation(s, P, 0.5, S.op)
        gaps.append(abs(d.value - d.u_form))
        assert d.value > 0 and d.u_form > 0
    assert gaps[1] <= gaps[0] / 3


def test_dissipation_unsupported_on_sphere(sphere2):
    s = sphere2.kernel(0.2)
    with pytest.raises(UnsupportedTopologyError):
        E.ni_dissipation(s, 0.2, sphere2.op)
    with pytest.raises(UnsupportedTopologyError):
        E.rigidity_gap(s, 0.2, sphere2.op)


def test_weighted_dissipation_zero_weight_reduction(torus16):
    M = torus16.manifold
    s_mu = torus16.kernel(0.3)
    lam = torus16.spectrum.first_nonzero
    for m in (3.0, 2.0 + 1e-6):
        W = attach_weight(M, M.constant(0.0), m)
        op = assemble_laplacian(W, "nu")
        s = state_from_density(W.field(s_mu.values), 0.3, "nu")
        wd = E.weighted_dissipation(s, E.EntropyParams(0.5, m, "nu", lam), 0.3, 0.3, op)
        base = E.ni_dissipation(s_mu, 0.3, torus16.op)
        assert abs(wd.tau_form - (base + (m - 2) / (2 * 0.3))) <= 1e-10
        adj = E.adjusted_dissipation(s_mu, E.EntropyParams(0.5, m, "mu", lam), 0.3, torus16.op)
        om = E.omega(sqrt_state(s_mu), E.EntropyParams(0.5, m), torus16.op)
        assert abs(wd.omega_form - (adj.value + 4 * om * (m - 2) / m)) <= 1e-10


def test_weighted_dissipation_needs_weight(torus16):
    s = torus16.kernel(0.3)
    with pytest.raises(InvalidDimensionError):
        E.weighted_dissipation(s, E.EntropyParams(0.5, 4.0, "nu"), 0.3, 0.3, torus16.op)
