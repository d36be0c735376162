import math

import numpy as np
import pytest
from scipy.integrate import quad

from entroflow.config import registry_config
from entroflow.diagnostics import (EntropyTrace, Verdict, classify_rigidity, euclidean_oracle,
                                   euclidean_quadrature, quadrature_dYa_dt, run_trace,
                                   standard_verdicts, tolerance_model, trace_derivative,
                                   verify_dissipation, verify_mass, verify_monotone)
from entroflow.entropy import b_const
from entroflow.errors import (NonpositiveOmegaError, RemainderConstraintError,
                              UnsupportedTopologyError)

SMALL_TORUS = ["geometry.resolution=[32,32]"]


@pytest.fixture(scope="module")
def small_torus_trace():
    cfg = registry_config("torus_kernel", SMALL_TORUS)
    return cfg, run_trace(cfg)


# -- oracle ------------------------------------------------------------------------------

@pytest.mark.parametrize("n", [1, 2, 3])
@pytest.mark.parametrize("a", [0.0, 0.25, 1.0])
def test_oracle_matches_quadrature(n, a):
    ts = np.array([0.05, 0.3, 1.0, 4.0, 10.0])
    tr = euclidean_oracle(n, a, ts)
    for i, t in enumerate(ts):
        q = euclidean_quadrature(n, a, t)
        for col in ("mass", "W", "Y0", "Ya", "omega", "adj_dissipation", "rigidity_gap"):
            assert abs(q[col] - tr[col][i]) <= 1e-8, (col, t)
        assert abs(q["neg_entropy"] - (0.5 * n * math.log(4 * math.pi * t) + 0.5 * n)) <= 1e-8


def test_oracle_headline_values():
    tr = euclidean_oracle(2, 0.0, [0.1, 1.0, 7.0])
    np.testing.assert_allclose(tr["Y0"], math.log(math.pi) + 1, rtol=1e-15)
    assert tr["Y0"][0] == pytest.approx(2.14473, abs=1e-5)
    assert tr["Y0"][0] == -b_const(2)
    tr = euclidean_oracle(2, 0.25, [1.0])
    assert tr["adj_dissipation"][0] == pytest.approx(0.5, rel=1e-15)
    assert quadrature_dYa_dt(2, 0.25, 1.0) == pytest.approx(-0.5, abs=1e-6)


def test_oracle_rejects_negative_remainder():
    with pytest.raises(RemainderConstraintError):
        euclidean_oracle(2, -0.1, [1.0])
    with pytest.raises(RemainderConstraintError):
        euclidean_quadrature(2, -0.1, 1.0)


def test_oracle_verdicts_fine_grid():
    # trapezoid sampling error ~ ds^2/12 |Y'''|, far below 1e-8 at ds = 1e-4
    tr = euclidean_oracle(2, 0.25, np.linspace(1.0, 1.02, 201))
    assert all(v.passed for v in verify_dissipation(tr, 1e-8))
    assert verify_monotone(euclidean_oracle(3, 0.0, np.linspace(0.05, 10, 50)), "Y0", 1e-12).passed
    assert classify_rigidity(tr, 1e-12).passed


def test_trace_derivative_centred():
    tr = euclidean_oracle(2, 0.25, np.linspace(0.5, 1.5, 1001))
    d = trace_derivative(tr, "Ya")
    exact = -tr["adj_dissipation"]
    assert np.max(np.abs(d[1:-1] - exact[1:-1])) < 1e-6
    assert np.max(np.abs(d[[0, -1]] - exact[[0, -1]])) < 1e-3


# -- verifiers and negative controls -----------------------------------------------------------

def test_monotone_negative_controls():
    t = np.linspace(0, 1, 5)
    up = EntropyTrace({"t": t, "X": [0.0, -1.0, -0.5, -2.0, -3.0]})
    v = verify_monotone(up, "X", 1e-6)
    assert not v.passed and v.worst == pytest.approx(0.5)
    assert v.worst > v.tol
    shuffled = EntropyTrace({"t": t[[0, 2, 1, 3, 4]], "X": -t[[0, 2, 1, 3, 4]]})
    assert not verify_monotone(shuffled, "X", 1e-6).passed
    with pytest.raises(KeyError):
        verify_monotone(up, "nope", 1e-6)


def test_monotone_invariant_under_subsampling(small_torus_trace):
    _, tr = small_torus_trace
    for col in ("W", "Ya"):
        full = verify_monotone(tr, col, 1e-6).passed
        for idx in (slice(None, None, 2), slice(1, None, 3), [0, 7, 8, 30, 39]):
            assert verify_monotone(tr.subsample(idx), col, 1e-6).passed == full


def test_dissipation_negative_controls(small_torus_trace):
    cfg, tr = small_torus_trace
    tol = tolerance_model(tr)
    assert all(v.passed for v in verify_dissipation(tr, tol))
    bad = EntropyTrace(dict(tr.columns), tr.meta)
    bad.columns["adj_dissipation"] = tr["adj_dissipation"] * 3 + 1
    bad.columns["dissipation"] = -tr["dissipation"]
    for c in ("int_dissipation", "int_adj_dissipation"):
        del bad.columns[c]
    assert not any(v.passed for v in verify_dissipation(bad, tol))
    rev = tr.subsample(slice(None, None, -1))
    assert not any(v.passed for v in verify_dissipation(rev, tol))
    with pytest.raises(KeyError):
        verify_dissipation(EntropyTrace({"t": [0, 1], "Ya": [0, 0]}), 1.0)


def test_every_verifier_fails_on_corruption(small_torus_trace):
    cfg, tr = small_torus_trace
    assert all(v.passed for v in standard_verdicts(tr, cfg))
    entropies = ("W", "Y0", "Ya", "omega", "rigidity_gap")
    flipped = EntropyTrace({k: (-v if k in entropies else v) for k, v in tr.columns.items()},
                           tr.meta)
    flipped.columns["mass"] = tr["mass"] + 1e-6
    for v in standard_verdicts(flipped, cfg):
        assert not v.passed, v.name
        assert v.worst > v.tol


def test_verdict_line_format():
    line = Verdict("monotone-Ya", True, -1.5e-3, 1e-6).line()
    assert line == "monotone-Ya PASS worst=-1.500000e-03 tol=1.000000e-06"


def test_mass_verdict(small_torus_trace):
    assert verify_mass(small_torus_trace[1]).passed


# -- run_trace ----------------------------------------------------------------------------------

def test_torus_trace_rows(small_torus_trace):
    cfg, tr = small_torus_trace
    assert len(tr) == 40
    assert np.all(np.diff(tr["t"]) > 0)
    assert tr["t"][0] == 0.05 and tr["t"][-1] == pytest.approx(2.0)
    assert np.max(np.abs(tr["mass"] - 1)) <= 1e-9
    assert np.all(tr["dissipation"] >= 0) and np.all(tr["adj_dissipation"] >= 0)
    # k = 512 of 1024 is too short at t = 0.05: the full spectrum is used
    assert tr.meta["eigenpairs_used"] == 1024


def test_spectrum_escalation_recorded():
    cfg = registry_config("torus_kernel", ["geometry.resolution=[24,24]", "k=20"])
    tr = run_trace(cfg)
    assert tr.meta["eigenpairs_requested"] == 20
    assert tr.meta["eigenpairs_used"] == 576


def test_large_t_gap_classifies_non_euclidean(small_torus_trace):
    _, tr = small_torus_trace
    v = classify_rigidity(tr, 1e-6)
    assert not v.passed
    # late in the flow the kernel approaches the constant state, whose gap is n / (4 t^2)
    late = run_trace(registry_config("torus_kernel", SMALL_TORUS + ["t_start=9", "t_end=10", "dt=0.02"]))
    assert late["rigidity_gap"][-1] == pytest.approx(2 / (4 * 10.0**2), rel=1e-3)


def test_sphere_trace_has_no_grid_columns():
    cfg = registry_config("sphere_kernel", ["geometry.subdivision_level=2"])
    tr = run_trace(cfg)
    assert "dissipation" not in tr and "rigidity_gap" not in tr
    assert {"W", "Y0", "Ya", "omega"} <= set(tr.names)
    with pytest.raises(UnsupportedTopologyError):
        classify_rigidity(tr, 1e-6)


def test_weighted_trace_columns():
    cfg = registry_config("weighted_torus", SMALL_TORUS)
    tr = run_trace(cfg)
    assert "Ha" in tr and "Ya" not in tr
    assert all(v.passed for v in standard_verdicts(tr, cfg))


def test_remainder_checked_against_spectrum():
    cfg = registry_config("torus_kernel", SMALL_TORUS + ["a=-5"])
    with pytest.raises(RemainderConstraintError, match="a > -lambda"):
        run_trace(cfg)


def test_negative_remainder_loses_omega_late():
    cfg = registry_config("torus_kernel_neg", SMALL_TORUS + ["t_end=2.0", "sample_count=40"])
    with pytest.raises(NonpositiveOmegaError):
        run_trace(cfg)


def test_integrated_dissipation_columns(small_torus_trace):
    _, tr = small_torus_trace
    assert tr["int_dissipation"][0] == 0.0
    assert np.all(np.diff(tr["int_adj_dissipation"]) > 0)
    # the running integral agrees with a trapezoid over the (coarser) rows
    t, d = tr["t"], tr["dissipation"]
    coarse = np.concatenate([[0.0], np.cumsum(0.5 * np.diff(t) * (d[1:] + d[:-1]))])
    assert np.max(np.abs(tr["int_dissipation"] - coarse)) < 0.05 * coarse[-1]


def test_oracle_integral_is_exact():
    ts = np.linspace(0.05, 10, 7)
    tr = euclidean_oracle(3, 0.5, ts)
    ref = [quad(lambda s: 32 * 0.25 * s / (3 + 4 * s), 0.05, t)[0] for t in ts]
    np.testing.assert_allclose(tr["int_adj_dissipation"], ref, rtol=1e-12, atol=1e-14)
    # exact integrals make the coarse seven-row check pass at oracle tolerance
    assert all(v.passed for v in verify_dissipation(tr, 1e-8))


def test_csv_round_trip(tmp_path, small_torus_trace):
    _, tr = small_torus_trace
    p = tmp_path / "trace.csv"
    tr.to_csv(p)
    back = EntropyTrace.from_csv(p)
    assert back.names == tr.names
    for c in tr.names:
        np.testing.assert_array_equal(back[c], tr[c])
    assert p.read_text().splitlines()[0] == ",".join(tr.names)
