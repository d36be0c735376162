"""Scenario runs, entropy traces, verifiers, and the Euclidean oracle.

Verifiers are pure functions of an :class:`EntropyTrace`; the solver only
enters through :func:`run_trace`.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np
from scipy import integrate as spi
from scipy.special import gamma

from .config import ScenarioConfig
from .entropy import (EntropyParams, adjusted_dissipation, adjusted_Ya, b_const, log_entropy_Y0,
                      ni_dissipation, ni_entropy, rigidity_gap, weighted_dissipation, weighted_Ha)
from .errors import EntroflowError, RemainderConstraintError, UnsupportedTopologyError
from .flow import (HeatStepper, KernelSpec, compute_f, heat_kernel, required_eigenpairs,
                   sqrt_state)
from .manifold import attach_weight, build_flat_torus, build_sphere
from .operators import assemble_laplacian, low_spectrum

log = logging.getLogger(__name__)

COLUMN_ORDER = ("t", "mass", "W", "Y0", "Ya", "Ha", "omega", "dissipation",
                "adj_dissipation", "adj_dissipation_u", "int_dissipation", "int_adj_dissipation",
                "rigidity_gap")
MASS_TOL = 1e-9

__all__ = ["EntropyTrace", "Verdict", "run_trace", "verify_monotone", "verify_dissipation",
           "verify_mass", "classify_rigidity", "rigidity_gap", "euclidean_oracle",
           "euclidean_quadrature", "quadrature_dYa_dt", "tolerance_model", "trace_derivative",
           "build_scenario", "standard_verdicts", "format_verdict"]


@dataclass
class EntropyTrace:
    """Column-oriented entropy trace plus scenario metadata."""

    columns: dict
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.columns = {k: np.asarray(v, dtype=float) for k, v in self.columns.items()}
        lengths = {len(v) for v in self.columns.values()}
        if len(lengths) > 1:
            raise ValueError(f"trace columns have unequal lengths {sorted(lengths)}")

    def __len__(self):
        return len(self.columns["t"])

    def __getitem__(self, name) -> np.ndarray:
        if name not in self.columns:
            raise KeyError(f"trace has no column {name!r}; columns: {', '.join(self.names)}")
        return self.columns[name]

    def __contains__(self, name):
        return name in self.columns

    @property
    def names(self) -> list:
        return [c for c in COLUMN_ORDER if c in self.columns] + \
               [c for c in self.columns if c not in COLUMN_ORDER]

    def subsample(self, idx) -> "EntropyTrace":
        return EntropyTrace({k: v[idx] for k, v in self.columns.items()}, dict(self.meta))

    def to_csv(self, path) -> None:
        names = self.names
        data = np.column_stack([self.columns[c] for c in names])
        with open(path, "w") as fh:
            fh.write(",".join(names) + "\n")
            for row in data:
                fh.write(",".join(f"{x:.17g}" for x in row) + "\n")

    @classmethod
    def from_csv(cls, path, meta: Optional[dict] = None) -> "EntropyTrace":
        with open(path) as fh:
            header = fh.readline().strip().split(",")
        data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
        return cls({name: data[:, i] for i, name in enumerate(header)}, dict(meta or {}))


@dataclass(frozen=True)
class Verdict:
    name: str
    passed: bool
    worst: float
    tol: float

    def line(self) -> str:
        return format_verdict(self)


def format_verdict(v: Verdict) -> str:
    return f"{v.name} {'PASS' if v.passed else 'FAIL'} worst={v.worst:.6e} tol={v.tol:.6e}"


# -- scenario execution ----------------------------------------------------------------

def build_scenario(cfg: ScenarioConfig):
    """Manifold and operator for a mesh scenario (the weighted one uses ``nu``)."""
    geo = cfg.geometry
    if cfg.topology == "flat_torus":
        manifold = build_flat_torus(geo["resolution"], geo["side_lengths"])
    elif cfg.topology == "sphere":
        manifold = build_sphere(geo["subdivision_level"], geo["radius"])
    else:
        raise UnsupportedTopologyError(f"topology {cfg.topology!r} has no mesh")
    if cfg.weighted:
        amp = float(geo.get("weight_amplitude", 0.0))
        h = manifold.evaluate(lambda *x: amp * np.cos(x[0]))
        manifold = attach_weight(manifold, h, cfg.m)
        return manifold, assemble_laplacian(manifold, "nu")
    return manifold, assemble_laplacian(manifold, "mu")


def _sample_steps(n_steps: int, sample_count: int, dense: bool) -> np.ndarray:
    if dense:
        return np.arange(n_steps + 1)
    return np.unique(np.rint(np.linspace(0, n_steps, sample_count)).astype(int))


def _dissipations(state, cfg, params, op) -> dict:
    t = state.time
    if cfg.weighted:
        wd = weighted_dissipation(state, params, t, t, op)
        return {"dissipation": wd.tau_form, "adj_dissipation": wd.omega_form}
    ad = adjusted_dissipation(state, params, t, op)
    return {"dissipation": ni_dissipation(state, t, op), "adj_dissipation": ad.value,
            "adj_dissipation_u": ad.u_form}


def _row(state, cfg, params, op) -> dict:
    t = state.time
    u = sqrt_state(state)
    d = params.d
    row = {"t": t, "mass": state.mass}
    row["W"] = ni_entropy(compute_f(state, t, d), state, op).value
    if cfg.weighted:
        ha = weighted_Ha(u, params, t, op)
        row.update(Ha=ha.value, omega=ha.omega)
    else:
        ya = adjusted_Ya(u, params, t, op)
        row.update(Y0=log_entropy_Y0(u, op, d), Ya=ya.value, omega=ya.omega)
    return row


def run_trace(cfg: ScenarioConfig, dense: bool = False) -> EntropyTrace:
    """Kernel state at ``t_start``, stepped to ``t_end``, entropies recorded on samples.

    ``dense=True`` records every time step instead of ``sample_count`` rows.
    The remainder condition ``a > -lambda`` is checked against the computed
    spectrum before anything is stepped.
    """
    if cfg.kind == "euclidean_oracle":
        t_grid = np.linspace(cfg.t_start, cfg.t_end, cfg.sample_count)
        return euclidean_oracle(cfg.dimension, cfg.a, t_grid)

    manifold, op = build_scenario(cfg)
    N = manifold.vertex_count
    spectrum = low_spectrum(op, min(max(cfg.k, 2), N), seed=cfg.seed)
    lam = spectrum.first_nonzero
    d = cfg.m if cfg.weighted else manifold.dimension
    params = EntropyParams(cfg.a, d, op.measure, lam)

    k_eff = required_eigenpairs(spectrum, cfg.t_start)
    if k_eff is None:
        log.info("k=%d too short for t_start=%g; using the full spectrum (%d)", spectrum.k, cfg.t_start, N)
        spectrum = low_spectrum(op, N, seed=cfg.seed)
    k_eff = spectrum.k if spectrum.complete else k_eff

    state = heat_kernel(spectrum, KernelSpec(cfg.source_vertex, k_eff, op.measure), cfg.t_start)
    n_float = (cfg.t_end - cfg.t_start) / cfg.dt
    n_steps = int(round(n_float))
    if abs(n_steps - n_float) > 1e-9 * max(1.0, n_float):
        raise EntroflowError(f"(t_end - t_start)/dt = {n_float} is not an integer step count")
    stepper = HeatStepper(op, cfg.dt, cfg.scheme)
    grid = manifold.topology == "flat_torus"
    samples = set(_sample_steps(n_steps, cfg.sample_count, dense).tolist())
    rows, drift, clamped = [], 0.0, 0.0
    # running trapezoid integrals of the dissipations over every solver step
    integral = {"dissipation": 0.0, "adj_dissipation": 0.0}
    prev = None
    for i in range(n_steps + 1):
        if i > 0:
            state = stepper.step(state)
            drift = max(drift, abs(state.mass_correction))
            clamped = max(clamped, state.clamped)
            # pin the clock to the grid so sample times do not accumulate rounding
            state = replace(state, time=cfg.t_start + i * cfg.dt)
        diss = _dissipations(state, cfg, params, op) if grid else None
        if diss is not None and prev is not None:
            for key in integral:
                integral[key] += 0.5 * cfg.dt * (prev[key] + diss[key])
        prev = diss
        if i in samples:
            row = _row(state, cfg, params, op)
            if diss is not None:
                row.update(diss)
                row.update(int_dissipation=integral["dissipation"],
                           int_adj_dissipation=integral["adj_dissipation"])
                if not cfg.weighted:
                    row["rigidity_gap"] = rigidity_gap(state, state.time, op)
            rows.append(row)
    cols = {k: np.array([r[k] for r in rows]) for k in rows[0]}
    meta = {
        "scenario": cfg.name, "kind": cfg.kind, "a": cfg.a, "m": cfg.m, "dt": cfg.dt,
        "manifold": manifold.describe(), "mesh_size": manifold.mesh_size,
        "first_nonzero": lam, "eigenpairs_requested": cfg.k, "eigenpairs_used": k_eff,
        "scheme": cfg.scheme, "max_mass_drift": drift, "max_clamped": clamped,
        "tol_constant": cfg.tol_constant, "tol_scale": cfg.tol_scale,
    }
    return EntropyTrace(cols, meta)


# -- verifiers -------------------------------------------------------------------------

def _time_ok(trace: EntropyTrace) -> bool:
    return len(trace) >= 2 and bool(np.all(np.diff(trace["t"]) > 0))


def verify_monotone(trace: EntropyTrace, column: str, tol: float) -> Verdict:
    """Pass iff every consecutive difference of ``column`` is at most ``+tol``."""
    name = f"monotone-{column}"
    vals = trace[column]
    if not _time_ok(trace) or not np.all(np.isfinite(vals)):
        return Verdict(name, False, math.inf, tol)
    worst = float(np.max(np.diff(vals)))
    return Verdict(name, worst <= tol, worst, tol)


def tolerance_model(trace: EntropyTrace, tol_scale: Optional[float] = None) -> float:
    """``tol_scale * C * (dx^2 + dt)`` from the trace metadata; the oracle uses its fixed tolerance."""
    meta = trace.meta
    scale = meta.get("tol_scale", 1.0) if tol_scale is None else tol_scale
    if meta.get("kind") == "euclidean_oracle":
        return scale * meta.get("oracle_tol", 1e-8)
    return scale * meta["tol_constant"] * (meta["mesh_size"] ** 2 + meta["dt"])


def _interval_rates(trace, column):
    return np.diff(trace[column]) / np.diff(trace["t"])


def _interval_dissipation(trace, column):
    """Mean of a dissipation over each interval between consecutive rows.

    Uses the running integral column ``int_<column>`` when the trace has one
    (accumulated over every solver step), else the trapezoid of the two rows.
    """
    cum = f"int_{column}"
    if cum in trace:
        return _interval_rates(trace, cum)
    v = trace[column]
    return 0.5 * (v[1:] + v[:-1])


def verify_dissipation(trace: EntropyTrace, tol: float) -> list:
    """Dissipation checks in integrated form over consecutive rows.

    * ``dissipation-inequality``: ``Y(t1) - Y(t2) >= int_{t1}^{t2} adj_dissipation - tol (t2 - t1)``
      with ``Y = Ya`` (or ``Ha`` on a weighted trace);
    * ``W-equality``: ``|W(t2) - W(t1) + int_{t1}^{t2} dissipation| <= tol (t2 - t1)``.

    Both are reported per unit time, so ``tol`` bounds a rate.
    """
    ycol = "Ha" if "Ha" in trace else "Ya"
    for c in ("dissipation", "adj_dissipation", ycol, "W"):
        if c not in trace:
            raise KeyError(f"trace lacks column {c!r} (dissipation needs a grid scenario)")
    if not _time_ok(trace):
        return [Verdict("dissipation-inequality", False, math.inf, tol),
                Verdict("W-equality", False, math.inf, tol)]
    ineq = _interval_dissipation(trace, "adj_dissipation") + _interval_rates(trace, ycol)
    eq = np.abs(_interval_rates(trace, "W") + _interval_dissipation(trace, "dissipation"))
    out = []
    for name, arr in (("dissipation-inequality", ineq), ("W-equality", eq)):
        worst = float(np.max(arr)) if np.all(np.isfinite(arr)) else math.inf
        out.append(Verdict(name, worst <= tol, worst, tol))
    return out


def verify_mass(trace: EntropyTrace, tol: float = MASS_TOL) -> Verdict:
    worst = float(np.max(np.abs(trace["mass"] - 1.0)))
    return Verdict("mass-conservation", worst <= tol, worst, tol)


def classify_rigidity(trace: EntropyTrace, threshold: float) -> Verdict:
    """"Euclidean-like" iff the rigidity gap stays below ``threshold`` on every row."""
    if "rigidity_gap" not in trace:
        raise UnsupportedTopologyError("trace has no rigidity_gap column (grid or oracle scenarios only)")
    worst = float(np.max(trace["rigidity_gap"]))
    return Verdict("rigidity-euclidean", worst < threshold, worst, threshold)


def _non_euclidean(trace: EntropyTrace, threshold: float) -> Verdict:
    # the compact models must show a gap of at least `threshold` somewhere
    shortfall = threshold - float(np.max(trace["rigidity_gap"]))
    return Verdict("rigidity-non-euclidean", shortfall <= 0.0, shortfall, 0.0)


def trace_derivative(trace: EntropyTrace, column: str) -> np.ndarray:
    """Centred differences inside, one-sided at the two endpoints."""
    return np.gradient(trace[column], trace["t"], edge_order=1)


def standard_verdicts(trace: EntropyTrace, cfg: ScenarioConfig) -> list:
    """Every check that applies to a scenario's trace."""
    out = [verify_mass(trace)]
    for col in ("W", "Y0", "Ya", "Ha"):
        if col in trace:
            out.append(verify_monotone(trace, col, cfg.monotone_tol))
    if "adj_dissipation" in trace:
        out.extend(verify_dissipation(trace, tolerance_model(trace, cfg.tol_scale)))
    if "rigidity_gap" in trace:
        if cfg.kind == "euclidean_oracle":
            out.append(classify_rigidity(trace, cfg.rigidity_threshold))
        else:
            out.append(_non_euclidean(trace, cfg.rigidity_threshold))
    return out


# -- Euclidean oracle ---------------------------------------------------------------------

def _check_oracle_args(n, a):
    if int(n) != n or n < 1:
        raise ValueError(f"dimension n must be a positive integer, got {n}")
    if a < 0:
        raise RemainderConstraintError(
            f"remainder a={a} < 0 is not allowed on R^n (no spectral gap, so a >= 0)")


def euclidean_oracle(n: int, a: float, t_grid) -> EntropyTrace:
    """Closed-form entropies of the Euclidean heat kernel on ``R^n``."""
    _check_oracle_args(n, a)
    t = np.asarray(t_grid, dtype=float)
    if np.any(t <= 0):
        raise ValueError("oracle times must be positive")
    neg_ent = 0.5 * n * np.log(4.0 * np.pi * t) + 0.5 * n
    dirichlet = n / (8.0 * t)
    om = dirichlet + a
    diss = 32.0 * a * a * t / (n + 8.0 * a * t)
    t0 = t[0]
    # exact antiderivative of diss: 4 a s - (n/2) log(n + 8 a s)
    int_diss = 4.0 * a * (t - t0) - 0.5 * n * np.log1p(8.0 * a * (t - t0) / (n + 8.0 * a * t0))
    cols = {
        "t": t, "mass": np.ones_like(t), "W": np.zeros_like(t),
        "Y0": np.full_like(t, -b_const(n)),
        "Ya": neg_ent + 0.5 * n * np.log(om) - 4.0 * a * t,
        "omega": om, "dissipation": np.zeros_like(t), "adj_dissipation": diss,
        "int_dissipation": np.zeros_like(t), "int_adj_dissipation": int_diss,
        "rigidity_gap": np.zeros_like(t),
    }
    meta = {"scenario": "euclidean_oracle", "kind": "euclidean_oracle", "n": n, "a": a,
            "oracle_tol": 1e-8}
    return EntropyTrace(cols, meta)


def _sphere_area(n: int) -> float:
    # area of the unit sphere S^{n-1}; for n = 1 this counts the two points +-1
    return 2.0 * math.pi ** (n / 2.0) / gamma(n / 2.0)


def _radial(n, t, g):
    """``int_{R^n} g(|x|) H(x, t) dx`` by adaptive quadrature in ``s = |x|/sqrt(4t)``."""
    val, _ = spi.quad(lambda s: g(math.sqrt(4.0 * t) * s) * math.exp(-s * s) * s ** (n - 1),
                      0.0, math.inf, epsabs=1e-15, epsrel=1e-13, limit=400)
    return _sphere_area(n) * math.pi ** (-n / 2.0) * val


def euclidean_quadrature(n: int, a: float, t: float) -> dict:
    """The oracle quantities at one time, integrated numerically from the Gaussian itself.

    Uses ``H = (4 pi t)^{-n/2} exp(-r^2/4t)``, ``f = r^2/4t``,
    ``|grad f|^2 = r^2/4t^2`` and ``Hess f = g/2t`` without invoking any of
    the closed forms in :func:`euclidean_oracle`.
    """
    _check_oracle_args(n, a)
    logc = 0.5 * n * math.log(4.0 * math.pi * t)
    mass = _radial(n, t, lambda r: 1.0)
    neg_ent = _radial(n, t, lambda r: logc + r * r / (4.0 * t))
    grad_f_sq = _radial(n, t, lambda r: r * r / (4.0 * t * t))
    f_mom = _radial(n, t, lambda r: r * r / (4.0 * t))
    dirichlet = 0.25 * grad_f_sq  # |grad sqrt H|^2 = |grad f|^2 H / 4
    W = t * grad_f_sq + f_mom - n * mass
    om = dirichlet + a
    Y0 = neg_ent + 0.5 * n * math.log(dirichlet)
    Ya = neg_ent + 0.5 * n * math.log(om) - 4.0 * a * t
    c = 4.0 * om / n
    # |Hess f - c g|^2 = n (1/2t - c)^2, Ric = 0
    adj = n / (4.0 * om) * _radial(n, t, lambda r: n * (1.0 / (2.0 * t) - c) ** 2)
    gap = _radial(n, t, lambda r: n * (1.0 / (2.0 * t) - 1.0 / (2.0 * t)) ** 2)
    return {"t": t, "mass": mass, "W": W, "Y0": Y0, "Ya": Ya, "omega": om,
            "neg_entropy": neg_ent, "adj_dissipation": adj, "rigidity_gap": gap}


def quadrature_dYa_dt(n: int, a: float, t: float, rel_step: float = 1e-3) -> float:
    """Fourth-order centred difference of the quadrature ``Y_a`` in ``t``."""
    h = rel_step * t
    y = [euclidean_quadrature(n, a, t + k * h)["Ya"] for k in (-2, -1, 1, 2)]
    return (y[0] - 8.0 * y[1] + 8.0 * y[2] - y[3]) / (12.0 * h)
