"""The acceptance suite: twelve identity and property checks with fixed tolerances."""
from __future__ import annotations

import math
import time
from dataclasses import dataclass, field

import numpy as np

from .grid import Grid, MollifierSpec, ScalarField, integrate
from .hessmeasure import Current, convergence_harness, hessian_measure
from .mconvex import WeightSpec, weight_field
from .superalgebra import (beta_power, form_from_matrix, jacobi_eigenvalues, elementary_symmetric,
                           sigma_pairing, sigma_pairing_generic, wedge, dx, dxi)


@dataclass
class Criterion:
    id: int
    name: str
    passed: bool
    value: float
    tol: float
    detail: dict = field(default_factory=dict)
    seconds: float = 0.0

    def row(self) -> dict:
        return {"id": int(self.id), "pass": bool(self.passed), "value": float(self.value), "tol": float(self.tol)}


def smooth_step(r, r0: float, r1: float):
    """C-infinity map equal to 1 for r <= r0 and 0 for r >= r1."""
    t = np.clip((np.asarray(r, dtype=float) - r0) / (r1 - r0), 0.0, 1.0)
    with np.errstate(divide="ignore", over="ignore"):
        a = np.where(t < 1, np.exp(-1.0 / np.maximum(1 - t, 1e-300)), 0.0)
        b = np.where(t > 0, np.exp(-1.0 / np.maximum(t, 1e-300)), 0.0)
    return a / (a + b)


def _ball_ladder_masses(mu, grid, radii):
    rho = grid.radius((0.0,) * grid.n)
    return [integrate(mu, rho < r) for r in radii]


# -- 1 ------------------------------------------------------------------------------------

def dirac_calibration(tol_scale: float = 1.0) -> Criterion:
    """(dd# phi_m)^m ^ beta^(n-m) on balls against n! Vol(B): n=4 (m=2) and n=2 (m=1)."""
    tol_abs, tol_flat = 0.03 * tol_scale, 0.02 * tol_scale
    out = {}
    worst, flat = 0.0, 0.0
    for n, m, half, h, radii in ((4, 2, 16, 1 / 16, (12, 13, 14)), (2, 1, 64, 1 / 64, (16, 24, 32))):
        g = Grid.around((0.0,) * n, h, half)
        T = Current.unit(g)
        phi = weight_field(WeightSpec(m, n, (0.0,) * n), g)
        spec = MollifierSpec(1, 3 * h)
        mu = hessian_measure(T, m, [phi] * m, scheme="inductive", mollifier=spec)
        target = math.factorial(n) * math.pi ** (n / 2) / math.gamma(n / 2 + 1)
        masses = _ball_ladder_masses(mu, g, [k * h for k in radii])
        ratios = [x / target for x in masses]
        worst = max(worst, max(abs(r - 1) for r in ratios))
        flat = max(flat, max(masses) / min(masses) - 1)
        out[f"n{n}"] = {"ratios": ratios, "radii_over_h": list(radii), "mollifier_radius_over_h": 1.5,
                        "grid": list(g.shape)}
    return Criterion(1, "Dirac calibration", worst <= tol_abs and flat <= tol_flat, worst, tol_abs,
                     dict(out, flatness=flat, flatness_tol=tol_flat))


# -- 2 ------------------------------------------------------------------------------------

def sigma_bridge(seed: int = 0, tol_scale: float = 1.0) -> Criterion:
    """Fast eigenvalue path against the generic wedge engine on seeded random matrices."""
    tol = 1e-12 * tol_scale
    rng = np.random.default_rng(seed)
    worst = 0.0
    for n in (2, 3, 4):
        for _ in range(100):
            B = rng.standard_normal((n, n))
            A = 0.5 * (B + B.T)
            lam_abs = np.abs(jacobi_eigenvalues(A))
            for j in range(1, n + 1):
                a, b = sigma_pairing(A, j), sigma_pairing_generic(A, j)
                scale = elementary_symmetric(lam_abs, j) / math.comb(n, j)
                worst = max(worst, abs(a - b) / max(abs(b), scale))
    return Criterion(2, "sigma-pairing bridge", worst <= tol, worst, tol, {"matrices": 300})


# -- 3 and 4 --------------------------------------------------------------------------------

def _bump(r2, R):
    with np.errstate(divide="ignore", over="ignore"):
        return np.where(r2 < R * R, np.exp(-1.0 / np.maximum(R * R - r2, 1e-300) + 1.0 / (R * R)), 0.0)


def trace_consistency(seed: int = 0, tol_scale: float = 1.0) -> Criterion:
    from .potential import local_potential, trace_by_beta, trace_potential

    tol = 1e-8 * tol_scale
    g = Grid.centered(4, 20, 1.0)
    r2 = sum(x ** 2 for x in g.coords())
    A = np.diag([1.0, 2.0, 3.0, 4.0])
    B = np.array([[2, 1, 0, 0], [1, 2, 0, 0], [0, 0, 1, 0], [0, 0, 0, 1.0]])
    T = Current.from_form(g, wedge(form_from_matrix(A), form_from_matrix(B)), _bump(r2, 0.7))
    eta = ScalarField(g, smooth_step(np.sqrt(r2), 0.75, 0.9))
    P = local_potential(T, eta, seed=seed)
    u2 = trace_potential(T, eta).values
    scale = float(np.max(np.abs(u2)))
    d1 = float(np.max(np.abs(P.u.values - u2))) / scale
    d2 = float(np.max(np.abs(trace_by_beta(P.U, T.p) - u2))) / scale
    return Criterion(3, "trace-formula consistency", max(d1, d2) <= tol, max(d1, d2), tol,
                     {"diagonal_sum": d1, "beta_trace": d2, "weak_negativity_audit_min": P.audit_min})


def residual_growth(tol_scale: float = 1.0) -> Criterion:
    from .potential import local_potential, residual

    tol = 1.5 * tol_scale
    sups = []
    for N in (24, 48):
        g = Grid.centered(3, N + 1, 1.0)
        X = g.coords()
        r2 = sum(x ** 2 for x in X)
        H = np.zeros((3, 3) + g.shape)
        H[0, 0] = 2 + 12 * X[0] ** 2
        H[1, 1] = 2.0
        H[2, 2] = 2.0
        T = Current.from_form(g, form_from_matrix(H), _bump(r2, 0.6))
        eta = ScalarField(g, smooth_step(np.sqrt(r2), 0.65, 0.9))
        R = residual(T, eta, local_potential(T, eta))
        sups.append(R.sup_norm(r2 < 0.3 ** 2))
    growth = sups[1] / sups[0]
    return Criterion(4, "potential residual", growth <= tol, growth, tol, {"sup_norms": sups, "h": [2 / 24, 2 / 48]})


# -- 5 and 6 --------------------------------------------------------------------------------

def reweighting(tol_scale: float = 1.0) -> Criterion:
    from .lelong import reweight_check

    tol = 0.01 * tol_scale
    h = 1 / 16
    g = Grid.around((0.0,) * 4, h, 16)
    T = Current.unit(g)
    phi = weight_field(WeightSpec(2, 4, (0.0,) * 4), g)
    levels = [math.log(14 * h), math.log(12 * h)]
    rep = reweight_check(T, phi, 2, lambda x: np.exp(2 * x), lambda x: 2 * math.exp(2 * x), levels,
                         chi_at_minus_inf=0.0, mollifier=MollifierSpec(1, 3 * h))
    return Criterion(5, "reweighting identity", rep.max_gap <= tol, rep.max_gap, tol,
                     {"lhs": rep.lhs, "rhs": rep.rhs, "levels": levels})


def comparison_scaling(tol_scale: float = 1.0) -> Criterion:
    from .lelong import scaling_check

    tol = 0.02 * tol_scale
    h = 1 / 128
    g = Grid.around((0.0, 0.0), h, 128)
    T = Current.unit(g)
    phi = weight_field(WeightSpec(1, 2, (0.0, 0.0)), g)
    levels = [math.log(t) for t in (0.8, 0.4, 0.2, 0.1)]
    reps = [scaling_check(T, phi, 1, lam, levels, mollifier=MollifierSpec(1, 3 * h)) for lam in (0.5, 3.0)]
    ok = all(r["gap"] <= r["uncertainty"] and r["rel_uncertainty"] <= tol for r in reps)
    worst = max(r["rel_uncertainty"] for r in reps)
    return Criterion(6, "comparison scaling", ok, worst, tol, {"checks": reps})


# -- 7 -----------------------------------------------------------------------------------

def harness(tol_scale: float = 1.0) -> Criterion:
    tol = 0.01 * tol_scale
    g = Grid.centered(3, 64, 1.0)
    X = g.coords()
    r2 = sum(x ** 2 for x in X)
    eps = [0.2, 0.1, 0.05, 0.025]
    ladder = [ScalarField(g, np.maximum(X[0], 0.0) + np.sqrt(r2 + e * e)) for e in eps]
    probes = [r2 < 0.4 ** 2, r2 < 0.6 ** 2, (X[0] - 0.3) ** 2 + X[1] ** 2 + X[2] ** 2 < 0.3 ** 2]
    rep = convergence_harness(Current.unit(g), 1, [ladder], probes, scheme="pairing", scales=eps)
    value = max(rep.cauchy_gap, rep.weighted_gap)
    return Criterion(7, "convergence harness", value <= tol, value, tol,
                     {"cauchy_gap": rep.cauchy_gap, "weighted_gap": rep.weighted_gap, "masses": rep.masses,
                      "weighted": rep.weighted})


# -- 8 and 9 --------------------------------------------------------------------------------

def capacity_equality(tol_scale: float = 1.0) -> Criterion:
    from .capacity import CapacityProblem, cap_mu, capacity_oracle

    tol = 0.05 * tol_scale
    g = Grid.centered(3, 64, 1.0)
    rho = g.radius((0.0, 0.0, 0.0))
    s, R = 0.5, 1.0
    rep = cap_mu(CapacityProblem(g, rho < R, rho <= s, 1))
    oracle = capacity_oracle(3, 1, s, R)
    err = abs(rep.cap / oracle - 1)
    ok = err <= tol and -tol <= rep.route_gap <= tol
    return Criterion(8, "capacity equality", ok, err, tol,
                     {"cap": rep.cap, "oracle": oracle, "route_gap": rep.route_gap,
                      "profile_only_gap": (rep.cap - rep.profile_sup) / rep.cap, "sweeps": rep.sweeps,
                      "residual": rep.residual})


def extremal_ladders(tol_scale: float = 1.0) -> Criterion:
    from .capacity import extremal_ladder_check

    tol = 0.02 * tol_scale
    g = Grid.centered(3, 32, 1.0)
    rho = g.radius((0.0, 0.0, 0.0))
    u = ScalarField(g, rho ** 2 / 2 - 1.5)
    ladder = [ScalarField(g, np.minimum(u.values + 1.0 / j, 0.0)) for j in (1, 2, 4, 8, 16, 32, 64)]
    rep = extremal_ladder_check(ladder, u, g, rho <= 0.5, rho < 1.0, 1)
    ok = rep.pointwise_decrease and rep.caps_nondecreasing and rep.limit_gap <= tol
    return Criterion(9, "extremal monotone ladders", ok, rep.limit_gap, tol,
                     {"caps": rep.caps, "limit_cap": rep.limit_cap, "pointwise_decrease": rep.pointwise_decrease,
                      "caps_nondecreasing": rep.caps_nondecreasing, "sweeps": rep.sweeps})


# -- 10 and 11 ------------------------------------------------------------------------------

def potential_lelong(seed: int = 0, tol_scale: float = 1.0) -> Criterion:
    from .lelong import potential_lelong_ladder
    from .potential import local_potential, trace_by_beta

    g = Grid.centered(4, 36, 1.0)
    h = g.h
    r = np.sqrt(sum(x ** 2 for x in g.coords()))
    T = Current.from_form(g, beta_power(4, 2), np.clip((0.81 - r ** 2) / 0.3, 0.0, 1.0) ** 3)
    P = local_potential(T, ScalarField(g, np.ones(g.shape)), seed=seed)
    lad = potential_lelong_ladder(trace_by_beta(P.U, T.p), g, (0.0,) * 4, T.p, [8 * h, 4 * h, 2 * h, h])
    bound = 2.0 * tol_scale * lad.uncertainty
    ok = lad.monotone and abs(lad.limit) <= bound
    return Criterion(10, "Lelong vanishing of potentials", ok, abs(lad.limit), bound,
                     {"nu": lad.nu, "radii_over_h": [8, 4, 2, 1], "uncertainty": lad.uncertainty})


def projection(tol_scale: float = 1.0) -> Criterion:
    from itertools import combinations

    from .lelong import adjoint_check, base_grid, transport_check

    tol = 1e-10 * tol_scale
    g = Grid.centered(4, 17, 1.0)
    r2 = sum(x ** 2 for x in g.coords())
    f = np.where(r2 < 0.64, (0.64 - r2) ** 3, 0.0)
    A = np.zeros((4, 4))
    A[:3, :3] = [[2, 1, 0], [1, 3, 0.5], [0, 0.5, 1]]
    fib = wedge(dx(4, 4), dxi(4, 4))
    T1 = Current.from_form(g, wedge(form_from_matrix(A), fib), f)
    T2 = Current.from_form(g, fib, f)
    gb = base_grid(g, 1)
    Y = gb.coords()
    alpha2 = {}
    for K in combinations(range(3), 2):
        for L in combinations(range(3), 2):
            alpha2[(K, L)] = 1 + Y[0] * Y[1] - Y[2] ** 2 * (K[0] + 1) * (L[1] + 1)
    alpha2 = {k: 0.5 * (v + alpha2[(k[1], k[0])]) for k, v in alpha2.items()}
    alpha3 = {((0, 1, 2), (0, 1, 2)): 1 + Y[0] ** 2 * Y[1] - 2 * Y[2] ** 3}
    gaps = [adjoint_check(T1, 1, alpha2)["rel_gap"], adjoint_check(T2, 1, alpha3)["rel_gap"]]
    psi = ScalarField(gb, sum(y ** 2 for y in Y))
    tr = transport_check(T2, 1, psi, 2, [0.5, 0.25, 0.125, 0.0625])
    ok = max(gaps) <= tol and tr["gap"] <= tr["uncertainty"]
    return Criterion(11, "projection identity", ok, max(gaps), tol,
                     {"adjoint_gaps": gaps, "transport_gap": tr["gap"], "transport_uncertainty": tr["uncertainty"],
                      "level_gaps": tr["level_gaps"]})


SUITE = {
    1: lambda seed, ts: dirac_calibration(ts),
    2: lambda seed, ts: sigma_bridge(seed, ts),
    3: lambda seed, ts: trace_consistency(seed, ts),
    4: lambda seed, ts: residual_growth(ts),
    5: lambda seed, ts: reweighting(ts),
    6: lambda seed, ts: comparison_scaling(ts),
    7: lambda seed, ts: harness(ts),
    8: lambda seed, ts: capacity_equality(ts),
    9: lambda seed, ts: extremal_ladders(ts),
    10: lambda seed, ts: potential_lelong(seed, ts),
    11: lambda seed, ts: projection(ts),
}


def run_suite(ids=None, seed: int = 0, tol_scale: float = 1.0, log=None) -> list:
    out = []
    for i in sorted(SUITE if ids is None else ids):
        if i not in SUITE:
            continue
        t0 = time.perf_counter()
        try:
            c = SUITE[i](seed, tol_scale)
        except Exception as exc:  # a crashing check is a failed check
            c = Criterion(i, f"criterion {i}", False, math.nan, math.nan, {"error": repr(exc)})
        c.seconds = time.perf_counter() - t0
        if log is not None:
            log(c)
        out.append(c)
    return out
