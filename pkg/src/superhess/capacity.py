"""Relative and weighted m-extremal functions, m-Hessian capacities and their checks.

The solver is a Perron iteration with Jacobi sweeps.  At a free node the new
value is the largest center value s for which the discrete Hessian (center
value s, neighbours frozen) stays in the closed Garding cone, capped at 0.
Moving s shifts every eigenvalue by -2s/h^2, so s comes from the smallest root
tau of sigma_m(lambda - tau).  Started from a subsolution the iterates
increase monotonically to the discrete envelope.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from math import comb

import numpy as np

from .grid import Grid, ScalarField, erode, integrate
from .hessmeasure import Current, hessian_measure
from .mconvex import principal_minor_sum

BISECT_STEPS = 60


@dataclass
class CapacityProblem:
    grid: Grid
    omega: np.ndarray
    E: np.ndarray
    m: int
    u: ScalarField | None = None  # None means u = -1
    tol: float = 1e-8
    max_sweeps: int = 200_000

    def __post_init__(self):
        g = self.grid
        self.omega = np.asarray(self.omega, dtype=bool)
        self.E = np.asarray(self.E, dtype=bool)
        if self.omega.shape != g.shape or self.E.shape != g.shape:
            raise ValueError("mask shape mismatch")
        if not 1 <= self.m <= g.n:
            raise ValueError("m out of range")
        if np.any(self.omega & ~erode(g.full_mask(), 1)):
            raise ValueError("Omega must stay one node away from the box edge")
        if not self.E.any():
            raise ValueError("E is empty")
        if np.any(self.E & ~erode(self.omega, 1)):
            raise ValueError("E must lie compactly inside Omega")
        if self.u is not None:
            if self.u.grid != g:
                raise ValueError("weight lives on another grid")
            if self.u.poles:
                raise ValueError("weights with poles are not supported; truncate them first")
            if np.any(self.u.values[self.omega] > 1e-14):
                raise ValueError("weight must be <= 0 on Omega")

    def obstacle(self) -> np.ndarray:
        if self.u is None:
            return np.full(self.grid.shape, -1.0)
        return np.asarray(self.u.values, dtype=float)


@dataclass
class ExtremalSolution:
    field: ScalarField
    residual: float
    obstacle_gap: float
    sweeps: int
    converged: bool
    meta: dict = field(default_factory=dict)


# -- the node update -----------------------------------------------------------------------

def _neighbours(v: np.ndarray, h: float) -> np.ndarray:
    """Hessian with the center value set to 0, on the interior block; shape (..., n, n)."""
    n = v.ndim
    A = np.empty(tuple(s - 2 for s in v.shape) + (n, n))

    def sh(offs):
        return v[tuple(slice(1 + o, v.shape[k] - 1 + o) for k, o in enumerate(offs))]

    for i in range(n):
        e = [0] * n
        e[i] = 1
        em = [0] * n
        em[i] = -1
        A[..., i, i] = (sh(e) + sh(em)) / (h * h)
        for j in range(i + 1, n):
            pp, pm, mp, mm = [0] * n, [0] * n, [0] * n, [0] * n
            pp[i], pp[j] = 1, 1
            pm[i], pm[j] = 1, -1
            mp[i], mp[j] = -1, 1
            mm[i], mm[j] = -1, -1
            c = (sh(pp) - sh(pm) - sh(mp) + sh(mm)) / (4 * h * h)
            A[..., i, j] = c
            A[..., j, i] = c
    return A


def _shifted_sigmas(sig: list, n: int, m: int, tau: np.ndarray) -> list:
    """sigma_j(lambda - tau 1) for j = 1..m from sigma_0..sigma_m of lambda."""
    out = []
    for j in range(1, m + 1):
        acc = np.zeros_like(tau)
        for k in range(j + 1):
            acc = acc + (-tau) ** k * comb(n - j + k, k) * sig[j - k]
        out.append(acc)
    return out


def largest_admissible_shift(A: np.ndarray, m: int) -> np.ndarray:
    """Largest tau with eigenvalues of A - tau I in the closed cone Gamma_m."""
    n = A.shape[-1]
    s1 = np.trace(A, axis1=-2, axis2=-1)
    if m == 1:
        return s1 / n
    sig = [np.ones(A.shape[:-2])] + [principal_minor_sum(A, k) for k in range(1, m + 1)]
    if m == 2:
        a = comb(n, 2)
        b = (n - 1) * s1
        disc = np.maximum(b * b - 4 * a * sig[2], 0.0)
        return (b - np.sqrt(disc)) / (2 * a)
    diag = np.diagonal(A, axis1=-2, axis2=-1)
    off = np.abs(A).sum(axis=-1) - np.abs(diag)
    lo = (diag - off).min(axis=-1) - 1.0
    hi = s1 / n
    for _ in range(BISECT_STEPS):
        mid = 0.5 * (lo + hi)
        ok = np.ones(mid.shape, dtype=bool)
        for sj in _shifted_sigmas(sig, n, m, mid):
            ok &= sj >= 0
        lo = np.where(ok, mid, lo)
        hi = np.where(ok, hi, mid)
    return lo


def _sweep_value(v: np.ndarray, h: float, m: int) -> np.ndarray:
    """Candidate center values on the interior block."""
    if m == 1:
        n = v.ndim
        acc = np.zeros(tuple(s - 2 for s in v.shape))
        for i in range(n):
            for o in (1, -1):
                sl = tuple(slice(1 + (o if k == i else 0), v.shape[k] - 1 + (o if k == i else 0))
                           for k in range(n))
                acc = acc + v[sl]
        return acc / (2 * n)
    tau = largest_admissible_shift(_neighbours(v, h), m)
    return tau * h * h / 2.0


def perron_solve(grid: Grid, omega: np.ndarray, E: np.ndarray, obstacle: np.ndarray, m: int,
                 init: np.ndarray | None = None, tol: float = 1e-8, max_sweeps: int = 200_000,
                 fixed_sweeps: int | None = None) -> tuple:
    """Jacobi sweeps for sup{v m-convex, v <= 0, v <= obstacle on E}, v = 0 off Omega.

    With ``fixed_sweeps`` exactly that many sweeps run, whatever the updates.
    """
    free = omega & ~E
    inner = tuple(slice(1, -1) for _ in range(grid.n))
    free_in = free[inner]
    v = np.zeros(grid.shape)
    if init is None:
        init = np.minimum(obstacle, 0.0) if m == 1 else np.full(grid.shape, float(np.min(obstacle[E])))
    v[omega] = np.minimum(init[omega], 0.0)
    v[E] = obstacle[E]
    sweeps, delta = 0, math.inf
    limit = max_sweeps if fixed_sweeps is None else fixed_sweeps
    while sweeps < limit:
        cand = np.minimum(_sweep_value(v, grid.h, m), 0.0)
        old = v[inner][free_in]
        new = cand[free_in]
        delta = float(np.max(np.abs(new - old))) if new.size else 0.0
        block = v[inner]
        block[free_in] = new
        sweeps += 1
        if fixed_sweeps is None and delta < tol:
            break
    return v, sweeps, delta < tol


def _residual(v: np.ndarray, grid: Grid, free: np.ndarray, m: int) -> float:
    inner = tuple(slice(1, -1) for _ in range(grid.n))
    A = _neighbours(v, grid.h)
    n = grid.n
    idx = np.arange(n)
    A[..., idx, idx] -= 2.0 * v[inner][..., None] / grid.h ** 2
    sm = principal_minor_sum(A, m) if m > 1 else np.trace(A, axis1=-2, axis2=-1)
    neg = free[inner] & (v[inner] < -1e-12)
    return float(np.max(np.abs(sm[neg]))) if neg.any() else 0.0


def weighted_extremal(P: CapacityProblem, fixed_sweeps: int | None = None) -> ExtremalSolution:
    obst = P.obstacle()
    init = obst if P.u is not None else None
    v, sweeps, ok = perron_solve(P.grid, P.omega, P.E, obst, P.m, init, P.tol, P.max_sweeps, fixed_sweeps)
    res = _residual(v, P.grid, P.omega & ~P.E, P.m)
    gap = float(np.max(np.abs(v[P.E] - obst[P.E])))
    sol = ScalarField(P.grid, v)
    return ExtremalSolution(sol, res, gap, sweeps, ok, {"flagged": not ok})


def relative_extremal(grid: Grid, E: np.ndarray, omega: np.ndarray, m: int, tol: float = 1e-8,
                      max_sweeps: int = 200_000) -> ExtremalSolution:
    return weighted_extremal(CapacityProblem(grid, omega, E, m, None, tol, max_sweeps))


# -- capacities ---------------------------------------------------------------------------

def hessian_mass(v: ScalarField, region: np.ndarray, m: int) -> float:
    """Mass of (dd# v)^m ^ beta^(n-m) over region (superintegral normalization)."""
    T = Current.unit(v.grid)
    mu = hessian_measure(T, m, [v] * m, scheme="inductive", check=False)
    return integrate(mu, region & mu.mask, strict=False)


def cap_m(grid: Grid, E: np.ndarray, omega: np.ndarray, m: int, tol: float = 1e-8) -> tuple:
    sol = relative_extremal(grid, E, omega, m, tol)
    return hessian_mass(sol.field, E, m), sol


def radial_profile(n: int, m: int, s: float, R: float):
    """Radial m-maximal profile G with G(s) = -1, G(R) = 0 (phi_m shape, log when 2m = n)."""
    if 2 * m == n:
        phi = np.log
    else:
        k = n / m - 2.0
        phi = (lambda r: -np.power(r, -k) / k)
    D = float(phi(R) - phi(s))

    def G(r):
        r = np.asarray(r, dtype=float)
        with np.errstate(divide="ignore"):
            return (phi(np.maximum(r, 1e-300)) - phi(R)) / D

    return G, D


def radial_extremal(grid: Grid, center, s: float, R: float, m: int) -> np.ndarray:
    G, _ = radial_profile(grid.n, m, s, R)
    rho = grid.radius(center)
    return np.where(rho <= R, np.maximum(-1.0, G(rho)), 0.0)


def capacity_oracle(n: int, m: int, s: float, R: float) -> float:
    """Mass n! Vol(B) / D^m of the radial extremal function of B(s) in B(R)."""
    _, D = radial_profile(n, m, s, R)
    return math.factorial(n) * math.pi ** (n / 2) / math.gamma(n / 2 + 1) / D ** m


def flux_oracle(n: int, s: float, R: float) -> float:
    """(n-2)|S^(n-1)| / (s^(2-n) - R^(2-n)): total flux of the harmonic condenser potential."""
    area = 2 * math.pi ** (n / 2) / math.gamma(n / 2)
    return (n - 2) * area / (s ** (2 - n) - R ** (2 - n))


@dataclass
class CapReport:
    cap: float
    sup_route: float
    route_gap: float
    sweeps: int
    residual: float
    best_t: float
    profile_sup: float = math.nan
    solution: ExtremalSolution | None = None

    def to_json(self) -> str:
        return json.dumps({"cap": self.cap, "route_gap": self.route_gap, "sweeps": self.sweeps,
                           "residual": self.residual}, sort_keys=True)


def _geometry(P: CapacityProblem) -> tuple:
    g = P.grid
    pts = np.argwhere(P.E)
    center = tuple(float(o + g.h * c) for o, c in zip(g.origin, pts.mean(axis=0)))
    rho = g.radius(center)
    s = float(rho[P.E].max())
    R = float(rho[~P.omega].min())
    return center, s, R


def cap_mu(P: CapacityProblem, ts=None, include_solution: bool = True) -> CapReport:
    """Both routes: Hessian mass of the weighted extremal function on E, and a sup over
    the dictionary max(u, t G) of radial profiles centered in E, plus the solver output
    when ``include_solution`` is set.  ``profile_sup`` keeps the profile-only value."""
    sol = weighted_extremal(P)
    cap = hessian_mass(sol.field, P.E, P.m)
    center, s, R = _geometry(P)
    G, _ = radial_profile(P.grid.n, P.m, s, R)
    rho = P.grid.radius(center)
    prof = np.where(P.omega, G(rho), 0.0)
    prof = np.minimum(prof, 0.0)
    u = P.obstacle()
    ts = np.linspace(0.5, 1.5, 51) * float(-np.min(u[P.E])) if ts is None else ts
    best, best_t = -math.inf, math.nan
    for t in ts:
        cand = np.where(P.omega, np.maximum(u, t * prof), 0.0)
        if P.u is None:
            cand = np.where(P.omega, np.maximum(-1.0, t * prof), 0.0)
        val = hessian_mass(ScalarField(P.grid, cand), P.E, P.m)
        if val > best:
            best, best_t = val, float(t)
    profile_sup = best
    if include_solution and cap > best:
        best, best_t = cap, math.nan
    gap = (cap - best) / abs(cap) if cap else 0.0
    return CapReport(cap, best, gap, sol.sweeps, sol.residual, best_t, profile_sup, sol)


# -- audits ---------------------------------------------------------------------------------

@dataclass
class MaximalityReport:
    max_density: float
    passed: bool


def maximality_audit(v: ScalarField, region: np.ndarray, m: int, tol: float = 1e-6) -> MaximalityReport:
    """Largest node density of (dd# v)^m ^ beta^(n-m), in units of beta^n, over region."""
    T = Current.unit(v.grid)
    mu = hessian_measure(T, m, [v] * m, scheme="pairing", check=False)
    sel = region & mu.mask
    if not sel.any():
        raise ValueError("region has no valid nodes")
    d = float(np.max(np.abs(mu.density[sel]))) / math.factorial(v.grid.n)
    return MaximalityReport(d, d <= tol)


@dataclass
class LadderReport:
    caps: list
    limit_cap: float
    pointwise_decrease: bool
    caps_nondecreasing: bool
    limit_gap: float
    sweeps: int


def extremal_ladder_check(ladder: list, limit: ScalarField, grid: Grid, E: np.ndarray, omega: np.ndarray,
                          m: int, tol: float = 1e-8) -> LadderReport:
    """Weighted extremal functions of a decreasing ladder u_j and of its limit u.

    All solves run for the same number of sweeps so the discrete comparison
    principle can be checked exactly node by node.
    """
    fields = list(ladder) + [limit]
    for a, b in zip(fields, fields[1:]):
        if np.any(b.values > a.values):
            raise ValueError("ladder is not pointwise decreasing")
    probs = [CapacityProblem(grid, omega, E, m, u, tol) for u in fields]
    first = [weighted_extremal(P) for P in probs]
    K = max(s.sweeps for s in first)
    sols = [weighted_extremal(P, fixed_sweeps=K) for P in probs]
    vals = [s.field.values for s in sols]
    dec = all(bool(np.all(b <= a)) for a, b in zip(vals, vals[1:]))
    caps = [hessian_mass(s.field, E, m) for s in sols]
    ladder_caps, lim = caps[:-1], caps[-1]
    nondec = all(b >= a * (1 - 1e-12) for a, b in zip(ladder_caps, ladder_caps[1:]))
    gap = abs(lim - ladder_caps[-1]) / abs(lim)
    return LadderReport(ladder_caps, lim, dec, nondec, gap, max(s.sweeps for s in sols))
