"""Classical and m-generalized Lelong numbers on grids.

Masses are evaluated once per (current, weight) pair and then reduced over a
ladder of pseudo-balls.  Limits are reported with an honest uncertainty: the
gap between the two deepest ladder levels.
"""
from __future__ import annotations

import io
import json
import math
from dataclasses import dataclass, field
from itertools import combinations

import numpy as np

from .grid import Grid, Measure, MollifierSpec, ScalarField, erode, fsum_array, integrate, pseudo_ball_mask
from .hessmeasure import Current, hessian_measure
from .mconvex import WeightSpec, compose, weight_field
from .superalgebra import FormValue, wedge


@dataclass
class LelongLadder:
    levels: list
    masses: list
    nu: list
    limit: float = math.nan
    uncertainty: float = math.nan
    monotone: bool = True
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.nu and math.isnan(self.limit):
            self.limit, self.uncertainty = extrapolate(self.nu, self.meta.get("params"))

    def to_csv(self) -> str:
        buf = io.StringIO()
        buf.write("r,mass,nu\n")
        for r, m, v in zip(self.levels, self.masses, self.nu):
            buf.write(f"{r!r},{m!r},{v!r}\n")
        return buf.getvalue()

    def to_json(self) -> str:
        return json.dumps({"limit": self.limit, "uncertainty": self.uncertainty,
                           "monotone": bool(self.monotone)}, sort_keys=True)


def extrapolate(values, params=None, degree: int = 2) -> tuple:
    """Richardson extrapolation to params -> 0 over the deepest ladder levels.

    ``params`` are the small parameters of the levels (radii for balls); a
    ratio-1/2 geometric ladder is assumed when they are omitted.  A polynomial
    of the given degree through the last degree+1 points is evaluated at 0
    (Neville).  The uncertainty is |last - second-to-last| in every case.
    """
    v = [float(x) for x in values]
    if not v:
        raise ValueError("empty ladder")
    if len(v) == 1:
        return v[0], math.inf
    unc = abs(v[-1] - v[-2])
    t = [0.5 ** k for k in range(len(v))] if params is None else [float(x) for x in params]
    if len(t) != len(v):
        raise ValueError("one parameter per ladder value")
    d = min(degree, len(v) - 1)
    xs, ys = t[-(d + 1):], v[-(d + 1):]
    if len(set(xs)) != len(xs):
        return v[-1], unc
    P = list(ys)
    for k in range(1, d + 1):
        for i in range(d, k - 1, -1):
            P[i] = (xs[i] * P[i - 1] - xs[i - k] * P[i]) / (xs[i] - xs[i - k])
    return P[d], unc


def _check_decreasing(levels):
    if any(b >= a for a, b in zip(levels, levels[1:])):
        raise ValueError("ladder levels must be strictly decreasing")


def _ball_inside(grid: Grid, a, r: float) -> None:
    lo = np.array(grid.origin)
    hi = lo + grid.h * (np.array(grid.shape) - 1)
    a = np.asarray(a, dtype=float)
    if np.any(a - r < lo) or np.any(a + r > hi):
        raise ValueError(f"ball of radius {r} around {tuple(a)} leaves the box")


def ball_volume(n: int, r: float) -> float:
    return math.pi ** (n / 2) / math.gamma(n / 2 + 1) * r ** n


def _ball_mass(mu: Measure, grid: Grid, a, r: float, quadrature: str) -> float:
    """Mass of mu on B(a, r); 'volume' rescales the density part to the exact ball volume."""
    inside = grid.radius(a) < r
    if quadrature == "lattice":
        return integrate(mu, inside)
    if quadrature != "volume":
        raise ValueError(f"unknown quadrature {quadrature!r}")
    count = int(np.count_nonzero(inside))
    dens = integrate(Measure(grid, mu.density, mu.mask), inside)
    atoms = integrate(Measure(grid, np.zeros(grid.shape), mu.mask, mu.atoms), inside)
    return dens * ball_volume(grid.n, r) / (count * grid.cell_volume) + atoms


def trace_measure(T: Current) -> Measure:
    """T ^ beta^p as a grid measure with atoms."""
    return hessian_measure(T, T.grid.n, [], check=False)


def nu_classic(T: Current, a, r: float, quadrature: str = "lattice") -> float:
    """r^(-p) times the trace mass of T on the ball B(a, r)."""
    _ball_inside(T.grid, a, r)
    return _ball_mass(trace_measure(T), T.grid, a, r, quadrature) / r ** T.p


def m_lelong_point(T: Current, a, m: int, ts, quadrature: str = "lattice") -> LelongLadder:
    """p! Theta_T(a, t) / t^(n(m+p-n)/m) down a decreasing t-ladder."""
    n, p = T.grid.n, T.p
    if not (1 <= m <= n / 2 or m == n):
        raise ValueError("m must satisfy 1 <= m <= n/2 or m = n")
    e = n * (m + p - n) / m
    if e <= 0:
        raise ValueError("degenerate arity: exponent n(m+p-n)/m must be positive")
    ts = [float(t) for t in ts]
    _check_decreasing(ts)
    _ball_inside(T.grid, a, ts[0])
    mu = trace_measure(T)
    masses = [_ball_mass(mu, T.grid, a, t, quadrature) for t in ts]
    nu = [ms / t ** e for ms, t in zip(masses, ts)]
    mono = all(b <= a_ * (1 + 1e-12) + 1e-300 for a_, b in zip(nu, nu[1:]))
    return LelongLadder(ts, masses, nu, monotone=mono, meta={"exponent": e, "params": ts})


def _weight(w, grid: Grid) -> tuple:
    if isinstance(w, WeightSpec):
        return weight_field(w, grid), w.regime
    if isinstance(w, ScalarField):
        return w, None
    raise TypeError("weight must be a WeightSpec or a ScalarField")


def _semi_exhaustive(T: Current, phi: ScalarField, R: float, width: int = 2) -> np.ndarray:
    ball = pseudo_ball_mask(phi, R) & T.support()
    inner = erode(phi.grid.full_mask(), width)
    if np.any(ball & ~inner):
        raise ValueError(f"weight is not semi-exhaustive: level {R} pseudo-ball reaches the box edge")
    return ball


def weight_measure(T: Current, phi: ScalarField, m: int, scheme: str = "inductive",
                   mollifier: MollifierSpec | None = None, check: bool = True) -> Measure:
    q = m + T.p - T.grid.n
    if q < 0:
        raise ValueError(f"arity m+p-n={q} is negative")
    return hessian_measure(T, m, [phi] * q, scheme=scheme, mollifier=mollifier, check=check)


def nu_m_ladder(T: Current, w, m: int, levels, regime: str | None = None, scheme: str = "inductive",
                mollifier: MollifierSpec | None = None, check: bool = True,
                measure: Measure | None = None) -> LelongLadder:
    """nu_T^m(phi, r) on each level r; in the quad regime with the mu^q / r^((n/2m) q) prefactor."""
    g = T.grid
    n = g.n
    phi, reg = _weight(w, g)
    regime = regime or reg or "log"
    if regime not in ("sub", "log", "quad"):
        raise ValueError(f"unknown regime {regime!r}")
    if regime in ("sub", "log") and not 1 <= m <= n / 2:
        raise ValueError("sub and log regimes need 1 <= m <= n/2")
    q = m + T.p - n
    if q < 0:
        raise ValueError(f"arity m+p-n={q} is negative")
    levels = [float(r) for r in levels]
    _check_decreasing(levels)
    _semi_exhaustive(T, phi, levels[0])
    mu = measure if measure is not None else weight_measure(T, phi, m, scheme, mollifier, check)
    masses = [integrate(mu, pseudo_ball_mask(phi, r) & mu.mask, strict=False) for r in levels]
    for r in levels:
        if np.any(pseudo_ball_mask(phi, r) & ~mu.mask & T.support()):
            raise ValueError(f"pseudo-ball at level {r} leaves the valid mask of the measure")
    if regime == "quad":
        muq = (1.0 - n / (2.0 * m)) ** q
        nu = [muq * ms / r ** (n * q / (2.0 * m)) for ms, r in zip(masses, levels)]
    else:
        nu = list(masses)
    mono = all(b <= a * (1 + 1e-9) + 1e-12 for a, b in zip(nu, nu[1:]))
    meta = {"regime": regime, "q": q, "params": level_params(levels, regime, m, n)}
    return LelongLadder(levels, masses, nu, monotone=mono, meta=meta)


def level_params(levels, regime: str, m: int, n: int) -> list:
    """Small parameters of pseudo-ball levels: the radius of the matching phi_m ball."""
    if regime == "log":
        return [math.exp(r) for r in levels]
    if regime == "quad":
        return [math.sqrt(max(r, 0.0)) for r in levels]
    k = n / m - 2.0
    return [(-k * r) ** (-1.0 / k) if r < 0 else math.inf for r in levels]


def nu_m(T: Current, w, m: int, r: float, **kw) -> float:
    return nu_m_ladder(T, w, m, [r], **kw).nu[0]


@dataclass
class ReweightReport:
    lhs: list
    rhs: list
    gaps: list
    levels: list

    @property
    def max_gap(self) -> float:
        return max(self.gaps)


def _check_convex(chi, lo: float, hi: float, samples: int = 257) -> None:
    x = np.linspace(lo, hi, samples)
    y = np.asarray(chi(x), dtype=float)
    d = y[:-2] + y[2:] - 2 * y[1:-1]
    if np.any(np.diff(y) < -1e-12 * np.abs(y[1:]).max()) or np.any(d < -1e-10 * max(1.0, np.abs(y).max())):
        raise ValueError("chi must be convex and increasing on the sampled range")


def reweight_check(T: Current, w, m: int, chi, dchi, levels, chi_at_minus_inf: float | None = None,
                   scheme: str = "inductive", mollifier: MollifierSpec | None = None) -> ReweightReport:
    """Mass of T ^ beta^(n-m) ^ (dd# chi(phi))^q on {phi < r} against chi'(r-0)^q nu(phi, r)."""
    g = T.grid
    phi, _ = _weight(w, g)
    levels = [float(r) for r in levels]
    _check_decreasing(levels)
    finite = phi.values[phi.mask & np.isfinite(phi.values)]
    _check_convex(chi, float(finite.min()), float(max(levels[0], finite.min() + 1e-9)))
    q = m + T.p - g.n
    base = nu_m_ladder(T, phi, m, levels, regime="log", scheme=scheme, mollifier=mollifier)
    cphi = compose(chi, phi, chi_at_minus_inf)
    mu = hessian_measure(T, m, [cphi] * q, scheme=scheme, mollifier=mollifier)
    lhs = [integrate(mu, pseudo_ball_mask(phi, r) & mu.mask, strict=False) for r in levels]
    rhs = [float(dchi(r)) ** q * v for r, v in zip(levels, base.nu)]
    gaps = [abs(a - b) / max(abs(b), 1e-300) for a, b in zip(lhs, rhs)]
    return ReweightReport(lhs, rhs, gaps, levels)


@dataclass
class ComparisonReport:
    l: float
    nu_phi: LelongLadder
    nu_psi: LelongLadder
    bound: float
    holds: bool
    gap: float


def compare_weights(T: Current, phi: ScalarField, psi: ScalarField, m: int, levels, tol: float = 0.02,
                    scheme: str = "inductive", mollifier: MollifierSpec | None = None,
                    regime: str = "log") -> ComparisonReport:
    """Checks nu(psi) <= l^q nu(phi), l = max psi/phi on the deepest pseudo-ball shell of phi."""
    levels = [float(r) for r in levels]
    _check_decreasing(levels)
    if len(levels) < 2:
        raise ValueError("need at least two levels")
    shell = phi.mask & psi.mask & (phi.values < levels[-2]) & (phi.values >= levels[-1])
    shell &= np.isfinite(phi.values) & np.isfinite(psi.values)
    if not shell.any():
        raise ValueError("deepest shell is empty")
    if np.any(phi.values[shell] >= 0) or np.any(psi.values[shell] >= 0):
        raise ValueError("weights must be negative on the deepest shell")
    l = float(np.max(psi.values[shell] / phi.values[shell]))
    q = m + T.p - T.grid.n
    a = nu_m_ladder(T, phi, m, levels, regime=regime, scheme=scheme, mollifier=mollifier)
    b = nu_m_ladder(T, psi, m, [l * r for r in levels], regime=regime, scheme=scheme, mollifier=mollifier)
    bound = l ** q * a.limit
    holds = b.limit <= bound * (1 + tol) + max(a.uncertainty, b.uncertainty)
    gap = abs(b.limit - bound) / max(abs(bound), 1e-300)
    return ComparisonReport(l, a, b, bound, holds, gap)


def scaling_check(T: Current, phi: ScalarField, m: int, lam: float, levels, scheme: str = "inductive",
                  mollifier: MollifierSpec | None = None, regime: str = "log") -> dict:
    """nu(lam phi) on levels lam r_k against lam^q nu(phi) on levels r_k."""
    q = m + T.p - T.grid.n
    base = nu_m_ladder(T, phi, m, levels, regime=regime, scheme=scheme, mollifier=mollifier)
    lv = [lam * r for r in levels]
    scaled = nu_m_ladder(T, phi.scale(lam), m, lv, regime=regime, scheme=scheme, mollifier=mollifier)
    # {lam phi < lam r} = {phi < r}: extrapolate both ladders in the same small parameter
    limit, s_unc = extrapolate(scaled.nu, base.meta.get("params"))
    target = lam ** q * base.limit
    gap = abs(limit - target)
    unc = max(base.uncertainty * lam ** q, s_unc)
    level_gap = max(abs(x - lam ** q * y) / abs(lam ** q * y) for x, y in zip(scaled.nu, base.nu))
    return {"lambda": lam, "nu_scaled": limit, "target": target, "gap": gap, "level_gap": level_gap,
            "uncertainty": unc, "rel_uncertainty": unc / abs(target) if target else math.inf}


# -- projection along the last k axes -------------------------------------------------------------

def base_grid(grid: Grid, k: int) -> Grid:
    n = grid.n
    if not 1 <= k < n:
        raise ValueError("need 1 <= k < n")
    return Grid(n - k, grid.shape[: n - k], grid.origin[: n - k], grid.h)


def _push_sign(n: int, k: int, K, L) -> float:
    """Sign s with top_n(dx_{K+F} dxi_{L+F} ^ a) = s top_{n-k}(dx_K dxi_L ^ a) for base forms a."""
    nb = n - k
    F = tuple(range(nb, n))
    A = tuple(i for i in range(nb) if i not in K)
    B = tuple(i for i in range(nb) if i not in L)
    big = wedge(FormValue(n, {(tuple(K) + F, tuple(L) + F): 1.0}), FormValue(n, {(A, B): 1.0}))
    small = wedge(FormValue(nb, {(tuple(K), tuple(L)): 1.0}), FormValue(nb, {(A, B): 1.0}))
    return float(big.top_coefficient()) / float(small.top_coefficient())


def project_current(T: Current, k: int) -> Current:
    """Direct image under the projection forgetting the last k axes (fiber sums times h^k)."""
    g = T.grid
    n = g.n
    gb = base_grid(g, k)
    nb = n - k
    if T.p > nb:
        raise ValueError("bidimension exceeds the base dimension")
    fib_axes = tuple(range(nb, n))
    edge = np.zeros(g.shape, dtype=bool)
    for ax in fib_axes:
        sl = [slice(None)] * n
        sl[ax] = 0
        edge[tuple(sl)] = True
        sl[ax] = -1
        edge[tuple(sl)] = True
    for c in T.coeffs.values():
        if np.any(c[edge] != 0):
            raise ValueError("current is not compactly supported in the fiber directions")
    if T.atoms:
        raise ValueError("atoms are not supported by the projection")
    coeffs = {}
    d = nb - T.p
    for K in combinations(range(nb), d):
        for L in combinations(range(nb), d):
            key = (tuple(K) + fib_axes, tuple(L) + fib_axes)
            c = T.coeffs.get(key)
            if c is None:
                continue
            s = _push_sign(n, k, K, L)
            coeffs[(K, L)] = s * c.sum(axis=fib_axes) * g.h ** k
    if not coeffs:
        coeffs = {(tuple(range(d)), tuple(range(d))): np.zeros(gb.shape)}
    return Current(gb, T.p, coeffs, closed=T.closed)


def pullback_form(alpha: dict, grid: Grid, k: int) -> dict:
    """Coefficients of pi^* alpha: base arrays broadcast along the fiber axes."""
    n = grid.n
    shp = grid.shape[: n - k] + (1,) * k
    return {key: np.broadcast_to(np.asarray(c, dtype=float).reshape(shp), grid.shape)
            for key, c in alpha.items()}


def pairing(T: Current, alpha: dict) -> float:
    """<T, alpha> = sum of top(T ^ alpha) h^n for alpha of bidegree (p, p)."""
    g = T.grid
    prod = wedge(T.as_form(), FormValue(g.n, dict(alpha)))
    top = np.broadcast_to(np.asarray(prod.top_coefficient(), dtype=float), g.shape)
    return fsum_array(top) * g.cell_volume


def adjoint_check(T: Current, k: int, alpha: dict) -> dict:
    P = project_current(T, k)
    lhs = pairing(P, alpha)
    rhs = pairing(T, pullback_form(alpha, T.grid, k))
    return {"push": lhs, "pull": rhs, "rel_gap": abs(lhs - rhs) / max(abs(lhs), abs(rhs), 1e-300)}


def lift_field(psi: ScalarField, grid: Grid, k: int) -> ScalarField:
    """psi o pi on the full grid."""
    n = grid.n
    if psi.poles:
        raise ValueError("lifting pole fields is not supported")
    shp = grid.shape[: n - k] + (1,) * k
    vals = np.broadcast_to(psi.values.reshape(shp), grid.shape).copy()
    mask = np.broadcast_to(psi.mask.reshape(shp), grid.shape).copy()
    return ScalarField(grid, vals, mask)


def transport_check(T: Current, k: int, psi: ScalarField, m: int, levels, scheme: str = "pairing") -> dict:
    """Masses of T ^ (dd# psi o pi)^q ^ beta^(n-m) against pi_*T ^ (dd# psi)^q ^ beta'^(n-m)."""
    P = project_current(T, k)
    phi = lift_field(psi, T.grid, k)
    q = m + T.p - T.grid.n
    mu_full = hessian_measure(T, m, [phi] * q, scheme=scheme, check=False)
    mu_base = hessian_measure(P, m - k, [psi] * q, scheme=scheme, check=False)
    full = [integrate(mu_full, pseudo_ball_mask(phi, r) & mu_full.mask, strict=False) for r in levels]
    base = [integrate(mu_base, pseudo_ball_mask(psi, r) & mu_base.mask, strict=False) for r in levels]
    a, b = LelongLadder(list(levels), full, full), LelongLadder(list(levels), base, base)
    return {"full": a, "base": b, "gap": abs(a.limit - b.limit),
            "uncertainty": max(a.uncertainty, b.uncertainty),
            "level_gaps": [abs(x - y) for x, y in zip(full, base)]}


# -- potentials -------------------------------------------------------------------------------

def potential_lelong_ladder(u_trace: np.ndarray, grid: Grid, a, p: int, radii,
                            quadrature: str = "volume") -> LelongLadder:
    """Classical Lelong ladder of -U for a potential of bidimension (p+1, p+1) with trace u."""
    radii = [float(r) for r in radii]
    _check_decreasing(radii)
    _ball_inside(grid, a, radii[0])
    dens = -math.factorial(p + 1) * np.asarray(u_trace, dtype=float)
    mu = Measure(grid, dens)
    masses = [_ball_mass(mu, grid, a, r, quadrature) for r in radii]
    nu = [ms / r ** (p + 1) for ms, r in zip(masses, radii)]
    mono = all(b <= a_ * (1 + 1e-12) for a_, b in zip(nu, nu[1:]))
    return LelongLadder(radii, masses, nu, monotone=mono, meta={"params": radii})
