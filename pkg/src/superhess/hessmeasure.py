"""Hessian measures T ^ beta^(n-m) ^ dd#u_1 ^ ... ^ dd#u_k on grids."""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .grid import (Grid, Measure, MollifierSpec, ScalarField, erode, fsum_array, hessian_dd, integrate,
                   mollify, second_difference)
from .mconvex import DISCRETE_CONE_SLACK, is_m_convex, mixed_pairing_field
from .superalgebra import FormValue, beta_power, form_from_matrix, wedge, weak_positivity_audit


@dataclass
class Current:
    """Order-zero current of bidimension (p, p): coefficient fields of bidegree (n-p, n-p).

    ``coeffs`` maps 0-based multi-index pairs (K, L) to arrays over the grid.
    ``atoms`` holds (point, FormValue, weight) point masses.
    """

    grid: Grid
    p: int
    coeffs: dict
    atoms: list = field(default_factory=list)
    closed: bool = False

    def __post_init__(self):
        n = self.grid.n
        if not 0 <= self.p <= n:
            raise ValueError("bidimension out of range")
        d = n - self.p
        clean = {}
        for (K, L), c in self.coeffs.items():
            K, L = tuple(K), tuple(L)
            if len(K) != d or len(L) != d:
                raise ValueError(f"coefficient {K},{L} does not have bidegree ({d},{d})")
            c = np.broadcast_to(np.asarray(c, dtype=float), self.grid.shape)
            clean[(K, L)] = c
        self.coeffs = clean
        for K, L in clean:
            other = clean.get((L, K))
            if other is None or not np.array_equal(other, clean[(K, L)]):
                raise ValueError("coefficient map must be symmetric")
        for _, A, _ in self.atoms:
            if A.bidegree != (d, d):
                raise ValueError("atom form has the wrong bidegree")

    @classmethod
    def unit(cls, grid: Grid) -> "Current":
        return cls(grid, grid.n, {((), ()): np.ones(grid.shape)}, closed=True)

    @classmethod
    def scalar(cls, grid: Grid, f) -> "Current":
        f = np.broadcast_to(np.asarray(f, dtype=float), grid.shape)
        const = bool(np.all(f == f.flat[0]))
        return cls(grid, grid.n, {((), ()): f}, closed=const)

    @classmethod
    def from_form(cls, grid: Grid, form: FormValue, density=1.0, closed: bool | None = None) -> "Current":
        """T = density(x) * form, for a constant-coefficient symmetric form."""
        d, q = form.bidegree
        if d != q:
            raise ValueError("need a (q,q)-form")
        dens = np.broadcast_to(np.asarray(density, dtype=float), grid.shape)
        coeffs = {k: c * dens for k, c in form.terms.items()}
        if closed is None:
            closed = bool(np.all(dens == dens.flat[0]))
        return cls(grid, grid.n - d, coeffs, closed=closed)

    @property
    def is_scalar(self) -> bool:
        return self.p == self.grid.n

    def as_form(self, mask: np.ndarray | None = None) -> FormValue:
        sel = (lambda c: c) if mask is None else (lambda c: c[mask])
        return FormValue(self.grid.n, {k: sel(c) for k, c in self.coeffs.items()})

    def support(self) -> np.ndarray:
        s = np.zeros(self.grid.shape, dtype=bool)
        for c in self.coeffs.values():
            s |= c != 0
        return s

    def trace_density(self) -> np.ndarray:
        """Top coefficient of T ^ beta^p."""
        return _pair(self, [], self.p)


def _pair(T: Current, Hs: list, beta_pow: int, mask: np.ndarray | None = None) -> np.ndarray:
    """Top coefficient of T ^ beta^beta_pow ^ alpha_{H_1} ^ ... node-wise."""
    n = T.grid.n
    shape = T.grid.shape if mask is None else (int(mask.sum()),)
    if T.is_scalar:
        f = T.coeffs[((), ())]
        f = f if mask is None else f[mask]
        if not Hs:
            return math.factorial(n) * np.broadcast_to(f, shape).astype(float)
        return math.factorial(n) * f * mixed_pairing_field(Hs)
    form = wedge(T.as_form(mask), beta_power(n, beta_pow))
    for H in Hs:
        form = wedge(form, form_from_matrix(np.moveaxis(H, (-2, -1), (0, 1))))
    top = form.top_coefficient()
    return np.broadcast_to(np.asarray(top, dtype=float), shape).astype(float)


def _audit_base(T: Current, m: int, nodes: int = 6, trials: int = 12, seed: int = 0) -> None:
    n = T.grid.n
    if T.is_scalar:
        f = T.coeffs[((), ())]
        if np.any(f < 0):
            raise ValueError("T ^ beta^(n-m) is not positive (negative scalar density)")
        return
    tr = np.abs(T.trace_density())
    flat = np.argsort(tr.ravel(), kind="stable")[::-1][:nodes]
    for fi in flat:
        idx = np.unravel_index(fi, T.grid.shape)
        pt = FormValue(n, {k: float(c[idx]) for k, c in T.coeffs.items()})
        v = wedge(pt, beta_power(n, n - m))
        if v.is_zero():
            continue
        rep = weak_positivity_audit(v, trials, seed)
        scale = max(float(np.abs(list(v.terms.values())).max()), 1e-300)
        if rep.min_pairing < -1e-10 * scale:
            raise ValueError(f"T ^ beta^(n-m) fails the positivity audit at node {tuple(int(i) for i in idx)}")


def _check_factor(u: ScalarField, m: int, rel_tol: float) -> None:
    rep = is_m_convex(u, m, rel_tol=rel_tol)
    if not rep.ok:
        raise ValueError(f"factor is not {m}-convex: sigma_{rep.worst_j}={rep.worst_sigma:.4g} at node {rep.worst_node}")


def _pole_distance_check(T: Current, us: list, radius: float) -> None:
    g = T.grid
    sup = T.support()
    edge = sup & ~erode(sup, 1)
    if not edge.any():
        return
    edge_pts = np.argwhere(edge) * g.h
    for u in us:
        for p in u.poles:
            d = np.sqrt(((edge_pts - np.array(p) * g.h) ** 2).sum(axis=1)).min()
            if d < 4.0 * radius:
                raise ValueError("pole too close to the support boundary of T")


def _measure_smooth(T: Current, m: int, us: list, scheme: str) -> Measure:
    g = T.grid
    n = g.n
    k = len(us)
    q = m + T.p - n
    beta_pow = n - m + (q - k)
    if scheme == "pairing":
        hfs = [hessian_dd(u) for u in us]
        mask = np.ones(g.shape, dtype=bool)
        for hf in hfs:
            mask &= hf.mask
        Hs = [hf.values[mask] for hf in hfs]
        dens = np.zeros(g.shape)
        dens[mask] = _pair(T, Hs, beta_pow, mask)
        return Measure(g, dens, mask)
    if scheme != "inductive":
        raise ValueError(f"unknown scheme {scheme!r}")
    if k == 0:
        return _measure_smooth(T, m, us, "pairing")
    if not T.closed:
        raise ValueError("the inductive scheme needs a closed current")
    # dd#( u_1 * T ^ beta^. ^ dd#u_2 ^ ... ): density = sum_ij D_i D_j (u_1 Q_ij)
    inner = np.ones(g.shape, dtype=bool)
    for u in us[1:]:
        inner &= hessian_dd(u).mask
    Hs = [np.moveaxis(hessian_dd(u).values, (-2, -1), (0, 1)) for u in us[1:]]
    rest = wedge(T.as_form(), beta_power(n, beta_pow))
    for H in Hs:
        rest = wedge(rest, form_from_matrix(H))
    u1 = us[0].stencil_values()
    dens = np.zeros(g.shape)
    for i in range(n):
        for j in range(n):
            e = FormValue(n, {((i,), (j,)): 1.0})
            Q = np.broadcast_to(np.asarray(wedge(e, rest).top_coefficient(), dtype=float), g.shape)
            if not np.any(Q):
                continue
            F = np.where(inner, u1 * Q, np.nan)
            dens = dens + second_difference(F, i, j, g.h)
    mask = np.isfinite(dens)
    return Measure(g, np.where(mask, dens, 0.0), mask)


def hessian_measure(T: Current, m: int, us: list, scheme: str = "pairing",
                    mollifier: MollifierSpec | None = None, check: bool = True,
                    rel_tol: float = DISCRETE_CONE_SLACK) -> Measure:
    """Grid measure of T ^ beta^(n-m) ^ dd#u_1 ^ ... ^ dd#u_k.

    Densities are top coefficients (superintegral densities), so the pairing
    value relative to beta^n is density / n!.  When k < m+p-n the missing
    factors are filled with beta.  ``scheme='pairing'`` multiplies node-wise
    discrete Hessians; ``scheme='inductive'`` evaluates dd#(u_1 T ^ ...) with
    the same second differences, so masses over a region reduce to terms near
    its boundary.  Fields with poles are mollified at the scales of
    ``mollifier`` and of its refinement; the finer level is returned and both
    are kept in ``meta``.
    """
    g = T.grid
    n = g.n
    k = len(us)
    if not 1 <= m <= n:
        raise ValueError("m out of range")
    q = m + T.p - n
    if q < 0 or k > q:
        raise ValueError(f"arity violation: k={k} but m+p-n={q}")
    for u in us:
        if u.grid != g:
            raise ValueError("factor on a different grid")
    if check:
        _audit_base(T, m)
    has_poles = any(u.poles for u in us)
    if not has_poles:
        if check:
            for u in us:
                _check_factor(u, m, rel_tol)
        mu = _measure_smooth(T, m, us, scheme)
        mu.atoms = _atom_masses(T, us, n - m + (q - k), mu)
        return mu
    if mollifier is None:
        raise ValueError("fields with poles need a mollifier spec")
    _pole_distance_check(T, us, mollifier.radius)
    levels = [mollifier, mollifier.refined()]
    measures = []
    for spec in levels:
        smooth = [mollify(u, spec) if u.poles else u for u in us]
        if check:
            for u in smooth:
                _check_factor(u, m, rel_tol)
        measures.append(_measure_smooth(T, m, smooth, scheme))
    coarse, fine = measures
    common = coarse.mask & fine.mask
    fine.meta["scales"] = [levels[0].radius, levels[1].radius]
    fine.meta["masses"] = [integrate(coarse, common), integrate(fine, common)]
    fine.meta["coarse"] = coarse
    return fine


def _atom_masses(T: Current, us: list, beta_pow: int, mu: Measure) -> list:
    out = []
    n = T.grid.n
    Hs = [hessian_dd(u) for u in us] if T.atoms else []
    for pt, A, w in T.atoms:
        idx = T.grid.node_of(pt)
        form = wedge(A, beta_power(n, beta_pow))
        for hf in Hs:
            if not hf.mask[idx]:
                raise ValueError("atom sits where a factor Hessian is undefined")
            form = wedge(form, form_from_matrix(hf.values[idx]))
        out.append((pt, w * float(form.top_coefficient())))
    return out


def measure_mass(mu: Measure, region) -> float:
    return integrate(mu, region)


# -- CLN audit ---------------------------------------------------------------------------------

@dataclass
class CLNReport:
    ratio: float
    mass_K: float
    sup_norms: list
    base_mass_L: float
    scaled_ratio: float

    @property
    def scale_invariant(self) -> bool:
        return abs(self.ratio - self.scaled_ratio) <= 1e-9 * max(abs(self.ratio), 1e-300)


def cln_audit(T: Current, m: int, us: list, K: np.ndarray, L: np.ndarray, scheme: str = "pairing",
              mollifier: MollifierSpec | None = None) -> CLNReport:
    """Ratio ||T^beta^(n-m)^dd#u_1...||_K / (prod sup_L |u_i| * ||T ^ beta^(n-m)||_L)."""
    K = np.asarray(K, dtype=bool)
    L = np.asarray(L, dtype=bool)
    if np.any(K & ~erode(L, 1)):
        raise ValueError("K must lie in the interior of L")

    def ratio(fields):
        mu = hessian_measure(T, m, fields, scheme=scheme, mollifier=mollifier)
        if np.any(K & ~mu.mask):
            raise ValueError("K leaves the valid region of the measure")
        mass = fsum_array(np.abs(mu.density[K])) * T.grid.cell_volume
        sups = []
        for u in fields:
            vals = u.filled(require_fill=bool(u.poles))[L]
            sups.append(float(np.nanmax(np.abs(vals))))
        base = fsum_array(np.abs(T.trace_density()[L])) * T.grid.cell_volume
        return mass, sups, base, mass / (math.prod(sups) * base)

    mass, sups, base, r = ratio(us)
    scaled = [us[0].scale(2.0)] + list(us[1:]) if us else us
    r2 = ratio(scaled)[3] if us else r
    return CLNReport(r, mass, sups, base, r2)


# -- convergence harness -------------------------------------------------------------------------

@dataclass
class HarnessReport:
    masses: list            # masses[j][probe]
    weighted: list          # u_1-weighted masses[j][probe]
    cauchy_gap: float
    weighted_gap: float
    trend: list
    scales: list

    def to_json(self) -> str:
        return json.dumps({"masses": self.masses, "cauchy_gap": self.cauchy_gap, "scales": self.scales,
                           "weighted_masses": self.weighted, "weighted_gap": self.weighted_gap,
                           "trend": self.trend}, sort_keys=True)


def _rel_gap(a: float, b: float) -> float:
    return abs(a - b) / max(abs(a), abs(b), 1e-300)


def _trend(vals: list) -> str:
    d = np.diff(vals)
    if np.all(d >= -1e-12 * np.abs(vals[1:]).max(initial=1.0)):
        return "nondecreasing"
    if np.all(d <= 1e-12 * np.abs(vals[1:]).max(initial=1.0)):
        return "nonincreasing"
    return "mixed"


def convergence_harness(T: Current, m: int, ladders: list, probes: list, scheme: str = "pairing",
                        mollifier: MollifierSpec | None = None, scales: list | None = None,
                        tol: float = 1e-12) -> HarnessReport:
    """Masses of the Hessian measure along decreasing ladders u_i^j, j = 0..J-1."""
    if not ladders:
        raise ValueError("need at least one ladder")
    J = len(ladders[0])
    if any(len(l) != J for l in ladders) or J < 2:
        raise ValueError("ladders must share a length >= 2")
    for lad in ladders:
        for a, b in zip(lad, lad[1:]):
            common = a.mask & b.mask
            if np.any(b.values[common] > a.values[common] + tol):
                raise ValueError("ladder is not pointwise decreasing")
    masses, weighted = [], []
    for j in range(J):
        us = [lad[j] for lad in ladders]
        mu = hessian_measure(T, m, us, scheme=scheme, mollifier=mollifier)
        masses.append([integrate(mu, P) for P in probes])
        w_T = Current(T.grid, T.p, {k: c * np.where(us[0].mask, us[0].values, 0.0) for k, c in T.coeffs.items()})
        mw = hessian_measure(w_T, m, us[1:], scheme="pairing", mollifier=mollifier, check=False)
        weighted.append([integrate(mw, P) for P in probes])
    gap = max(_rel_gap(masses[-1][i], masses[-2][i]) for i in range(len(probes)))
    wgap = max(_rel_gap(weighted[-1][i], weighted[-2][i]) for i in range(len(probes)))
    trend = [_trend([masses[j][i] for j in range(J)]) for i in range(len(probes))]
    return HarnessReport(masses, weighted, gap, wgap, trend, list(scales) if scales else list(range(J)))
