"""Newton-kernel local potentials of currents, their traces and residuals."""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from functools import lru_cache
from itertools import combinations

import numpy as np
import scipy.fft as sfft

from .grid import Grid, MollifierSpec, ScalarField, correlate_masked, erode, fsum_array, laplacian, second_difference
from .hessmeasure import Current, hessian_measure, _rel_gap
from .mconvex import _cube_power_average
from .superalgebra import FormValue, beta_power, one, top_form, wedge, weak_positivity_audit

FFT_WORKERS = 1  # capped by the command-line --threads flag
DIRECT_LIMIT = 2e8  # source x target pairs above which the FFT route is used


def unit_ball_volume(n: int) -> float:
    return math.pi ** (n / 2) / math.gamma(n / 2 + 1)


@dataclass(frozen=True)
class NewtonKernel:
    """h(x) = -c_n |x|^(2-n) with c_n = 1/((n-2) Vol(B)); self cell uses the cube average."""

    n: int

    def __post_init__(self):
        if self.n < 3:
            raise ValueError("the Newton kernel |x|^(2-n) needs n >= 3")

    @property
    def c(self) -> float:
        return 1.0 / ((self.n - 2) * unit_ball_volume(self.n))

    def value(self, r):
        r = np.asarray(r, dtype=float)
        with np.errstate(divide="ignore"):
            return -self.c * r ** (2.0 - self.n)

    def self_cell(self, h: float) -> float:
        return -self.c * h ** (2.0 - self.n) * _cube_power_average(self.n, self.n - 2.0)

    def table(self, grid: Grid, shape=None) -> np.ndarray:
        """Kernel on all offsets -(s-1)..(s-1) per axis."""
        shape = grid.shape if shape is None else shape
        r2 = np.zeros([2 * s - 1 for s in shape])
        for i, s in enumerate(shape):
            ax = (np.arange(2 * s - 1) - (s - 1)) * grid.h
            shp = [1] * grid.n
            shp[i] = -1
            r2 = r2 + ax.reshape(shp) ** 2
        K = self.value(np.sqrt(r2))
        K[tuple(s - 1 for s in shape)] = self.self_cell(grid.h)
        return K


def newton_convolve(density: np.ndarray, grid: Grid, method: str = "auto") -> np.ndarray:
    """(h * f)(x) = sum_y h(x - y) f(y) h^n over all nodes."""
    return newton_convolve_many([density], grid, method)[0]


def newton_convolve_many(densities: list, grid: Grid, method: str = "auto") -> list:
    """Several Newton convolutions on one grid; the FFT route transforms the kernel once."""
    fs = [np.asarray(f, dtype=float) for f in densities]
    nsrc = max((int(np.count_nonzero(f)) for f in fs), default=0)
    if method == "auto":
        method = "direct" if nsrc * grid.size <= DIRECT_LIMIT else "fft"
    if method == "direct":
        return [_direct(f, grid) for f in fs]
    if method != "fft":
        raise ValueError(f"unknown method {method!r}")
    ker = NewtonKernel(grid.n).table(grid)
    shape = grid.shape
    # outputs are read at offsets s-1..2s-2, so a cyclic length >= 2s-1 never wraps
    fshape = [sfft.next_fast_len(k, real=True) for k in ker.shape]
    kf = sfft.rfftn(ker, fshape, workers=FFT_WORKERS)
    del ker
    start = [s - 1 for s in shape]
    sl = tuple(slice(a, a + s) for a, s in zip(start, shape))
    out = []
    for f in fs:
        if not np.any(f):
            out.append(np.zeros(shape))
            continue
        conv = sfft.irfftn(sfft.rfftn(f, fshape, workers=FFT_WORKERS) * kf, fshape, workers=FFT_WORKERS)
        out.append(np.ascontiguousarray(conv[sl]) * grid.cell_volume)
    return out


def _direct(f: np.ndarray, grid: Grid) -> np.ndarray:
    ker = NewtonKernel(grid.n)
    src = np.argwhere(f != 0)
    out = np.zeros(grid.size)
    if len(src) == 0:
        return out.reshape(grid.shape)
    idx = np.indices(grid.shape).reshape(grid.n, -1).T
    self_val = ker.self_cell(grid.h)
    for y in src:
        d = np.sqrt(((idx - y) ** 2).sum(axis=1)) * grid.h
        with np.errstate(divide="ignore"):
            k = ker.value(d)
        k[d == 0] = self_val
        out += k * f[tuple(y)]
    return out.reshape(grid.shape) * grid.cell_volume


# -- the mixed beta-power expansion ---------------------------------------------------------

@lru_cache(maxsize=None)
def fiber_table(n: int, p: int) -> dict:
    """Map (I, J) -> {(K, L): c} such that the (y, zeta) fiber integral of
    dy_I ^ dzeta_J ^ beta^(n-1)(x - y, xi - zeta) equals sum c dx_K ^ dxi_L.

    Built in the doubled space: axes 0..n-1 carry x, axes n..2n-1 carry y.
    """
    N = 2 * n
    bd = FormValue(N)
    for i in range(n):
        a = FormValue(N, {((i,), ()): 1.0, ((n + i,), ()): -1.0})
        b = FormValue(N, {((), (i,)): 1.0, ((), (n + i,)): -1.0})
        bd = bd + wedge(a, b)
    power = one(N)
    for _ in range(n - 1):
        power = wedge(power, bd)
    ytop = one(N)
    for i in range(n):
        ytop = wedge(ytop, FormValue(N, {((n + i,), (n + i,)): 1.0}))
    d = n - p
    out = {}
    for I in combinations(range(n), d):
        for J in combinations(range(n), d):
            src = FormValue(N, {(tuple(n + i for i in I), tuple(n + j for j in J)): 1.0})
            prod = wedge(src, power)
            row = {}
            for K in combinations(range(n), n - p - 1):
                for L in combinations(range(n), n - p - 1):
                    probe = wedge(FormValue(N, {(K, L): 1.0}), ytop)
                    (key, sign), = probe.terms.items()
                    c = prod.terms.get(key, 0.0)
                    if c != 0.0:
                        row[(K, L)] = c / sign
            out[(I, J)] = row
    return out


def paired_sign(s: int) -> int:
    """dx_I ^ dxi_I = sign * prod_{i in I} dx_i ^ dxi_i for |I| = s."""
    return -1 if (s * (s - 1) // 2) & 1 else 1


@dataclass
class FormField:
    grid: Grid
    form: FormValue  # array coefficients

    def coeff(self, K, L) -> np.ndarray:
        c = self.form.coeff(K, L)
        return np.broadcast_to(np.asarray(c, dtype=float), self.grid.shape)

    def sup_norm(self, mask=None) -> float:
        vals = [np.abs(np.asarray(c))[mask] if mask is not None else np.abs(np.asarray(c))
                for c in self.form.terms.values()]
        return float(max((v.max() for v in vals if v.size), default=0.0))

    def to_current(self) -> Current:
        n = self.grid.n
        degs = self.form.bidegrees()
        d = degs.pop()[0] if degs else 0
        return Current(self.grid, n - d, dict(self.form.terms))


@dataclass
class PotentialResult:
    U: FormField
    u: ScalarField
    eta: ScalarField
    p: int
    audit_min: float = 0.0
    meta: dict = field(default_factory=dict)


def _check_inputs(T: Current, eta: ScalarField):
    g = T.grid
    if g.n < 3:
        raise ValueError("local potentials need n >= 3")
    if eta.grid != g:
        raise ValueError("cutoff lives on another grid")
    ev = eta.values
    if np.any(ev < -1e-12) or np.any(ev > 1 + 1e-12):
        raise ValueError("cutoff must take values in [0, 1]")
    band = ~erode(g.full_mask(), 1)
    for c in T.coeffs.values():
        if np.any((c * ev)[band] != 0):
            raise ValueError("eta * T is not compactly supported in the box")
    if T.p < 1 or T.p > g.n - 1:
        raise ValueError("local potentials need 1 <= p <= n-1")


def local_potential(T: Current, eta: ScalarField, method: str = "auto", audit_nodes: int = 8,
                    seed: int = 0) -> PotentialResult:
    """U(x) = -c_n int eta(y) T(y) ^ beta^(n-1)(x-y, xi-zeta) / |x-y|^(n-2)."""
    _check_inputs(T, eta)
    g = T.grid
    n, p = g.n, T.p
    table = fiber_table(n, p)
    combos: dict = {}
    for IJ, c in T.coeffs.items():
        if not np.any(c):
            continue
        for KL, w in table[IJ].items():
            combos.setdefault(KL, []).append((w, IJ))
    keys, dens = [], []
    for KL in sorted(combos):
        d = np.zeros(g.shape)
        for w, IJ in combos[KL]:
            d = d + w * eta.values * T.coeffs[IJ]
        keys.append(KL)
        dens.append(d)
    terms = {}
    for KL, conv in zip(keys, newton_convolve_many(dens, g, method)):
        if np.any(conv):
            terms[KL] = conv
    U = FormField(g, FormValue(n, terms))
    u = diagonal_trace(U, p)
    res = PotentialResult(U, u, eta, p)
    res.audit_min = _negativity_audit(U, audit_nodes, seed)
    return res


def diagonal_trace(U: FormField, p: int) -> ScalarField:
    """sum_I U_II in the paired basis prod (dx_i ^ dxi_i), |I| = n-p-1."""
    n = U.grid.n
    s = n - p - 1
    sign = paired_sign(s)
    tot = np.zeros(U.grid.shape)
    for I in combinations(range(n), s):
        tot = tot + sign * U.coeff(I, I)
    return ScalarField(U.grid, tot)


def trace_by_beta(U: FormField, p: int) -> np.ndarray:
    """u with u beta^n = n!/(p+1)! U ^ beta^(p+1)."""
    n = U.grid.n
    top = wedge(U.form, beta_power(n, p + 1)).top_coefficient()
    return np.broadcast_to(np.asarray(top, dtype=float), U.grid.shape) / math.factorial(p + 1)


def trace_constant(n: int, p: int) -> float:
    return (n - p) * math.factorial(n - 1) / math.factorial(p)


def trace_potential(T: Current, eta: ScalarField, method: str = "auto") -> ScalarField:
    """u(x) = ((n-p)(n-1)!/p!) int eta(y) h(x-y) T ^ beta^p (y)."""
    _check_inputs(T, eta)
    g = T.grid
    tau = T.trace_density() * eta.values
    u = trace_constant(g.n, T.p) * newton_convolve(tau, g, method)
    return ScalarField(g, u)


def _negativity_audit(U: FormField, nodes: int, seed: int) -> float:
    """Minimum over sampled nodes of the audit of -U (>= -tol means weakly negative)."""
    if not U.form.terms:
        return 0.0
    g = U.grid
    mag = sum(np.abs(np.asarray(c)) for c in U.form.terms.values())
    mag = np.broadcast_to(mag, g.shape)
    order = np.argsort(mag.ravel(), kind="stable")[::-1]
    picks = order[np.linspace(0, len(order) // 2, nodes).astype(int)]
    worst = math.inf
    for fi in picks:
        idx = np.unravel_index(fi, g.shape)
        pt = FormValue(g.n, {k: -float(np.broadcast_to(c, g.shape)[idx]) for k, c in U.form.terms.items()})
        if pt.is_zero():
            continue
        if not pt.is_symmetric(tol=1e-12 * max(1.0, max(abs(v) for v in pt.terms.values()))):
            continue
        pt = FormValue(g.n, {k: 0.5 * (v + pt.coeff(k[1], k[0])) for k, v in pt.terms.items()})
        worst = min(worst, weak_positivity_audit(pt, 16, seed).min_pairing)
    return worst if worst != math.inf else 0.0


def dd_sharp(U: FormField) -> FormField:
    """Discrete dd# of a form field: sum_ij D_i D_j U_KL dx_i ^ dxi_j ^ dx_K ^ dxi_L."""
    g = U.grid
    n = g.n
    out = FormValue(n)
    for (K, L), c in U.form.terms.items():
        a = np.broadcast_to(np.asarray(c, dtype=float), g.shape)
        for i in range(n):
            for j in range(n):
                if i in K or j in L:
                    continue
                d = second_difference(a, i, j, g.h)
                out = out + wedge(FormValue(n, {((i,), (j,)): d}), FormValue(n, {(K, L): 1.0}))
    return FormField(g, out)


def residual(T: Current, eta: ScalarField, P: PotentialResult) -> FormField:
    """R = dd#(U / n!) - eta T; U/n! is the potential of the kernel h beta^(n-1)/n!."""
    g = T.grid
    n = g.n
    dd = dd_sharp(P.U)
    terms = {k: np.asarray(c) / math.factorial(n) for k, c in dd.form.terms.items()}
    for k, c in T.coeffs.items():
        terms[k] = terms.get(k, 0.0) - eta.values * c
    R = FormField(g, FormValue(n, terms))
    valid = np.ones(g.shape, dtype=bool)
    for c in R.form.terms.values():
        valid &= np.isfinite(np.broadcast_to(c, g.shape))
    if not valid.any():
        raise ValueError("mask too eroded for the residual")
    R.form = FormValue(n, {k: np.where(valid, c, np.nan) for k, c in R.form.terms.items()})
    return R


def kernel_consistency(grid: Grid, spec: MollifierSpec) -> float:
    """Mass of the top coefficient of dd#(K * chi_j), K = h beta^(n-1)/n!; equals 1 in the limit."""
    n = grid.n
    K = spec.kernel(grid.h, n)
    chi = np.zeros(grid.shape)
    c = tuple(s // 2 for s in grid.shape)
    sl = tuple(slice(ci - (k // 2), ci + (k // 2) + 1) for ci, k in zip(c, K.shape))
    chi[sl] = K / grid.cell_volume
    pot = newton_convolve(chi, grid)
    lap = laplacian(pot, grid.h)
    top = wedge(FormValue(n, {((i,), (i,)): 1.0 for i in range(n)}), beta_power(n, n - 1)).top_coefficient()
    # top(alpha_{Hess} ^ beta^(n-1)) = (n-1)! * trace, scaled by 1/n!
    dens = lap * top / n / math.factorial(n)
    return fsum_array(dens[np.isfinite(dens)]) * grid.cell_volume


def mollify_form(U: FormField, spec: MollifierSpec) -> FormField:
    K = spec.kernel(U.grid.h, U.grid.n)
    terms = {}
    for k, c in U.form.terms.items():
        a = np.broadcast_to(np.asarray(c, dtype=float), U.grid.shape)
        out, mask = correlate_masked(a, np.ones(U.grid.shape, dtype=bool), K)
        terms[k] = out
    return FormField(U.grid, FormValue(U.grid.n, terms))


def mollify_current(T: Current, spec: MollifierSpec) -> Current:
    K = spec.kernel(T.grid.h, T.grid.n)
    coeffs = {}
    for k, c in T.coeffs.items():
        out, _ = correlate_masked(np.asarray(c, dtype=float), np.ones(T.grid.shape, dtype=bool), K)
        coeffs[k] = np.nan_to_num(out)
    return Current(T.grid, T.p, coeffs, closed=T.closed)


@dataclass
class ProductReport:
    masses: list
    cauchy_gap: float
    current_masses: list
    current_gap: float
    weighted_masses: list
    weighted_gap: float

    def to_json(self) -> str:
        return json.dumps(self.__dict__, sort_keys=True)


def potential_product_harness(T: Current, P: PotentialResult, ladders: list, probes: list,
                              specs: list, weight: ScalarField | None = None) -> ProductReport:
    """Masses of U_j ^ dd#v_1^j ^ ..., T_j ^ dd#v_1^j ^ ... and v_0 T_j ^ ... over probes."""
    J = len(specs)
    for lad in ladders:
        if len(lad) != J:
            raise ValueError("one ladder entry per mollification level")
        for a, b in zip(lad, lad[1:]):
            if np.any(b.values > a.values + 1e-12):
                raise ValueError("ladder is not pointwise decreasing")
    n = T.grid.n
    um, tm, wm = [], [], []
    for j, spec in enumerate(specs):
        vs = [lad[j] for lad in ladders]
        Uj = mollify_form(P.U, spec).to_current()
        Uj = Current(Uj.grid, Uj.p, {k: np.nan_to_num(c) for k, c in Uj.coeffs.items()})
        mu = hessian_measure(Uj, n, vs, check=False)
        um.append([_probe_mass(mu, pr) for pr in probes])
        Tj = mollify_current(T, spec)
        mt = hessian_measure(Tj, n, vs, check=False)
        tm.append([_probe_mass(mt, pr) for pr in probes])
        if weight is not None:
            Tw = Current(Tj.grid, Tj.p, {k: c * weight.values for k, c in Tj.coeffs.items()})
            mw = hessian_measure(Tw, n, vs, check=False)
            wm.append([_probe_mass(mw, pr) for pr in probes])

    def gap(ms):
        if len(ms) < 2:
            return 0.0
        return max(_rel_gap(ms[-1][i], ms[-2][i]) for i in range(len(probes)))

    return ProductReport(um, gap(um), tm, gap(tm), wm, gap(wm))


def _probe_mass(mu, probe) -> float:
    from .grid import integrate
    return integrate(mu, probe & mu.mask, strict=False)
