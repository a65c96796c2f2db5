"""m-convexity of sampled fields, the weight family phi_m, and class certificates."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache
from itertools import combinations
from typing import Sequence

import numpy as np
from scipy.special import roots_legendre

from .grid import Grid, ScalarField, erode, gradient, hessian_dd
from .superalgebra import sigma_pairing

# Relative slack used when a discrete Hessian is tested against the closed cone.
# Second differences of fields on the cone boundary (phi_m, kinks) leave the
# cone by a few tens of percent of |H|^j within a few nodes of a singularity.
DISCRETE_CONE_SLACK = 0.25


# -- vectorized sigma / mixed pairings ------------------------------------------------

def principal_minor_sum(H: np.ndarray, k: int) -> np.ndarray:
    """sigma_k of the eigenvalues of each matrix in H[..., n, n]."""
    n = H.shape[-1]
    if k == 0:
        return np.ones(H.shape[:-2])
    if k == 1:
        return np.trace(H, axis1=-2, axis2=-1)
    out = np.zeros(H.shape[:-2])
    for S in combinations(range(n), k):
        sub = H[..., S, :][..., :, S]
        if k == 2:
            out = out + sub[..., 0, 0] * sub[..., 1, 1] - sub[..., 0, 1] * sub[..., 1, 0]
        else:
            out = out + np.linalg.det(sub)
    return out


def sigma_pairing_field(H: np.ndarray, j: int) -> np.ndarray:
    n = H.shape[-1]
    return principal_minor_sum(H, j) / math.comb(n, j)


def mixed_pairing_field(Hs: Sequence[np.ndarray]) -> np.ndarray:
    """Node-wise mixed pairing of k matrix fields with beta^(n-k)."""
    k = len(Hs)
    if k == 0:
        raise ValueError("need at least one factor")
    n = Hs[0].shape[-1]
    out = np.zeros(Hs[0].shape[:-2])
    for size in range(1, k + 1):
        for S in combinations(range(k), size):
            M = Hs[S[0]] if size == 1 else sum(Hs[i] for i in S)
            out = out + (-1) ** (k - size) * principal_minor_sum(M, k)
    return out / (math.factorial(k) * math.comb(n, k))


# -- m-convexity reports -----------------------------------------------------------------

@dataclass
class ConvexityReport:
    ok: bool
    m: int
    worst_node: tuple | None
    worst_sigma: float
    worst_j: int
    checked: int

    def __bool__(self) -> bool:
        return self.ok


def cone_margins(H: np.ndarray, m: int, tol: float | None = None, rel_tol: float = 0.0):
    """Per-j arrays sigma_j-pairing + allowance (negative means outside the cone)."""
    scale = np.abs(H).max(axis=(-2, -1))
    out = []
    for j in range(1, m + 1):
        s = sigma_pairing_field(H, j)
        allow = (1e-10 * (1.0 + scale) if tol is None else tol) + rel_tol * scale ** j
        out.append((s, s + allow))
    return out


def is_m_convex(u: ScalarField, m: int, tol: float | None = None, rel_tol: float = 0.0,
                mask: np.ndarray | None = None) -> ConvexityReport:
    """Discrete Gamma_m test of the second-difference Hessian at interior nodes."""
    n = u.grid.n
    if not 1 <= m <= n:
        raise ValueError(f"m must lie in 1..{n}")
    hf = hessian_dd(u)
    M = hf.mask if mask is None else (hf.mask & mask)
    if not M.any():
        raise ValueError("no interior node to test")
    H = hf.values[M]
    worst, worst_j, worst_i = math.inf, 0, None
    ok = True
    for j, (s, margin) in enumerate(cone_margins(H, m, tol, rel_tol), start=1):
        i = int(np.argmin(margin))
        if margin[i] < 0:
            ok = False
        if s[i] < worst:
            worst, worst_j, worst_i = float(s[i]), j, i
    nodes = np.argwhere(M)
    node = tuple(int(v) for v in nodes[worst_i]) if worst_i is not None else None
    return ConvexityReport(ok, m, node, worst, worst_j, int(M.sum()))


def max_combine(u: ScalarField, v: ScalarField) -> ScalarField:
    if u.grid != v.grid:
        raise ValueError("fields live on different grids")
    vals = np.maximum(u.values, v.values)
    mask = u.mask & v.mask
    poles = tuple(p for p in u.poles if p in set(v.poles))
    fills = ()
    if poles and u.pole_fill and v.pole_fill:
        fu = dict(zip(u.poles, u.pole_fill))
        fv = dict(zip(v.poles, v.pole_fill))
        fills = tuple(max(fu[p], fv[p]) for p in poles)
    return ScalarField(u.grid, vals, mask, poles, fills)


# -- the weight family --------------------------------------------------------------------

@dataclass(frozen=True)
class WeightSpec:
    """phi_m(x) = -|x-a|^(2-n/m)/(n/m-2) (m != n/2), log|x-a| (m = n/2), |x-a|^2 (quad)."""

    m: int
    n: int
    a: tuple

    def __post_init__(self):
        object.__setattr__(self, "a", tuple(float(x) for x in self.a))
        if not 1 <= self.m <= self.n:
            raise ValueError("need 1 <= m <= n")
        if len(self.a) != self.n:
            raise ValueError("pole must have n coordinates")

    @property
    def regime(self) -> str:
        if 2 * self.m < self.n:
            return "sub"
        if 2 * self.m == self.n:
            return "log"
        return "quad"

    @property
    def exponent(self) -> float:
        """k = n/m - 2 in the sub regime."""
        return self.n / self.m - 2.0

    def to_text(self) -> str:
        return f"weight m={self.m} n={self.n} a=" + ",".join(repr(x) for x in self.a)

    @classmethod
    def from_text(cls, text: str) -> "WeightSpec":
        parts = text.strip().split()
        if not parts or parts[0] != "weight":
            raise ValueError("expected 'weight m=.. n=.. a=..'")
        kv = dict(p.split("=", 1) for p in parts[1:])
        return cls(int(kv["m"]), int(kv["n"]), tuple(float(x) for x in kv["a"].split(",")))

    def profile(self, rho):
        """phi_m as a function of the distance to the pole."""
        rho = np.asarray(rho, dtype=float)
        with np.errstate(divide="ignore"):
            if self.regime == "quad":
                return rho ** 2
            if self.regime == "log":
                return np.log(rho)
            k = self.exponent
            return -rho ** (-k) / k

    def dprofile(self, rho):
        rho = np.asarray(rho, dtype=float)
        if self.regime == "quad":
            return 2.0 * rho
        return rho ** (1.0 - self.n / self.m)

    def value(self, x) -> float:
        return float(self.profile(math.dist(x, self.a)))

    def hessian(self, x) -> np.ndarray:
        """Analytic Hessian rho^(-n/m) (I - (n/m) xh xh^T); 2I in the quad regime."""
        n = self.n
        if self.regime == "quad":
            return 2.0 * np.eye(n)
        d = np.asarray(x, dtype=float) - np.asarray(self.a)
        rho = float(np.linalg.norm(d))
        if rho == 0.0:
            raise ValueError("Hessian undefined at the pole")
        e = d / rho
        q = self.n / self.m
        return rho ** (-q) * (np.eye(n) - q * np.outer(e, e))

    def sigma_closed_form(self, x, s: int) -> float:
        """Pairing of (dd# phi)^s ^ beta^(n-s) with beta^n off the pole."""
        if s == 0:
            return 1.0
        rho = math.dist(x, self.a)
        if self.regime == "log":
            return (1.0 - 2.0 * s / self.n) * rho ** (-2.0 * s)
        if self.regime == "sub":
            return (1.0 - s / self.m) * rho ** (-self.n * s / self.m)
        raise ValueError("closed form only for the sub and log regimes")

    def cell_average(self, h: float) -> float:
        """Average of phi over the cube of side h centred at the pole."""
        if self.regime == "quad":
            return self.n * h * h / 12.0
        if self.regime == "log":
            return math.log(h) + _cube_log_average(self.n)
        k = self.exponent
        return -(h ** (-k)) * _cube_power_average(self.n, k) / k


@lru_cache(maxsize=None)
def _face_nodes(n: int, order: int = 24):
    # tensor Gauss-Legendre on the face [-1/2, 1/2]^(n-1)
    x, w = roots_legendre(order)
    x, w = x / 2.0, w / 2.0
    d = n - 1
    grids = np.meshgrid(*([x] * d), indexing="ij")
    wts = np.ones_like(grids[0])
    for g in np.meshgrid(*([w] * d), indexing="ij"):
        wts = wts * g
    r2 = sum(g ** 2 for g in grids)
    return r2.ravel(), wts.ravel()


@lru_cache(maxsize=None)
def _cube_power_average(n: int, k: float) -> float:
    # unit-cube mean of |x|^-k: pyramid decomposition over the 2n faces
    if not 0 <= k < n:
        raise ValueError("singularity not integrable")
    r2, w = _face_nodes(n)
    return n / (n - k) * math.fsum((w * (0.25 + r2) ** (-k / 2.0)).tolist())


@lru_cache(maxsize=None)
def _cube_log_average(n: int) -> float:
    r2, w = _face_nodes(n)
    return -1.0 / n + math.fsum((w * 0.5 * np.log(0.25 + r2)).tolist())


def weight_field(w: WeightSpec, g: Grid) -> ScalarField:
    if w.n != g.n:
        raise ValueError("weight and grid dimensions differ")
    lo = np.array(g.origin)
    hi = lo + g.h * (np.array(g.shape) - 1)
    a = np.array(w.a)
    if np.any(a <= lo + 0.5 * g.h) or np.any(a >= hi - 0.5 * g.h):
        raise ValueError("pole must lie strictly inside the box")
    with np.errstate(divide="ignore"):
        vals = w.profile(g.radius(w.a))
    poles, fills = (), ()
    if w.regime != "quad" and g.is_node(w.a):
        idx = g.node_of(w.a)
        vals[idx] = -np.inf
        poles, fills = (idx,), (w.cell_average(g.h),)
    return ScalarField(g, vals, None, poles, fills)


def compose(chi, u: ScalarField, chi_at_minus_inf: float | None = None) -> ScalarField:
    """chi(u) node-wise; poles map to chi(-inf) which must be finite."""
    vals = np.array(u.values, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        out = chi(vals)
    if u.poles:
        if chi_at_minus_inf is None:
            chi_at_minus_inf = float(chi(np.array(-np.inf)))
        for p in u.poles:
            out[p] = chi_at_minus_inf
    return ScalarField(u.grid, np.where(u.mask, out, 0.0), u.mask)


@dataclass
class IdentityReport:
    max_err_analytic: float
    max_err_discrete: float | None
    samples: int
    ok: bool


def weight_sigma_identity_check(w: WeightSpec, s: int, samples, grid: Grid | None = None,
                                tol: float = 1e-10, discrete_tol: float | None = None) -> IdentityReport:
    """Compare sigma pairings of (dd# phi)^s with the closed form at sample points.

    Errors are relative to rho^(-n s/m) (resp. rho^(-2s)).  With a grid, the
    second-difference Hessian at the nearest nodes is also compared, with an
    O(h^2/rho^2) allowance.
    """
    if w.regime == "quad":
        raise ValueError("identity is stated for the sub and log regimes")
    if not 0 <= s <= w.m:
        raise ValueError("need 0 <= s <= m")
    pts = [tuple(float(c) for c in p) for p in samples]
    errs = []
    for x in pts:
        ref = w.sigma_closed_form(x, s)
        rho = math.dist(x, w.a)
        scale = rho ** (-w.n * s / w.m)
        val = 1.0 if s == 0 else sigma_pairing(w.hessian(x), s)
        errs.append(abs(val - ref) / scale)
    ea = max(errs) if errs else 0.0
    ok = ea <= tol
    ed = None
    if grid is not None:
        f = weight_field(w, grid)
        hf = hessian_dd(f)
        derrs = []
        allow = []
        for x in pts:
            idx = grid.node_of(x)
            if not hf.mask[idx]:
                continue
            xn = grid.point(idx)
            rho = math.dist(xn, w.a)
            scale = rho ** (-w.n * s / w.m)
            val = 1.0 if s == 0 else float(sigma_pairing_field(hf.values[idx][None], s)[0])
            derrs.append(abs(val - w.sigma_closed_form(xn, s)) / scale)
            allow.append(discrete_tol if discrete_tol is not None else 4.0 * (grid.h / rho) ** 2 * max(s, 1) * w.n)
        if derrs:
            ed = max(derrs)
            ok = ok and all(e <= a for e, a in zip(derrs, allow))
    return IdentityReport(ea, ed, len(pts), ok)


# -- class certificates ---------------------------------------------------------------------

@dataclass
class ClassCertificate:
    tag: str
    sequence: list
    mass_bound: float
    probes: list = field(default_factory=list)

    def __post_init__(self):
        if self.tag not in ("E0m", "Fm", "Em"):
            raise ValueError("tag must be E0m, Fm or Em")


@dataclass
class CertificateReport:
    valid: bool
    reasons: list
    masses: list


def _boundary_band(mask: np.ndarray, width: int = 2) -> np.ndarray:
    return mask & ~erode(mask, width)


def _e0m_checks(u: ScalarField, m: int, reasons: list, label: str):
    from .hessmeasure import Current, hessian_measure

    vals = u.values[u.mask]
    if not np.all(np.isfinite(vals)):
        reasons.append(f"{label}: unbounded")
        return None
    grad = gradient(u)
    gm = np.isfinite(grad).all(axis=-1) & u.mask
    lip = float(np.linalg.norm(grad[gm], axis=-1).max()) if gm.any() else 0.0
    eps = 10.0 * u.grid.h * max(lip, 1e-300)
    band = _boundary_band(u.mask)
    if band.any() and float(np.abs(u.values[band]).max()) > eps:
        reasons.append(f"{label}: boundary values exceed {eps:.3g}")
    mu = hessian_measure(Current.unit(u.grid), m, [u] * m, scheme="inductive", check=False)
    mass = mu.total_mass()
    if not math.isfinite(mass):
        reasons.append(f"{label}: infinite mass")
    return mass


def check_certificate(c: ClassCertificate, u: ScalarField, m: int, tol: float = 1e-9) -> CertificateReport:
    reasons: list = []
    masses: list = []
    g = u.grid
    for f in c.sequence:
        if f.grid != g:
            raise ValueError("certificate fields must share one grid")
    if c.tag == "E0m":
        mass = _e0m_checks(u, m, reasons, "u")
        masses.append(mass)
        if mass is not None and mass > c.mass_bound * (1 + 1e-9) + 1e-12:
            reasons.append("mass exceeds the stated bound")
        return CertificateReport(not reasons, reasons, masses)
    seq = c.sequence
    if not seq:
        return CertificateReport(False, ["empty sequence"], [])
    common = u.mask.copy()
    for f in seq:
        common &= f.mask
    for j in range(len(seq) - 1):
        if np.any(seq[j + 1].values[common] > seq[j].values[common] + tol):
            reasons.append(f"sequence not decreasing at step {j}")
            break
    for j, f in enumerate(seq):
        mass = _e0m_checks(f, m, reasons, f"member {j}")
        masses.append(mass)
        if mass is not None and mass > c.mass_bound * (1 + 1e-9) + 1e-12:
            reasons.append(f"member {j} mass exceeds the bound")
    # limit: the distance to u must shrink along the sequence
    if c.tag == "Fm":
        region = common & ~u.pole_mask
    else:
        region = np.zeros(g.shape, dtype=bool)
        for x in c.probes:
            region |= g.radius(x) <= 4 * g.h
        region &= common & ~u.pole_mask
    if region.any():
        gaps = [float(np.abs(f.values[region] - u.values[region]).max()) for f in seq]
        if len(gaps) >= 2 and not gaps[-1] <= gaps[0]:
            reasons.append("sequence does not approach u")
        if any(np.any(f.values[region] < u.values[region] - tol) for f in seq):
            reasons.append("a member lies below the limit")
    return CertificateReport(not reasons, reasons, masses)
