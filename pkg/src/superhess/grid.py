"""Uniform box grids, sampled fields, finite differences, mollification and measures."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np
from scipy import ndimage

NODE_BUDGET = 8_000_000


@dataclass(frozen=True)
class Grid:
    n: int
    shape: tuple
    origin: tuple
    h: float

    def __post_init__(self):
        object.__setattr__(self, "shape", tuple(int(s) for s in self.shape))
        object.__setattr__(self, "origin", tuple(float(o) for o in self.origin))
        object.__setattr__(self, "h", float(self.h))
        if self.n not in (2, 3, 4):
            raise ValueError(f"grid dimension must be 2, 3 or 4, got {self.n}")
        if len(self.shape) != self.n or len(self.origin) != self.n:
            raise ValueError("shape and origin must have n entries")
        if min(self.shape) < 5:
            raise ValueError("need at least 5 nodes per axis")
        if not self.h > 0 or not math.isfinite(self.h):
            raise ValueError("spacing must be positive")
        if self.size > NODE_BUDGET:
            raise ValueError(f"{self.size} nodes exceeds the budget of {NODE_BUDGET}")

    @classmethod
    def centered(cls, n: int, nodes: int, half_width: float) -> "Grid":
        """Cube [-L, L]^n with ``nodes`` points per axis."""
        h = 2.0 * half_width / (nodes - 1)
        return cls(n, (nodes,) * n, (-half_width,) * n, h)

    @classmethod
    def around(cls, center: Sequence[float], h: float, half_nodes: int) -> "Grid":
        """Grid of 2*half_nodes+1 points per axis with ``center`` at the middle node."""
        n = len(center)
        return cls(n, (2 * half_nodes + 1,) * n, tuple(c - half_nodes * h for c in center), h)

    @property
    def size(self) -> int:
        return int(np.prod(self.shape))

    @property
    def cell_volume(self) -> float:
        return self.h ** self.n

    def axis(self, i: int) -> np.ndarray:
        return self.origin[i] + self.h * np.arange(self.shape[i])

    def axes(self) -> list:
        return [self.axis(i) for i in range(self.n)]

    def broadcast_axis(self, i: int) -> np.ndarray:
        shp = [1] * self.n
        shp[i] = self.shape[i]
        return self.axis(i).reshape(shp)

    def coords(self) -> list:
        return np.meshgrid(*self.axes(), indexing="ij")

    def radius(self, a: Sequence[float]) -> np.ndarray:
        r2 = np.zeros(self.shape)
        for i in range(self.n):
            r2 = r2 + (self.broadcast_axis(i) - a[i]) ** 2
        return np.sqrt(r2)

    def evaluate(self, fn: Callable) -> np.ndarray:
        """Sample ``fn(x_1, ..., x_n)`` (broadcasting callable) on the nodes."""
        return np.broadcast_to(fn(*[self.broadcast_axis(i) for i in range(self.n)]), self.shape).astype(float)

    def node_of(self, point: Sequence[float]) -> tuple:
        idx = tuple(int(round((p - o) / self.h)) for p, o in zip(point, self.origin))
        return idx

    def is_node(self, point: Sequence[float], tol: float = 1e-9) -> bool:
        idx = self.node_of(point)
        if not all(0 <= k < s for k, s in zip(idx, self.shape)):
            return False
        return all(abs(self.origin[i] + idx[i] * self.h - point[i]) <= tol * self.h for i in range(self.n))

    def point(self, idx: Sequence[int]) -> tuple:
        return tuple(self.origin[i] + idx[i] * self.h for i in range(self.n))

    def contains(self, point: Sequence[float]) -> bool:
        return all(self.origin[i] - 1e-12 <= point[i] <= self.origin[i] + (self.shape[i] - 1) * self.h + 1e-12
                   for i in range(self.n))

    def refine(self) -> "Grid":
        """Halve the spacing over the same box."""
        return Grid(self.n, tuple(2 * s - 1 for s in self.shape), self.origin, self.h / 2)

    def full_mask(self) -> np.ndarray:
        return np.ones(self.shape, dtype=bool)

    def interior_mask(self, width: int = 1) -> np.ndarray:
        m = np.zeros(self.shape, dtype=bool)
        m[(slice(width, -width),) * self.n] = True
        return m


@dataclass
class ScalarField:
    """Grid-sampled function; ``-inf`` is allowed only at flagged pole nodes.

    ``pole_fill`` holds, per pole, the cell average used by integral operators
    (mollification, integration) in place of the sentinel.
    """

    grid: Grid
    values: np.ndarray
    mask: np.ndarray | None = None
    poles: tuple = ()
    pole_fill: tuple = ()

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.shape != self.grid.shape:
            raise ValueError(f"values shape {self.values.shape} != grid shape {self.grid.shape}")
        self.mask = self.grid.full_mask() if self.mask is None else np.asarray(self.mask, dtype=bool)
        if self.mask.shape != self.grid.shape:
            raise ValueError("mask shape mismatch")
        self.poles = tuple(tuple(int(k) for k in p) for p in self.poles)
        self.pole_fill = tuple(float(v) for v in self.pole_fill)
        if self.pole_fill and len(self.pole_fill) != len(self.poles):
            raise ValueError("one fill value per pole")
        for p in self.poles:
            if self.values[p] != -np.inf:
                raise ValueError(f"pole {p} must carry the -inf sentinel")
        check = self.values.copy()
        for p in self.poles:
            check[p] = 0.0
        if not np.all(np.isfinite(check[self.mask])):
            raise ValueError("non-finite values at unflagged valid nodes")

    @property
    def pole_mask(self) -> np.ndarray:
        pm = np.zeros(self.grid.shape, dtype=bool)
        for p in self.poles:
            pm[p] = True
        return pm

    def filled(self, require_fill: bool = False) -> np.ndarray:
        """Values with poles replaced by their fill (NaN if unknown) and NaN off the mask."""
        out = np.where(self.mask, self.values, np.nan)
        for k, p in enumerate(self.poles):
            if self.pole_fill:
                out[p] = self.pole_fill[k]
            elif require_fill:
                raise ValueError("pole without a fill value cannot enter an integral operator")
            else:
                out[p] = np.nan
        return out

    def stencil_values(self) -> np.ndarray:
        """Values for differentiation: NaN off the mask and at poles."""
        out = np.where(self.mask, self.values, np.nan)
        out[self.pole_mask] = np.nan
        return out

    def with_values(self, values, mask=None) -> "ScalarField":
        return ScalarField(self.grid, values, self.mask if mask is None else mask)

    def __add__(self, other):
        if isinstance(other, ScalarField):
            if self.poles or other.poles:
                raise ValueError("arithmetic on pole fields is not supported")
            return ScalarField(self.grid, self.values + other.values, self.mask & other.mask)
        return ScalarField(self.grid, self.values + other, self.mask, self.poles,
                           tuple(v + other for v in self.pole_fill))

    def scale(self, s: float) -> "ScalarField":
        if s <= 0 and self.poles:
            raise ValueError("pole fields can only be scaled by positive factors")
        vals = np.where(self.pole_mask, -np.inf, self.values * s) if self.poles else self.values * s
        return ScalarField(self.grid, vals, self.mask, self.poles, tuple(v * s for v in self.pole_fill))


@dataclass
class MatrixField:
    grid: Grid
    values: np.ndarray  # shape grid.shape + (n, n)
    mask: np.ndarray

    def entry(self, i: int, j: int) -> np.ndarray:
        return self.values[..., i, j]


@dataclass
class Measure:
    """density * h^n on masked nodes plus point atoms."""

    grid: Grid
    density: np.ndarray
    mask: np.ndarray | None = None
    atoms: list = field(default_factory=list)
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.density = np.asarray(self.density, dtype=float)
        if self.density.shape != self.grid.shape:
            raise ValueError("density shape mismatch")
        self.mask = np.isfinite(self.density) if self.mask is None else np.asarray(self.mask, dtype=bool)
        if not np.all(np.isfinite(self.density[self.mask])):
            raise ValueError("non-finite density on the mask")
        self.atoms = [(tuple(float(x) for x in p), float(w)) for p, w in self.atoms]
        for p, _ in self.atoms:
            if not self.grid.contains(p):
                raise ValueError(f"atom {p} outside the box")

    def total_mass(self) -> float:
        return integrate(self, self.mask)


@dataclass(frozen=True)
class MollifierSpec:
    """Bump (1-|x|^2)^3 on the unit ball, rescaled to radius base_radius/level."""

    level: int = 1
    base_radius: float = 1.0

    def __post_init__(self):
        if self.level < 1:
            raise ValueError("level j must be >= 1")
        if not self.base_radius > 0:
            raise ValueError("base radius must be positive")

    @property
    def radius(self) -> float:
        return self.base_radius / self.level

    def refined(self) -> "MollifierSpec":
        return MollifierSpec(2 * self.level, self.base_radius)

    def kernel(self, h: float, n: int) -> np.ndarray:
        rn = int(math.floor(self.radius / h + 1e-12))
        if rn < 1:
            raise ValueError(f"mollifier radius {self.radius} is below one grid spacing {h}")
        ax = np.arange(-rn, rn + 1) * h / self.radius
        s = np.zeros((2 * rn + 1,) * n)
        for i in range(n):
            shp = [1] * n
            shp[i] = -1
            s = s + ax.reshape(shp) ** 2
        K = np.where(s < 1.0, (1.0 - s) ** 3, 0.0)
        return K / math.fsum(K.ravel().tolist())


# -- finite differences -----------------------------------------------------------

def _shifted(a: np.ndarray, offset: Sequence[int]) -> np.ndarray:
    """out[x] = a[x + offset], NaN where x + offset leaves the array."""
    out = np.full(a.shape, np.nan)
    src, dst = [], []
    for o, s in zip(offset, a.shape):
        if o >= 0:
            src.append(slice(o, s))
            dst.append(slice(0, s - o))
        else:
            src.append(slice(0, s + o))
            dst.append(slice(-o, s))
    out[tuple(dst)] = a[tuple(src)]
    return out


def second_difference(a: np.ndarray, i: int, j: int, h: float) -> np.ndarray:
    """Central second difference d_i d_j on an array with NaN marking invalid nodes."""
    n = a.ndim
    e = np.eye(n, dtype=int)
    if i == j:
        return (_shifted(a, e[i]) + _shifted(a, -e[i]) - 2.0 * a) / (h * h)
    return (_shifted(a, e[i] + e[j]) - _shifted(a, e[i] - e[j])
            - _shifted(a, e[j] - e[i]) + _shifted(a, -e[i] - e[j])) / (4.0 * h * h)


def first_difference(a: np.ndarray, i: int, h: float) -> np.ndarray:
    e = np.eye(a.ndim, dtype=int)
    return (_shifted(a, e[i]) - _shifted(a, -e[i])) / (2.0 * h)


def hessian_dd(u: ScalarField) -> MatrixField:
    """Discrete dd# of a function: central differences, 4-point cross off the diagonal."""
    n = u.grid.n
    a = u.stencil_values()
    H = np.empty(u.grid.shape + (n, n))
    for i in range(n):
        for j in range(i, n):
            d = second_difference(a, i, j, u.grid.h)
            H[..., i, j] = d
            H[..., j, i] = d
    mask = np.all(np.isfinite(H), axis=(-2, -1))
    if not mask.any():
        raise ValueError("mask too small for the second-difference stencil")
    return MatrixField(u.grid, H, mask)


def gradient(u: ScalarField) -> np.ndarray:
    a = u.stencil_values()
    return np.stack([first_difference(a, i, u.grid.h) for i in range(u.grid.n)], axis=-1)


def laplacian(values: np.ndarray, h: float) -> np.ndarray:
    return sum(second_difference(values, i, i, h) for i in range(values.ndim))


# -- mollification ---------------------------------------------------------------------

def correlate_masked(values: np.ndarray, valid: np.ndarray, K: np.ndarray):
    """Correlate with kernel K; output valid where the kernel footprint is all valid."""
    v0 = np.where(valid, values, 0.0)
    out = ndimage.correlate(v0, K, mode="constant", cval=0.0)
    support = (K > 0).astype(float)
    bad = ndimage.correlate((~valid).astype(float), support, mode="constant", cval=1.0) > 0.5
    out[bad] = np.nan
    return out, ~bad


def mollify(u: ScalarField, spec: MollifierSpec) -> ScalarField:
    K = spec.kernel(u.grid.h, u.grid.n)
    if any(k > s for k, s in zip(K.shape, u.grid.shape)):
        raise ValueError("mollifier kernel larger than the grid")
    vals = u.filled(require_fill=True)
    valid = np.isfinite(vals)
    out, mask = correlate_masked(vals, valid, K)
    if not mask.any():
        raise ValueError("mollification leaves no valid node")
    return ScalarField(u.grid, np.where(mask, out, 0.0), mask)


# -- integration -----------------------------------------------------------------------

def fsum_array(a: np.ndarray) -> float:
    return math.fsum(np.ravel(a).tolist())


def _region_mask(grid: Grid, region) -> np.ndarray:
    if region is None:
        return grid.full_mask()
    if callable(region):
        return np.asarray(grid.evaluate(lambda *x: region(*x)), dtype=bool)
    m = np.asarray(region, dtype=bool)
    if m.shape != grid.shape:
        raise ValueError("region mask shape mismatch")
    return m


def integrate(mu: Measure, region=None, strict: bool = True, atom_region: Callable | None = None) -> float:
    """Sum of density * h^n over region nodes plus atoms inside the region.

    With ``strict`` the region must lie inside the measure's valid mask.
    Atoms are counted when their nearest node belongs to the region (or when
    ``atom_region(point)`` is true, if supplied).
    """
    R = _region_mask(mu.grid, region)
    if strict and np.any(R & ~mu.mask):
        raise ValueError("region leaves the valid mask of the measure")
    part = fsum_array(mu.density[R & mu.mask]) * mu.grid.cell_volume
    atoms = []
    for p, w in mu.atoms:
        if atom_region is not None:
            inside = atom_region(p)
        else:
            idx = mu.grid.node_of(p)
            inside = all(0 <= k < s for k, s in zip(idx, mu.grid.shape)) and bool(R[idx])
        if inside:
            atoms.append(w)
    return part + math.fsum(atoms)


def pseudo_ball_mask(phi: ScalarField, r: float) -> np.ndarray:
    """Nodes {phi < r} on the mask of phi (poles count as -inf)."""
    return phi.mask & (phi.values < r)


def ball_mask(grid: Grid, a: Sequence[float], r: float) -> np.ndarray:
    return grid.radius(a) < r


def erode(mask: np.ndarray, width: int) -> np.ndarray:
    if width <= 0:
        return mask.copy()
    return ndimage.binary_erosion(mask, structure=np.ones((3,) * mask.ndim, dtype=bool),
                                  iterations=width, border_value=0)


# -- file formats ------------------------------------------------------------------------

def _fmt(x: float) -> str:
    if x == np.inf:
        return "inf"
    if x == -np.inf:
        return "-inf"
    if x != x:
        return "nan"
    return repr(float(x))


def _header(grid: Grid, kind: str | None = None) -> list:
    lines = ["sfield v1", f"n={grid.n}", "shape=" + ",".join(str(s) for s in grid.shape),
             "origin=" + ",".join(_fmt(o) for o in grid.origin), f"spacing={_fmt(grid.h)}"]
    if kind:
        lines.append(f"kind={kind}")
    return lines


def write_field(path, f: ScalarField, mask_path=None) -> None:
    """Values in lexicographic node order; masked-off nodes are written as nan."""
    vals = np.where(f.mask, f.values, np.nan)
    lines = _header(f.grid) + [_fmt(v) for v in vals.ravel(order="C")]
    Path(path).write_text("\n".join(lines) + "\n")
    if mask_path is not None:
        write_mask(mask_path, f.grid, f.mask)


def write_mask(path, grid: Grid, mask: np.ndarray) -> None:
    lines = _header(grid) + ["1" if b else "0" for b in np.asarray(mask, bool).ravel(order="C")]
    Path(path).write_text("\n".join(lines) + "\n")


def _parse(path):
    rows = Path(path).read_text().splitlines()
    if not rows or rows[0].strip() != "sfield v1":
        raise ValueError(f"{path}: missing 'sfield v1' header")
    head = {}
    k = 1
    while k < len(rows) and "=" in rows[k]:
        key, val = rows[k].split("=", 1)
        head[key.strip()] = val.strip()
        k += 1
    n = int(head["n"])
    shape = tuple(int(s) for s in head["shape"].split(","))
    origin = tuple(float(s) for s in head["origin"].split(","))
    grid = Grid(n, shape, origin, float(head["spacing"]))
    return grid, head, rows[k:]


def read_field(path, mask_path=None) -> ScalarField:
    grid, _, body = _parse(path)
    vals = np.array([float(s) for s in body[:grid.size]]).reshape(grid.shape)
    if len(body) != grid.size:
        raise ValueError(f"{path}: expected {grid.size} values, found {len(body)}")
    mask = ~np.isnan(vals)
    if mask_path is not None:
        mask &= read_mask(mask_path)
    poles = tuple(tuple(int(i) for i in p) for p in np.argwhere(vals == -np.inf))
    return ScalarField(grid, np.where(mask, vals, 0.0), mask, poles)


def read_mask(path) -> np.ndarray:
    grid, _, body = _parse(path)
    if len(body) != grid.size:
        raise ValueError(f"{path}: expected {grid.size} mask entries")
    return np.array([s.strip() == "1" for s in body]).reshape(grid.shape)


def write_measure(path, mu: Measure) -> None:
    dens = np.where(mu.mask, mu.density, np.nan)
    lines = _header(mu.grid, "measure") + [_fmt(v) for v in dens.ravel(order="C")]
    for p, w in mu.atoms:
        lines.append("atom " + ",".join(_fmt(x) for x in p) + " " + _fmt(w))
    Path(path).write_text("\n".join(lines) + "\n")


def read_measure(path) -> Measure:
    grid, head, body = _parse(path)
    if head.get("kind") != "measure":
        raise ValueError(f"{path}: not a measure file")
    dens = np.array([float(s) for s in body[:grid.size]]).reshape(grid.shape)
    atoms = []
    for line in body[grid.size:]:
        if not line.strip():
            continue
        tag, pt, w = line.split()
        if tag != "atom":
            raise ValueError(f"{path}: unexpected line {line!r}")
        atoms.append((tuple(float(x) for x in pt.split(",")), float(w)))
    mask = np.isfinite(dens)
    return Measure(grid, np.where(mask, dens, 0.0), mask, atoms)
