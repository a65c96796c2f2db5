"""Exact exterior algebra over the generators dx_1..dx_n, dxi_1..dxi_n.

A monomial is stored in canonical order ``dx_K ^ dxi_L`` with ``K`` and ``L``
strictly increasing tuples of 0-based axis indices.  Coefficients are plain
floats for pointwise forms; numpy arrays are also accepted so the same engine
can act node-wise on coefficient fields.
"""
from __future__ import annotations

import math
from functools import lru_cache
from itertools import combinations

import numpy as np

__all__ = [
    "FormValue",
    "dx",
    "dxi",
    "one",
    "beta",
    "beta_power",
    "top_form",
    "form_from_matrix",
    "wedge",
    "apply_J",
    "jacobi_eigenvalues",
    "elementary_symmetric",
    "sigma_pairing",
    "sigma_pairing_generic",
    "mixed_pairing",
    "mixed_pairing_generic",
    "is_m_positive_form",
    "weak_positivity_audit",
    "AuditReport",
]


def _is_zero(c) -> bool:
    if isinstance(c, np.ndarray):
        return False
    return c == 0


def _merge_sign(a: tuple, b: tuple) -> int:
    # parity of the shuffle that sorts a + b (both already sorted)
    inv = 0
    for y in b:
        for x in a:
            if x > y:
                inv += 1
    return -1 if inv & 1 else 1


class FormValue:
    """Sparse superform ``sum coeff * dx_K ^ dxi_L`` in dimension ``n``."""

    __slots__ = ("n", "terms")

    def __init__(self, n: int, terms: dict | None = None):
        if n < 1:
            raise ValueError("dimension must be positive")
        self.n = int(n)
        clean = {}
        for (K, L), c in (terms or {}).items():
            K = tuple(int(k) for k in K)
            L = tuple(int(k) for k in L)
            if any(b <= a for a, b in zip(K, K[1:])) or any(b <= a for a, b in zip(L, L[1:])):
                raise ValueError(f"multi-index not strictly increasing: {K}, {L}")
            if any(k < 0 or k >= n for k in K + L):
                raise ValueError(f"axis index out of range for n={n}")
            if _is_zero(c):
                continue
            clean[(K, L)] = c
        self.terms = clean

    # -- structure ---------------------------------------------------------
    def bidegrees(self) -> set:
        return {(len(K), len(L)) for K, L in self.terms}

    @property
    def bidegree(self) -> tuple:
        degs = self.bidegrees()
        if len(degs) > 1:
            raise ValueError(f"form is not homogeneous: {sorted(degs)}")
        return degs.pop() if degs else (0, 0)

    def component(self, p: int, q: int) -> "FormValue":
        return FormValue(self.n, {k: c for k, c in self.terms.items() if (len(k[0]), len(k[1])) == (p, q)})

    def coeff(self, K, L):
        return self.terms.get((tuple(K), tuple(L)), 0.0)

    def is_zero(self, tol: float = 0.0) -> bool:
        return all(np.all(np.abs(c) <= tol) for c in self.terms.values())

    def is_symmetric(self, tol: float = 0.0) -> bool:
        for (K, L), c in self.terms.items():
            if len(K) != len(L):
                return False
            if np.any(np.abs(c - self.coeff(L, K)) > tol):
                return False
        return True

    # -- arithmetic ----------------------------------------------------------
    def _check(self, other: "FormValue"):
        if not isinstance(other, FormValue):
            raise TypeError("expected FormValue")
        if other.n != self.n:
            raise ValueError(f"dimension mismatch: {self.n} vs {other.n}")

    def __add__(self, other: "FormValue") -> "FormValue":
        self._check(other)
        out = dict(self.terms)
        for k, c in other.terms.items():
            out[k] = out[k] + c if k in out else c
        return FormValue(self.n, out)

    def __neg__(self) -> "FormValue":
        return FormValue(self.n, {k: -c for k, c in self.terms.items()})

    def __sub__(self, other: "FormValue") -> "FormValue":
        return self + (-other)

    def scale(self, s) -> "FormValue":
        return FormValue(self.n, {k: s * c for k, c in self.terms.items()})

    def __mul__(self, s):
        if isinstance(s, FormValue):
            raise TypeError("use wedge() or ^ for the exterior product")
        return self.scale(s)

    __rmul__ = __mul__

    def __xor__(self, other: "FormValue") -> "FormValue":
        return wedge(self, other)

    def __eq__(self, other) -> bool:
        if not isinstance(other, FormValue) or other.n != self.n:
            return NotImplemented
        return (self - other).is_zero()

    __hash__ = None

    def allclose(self, other: "FormValue", rtol: float = 1e-12, atol: float = 1e-12) -> bool:
        self._check(other)
        keys = set(self.terms) | set(other.terms)
        return all(np.allclose(self.coeff(*k), other.coeff(*k), rtol=rtol, atol=atol) for k in keys)

    def top_coefficient(self):
        """Coefficient relative to dx_1^dxi_1^...^dx_n^dxi_n."""
        full = tuple(range(self.n))
        return _top_sign(self.n) * self.coeff(full, full)

    def beta_coefficient(self):
        """Coefficient c with self = c * beta^n (top-degree part)."""
        return self.top_coefficient() / math.factorial(self.n)

    # -- text ------------------------------------------------------------------
    def to_text(self) -> str:
        lines = [f"sform n={self.n}"]
        for (K, L) in sorted(self.terms, key=lambda k: (len(k[0]) + len(k[1]), k)):
            c = self.terms[(K, L)]
            if isinstance(c, np.ndarray):
                raise ValueError("only pointwise forms have a text rendering")
            lines.append(f"{float(c)!r} * {_monomial_text(K, L)}")
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str) -> "FormValue":
        rows = [r.strip() for r in text.strip().splitlines() if r.strip()]
        if not rows or not rows[0].startswith("sform n="):
            raise ValueError("missing 'sform n=' header")
        n = int(rows[0].split("=", 1)[1])
        terms: dict = {}
        for r in rows[1:]:
            coef, mono = (s.strip() for s in r.split("*", 1))
            K: tuple = ()
            L: tuple = ()
            if mono != "1":
                for part in mono.split("^"):
                    name, idx = part.split("_", 1)
                    ids = tuple(int(t) - 1 for t in idx.split(","))
                    if name == "dx":
                        K = ids
                    elif name == "dxi":
                        L = ids
                    else:
                        raise ValueError(f"bad generator {part!r}")
            key = (K, L)
            terms[key] = terms.get(key, 0.0) + float(coef)
        return cls(n, terms)

    def __repr__(self) -> str:
        if any(isinstance(c, np.ndarray) for c in self.terms.values()):
            return f"FormValue(n={self.n}, field terms={len(self.terms)})"
        return self.to_text().strip().replace("\n", "; ")


def _monomial_text(K, L) -> str:
    parts = []
    if K:
        parts.append("dx_" + ",".join(str(k + 1) for k in K))
    if L:
        parts.append("dxi_" + ",".join(str(k + 1) for k in L))
    return "^".join(parts) if parts else "1"


# -- constructors ---------------------------------------------------------------

def one(n: int, c=1.0) -> FormValue:
    return FormValue(n, {((), ()): c})


def dx(i: int, n: int) -> FormValue:
    """dx_i, with ``i`` a 1-based axis index."""
    return FormValue(n, {((i - 1,), ()): 1.0})


def dxi(i: int, n: int) -> FormValue:
    """dxi_i, with ``i`` a 1-based axis index."""
    return FormValue(n, {((), (i - 1,)): 1.0})


def beta(n: int) -> FormValue:
    return FormValue(n, {((i,), (i,)): 1.0 for i in range(n)})


def form_from_matrix(A) -> FormValue:
    """The (1,1)-form sum A_ij dx_i ^ dxi_j (array entries allowed)."""
    A = np.asarray(A)
    n = A.shape[0]
    if A.shape[:2] != (n, n):
        raise ValueError("expected an n x n (x field) array")
    terms = {}
    for i in range(n):
        for j in range(n):
            c = A[i, j]
            if c.ndim == 0:
                c = float(c)
                if c == 0.0:
                    continue
            terms[((i,), (j,))] = c
    return FormValue(n, terms)


@lru_cache(maxsize=None)
def _beta_power_cached(n: int, k: int) -> FormValue:
    out = one(n)
    b = beta(n)
    for _ in range(k):
        out = wedge(out, b)
    return out


def beta_power(n: int, k: int) -> FormValue:
    if k < 0:
        raise ValueError("negative power")
    if k > n:
        return FormValue(n)
    return _beta_power_cached(n, k)


@lru_cache(maxsize=None)
def _top_sign(n: int) -> int:
    # dx_1^dxi_1^...^dx_n^dxi_n = s * dx_{1..n} ^ dxi_{1..n}
    out = one(n)
    for i in range(1, n + 1):
        out = wedge(out, wedge(dx(i, n), dxi(i, n)))
    full = tuple(range(n))
    return int(out.terms[(full, full)])


def top_form(n: int) -> FormValue:
    full = tuple(range(n))
    return FormValue(n, {(full, full): float(_top_sign(n))})


# -- products -----------------------------------------------------------------------

def wedge(a: FormValue, b: FormValue) -> FormValue:
    if not isinstance(a, FormValue) or not isinstance(b, FormValue):
        raise TypeError("wedge expects FormValue operands")
    if a.n != b.n:
        raise ValueError(f"dimension mismatch: {a.n} vs {b.n}")
    out: dict = {}
    for (K1, L1), c1 in a.terms.items():
        sK1, sL1 = set(K1), set(L1)
        for (K2, L2), c2 in b.terms.items():
            if sK1.intersection(K2) or sL1.intersection(L2):
                continue
            sign = -1 if (len(L1) * len(K2)) & 1 else 1
            sign *= _merge_sign(K1, K2) * _merge_sign(L1, L2)
            key = (tuple(sorted(K1 + K2)), tuple(sorted(L1 + L2)))
            val = c1 * c2 if sign > 0 else -(c1 * c2)
            out[key] = out[key] + val if key in out else val
    return FormValue(a.n, out)


def apply_J(a: FormValue) -> FormValue:
    """J(sum a_KL dx_K^dxi_L) = (-1)^q sum a_KL dxi_K^dx_L, rewritten canonically."""
    out = {}
    for (K, L), c in a.terms.items():
        p, q = len(K), len(L)
        sign = -1 if (q + p * q) & 1 else 1
        out[(L, K)] = c if sign > 0 else -c
    return FormValue(a.n, out)


# -- matrices and sigma pairings -------------------------------------------------------

def _as_sym(A, tol: float = 0.0) -> np.ndarray:
    A = np.array(A, dtype=float)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise ValueError("expected a square matrix")
    if not np.all(np.isfinite(A)):
        raise ValueError("matrix has non-finite entries")
    if np.max(np.abs(A - A.T), initial=0.0) > tol:
        raise ValueError("matrix is not symmetric")
    return A


def jacobi_eigenvalues(A, tol: float = 1e-13, max_sweeps: int = 100) -> np.ndarray:
    """Eigenvalues of a symmetric matrix by cyclic Jacobi rotations (ascending)."""
    a = _as_sym(A).copy()
    n = a.shape[0]
    scale = max(np.abs(a).max(initial=0.0), 1e-300)
    for _ in range(max_sweeps):
        off = math.sqrt(sum(a[i, j] ** 2 for i in range(n) for j in range(n) if i != j))
        if off <= tol * scale:
            break
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = a[p, q]
                if apq == 0.0:
                    continue
                theta = (a[q, q] - a[p, p]) / (2.0 * apq)
                if abs(theta) > 1e150:  # theta^2 would overflow; t ~ 1/(2 theta)
                    t = 0.5 / theta
                else:
                    t = math.copysign(1.0, theta) / (abs(theta) + math.sqrt(theta * theta + 1.0))
                c = 1.0 / math.sqrt(t * t + 1.0)
                s = t * c
                for k in range(n):
                    akp, akq = a[k, p], a[k, q]
                    a[k, p] = c * akp - s * akq
                    a[k, q] = s * akp + c * akq
                for k in range(n):
                    apk, aqk = a[p, k], a[q, k]
                    a[p, k] = c * apk - s * aqk
                    a[q, k] = s * apk + c * aqk
    return np.sort(np.diag(a))


def elementary_symmetric(lam, j: int) -> float:
    e = [1.0] + [0.0] * j
    for x in lam:
        for k in range(j, 0, -1):
            e[k] += e[k - 1] * x
    return e[j]


def sigma_pairing(A, j: int) -> float:
    """c with alpha_A^j ^ beta^(n-j) = c beta^n, via eigenvalues."""
    A = _as_sym(A)
    n = A.shape[0]
    if not 1 <= j <= n:
        raise ValueError(f"j must lie in 1..{n}")
    lam = jacobi_eigenvalues(A)
    return elementary_symmetric(lam, j) / math.comb(n, j)


def sigma_pairing_generic(A, j: int) -> float:
    """Same quantity computed by expanding the wedge product term by term."""
    A = _as_sym(A)
    n = A.shape[0]
    if not 1 <= j <= n:
        raise ValueError(f"j must lie in 1..{n}")
    alpha = form_from_matrix(A)
    prod = one(n)
    for _ in range(j):
        prod = wedge(prod, alpha)
    return float(wedge(prod, beta_power(n, n - j)).beta_coefficient())


def _check_list(As) -> list:
    As = [np.array(A, dtype=float) for A in As]
    if not As:
        raise ValueError("need at least one matrix")
    n = As[0].shape[0]
    for A in As:
        if A.shape != (n, n):
            raise ValueError("all matrices must share one dimension")
    if len(As) > n:
        raise ValueError("more factors than the dimension allows")
    return As


def mixed_pairing(As) -> float:
    """Coefficient of alpha_1^...^alpha_k^beta^(n-k) relative to beta^n.

    Computed by polarizing A -> sigma_k(A)/C(n,k) over subsets of the factors.
    """
    As = _check_list(As)
    k = len(As)
    n = As[0].shape[0]
    total = 0.0
    parts = []
    for size in range(1, k + 1):
        for S in combinations(range(k), size):
            M = sum(As[i] for i in S)
            parts.append((-1) ** (k - size) * _principal_minor_sum(M, k))
    total = math.fsum(parts)
    return total / (math.factorial(k) * math.comb(n, k))


def _principal_minor_sum(M: np.ndarray, k: int) -> float:
    n = M.shape[0]
    return math.fsum(float(np.linalg.det(M[np.ix_(S, S)])) for S in combinations(range(n), k))


def mixed_pairing_generic(As) -> float:
    As = _check_list(As)
    n = As[0].shape[0]
    prod = one(n)
    for A in As:
        prod = wedge(prod, form_from_matrix(A))
    return float(wedge(prod, beta_power(n, n - len(As))).beta_coefficient())


def default_tol(A) -> float:
    return 1e-10 * (1.0 + float(np.abs(np.asarray(A, dtype=float)).max(initial=0.0)))


def is_m_positive_form(A, m: int, tol: float | None = None) -> bool:
    A = _as_sym(A)
    n = A.shape[0]
    if not 1 <= m <= n:
        raise ValueError(f"m must lie in 1..{n}")
    if tol is None:
        tol = default_tol(A)
    lam = jacobi_eigenvalues(A)
    return all(elementary_symmetric(lam, j) / math.comb(n, j) >= -tol for j in range(1, m + 1))


class AuditReport:
    """Result of a sampling audit of weak positivity."""

    def __init__(self, min_pairing: float, argmin, trials: int):
        self.min_pairing = min_pairing
        self.argmin = argmin
        self.trials = trials

    @property
    def violated(self) -> bool:
        return self.min_pairing < 0.0

    def __repr__(self) -> str:
        return f"AuditReport(min_pairing={self.min_pairing:.6g}, trials={self.trials}, violated={self.violated})"


def strongly_positive_test_form(vectors, weights=None) -> FormValue:
    """Product of lambda_i * a_i ^ J(a_i) over (1,0)-forms a_i = sum v_k dx_k."""
    vectors = [np.asarray(v, dtype=float) for v in vectors]
    n = vectors[0].shape[0]
    weights = np.ones(len(vectors)) if weights is None else np.asarray(weights, dtype=float)
    out = one(n)
    for lam, v in zip(weights, vectors):
        a = FormValue(n, {((k,), ()): float(v[k]) for k in range(n) if v[k] != 0.0})
        out = wedge(out, wedge(a, apply_J(a)).scale(float(lam)))
    return out


def weak_positivity_audit(v: FormValue, trials: int, seed: int = 0) -> AuditReport:
    """Pair a symmetric (p,p)-form with random strongly positive test forms.

    A negative minimum certifies that ``v`` is not weakly positive; a
    nonnegative minimum is only sampling evidence.
    """
    if not v.is_symmetric():
        raise ValueError("audit needs a symmetric (p,p)-form")
    p, _ = v.bidegree
    n = v.n
    rng = np.random.default_rng(seed)
    best = math.inf
    arg = None
    for _ in range(int(trials)):
        vecs = rng.standard_normal((n - p, n))
        lam = rng.uniform(0.1, 1.0, size=n - p)
        val = float(wedge(v, strongly_positive_test_form(vecs, lam)).beta_coefficient())
        if val < best:
            best, arg = val, (vecs, lam)
    return AuditReport(best, arg, int(trials))
