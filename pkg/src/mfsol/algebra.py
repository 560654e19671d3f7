"""Small dense matrix algebra, bilinear derivative operators, and a finite
Grassmann algebra.

Matrices are plain complex ndarrays with trailing axes ``(..., n, n)``;
Grassmann elements carry their coefficients in a dict keyed by generator
bitmask, and the coefficients may themselves be numpy arrays (which is how
Grassmann-valued grid fields are represented).
"""

from __future__ import annotations

from dataclasses import dataclass
from math import comb

import numpy as np

from .grids import Grid2, deriv_x, deriv_y, time_deriv

SIGMA1 = np.array([[0.0, 1.0], [1.0, 0.0]], dtype=complex)
SIGMA2 = np.array([[0.0, -1.0j], [1.0j, 0.0]], dtype=complex)
SIGMA3 = np.array([[1.0, 0.0], [0.0, -1.0]], dtype=complex)
PAULI = (SIGMA1, SIGMA2, SIGMA3)


def _check_square(a: np.ndarray, b: np.ndarray):
    a = np.asarray(a, dtype=complex)
    b = np.asarray(b, dtype=complex)
    if a.shape[-1] != a.shape[-2] or b.shape[-1] != b.shape[-2]:
        raise ValueError("matrices must be square")
    if a.shape[-1] != b.shape[-1]:
        raise ValueError(f"dimension mismatch: {a.shape[-2:]} vs {b.shape[-2:]}")
    return a, b


def commutator(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """[a, b] = ab - ba for square matrices (or matrix fields)."""
    a, b = _check_square(a, b)
    return a @ b - b @ a


def anticommutator(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """{a, b} = ab + ba for square matrices (or matrix fields)."""
    a, b = _check_square(a, b)
    return a @ b + b @ a


@dataclass(frozen=True)
class DOrders:
    """Derivative orders of a bilinear derivative operator."""

    m_x: int = 0
    m_y: int = 0
    m_t: int = 0

    def __post_init__(self):
        if min(self.m_x, self.m_y, self.m_t) < 0:
            raise ValueError("derivative orders must be non-negative")
        if self.m_x + self.m_y + self.m_t == 0:
            raise ValueError("at least one derivative order must be positive")


def hirota_D(orders: DOrders, a: np.ndarray, b: np.ndarray, grid: Grid2,
             dt: float | None = None) -> np.ndarray:
    """Bilinear derivative D_x^mx D_y^my D_t^mt (a o b).

    Expanded binomially into products of ordinary derivatives,
    D^m(a o b) = sum_j (-1)^(m-j) C(m,j) (d^j a)(d^(m-j) b), applied per
    direction.  Spatial derivatives are spectral.  Time orders require
    time-stacked inputs of shape (nt, ...) plus ``dt``; the result is then
    trimmed to the interior slices [2:nt-2] where the 4th-order centered
    stencils are valid.
    """
    a = np.asarray(a)
    b = np.asarray(b)
    if a.shape != b.shape:
        raise ValueError("a and b must be sampled identically")
    stacked = orders.m_t > 0
    if stacked:
        if dt is None:
            raise ValueError("time orders need dt")
        if a.ndim < (2 if grid.is_1d else 3):
            raise ValueError("time orders require a time-stacked trajectory")
        if orders.m_t > 2:
            raise ValueError("time orders above 2 are not supported")

    def dnx(f, n):
        out = f
        for _ in range(n):
            out = deriv_x(out, grid) if not stacked else np.stack(
                [deriv_x(s, grid) for s in out])
        return out

    def dny(f, n):
        out = f
        for _ in range(n):
            out = deriv_y(out, grid) if not stacked else np.stack(
                [deriv_y(s, grid) for s in out])
        return out

    # tabulate mixed spatial derivatives first, then apply time stencils
    amat = {}
    bmat = {}
    for jx in range(orders.m_x + 1):
        ax = dnx(a, jx)
        bx = dnx(b, jx)
        for jy in range(orders.m_y + 1):
            amat[(jx, jy)] = dny(ax, jy)
            bmat[(jx, jy)] = dny(bx, jy)

    def dt_orders(f):
        if not stacked:
            return {0: f}
        table = {0: f[2:-2]}
        if orders.m_t >= 1:
            table[1] = time_deriv(f, dt, order=1)
        if orders.m_t >= 2:
            table[2] = time_deriv(f, dt, order=2)
        return table

    result = None
    for jx in range(orders.m_x + 1):
        cx = (-1) ** (orders.m_x - jx) * comb(orders.m_x, jx)
        for jy in range(orders.m_y + 1):
            cy = (-1) ** (orders.m_y - jy) * comb(orders.m_y, jy)
            at_tab = dt_orders(amat[(jx, jy)])
            bt_tab = dt_orders(bmat[(orders.m_x - jx, orders.m_y - jy)])
            for jt in range(orders.m_t + 1):
                ct = (-1) ** (orders.m_t - jt) * comb(orders.m_t, jt)
                term = cx * cy * ct * at_tab[jt] * bt_tab[orders.m_t - jt]
                result = term if result is None else result + term
    return result


# ---------------------------------------------------------------------------
# finite Grassmann algebra
# ---------------------------------------------------------------------------

def _reorder_sign(mask_a: int, mask_b: int) -> int:
    """Sign for merging two disjoint ascending generator words a, b."""
    sign = 1
    swaps = 0
    # count inversions: for each generator in b, how many in a are larger
    b = mask_b
    while b:
        i = (b & -b).bit_length() - 1
        higher = mask_a >> (i + 1)
        swaps += bin(higher).count("1")
        b &= b - 1
    if swaps % 2:
        sign = -1
    return sign


class GrassmannElement:
    """Element of a finite Grassmann algebra with n anticommuting generators.

    Coefficients are complex scalars or numpy arrays (all of one shape),
    keyed by the bitmask of the generator monomial in canonical ascending
    order.  theta_i * theta_j = -theta_j * theta_i and theta_i**2 = 0 are
    encoded through the sign bookkeeping of `_reorder_sign`.
    """

    __slots__ = ("n", "coeffs")

    def __init__(self, n: int = 8, coeffs: dict | None = None):
        self.n = n
        self.coeffs = {}
        if coeffs:
            for mask, c in coeffs.items():
                self._add_term(mask, c)

    # -- construction helpers ------------------------------------------------
    @classmethod
    def scalar(cls, value, n: int = 8) -> "GrassmannElement":
        return cls(n, {0: value})

    @classmethod
    def generator(cls, i: int, n: int = 8, coeff=1.0) -> "GrassmannElement":
        if not 0 <= i < n:
            raise ValueError(f"generator index {i} out of range for n={n}")
        return cls(n, {1 << i: coeff})

    def _add_term(self, mask: int, c):
        if mask in self.coeffs:
            self.coeffs[mask] = self.coeffs[mask] + c
        else:
            self.coeffs[mask] = c

    # -- ring operations -----------------------------------------------------
    def _coerce(self, other) -> "GrassmannElement":
        if isinstance(other, GrassmannElement):
            if other.n != self.n:
                raise ValueError("mixed Grassmann algebra instances")
            return other
        return GrassmannElement.scalar(other, self.n)

    def __add__(self, other):
        other = self._coerce(other)
        out = GrassmannElement(self.n, dict(self.coeffs))
        for mask, c in other.coeffs.items():
            out._add_term(mask, c)
        return out

    __radd__ = __add__

    def __neg__(self):
        return GrassmannElement(self.n, {m: -c for m, c in self.coeffs.items()})

    def __sub__(self, other):
        return self + (-self._coerce(other))

    def __rsub__(self, other):
        return self._coerce(other) + (-self)

    def __mul__(self, other):
        if not isinstance(other, GrassmannElement):
            return GrassmannElement(self.n, {m: c * other for m, c in self.coeffs.items()})
        if other.n != self.n:
            raise ValueError("mixed Grassmann algebra instances")
        out = GrassmannElement(self.n)
        for ma, ca in self.coeffs.items():
            for mb, cb in other.coeffs.items():
                if ma & mb:
                    continue  # repeated generator vanishes
                out._add_term(ma | mb, _reorder_sign(ma, mb) * ca * cb)
        return out

    def __rmul__(self, other):
        # scalars commute with every monomial coefficient-wise
        return GrassmannElement(self.n, {m: other * c for m, c in self.coeffs.items()})

    # -- structure -----------------------------------------------------------
    def coefficient(self, mask: int):
        return self.coeffs.get(mask, 0.0)

    @property
    def body(self):
        return self.coefficient(0)

    def parity(self) -> int | None:
        """0 or 1 for homogeneous elements, None if mixed, 0 if zero."""
        parities = {bin(m).count("1") % 2 for m, c in self.coeffs.items()
                    if np.any(c != 0)}
        if not parities:
            return 0
        if len(parities) > 1:
            return None
        return parities.pop()

    def even_part(self) -> "GrassmannElement":
        return GrassmannElement(self.n, {m: c for m, c in self.coeffs.items()
                                         if bin(m).count("1") % 2 == 0})

    def odd_part(self) -> "GrassmannElement":
        return GrassmannElement(self.n, {m: c for m, c in self.coeffs.items()
                                         if bin(m).count("1") % 2 == 1})

    def map_coeffs(self, fn) -> "GrassmannElement":
        return GrassmannElement(self.n, {m: fn(c) for m, c in self.coeffs.items()})

    def max_abs(self) -> float:
        vals = [np.max(np.abs(c)) for c in self.coeffs.values()] or [0.0]
        return float(max(vals))

    def is_zero(self, tol: float = 0.0) -> bool:
        return self.max_abs() <= tol

    def __repr__(self):
        terms = []
        for mask in sorted(self.coeffs):
            gens = "".join(f"t{i}" for i in range(self.n) if mask >> i & 1) or "1"
            terms.append(f"{self.coeffs[mask]!r}*{gens}")
        return "G(" + " + ".join(terms) + ")" if terms else "G(0)"


def grassmann_mul(a: GrassmannElement, b: GrassmannElement) -> GrassmannElement:
    """Product in the finite Grassmann algebra (same instance size required)."""
    return a * b
