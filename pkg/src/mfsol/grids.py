"""Periodic rectangular grids and discrete calculus helpers.

Array layout conventions used across the package:

* scalar fields: shape ``(nx,)`` in 1D or ``(nx, ny)`` in 2D, axis 0 is x;
* vector fields: trailing axis of length 3, e.g. ``(nx, ny, 3)``;
* matrix fields: trailing axes ``(..., 3, 3)`` (or 2x2);
* time-stacked trajectories: leading axis is time, e.g. ``(nt, nx, ny)``.

Spatial derivatives are spectral by default (both directions periodic); a
4th-order centered finite-difference variant is available for data that is
not smoothly periodic, with one-sided closures for non-periodic patches.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

TWO_PI = 2.0 * np.pi


@dataclass
class Grid2:
    """Rectangular periodic grid descriptor (1D when ny == 1)."""

    nx: int
    ny: int = 1
    lx: float = TWO_PI
    ly: float = TWO_PI

    def __post_init__(self):
        if self.nx < 8:
            raise ValueError(f"nx must be >= 8, got {self.nx}")
        if self.ny != 1 and self.ny < 8:
            raise ValueError(f"ny must be 1 (for 1D) or >= 8, got {self.ny}")
        if self.lx <= 0 or self.ly <= 0:
            raise ValueError("domain lengths must be positive")

    @property
    def dx(self) -> float:
        return self.lx / self.nx

    @property
    def dy(self) -> float:
        return self.ly / self.ny

    @property
    def x(self) -> np.ndarray:
        return np.arange(self.nx) * self.dx

    @property
    def y(self) -> np.ndarray:
        return np.arange(self.ny) * self.dy

    def xy(self):
        """Meshgrid coordinates with shapes (nx, ny)."""
        return np.meshgrid(self.x, self.y, indexing="ij")

    @property
    def kx(self) -> np.ndarray:
        return TWO_PI * np.fft.fftfreq(self.nx, d=self.dx)

    @property
    def ky(self) -> np.ndarray:
        return TWO_PI * np.fft.fftfreq(self.ny, d=self.dy)

    @property
    def is_1d(self) -> bool:
        return self.ny == 1

    def cell_area(self) -> float:
        return self.dx * (self.dy if not self.is_1d else 1.0)


def _wavenumbers(n: int, length: float) -> np.ndarray:
    return TWO_PI * np.fft.fftfreq(n, d=length / n)


def _broadcast_k(k: np.ndarray, ndim: int, axis: int) -> np.ndarray:
    shape = [1] * ndim
    shape[axis] = len(k)
    return k.reshape(shape)


def spectral_deriv(f: np.ndarray, length: float, axis: int = 0, order: int = 1) -> np.ndarray:
    """Spectral derivative along a periodic axis."""
    n = f.shape[axis]
    k = _broadcast_k(_wavenumbers(n, length), f.ndim, axis)
    fh = np.fft.fft(f, axis=axis)
    if order % 2 == 1 and n % 2 == 0:
        # zero the unmatched Nyquist mode for odd derivative orders
        idx = [slice(None)] * f.ndim
        idx[axis] = n // 2
        fh[tuple(idx)] *= 0.0
    out = np.fft.ifft((1j * k) ** order * fh, axis=axis)
    if np.isrealobj(f):
        return out.real
    return out


def _fornberg_weights(xi: float, nodes: np.ndarray, order: int) -> np.ndarray:
    """Finite-difference weights at xi for the given derivative order."""
    m = len(nodes)
    V = np.vander(nodes - xi, m, increasing=True).T  # V[k, j] = (x_j - xi)^k
    rhs = np.zeros(m)
    from math import factorial
    rhs[order] = factorial(order)
    return np.linalg.solve(V, rhs)


@lru_cache(maxsize=64)
def fd4_matrix(n: int, h: float, order: int = 1, periodic: bool = True) -> np.ndarray:
    """Dense finite-difference matrix: 4th-order centered stencils on a
    periodic axis; biased 7-point stencils near open ends otherwise."""
    d = np.zeros((n, n))
    if order == 1:
        stencil = np.array([1.0, -8.0, 0.0, 8.0, -1.0]) / (12.0 * h)
    elif order == 2:
        stencil = np.array([-1.0, 16.0, -30.0, 16.0, -1.0]) / (12.0 * h * h)
    else:
        raise ValueError("fd4_matrix supports order 1 or 2")
    offs = np.arange(-2, 3)
    if periodic:
        for i in range(n):
            d[i, (i + offs) % n] = stencil
        return d
    width = min(7, n)
    for i in range(n):
        lo = min(max(0, i - width // 2), n - width)
        nodes = (np.arange(lo, lo + width) - i) * h
        d[i, lo:lo + width] = _fornberg_weights(0.0, nodes, order)
    return d


def fd4_deriv(f: np.ndarray, h: float, axis: int = 0, order: int = 1,
              periodic: bool = True) -> np.ndarray:
    """4th-order finite difference with sample spacing h along an axis."""
    n = f.shape[axis]
    d = fd4_matrix(n, h, order, periodic)
    out = np.tensordot(d, np.moveaxis(f, axis, 0), axes=(1, 0))
    return np.moveaxis(out, 0, axis)


def deriv_x(f: np.ndarray, grid: Grid2, order: int = 1, method: str = "spectral",
            periodic: bool = True) -> np.ndarray:
    if method == "spectral":
        return spectral_deriv(f, grid.lx, axis=0, order=order)
    if method == "fd4":
        return fd4_deriv(f, grid.dx, axis=0, order=order, periodic=periodic)
    raise ValueError(f"unknown derivative method {method!r}")


def deriv_y(f: np.ndarray, grid: Grid2, order: int = 1, method: str = "spectral",
            periodic: bool = True) -> np.ndarray:
    if grid.is_1d:
        raise ValueError("y-derivative requested on a 1D grid")
    if method == "spectral":
        return spectral_deriv(f, grid.ly, axis=1, order=order)
    if method == "fd4":
        return fd4_deriv(f, grid.dy, axis=1, order=order, periodic=periodic)
    raise ValueError(f"unknown derivative method {method!r}")


def time_deriv(stack: np.ndarray, dt: float, order: int = 1) -> np.ndarray:
    """4th-order centered time derivative of a trajectory.

    Valid only on interior slices; the returned stack is trimmed by two
    slices at each end (use ``interior_time_slice`` for bookkeeping).
    """
    nt = stack.shape[0]
    if nt < 5:
        raise ValueError("need at least 5 time slices for 4th-order time derivatives")
    s = stack
    if order == 1:
        return (s[:-4] - 8 * s[1:-3] + 8 * s[3:-1] - s[4:]) / (12.0 * dt)
    if order == 2:
        return (-s[:-4] + 16 * s[1:-3] - 30 * s[2:-2] + 16 * s[3:-1] - s[4:]) / (12.0 * dt * dt)
    raise ValueError("time_deriv supports order 1 or 2")


def interior_time_slice(nt: int) -> slice:
    return slice(2, nt - 2)


def antiderivative_x(f: np.ndarray, grid: Grid2) -> np.ndarray:
    """Mean-zero periodic antiderivative along x (spectral inverse derivative).

    The x-mean of the input is discarded; when it matters (a secular,
    linear-in-x contribution) obtain it separately via ``x_mean`` and carry
    the term ``x_mean(f) * x`` explicitly.
    """
    n = f.shape[0]
    k = _broadcast_k(_wavenumbers(n, grid.lx), f.ndim, 0)
    fh = np.fft.fft(f, axis=0)
    with np.errstate(divide="ignore", invalid="ignore"):
        gh = fh / (1j * k)
    idx = [slice(None)] * f.ndim
    idx[0] = 0
    gh[tuple(idx)] = 0.0
    out = np.fft.ifft(gh, axis=0)
    if np.isrealobj(f):
        return out.real
    return out


def x_mean(f: np.ndarray) -> np.ndarray:
    """Mean along x (the secular slope of the x-antiderivative)."""
    return np.asarray(f).mean(axis=0)


def spectral_upsample(f: np.ndarray, factor: int, axis: int = 0) -> np.ndarray:
    """Band-limited upsampling along a periodic axis by zero-padding the FFT."""
    if factor == 1:
        return np.array(f)
    n = f.shape[axis]
    m = n * factor
    fh = np.fft.fft(f, axis=axis)
    fh = np.moveaxis(fh, axis, 0)
    out = np.zeros((m,) + fh.shape[1:], dtype=complex)
    half = n // 2
    out[:half] = fh[:half]
    out[m - (n - half):] = fh[half:]
    if n % 2 == 0:
        # split the Nyquist mode symmetrically
        out[half] = 0.5 * fh[half]
        out[m - half] = 0.5 * fh[half]
    res = np.fft.ifft(out, axis=0) * factor
    res = np.moveaxis(res, 0, axis)
    if np.isrealobj(f):
        return res.real
    return res


def spectral_shift_x(f: np.ndarray, shift: float, grid: Grid2) -> np.ndarray:
    """Evaluate a band-limited field at x + shift via an FFT phase twist."""
    k = _broadcast_k(grid.kx, f.ndim, 0)
    out = np.fft.ifft(np.exp(1j * k * shift) * np.fft.fft(f, axis=0), axis=0)
    if np.isrealobj(f):
        return out.real
    return out


def integrate_2d(f: np.ndarray, grid: Grid2) -> float:
    """Rectangle-rule integral over the periodic grid (spectrally accurate)."""
    return float(np.sum(f) * grid.cell_area())


def solve_constant_coefficient(rhs: np.ndarray, symbol: np.ndarray, lam_reg: float = 1e-8):
    """Invert a constant-coefficient operator in Fourier space.

    ``symbol`` is the Fourier multiplier of the operator on the fftn basis.
    The zero mode of the result is set to zero (rhs mean is discarded);
    near-characteristic modes (|symbol| < lam_reg) are projected out rather
    than divided, keeping the solve deterministic and bounded.  Returns the
    solution and the number of regularized nonzero modes.
    """
    rhat = np.fft.fftn(rhs)
    flat0 = tuple([0] * rhs.ndim)
    small = np.abs(symbol) < lam_reg
    nreg = int(small.sum()) - (1 if small[flat0] else 0)
    denom = np.where(small, 1.0, symbol)
    uhat = np.where(small, 0.0, rhat / denom)
    uhat[flat0] = 0.0
    out = np.fft.ifftn(uhat)
    if np.isrealobj(rhs):
        out = out.real
    return out, nreg
