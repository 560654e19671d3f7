"""Moving frames on periodic grids: connection matrices, zero-curvature
residuals, frame integration and curvature extraction, topological charges,
conservation-law residuals, and the tangent-plane decomposition of a spin
evolution.

A frame field stores the ordered triad (e1, e2, e3) as vector fields with a
signature flag beta.  For beta = +1 the triad is orthonormal and
right-handed; beta = -1 frames are handled only as matrix solutions of the
linear systems (no Euclidean cross-product geometry).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .grids import (Grid2, deriv_x, deriv_y, time_deriv, integrate_2d,
                    spectral_upsample)


class DegenerateFrameError(ValueError):
    pass


@dataclass
class FrameField:
    e1: np.ndarray
    e2: np.ndarray
    e3: np.ndarray
    beta: int = 1

    def stack(self) -> np.ndarray:
        """Rows of the returned (..., 3, 3) array are e1, e2, e3."""
        return np.stack([self.e1, self.e2, self.e3], axis=-2)

    @classmethod
    def from_stack(cls, E: np.ndarray, beta: int = 1) -> "FrameField":
        return cls(E[..., 0, :], E[..., 1, :], E[..., 2, :], beta)

    def gram_defect(self) -> float:
        """Max deviation of the Gram matrix from the identity (beta=+1)."""
        E = self.stack()
        G = E @ np.swapaxes(E, -1, -2)
        return float(np.abs(G - np.eye(3)).max())

    def validate(self, tol: float = 1e-8):
        if self.beta == 1:
            if self.gram_defect() > tol:
                raise DegenerateFrameError("frame is not orthonormal within tolerance")
            handed = np.abs(np.cross(self.e1, self.e2) - self.e3).max()
            if handed > tol:
                raise DegenerateFrameError("frame is not right-handed within tolerance")
        return self


@dataclass
class CurvatureSet:
    """Scalar connection coefficients of a frame field.

    x-direction: k, sigma, tau; y-direction: m1, m2, m3; t-direction:
    w1, w2, w3.  Fields may be time-stacked (leading t-axis) for the
    conservation-law residuals.  sigma identically zero recovers the
    unmodified two-direction frame system.
    """

    k: np.ndarray | None = None
    sigma: np.ndarray | None = None
    tau: np.ndarray | None = None
    m1: np.ndarray | None = None
    m2: np.ndarray | None = None
    m3: np.ndarray | None = None
    w1: np.ndarray | None = None
    w2: np.ndarray | None = None
    w3: np.ndarray | None = None
    beta: int = 1

    def _zeros_like_any(self):
        for f in (self.k, self.sigma, self.tau, self.m1, self.m2, self.m3,
                  self.w1, self.w2, self.w3):
            if f is not None:
                return np.zeros_like(np.asarray(f, dtype=float))
        raise ValueError("empty curvature set")

    def filled(self, name: str) -> np.ndarray:
        v = getattr(self, name)
        return self._zeros_like_any() if v is None else np.asarray(v, dtype=float)


@dataclass
class SpinField:
    s: np.ndarray

    def validate(self, tol: float = 1e-8):
        if np.abs(np.linalg.norm(self.s, axis=-1) - 1.0).max() > tol:
            raise ValueError("spin field is not unit norm within tolerance")
        return self


def _antisym(a, b, c, beta):
    """[[0, a, -b], [-beta a, 0, c], [beta b, -c, 0]] as a matrix field."""
    a = np.asarray(a, dtype=float)
    z = np.zeros_like(a)
    rows = [np.stack([z, a, -b], axis=-1),
            np.stack([-beta * a, z, c], axis=-1),
            np.stack([beta * b, -c, z], axis=-1)]
    return np.stack(rows, axis=-2)


def assemble_connection(cs: CurvatureSet, which: str) -> np.ndarray:
    """Connection matrix field C (x), D (y) or G (t) acting on frame rows."""
    if which == "x":
        return _antisym(cs.filled("k"), cs.filled("sigma"), cs.filled("tau"), cs.beta)
    if which == "y":
        return _antisym(cs.filled("m3"), cs.filled("m2"), cs.filled("m1"), cs.beta)
    if which == "t":
        for name in ("w1", "w2", "w3"):
            if getattr(cs, name) is None:
                raise ValueError("t-connection requested but w-fields are missing")
        return _antisym(cs.w3, cs.w2, cs.w1, cs.beta)
    raise ValueError(f"direction must be 'x', 'y' or 't', got {which!r}")


def zero_curvature_residual(P: np.ndarray, Q: np.ndarray,
                            dP_along_q: np.ndarray, dQ_along_p: np.ndarray) -> np.ndarray:
    """P_q - Q_p + [P, Q] pointwise for two connection-matrix fields."""
    P = np.asarray(P); Q = np.asarray(Q)
    if P.shape != Q.shape:
        raise ValueError(f"shape mismatch: {P.shape} vs {Q.shape}")
    return dP_along_q - dQ_along_p + P @ Q - Q @ P


def _gram_schmidt_rows(E):
    e1 = E[..., 0, :]
    e1 = e1 / np.linalg.norm(e1, axis=-1, keepdims=True)
    e2 = E[..., 1, :]
    e2 = e2 - np.sum(e2 * e1, axis=-1, keepdims=True) * e1
    e2 = e2 / np.linalg.norm(e2, axis=-1, keepdims=True)
    e3 = np.cross(e1, e2)
    return np.stack([e1, e2, e3], axis=-2)


def integrate_frame_x(init: np.ndarray, cs: CurvatureSet, grid: Grid2,
                      substeps: int = 2) -> FrameField:
    """Integrate the frame system E_x = C(x) E along one period.

    Classic 4th-order stepping on a spectrally upsampled coefficient grid
    (stage values of band-limited coefficients are exact); beta=+1 frames
    are re-orthonormalized after every step.
    """
    init = np.asarray(init, dtype=float)
    if not np.all(np.isfinite(init)):
        raise ValueError("non-finite initial frame")
    k = cs.filled("k"); sig = cs.filled("sigma"); tau = cs.filled("tau")
    if k.ndim != 1:
        raise ValueError("integrate_frame_x expects 1D coefficient fields")
    fine = np.stack([spectral_upsample(f, 2 * substeps) for f in (k, sig, tau)])
    Cfine = _antisym(fine[0], fine[1], fine[2], cs.beta)  # (2*substeps*nx, 3, 3)
    h = grid.dx / substeps
    E = init.copy()
    out = np.empty((grid.nx, 3, 3))
    n_fine = Cfine.shape[0]
    for i in range(grid.nx):
        out[i] = E
        for s in range(substeps):
            j = 2 * (i * substeps + s)
            c0 = Cfine[j]
            cm = Cfine[(j + 1) % n_fine]
            c1 = Cfine[(j + 2) % n_fine]
            k1 = c0 @ E
            k2 = cm @ (E + 0.5 * h * k1)
            k3 = cm @ (E + 0.5 * h * k2)
            k4 = c1 @ (E + h * k3)
            E = E + h / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)
            if cs.beta == 1:
                E = _gram_schmidt_rows(E)
    return FrameField.from_stack(out, cs.beta)


def curvatures_from_frame(frame: FrameField, grid: Grid2,
                          method: str = "spectral") -> CurvatureSet:
    """Read the x- (and, in 2D, y-) connection coefficients off a frame.

    k = e2.e1x, tau = e3.e2x, sigma = -e3.e1x; m3 = e2.e1y, m2 = -e3.e1y,
    m1 = e3.e2y.  Euclidean projections, so beta must be +1.

    method "fd4_open" (1D frames only) differentiates with one-sided
    closures instead of wrapping; use it for frames whose holonomy does not
    close over the period (a frame integrated from generic curvatures is
    smooth on [0, L] but not periodic).
    """
    if frame.beta != 1:
        raise ValueError("curvature projection requires beta=+1 (Euclidean inner product)")
    dot = lambda a, b: np.einsum("...i,...i->...", a, b)
    open_x = method == "fd4_open"
    if open_x and frame.e1.ndim != 2:
        raise ValueError("fd4_open extraction is for 1D frames")
    xmethod = "fd4" if open_x else method

    def dx(f):
        return np.stack([deriv_x(f[..., i], grid, method=xmethod,
                                 periodic=not open_x) for i in range(3)], axis=-1)

    e1x = dx(frame.e1); e2x = dx(frame.e2)
    cs = CurvatureSet(k=dot(frame.e2, e1x), sigma=-dot(frame.e3, e1x),
                      tau=dot(frame.e3, e2x), beta=frame.beta)
    if frame.e1.ndim == 3 and not grid.is_1d:
        def dy(f):
            return np.stack([deriv_y(f[..., i], grid, method=method) for i in range(3)], axis=-1)
        e1y = dy(frame.e1); e2y = dy(frame.e2)
        cs.m3 = dot(frame.e2, e1y)
        cs.m2 = -dot(frame.e3, e1y)
        cs.m1 = dot(frame.e3, e2y)
    return cs


def triple_product_density(v: np.ndarray, grid: Grid2,
                           method: str = "spectral") -> np.ndarray:
    """v . (v_x x v_y) pointwise on a 2D vector field."""
    vx = np.stack([deriv_x(v[..., i], grid, method=method) for i in range(3)], axis=-1)
    vy = np.stack([deriv_y(v[..., i], grid, method=method) for i in range(3)], axis=-1)
    return np.einsum("...i,...i->...", v, np.cross(vx, vy))


def topological_charge(v: np.ndarray, grid: Grid2, method: str = "spectral") -> float:
    """Degree of the field as a map to the sphere: (1/4pi) integral of the
    triple-product density (rectangle rule on the periodic grid)."""
    return integrate_2d(triple_product_density(v, grid, method=method), grid) / (4.0 * np.pi)


def conservation_residual(cs: CurvatureSet, grid: Grid2, dt: float,
                          as_printed: bool = False) -> np.ndarray:
    """Residuals of the three divergence identities implied by the frame
    compatibility equations, evaluated on a time-stacked CurvatureSet.

    Each identity has the form F_t - G_y + H_x with
      F1 = sigma m1 - tau m2, G1 = sigma w1 - tau w2, H1 = m2 w1 - m1 w2
      F2 = tau m3 - k m1,     G2 = tau w3 - k w1,     H2 = m1 w3 - m3 w1
      F3 = k m2 - sigma m3,   G3 = k w2 - sigma w3,   H3 = m3 w2 - m2 w3
    The displayed source prints the y- and x-terms with the опposite signs;
    that combination is not an identity (it fails on consistent frame data)
    and is only available via as_printed=True for comparison.

    Returns an array of shape (3, nt-4, nx, ny); the time axis is trimmed
    to where the centered time stencil is valid.
    """
    for name in ("w1", "w2", "w3"):
        if getattr(cs, name) is None:
            raise ValueError("conservation residual needs the w-fields")
    k, sg, tau = cs.filled("k"), cs.filled("sigma"), cs.filled("tau")
    m1, m2, m3 = cs.filled("m1"), cs.filled("m2"), cs.filled("m3")
    w1, w2, w3 = cs.filled("w1"), cs.filled("w2"), cs.filled("w3")
    nt = k.shape[0]
    mid = slice(2, nt - 2)

    def ddx(f):
        return np.stack([deriv_x(s, grid) for s in f])

    def ddy(f):
        return np.stack([deriv_y(s, grid) for s in f])

    sign = +1.0 if as_printed else -1.0
    out = []
    for F, G, H in (
        (sg * m1 - tau * m2, sg[mid] * w1[mid] - tau[mid] * w2[mid],
         m2[mid] * w1[mid] - m1[mid] * w2[mid]),
        (tau * m3 - k * m1, tau[mid] * w3[mid] - k[mid] * w1[mid],
         m1[mid] * w3[mid] - m3[mid] * w1[mid]),
        (k * m2 - sg * m3, k[mid] * w2[mid] - sg[mid] * w3[mid],
         m3[mid] * w2[mid] - m2[mid] * w3[mid]),
    ):
        out.append(time_deriv(F, dt) + sign * ddy(G) - sign * ddx(H))
    return np.stack(out)


@dataclass
class M0Coefficients:
    a12: np.ndarray
    a13: np.ndarray
    b12: np.ndarray
    b13: np.ndarray
    c12: np.ndarray
    c13: np.ndarray
    d2: np.ndarray
    d3: np.ndarray


def m0_decompose(S: np.ndarray, e2: np.ndarray, e3: np.ndarray,
                 St: np.ndarray, Sx: np.ndarray, Sy: np.ndarray,
                 delta_tol: float = 1e-10) -> M0Coefficients:
    """Expand S_t, S_x, S_y over a tangent basis (e2, e3) orthogonal to S.

    The basis need not be orthonormal; each expansion solves the 2x2 Gram
    system pointwise.  d2, d3 give the reduction S_t = d2 S_x + d3 S_y and
    are formed from the cross-determinant ratios; the determinant
    b12 c13 - b13 c12 must stay away from zero.
    """
    dot = lambda a, b: np.einsum("...i,...i->...", a, b)
    g22 = dot(e2, e2); g23 = dot(e2, e3); g33 = dot(e3, e3)
    det_g = g22 * g33 - g23 ** 2
    if np.abs(det_g).min() < delta_tol:
        raise DegenerateFrameError("tangent basis (e2, e3) is degenerate")

    def expand(v):
        r2 = dot(v, e2); r3 = dot(v, e3)
        c2 = (g33 * r2 - g23 * r3) / det_g
        c3 = (g22 * r3 - g23 * r2) / det_g
        return c2, c3

    a12, a13 = expand(St)
    b12, b13 = expand(Sx)
    c12, c13 = expand(Sy)
    delta = b12 * c13 - b13 * c12
    if np.abs(delta).min() < delta_tol:
        raise DegenerateFrameError("S_x, S_y do not span the tangent plane (delta ~ 0)")
    d2 = (a12 * c13 - a13 * c12) / delta
    d3 = (a12 * b13 - a13 * b12) / delta * (-1.0)
    return M0Coefficients(a12, a13, b12, b13, c12, c13, d2, d3)
