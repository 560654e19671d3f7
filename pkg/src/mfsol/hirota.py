"""Bilinear (tau-function) machinery: spin, frame, potential and curvature
reconstruction from a complex function pair (f, g), and residual
evaluation of the bilinear planar-spin system and the derivative-coupled
model's constraints.

The reconstruction denominator |f|^2 + |g|^2 is written lam_h to avoid the
name collision with the surface-area determinant.

Conventions (oracle-calibrated against the reconstructed spin field and
its frame; deviations from the source displays are conjugation-level
repairs, noted per formula):

* the frame pair (e2, e3) is the null-vector frame of the stereographic
  coordinate g/f, which is orthonormal and right-handed by construction;
* the density pairs mirror each other between the x and y directions:
  (k, sigma) use D_x of (g o f -/+ conj), (m3, m2) use D_y of the same
  combinations; tau and m1 use D_x / D_y of (fbar o f + gbar o g).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .algebra import DOrders, hirota_D
from .frames import FrameField
from .grids import Grid2, deriv_x, deriv_y, time_deriv


class VanishingDenominatorError(ValueError):
    pass


@dataclass
class TauPair:
    """Complex function pair; fields may be time-stacked (leading axis)."""

    f: np.ndarray
    g: np.ndarray

    def __post_init__(self):
        self.f = np.asarray(self.f, dtype=complex)
        self.g = np.asarray(self.g, dtype=complex)
        if self.f.shape != self.g.shape:
            raise ValueError("f and g must share a shape")

    @property
    def lam_h(self) -> np.ndarray:
        return (np.conj(self.f) * self.f + np.conj(self.g) * self.g).real

    def check(self, floor: float = 1e-14):
        if self.lam_h.min() <= floor:
            raise VanishingDenominatorError("|f|^2 + |g|^2 not bounded below")
        return self

    def slice(self, i: int) -> "TauPair":
        return TauPair(self.f[i], self.g[i])


def spin_from_tau(tp: TauPair) -> np.ndarray:
    """S+ = 2 conj(f) g / lam_h, S3 = (|f|^2 - |g|^2)/lam_h; exactly unit
    norm by construction."""
    tp.check()
    lam = tp.lam_h
    sp = 2.0 * np.conj(tp.f) * tp.g / lam
    s3 = (np.conj(tp.f) * tp.f - np.conj(tp.g) * tp.g).real / lam
    return np.stack([sp.real, sp.imag, s3], axis=-1)


def frame_from_tau(tp: TauPair) -> FrameField:
    """Orthonormal right-handed frame with e1 the reconstructed spin.

    e2 + i e3 is the null tangent vector of the stereographic chart:
      (e2+ie3)^+ = 2 g^2 / lam_h, (e2+ie3)^- = -2 f^2 / lam_h,
      (e2+ie3)_3 = 2 f g / lam_h.
    The source display distributes conjugates differently and does not
    close to an orthonormal triple; this form does, with e3 = e1 x e2.
    """
    tp.check()
    lam = tp.lam_h
    f, g = tp.f, tp.g
    e2p = (g ** 2 - np.conj(f) ** 2) / lam
    e23 = (f * g + np.conj(f) * np.conj(g)).real / lam
    e3p = -1j * (g ** 2 + np.conj(f) ** 2) / lam
    e33 = (-1j * (f * g - np.conj(f) * np.conj(g))).real / lam
    e1 = spin_from_tau(tp)
    e2 = np.stack([e2p.real, e2p.imag, e23], axis=-1)
    e3 = np.stack([e3p.real, e3p.imag, e33], axis=-1)
    return FrameField(e1, e2, e3)


@dataclass
class TauDensities:
    tau: np.ndarray
    m1: np.ndarray
    k: np.ndarray
    sigma: np.ndarray
    m2: np.ndarray
    m3: np.ndarray


def densities_from_tau(tp: TauPair, grid: Grid2) -> TauDensities:
    """Six curvature densities via bilinear derivatives over lam_h.

    tau = -i D_x(fb o f + gb o g)/lam, m1 = -i D_y(same)/lam;
    k   = -[D_x(g o f) + conj]/lam,  sigma = -i [D_x(g o f) - conj]/lam;
    m3, m2 are the D_y mirrors of k, sigma.  All six are real by
    conjugation symmetry and equal the frame projections of the
    ``frame_from_tau`` triad exactly.  (Relative to the displayed
    combinations this swaps the members of each cross pair and drops a
    stray imaginary unit on the plus-combinations -- the display's pairs
    neither close to real values nor match any orthonormal frame's
    projections, while this assignment matches them identically.)
    """
    tp.check()
    lam = tp.lam_h
    f, g = tp.f, tp.g
    Dx = lambda a, b: hirota_D(DOrders(m_x=1), a, b, grid)
    Dy = lambda a, b: hirota_D(DOrders(m_y=1), a, b, grid)
    diag_x = Dx(np.conj(f), f) + Dx(np.conj(g), g)
    diag_y = Dy(np.conj(f), f) + Dy(np.conj(g), g)
    cross_x = Dx(g, f)
    cross_y = Dy(g, f)
    return TauDensities(
        tau=(-1j * diag_x / lam).real,
        m1=(-1j * diag_y / lam).real,
        k=(-(cross_x + np.conj(cross_x)) / lam).real,
        sigma=(-1j * (cross_x - np.conj(cross_x)) / lam).real,
        m2=(-1j * (cross_y - np.conj(cross_y)) / lam).real,
        m3=(-(cross_y + np.conj(cross_y)) / lam).real,
    )


@dataclass
class TauPotential:
    ux: np.ndarray
    uy: np.ndarray
    curl: np.ndarray


def potential_from_tau(tp: TauPair, alpha, grid: Grid2,
                       params=None) -> TauPotential:
    """Potential gradient of the reconstructed planar spin model.

    Ishimori form: u_x = -2i alpha^2 D_y(fb o f + gb o g)/lam,
                   u_y = -2i D_x(same)/lam.
    With params given (general two-parameter model), the gradient mixes
    both bilinear directions with the (a, alpha)-dependent coefficients.
    The curl u_xy - u_yx is returned as the integrability diagnostic; the
    bilinear system itself does not enforce it.
    """
    tp.check()
    lam = tp.lam_h
    f, g = tp.f, tp.g
    al2 = complex(alpha) ** 2
    Dxd = hirota_D(DOrders(m_x=1), np.conj(f), f, grid) \
        + hirota_D(DOrders(m_x=1), np.conj(g), g, grid)
    Dyd = hirota_D(DOrders(m_y=1), np.conj(f), f, grid) \
        + hirota_D(DOrders(m_y=1), np.conj(g), g, grid)
    if params is None:
        ux = (-2j * al2 * Dyd / lam)
        uy = (-2j * Dxd / lam)
    else:
        a, al = params.a, params.alpha
        ux = (2j * al * (2 * a + 1) * Dxd - 2j * al ** 2 * Dyd) / lam
        uy = (8j * a * (a + 1) * Dxd - 2j * al * (2 * a + 1) * Dyd) / lam
    ux = ux.real if abs(al2.imag) < 1e-14 else ux
    uy = uy.real if abs(al2.imag) < 1e-14 else uy
    curl = deriv_y(ux, grid) - deriv_x(uy, grid)
    return TauPotential(ux, uy, curl)


def bilinear_residual_ishimori(tp: TauPair, alpha, grid: Grid2, dt: float):
    """Residuals of the bilinear planar-spin system on a time-stacked pair:

      (i D_t - D_x^2 - alpha^2 D_y^2)(fb o f - gb o g) = 0
      (i D_t - D_x^2 - alpha^2 D_y^2)(fb o g) = 0

    Returns the two complex residual stacks on the interior time slices.
    """
    tp.check()
    if tp.f.ndim < 3:
        raise ValueError("need a time-stacked tau pair")
    if tp.f.shape[0] < 5:
        raise ValueError("need at least 5 time slices for the centered time stencil")
    al2 = complex(alpha) ** 2

    def P(a, b):
        dtp = hirota_D(DOrders(m_t=1), a, b, grid, dt=dt)
        dxx = np.stack([hirota_D(DOrders(m_x=2), a[i], b[i], grid)
                        for i in range(a.shape[0])])
        dyy = np.stack([hirota_D(DOrders(m_y=2), a[i], b[i], grid)
                        for i in range(a.shape[0])])
        return 1j * dtp - dxx[2:-2] - al2 * dyy[2:-2]

    fbar, gbar = np.conj(tp.f), np.conj(tp.g)
    res1 = P(fbar, tp.f) - P(gbar, tp.g)
    res2 = P(fbar, tp.g)
    return res1, res2


def mI_constraints(tp: TauPair, grid: Grid2):
    """Constraint residual D_x(fb o f + gb o g) of the derivative-coupled
    model's tau ansatz and the potential u = -i D_y(fb o f + gb o g)/lam."""
    tp.check()
    f, g = tp.f, tp.g
    res = hirota_D(DOrders(m_x=1), np.conj(f), f, grid) \
        + hirota_D(DOrders(m_x=1), np.conj(g), g, grid)
    u = (-1j * (hirota_D(DOrders(m_y=1), np.conj(f), f, grid)
                + hirota_D(DOrders(m_y=1), np.conj(g), g, grid)) / tp.lam_h).real
    return res, u


# ---------------------------------------------------------------------------
# oracle-fitted exact bilinear solutions
# ---------------------------------------------------------------------------

@dataclass
class TwoWaveParameters:
    """Exact single-crest solution parameters of the bilinear system,
    f = 1 + A exp(i chi), g = B exp(i phi) with linear real phases.

    The algebraic conditions (solved by the fitting oracle):
      chi, phi dispersion:  w = -(kx^2 + alpha^2 ky^2) for each phase,
      interaction:          chi_x phi_x + alpha^2 chi_y phi_y = 0,
      amplitude balance:    |A|^2 (chi-sum) = |B|^2 (phi-sum),
      gradient consistency: (chi_x^2 - alpha^2 chi_y^2)(1 + |B|^2 - |A|^2)
                            = 4 |B|^2 chi_x phi_x.
    The last condition makes the reconstructed potential a true gradient.
    """

    kvec: tuple
    nvec: tuple
    A: complex
    B: complex
    alpha: complex = 1.0

    @classmethod
    def fit(cls, kxy=(2, -1), nxy=(1, 2), alpha=1.0, phase_a=0.3, phase_b=-0.6):
        al2 = complex(alpha) ** 2
        k1, k2 = kxy
        n1, n2 = nxy
        if abs(k1 * n1 + al2 * k2 * n2) > 1e-13:
            raise ValueError("mode pair violates the interaction condition")
        ksum = k1 ** 2 + al2 * k2 ** 2
        nsum = n1 ** 2 + al2 * n2 ** 2
        beta1 = k1 ** 2 - al2 * k2 ** 2
        # amplitude balance |A|^2 ksum = |B|^2 nsum plus the gradient
        # condition beta1 (1 + |B|^2 - |A|^2) = 4 |B|^2 k1 n1
        ratio = (ksum / nsum).real
        Bsq = (beta1 / (4 * k1 * n1 + beta1 * (ratio - 1.0))).real
        if Bsq <= 0:
            raise ValueError("no positive-amplitude solution for these modes")
        Asq = ratio * Bsq
        A = np.sqrt(Asq) * np.exp(1j * phase_a)
        B = np.sqrt(Bsq) * np.exp(1j * phase_b)
        k3 = -(k1 ** 2 + al2 * k2 ** 2)
        n3 = -(n1 ** 2 + al2 * n2 ** 2)
        return cls((k1, k2, complex(k3).real), (n1, n2, complex(n3).real), A, B, alpha)

    def sample(self, grid: Grid2, times) -> TauPair:
        x, y = grid.xy()
        k1, k2, k3 = self.kvec
        n1, n2, n3 = self.nvec
        fs, gs = [], []
        for t in np.atleast_1d(times):
            chi = k1 * x + k2 * y + k3 * t
            phi = n1 * x + n2 * y + n3 * t
            fs.append(1.0 + self.A * np.exp(1j * chi))
            gs.append(self.B * np.exp(1j * phi))
        f = np.stack(fs)
        g = np.stack(gs)
        if np.ndim(times) == 0:
            f, g = f[0], g[0]
        return TauPair(f, g)
