"""Generated initial conditions used by the command line and the
verification pipelines.  The construction formulas are documented in
docs/presets.md together with the oracle that pins each one down."""

from __future__ import annotations

import numpy as np

from .grids import Grid2
from .hirota import TauPair, TwoWaveParameters, spin_from_tau


def circle(grid: Grid2) -> np.ndarray:
    """Stationary unit-speed ring in the equatorial plane (1D)."""
    x = grid.x
    return np.stack([np.cos(x), np.sin(x), np.zeros_like(x)], axis=-1)


def twisted_ring(grid: Grid2, delta: float = 0.3, second: float = 0.1) -> np.ndarray:
    """Planar ring with an odd phase modulation; the torsion mean stays
    zero under the chain flow (reflection symmetry), which keeps the mapped
    wave field single-valued on the ring."""
    theta = grid.x + delta * np.sin(grid.x) + second * np.sin(2 * grid.x)
    return np.stack([np.cos(theta), np.sin(theta), np.zeros_like(theta)], axis=-1)


def instanton(grid: Grid2, scale: float = 1.0) -> np.ndarray:
    """Degree +1 texture: inverse stereographic projection of
    w = (x + i y)/scale centered on the box."""
    x, y = grid.xy()
    w = (x - grid.lx / 2 + 1j * (y - grid.ly / 2)) / scale
    aw2 = np.abs(w) ** 2
    return np.stack([2 * w.real / (1 + aw2), 2 * w.imag / (1 + aw2),
                     (1 - aw2) / (1 + aw2)], axis=-1)


def frame_spiral(grid: Grid2, eps: float = 0.35) -> np.ndarray:
    """Smooth winding texture with |S_x| bounded away from zero everywhere;
    the workhorse for frame-harvest verifications."""
    x, y = grid.xy()
    X = 2 * np.pi * x / grid.lx
    Y = 2 * np.pi * y / grid.ly
    Phi = X + 0.4 * np.sin(Y) + 0.2 * np.sin(X + Y)
    The = np.pi / 2 + eps * np.cos(X) * np.sin(Y) + 0.15 * np.cos(Y)
    return np.stack([np.sin(The) * np.cos(Phi), np.sin(The) * np.sin(Phi),
                     np.cos(The)], axis=-1)


def plane_wave(grid: Grid2, amplitude: float = 0.7, px: int = 1,
               py: int = 0) -> np.ndarray:
    """Complex plane wave for the wave-type systems."""
    if grid.is_1d:
        return amplitude * np.exp(1j * px * (2 * np.pi / grid.lx) * grid.x)
    x, y = grid.xy()
    return amplitude * np.exp(1j * (px * (2 * np.pi / grid.lx) * x
                                    + py * (2 * np.pi / grid.ly) * y))


def one_soliton_tau(grid: Grid2, time: float = 0.0) -> TauPair:
    """Oracle-fitted exact bilinear pair (single crest interacting with the
    background); see TwoWaveParameters for the algebraic conditions."""
    return TwoWaveParameters.fit().sample(grid, time)


def one_soliton_spin(grid: Grid2, time: float = 0.0) -> np.ndarray:
    return spin_from_tau(one_soliton_tau(grid, time))


SPIN_PRESETS = {
    "circle": circle,
    "twisted_ring": twisted_ring,
    "instanton": instanton,
    "frame_spiral": frame_spiral,
    "one_soliton": one_soliton_spin,
}

WAVE_PRESETS = {
    "plane_wave": plane_wave,
}


def build_spin(name: str, grid: Grid2) -> np.ndarray:
    if name not in SPIN_PRESETS:
        raise KeyError(f"unknown spin preset {name!r}")
    return SPIN_PRESETS[name](grid)


def build_wave(name: str, grid: Grid2) -> np.ndarray:
    if name not in WAVE_PRESETS:
        raise KeyError(f"unknown wave preset {name!r}")
    return WAVE_PRESETS[name](grid)
