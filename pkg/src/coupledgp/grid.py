"""Uniform 2D grid on [-L, L]^2 with two derivative backends.

Nodes are cell-centered, x_i = -L + (i + 1/2) h with h = 2L/n, so the node
set is exactly symmetric under x -> -x.  The spectral backend treats the
box as periodic and differentiates through the FFT; the finite-difference
backend uses the 5-point Laplacian with zero ghost values just outside the
box.  In both backends the discrete summation-by-parts identity
int |grad u|^2 = -int u lap u holds to round-off, and all functionals are
defined with the rectangle-rule quadrature h^2 * sum.
"""

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import fft as sfft

SPECTRAL = "spectral"
FD = "fd"


class ModeMismatch(Exception):
    """Fields from different grids (or an unknown backend) were combined."""


@dataclass(eq=False)
class Grid2D:
    n: int
    L: float
    mode: str = SPECTRAL

    X: np.ndarray = field(init=False, repr=False)
    Y: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        if self.n < 32 or (self.n & (self.n - 1)) != 0:
            raise ValueError("n must be a power of two, at least 32")
        if self.L <= 0:
            raise ValueError("L must be positive")
        if self.mode not in (SPECTRAL, FD):
            raise ModeMismatch(f"unknown derivative backend {self.mode!r}")
        x = -self.L + (np.arange(self.n) + 0.5) * self.h
        self.X, self.Y = np.meshgrid(x, x, indexing="ij")
        self._k2 = None
        self._dst_lam = None

    @property
    def h(self):
        return 2.0 * self.L / self.n

    @property
    def x(self):
        return self.X[:, 0]

    def key(self):
        return (self.n, self.L, self.mode)

    # -- spectral helpers (rfft2 layout: full kx axis, half ky axis) --

    def k2_rfft(self):
        if self._k2 is None:
            k = 2.0 * np.pi * np.fft.fftfreq(self.n, d=self.h)
            kx = k[:, None]
            ky = k[: self.n // 2 + 1][None, :]
            self._k2 = kx**2 + ky**2
        return self._k2

    def _rfft_weights(self):
        # Hermitian half-spectrum: interior ky columns appear twice
        w = np.full(self.n // 2 + 1, 2.0)
        w[0] = 1.0
        w[-1] = 1.0
        return w

    def dst_eigenvalues(self):
        """Per-axis eigenvalues of the 5-point Dirichlet Laplacian under DST-I."""
        if self._dst_lam is None:
            j = np.arange(1, self.n + 1)
            self._dst_lam = (2.0 - 2.0 * np.cos(np.pi * j / (self.n + 1))) / self.h**2
        return self._dst_lam

    def check(self, *fields):
        for f in fields:
            if f.shape != (self.n, self.n):
                raise ModeMismatch(
                    f"field of shape {f.shape} does not live on this {self.n}x{self.n} grid")


def integrate(grid, f):
    """Rectangle-rule integral h^2 * sum; defines the discrete functionals."""
    grid.check(f)
    return float(f.sum()) * grid.h**2


def laplacian(grid, u):
    grid.check(u)
    if grid.mode == SPECTRAL:
        return sfft.irfft2(-grid.k2_rfft() * sfft.rfft2(u), s=(grid.n, grid.n))
    p = np.pad(u, 1)
    return (p[2:, 1:-1] + p[:-2, 1:-1] + p[1:-1, 2:] + p[1:-1, :-2] - 4.0 * u) / grid.h**2


def kinetic(grid, u):
    """int |grad u|^2, consistent with the backend's Laplacian."""
    grid.check(u)
    if grid.mode == SPECTRAL:
        uh = sfft.rfft2(u)
        s = (grid.k2_rfft() * (uh.real**2 + uh.imag**2) * grid._rfft_weights()).sum()
        return float(s) * grid.h**2 / grid.n**2
    gx = np.diff(np.pad(u, ((1, 1), (0, 0))), axis=0)
    gy = np.diff(np.pad(u, ((0, 0), (1, 1))), axis=1)
    return float((gx**2).sum() + (gy**2).sum())


def implicit_solve(grid, rhs, coeff):
    """Solve (I + coeff * (-Lap)) u = rhs for the grid's backend."""
    grid.check(rhs)
    if grid.mode == SPECTRAL:
        return sfft.irfft2(sfft.rfft2(rhs) / (1.0 + coeff * grid.k2_rfft()),
                           s=(grid.n, grid.n))
    lam = grid.dst_eigenvalues()
    den = 1.0 + coeff * (lam[:, None] + lam[None, :])
    t = sfft.dstn(rhs, type=1, norm="ortho")
    return sfft.idstn(t / den, type=1, norm="ortho")


@dataclass
class FieldPair:
    """Nonnegative component pair with joint unit mass on a common grid."""

    grid: Grid2D
    u1: np.ndarray
    u2: np.ndarray

    def mass(self):
        return integrate(self.grid, self.u1**2 + self.u2**2)

    def copy(self):
        return FieldPair(self.grid, self.u1.copy(), self.u2.copy())


def dump_field(grid, u, path):
    """Write a field: one ASCII header line 'n L mode', then row-major f64 LE."""
    grid.check(u)
    with open(path, "wb") as f:
        f.write(f"{grid.n} {grid.L:.17g} {grid.mode}\n".encode("ascii"))
        f.write(np.ascontiguousarray(u, dtype="<f8").tobytes())


def load_field(path):
    """Read a field dump; returns (grid, array)."""
    with open(path, "rb") as f:
        header = f.readline().decode("ascii").split()
        n, L, mode = int(header[0]), float(header[1]), header[2]
        data = np.frombuffer(f.read(), dtype="<f8", count=n * n)
    return Grid2D(n, L, mode), data.reshape(n, n).copy()


def mass_outside(grid, u1, u2, radius):
    """Joint mass outside the disc |x| > radius."""
    mask = grid.X**2 + grid.Y**2 > radius**2
    return float(((u1**2 + u2**2) * mask).sum()) * grid.h**2


def resample(src_grid, u, dst_grid):
    """Move a field between boxes by monotone local interpolation.

    Used when the continuation shrinks the box; values requested outside
    the source box are zero.
    """
    from scipy.interpolate import RegularGridInterpolator

    ip = RegularGridInterpolator((src_grid.x, src_grid.x), u, method="cubic",
                                 bounds_error=False, fill_value=0.0)
    pts = np.stack([dst_grid.X.ravel(), dst_grid.Y.ravel()], axis=1)
    return ip(pts).reshape(dst_grid.n, dst_grid.n)
