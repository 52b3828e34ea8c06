"""Periodic grids, real-to-complex transforms and spectral operators.

Normalization: ``forward`` is the unnormalized real FFT and ``inverse``
divides by the total point count (numpy's default ``rfftn``/``irfftn``
pair).  With this convention the mean square of a field is

    mean(f**2) = sum(w * |F|**2) / Ntot**2

where ``w`` are the half-spectrum weights returned by
:meth:`Grid.parseval_weights` (2 for modes whose conjugate partner is not
stored, 1 otherwise).

Scalar fields are arrays of shape ``grid.sizes``; vector fields carry a
leading component axis, ``(grid.dim, *grid.sizes)``.  Spectral arrays use
the ``rfftn`` layout ``grid.spectral_shape``.

Differentiation uses wavenumbers with the Nyquist entry set to zero, so
that derivatives of real fields stay real and ``divergence(gradient(F))``
equals ``laplacian(F)`` exactly.  The Nyquist mode is removed by the
dealias mask anyway.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import ConfigError


def _is_pow2(n: int) -> bool:
    return n > 0 and (n & (n - 1)) == 0


@dataclass(frozen=True, eq=False)
class Grid:
    """Uniform periodic grid on a box of per-axis lengths ``extents``."""

    dim: int
    sizes: tuple[int, ...]
    extents: tuple[float, ...]
    wavenumbers: tuple[np.ndarray, ...] = field(repr=False)
    modes: tuple[np.ndarray, ...] = field(repr=False)
    k: np.ndarray = field(repr=False)
    k2: np.ndarray = field(repr=False)
    dealias_mask: np.ndarray = field(repr=False)

    @property
    def shape(self) -> tuple[int, ...]:
        return self.sizes

    @property
    def spectral_shape(self) -> tuple[int, ...]:
        return self.sizes[:-1] + (self.sizes[-1] // 2 + 1,)

    @property
    def npoints(self) -> int:
        return int(np.prod(self.sizes))

    @property
    def volume(self) -> float:
        return float(np.prod(self.extents))

    @property
    def spacing(self) -> tuple[float, ...]:
        return tuple(L / n for L, n in zip(self.extents, self.sizes))

    @property
    def axes(self) -> tuple[int, ...]:
        return tuple(range(-self.dim, 0))

    def coordinates(self) -> list[np.ndarray]:
        """Meshgrid of point coordinates, ``indexing='ij'``."""
        x1d = [np.arange(n) * (L / n) for n, L in zip(self.sizes, self.extents)]
        return np.meshgrid(*x1d, indexing="ij")

    def parseval_weights(self) -> np.ndarray:
        n = self.sizes[-1]
        w = np.full(n // 2 + 1, 2.0)
        w[0] = 1.0
        if n % 2 == 0:
            w[-1] = 1.0
        return np.broadcast_to(w, self.spectral_shape)

    # transforms -----------------------------------------------------------

    def forward(self, f: np.ndarray) -> np.ndarray:
        f = np.asarray(f, dtype=float)
        if f.shape[f.ndim - self.dim:] != self.sizes:
            raise ValueError(f"field shape {f.shape} does not match grid {self.sizes}")
        return np.fft.rfftn(f, axes=self.axes)

    def inverse(self, F: np.ndarray) -> np.ndarray:
        F = np.asarray(F)
        if F.shape[F.ndim - self.dim:] != self.spectral_shape:
            raise ValueError(
                f"spectral shape {F.shape} does not match grid {self.spectral_shape}"
            )
        return np.fft.irfftn(F, s=self.sizes, axes=self.axes)

    # spectral operators ---------------------------------------------------

    def gradient(self, F: np.ndarray) -> np.ndarray:
        return 1j * self.k * F[np.newaxis]

    def divergence(self, G: np.ndarray) -> np.ndarray:
        return np.sum(1j * self.k * G, axis=0)

    def laplacian(self, F: np.ndarray) -> np.ndarray:
        return -self.k2 * F

    def curl(self, G: np.ndarray) -> np.ndarray:
        """Curl of a spectral vector field.

        Returns an array with no components in 1D, a scalar (the out-of-plane
        component) in 2D and a vector in 3D.
        """
        ik = 1j * self.k
        if self.dim == 1:
            return np.zeros((0,) + self.spectral_shape, dtype=complex)
        if self.dim == 2:
            return ik[0] * G[1] - ik[1] * G[0]
        return np.stack(
            [
                ik[1] * G[2] - ik[2] * G[1],
                ik[2] * G[0] - ik[0] * G[2],
                ik[0] * G[1] - ik[1] * G[0],
            ]
        )

    def jacobian(self, G: np.ndarray) -> np.ndarray:
        """All first derivatives ``d_i G_j``, shape ``(dim, dim, ...)``."""
        return 1j * self.k[:, np.newaxis] * G[np.newaxis]

    def dealias(self, F: np.ndarray) -> np.ndarray:
        return np.where(self.dealias_mask, F, 0.0)

    # norms in spectral space ----------------------------------------------

    def integral_sq(self, F: np.ndarray) -> float:
        """Integral over the box of the squared field(s) represented by ``F``.

        Any leading component axes are summed over.
        """
        s = np.sum(self.parseval_weights() * np.abs(F) ** 2)
        return float(s) * self.volume / self.npoints**2

    def mean(self, F: np.ndarray) -> float:
        idx = (0,) * self.dim
        return float(F[(..., *idx)].real) / self.npoints

    def resample(self, F: np.ndarray, other: "Grid") -> np.ndarray:
        """Spectral interpolation of ``F`` (on this grid) onto ``other``.

        Both grids must share extents.  Modes are truncated or zero-padded;
        the Nyquist modes of either grid are dropped.
        """
        if other.dim != self.dim or not np.allclose(other.extents, self.extents):
            raise ValueError("resampling requires identical dimension and extents")
        lead = F.shape[: F.ndim - self.dim]
        out = np.zeros(lead + other.spectral_shape, dtype=complex)
        src_idx, dst_idx = [], []
        for ax in range(self.dim):
            n_src, n_dst = self.sizes[ax], other.sizes[ax]
            keep = min(n_src, n_dst) // 2  # modes |m| < keep survive
            if ax == self.dim - 1:
                src_idx.append(np.arange(keep))
                dst_idx.append(np.arange(keep))
            else:
                m = np.concatenate([np.arange(keep), np.arange(-keep + 1, 0)])
                src_idx.append(m % n_src)
                dst_idx.append(m % n_dst)
        scale = other.npoints / self.npoints
        out[(...,) + np.ix_(*dst_idx)] = F[(...,) + np.ix_(*src_idx)] * scale
        return out


def make_grid(
    dim: int,
    sizes: Sequence[int],
    extents: Sequence[float] | None = None,
) -> Grid:
    """Build a periodic grid; ``extents`` default to 2*pi per axis."""
    if dim not in (1, 2, 3):
        raise ConfigError(f"dim must be 1, 2 or 3, got {dim}")
    sizes = tuple(int(n) for n in sizes)
    if extents is None:
        extents = (2 * np.pi,) * dim
    extents = tuple(float(L) for L in extents)
    if len(sizes) != dim or len(extents) != dim:
        raise ConfigError("sizes and extents must have one entry per axis")
    for n in sizes:
        if not _is_pow2(n) or n < 8:
            raise ConfigError(f"grid sizes must be powers of two >= 8, got {n}")
    for L in extents:
        if not np.isfinite(L) or L <= 0:
            raise ConfigError(f"extents must be positive, got {L}")

    modes, wavenumbers = [], []
    for n, L in zip(sizes, extents):
        m = np.fft.fftfreq(n, d=1.0 / n).astype(int)
        modes.append(m)
        wavenumbers.append(2 * np.pi * m / L)

    spec_axes = []
    for ax, (n, L) in enumerate(zip(sizes, extents)):
        m = modes[ax][: n // 2 + 1].copy() if ax == dim - 1 else modes[ax].copy()
        if ax == dim - 1:
            m[-1] = abs(m[-1])
        spec_axes.append(m)
    mgrid = np.meshgrid(*spec_axes, indexing="ij")

    k = np.zeros((dim,) + tuple(len(a) for a in spec_axes))
    mask = np.ones(k.shape[1:], dtype=bool)
    for ax, (n, L) in enumerate(zip(sizes, extents)):
        m = mgrid[ax]
        kd = 2 * np.pi * m / L
        kd = np.where(np.abs(m) == n // 2, 0.0, kd)
        k[ax] = kd
        mask &= np.abs(m) <= n // 3
    k2 = np.sum(k**2, axis=0)
    for a in (k, k2, mask):
        a.setflags(write=False)
    return Grid(
        dim=dim,
        sizes=sizes,
        extents=extents,
        wavenumbers=tuple(wavenumbers),
        modes=tuple(modes),
        k=k,
        k2=k2,
        dealias_mask=mask,
    )
