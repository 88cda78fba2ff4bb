"""Periodic grids, Fourier transforms, projections and norms on the unit torus.

The box is [-1/2, 1/2)^d sampled at ``n`` points per axis.  Spectral
coefficients are stored in FFT order on the full integer lattice
{-n/2, ..., n/2-1}^d and normalised so that the zero mode is the spatial
mean.  Every multiplier uses the angular wavenumber 2*pi*|k|, which is
the true symbol of -Laplacian on this box.
"""
from __future__ import annotations

import struct
from dataclasses import dataclass, field
from functools import cached_property, lru_cache
from pathlib import Path

import numpy as np
import scipy.fft as sfft

from .errors import DataIntegrityError, ParameterError, ResolutionError

ROUNDTRIP_TOL = 1e-12


@dataclass(frozen=True)
class TorusGrid:
    """Uniform grid with ``n`` samples per axis on the d-dimensional unit torus."""

    d: int
    n: int

    def __post_init__(self):
        if self.d not in (1, 2, 3):
            raise ParameterError(f"dimension must be 1, 2 or 3, got {self.d}")
        if self.n < 8 or self.n % 2:
            raise ParameterError(f"n must be even and >= 8, got {self.n}")

    @property
    def spacing(self) -> float:
        return 1.0 / self.n

    @property
    def shape(self) -> tuple[int, ...]:
        return (self.n,) * self.d

    @property
    def size(self) -> int:
        return self.n**self.d

    @cached_property
    def axis_coords(self) -> np.ndarray:
        return -0.5 + np.arange(self.n) / self.n

    @cached_property
    def coords(self) -> tuple[np.ndarray, ...]:
        """Broadcastable physical coordinates x_j = -1/2 + j/n, one per axis."""
        return tuple(_along(self.axis_coords, ax, self.d) for ax in range(self.d))

    @cached_property
    def wavenumbers(self) -> tuple[np.ndarray, ...]:
        """Broadcastable integer wavenumbers in FFT order, one per axis."""
        k = np.fft.fftfreq(self.n, 1.0 / self.n)
        return tuple(_along(k, ax, self.d) for ax in range(self.d))

    @cached_property
    def kmag(self) -> np.ndarray:
        """Euclidean |k| (integer units) on the full lattice."""
        k2 = sum(kj**2 for kj in self.wavenumbers)
        return np.sqrt(np.broadcast_to(k2, self.shape))

    @cached_property
    def kmax_abs(self) -> np.ndarray:
        """max_i |k_i| on the full lattice."""
        out = np.zeros(self.shape)
        for kj in self.wavenumbers:
            out = np.maximum(out, np.abs(kj))
        return out

    @cached_property
    def dealias_mask(self) -> np.ndarray:
        return self.kmax_abs < self.n / 3

    def symbol(self, power: float) -> np.ndarray:
        """(2*pi*|k|)**power with the zero mode set to 0."""
        out = np.zeros(self.shape)
        nz = self.kmag > 0
        out[nz] = (2 * np.pi * self.kmag[nz]) ** power
        return out

    def zero_index(self) -> tuple[int, ...]:
        return (0,) * self.d

    def origin_index(self) -> tuple[int, ...]:
        """Grid index of the physical point x = 0."""
        return (self.n // 2,) * self.d


def _along(v: np.ndarray, axis: int, d: int) -> np.ndarray:
    shape = [1] * d
    shape[axis] = -1
    return v.reshape(shape)


@dataclass
class PhysicalField:
    """Real samples of a scalar field on a :class:`TorusGrid`."""

    grid: TorusGrid
    values: np.ndarray
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.shape != self.grid.shape:
            raise DataIntegrityError(
                f"expected shape {self.grid.shape}, got {self.values.shape}"
            )
        if not np.all(np.isfinite(self.values)):
            raise DataIntegrityError("field contains non-finite values")

    def mean(self) -> float:
        return float(self.values.mean())


@dataclass
class SpectralField:
    """Fourier coefficients of a real field, FFT order, mean in the zero mode."""

    grid: TorusGrid
    coeffs: np.ndarray

    def __post_init__(self):
        self.coeffs = np.asarray(self.coeffs, dtype=complex)
        if self.coeffs.shape != self.grid.shape:
            raise DataIntegrityError(
                f"expected shape {self.grid.shape}, got {self.coeffs.shape}"
            )

    @property
    def mean(self) -> float:
        return float(self.coeffs[self.grid.zero_index()].real)

    @property
    def is_mean_zero(self) -> bool:
        scale = np.abs(self.coeffs).max()
        return bool(abs(self.coeffs[self.grid.zero_index()]) <= 1e-12 * scale)

    def __add__(self, other: SpectralField) -> SpectralField:
        return SpectralField(self.grid, self.coeffs + other.coeffs)

    def __sub__(self, other: SpectralField) -> SpectralField:
        return SpectralField(self.grid, self.coeffs - other.coeffs)

    def __mul__(self, a: float) -> SpectralField:
        return SpectralField(self.grid, a * self.coeffs)

    __rmul__ = __mul__

    def l2(self) -> float:
        """L2 norm of the represented field (Parseval)."""
        return float(np.sqrt(np.sum(np.abs(self.coeffs) ** 2)))


@lru_cache(maxsize=None)
def origin_phase(n: int, d: int) -> np.ndarray:
    """(-1)^(k_1 + ... + k_d): moves the DFT origin from the first sample to x = 0."""
    s = np.where(np.arange(n) % 2 == 0, 1.0, -1.0)
    out = np.ones((n,) * d)
    for ax in range(d):
        out = out * _along(s, ax, d)
    return out


def fft(values: np.ndarray) -> np.ndarray:
    return sfft.fftn(values) * (origin_phase(values.shape[0], values.ndim) / values.size)


def ifft(coeffs: np.ndarray) -> np.ndarray:
    return sfft.ifftn(coeffs * (origin_phase(coeffs.shape[0], coeffs.ndim) * coeffs.size))


def ifft_real(coeffs: np.ndarray) -> np.ndarray:
    return ifft(coeffs).real


def forward_transform(f: PhysicalField) -> SpectralField:
    if not np.all(np.isfinite(f.values)):
        raise DataIntegrityError("cannot transform a non-finite field")
    return SpectralField(f.grid, fft(f.values))


def hermitian_defect(s: SpectralField) -> float:
    """max |c(-k) - conj(c(k))| relative to max |c|."""
    c = s.coeffs
    flipped = c
    for ax in range(c.ndim):
        flipped = np.roll(np.flip(flipped, axis=ax), 1, axis=ax)
    scale = np.abs(c).max()
    if scale == 0:
        return 0.0
    return float(np.abs(flipped - np.conj(c)).max() / scale)


def inverse_transform(s: SpectralField, tol: float = ROUNDTRIP_TOL) -> PhysicalField:
    """Back to physical space; rejects coefficients that do not describe a real field."""
    if not np.all(np.isfinite(s.coeffs)):
        raise DataIntegrityError("cannot transform non-finite coefficients")
    z = ifft(s.coeffs)
    scale = max(np.abs(z.real).max(), np.finfo(float).tiny)
    if np.abs(z.imag).max() > tol * scale:
        raise DataIntegrityError("coefficients violate Hermitian symmetry")
    return PhysicalField(s.grid, z.real)


def project_low(s: SpectralField, N: float) -> SpectralField:
    """Orthogonal projection onto modes with Euclidean |k| <= N."""
    if N < 0:
        raise ParameterError("N must be nonnegative")
    return SpectralField(s.grid, np.where(s.grid.kmag <= N, s.coeffs, 0))


def dealias(s: SpectralField) -> SpectralField:
    """2/3-rule truncation: zero every mode with some |k_i| >= n/3."""
    return SpectralField(s.grid, np.where(s.grid.dealias_mask, s.coeffs, 0))


def lp_norm(f: PhysicalField, p: float) -> float:
    """Equal-weight quadrature of the L^p norm; ``p = inf`` gives max |f|."""
    if np.isinf(p):
        return float(np.abs(f.values).max())
    if not p >= 1:
        raise ParameterError(f"p must be >= 1, got {p}")
    return float(np.mean(np.abs(f.values) ** p) ** (1.0 / p))


def sobolev_seminorm(s: SpectralField, sexp: float) -> float:
    """Homogeneous H^s seminorm with multiplier (2*pi*|k|)**s."""
    if sexp < 0:
        raise ParameterError("Sobolev exponent must be nonnegative")
    w = s.grid.symbol(2 * sexp)
    return float(np.sqrt(np.sum(w * np.abs(s.coeffs) ** 2)))


def spectral_derivative(s: SpectralField, axis: int, order: int = 1) -> SpectralField:
    """Partial derivative of the given order along one axis."""
    k = s.grid.wavenumbers[axis]
    mult = (2j * np.pi * k) ** order
    if order % 2 == 1:
        # the Nyquist mode has no real odd derivative
        mult = np.where(np.abs(k) == s.grid.n // 2, 0, mult)
    return SpectralField(s.grid, s.coeffs * mult)


# --- binary snapshots -------------------------------------------------------

SNAPSHOT_MAGIC = b"KSMX"
SNAPSHOT_VERSION = 1
_HEADER = struct.Struct("<4sIBQd")


def write_snapshot(path: str | Path, f: PhysicalField, time: float = 0.0) -> None:
    """Write ``f`` as a KSMX snapshot (little-endian, row-major f64 samples)."""
    header = _HEADER.pack(SNAPSHOT_MAGIC, SNAPSHOT_VERSION, f.grid.d, f.grid.n, time)
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(np.ascontiguousarray(f.values, dtype="<f8").tobytes())


def read_snapshot(path: str | Path) -> tuple[PhysicalField, float]:
    data = Path(path).read_bytes()
    if len(data) < _HEADER.size:
        raise DataIntegrityError("snapshot truncated")
    magic, version, d, n, time = _HEADER.unpack_from(data)
    if magic != SNAPSHOT_MAGIC:
        raise DataIntegrityError(f"bad magic {magic!r}")
    if version != SNAPSHOT_VERSION:
        raise DataIntegrityError(f"unsupported snapshot version {version}")
    grid = TorusGrid(d, n)
    body = data[_HEADER.size:]
    if len(body) != 8 * grid.size:
        raise DataIntegrityError(
            f"expected {grid.size} samples, found {len(body) // 8}"
        )
    values = np.frombuffer(body, dtype="<f8").reshape(grid.shape).astype(float)
    return PhysicalField(grid, values), float(time)


def require_resolved(width: float, grid: TorusGrid, what: str = "width") -> None:
    if width < 2 * grid.spacing:
        raise ResolutionError(f"{what} {width} is below two grid spacings")
