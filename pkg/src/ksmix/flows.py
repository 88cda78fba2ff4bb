"""Divergence-free advecting flows and the transport term u . grad(rho)."""
from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np
import scipy.fft as sfft

from .errors import DataIntegrityError, ParameterError
from .grid import PhysicalField, SpectralField, TorusGrid, fft, ifft_real, origin_phase, read_snapshot

FLOW_KINDS = ("none", "steady_shear", "alternating_shear", "custom")
DIVERGENCE_TOL = 1e-10


@dataclass(frozen=True)
class FlowSpec:
    """Shape of the velocity field u; the amplitude A lives with the model parameters.

    ``steady_shear`` with ``axis=a`` moves fluid along x_a with profile
    sin(2 pi m x_{a+1}).  ``alternating_shear`` uses axis 0 on
    [0, tau_f) and axis 1 on [tau_f, 2 tau_f), repeating.
    """

    kind: str = "none"
    m: int = 1
    axis: int = 0
    tau_f: float | None = None
    components: tuple[np.ndarray, ...] | None = field(default=None, compare=False)

    def __post_init__(self):
        if self.kind not in FLOW_KINDS:
            raise ParameterError(f"unknown flow kind {self.kind!r}")
        if self.kind in ("steady_shear", "alternating_shear") and self.m < 1:
            raise ParameterError("profile wavenumber m must be >= 1")
        if self.kind == "alternating_shear" and not (self.tau_f and self.tau_f > 0):
            raise ParameterError("alternating_shear needs a positive tau_f")
        if self.kind == "custom" and self.components is None:
            raise ParameterError("custom flow needs velocity components")

    @classmethod
    def none(cls) -> FlowSpec:
        return cls("none")

    @classmethod
    def steady_shear(cls, m: int = 1, axis: int = 0) -> FlowSpec:
        return cls("steady_shear", m=m, axis=axis)

    @classmethod
    def alternating_shear(cls, tau_f: float, m: int = 1) -> FlowSpec:
        return cls("alternating_shear", m=m, tau_f=tau_f)

    @classmethod
    def custom(cls, components: Sequence[np.ndarray]) -> FlowSpec:
        comps = tuple(np.asarray(c, dtype=float) for c in components)
        if len({c.shape for c in comps}) != 1:
            raise DataIntegrityError("velocity components differ in shape")
        d, n = comps[0].ndim, comps[0].shape[0]
        if len(comps) != d:
            raise DataIntegrityError(f"need {d} velocity components, got {len(comps)}")
        grid = TorusGrid(d, n)
        div = divergence_ratio(grid, np.stack(comps))
        if div > DIVERGENCE_TOL:
            raise DataIntegrityError(f"custom flow is not divergence-free (ratio {div:.2e})")
        return cls("custom", components=comps)

    @property
    def is_steady(self) -> bool:
        return self.kind != "alternating_shear"

    def shear_axis(self, t: float) -> int | None:
        """Flow direction of the shear active at time t (None if not a shear)."""
        if self.kind == "steady_shear":
            return self.axis
        if self.kind == "alternating_shear":
            return int(np.floor(t / self.tau_f + 1e-12)) % 2
        return None

    def next_switch(self, t: float) -> float:
        """First switching time strictly after t (inf for steady flows)."""
        if self.kind != "alternating_shear":
            return np.inf
        k = np.floor(t / self.tau_f + 1e-12) + 1
        return float(k * self.tau_f)


def load_custom_flow(paths: Sequence[str | Path]) -> FlowSpec:
    """Custom flow from one KSMX snapshot per velocity component."""
    comps = [read_snapshot(p)[0].values for p in paths]
    return FlowSpec.custom(comps)


def shear_axes(axis: int, d: int) -> tuple[int, int]:
    if d < 2:
        raise ParameterError("shear flows need d >= 2")
    return axis % d, (axis + 1) % d


def velocity_array(flow: FlowSpec, t: float, grid: TorusGrid) -> np.ndarray:
    """Velocity samples as an array of shape (d, n, ..., n)."""
    u = np.zeros((grid.d,) + grid.shape)
    if flow.kind == "none":
        return u
    if flow.kind == "custom":
        comps = np.stack(flow.components)
        if comps.shape != u.shape:
            raise ParameterError("custom flow resolution does not match the grid")
        return comps.copy()
    along, across = shear_axes(flow.shear_axis(t), grid.d)
    profile = np.sin(2 * np.pi * flow.m * grid.coords[across])
    u[along] = np.broadcast_to(profile, grid.shape)
    return u


def sample_velocity(flow: FlowSpec, t: float, grid: TorusGrid) -> tuple[PhysicalField, ...]:
    u = velocity_array(flow, t, grid)
    return tuple(PhysicalField(grid, uj) for uj in u)


def divergence_ratio(grid: TorusGrid, u: np.ndarray) -> float:
    """||div u|| / ||grad-scale of u||, computed spectrally."""
    div = np.zeros(grid.shape, dtype=complex)
    for j, kj in enumerate(grid.wavenumbers):
        div += 2j * np.pi * kj * fft(u[j])
    scale = sum(np.sum(np.abs(2 * np.pi * grid.kmag * fft(uj)) ** 2) for uj in u)
    if scale == 0:
        return 0.0
    return float(np.sqrt(np.sum(np.abs(div) ** 2) / scale))


def advection_coeffs(u: np.ndarray, rho_c: np.ndarray, grid: TorusGrid) -> np.ndarray:
    """Dealiased coefficients of u . grad(rho) from a velocity array."""
    acc = np.zeros(grid.shape)
    for j, kj in enumerate(grid.wavenumbers):
        if not np.any(u[j]):
            continue
        acc += u[j] * ifft_real(2j * np.pi * kj * rho_c)
    out = np.where(grid.dealias_mask, fft(acc), 0)
    out[grid.zero_index()] = 0.0
    return out


def advection_term(u: Sequence[PhysicalField], rho: SpectralField) -> SpectralField:
    grid = rho.grid
    if len(u) != grid.d or any(c.grid != grid for c in u):
        raise ParameterError("velocity grid does not match the density grid")
    arr = np.stack([c.values for c in u])
    return SpectralField(grid, advection_coeffs(arr, rho.coeffs, grid))


def shear_transport(rho_c: np.ndarray, grid: TorusGrid, along: int, across: int,
                    m: int, shift: float) -> np.ndarray:
    """Exact transport rho(x) -> rho(x - shift sin(2 pi m x_across) e_along).

    Applied as a phase in the mixed representation (Fourier along the flow,
    physical across it); the k_along = 0 slab is untouched, so the mean is
    preserved bit for bit.
    """
    k = grid.wavenumbers[along]
    profile = np.sin(2 * np.pi * m * grid.coords[across])
    phase = np.exp(-2j * np.pi * k * shift * profile)
    sign = origin_phase(grid.n, 1).reshape([-1 if ax == across else 1 for ax in range(grid.d)])
    mixed = sfft.ifft(rho_c * sign, axis=across) * grid.n
    moved = sfft.fft(mixed * phase, axis=across) * (sign / grid.n)
    out = np.where(k == 0, rho_c, moved)
    return out
