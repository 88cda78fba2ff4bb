"""Per-record monitored quantities: norms, max-point data, the max-point
evolution residual, the Dirichlet quotient and the constants ledger."""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .errors import DataIntegrityError, DegenerateInputError, PreconditionError
from .operators import _argmax
from .grid import PhysicalField, SpectralField, TorusGrid, fft, ifft_real, lp_norm, sobolev_seminorm

CONSTANT_REL_TOL = 1e-13
UNIFORM_REL_TOL = 1e-10
RECORD_COLUMNS = (
    "t", "mass", "l2_dist_mean", "lp_norm", "linf", "max_i", "max_j", "max_k",
    "dirichlet_quotient", "maxpoint_residual", "tail_ratio",
)


@dataclass(frozen=True)
class DiagnosticsRecord:
    t: float
    mass: float
    l2_dist_mean: float
    lp_norm: float
    linf: float
    max_location: tuple[int, ...]
    dirichlet_quotient: float
    maxpoint_residual: float
    tail_ratio: float
    flags: tuple[str, ...] = ()

    def row(self) -> list:
        loc = list(self.max_location) + [""] * (3 - len(self.max_location))
        return [self.t, self.mass, self.l2_dist_mean, self.lp_norm, self.linf, *loc,
                self.dirichlet_quotient, self.maxpoint_residual, self.tail_ratio]


@dataclass(frozen=True)
class MaxPointTerms:
    t: float
    value: float
    location: tuple[int, ...]
    fraclap: float
    nonlinear: float


def _fluct_l2(c: np.ndarray, zero: tuple) -> float:
    sq = np.abs(c) ** 2
    sq[zero] = 0.0
    return float(np.sqrt(sq.sum()))


def _is_constant(c: np.ndarray, zero: tuple) -> bool:
    return _fluct_l2(c, zero) <= CONSTANT_REL_TOL * abs(c[zero])


def tail_ratio(c: np.ndarray, grid: TorusGrid, params, t: float = 0.0) -> float:
    """Share of the energy of the explicit tendency A u.grad(rho) + div(rho B),
    formed from undealiased products, that lies in the shell max|k_i| >= n/3
    discarded by dealiasing.

    Zero when no product is formed (linear run without flow) or when the
    state is uniform to working precision (fluctuation below 1e-10 of the
    mean), where the shell holds transform noise only.
    """
    from .flows import velocity_array
    from .operators import _kernel_symbol

    zero = grid.zero_index()
    if not np.all(np.isfinite(c)):
        return np.inf
    if _fluct_l2(c, zero) <= UNIFORM_REL_TOL * abs(c[zero]):
        return 0.0
    tend = np.zeros(grid.shape, dtype=complex)
    rho = ifft_real(c)
    if params.A > 0 and params.flow.kind != "none":
        u = velocity_array(params.flow, t, grid)
        adv = sum(u[j] * ifft_real(2j * np.pi * kj * c)
                  for j, kj in enumerate(grid.wavenumbers) if np.any(u[j]))
        tend += params.A * fft(adv)
    if params.nonlinear_enabled:
        ks = _kernel_symbol(grid, params.kernel(grid.d)) * c
        for kj in grid.wavenumbers:
            b = ifft_real(2j * np.pi * kj * ks)
            tend += 2j * np.pi * kj * fft(rho * b)
    energy = np.abs(tend) ** 2
    total = energy.sum()
    if total == 0:
        return 0.0
    return float(energy[~grid.dealias_mask].sum() / total)


def dirichlet_quotient(rho: SpectralField, alpha: float) -> float:
    """|Lambda^(alpha/2) rho|^2 / |rho - mean|^2."""
    zero = rho.grid.zero_index()
    dist = _fluct_l2(rho.coeffs, zero)
    if dist == 0 or _is_constant(rho.coeffs, zero):
        raise DegenerateInputError("Dirichlet quotient of a constant field")
    return sobolev_seminorm(rho, alpha / 2) ** 2 / dist**2


def record(state, params, p: float = 2.0) -> DiagnosticsRecord:
    """All monitored quantities of one state."""
    rho = state.rho
    c = rho.coeffs
    if not np.all(np.isfinite(c)):
        raise DataIntegrityError("cannot record a non-finite state")
    grid = rho.grid
    zero = grid.zero_index()
    values = ifft_real(c)
    flags = []
    if _is_constant(c, zero):
        quotient = 0.0
        flags.append("constant")
    else:
        quotient = dirichlet_quotient(rho, params.alpha)
    loc = _argmax(values)
    return DiagnosticsRecord(
        t=float(state.t),
        mass=float(c[zero].real),
        l2_dist_mean=_fluct_l2(c, zero),
        lp_norm=lp_norm(PhysicalField(grid, values), p),
        linf=float(values[loc]),
        max_location=loc,
        dirichlet_quotient=quotient,
        maxpoint_residual=math.nan,
        tail_ratio=tail_ratio(c, grid, params, state.t),
        flags=tuple(flags),
    )


def phi_estimate(records: Sequence[DiagnosticsRecord]) -> float:
    """Finite-horizon infimum of the Dirichlet quotient."""
    valid = [r.dirichlet_quotient for r in records if "constant" not in r.flags]
    if not valid:
        raise DegenerateInputError("no record carries a valid Dirichlet quotient")
    return float(min(valid))


# --- max-point identity -----------------------------------------------------

def maxpoint_terms(state, params) -> MaxPointTerms:
    """Max value, its location and the dissipation and flux terms there."""
    grid = state.rho.grid
    c = state.rho.coeffs
    values = ifft_real(c)
    loc = _argmax(values)
    fraclap = float(ifft_real(grid.symbol(params.alpha) * c)[loc])
    nonlinear = 0.0
    if params.nonlinear_enabled:
        d = grid.d
        lap_k = -grid.symbol(params.beta - d) * c
        nonlinear = float(values[loc] * ifft_real(lap_k)[loc])
    return MaxPointTerms(float(state.t), float(values[loc]), loc, fraclap, nonlinear)


def _max_jump(a: tuple[int, ...], b: tuple[int, ...], n: int) -> int:
    return max(min(abs(i - j), n - abs(i - j)) for i, j in zip(a, b))


def maxpoint_residual(a: MaxPointTerms, b: MaxPointTerms, n: int) -> float:
    """Normalized residual of d(max)/dt + fraclap + rho_max (Lap K * rho) at the max.

    The time derivative is the difference quotient from record a to record b;
    the other terms are taken at a.  Returns nan when the max location moves
    by more than n/4 cells (the max curve is not followed continuously).
    """
    if _max_jump(a.location, b.location, n) > n / 4:
        return math.nan
    if b.t == a.t:
        raise DegenerateInputError("records share the same time")
    rate = (b.value - a.value) / (b.t - a.t)
    scale = max(abs(rate), abs(a.fraclap), abs(a.nonlinear))
    if scale == 0:
        return 0.0
    return abs(rate + a.fraclap + a.nonlinear) / scale


def fill_maxpoint_residuals(records: list[DiagnosticsRecord], terms: list[MaxPointTerms],
                            n: int) -> list[DiagnosticsRecord]:
    out = []
    for i, rec in enumerate(records):
        if i + 1 < len(records):
            r = maxpoint_residual(terms[i], terms[i + 1], n)
            flags = rec.flags + (("max_jump",) if math.isnan(r) else ())
            out.append(replace(rec, maxpoint_residual=r, flags=flags))
        else:
            out.append(rec)
    return out


# --- constants ledger -------------------------------------------------------

@dataclass(frozen=True)
class ConstantsLedger:
    B0: float
    D0: float
    C_inf: float
    rho_bar: float
    p: float
    B1: float

    def recomputed_B1(self) -> float:
        return b1_value(self.B0, self.D0, self.C_inf, self.rho_bar, self.p)


def b1_value(B0: float, D0: float, C_inf: float, rho_bar: float, p: float) -> float:
    """min{(B0^2 - rho_bar^2)^(1/2), (D0 / (2 C_inf + rho_bar)^(1 - 2/p))^(p/2)}."""
    first = math.sqrt(max(B0 * B0 - rho_bar * rho_bar, 0.0))
    second = (D0 / (2 * C_inf + rho_bar) ** (1 - 2 / p)) ** (p / 2)
    return min(first, second)


def constants_ledger(rho0: PhysicalField, p: float) -> ConstantsLedger:
    v = rho0.values
    if v.min() < -1e-10:
        raise PreconditionError("initial density must be nonnegative")
    rho_bar = float(v.mean())
    B0 = lp_norm(rho0, 2)
    D0 = lp_norm(PhysicalField(rho0.grid, v - rho_bar), p)
    C_inf = lp_norm(rho0, np.inf)
    return ConstantsLedger(B0, D0, C_inf, rho_bar, p, b1_value(B0, D0, C_inf, rho_bar, p))


# --- CSV --------------------------------------------------------------------

def write_records_csv(path: str | Path, records: Iterable[DiagnosticsRecord]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(RECORD_COLUMNS)
        for r in records:
            w.writerow([repr(x) if isinstance(x, float) else x for x in r.row()])


def read_records_csv(path: str | Path) -> list[dict]:
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))
