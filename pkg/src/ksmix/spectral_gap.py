"""Truncated-operator analysis of H = (-Laplacian)^(alpha/2) + A u.grad on mean-zero modes.

The basis is e^{2 pi i k.x} for 0 < |k|_inf <= trunc_N in lexicographic
order.  Psi(H) = inf_lambda sigma_min(H - i lambda) is found by a grid
search over lambda followed by golden-section refinement.
"""
from __future__ import annotations

import csv
import itertools
import math
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np
from scipy.linalg import expm, svdvals

from .errors import DegenerateInputError, ParameterError, SizeError
from .flows import FlowSpec, velocity_array
from .grid import SpectralField, TorusGrid, fft

DIM_CAP = 4096
PSI_GRID_STEPS = 257
PSI_TOL = 1e-6
PSI_COLUMNS = ("A", "alpha", "trunc_N", "psi", "argmin_lambda", "wall_seconds")
_GOLDEN = (math.sqrt(5) - 1) / 2


@dataclass
class OperatorMatrix:
    """H = diag(dissipation) + A * advection on the listed modes."""

    trunc_N: int
    d: int
    A: float
    alpha: float
    modes: np.ndarray          # (dim, d) integer wavenumbers
    dissipation: np.ndarray    # (dim,) real
    advection: np.ndarray      # (dim, dim) complex, amplitude excluded

    @property
    def dim(self) -> int:
        return len(self.modes)

    @cached_property
    def entries(self) -> np.ndarray:
        return np.diag(self.dissipation).astype(complex) + self.A * self.advection

    def skew_defect(self) -> float:
        """max |Adv + Adv^*|, zero for a divergence-free flow."""
        return float(np.abs(self.advection + self.advection.conj().T).max())


@dataclass(frozen=True)
class PsiEstimate:
    value: float
    argmin_lambda: float
    lambda_grid: tuple[float, float, int]
    trunc_N: int


def truncation_modes(trunc_N: int, d: int) -> np.ndarray:
    rng = range(-trunc_N, trunc_N + 1)
    modes = [k for k in itertools.product(rng, repeat=d) if any(k)]
    return np.array(modes, dtype=int).reshape(-1, d)


def _flow_coefficients(flow: FlowSpec, t: float, d: int, trunc_N: int) -> tuple[np.ndarray, int]:
    """Fourier coefficients of the velocity, shape (d, n_s, ..., n_s)."""
    if flow.kind == "custom":
        n_s = flow.components[0].shape[0]
        if n_s < 4 * trunc_N + 2:
            raise ParameterError("custom flow resolution too coarse for this truncation")
        u = np.stack(flow.components)
    else:
        n_s = max(8, 4 * trunc_N + 2, 4 * flow.m + 2)
        n_s += n_s % 2
        u = velocity_array(flow, t, TorusGrid(d, n_s))
    return np.stack([fft(uj) for uj in u]), n_s


def assemble_H(flow: FlowSpec, A: float, alpha: float, trunc_N: int, d: int,
               t: float = 0.0, cap: int = DIM_CAP) -> OperatorMatrix:
    """Dense H on the truncated mean-zero basis, flow frozen at time t."""
    if trunc_N < 1:
        raise ParameterError("trunc_N must be >= 1")
    if A < 0:
        raise ParameterError("A must be nonnegative")
    dim = (2 * trunc_N + 1) ** d - 1
    if dim > cap:
        raise SizeError(f"operator dimension {dim} exceeds the cap {cap}")
    modes = truncation_modes(trunc_N, d)
    dissipation = (2 * np.pi * np.linalg.norm(modes, axis=1)) ** alpha
    adv = np.zeros((dim, dim), dtype=complex)
    if flow.kind != "none":
        uhat, n_s = _flow_coefficients(flow, t, d, trunc_N)
        diff = (modes[:, None, :] - modes[None, :, :]) % n_s
        idx = tuple(diff[..., j] for j in range(d))
        for j in range(d):
            adv += uhat[j][idx] * modes[None, :, j]
        adv *= 2j * np.pi
    return OperatorMatrix(trunc_N, d, float(A), float(alpha), modes, dissipation, adv)


def sigma_min(H: OperatorMatrix, lam: float) -> float:
    M = H.entries - 1j * lam * np.eye(H.dim)
    return float(svdvals(M, check_finite=False)[-1])


def _golden_min(f, a: float, b: float, tol: float) -> tuple[float, float]:
    c, d = b - _GOLDEN * (b - a), a + _GOLDEN * (b - a)
    fc, fd = f(c), f(d)
    while b - a > tol:
        if fc <= fd:
            b, d, fd = d, c, fc
            c = b - _GOLDEN * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + _GOLDEN * (b - a)
            fd = f(d)
    return (c, fc) if fc <= fd else (d, fd)


def psi_resolvent(H: OperatorMatrix, lambda_lo: float | None = None,
                  lambda_hi: float | None = None, steps: int = PSI_GRID_STEPS,
                  tol: float = PSI_TOL) -> PsiEstimate:
    """min over lambda of sigma_min(H - i lambda); default range |lambda| <= 2 |H|_2."""
    if steps < 1:
        raise ParameterError("the lambda grid is empty")
    if lambda_lo is None or lambda_hi is None:
        bound = 2 * float(svdvals(H.entries)[0])
        lambda_lo = -bound if lambda_lo is None else lambda_lo
        lambda_hi = bound if lambda_hi is None else lambda_hi
    if lambda_hi < lambda_lo:
        raise ParameterError("the lambda grid is empty")
    grid = np.linspace(lambda_lo, lambda_hi, steps)
    vals = np.array([sigma_min(H, lam) for lam in grid])
    i = int(np.argmin(vals))
    best_lam, best = float(grid[i]), float(vals[i])
    if steps > 1:
        a, b = grid[max(i - 1, 0)], grid[min(i + 1, steps - 1)]
        lam, val = _golden_min(lambda x: sigma_min(H, x), float(a), float(b), tol)
        if val < best:
            best_lam, best = lam, val
    return PsiEstimate(best, best_lam, (float(lambda_lo), float(lambda_hi), steps), H.trunc_N)


def flow_phases(flow: FlowSpec) -> list[float]:
    """Representative frozen times: one per distinct phase of the flow."""
    if flow.kind == "alternating_shear":
        return [0.0, flow.tau_f]
    return [0.0]


def psi_for_flow(flow: FlowSpec, A: float, alpha: float, trunc_N: int, d: int,
                 **kw) -> PsiEstimate:
    """Psi of the frozen operator, minimized over the flow's phases."""
    estimates = [psi_resolvent(assemble_H(flow, A, alpha, trunc_N, d, t=t), **kw)
                 for t in flow_phases(flow)]
    return min(estimates, key=lambda e: e.value)


def semigroup_norm(H: OperatorMatrix, t: float) -> float:
    """|| exp(-t H) ||_2."""
    if t < 0:
        raise ParameterError("t must be nonnegative")
    return float(svdvals(expm(-t * H.entries))[0])


def decay_rate(records: Sequence, window: tuple[float, float]) -> float:
    """Least-squares slope of -log |rho - mean|_2 over records in the window."""
    t1, t2 = window
    sel = [r for r in records if t1 <= r.t <= t2]
    if t2 <= t1 or len(sel) < 8:
        raise ParameterError(f"window {window} holds {len(sel)} records; need >= 8")
    ts = np.array([r.t for r in sel])
    ds = np.array([r.l2_dist_mean for r in sel])
    if np.any(ds <= 0) or np.ptp(ts) == 0:
        raise ParameterError("degenerate decay window")
    slope = np.polyfit(ts, -np.log(ds), 1)[0]
    return float(slope)


@dataclass(frozen=True)
class PnReport:
    max_ratio: float
    times: tuple[float, ...]
    ratios: tuple[float, ...]


def _coeffs_on_modes(f: SpectralField, modes: np.ndarray) -> np.ndarray:
    n = f.grid.n
    if np.abs(modes).max() >= n // 2:
        raise ParameterError("field grid too coarse for the operator truncation")
    idx = tuple((modes[:, j] % n) for j in range(modes.shape[1]))
    return f.coeffs[idx]


def pn_stability_check(H: OperatorMatrix, f: SpectralField, N: float,
                       times: Iterable[float]) -> PnReport:
    """max over t of |P_N exp(-tH) f| / |P_N f| (f restricted to the truncation)."""
    if not f.is_mean_zero:
        raise ParameterError("f must be mean-zero")
    v = _coeffs_on_modes(f, H.modes)
    low = np.linalg.norm(H.modes, axis=1) <= N
    base = np.linalg.norm(v[low])
    if base == 0:
        raise DegenerateInputError("P_N f vanishes")
    times = tuple(float(t) for t in times)
    ratios = []
    for t in times:
        if t < 0:
            raise ParameterError("times must be nonnegative")
        w = expm(-t * H.entries) @ v
        ratios.append(float(np.linalg.norm(w[low]) / base))
    return PnReport(max(ratios), times, tuple(ratios))


def approx_lemma_check(full, linear, N: float, t_min: float = 0.0) -> tuple[float, float]:
    """Fit |P_N(rho - eta)(t)|_2 = c t^q over the earliest decade with nonzero difference.

    Both outcomes must carry snapshots taken at the same times.
    """
    pairs = []
    eta_by_t = {s.t: s for s in linear.snapshots}
    for s in full.snapshots:
        e = eta_by_t.get(s.t)
        if e is None or s.t <= t_min:
            continue
        mask = s.rho.grid.kmag <= N
        diff = float(np.linalg.norm((s.rho.coeffs - e.rho.coeffs)[mask]))
        pairs.append((s.t, diff))
    nonzero = [(t, v) for t, v in pairs if t > 0 and v > 0]
    if not nonzero:
        raise DegenerateInputError("full and linear trajectories coincide")
    t0 = nonzero[0][0]
    sel = [(t, v) for t, v in nonzero if t <= 10 * t0 * (1 + 1e-9)]
    if len(sel) < 3:
        raise DegenerateInputError("fewer than three records in the earliest decade")
    lt, lv = np.log([t for t, _ in sel]), np.log([v for _, v in sel])
    q, logc = np.polyfit(lt, lv, 1)
    return float(q), float(math.exp(logc))


def write_psi_csv(path: str | Path, rows: Iterable[dict]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=PSI_COLUMNS)
        w.writeheader()
        for row in rows:
            w.writerow({k: row[k] for k in PSI_COLUMNS})
