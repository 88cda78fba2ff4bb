"""Experiment orchestration: single runs with file output, A-sweeps,
bisection for the suppression threshold A0, and Psi sweeps."""
from __future__ import annotations

import json
import logging
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Callable, Optional, Sequence

import numpy as np

from . import config as cfgmod
from .diagnostics import constants_ledger, phi_estimate, write_records_csv
from .errors import ConfigError, DegenerateInputError, KsmixError, ParameterError, PreconditionError
from .evolve import RunOutcome, SimState, linear_run, run
from .grid import PhysicalField, SpectralField, fft, ifft_real, read_snapshot, write_snapshot
from .spectral_gap import decay_rate, psi_for_flow, write_psi_csv

log = logging.getLogger(__name__)

EXIT_CODES = {"completed": 0, "blowup_detected": 2, "resolution_lost": 3}
EXIT_CONFIG_ERROR = 1


def _finite_or_none(x):
    if x is None:
        return None
    x = float(x)
    return x if math.isfinite(x) else None


def summarize(outcome: RunOutcome, rho0: PhysicalField, cfg: cfgmod.ExperimentConfig) -> dict:
    """Deterministic JSON-ready summary of a run (no wall-clock data)."""
    recs = outcome.records
    try:
        phi = phi_estimate(recs)
    except DegenerateInputError:
        phi = None
    try:
        rate = decay_rate(recs, (recs[0].t, recs[-1].t)) if len(recs) >= 8 else None
    except ParameterError:
        rate = None
    try:
        ledger = asdict(constants_ledger(rho0, cfg["p_diag"]))
    except PreconditionError:
        ledger = None
    return {
        "status": outcome.status,
        "blowup_time_estimate": outcome.blowup_time_estimate,
        "t_final": outcome.final_state.t,
        "steps": outcome.final_state.step_count,
        "records": len(recs),
        "final_linf": recs[-1].linf,
        "initial_linf": float(np.abs(rho0.values).max()),
        "phi_estimate": _finite_or_none(phi),
        "decay_rate": _finite_or_none(rate),
        "constants_ledger": ledger,
        "config_digest": cfg.digest(),
    }


def _sidecar(cfg: cfgmod.ExperimentConfig, state: SimState) -> dict:
    return {
        "config": cfgmod.serialize(cfg),
        "t": state.t,
        "step_count": state.step_count,
        "seed": cfg["seed"],
    }


def save_checkpoint(path: Path, cfg: cfgmod.ExperimentConfig, state: SimState) -> None:
    """Snapshot file plus JSON sidecar with the same stem."""
    field_ = PhysicalField(state.rho.grid, ifft_real(state.rho.coeffs))
    write_snapshot(path, field_, state.t)
    path.with_suffix(".json").write_text(json.dumps(_sidecar(cfg, state), indent=2, sort_keys=True))


def load_checkpoint(path: str | Path) -> tuple[cfgmod.ExperimentConfig, SimState]:
    path = Path(path)
    f, t = read_snapshot(path)
    meta = json.loads(path.with_suffix(".json").read_text())
    cfg = cfgmod.parse(meta["config"])
    grid = f.grid
    coeffs = np.where(grid.dealias_mask, fft(f.values), 0)
    return cfg, SimState(t, SpectralField(grid, coeffs), int(meta["step_count"]))


def execute(cfg: cfgmod.ExperimentConfig, linear: bool = False,
            start: SimState | None = None, keep_snapshots: bool = False
            ) -> tuple[RunOutcome, dict, PhysicalField]:
    cfg.validate()
    rho0 = cfg.initial_field()
    params = cfg.params()
    policy = cfg.policy(keep_snapshots=keep_snapshots)
    if linear:
        if start is not None:
            raise ConfigError("resume is only supported for full runs")
        outcome = linear_run(rho0, params, policy, p_diag=cfg["p_diag"])
    else:
        outcome = run(rho0, params, policy, p_diag=cfg["p_diag"], start=start)
    return outcome, summarize(outcome, rho0, cfg), rho0


def run_to_dir(cfg: cfgmod.ExperimentConfig, out_dir: str | Path | None = None,
               linear: bool = False, resume: str | Path | None = None) -> tuple[RunOutcome, dict]:
    """Run one configuration and write records.csv, summary.json and snapshots."""
    start = None
    if resume is not None:
        saved_cfg, start = load_checkpoint(resume)
        if saved_cfg.digest() != cfg.digest():
            raise ConfigError("checkpoint was written by a different configuration")
    out = Path(out_dir or cfg["output.dir"])
    snaps = out / "snapshots"
    snaps.mkdir(parents=True, exist_ok=True)
    every = cfg["output.snapshot_every"]
    t0 = time.perf_counter()
    outcome, summary, _ = execute(cfg, linear=linear, start=start, keep_snapshots=every > 0)
    wall = time.perf_counter() - t0
    write_records_csv(out / "records.csv", outcome.records)
    (out / "summary.json").write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n")
    for i, s in enumerate(outcome.snapshots[::every] if every > 0 else []):
        save_checkpoint(snaps / f"state_{i:05d}.ksmx", cfg, s)
    save_checkpoint(snaps / "final.ksmx", cfg, outcome.final_state)
    log.info("%s after %d steps, t=%.6g (%.1f s)", outcome.status,
             outcome.final_state.step_count, outcome.final_state.t, wall)
    return outcome, summary


# --- sweeps -----------------------------------------------------------------

@dataclass
class SweepResult:
    A_values: list
    summaries: list
    phi_estimates: list
    decay_rates: list
    config_digest: str
    A0_bracket: Optional[tuple] = None


def _sweep_entry(args) -> dict:
    text, A, linear = args
    cfg = cfgmod.parse(text).with_values(amplitude_A=float(A))
    try:
        _, summary, _ = execute(cfg, linear=linear)
    except KsmixError as exc:
        summary = {"status": "error", "error": str(exc), "phi_estimate": None, "decay_rate": None}
    summary["A"] = float(A)
    return summary


def sweep_A(cfg: cfgmod.ExperimentConfig, A_values: Sequence[float], linear: bool = False,
            workers: int = 1) -> SweepResult:
    """Independent runs over A; per-entry failures are recorded and the sweep continues."""
    if len(A_values) < 1:
        raise ConfigError("sweep needs at least one value of A")
    cfg.validate()
    base = cfg.with_values(amplitude_A=0.0)
    text = cfgmod.serialize(base)
    jobs = [(text, float(A), linear) for A in A_values]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            summaries = list(pool.map(_sweep_entry, jobs))
    else:
        summaries = [_sweep_entry(j) for j in jobs]
    return SweepResult(
        A_values=[float(a) for a in A_values],
        summaries=summaries,
        phi_estimates=[s.get("phi_estimate") for s in summaries],
        decay_rates=[s.get("decay_rate") for s in summaries],
        config_digest=base.digest(),
    )


SWEEP_COLUMNS = ("A", "status", "phi_estimate", "decay_rate", "blowup_time_estimate", "final_linf")


def write_sweep(out_dir: str | Path, result: SweepResult) -> None:
    import csv

    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "sweep.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(SWEEP_COLUMNS)
        for s in result.summaries:
            w.writerow(["" if s.get(c) is None else s.get(c) for c in SWEEP_COLUMNS])
    (out / "summary.json").write_text(json.dumps(asdict(result), indent=2, sort_keys=True) + "\n")


# --- threshold bisection ------------------------------------------------------

@dataclass
class BisectResult:
    lo: float
    hi: float
    evaluations: list = field(default_factory=list)   # (A, blew_up) in evaluation order
    violations: list = field(default_factory=list)    # (A_small_no_blowup, A_large_blowup)

    @property
    def monotone(self) -> bool:
        return not self.violations


def _violations(evals: list) -> list:
    out = []
    for a, ba in evals:
        for b, bb in evals:
            if a < b and not ba and bb:
                out.append((a, b))
    return sorted(set(out))


def bisect_A0(A_lo: float, A_hi: float, iterations: int,
              blows_up: Callable[[float], bool], check_points: int = 0) -> BisectResult:
    """Geometric bisection of [A_lo, A_hi] for the smallest suppressing amplitude.

    ``blows_up(A)`` must be True at A_lo and False at A_hi.  Outcomes are
    assumed monotone in A.  Bisection alone never samples a contradiction
    (every blowup it sees lies below every suppression), so ``check_points``
    log-spaced interior amplitudes are evaluated first; any pair that
    contradicts monotonicity is reported, and the bisection starts from the
    tightest bracket those samples allow.
    """
    if not 0 < A_lo < A_hi:
        raise ConfigError("need 0 < A_lo < A_hi")
    if iterations < 0 or check_points < 0:
        raise ConfigError("iterations and check_points must be nonnegative")
    evals = [(A_lo, bool(blows_up(A_lo))), (A_hi, bool(blows_up(A_hi)))]
    if not evals[0][1] or evals[1][1]:
        raise PreconditionError(
            f"bracket check failed: blowup at A_lo={evals[0][1]}, at A_hi={evals[1][1]}"
        )
    if check_points:
        grid = np.geomspace(A_lo, A_hi, check_points + 2)[1:-1]
        evals += [(float(a), bool(blows_up(float(a)))) for a in grid]
    hi = min(a for a, b in evals if not b)
    lo = max(a for a, b in evals if b and a < hi)
    for _ in range(iterations):
        mid = math.sqrt(lo * hi)
        b = bool(blows_up(mid))
        evals.append((mid, b))
        if b:
            lo = mid
        else:
            hi = mid
    return BisectResult(lo, hi, evals, _violations(evals))


def run_blows_up(cfg: cfgmod.ExperimentConfig) -> Callable[[float], bool]:
    def outcome(A: float) -> bool:
        _, summary, _ = execute(cfg.with_values(amplitude_A=float(A)))
        log.info("A=%.6g -> %s", A, summary["status"])
        return summary["status"] == "blowup_detected"
    return outcome


# --- Psi sweep ---------------------------------------------------------------

def psi_sweep(cfg: cfgmod.ExperimentConfig, A_values: Sequence[float], trunc_N: int,
              steps: int = 257) -> list[dict]:
    flow = cfg.flow()
    rows = []
    for A in A_values:
        t0 = time.perf_counter()
        est = psi_for_flow(flow, float(A), cfg["alpha"], trunc_N, cfg["dim"], steps=steps)
        rows.append({
            "A": float(A), "alpha": cfg["alpha"], "trunc_N": trunc_N,
            "psi": est.value, "argmin_lambda": est.argmin_lambda,
            "wall_seconds": round(time.perf_counter() - t0, 3),
        })
    return rows


def write_psi(out_dir: str | Path, rows: list[dict]) -> Path:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    path = out / "psi.csv"
    write_psi_csv(path, rows)
    return path
