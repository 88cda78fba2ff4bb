import numpy as np
import pytest

from ksmix.diagnostics import DiagnosticsRecord
from ksmix.errors import DegenerateInputError, ParameterError, SizeError
from ksmix.evolve import ModelParams, StepPolicy, initial_data, linear_run, run
from ksmix.flows import FlowSpec
from ksmix.grid import SpectralField, TorusGrid, fft
from ksmix.spectral_gap import (
    approx_lemma_check, assemble_H, decay_rate, pn_stability_check, psi_for_flow,
    psi_resolvent, semigroup_norm, sigma_min, truncation_modes, write_psi_csv,
)

SHEAR = FlowSpec.steady_shear()
ALT = FlowSpec.alternating_shear(0.1)

# frozen by running this implementation; see the ledger
PSI_STEADY_FIXTURE = 15.749609945722419      # = (2 pi)^1.5 for every A
PN_RATIO_AT_005 = 0.09324698601667676


def rec(t, dist):
    return DiagnosticsRecord(t, 1.0, dist, 0.0, 0.0, (0,), 0.0, float("nan"), 0.0)


class TestAssemble:
    def test_diagonal_case(self):
        H = assemble_H(FlowSpec.none(), 0.0, 1.3, 1, 1)
        assert H.dim == 2
        assert np.allclose(H.entries, np.eye(2) * (2 * np.pi) ** 1.3, rtol=1e-14)
        assert sorted(H.modes[:, 0]) == [-1, 1]

    def test_dimension(self):
        for N, d in [(1, 2), (3, 2), (2, 3)]:
            assert assemble_H(SHEAR if d > 1 else FlowSpec.none(), 1.0, 1.0, N, d).dim == (2 * N + 1) ** d - 1

    def test_shear_coupling_support(self):
        H = assemble_H(SHEAR, 1.0, 1.5, 3, 2)
        rows, cols = np.nonzero(np.abs(H.advection) > 1e-12)
        for i, j in zip(rows, cols):
            diff = H.modes[i] - H.modes[j]
            assert tuple(diff) in ((0, 1), (0, -1))

    def test_shear_entry_value(self):
        # u_1 = sin(2 pi x_2): u^(0, +-1) = -+ i/2, so Adv[k, k-e2] = 2 pi i (-i/2) k_1 = pi k_1
        H = assemble_H(SHEAR, 1.0, 1.5, 2, 2)
        index = {tuple(m): i for i, m in enumerate(H.modes)}
        assert H.advection[index[(1, 1)], index[(1, 0)]] == pytest.approx(np.pi, abs=1e-12)
        assert H.advection[index[(1, -1)], index[(1, 0)]] == pytest.approx(-np.pi, abs=1e-12)

    @pytest.mark.parametrize("t", [0.0, 0.1])
    def test_skew_alternating(self, t):
        assert assemble_H(ALT, 50.0, 1.5, 4, 2, t=t).skew_defect() <= 1e-10

    def test_accretive(self):
        H = assemble_H(ALT, 100.0, 1.2, 4, 2)
        rng = np.random.default_rng(0)
        vecs = [np.eye(H.dim)[i] for i in range(H.dim)] + [
            rng.standard_normal(H.dim) + 1j * rng.standard_normal(H.dim) for _ in range(20)]
        for f in vecs:
            assert np.real(np.vdot(f, H.entries @ f)) >= -1e-10 * np.vdot(f, f).real

    def test_cap(self):
        # (2N+1)^d - 1 > 4096 first at N=32 for d=2 and N=8 for d=3
        with pytest.raises(SizeError):
            assemble_H(SHEAR, 1.0, 1.0, 32, 2)
        with pytest.raises(SizeError):
            assemble_H(SHEAR, 1.0, 1.0, 8, 3)
        with pytest.raises(SizeError):
            assemble_H(SHEAR, 1.0, 1.0, 4, 2, cap=10)

    def test_bad_args(self):
        with pytest.raises(ParameterError):
            assemble_H(SHEAR, 1.0, 1.0, 0, 2)
        with pytest.raises(ParameterError):
            assemble_H(SHEAR, -1.0, 1.0, 2, 2)

    def test_modes_exclude_zero(self):
        m = truncation_modes(2, 2)
        assert not np.any(np.all(m == 0, axis=1))


class TestPsi:
    @pytest.mark.parametrize("alpha", [0.7, 1.5])
    def test_diagonal(self, alpha):
        est = psi_resolvent(assemble_H(FlowSpec.none(), 0.0, alpha, 4, 1))
        assert est.value == pytest.approx((2 * np.pi) ** alpha, rel=1e-9)
        assert abs(est.argmin_lambda) < 1e-3
        assert est.trunc_N == 4

    def test_nonnegative(self):
        assert psi_resolvent(assemble_H(ALT, 30.0, 1.0, 3, 2), steps=33).value >= 0

    def test_sigma_min_diagonal(self):
        H = assemble_H(FlowSpec.none(), 0.0, 1.0, 2, 1)
        assert sigma_min(H, 3.0) == pytest.approx(np.hypot(2 * np.pi, 3.0))

    def test_empty_grid(self):
        H = assemble_H(FlowSpec.none(), 0.0, 1.0, 1, 1)
        with pytest.raises(ParameterError):
            psi_resolvent(H, steps=0)
        with pytest.raises(ParameterError):
            psi_resolvent(H, 1.0, -1.0)

    def test_steady_shear_sweep(self):
        vals = [psi_for_flow(SHEAR, A, 1.5, 8, 2).value for A in (0.0, 10.0, 100.0)]
        assert all(b >= a * (1 - 1e-9) for a, b in zip(vals, vals[1:]))
        for v in vals:
            assert v == pytest.approx(PSI_STEADY_FIXTURE, rel=1e-9)

    def test_alternating_grows(self):
        vals = [psi_for_flow(ALT, A, 1.5, 4, 2, steps=65).value for A in (0.0, 100.0)]
        assert vals[0] == pytest.approx((2 * np.pi) ** 1.5, rel=1e-9)
        assert vals[1] >= vals[0] * (1 - 1e-9)

    def test_psv_csv(self, tmp_path):
        rows = [{"A": 1.0, "alpha": 1.5, "trunc_N": 4, "psi": 2.0, "argmin_lambda": 0.0, "wall_seconds": 0.1}]
        write_psi_csv(tmp_path / "p.csv", rows)
        assert (tmp_path / "p.csv").read_text().splitlines()[0] == "A,alpha,trunc_N,psi,argmin_lambda,wall_seconds"


class TestSemigroup:
    def test_identity_at_zero(self):
        assert semigroup_norm(assemble_H(ALT, 10.0, 1.0, 3, 2), 0.0) == pytest.approx(1.0, abs=1e-12)

    def test_diagonal_decay(self):
        H = assemble_H(FlowSpec.none(), 0.0, 1.5, 3, 2)
        assert semigroup_norm(H, 0.2) == pytest.approx(np.exp(-(2 * np.pi) ** 1.5 * 0.2), rel=1e-10)

    def test_negative_t(self):
        with pytest.raises(ParameterError):
            semigroup_norm(assemble_H(FlowSpec.none(), 0.0, 1.0, 1, 1), -1.0)

    def test_gearhart_pruss_sampled(self):
        cases = 0
        for flow in (SHEAR, ALT):
            for A in (0.0, 5.0, 40.0, 200.0):
                H = assemble_H(flow, A, 1.2, 3, 2)
                psi = psi_resolvent(H, steps=65).value
                for t in (0.01, 0.1, 0.4):
                    assert semigroup_norm(H, t) <= np.exp(-t * psi + np.pi / 2)
                    cases += 1
        assert cases >= 20


class TestDecayRate:
    def test_exact_exponential(self):
        recs = [rec(t, 3.0 * np.exp(-7.25 * t)) for t in np.linspace(0, 1, 12)]
        assert decay_rate(recs, (0, 1)) == pytest.approx(7.25, abs=1e-8)

    def test_single_mode_linear(self):
        g = TorusGrid(2, 32)
        rho0 = initial_data("single_mode", g, k=(1, 0))
        out = linear_run(rho0, ModelParams(alpha=1.5), StepPolicy(t_end=0.1, dt_max=5e-3))
        assert decay_rate(out.records, (0, 0.1)) == pytest.approx((2 * np.pi) ** 1.5, rel=1e-4)

    def test_too_few_records(self):
        recs = [rec(t, np.exp(-t)) for t in np.linspace(0, 1, 5)]
        with pytest.raises(ParameterError):
            decay_rate(recs, (0, 1))
        with pytest.raises(ParameterError):
            decay_rate(recs * 3, (1, 0))

    def test_rate_not_below_psi_steady(self):
        g = TorusGrid(2, 32)
        rho0 = initial_data("random_smooth", g, seed=4, band=4, mean_zero=True)
        params = ModelParams(alpha=1.5, A=20.0, flow=SHEAR, nonlinear_enabled=False)
        out = linear_run(rho0, params, StepPolicy(t_end=0.4, record_dt=0.02, transport="split"))
        rate = decay_rate(out.records, (0.1, 0.4))
        psi = psi_for_flow(SHEAR, 20.0, 1.5, 4, 2, steps=65).value
        assert rate >= 0.9 * psi


class TestPn:
    def setup_method(self):
        g = TorusGrid(2, 32)
        f = initial_data("random_smooth", g, seed=0, band=4, mean_zero=True)
        self.f = SpectralField(g, fft(f.values))

    def test_t0(self):
        H = assemble_H(ALT, 64.0, 1.5, 4, 2)
        assert pn_stability_check(H, self.f, 4, [0.0]).max_ratio == pytest.approx(1.0, abs=1e-12)

    def test_diagonal_contraction(self):
        H = assemble_H(FlowSpec.none(), 0.0, 1.5, 4, 2)
        r = pn_stability_check(H, self.f, 3, np.linspace(0, 1, 11))
        assert all(x <= 1 + 1e-12 for x in r.ratios)

    def test_alternating_fixture(self):
        H = assemble_H(ALT, 64.0, 1.5, 4, 2)
        r = pn_stability_check(H, self.f, 4, np.linspace(0, 1, 21))
        assert np.isfinite(r.max_ratio) and r.max_ratio == pytest.approx(1.0)
        assert r.ratios[1] == pytest.approx(PN_RATIO_AT_005, rel=1e-8)

    def test_degenerate(self):
        g = TorusGrid(2, 32)
        c = np.zeros(g.shape, complex)
        c[4, 4] = c[-4, -4] = 1.0
        H = assemble_H(ALT, 1.0, 1.5, 4, 2)
        with pytest.raises(DegenerateInputError):
            pn_stability_check(H, SpectralField(g, c), 2, [0.1])

    def test_mean_required(self):
        g = TorusGrid(2, 32)
        c = self.f.coeffs.copy()
        c[0, 0] = 1.0
        with pytest.raises(ParameterError):
            pn_stability_check(assemble_H(ALT, 1.0, 1.5, 4, 2), SpectralField(g, c), 2, [0.1])


class TestApproxCheck:
    def test_difference_zero_at_start_and_linear_growth(self):
        g = TorusGrid(2, 32)
        rho0 = initial_data("gaussian_bump", g, mass=1.0, width=0.1)
        params = ModelParams(alpha=2.0, beta=2.0, A=16.0, flow=ALT)
        policy = StepPolicy(t_end=1e-3, dt_max=1e-5, record_dt=5e-5, keep_snapshots=True)
        full = run(rho0, params, policy)
        lin = linear_run(rho0, params, policy)
        assert np.array_equal(full.snapshots[0].rho.coeffs, lin.snapshots[0].rho.coeffs)
        q, c = approx_lemma_check(full, lin, 4)
        assert 0.8 <= q <= 1.2 and c > 0

    def test_identical_trajectories(self):
        g = TorusGrid(2, 16)
        rho0 = initial_data("gaussian_bump", g, mass=1.0, width=0.15)
        policy = StepPolicy(t_end=1e-3, dt_max=1e-4, keep_snapshots=True)
        lin = linear_run(rho0, ModelParams(alpha=2.0), policy)
        with pytest.raises(DegenerateInputError):
            approx_lemma_check(lin, lin, 4)
