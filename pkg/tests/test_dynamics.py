import math
import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dense_oracle import DenseOracle
from hydroprim import (
    BlowUpError,
    DomainSpec,
    ForcingSpec,
    IntegratorConfig,
    SimulationState,
    VelocityField,
    build_basis,
    norm,
    nonlinear_term,
    rhs,
    simulate,
    step,
)
from hydroprim.dynamics import CFLWarning
from hydroprim.field import inner


def mode(basis, comp, k, mn, amp=1.0):
    c = basis.zeros()
    c[comp, k, mn] = amp
    return VelocityField(basis, c)


def state(v, dt=1e-3, t=0.0):
    return SimulationState(t=t, v=v, dt=dt)


class TestConfigTypes:
    def test_integrator_validation(self):
        with pytest.raises(ValueError):
            IntegratorConfig(dt=0)
        with pytest.raises(ValueError):
            IntegratorConfig(scheme="rk4")
        with pytest.raises(ValueError):
            IntegratorConfig(diag_every=0)
        with pytest.raises(ValueError):
            IntegratorConfig(dt=0.3).n_steps(1.0)
        assert IntegratorConfig(dt=1e-3).n_steps(1.0) == 1000

    def test_forcing_validation(self):
        with pytest.raises(ValueError):
            ForcingSpec("steady")
        with pytest.raises(ValueError):
            ForcingSpec("time_periodic", np.zeros(3), period=0)
        with pytest.raises(ValueError):
            ForcingSpec("sometimes")
        with pytest.raises(ValueError):
            ForcingSpec("steady", np.array([np.inf]))

    def test_periodic_profile(self, small_basis):
        f = ForcingSpec("time_periodic", small_basis.zeros() + 1, period=2.0, phase=0.5)
        assert f.profile(0.0) == pytest.approx(math.cos(-0.5))
        assert f.profile(2.0) == pytest.approx(f.profile(0.0))

    def test_state_validation(self, small_basis):
        with pytest.raises(ValueError):
            SimulationState(t=-1.0, v=VelocityField.zeros(small_basis), dt=1e-3)


class TestRightHandSide:
    def test_zero(self, small_basis):
        assert np.all(rhs(state(VelocityField.zeros(small_basis))) == 0)

    def test_single_mode_diffusion(self, small_basis):
        b = small_basis
        for v in (mode(b, 0, 2, 4), mode(b, 0, 0, 3)):
            out = rhs(state(v), nonlinear=False)
            assert np.allclose(out, -b.laplace_eigs * v.coeffs, rtol=0, atol=1e-14)

    def test_barotropic_mode_has_no_vertical_coupling(self, small_basis):
        v = mode(small_basis, 0, 0, 1, 0.7)
        n = nonlinear_term(v)
        assert np.abs(n.coeffs[:, 1:]).max() < 1e-13

    def test_forcing_enters_projected(self, small_basis, rng):
        raw = rng.standard_normal(small_basis.shape)
        f = ForcingSpec("steady", raw)
        out = rhs(state(VelocityField.zeros(small_basis)), f)
        assert np.allclose(out[:, 1:], raw[:, 1:])
        assert np.all(out[:, 0][~small_basis.bar_mask[:, 0]] == 0)

    @settings(max_examples=30, deadline=None)
    @given(seed=st.integers(0, 2**32 - 1), amp=st.floats(1e-3, 10.0))
    def test_cancellation(self, mid_basis, seed, amp):
        v = VelocityField.random(mid_basis, seed, amplitude=amp, decay=0.5)
        pairing = inner(nonlinear_term(v), v)
        assert abs(pairing) <= 1e-10 * norm(v, "V") ** 2

    def test_matches_dense_oracle(self, small_basis, rng):
        b = small_basis
        d = b.domain
        ora = DenseOracle(d.Mx, d.My, d.K, d.h, d.Lx, d.Ly, b.stream_coeffs)
        for _ in range(3):
            v = VelocityField.random(b, rng)
            ours = rhs(state(v))
            theirs = ora.rhs(v.coeffs)
            assert np.linalg.norm(ours - theirs) <= 1e-8 * np.linalg.norm(ours)


class TestStep:
    def test_imex_euler_factor(self, small_basis):
        b = small_basis
        v = mode(b, 1, 1, 2)
        cfg = IntegratorConfig(dt=1e-2, scheme="imex-euler", nonlinear=False)
        new = step(state(v, 1e-2), config=cfg)
        mu = b.laplace_eigs[1, 1, 2]
        assert new.v.coeffs[1, 1, 2] == pytest.approx(1 / (1 + 1e-2 * mu), rel=1e-14)
        assert new.step_index == 1 and new.t == pytest.approx(1e-2)

    def test_cnab2_two_step_order(self):
        # a wide box keeps mu * dt ~ 0.02 so the dt list is in the asymptotic range
        b = build_basis(DomainSpec(Lx=3.0, Ly=3.0, Mx=2, My=2, K=1))
        v = mode(b, 0, 1, 0)
        mu = b.laplace_eigs[0, 1, 0]
        errs = []
        for dt in (1e-2, 5e-3, 2.5e-3):
            cfg = IntegratorConfig(dt=dt, nonlinear=False)
            s = step(step(state(v, dt), config=cfg), config=cfg)
            errs.append(abs(s.v.coeffs[0, 1, 0] - math.exp(-2 * mu * dt)))
        orders = np.log2(np.array(errs[:-1]) / np.array(errs[1:]))
        assert np.all((orders >= 1.8) & (orders <= 2.2))

    def test_nonlinear_self_convergence(self, small_basis):
        v0 = VelocityField.random(small_basis, 7, amplitude=0.5)
        finals = []
        for dt in (4e-3, 2e-3, 1e-3):
            res = simulate(v0, config=IntegratorConfig(dt=dt, T_end=0.08), record=False)
            finals.append(res.state.v)
        ratio = norm(finals[0] - finals[1]) / norm(finals[1] - finals[2])
        assert 3.2 <= ratio <= 4.8


class TestSimulate:
    def test_zero_stays_zero(self, small_basis):
        res = simulate(VelocityField.zeros(small_basis), config=IntegratorConfig(T_end=0.01))
        assert np.all(res.state.v.coeffs == 0)
        assert all(r.l2 == 0 and r.cancellation == 0 for r in res.records)

    def test_records_cadence(self, small_basis, rng):
        v = VelocityField.random(small_basis, rng, amplitude=0.1)
        res = simulate(v, config=IntegratorConfig(T_end=0.02, diag_every=7))
        steps = [r.step for r in res.records]
        assert steps == [0, 7, 14, 20]
        assert np.all(np.diff([r.t for r in res.records]) > 0)

    def test_single_mode_energy(self, small_basis):
        v = mode(small_basis, 0, 1, 0, 0.01)
        res = simulate(v, config=IntegratorConfig(T_end=0.2, diag_every=10))
        l2 = [r.l2 for r in res.records]
        assert np.all(np.diff(l2) < 0)
        from hydroprim import energy_identity_residual

        assert abs(energy_identity_residual(res.records)).max() <= 1e-6

    def test_checkpoints_written(self, small_basis, rng, tmp_path):
        v = VelocityField.random(small_basis, rng, amplitude=0.1)
        res = simulate(v, config=IntegratorConfig(T_end=0.01, checkpoint_every=5),
                       checkpoint_dir=tmp_path, record=False)
        assert len(res.checkpoints) == 3
        assert len(list(tmp_path.glob("*.pehv"))) == 3

    def test_blowup_carries_partial_result(self, small_basis, rng):
        v = VelocityField.random(small_basis, rng, amplitude=1.0)
        cfg = IntegratorConfig(T_end=0.05, blowup=0.5)
        with pytest.raises(BlowUpError) as err:
            simulate(v, config=cfg)
        assert err.value.result.status == "blowup"

    def test_cfl_warning(self, small_basis, rng):
        v = VelocityField.random(small_basis, rng, amplitude=50.0)
        cfg = IntegratorConfig(dt=0.05)
        with pytest.warns(CFLWarning):
            try:
                step(state(v, 0.05), config=cfg)
            except BlowUpError:
                pass

    def test_no_warning_for_small_steps(self, small_basis, rng):
        v = VelocityField.random(small_basis, rng, amplitude=0.1)
        with warnings.catch_warnings():
            warnings.simplefilter("error", CFLWarning)
            step(state(v, 1e-3))

    def test_resolution_refinement(self):
        # same quadrature grid for both resolutions so fields compare pointwise
        coarse = build_basis(DomainSpec(Mx=4, My=4, K=4, Nq_x=41, Nq_y=41, Nq_z=41))
        fine = build_basis(DomainSpec(Mx=8, My=8, K=8))
        cfg = IntegratorConfig(dt=1e-3, T_end=0.1)
        finals = []
        for b in (coarse, fine):
            c = b.zeros()
            c[0, 1, 0] = 0.3              # sin(pi x) sin(pi y) cos(pi (z+h)/2h)
            c[1, 2, 1 * b.domain.My] = -0.2
            finals.append(simulate(VelocityField(b, c), config=cfg, record=False).state.v)
        diff = finals[0].grid() - finals[1].grid()
        err = math.sqrt(np.sum(fine.weights * diff**2))
        assert err <= 1e-4
