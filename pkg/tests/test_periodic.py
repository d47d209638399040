import math
from dataclasses import replace

import numpy as np
import pytest

from hydroprim import ForcingSpec, IntegratorConfig, VelocityField, norm
from hydroprim.periodic import (
    PeriodicSolveConfig,
    contraction_estimate,
    fixed_point_solve,
    poincare_map,
    random_directions,
    worker_count,
)

LINEAR = IntegratorConfig(dt=1e-3, nonlinear=False)


def mode_force(basis, comp, k, mn, amp, period=None):
    c = basis.zeros()
    c[comp, k, mn] = amp
    if period is None:
        return ForcingSpec("steady", c)
    return ForcingSpec("time_periodic", c, period=period)


def slowest_rate(basis):
    eig = basis.laplace_eigs[basis.bar_mask]
    return eig.min()


class TestConfig:
    def test_validation(self):
        with pytest.raises(ValueError):
            PeriodicSolveConfig(T=0)
        with pytest.raises(ValueError):
            PeriodicSolveConfig(T=1.0, theta=1.5)
        with pytest.raises(ValueError):
            PeriodicSolveConfig(T=1.0, tol=0)
        with pytest.raises(ValueError):
            PeriodicSolveConfig(T=1.0, max_iter=0)

    def test_period_multiple_required(self, small_basis):
        f = ForcingSpec("time_periodic", small_basis.zeros(), period=0.3)
        with pytest.raises(ValueError, match="not a multiple"):
            PeriodicSolveConfig(T=0.5, forcing=f)
        PeriodicSolveConfig(T=0.6, forcing=f)

    def test_T_must_fit_time_step(self):
        with pytest.raises(ValueError):
            PeriodicSolveConfig(T=0.0015, integrator=IntegratorConfig(dt=1e-3))

    def test_missing_start(self):
        with pytest.raises(ValueError):
            fixed_point_solve(PeriodicSolveConfig(T=0.1))

    def test_worker_cap(self, monkeypatch):
        monkeypatch.setenv("HYDROPRIM_THREADS", "1")
        assert worker_count(10) == 1
        monkeypatch.delenv("HYDROPRIM_THREADS")
        assert 1 <= worker_count(3) <= 3


class TestPeriodMap:
    def test_unforced_map_decays(self, small_basis, rng):
        v = VelocityField.random(small_basis, rng, amplitude=0.3)
        out = poincare_map(v, ForcingSpec(), 0.1)
        assert norm(out) < norm(v)

    def test_zero_is_fixed_without_forcing(self, small_basis):
        out = poincare_map(VelocityField.zeros(small_basis), ForcingSpec(), 0.05)
        assert np.all(out.coeffs == 0)

    def test_steady_force_moves_zero(self, small_basis):
        f = mode_force(small_basis, 0, 1, 0, 0.5)
        out = poincare_map(VelocityField.zeros(small_basis), f, 0.05)
        assert norm(out) > 0

    def test_map_is_deterministic(self, small_basis, rng):
        v = VelocityField.random(small_basis, rng, amplitude=0.3)
        f = mode_force(small_basis, 1, 2, 3, 1.0, period=0.05)
        a = poincare_map(v, f, 0.05)
        b = poincare_map(v, f, 0.05)
        assert a.coeffs.tobytes() == b.coeffs.tobytes()


class TestFixedPoint:
    def test_zero_forcing_converges_at_once(self, small_basis):
        cfg = PeriodicSolveConfig(T=0.1, ensemble=0)
        rep = fixed_point_solve(cfg, basis=small_basis)
        assert rep.converged and rep.iterations == 1
        assert rep.residuals == [0.0]
        assert np.all(rep.v_star.coeffs == 0)

    def test_linear_single_mode_closed_form(self, small_basis):
        # a' = -mu a + A cos(w t) has the periodic solution a(0) = A mu / (mu^2 + w^2)
        b = small_basis
        T, A = 0.2, 3.0
        mu = b.laplace_eigs[0, 1, 0]
        w = 2 * math.pi / T
        f = mode_force(b, 0, 1, 0, A, period=T)
        exact = A * mu / (mu**2 + w**2)
        errs = []
        for dt in (1e-3, 5e-4):
            cfg = PeriodicSolveConfig(T=T, forcing=f, tol=1e-12, ensemble=0,
                                      integrator=IntegratorConfig(dt=dt, nonlinear=False))
            rep = fixed_point_solve(cfg, basis=b)
            assert rep.converged
            errs.append(abs(rep.v_star.coeffs[0, 1, 0] - exact) / exact)
            others = rep.v_star.coeffs.copy()
            others[0, 1, 0] = 0
            assert np.abs(others).max() == 0
        # second order in the phase step w * dt
        assert errs[0] <= (w * 1e-3) ** 2
        assert 3.5 <= errs[0] / errs[1] <= 4.5

    def test_linear_response_scales_with_force(self, small_basis, rng):
        b = small_basis
        raw = rng.standard_normal(b.shape)
        sols = []
        for s in (1.0, 2.0):
            f = ForcingSpec("time_periodic", s * raw, period=0.1)
            cfg = PeriodicSolveConfig(T=0.1, forcing=f, integrator=LINEAR, tol=1e-12,
                                      ensemble=0)
            sols.append(fixed_point_solve(cfg, basis=b).v_star)
        assert np.allclose(sols[1].coeffs, 2 * sols[0].coeffs, rtol=0, atol=1e-10)

    def test_nonlinear_solution_is_persistent(self, small_basis):
        b = small_basis
        f = mode_force(b, 0, 1, 0, 2.0, period=0.1)
        cfg = PeriodicSolveConfig(T=0.1, forcing=f, tol=1e-9, ensemble=0)
        rep = fixed_point_solve(cfg, basis=b)
        assert rep.converged
        one = poincare_map(rep.v_star, f, 0.1)
        two = poincare_map(one, f, 0.1)
        assert norm(two - rep.v_star) <= 2 * cfg.tol * (1 + 1e-6)

    def test_anderson_reaches_same_orbit(self, small_basis):
        b = small_basis
        f = mode_force(b, 1, 1, 4, 1.0, period=0.05)
        base = PeriodicSolveConfig(T=0.05, forcing=f, tol=1e-10, ensemble=0)
        plain = fixed_point_solve(base, basis=b)
        mixed = fixed_point_solve(replace(base, anderson=True), basis=b)
        assert plain.converged and mixed.converged
        assert mixed.iterations <= plain.iterations
        assert norm(plain.v_star - mixed.v_star) <= 1e-9

    def test_non_convergence_is_reported(self, small_basis):
        f = mode_force(small_basis, 0, 1, 0, 1.0, period=0.01)
        cfg = PeriodicSolveConfig(T=0.01, forcing=f, max_iter=3, tol=1e-14, ensemble=0)
        rep = fixed_point_solve(cfg, basis=small_basis)
        assert not rep.converged and rep.iterations == 3
        assert 0 < rep.rho < 1
        assert rep.as_dict()["final_residual"] == rep.residuals[-1]


class TestContraction:
    def test_linear_slowest_direction(self, small_basis):
        # the linear map is diagonal, so rho is the largest single-mode factor
        b = small_basis
        T = 0.1
        mu = slowest_rate(b)
        idx = np.argwhere((b.laplace_eigs == mu) & b.bar_mask)[0]
        u = b.zeros()
        u[tuple(idx)] = 1.0
        u = VelocityField(b, u)
        zero = VelocityField.zeros(b)
        rho, _ = contraction_estimate(zero, ForcingSpec(), T, LINEAR, delta=1e-3,
                                      directions=[u])
        assert rho == pytest.approx(math.exp(-mu * T), rel=1e-4)
        rho_rand, ratios = contraction_estimate(zero, ForcingSpec(), T, LINEAR, delta=1e-3,
                                                n=10, seed=3)
        assert len(ratios) == 10
        assert rho_rand <= rho * (1 + 1e-12)

    def test_shorter_period_contracts_less(self, small_basis):
        zero = VelocityField.zeros(small_basis)
        dirs = random_directions(small_basis, 4, seed=1)
        rhos = [contraction_estimate(zero, ForcingSpec(), T, LINEAR, delta=1e-3,
                                     directions=dirs)[0] for T in (0.2, 0.1, 0.05)]
        assert rhos[0] < rhos[1] < rhos[2] < 1

    def test_threads_do_not_change_result(self, small_basis, rng):
        v = VelocityField.random(small_basis, rng, amplitude=0.5)
        f = ForcingSpec()
        a = contraction_estimate(v, f, 0.05, n=4, seed=2, threads=1)
        b = contraction_estimate(v, f, 0.05, n=4, seed=2, threads=4)
        assert a == b

    def test_random_directions(self, small_basis):
        dirs = random_directions(small_basis, 5, seed=9)
        assert all(norm(u) == pytest.approx(1.0) for u in dirs)
        again = random_directions(small_basis, 5, seed=9)
        assert all(np.array_equal(u.coeffs, w.coeffs) for u, w in zip(dirs, again))

    def test_bad_delta(self, small_basis):
        with pytest.raises(ValueError):
            contraction_estimate(VelocityField.zeros(small_basis), ForcingSpec(), 0.01,
                                 delta=-1.0)

    def test_ensemble_runs_after_convergence(self, small_basis):
        f = mode_force(small_basis, 0, 1, 0, 1.0, period=0.05)
        cfg = PeriodicSolveConfig(T=0.05, forcing=f, tol=1e-9, ensemble=3)
        rep = fixed_point_solve(cfg, basis=small_basis)
        assert rep.converged and len(rep.ratios) == 3
        assert 0 < rep.rho < 1
