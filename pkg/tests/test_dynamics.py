"""Modulated states, exact evolution, modulation series, and fits."""

from types import SimpleNamespace

import numpy as np
import pytest

from bosonspec.dynamics import (ModulationSeries, density_modulation,
                                evolve_exact, exact_fock_initial,
                                exact_relaxation, fit_damped_cosine,
                                half_filled_pattern, mf_relaxation,
                                modulated_coherent_chain)
from bosonspec.errors import ConfigError, TruncationError
from bosonspec.fock import (FockBasis, ModelParams, hamiltonian,
                            jump_operators, site_operator)
from bosonspec.linalg import eig_general
from bosonspec.liouville import build_superoperator, mode_expansion, reconstruct
from bosonspec.meanfield import expectations, site_ops


class TestModulatedChain:
    def test_uniform_at_zero_delta(self):
        state = modulated_coherent_chain(0.5, 0.0, 6, d_max=16)
        ops = site_ops(16)
        psi = expectations(state.rho, ops.b)
        assert np.allclose(psi, np.sqrt(0.5), atol=1e-12)

    def test_site_zero_density(self):
        state = modulated_coherent_chain(0.5, 0.1, 8, d_max=20)
        ops = site_ops(20)
        dens = expectations(state.rho, ops.n).real
        assert abs(dens[0] - 0.55) < 1e-9

    def test_initial_modulation_amplitude(self):
        state = modulated_coherent_chain(0.5, 0.1, 8, d_max=20)
        ops = site_ops(20)
        dens = expectations(state.rho, ops.n).real
        stub = SimpleNamespace(times=np.array([0.0]), density=dens[None, :])
        series = density_modulation(stub, 8)
        assert abs(series.delta_n[0] - 0.2) < 1e-9

    def test_depth_validation(self):
        with pytest.raises(ConfigError):
            modulated_coherent_chain(0.5, 1.0, 8)
        with pytest.raises(ConfigError):
            modulated_coherent_chain(0.5, -0.1, 8)


class TestExactInitial:
    def test_projector_properties(self):
        basis = FockBasis.chain_fixed_n(6, 3)
        rho = exact_fock_initial((1, 1, 1, 0, 0, 0), basis)
        assert abs(np.trace(rho) - 1.0) == 0.0
        assert np.array_equal(rho, rho.conj().T)
        evals = np.linalg.eigvalsh(rho)
        assert abs(evals[-1] - 1.0) < 1e-14
        assert np.all(np.abs(evals[:-1]) < 1e-14)

    def test_index_placement(self):
        basis = FockBasis.chain_fixed_n(2, 2)
        rho = exact_fock_initial((2, 0), basis)
        k = basis.index_of((2, 0))
        assert rho[k, k] == 1.0
        assert np.count_nonzero(rho) == 1

    def test_pattern_outside_basis(self):
        basis = FockBasis.chain_fixed_n(2, 2)
        with pytest.raises(ConfigError):
            exact_fock_initial((3, 0), basis)


class TestEvolveExact:
    def test_single_site_loss(self):
        basis = FockBasis.single_site(4)
        n_op = site_operator(basis, 0, "number")
        jump = np.sqrt(0.5) * site_operator(basis, 0, "annihilate")
        rho0 = exact_fock_initial((1,), basis)
        traj = evolve_exact(rho0, 0.0 * n_op, [jump], t_end=2.0, dt=0.005,
                            basis=basis, sample_every=10)
        expected = np.exp(-0.5 * traj.times)
        assert np.max(np.abs(traj.density[:, 0] - expected)) < 1e-8

    def test_model1_number_conservation(self):
        p = ModelParams(J=1.0, U=2.0, kappa=2.0, gamma=1.0, L=4, N=2)
        basis = FockBasis.chain_fixed_n(4, 2)
        H = hamiltonian(basis, p)
        jumps = jump_operators(basis, p, 1)
        rho0 = exact_fock_initial((1, 1, 0, 0), basis)
        traj = evolve_exact(rho0, H, jumps, t_end=50.0, dt=0.005,
                            basis=basis, sample_every=200)
        total = traj.density.sum(axis=1)
        assert np.max(np.abs(total - 2.0)) < 1e-9
        assert traj.trace_drift <= 1e-8
        assert traj.herm_drift <= 1e-8

    def test_uniform_sample_grid(self):
        basis = FockBasis.single_site(3)
        n_op = site_operator(basis, 0, "number")
        jump = site_operator(basis, 0, "annihilate")
        rho0 = exact_fock_initial((1,), basis)
        # sample_every=7 does not divide 200 steps; grid must stay uniform
        traj = evolve_exact(rho0, 0.0 * n_op, [jump], t_end=1.0, dt=0.005,
                            basis=basis, sample_every=7)
        steps = np.diff(traj.times)
        assert np.allclose(steps, steps[0], rtol=1e-12)
        assert len(traj.times) == len(traj.density)

    def test_matches_mode_reconstruction(self):
        p = ModelParams(J=1.0, U=2.0, kappa=2.0, gamma=1.0, L=3, N=2)
        basis = FockBasis.chain_fixed_n(3, 2)
        H = hamiltonian(basis, p)
        jumps = jump_operators(basis, p, 1)
        rho0 = exact_fock_initial((2, 0, 0), basis)
        s = build_superoperator(H, jumps)
        es = eig_general(s.matrix, want_vectors=True)
        coeffs = mode_expansion(es, rho0)
        rho_modes = reconstruct(es, coeffs * np.exp(es.eigenvalues * 1.0),
                                basis.dim)
        traj = evolve_exact(rho0, H, jumps, t_end=1.0, dt=0.005)
        assert np.max(np.abs(traj.final - rho_modes)) < 1e-6

    def test_fourth_order_convergence(self):
        p = ModelParams(J=1.0, U=2.0, kappa=2.0, gamma=1.0, L=3, N=2)
        basis = FockBasis.chain_fixed_n(3, 2)
        H = hamiltonian(basis, p)
        jumps = jump_operators(basis, p, 1)
        rho0 = exact_fock_initial((1, 1, 0), basis)

        def final(dt):
            return evolve_exact(rho0, H, jumps, t_end=1.0, dt=dt).final

        ref = final(0.0025)
        e1 = np.max(np.abs(final(0.02) - ref))
        e2 = np.max(np.abs(final(0.01) - ref))
        assert e1 / e2 >= 8.0

    def test_unstable_step_aborts(self):
        basis = FockBasis.single_site(4)
        n_op = site_operator(basis, 0, "number")
        jump = np.sqrt(8.0) * site_operator(basis, 0, "annihilate")
        rho0 = exact_fock_initial((3,), basis)
        with pytest.raises(TruncationError):
            evolve_exact(rho0, 0.0 * n_op, [jump], t_end=20.0, dt=0.5,
                         sample_every=1)


class TestDensityModulation:
    def test_uniform_cancels(self):
        stub = SimpleNamespace(times=0.1 * np.arange(4),
                               density=np.full((4, 8), 0.7))
        series = density_modulation(stub, 8)
        assert np.max(np.abs(series.delta_n)) < 1e-13

    def test_cosine_profile(self):
        j = np.arange(8)
        dens = 0.5 + 0.1 * np.cos(2 * np.pi * j / 8)
        stub = SimpleNamespace(times=np.array([0.0]), density=dens[None, :])
        series = density_modulation(stub, 8)
        assert abs(series.delta_n[0] - 0.4) < 1e-12

    def test_single_excited_site_phase(self):
        dens = np.zeros((1, 4))
        dens[0, 1] = 1.0
        stub = SimpleNamespace(times=np.array([0.0]), density=dens)
        series = density_modulation(stub, 4)
        assert abs(series.delta_n[0]) < 1e-15

    def test_missing_densities(self):
        stub = SimpleNamespace(times=np.array([0.0]), density=None)
        with pytest.raises(ValueError):
            density_modulation(stub, 4)

    def test_uniform_grid_invariant(self):
        with pytest.raises(ValueError):
            ModulationSeries(times=np.array([0.0, 0.1, 0.3]),
                             delta_n=np.zeros(3))


class TestFitDampedCosine:
    def test_recovers_own_model(self):
        t = np.arange(0.0, 40.0 + 1e-9, 0.1)
        y = 2.0 * np.exp(-0.3 * t) * np.cos(1.5 * t)
        fit = fit_damped_cosine(ModulationSeries(t, y))
        assert abs(fit.A - 2.0) < 1e-6
        assert abs(fit.Gamma - 0.3) < 1e-6
        assert abs(fit.Omega - 1.5) < 1e-6
        assert fit.residual < 1e-8

    def test_pure_decay(self):
        t = np.arange(0.0, 40.0 + 1e-9, 0.1)
        y = np.exp(-0.7 * t)
        fit = fit_damped_cosine(ModulationSeries(t, y))
        assert fit.Omega == 0.0
        assert abs(fit.Gamma - 0.7) < 1e-6
        assert abs(fit.A - 1.0) < 1e-6

    def test_zero_series_degenerates(self):
        t = np.arange(0.0, 10.0, 0.1)
        fit = fit_damped_cosine(ModulationSeries(t, np.zeros_like(t)))
        assert fit.A == 0.0 and fit.Gamma == 0.0 and fit.Omega == 0.0
        assert fit.residual == 0.0

    def test_minimum_samples(self):
        t = np.arange(0.0, 4.0, 0.1)
        with pytest.raises(ValueError):
            fit_damped_cosine(ModulationSeries(t, np.exp(-t)))

    def test_subresolution_frequency_clamped(self):
        t = np.arange(0.0, 40.0 + 1e-9, 0.1)
        y = np.exp(-0.1 * t) * np.cos(0.05 * t)
        fit = fit_damped_cosine(ModulationSeries(t, y))
        assert fit.Omega == 0.0

    def test_window_trim(self):
        t = np.arange(0.0, 40.0 + 1e-9, 0.1)
        y = 2.0 * np.exp(-0.3 * t) * np.cos(1.5 * t)
        fit = fit_damped_cosine(ModulationSeries(t, y), t_min=2.0)
        assert fit.window[0] >= 2.0
        assert abs(fit.Gamma - 0.3) < 1e-6

    def test_half_window_consistency(self):
        rng = np.random.default_rng(8)
        t = np.arange(0.0, 30.0, 0.05)
        y = 1.5 * np.exp(-0.2 * t) * np.cos(2.0 * t) \
            + 1e-3 * rng.standard_normal(t.size)
        full = fit_damped_cosine(ModulationSeries(t, y))
        half = fit_damped_cosine(ModulationSeries(t, y), t_min=15.0)
        assert abs(half.Gamma - full.Gamma) / full.Gamma < 0.1
        assert abs(half.Omega - full.Omega) / full.Omega < 0.1


class TestPipelines:
    def test_half_filled_pattern(self):
        assert half_filled_pattern(6, 3) == (1, 1, 1, 0, 0, 0)
        assert half_filled_pattern(4, 2) == (1, 1, 0, 0)
        with pytest.raises(ConfigError):
            half_filled_pattern(2, 3)

    def test_exact_relaxation_smoke(self):
        p = ModelParams(J=1.0, U=2.0, kappa=2.0, L=4, N=2)
        basis = FockBasis.chain_fixed_n(4, 2)
        series, fit, traj = exact_relaxation(basis, p, 1, t_end=30.0,
                                             dt=0.005, sample_every=20)
        assert series.times.size >= 50
        assert traj.trace_drift <= 1e-8
        assert fit.Gamma > 0.0
        assert fit.window[0] >= 1.0   # 2/kappa transient trim

    def test_mf_relaxation_dichotomy(self):
        base = dict(J=1.0, kappa=1.0, L=4, d_max=8)
        osc = ModelParams(U=2.0, gamma=1.0, **base)
        _, fit_osc, _ = mf_relaxation(osc, 1, nbar=0.5, delta=0.05,
                                      t_end=30.0)
        assert fit_osc.Omega > 0.01
        norm = ModelParams(U=4.0, gamma=2.0, **base)
        _, fit_norm, _ = mf_relaxation(norm, 1, nbar=0.5, delta=0.05,
                                       t_end=30.0)
        assert fit_norm.Omega <= 0.01
        assert fit_norm.Gamma > 0.0
