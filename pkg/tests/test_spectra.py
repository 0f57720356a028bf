"""Gap extraction, classification, scaling fits, and edge detection."""

import numpy as np
import pytest

from bosonspec.errors import ConfigError
from bosonspec.spectra import (EdgeConfig, classify, edge_detect, gap_report,
                               gap_scaling_fit, kernel_density,
                               liouvillian_gap, om_gap)


def random_closed_spectrum(rng, n_pairs=8, n_real=5):
    """Zero mode + real decays + conjugate pairs, like a physical spectrum."""
    re = -rng.uniform(0.2, 5.0, n_pairs)
    im = rng.uniform(0.2, 4.0, n_pairs)
    pairs = np.concatenate([re + 1j * im, re - 1j * im])
    reals = -rng.uniform(0.2, 5.0, n_real).astype(complex)
    return np.concatenate([[0.0 + 0.0j], pairs, reals])


class TestLiouvillianGap:
    def test_basic_example(self):
        gap, star = liouvillian_gap([0, -1 + 2j, -1 - 2j, -0.5])
        assert gap == 0.5
        assert star == -0.5 + 0j

    def test_two_point_spectrum(self):
        gap, star = liouvillian_gap([0, -3])
        assert gap == 3.0
        assert star == -3.0 + 0j

    def test_conjugate_pair_prefers_upper_half(self):
        gap, star = liouvillian_gap([0, -0.5 - 1j, -0.5 + 1j])
        assert gap == 0.5
        assert star == -0.5 + 1j

    def test_tie_breaks_by_smaller_imag(self):
        gap, star = liouvillian_gap([0, -0.5 + 2j, -0.5 - 1j, -0.5 + 1j])
        assert gap == 0.5
        assert star == -0.5 + 1j

    def test_all_near_zero_raises(self):
        with pytest.raises(ValueError):
            liouvillian_gap([0.0, 1e-10], eps_zero=1e-8)
        with pytest.raises(ValueError):
            liouvillian_gap([0.0])

    def test_default_eps_scales_with_radius(self):
        # 1e-9 sits below 1e-8 * radius, so it counts as the zero mode
        gap, _ = liouvillian_gap([0, -1e-9, -1.0])
        assert gap == 1.0
        # with a tighter explicit eps_zero it becomes the slowest mode
        gap, _ = liouvillian_gap([0, -1e-9, -1.0], eps_zero=1e-12)
        assert gap == 1e-9

    def test_stable_under_eps_perturbation(self):
        s = random_closed_spectrum(np.random.default_rng(7))
        vals = {liouvillian_gap(s, eps)[0]
                for eps in (1e-10, 1e-8, 1e-6)}
        assert len(vals) == 1

    def test_accepts_eigen_container(self):
        class Holder:
            eigenvalues = np.array([0, -2.0, -1 + 1j, -1 - 1j])

        gap, star = liouvillian_gap(Holder())
        assert gap == 1.0 and star == -1 + 1j


class TestOMGap:
    def test_basic_example(self):
        assert om_gap([0, -1 + 2j, -1 - 2j, -0.5]) == 1.0

    def test_all_real_is_absent(self):
        assert om_gap([0, -1, -2]) is None

    def test_noise_imag_part_filtered(self):
        s = [0, -0.3 + 1e-12j, -2 + 1j]
        assert om_gap(s, eps_im=1e-8) == 2.0

    def test_gap_ordering_invariant(self):
        rng = np.random.default_rng(3)
        for _ in range(20):
            s = random_closed_spectrum(rng)
            gap, _ = liouvillian_gap(s, eps_zero=1e-10)
            om = om_gap(s, eps_zero=1e-10, eps_im=1e-10)
            assert gap <= om

    def test_conjugation_invariance(self):
        rng = np.random.default_rng(11)
        for _ in range(10):
            s = random_closed_spectrum(rng)
            assert liouvillian_gap(np.conj(s), 1e-10)[0] == \
                liouvillian_gap(s, 1e-10)[0]
            assert om_gap(np.conj(s), 1e-10, 1e-10) == \
                om_gap(s, 1e-10, 1e-10)

    def test_thinning_monotonicity(self):
        rng = np.random.default_rng(5)
        s = random_closed_spectrum(rng, n_pairs=12, n_real=8)
        gap0, _ = liouvillian_gap(s, 1e-10)
        om0 = om_gap(s, 1e-10, 1e-10)
        for _ in range(20):
            keep = rng.random(len(s)) < 0.6
            keep[0] = True
            sub = s[keep]
            if np.any(np.abs(sub) > 1e-10):
                assert liouvillian_gap(sub, 1e-10)[0] >= gap0
            om = om_gap(sub, 1e-10, 1e-10)
            if om is not None:
                assert om >= om0


class TestClassify:
    @pytest.mark.parametrize("dl,dom,expected", [
        (0.5, 1.0, 1),
        (0.3, 0.3, 2),
        (1e-5, 0.8, 3),
        (1e-5, 1e-4, 4),
        (0.5, None, 1),
        (1e-5, None, 3),
    ])
    def test_examples(self, dl, dom, expected):
        assert classify(dl, dom, 1e-3) == expected

    def test_stability_under_small_perturbations(self):
        # conjugation-preserving kicks smaller than eps_gap/4 never flip the
        # type when both gaps sit well away from the decision boundaries
        rng = np.random.default_rng(19)
        eps_gap, eps = 0.05, 1e-10
        checked = 0
        for _ in range(60):
            s = random_closed_spectrum(rng)
            dl, _ = liouvillian_gap(s, eps)
            dom = om_gap(s, eps, eps)
            margins = [abs(dl - eps_gap), abs(dom - eps_gap),
                       abs(dom - dl - eps_gap)]
            if min(margins) <= eps_gap / 2:
                continue
            checked += 1
            base = classify(dl, dom, eps_gap)
            for _ in range(5):
                kick = rng.uniform(-1, 1, len(s)) * eps_gap / 4.01
                pert = s + kick * np.where(s.imag > 0, 1 + 1j,
                                           np.where(s.imag < 0, 1 - 1j, 1))
                pert[0] = 0.0
                dl2, _ = liouvillian_gap(pert, eps)
                dom2 = om_gap(pert, eps, eps)
                assert classify(dl2, dom2, eps_gap) == base
        assert checked >= 10


class TestGapReport:
    def test_fields_and_type(self):
        rep = gap_report([0, -1 + 2j, -1 - 2j, -0.5], eps_gap=1e-3)
        assert rep.delta_L == 0.5
        assert rep.delta_OM == 1.0
        assert rep.lambda_star == -0.5 + 0j
        assert rep.spectral_type == 1
        assert rep.eps_gap == 1e-3

    def test_unclassified_without_eps_gap(self):
        rep = gap_report([0, -1, -2])
        assert rep.spectral_type is None
        assert rep.delta_OM is None
        assert rep.eps_zero > 0 and rep.eps_im > 0

    def test_gap_ordering_when_both_present(self):
        rng = np.random.default_rng(23)
        for _ in range(10):
            rep = gap_report(random_closed_spectrum(rng))
            assert rep.delta_L <= rep.delta_OM


class TestScalingFit:
    def test_inverse_square(self):
        data = [(L, 5.0 / L**2) for L in (8, 16, 32, 64)]
        z, pref, r2 = gap_scaling_fit(data)
        assert abs(z - 2.0) < 1e-12
        assert abs(pref - 5.0) < 1e-10
        assert r2 >= 1 - 1e-12

    def test_inverse_linear(self):
        z, pref, r2 = gap_scaling_fit([(L, 3.0 / L) for L in (10, 20, 40)])
        assert abs(z - 1.0) < 1e-12
        assert abs(pref - 3.0) < 1e-10
        assert r2 >= 1 - 1e-12

    def test_noisy_data_reports_r_squared(self):
        rng = np.random.default_rng(2)
        data = [(L, 2.0 / L**2 * np.exp(0.05 * rng.standard_normal()))
                for L in (8, 16, 32, 64, 128)]
        z, _, r2 = gap_scaling_fit(data)
        assert 1.8 < z < 2.2
        assert 0.9 < r2 < 1.0

    def test_too_few_sizes(self):
        with pytest.raises(ValueError):
            gap_scaling_fit([(8, 1.0), (16, 0.25)])
        with pytest.raises(ValueError):
            gap_scaling_fit([(8, 1.0), (8, 1.1), (16, 0.2)])

    def test_nonpositive_gap(self):
        with pytest.raises(ValueError):
            gap_scaling_fit([(8, 1.0), (16, 0.0), (32, 0.1)])
        with pytest.raises(ValueError):
            gap_scaling_fit([(8, 1.0), (16, -0.2), (32, 0.1)])


class TestEdgeDetect:
    def test_isolated_points_density(self):
        d = kernel_density([0.0, 100.0, 200.0], sigma=1.0)
        assert np.allclose(d, 1.0 / (2 * np.pi), atol=1e-12)

    def test_isolated_real_points_all_flagged(self):
        s = np.arange(10) * 100.0 + 0j
        rep = edge_detect(s)
        assert set(rep.edge_indices) == set(range(10))
        assert rep.upper_line is None and rep.lower_line is None
        assert rep.delta_OM_estimate is None
        assert set(rep.real_band) == set(range(10))

    def test_minimum_size(self):
        with pytest.raises(ValueError):
            edge_detect(np.arange(9) * 100.0 + 0j)

    def test_config_validation(self):
        with pytest.raises(ConfigError):
            EdgeConfig(sigma=0.0)

    def test_dense_grid_boundary_band(self):
        # interior of a filled square is denser than its boundary; with a
        # threshold between the two scales only a hull band gets flagged
        xs = 0.1 * np.arange(50)
        gx, gy = np.meshgrid(xs, xs, indexing="ij")
        pts = (gx + 1j * gy).ravel()
        dens = kernel_density(pts, sigma=1.0)
        hull = ((gx < 0.05) | (gx > 4.85) | (gy < 0.05) |
                (gy > 4.85)).ravel()
        deep = ((gx > 1.0) & (gx < 3.9) & (gy > 1.0) & (gy < 3.9)).ravel()
        assert dens[deep].min() > dens[hull].max()
        cut = 0.5 * (dens[deep].min() + dens[hull].max())
        rep = edge_detect(pts, EdgeConfig(sigma=1.0, density_threshold=cut))
        flagged = np.zeros(pts.size, dtype=bool)
        flagged[rep.edge_indices] = True
        assert flagged[hull].all()
        assert not flagged[deep].any()

    def test_branch_line_recovery(self):
        # dense real band plus two sparse collinear wings; only the wings
        # have Im != 0, so each branch line is exact and the crossings sit
        # at the planted gap
        band = -np.arange(0, 8.01, 0.2) + 0j
        im = np.array([1.6, 2.4, 3.2, 4.0])
        upper = -(0.4 + 0.6 * im) + 1j * im
        s = np.concatenate([band, upper, np.conj(upper)])
        rep = edge_detect(s)
        up = set(rep.upper_indices)
        assert {len(band) + k for k in range(4)} <= up
        slope, intercept = rep.upper_line
        assert abs(slope - (-0.6)) < 1e-9
        assert abs(intercept - (-0.4)) < 1e-9
        lo_slope, lo_intercept = rep.lower_line
        assert abs(lo_slope - 0.6) < 1e-9
        assert abs(lo_intercept - (-0.4)) < 1e-9
        assert abs(rep.delta_OM_estimate - 0.4) < 1e-5

    def test_two_wing_points_fit_no_line(self):
        band = -np.arange(0, 8.01, 0.2) + 0j
        im = np.array([2.0, 3.0])
        upper = -(0.4 + 0.6 * im) + 1j * im
        s = np.concatenate([band, upper, np.conj(upper)])
        rep = edge_detect(s)
        assert rep.upper_line is None
        assert rep.delta_OM_estimate is None

    def test_permutation_invariance(self):
        rng = np.random.default_rng(31)
        band = -np.arange(0, 8.01, 0.2) + 0j
        im = np.arange(1.6, 4.01, 0.4)
        upper = -(0.4 + 0.6 * im) + 1j * im
        s = np.concatenate([band, upper, np.conj(upper)])
        rep = edge_detect(s)
        perm = rng.permutation(len(s))
        rep_p = edge_detect(s[perm])
        assert np.array_equal(np.sort_complex(s[rep.edge_indices]),
                              np.sort_complex(s[perm][rep_p.edge_indices]))
        assert np.allclose(rep.upper_line, rep_p.upper_line)
        assert np.allclose(rep.lower_line, rep_p.lower_line)
        assert abs(rep.delta_OM_estimate - rep_p.delta_OM_estimate) < 1e-9

    def test_every_edge_point_below_threshold(self):
        rng = np.random.default_rng(41)
        s = (rng.uniform(-5, 0, 400) + 1j * rng.uniform(-3, 3, 400))
        rep = edge_detect(s)
        assert (rep.densities[rep.edge_indices] <
                rep.config.density_threshold).all()
