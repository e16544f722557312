import math

import numpy as np
import pytest

from audit_util import quad_mean_rate
from qsatnet import channel as ch
from qsatnet import rates
from qsatnet.engine import make_stream


class TestRatePerUse:
    def test_no_transmission_no_ebits(self):
        assert rates.rci(0.0) == 0.0

    def test_half_transmittance_is_one_ebit(self):
        assert rates.rci(0.5) == 1.0

    def test_downlink_point(self):
        # -log2(1 - 0.2988) = 0.512102
        assert rates.rci(0.2988) == pytest.approx(0.5121, abs=1e-3)

    def test_saturation_at_unity(self):
        assert rates.rci(1.0) == rates.RATE_SATURATION
        assert rates.rci(1.0 - 2.0**-61) == rates.RATE_SATURATION

    def test_monotone(self):
        etas = np.linspace(0.0, 0.999, 200)
        vals = rates.rci_array(etas)
        assert np.all(np.diff(vals) > 0)

    def test_small_eta_lower_bound(self):
        # rci(eta) >= eta/ln2, tight to ~eta^2/(2 ln2) for small eta
        for eta in (1e-7, 1e-6, 1e-5, 1e-4, 1e-2, 0.3):
            assert rates.rci(eta) >= eta / math.log(2.0) - 1e-15
        for eta in (1e-7, 1e-6, 1e-5):
            assert abs(rates.rci(eta) - eta / math.log(2.0)) < 1e-9

    def test_out_of_range(self):
        with pytest.raises(ValueError):
            rates.rci(-0.1)
        with pytest.raises(ValueError):
            rates.rci(1.1)

    def test_array_matches_scalar(self):
        etas = np.array([0.0, 0.1, 0.5, 0.9, 1.0])
        assert np.allclose(rates.rci_array(etas),
                           [rates.rci(e) for e in etas], rtol=0, atol=0)


class TestMeanRate:
    def test_fixed_channel_is_exact(self):
        model = ch.FixedDiffraction(ch.BeamParams(0.25), 0.25, 200e3)
        assert rates.mean_rate(model, 1) == rates.rci(model.eta)

    def test_fixed_half_eta(self):
        # choose geometry with eta = 0.5: solve rx for w(z)
        beam = ch.BeamParams(0.2)
        w = ch.beam_radius(beam, 1200e3)
        rx = math.sqrt(-w**2 * math.log(0.5) / 2.0)
        model = ch.FixedDiffraction(beam, rx, 1200e3)
        assert rates.mean_rate(model, 1) == pytest.approx(1.0, rel=1e-12)

    def test_b_zero_reduces_to_point_rate(self):
        model = ch.DownlinkGaussianTail(0.2988, 0.0)
        assert rates.mean_rate(model, 100) == pytest.approx(0.5121, abs=1e-3)

    @pytest.mark.parametrize("eta0,b", [(0.3, 0.1), (0.05, 0.1), (0.3, 0.01)])
    def test_monte_carlo_matches_quadrature(self, eta0, b):
        model = ch.DownlinkGaussianTail(eta0, b)
        rng = make_stream(0, "mr-test", int(eta0 * 1000), int(b * 1000))
        samples = rates.rci_array(ch.sample_downlink(model, rng, 1_000_000))
        mc = float(samples.mean())
        rng2 = make_stream(0, "mr-test", int(eta0 * 1000), int(b * 1000))
        assert rates.mean_rate(model, 1_000_000, rng2) == mc
        se = float(samples.std()) / 1000.0
        assert abs(mc - quad_mean_rate(eta0, b)) < 3.0 * se

    def test_uplink_mean_rate(self):
        model = ch.UplinkPointingFade(0.4, 1.0, 0.3)
        r1 = rates.mean_rate(model, 10_000, make_stream(1, "ul"))
        r2 = rates.mean_rate(model, 10_000, make_stream(1, "ul"))
        assert r1 == r2 > 0.0

    def test_uplink_mean_rate_matches_quadrature(self):
        # E[rate(eta_d * exp(-2 r^2/w^2))] over the Rayleigh offset density
        model = ch.UplinkPointingFade(0.4, 1.0, 0.3)
        sigma, w, eta_d = model.sigma_wander, model.beam_radius_at_rx, 0.4
        x, wq = np.polynomial.legendre.leggauss(400)
        hi = 12.0 * sigma
        r = (x + 1.0) / 2.0 * hi
        wr = wq * hi / 2.0
        pdf = r / sigma**2 * np.exp(-(r**2) / (2 * sigma**2))
        quad = float(np.sum(wr * pdf * rates.rci_array(
            eta_d * np.exp(-2 * r**2 / w**2))))
        samples = rates.rci_array(
            ch.uplink_interval_samples(model, make_stream(2, "ulq"), 1_000_000))
        se = float(samples.std()) / 1000.0
        assert abs(float(samples.mean()) - quad) < 3.0 * se
        rng = make_stream(2, "ulq")
        assert rates.mean_rate(model, 1_000_000, rng) == float(samples.mean())

    def test_requires_stream_for_fading(self):
        with pytest.raises(ValueError):
            rates.mean_rate(ch.DownlinkGaussianTail(0.3, 0.1), 10)


class TestSweep:
    def test_single_point_b_zero(self):
        surface = rates.sweep([0.25], [0.25], 200e3, 0.0, n_samples=10, seed=1)
        eta = ch.diffraction_transmittance(ch.BeamParams(0.25), 0.25, 200e3)
        assert surface.mean_rates[0, 0] == rates.rci(eta)

    def test_row_major_points(self):
        surface = rates.sweep([0.1, 0.2], [0.5, 1.0, 1.5], 1200e3, 0.0,
                              n_samples=1, seed=0)
        pts = list(surface.points())
        assert [(p.tx_waist, p.rx_radius) for p in pts] == [
            (0.1, 0.5), (0.1, 1.0), (0.1, 1.5),
            (0.2, 0.5), (0.2, 1.0), (0.2, 1.5)]

    def test_monotone_along_aperture_axes(self):
        # waist-axis monotonicity holds below the collimation optimum
        # w0* = sqrt(z*lambda/pi) (0.77 m at 1200 km); beyond it a larger
        # waist throws a larger spot and the rate falls again
        z = 1200e3
        w_opt = math.sqrt(z * 1.55e-6 / math.pi)
        waists = list(np.linspace(0.1, 0.9 * w_opt, 5))
        rx = list(np.linspace(0.125, 1.25, 5))
        surface = rates.sweep(waists, rx, z, 0.1, n_samples=20_000, seed=3)
        grid = surface.mean_rates
        assert np.all(np.diff(grid, axis=0) >= 0)
        assert np.all(np.diff(grid, axis=1) >= 0)

    def test_monotone_full_grid_at_coordination_distance(self):
        # at 36000 km the optimum sits at 4.2 m, beyond the whole grid
        waists = list(np.linspace(0.1, 1.0, 5))
        rx = list(np.linspace(0.125, 1.25, 5))
        surface = rates.sweep(waists, rx, 3.6e7, 0.1, n_samples=20_000, seed=3)
        assert np.all(np.diff(surface.mean_rates, axis=0) >= 0)
        assert np.all(np.diff(surface.mean_rates, axis=1) >= 0)

    def test_rx_axis_monotone_past_collimation_optimum(self):
        # receiver-axis monotonicity is unconditional
        surface = rates.sweep([0.6, 0.8, 1.0], [0.2, 0.7, 1.25], 1200e3, 0.1,
                              n_samples=20_000, seed=4)
        assert np.all(np.diff(surface.mean_rates, axis=1) >= 0)

    def test_distance_ordering_pointwise(self):
        waists = list(np.linspace(0.1, 1.0, 4))
        rx = list(np.linspace(0.125, 1.25, 4))
        near = rates.sweep(waists, rx, 1200e3, 0.1, n_samples=5000, seed=9)
        far = rates.sweep(waists, rx, 3.6e7, 0.1, n_samples=5000, seed=9)
        assert np.all(near.mean_rates >= far.mean_rates)

    def test_parallel_bit_identical_to_serial(self):
        waists = list(np.linspace(0.1, 1.0, 4))
        rx = list(np.linspace(0.125, 1.25, 4))
        serial = rates.sweep(waists, rx, 1200e3, 0.1, n_samples=10_000, seed=5)
        parallel = rates.sweep(waists, rx, 1200e3, 0.1, n_samples=10_000, seed=5,
                               parallel=True, max_workers=8)
        assert np.array_equal(serial.mean_rates, parallel.mean_rates)

    def test_empty_grid_rejected(self):
        with pytest.raises(ValueError):
            rates.sweep([], [0.5], 1200e3, 0.1)
        with pytest.raises(ValueError):
            rates.sweep([0.5], [0.5], -1.0, 0.1)
