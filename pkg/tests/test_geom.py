import math
import random

import numpy as np
import pytest

from audit_util import brute_force_select
from qsatnet import geom
from qsatnet.geom import (GroundStation, Satellite, Tier, elevation_angle,
                          ground_position, link_geometry, satellite_position,
                          select_leo)


def leo(sat_id, altitude=1200e3, incl=0.0, raan=0.0, phase=0.0, aperture=0.2):
    return Satellite(sat_id, Tier.LEO, altitude, aperture, incl, raan, phase)


def station(st_id, lat_deg, lon_deg, aperture=1.25):
    return GroundStation(st_id, math.radians(lat_deg), math.radians(lon_deg),
                         aperture)


class TestSatellitePosition:
    def test_epoch_on_reference_axis(self):
        pos = satellite_position(leo(1), 0.0)
        assert pos == pytest.approx([7_571_000.0, 0.0, 0.0])

    def test_orbital_period_value(self):
        # 2*pi*sqrt(a^3/mu) evaluated independently: 6556.03 s
        assert leo(1).orbital_period == pytest.approx(6556.0, abs=1.0)

    def test_periodicity(self):
        sat = leo(1, incl=0.7, raan=0.3, phase=1.1)
        p0 = satellite_position(sat, 0.0)
        p1 = satellite_position(sat, sat.orbital_period)
        assert np.linalg.norm(p1 - p0) / np.linalg.norm(p0) < 1e-6

    def test_radius_conserved(self):
        sat = leo(1, altitude=800e3, incl=0.9, raan=2.0, phase=0.4)
        r0 = sat.orbital_radius
        for t in np.linspace(0.0, 3 * sat.orbital_period, 17):
            r = np.linalg.norm(satellite_position(sat, t))
            assert abs(r - r0) / r0 < 1e-9

    def test_negative_time_rejected(self):
        with pytest.raises(ValueError):
            satellite_position(leo(1), -1.0)

    def test_inclined_orbit_leaves_plane(self):
        sat = leo(1, incl=math.radians(30), phase=math.radians(90))
        pos = satellite_position(sat, 0.0)
        assert pos[2] == pytest.approx(sat.orbital_radius * math.sin(math.radians(30)))


class TestGroundPosition:
    def test_equator_prime_meridian(self):
        pos = ground_position(station(1, 0, 0))
        assert pos == pytest.approx([6_371_000.0, 0.0, 0.0])

    def test_pole_invariant_under_rotation(self):
        gs = station(1, 90, 0)
        for t in (0.0, 1e3, 1e5):
            assert ground_position(gs, t, earth_rotation=True) == pytest.approx(
                [0.0, 0.0, 6_371_000.0], abs=1e-6)

    def test_sidereal_day_closure(self):
        gs = station(1, 0, 0)
        sidereal_day = 2 * math.pi / 7.2921159e-5   # 86164.1 s
        p = ground_position(gs, sidereal_day, earth_rotation=True)
        assert np.linalg.norm(p - ground_position(gs, 0.0)) < 1.0

    def test_rotation_off_is_static(self):
        gs = station(1, 30, 40)
        assert np.array_equal(ground_position(gs, 0.0), ground_position(gs, 9e4))


class TestLinkGeometry:
    def test_satellite_directly_overhead(self):
        ground = np.array([geom.R_EARTH, 0.0, 0.0])
        sat = np.array([geom.R_EARTH + 1200e3, 0.0, 0.0])
        link = link_geometry(ground, sat, ground_end=ground)
        assert link.distance == pytest.approx(1200e3)
        assert link.elevation == pytest.approx(math.pi / 2)

    def test_geo_slant_delay(self):
        # 3.6e7 m / c = 0.1200831 s
        ground = np.array([geom.R_EARTH, 0.0, 0.0])
        sat = np.array([geom.R_EARTH + 3.6e7, 0.0, 0.0])
        link = link_geometry(ground, sat)
        assert link.propagation_delay == pytest.approx(0.12008, abs=1e-5)

    def test_intersatellite_has_no_elevation(self):
        a = np.array([7e6, 0.0, 0.0])
        b = np.array([7e6, 200e3, 0.0])
        link = link_geometry(a, b)
        assert link.distance == pytest.approx(200e3)
        assert link.elevation is None

    def test_distance_symmetry_exact(self):
        rng = random.Random(77)
        for _ in range(50):
            a = np.array([rng.uniform(-1e7, 1e7) for _ in range(3)])
            b = np.array([rng.uniform(-1e7, 1e7) for _ in range(3)])
            if np.array_equal(a, b):
                continue
            assert link_geometry(a, b).distance == link_geometry(b, a).distance

    def test_coincident_points_rejected(self):
        p = np.array([7e6, 0.0, 0.0])
        with pytest.raises(ValueError):
            link_geometry(p, p.copy())

    def test_elevation_bounded_and_zenith_iff_colinear(self):
        ground = ground_position(station(1, 10, 20))
        rng = random.Random(5)
        for _ in range(100):
            target = np.array([rng.uniform(-1e7, 1e7) for _ in range(3)])
            if np.linalg.norm(target - ground) == 0:
                continue
            el = elevation_angle(ground, target)
            assert el <= math.pi / 2
        assert elevation_angle(ground, ground * 2.5) == pytest.approx(math.pi / 2)


class TestValidation:
    def test_latitude_bounds(self):
        with pytest.raises(ValueError):
            GroundStation(1, math.pi, 0.0, 1.0)

    def test_aperture_positive(self):
        with pytest.raises(ValueError):
            GroundStation(1, 0.0, 0.0, 0.0)

    def test_geo_altitude_fixed(self):
        with pytest.raises(ValueError):
            Satellite(1, Tier.GEO, 2e7, 0.2)
        Satellite(1, Tier.GEO, geom.GEO_ALTITUDE, 0.2)

    def test_leo_altitude_bounds(self):
        with pytest.raises(ValueError):
            Satellite(1, Tier.LEO, 300e3, 0.2)
        with pytest.raises(ValueError):
            Satellite(1, Tier.LEO, 2000e3, 0.2)


class TestSelectLeo:
    def test_single_visible_candidate(self):
        gs_a = station(1, 0, -2)
        gs_b = station(2, 0, 2)
        sat = leo(11, phase=0.0)
        assert select_leo([sat], gs_a, gs_b, 0.0) == 11

    def test_only_one_above_threshold(self):
        gs_a = station(1, 0, -2)
        gs_b = station(2, 0, 2)
        overhead = leo(30, phase=0.0)
        far = leo(20, phase=math.radians(40))
        assert select_leo([far, overhead], gs_a, gs_b, 0.0) == 30

    def test_none_when_nothing_visible(self):
        gs_a = station(1, 0, -2)
        gs_b = station(2, 0, 2)
        hidden = leo(5, phase=math.radians(180))
        assert select_leo([hidden], gs_a, gs_b, 0.0) is None

    def test_non_leo_candidate_rejected(self):
        gs_a = station(1, 0, -2)
        gs_b = station(2, 0, 2)
        geo_sat = Satellite(9, Tier.GEO, geom.GEO_ALTITUDE, 0.2)
        with pytest.raises(ValueError):
            select_leo([geo_sat], gs_a, gs_b, 0.0)

    def test_matches_brute_force_scan(self):
        rng = random.Random(321)
        gs_a = station(1, 5, -3)
        gs_b = station(2, -2, 6)
        pos_a = ground_position(gs_a)
        pos_b = ground_position(gs_b)
        for trial in range(40):
            sats = [leo(i, altitude=rng.uniform(500e3, 1200e3),
                        incl=rng.uniform(0, math.pi / 3),
                        raan=rng.uniform(0, 2 * math.pi),
                        phase=rng.uniform(0, 2 * math.pi))
                    for i in range(5)]
            t = rng.uniform(0.0, 7000.0)
            expected = brute_force_select(
                sats, ground_position(gs_a, t), ground_position(gs_b, t),
                lambda s: satellite_position(s, t), geom.DEFAULT_MIN_ELEVATION)
            assert select_leo(sats, gs_a, gs_b, t) == expected

    def test_permutation_invariance(self):
        rng = random.Random(99)
        gs_a = station(1, 0, -3)
        gs_b = station(2, 0, 3)
        sats = [leo(i, phase=rng.uniform(-0.3, 0.3)) for i in range(6)]
        baseline = select_leo(sats, gs_a, gs_b, 100.0)
        for _ in range(10):
            shuffled = sats[:]
            rng.shuffle(shuffled)
            assert select_leo(shuffled, gs_a, gs_b, 100.0) == baseline

    def test_tie_breaks_to_lowest_id(self):
        gs_a = station(1, 0, -2)
        gs_b = station(2, 0, 2)
        # identical orbits, distinct ids: scores tie exactly
        twins = [leo(14, phase=0.0), leo(3, phase=0.0), leo(8, phase=0.0)]
        assert select_leo(twins, gs_a, gs_b, 0.0) == 3
