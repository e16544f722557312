"""Positions, elevations, slant ranges, and light-time delays for ground
stations and circular-orbit satellites.

Orbits are Keplerian two-body circles (no J2, no drag); Earth is a sphere.
Earth rotation is a flag, off by default so geometry is time-independent in
tests and on for realistic pass simulations.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum
from typing import Optional, Sequence

import numpy as np

R_EARTH = 6_371_000.0          # mean Earth radius [m]
MU_EARTH = 3.986004418e14      # Earth gravitational parameter [m^3/s^2]
C_LIGHT = 299_792_458.0        # [m/s]
SIDEREAL_RATE = 7.2921159e-5   # Earth rotation rate [rad/s]
GEO_ALTITUDE = 3.6e7           # coordination-tier link distance [m]
LEO_ALTITUDE_MIN = 500e3       # [m]
LEO_ALTITUDE_MAX = 1200e3      # [m]
DEFAULT_MIN_ELEVATION = math.radians(10.0)  # optical ground-station horizon mask


class Tier(Enum):
    LEO = "LEO"
    GEO = "GEO"


@dataclass(frozen=True)
class GroundStation:
    """Ground node with a telescope aperture and a pair memory.

    latitude/longitude in radians; aperture_radius in meters;
    memory_coherence_time is the maximum usable age of a stored pair [s].
    """
    id: int
    latitude: float
    longitude: float
    aperture_radius: float
    memory_coherence_time: float = 1.0
    memory_capacity: int = 100_000

    def __post_init__(self):
        if self.id < 0:
            raise ValueError(f"station id must be non-negative, got {self.id}")
        if not -math.pi / 2 <= self.latitude <= math.pi / 2:
            raise ValueError(f"latitude {self.latitude} outside [-pi/2, pi/2]")
        if self.aperture_radius <= 0:
            raise ValueError(f"aperture_radius must be > 0, got {self.aperture_radius}")
        if self.memory_coherence_time <= 0:
            raise ValueError("memory_coherence_time must be > 0")
        if self.memory_capacity < 0:
            raise ValueError("memory_capacity must be >= 0")


@dataclass(frozen=True)
class Satellite:
    """Circular-orbit satellite; angles in radians, altitude in meters."""
    id: int
    tier: Tier
    altitude: float
    aperture_radius: float
    inclination: float = 0.0
    raan: float = 0.0
    phase_at_epoch: float = 0.0

    def __post_init__(self):
        if self.id < 0:
            raise ValueError(f"satellite id must be non-negative, got {self.id}")
        if self.aperture_radius <= 0:
            raise ValueError(f"aperture_radius must be > 0, got {self.aperture_radius}")
        if self.tier is Tier.GEO:
            if not math.isclose(self.altitude, GEO_ALTITUDE, rel_tol=1e-9):
                raise ValueError(
                    f"GEO altitude is fixed at {GEO_ALTITUDE} m, got {self.altitude}")
        elif not LEO_ALTITUDE_MIN <= self.altitude <= LEO_ALTITUDE_MAX:
            raise ValueError(
                f"LEO altitude {self.altitude} outside "
                f"[{LEO_ALTITUDE_MIN}, {LEO_ALTITUDE_MAX}] m")

    @property
    def orbital_radius(self) -> float:
        return R_EARTH + self.altitude

    @property
    def orbital_period(self) -> float:
        return 2.0 * math.pi * math.sqrt(self.orbital_radius**3 / MU_EARTH)


@dataclass(frozen=True)
class LinkGeometry:
    """Instantaneous line-of-sight between two nodes.

    elevation is defined only when one endpoint is a ground station.
    """
    distance: float
    propagation_delay: float
    elevation: Optional[float] = None


def satellite_position(sat: Satellite, t: float) -> np.ndarray:
    """Earth-centered inertial position [m] at time t >= 0.

    Uniform circular motion: in-plane angle from the ascending node is
    phase_at_epoch + sqrt(mu/r^3) * t, rotated by inclination then RAAN.
    """
    if t < 0:
        raise ValueError(f"t must be >= 0, got {t}")
    r = sat.orbital_radius
    theta = sat.phase_at_epoch + math.sqrt(MU_EARTH / r**3) * t
    cos_t, sin_t = math.cos(theta), math.sin(theta)
    cos_i, sin_i = math.cos(sat.inclination), math.sin(sat.inclination)
    cos_o, sin_o = math.cos(sat.raan), math.sin(sat.raan)
    return r * np.array([
        cos_o * cos_t - sin_o * sin_t * cos_i,
        sin_o * cos_t + cos_o * sin_t * cos_i,
        sin_t * sin_i,
    ])


def ground_position(gs: GroundStation, t: float = 0.0,
                    earth_rotation: bool = False) -> np.ndarray:
    """Station position [m] on the spherical Earth surface.

    With earth_rotation the longitude advances at the sidereal rate;
    otherwise the position is time-independent.
    """
    lon = gs.longitude + (SIDEREAL_RATE * t if earth_rotation else 0.0)
    cos_lat = math.cos(gs.latitude)
    return R_EARTH * np.array([
        cos_lat * math.cos(lon),
        cos_lat * math.sin(lon),
        math.sin(gs.latitude),
    ])


def elevation_angle(ground_pos: np.ndarray, target_pos: np.ndarray) -> float:
    """Angle of the line of sight above the local horizon plane [rad]."""
    los = np.asarray(target_pos, dtype=float) - np.asarray(ground_pos, dtype=float)
    los_norm = float(np.linalg.norm(los))
    if los_norm == 0.0:
        raise ValueError("coincident points: elevation undefined")
    up = np.asarray(ground_pos, dtype=float)
    up = up / float(np.linalg.norm(up))
    sin_el = float(np.dot(los, up)) / los_norm
    return math.asin(min(1.0, max(-1.0, sin_el)))


def link_geometry(pos_a: np.ndarray, pos_b: np.ndarray,
                  ground_end: Optional[np.ndarray] = None) -> LinkGeometry:
    """Distance, light-time delay, and (for ground links) elevation.

    ground_end, when given, must equal pos_a or pos_b and marks the station
    endpoint from which elevation is measured.
    """
    a = np.asarray(pos_a, dtype=float)
    b = np.asarray(pos_b, dtype=float)
    d = float(np.linalg.norm(b - a))
    if d == 0.0:
        raise ValueError("coincident points: link geometry undefined")
    elevation = None
    if ground_end is not None:
        g = np.asarray(ground_end, dtype=float)
        if np.array_equal(g, a):
            elevation = elevation_angle(g, b)
        elif np.array_equal(g, b):
            elevation = elevation_angle(g, a)
        else:
            raise ValueError("ground_end must be one of the two endpoints")
    return LinkGeometry(distance=d, propagation_delay=d / C_LIGHT, elevation=elevation)


def select_leo(candidates: Sequence[Satellite], gs_a: GroundStation,
               gs_b: GroundStation, t: float,
               min_elevation: float = DEFAULT_MIN_ELEVATION,
               earth_rotation: bool = False) -> Optional[int]:
    """Pick the relay satellite maximizing min(elevation at a, elevation at b).

    Only candidates visible from both stations (both elevations at or above
    min_elevation) qualify; ties break to the lowest satellite id.  Returns
    the chosen id, or None when no candidate is visible from both.
    """
    for sat in candidates:
        if sat.tier is not Tier.LEO:
            raise ValueError(f"candidate {sat.id} is not LEO tier")
    pos_a = ground_position(gs_a, t, earth_rotation)
    pos_b = ground_position(gs_b, t, earth_rotation)
    best_id = None
    best_score = -math.inf
    for sat in candidates:
        pos_s = satellite_position(sat, t)
        el_a = elevation_angle(pos_a, pos_s)
        el_b = elevation_angle(pos_b, pos_s)
        if el_a < min_elevation or el_b < min_elevation:
            continue
        score = min(el_a, el_b)
        if score > best_score or (score == best_score and
                                  (best_id is None or sat.id < best_id)):
            best_score = score
            best_id = sat.id
    return best_id
