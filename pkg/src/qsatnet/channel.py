"""Optical transmittance models for the quantum links.

Three variants cover the link classes:

* FixedDiffraction - vacuum Gaussian-beam spreading truncated by a circular
  receive aperture; used for satellite-satellite links and as the static
  part of every budget.
* DownlinkGaussianTail - a fixed diffraction floor eta0 scaled by
  clamp(1 - |G|, 0, 1) with G ~ Normal(0, b^2); b -> 0 recovers the fixed
  channel.
* UplinkPointingFade - block fading from beam wander: within each coherence
  interval the beam centroid sits at a Rayleigh-distributed radial offset,
  attenuating the diffraction-limited transmittance by exp(-2 r^2 / w^2).

Classical radio links are modeled lossless with propagation delay only, so
they need no transmittance model here.

Transmittance values (eta) are plain floats in [0, 1]; loss in dB is
-10*log10(eta).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Union

import numpy as np

from .engine import RngStream

DEFAULT_WAVELENGTH = 1.55e-6      # telecom band [m]
DEFAULT_FADE_COHERENCE = 1e-3     # uplink beam-wander coherence time [s]


class InfeasibleTargetError(ValueError):
    """Requested mean loss is below what pure diffraction already costs."""


def _check_eta(eta: float, name: str = "eta") -> float:
    if not 0.0 <= eta <= 1.0:
        raise ValueError(f"{name} must be in [0, 1], got {eta}")
    return float(eta)


@dataclass(frozen=True)
class BeamParams:
    """Gaussian beam launched with waist w0 (= transmit aperture radius)."""
    w0: float
    wavelength: float = DEFAULT_WAVELENGTH

    def __post_init__(self):
        if self.w0 <= 0:
            raise ValueError(f"w0 must be > 0, got {self.w0}")
        if self.wavelength <= 0:
            raise ValueError(f"wavelength must be > 0, got {self.wavelength}")

    @property
    def rayleigh_range(self) -> float:
        return math.pi * self.w0**2 / self.wavelength


def beam_radius(beam: BeamParams, z: float) -> float:
    """Beam radius w(z) = w0 * sqrt(1 + (z*lambda/(pi*w0^2))^2), z >= 0."""
    if z < 0:
        raise ValueError(f"z must be >= 0, got {z}")
    return beam.w0 * math.sqrt(1.0 + (z / beam.rayleigh_range) ** 2)


def diffraction_transmittance(beam: BeamParams, rx_radius: float, z: float) -> float:
    """Power fraction of a centered Gaussian beam through a circular aperture.

    eta = 1 - exp(-2 * rx_radius^2 / w(z)^2).  Strictly decreasing in z and
    strictly increasing in rx_radius.
    """
    if rx_radius <= 0:
        raise ValueError(f"rx_radius must be > 0, got {rx_radius}")
    if z <= 0:
        raise ValueError(f"z must be > 0, got {z}")
    w = beam_radius(beam, z)
    return 1.0 - math.exp(-2.0 * rx_radius**2 / w**2)


def db_from_eta(eta: float) -> float:
    """Loss in dB; eta = 0 maps to +inf (infinite loss, not an error)."""
    _check_eta(eta)
    if eta == 0.0:
        return math.inf
    return -10.0 * math.log10(eta)


def eta_from_db(loss_db: float) -> float:
    if loss_db < 0:
        raise ValueError(f"loss must be >= 0 dB, got {loss_db}")
    return 10.0 ** (-loss_db / 10.0)


@dataclass(frozen=True)
class FixedDiffraction:
    """Deterministic channel: transmittance set by diffraction alone."""
    beam: BeamParams
    rx_radius: float
    distance: float

    def __post_init__(self):
        if self.rx_radius <= 0 or self.distance <= 0:
            raise ValueError("rx_radius and distance must be > 0")

    @property
    def eta(self) -> float:
        return diffraction_transmittance(self.beam, self.rx_radius, self.distance)


@dataclass(frozen=True)
class DownlinkGaussianTail:
    """Fixed loss eta0 with a Gaussian-tail deviation of scale b."""
    eta0: float
    b: float

    def __post_init__(self):
        _check_eta(self.eta0, "eta0")
        if self.b < 0:
            raise ValueError(f"b must be >= 0, got {self.b}")


@dataclass(frozen=True)
class UplinkPointingFade:
    """Beam-wander fading: Rayleigh(sigma_wander) centroid offset per interval."""
    eta_diffraction: float
    beam_radius_at_rx: float
    sigma_wander: float
    fade_coherence_time: float = DEFAULT_FADE_COHERENCE

    def __post_init__(self):
        _check_eta(self.eta_diffraction, "eta_diffraction")
        if self.beam_radius_at_rx <= 0:
            raise ValueError("beam_radius_at_rx must be > 0")
        if self.sigma_wander < 0:
            raise ValueError(f"sigma_wander must be >= 0, got {self.sigma_wander}")
        if self.fade_coherence_time <= 0:
            raise ValueError("fade_coherence_time must be > 0")


OpticalChannelModel = Union[FixedDiffraction, DownlinkGaussianTail, UplinkPointingFade]


def sample_downlink(model: DownlinkGaussianTail, rng: RngStream,
                    n: Optional[int] = None):
    """Draw eta = eta0 * clamp(1 - |G|, 0, 1), G ~ Normal(0, b^2).

    b = 0 returns eta0 exactly without consuming the stream.  Scalar for
    n=None, else an ndarray of n independent draws.
    """
    if model.b == 0.0:
        return model.eta0 if n is None else np.full(int(n), model.eta0)
    g = rng.standard_normal(n)
    eta = model.eta0 * np.clip(1.0 - np.abs(g) * model.b, 0.0, 1.0)
    return float(eta) if n is None else eta


def _rayleigh_from_uniform(u, sigma: float):
    # inverse CDF; u in [0, 1) keeps the log argument in (0, 1]
    return sigma * np.sqrt(-2.0 * np.log1p(-u))


def _pointing_eta(model: UplinkPointingFade, r):
    return model.eta_diffraction * np.exp(-2.0 * r**2 / model.beam_radius_at_rx**2)


def fade_interval(model: UplinkPointingFade, t: float) -> int:
    """Index k of the coherence interval [k*tau, (k+1)*tau) containing t."""
    return int(math.floor(t / model.fade_coherence_time))


def sample_uplink(model: UplinkPointingFade, rng: RngStream, t: float) -> float:
    """Block-fading transmittance at time t.

    The value is constant within each coherence interval and is a pure
    function of (stream key, interval index), so any two calls landing in
    the same interval agree exactly.
    """
    if model.sigma_wander == 0.0:
        return model.eta_diffraction
    u = rng.uniform_at(fade_interval(model, t))
    r = _rayleigh_from_uniform(u, model.sigma_wander)
    return float(_pointing_eta(model, r))


def uplink_interval_samples(model: UplinkPointingFade, rng: RngStream,
                            n: int) -> np.ndarray:
    """Transmittances of coherence intervals 0 .. n-1 (vectorized).

    Matches sample_uplink at t = k * fade_coherence_time for each k.
    """
    if model.sigma_wander == 0.0:
        return np.full(int(n), model.eta_diffraction)
    u = rng.uniforms_at(0, int(n))
    return _pointing_eta(model, _rayleigh_from_uniform(u, model.sigma_wander))


def mean_uplink_transmittance(model: UplinkPointingFade) -> float:
    """Closed-form E[eta] = eta_diffraction * gamma / (gamma + 1)
    with gamma = beam_radius_at_rx^2 / (4 * sigma_wander^2)."""
    if model.sigma_wander == 0.0:
        return model.eta_diffraction
    gamma = model.beam_radius_at_rx**2 / (4.0 * model.sigma_wander**2)
    return model.eta_diffraction * gamma / (gamma + 1.0)


def calibrate_uplink_sigma(eta_diffraction: float, beam_radius_at_rx: float,
                           target_mean_loss_db: float) -> float:
    """Beam-wander jitter sigma that makes the mean loss hit a target budget.

    Bisects sigma against the closed-form mean loss (monotone increasing in
    sigma) until the bracket collapses; the returned sigma reproduces the
    target well inside 0.01 dB.  Raises InfeasibleTargetError when the
    target is below the pure-diffraction loss.
    """
    _check_eta(eta_diffraction, "eta_diffraction")
    if beam_radius_at_rx <= 0:
        raise ValueError("beam_radius_at_rx must be > 0")
    floor_db = db_from_eta(eta_diffraction)
    if target_mean_loss_db < floor_db:
        raise InfeasibleTargetError(
            f"target {target_mean_loss_db} dB is below the diffraction-only "
            f"loss {floor_db:.6f} dB")
    if target_mean_loss_db == floor_db:
        return 0.0

    def loss_at(sigma: float) -> float:
        return db_from_eta(mean_uplink_transmittance(UplinkPointingFade(
            eta_diffraction, beam_radius_at_rx, sigma)))

    lo = 0.0
    hi = beam_radius_at_rx
    while loss_at(hi) < target_mean_loss_db:
        hi *= 2.0
        if hi > 1e12 * beam_radius_at_rx:
            raise InfeasibleTargetError(
                f"target {target_mean_loss_db} dB unreachable by wander alone")
    while hi - lo > 1e-14 * hi:
        mid = 0.5 * (lo + hi)
        if loss_at(mid) < target_mean_loss_db:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)
