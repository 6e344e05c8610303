"""Synthetic FTM burst measurements and the raw timestamp arithmetic.

A burst exchanges ``burst_size`` packet pairs and reports the mean and
sample standard deviation of the per-packet distances plus the mean RSS.
Condition-dependent behavior: LOS packets carry zero-mean noise; NLOS
bursts additionally carry a non-negative distance bias drawn once per burst
and a fixed extra RSS loss. Whether a burst succeeds at all is a
distance-dependent coin flip tied to how far the deterministic RSS sits
above the receiver floor.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Optional

import numpy as np

__all__ = [
    "BANDWIDTH_PRESETS",
    "ChannelModel",
    "FtmMeasurement",
    "MeasurementError",
    "PathLossParams",
    "RttResult",
    "SPEED_OF_LIGHT",
    "channel_from_config",
    "deterministic_rss",
    "rss_from_distance",
    "rtt_from_timestamps",
    "simulate_burst",
    "success_probability",
]

SPEED_OF_LIGHT = 299_792_458.0  # m/s

# Width (dB) of the success roll-off around the RSS floor; fixed shape
# parameter of the logistic success model.
_SUCCESS_WIDTH_DB = 2.0


class MeasurementError(ValueError):
    """A measurement is physically invalid (e.g. negative round-trip time)."""


@dataclass(frozen=True)
class FtmMeasurement:
    """One completed burst: mean distance, distance std, mean RSS."""

    d_ftm: float  # meters, mean of per-packet distances (>= 0)
    s_ftm: float  # meters, sample std of per-packet distances (>= 0)
    p_ftm: float  # dBm, mean RSS over the burst


@dataclass(frozen=True)
class RttResult:
    tau_ns: float
    one_way_distance_m: float


@dataclass(frozen=True)
class PathLossParams:
    """Log-distance path loss: RSS p0 at reference distance d0, exponent eta."""

    d0: float = 1.0
    p0: float = -20.6
    eta: float = 4.0

    def __post_init__(self):
        if not (self.d0 > 0 and self.eta > 0):
            raise ValueError("path loss requires d0 > 0 and eta > 0")


@dataclass(frozen=True)
class ChannelModel:
    """Everything the burst simulator needs to know about the radio channel."""

    burst_size: int = 8
    los_noise_std: float = 1.0  # m, per-packet distance noise
    nlos_bias_mean: float = 4.4  # m, per-burst NLOS distance bias
    nlos_bias_std: float = 1.5  # m
    pathloss: PathLossParams = PathLossParams()
    shadowing_std: float = 3.0  # dB, per-packet RSS spread
    nlos_extra_loss: float = 6.0  # dB, additional attenuation through walls
    success_floor_dbm: float = -85.0  # receiver floor driving burst failures
    los_success_rate: float = 0.95

    def __post_init__(self):
        if self.burst_size < 1:
            raise ValueError("burst_size must be >= 1")
        for name in ("los_noise_std", "nlos_bias_std", "shadowing_std"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be >= 0")
        if not 0.0 <= self.los_success_rate <= 1.0:
            raise ValueError("los_success_rate must be a probability")


# The three supported transmission bandwidths differ only in the NLOS bias
# magnitude; everything else shares the same parameters.
BANDWIDTH_PRESETS = {
    "bw20": ChannelModel(nlos_bias_mean=6.6),
    "bw40": ChannelModel(nlos_bias_mean=4.4),
    "bw80": ChannelModel(nlos_bias_mean=3.4),
}


def channel_from_config(overrides: dict, bandwidth: str = "bw40") -> ChannelModel:
    """Bandwidth preset with optional scenario-file overrides applied.

    ``overrides`` may set any ChannelModel field; ``pathloss`` is given as
    ``{"d0": ..., "p0": ..., "eta": ...}``.
    """
    if bandwidth not in BANDWIDTH_PRESETS:
        raise ValueError(f"unknown bandwidth preset {bandwidth!r}")
    model = BANDWIDTH_PRESETS[bandwidth]
    if not overrides:
        return model
    kwargs = dict(overrides)
    if "pathloss" in kwargs:
        kwargs["pathloss"] = PathLossParams(**kwargs["pathloss"])
    return replace(model, **kwargs)


def rtt_from_timestamps(t1: float, t2: float, t3: float, t4: float) -> RttResult:
    """Round-trip time from the four burst timestamps (nanoseconds).

    tau = (t4 - t1) - (t3 - t2). The protocol measures the round trip; the
    reported distance is one-way, i.e. tau * c / 2.
    """
    if t4 < t1 or t3 < t2:
        raise MeasurementError("timestamps out of order: need t4 >= t1, t3 >= t2")
    tau = (t4 - t1) - (t3 - t2)
    if tau < 0:
        raise MeasurementError(f"negative round-trip time {tau} ns")
    return RttResult(tau_ns=tau, one_way_distance_m=tau * 1e-9 * SPEED_OF_LIGHT / 2.0)


def deterministic_rss(d: float, los: bool, model: ChannelModel) -> float:
    """Log-distance RSS without shadowing; NLOS subtracts the extra loss."""
    pl = model.pathloss
    d_eff = d if d > 0 else pl.d0  # distances at/below zero clamp to d0
    p = pl.p0 - 10.0 * pl.eta * math.log10(d_eff / pl.d0)
    if not los:
        p -= model.nlos_extra_loss
    return p


def rss_from_distance(
    d: float,
    los: bool,
    model: ChannelModel,
    rng: Optional[np.random.Generator] = None,
) -> float:
    """One RSS sample: deterministic log-distance value plus shadowing."""
    p = deterministic_rss(d, los, model)
    if rng is not None and model.shadowing_std > 0:
        p += rng.normal(0.0, model.shadowing_std)
    return p


def success_probability(d: float, los: bool, model: ChannelModel) -> float:
    """Probability that a ranging burst completes at distance ``d``.

    LOS bursts succeed at the flat ``los_success_rate``. NLOS success rolls
    off logistically as the deterministic RSS approaches the receiver
    floor, crossing 0.5 where they meet, and is capped at the LOS rate so
    short NLOS links behave like LOS ones.
    """
    if los:
        return model.los_success_rate
    margin = deterministic_rss(d, False, model) - model.success_floor_dbm
    p = 1.0 / (1.0 + math.exp(-margin / _SUCCESS_WIDTH_DB))
    return min(p, model.los_success_rate)


def simulate_burst(
    true_d: float,
    los: bool,
    model: ChannelModel,
    rng: np.random.Generator,
) -> Optional[FtmMeasurement]:
    """Simulate one ranging burst; returns None when the burst fails.

    Draw order (fixed for reproducibility): success coin, NLOS bias (one
    per burst, clamped non-negative), per-packet distance noise, per-packet
    RSS shadowing.
    """
    if rng.random() >= success_probability(true_d, los, model):
        return None
    b = model.burst_size
    bias = 0.0
    if not los:
        bias = max(0.0, rng.normal(model.nlos_bias_mean, model.nlos_bias_std))
    packets = true_d + bias + rng.normal(0.0, model.los_noise_std, size=b)
    d_ftm = max(0.0, float(np.mean(packets)))
    s_ftm = float(np.std(packets, ddof=1)) if b > 1 else 0.0
    rss = deterministic_rss(true_d, los, model) + rng.normal(
        0.0, model.shadowing_std, size=b
    )
    return FtmMeasurement(d_ftm=d_ftm, s_ftm=s_ftm, p_ftm=float(np.mean(rss)))
