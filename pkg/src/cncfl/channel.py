"""Uplink channel: gain, per-RB rate, transmission delay and energy."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Literal

import numpy as np

from .errors import InvalidInputError


def dbm_per_hz_to_w_per_hz(dbm_hz: float) -> float:
    return 10.0 ** (dbm_hz / 10.0) * 1e-3


@dataclass(frozen=True)
class RBlock:
    index: int
    bandwidth_hz: float
    interference_w: float

    def __post_init__(self) -> None:
        if not self.bandwidth_hz > 0:
            raise InvalidInputError(f"bandwidth_hz must be > 0, got {self.bandwidth_hz}")
        if not self.interference_w >= 0:
            raise InvalidInputError(f"interference_w must be >= 0, got {self.interference_w}")


@dataclass(frozen=True)
class LinkState:
    distance_m: float
    rayleigh_param: float = 1.0
    tx_power_w: float = 0.01
    noise_psd_w_per_hz: float = dbm_per_hz_to_w_per_hz(-174.0)

    def __post_init__(self) -> None:
        for name in ("distance_m", "rayleigh_param", "tx_power_w", "noise_psd_w_per_hz"):
            if not getattr(self, name) > 0:
                raise InvalidInputError(f"{name} must be > 0, got {getattr(self, name)}")


@dataclass(frozen=True)
class FadingModel:
    kind: Literal["deterministic", "rayleigh"] = "deterministic"
    mc_samples: int = 1000

    def __post_init__(self) -> None:
        if self.kind not in ("deterministic", "rayleigh"):
            raise InvalidInputError(f"unknown fading kind {self.kind!r}")
        if self.kind == "rayleigh" and self.mc_samples < 1:
            raise InvalidInputError("rayleigh fading needs mc_samples >= 1")


DETERMINISTIC = FadingModel()


def channel_gain(link: LinkState) -> float:
    return link.rayleigh_param * link.distance_m**-2


def uplink_rate(
    link: LinkState,
    rb: RBlock,
    fading: FadingModel = DETERMINISTIC,
    seed: int | None = None,
    draws: np.ndarray | None = None,
) -> float:
    """Achievable uplink rate in bit/s on ``rb``.

    Rayleigh mode averages the Shannon rate over ``fading.mc_samples`` unit-mean
    exponential power draws; ``draws`` substitutes explicit draws for testing.
    """
    noise = rb.interference_w + rb.bandwidth_hz * link.noise_psd_w_per_hz
    h = channel_gain(link)
    if fading.kind == "deterministic":
        return float(rb.bandwidth_hz * np.log2(1.0 + link.tx_power_w * h / noise))
    if draws is None:
        draws = np.random.default_rng(seed).exponential(1.0, size=fading.mc_samples)
    g = np.asarray(draws, dtype=np.float64)
    return float(rb.bandwidth_hz * np.mean(np.log2(1.0 + link.tx_power_w * g * h / noise)))


def tx_delay(payload_bytes: float, rate_bps: float) -> float:
    if not rate_bps > 0:
        raise InvalidInputError(f"rate must be > 0 bit/s, got {rate_bps}")
    return 8.0 * payload_bytes / rate_bps


def tx_energy(link: LinkState, delay_s: float) -> float:
    if delay_s < 0:
        raise InvalidInputError(f"delay must be >= 0, got {delay_s}")
    return link.tx_power_w * delay_s
