"""Link-level channel models: path loss, Rician fading, SINR/SNR, RSSI.

Cellular links combine a power-law path loss gain with per-draw Rician small
scale fading and co-channel interference from the other BSs. WiFi links use a
deterministic log-distance path loss (no fading, no interference).

All power quantities are linear watts internally; conversion to dB/dBm happens
at the reporting boundary.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .topology import ApConfig

# Sentinel floor applied when converting zero power to dBm / dB.
RSSI_FLOOR_DBM = -200.0
DB_FLOOR = -200.0

CELL_MIN_DISTANCE_M = 1.0

# Thermal noise density, -174 dBm/Hz.
DEFAULT_NOISE_DENSITY_W_PER_HZ = 10.0 ** (-174.0 / 10.0) * 1e-3


@dataclass(frozen=True)
class FadingSample:
    """Complex small-scale fading coefficient, normalized to unit mean power."""

    coefficient: complex

    @property
    def power(self) -> float:
        return abs(self.coefficient) ** 2


@dataclass(frozen=True)
class LinkBudget:
    rx_power: float
    pathloss_gain: float
    fading_power: float


@dataclass(frozen=True)
class NoiseModel:
    spectral_density: float            # W/Hz
    bandwidth: float                   # Hz

    def __post_init__(self):
        if self.spectral_density <= 0:
            raise ValueError("spectral_density must be > 0")

    @property
    def noise_power(self) -> float:
        return self.spectral_density * self.bandwidth


def cellular_pathloss_gain(d: float, scale: float, exponent: float) -> float:
    """Power-law attenuation K * d^-alpha, distance clamped at 1 m."""
    if scale <= 0 or exponent <= 0:
        raise ValueError("scale and exponent must be > 0")
    return scale * max(d, CELL_MIN_DISTANCE_M) ** (-exponent)


def wifi_pathloss_db(d: float, cfg: ApConfig) -> float:
    """Log-distance indoor path loss in dB, clamped at the reference distance."""
    if d <= 0:
        raise ValueError("distance must be > 0")
    d_eff = max(d, cfg.ref_distance_m)
    return (cfg.ref_loss_db
            + 10.0 * cfg.indoor_exponent * math.log10(d_eff / cfg.ref_distance_m)
            + sum(cfg.obstacle_losses_db))


def draw_rician(k_factor_db: float, rng: np.random.Generator) -> FadingSample:
    """One Rician fading draw with E[|h|^2] = 1.

    h = sqrt(kappa/(kappa+1)) + sqrt(1/(kappa+1)) * z, with kappa the linear
    K-factor and z a standard circularly-symmetric complex Gaussian.
    """
    kappa = 10.0 ** (k_factor_db / 10.0)
    los = math.sqrt(kappa / (kappa + 1.0))
    sigma = math.sqrt(1.0 / (kappa + 1.0))
    re, im = rng.standard_normal(2) / math.sqrt(2.0)
    return FadingSample(coefficient=los + sigma * complex(re, im))


def draw_rician_powers(k_factor_db: float, n: int,
                       rng: np.random.Generator) -> np.ndarray:
    """Vectorized |h|^2 draws for one link over n steps."""
    kappa = 10.0 ** (k_factor_db / 10.0)
    los = math.sqrt(kappa / (kappa + 1.0))
    sigma = math.sqrt(1.0 / (kappa + 1.0))
    z = rng.standard_normal((n, 2)) / math.sqrt(2.0)
    return (los + sigma * z[:, 0]) ** 2 + (sigma * z[:, 1]) ** 2


def cellular_sinr(serving: LinkBudget, interferers: list[LinkBudget],
                  noise: NoiseModel) -> float:
    """Linear SINR: serving power over summed interference plus noise."""
    denom = sum(lb.rx_power for lb in interferers) + noise.noise_power
    return serving.rx_power / denom


def wifi_snr(serving: LinkBudget, noise: NoiseModel) -> float:
    """Linear SNR for the deterministic WiFi link."""
    return serving.rx_power / noise.noise_power


def rssi_dbm(rx_power: float) -> float:
    """Received power in dBm; zero power floors at the sentinel."""
    if rx_power < 0:
        raise ValueError("rx_power must be >= 0")
    if rx_power == 0.0:
        return RSSI_FLOOR_DBM
    return max(10.0 * math.log10(rx_power / 1e-3), RSSI_FLOOR_DBM)


def to_db(linear: float) -> float:
    """Linear ratio to dB with a floor sentinel for zero."""
    if linear <= 0.0:
        return DB_FLOOR
    return max(10.0 * math.log10(linear), DB_FLOOR)


def from_db(db: float) -> float:
    return 10.0 ** (db / 10.0)
