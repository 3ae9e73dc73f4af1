"""Scenario configuration shared by every module."""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass
from typing import Sequence

POWER_CONVENTIONS = ("total-budget", "per-slot")
NLOS_CONVENTIONS = ("inverse-square-distance", "inverse-distance")
RATE_NORMALIZATIONS = ("per-slot", "per-frame")
PILOT_POWER_MODES = ("mean-data", "in-budget")


class ConfigError(ValueError):
    """Raised when a configuration value is invalid."""


def dbm_to_mw(dbm: float) -> float:
    return 10.0 ** (dbm / 10.0)


def db_to_linear(db: float) -> float:
    return 10.0 ** (db / 10.0)


@dataclass(frozen=True)
class SystemConfig:
    """All parameters of one downlink scenario.

    Powers are in dBm, the Rician factor in dB, angles in radians and
    distances in meters.  ``users_per_group`` is either a single count used
    for every group or one count per group.
    """

    n_antennas: int = 8
    n_groups: int = 6
    users_per_group: int | tuple[int, ...] = 24
    tx_power_dbm: float = 3.0
    noise_dbm: float = -90.0
    rician_kappa_db: float = 15.0
    element_phase_const: float = math.pi
    aod_range: tuple[float, float] = (-math.pi / 2, math.pi / 2)
    distance_range: tuple[float, float] = (50.0, 100.0)
    n_trials: int = 500
    master_seed: int = 0
    power_convention: str = "total-budget"
    nlos_variance_convention: str = "inverse-square-distance"
    rate_normalization: str = "per-slot"
    pilot_power: str = "mean-data"
    csir_error_var: float = 0.0
    kappa_db_cap: float = 300.0
    cf_mgm: bool = True
    sca_restarts: int = 5
    sca_max_iters: int = 500
    sca_tau: float = 0.1

    def __post_init__(self):
        if isinstance(self.users_per_group, Sequence):
            object.__setattr__(self, "users_per_group", tuple(int(k) for k in self.users_per_group))
        object.__setattr__(self, "aod_range", tuple(float(v) for v in self.aod_range))
        object.__setattr__(self, "distance_range", tuple(float(v) for v in self.distance_range))
        self.validate()

    def validate(self) -> None:
        if self.n_antennas < 1 or self.n_groups < 1:
            raise ConfigError("n_antennas and n_groups must be positive")
        if self.n_antennas < self.n_groups:
            raise ConfigError(f"n_antennas={self.n_antennas} must be >= n_groups={self.n_groups}")
        if self.cf_mgm and self.n_antennas != self.n_groups + 2:
            raise ConfigError(
                f"CF-MGM needs n_antennas == n_groups + 2, got {self.n_antennas} and {self.n_groups}"
            )
        sizes = self.group_sizes
        if len(sizes) != self.n_groups:
            raise ConfigError(f"users_per_group has {len(sizes)} entries for {self.n_groups} groups")
        if any(k < 1 for k in sizes):
            raise ConfigError("every group needs at least one user")
        lo, hi = self.aod_range
        if not lo <= hi:
            raise ConfigError("aod_range must be an ordered interval")
        lo, hi = self.distance_range
        if not 0 < lo <= hi:
            raise ConfigError("distance_range must be an ordered interval of positive distances")
        if not (math.isfinite(self.tx_power_dbm) and math.isfinite(self.noise_dbm)):
            raise ConfigError("tx_power_dbm and noise_dbm must be finite")
        if math.isnan(self.rician_kappa_db):
            raise ConfigError("rician_kappa_db must be a number")
        if self.n_trials < 1:
            raise ConfigError("n_trials must be positive")
        if not 0 <= self.master_seed < 2**64:
            raise ConfigError("master_seed must be a 64-bit unsigned integer")
        if self.power_convention not in POWER_CONVENTIONS:
            raise ConfigError(f"power_convention must be one of {POWER_CONVENTIONS}")
        if self.nlos_variance_convention not in NLOS_CONVENTIONS:
            raise ConfigError(f"nlos_variance_convention must be one of {NLOS_CONVENTIONS}")
        if self.rate_normalization not in RATE_NORMALIZATIONS:
            raise ConfigError(f"rate_normalization must be one of {RATE_NORMALIZATIONS}")
        if self.pilot_power not in PILOT_POWER_MODES:
            raise ConfigError(f"pilot_power must be one of {PILOT_POWER_MODES}")
        if self.csir_error_var < 0:
            raise ConfigError("csir_error_var must be nonnegative")
        if self.sca_restarts < 1 or self.sca_max_iters < 1 or self.sca_tau <= 0:
            raise ConfigError("SCA options must be positive")

    @property
    def group_sizes(self) -> tuple[int, ...]:
        if isinstance(self.users_per_group, tuple):
            return self.users_per_group
        return (int(self.users_per_group),) * self.n_groups

    @property
    def n_users(self) -> int:
        return sum(self.group_sizes)

    @property
    def overloaded(self) -> bool:
        return self.n_users > self.n_antennas

    @property
    def tx_power_mw(self) -> float:
        return dbm_to_mw(self.tx_power_dbm)

    @property
    def noise_mw(self) -> float:
        return dbm_to_mw(self.noise_dbm)

    @property
    def kappa(self) -> float:
        """Linear Rician factor, with the dB value clipped at ``kappa_db_cap``."""
        return db_to_linear(min(self.rician_kappa_db, self.kappa_db_cap))

    @property
    def cf_data_budget_mw(self) -> float:
        """Power shared by the data symbols of one CF-MGM frame."""
        budget = self.tx_power_mw
        if self.power_convention == "per-slot":
            budget *= self.n_antennas
        if self.pilot_power == "in-budget":
            # two pilots at the mean data power must fit in the same budget
            budget *= self.n_groups / (self.n_groups + 2)
        return budget

    @property
    def baseline_slot_power_mw(self) -> float:
        return self.tx_power_mw

    def replace(self, **changes) -> "SystemConfig":
        return dataclasses.replace(self, **changes)

    def to_dict(self) -> dict:
        out = dataclasses.asdict(self)
        out["aod_range"] = list(self.aod_range)
        out["distance_range"] = list(self.distance_range)
        if isinstance(self.users_per_group, tuple):
            out["users_per_group"] = list(self.users_per_group)
        return out


FIELD_NAMES = tuple(f.name for f in dataclasses.fields(SystemConfig))
