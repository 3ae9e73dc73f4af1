"""User geometry and Rician mmWave channel realizations."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .config import SystemConfig

TWO_PI = 2.0 * np.pi


@dataclass(frozen=True)
class UserGeometry:
    aod: float
    distance: float
    phase: float

    @property
    def alpha(self) -> complex:
        """Complex large-scale gain ``exp(j*phase) / distance``."""
        return np.exp(1j * self.phase) / self.distance


@dataclass(frozen=True)
class ChannelSet:
    """One channel realization for every user, grouped.

    ``h[g]``, ``los[g]`` and ``nlos[g]`` are ``(K_g, N)`` complex arrays whose
    rows are the per-user vectors.  ``h`` is stored as computed from the two
    parts and the Rician weights, so the decomposition is exact.
    """

    geometry: tuple[tuple[UserGeometry, ...], ...]
    los: tuple[np.ndarray, ...]
    nlos: tuple[np.ndarray, ...]
    h: tuple[np.ndarray, ...]
    kappa: float

    @property
    def n_groups(self) -> int:
        return len(self.h)

    @property
    def n_antennas(self) -> int:
        return self.h[0].shape[1]

    def distances(self, g: int) -> np.ndarray:
        return np.array([u.distance for u in self.geometry[g]])


def rician_weights(kappa: float) -> tuple[float, float]:
    """Return the LoS and NLoS amplitude weights for a linear Rician factor."""
    if np.isinf(kappa):
        return 1.0, 0.0
    return float(np.sqrt(kappa / (kappa + 1.0))), float(np.sqrt(1.0 / (kappa + 1.0)))


def sample_geometry(cfg: SystemConfig, rng: np.random.Generator) -> list[list[UserGeometry]]:
    """Draw independent uniform AoD, distance and phase for every user."""
    sizes = cfg.group_sizes
    k_total = sum(sizes)
    aod = rng.uniform(cfg.aod_range[0], cfg.aod_range[1], size=k_total)
    dist = rng.uniform(cfg.distance_range[0], cfg.distance_range[1], size=k_total)
    phase = rng.uniform(0.0, TWO_PI, size=k_total)
    # uniform() may round up to the upper bound for tiny intervals
    phase = np.where(phase >= TWO_PI, 0.0, phase)

    groups = []
    start = 0
    for k_g in sizes:
        stop = start + k_g
        groups.append(
            [UserGeometry(float(a), float(r), float(v)) for a, r, v in zip(aod[start:stop], dist[start:stop], phase[start:stop])]
        )
        start = stop
    return groups


def array_response(theta: float | np.ndarray, n_antennas: int, phase_const: float = np.pi) -> np.ndarray:
    """Uniform linear array steering vector(s).

    Entry ``i`` is ``exp(-1j * phase_const * i * sin(theta))``.  An array of
    angles gives one row per angle.
    """
    if n_antennas < 1:
        raise ValueError("n_antennas must be >= 1")
    idx = np.arange(n_antennas)
    theta = np.asarray(theta, dtype=float)
    return np.exp(-1j * phase_const * np.multiply.outer(np.sin(theta), idx))


def los_channel(geom: UserGeometry, n_antennas: int, phase_const: float = np.pi) -> np.ndarray:
    if geom.distance <= 0:
        raise ValueError(f"distance must be positive, got {geom.distance}")
    return geom.alpha * array_response(geom.aod, n_antennas, phase_const)


def nlos_std(distance: np.ndarray | float, convention: str) -> np.ndarray | float:
    if convention == "inverse-square-distance":
        return 1.0 / np.asarray(distance)
    if convention == "inverse-distance":
        return 1.0 / np.sqrt(np.asarray(distance))
    raise ValueError(f"unknown NLoS variance convention {convention!r}")


def complex_normal(rng: np.random.Generator, size, scale=1.0) -> np.ndarray:
    """Circularly-symmetric complex Gaussian samples with variance ``scale**2``."""
    z = rng.standard_normal(size) + 1j * rng.standard_normal(size)
    return z * (np.asarray(scale) / np.sqrt(2.0))


def rician_channel(geom: UserGeometry, cfg: SystemConfig, rng: np.random.Generator) -> np.ndarray:
    w_los, w_nlos = rician_weights(_kappa(cfg))
    los = los_channel(geom, cfg.n_antennas, cfg.element_phase_const)
    nlos = complex_normal(rng, cfg.n_antennas, nlos_std(geom.distance, cfg.nlos_variance_convention))
    return w_los * los + w_nlos * nlos


def generate_channels(cfg: SystemConfig, rng: np.random.Generator) -> ChannelSet:
    """Sample geometry and build the full grouped channel realization.

    The geometry is drawn first from ``rng`` and the NLoS fading afterwards,
    so the geometry for a given stream does not depend on the fading model.
    """
    geometry = sample_geometry(cfg, rng)
    kappa = _kappa(cfg)
    w_los, w_nlos = rician_weights(kappa)
    n = cfg.n_antennas
    los_parts, nlos_parts, h_parts = [], [], []
    for users in geometry:
        aod = np.array([u.aod for u in users])
        dist = np.array([u.distance for u in users])
        phase = np.array([u.phase for u in users])
        alpha = np.exp(1j * phase) / dist
        los = alpha[:, None] * array_response(aod, n, cfg.element_phase_const)
        std = nlos_std(dist, cfg.nlos_variance_convention)[:, None]
        nlos = complex_normal(rng, (len(users), n), std)
        los_parts.append(los)
        nlos_parts.append(nlos)
        h_parts.append(w_los * los + w_nlos * nlos)
    return ChannelSet(
        geometry=tuple(tuple(users) for users in geometry),
        los=tuple(los_parts),
        nlos=tuple(nlos_parts),
        h=tuple(h_parts),
        kappa=kappa,
    )


def _kappa(cfg: SystemConfig) -> float:
    # at or beyond the cap the channel is treated as exactly LoS
    if cfg.rician_kappa_db >= cfg.kappa_db_cap:
        return float("inf")
    return cfg.kappa
