"""Gaussian phase diffusion on the four transmission channels."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

CHANNELS = ("A1", "B1", "A2", "B2")


@dataclass(frozen=True)
class PhaseNoiseSpec:
    """Standard deviation (radians) of the phase noise on each channel."""

    sigma: tuple[float, float, float, float]

    def __post_init__(self):
        sigma = tuple(float(s) for s in self.sigma)
        if len(sigma) != len(CHANNELS):
            raise ValueError(f"need one sigma per channel {CHANNELS}, got {len(sigma)}")
        if not all(np.isfinite(s) and s >= 0 for s in sigma):
            raise ValueError(f"phase noise strengths must be finite and >= 0, got {sigma}")
        object.__setattr__(self, "sigma", sigma)

    @classmethod
    def uniform(cls, sigma_pn: float) -> "PhaseNoiseSpec":
        return cls((sigma_pn,) * len(CHANNELS))


@dataclass(frozen=True)
class NoiseSample:
    theta: tuple[float, float, float, float]


def sample_phases(spec: PhaseNoiseSpec, rng: np.random.Generator) -> NoiseSample:
    theta = np.asarray(spec.sigma) * rng.standard_normal(len(CHANNELS))
    return NoiseSample(tuple(float(t) for t in theta))


def coherence_factors(sigma: float) -> tuple[float, float]:
    """``E[cos(theta)]`` and ``E[cos(2 theta)]`` for ``theta ~ N(0, sigma^2)``."""
    return float(np.exp(-0.5 * sigma**2)), float(np.exp(-2.0 * sigma**2))


def phase_averaged_moments(var_x, var_p, cov_xp, sigma):
    """Single-mode second moments averaged over a Gaussian-distributed rotation.

    Returns ``(var_x', var_p', cov_xp', coh1, coh2)`` where ``coh1`` scales
    correlations with other, independently rotated or unrotated modes and
    ``coh2`` scales the squeezing anisotropy.
    """
    coh1, coh2 = coherence_factors(sigma)
    mid = 0.5 * (var_x + var_p)
    half_diff = 0.5 * (var_x - var_p)
    return (
        mid + half_diff * coh2,
        mid - half_diff * coh2,
        cov_xp * coh2,
        coh1,
        coh2,
    )
