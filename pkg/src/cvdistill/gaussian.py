"""Multimode Gaussian states in the quadrature representation.

Conventions used throughout the package:

* quadrature ordering is ``(X1, P1, X2, P2, ..., Xn, Pn)``;
* units are chosen so that the vacuum variance of every quadrature is
  ``VACUUM_VARIANCE = 1/4`` (the commutator is ``[X, P] = i/2``);
* the symplectic form is block diagonal with blocks ``[[0, 1], [-1, 0]]``.

States are immutable; every operation returns a new :class:`GaussianState`.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

VACUUM_VARIANCE = 0.25

SYMMETRY_TOL = 1e-12
PHYSICALITY_TOL = 1e-9


class PhysicalityError(ValueError):
    """Raised when a covariance matrix violates the uncertainty relation."""


def symplectic_form(n_modes: int) -> np.ndarray:
    """Block-diagonal symplectic form for ``n_modes`` modes."""
    return np.kron(np.eye(n_modes), np.array([[0.0, 1.0], [-1.0, 0.0]]))


def _symmetrize(cov: np.ndarray) -> np.ndarray:
    return 0.5 * (cov + cov.T)


def uncertainty_eigenvalues(cov: np.ndarray) -> np.ndarray:
    """Eigenvalues of ``cov / v0 + i Omega``; all are >= 0 for a physical state."""
    n = cov.shape[0] // 2
    return np.linalg.eigvalsh(cov / VACUUM_VARIANCE + 1j * symplectic_form(n))


@dataclass(frozen=True, eq=False)
class GaussianState:
    """Mean vector and covariance matrix of ``n_modes`` bosonic modes."""

    mean: np.ndarray
    cov: np.ndarray

    def __post_init__(self):
        mean = np.array(self.mean, dtype=float)
        cov = np.array(self.cov, dtype=float)
        if cov.ndim != 2 or cov.shape[0] != cov.shape[1] or cov.shape[0] % 2:
            raise ValueError(f"covariance must be square of even size, got {cov.shape}")
        if mean.shape != (cov.shape[0],):
            raise ValueError(f"mean shape {mean.shape} does not match covariance {cov.shape}")
        if np.max(np.abs(cov - cov.T), initial=0.0) > SYMMETRY_TOL:
            raise ValueError("covariance matrix is not symmetric")
        mean.setflags(write=False)
        cov.setflags(write=False)
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "cov", cov)

    @property
    def n_modes(self) -> int:
        return self.cov.shape[0] // 2

    def is_physical(self, tol: float = PHYSICALITY_TOL) -> bool:
        if np.linalg.eigvalsh(self.cov).min() < -tol:
            return False
        return bool(uncertainty_eigenvalues(self.cov).min() >= -tol)

    def check_physical(self, tol: float = PHYSICALITY_TOL) -> "GaussianState":
        if not self.is_physical(tol):
            raise PhysicalityError("covariance matrix violates the uncertainty relation")
        return self

    def apply(self, S: np.ndarray) -> "GaussianState":
        """Evolve the state under the linear phase-space map ``S``."""
        S = np.asarray(S, dtype=float)
        return GaussianState(S @ self.mean, _symmetrize(S @ self.cov @ S.T))

    def quadrature_indices(self, i: int) -> slice:
        _check_mode(i, self.n_modes)
        return slice(2 * i, 2 * i + 2)


def _check_mode(i: int, n_modes: int) -> None:
    if not 0 <= i < n_modes:
        raise IndexError(f"mode index {i} out of range for {n_modes} modes")


def vacuum_state(n_modes: int) -> GaussianState:
    if n_modes < 1:
        raise ValueError("a state needs at least one mode")
    return GaussianState(np.zeros(2 * n_modes), VACUUM_VARIANCE * np.eye(2 * n_modes))


def squeezed_state(squeezing_dB: float, antisqueezing_dB: float) -> GaussianState:
    """Single-mode squeezed state, squeezed in X and anti-squeezed in P.

    The anti-squeezing may exceed the squeezing, in which case the state is
    mixed. Variances are ``v0 * 10**(-squeezing_dB/10)`` and
    ``v0 * 10**(antisqueezing_dB/10)``.
    """
    if squeezing_dB < 0 or antisqueezing_dB < 0:
        raise ValueError("squeezing levels are given as non-negative decibels")
    var_x = VACUUM_VARIANCE * 10 ** (-squeezing_dB / 10)
    var_p = VACUUM_VARIANCE * 10 ** (antisqueezing_dB / 10)
    if var_x * var_p < VACUUM_VARIANCE**2 * (1 - PHYSICALITY_TOL):
        raise PhysicalityError(
            f"{squeezing_dB} dB squeezing with {antisqueezing_dB} dB anti-squeezing "
            "violates the uncertainty relation"
        )
    return GaussianState(np.zeros(2), np.diag([var_x, var_p]))


def tensor(a: GaussianState, b: GaussianState) -> GaussianState:
    n, m = a.cov.shape[0], b.cov.shape[0]
    cov = np.zeros((n + m, n + m))
    cov[:n, :n] = a.cov
    cov[n:, n:] = b.cov
    return GaussianState(np.concatenate([a.mean, b.mean]), cov)


def beam_splitter(i: int, j: int, transmittance: float, n_modes: int) -> np.ndarray:
    """Symplectic matrix of a beam splitter between modes ``i`` and ``j``.

    Port convention::

        out_i = sqrt(T) in_i + sqrt(1-T) in_j
        out_j = sqrt(1-T) in_i - sqrt(T) in_j

    applied identically to the X and P quadratures.
    """
    _check_mode(i, n_modes)
    _check_mode(j, n_modes)
    if i == j:
        raise ValueError("beam splitter needs two distinct modes")
    if not 0 < transmittance < 1:
        raise ValueError(f"transmittance must lie in (0, 1), got {transmittance}")
    t, r = np.sqrt(transmittance), np.sqrt(1 - transmittance)
    S = np.eye(2 * n_modes)
    for k in (0, 1):
        a, b = 2 * i + k, 2 * j + k
        S[a, a], S[a, b] = t, r
        S[b, a], S[b, b] = r, -t
    return S


def phase_rotation(i: int, theta: float, n_modes: int) -> np.ndarray:
    """Rotation ``X' = X cos(theta) + P sin(theta)``, ``P' = -X sin(theta) + P cos(theta)``."""
    _check_mode(i, n_modes)
    c, s = np.cos(theta), np.sin(theta)
    S = np.eye(2 * n_modes)
    S[2 * i : 2 * i + 2, 2 * i : 2 * i + 2] = [[c, s], [-s, c]]
    return S


def loss_channel(state: GaussianState, i: int, eta: float) -> GaussianState:
    """Pure-loss channel of efficiency ``eta`` on mode ``i`` (vacuum admixture)."""
    _check_mode(i, state.n_modes)
    if not 0 < eta <= 1:
        raise ValueError(f"efficiency must lie in (0, 1], got {eta}")
    scale = np.ones(2 * state.n_modes)
    scale[2 * i : 2 * i + 2] = np.sqrt(eta)
    cov = state.cov * np.outer(scale, scale)
    cov[2 * i, 2 * i] += (1 - eta) * VACUUM_VARIANCE
    cov[2 * i + 1, 2 * i + 1] += (1 - eta) * VACUUM_VARIANCE
    return GaussianState(state.mean * scale, _symmetrize(cov))


def marginal(state: GaussianState, modes: Sequence[int]) -> GaussianState:
    modes = list(modes)
    if not modes:
        raise ValueError("marginal needs at least one mode")
    for i in modes:
        _check_mode(i, state.n_modes)
    idx = np.array([2 * i + k for i in modes for k in (0, 1)])
    return GaussianState(state.mean[idx], state.cov[np.ix_(idx, idx)])


def condition_on_measurement(
    state: GaussianState, i: int, angle: float, outcome: float
) -> GaussianState:
    """Condition on an ideal homodyne readout of ``X cos(angle) + P sin(angle)`` of mode ``i``.

    The measured mode is removed from the returned state.
    """
    _check_mode(i, state.n_modes)
    if state.n_modes < 2:
        raise ValueError("conditioning a single-mode state leaves nothing behind")
    u = np.zeros(2 * state.n_modes)
    u[2 * i], u[2 * i + 1] = np.cos(angle), np.sin(angle)
    var_q = u @ state.cov @ u
    if var_q <= 0:
        raise np.linalg.LinAlgError("measured quadrature has vanishing variance")
    keep = np.array([k for k in range(2 * state.n_modes) if k // 2 != i])
    gain = (state.cov @ u)[keep] / var_q
    mean = state.mean[keep] + gain * (outcome - u @ state.mean)
    cov = state.cov[np.ix_(keep, keep)] - var_q * np.outer(gain, gain)
    return GaussianState(mean, _symmetrize(cov))


def sample_quadratures(
    state: GaussianState, rng: np.random.Generator, size: int | None = None
) -> np.ndarray:
    """Draw quadrature vectors from ``N(mean, cov)``.

    Uses an eigendecomposition so that rank-deficient covariances are
    handled; a zero covariance returns the mean exactly.
    """
    w, V = np.linalg.eigh(state.cov)
    if w.min() < -PHYSICALITY_TOL:
        raise np.linalg.LinAlgError("covariance matrix is not positive semidefinite")
    factor = V * np.sqrt(np.clip(w, 0.0, None))
    shape = (2 * state.n_modes,) if size is None else (size, 2 * state.n_modes)
    z = rng.standard_normal(shape)
    return state.mean + z @ factor.T


def symplectic_residual(S: np.ndarray) -> float:
    """``max |S Omega S^T - Omega|``; zero for an exactly symplectic matrix."""
    omega = symplectic_form(S.shape[0] // 2)
    return float(np.max(np.abs(S @ omega @ S.T - omega)))
