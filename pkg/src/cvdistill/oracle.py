"""Semi-analytic success probability and conditional moments.

For fixed channel phases every quantity is Gaussian: the trigger sum ``S``
has a closed-form variance and the verification quadratures split into a
part proportional to ``S`` and an independent remainder. Conditioning on
``|S| < Q`` then only needs the truncated-normal second moment. The phases
are integrated out with tensor-product Gauss-Hermite quadrature.

Writing ``c_k`` for the quadrature vector of copy ``k`` after its channel
rotations, the distillation splitters give ``T = (c_1 + c_2)/sqrt(2)`` and
``V = (c_1 - c_2)/sqrt(2)``. With ``Gamma_k`` the rotated copy covariance
and ``e`` the trigger readout direction::

    Var(S)    = (e.Gamma_1.e + e.Gamma_2.e) / 2
    Cov(V)    = (Gamma_1 + Gamma_2) / 2
    Cov(V, S) = (Gamma_1 e - Gamma_2 e) / 2

so the four-angle integral factorises into sums over two 2-D grids, one per
copy. Nothing here touches the Monte Carlo kernel.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import special
from scipy.optimize import brentq

from . import gaussian as ge
from .metrics import total_variance_from_gamma
from .protocol import ProtocolConfig, vclass_pair

DEFAULT_ORDER = 40
CONVERGENCE_TOL = 1e-8
_CHUNK = 512


class OracleError(ValueError):
    pass


class OracleConvergenceError(OracleError):
    pass


@dataclass(frozen=True)
class QuadratureGrid:
    """Gauss-Hermite nodes and weights for expectations over ``N(0, sigma^2)``."""

    nodes: np.ndarray
    weights: np.ndarray

    @classmethod
    def normal(cls, order: int = DEFAULT_ORDER, sigma: float = 1.0) -> "QuadratureGrid":
        if order < 2:
            raise OracleError(f"quadrature order must be >= 2, got {order}")
        x, w = np.polynomial.hermite.hermgauss(order)
        return cls(math.sqrt(2.0) * sigma * x, w / math.sqrt(math.pi))

    @property
    def order(self) -> int:
        return len(self.nodes)


def truncated_second_moment(sigma_s: np.ndarray, Q: float) -> tuple[np.ndarray, np.ndarray]:
    """``P(|S| < Q)`` and ``E[S^2 | |S| < Q]`` for ``S ~ N(0, sigma_s^2)``."""
    if np.isinf(Q):
        return np.ones_like(sigma_s), sigma_s**2
    q = Q / sigma_s
    p = special.erf(q / math.sqrt(2.0))
    phi = np.exp(-0.5 * q**2) / math.sqrt(2 * math.pi)
    with np.errstate(invalid="ignore", divide="ignore"):
        ratio = 1 - 2 * q * phi / p
    # Series for tiny q: 1 - 2 q phi / (2 Phi - 1) = q^2/3 - q^4/15 + ...
    small = q < 1e-3
    ratio = np.where(small, q**2 / 3 - q**4 / 15, ratio)
    return p, sigma_s**2 * ratio


def _copy_grid(base: np.ndarray, grid_a: QuadratureGrid, grid_b: QuadratureGrid):
    """Rotated copy covariances on the (theta_A, theta_B) product grid."""
    ta, tb = np.meshgrid(grid_a.nodes, grid_b.nodes, indexing="ij")
    wa, wb = np.meshgrid(grid_a.weights, grid_b.weights, indexing="ij")
    ta, tb = ta.ravel(), tb.ravel()
    R = np.zeros((len(ta), 4, 4))
    for slot, t in ((0, ta), (2, tb)):
        c, s = np.cos(t), np.sin(t)
        R[:, slot, slot], R[:, slot, slot + 1] = c, s
        R[:, slot + 1, slot], R[:, slot + 1, slot + 1] = -s, c
    gammas = R @ base @ R.transpose(0, 2, 1)
    return gammas, (wa * wb).ravel()


@dataclass(frozen=True)
class OracleResult:
    success_rate: float
    # Conditional covariance of (X_VA, P_VA, X_VB, P_VB), natural units.
    cov: np.ndarray
    order: int

    @property
    def gamma_normalized(self) -> np.ndarray:
        return self.cov / ge.VACUUM_VARIANCE

    @property
    def var_xplus(self) -> float:
        c = self.cov
        return float(c[0, 0] + c[2, 2] + 2 * c[0, 2])

    @property
    def var_pminus(self) -> float:
        c = self.cov
        return float(c[1, 1] + c[3, 3] - 2 * c[1, 3])

    @property
    def total_variance(self) -> float:
        return total_variance_from_gamma(self.gamma_normalized)

    @property
    def determinant(self) -> float:
        return float(np.linalg.det(self.gamma_normalized))


def oracle_conditional_moments(cfg: ProtocolConfig, order: int = DEFAULT_ORDER, Q: float | None = None) -> OracleResult:
    """Acceptance probability and accepted second moments of the verification modes."""
    Q = cfg.Q if Q is None else Q
    sig = cfg.noise_spec.sigma
    base = vclass_pair(cfg).cov
    g1, w1 = _copy_grid(base, QuadratureGrid.normal(order, sig[0]), QuadratureGrid.normal(order, sig[1]))
    g2, w2 = _copy_grid(base, QuadratureGrid.normal(order, sig[2]), QuadratureGrid.normal(order, sig[3]))
    c, s = math.cos(cfg.trigger_angle), math.sin(cfg.trigger_angle)
    e = np.array([c, s, c, s])
    s1, s2 = g1 @ e @ e, g2 @ e @ e
    v1, v2 = g1 @ e, g2 @ e

    # Accumulators: row/column sums of the acceptance weight W_ij and of
    # K_ij = W_ij (E[S^2|acc] - Var S) / Var(S)^2, plus the cross term.
    row_w = np.zeros(len(s1))
    col_w = np.zeros(len(s2))
    row_k = np.zeros(len(s1))
    col_k = np.zeros(len(s2))
    cross = np.zeros((4, 4))
    for start in range(0, len(s1), _CHUNK):
        sl = slice(start, start + _CHUNK)
        var_s = 0.5 * (s1[sl, None] + s2[None, :])
        p, m2 = truncated_second_moment(np.sqrt(var_s), Q)
        W = w1[sl, None] * w2[None, :] * p
        K = W * (m2 - var_s) / var_s**2
        row_w[sl] = W.sum(axis=1)
        col_w += W.sum(axis=0)
        row_k[sl] = K.sum(axis=1)
        col_k += K.sum(axis=0)
        cross += v1[sl].T @ K @ v2
    p_succ = row_w.sum()
    if not p_succ > 0:
        raise OracleError(f"acceptance probability vanishes at Q={Q}")

    mean_cov = 0.5 * (np.einsum("i,ijk->jk", row_w, g1) + np.einsum("j,jkl->kl", col_w, g2))
    # sum_ij K_ij (v1_i - v2_j)(v1_i - v2_j)^T / 4
    rank_one = (
        np.einsum("i,ij,ik->jk", row_k, v1, v1)
        + np.einsum("j,jk,jl->kl", col_k, v2, v2)
        - cross
        - cross.T
    ) / 4
    cov = (mean_cov + rank_one) / p_succ
    return OracleResult(float(p_succ), 0.5 * (cov + cov.T), order)


def oracle_success_rate(cfg: ProtocolConfig, order: int = DEFAULT_ORDER, Q: float | None = None) -> float:
    return oracle_conditional_moments(cfg, order, Q).success_rate


def check_convergence(cfg: ProtocolConfig, order: int = DEFAULT_ORDER, Q: float | None = None, tol: float = CONVERGENCE_TOL) -> OracleResult:
    """Evaluate at ``order`` and ``2 * order``; raise if they differ by more than ``tol``."""
    lo = oracle_conditional_moments(cfg, order, Q)
    hi = oracle_conditional_moments(cfg, 2 * order, Q)
    delta = max(abs(lo.success_rate - hi.success_rate), float(np.max(np.abs(lo.cov - hi.cov))))
    if delta > tol:
        raise OracleConvergenceError(f"quadrature order {order} not converged: change {delta:.3g} > {tol}")
    return lo


def q_for_success_rate(cfg: ProtocolConfig, rate: float, order: int = DEFAULT_ORDER) -> float:
    """Threshold at which the oracle success probability equals ``rate``."""
    if not 0 < rate < 1:
        raise OracleError("target success rate must lie in (0, 1)")
    hi = 1.0
    while oracle_success_rate(cfg, order, hi) < rate:
        hi *= 2
    return brentq(lambda q: oracle_success_rate(cfg, order, q) - rate, 1e-9, hi, xtol=1e-12)
