"""Second-moment tomography of the verification modes and derived figures of merit.

Reported covariance matrices are normalised to the vacuum, i.e. divided by
``v0 = 1/4`` so that the vacuum maps to the identity. The quadrature order
is ``(X_VA, P_VA, X_VB, P_VB)``.

Standard errors come from first-order (influence-function) propagation of
the sample moments. They use the empirical fourth moments, so they remain
valid for the leptokurtic phase-diffused ensembles before distillation.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
from scipy import stats

from .gaussian import VACUUM_VARIANCE, symplectic_form
from .protocol import HALF_PI, EnsembleResult

LOG_BASE = 2
MIN_KURTOSIS_SAMPLES = 1000
UNPHYSICAL_TOL = 1e-6
# Roundoff floor below which nu_pt counts as 1 (separable).
NU_FLOOR = 1e-12

# Upper-triangle element order used for the moment covariance.
PAIRS = [(a, b) for a in range(4) for b in range(a, 4)]
INTRAMODAL = {(0, 1), (2, 3)}
LABELS = ("X_VA", "P_VA", "X_VB", "P_VB")

_ANGLE = {0: 0.0, 1: HALF_PI, 2: 0.0, 3: HALF_PI}
# Which setting supplies which element, and from which reading columns.
_SETTING_ELEMENTS = {
    (0.0, 0.0): [((0, 0), (0, 0)), ((2, 2), (1, 1)), ((0, 2), (0, 1))],
    (HALF_PI, HALF_PI): [((1, 1), (0, 0)), ((3, 3), (1, 1)), ((1, 3), (0, 1))],
    (0.0, HALF_PI): [((0, 3), (0, 1))],
    (HALF_PI, 0.0): [((1, 2), (0, 1))],
}
_SETTING_NAMES = {(0.0, 0.0): "(X,X)", (0.0, HALF_PI): "(X,P)", (HALF_PI, 0.0): "(P,X)", (HALF_PI, HALF_PI): "(P,P)"}


class InsufficientDataError(ValueError):
    pass


class InvalidEstimateError(ValueError):
    pass


class UnphysicalCovarianceWarning(UserWarning):
    pass


class Estimate(NamedTuple):
    value: float
    se: float


def variance_estimate(x: np.ndarray) -> Estimate:
    """Unbiased sample variance with a distribution-free standard error."""
    x = np.asarray(x, dtype=float)
    n = len(x)
    if n < 2:
        raise InsufficientDataError(f"need at least 2 samples for a variance, got {n}")
    d2 = (x - x.mean()) ** 2
    var = d2.sum() / (n - 1)
    return Estimate(float(var), float(np.sqrt(np.mean((d2 - d2.mean()) ** 2) / n)))


def _moment_block(data: np.ndarray, columns: list[tuple[int, int]]):
    """Unbiased second moments of column pairs and their influence functions."""
    n = len(data)
    d = data - data.mean(axis=0)
    prods = np.column_stack([d[:, i] * d[:, j] for i, j in columns])
    values = prods.sum(axis=0) / (n - 1)
    influence = prods - prods.mean(axis=0)
    return values, influence.T @ influence / n**2


@dataclass
class CovarianceEstimate:
    gamma_normalized: np.ndarray
    standard_errors: np.ndarray
    samples_per_setting: dict[str, int]
    # Covariance of the ten upper-triangle estimators, normalised units.
    moment_cov: np.ndarray
    intramodal_estimated: bool = False

    def se_of(self, gradient: np.ndarray) -> float:
        """First-order SE of a scalar function with symmetric gradient ``gradient`` wrt gamma."""
        g = np.array([gradient[a, b] if a == b else gradient[a, b] + gradient[b, a] for a, b in PAIRS])
        return float(np.sqrt(max(g @ self.moment_cov @ g, 0.0)))


def estimate_covariance(ensemble: EnsembleResult, estimate_intramodal: bool = False) -> CovarianceEstimate:
    """Reconstruct the normalised 4x4 covariance matrix of the verification modes.

    Needs the four settings (X,X), (X,P), (P,X), (P,P). Variances come from
    the diagonal settings (X,X) and (P,P); each inter-modal covariance from
    the setting measuring that pair. Intra-modal terms are zero unless
    ``estimate_intramodal`` is set, which requires joint-mode readings.
    """
    values = np.zeros(len(PAIRS))
    moment_cov = np.zeros((len(PAIRS), len(PAIRS)))
    counts = {}
    for angles, name in _SETTING_NAMES.items():
        try:
            k = ensemble.setting_index(angles)
        except KeyError:
            raise InsufficientDataError(f"setting {name} was not measured") from None
        counts[name] = len(ensemble.samples[k])
        if counts[name] < 2:
            raise InsufficientDataError(f"setting {name} has {counts[name]} accepted samples, need >= 2")

    if ensemble.phase_space is not None:
        wanted = [p for p in PAIRS if estimate_intramodal or p not in INTRAMODAL]
        idx = [PAIRS.index(p) for p in wanted]
        vals, cov = _moment_block(ensemble.phase_space, wanted)
        values[idx] = vals
        moment_cov[np.ix_(idx, idx)] = cov
    else:
        if estimate_intramodal:
            raise InsufficientDataError("intra-modal covariances need joint-mode readings")
        for angles, elements in _SETTING_ELEMENTS.items():
            data = ensemble.readings(angles)
            idx = [PAIRS.index(e) for e, _ in elements]
            vals, cov = _moment_block(data, [c for _, c in elements])
            values[idx] = vals
            moment_cov[np.ix_(idx, idx)] = cov

    values /= VACUUM_VARIANCE
    moment_cov /= VACUUM_VARIANCE**2
    gamma = np.zeros((4, 4))
    se = np.zeros((4, 4))
    errs = np.sqrt(np.diag(moment_cov))
    for k, (a, b) in enumerate(PAIRS):
        gamma[a, b] = gamma[b, a] = values[k]
        se[a, b] = se[b, a] = errs[k]
    return CovarianceEstimate(gamma, se, counts, moment_cov, estimate_intramodal)


# Gradient of the total variance wrt the normalised matrix.
_I_GRADIENT = np.zeros((4, 4))
_I_GRADIENT[0, 0] = _I_GRADIENT[2, 2] = _I_GRADIENT[1, 1] = _I_GRADIENT[3, 3] = 0.25
_I_GRADIENT[0, 2] = _I_GRADIENT[2, 0] = 0.25
_I_GRADIENT[1, 3] = _I_GRADIENT[3, 1] = -0.25


def total_variance_from_gamma(gamma_normalized: np.ndarray) -> float:
    """``[Var(X_A + X_B) + Var(P_A - P_B)] / (4 v0)`` from a vacuum-normalised matrix."""
    return float(np.sum(_I_GRADIENT * gamma_normalized))


def total_variance(source) -> Estimate:
    """Duan total variance, normalised so that the vacuum gives exactly 1.

    ``source`` is either an :class:`EnsembleResult` (the nonlocal sums are
    formed shot by shot) or a :class:`CovarianceEstimate`.
    """
    if isinstance(source, CovarianceEstimate):
        g = source.gamma_normalized
        return Estimate(total_variance_from_gamma(g), source.se_of(_I_GRADIENT))
    xx = source.readings((0.0, 0.0))
    pp = source.readings((HALF_PI, HALF_PI))
    if source.phase_space is not None:
        # Both sums come from the same shots; propagate jointly.
        z = source.phase_space
        if len(z) < 2:
            raise InsufficientDataError("need at least 2 accepted shots")
        d1 = z[:, 0] + z[:, 2]
        d2 = z[:, 1] - z[:, 3]
        d1 = (d1 - d1.mean()) ** 2
        d2 = (d2 - d2.mean()) ** 2
        n = len(z)
        value = (d1.sum() + d2.sum()) / (n - 1)
        infl = (d1 - d1.mean()) + (d2 - d2.mean())
        se = np.sqrt(np.mean(infl**2) / n)
        return Estimate(float(value / (4 * VACUUM_VARIANCE)), float(se / (4 * VACUUM_VARIANCE)))
    v1 = variance_estimate(xx[:, 0] + xx[:, 1])
    v2 = variance_estimate(pp[:, 0] - pp[:, 1])
    norm = 4 * VACUUM_VARIANCE
    return Estimate((v1.value + v2.value) / norm, float(np.hypot(v1.se, v2.se)) / norm)


def duan_entangled(I: float) -> bool:
    return bool(I < 1)


class DeterminantPurity(NamedTuple):
    D: float
    purity: float
    D_se: float
    purity_se: float


def determinant_purity(estimate: CovarianceEstimate | np.ndarray) -> DeterminantPurity:
    """Determinant of the normalised matrix and the Gaussian purity ``1/sqrt(D)``."""
    if isinstance(estimate, CovarianceEstimate):
        gamma = estimate.gamma_normalized
    else:
        gamma = np.asarray(estimate, dtype=float)
    D = float(np.linalg.det(gamma))
    if not D > 0:
        raise InvalidEstimateError(f"covariance determinant {D} is not positive")
    purity = 1 / np.sqrt(D)
    if isinstance(estimate, CovarianceEstimate):
        D_se = estimate.se_of(D * np.linalg.inv(gamma).T)
    else:
        D_se = 0.0
    return DeterminantPurity(D, float(purity), D_se, float(0.5 * D**-1.5 * D_se))


def symplectic_eigenvalues(gamma_normalized: np.ndarray) -> np.ndarray:
    """Symplectic spectrum in vacuum units (the vacuum has all values equal to 1).

    Uses the Hermitian form ``g^1/2 (i Omega) g^1/2``, which shares its
    spectrum with ``i Omega g``; requires ``g`` positive semidefinite.
    """
    n = gamma_normalized.shape[0] // 2
    w, V = np.linalg.eigh(gamma_normalized)
    root = (V * np.sqrt(np.clip(w, 0.0, None))) @ V.T
    ev = np.linalg.eigvalsh(root @ (1j * symplectic_form(n)) @ root)
    return np.sort(np.abs(ev))[::2]


def partial_transpose(gamma_normalized: np.ndarray) -> np.ndarray:
    flip = np.diag([1.0, 1.0, 1.0, -1.0])
    return flip @ gamma_normalized @ flip


def log_negativity(estimate: CovarianceEstimate | np.ndarray) -> float:
    """Logarithmic negativity (base 2) of a two-mode normalised covariance matrix."""
    gamma = estimate.gamma_normalized if isinstance(estimate, CovarianceEstimate) else np.asarray(estimate)
    if symplectic_eigenvalues(gamma).min() < 1 - UNPHYSICAL_TOL:
        warnings.warn(
            "covariance matrix violates the uncertainty relation; log-negativity is not meaningful",
            UnphysicalCovarianceWarning,
            stacklevel=2,
        )
    nu_pt = symplectic_eigenvalues(partial_transpose(gamma)).min()
    if nu_pt >= 1 - NU_FLOOR:
        return 0.0
    return float(-np.log(nu_pt) / np.log(LOG_BASE))


def log_negativity_se(estimate: CovarianceEstimate, step: float = 1e-6) -> float:
    gamma = estimate.gamma_normalized
    grad = np.zeros((4, 4))
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", UnphysicalCovarianceWarning)
        for a, b in PAIRS:
            e = np.zeros((4, 4))
            e[a, b] = e[b, a] = step
            diff = (log_negativity(gamma + e) - log_negativity(gamma - e)) / (2 * step)
            # se_of symmetrises off-diagonal gradients, so split the derivative.
            if a == b:
                grad[a, a] = diff
            else:
                grad[a, b] = grad[b, a] = diff / 2
    return estimate.se_of(grad)


def gaussianity(samples: np.ndarray) -> Estimate:
    """Excess kurtosis (zero for a Gaussian) with an influence-function SE."""
    x = np.asarray(samples, dtype=float)
    n = len(x)
    if n < MIN_KURTOSIS_SAMPLES:
        raise InsufficientDataError(f"need at least {MIN_KURTOSIS_SAMPLES} samples for kurtosis, got {n}")
    d = x - x.mean()
    m2, m3, m4 = (np.mean(d**k) for k in (2, 3, 4))
    influence = (d**4 - m4 - 4 * m3 * d) / m2**2 - 2 * m4 * (d**2 - m2) / m2**3
    value = stats.kurtosis(x, fisher=True, bias=False)
    return Estimate(float(value), float(np.sqrt(np.mean(influence**2) / n)))


@dataclass
class MetricsReport:
    success_rate: Estimate
    var_xplus: Estimate
    var_pminus: Estimate
    I: Estimate
    D: Estimate
    purity: Estimate
    log_negativity: Estimate
    kurtosis_xplus: Estimate
    kurtosis_pminus: Estimate
    covariance: CovarianceEstimate
    accepted: int
    log_base: int = LOG_BASE

    @property
    def excess_kurtosis(self) -> Estimate:
        return self.kurtosis_xplus


def _kurtosis_or_nan(x: np.ndarray) -> Estimate:
    try:
        return gaussianity(x)
    except InsufficientDataError:
        return Estimate(float("nan"), float("nan"))


def metrics_report(ensemble: EnsembleResult) -> MetricsReport:
    if ensemble.accepted == 0:
        raise InsufficientDataError(f"no accepted shots at Q={ensemble.Q}")
    cov = estimate_covariance(ensemble)
    xx = ensemble.readings((0.0, 0.0))
    pp = ensemble.readings((HALF_PI, HALF_PI))
    xplus = xx[:, 0] + xx[:, 1]
    pminus = pp[:, 0] - pp[:, 1]
    dp = determinant_purity(cov)
    return MetricsReport(
        success_rate=Estimate(ensemble.success_rate, ensemble.success_rate_se),
        var_xplus=variance_estimate(xplus),
        var_pminus=variance_estimate(pminus),
        I=total_variance(ensemble),
        D=Estimate(dp.D, dp.D_se),
        purity=Estimate(dp.purity, dp.purity_se),
        log_negativity=Estimate(log_negativity(cov), log_negativity_se(cov)),
        kurtosis_xplus=_kurtosis_or_nan(xplus),
        kurtosis_pminus=_kurtosis_or_nan(pminus),
        covariance=cov,
        accepted=ensemble.accepted,
    )
