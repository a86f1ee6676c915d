import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from cvdistill.gaussian import phase_rotation
from cvdistill.noise import PhaseNoiseSpec, coherence_factors, phase_averaged_moments, sample_phases

N = 1_000_000


def test_zero_sigma_gives_zero_phases(rng):
    assert sample_phases(PhaseNoiseSpec.uniform(0.0), rng).theta == (0.0, 0.0, 0.0, 0.0)


def test_phase_statistics():
    rng = np.random.default_rng(3)
    theta = np.array([sample_phases(PhaseNoiseSpec.uniform(0.497), rng).theta for _ in range(20_000)])
    # cheap per-shot path vs bulk draws below; both must give the same std
    assert np.all(np.abs(theta.std(axis=0, ddof=1) - 0.497) < 4 * 0.497 / np.sqrt(2 * len(theta)))


def test_phase_std_and_independence_bulk():
    rng = np.random.default_rng(4)
    theta = 0.497 * rng.standard_normal((N, 4))
    se_std = 0.497 / np.sqrt(2 * N)
    assert np.all(np.abs(theta.std(axis=0, ddof=1) - 0.497) < 4 * se_std)
    corr = np.corrcoef(theta.T)
    off = corr[~np.eye(4, dtype=bool)]
    assert np.all(np.abs(off) < 4 / np.sqrt(N))


def test_spec_validation():
    with pytest.raises(ValueError):
        PhaseNoiseSpec((0.1, 0.1, 0.1))
    with pytest.raises(ValueError):
        PhaseNoiseSpec((0.1, -0.1, 0.1, 0.1))
    with pytest.raises(ValueError):
        PhaseNoiseSpec((0.1, np.inf, 0.1, 0.1))


def test_per_channel_sigma(rng):
    spec = PhaseNoiseSpec((0.0, 1.0, 0.0, 2.0))
    t = sample_phases(spec, rng).theta
    assert t[0] == 0.0 and t[2] == 0.0 and t[1] != 0.0


def test_averaged_moments_zero_sigma():
    assert phase_averaged_moments(0.1, 0.9, 0.05, 0.0)[:3] == pytest.approx((0.1, 0.9, 0.05), abs=1e-15)


def test_averaged_moments_full_dephasing():
    vx, vp, cxp, *_ = phase_averaged_moments(0.0887, 1.5774, 0.0, 50.0)
    assert vx == pytest.approx(0.83305, abs=1e-5) and vp == pytest.approx(vx, abs=1e-12)


def test_averaged_moments_default_sigma():
    vx, vp, cxp, coh1, coh2 = phase_averaged_moments(0.08870, 1.57739, 0.0, 0.497)
    assert coh2 == pytest.approx(np.exp(-2 * 0.497**2), rel=1e-15)
    assert coh2 == pytest.approx(0.61017, abs=1e-5)
    assert vx == pytest.approx(0.37887, abs=1e-4)


@given(st.floats(0.01, 3), st.floats(0.01, 3), st.floats(-0.5, 0.5), st.floats(0, 2))
def test_averaged_moments_match_direct_rotation_average(vx, vp, cxp, sigma):
    """Gauss-Hermite average of the rotated matrix, computed independently."""
    x, w = np.polynomial.hermite.hermgauss(80)
    cov = np.array([[vx, cxp], [cxp, vp]])
    acc = np.zeros((2, 2))
    for xi, wi in zip(x, w):
        R = phase_rotation(0, np.sqrt(2) * sigma * xi, 1)
        acc += wi / np.sqrt(np.pi) * R @ cov @ R.T
    got = phase_averaged_moments(vx, vp, cxp, sigma)
    assert np.allclose([got[0], got[1], got[2]], [acc[0, 0], acc[1, 1], acc[0, 1]], atol=1e-10)


@given(st.floats(0.001, 5), st.floats(0.001, 5), st.floats(0, 3))
def test_dephasing_cannot_purify(vx, vp, sigma):
    ax, ap, *_ = phase_averaged_moments(vx, vp, 0.0, sigma)
    assert ax * ap >= vx * vp * (1 - 1e-12)


@given(st.floats(0, 5))
def test_coherence_identity(sigma):
    coh1, coh2 = coherence_factors(sigma)
    assert abs(coh2 - coh1**4) < 1e-12
    assert 0 < coh2 <= coh1**2 <= 1


def test_averaged_moments_match_mc():
    """Twenty random (varX, varP, sigma) triples against 10^6 sampled rotations each."""
    rng = np.random.default_rng(21)
    for _ in range(20):
        vx, vp = sorted(rng.uniform(0.02, 2.0, 2))
        sigma = rng.uniform(0.05, 1.2)
        theta = sigma * rng.standard_normal(N)
        c, s = np.cos(theta), np.sin(theta)
        rot_vx = c**2 * vx + s**2 * vp
        got = phase_averaged_moments(vx, vp, 0.0, sigma)[0]
        se = rot_vx.std(ddof=1) / np.sqrt(N)
        assert abs(rot_vx.mean() - got) < 4 * se
