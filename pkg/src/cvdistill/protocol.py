"""Shot-level simulation of the two-copy distillation experiment.

Mode layout of the four-mode state is ``(A1, B1, A2, B2)``. After the
distillation beam splitters the same slots hold ``(T_A, T_B, V_A, V_B)``:
the trigger modes are the plus ports ``(A1 + A2)/sqrt(2)`` and
``(B1 + B2)/sqrt(2)``, the verification modes are the minus ports.

Ensembles are generated in fixed-size blocks. Block ``b`` draws from a
stream seeded by ``SeedSequence(seed, spawn_key=(b,))``, so the output
depends only on ``(seed, n_shots, block_size)`` and never on how many
workers ran the blocks.
"""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from functools import lru_cache

import numpy as np

from . import gaussian as ge
from .noise import NoiseSample, PhaseNoiseSpec

HALF_PI = np.pi / 2
QUADRATURE_SETTINGS = ((0.0, 0.0), (0.0, HALF_PI), (HALF_PI, 0.0), (HALF_PI, HALF_PI))
SAMPLING_MODES = ("per-setting", "joint")
WORKERS_ENV = "CVDISTILL_WORKERS"

# Per-shot stream layout: 4 channel phases, then 8 phase-space normals.
_DRAWS_PER_SHOT = 12


def no_noise_total_variance(eta: float, squeezing_dB: float = 4.5) -> float:
    """Total variance of the undistilled v-class pair without phase noise.

    With the input squeezed variance ``s`` and vacuum variance ``v0`` the
    nonlocal sums after loss are ``Var(X_A + X_B) = 2 eta s + 2 (1 - eta) v0``
    and ``Var(P_A - P_B) = 2 v0``, normalised by ``4 v0``.
    """
    v0 = ge.VACUUM_VARIANCE
    s = v0 * 10 ** (-squeezing_dB / 10)
    return (2 * eta * s + 2 * (1 - eta) * v0 + 2 * v0) / (4 * v0)


def _eta_for(target: float, squeezing_dB: float = 4.5) -> float:
    # I(eta) is linear in eta, so the default can be written down directly.
    i_one = no_noise_total_variance(1.0, squeezing_dB)
    return (1.0 - target) / (1.0 - i_one)


PRE_NOISE_TOTAL_VARIANCE = 0.725
DEFAULT_ETA = _eta_for(PRE_NOISE_TOTAL_VARIANCE)


class EmptyEnsembleError(RuntimeError):
    """No shot passed the trigger; widen Q or raise the shot count."""


@dataclass(frozen=True)
class ProtocolConfig:
    squeezing_dB: float = 4.5
    antisqueezing_dB: float = 8.0
    eta: float = DEFAULT_ETA
    sigma_pn: float = 0.497
    Q: float = np.inf
    n_shots: int = 1_000_000
    seed: int = 20090101
    bhd_settings: tuple[tuple[float, float], ...] = QUADRATURE_SETTINGS
    sampling_mode: str = "per-setting"
    # Per-channel override (A1, B1, A2, B2); None uses sigma_pn everywhere.
    sigma_channels: tuple[float, float, float, float] | None = None
    block_size: int = 1 << 16
    # Advanced: trigger quadrature angle. The experiment uses X (0).
    trigger_angle: float = 0.0

    def __post_init__(self):
        if self.n_shots < 1:
            raise ValueError("n_shots must be >= 1")
        if not self.Q > 0:
            raise ValueError(f"trigger threshold Q must be > 0, got {self.Q}")
        if not 0 < self.eta <= 1:
            raise ValueError(f"eta must lie in (0, 1], got {self.eta}")
        if self.sampling_mode not in SAMPLING_MODES:
            raise ValueError(f"sampling_mode must be one of {SAMPLING_MODES}")
        if not self.bhd_settings:
            raise ValueError("at least one verification setting is required")
        settings = tuple((float(a), float(b)) for a, b in self.bhd_settings)
        if not np.all(np.isfinite(settings)):
            raise ValueError("verification angles must be finite")
        object.__setattr__(self, "bhd_settings", settings)
        if self.block_size < 1:
            raise ValueError("block_size must be >= 1")
        if not 0 <= self.seed < 2**64:
            raise ValueError("seed must be a 64-bit unsigned integer")
        self.noise_spec  # validates sigma values

    @property
    def noise_spec(self) -> PhaseNoiseSpec:
        if self.sigma_channels is not None:
            return PhaseNoiseSpec(self.sigma_channels)
        return PhaseNoiseSpec.uniform(self.sigma_pn)

    def replace(self, **changes) -> "ProtocolConfig":
        return replace(self, **changes)


@dataclass(frozen=True)
class ShotRecord:
    phases: NoiseSample
    x_TA: float
    x_TB: float
    # setting index -> (q_VA, q_VB)
    verification: dict[int, tuple[float, float]]
    Q: float

    @property
    def accepted(self) -> bool:
        return bool(abs(self.x_TA + self.x_TB) < self.Q)


def vclass_pair(cfg: ProtocolConfig) -> ge.GaussianState:
    """One copy: squeezed beam and vacuum on a 50:50 splitter, then loss on both beams."""
    state = ge.tensor(ge.squeezed_state(cfg.squeezing_dB, cfg.antisqueezing_dB), ge.vacuum_state(1))
    state = state.apply(ge.beam_splitter(0, 1, 0.5, 2))
    for i in (0, 1):
        state = ge.loss_channel(state, i, cfg.eta)
    return state


def build_initial_state(cfg: ProtocolConfig) -> ge.GaussianState:
    copy = vclass_pair(cfg)
    return ge.tensor(copy, copy)


def apply_channel_noise(state: ge.GaussianState, phases: NoiseSample) -> ge.GaussianState:
    if state.n_modes != 4:
        raise ValueError("channel noise acts on the four-mode (A1, B1, A2, B2) state")
    for i, theta in enumerate(phases.theta):
        state = state.apply(ge.phase_rotation(i, theta, 4))
    return state


def distillation_bs_matrix() -> np.ndarray:
    """Both distillation splitters: (A1, A2) and (B1, B2), plus ports stay in slots 0 and 1."""
    return ge.beam_splitter(1, 3, 0.5, 4) @ ge.beam_splitter(0, 2, 0.5, 4)


def apply_distillation_bs(state: ge.GaussianState) -> ge.GaussianState:
    return state.apply(distillation_bs_matrix())


def _quadrature(x: np.ndarray, p: np.ndarray, angle: float) -> np.ndarray:
    return x * np.cos(angle) + p * np.sin(angle)


def _read_settings(cfg: ProtocolConfig, shot_index: int) -> list[int]:
    if cfg.sampling_mode == "joint":
        return list(range(len(cfg.bhd_settings)))
    return [shot_index % len(cfg.bhd_settings)]


def run_shot(cfg: ProtocolConfig, rng: np.random.Generator, shot_index: int = 0) -> ShotRecord:
    """One trial through the full Gaussian-state pipeline.

    In per-setting mode only the setting ``shot_index % n_settings`` is read,
    matching the block kernel used by :func:`simulate_shots`.
    """
    phases = NoiseSample(tuple(np.asarray(cfg.noise_spec.sigma) * rng.standard_normal(4)))
    state = apply_distillation_bs(apply_channel_noise(build_initial_state(cfg), phases))
    r = ge.sample_quadratures(state, rng)
    x_ta = float(_quadrature(r[0], r[1], cfg.trigger_angle))
    x_tb = float(_quadrature(r[2], r[3], cfg.trigger_angle))
    verification = {}
    for k in _read_settings(cfg, shot_index):
        phi_a, phi_b = cfg.bhd_settings[k]
        verification[k] = (float(_quadrature(r[4], r[5], phi_a)), float(_quadrature(r[6], r[7], phi_b)))
    return ShotRecord(phases, x_ta, x_tb, verification, cfg.Q)


@dataclass
class EnsembleResult:
    """Accepted verification readings for one threshold.

    ``samples[k]`` is an ``(n_k, 2)`` array of ``(q_VA, q_VB)`` for setting
    ``k``. In joint mode ``phase_space`` holds the accepted
    ``(X_VA, P_VA, X_VB, P_VB)`` vectors as well.
    """

    settings: tuple[tuple[float, float], ...]
    samples: list[np.ndarray]
    accepted: int
    total: int
    Q: float
    sampling_mode: str
    phase_space: np.ndarray | None = None
    trigger_std: float = float("nan")

    @property
    def success_rate(self) -> float:
        return self.accepted / self.total

    @property
    def success_rate_se(self) -> float:
        p = self.success_rate
        return float(np.sqrt(p * (1 - p) / self.total))

    def setting_index(self, angles: tuple[float, float], atol: float = 1e-9) -> int:
        for k, s in enumerate(self.settings):
            if np.allclose(s, angles, atol=atol):
                return k
        raise KeyError(f"no verification setting with angles {angles}")

    def readings(self, angles: tuple[float, float]) -> np.ndarray:
        return self.samples[self.setting_index(angles)]


@dataclass
class ShotData:
    """Raw per-shot outputs of an ensemble run, reusable across thresholds."""

    cfg: ProtocolConfig
    theta: np.ndarray  # (n, 4) channel phases
    trigger: np.ndarray  # (n, 2) x_TA, x_TB
    verification: np.ndarray  # (n, 4) X_VA, P_VA, X_VB, P_VB
    setting: np.ndarray = field(init=False)  # per-setting assignment

    def __post_init__(self):
        n = len(self.trigger)
        self.setting = np.arange(n) % len(self.cfg.bhd_settings)

    @property
    def n_shots(self) -> int:
        return len(self.trigger)

    @property
    def trigger_sum(self) -> np.ndarray:
        return self.trigger[:, 0] + self.trigger[:, 1]

    def accepted_mask(self, Q: float) -> np.ndarray:
        return np.abs(self.trigger_sum) < Q

    def record(self, i: int, Q: float | None = None) -> ShotRecord:
        Q = self.cfg.Q if Q is None else Q
        v = self.verification[i]
        verification = {}
        for k in _read_settings(self.cfg, i):
            phi_a, phi_b = self.cfg.bhd_settings[k]
            verification[k] = (float(_quadrature(v[0], v[1], phi_a)), float(_quadrature(v[2], v[3], phi_b)))
        return ShotRecord(
            NoiseSample(tuple(float(t) for t in self.theta[i])),
            float(self.trigger[i, 0]),
            float(self.trigger[i, 1]),
            verification,
            Q,
        )

    def ensemble(self, Q: float | None = None) -> EnsembleResult:
        Q = self.cfg.Q if Q is None else Q
        mask = self.accepted_mask(Q)
        v = self.verification[mask]
        samples = []
        for k, (phi_a, phi_b) in enumerate(self.cfg.bhd_settings):
            sel = v if self.cfg.sampling_mode == "joint" else v[self.setting[mask] == k]
            samples.append(np.column_stack([_quadrature(sel[:, 0], sel[:, 1], phi_a), _quadrature(sel[:, 2], sel[:, 3], phi_b)]))
        return EnsembleResult(
            settings=self.cfg.bhd_settings,
            samples=samples,
            accepted=int(mask.sum()),
            total=self.n_shots,
            Q=Q,
            sampling_mode=self.cfg.sampling_mode,
            phase_space=v if self.cfg.sampling_mode == "joint" else None,
            trigger_std=float(np.std(self.trigger_sum, ddof=1)) if self.n_shots > 1 else float("nan"),
        )


def _block_sizes(n_shots: int, block_size: int) -> list[int]:
    full, rest = divmod(n_shots, block_size)
    return [block_size] * full + ([rest] if rest else [])


def block_rng(seed: int, block: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(block,)))


@lru_cache(maxsize=32)
def _initial_factor(squeezing_dB, antisqueezing_dB, eta):
    cfg = ProtocolConfig(squeezing_dB=squeezing_dB, antisqueezing_dB=antisqueezing_dB, eta=eta)
    return np.linalg.cholesky(build_initial_state(cfg).cov)


def _simulate_block(cfg: ProtocolConfig, block: int, size: int, bs_matrix: np.ndarray):
    rng = block_rng(cfg.seed, block)
    u = rng.standard_normal((size, _DRAWS_PER_SHOT))
    theta = u[:, :4] * np.asarray(cfg.noise_spec.sigma)
    x = u[:, 4:] @ _initial_factor(cfg.squeezing_dB, cfg.antisqueezing_dB, cfg.eta).T
    c, s = np.cos(theta), np.sin(theta)
    rotated = np.empty_like(x)
    rotated[:, 0::2] = x[:, 0::2] * c + x[:, 1::2] * s
    rotated[:, 1::2] = -x[:, 0::2] * s + x[:, 1::2] * c
    y = rotated @ bs_matrix.T
    trigger = np.column_stack(
        [_quadrature(y[:, 0], y[:, 1], cfg.trigger_angle), _quadrature(y[:, 2], y[:, 3], cfg.trigger_angle)]
    )
    return theta, trigger, y[:, 4:]


def worker_count() -> int:
    value = os.environ.get(WORKERS_ENV)
    return max(1, int(value)) if value else min(4, os.cpu_count() or 1)


def simulate_shots(cfg: ProtocolConfig, workers: int | None = None) -> ShotData:
    """Run ``cfg.n_shots`` trials with the vectorised block kernel.

    Each shot draws the channel phases, then a phase-space sample of the
    pre-noise state, rotates each mode by its phase and applies the
    distillation splitters; the result is one draw from the per-shot
    conditioned Gaussian state.
    """
    bs_matrix = distillation_bs_matrix()
    sizes = _block_sizes(cfg.n_shots, cfg.block_size)
    workers = worker_count() if workers is None else workers
    jobs = [(cfg, b, size, bs_matrix) for b, size in enumerate(sizes)]
    if workers > 1 and len(jobs) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(lambda job: _simulate_block(*job), jobs))
    else:
        parts = [_simulate_block(*job) for job in jobs]
    theta, trigger, verification = (np.concatenate(arrays) for arrays in zip(*parts))
    return ShotData(cfg, theta, trigger, verification)


def run_ensemble(cfg: ProtocolConfig, workers: int | None = None) -> EnsembleResult:
    result = simulate_shots(cfg, workers).ensemble()
    if result.accepted == 0:
        raise EmptyEnsembleError(
            f"no shot out of {cfg.n_shots} passed |x_TA + x_TB| < {cfg.Q}; widen Q or add shots"
        )
    return result
