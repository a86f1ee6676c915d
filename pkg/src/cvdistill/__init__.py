"""Monte Carlo and semi-analytic simulation of two-copy Gaussification of
phase-diffused continuous-variable entanglement."""

__version__ = "0.1.0"

from .gaussian import GaussianState, squeezed_state, vacuum_state  # noqa: E402
from .protocol import ProtocolConfig, run_ensemble, run_shot, simulate_shots  # noqa: E402
from .metrics import estimate_covariance, metrics_report, total_variance  # noqa: E402
from .oracle import oracle_conditional_moments, oracle_success_rate  # noqa: E402

__all__ = [
    "GaussianState",
    "ProtocolConfig",
    "estimate_covariance",
    "metrics_report",
    "oracle_conditional_moments",
    "oracle_success_rate",
    "run_ensemble",
    "run_shot",
    "simulate_shots",
    "squeezed_state",
    "total_variance",
    "vacuum_state",
]
