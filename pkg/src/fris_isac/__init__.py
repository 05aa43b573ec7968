"""Joint beamforming, phase and element-position design for fluid-RIS-aided ISAC."""

__version__ = "0.1.0"

from .config import ConfigError, SystemConfig  # noqa: E402
from .orchestrator import Scheme, evaluate_objective, monte_carlo, run_am  # noqa: E402

__all__ = ["ConfigError", "Scheme", "SystemConfig", "evaluate_objective", "monte_carlo", "run_am", "__version__"]
