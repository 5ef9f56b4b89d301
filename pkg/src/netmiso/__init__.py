"""Monte Carlo simulator for the Network MISO channel with distributed CSIT.

Compares centralized, naive distributed, active-passive and consistent
distributed zero-forcing precoders under per-TX channel estimates of
different accuracy.
"""

__version__ = "0.1.0"

from .channel import (ConfigError, ScenarioConfig, load_config,  # noqa: E402
                      generate, realize, draw_fading)
from .linalg import RngStream, SingularInputError, pinv  # noqa: E402
from .precoders import SCHEMES, PrecodeResult, precode  # noqa: E402
from .rates import (RatePoint, affine_fit, expected_sum_rate,  # noqa: E402
                    rate_gap, sweep)

__all__ = [
    "__version__", "ConfigError", "ScenarioConfig", "load_config",
    "generate", "realize", "draw_fading", "RngStream", "SingularInputError",
    "pinv", "SCHEMES", "PrecodeResult", "precode", "RatePoint", "affine_fit",
    "expected_sum_rate", "rate_gap", "sweep", "bundled_config",
]


def bundled_config(name="fig6.json"):
    """Load a scenario shipped under ``netmiso/configs``."""
    from importlib.resources import files

    return load_config(files(__package__).joinpath("configs", name))
