"""
Shared configuration management for the submodular adaptivity toolkit.
Holds numerical defaults, ambient environment settings and logging setup.
"""

import os
import sys
from dataclasses import dataclass
from typing import Optional
import logging


# Load environment variables from a deterministic .env location.
# Only logging and worker settings are read from it; command output never
# depends on the environment.
try:
    from dotenv import load_dotenv

    _here = os.path.dirname(os.path.abspath(__file__))
    _default_dotenv = os.path.normpath(os.path.join(_here, '..', '.env'))
    _dotenv_path = os.getenv('ADAPTIVITY_DOTENV_PATH', _default_dotenv)

    if os.path.exists(_dotenv_path):
        load_dotenv(dotenv_path=_dotenv_path, override=False)
except ImportError:
    # dotenv not available, use environment variables as-is
    pass


LOG_FORMAT = '%(asctime)s - %(name)s - %(levelname)s - %(message)s'


@dataclass
class Config:
    """Main configuration class for the toolkit."""

    # Multilinear extension estimation
    enumeration_budget: int = 10 ** 6  # joint count combinations for exact modes
    exact_enum_max_n: int = 22
    default_samples: int = 10_000

    # Double greedy
    default_gamma: float = 0.05
    opt_estimate_escalations: int = 3

    # Property suites
    property_samples: int = 10_000
    violation_tolerance: float = 1e-9

    # Solution-family optimizers
    optimizer_restarts: int = 20
    optimizer_tolerance: float = 1e-10
    optimizer_max_iterations: int = 2000

    # Layer discovery
    discovery_success_threshold: float = 0.99

    # Batch evaluation threads (results are order-stable for any value)
    batch_workers: int = 1

    # Output
    float_digits: int = 12

    # Logging
    log_level: str = "INFO"
    log_file: Optional[str] = None

    def __post_init__(self):
        """Read ambient settings from the environment."""
        self.log_level = os.getenv('ADAPTIVITY_LOG_LEVEL', self.log_level).upper()
        self.log_file = os.getenv('ADAPTIVITY_LOG_FILE', self.log_file) or None

        try:
            self.batch_workers = int(os.getenv('ADAPTIVITY_BATCH_WORKERS', str(self.batch_workers)))
        except ValueError:
            logging.warning(f"Invalid ADAPTIVITY_BATCH_WORKERS value: {os.getenv('ADAPTIVITY_BATCH_WORKERS')}. "
                            f"Using default: 1")
            self.batch_workers = 1

    def validate(self):
        """Validate configuration and raise errors for unusable settings."""
        errors = []

        if self.enumeration_budget <= 0:
            errors.append("enumeration_budget must be a positive integer")
        if not 1 <= self.exact_enum_max_n <= 26:
            errors.append("exact_enum_max_n must lie in [1, 26]")
        if self.default_samples < 1:
            errors.append("default_samples must be at least 1")
        if not 0.0 < self.default_gamma < 1.0:
            errors.append("default_gamma must lie in (0, 1)")
        if self.property_samples < 1:
            errors.append("property_samples must be at least 1")
        if self.violation_tolerance < 0:
            errors.append("violation_tolerance must be non-negative")
        if self.optimizer_restarts < 1:
            errors.append("optimizer_restarts must be at least 1")
        if self.optimizer_max_iterations < 1:
            errors.append("optimizer_max_iterations must be at least 1")
        if not 0.0 < self.discovery_success_threshold <= 1.0:
            errors.append("discovery_success_threshold must lie in (0, 1]")
        if self.batch_workers < 1:
            errors.append("ADAPTIVITY_BATCH_WORKERS must be a positive integer")
        if self.log_level not in ('DEBUG', 'INFO', 'WARNING', 'ERROR', 'CRITICAL'):
            errors.append(f"ADAPTIVITY_LOG_LEVEL '{self.log_level}' is not a logging level")

        if self.batch_workers > (os.cpu_count() or 1) * 4:
            logging.warning(f"ADAPTIVITY_BATCH_WORKERS ({self.batch_workers}) is far above the CPU count")

        if errors:
            raise ValueError(f"Configuration errors: {', '.join(errors)}")


# Global configuration instance
config = Config()


def setup_logging(level=logging.INFO, log_file: Optional[str] = None):
    """Setup logging configuration.

    Logs go to stderr so that tables written to stdout stay clean.
    """
    handlers = [logging.StreamHandler(sys.stderr)]
    if log_file:
        handlers.append(logging.FileHandler(log_file))
    logging.basicConfig(level=level, format=LOG_FORMAT, handlers=handlers, force=True)


def get_config() -> Config:
    """Get the global configuration instance."""
    return config
