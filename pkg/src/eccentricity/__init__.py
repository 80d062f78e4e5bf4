"""Item rarity, user eccentricity and item eccentricity from feedback logs."""

__version__ = "0.1.0"

from .errors import ConfigError, DegenerateError, EccentricityError, ValidationError  # noqa: E402
from .ingest import EventTable, parse_events  # noqa: E402
from .metrics import EccentricityScores, RarityTable, compute_scores  # noqa: E402
from .windowing import WindowConfig, assign_windows  # noqa: E402

__all__ = [
    "ConfigError", "DegenerateError", "EccentricityError", "ValidationError",
    "EventTable", "parse_events", "EccentricityScores", "RarityTable", "compute_scores",
    "WindowConfig", "assign_windows",
]
