"""
cogflow public API surface.
"""

from .config import RunConfig, load_config, parse_config
from .logger import RunLedger

__all__ = ["RunConfig", "RunLedger", "load_config", "parse_config"]
