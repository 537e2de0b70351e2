"""
Utility module for riskalloc.
This module provides configuration and logging helpers.
"""

from utils.config_manager import ConfigManager, RunConfig, expand_grid
from utils.logger import setup_logging
