"""
Configuration Manager for riskalloc runs.
Responsible for loading the JSON run document and providing access to settings.
"""
import os
import json
import logging
from dataclasses import dataclass, field
from decimal import Decimal
from typing import Dict, Any, List, Optional

from riskalloc.errors import ConfigError

logger = logging.getLogger(__name__)

INDICATORS = ("I", "J", "I_loc")
METHODS = ("closed_form", "monte_carlo", "both")

DEFAULT_CHUNK_SIZE = 2 ** 16
DEFAULT_CACHE_BYTES = 256 * 2 ** 20


def _to_native(value: Any) -> Any:
    """Turn the Decimal leaves produced by the JSON parser into floats."""
    if isinstance(value, Decimal):
        return float(value)
    if isinstance(value, dict):
        return {k: _to_native(v) for k, v in value.items()}
    if isinstance(value, list):
        return [_to_native(v) for v in value]
    return value


def _as_bool(value: Any) -> bool:
    if isinstance(value, bool):
        return value
    return str(value).strip().lower() in ("1", "true", "yes", "on")


def expand_grid(sweep: Dict[str, Any]) -> List[float]:
    """
    Expand a sweep section into its grid.

    Args:
        sweep: either {"grid": [...]} or {"start": a, "stop": b, "step": h}

    Returns:
        Grid values in order; start/stop/step grids include both ends.
    """
    if "grid" in sweep:
        try:
            return [float(v) for v in sweep["grid"]]
        except (TypeError, ValueError) as e:
            raise ConfigError(f"sweep grid must be a list of numbers: {e}") from e
    try:
        start, stop, step = float(sweep["start"]), float(sweep["stop"]), float(sweep["step"])
    except (KeyError, TypeError, ValueError) as e:
        raise ConfigError(f"sweep needs either grid or start/stop/step: {e}") from e
    if step <= 0 or stop < start:
        raise ConfigError(f"invalid sweep range start={start} stop={stop} step={step}")
    count = int(round((stop - start) / step)) + 1
    # rounding keeps printed grid values free of accumulated binary noise
    return [round(start + k * step, 12) for k in range(count)]


@dataclass
class RunConfig:
    """One run of the command line driver."""

    model: Dict[str, Any]
    capital: float
    indicator: str = "I"
    method: str = "closed_form"
    samples: int = 1_000_000
    seed: int = 12345
    penalty: Dict[str, Any] = field(default_factory=lambda: {"kind": "absolute"})
    sweep: Optional[Dict[str, Any]] = None
    mirror: Dict[str, Any] = field(default_factory=dict)
    validation: Dict[str, Any] = field(default_factory=dict)
    allocation: Optional[List[float]] = None
    output: Optional[str] = None

    def __post_init__(self):
        if not isinstance(self.model, dict) or "kind" not in self.model:
            raise ConfigError("config needs a model section with a kind")
        try:
            self.capital = float(self.capital)
            self.samples = int(self.samples)
            self.seed = int(self.seed)
        except (TypeError, ValueError) as e:
            raise ConfigError(f"invalid numeric setting: {e}") from e
        if self.capital < 0:
            raise ConfigError(f"capital must be nonnegative, got {self.capital}")
        if self.samples < 1:
            raise ConfigError(f"samples must be at least 1, got {self.samples}")
        if self.indicator not in INDICATORS:
            raise ConfigError(f"indicator must be one of {INDICATORS}, got {self.indicator!r}")
        if self.method not in METHODS:
            raise ConfigError(f"method must be one of {METHODS}, got {self.method!r}")

    @property
    def grid(self) -> List[float]:
        if not self.sweep:
            raise ConfigError("config has no sweep section")
        return expand_grid(self.sweep)

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "RunConfig":
        known = {k: data[k] for k in cls.__dataclass_fields__ if k in data}
        if "model" not in known or "capital" not in known:
            raise ConfigError("config must define model and capital")
        return cls(**known)


class ConfigManager:
    """Manages configuration settings for riskalloc."""

    def __init__(self, config_path: str = None):
        """
        Initialize the config manager.

        Args:
            config_path: Optional path to config file. If None, uses RISKALLOC_CONFIG or config.json
                and tolerates its absence.
        """
        self._explicit = config_path is not None
        self._config_path = config_path or os.environ.get('RISKALLOC_CONFIG', 'config.json')
        self._config: Dict[str, Any] = {}
        self._load_config()

    def _load_config(self):
        """Load configuration from the config file."""
        if not os.path.exists(self._config_path):
            if self._explicit:
                raise ConfigError(f"Config file {self._config_path} not found")
            logger.debug(f"Config file {self._config_path} not found. Using environment variables.")
            self._config = {}
            return
        try:
            with open(self._config_path, 'r', encoding='utf-8') as f:
                raw = json.load(f, parse_float=Decimal)
        except (OSError, ValueError) as e:
            raise ConfigError(f"Error loading config {self._config_path}: {e}") from e
        if not isinstance(raw, dict):
            raise ConfigError(f"Config {self._config_path} must hold a JSON object")
        self._config = _to_native(raw)
        logger.info(f"Loaded configuration from {self._config_path}")

    def _setting(self, key: str, env: str, default: Any) -> Any:
        if key in self._config:
            return self._config[key]
        return os.environ.get(env, default)

    @property
    def THREADS(self) -> int:
        """Worker threads for Monte Carlo chunks; RISKALLOC_THREADS caps the configured count."""
        configured = self._config.get('THREADS', os.cpu_count() or 1)
        cap = os.environ.get('RISKALLOC_THREADS')
        try:
            threads = int(configured)
            if cap is not None:
                threads = min(threads, int(cap))
        except (TypeError, ValueError) as e:
            raise ConfigError(f"THREADS must be an integer, got {configured!r} (cap {cap!r})") from e
        return max(threads, 1)

    @property
    def CHUNK_SIZE(self) -> int:
        """Samples per Monte Carlo chunk."""
        value = self._setting('CHUNK_SIZE', 'RISKALLOC_CHUNK_SIZE', DEFAULT_CHUNK_SIZE)
        try:
            size = int(value)
        except (TypeError, ValueError) as e:
            raise ConfigError(f"CHUNK_SIZE must be an integer, got {value!r}") from e
        if size < 1:
            raise ConfigError(f"CHUNK_SIZE must be positive, got {size}")
        return size

    @property
    def CACHE_BYTES(self) -> int:
        """Memory budget of the loss-chunk cache."""
        value = self._setting('CACHE_BYTES', 'RISKALLOC_CACHE_BYTES', DEFAULT_CACHE_BYTES)
        try:
            return max(int(value), 0)
        except (TypeError, ValueError) as e:
            raise ConfigError(f"CACHE_BYTES must be an integer, got {value!r}") from e

    @property
    def LOG_LEVEL(self) -> str:
        return str(self._setting('LOG_LEVEL', 'RISKALLOC_LOG_LEVEL', 'INFO')).upper()

    @property
    def LOG_JSON(self) -> bool:
        value = self._setting('LOG_JSON', 'RISKALLOC_LOG_JSON', os.environ.get('LOG_JSON', 'false'))
        return _as_bool(value)

    def run_config(self) -> RunConfig:
        """The run section of the document."""
        if not self._config:
            raise ConfigError(f"No run configuration available from {self._config_path}")
        return RunConfig.from_dict(self._config)
