#!/usr/bin/env python3
"""
Configuration module for the biharmonic wave map simulator.
Handles environment setup, logging, and the flat key = value simulation config format.
"""

import logging
import math
import os
from pathlib import Path
from typing import Any, Callable, Dict, List, Optional, Tuple, Union

from dotenv import load_dotenv
from pydantic import ValidationError

from src.exceptions import ConfigError
from src.models.sim_models import SimConfig

# Configure logging
logging.basicConfig(
    level=os.getenv("LOG_LEVEL", "INFO").upper(),
    format='%(asctime)s - %(name)s - %(levelname)s - %(message)s'
)
logger = logging.getLogger("biwave.config")

# Load environment variables
load_dotenv()

# Constants
PROJECT_NAME = "biwave"
VERSION = "1.0.0"

DT_FACTOR = 0.1
DT_CAP = 1e-3
DT_ADVISORY_FACTOR = 0.25

CONFIG_BEGIN = "# --- biwave config ---"
CONFIG_END = "# --- end config ---"


def get_fft_workers() -> int:
    """
    Get the number of scipy.fft workers for intra-run parallelism.

    Returns:
        int: Value of BIWAVE_THREADS, or 1 when unset or invalid
    """
    raw = os.getenv("BIWAVE_THREADS", "1")
    try:
        workers = int(raw)
    except ValueError:
        logger.warning(f"Ignoring invalid BIWAVE_THREADS={raw!r}")
        return 1
    return max(workers, 1)


def default_dt(epsilon: float) -> float:
    """Default time step: 0.1*sqrt(eps), capped at 1e-3."""
    return min(DT_FACTOR * math.sqrt(epsilon), DT_CAP)


def _as_list(convert: Callable[[str], Any]) -> Callable[[str], Tuple[Any, ...]]:
    def parse(value: str) -> Tuple[Any, ...]:
        items = [item.strip() for item in value.split(",")]
        if not items or any(not item for item in items):
            raise ValueError(f"expected a comma-separated list, got {value!r}")
        return tuple(convert(item) for item in items)
    return parse


def _as_bool(value: str) -> bool:
    lowered = value.lower()
    if lowered in ("true", "1", "yes"):
        return True
    if lowered in ("false", "0", "no"):
        return False
    raise ValueError(f"expected a boolean, got {value!r}")


def _as_int(value: str) -> int:
    # accept "1e3"-free integer spellings only
    return int(value)


# key -> (model path, converter)
CONFIG_KEYS: Dict[str, Tuple[Tuple[str, ...], Callable[[str], Any]]] = {
    "grid.n": (("grid", "n"), _as_int),
    "grid.points": (("grid", "points"), _as_list(_as_int)),
    "grid.lengths": (("grid", "lengths"), _as_list(float)),
    "target.l": (("l",), _as_int),
    "penalty.epsilon": (("integrator", "penalty", "epsilon"), float),
    "penalty.chi_lo": (("integrator", "penalty", "chi_lo"), float),
    "penalty.chi_hi": (("integrator", "penalty", "chi_hi"), float),
    "integrator.scheme": (("integrator", "scheme"), str),
    "integrator.dt": (("integrator", "dt"), float),
    "integrator.variant": (("integrator", "variant"), str),
    "integrator.dealias": (("integrator", "dealias"), _as_bool),
    "initial.generator": (("initial", "generator"), str),
    "initial.k": (("initial", "k"), _as_list(_as_int)),
    "initial.omega": (("initial", "omega"), float),
    "initial.phase": (("initial", "phase"), float),
    "initial.p1": (("initial", "p1"), _as_list(float)),
    "initial.p2": (("initial", "p2"), _as_list(float)),
    "initial.max_mode": (("initial", "max_mode"), _as_int),
    "initial.amplitude": (("initial", "amplitude"), float),
    "initial.velocity_amplitude": (("initial", "velocity_amplitude"), float),
    "initial.normal_velocity": (("initial", "normal_velocity"), float),
    "initial.seed": (("initial", "seed"), _as_int),
    "initial.smooth_modes": (("initial", "smooth_modes"), _as_int),
    "run.T": (("T",), float),
    "run.sample_every": (("sample_every",), _as_int),
    "output.diagnostics": (("output", "diagnostics"), str),
    "output.snapshots": (("output", "snapshots"), str),
}

REQUIRED_KEYS = ("grid.n", "grid.points", "grid.lengths", "penalty.epsilon", "run.T")

_PATH_TO_KEY = {path: key for key, (path, _) in CONFIG_KEYS.items()}


def extract_embedded_config(text: str) -> str:
    """
    Return the config block embedded in a diagnostics file, or text unchanged.

    Args:
        text: Contents of a config file or a diagnostics file

    Returns:
        str: Plain key = value config text
    """
    lines = text.splitlines()
    if CONFIG_BEGIN not in (line.strip() for line in lines):
        return text
    block: List[str] = []
    inside = False
    for line in lines:
        stripped = line.strip()
        if stripped == CONFIG_BEGIN:
            inside = True
            continue
        if stripped == CONFIG_END:
            break
        if inside:
            block.append(stripped[1:].strip() if stripped.startswith("#") else stripped)
    return "\n".join(block)


def parse_config_text(text: str) -> Dict[str, Tuple[str, int]]:
    """
    Parse flat key = value lines.

    Args:
        text: Config text with '#' comments

    Returns:
        Dict[str, Tuple[str, int]]: key -> (raw value, 1-based line number)
    """
    entries: Dict[str, Tuple[str, int]] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"expected 'key = value', got {raw.strip()!r}", lineno)
        key, value = (part.strip() for part in line.split("=", 1))
        if key not in CONFIG_KEYS:
            raise ConfigError(f"unknown key {key!r}", lineno)
        if key in entries:
            raise ConfigError(f"duplicate key {key!r} (first set on line {entries[key][1]})", lineno)
        if not value:
            raise ConfigError(f"missing value for {key!r}", lineno)
        entries[key] = (value, lineno)
    return entries


def _set_path(target: Dict[str, Any], path: Tuple[str, ...], value: Any) -> None:
    for part in path[:-1]:
        target = target.setdefault(part, {})
    target[path[-1]] = value


def build_sim_config(entries: Dict[str, Tuple[str, int]]) -> SimConfig:
    """
    Convert parsed entries into a validated SimConfig, filling defaults.

    Args:
        entries: Output of parse_config_text

    Returns:
        SimConfig: The resolved configuration
    """
    for key in REQUIRED_KEYS:
        if key not in entries:
            raise ConfigError(f"missing required key {key!r}")

    data: Dict[str, Any] = {}
    for key, (raw, lineno) in entries.items():
        path, convert = CONFIG_KEYS[key]
        try:
            value = convert(raw)
        except ValueError as e:
            raise ConfigError(f"bad value for {key!r}: {e}", lineno) from e
        _set_path(data, path, value)

    grid = data.get("grid", {})
    n = grid.get("n")
    for name in ("points", "lengths"):
        values = grid.get(name)
        if isinstance(n, int) and values is not None and len(values) == 1 and n > 1:
            grid[name] = values * n

    integrator = data.setdefault("integrator", {})
    if "dt" not in integrator:
        epsilon = integrator["penalty"]["epsilon"]
        # an invalid epsilon is reported by validation below
        integrator["dt"] = default_dt(epsilon) if epsilon > 0 else DT_CAP

    try:
        return SimConfig.model_validate(data)
    except ValidationError as e:
        first = e.errors()[0]
        loc = tuple(str(part) for part in first["loc"])
        lineno = None
        for depth in range(len(loc), 0, -1):
            key = _PATH_TO_KEY.get(loc[:depth])
            if key in entries:
                lineno = entries[key][1]
                break
        raise ConfigError(f"invalid configuration at {'.'.join(loc) or 'root'}: {first['msg']}", lineno) from e


def load_sim_config(path: Union[str, Path]) -> SimConfig:
    """
    Load a simulation config from a config file or a diagnostics file with an embedded config.

    Args:
        path: File to read

    Returns:
        SimConfig: The resolved configuration
    """
    try:
        text = Path(path).read_text()
    except OSError as e:
        raise ConfigError(f"cannot read config {path}: {e}") from e
    config = build_sim_config(parse_config_text(extract_embedded_config(text)))
    logger.info(f"Loaded configuration from {path}")
    return config


def _format_value(value: Any) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    if isinstance(value, (tuple, list)):
        return ", ".join(_format_value(item) for item in value)
    if hasattr(value, "value"):
        return str(value.value)
    return str(value)


def dump_sim_config(config: SimConfig) -> List[str]:
    """
    Render a resolved config as key = value lines that load back to the same config.

    Args:
        config: The configuration

    Returns:
        List[str]: One line per set key
    """
    data = config.model_dump()
    lines = []
    for key, (path, _) in CONFIG_KEYS.items():
        value: Any = data
        for part in path:
            value = value.get(part) if isinstance(value, dict) else None
        if value is None:
            continue
        lines.append(f"{key} = {_format_value(value)}")
    return lines


def check_dt_guidance(config: SimConfig) -> bool:
    """
    Warn when dt exceeds the advisory 0.25*sqrt(eps) bound of the splitting scheme.

    Returns:
        bool: True when the guidance holds
    """
    epsilon = config.integrator.penalty.epsilon
    bound = DT_ADVISORY_FACTOR * math.sqrt(epsilon)
    if config.integrator.dt > bound:
        logger.warning(
            f"dt={config.integrator.dt!r} exceeds the recommended 0.25*sqrt(eps)={bound:.3e} for eps={epsilon!r}; proceeding"
        )
        return False
    return True
