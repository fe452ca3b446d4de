# --- rgbdt_segment/config.py ---
import logging
import os
from pathlib import Path

from dotenv import dotenv_values, load_dotenv

from .models import PipelineConfig, ValidationError, validate_config

load_dotenv()  # Load .env from the working directory, if present

logger = logging.getLogger(__name__)


def _env_int(name: str, default: int, minimum: int = 1) -> int:
    """Reads a positive integer setting; malformed or too-small values fall back to default."""
    raw = os.environ.get(name)
    if raw is None:
        return default
    try:
        value = int(raw)
    except ValueError:
        logger.warning(f"Ignoring {name}={raw!r}: not an integer, using {default}")
        return default
    # Zero or negative counts
    if value < minimum:
        logger.warning(f"Ignoring {name}={raw!r}: must be >= {minimum}, using {default}")
        return default
    return value


class Config:
    """Process-level settings for the rgbdt-segment CLI."""
    LOG_LEVEL = os.environ.get('RGBDT_LOG_LEVEL', 'INFO')
    MASK_FORMAT = os.environ.get('RGBDT_MASK_FORMAT', 'png')
    THREADS = _env_int('RGBDT_THREADS', 1)


def _parse_cues(text: str) -> tuple[str, ...]:
    return tuple(part.strip().lower() for part in text.split(",") if part.strip())


def _parse_optional_int(text: str):
    return None if text.strip().lower() in ("", "none") else int(text)


# Field name -> parser for the KEY=VALUE config file
FIELD_PARSERS = {
    "window_n": int,
    "foreground_threshold": float,
    "sigma_floor": float,
    "thermal_bandwidth_factor": float,
    "min_blob_area": int,
    "opening_radius": int,
    "depth_max": float,
    "warmup_frames": _parse_optional_int,
    "cues": _parse_cues,
}


def parse_config_values(values: dict) -> dict:
    """Converts raw string values keyed by PipelineConfig field name (any case) into typed kwargs."""
    parsed = {}
    for key, raw in values.items():
        name = key.strip().lower()
        # Unknown keys are errors rather than silently ignored
        if name not in FIELD_PARSERS:
            raise ValidationError(f"Unknown config key: {key}")
        if raw is None:
            raise ValidationError(f"Config key {key} has no value")
        try:
            parsed[name] = FIELD_PARSERS[name](raw)
        except ValueError as e:
            raise ValidationError(f"Invalid value for {name}: {raw!r}") from e
    return parsed


def load_pipeline_config(path=None, overrides: dict | None = None) -> PipelineConfig:
    """Builds a PipelineConfig from defaults, an optional KEY=VALUE file, then overrides.

    Overrides with value None are ignored, so unset CLI flags leave file values alone.
    """
    settings = {}
    # File values override the dataclass defaults
    if path is not None:
        path = Path(path)
        if not path.is_file():
            raise FileNotFoundError(f"Config file not found: {path}")
        settings.update(parse_config_values(dotenv_values(path)))
        logger.info(f"Loaded {len(settings)} setting(s) from {path}")
    # Then CLI flags that were actually given
    for name, value in (overrides or {}).items():
        if value is not None:
            settings[name] = value
    # --cues arrives as one comma-separated string
    if "cues" in settings and isinstance(settings["cues"], str):
        settings["cues"] = _parse_cues(settings["cues"])
    return validate_config(PipelineConfig(**settings))

