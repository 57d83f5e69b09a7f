"""Configuration loading: packaged YAML defaults plus environment overrides."""

import logging
import os
from functools import lru_cache
from pathlib import Path
from typing import Any, Dict, Optional

import yaml
from pydantic import BaseModel, ConfigDict, Field

from gw_border.errors import InvalidInputError

logger = logging.getLogger(__name__)

DEFAULTS_PATH = Path(__file__).parent / "config" / "defaults.yaml"


class _Section(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")


class CliSettings(_Section):
    trunc: int = Field(256, ge=0)
    format: str = "csv"
    seed: int = Field(0, ge=0)
    threads: int = Field(1, ge=1)
    precision: int = Field(15, ge=1, le=17)
    schema_id: str = Field("gw-border/1", alias="schema")
    output_dir: str = "outputs"
    log_level: str = "WARNING"


class SeriesSettings(_Section):
    kronecker_threshold: int = Field(24, ge=1)


class FamilySettings(_Section):
    apex_rtol: float = 1e-14
    apex_max_iter: int = 200
    apex_radius_margin: float = Field(1e-9, gt=0.0, lt=1.0)
    tail_tolerance: float = 1e-16
    max_terms: int = 100000


class BorderSettings(_Section):
    max_scalar_k: int = 10000
    max_series_k: int = 512
    max_binary_k: int = 60


class OracleSettings(_Section):
    max_n: int = 14


class SamplerSettings(_Section):
    streams: int = Field(16, ge=1)
    ci_z: float = 1.959964
    offspring_tail: float = 1e-15
    node_cap_factor: int = Field(10, ge=1)
    attempt_factor: int = 20


class Settings(_Section):
    cli: CliSettings = CliSettings()
    series: SeriesSettings = SeriesSettings()
    family: FamilySettings = FamilySettings()
    border: BorderSettings = BorderSettings()
    oracle: OracleSettings = OracleSettings()
    sampler: SamplerSettings = SamplerSettings()


def _env_overrides(raw: Dict[str, Any]) -> Dict[str, Any]:
    cli = dict(raw.get("cli") or {})
    threads = os.getenv("GW_BORDER_THREADS")
    if threads:
        try:
            cli["threads"] = int(threads)
        except ValueError:
            raise InvalidInputError(f"GW_BORDER_THREADS must be an integer, got {threads!r}")
    level = os.getenv("GW_BORDER_LOG_LEVEL")
    if level:
        cli["log_level"] = level.upper()
    output_dir = os.getenv("GW_BORDER_OUTPUT_DIR")
    if output_dir:
        cli["output_dir"] = output_dir
    return {**raw, "cli": cli}


def load_settings(path: Optional[Path] = None) -> Settings:
    """
    Read settings from a YAML file and apply environment overrides.

    Args:
        path: YAML file to read (default: the packaged config/defaults.yaml)

    Returns:
        Frozen Settings model
    """
    source = Path(path) if path else DEFAULTS_PATH
    try:
        with open(source, "r", encoding="utf-8") as handle:
            raw = yaml.safe_load(handle) or {}
    except FileNotFoundError:
        logger.warning("[Settings] %s not found, using built-in defaults", source)
        raw = {}
    except yaml.YAMLError as e:
        raise InvalidInputError(f"Invalid settings file {source}: {e}")
    return Settings.model_validate(_env_overrides(raw))


@lru_cache(maxsize=1)
def get_settings() -> Settings:
    return load_settings()
