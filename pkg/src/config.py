"""
Chemoreact Configuration

Runtime settings come from the environment (prefix CHEMOREACT_) or a .env file.
Parameter and sweep files share one flat `key = value` format read here.
"""
import os
from typing import Dict, List

from dotenv import dotenv_values
from pydantic_settings import BaseSettings, SettingsConfigDict

from .errors import ConfigurationError


class Settings(BaseSettings):
    # Logging / output
    log_level: str = "info"
    output_dir: str = "runs"
    db_path: str = "chemoreact.db"

    # 2D solver
    cells_per_unit: int = 8  # 16 cells across the unit ball
    cfl_safety: float = 0.9
    record_mass_fraction: float = 0.005  # mass2 change between diagnostic samples
    drift_refresh_fraction: float = 1e-3  # recompute grad c after this relative mass2 change
    exact_drift: bool = False
    probe_count: int = 8
    wall_clock_budget_s: float = 3600.0

    # Radial solvers
    radial_cells_per_r0: int = 10
    radial_extent_factor: float = 4.0  # r_max = factor * R0

    # Verification
    domination_angles: int = 256
    domination_sample_cells: int = 48  # per side on [-1, 1]^2
    domination_random_members: int = 50
    domination_extremal_sets: int = 10

    # Sweeps
    sweep_workers: int = 2
    baseline_horizon_factor: float = 50.0
    baseline_min_horizon: float = 1.0

    model_config = SettingsConfigDict(
        env_file=".env",
        env_file_encoding="utf-8",
        env_prefix="CHEMOREACT_",
        extra="ignore",  # Allow extra env vars without error
    )


settings = Settings()


def read_flat_file(path: str) -> Dict[str, str]:
    """
    Read a flat `key = value` config file.

    Blank lines and `#` comments are skipped. Keys are case sensitive (L and l differ).
    """
    if not os.path.exists(path):
        raise ConfigurationError(f"Config file not found: {path}")

    raw = dotenv_values(path)
    values = {}
    for key, value in raw.items():
        if value is None:
            raise ConfigurationError(f"Key without value in {path}: {key}")
        values[key.strip()] = value.strip()
    return values


def parse_list(text: str) -> List[str]:
    """Split a comma separated value into trimmed items."""
    return [item.strip() for item in text.split(",") if item.strip()]


def format_flat(values: Dict[str, object]) -> str:
    """Inverse of read_flat_file for scalar values."""
    lines = []
    for key, value in values.items():
        if isinstance(value, float):
            value = repr(value)
        lines.append(f"{key} = {value}")
    return "\n".join(lines) + "\n"
