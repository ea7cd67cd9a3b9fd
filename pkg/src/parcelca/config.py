"""Run configuration file (JSON)."""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

from .calibration import Coefficients, load_coefficients
from .engine import CaParams, QUOTA_BASES
from .errors import ConfigError
from .neighbors import NEIGHBOR_MODES
from .scenarios import ScenarioKind, ScenarioSpec


@dataclass
class RunConfig:
    scenario: str = "BAU"
    horizon_years: int = 5
    beta: float = 1.0
    p_threshold: float = 0.01
    seed: int = 0
    disturbance: str = "on"
    coefficients_path: str | None = None
    custom_rates: dict[str, float] = field(default_factory=dict)
    radius_m: float = 500.0
    neighbor_mode: str = "boundary"
    exclusion_threshold: float = 0.5
    quota_base: str = "table"
    base_year: int = 2012
    target_crs: str | None = None

    def __post_init__(self):
        try:
            ScenarioKind(self.scenario)
        except ValueError:
            raise ConfigError(f"unknown scenario {self.scenario!r}") from None
        if self.disturbance not in ("on", "off"):
            raise ConfigError(f"disturbance must be 'on' or 'off', got {self.disturbance!r}")
        if self.neighbor_mode not in NEIGHBOR_MODES:
            raise ConfigError(f"neighbor_mode must be one of {NEIGHBOR_MODES}")
        if self.quota_base not in QUOTA_BASES:
            raise ConfigError(f"quota_base must be one of {QUOTA_BASES}")
        if not (math.isfinite(self.radius_m) and self.radius_m > 0):
            raise ConfigError("radius_m must be positive")
        if not 0 <= self.exclusion_threshold <= 1:
            raise ConfigError("exclusion_threshold must lie in [0, 1]")
        if isinstance(self.seed, bool) or not isinstance(self.seed, int) or self.seed < 0:
            raise ConfigError(f"seed must be a non-negative integer, got {self.seed!r}")

    def scenario_spec(self) -> ScenarioSpec:
        return ScenarioSpec(ScenarioKind(self.scenario), self.horizon_years, dict(self.custom_rates))

    def coefficients(self, base_dir: Path | None = None) -> Coefficients:
        if self.coefficients_path is None:
            return Coefficients()
        path = Path(self.coefficients_path)
        if base_dir is not None and not path.is_absolute():
            path = base_dir / path
        return load_coefficients(path)

    def ca_params(self, base_dir: Path | None = None) -> CaParams:
        return CaParams(
            coefficients=self.coefficients(base_dir),
            beta=self.beta,
            p_threshold=self.p_threshold,
            rng_seed=self.seed,
            disturbance=self.disturbance == "on",
            quota_base=self.quota_base,
            base_year=self.base_year,
        )

    def snapshot(self) -> dict:
        return asdict(self)


def load_config(path) -> RunConfig:
    try:
        data = json.loads(Path(path).read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"{path}: {exc}") from None
    if not isinstance(data, dict):
        raise ConfigError(f"{path}: expected a JSON object")
    known = {f.name for f in fields(RunConfig)}
    unknown = sorted(set(data) - known)
    if unknown:
        raise ConfigError(f"{path}: unknown keys {unknown}")
    try:
        return RunConfig(**data)
    except TypeError as exc:
        raise ConfigError(f"{path}: {exc}") from None
