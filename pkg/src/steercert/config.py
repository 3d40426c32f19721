"""Run configuration for the command-line front end.

A run is described by a single JSON document; command-line flags override
individual fields.  Configs hash deterministically so every output artifact
can embed the exact configuration that produced it.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
from dataclasses import dataclass, field

ARTIFACT_VERSION = "1"

SOURCES = ("tms", "split_sms", "experiment_model", "external_G")


class ConfigError(ValueError):
    """Malformed run configuration; message names the offending field."""


@dataclass
class RunConfig:
    source: str = "tms"
    squeezing_db: float = -4.0
    eta: float = 1.0
    noise_snu: float = 0.0
    num_outcomes_alice: int = 8
    period_q: float | None = 3.0
    period_scan: list | None = None  # [min, max, step]
    num_outcomes_bob: int = 16
    num_settings_bob: int = 2
    tomography: bool = False
    cutoff: int = 15
    target_setting: int = 0
    half_range_bob: float | None = None  # override for r (default 5 sigma)
    eta_grid: list | None = None
    cutoff_list: list | None = None
    external_g: list | None = None  # 4x4 nested list when source == external_G
    solver: str = "auto"
    gap_tol: float = 1e-6
    feas_tol: float = 1e-6
    seed: int = 0
    samples_per_pair: int = 16000
    output: str | None = None
    jobs: int = 1

    def validate(self) -> None:
        if self.source not in SOURCES:
            raise ConfigError(f"source: must be one of {SOURCES}, got {self.source!r}")
        if not 0.0 <= self.eta <= 1.0:
            raise ConfigError(f"eta: must lie in [0, 1], got {self.eta}")
        if self.noise_snu < 0.0:
            raise ConfigError(f"noise_snu: must be non-negative, got {self.noise_snu}")
        if self.num_outcomes_alice < 2:
            raise ConfigError("num_outcomes_alice: must be at least 2")
        if self.num_outcomes_bob < 2:
            raise ConfigError("num_outcomes_bob: must be at least 2")
        if self.num_settings_bob < 1:
            raise ConfigError("num_settings_bob: must be at least 1")
        if self.cutoff < 1:
            raise ConfigError("cutoff: must be at least 1")
        if self.period_q is not None and self.period_q <= 0:
            raise ConfigError("period_q: must be positive")
        if self.period_scan is not None:
            if len(self.period_scan) != 3 or self.period_scan[0] <= 0:
                raise ConfigError("period_scan: expected [min, max, step] with min > 0")
        if self.target_setting not in (0, 1):
            raise ConfigError("target_setting: must be 0 (q) or 1 (p)")
        if self.source == "external_G":
            g = self.external_g
            if g is None or len(g) != 4 or any(len(row) != 4 for row in g):
                raise ConfigError("external_g: 4x4 matrix required for source external_G")
        if self.solver not in ("auto", "clarabel", "scs", "cvxopt"):
            raise ConfigError(f"solver: unknown solver {self.solver!r}")
        if self.samples_per_pair < 1:
            raise ConfigError("samples_per_pair: must be positive")

    def to_json(self) -> str:
        return json.dumps(dataclasses.asdict(self), indent=2, sort_keys=True)

    @staticmethod
    def from_json(text: str) -> "RunConfig":
        try:
            data = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config: invalid JSON ({exc})") from exc
        if not isinstance(data, dict):
            raise ConfigError("config: top-level JSON object required")
        known = {f.name for f in dataclasses.fields(RunConfig)}
        unknown = set(data) - known
        if unknown:
            raise ConfigError(f"config: unknown fields {sorted(unknown)}")
        cfg = RunConfig(**data)
        cfg.validate()
        return cfg

    def digest(self) -> str:
        return hashlib.sha256(self.to_json().encode()).hexdigest()[:16]

    def stamp(self) -> dict:
        """Provenance fields embedded in every output artifact."""
        return {"config_hash": self.digest(), "artifact_version": ARTIFACT_VERSION}
