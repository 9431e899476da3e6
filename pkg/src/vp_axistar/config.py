"""Run configuration: a JSON file plus command-line flag overrides.

The resolved configuration is embedded verbatim in every run manifest so
outputs are reproducible from their own metadata.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

from .profiles import MU_MAX, MU_MIN


class ConfigError(ValueError):
    pass


@dataclass
class RunConfig:
    mu: float = 1.0
    psi_kind: str = "skewed-rational"
    psi_params: dict = field(default_factory=lambda: {"b": 0.5})
    gamma_max: float = 0.25
    gamma_steps: int = 8
    nr: int | None = None  # spherical grid (auto-scaled with mu when None)
    nr_c: int = 64  # deformation collocation radii
    max_degree: int = 8  # retained even Legendre degrees
    polar_nodes: int = 32
    newton_tol: float = 5e-7
    newton_max_iter: int = 8
    quad_outer: int = 24
    quad_inner: int = 24
    base_tol: float = 1e-12
    out_dir: str = "out"
    seed: int = 0
    n_orbits: int = 12

    def validate(self) -> "RunConfig":
        if not (MU_MIN < self.mu < MU_MAX):
            raise ConfigError(f"mu must lie in ({MU_MIN}, {MU_MAX}), got {self.mu}")
        if self.psi_kind not in ("even-gaussian", "skewed-rational", "custom-table"):
            raise ConfigError(f"unknown psi kind {self.psi_kind!r}")
        if self.gamma_steps < 1:
            raise ConfigError("gamma_steps must be at least 1")
        if self.max_degree % 2 != 0 or self.max_degree < 0:
            raise ConfigError("max_degree must be a nonnegative even integer")
        if self.polar_nodes < self.max_degree + 1:
            raise ConfigError("polar_nodes must exceed max_degree")
        if self.newton_tol <= 0 or self.base_tol <= 0:
            raise ConfigError("tolerances must be positive")
        if self.quad_outer < 1 or self.quad_inner < 1:
            raise ConfigError("quadrature orders must be positive")
        if self.nr_c < 8:
            raise ConfigError("nr_c too small for a cubic collocation basis")
        if self.nr is not None and self.nr < 32:
            raise ConfigError("nr too small")
        return self

    @classmethod
    def from_json(cls, path) -> "RunConfig":
        data = json.loads(Path(path).read_text())
        unknown = set(data) - set(cls.__dataclass_fields__)
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        return cls(**data).validate()

    def with_overrides(self, **overrides) -> "RunConfig":
        data = asdict(self)
        for key, value in overrides.items():
            if value is not None:
                data[key] = value
        return RunConfig(**data).validate()

    def resolved(self) -> dict:
        return asdict(self)

    def make_profiles(self, e0: float):
        from .profiles import PolytropeProfile, Profiles, make_rotation

        rotation = make_rotation(self.psi_kind, **self.psi_params)
        return Profiles(
            PolytropeProfile(self.mu, e0), rotation, self.quad_outer, self.quad_inner
        )
