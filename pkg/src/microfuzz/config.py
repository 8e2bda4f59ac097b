"""Campaign parameters, named profiles and the campaign file format.

Times are in seconds. The ``paper`` profile carries the reference parameter
values; ``desk`` shrinks the time budgets so a full corpus campaign finishes
in minutes while keeping the GA and seeding parameters unchanged.
"""
from __future__ import annotations

import json
import os
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

from .errors import ConfigurationError
from .genetic import GAParams
from .seedgen import SeedStrategy

PROFILES: dict[str, dict[str, float]] = {
    "paper": {"psi": 5.0, "lam": 5.0, "omega": 10.0, "gamma": 60.0, "sigma": 5.0},
    "desk": {"psi": 1.0, "lam": 1.0, "omega": 0.1, "gamma": 10.0, "sigma": 0.05},
}
TIME_FIELDS = ("psi", "lam", "omega", "gamma", "sigma")


@dataclass(frozen=True)
class CampaignConfig:
    """Per-method fuzzing parameters.

    psi: seed population build budget. lam: per-measurement timeout.
    omega: runtime that flags a witness. gamma: per-method budget.
    sigma: replay wall-clock threshold for confirmation.
    """

    psi: float = 5.0
    lam: float = 5.0
    omega: float = 10.0
    gamma: float = 60.0
    sigma: float = 5.0
    ga: GAParams = field(default_factory=GAParams)
    strategy: SeedStrategy = field(default_factory=SeedStrategy)
    clock_hz: float | None = None
    cpu_bound_threshold: float = 0.9
    profile: str = "custom"
    max_seed_attempts: int | None = None
    store_args: bool = False

    def __post_init__(self):
        for name in ("psi", "lam", "omega", "sigma"):
            if not getattr(self, name) > 0:
                raise ConfigurationError(f"{name} must be > 0")
        if self.gamma < 0:
            raise ConfigurationError("gamma must be >= 0")
        if self.sigma > self.omega:
            raise ConfigurationError(f"sigma ({self.sigma}) must not exceed omega ({self.omega})")
        if not 0 < self.cpu_bound_threshold <= 1:
            raise ConfigurationError("cpu_bound_threshold must lie in (0, 1]")
        if self.clock_hz is not None and self.clock_hz <= 0:
            raise ConfigurationError("clock_hz must be positive")

    @property
    def alpha(self) -> float:
        return self.strategy.alpha

    def with_strategy(self, kind: str) -> "CampaignConfig":
        return replace(self, strategy=replace(self.strategy, kind=kind))

    def to_json(self) -> dict:
        d = {k: getattr(self, k) for k in TIME_FIELDS}
        d.update(
            ga=self.ga.to_json(), strategy=self.strategy.to_json(), clock_hz=self.clock_hz,
            cpu_bound_threshold=self.cpu_bound_threshold, profile=self.profile,
            max_seed_attempts=self.max_seed_attempts, store_args=self.store_args,
        )
        return d

    @classmethod
    def from_json(cls, d: dict) -> "CampaignConfig":
        d = dict(d)
        ga = GAParams(**d.pop("ga", {}))
        strategy = SeedStrategy.from_json(d.pop("strategy", {}))
        return cls(ga=ga, strategy=strategy, **d)


def profile(name: str, **overrides) -> CampaignConfig:
    if name not in PROFILES:
        raise ConfigurationError(f"unknown profile {name!r}; choose from {sorted(PROFILES)}")
    try:
        return CampaignConfig(**{**PROFILES[name], "profile": name, **overrides})
    except (TypeError, ValueError) as e:
        raise ConfigurationError(str(e)) from e


@dataclass
class CampaignSpec:
    """Everything needed to run one campaign, as read from a campaign file."""

    config: CampaignConfig
    registry: str = "microfuzz.corpus:REGISTRY"
    include: list[str] = field(default_factory=lambda: ["*"])
    exclude: list[str] = field(default_factory=lambda: ["bench/*"])
    strategies: list[str] = field(default_factory=lambda: ["ivi", "sri"])
    seed: int = 0
    workers: int | None = None
    store: str = "runs/campaign"
    clock: dict = field(default_factory=lambda: {"kind": "real"})
    validate: bool = True
    pinning: str = "auto"
    faults: dict = field(default_factory=dict)

    def __post_init__(self):
        for s in self.strategies:
            if s not in ("ivi", "sri"):
                raise ConfigurationError(f"unknown strategy {s!r}")
        if self.pinning not in ("auto", "require", "off"):
            raise ConfigurationError(f"unknown pinning mode {self.pinning!r}")
        if self.workers is not None and self.workers < 1:
            raise ConfigurationError("workers must be >= 1")

    def to_json(self) -> dict:
        d = asdict(self)
        d["config"] = self.config.to_json()
        return d


def parse_campaign(data: dict, env: dict | None = None) -> CampaignSpec:
    env = os.environ if env is None else env
    data = dict(data)
    name = env.get("MICROFUZZ_PROFILE") or data.pop("profile", "desk")
    data.pop("profile", None)
    params = dict(data.pop("params", {}))
    if "strategy" in data:
        params["strategy"] = SeedStrategy.from_json(data.pop("strategy"))
    if "ga" in data:
        params["ga"] = GAParams(**data.pop("ga"))
    for key in ("clock_hz", "cpu_bound_threshold", "max_seed_attempts", "store_args"):
        if key in data:
            params[key] = data.pop(key)
    try:
        if name == "custom":
            config = CampaignConfig(**params)
        else:
            config = profile(name, **params)
        return CampaignSpec(config=config, **data)
    except (TypeError, ValueError) as e:
        raise ConfigurationError(f"invalid campaign file: {e}") from e


def load_campaign(path: str | Path, env: dict | None = None) -> CampaignSpec:
    try:
        data = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as e:
        raise ConfigurationError(f"cannot read campaign file {path}: {e}") from e
    return parse_campaign(data, env)
