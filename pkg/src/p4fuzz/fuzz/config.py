"""Campaign configuration: JSON or ``key = value`` text."""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path

from ..errors import ConfigError

STRATEGIES = ("magic", "table", "repeat", "random")


@dataclass(frozen=True)
class MutationConfig:
    p_magic: float = 0.4
    p_table: float = 0.4
    p_repeat: float = 0.05
    p_random: float = 0.15
    max_chain: int = 3
    recirculation: int = 0
    width_cap: int | None = None

    def validate(self) -> "MutationConfig":
        probs = {n: getattr(self, f"p_{n}") for n in STRATEGIES}
        for name, p in probs.items():
            if not isinstance(p, (int, float)) or not 0.0 <= p <= 1.0:
                raise ConfigError(f"p_{name} must be a probability in [0, 1], got {p!r}")
        total = math.fsum(probs.values())
        if abs(total - 1.0) > 1e-9:
            raise ConfigError(f"p_magic + p_table + p_repeat + p_random must sum to 1, got {total:g}")
        if not isinstance(self.max_chain, int) or self.max_chain < 1:
            raise ConfigError(f"max_chain must be an integer >= 1, got {self.max_chain!r}")
        if not isinstance(self.recirculation, int) or self.recirculation < 0:
            raise ConfigError(f"recirculation must be an integer >= 0, got {self.recirculation!r}")
        if self.width_cap is not None and (not isinstance(self.width_cap, int) or self.width_cap < 1):
            raise ConfigError(f"width_cap must be a positive integer, got {self.width_cap!r}")
        return self

    def weights(self) -> list[float]:
        return [getattr(self, f"p_{n}") for n in STRATEGIES]


@dataclass(frozen=True)
class CampaignConfig:
    program: str | None = None
    entries: str | None = None
    cp_script: str | None = None
    assertions: tuple[str, ...] = ()
    mutation: MutationConfig = field(default_factory=MutationConfig)
    iterations: int | None = 100_000
    time_budget: float | None = None  # seconds
    seed: int = 0
    buggy_multicast_default_action: bool = False
    bloom_m: int = 1 << 20
    bloom_k: int = 4
    max_depth: int = 4
    magic_values: bool = True
    coverage_guidance: bool = True
    stop_on_violation: bool = False
    stop_on_full_coverage: bool = True
    max_header_width: int = 512
    report: str | None = None
    coverage_csv: str | None = None

    def validate(self) -> "CampaignConfig":
        self.mutation.validate()
        if self.iterations is not None and (not isinstance(self.iterations, int) or self.iterations < 0):
            raise ConfigError(f"iterations must be a non-negative integer, got {self.iterations!r}")
        if self.time_budget is not None and (not isinstance(self.time_budget, (int, float))
                                             or self.time_budget < 0):
            raise ConfigError(f"time_budget must be a non-negative number, got {self.time_budget!r}")
        if not isinstance(self.bloom_m, int) or self.bloom_m < 8:
            raise ConfigError(f"bloom_m must be an integer >= 8, got {self.bloom_m!r}")
        if not isinstance(self.bloom_k, int) or self.bloom_k < 1:
            raise ConfigError(f"bloom_k must be an integer >= 1, got {self.bloom_k!r}")
        if not isinstance(self.max_depth, int) or self.max_depth < 1:
            raise ConfigError(f"max_depth must be an integer >= 1, got {self.max_depth!r}")
        if not isinstance(self.seed, int):
            raise ConfigError(f"seed must be an integer, got {self.seed!r}")
        return self

    def to_dict(self) -> dict:
        d = asdict(self)
        d["assertions"] = list(self.assertions)
        return d

    def resolve_paths(self, base: Path) -> "CampaignConfig":
        """Make file references relative to ``base`` absolute."""
        def fix(p):
            return None if p is None else str((base / p).resolve()) if not Path(p).is_absolute() else p
        return replace(self, program=fix(self.program), entries=fix(self.entries),
                       cp_script=fix(self.cp_script), report=fix(self.report),
                       coverage_csv=fix(self.coverage_csv))


_MUTATION_KEYS = {f.name for f in fields(MutationConfig)}
_CAMPAIGN_KEYS = {f.name for f in fields(CampaignConfig)} - {"mutation"}
_BOOL = {"true": True, "yes": True, "on": True, "1": True,
         "false": False, "no": False, "off": False, "0": False}


def _coerce(key: str, value, kind):
    if value is None or (isinstance(value, str) and value.lower() in ("none", "null", "")):
        return None
    if kind is bool:
        if isinstance(value, bool):
            return value
        try:
            return _BOOL[str(value).lower()]
        except KeyError:
            raise ConfigError(f"{key} must be a boolean, got {value!r}") from None
    if kind is int:
        if isinstance(value, bool):
            raise ConfigError(f"{key} must be an integer, got {value!r}")
        if isinstance(value, float) and value.is_integer():
            return int(value)
        try:
            return int(value, 0) if isinstance(value, str) else int(value)
        except (TypeError, ValueError):
            try:
                f = float(value)
            except (TypeError, ValueError):
                raise ConfigError(f"{key} must be an integer, got {value!r}") from None
            if not f.is_integer():
                raise ConfigError(f"{key} must be an integer, got {value!r}") from None
            return int(f)
    if kind is float:
        try:
            return float(value)
        except (TypeError, ValueError):
            raise ConfigError(f"{key} must be a number, got {value!r}") from None
    if kind is tuple:
        if isinstance(value, str):
            return tuple(s.strip() for s in value.split(";") if s.strip())
        return tuple(value)
    return str(value)


_KINDS = {
    "p_magic": float, "p_table": float, "p_repeat": float, "p_random": float,
    "max_chain": int, "recirculation": int, "width_cap": int,
    "program": str, "entries": str, "cp_script": str, "assertions": tuple,
    "iterations": int, "time_budget": float, "seed": int,
    "buggy_multicast_default_action": bool, "bloom_m": int, "bloom_k": int, "max_depth": int,
    "magic_values": bool, "coverage_guidance": bool, "stop_on_violation": bool,
    "stop_on_full_coverage": bool, "max_header_width": int, "report": str, "coverage_csv": str,
}


def config_from_mapping(data: dict) -> CampaignConfig:
    mut, camp = {}, {}
    flat = dict(data)
    nested = flat.pop("mutation", None) or {}
    if not isinstance(nested, dict):
        raise ConfigError("mutation must be a mapping")
    flat.update(nested)
    for key, value in flat.items():
        if key in _MUTATION_KEYS:
            mut[key] = _coerce(key, value, _KINDS[key])
        elif key in _CAMPAIGN_KEYS:
            camp[key] = _coerce(key, value, _KINDS[key])
        else:
            raise ConfigError(f"unknown config key {key!r}")
    for key in ("p_magic", "p_table", "p_repeat", "p_random", "max_chain", "recirculation"):
        if key in mut and mut[key] is None:
            raise ConfigError(f"{key} may not be empty")
    return CampaignConfig(mutation=MutationConfig(**mut), **camp).validate()


def parse_config_text(text: str) -> CampaignConfig:
    stripped = text.lstrip()
    if stripped.startswith("{"):
        try:
            data = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"invalid JSON config: {exc}") from None
        return config_from_mapping(data)
    data = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        if not sep:
            raise ConfigError(f"line {lineno}: expected key = value")
        key = key.strip()
        if key == "assertion":
            data.setdefault("assertions", []).append(value.strip())
            continue
        data[key] = value.strip()
    return config_from_mapping(data)


def load_config(path: str | Path) -> CampaignConfig:
    path = Path(path)
    return parse_config_text(path.read_text()).resolve_paths(path.parent)
