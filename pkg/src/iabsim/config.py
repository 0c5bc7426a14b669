"""Experiment configuration: typed container, TOML ingestion, validation.

Defaults reproduce the evaluation parameter table (30 GHz carrier, 1 GHz
bandwidth, 500 m macro ISD, 40/33/23/23 dBm transmit powers, 25/10/3/1.5 m
antenna heights, 7/10 dB noise margins).
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
import sys
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Any

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib


class ConfigError(ValueError):
    """Invalid configuration value, key, or combination."""


class ArchMode(str, Enum):
    PROPOSED = "proposed"
    THREE_GPP = "3gpp"

    @classmethod
    def parse(cls, value: "ArchMode | str") -> "ArchMode":
        if isinstance(value, ArchMode):
            return value
        v = str(value).strip().lower()
        for mode in cls:
            if v == mode.value:
                return mode
        raise ConfigError(f"arch_mode must be one of {[m.value for m in cls]}, got {value!r}")


@dataclass(frozen=True)
class RoleDbm:
    """Transmit power per base-station role, dBm."""
    macro: float = 40.0
    outdoor_iab: float = 33.0
    indoor_iab: float = 23.0
    vmr: float = 23.0


@dataclass(frozen=True)
class RoleHeights:
    """Antenna height per node role, meters."""
    macro: float = 25.0
    outdoor_iab: float = 10.0
    indoor_iab: float = 3.0
    ue: float = 1.5
    vmr: float = 3.0


@dataclass(frozen=True)
class RoleElements:
    """Antenna element count per node role."""
    macro: int = 256
    outdoor_iab: int = 256
    indoor_iab: int = 256
    ue: int = 1
    vmr: int = 64


@dataclass(frozen=True)
class ScenarioConfig:
    carrier_frequency: float = 30e9          # Hz
    system_bandwidth: float = 1e9             # Hz
    subcarrier_spacing: float = 15e3          # Hz
    slot_duration: float = 1e-3               # s (numerology-0 slot)
    noise_density: float = -174.0             # dBm/Hz
    macro_isd: float = 500.0                  # m
    num_macro_sites: int = 7
    outdoor_cells_per_site: int = 4
    indoor_cells_per_site: int = 4
    office_dims: tuple[float, float, float] = (50.0, 120.0, 3.0)  # m
    indoor_cell_isd: float = 20.0             # m
    ues_per_macrocell: int = 10
    indoor_ue_fraction: float = 0.5
    tx_power: RoleDbm = field(default_factory=RoleDbm)
    antenna_height: RoleHeights = field(default_factory=RoleHeights)
    antenna_elements: RoleElements = field(default_factory=RoleElements)
    noise_margin_bs: float = 7.0              # dB
    noise_margin_ue: float = 10.0             # dB
    o2i_low_loss_fraction: float = 0.5
    arch_mode: ArchMode = ArchMode.PROPOSED
    num_donors: int = 7                       # 3gpp mode only
    num_runs: int = 5
    slots_per_run: int = 100_000
    base_seed: int = 1
    max_hop_depth: int = 4
    onboard_ues: int = 20

    def __post_init__(self):
        object.__setattr__(self, "arch_mode", ArchMode.parse(self.arch_mode))
        object.__setattr__(self, "office_dims", tuple(float(x) for x in self.office_dims))
        self.validate()

    def validate(self) -> None:
        positive_counts = {
            "num_macro_sites": self.num_macro_sites,
            "outdoor_cells_per_site": self.outdoor_cells_per_site,
            "indoor_cells_per_site": self.indoor_cells_per_site,
            "ues_per_macrocell": self.ues_per_macrocell,
            "num_donors": self.num_donors,
            "num_runs": self.num_runs,
            "slots_per_run": self.slots_per_run,
            "max_hop_depth": self.max_hop_depth,
        }
        for name, value in positive_counts.items():
            if int(value) != value or value <= 0:
                raise ConfigError(f"{name} must be a positive integer, got {value!r}")
        if self.onboard_ues < 0:
            raise ConfigError("onboard_ues must be >= 0")
        for name, value in (("indoor_ue_fraction", self.indoor_ue_fraction),
                            ("o2i_low_loss_fraction", self.o2i_low_loss_fraction)):
            if not 0.0 <= value <= 1.0:
                raise ConfigError(f"{name} must lie in [0, 1], got {value!r}")
        for name, value in (("carrier_frequency", self.carrier_frequency),
                            ("system_bandwidth", self.system_bandwidth),
                            ("subcarrier_spacing", self.subcarrier_spacing),
                            ("slot_duration", self.slot_duration),
                            ("macro_isd", self.macro_isd),
                            ("indoor_cell_isd", self.indoor_cell_isd)):
            if value <= 0:
                raise ConfigError(f"{name} must be positive, got {value!r}")
        if len(self.office_dims) != 3 or any(d <= 0 for d in self.office_dims):
            raise ConfigError(f"office_dims must be 3 positive extents, got {self.office_dims!r}")
        if self.arch_mode is ArchMode.THREE_GPP and self.num_donors > self.num_macro_sites:
            raise ConfigError(
                f"num_donors ({self.num_donors}) cannot exceed num_macro_sites "
                f"({self.num_macro_sites}) in 3gpp mode")
        span = (self.indoor_cells_per_site - 1) * self.indoor_cell_isd
        if span > max(self.office_dims[0], self.office_dims[1]):
            raise ConfigError("indoor cell row does not fit inside the office long axis")

    def replace(self, **kwargs: Any) -> "ScenarioConfig":
        return dataclasses.replace(self, **kwargs)

    def to_dict(self) -> dict[str, Any]:
        d = dataclasses.asdict(self)
        d["arch_mode"] = self.arch_mode.value
        d["office_dims"] = list(self.office_dims)
        return d

    def canonical_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))

    def sha256(self) -> str:
        return hashlib.sha256(self.canonical_json().encode("utf-8")).hexdigest()

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "ScenarioConfig":
        data = dict(data)
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ConfigError(f"unknown configuration keys: {sorted(unknown)}")
        for key, table_cls in (("tx_power", RoleDbm),
                               ("antenna_height", RoleHeights),
                               ("antenna_elements", RoleElements)):
            if key in data and isinstance(data[key], dict):
                sub_known = {f.name for f in dataclasses.fields(table_cls)}
                sub_unknown = set(data[key]) - sub_known
                if sub_unknown:
                    raise ConfigError(f"unknown keys in [{key}]: {sorted(sub_unknown)}")
                data[key] = table_cls(**data[key])
        if "office_dims" in data:
            data["office_dims"] = tuple(data["office_dims"])
        try:
            return cls(**data)
        except TypeError as exc:
            raise ConfigError(str(exc)) from exc


def load_config(path: str | Path) -> ScenarioConfig:
    """Load a ScenarioConfig from a TOML document; unknown keys are an error."""
    path = Path(path)
    try:
        with open(path, "rb") as fh:
            data = tomllib.load(fh)
    except FileNotFoundError as exc:
        raise ConfigError(f"config file not found: {path}") from exc
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"config file {path} is not valid TOML: {exc}") from exc
    return ScenarioConfig.from_dict(data)
