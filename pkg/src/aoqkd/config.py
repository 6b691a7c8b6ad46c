"""Scenario configuration: bundled channel fixtures and the key=value
config-file format.

A scenario names a channel (60 cm bench, 30 m link, or custom numbers),
the turbulence settings to sweep, seeds, frame counts and where output
goes. Config files are INI-style ``key = value`` under ``[section]``
headers; unknown sections or keys are hard errors so typos cannot pass
silently.
"""

from __future__ import annotations

import configparser
import hashlib
from dataclasses import dataclass, field, replace

from .skr import DetectionScheme, DomainError, SystemParams

__all__ = ["ConfigError", "ScenarioConfig", "CM60", "M30", "fixture",
           "load_config", "config_hash"]


class ConfigError(ValueError):
    """A scenario config file is malformed."""


@dataclass(frozen=True)
class ScenarioConfig:
    """All knobs of one simulation/analysis scenario."""

    channel: str
    transmittance: float
    detector_efficiency: float
    reconciliation_efficiency: float
    electronic_noise: float
    excess_noise: float
    modulation_variance_homodyne: float
    modulation_variance_heterodyne: float
    ambient_visibility: float
    settings: tuple[str, ...] = ("ambient", "low", "medium", "high")
    orientation: str = "across"
    seeds: tuple[int, ...] = (1, 2, 3)
    frames: int = 12_000
    output_dir: str = "out"

    def __post_init__(self):
        if self.channel not in ("cm60", "m30", "custom"):
            raise ConfigError(f"unknown channel {self.channel!r}")
        if self.orientation not in ("across", "along"):
            raise ConfigError(f"unknown orientation {self.orientation!r}")
        if not self.seeds:
            raise ConfigError("at least one seed is required")
        if self.frames < 2:
            raise ConfigError("frames must be at least 2")

    def system_params(self, visibility: float,
                      detection: DetectionScheme) -> SystemParams:
        """Channel parameters at a given visibility and detection scheme."""
        v_a = (self.modulation_variance_homodyne
               if detection is DetectionScheme.HOMODYNE
               else self.modulation_variance_heterodyne)
        return SystemParams(
            transmittance=self.transmittance,
            detector_efficiency=self.detector_efficiency,
            visibility=visibility,
            modulation_variance=v_a,
            excess_noise=self.excess_noise,
            electronic_noise=self.electronic_noise,
            reconciliation_efficiency=self.reconciliation_efficiency,
            detection=detection,
        )

    def with_(self, **changes) -> "ScenarioConfig":
        return replace(self, **changes)


CM60 = ScenarioConfig(
    channel="cm60",
    transmittance=0.4433,
    detector_efficiency=0.99,
    reconciliation_efficiency=0.9,
    electronic_noise=0.027,
    excess_noise=0.001,
    modulation_variance_homodyne=0.3,
    modulation_variance_heterodyne=2.0,
    ambient_visibility=0.6,
)

M30 = ScenarioConfig(
    channel="m30",
    transmittance=0.0644,
    detector_efficiency=0.99,
    reconciliation_efficiency=0.9,
    electronic_noise=0.027,
    excess_noise=0.001,
    modulation_variance_homodyne=0.3,
    modulation_variance_heterodyne=2.0,
    ambient_visibility=0.55,
)


def fixture(channel: str) -> ScenarioConfig:
    """Bundled fixture for a named channel."""
    if channel == "cm60":
        return CM60
    if channel == "m30":
        return M30
    raise ConfigError(f"no bundled fixture for channel {channel!r}")


# config file schema: section -> key -> (attribute, parser)
def _floats(s: str) -> float:
    return float(s)


def _strings(s: str) -> tuple[str, ...]:
    return tuple(part.strip() for part in s.split(",") if part.strip())


def _ints(s: str) -> tuple[int, ...]:
    return tuple(int(part) for part in s.split(",") if part.strip())


_SCHEMA: dict[str, dict[str, tuple[str, object]]] = {
    "channel": {
        "name": ("channel", str.strip),
        "transmittance": ("transmittance", _floats),
        "detector_efficiency": ("detector_efficiency", _floats),
        "reconciliation_efficiency": ("reconciliation_efficiency", _floats),
        "electronic_noise": ("electronic_noise", _floats),
        "excess_noise": ("excess_noise", _floats),
        "modulation_variance_homodyne": ("modulation_variance_homodyne", _floats),
        "modulation_variance_heterodyne": ("modulation_variance_heterodyne", _floats),
        "ambient_visibility": ("ambient_visibility", _floats),
    },
    "turbulence": {
        "settings": ("settings", _strings),
        "orientation": ("orientation", str.strip),
    },
    "run": {
        "seeds": ("seeds", _ints),
        "frames": ("frames", int),
        "output_dir": ("output_dir", str.strip),
    },
}


def load_config(path) -> ScenarioConfig:
    """Load a scenario from a config file.

    The ``name`` key in ``[channel]`` selects the fixture used for
    defaults (``custom`` starts from the 60 cm numbers); every other key
    overrides one fixture field.
    """
    parser = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
    try:
        with open(path, "r", encoding="utf-8") as fh:
            parser.read_file(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    except configparser.Error as exc:
        raise ConfigError(f"malformed config {path}: {exc}") from exc

    changes: dict[str, object] = {}
    for section in parser.sections():
        if section not in _SCHEMA:
            raise ConfigError(f"{path}: unknown section [{section}]")
        for key, raw in parser.items(section):
            if key not in _SCHEMA[section]:
                raise ConfigError(f"{path}: unknown key {key!r} in [{section}]")
            attr, parse = _SCHEMA[section][key]
            try:
                changes[attr] = parse(raw)
            except ValueError as exc:
                raise ConfigError(
                    f"{path}: bad value for {key!r}: {raw!r} ({exc})") from exc

    name = changes.pop("channel", "custom")
    base = CM60 if name in ("custom", "cm60") else fixture(name)
    try:
        return base.with_(channel=name, **changes)
    except ConfigError:
        raise
    except (TypeError, DomainError) as exc:
        raise ConfigError(f"{path}: {exc}") from exc


def config_hash(config: ScenarioConfig) -> str:
    """Short stable digest of a scenario, for output provenance lines."""
    canon = "\n".join(f"{k}={getattr(config, k)!r}"
                      for k in sorted(config.__dataclass_fields__))
    return hashlib.sha256(canon.encode("utf-8")).hexdigest()[:12]
