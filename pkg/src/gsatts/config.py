"""Flat sectioned ``key = value`` run configuration with exact round-trips."""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass
from typing import Dict, Optional

from .acoustic import AcousticConfig
from .audio import MelConfig
from .errors import ConfigurationError
from .style_encoder import GsaConfig
from .training import TrainConfig

_SECTIONS = {
    "audio": MelConfig,
    "gsa": GsaConfig,
    "acoustic": AcousticConfig,
    "train": TrainConfig,
}


@dataclass(frozen=True)
class RunConfig:
    """Merged view of every subsystem's configuration."""

    mel: MelConfig = MelConfig()
    gsa: GsaConfig = GsaConfig()
    acoustic: AcousticConfig = AcousticConfig()
    train: TrainConfig = TrainConfig()

    def section(self, name: str):
        return {"audio": self.mel, "gsa": self.gsa,
                "acoustic": self.acoustic, "train": self.train}[name]


def _convert(field: dataclasses.Field, raw: str):
    raw = raw.strip()
    if field.name == "loss_weights":
        parts = [float(p) for p in raw.split(",")]
        if len(parts) != 3:
            raise ConfigurationError("loss_weights needs exactly 3 values")
        return tuple(parts)
    if field.type == "int":
        return int(raw)
    if field.type == "float":
        return float(raw)
    if field.type == "str":
        return raw
    raise ConfigurationError(f"unsupported config field type {field.type}")


def parse_run_config(text: str) -> RunConfig:
    """Parse sectioned config text; unknown sections or keys are rejected."""
    values: Dict[str, Dict[str, object]] = {name: {} for name in _SECTIONS}
    section = None
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        if stripped.startswith("[") and stripped.endswith("]"):
            section = stripped[1:-1].strip()
            if section not in _SECTIONS:
                raise ConfigurationError(f"line {lineno}: unknown section [{section}]")
            continue
        if "=" not in stripped:
            raise ConfigurationError(f"line {lineno}: expected 'key = value'")
        if section is None:
            raise ConfigurationError(f"line {lineno}: key outside any section")
        key, _, raw = stripped.partition("=")
        key = key.strip()
        cls = _SECTIONS[section]
        fields = {f.name: f for f in dataclasses.fields(cls)}
        if key not in fields:
            raise ConfigurationError(f"line {lineno}: unknown key {key!r} in [{section}]")
        values[section][key] = _convert(fields[key], raw)

    return RunConfig(
        mel=MelConfig(**values["audio"]),
        gsa=GsaConfig(**values["gsa"]),
        acoustic=AcousticConfig(**values["acoustic"]),
        train=TrainConfig(**values["train"]),
    )


def emit_run_config(cfg: RunConfig) -> str:
    """Deterministic text that parses back to an identical RunConfig."""
    lines = []
    for section in sorted(_SECTIONS):
        lines.append(f"[{section}]")
        instance = cfg.section(section)
        for f in sorted(dataclasses.fields(instance), key=lambda f: f.name):
            value = getattr(instance, f.name)
            if isinstance(value, tuple):
                text = ",".join(repr(v) for v in value)
            else:
                text = repr(value) if not isinstance(value, str) else value
            lines.append(f"{f.name} = {text}")
        lines.append("")
    return "\n".join(lines)


def load_run_config(
    path: Optional[str] = None,
    seed: Optional[int] = None,
    ablation: Optional[str] = None,
) -> RunConfig:
    """Read a config file (or defaults) and apply flag overrides."""
    if path is None:
        cfg = RunConfig()
    else:
        with open(path, "r", encoding="utf-8") as fh:
            cfg = parse_run_config(fh.read())
    if seed is not None or ablation is not None:
        train = cfg.train
        kwargs = {f.name: getattr(train, f.name) for f in dataclasses.fields(train)}
        if seed is not None:
            kwargs["seed"] = seed
        if ablation is not None:
            kwargs["ablation"] = ablation
        cfg = RunConfig(cfg.mel, cfg.gsa, cfg.acoustic, TrainConfig(**kwargs))
    return cfg
