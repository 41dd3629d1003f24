"""Training configuration and its on-disk key=value format.

Config files are flat UTF-8 ``key = value`` documents under a single
``[train]`` section (INI syntax). Unknown sections or keys are rejected with
the offending name and line number; CLI flags override file values. Every
run echoes its effective settings to ``config.echo`` in the same format, so
a run can be reproduced from its echo alone.
"""

from __future__ import annotations

import configparser
from dataclasses import dataclass, fields, replace
from pathlib import Path

from confae.errors import ConfigError

MIN_BATCH = 9  # batch-level Pearson is too noisy below this


@dataclass(frozen=True)
class TrainConfig:
    eta: float = 2.0
    lam: float = 5.0
    latent_dim: int = 2
    batch_size: int = 16
    epochs: int = 300
    learning_rate: float = 1e-3
    seed: int = 0
    confounders: tuple[str, ...] = ()
    ssl: bool = False
    ncc: bool = False
    folds: int = 5

    def __post_init__(self):
        if self.eta < 0:
            raise ConfigError(f"eta must be >= 0, got {self.eta}")
        if self.lam < 0:
            raise ConfigError(f"lambda must be >= 0, got {self.lam}")
        if self.batch_size < MIN_BATCH:
            raise ConfigError(f"batch_size must be > 8 (batch-level correlations), "
                              f"got {self.batch_size}")
        if self.latent_dim < len(self.confounders) + 1:
            raise ConfigError(f"latent_dim {self.latent_dim} must be >= "
                              f"{len(self.confounders) + 1} (confounders + 1)")
        if self.folds < 2:
            raise ConfigError(f"folds must be >= 2, got {self.folds}")
        if self.epochs < 1:
            raise ConfigError("epochs must be >= 1")
        if self.learning_rate <= 0:
            raise ConfigError("learning_rate must be positive")

    def replace(self, **kwargs) -> "TrainConfig":
        return replace(self, **kwargs)

    def to_dict(self) -> dict:
        d = {f.name: getattr(self, f.name) for f in fields(self)}
        d["confounders"] = list(self.confounders)
        return d


_CONVERTERS = {
    "eta": float,
    "lam": float,
    "latent_dim": int,
    "batch_size": int,
    "epochs": int,
    "learning_rate": float,
    "seed": int,
    "ssl": None,  # bool, handled specially
    "ncc": None,
    "folds": int,
    "confounders": None,  # comma-separated list
}
# accepted aliases in config files
_ALIASES = {"lambda": "lam"}


def _find_line(text: str, key: str) -> int:
    for i, line in enumerate(text.splitlines(), start=1):
        stripped = line.strip()
        if stripped.startswith(key) and "=" in stripped:
            return i
    return 0


def _parse_bool(value: str, key: str) -> bool:
    low = value.strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ConfigError(f"key {key!r}: expected a boolean, got {value!r}")


def parse_config_text(text: str, source: str = "<config>") -> TrainConfig:
    parser = configparser.ConfigParser(interpolation=None)
    try:
        parser.read_string(text, source=source)
    except configparser.Error as exc:
        raise ConfigError(f"{source}: {exc}") from exc

    sections = parser.sections()
    if sections and sections != ["train"]:
        bad = next(s for s in sections if s != "train")
        raise ConfigError(f"{source}: unknown section [{bad}] "
                          f"(line {_find_line(text, bad) or '?'}); only [train] is allowed")
    values: dict = {}
    items = parser["train"].items() if "train" in parser else []
    for raw_key, raw in items:
        key = _ALIASES.get(raw_key, raw_key)
        if key not in _CONVERTERS:
            raise ConfigError(f"{source}: unknown key {raw_key!r} "
                              f"(line {_find_line(text, raw_key)})")
        try:
            if key in ("ssl", "ncc"):
                values[key] = _parse_bool(raw, key)
            elif key == "confounders":
                values[key] = tuple(s.strip() for s in raw.split(",") if s.strip())
            else:
                values[key] = _CONVERTERS[key](raw)
        except ConfigError:
            raise
        except ValueError as exc:
            raise ConfigError(f"{source}: key {raw_key!r} "
                              f"(line {_find_line(text, raw_key)}): {exc}") from exc
    return TrainConfig(**values)


def parse_config_file(path) -> TrainConfig:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    return parse_config_text(text, source=str(path))


def format_config(cfg: TrainConfig) -> str:
    lines = ["[train]"]
    for f in fields(cfg):
        value = getattr(cfg, f.name)
        if f.name == "confounders":
            value = ", ".join(value)
        elif isinstance(value, bool):
            value = "true" if value else "false"
        lines.append(f"{f.name} = {value}")
    return "\n".join(lines) + "\n"


def write_config_echo(cfg: TrainConfig, directory) -> Path:
    path = Path(directory) / "config.echo"
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(format_config(cfg), encoding="utf-8")
    return path
