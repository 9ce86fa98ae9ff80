"""Run configuration: a YAML document mapped onto nested dataclasses.

Unknown keys and bad values are reported with the line they appear on.
Only ``seed`` and ``output_dir`` may be overridden from the environment
(``QPSKRX_SEED``, ``QPSKRX_OUTPUT_DIR``).
"""

from __future__ import annotations

import dataclasses
import os
import types
import typing
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import yaml

from .emulator import CampaignConfig, ProbeSequence
from .optimizer import OptimizerSettings
from .simulator import ImperfectionModel

ENV_SEED = "QPSKRX_SEED"
ENV_OUTPUT_DIR = "QPSKRX_OUTPUT_DIR"
OUTPUT_FORMATS = ("csv", "json", "both")


class ConfigError(ValueError):
    def __init__(self, message: str, line: int | None = None):
        self.line = line
        super().__init__(f"line {line}: {message}" if line is not None else message)


@dataclass(frozen=True)
class Grid:
    """Photon-number grid: explicit ``values`` or ``num`` points from ``start`` to ``stop``."""

    start: float = 0.05
    stop: float = 4.0
    num: int = 80
    values: tuple[float, ...] | None = None

    def __post_init__(self):
        if self.values is None and self.num < 1:
            raise ValueError("grid needs num >= 1")
        if any(v < 0 for v in self.to_array()):
            raise ValueError("grid values must be non-negative")

    def to_array(self) -> np.ndarray:
        if self.values is not None:
            return np.asarray(self.values, dtype=float)
        return np.linspace(self.start, self.stop, self.num)


@dataclass(frozen=True)
class DisplacementSweepConfig:
    alpha2: float = 0.97
    t2: float = 0.53
    gamma2: Grid = Grid(0.0, 2.0, 201)


@dataclass(frozen=True)
class RunConfig:
    alpha2: Grid = Grid()
    split: typing.Union[float, str] = "optimize"
    receivers: tuple[str, ...] = ("HD-K", "HD-OD", "heterodyne", "helstrom")
    imperfections: ImperfectionModel = ImperfectionModel()
    shots: int = 0
    seed: int = 0
    output_dir: str = "out"
    output_format: str = "csv"
    optimizer: OptimizerSettings = OptimizerSettings()
    t_alpha2: Grid = Grid(0.0, 3.0, 61)
    displacement_sweep: DisplacementSweepConfig = DisplacementSweepConfig()
    probe: ProbeSequence = ProbeSequence()
    campaign: CampaignConfig = CampaignConfig()
    write_records: bool = False

    def __post_init__(self):
        if isinstance(self.split, str) and self.split != "optimize":
            raise ValueError("split must be a transmittance in [0, 1] or 'optimize'")
        if not isinstance(self.split, str) and not 0 <= self.split <= 1:
            raise ValueError("split must be a transmittance in [0, 1] or 'optimize'")
        if self.output_format not in OUTPUT_FORMATS:
            raise ValueError(f"output_format must be one of {OUTPUT_FORMATS}")
        if self.shots < 0:
            raise ValueError("shots must be >= 0")
        if not 0 <= self.seed < 2**64:
            raise ValueError("seed must be an unsigned 64-bit integer")
        from .analytic import Receiver

        for r in self.receivers:
            Receiver(r)

    def to_dict(self) -> dict:
        return _to_plain(self)


# -- dataclass <-> plain data -------------------------------------------------


def _to_plain(obj):
    if dataclasses.is_dataclass(obj):
        return {f.name: _to_plain(getattr(obj, f.name)) for f in dataclasses.fields(obj)}
    if isinstance(obj, (tuple, list)):
        return [_to_plain(x) for x in obj]
    return obj


def _hints(cls):
    return typing.get_type_hints(cls)


def _convert(tp, node: yaml.Node, where: str):
    line = node.start_mark.line + 1
    origin = typing.get_origin(tp)
    args = typing.get_args(tp)
    if dataclasses.is_dataclass(tp):
        if not isinstance(node, yaml.MappingNode):
            raise ConfigError(f"{where}: expected a mapping", line)
        return _build(tp, node, where)
    if origin in (typing.Union, types.UnionType):
        errors = []
        if type(None) in args and isinstance(node, yaml.ScalarNode) and _scalar(node) is None:
            return None
        for option in (a for a in args if a is not type(None)):
            try:
                return _convert(option, node, where)
            except ConfigError as exc:
                errors.append(exc)
        raise errors[-1]
    if origin is tuple:
        if not isinstance(node, yaml.SequenceNode):
            raise ConfigError(f"{where}: expected a list", line)
        return tuple(_convert(args[0], item, f"{where}[{k}]") for k, item in enumerate(node.value))
    value = _scalar(node)
    if tp is bool:
        if isinstance(value, bool):
            return value
    elif tp is int:
        if isinstance(value, int) and not isinstance(value, bool):
            return value
    elif tp is float:
        if isinstance(value, (int, float)) and not isinstance(value, bool):
            return float(value)
    elif tp is str:
        if isinstance(value, str):
            return value
    raise ConfigError(f"{where}: expected {getattr(tp, '__name__', tp)}, got {value!r}", line)


_LOADER = yaml.SafeLoader("")


def _scalar(node):
    if not isinstance(node, yaml.ScalarNode):
        raise ConfigError("expected a scalar value", node.start_mark.line + 1)
    return _LOADER.construct_object(node, deep=True)


def _build(cls, node: yaml.MappingNode, where: str):
    hints = _hints(cls)
    names = {f.name for f in dataclasses.fields(cls)}
    kwargs = {}
    for key_node, value_node in node.value:
        key = key_node.value
        line = key_node.start_mark.line + 1
        if key not in names:
            raise ConfigError(f"unknown key {key!r} in {where or 'top level'}", line)
        if key in kwargs:
            raise ConfigError(f"duplicate key {key!r}", line)
        kwargs[key] = _convert(hints[key], value_node, f"{where}.{key}" if where else key)
    try:
        return cls(**kwargs)
    except (ValueError, TypeError) as exc:
        raise ConfigError(f"{where or 'config'}: {exc}", node.start_mark.line + 1) from exc


def parse_config(text: str) -> RunConfig:
    try:
        node = yaml.compose(text, Loader=yaml.SafeLoader)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        raise ConfigError(f"invalid YAML: {exc}", mark.line + 1 if mark else None) from exc
    if node is None:
        return RunConfig()
    if not isinstance(node, yaml.MappingNode):
        raise ConfigError("top level must be a mapping", node.start_mark.line + 1)
    return _build(RunConfig, node, "")


def emit_config(cfg: RunConfig) -> str:
    return yaml.safe_dump(cfg.to_dict(), sort_keys=False, default_flow_style=None)


def apply_env(cfg: RunConfig, environ=None) -> RunConfig:
    environ = os.environ if environ is None else environ
    changes = {}
    if environ.get(ENV_SEED):
        try:
            changes["seed"] = int(environ[ENV_SEED])
        except ValueError as exc:
            raise ConfigError(f"{ENV_SEED} must be an integer") from exc
    if environ.get(ENV_OUTPUT_DIR):
        changes["output_dir"] = environ[ENV_OUTPUT_DIR]
    return dataclasses.replace(cfg, **changes) if changes else cfg


def load_config(path: str | Path | None, environ=None) -> RunConfig:
    cfg = RunConfig() if path is None else parse_config(Path(path).read_text())
    return apply_env(cfg, environ)


__all__ = [
    "ConfigError",
    "Grid",
    "DisplacementSweepConfig",
    "RunConfig",
    "parse_config",
    "emit_config",
    "apply_env",
    "load_config",
]
