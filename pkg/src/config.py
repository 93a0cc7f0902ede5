"""
Layered configuration for the plant inspection stack.

Precedence, lowest to highest:
    1. dataclass defaults of each module's ``*Params`` class
    2. config/default.yaml
    3. files given with --config, in order
    4. environment variables PLANTSIM__<SECTION>__<KEY> (loaded after .env)
    5. explicit CLI flags (applied by main.py through ``Config.set``)
"""
from __future__ import annotations

import copy
import dataclasses
import logging
import os
from pathlib import Path
from typing import Any, Dict, Iterable, Mapping, Optional

import yaml
from dotenv import load_dotenv

logger = logging.getLogger(__name__)

ROOT_DIR = Path(__file__).parent.parent
DEFAULT_CONFIG_PATH = ROOT_DIR / 'config' / 'default.yaml'
ENV_PREFIX = 'PLANTSIM__'


class ConfigError(ValueError):
    """Invalid or unreadable configuration (CLI exit code 3)."""


def deep_merge(base: Dict[str, Any], override: Mapping[str, Any]) -> Dict[str, Any]:
    for key, value in override.items():
        if isinstance(value, Mapping) and isinstance(base.get(key), dict):
            deep_merge(base[key], value)
        else:
            base[key] = copy.deepcopy(value)
    return base


class Config:
    """Nested configuration with dotted access (``cfg.get('nav.mcl.particles')``)."""

    def __init__(self, data: Optional[Mapping[str, Any]] = None):
        self.data: Dict[str, Any] = copy.deepcopy(dict(data or {}))

    def get(self, dotted: str, default: Any = None) -> Any:
        node: Any = self.data
        for part in dotted.split('.'):
            if not isinstance(node, Mapping) or part not in node:
                return default
            node = node[part]
        return node

    def section(self, dotted: str) -> Dict[str, Any]:
        value = self.get(dotted, {})
        if not isinstance(value, Mapping):
            raise ConfigError(f'config section {dotted!r} is not a mapping')
        return dict(value)

    def set(self, dotted: str, value: Any) -> None:
        parts = dotted.split('.')
        node = self.data
        for part in parts[:-1]:
            node = node.setdefault(part, {})
            if not isinstance(node, dict):
                raise ConfigError(f'cannot set {dotted!r}: {part!r} is not a section')
        node[parts[-1]] = value

    def merged(self, override: Mapping[str, Any]) -> 'Config':
        return Config(deep_merge(copy.deepcopy(self.data), override))

    def to_dict(self) -> Dict[str, Any]:
        return copy.deepcopy(self.data)


def read_yaml(path: Path | str) -> Dict[str, Any]:
    path = Path(path)
    try:
        with open(path, 'r', encoding='utf-8') as f:
            data = yaml.safe_load(f) or {}
    except FileNotFoundError as e:
        raise ConfigError(f'config file not found: {path}') from e
    except yaml.YAMLError as e:
        raise ConfigError(f'config file {path} is not valid YAML: {e}') from e
    if not isinstance(data, dict):
        raise ConfigError(f'config file {path} must contain a mapping at top level')
    return data


def env_overrides(env: Mapping[str, str]) -> Dict[str, Any]:
    """Turn PLANTSIM__NAV__MCL__PARTICLES=800 into {'nav': {'mcl': {'particles': 800}}}."""
    result: Dict[str, Any] = {}
    for name, raw in sorted(env.items()):
        if not name.startswith(ENV_PREFIX):
            continue
        parts = [p.lower() for p in name[len(ENV_PREFIX):].split('__') if p]
        if not parts:
            continue
        try:
            value = yaml.safe_load(raw)
        except yaml.YAMLError:
            value = raw
        node = result
        for part in parts[:-1]:
            node = node.setdefault(part, {})
        node[parts[-1]] = value
        logger.debug(f'Environment override {name}')
    return result


def load_config(paths: Iterable[Path | str] = (), env: Optional[Mapping[str, str]] = None,
                use_default_file: bool = True) -> Config:
    """Build the layered configuration.

    Args:
        paths: extra YAML files, applied in order on top of config/default.yaml
        env: environment mapping; defaults to os.environ after load_dotenv()
        use_default_file: skip config/default.yaml when False (tests)

    Returns:
        Config instance
    """
    if env is None:
        load_dotenv()
        env = os.environ
    data: Dict[str, Any] = {}
    if use_default_file and DEFAULT_CONFIG_PATH.exists():
        deep_merge(data, read_yaml(DEFAULT_CONFIG_PATH))
    for path in paths:
        deep_merge(data, read_yaml(path))
        logger.info(f'Loaded config layer {path}')
    deep_merge(data, env_overrides(env))
    return Config(data)


def params_from(cls, section: Optional[Mapping[str, Any]] = None, **overrides):
    """Instantiate a params dataclass from a config section, rejecting unknown keys."""
    values = dict(section or {})
    values.update(overrides)
    names = {f.name for f in dataclasses.fields(cls)}
    unknown = sorted(set(values) - names)
    if unknown:
        raise ConfigError(f'unknown keys for {cls.__name__}: {", ".join(unknown)}')
    converted = {}
    for f in dataclasses.fields(cls):
        if f.name not in values:
            continue
        value = values[f.name]
        if isinstance(value, list):
            value = tuple(tuple(v) if isinstance(v, list) else v for v in value)
        converted[f.name] = value
    try:
        return cls(**converted)
    except (TypeError, ValueError) as e:
        raise ConfigError(f'invalid {cls.__name__} configuration: {e}') from e
