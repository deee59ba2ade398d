"""
Pipeline configuration: built-in defaults < environment (config.Config) < YAML file < CLI overrides.
"""
import logging
import os
from typing import Any, Dict, Optional

import yaml

from app.domain.errors import ConfigError
from app.domain.models import (
    BACKEND_ROLES,
    AttributionSettings,
    BackendConfig,
    ManipulationSettings,
    PipelineConfig,
    RecognizerSettings,
    Strategy,
    TrainingConfig,
)
from config import Config

logger = logging.getLogger(__name__)

_BACKEND_KINDS = ('stub', 'external')
_BACKEND_KEYS = {'kind': str, 'endpoint': str, 'embedding_dim': int, 'seed': int, 'max_in_flight': int, 'timeout': float}
_TRAINING_KEYS = {
    'epochs': int, 'learning_rate': float, 'weight_decay': float, 'batch_size': int,
    'dropout': float, 'epsilon': float, 'seed': int, 'hidden_dim': int,
}
_ATTRIBUTION_KEYS = {'word_samples': int, 'pixel_samples': int, 'mask_prob': float, 'grid': tuple, 'workers': int}
_MANIPULATION_KEYS = {'region_threshold': float, 'blur_sigma': float, 'strategy': str}


def config_from_env() -> PipelineConfig:
    backend = BackendConfig(
        kind=Config.BACKEND,
        endpoint=Config.ENDPOINT,
        embedding_dim=Config.EMBEDDING_DIM,
        seed=Config.SEED,
        max_in_flight=Config.MAX_IN_FLIGHT,
        timeout=Config.HTTP_TIMEOUT,
    )
    return PipelineConfig(
        backends={role: BackendConfig(**backend.to_dict()) for role in BACKEND_ROLES},
        recognizer=RecognizerSettings(head_path=Config.HEAD_PATH),
        attribution=AttributionSettings(workers=Config.WORKERS),
        manipulation=ManipulationSettings(),
        seed=Config.SEED,
        output_dir=Config.OUTPUT_DIR,
    )


def _coerce(section: str, key: str, value: Any, kind):
    try:
        if kind is bool:
            return bool(value)
        if kind is tuple:
            if value is None or value == 'auto':
                return None
            if isinstance(value, (int, float)) and not isinstance(value, bool):
                return (int(value), int(value))
            pair = tuple(int(v) for v in value)
            if len(pair) != 2:
                raise ValueError(value)
            return pair
        if kind is int and isinstance(value, float) and not value.is_integer():
            raise ValueError(value)
        if kind in (int, float) and isinstance(value, bool):
            raise ValueError(value)
        return kind(value)
    except (TypeError, ValueError):
        raise ConfigError(f"{section}.{key}: invalid value {value!r}")


def _apply(target, section: str, values: Dict[str, Any], schema: Dict[str, Any]) -> set:
    if not isinstance(values, dict):
        raise ConfigError(f"Section '{section}' must be a mapping")
    unknown = sorted(set(values) - set(schema))
    if unknown:
        raise ConfigError(f"Unknown key(s) in '{section}': {', '.join(unknown)}")
    for key, value in values.items():
        setattr(target, key, _coerce(section, key, value, schema[key]))
    return set(values)


def merge_file(cfg: PipelineConfig, data: Dict[str, Any]) -> set:
    """Merge a parsed YAML document into cfg; returns the dotted keys set explicitly."""
    explicit = set()
    if not data:
        return explicit
    if not isinstance(data, dict):
        raise ConfigError("Config file must contain a mapping at the top level")
    unknown = sorted(set(data) - {'backends', 'recognizer', 'attribution', 'manipulation', 'seed', 'output_dir'})
    if unknown:
        raise ConfigError(f"Unknown top-level key(s): {', '.join(unknown)}")

    backends = data.get('backends') or {}
    if not isinstance(backends, dict):
        raise ConfigError("Section 'backends' must be a mapping of role to backend settings")
    for role, values in backends.items():
        if role not in BACKEND_ROLES:
            raise ConfigError(f"Unknown backend role '{role}' (expected one of {', '.join(BACKEND_ROLES)})")
        keys = _apply(cfg.backends[role], f"backends.{role}", values or {}, _BACKEND_KEYS)
        explicit |= {f"backends.{role}.{key}" for key in keys}

    recognizer = dict(data.get('recognizer') or {})
    training = recognizer.pop('training', None) or {}
    hidden_dim = recognizer.pop('hidden_dim', None)
    if hidden_dim is not None:
        training.setdefault('hidden_dim', hidden_dim)
    keys = _apply(cfg.recognizer, 'recognizer', recognizer, {'head_path': str, 'threshold': float})
    explicit |= {f"recognizer.{key}" for key in keys}
    keys = _apply(cfg.recognizer.training, 'recognizer.training', training, _TRAINING_KEYS)
    explicit |= {f"recognizer.training.{key}" for key in keys}

    keys = _apply(cfg.attribution, 'attribution', data.get('attribution') or {}, _ATTRIBUTION_KEYS)
    explicit |= {f"attribution.{key}" for key in keys}
    keys = _apply(cfg.manipulation, 'manipulation', data.get('manipulation') or {}, _MANIPULATION_KEYS)
    explicit |= {f"manipulation.{key}" for key in keys}

    if 'seed' in data:
        cfg.seed = _coerce('', 'seed', data['seed'], int)
        explicit.add('seed')
    if 'output_dir' in data:
        cfg.output_dir = _coerce('', 'output_dir', data['output_dir'], str)
        explicit.add('output_dir')
    return explicit


def apply_overrides(cfg: PipelineConfig, overrides: Dict[str, Any]) -> set:
    """CLI flags: seed, output_dir, backend, endpoint, threshold, head_path, strategy."""
    explicit = set()
    if overrides.get('seed') is not None:
        cfg.seed = int(overrides['seed'])
        explicit.add('seed')
    if overrides.get('output_dir'):
        cfg.output_dir = overrides['output_dir']
        explicit.add('output_dir')
    if overrides.get('backend'):
        for role in BACKEND_ROLES:
            cfg.backends[role].kind = overrides['backend']
    if overrides.get('endpoint'):
        for role in BACKEND_ROLES:
            cfg.backends[role].endpoint = overrides['endpoint']
    if overrides.get('threshold') is not None:
        cfg.recognizer.threshold = float(overrides['threshold'])
    if overrides.get('head_path'):
        cfg.recognizer.head_path = overrides['head_path']
    if overrides.get('strategy'):
        cfg.manipulation.strategy = overrides['strategy']
    return explicit


def validate_config(cfg: PipelineConfig) -> PipelineConfig:
    if not 0.0 < cfg.recognizer.threshold < 1.0:
        raise ConfigError(f"recognizer.threshold must lie in (0,1), got {cfg.recognizer.threshold}")
    if not 0.0 < cfg.manipulation.region_threshold < 1.0:
        raise ConfigError(f"manipulation.region_threshold must lie in (0,1), got {cfg.manipulation.region_threshold}")
    if cfg.manipulation.blur_sigma <= 0:
        raise ConfigError(f"manipulation.blur_sigma must be > 0, got {cfg.manipulation.blur_sigma}")
    try:
        Strategy.parse(cfg.manipulation.strategy)
    except ValueError as e:
        raise ConfigError(str(e))

    attribution = cfg.attribution
    if attribution.word_samples < 1 or attribution.pixel_samples < 1:
        raise ConfigError("attribution sample counts must be >= 1")
    if not 0.0 < attribution.mask_prob < 1.0:
        raise ConfigError(f"attribution.mask_prob must lie in (0,1), got {attribution.mask_prob}")
    if attribution.grid is not None and min(attribution.grid) < 1:
        raise ConfigError(f"attribution.grid must be >= 1 in both dimensions, got {attribution.grid}")
    if attribution.workers < 1:
        raise ConfigError(f"attribution.workers must be >= 1, got {attribution.workers}")

    training = cfg.recognizer.training
    for name in ('epochs', 'learning_rate', 'batch_size', 'epsilon', 'hidden_dim'):
        if getattr(training, name) <= 0:
            raise ConfigError(f"recognizer.training.{name} must be positive")
    if training.weight_decay < 0:
        raise ConfigError("recognizer.training.weight_decay must be >= 0")
    if not 0.0 <= training.dropout < 1.0:
        raise ConfigError(f"recognizer.training.dropout must lie in [0,1), got {training.dropout}")

    for role, backend in cfg.backends.items():
        if backend.kind not in _BACKEND_KINDS:
            raise ConfigError(f"backends.{role}.kind must be one of {', '.join(_BACKEND_KINDS)}, got '{backend.kind}'")
        if backend.kind == 'external' and not backend.endpoint:
            raise ConfigError(f"backends.{role} is external but has no endpoint")
        if backend.embedding_dim < 1 or backend.max_in_flight < 1 or backend.timeout <= 0:
            raise ConfigError(f"backends.{role}: embedding_dim, max_in_flight and timeout must be positive")
    return cfg


def load_pipeline_config(path: Optional[str] = None, overrides: Optional[Dict[str, Any]] = None) -> PipelineConfig:
    cfg = config_from_env()
    explicit = set()
    if Config.HEAD_PATH:
        explicit.add('recognizer.head_path')

    if path:
        if not os.path.exists(path):
            raise ConfigError(f"Config file not found: {path}")
        with open(path, encoding='utf-8') as f:
            try:
                data = yaml.safe_load(f)
            except yaml.YAMLError as e:
                raise ConfigError(f"{path}: invalid YAML ({e})")
        explicit |= merge_file(cfg, data)
        logger.info(f"Loaded pipeline config from {path}")

    explicit |= apply_overrides(cfg, overrides or {})
    if overrides and overrides.get('head_path'):
        explicit.add('recognizer.head_path')

    if 'recognizer.head_path' not in explicit or not cfg.recognizer.head_path:
        cfg.recognizer.head_path = os.path.join(cfg.output_dir, 'head.bin')
    if 'recognizer.training.seed' not in explicit:
        cfg.recognizer.training.seed = cfg.seed
    return validate_config(cfg)
