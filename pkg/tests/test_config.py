import os

import pytest

from app.application.attribution_service import resolve_grid
from app.domain.errors import ConfigError
from app.infrastructure.config_loader import load_pipeline_config
from config import Config

ROOT = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))


@pytest.fixture(autouse=True)
def clean_env(monkeypatch):
    monkeypatch.setattr(Config, 'HEAD_PATH', '')
    monkeypatch.setattr(Config, 'SEED', 0)
    monkeypatch.setattr(Config, 'OUTPUT_DIR', 'out')
    monkeypatch.setattr(Config, 'BACKEND', 'stub')
    monkeypatch.setattr(Config, 'ENDPOINT', '')


def _write(tmp_path, text):
    path = tmp_path / 'pipeline.yaml'
    path.write_text(text, encoding='utf-8')
    return str(path)


def test_defaults_follow_output_dir_and_seed(monkeypatch):
    monkeypatch.setattr(Config, 'SEED', 7)
    cfg = load_pipeline_config(overrides={'output_dir': 'runs/a'})
    assert cfg.seed == 7
    assert cfg.recognizer.training.seed == 7
    assert cfg.recognizer.head_path == os.path.join('runs/a', 'head.bin')
    assert cfg.attribution.grid is None
    assert cfg.manipulation.region_threshold == 0.6
    assert cfg.threshold == 0.5


def test_file_beats_environment_and_flags_beat_file(tmp_path, monkeypatch):
    monkeypatch.setattr(Config, 'SEED', 3)
    path = _write(tmp_path, "seed: 5\nrecognizer:\n  threshold: 0.6\nattribution:\n  grid: [2, 3]\n")
    cfg = load_pipeline_config(path)
    assert cfg.seed == 5
    assert cfg.threshold == 0.6
    assert cfg.attribution.grid == (2, 3)

    cfg = load_pipeline_config(path, {'seed': 9, 'threshold': 0.7, 'head_path': 'h.bin'})
    assert cfg.seed == 9
    assert cfg.threshold == 0.7
    assert cfg.recognizer.head_path == 'h.bin'


def test_explicit_training_seed_is_kept(tmp_path):
    path = _write(tmp_path, "seed: 4\nrecognizer:\n  hidden_dim: 16\n  training:\n    seed: 11\n")
    cfg = load_pipeline_config(path)
    assert cfg.recognizer.training.seed == 11
    assert cfg.recognizer.training.hidden_dim == 16


def test_backend_flag_applies_to_every_role():
    cfg = load_pipeline_config(overrides={'backend': 'external', 'endpoint': 'http://models.local'})
    assert {b.kind for b in cfg.backends.values()} == {'external'}
    assert {b.endpoint for b in cfg.backends.values()} == {'http://models.local'}


@pytest.mark.parametrize('text', [
    "colour: red\n",
    "recognizer:\n  threshold: 1.5\n",
    "attribution:\n  mask_prob: 0\n",
    "attribution:\n  grid: [0, 4]\n",
    "manipulation:\n  blur_sigma: -1\n",
    "manipulation:\n  strategy: sharpen\n",
    "backends:\n  painter: {kind: stub}\n",
    "backends:\n  embedder: {kind: external}\n",
    "seed: 1.5\n",
    "recognizer: [1, 2\n",
])
def test_invalid_files_raise_config_error(tmp_path, text):
    with pytest.raises(ConfigError):
        load_pipeline_config(_write(tmp_path, text))


def test_missing_config_file(tmp_path):
    with pytest.raises(ConfigError):
        load_pipeline_config(str(tmp_path / 'absent.yaml'))


def test_shipped_stub_config_loads():
    cfg = load_pipeline_config(os.path.join(ROOT, 'configs', 'stub.yaml'))
    assert cfg.attribution.grid is None
    assert resolve_grid(cfg.attribution.grid, 64, 64) == (4, 4)
    assert cfg.manipulation.region_threshold == 0.6
    assert cfg.recognizer.training.epochs == 200
    assert all(b.kind == 'stub' for b in cfg.backends.values())


def test_grid_auto_in_file_and_in_report_dict(tmp_path):
    cfg = load_pipeline_config(_write(tmp_path, "attribution:\n  grid: auto\n"))
    assert cfg.attribution.grid is None
    assert cfg.to_dict()['attribution']['grid'] == 'auto'
