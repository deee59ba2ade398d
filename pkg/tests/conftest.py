import os
import sys

import numpy as np
import pytest

sys.path.insert(0, os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

from app.application.recognizer_service import Recognizer, train_classifier
from app.domain.models import (
    AttributionSettings,
    ManipulationSettings,
    PipelineConfig,
    RecognizerSettings,
    TrainingConfig,
)
from app.infrastructure.backends import create_backend_suite
from app.infrastructure.toy_data import toy_corpus
from config import Config


def pytest_configure(config):
    config.addinivalue_line('markers', 'integration: needs a real model server (MORAL_LENS_INTEGRATION_ENDPOINT)')


def pytest_collection_modifyitems(config, items):
    if Config.INTEGRATION_ENDPOINT:
        return
    skip = pytest.mark.skip(reason='MORAL_LENS_INTEGRATION_ENDPOINT not set')
    for item in items:
        if 'integration' in item.keywords:
            item.add_marker(skip)


@pytest.fixture(scope='session')
def suite():
    return create_backend_suite()


@pytest.fixture(scope='session')
def corpus():
    return toy_corpus()


@pytest.fixture(scope='session')
def training_config():
    return TrainingConfig(epochs=200, seed=0)


@pytest.fixture(scope='session')
def trained(corpus, suite, training_config):
    """(head, log) trained on the toy corpus only"""
    return train_classifier(corpus, suite.embedder, training_config)


@pytest.fixture(scope='session')
def head(trained):
    return trained[0]


@pytest.fixture(scope='session')
def recognizer(head, suite):
    return Recognizer(head, suite.embedder, threshold=0.5)


def stub_pipeline_config(output_dir='out', **overrides) -> PipelineConfig:
    cfg = PipelineConfig(
        recognizer=RecognizerSettings(
            head_path=os.path.join(output_dir, 'head.bin'),
            threshold=0.5,
            training=TrainingConfig(epochs=200, seed=0),
        ),
        attribution=AttributionSettings(word_samples=1000, pixel_samples=2000, mask_prob=0.5),
        manipulation=ManipulationSettings(region_threshold=0.6, blur_sigma=4.0, strategy='auto'),
        seed=0,
        output_dir=output_dir,
    )
    for key, value in overrides.items():
        setattr(cfg, key, value)
    return cfg


@pytest.fixture
def pipeline_config(tmp_path):
    return stub_pipeline_config(str(tmp_path / 'out'))


@pytest.fixture
def red_image():
    return np.ones((32, 32, 3)) * np.array([1.0, 0.0, 0.0])


@pytest.fixture
def blue_image():
    return np.ones((32, 32, 3)) * np.array([0.0, 0.0, 1.0])
