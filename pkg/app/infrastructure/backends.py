"""
Contracts for the heavy external models the pipeline leans on.

Roles:
- embedder:  joint text/image encoder (f_t, f_v), unit-norm vectors
- generator: text-to-image model (f_g)
- inpainter: fills a binary region of an image
- captioner: describes an image with a caption trained on curated data
- suggester: query-suggestion service for moral alternatives of a word
- editor:    text-conditioned image manipulation

Each role is served either by a deterministic stub (no weights, no network) or
by an HTTP adapter configured through BackendConfig.
"""
import logging
import threading
from abc import ABC, abstractmethod
from dataclasses import dataclass
from typing import Dict, List, Optional

import numpy as np

from app.domain.errors import ConfigError
from app.domain.models import BACKEND_ROLES, BackendConfig, ImageMask, ImageTensor, TokenSequence

logger = logging.getLogger(__name__)


class Embedder(ABC):

    @property
    @abstractmethod
    def dim(self) -> int:
        ...

    @abstractmethod
    def embed_text(self, t: TokenSequence) -> np.ndarray:
        ...

    @abstractmethod
    def embed_image(self, img: ImageTensor) -> np.ndarray:
        ...


class Generator(ABC):

    @abstractmethod
    def generate(self, t: TokenSequence, seed: int = 0) -> ImageTensor:
        ...


class Inpainter(ABC):

    @abstractmethod
    def inpaint(self, img: ImageTensor, region: ImageMask) -> ImageTensor:
        ...


class Captioner(ABC):

    @abstractmethod
    def caption(self, img: ImageTensor) -> TokenSequence:
        ...


class Suggester(ABC):

    @abstractmethod
    def suggest(self, query: TokenSequence) -> List[TokenSequence]:
        ...


class Editor(ABC):

    @abstractmethod
    def edit(self, img: ImageTensor, condition: TokenSequence, seed: int = 0) -> ImageTensor:
        ...


class ThrottledBackend:
    """Caps concurrent calls into one backend at max_in_flight."""

    def __init__(self, backend, role: str, max_in_flight: int):
        if max_in_flight < 1:
            raise ConfigError(f"max_in_flight for {role} must be >= 1, got {max_in_flight}")
        self._backend = backend
        self._role = role
        self._slots = threading.BoundedSemaphore(max_in_flight)

    @property
    def wrapped(self):
        return self._backend

    def __getattr__(self, name):
        attr = getattr(self._backend, name)
        if not callable(attr):
            return attr

        def call(*args, **kwargs):
            with self._slots:
                return attr(*args, **kwargs)

        return call

    def __repr__(self):
        return f"ThrottledBackend({self._role}, {self._backend!r})"


@dataclass
class BackendSuite:
    embedder: Embedder
    generator: Generator
    inpainter: Inpainter
    captioner: Captioner
    suggester: Suggester
    editor: Editor

    @property
    def is_offline(self) -> bool:
        """True when every role is served by a stub"""
        from app.infrastructure.stub_backends import StubBackend
        for role in BACKEND_ROLES:
            backend = getattr(self, role)
            backend = getattr(backend, 'wrapped', backend)
            if not isinstance(backend, StubBackend):
                return False
        return True


def create_backend(role: str, config: BackendConfig):
    if role not in BACKEND_ROLES:
        raise ConfigError(f"Unknown backend role '{role}'")
    if config.kind == 'stub':
        from app.infrastructure import stub_backends
        factory = {
            'embedder': lambda: stub_backends.StubEmbedder(dim=config.embedding_dim),
            'generator': stub_backends.StubGenerator,
            'inpainter': stub_backends.StubInpainter,
            'captioner': stub_backends.StubCaptioner,
            'suggester': stub_backends.StubSuggester,
            'editor': stub_backends.StubEditor,
        }[role]
        backend = factory()
    elif config.kind == 'external':
        if not config.endpoint:
            raise ConfigError(f"Backend '{role}' is external but has no endpoint configured")
        from app.infrastructure import external_backends
        backend = external_backends.ADAPTERS[role](config)
    else:
        raise ConfigError(f"Backend '{role}' has unknown kind '{config.kind}' (expected stub or external)")
    logger.info(f"Backend {role}: {config.kind}{' @ ' + config.endpoint if config.endpoint else ''}")
    return ThrottledBackend(backend, role, config.max_in_flight)


def create_backend_suite(configs: Optional[Dict[str, BackendConfig]] = None) -> BackendSuite:
    configs = dict(configs or {})
    for role in BACKEND_ROLES:
        configs.setdefault(role, BackendConfig())
    return BackendSuite(**{role: create_backend(role, configs[role]) for role in BACKEND_ROLES})
