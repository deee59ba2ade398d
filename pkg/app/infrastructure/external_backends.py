import logging
from typing import List

import numpy as np
import requests

from app.domain.errors import BackendError
from app.domain.masking import as_image, as_tokens
from app.domain.models import BackendConfig, ImageMask, ImageTensor, TokenSequence
from app.infrastructure.backends import Captioner, Editor, Embedder, Generator, Inpainter, Suggester
from app.infrastructure.image_io import decode_png_base64, encode_png_base64

logger = logging.getLogger(__name__)


class HttpBackend:
    """JSON-over-HTTP model server; images travel as base64 PNG."""
    role = ''
    kind = 'external'

    def __init__(self, config: BackendConfig):
        self.endpoint = config.endpoint.rstrip('/')
        self.timeout = config.timeout
        self.seed = config.seed

    @property
    def headers(self):
        return {"Content-Type": "application/json", "Accept": "application/json"}

    def _post(self, path: str, payload: dict) -> dict:
        url = f"{self.endpoint}/{path}"
        try:
            response = requests.post(url, headers=self.headers, json=payload, timeout=self.timeout)
        except requests.RequestException as e:
            logger.error(f"{self.role} backend unreachable at {url}: {str(e)}")
            raise BackendError(f"request failed: {e}", role=self.role, endpoint=self.endpoint)

        if response.status_code != 200:
            logger.error(f"{self.role} backend error {response.status_code} at {url}: {response.text[:200]}")
            raise BackendError(f"HTTP {response.status_code}", role=self.role, endpoint=self.endpoint)
        try:
            return response.json()
        except ValueError:
            raise BackendError("response is not JSON", role=self.role, endpoint=self.endpoint)

    def _field(self, body: dict, name: str):
        if name not in body:
            raise BackendError(f"response missing '{name}'", role=self.role, endpoint=self.endpoint)
        return body[name]

    def _image(self, body: dict) -> ImageTensor:
        try:
            return as_image(decode_png_base64(self._field(body, 'image')))
        except BackendError:
            raise
        except Exception as e:
            raise BackendError(f"undecodable image in response ({e})", role=self.role, endpoint=self.endpoint)

    def _tokens(self, words) -> TokenSequence:
        try:
            return as_tokens([str(word).lower() for word in words])
        except ValueError as e:
            raise BackendError(f"malformed word list in response ({e})", role=self.role, endpoint=self.endpoint)

    def __repr__(self):
        return f"{type(self).__name__}({self.endpoint})"


class HttpEmbedder(HttpBackend, Embedder):
    role = 'embedder'

    def __init__(self, config: BackendConfig):
        super().__init__(config)
        self._dim = config.embedding_dim

    @property
    def dim(self) -> int:
        return self._dim

    def embed_text(self, t: TokenSequence) -> np.ndarray:
        body = self._post('embed/text', {"words": as_tokens(t)})
        return self._unit(self._field(body, 'embedding'))

    def embed_image(self, img: ImageTensor) -> np.ndarray:
        body = self._post('embed/image', {"image": encode_png_base64(img)})
        return self._unit(self._field(body, 'embedding'))

    def _unit(self, values) -> np.ndarray:
        vector = np.asarray(values, dtype=np.float64)
        if vector.shape != (self._dim,):
            raise BackendError(
                f"embedding has shape {vector.shape}, configured dim is {self._dim}",
                role=self.role, endpoint=self.endpoint)
        norm = np.linalg.norm(vector)
        if norm == 0.0:
            raise BackendError("embedding has zero norm", role=self.role, endpoint=self.endpoint)
        return vector / norm


class HttpGenerator(HttpBackend, Generator):
    role = 'generator'

    def generate(self, t: TokenSequence, seed: int = 0) -> ImageTensor:
        return self._image(self._post('generate', {"words": as_tokens(t), "seed": int(seed)}))


class HttpInpainter(HttpBackend, Inpainter):
    role = 'inpainter'

    def inpaint(self, img: ImageTensor, region: ImageMask) -> ImageTensor:
        image = as_image(img)
        mask = np.asarray(region, dtype=np.float64)
        payload = {
            "image": encode_png_base64(image),
            "mask": encode_png_base64(np.repeat(mask[:, :, None], 3, axis=2)),
        }
        return self._image(self._post('inpaint', payload))


class HttpCaptioner(HttpBackend, Captioner):
    role = 'captioner'

    def caption(self, img: ImageTensor) -> TokenSequence:
        body = self._post('caption', {"image": encode_png_base64(img)})
        words = self._tokens(self._field(body, 'words'))
        if not words:
            raise BackendError("empty caption", role=self.role, endpoint=self.endpoint)
        return words


class HttpSuggester(HttpBackend, Suggester):
    role = 'suggester'

    def suggest(self, query: TokenSequence) -> List[TokenSequence]:
        body = self._post('suggest', {"query": as_tokens(query)})
        return [self._tokens(phrase) for phrase in self._field(body, 'suggestions')]


class HttpEditor(HttpBackend, Editor):
    role = 'editor'

    def edit(self, img: ImageTensor, condition: TokenSequence, seed: int = 0) -> ImageTensor:
        payload = {"image": encode_png_base64(img), "condition": as_tokens(condition), "seed": int(seed)}
        return self._image(self._post('edit', payload))


ADAPTERS = {
    'embedder': HttpEmbedder,
    'generator': HttpGenerator,
    'inpainter': HttpInpainter,
    'captioner': HttpCaptioner,
    'suggester': HttpSuggester,
    'editor': HttpEditor,
}
