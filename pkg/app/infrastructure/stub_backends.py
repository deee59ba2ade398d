"""
Deterministic desk-scale stand-ins for the heavy models.

The text and image stubs share one tiny joint space: basis e1 carries
immoral content, e2 moral content and e3 "nothing in particular". A
generated image paints red cells for immoral words and blue cells for moral
ones, and the image embedder reads redness/blueness back out, so a head
trained on text embeddings transfers to stub images the same way a real
joint embedding transfers across modalities.
"""
import logging
from typing import List, Optional

import numpy as np

from app.domain.errors import ContractViolation
from app.domain.masking import as_image, as_tokens
from app.domain.models import ImageMask, ImageTensor, TokenSequence
from app.infrastructure.backends import Captioner, Editor, Embedder, Generator, Inpainter, Suggester

logger = logging.getLogger(__name__)

IMMORAL_WORDS = frozenset({'gun', 'blood', 'knife', 'sword', 'cigarette', 'kill', 'shoot', 'shooting', 'torture'})
MORAL_WORDS = frozenset({'water', 'flower', 'smile', 'toy', 'helmet', 'camera', 'blue', 'calm'})

CANVAS_SIZE = 64
GRID_CELLS = 4
CELL_SIZE = CANVAS_SIZE // GRID_CELLS
UNKNOWN_WEIGHT = 0.1

RED = (1.0, 0.0, 0.0)
BLUE = (0.0, 0.0, 1.0)

BLUE_CAPTION = ['a', 'calm', 'blue', 'scene']
NEUTRAL_CAPTION = ['a', 'scene', 'with', 'shapes']

SUGGESTION_TABLE = {
    'gun': [['water', 'gun'], ['toy', 'gun']],
    'sword': [['toy', 'sword']],
    'knife': [['butter', 'knife']],
}

_MOD = 2 ** 32


def polyhash(word: str) -> int:
    """sum(byte_i * 31**i) mod 2**32 over the UTF-8 bytes of word"""
    value = 0
    power = 1
    for byte in word.encode('utf-8'):
        value = (value + byte * power) % _MOD
        power = (power * 31) % _MOD
    return value


def word_roles(words: TokenSequence) -> List[Optional[str]]:
    """'immoral', 'moral' or None per word; a moral word neutralizes the immoral word right after it"""
    roles = []
    for index, word in enumerate(words):
        if word in IMMORAL_WORDS:
            if index > 0 and words[index - 1] in MORAL_WORDS:
                roles.append('moral')
            else:
                roles.append('immoral')
        elif word in MORAL_WORDS:
            roles.append('moral')
        else:
            roles.append(None)
    return roles


def basis(dim: int, index: int) -> np.ndarray:
    vector = np.zeros(dim)
    vector[index] = 1.0
    return vector


def color_balance(img: ImageTensor):
    """(redness, blueness): mean over pixels of max(0, r-(g+b)/2) and max(0, b-(r+g)/2)"""
    r, g, b = img[:, :, 0], img[:, :, 1], img[:, :, 2]
    redness = float(np.maximum(0.0, r - (g + b) / 2.0).mean())
    blueness = float(np.maximum(0.0, b - (r + g) / 2.0).mean())
    return redness, blueness


class StubBackend:
    kind = 'stub'

    def __repr__(self):
        return f"{type(self).__name__}()"


class StubEmbedder(StubBackend, Embedder):

    def __init__(self, dim: int = 8):
        if dim < 3:
            raise ContractViolation(f"Stub embeddings need at least 3 dimensions, got {dim}")
        self._dim = dim

    @property
    def dim(self) -> int:
        return self._dim

    def embed_text(self, t: TokenSequence) -> np.ndarray:
        words = as_tokens(t)
        vector = np.zeros(self._dim)
        for role in word_roles(words):
            if role == 'immoral':
                vector[0] += 1.0
            elif role == 'moral':
                vector[1] += 1.0
            else:
                vector[2] += UNKNOWN_WEIGHT
        return self._normalize(vector)

    def embed_image(self, img: ImageTensor) -> np.ndarray:
        redness, blueness = color_balance(as_image(img))
        vector = np.zeros(self._dim)
        vector[0] = redness
        vector[1] = blueness
        vector[2] = UNKNOWN_WEIGHT
        return self._normalize(vector)

    def _normalize(self, vector: np.ndarray) -> np.ndarray:
        norm = np.linalg.norm(vector)
        if norm == 0.0:
            return basis(self._dim, 2)
        return vector / norm

    def __repr__(self):
        return f"StubEmbedder(dim={self._dim})"


class StubGenerator(StubBackend, Generator):
    """64x64 white canvas, one 16x16 cell per lexicon word; the seed is ignored."""

    def generate(self, t: TokenSequence, seed: int = 0) -> ImageTensor:
        words = as_tokens(t)
        canvas = np.ones((CANVAS_SIZE, CANVAS_SIZE, 3))
        for word, role in zip(words, word_roles(words)):
            if role is None:
                continue
            row, col = divmod(polyhash(word) % (GRID_CELLS * GRID_CELLS), GRID_CELLS)
            top, left = row * CELL_SIZE, col * CELL_SIZE
            canvas[top:top + CELL_SIZE, left:left + CELL_SIZE] = RED if role == 'immoral' else BLUE
        return canvas


class StubInpainter(StubBackend, Inpainter):
    """Fills the region with solid white."""

    def inpaint(self, img: ImageTensor, region: ImageMask) -> ImageTensor:
        image = as_image(img)
        mask = np.asarray(region, dtype=np.float64)
        if mask.shape != image.shape[:2]:
            raise ContractViolation(f"Region shape {mask.shape} does not match image shape {image.shape[:2]}")
        if not np.all((mask == 0.0) | (mask == 1.0)):
            raise ContractViolation("Inpainting region must be binary")
        out = image.copy()
        out[mask == 1.0] = 1.0
        return out


class StubCaptioner(StubBackend, Captioner):

    def caption(self, img: ImageTensor) -> TokenSequence:
        redness, blueness = color_balance(as_image(img))
        if blueness > redness:
            return list(BLUE_CAPTION)
        return list(NEUTRAL_CAPTION)


class StubSuggester(StubBackend, Suggester):

    def suggest(self, query: TokenSequence) -> List[TokenSequence]:
        words = as_tokens(query)
        if not words:
            raise ContractViolation("Suggestion query must not be empty")
        head = words[-1]
        if head in SUGGESTION_TABLE:
            return [list(phrase) for phrase in SUGGESTION_TABLE[head]]
        return [[head, 'toy'], [head, 'water']]


class StubEditor(StubBackend, Editor):
    """Regenerates from the condition text alone."""

    def __init__(self):
        self._generator = StubGenerator()

    def edit(self, img: ImageTensor, condition: TokenSequence, seed: int = 0) -> ImageTensor:
        as_image(img)
        return self._generator.generate(condition, seed)
