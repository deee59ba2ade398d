"""
Black-box attribution by randomized masking.

Word importance: delete random subsets of prompt words, regenerate, score,
and average the scores of the masks that kept each word. Pixel saliency:
multiply the image by random smooth masks, score, and average per pixel
weighted by how much each mask kept that pixel. Both estimators divide by
the realized mask mass (a conditional mean), and both have exhaustive
oracles for tiny inputs.
"""
import itertools
import logging
from concurrent.futures import ThreadPoolExecutor
from typing import Callable, Iterable, List, Optional, Sequence, Tuple

import numpy as np
from tqdm import tqdm

from app.domain.errors import CombinatorialLimitError, ContractViolation
from app.domain.masking import apply_image_mask, apply_text_mask, as_image, as_tokens
from app.domain.models import (
    DEFAULT_GRID,
    DEFAULT_MASK_PROB,
    DEFAULT_PIXEL_SAMPLES,
    DEFAULT_WORD_SAMPLES,
    MIN_CELL_PX,
    ImageTensor,
    MaskBatch,
    SaliencyMap,
    TokenSequence,
    WordImportanceEntry,
    WordImportanceMap,
)

logger = logging.getLogger(__name__)

ImageScorer = Callable[[ImageTensor], float]

MAX_EXHAUSTIVE_WORDS = 16
MAX_EXHAUSTIVE_PIXELS = 16
CHUNK_SIZE = 256


def _check_sampling(count: int, p: float) -> None:
    if count < 1:
        raise ContractViolation(f"Sample count must be >= 1, got {count}")
    if not 0.0 < p < 1.0:
        raise ContractViolation(f"Mask probability must lie in (0,1), got {p}")


def map_in_order(fn: Callable, items: Sequence, workers: int) -> List[float]:
    """Apply fn to every item; results come back in item order regardless of workers."""
    if workers <= 1 or len(items) <= 1:
        return [float(fn(item)) for item in items]
    with ThreadPoolExecutor(max_workers=workers) as executor:
        return [float(score) for score in executor.map(fn, items)]


class _CenteredAccumulator:
    """Running sum of (score - ref) * mask and of mask, in mask-index order."""

    def __init__(self, shape):
        self.ref = None
        self.numerator = np.zeros(shape)
        self.denominator = np.zeros(shape)

    def add(self, score: float, mask: np.ndarray, weight: float = 1.0) -> None:
        if self.ref is None:
            self.ref = score
        self.numerator += weight * (score - self.ref) * mask
        self.denominator += weight * mask

    def result(self):
        """(values, covered); uncovered entries are 0."""
        covered = self.denominator > 0
        values = np.zeros_like(self.numerator)
        ref = self.ref if self.ref is not None else 0.0
        values[covered] = ref + self.numerator[covered] / self.denominator[covered]
        return np.clip(values, 0.0, 1.0), covered


def sample_word_masks(n: int, K: int = DEFAULT_WORD_SAMPLES, p: float = DEFAULT_MASK_PROB, seed: int = 0) -> MaskBatch:
    """K Bernoulli(p) keep-masks over n words; all-zero masks are redrawn."""
    if n < 1:
        raise ContractViolation(f"Word mask length must be >= 1, got {n}")
    _check_sampling(K, p)
    rng = np.random.default_rng(seed)
    bits = rng.random((K, n)) < p
    empty = ~bits.any(axis=1)
    while empty.any():
        bits[empty] = rng.random((int(empty.sum()), n)) < p
        empty = ~bits.any(axis=1)
    return MaskBatch(kind='word', sample_count=K, mask_prob=p, seed=seed, shape=(n,), word_bits=bits.astype(np.int8))


def _prompt_scorer(generator, scorer: ImageScorer, seed: int):
    def score_kept(kept: Tuple[str, ...]) -> float:
        return float(scorer(generator.generate(list(kept), seed)))
    return score_kept


def _word_map(t: TokenSequence, masks: Iterable[np.ndarray], weights: Iterable[float], scores: Iterable[float],
              sample_count: int, p: float, seed: Optional[int], exhaustive: bool) -> WordImportanceMap:
    accumulator = _CenteredAccumulator(len(t))
    support = np.zeros(len(t), dtype=int)
    for mask, weight, score in zip(masks, weights, scores):
        bits = np.asarray(mask, dtype=np.float64)
        accumulator.add(score, bits, weight)
        support += bits.astype(int)
    values, covered = accumulator.result()
    entries = []
    for index, word in enumerate(t):
        importance = float(values[index]) if covered[index] else None
        if importance is None:
            logger.warning(f"Word '{word}' at position {index} was never kept by any mask; importance undefined")
        entries.append(WordImportanceEntry(word=word, importance=importance, support=int(support[index])))
    return WordImportanceMap(entries=entries, sample_count=sample_count, mask_prob=p, seed=seed, exhaustive=exhaustive)


def word_importance(t: TokenSequence, generator, scorer: ImageScorer, K: int = DEFAULT_WORD_SAMPLES,
                    p: float = DEFAULT_MASK_PROB, seed: int = 0, workers: int = 1) -> WordImportanceMap:
    """Monte-Carlo importance of each word of t for scorer(generate(masked t))."""
    words = as_tokens(t)
    if not words:
        raise ContractViolation("Word importance needs a non-empty prompt")
    batch = sample_word_masks(len(words), K, p, seed)
    logger.info(f"Word importance for {len(words)} words (K={K}, p={p}, seed={seed})")

    keys = [tuple(apply_text_mask(words, bits)) for bits in batch.word_bits]
    distinct = list(dict.fromkeys(keys))
    score_kept = _prompt_scorer(generator, scorer, seed)
    memo = dict(zip(distinct, map_in_order(score_kept, distinct, workers)))
    logger.debug(f"Generated {len(distinct)} distinct masked prompts for {K} masks")

    scores = [memo[key] for key in keys]
    return _word_map(words, batch.word_bits, itertools.repeat(1.0), scores, K, p, seed, exhaustive=False)


def exhaustive_word_importance(t: TokenSequence, generator, scorer: ImageScorer, p: float = DEFAULT_MASK_PROB,
                               seed: int = 0, workers: int = 1) -> WordImportanceMap:
    """Exact conditional expectation over every non-empty mask, Bernoulli(p)-weighted."""
    words = as_tokens(t)
    if not words:
        raise ContractViolation("Word importance needs a non-empty prompt")
    if len(words) > MAX_EXHAUSTIVE_WORDS:
        raise CombinatorialLimitError(
            f"Exhaustive word importance enumerates 2^n masks; n={len(words)} exceeds {MAX_EXHAUSTIVE_WORDS}")
    _check_sampling(1, p)

    masks = [np.array(bits, dtype=np.int8) for bits in itertools.product((0, 1), repeat=len(words)) if any(bits)]
    weights = [p ** int(m.sum()) * (1.0 - p) ** int(len(words) - m.sum()) for m in masks]
    score_kept = _prompt_scorer(generator, scorer, seed)
    scores = map_in_order(score_kept, [tuple(apply_text_mask(words, m)) for m in masks], workers)
    return _word_map(words, masks, weights, scores, len(masks), p, seed, exhaustive=True)


def resolve_grid(grid: Optional[Tuple[int, int]], H: int, W: int) -> Tuple[int, int]:
    """Mask grid for an HxW image.

    None picks DEFAULT_GRID for large images and fewer cells for small ones so
    no cell drops below MIN_CELL_PX; an explicit grid is clamped to the image.
    """
    if grid is None:
        return (max(1, min(DEFAULT_GRID[0], H // MIN_CELL_PX)), max(1, min(DEFAULT_GRID[1], W // MIN_CELL_PX)))
    return (min(int(grid[0]), H), min(int(grid[1]), W))


def sample_image_masks(H: int, W: int, grid: Tuple[int, int] = DEFAULT_GRID, K: int = DEFAULT_PIXEL_SAMPLES,
                       p: float = DEFAULT_MASK_PROB, seed: int = 0, exhaustive: bool = False) -> MaskBatch:
    """Smooth random masks: Bernoulli(p) grids, bilinearly upsampled and randomly shifted.

    A grid equal to the image size is test mode: binary per-pixel masks with
    no upsampling. With exhaustive=True (test mode only) the batch holds all
    2^(H*W) masks in binary counting order.
    """
    h, w = int(grid[0]), int(grid[1])
    if H < 1 or W < 1:
        raise ContractViolation(f"Image must be at least 1x1, got {H}x{W}")
    if not (1 <= h <= H and 1 <= w <= W):
        raise ContractViolation(f"Grid {h}x{w} must fit inside the {H}x{W} image")
    test_mode = (h, w) == (H, W)

    if exhaustive:
        if not test_mode:
            raise ContractViolation("Exhaustive image masks require test mode (grid == image size)")
        if H * W > MAX_EXHAUSTIVE_PIXELS:
            raise CombinatorialLimitError(
                f"Exhaustive masks enumerate 2^(H*W); {H}x{W} exceeds {MAX_EXHAUSTIVE_PIXELS} pixels")
        _check_sampling(1, p)
        grids = np.array(list(itertools.product((0, 1), repeat=H * W)), dtype=np.int8).reshape(-1, H, W)
        return MaskBatch(kind='image', sample_count=len(grids), mask_prob=p, seed=None, shape=(H, W),
                         grid=(h, w), grids=grids)

    _check_sampling(K, p)
    rng = np.random.default_rng(seed)
    grids = (rng.random((K, h, w)) < p).astype(np.int8)
    if test_mode:
        return MaskBatch(kind='image', sample_count=K, mask_prob=p, seed=seed, shape=(H, W), grid=(h, w), grids=grids)
    cell_h = -(-H // h)
    cell_w = -(-W // w)
    shifts = np.stack([rng.integers(0, cell_h, size=K), rng.integers(0, cell_w, size=K)], axis=1)
    return MaskBatch(kind='image', sample_count=K, mask_prob=p, seed=seed, shape=(H, W), grid=(h, w),
                     grids=grids, shifts=shifts, upsample=True)


def _saliency_from_batch(image: ImageTensor, scorer: ImageScorer, batch: MaskBatch, weights: Optional[Sequence[float]],
                         workers: int, progress: bool) -> Tuple[np.ndarray, int]:
    accumulator = _CenteredAccumulator(image.shape[:2])

    def score_mask(mask: np.ndarray) -> float:
        return scorer(apply_image_mask(image, mask))

    starts = range(0, batch.sample_count, CHUNK_SIZE)
    for start in tqdm(starts, desc='Scoring masks', disable=not progress):
        masks = [batch[index] for index in range(start, min(start + CHUNK_SIZE, batch.sample_count))]
        scores = map_in_order(score_mask, masks, workers)
        for offset, (mask, score) in enumerate(zip(masks, scores)):
            weight = 1.0 if weights is None else weights[start + offset]
            accumulator.add(score, mask, weight)
    values, covered = accumulator.result()
    uncovered = int((~covered).sum())
    if uncovered:
        logger.warning(f"{uncovered} pixel(s) were never kept by any mask; their saliency is set to 0")
    return values, uncovered


def image_saliency(img: ImageTensor, scorer: ImageScorer, K: int = DEFAULT_PIXEL_SAMPLES, p: float = DEFAULT_MASK_PROB,
                   grid: Optional[Tuple[int, int]] = None, seed: int = 0, workers: int = 1,
                   progress: bool = False) -> SaliencyMap:
    image = as_image(img)
    H, W = image.shape[:2]
    if grid is None:
        grid = resolve_grid(None, H, W)
    batch = sample_image_masks(H, W, grid, K, p, seed)
    logger.info(f"Image saliency for {W}x{H} image (K={K}, p={p}, grid={tuple(grid)}, seed={seed})")
    values, uncovered = _saliency_from_batch(image, scorer, batch, None, workers, progress)
    return SaliencyMap(values=values, sample_count=K, grid=tuple(grid), mask_prob=p, seed=seed,
                       uncovered_pixels=uncovered)


def exhaustive_image_saliency(img: ImageTensor, scorer: ImageScorer, p: float = DEFAULT_MASK_PROB,
                              workers: int = 1) -> SaliencyMap:
    """Exact saliency over all 2^(H*W) binary pixel masks, Bernoulli(p)-weighted."""
    image = as_image(img)
    H, W = image.shape[:2]
    batch = sample_image_masks(H, W, (H, W), p=p, exhaustive=True)
    kept = batch.grids.reshape(batch.sample_count, -1).sum(axis=1)
    weights = [p ** int(k) * (1.0 - p) ** int(H * W - k) for k in kept]
    values, uncovered = _saliency_from_batch(image, scorer, batch, weights, workers, progress=False)
    return SaliencyMap(values=values, sample_count=batch.sample_count, grid=(H, W), mask_prob=p, seed=None,
                       uncovered_pixels=uncovered, exhaustive=True)
