import logging
import math
from dataclasses import dataclass, field
from typing import Callable, List, Optional

import cv2
import numpy as np

from app.application import attribution_service
from app.domain.errors import ContractViolation
from app.domain.masking import as_image, as_tokens, binary_region
from app.domain.models import (
    DEFAULT_BLUR_SIGMA,
    ImageTensor,
    ManipulationResult,
    PipelineConfig,
    RegionSelection,
    SaliencyMap,
    Strategy,
    TokenSequence,
    Verdict,
    WordImportanceMap,
)

logger = logging.getLogger(__name__)

ImageScorer = Callable[[ImageTensor], float]
PromptScreen = Callable[[TokenSequence], Verdict]


@dataclass
class WordSwapOutcome:
    prompt: TokenSequence
    image: ImageTensor
    score: float
    chosen_word: str
    chosen_index: int
    replacement: TokenSequence
    candidates: List[dict] = field(default_factory=list)
    unimproved: bool = False
    screened_out: List[TokenSequence] = field(default_factory=list)


@dataclass
class CaptionOutcome:
    caption: TokenSequence
    image: ImageTensor
    score: float
    caption_score: Optional[float] = None
    caption_flagged: bool = False


def select_region(sal, tau: float) -> RegionSelection:
    """tau-superlevel set of the normalized saliency."""
    if not 0.0 < tau < 1.0:
        raise ContractViolation(f"Region threshold must lie in (0,1), got {tau}")
    values = sal.values if isinstance(sal, SaliencyMap) else sal
    mask = binary_region(values, tau)
    return RegionSelection(threshold=tau, mask=mask, pixel_count=int(mask.sum()))


def _region_mask(img: ImageTensor, region) -> np.ndarray:
    mask = np.asarray(region.mask if isinstance(region, RegionSelection) else region).astype(bool)
    if mask.shape != img.shape[:2]:
        raise ContractViolation(f"Region shape {mask.shape} does not match image shape {img.shape[:2]}")
    return mask


def gaussian_blur(img: ImageTensor, sigma: float) -> ImageTensor:
    """Whole-image Gaussian blur, kernel radius ceil(3*sigma), clamp-to-edge borders."""
    if sigma <= 0:
        raise ContractViolation(f"Blur sigma must be > 0, got {sigma}")
    ksize = 2 * int(math.ceil(3.0 * sigma)) + 1
    blurred = cv2.GaussianBlur(np.asarray(img, dtype=np.float64), (ksize, ksize), sigmaX=sigma, sigmaY=sigma,
                               borderType=cv2.BORDER_REPLICATE)
    return np.clip(blurred, 0.0, 1.0)


def blur_strategy(img: ImageTensor, region, sigma: float = DEFAULT_BLUR_SIGMA) -> ImageTensor:
    image = as_image(img)
    if sigma <= 0:
        raise ContractViolation(f"Blur sigma must be > 0, got {sigma}")
    mask = _region_mask(image, region)
    if not mask.any():
        return image.copy()
    return np.where(mask[:, :, None], gaussian_blur(image, sigma), image)


def inpaint_strategy(img: ImageTensor, region, inpainter) -> ImageTensor:
    image = as_image(img)
    mask = _region_mask(image, region)
    if not mask.any():
        return image.copy()
    zeroed = image.copy()
    zeroed[mask] = 0.0
    filled = as_image(inpainter.inpaint(zeroed, mask.astype(np.float64)), 'inpainted image')
    if filled.shape != image.shape:
        raise ContractViolation(f"Inpainter returned shape {filled.shape}, expected {image.shape}")
    return np.where(mask[:, :, None], filled, image)


def word_swap_strategy(t: TokenSequence, wmap: WordImportanceMap, suggester, generator, scorer: ImageScorer,
                       seed: int = 0, original_score: Optional[float] = None,
                       screen: Optional[PromptScreen] = None) -> WordSwapOutcome:
    """Replace the most important word with the least immoral suggested phrase."""
    words = as_tokens(t)
    if not words:
        raise ContractViolation("Word swap needs a non-empty prompt")
    if len(wmap.entries) != len(words):
        raise ContractViolation(f"Word map has {len(wmap.entries)} entries for a {len(words)}-word prompt")

    index = wmap.argmax()
    chosen = words[index]
    suggestions = [as_tokens(phrase) for phrase in suggester.suggest([chosen])]
    suggestions = [phrase for phrase in suggestions if phrase]
    if not suggestions:
        raise ContractViolation(f"Suggestion service returned no alternatives for '{chosen}'")

    screened_out = []
    if screen is not None:
        kept = []
        for phrase in suggestions:
            if screen(phrase).is_immoral:
                screened_out.append(phrase)
            else:
                kept.append(phrase)
        if kept:
            suggestions = kept
        else:
            logger.warning(f"Every suggestion for '{chosen}' was judged immoral; using them unscreened")

    if original_score is None:
        original_score = float(scorer(generator.generate(words, seed)))

    best = None
    candidates = []
    for phrase in suggestions:
        swapped = words[:index] + phrase + words[index + 1:]
        image = generator.generate(swapped, seed)
        score = float(scorer(image))
        candidates.append({'phrase': phrase, 'prompt': swapped, 'score': round(score, 6)})
        if best is None or score < best[2]:
            best = (swapped, image, score, phrase)

    swapped, image, score, phrase = best
    unimproved = not score < original_score
    if unimproved:
        logger.info(f"No suggestion for '{chosen}' improved on the original score {original_score:.4f}")
    return WordSwapOutcome(
        prompt=swapped, image=image, score=score, chosen_word=chosen, chosen_index=index, replacement=phrase,
        candidates=candidates, unimproved=unimproved, screened_out=screened_out,
    )


def caption_strategy(img: ImageTensor, captioner, editor, scorer: ImageScorer, seed: int = 0,
                     screen: Optional[PromptScreen] = None) -> CaptionOutcome:
    image = as_image(img)
    caption = as_tokens(captioner.caption(image))
    caption_score = None
    caption_flagged = False
    if screen is not None:
        verdict = screen(caption)
        caption_score = verdict.score
        caption_flagged = verdict.is_immoral
        if caption_flagged:
            logger.warning(f"Caption '{' '.join(caption)}' was judged immoral; editing with it anyway")
    edited = as_image(editor.edit(image, caption, seed), 'edited image')
    return CaptionOutcome(caption=caption, image=edited, score=float(scorer(edited)),
                          caption_score=caption_score, caption_flagged=caption_flagged)


class EthicalManipulator:
    """Judges an input, localizes what makes it immoral and rewrites it with one or more strategies."""

    def __init__(self, recognizer, backends, config: PipelineConfig):
        self.recognizer = recognizer
        self.backends = backends
        self.config = config

    def run(self, img: Optional[ImageTensor] = None, prompt: Optional[TokenSequence] = None,
            strategy='auto', source_id: str = '') -> List[ManipulationResult]:
        strategy = strategy if isinstance(strategy, Strategy) else Strategy.parse(strategy)
        if strategy is Strategy.NONE_NEEDED:
            raise ContractViolation("'none-needed' is a result, not a selectable strategy")
        if img is None and prompt is None:
            raise ContractViolation("Manipulation needs an image, a prompt, or both")
        if prompt is not None:
            prompt = as_tokens(prompt)
            if not prompt:
                raise ContractViolation("Prompt must contain at least one word")
        if strategy is Strategy.WORD_SWAP and prompt is None:
            raise ContractViolation("word_swap requires a prompt")

        seed = self.config.seed
        threshold = self.config.threshold
        generated = img is None
        image = self.backends.generator.generate(prompt, seed) if generated else img
        image = as_image(image)
        pre = self.recognizer.score_image(image)
        logger.info(f"Manipulating {source_id or 'input'} with strategy={strategy.key} pre_score={pre:.4f} seed={seed}")

        base = {'seed': seed, 'generated_from_prompt': generated}
        if prompt is not None:
            base['prompt'] = list(prompt)

        if pre < threshold:
            logger.info(f"Input already judged moral ({pre:.4f} < {threshold}); nothing to do")
            return [ManipulationResult(
                strategy=Strategy.NONE_NEEDED, input_image=image, output_image=image.copy(), pre_score=pre,
                post_score=pre, threshold=threshold, seed=seed, source_id=source_id,
                provenance=dict(base, reason='pre_score below judge threshold'),
            )]

        if strategy is Strategy.AUTO:
            strategies = Strategy.concrete()
            if prompt is None:
                strategies = [s for s in strategies if s is not Strategy.WORD_SWAP]
                logger.info("No prompt given; auto skips word_swap")
        else:
            strategies = [strategy]

        saliency = region = None
        if Strategy.BLUR in strategies or Strategy.INPAINT in strategies:
            saliency = self.saliency(image)
            region = select_region(saliency, self.config.manipulation.region_threshold)
        wmap = None
        if Strategy.WORD_SWAP in strategies:
            wmap = self.word_importance(prompt)

        results = []
        for current in strategies:
            results.append(self._apply(current, image, prompt, pre, saliency, region, wmap, dict(base), source_id))
        if len(results) > 1:
            results = sorted(results, key=lambda r: r.post_score)
        for result in results:
            logger.info(f"{result.strategy.key}: post_score={result.post_score:.4f} verdict={result.verdict.label}")
        if all(r.still_immoral for r in results):
            logger.warning(f"No strategy produced a moral verdict for {source_id or 'input'}")
        return results

    def saliency(self, image: ImageTensor) -> SaliencyMap:
        attribution = self.config.attribution
        H, W = image.shape[:2]
        grid = attribution_service.resolve_grid(attribution.grid, H, W)
        if attribution.grid is not None and grid != tuple(attribution.grid):
            logger.info(f"Grid {tuple(attribution.grid)} clamped to {grid} for a {W}x{H} image")
        return attribution_service.image_saliency(
            image, self.recognizer.score_image, K=attribution.pixel_samples, p=attribution.mask_prob,
            grid=grid, seed=self.config.seed, workers=attribution.workers)

    def word_importance(self, prompt: TokenSequence) -> WordImportanceMap:
        attribution = self.config.attribution
        return attribution_service.word_importance(
            prompt, self.backends.generator, self.recognizer.score_image, K=attribution.word_samples,
            p=attribution.mask_prob, seed=self.config.seed, workers=attribution.workers)

    def _apply(self, strategy: Strategy, image, prompt, pre, saliency, region, wmap, provenance, source_id):
        settings = self.config.manipulation
        seed = self.config.seed
        extra = {}
        if strategy is Strategy.BLUR:
            output = blur_strategy(image, region, settings.blur_sigma)
            post = self.recognizer.score_image(output)
            provenance.update(region_threshold=settings.region_threshold, region_pixels=region.pixel_count,
                              blur_sigma=settings.blur_sigma, saliency=saliency.metadata())
            extra = {'region': region.mask, 'saliency': saliency}
        elif strategy is Strategy.INPAINT:
            output = inpaint_strategy(image, region, self.backends.inpainter)
            post = self.recognizer.score_image(output)
            provenance.update(region_threshold=settings.region_threshold, region_pixels=region.pixel_count,
                              saliency=saliency.metadata())
            extra = {'region': region.mask, 'saliency': saliency}
        elif strategy is Strategy.WORD_SWAP:
            outcome = word_swap_strategy(prompt, wmap, self.backends.suggester, self.backends.generator,
                                         self.recognizer.score_image, seed, original_score=pre,
                                         screen=self.recognizer.screen_prompt)
            output, post = outcome.image, outcome.score
            provenance.update(chosen_word=outcome.chosen_word, chosen_index=outcome.chosen_index,
                              replacement=outcome.replacement, swapped_prompt=outcome.prompt,
                              candidates=outcome.candidates, unimproved=outcome.unimproved,
                              screened_out=outcome.screened_out)
            extra = {'word_map': wmap}
        elif strategy is Strategy.CAPTION_REWRITE:
            outcome = caption_strategy(image, self.backends.captioner, self.backends.editor,
                                       self.recognizer.score_image, seed, screen=self.recognizer.screen_prompt)
            output, post = outcome.image, outcome.score
            provenance.update(caption=outcome.caption,
                              caption_score=round(outcome.caption_score, 6) if outcome.caption_score is not None else None,
                              caption_flagged=outcome.caption_flagged)
        else:
            raise ContractViolation(f"Strategy '{strategy.key}' cannot be applied directly")
        return ManipulationResult(
            strategy=strategy, input_image=image, output_image=output, pre_score=pre, post_score=post,
            threshold=self.config.threshold, seed=seed, provenance=provenance, source_id=source_id, **extra)


def manipulate(img: Optional[ImageTensor], t: Optional[TokenSequence], strategy, config: PipelineConfig,
               recognizer, backends):
    """One ManipulationResult for a concrete strategy or the none-needed guard; a best-first list for auto."""
    results = EthicalManipulator(recognizer, backends, config).run(img, t, strategy)
    requested = strategy if isinstance(strategy, Strategy) else Strategy.parse(strategy)
    if requested is Strategy.AUTO and results[0].strategy is not Strategy.NONE_NEEDED:
        return results
    return results[0]
