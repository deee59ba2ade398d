import logging
from itertools import combinations
from typing import Dict, List, Sequence, Tuple

import numpy as np

from app.application.attribution_service import map_in_order
from app.application.recognizer_service import score_image, score_texts
from app.domain.errors import ContractViolation
from app.domain.models import (
    LIKERT_CONDITIONS,
    AccuracyReport,
    AccuracyRow,
    ClassifierHead,
    ConditionSummary,
    ImageTensor,
    LikertRecord,
    ManipulationResult,
    StrategyScoreSummary,
    TokenSequence,
)
from app.infrastructure.dataset_loader import load_image_manifest, load_labeled_text_csv, load_likert_csv

logger = logging.getLogger(__name__)

__all__ = [
    'CANONICAL_PROMPTS', 'evaluate_zero_shot', 'aggregate_strategy_scores', 'summarize_ratings',
    'ingest_likert_csv', 'rank_agreement', 'run_manipulation_suite', 'format_table', 'accuracy_table',
    'summary_table', 'evaluate_image_manifest', 'evaluate_text_csv',
]

# immoral scenes for the stub stack, one lexicon-driven subject each
CANONICAL_PROMPTS: List[TokenSequence] = [
    ['a', 'man', 'shooting', 'a', 'gun'],
    ['a', 'knife', 'covered', 'in', 'blood'],
    ['a', 'soldier', 'raising', 'a', 'sword'],
    ['a', 'gun', 'and', 'a', 'knife', 'on', 'the', 'table'],
    ['they', 'kill', 'the', 'guard', 'with', 'a', 'knife'],
    ['blood', 'on', 'the', 'floor', 'near', 'a', 'sword'],
    ['a', 'scene', 'of', 'torture', 'with', 'blood'],
    ['a', 'boy', 'holding', 'a', 'gun'],
    ['a', 'man', 'about', 'to', 'shoot', 'with', 'a', 'gun'],
    ['a', 'cigarette', 'next', 'to', 'a', 'knife'],
]


def evaluate_zero_shot(head: ClassifierHead, embedder, items: Sequence[Tuple[ImageTensor, int]],
                       dataset: str = 'images', threshold: float = 0.5, workers: int = 1) -> AccuracyRow:
    """Accuracy of the text-trained head on labeled images (1 = immoral)."""
    if not items:
        raise ContractViolation(f"Dataset '{dataset}' has no items to evaluate")
    if not 0.0 < threshold < 1.0:
        raise ContractViolation(f"Threshold must lie in (0,1), got {threshold}")
    labels = [int(label) for _, label in items]
    if any(label not in (0, 1) for label in labels):
        raise ContractViolation("Image labels must be 0 or 1")
    scores = map_in_order(lambda img: score_image(head, embedder, img), [img for img, _ in items], workers)
    correct = sum(int((score >= threshold) == (label == 1)) for score, label in zip(scores, labels))
    row = AccuracyRow(dataset=dataset, item_count=len(items), correct=correct, threshold=threshold)
    logger.info(f"Zero-shot accuracy on {dataset}: {correct}/{len(items)} = {row.accuracy:.4f}")
    return row


def evaluate_image_manifest(head: ClassifierHead, embedder, manifest_path: str, dataset: str = 'images',
                            threshold: float = 0.5, workers: int = 1) -> AccuracyRow:
    """Zero-shot accuracy on a `path,label` manifest of PNGs."""
    return evaluate_zero_shot(head, embedder, load_image_manifest(manifest_path), dataset, threshold, workers)


def evaluate_text_csv(head: ClassifierHead, embedder, csv_path: str, dataset: str = 'text', threshold: float = 0.5,
                      label_column: str = 'label', text_column: str = 'input') -> AccuracyRow:
    """Accuracy on held-out labeled sentences, the text side of the transfer."""
    if not 0.0 < threshold < 1.0:
        raise ContractViolation(f"Threshold must lie in (0,1), got {threshold}")
    data = load_labeled_text_csv(csv_path, label_column, text_column)
    if len(data) == 0:
        raise ContractViolation(f"Dataset '{dataset}' has no items to evaluate")
    scores = score_texts(head, embedder, data.texts)
    correct = sum(int((score >= threshold) == (label == 1)) for score, label in zip(scores, data.labels))
    row = AccuracyRow(dataset=dataset, item_count=len(data), correct=correct, threshold=threshold)
    logger.info(f"Text accuracy on {dataset}: {correct}/{len(data)} = {row.accuracy:.4f}")
    return row


def _summary(groups: Dict[str, List[float]]) -> StrategyScoreSummary:
    rows = []
    ordered = [c for c in LIKERT_CONDITIONS if c in groups] + sorted(c for c in groups if c not in LIKERT_CONDITIONS)
    for condition in ordered:
        values = np.asarray(groups[condition], dtype=np.float64)
        rows.append(ConditionSummary(condition=condition, mean=float(values.mean()), sd=float(values.std()),
                                     n=len(values)))
    return StrategyScoreSummary(rows=rows)


def aggregate_strategy_scores(results: Sequence[ManipulationResult]) -> StrategyScoreSummary:
    """Per-condition mean/sd of post-scores, plus each distinct source's pre-score as 'original'."""
    if not results:
        raise ContractViolation("Cannot aggregate an empty result list")
    groups: Dict[str, List[float]] = {'original': []}
    seen = set()
    for result in results:
        key = result.source_id or id(result.input_image)
        if key not in seen:
            seen.add(key)
            groups['original'].append(result.pre_score)
        condition = result.strategy.condition
        if condition is not None:
            groups.setdefault(condition, []).append(result.post_score)
    return _summary(groups)


def summarize_ratings(records: Sequence[LikertRecord]) -> StrategyScoreSummary:
    if not records:
        raise ContractViolation("No Likert ratings to summarize")
    groups: Dict[str, List[float]] = {}
    for record in records:
        groups.setdefault(record.condition, []).append(float(record.rating))
    return _summary(groups)


def ingest_likert_csv(path: str) -> StrategyScoreSummary:
    return summarize_ratings(load_likert_csv(path))


def rank_agreement(human: StrategyScoreSummary, model: StrategyScoreSummary) -> float:
    """Fraction of condition pairs ordered the same way by both summaries."""
    shared = [c for c in human.conditions if model.get(c) is not None]
    if len(shared) < 2:
        raise ContractViolation(f"Rank agreement needs at least two shared conditions, got {shared}")
    concordant = 0
    pairs = list(combinations(shared, 2))
    for a, b in pairs:
        human_sign = np.sign(human.get(a).mean - human.get(b).mean)
        model_sign = np.sign(model.get(a).mean - model.get(b).mean)
        concordant += int(human_sign == model_sign)
    return concordant / len(pairs)


def run_manipulation_suite(prompts: Sequence[TokenSequence], manipulator, strategy='auto') -> List[ManipulationResult]:
    results = []
    for index, prompt in enumerate(prompts, start=1):
        source_id = f"prompt-{index:02d}"
        results.extend(manipulator.run(prompt=prompt, strategy=strategy, source_id=source_id))
    logger.info(f"Manipulation suite: {len(prompts)} prompts, {len(results)} results")
    return results


def format_table(headers: Sequence[str], rows: Sequence[Sequence]) -> str:
    """Aligned plain-text table; floats printed with 4 decimals."""
    cells = [[f"{v:.4f}" if isinstance(v, float) else str(v) for v in row] for row in rows]
    widths = [len(h) for h in headers]
    for row in cells:
        for index, value in enumerate(row):
            widths[index] = max(widths[index], len(value))
    lines = [
        "  ".join(h.ljust(widths[i]) for i, h in enumerate(headers)).rstrip(),
        "  ".join("-" * w for w in widths),
    ]
    for row in cells:
        lines.append("  ".join(v.ljust(widths[i]) for i, v in enumerate(row)).rstrip())
    return "\n".join(lines)


def accuracy_table(report: AccuracyReport) -> str:
    return format_table(
        ['dataset', 'items', 'correct', 'accuracy', 'threshold'],
        [[r.dataset, r.item_count, r.correct, r.accuracy, r.threshold] for r in report.rows],
    )


def summary_table(summary: StrategyScoreSummary) -> str:
    return format_table(['condition', 'mean', 'sd', 'n'], [[r.condition, r.mean, r.sd, r.n] for r in summary.rows])
