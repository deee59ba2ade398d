"""
Desk-scale datasets for the stub stack.

Every toy sentence holds exactly one lexicon word inside neutral context
drawn from a fixed passage. Moral sentences carry more neutral context than
immoral ones, so a head trained on them leans moral on content-free inputs
(a blank canvas embeds to pure context).
"""
import csv
import logging
import os
from typing import List, Sequence, Tuple

import numpy as np

from app.domain.models import LIKERT_CONDITIONS, LabeledTextSet, TokenSequence
from app.infrastructure.image_io import write_png
from app.infrastructure.stub_backends import IMMORAL_WORDS, MORAL_WORDS

logger = logging.getLogger(__name__)

PASSAGE = (
    "on a quiet morning the old man walked slowly along the narrow road past the small market and "
    "the school where children gathered near the gate before their lessons began in the warm spring air"
).split()

IMMORAL_CONTEXT = [0, 1, 1, 2, 2, 3, 3, 4, 4, 5, 5, 6, 6, 7, 7, 8,
                   8, 9, 9, 10, 10, 11, 12, 12, 13, 14, 14, 15, 16, 16, 17, 18]
MORAL_CONTEXT = list(range(8, 40))

# center rating per condition for the sample human study
_LIKERT_CENTERS = {'original': 4.5, 'blur': 3.2, 'word_swap': 2.6, 'caption': 2.4, 'inpaint': 1.8}


def _sentence(word: str, context: int, offset: int) -> TokenSequence:
    start = offset % len(PASSAGE)
    filler = ((PASSAGE[start:] + PASSAGE[:start]) * 2)[:context]
    middle = context // 2
    return filler[:middle] + [word] + filler[middle:]


def toy_corpus() -> LabeledTextSet:
    """32 immoral and 32 moral sentences, immoral first."""
    immoral = sorted(IMMORAL_WORDS)
    moral = sorted(MORAL_WORDS)
    items = []
    for i, context in enumerate(IMMORAL_CONTEXT):
        items.append((_sentence(immoral[i % len(immoral)], context, 5 * i), 1))
    for i, context in enumerate(MORAL_CONTEXT):
        items.append((_sentence(moral[i % len(moral)], context, 7 * i + 3), 0))
    return LabeledTextSet(items=items)


def synthetic_images() -> List[Tuple[np.ndarray, int]]:
    """8 solid red images (immoral) and 8 solid blue images (moral) of varying size."""
    items = []
    for label, color in ((1, (1.0, 0.0, 0.0)), (0, (0.0, 0.0, 1.0))):
        for i in range(8):
            size = 16 + 8 * i
            items.append((np.ones((size, size, 3)) * np.asarray(color), label))
    return items


def sample_likert_records(evaluators: int = 6, images: int = 10, seed: int = 0) -> List[dict]:
    rng = np.random.default_rng(seed)
    rows = []
    for evaluator in range(1, evaluators + 1):
        for image in range(1, images + 1):
            for condition in LIKERT_CONDITIONS:
                rating = int(np.clip(np.rint(_LIKERT_CENTERS[condition] + rng.normal(0.0, 0.7)), 1, 5))
                rows.append({
                    'evaluator_id': f"e{evaluator:03d}",
                    'image_id': f"img{image:02d}",
                    'condition': condition,
                    'rating': rating,
                })
    return rows


def write_labeled_csv(path: str, data: LabeledTextSet) -> str:
    _ensure_parent(path)
    with open(path, 'w', newline='', encoding='utf-8') as f:
        writer = csv.writer(f)
        writer.writerow(['label', 'input'])
        for words, label in data.items:
            writer.writerow([label, ' '.join(words)])
    logger.info(f"Wrote {len(data)} labeled sentences to {path}")
    return path


def write_image_manifest(directory: str, items: Sequence[Tuple[np.ndarray, int]]) -> str:
    manifest = os.path.join(directory, 'manifest.csv')
    _ensure_parent(manifest)
    with open(manifest, 'w', newline='', encoding='utf-8') as f:
        writer = csv.writer(f)
        writer.writerow(['path', 'label'])
        for index, (image, label) in enumerate(items):
            name = f"synthetic_{index:02d}.png"
            write_png(os.path.join(directory, name), image)
            writer.writerow([name, label])
    logger.info(f"Wrote {len(items)} images and {manifest}")
    return manifest


def write_likert_csv(path: str, rows: Sequence[dict]) -> str:
    _ensure_parent(path)
    with open(path, 'w', newline='', encoding='utf-8') as f:
        writer = csv.DictWriter(f, fieldnames=['evaluator_id', 'image_id', 'condition', 'rating'])
        writer.writeheader()
        writer.writerows(rows)
    return path


def _ensure_parent(path: str) -> None:
    parent = os.path.dirname(path)
    if parent:
        os.makedirs(parent, exist_ok=True)
