import csv
import logging
import os
import re
from typing import List, Tuple

import numpy as np

from app.domain.errors import DatasetError
from app.domain.models import LIKERT_CONDITIONS, LabeledTextSet, LikertRecord, TokenSequence
from app.infrastructure.image_io import read_png

logger = logging.getLogger(__name__)

_PUNCTUATION = re.compile(r"[^\w\s]")


def tokenize(text: str) -> TokenSequence:
    """Lowercase, punctuation to spaces, split on whitespace."""
    return _PUNCTUATION.sub(" ", text.lower()).split()


def _read_rows(path: str, required: Tuple[str, ...]):
    """Yield (line_number, row) for each data row; header columns are checked first."""
    if not os.path.exists(path):
        raise DatasetError("File not found", path=path)
    with open(path, newline='', encoding='utf-8') as f:
        reader = csv.DictReader(f)
        header = reader.fieldnames
        if not header:
            raise DatasetError("Empty file (no header row)", path=path)
        missing = [column for column in required if column not in header]
        if missing:
            raise DatasetError(f"Missing column(s): {', '.join(missing)}", path=path)
        rows = []
        for row in reader:
            rows.append((reader.line_num, row))
    if not rows:
        raise DatasetError("No data rows", path=path)
    return rows


def _binary_label(value) -> int:
    text = (value or '').strip()
    if text not in ('0', '1'):
        raise ValueError(text)
    return int(text)


def load_labeled_text_csv(path: str, label_column: str = 'label', text_column: str = 'input') -> LabeledTextSet:
    rows = _read_rows(path, (label_column, text_column))
    items = []
    bad_lines = []
    for line_number, row in rows:
        try:
            label = _binary_label(row.get(label_column))
        except ValueError:
            bad_lines.append(line_number)
            continue
        items.append((tokenize(row.get(text_column) or ''), label))
    if bad_lines:
        raise DatasetError("Label must be 0 or 1", path=path, line_numbers=bad_lines)
    logger.info(f"Loaded {len(items)} labeled sentences from {path}")
    return LabeledTextSet(items=items)


def load_likert_csv(path: str) -> List[LikertRecord]:
    rows = _read_rows(path, ('evaluator_id', 'image_id', 'condition', 'rating'))
    records = []
    bad_ratings = []
    bad_conditions = []
    for line_number, row in rows:
        condition = (row.get('condition') or '').strip()
        if condition not in LIKERT_CONDITIONS:
            bad_conditions.append(line_number)
            continue
        text = (row.get('rating') or '').strip()
        if not text.isdigit() or not 1 <= int(text) <= 5:
            bad_ratings.append(line_number)
            continue
        records.append(LikertRecord(
            evaluator_id=(row.get('evaluator_id') or '').strip(),
            image_id=(row.get('image_id') or '').strip(),
            condition=condition,
            rating=int(text),
        ))
    if bad_conditions:
        raise DatasetError(
            f"Unknown condition (expected one of {', '.join(LIKERT_CONDITIONS)})",
            path=path, line_numbers=bad_conditions)
    if bad_ratings:
        raise DatasetError("Rating must be an integer from 1 to 5", path=path, line_numbers=bad_ratings)
    logger.info(f"Loaded {len(records)} Likert ratings from {path}")
    return records


def load_image_manifest(path: str) -> List[Tuple[np.ndarray, int]]:
    """CSV of path,label rows; image paths resolve relative to the manifest."""
    rows = _read_rows(path, ('path', 'label'))
    base = os.path.dirname(os.path.abspath(path))
    items = []
    bad_lines = []
    for line_number, row in rows:
        try:
            label = _binary_label(row.get('label'))
        except ValueError:
            bad_lines.append(line_number)
            continue
        image_path = (row.get('path') or '').strip()
        if not os.path.isabs(image_path):
            image_path = os.path.join(base, image_path)
        items.append((read_png(image_path), label))
    if bad_lines:
        raise DatasetError("Label must be 0 or 1", path=path, line_numbers=bad_lines)
    logger.info(f"Loaded {len(items)} labeled images from {path}")
    return items
