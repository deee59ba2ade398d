import json
import logging
import os
from typing import Any, Dict, List, Optional

from app.domain.errors import ContractViolation
from app.domain.masking import normalize_map
from app.domain.models import IMMORAL, MORAL, SaliencyMap
from app.infrastructure.image_io import write_gray_png

logger = logging.getLogger(__name__)

REPORT_SCHEMA_VERSION = "1.0"
TOOL_VERSION = "0.1.0"

COMMANDS = ('train', 'judge', 'explain', 'manipulate', 'eval')


def new_report(command: str, seed: int, config: dict) -> Dict[str, Any]:
    return {
        'schema_version': REPORT_SCHEMA_VERSION,
        'tool_version': TOOL_VERSION,
        'command': command,
        'seed': seed,
        'config': config,
    }


def _is_number(value) -> bool:
    return isinstance(value, (int, float)) and not isinstance(value, bool)


class _Checker:

    def __init__(self, check_paths: bool):
        self.check_paths = check_paths
        self.problems: List[str] = []

    def require(self, doc: dict, key: str, where: str) -> bool:
        if not isinstance(doc, dict) or key not in doc:
            self.problems.append(f"{where}: missing '{key}'")
            return False
        return True

    def score(self, value, where: str) -> None:
        if not _is_number(value) or not 0.0 <= value <= 1.0:
            self.problems.append(f"{where}: score {value!r} is not a number in [0,1]")

    def kind(self, value, expected, where: str) -> None:
        if not isinstance(value, expected) or isinstance(value, bool) and expected is not bool:
            self.problems.append(f"{where}: expected {getattr(expected, '__name__', expected)}, got {type(value).__name__}")

    def path(self, value, where: str) -> None:
        if not isinstance(value, str):
            self.problems.append(f"{where}: artifact path must be a string")
        elif self.check_paths and not os.path.exists(value):
            self.problems.append(f"{where}: artifact {value} does not exist")

    def verdict(self, value, where: str) -> None:
        for key in ('score', 'threshold', 'label'):
            self.require(value, key, where)
        if isinstance(value, dict):
            if 'score' in value:
                self.score(value['score'], f"{where}.score")
            if value.get('label') not in (MORAL, IMMORAL):
                self.problems.append(f"{where}.label: must be '{MORAL}' or '{IMMORAL}'")


def validate_report(doc: Dict[str, Any], check_paths: bool = True) -> Dict[str, Any]:
    """Raise ContractViolation listing every schema problem; returns doc unchanged when valid."""
    check = _Checker(check_paths)
    for key in ('schema_version', 'tool_version', 'command', 'seed', 'config'):
        check.require(doc, key, 'report')
    if doc.get('schema_version') != REPORT_SCHEMA_VERSION:
        check.problems.append(f"report: schema_version must be {REPORT_SCHEMA_VERSION}")
    command = doc.get('command')
    if command not in COMMANDS:
        check.problems.append(f"report: unknown command {command!r}")
    if 'seed' in doc:
        check.kind(doc['seed'], int, 'report.seed')
    if 'config' in doc:
        check.kind(doc['config'], dict, 'report.config')

    if command in ('judge', 'explain', 'manipulate'):
        if check.require(doc, 'pre_score', 'report'):
            check.score(doc['pre_score'], 'report.pre_score')
        if check.require(doc, 'verdict', 'report'):
            check.verdict(doc['verdict'], 'report.verdict')
        if 'prompt' in doc:
            check.kind(doc['prompt'], list, 'report.prompt')

    if command == 'explain' or 'word_importance' in doc:
        for i, entry in enumerate(doc.get('word_importance') or []):
            where = f"report.word_importance[{i}]"
            for key in ('word', 'importance', 'support'):
                check.require(entry, key, where)
            if isinstance(entry, dict) and entry.get('importance') is not None:
                check.score(entry['importance'], f"{where}.importance")
    if 'saliency' in doc:
        saliency = doc['saliency']
        if check.require(saliency, 'heatmap', 'report.saliency'):
            check.path(saliency['heatmap'], 'report.saliency.heatmap')
        if check.require(saliency, 'sidecar', 'report.saliency'):
            check.path(saliency['sidecar'], 'report.saliency.sidecar')
        check.require(saliency, 'metadata', 'report.saliency')

    if command == 'manipulate' and check.require(doc, 'results', 'report'):
        results = doc['results']
        check.kind(results, list, 'report.results')
        for i, result in enumerate(results if isinstance(results, list) else []):
            where = f"report.results[{i}]"
            for key in ('strategy', 'pre_score', 'post_score', 'verdict', 'still_immoral', 'seed', 'provenance',
                        'artifacts'):
                check.require(result, key, where)
            if not isinstance(result, dict):
                continue
            for key in ('pre_score', 'post_score'):
                if key in result:
                    check.score(result[key], f"{where}.{key}")
            if 'verdict' in result and result['verdict'] not in (MORAL, IMMORAL):
                check.problems.append(f"{where}.verdict: must be '{MORAL}' or '{IMMORAL}'")
            for name, artifact in (result.get('artifacts') or {}).items():
                check.path(artifact, f"{where}.artifacts.{name}")

    if command == 'train':
        if check.require(doc, 'head_path', 'report'):
            check.path(doc['head_path'], 'report.head_path')
        if check.require(doc, 'training', 'report'):
            for key in ('epochs', 'epoch_losses', 'final_accuracy'):
                check.require(doc['training'], key, 'report.training')

    if command == 'eval':
        check.require(doc, 'datasets', 'report')
        for i, row in enumerate(doc.get('datasets') or []):
            where = f"report.datasets[{i}]"
            check.require(row, 'dataset', where)
            if isinstance(row, dict) and 'error' not in row:
                for key in ('item_count', 'correct', 'accuracy', 'threshold'):
                    check.require(row, key, where)
                if 'accuracy' in row:
                    check.score(row['accuracy'], f"{where}.accuracy")

    if check.problems:
        raise ContractViolation("Report failed schema validation: " + "; ".join(check.problems))
    return doc


def dumps_report(doc: Dict[str, Any]) -> str:
    return json.dumps(doc, indent=2, ensure_ascii=False) + "\n"


def write_report(doc: Dict[str, Any], path: str) -> str:
    validate_report(doc)
    parent = os.path.dirname(path)
    if parent:
        os.makedirs(parent, exist_ok=True)
    with open(path, 'w', encoding='utf-8') as f:
        f.write(dumps_report(doc))
    logger.info(f"Report written to {path}")
    return path


def sidecar_path(heatmap_path: str) -> str:
    stem, _ = os.path.splitext(heatmap_path)
    return f"{stem}.heatmap.json"


def write_heatmap(path: str, saliency: SaliencyMap, extra: Optional[dict] = None) -> Dict[str, Any]:
    """Grayscale PNG of the normalized map plus a sidecar with its generation parameters."""
    write_gray_png(path, normalize_map(saliency.values))
    metadata = saliency.metadata()
    if extra:
        metadata.update(extra)
    sidecar = sidecar_path(path)
    with open(sidecar, 'w', encoding='utf-8') as f:
        f.write(json.dumps(metadata, indent=2) + "\n")
    logger.debug(f"Heatmap written to {path} with sidecar {sidecar}")
    return {'heatmap': path, 'sidecar': sidecar, 'metadata': metadata}
