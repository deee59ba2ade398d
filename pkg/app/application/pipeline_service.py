import logging
import os
from typing import Any, Dict, List, Optional

import yaml

from app.application import evaluation_service, recognizer_service
from app.application.manipulation_service import EthicalManipulator
from app.domain.errors import ConfigError, ContractViolation, MoralLensError
from app.domain.masking import as_tokens
from app.domain.models import AccuracyReport, PipelineConfig, TokenSequence
from app.infrastructure.backends import BackendSuite, create_backend_suite
from app.infrastructure.dataset_loader import load_labeled_text_csv, tokenize
from app.infrastructure.head_store import load_head, save_head
from app.infrastructure.image_io import read_png, write_png
from app.infrastructure.report_writer import new_report, write_heatmap, write_report
from app.infrastructure.toy_data import synthetic_images

logger = logging.getLogger(__name__)

EVAL_KINDS = ('images', 'synthetic', 'text', 'likert', 'suite')


def parse_prompt(prompt) -> Optional[TokenSequence]:
    if prompt is None:
        return None
    words = tokenize(prompt) if isinstance(prompt, str) else as_tokens(prompt)
    if not words:
        raise ContractViolation("Prompt is empty after tokenization")
    return words


class PipelineService:
    """Runs one command end to end: load inputs, compute, write artifacts and the JSON report."""

    def __init__(self, config: PipelineConfig, backends: Optional[BackendSuite] = None):
        self.config = config
        self.backends = backends or create_backend_suite(config.backends)
        if self.backends.is_offline:
            logger.debug("All backends are stubs; running offline")

    @property
    def output_dir(self) -> str:
        return self.config.output_dir

    def _path(self, name: str) -> str:
        return os.path.join(self.output_dir, name)

    def _report(self, command: str) -> Dict[str, Any]:
        return new_report(command, self.config.seed, self.config.to_dict())

    def recognizer(self) -> recognizer_service.Recognizer:
        head = load_head(self.config.recognizer.head_path)
        return recognizer_service.Recognizer(head, self.backends.embedder, self.config.threshold)

    def _input_image(self, image_path: Optional[str], prompt: Optional[TokenSequence]):
        if image_path:
            return read_png(image_path), os.path.splitext(os.path.basename(image_path))[0]
        if prompt:
            return self.backends.generator.generate(prompt, self.config.seed), 'prompt'
        raise ContractViolation("Give an image, a prompt, or both")

    def train(self, csv_path: str, label_column: str = 'label', text_column: str = 'input') -> Dict[str, Any]:
        data = load_labeled_text_csv(csv_path, label_column, text_column)
        head, log = recognizer_service.train_classifier(data, self.backends.embedder, self.config.recognizer.training)
        head_path = save_head(head, self.config.recognizer.head_path)
        doc = self._report('train')
        doc.update(dataset=csv_path, item_count=len(data), head_path=head_path, training=log.to_dict())
        write_report(doc, self._path('train_report.json'))
        return doc

    def judge(self, image_path: Optional[str] = None, prompt=None) -> Dict[str, Any]:
        words = parse_prompt(prompt)
        recognizer = self.recognizer()
        doc = self._report('judge')
        if words is not None:
            doc['prompt'] = words
        if image_path:
            score = recognizer.score_image(read_png(image_path))
            doc['input'] = image_path
            if words is not None:
                doc['prompt_verdict'] = recognizer.screen_prompt(words).to_dict()
        elif words is not None:
            score = recognizer.score_text(words)
        else:
            raise ContractViolation("Give an image, a prompt, or both")
        verdict = recognizer.judge(score)
        doc.update(pre_score=round(score, 6), verdict=verdict.to_dict())
        logger.info(f"Verdict: {verdict.label} ({score:.4f})")
        return doc

    def explain(self, image_path: Optional[str] = None, prompt=None) -> Dict[str, Any]:
        words = parse_prompt(prompt)
        recognizer = self.recognizer()
        manipulator = EthicalManipulator(recognizer, self.backends, self.config)
        image, stem = self._input_image(image_path, words)
        score = recognizer.score_image(image)

        doc = self._report('explain')
        if words is not None:
            doc['prompt'] = words
        doc.update(pre_score=round(score, 6), verdict=recognizer.judge(score).to_dict())
        if words is not None:
            wmap = manipulator.word_importance(words)
            doc['word_importance'] = wmap.to_dict()['entries']
            doc['word_importance_params'] = {k: v for k, v in wmap.to_dict().items() if k != 'entries'}
        saliency = manipulator.saliency(image)
        doc['saliency'] = write_heatmap(self._path(f"{stem}_heatmap.png"), saliency)
        write_report(doc, self._path('explain_report.json'))
        return doc

    def manipulate(self, image_path: Optional[str] = None, prompt=None, strategy: Optional[str] = None) -> Dict[str, Any]:
        words = parse_prompt(prompt)
        strategy = strategy or self.config.manipulation.strategy
        recognizer = self.recognizer()
        image, stem = self._input_image(image_path, words)
        results = EthicalManipulator(recognizer, self.backends, self.config).run(
            image if image_path else None, words, strategy, source_id=stem)

        doc = self._report('manipulate')
        if words is not None:
            doc['prompt'] = words
        pre = results[0].pre_score
        doc.update(pre_score=round(pre, 6), verdict=recognizer.judge(pre).to_dict(), strategy=strategy)
        input_path = write_png(self._path(f"{stem}_input.png"), results[0].input_image)
        doc['input_artifact'] = input_path

        entries = []
        heatmap = None
        for result in results:
            entry = result.to_dict()
            artifacts = {'output': write_png(self._path(f"{stem}_{result.strategy.key}.png"), result.output_image)}
            if result.saliency is not None:
                if heatmap is None:
                    heatmap = write_heatmap(self._path(f"{stem}_heatmap.png"), result.saliency)
                artifacts['heatmap'] = heatmap['heatmap']
            if result.word_map is not None:
                entry['word_importance'] = result.word_map.to_dict()['entries']
            entry['artifacts'] = artifacts
            entries.append(entry)
        doc['results'] = entries
        doc['best'] = entries[0]['strategy']
        write_report(doc, self._path('manipulate_report.json'))
        return doc

    def evaluate(self, spec_path: str) -> Dict[str, Any]:
        datasets = self._load_eval_spec(spec_path)
        doc = self._report('eval')
        doc.update(datasets=[], summaries={}, agreements={}, errors=[])
        accuracy = AccuracyReport()
        summaries = {}
        recognizer = None

        for entry in datasets:
            name, kind = entry['name'], entry['kind']
            try:
                if kind in ('images', 'synthetic', 'text', 'suite') and recognizer is None:
                    recognizer = self.recognizer()
                if kind in ('images', 'synthetic', 'text'):
                    row = self._accuracy_row(recognizer, entry, spec_path)
                    accuracy.rows.append(row)
                    doc['datasets'].append(row.to_dict())
                elif kind == 'likert':
                    summaries[name] = evaluation_service.ingest_likert_csv(self._resolve(spec_path, entry['path']))
                elif kind == 'suite':
                    manipulator = EthicalManipulator(recognizer, self.backends, self.config)
                    prompts = [parse_prompt(p) for p in entry.get('prompts') or []] or evaluation_service.CANONICAL_PROMPTS
                    results = evaluation_service.run_manipulation_suite(prompts, manipulator, entry.get('strategy', 'auto'))
                    summaries[name] = evaluation_service.aggregate_strategy_scores(results)
            except (MoralLensError, FileNotFoundError) as e:
                logger.error(f"Dataset '{name}' failed: {e}")
                doc['errors'].append({'dataset': name, 'error': str(e)})
                if kind in ('images', 'synthetic', 'text'):
                    doc['datasets'].append({'dataset': name, 'error': str(e)})

        for name, summary in summaries.items():
            doc['summaries'][name] = summary.to_dict()['rows']
        for entry in datasets:
            other = entry.get('compare_with')
            if other and entry['name'] in summaries and other in summaries:
                doc['agreements'][f"{entry['name']}~{other}"] = round(
                    evaluation_service.rank_agreement(summaries[other], summaries[entry['name']]), 6)

        tables = [evaluation_service.accuracy_table(accuracy)] if accuracy.rows else []
        for name, summary in summaries.items():
            tables.append(f"[{name}]\n{evaluation_service.summary_table(summary)}")
        table_path = self._path('eval_table.txt')
        os.makedirs(self.output_dir, exist_ok=True)
        with open(table_path, 'w', encoding='utf-8') as f:
            f.write("\n\n".join(tables) + "\n")
        doc['table'] = table_path
        write_report(doc, self._path('eval_report.json'))
        return doc

    def _accuracy_row(self, recognizer, entry: dict, spec_path: str):
        name, kind = entry['name'], entry['kind']
        threshold = self.config.threshold
        if kind == 'synthetic':
            return evaluation_service.evaluate_zero_shot(
                recognizer.head, recognizer.embedder, synthetic_images(), dataset=name, threshold=threshold,
                workers=self.config.attribution.workers)
        path = self._resolve(spec_path, entry['path'])
        if kind == 'text':
            return evaluation_service.evaluate_text_csv(recognizer.head, recognizer.embedder, path, dataset=name,
                                                        threshold=threshold)
        return evaluation_service.evaluate_image_manifest(
            recognizer.head, recognizer.embedder, path, dataset=name, threshold=threshold,
            workers=self.config.attribution.workers)

    @staticmethod
    def _resolve(spec_path: str, path: str) -> str:
        if os.path.isabs(path):
            return path
        return os.path.join(os.path.dirname(os.path.abspath(spec_path)), path)

    @staticmethod
    def _load_eval_spec(spec_path: str) -> List[dict]:
        if not os.path.exists(spec_path):
            raise FileNotFoundError(f"Eval spec not found: {spec_path}")
        with open(spec_path, encoding='utf-8') as f:
            try:
                data = yaml.safe_load(f) or {}
            except yaml.YAMLError as e:
                raise ConfigError(f"{spec_path}: invalid YAML ({e})")
        datasets = data.get('datasets') if isinstance(data, dict) else None
        if not datasets:
            raise ConfigError(f"{spec_path}: eval spec lists no datasets")
        names = set()
        for entry in datasets:
            if not isinstance(entry, dict) or 'name' not in entry or entry.get('kind') not in EVAL_KINDS:
                raise ConfigError(f"{spec_path}: each dataset needs a name and a kind in {', '.join(EVAL_KINDS)}")
            if entry['kind'] in ('images', 'text', 'likert') and not entry.get('path'):
                raise ConfigError(f"{spec_path}: dataset '{entry['name']}' needs a path")
            if entry['name'] in names:
                raise ConfigError(f"{spec_path}: duplicate dataset name '{entry['name']}'")
            names.add(entry['name'])
        return datasets
