import json
import os

import numpy as np
import pytest

from app.domain.errors import ContractViolation
from app.domain.models import SaliencyMap
from app.infrastructure.report_writer import (
    REPORT_SCHEMA_VERSION,
    dumps_report,
    new_report,
    sidecar_path,
    validate_report,
    write_heatmap,
    write_report,
)


def _judge_doc(score=0.8):
    doc = new_report('judge', 0, {'seed': 0})
    doc.update(pre_score=score, verdict={'score': score, 'threshold': 0.5, 'label': 'immoral'})
    return doc


def test_valid_judge_report_passes():
    doc = _judge_doc()
    assert validate_report(doc) is doc
    assert doc['schema_version'] == REPORT_SCHEMA_VERSION


def test_problems_are_listed_together():
    doc = _judge_doc(score=1.3)
    del doc['verdict']
    doc['seed'] = 'zero'
    with pytest.raises(ContractViolation) as error:
        validate_report(doc)
    message = str(error.value)
    assert 'pre_score' in message
    assert "missing 'verdict'" in message
    assert 'report.seed' in message


def test_unknown_command_is_rejected():
    with pytest.raises(ContractViolation):
        validate_report(new_report('paint', 0, {}))


def test_manipulate_artifacts_must_exist(tmp_path):
    doc = new_report('manipulate', 0, {})
    doc.update(pre_score=0.9, verdict={'score': 0.9, 'threshold': 0.5, 'label': 'immoral'}, results=[{
        'strategy': 'blur', 'pre_score': 0.9, 'post_score': 0.4, 'verdict': 'moral', 'still_immoral': False,
        'seed': 0, 'provenance': {}, 'artifacts': {'output': str(tmp_path / 'missing.png')},
    }])
    with pytest.raises(ContractViolation):
        validate_report(doc)
    assert validate_report(doc, check_paths=False) is doc
    (tmp_path / 'missing.png').write_bytes(b'')
    validate_report(doc)


def test_eval_rows_may_carry_errors():
    doc = new_report('eval', 0, {})
    doc['datasets'] = [
        {'dataset': 'a', 'item_count': 2, 'correct': 1, 'accuracy': 0.5, 'threshold': 0.5},
        {'dataset': 'b', 'error': 'file not found'},
    ]
    validate_report(doc)


def test_write_report_is_stable_json(tmp_path):
    doc = _judge_doc()
    path = write_report(doc, str(tmp_path / 'r' / 'judge.json'))
    with open(path, encoding='utf-8') as f:
        text = f.read()
    assert text == dumps_report(doc)
    assert text.endswith('}\n')
    assert json.loads(text) == doc


def test_write_report_refuses_invalid_documents(tmp_path):
    with pytest.raises(ContractViolation):
        write_report(new_report('judge', 0, {}), str(tmp_path / 'judge.json'))
    assert not os.path.exists(tmp_path / 'judge.json')


def test_heatmap_has_sidecar_with_generation_parameters(tmp_path):
    sal = SaliencyMap(values=np.array([[0.2, 0.4], [0.6, 0.2]]), sample_count=100, grid=(2, 2), mask_prob=0.5,
                      seed=3)
    written = write_heatmap(str(tmp_path / 'x_heatmap.png'), sal)
    assert written['sidecar'] == sidecar_path(written['heatmap']) == str(tmp_path / 'x_heatmap.heatmap.json')
    with open(written['sidecar'], encoding='utf-8') as f:
        meta = json.load(f)
    assert meta == {'height': 2, 'width': 2, 'sample_count': 100, 'grid': [2, 2], 'mask_prob': 0.5, 'seed': 3,
                    'uncovered_pixels': 0, 'exhaustive': False}
    assert os.path.exists(written['heatmap'])
