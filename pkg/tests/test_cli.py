import io
import json
import os
from contextlib import redirect_stdout

import numpy as np
import pytest
import requests
from PIL import Image

from app.domain.models import ClassifierHead
from app.infrastructure.head_store import save_head
from app.infrastructure.image_io import write_png
from app.infrastructure.toy_data import sample_likert_records, toy_corpus, write_labeled_csv, write_likert_csv
from app.presentation import cli

ROOT = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))
STUB_CONFIG = os.path.join(ROOT, 'configs', 'stub.yaml')
CANONICAL = 'a man shooting a gun'


def run_cli(capsys, *argv):
    code = cli.main(list(argv))
    captured = capsys.readouterr()
    doc = json.loads(captured.out) if code == 0 and captured.out.startswith('{') else None
    return code, doc, captured


@pytest.fixture(scope='module')
def workspace(tmp_path_factory):
    root = tmp_path_factory.mktemp('cli')
    csv_path = write_labeled_csv(str(root / 'toy.csv'), toy_corpus())
    red = write_png(str(root / 'red.png'), np.ones((32, 32, 3)) * [1.0, 0.0, 0.0])
    blue = write_png(str(root / 'blue.png'), np.ones((32, 32, 3)) * [0.0, 0.0, 1.0])
    out = str(root / 'out')
    with redirect_stdout(io.StringIO()):
        assert cli.main(['train', csv_path, '--config', STUB_CONFIG, '--out', out]) == 0
    return {'root': root, 'csv': csv_path, 'red': red, 'blue': blue, 'out': out}


def _flags(workspace):
    return ['--config', STUB_CONFIG, '--out', workspace['out']]


def test_train_writes_head_and_loss_log(capsys, workspace):
    out = str(workspace['root'] / 'retrain')
    code, doc, _ = run_cli(capsys, 'train', workspace['csv'], '--config', STUB_CONFIG, '--out', out)
    assert code == 0
    assert os.path.exists(os.path.join(out, 'head.bin'))
    assert doc['head_path'] == os.path.join(out, 'head.bin')
    assert doc['training']['epochs'] == 200
    assert len(doc['training']['epoch_losses']) == 200
    assert doc['item_count'] == 64


def test_train_missing_csv_exits_2_naming_the_path(capsys, workspace):
    missing = str(workspace['root'] / 'nope.csv')
    code, _, captured = run_cli(capsys, 'train', missing, *_flags(workspace))
    assert code == 2
    assert missing in captured.err


def test_judge_solid_colors(capsys, workspace):
    code, doc, _ = run_cli(capsys, 'judge', '--image', workspace['red'], *_flags(workspace))
    assert code == 0
    assert doc['verdict']['label'] == 'immoral'
    code, doc, _ = run_cli(capsys, 'judge', '--image', workspace['blue'], *_flags(workspace))
    assert doc['verdict']['label'] == 'moral'


def test_judge_prompt_uses_text_side(capsys, workspace):
    code, doc, _ = run_cli(capsys, 'judge', '--prompt', 'A man, shooting a gun!', *_flags(workspace))
    assert code == 0
    assert doc['prompt'] == ['a', 'man', 'shooting', 'a', 'gun']
    assert doc['verdict']['label'] == 'immoral'


def test_judge_corrupt_png_exits_2(capsys, workspace):
    corrupt = workspace['root'] / 'corrupt.png'
    corrupt.write_bytes(b'not a png at all')
    code, _, captured = run_cli(capsys, 'judge', '--image', str(corrupt), *_flags(workspace))
    assert code == 2
    assert str(corrupt) in captured.err


def test_judge_without_head_exits_2(capsys, workspace):
    code, _, captured = run_cli(capsys, 'judge', '--image', workspace['red'], '--config', STUB_CONFIG,
                                '--out', str(workspace['root'] / 'empty'))
    assert code == 2
    assert 'head.bin' in captured.err


def test_explain_prompt_ranks_gun_first(capsys, workspace):
    code, doc, _ = run_cli(capsys, 'explain', '--prompt', 'a gun flower', *_flags(workspace))
    assert code == 0
    scores = [entry['importance'] for entry in doc['word_importance']]
    assert scores.index(max(scores)) == 1
    assert os.path.exists(doc['saliency']['heatmap'])
    assert os.path.exists(doc['saliency']['sidecar'])
    assert doc['saliency']['metadata']['grid'] == [4, 4]


def test_explain_image_only_omits_word_importance(capsys, workspace):
    code, doc, _ = run_cli(capsys, 'explain', '--image', workspace['red'], *_flags(workspace))
    assert code == 0
    assert 'word_importance' not in doc
    assert doc['saliency']['heatmap'].endswith('red_heatmap.png')


def test_explain_with_zero_head_writes_black_heatmap(capsys, workspace):
    out = workspace['root'] / 'zero'
    head_path = save_head(ClassifierHead.zeros(8), str(out / 'zero.bin'))
    code, doc, _ = run_cli(capsys, 'explain', '--image', workspace['red'], '--config', STUB_CONFIG,
                           '--out', str(out), '--head', head_path)
    assert code == 0
    assert doc['pre_score'] == 0.5
    with Image.open(doc['saliency']['heatmap']) as picture:
        assert np.asarray(picture).max() == 0


def test_manipulate_canonical_prompt(capsys, workspace):
    code, doc, _ = run_cli(capsys, 'manipulate', '--prompt', CANONICAL, *_flags(workspace))
    assert code == 0
    results = doc['results']
    assert {r['strategy'] for r in results} == {'blur', 'inpaint', 'word_swap', 'caption_rewrite'}
    posts = [r['post_score'] for r in results]
    assert posts == sorted(posts)
    assert doc['best'] == results[0]['strategy']
    for result in results:
        assert result['post_score'] < doc['pre_score']
        assert os.path.exists(result['artifacts']['output'])
    assert os.path.exists(os.path.join(workspace['out'], 'manipulate_report.json'))


def test_manipulate_moral_input_needs_nothing(capsys, workspace):
    code, doc, _ = run_cli(capsys, 'manipulate', '--image', workspace['blue'], *_flags(workspace))
    assert code == 0
    assert [r['strategy'] for r in doc['results']] == ['none-needed']


def test_word_swap_without_prompt_exits_2(capsys, workspace):
    code, _, captured = run_cli(capsys, 'manipulate', '--image', workspace['red'], '--strategy', 'word_swap',
                                *_flags(workspace))
    assert code == 2
    assert 'prompt' in captured.err


def test_unknown_strategy_is_a_usage_error(workspace):
    with pytest.raises(SystemExit) as error:
        cli.main(['manipulate', '--prompt', CANONICAL, '--strategy', 'sharpen', *_flags(workspace)])
    assert error.value.code == 2


def test_eval_reports_each_dataset(capsys, workspace):
    root = workspace['root']
    write_likert_csv(str(root / 'likert.csv'), sample_likert_records())
    spec = root / 'eval.yaml'
    spec.write_text(
        "datasets:\n"
        "  - {name: synthetic, kind: synthetic}\n"
        "  - {name: toy_text, kind: text, path: toy.csv}\n"
        "  - {name: broken, kind: images, path: missing/manifest.csv}\n"
        "  - {name: human, kind: likert, path: likert.csv}\n",
        encoding='utf-8',
    )
    code, doc, _ = run_cli(capsys, 'eval', str(spec), *_flags(workspace))
    assert code == 0
    rows = {row['dataset']: row for row in doc['datasets']}
    assert rows['synthetic']['accuracy'] == 1.0
    assert rows['toy_text']['item_count'] == 64
    assert rows['toy_text']['accuracy'] >= 0.95
    assert 'error' in rows['broken']
    assert [e['dataset'] for e in doc['errors']] == ['broken']
    assert [row['condition'] for row in doc['summaries']['human']][0] == 'original'
    assert os.path.exists(doc['table'])


def test_eval_suite_compares_with_human_ratings(capsys, workspace):
    root = workspace['root']
    write_likert_csv(str(root / 'likert.csv'), sample_likert_records())
    spec = root / 'suite.yaml'
    spec.write_text(
        "datasets:\n"
        "  - {name: human, kind: likert, path: likert.csv}\n"
        "  - {name: suite, kind: suite, compare_with: human, prompts: ['a man shooting a gun', 'a boy holding a gun']}\n",
        encoding='utf-8',
    )
    code, doc, _ = run_cli(capsys, 'eval', str(spec), *_flags(workspace))
    assert code == 0
    agreement = doc['agreements']['suite~human']
    assert 0.0 <= agreement <= 1.0
    original = [row for row in doc['summaries']['suite'] if row['condition'] == 'original'][0]
    assert original['n'] == 2


def test_eval_empty_spec_exits_2(capsys, workspace):
    spec = workspace['root'] / 'empty.yaml'
    spec.write_text("datasets: []\n", encoding='utf-8')
    code, _, _ = run_cli(capsys, 'eval', str(spec), *_flags(workspace))
    assert code == 2


def test_backend_failure_exits_3(capsys, workspace, monkeypatch):
    def refuse(*args, **kwargs):
        raise requests.ConnectionError('connection refused')

    monkeypatch.setattr(requests, 'post', refuse)
    code, _, captured = run_cli(capsys, 'judge', '--prompt', 'a gun', '--backend', 'external',
                                '--endpoint', 'http://models.invalid', *_flags(workspace))
    assert code == 3
    assert 'models.invalid' in captured.err


def _snapshot(directory):
    files = {}
    for dirpath, _, names in os.walk(directory):
        for name in names:
            path = os.path.join(dirpath, name)
            with open(path, 'rb') as f:
                files[os.path.relpath(path, directory)] = f.read()
    return files


def test_identical_invocations_are_byte_identical(capsys, workspace):
    out = str(workspace['root'] / 'determinism')
    flags = ['--config', STUB_CONFIG, '--out', out]

    def invoke():
        assert cli.main(['train', workspace['csv'], *flags]) == 0
        assert cli.main(['explain', '--prompt', CANONICAL, *flags]) == 0
        assert cli.main(['manipulate', '--prompt', CANONICAL, *flags]) == 0
        capsys.readouterr()
        return _snapshot(out)

    first = invoke()
    second = invoke()
    assert set(first) >= {'head.bin', 'train_report.json', 'explain_report.json', 'manipulate_report.json',
                          'prompt_input.png', 'prompt_inpaint.png', 'prompt_heatmap.png'}
    assert first == second
