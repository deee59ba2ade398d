import numpy as np
import pytest

from app.application.evaluation_service import (
    CANONICAL_PROMPTS,
    aggregate_strategy_scores,
    evaluate_image_manifest,
    evaluate_text_csv,
    evaluate_zero_shot,
    format_table,
    ingest_likert_csv,
    rank_agreement,
    run_manipulation_suite,
    summarize_ratings,
)
from app.domain.errors import ContractViolation, DatasetError
from app.domain.models import (
    ConditionSummary,
    LikertRecord,
    ManipulationResult,
    Strategy,
    StrategyScoreSummary,
)
from app.infrastructure.dataset_loader import load_image_manifest, load_labeled_text_csv, tokenize
from app.infrastructure.stub_backends import IMMORAL_WORDS, MORAL_WORDS
from app.infrastructure.toy_data import (
    sample_likert_records,
    synthetic_images,
    toy_corpus,
    write_image_manifest,
    write_labeled_csv,
    write_likert_csv,
)


def _result(strategy, pre, post, source):
    img = np.ones((2, 2, 3))
    return ManipulationResult(strategy=strategy, input_image=img, output_image=img, pre_score=pre,
                              post_score=post, threshold=0.5, seed=0, source_id=source)


def _summary(**means):
    return StrategyScoreSummary(rows=[ConditionSummary(condition=c, mean=m, sd=0.0, n=1) for c, m in means.items()])


def test_toy_corpus_shape():
    corpus = toy_corpus()
    assert len(corpus) == 64
    assert corpus.labels == [1] * 32 + [0] * 32
    for words, label in corpus.items:
        lexicon = IMMORAL_WORDS if label == 1 else MORAL_WORDS
        assert sum(word in lexicon for word in words) == 1
        assert not any(word in (MORAL_WORDS if label == 1 else IMMORAL_WORDS) for word in words)
    immoral_len = np.mean([len(w) for w, label in corpus.items if label == 1])
    moral_len = np.mean([len(w) for w, label in corpus.items if label == 0])
    assert moral_len > immoral_len


def test_evaluate_zero_shot_validates_inputs(head, suite):
    with pytest.raises(ContractViolation):
        evaluate_zero_shot(head, suite.embedder, [])
    with pytest.raises(ContractViolation):
        evaluate_zero_shot(head, suite.embedder, synthetic_images(), threshold=0.0)


def test_zero_shot_accuracy_row_from_manifest(tmp_path, head, suite):
    manifest = write_image_manifest(str(tmp_path / 'images'), synthetic_images())
    items = load_image_manifest(manifest)
    assert [label for _, label in items] == [1] * 8 + [0] * 8
    row = evaluate_zero_shot(head, suite.embedder, items, dataset='toy', workers=3)
    assert row.to_dict() == {'dataset': 'toy', 'item_count': 16, 'correct': 16, 'accuracy': 1.0, 'threshold': 0.5}


def test_manifest_and_text_datasets_score_through_the_head(tmp_path, head, suite):
    manifest = write_image_manifest(str(tmp_path / 'images'), synthetic_images())
    row = evaluate_image_manifest(head, suite.embedder, manifest, dataset='toy_images')
    assert (row.item_count, row.correct) == (16, 16)

    path = write_labeled_csv(str(tmp_path / 'toy.csv'), toy_corpus())
    row = evaluate_text_csv(head, suite.embedder, path, dataset='toy_text')
    assert row.item_count == 64
    assert row.accuracy >= 0.95
    with pytest.raises(ContractViolation):
        evaluate_text_csv(head, suite.embedder, path, threshold=1.0)


def test_aggregate_counts_each_source_once():
    results = [
        _result(Strategy.BLUR, 0.9, 0.7, 'p1'),
        _result(Strategy.INPAINT, 0.9, 0.1, 'p1'),
        _result(Strategy.CAPTION_REWRITE, 0.9, 0.2, 'p1'),
        _result(Strategy.BLUR, 0.7, 0.5, 'p2'),
    ]
    summary = aggregate_strategy_scores(results)
    assert summary.conditions == ['original', 'blur', 'inpaint', 'caption']
    original = summary.get('original')
    assert original.n == 2
    assert original.mean == pytest.approx(0.8)
    assert original.sd == pytest.approx(0.1)
    assert summary.get('blur').mean == pytest.approx(0.6)


def test_aggregate_rejects_empty_list():
    with pytest.raises(ContractViolation):
        aggregate_strategy_scores([])


def test_summarize_ratings_uses_population_sd():
    records = [LikertRecord('e1', 'i1', 'blur', 1), LikertRecord('e2', 'i1', 'blur', 3),
               LikertRecord('e1', 'i1', 'original', 5)]
    summary = summarize_ratings(records)
    assert summary.conditions == ['original', 'blur']
    assert summary.get('blur').mean == 2.0
    assert summary.get('blur').sd == 1.0


def test_ingest_likert_csv(tmp_path):
    path = write_likert_csv(str(tmp_path / 'likert.csv'), sample_likert_records(evaluators=3, images=4))
    summary = ingest_likert_csv(path)
    assert summary.conditions == ['original', 'blur', 'inpaint', 'word_swap', 'caption']
    assert all(row.n == 12 for row in summary.rows)
    assert summary.get('original').mean > summary.get('inpaint').mean


def test_likert_csv_reports_bad_lines(tmp_path):
    path = tmp_path / 'likert.csv'
    path.write_text(
        "evaluator_id,image_id,condition,rating\n"
        "e1,i1,blur,3\n"
        "e1,i2,blur,7\n"
        "e1,i3,blur,two\n",
        encoding='utf-8',
    )
    with pytest.raises(DatasetError) as error:
        ingest_likert_csv(str(path))
    assert error.value.line_numbers == [3, 4]
    assert str(path) in str(error.value)


def test_likert_csv_rejects_unknown_condition(tmp_path):
    path = tmp_path / 'likert.csv'
    path.write_text("evaluator_id,image_id,condition,rating\ne1,i1,sharpen,3\n", encoding='utf-8')
    with pytest.raises(DatasetError):
        ingest_likert_csv(str(path))


def test_labeled_csv_round_trip_and_errors(tmp_path):
    path = write_labeled_csv(str(tmp_path / 'toy.csv'), toy_corpus())
    loaded = load_labeled_text_csv(path)
    assert loaded.items == toy_corpus().items

    bad = tmp_path / 'bad.csv'
    bad.write_text("label,input\n1,a gun\nyes,a knife\n0,a flower\n2,blood\n", encoding='utf-8')
    with pytest.raises(DatasetError) as error:
        load_labeled_text_csv(str(bad))
    assert error.value.line_numbers == [3, 5]

    with pytest.raises(DatasetError):
        load_labeled_text_csv(str(tmp_path / 'missing.csv'))

    no_column = tmp_path / 'columns.csv'
    no_column.write_text("label,text\n1,a gun\n", encoding='utf-8')
    with pytest.raises(DatasetError):
        load_labeled_text_csv(str(no_column))


def test_tokenize_lowercases_and_strips_punctuation():
    assert tokenize("A man, shooting a GUN!") == ['a', 'man', 'shooting', 'a', 'gun']


def test_rank_agreement():
    human = _summary(original=4.5, blur=3.2, inpaint=1.8)
    assert rank_agreement(human, _summary(original=0.9, blur=0.6, inpaint=0.2)) == 1.0
    assert rank_agreement(human, _summary(original=0.1, blur=0.5, inpaint=0.9)) == 0.0
    assert rank_agreement(human, _summary(original=0.9, blur=0.1, inpaint=0.5)) == pytest.approx(2 / 3)
    with pytest.raises(ContractViolation):
        rank_agreement(human, _summary(original=0.9, caption=0.2))


def test_run_manipulation_suite_tags_sources():
    calls = []

    class Recorder:
        def run(self, img=None, prompt=None, strategy='auto', source_id=''):
            calls.append((tuple(prompt), strategy, source_id))
            return [_result(Strategy.BLUR, 0.9, 0.4, source_id)]

    results = run_manipulation_suite(CANONICAL_PROMPTS[:3], Recorder())
    assert len(results) == 3
    assert [c[2] for c in calls] == ['prompt-01', 'prompt-02', 'prompt-03']
    assert calls[0][0] == ('a', 'man', 'shooting', 'a', 'gun')


def test_canonical_prompts_are_immoral_scenes():
    assert len(CANONICAL_PROMPTS) == 10
    for prompt in CANONICAL_PROMPTS:
        assert any(word in IMMORAL_WORDS for word in prompt)


def test_format_table_aligns_columns():
    table = format_table(['condition', 'mean'], [['blur', 0.5], ['original', 0.91234]])
    assert table.splitlines() == [
        'condition  mean',
        '---------  ------',
        'blur       0.5000',
        'original   0.9123',
    ]
