import json
import random

import numpy as np
import pytest
from scipy.stats import norm
from synthetic import extreme_words, make_section_papers

from granuscore.analysis import (
    Paper,
    ScoredRecord,
    aggregation_sweep,
    clean_paragraph,
    gap_auc,
    granularity_gap,
    load_paper_corpus,
    qa_outcome_report,
    score_records,
    section_compare,
    select_pair,
    select_pairs,
)
from granuscore.analysis.qa import dataset_scatter, write_csv
from granuscore.analysis.sections import compare_scores, ordering_fractions, score_pairs, section_kind
from granuscore.datasets import Outcome, QARecord
from granuscore.errors import DataError, DegenerateTestError
from granuscore.textproc import AggregationSpec, default_annotator, report_from_units, sweep_strategies


def rec(model, outcome, ds="d", q="Q?", gold="g", ans="a"):
    return QARecord(ds, q, gold, model, ans, Outcome(outcome))


def scored(model, outcome, q, g, a, ds="d"):
    return ScoredRecord(rec(model, outcome, ds), q, g, a)


# --------------------------------------------------------------------- QA


SIX = [
    scored("m1", "correct", 10, 20, 30),
    scored("m1", "correct", 30, 40, 50),
    scored("m1", "wrong", 50, 60, 90),
    scored("m2", "correct", 20, 30, 40),
    scored("m2", "wrong", 70, 80, 100),
    scored("m2", "not_attempted", 60, 50, 100),
]


def test_outcome_report_by_hand():
    rep = qa_outcome_report(SIX)
    c = rep.cells[("question", "correct")]
    # m1 mean 20, m2 mean 20 -> mean 20, std 0; pooled (10+30+20)/3
    assert (c.mean, c.std, c.n, c.n_models) == (20.0, 0.0, 3, 2)
    assert c.pooled_mean == pytest.approx(20.0)
    w = rep.cells[("gold_answer", "wrong")]
    assert w.mean == 70.0 and w.std == pytest.approx(np.std([60, 80], ddof=1))
    na = rep.cells[("model_answer", "not_attempted")]
    assert (na.mean, na.n_models) == (100.0, 1)
    assert set(rep.outcomes) == {"correct", "wrong", "not_attempted"}
    assert len(rep.tests) == 3 * 3
    t = rep.tests[("question", "correct", "wrong")]
    assert t.statistic == 0.0  # every correct question scores below every wrong one


def test_outcome_report_ignores_record_order():
    a = qa_outcome_report(SIX).to_dict()
    shuffled = list(SIX)
    random.Random(3).shuffle(shuffled)
    assert json.dumps(qa_outcome_report(shuffled).to_dict(), sort_keys=True) == json.dumps(a, sort_keys=True)


def test_single_outcome_has_no_tests_and_warns():
    rep = qa_outcome_report([scored("m", "correct", 1, 2, 3), scored("m", "correct", 2, 3, 4)])
    assert rep.tests == {}
    assert any("no wrong records" in w for w in rep.warnings)


def test_score_records_gap_and_raw_records():
    recs = [rec("m", "correct", gold="Paris", ans="Paris France")]
    out = score_records(recs, lambda ts: [float(len(t)) for t in ts])
    assert out[0].gap == 7.0 and granularity_gap(out).tolist() == [7.0]
    with pytest.raises(ValueError):
        qa_outcome_report(recs)


def test_qa_report_with_a_real_scorer(scorer, hierarchy):
    w = hierarchy.names
    recs = [rec("m", "correct", q=w[0], gold=w[1], ans=w[2]), rec("m", "wrong", q=w[3], gold=w[4], ans=w[5])]
    rep = qa_outcome_report(recs, scorer)
    assert ("model_answer", "wrong") in rep.cells


def test_gap_auc_matches_gaussian_oracle():
    rng = np.random.default_rng(0)
    delta, n = 1.0, 4000
    gaps = np.concatenate([rng.normal(0, 1, n), rng.normal(delta, 1, n)])
    failed = np.r_[np.zeros(n, bool), np.ones(n, bool)]
    res = gap_auc(gaps, failed)
    assert abs(res.mean - norm.cdf(delta / np.sqrt(2))) <= 0.02
    assert len(res.fold_aucs) == 5 and res.attempts == 1


def test_gap_auc_random_labels_near_half():
    rng = np.random.default_rng(1)
    gaps = rng.normal(size=2000)
    assert 0.45 <= gap_auc(gaps, rng.random(2000) < 0.5).mean <= 0.55


def test_gap_auc_identical_gaps_give_half():
    failed = np.r_[np.zeros(50, bool), np.ones(50, bool)]
    assert gap_auc(np.zeros(100), failed).mean == pytest.approx(0.5)


def test_gap_auc_degenerate_inputs():
    with pytest.raises(DegenerateTestError):
        gap_auc([1, 2, 3], [True, True, True])
    with pytest.raises(DegenerateTestError):
        gap_auc([1, 2, 3, 4], [True, False, False, False], folds=5)


def test_dataset_scatter_rows(tmp_path):
    rows = dataset_scatter(SIX, word_frequency=lambda t: 1.0)
    assert [(r["model"], r["n"]) for r in rows] == [("m1", 3), ("m2", 3)]
    assert rows[0]["correctness"] == pytest.approx(2 / 3)
    assert rows[0]["mean_gold_granuscore"] == pytest.approx(40.0)
    assert rows[0]["question_word_frequency"] == 1.0 and rows[0]["question_tree_depth"] == ""
    write_csv(rows, tmp_path / "s.csv")
    assert (tmp_path / "s.csv").read_text().startswith("dataset,model,n")


# --------------------------------------------------------------- cleaning


@pytest.mark.parametrize(
    "raw,want",
    [
        ("Prior work [3, 4] studied this (see Smith et al., 2020).", "Prior work studied this."),
        ("Nested (outer [inner] text) removed.", "Nested removed."),
        ("Code at https://example.org/x and mail a.b@c.org here.", "Code at and mail here."),
        ("The e\ufb03cient model\u200b works\u00ad.", "The efficient model works."),
        ("A hyphen-\nated word.\n12\nNext line.", "A hyphenated word. Next line."),
        ("Figure 3: An overview of the system.", ""),
        ("Table 2. Results.", ""),
        ("Figures tell a story.", "Figures tell a story."),
    ],
)
def test_clean_paragraph(raw, want):
    assert clean_paragraph(raw) == want


@pytest.mark.parametrize(
    "name,kind",
    [("1 Introduction", "introduction"), ("INTRODUCTION", "introduction"), ("2. Related Work", "related_work"),
     ("Related works", "related_work"), ("Background and Related Work", "related_work"), ("Method", None)],
)
def test_section_kind(name, kind):
    assert section_kind(name) == kind


def test_load_paper_corpus(tmp_path):
    p = tmp_path / "p.jsonl"
    lines = [
        {"paper_id": "a", "section": "Introduction", "paragraphs": ["x", "y"]},
        {"paper_id": "a", "section": "Method", "paragraphs": ["ignored"]},
        {"paper_id": "a", "section": "Related Work", "paragraphs": "r1\n\nr2"},
        {"paper_id": "b", "section": "Introduction", "paragraphs": ["z"]},
    ]
    p.write_text("\n".join(json.dumps(x) for x in lines))
    papers = load_paper_corpus(p)
    assert [x.paper_id for x in papers] == ["a", "b"]
    assert papers[0].introduction == ["x", "y"] and papers[0].related_work == ["r1", "r2"]
    p.write_text('{"paper_id": "a"}\n')
    with pytest.raises(DataError):
        load_paper_corpus(p)


# -------------------------------------------------------------- selection


def words(n, prefix="w"):
    return "Then " + ", ".join(f"{prefix}{chr(97 + i // 26)}{chr(97 + i % 26)}bo" for i in range(n)) + "."


def test_paragraph_selection_rules():
    ann = default_annotator()
    paper = Paper("p", introduction=[words(3), words(12, "i")],
                  related_work=[words(12, "o"), words(4), words(11, "r")])
    pair = select_pair(paper, ann)
    assert pair.intro_text.startswith("Then iaa")
    assert pair.related_text.startswith("Then raa")  # first qualifying one after the opening paragraph


def test_related_work_falls_back_to_opening_paragraph():
    paper = Paper("p", introduction=[words(10)], related_work=[words(10, "o"), words(2)])
    assert select_pair(paper, default_annotator()).related_text.startswith("Then oaa")


def test_papers_without_qualifying_paragraphs_are_dropped():
    papers = [Paper("p", [words(9)], [words(20)]), Paper("q", [words(20)], []), Paper("r", [words(10)], [words(10)])]
    assert [p.paper_id for p in select_pairs(papers, jobs=2)] == ["r"]


# ------------------------------------------------------------- comparison


def test_ordering_fractions_sum_to_one_and_ties_count_as_not_greater():
    gt, eq, lt = ordering_fractions([3, 2, 2, 1, 5, 5, 5], [1, 2, 3, 1, 4, 4, 9])
    assert (gt, eq, lt) == (3 / 7, 2 / 7, 2 / 7)
    assert [round(7 * f, 9) for f in (gt, eq, lt)] == [3, 2, 2]
    assert gt + eq + lt == pytest.approx(1.0, abs=1e-15)
    assert ordering_fractions([4, 4], [4, 4])[0] == 0.0


def test_small_sample_warning_and_tests():
    res = compare_scores([5, 6, 7.5, 8.25], [1, 2.5, 3, 3.5])
    assert res.ordering == 1.0 and any("insufficient" in w for w in res.warnings)
    assert res.d_z is not None and "t_test" in res.tests


def test_equal_scores_skip_tests():
    res = compare_scores([1, 2, 3], [1, 2, 3])
    assert res.ties == 1.0 and res.ordering == 0.0
    assert any("skipped" in w for w in res.warnings)


class LookupScorer:
    def __init__(self, table):
        self.table = table

    def score_units(self, texts):
        return np.array([self.table[t] for t in texts])


def test_sweep_reuses_unit_scores_exactly(scorer, hierarchy):
    coarse, fine = extreme_words(scorer, hierarchy.names)
    papers = load_paper_corpus(make_section_papers(coarse, fine, n=6))
    res, pairs = section_compare(papers, scorer)
    strategies = sweep_strategies()
    rows = aggregation_sweep(pairs, strategies)
    assert len(rows) == 63
    fresh_pairs = select_pairs(papers)
    score_pairs(fresh_pairs, scorer)
    for spec, row in zip(strategies, rows):
        a = [report_from_units(p.intro_units, spec).document_score for p in fresh_pairs]
        b = [report_from_units(p.related_units, spec).document_score for p in fresh_pairs]
        assert row["ordering_accuracy"] == 100.0 * ordering_fractions(a, b)[0]
    default = next(r for r in rows if r["strategy"] == res.spec)
    assert default["ordering_accuracy"] == 100.0 * res.ordering


def test_synthetic_vocabulary_orders_every_paper(scorer, hierarchy):
    coarse, fine = extreme_words(scorer, hierarchy.names)
    papers = load_paper_corpus(make_section_papers(coarse, fine, n=40, seed=5))
    res, pairs = section_compare(papers, scorer)
    assert res.n == 40 and res.ordering == 1.0 and not res.warnings
    assert res.intro_mean > res.related_mean
    alt = AggregationSpec.parse("doc-pool-mean")
    res2, _ = section_compare(pairs, scorer, alt)
    assert res2.spec == "doc-pool-mean" and res2.ordering == 1.0
