import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from granuscore.errors import DegenerateTestError, PairingError, UndefinedMetricError
from granuscore.evalkit import (
    EvaluationTable,
    bootstrap_diff_test,
    cohens_dz,
    exact_ordering_accuracy,
    kendall_tau_b,
    mannwhitney_u,
    paired_t_test,
    paired_tests,
    pairwise_accuracy,
    pairwise_counts,
    pearson_r,
    ranking_report,
    wilcoxon_signed_rank,
)
from granuscore.evalkit.metrics import pair_dump

# Student's sleep data (extra hours of sleep, two drugs, ten patients)
SLEEP_A = [0.7, -1.6, -0.2, -1.2, -0.1, 3.4, 3.7, 0.8, 0.0, 2.0]
SLEEP_B = [1.9, 0.8, 1.1, 0.1, -0.1, 4.4, 5.5, 1.6, 4.6, 3.4]
# Darwin's Zea mays height differences (cross minus self fertilised, eighths of an inch)
DARWIN = [49, -67, 8, 16, 6, 23, 28, 41, 14, 29, 56, 24, 75, 60, -48]


# ---------------------------------------------------------------- oracles


def brute_pairwise(entries, scope):
    pts = [(g, p, ei) for ei, (gs, ps) in enumerate(entries) for g, p in zip(gs, ps)]
    ok = n = 0
    for (g1, p1, e1), (g2, p2, e2) in itertools.permutations(pts, 2):
        if scope == "intra" and e1 != e2:
            continue
        if g1 < g2:
            n += 1
            ok += p1 < p2
    return ok, n


def brute_tau_b(x, y):
    conc = disc = tx = ty = 0
    for i, j in itertools.combinations(range(len(x)), 2):
        dx, dy = x[i] - x[j], y[i] - y[j]
        if dx == 0 and dy == 0:
            continue
        if dx == 0:
            tx += 1
        elif dy == 0:
            ty += 1
        elif dx * dy > 0:
            conc += 1
        else:
            disc += 1
    return (conc - disc) / math.sqrt((conc + disc + tx) * (conc + disc + ty))


entry_lists = st.lists(
    st.integers(1, 4).flatmap(
        lambda n: st.tuples(
            st.just([1.0 + 3.0 * i / max(n - 1, 1) for i in range(n)]),
            st.lists(st.integers(0, 6).map(float), min_size=n, max_size=n),
        )
    ),
    min_size=1,
    max_size=12,
)


# ---------------------------------------------------------------- metrics


def test_pairwise_accuracy_by_hand():
    entries = [([1, 4], [0.1, 0.9]), ([1, 2.5, 4], [0.5, 0.2, 0.3])]
    # intra: entry 0 has 1 correct of 1; entry 1 has (1<2.5 wrong, 1<4 wrong, 2.5<4 right)
    assert pairwise_counts(entries, "intra").correct == 2
    assert pairwise_accuracy(entries, "intra") == pytest.approx(50.0)
    assert exact_ordering_accuracy(entries) == 50.0


def test_tied_predictions_are_wrong():
    assert pairwise_accuracy([([1, 4], [2.0, 2.0])]) == 0.0
    assert exact_ordering_accuracy([([1, 4], [2.0, 2.0])]) == 0.0


def test_no_eligible_pairs_is_undefined():
    with pytest.raises(UndefinedMetricError):
        pairwise_accuracy([([1.0], [3.0])])


@settings(max_examples=150, deadline=None)
@given(entry_lists)
def test_pairwise_against_brute_force(entries):
    for scope in ("global", "intra"):
        ok, n = brute_pairwise(entries, scope)
        c = pairwise_counts(entries, scope)
        assert (c.correct, c.eligible) == (ok, n)


def test_chunked_counting_agrees(rng):
    g = rng.integers(1, 5, size=5000).astype(float)
    p = rng.normal(size=5000) + g
    entries = [(g, p)]
    from granuscore.evalkit.metrics import _count_pairs

    assert _count_pairs(g, p, chunk=97) == _count_pairs(g, p, chunk=100000)
    assert 50 < pairwise_accuracy(entries) < 100


@settings(max_examples=100, deadline=None)
@given(st.lists(st.tuples(st.integers(0, 4), st.integers(0, 4)), min_size=3, max_size=25))
def test_kendall_tau_b_against_brute_force(pairs):
    x = [float(a) for a, _ in pairs]
    y = [float(b) for _, b in pairs]
    if len(set(x)) < 2 or len(set(y)) < 2:
        with pytest.raises(UndefinedMetricError):
            kendall_tau_b(x, y)
        return
    assert kendall_tau_b(x, y) == pytest.approx(brute_tau_b(x, y), abs=1e-12)


def test_pearson_known_value():
    x, y = [1, 2, 3, 4], [2, 4, 6, 8.5]
    # centred x = (-1.5, -0.5, 0.5, 1.5), centred y = (-3.125, -1.125, 0.875, 3.375)
    want = 10.75 / math.sqrt(5 * 23.1875)
    assert pearson_r(x, y) == pytest.approx(want, abs=1e-12)
    with pytest.raises(UndefinedMetricError):
        pearson_r([1, 2, 3], [5, 5, 5])


def test_report_marks_undefined_correlations_as_nan():
    rep = ranking_report([([1, 4], [-1.0, -1.0]), ([1, 4], [-1.0, -1.0])])
    assert math.isnan(rep.kendall_tau) and math.isnan(rep.pearson_r)
    assert rep.intra_kendall_tau == 0.0
    assert rep.global_pw_acc == 0.0 and rep.entries == 2 and rep.realizations == 4


def test_perfect_report():
    rep = ranking_report([([1, 2.5, 4], [0.1, 0.2, 0.3]), ([1, 4], [1.0, 2.0])])
    assert rep.intra_pw_acc == 100.0 and rep.exact_ordering_acc == 100.0
    assert rep.intra_kendall_tau == pytest.approx(100.0)


def test_pair_dump_lists_every_intra_pair():
    rows = pair_dump([([1, 2.5, 4], [0.1, 0.3, 0.2])])
    assert len(rows) == 3 and sum(r["correct"] for r in rows) == 2


def test_evaluation_table_csv(tmp_path):
    t = EvaluationTable()
    t.add("m", ranking_report([([1, 4], [0.0, 1.0])]))
    t.to_csv(tmp_path / "t.csv")
    text = (tmp_path / "t.csv").read_text()
    assert text.splitlines()[0].startswith("method")
    assert "m," in text


# ------------------------------------------------------------------ stats


def test_paired_t_on_sleep_data():
    r = paired_t_test(SLEEP_B, SLEEP_A)
    assert r.statistic == pytest.approx(4.062127683382037, rel=1e-12)
    assert r.p_value == pytest.approx(0.00283289019738427, rel=1e-10)
    assert r.effect_size == pytest.approx(1.2845575625910546, rel=1e-12)


def test_wilcoxon_on_sleep_data_uses_corrected_normal_approximation():
    r = wilcoxon_signed_rank(SLEEP_B, SLEEP_A)
    assert r.statistic == 0.0
    assert r.p_value == pytest.approx(0.009090698015925044, rel=1e-10)
    assert "approx" in r.detail


def test_wilcoxon_exact_on_darwin():
    r = wilcoxon_signed_rank(DARWIN, np.zeros(len(DARWIN)))
    assert r.statistic == 24.0
    assert r.p_value == pytest.approx(0.041259765625, rel=1e-12)
    assert "exact" in r.detail


def test_degenerate_and_unpaired_inputs():
    with pytest.raises(DegenerateTestError):
        wilcoxon_signed_rank([1, 2], [1, 2])
    with pytest.raises(DegenerateTestError):
        paired_t_test([1, 2, 3], [0, 1, 2])
    with pytest.raises(DegenerateTestError):
        cohens_dz([1.0])
    with pytest.raises(PairingError):
        paired_tests([1, 2], [1, 2, 3])


def test_bootstrap_matches_high_resample_oracle(rng):
    a = rng.normal(0.1, 1, size=40)
    b = rng.normal(0.0, 1, size=40)
    got = bootstrap_diff_test(a, b, n_resamples=20_000, seed=7)
    d = a - b
    oracle_rng = np.random.default_rng(2024)
    sums = np.concatenate([d[oracle_rng.integers(0, 40, size=(10_000, 40))].sum(1) for _ in range(20)])
    want = float(np.mean(sums < 0) + 0.5 * np.mean(sums == 0))
    # the standard error of a 20k-resample estimate is at most 0.0036
    assert abs(got.p_value - want) < 0.015
    assert got.statistic == pytest.approx(d.mean())


def test_bootstrap_identical_methods_give_half():
    assert bootstrap_diff_test([1, 2, 3], [1, 2, 3], n_resamples=500).p_value == 0.5


def test_bootstrap_is_seeded_and_chunk_independent(rng):
    a, b = rng.normal(size=30), rng.normal(size=30)
    p1 = bootstrap_diff_test(a, b, 3000, seed=1, chunk=1000).p_value
    p2 = bootstrap_diff_test(a, b, 3000, seed=1, chunk=250).p_value
    assert p1 == p2


def test_mann_whitney_separated_samples():
    r = mannwhitney_u([1, 2, 3], [4, 5, 6])
    assert r.statistic == 0.0 and r.p_value == pytest.approx(0.1) and r.effect_size == -1.0
    with pytest.raises(DegenerateTestError):
        mannwhitney_u([], [1])
