import io

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from lodohar.errors import ValidationError
from lodohar.metrics import (
    RESULT_FIELDS,
    accuracy,
    aggregate,
    confusion_matrix,
    macro_f1,
    per_class_f1,
    read_results_csv,
    report_csv,
    report_text,
    sort_results,
    write_results_csv,
)


def _row(target="A", strategy="PU", ratio=0.01, seed=0, f1=0.5, fold=0):
    return {"fold": fold, "target_dataset": target, "strategy": strategy, "ratio": ratio, "seed": seed,
            "macro_f1": f1, "accuracy": f1, "best_epoch": 1, "epochs_run": 2, "wall_time_s": 0.0}


def test_confusion_counts():
    cm = confusion_matrix([0, 1, 1, 2], [0, 2, 1, 2], 3)
    assert cm.tolist() == [[1, 0, 0], [0, 1, 1], [0, 0, 1]]
    assert cm.sum() == 4


def test_macro_f1_perfect():
    assert macro_f1(np.diag([3, 5, 7])) == 1.0


def test_macro_f1_hand_example():
    assert abs(macro_f1(np.array([[5, 5], [0, 10]])) - 11 / 15) < 1e-12


def test_zero_support_class_excluded_and_missed_class_zero():
    cm = np.array([[4, 0, 0], [0, 0, 0], [2, 0, 0]])
    f1, inc = per_class_f1(cm)
    assert inc.tolist() == [True, False, True]
    assert f1[2] == 0.0
    assert abs(macro_f1(cm) - (2 * 4 / (8 + 2)) / 2) < 1e-12


def test_all_zero_matrix_errors():
    with pytest.raises(ValidationError):
        macro_f1(np.zeros((3, 3), int))
    with pytest.raises(ValidationError):
        accuracy(np.zeros((2, 2), int))


def test_uniform_random_predictions_monte_carlo():
    rng = np.random.default_rng(0)
    C, n = 5, 100_000
    y = np.repeat(np.arange(C), n // C)
    p = rng.integers(0, C, n)
    assert abs(macro_f1(confusion_matrix(y, p, C)) - 1 / C) < 0.01


@settings(max_examples=100)
@given(st.integers(2, 6), st.integers(0, 2**32 - 1))
def test_macro_f1_permutation_invariant(C, seed):
    rng = np.random.default_rng(seed)
    cm = rng.integers(0, 20, (C, C))
    cm[0, 0] += 1
    perm = rng.permutation(C)
    assert abs(macro_f1(cm) - macro_f1(cm[np.ix_(perm, perm)])) < 1e-12
    assert 0.0 <= macro_f1(cm) <= 1.0


@pytest.mark.parametrize("C,d,e", [(3, 10, 2), (5, 7, 1), (4, 20, 5)])
def test_accuracy_equals_macro_f1_on_balanced_uniform_error(C, d, e):
    cm = np.full((C, C), e) + np.eye(C, dtype=int) * (d - e)
    assert abs(accuracy(cm) - macro_f1(cm)) < 1e-12


def test_aggregate_examples():
    one = aggregate([_row(f1=0.7)])
    assert one["avg"][("PU", 0.01)] == 0.7
    two = aggregate([_row("A", f1=0.4), _row("B", f1=0.6)])
    assert abs(two["avg"][("PU", 0.01)] - 0.5) < 1e-12


def test_aggregate_means_seeds_then_targets():
    rows = [_row("A", seed=0, f1=0.2), _row("A", seed=1, f1=0.4), _row("B", seed=0, f1=0.9)]
    tab = aggregate(rows)
    assert abs(tab["cells"][("A", "PU", 0.01)] - 0.3) < 1e-12
    assert abs(tab["avg"][("PU", 0.01)] - 0.6) < 1e-12


@settings(max_examples=50)
@given(st.lists(st.tuples(st.sampled_from("ABC"), st.sampled_from(["Rd", "PF", "PU"]),
                          st.sampled_from([0.01, 0.1]), st.integers(0, 3), st.floats(0, 1)),
                min_size=1, max_size=20), st.randoms(use_true_random=False))
def test_aggregate_permutation_invariant(rows, rnd):
    rows = [_row(t, s, r, seed, f) for t, s, r, seed, f in rows]
    shuffled = rows[:]
    rnd.shuffle(shuffled)
    assert aggregate(rows) == aggregate(shuffled)


def test_report_layout():
    rows = [_row("A", "Rd", 0.01, f1=0.5), _row("A", "PU", 0.0, f1=0.3), _row("A", "PU", 1.0, f1=0.9)]
    tab = aggregate(rows)
    assert tab["columns"] == [("Rd", 0.01), ("PU", 0.0), ("PU", 1.0)]
    text = report_text(tab)
    assert "AVG" in text and "All" in text and "1%" in text and "0%" in text
    csv_text = report_csv(tab)
    assert csv_text.splitlines()[0] == "target,Rd@0.01,PU@0,PU@1"
    assert csv_text.splitlines()[-1] == "AVG,0.5000,0.3000,0.9000"


def test_results_csv_round_trip(tmp_path):
    rows = sort_results([_row("B", "PU", 0.1, 1, 0.25, fold=1), _row("A", "Rd", 0.01, 0, 0.5)])
    write_results_csv(rows, tmp_path / "r.csv")
    lines = (tmp_path / "r.csv").read_text().splitlines()
    assert lines[0] == ",".join(RESULT_FIELDS)
    back = read_results_csv(tmp_path / "r.csv")
    assert [r["target_dataset"] for r in back] == ["A", "B"]
    assert back[1]["macro_f1"] == 0.25 and back[1]["ratio"] == 0.1
    buf = io.StringIO()
    write_results_csv(rows, buf)
    assert buf.getvalue() == (tmp_path / "r.csv").read_text()


def test_sort_order():
    rows = [_row(strategy="PU", ratio=0.0), _row(strategy="Rd", ratio=0.1), _row(strategy="PF"),
            _row(strategy="Rd", ratio=0.01, seed=1), _row(strategy="Rd", ratio=0.01, seed=0),
            _row(fold=1, strategy="Rd")]
    got = [(r["fold"], r["strategy"], r["ratio"], r["seed"]) for r in sort_results(rows)]
    assert got == [(0, "Rd", 0.01, 0), (0, "Rd", 0.01, 1), (0, "Rd", 0.1, 0), (0, "PF", 0.01, 0),
                   (0, "PU", 0.0, 0), (1, "Rd", 0.01, 0)]
