import numpy as np
import pytest

from robustflow.errors import DataError
from robustflow.metrics import (
    ConfusionMatrix,
    accuracy_malicious_only,
    build_report,
    confusion,
    f1_score,
    false_positive_rate,
    macro_f1,
    overall_accuracy,
    precision,
    recall,
)


def brute_force_metrics(truths, preds, classes):
    """Naive per-class recomputation straight from the label pairs."""
    out = {}
    for c in classes:
        tp = sum(1 for t, p in zip(truths, preds) if t == c and p == c)
        fp = sum(1 for t, p in zip(truths, preds) if t != c and p == c)
        fn = sum(1 for t, p in zip(truths, preds) if t == c and p != c)
        prec = tp / (tp + fp) if tp + fp else None
        rec = tp / (tp + fn) if tp + fn else None
        if prec is None and rec is None:
            f1 = None
        else:
            p0, r0 = prec or 0.0, rec or 0.0
            f1 = 0.0 if p0 + r0 == 0 else 2 * p0 * r0 / (p0 + r0)
        out[c] = (prec, rec, f1)
    present = [c for c in classes if any(t == c for t in truths)]
    macro = (
        sum(0.0 if out[c][2] is None else out[c][2] for c in present) / len(present)
        if present
        else None
    )
    return out, macro


class TestConfusion:
    def test_basic_counts(self):
        cm = confusion(["A", "A", "B"], ["A", "B", "B"], ["A", "B"])
        assert cm.counts.tolist() == [[1, 1], [0, 1]]

    def test_all_correct_is_diagonal(self):
        cm = confusion(["A", "B", "B"], ["A", "B", "B"], ["A", "B"])
        assert np.all(cm.counts == np.diag(np.diag(cm.counts)))

    def test_empty_input_all_zero(self):
        cm = confusion([], [], ["A", "B"])
        assert cm.counts.sum() == 0
        assert overall_accuracy(cm) is None

    def test_unknown_label_rejected(self):
        with pytest.raises(DataError):
            confusion(["A"], ["C"], ["A", "B"])
        with pytest.raises(DataError):
            confusion(["C"], ["A"], ["A", "B"])

    def test_length_mismatch(self):
        with pytest.raises(DataError):
            confusion(["A"], [], ["A"])


class TestMaliciousAccuracy:
    def test_independent_of_benign_rows(self):
        # 10 dos rows, 7 predicted correctly -> 0.7 whatever benign does
        truths = ["dos"] * 10 + ["benign"] * 5
        preds = ["dos"] * 7 + ["benign"] * 3 + ["dos"] * 5
        cm = confusion(truths, preds, ["benign", "dos"])
        assert accuracy_malicious_only(cm, "benign") == pytest.approx(0.7)

    def test_full_evasion_is_zero(self):
        truths = ["dos"] * 4 + ["benign"]
        preds = ["benign"] * 5
        cm = confusion(truths, preds, ["benign", "dos"])
        assert accuracy_malicious_only(cm, "benign") == 0.0

    def test_worked_value_point_six(self):
        # TP=3, FN=2 and no other malicious classes -> 3/5 = 0.6
        truths = ["mal"] * 5 + ["benign"] * 3
        preds = ["mal"] * 3 + ["benign"] * 2 + ["benign"] * 3
        cm = confusion(truths, preds, ["benign", "mal"])
        assert accuracy_malicious_only(cm, "benign") == pytest.approx(0.6)

    def test_no_malicious_rows_is_undefined(self):
        cm = confusion(["benign"], ["benign"], ["benign", "dos"])
        assert accuracy_malicious_only(cm, "benign") is None


class TestMacroF1:
    def test_worked_value_three_quarters(self):
        # class A perfect (F1=1), class B at F1=0.5, macro = 0.75
        truths = ["A"] + ["B"] * 3
        preds = ["A", "B", "C", "C"]
        cm = confusion(truths, preds, ["A", "B", "C"])
        assert f1_score(cm, "A") == pytest.approx(1.0)
        assert f1_score(cm, "B") == pytest.approx(0.5)
        assert macro_f1(cm) == pytest.approx(0.75)

    def test_perfect_predictions(self):
        truths = ["A", "B", "C"] * 4
        cm = confusion(truths, truths, ["A", "B", "C"])
        assert macro_f1(cm) == 1.0

    def test_matches_brute_force_on_random_cases(self):
        rng = np.random.default_rng(0)
        classes = ["a", "b", "c", "d"]
        for _ in range(300):
            n = int(rng.integers(1, 40))
            truths = [classes[i] for i in rng.integers(0, len(classes), n)]
            preds = [classes[i] for i in rng.integers(0, len(classes), n)]
            cm = confusion(truths, preds, classes)
            expected, expected_macro = brute_force_metrics(truths, preds, classes)
            for c in classes:
                p, r, f1 = expected[c]
                for got, want in (
                    (precision(cm, c), p),
                    (recall(cm, c), r),
                    (f1_score(cm, c), f1),
                ):
                    if want is None:
                        assert got is None
                    else:
                        assert abs(got - want) < 1e-12
            assert abs(macro_f1(cm) - expected_macro) < 1e-12

    def test_absent_class_excluded_from_mean(self):
        truths = ["A", "A"]
        preds = ["A", "B"]
        cm = confusion(truths, preds, ["A", "B"])
        # only class A is present in ground truth
        assert macro_f1(cm) == pytest.approx(f1_score(cm, "A"))


class TestFalsePositiveRate:
    def test_five_percent(self):
        truths = ["benign"] * 100 + ["dos"] * 3
        preds = ["dos"] * 5 + ["benign"] * 95 + ["dos"] * 3
        cm = confusion(truths, preds, ["benign", "dos"])
        assert false_positive_rate(cm, "benign") == pytest.approx(0.05)

    def test_zero_when_all_benign_correct(self):
        truths = ["benign"] * 10 + ["dos"]
        preds = ["benign"] * 10 + ["benign"]
        cm = confusion(truths, preds, ["benign", "dos"])
        assert false_positive_rate(cm, "benign") == 0.0

    def test_undefined_without_benign_rows(self):
        cm = confusion(["dos"], ["dos"], ["benign", "dos"])
        assert false_positive_rate(cm, "benign") is None


class TestReport:
    def test_report_fields_and_rates_in_range(self, synth_encoded):
        ds, schema = synth_encoded
        rng = np.random.default_rng(1)
        truths = ds.labels.astype(str).tolist()
        preds = [truths[i] if rng.random() < 0.8 else "flood" for i in range(len(truths))]
        report = build_report(truths, preds, ds.classes, schema.benign_label)
        doc = report.to_json()
        for key in ("overall_accuracy", "malicious_accuracy", "macro_f1", "false_positive_rate"):
            value = doc[key]
            assert value is None or 0.0 <= value <= 1.0
        assert set(doc["per_class"]) == set(ds.classes)
        text = report.to_text()
        assert "macro F1" in text

    def test_undefined_rates_render_as_na(self):
        report = build_report(["dos"], ["dos"], ["benign", "dos"], "benign")
        assert report.false_positive_rate is None
        assert "n/a" in report.to_text()
