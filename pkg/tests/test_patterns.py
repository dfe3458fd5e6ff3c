import numpy as np
import pytest

from robustflow.constraints import OrderPair, derive_class_constraints, validate
from robustflow.errors import ConfigError, DataError
from robustflow.flowdata import FeatureSchema, FeatureSpec
from robustflow.patterns import (
    CombinationPattern,
    IntervalPattern,
    PatternConfig,
    fit_patterns,
    load_sequences,
    perturb,
    save_sequences,
    update_patterns,
)
from robustflow.rng import derive_rng

from conftest import tiny_dataset

DOMAIN = [OrderPair("min_iat", "max_iat")]


def tiny_schema():
    return FeatureSchema(
        features=(
            FeatureSpec("min_iat", "numeric", decimals=1),
            FeatureSpec("max_iat", "numeric", decimals=1),
            FeatureSpec("proto", "categorical", categories=("tcp", "udp", "other")),
        ),
        label_column="label",
        benign_label="benign",
    )


CONFIG = PatternConfig(
    numeric_subsets=(("min_iat", "max_iat"),),
    categorical_subsets=(("proto",),),
)


@pytest.fixture
def fitted():
    ds = tiny_dataset()
    schema = tiny_schema()
    sequences = fit_patterns(ds, schema, CONFIG, epsilon=0.3, seed=11)
    table = derive_class_constraints(ds, schema, [("proto",)])
    return ds, sequences, table


class TestFit:
    def test_interval_minmax(self, fitted):
        _, sequences, _ = fitted
        interval = sequences["dos"].patterns[0]
        assert isinstance(interval, IntervalPattern)
        assert interval.features == ("min_iat", "max_iat")
        assert interval.low == (2.0, 6.0)
        assert interval.high == (10.0, 12.0)
        assert interval.decimals == (1, 1)

    def test_combination_observed(self, fitted):
        _, sequences, _ = fitted
        combo = sequences["dos"].patterns[1]
        assert isinstance(combo, CombinationPattern)
        assert combo.combinations == frozenset({("tcp",), ("udp",)})

    def test_benign_gets_no_sequence(self, fitted):
        _, sequences, _ = fitted
        assert "benign" not in sequences
        assert set(sequences) == {"dos"}

    def test_independent_sequences_per_class(self, synth_encoded):
        ds, schema = synth_encoded
        config = PatternConfig(
            numeric_subsets=(("min_iat", "max_iat"), ("duration",)),
            categorical_subsets=(("proto", "flag"),),
        )
        sequences = fit_patterns(ds, schema, config)
        assert set(sequences) == {"flood", "scan", "exfil"}
        flood = sequences["flood"].patterns[0]
        exfil = sequences["exfil"].patterns[0]
        assert flood.low != exfil.low or flood.high != exfil.high

    def test_overlapping_subsets_rejected(self):
        with pytest.raises(ConfigError, match="disjoint"):
            PatternConfig(numeric_subsets=(("a", "b"), ("b",)))

    def test_unknown_column_rejected(self, fitted):
        ds, _, _ = fitted
        with pytest.raises(ConfigError, match="ghost"):
            fit_patterns(ds, tiny_schema(), PatternConfig(numeric_subsets=(("ghost",),)))

    def test_fitted_on_pins_dataset(self, fitted):
        ds, sequences, _ = fitted
        assert sequences["dos"].fitted_on == ds.fingerprint()


class TestUpdate:
    def test_interval_widens(self, fitted):
        _, sequences, _ = fitted
        row = np.array([1.0, 30.0, 1.0, 0.0, 0.0])
        updated = update_patterns(sequences["dos"], row, ["dos"])
        assert updated.patterns[0].low == (1.0, 6.0)
        assert updated.patterns[0].high == (10.0, 30.0)

    def test_combination_grows(self, fitted):
        _, sequences, _ = fitted
        row = np.array([3.0, 7.0, 0.0, 0.0, 1.0])
        updated = update_patterns(sequences["dos"], row, ["dos"])
        assert updated.patterns[1].combinations == frozenset(
            {("tcp",), ("udp",), ("other",)}
        )

    def test_covered_rows_are_idempotent(self, fitted):
        ds, sequences, _ = fitted
        rows = ds.rows[ds.labels.astype(str) == "dos"]
        updated = update_patterns(sequences["dos"], rows, ["dos"] * rows.shape[0])
        assert updated == sequences["dos"]

    def test_never_shrinks(self, fitted):
        _, sequences, _ = fitted
        rng = np.random.default_rng(0)
        seq = sequences["dos"]
        for _ in range(50):
            row = np.array(
                [rng.uniform(0, 20), rng.uniform(0, 40), 1.0, 0.0, 0.0]
            )
            row[1] = max(row[0], row[1])
            new = update_patterns(seq, row, ["dos"])
            for old_p, new_p in zip(seq.patterns, new.patterns):
                if isinstance(old_p, IntervalPattern):
                    assert all(n <= o for n, o in zip(new_p.low, old_p.low))
                    assert all(n >= o for n, o in zip(new_p.high, old_p.high))
                else:
                    assert old_p.combinations <= new_p.combinations
            seq = new

    def test_wrong_class_rejected(self, fitted):
        _, sequences, _ = fitted
        with pytest.raises(DataError, match="benign"):
            update_patterns(sequences["dos"], np.zeros(5), ["benign"])


class TestPerturb:
    def test_single_combination_is_noop_categorical(self, fitted):
        ds, _, table = fitted
        schema = tiny_schema()
        only_tcp = ds.take([0, 2, 3])  # dos rows with proto=tcp only
        sequences = fit_patterns(only_tcp, schema, CONFIG)
        t = derive_class_constraints(only_tcp, schema, [("proto",)])
        sample = only_tcp.rows[0]
        out = perturb(sample, sequences["dos"], DOMAIN, t, derive_rng(0, 0))
        assert out[2:].tolist() == sample[2:].tolist()

    def test_degenerate_interval_keeps_value(self):
        ds = tiny_dataset().take([0, 3])  # single dos row -> [v, v] intervals
        schema = tiny_schema()
        sequences = fit_patterns(ds, schema, CONFIG)
        table = derive_class_constraints(ds, schema, [("proto",)])
        out = perturb(ds.rows[0], sequences["dos"], DOMAIN, table, derive_rng(1, 0))
        assert out[0] == ds.rows[0][0]
        assert out[1] == ds.rows[0][1]

    def test_deterministic_given_stream(self, fitted):
        ds, sequences, table = fitted
        sample = ds.rows[0]
        a = perturb(sample, sequences["dos"], DOMAIN, table, derive_rng(7, 3))
        b = perturb(sample, sequences["dos"], DOMAIN, table, derive_rng(7, 3))
        c = perturb(sample, sequences["dos"], DOMAIN, table, derive_rng(7, 4))
        assert np.array_equal(a, b)
        assert not np.array_equal(a, c)

    def test_output_is_perturbed(self, fitted):
        ds, sequences, table = fitted
        sample = ds.rows[0]
        for i in range(300):
            out = perturb(sample, sequences["dos"], DOMAIN, table, derive_rng(13, i))
            assert not np.array_equal(out, sample)

    def test_layout_mismatch_rejected(self, fitted):
        _, sequences, table = fitted
        with pytest.raises(DataError, match="layout"):
            perturb(np.zeros(4), sequences["dos"], DOMAIN, table, derive_rng(0))

    def test_realism_sweep_tiny(self, fitted):
        ds, sequences, table = fitted
        labels = ds.labels.astype(str)
        for i in np.flatnonzero(labels == "dos"):
            rng = derive_rng(21, int(i))
            row = ds.rows[i]
            for _ in range(500):
                row = perturb(row, sequences["dos"], DOMAIN, table, rng)
                result = validate(row, "dos", DOMAIN, table)
                assert result.valid, result.violations

    def test_realism_sweep_synthetic(self, synth_encoded):
        ds, schema = synth_encoded
        config = PatternConfig(
            numeric_subsets=(("min_iat", "max_iat"), ("duration", "byte_rate")),
            categorical_subsets=(("proto", "flag"),),
        )
        sequences = fit_patterns(ds, schema, config)
        table = derive_class_constraints(ds, schema, [("proto", "flag")])
        labels = ds.labels.astype(str)
        malicious = np.flatnonzero(labels != schema.benign_label)
        for i in malicious[:80]:
            rng = derive_rng(5, int(i))
            row = ds.rows[i]
            for _ in range(50):
                row = perturb(row, sequences[labels[i]], DOMAIN, table, rng)
                result = validate(row, labels[i], DOMAIN, table)
                assert result.valid, (labels[i], result.violations)


class TestSerialization:
    def test_json_round_trip(self, fitted, tmp_path):
        ds, sequences, table = fitted
        path = tmp_path / "patterns.json"
        save_sequences(path, sequences)
        back = load_sequences(path)
        assert back == sequences
        sample = ds.rows[0]
        a = perturb(sample, sequences["dos"], DOMAIN, table, derive_rng(3, 1))
        b = perturb(sample, back["dos"], DOMAIN, table, derive_rng(3, 1))
        assert np.array_equal(a, b)
