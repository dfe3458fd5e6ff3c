import numpy as np
import pytest

from robustflow.constraints import (
    ClassConstraintTable,
    OneHotExclusive,
    OrderPair,
    ValueRange,
    derive_class_constraints,
    domain_constraints_from_json,
    domain_constraints_to_json,
    validate,
)
from robustflow.errors import ConfigError, DataError
from robustflow.flowdata import encode

from conftest import tiny_dataset

DOMAIN = [OrderPair("min_iat", "max_iat")]
SUBSETS = [("proto",)]


def tiny_schema_stub():
    # only benign_label is consulted by derive_class_constraints
    from robustflow.flowdata import FeatureSchema, FeatureSpec

    return FeatureSchema(
        features=(
            FeatureSpec("min_iat", "numeric", decimals=1),
            FeatureSpec("max_iat", "numeric", decimals=1),
            FeatureSpec("proto", "categorical", categories=("tcp", "udp", "other")),
        ),
        label_column="label",
        benign_label="benign",
    )


@pytest.fixture
def table():
    return derive_class_constraints(tiny_dataset(), tiny_schema_stub(), SUBSETS)


class TestDerive:
    def test_minmax_bounds(self, table):
        assert table.numeric_bounds["dos"]["min_iat"] == (2.0, 10.0)
        assert table.numeric_bounds["dos"]["max_iat"] == (6.0, 12.0)

    def test_single_row_class_degenerate(self):
        ds = tiny_dataset().take([0, 3])
        t = derive_class_constraints(ds, tiny_schema_stub(), SUBSETS)
        assert t.numeric_bounds["dos"]["min_iat"] == (2.0, 2.0)

    def test_observed_combinations_exact(self, table):
        assert table.combinations["dos"][("proto",)] == frozenset({("tcp",), ("udp",)})

    def test_benign_not_in_table(self, table):
        assert "benign" not in table.numeric_bounds

    def test_missing_class_named(self):
        ds = tiny_dataset()
        with pytest.raises(DataError, match="ghost"):
            derive_class_constraints(
                ds, tiny_schema_stub(), SUBSETS, expected_classes=["dos", "ghost"]
            )

    def test_unknown_subset_feature(self):
        with pytest.raises(ConfigError, match="nothere"):
            derive_class_constraints(tiny_dataset(), tiny_schema_stub(), [("nothere",)])


class TestValidate:
    def test_order_pair_violation(self, table):
        sample = np.array([5.0, 3.0, 1.0, 0.0, 0.0])
        result = validate(sample, "dos", DOMAIN, table)
        assert not result.valid
        order = [v for v in result.violations if v.constraint.startswith("order_pair")]
        assert len(order) == 1
        assert order[0].values == (5.0, 3.0)

    def test_training_rows_self_consistent(self, table):
        ds = tiny_dataset()
        labels = ds.labels.astype(str)
        for i in range(ds.n_rows):
            if labels[i] == "benign":
                continue
            assert validate(ds.rows[i], labels[i], DOMAIN, table).valid

    def test_class_bound_violation(self, table):
        # order holds, but min_iat 11 exceeds the dos upper bound of 10
        sample = np.array([11.0, 12.0, 1.0, 0.0, 0.0])
        result = validate(sample, "dos", DOMAIN, table)
        assert [v.constraint for v in result.violations] == ["class_bound:dos:min_iat"]

    def test_all_violations_reported(self, table):
        sample = np.array([50.0, 3.0, 1.0, 1.0, 0.0])
        result = validate(sample, "dos", DOMAIN, table)
        kinds = {v.constraint.split(":")[0] for v in result.violations}
        assert {"one_hot_exclusive", "order_pair", "class_bound"} <= kinds

    def test_combination_violation(self, table):
        sample = np.array([4.0, 9.0, 0.0, 0.0, 1.0])  # proto=other never observed for dos
        result = validate(sample, "dos", DOMAIN, table)
        assert any(v.constraint.startswith("class_combination") for v in result.violations)

    def test_value_range(self, table):
        domain = DOMAIN + [ValueRange("min_iat", 0.0, 4.0)]
        bad = validate(np.array([9.0, 10.0, 1.0, 0.0, 0.0]), "dos", domain, table)
        assert any(v.constraint == "value_range:min_iat" for v in bad.violations)

    def test_tolerance_absorbs_round_off(self, table):
        sample = np.array([10.0 + 5e-10, 12.0, 1.0, 0.0, 0.0])
        assert validate(sample, "dos", DOMAIN, table).valid

    def test_benign_rows_are_caller_error(self, table):
        with pytest.raises(DataError, match="benign"):
            validate(np.zeros(5), "benign", DOMAIN, table)

    def test_unknown_class(self, table):
        with pytest.raises(DataError, match="ghost"):
            validate(np.zeros(5), "ghost", DOMAIN, table)

    def test_pure_function(self, table):
        sample = np.array([5.0, 3.0, 1.0, 0.0, 0.0])
        a = validate(sample, "dos", DOMAIN, table)
        b = validate(sample, "dos", DOMAIN, table)
        assert a == b

    def test_tightening_grows_violations(self, table):
        rng = np.random.default_rng(5)
        ds = tiny_dataset()
        lo, hi = table.numeric_bounds["dos"]["min_iat"]
        tight = ClassConstraintTable(
            table.columns,
            table.benign_label,
            table.categorical_subsets,
            {
                "dos": {**table.numeric_bounds["dos"], "min_iat": (lo + 1.0, hi - 1.0)},
            },
            table.combinations,
        )
        for _ in range(200):
            sample = np.array(
                [rng.uniform(0, 12), rng.uniform(0, 15), 1.0, 0.0, 0.0]
            )
            sample[1] = max(sample[0], sample[1])
            wide = validate(sample, "dos", DOMAIN, table)
            narrow = validate(sample, "dos", DOMAIN, tight)
            assert len(narrow.violations) >= len(wide.violations)


class TestSelfConsistencyOnSynthetic:
    def test_every_generated_row_validates(self, synth_encoded):
        ds, schema = synth_encoded
        table = derive_class_constraints(ds, schema, [("proto", "flag")])
        domain = [OrderPair("min_iat", "max_iat")]
        labels = ds.labels.astype(str)
        for i in range(ds.n_rows):
            if labels[i] == schema.benign_label:
                continue
            result = validate(ds.rows[i], labels[i], domain, table)
            assert result.valid, result.violations


class TestSerialization:
    def test_table_json_round_trip(self, table, tmp_path):
        path = tmp_path / "table.json"
        table.save(path)
        back = ClassConstraintTable.load(path)
        assert back.numeric_bounds == table.numeric_bounds
        assert back.combinations == table.combinations
        assert back.columns == table.columns
        sample = np.array([5.0, 3.0, 1.0, 0.0, 0.0])
        assert validate(sample, "dos", DOMAIN, back) == validate(sample, "dos", DOMAIN, table)

    def test_domain_json_round_trip(self):
        domain = [
            OrderPair("a", "b"),
            ValueRange("c", 0.0, 5.0),
            OneHotExclusive("p"),
        ]
        assert domain_constraints_from_json(domain_constraints_to_json(domain)) == domain

    def test_unknown_type_rejected(self):
        with pytest.raises(ConfigError):
            domain_constraints_from_json([{"type": "nope"}])
