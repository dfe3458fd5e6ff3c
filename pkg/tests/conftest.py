import numpy as np
import pytest

from robustflow.flowdata import (
    ClassSpec,
    ClusterSpec,
    CombinationSpec,
    EncodedColumn,
    EncodedDataset,
    SyntheticSpec,
    encode,
    generate_synthetic,
)


def small_synthetic_spec(
    benign_count=240, flood_count=120, scan_count=60, exfil_count=24
) -> SyntheticSpec:
    """A compact 4-class flow generator used across the suite.

    min_iat/max_iat form an order pair; every class keeps a distinct
    but overlapping numeric footprint and its own protocol/flag
    combinations.
    """
    def cls(count, iat, dur, rate, combos):
        return ClassSpec(
            count=count,
            clusters=(
                ClusterSpec(
                    numeric={
                        "min_iat": (iat[0], iat[1]),
                        "max_iat": (iat[2], iat[3]),
                        "duration": dur,
                        "byte_rate": rate,
                    }
                ),
            ),
            combinations=tuple(
                CombinationSpec(values={"proto": p, "flag": f}, weight=w)
                for p, f, w in combos
            ),
        )

    return SyntheticSpec(
        label_column="label",
        benign_class="benign",
        numeric_features={"min_iat": 3, "max_iat": 3, "duration": 2, "byte_rate": 1},
        categorical_features=("proto", "flag"),
        order_pairs=(("min_iat", "max_iat"),),
        classes={
            "benign": cls(
                benign_count,
                (0.050, 2.000, 0.500, 30.000),
                (0.5, 120.0),
                (1.0, 800.0),
                [("tcp", "SF", 0.7), ("udp", "SF", 0.2), ("tcp", "S0", 0.1)],
            ),
            "flood": cls(
                flood_count,
                (0.001, 0.080, 0.002, 0.900),
                (0.01, 20.0),
                (500.0, 9000.0),
                [("tcp", "S0", 0.8), ("udp", "S0", 0.2)],
            ),
            "scan": cls(
                scan_count,
                (0.010, 0.600, 0.050, 5.000),
                (0.05, 8.0),
                (5.0, 300.0),
                [("tcp", "REJ", 0.6), ("tcp", "S0", 0.4)],
            ),
            "exfil": cls(
                exfil_count,
                (0.200, 4.000, 1.000, 60.000),
                (5.0, 300.0),
                (50.0, 2000.0),
                [("tcp", "SF", 0.8), ("udp", "SF", 0.2)],
            ),
        },
    )


def disjoint_synthetic_spec(benign_count=160, flood_count=80, scan_count=40, exfil_count=20):
    """Variant whose classes occupy disjoint byte_rate ranges.

    Any row, perturbed or not, is identifiable from byte_rate alone
    because perturbations never leave the class's observed interval;
    oracle predictors in the attack tests rely on this.
    """
    spec = small_synthetic_spec(benign_count, flood_count, scan_count, exfil_count)
    ranges = {
        "benign": (1.0, 80.0),
        "flood": (200.0, 280.0),
        "scan": (400.0, 480.0),
        "exfil": (600.0, 680.0),
    }
    classes = {}
    for name, cls in spec.classes.items():
        clusters = tuple(
            ClusterSpec(
                numeric={**c.numeric, "byte_rate": ranges[name]}, weight=c.weight
            )
            for c in cls.clusters
        )
        classes[name] = ClassSpec(
            count=cls.count, clusters=clusters, combinations=cls.combinations
        )
    return SyntheticSpec(
        label_column=spec.label_column,
        benign_class=spec.benign_class,
        numeric_features=spec.numeric_features,
        categorical_features=spec.categorical_features,
        order_pairs=spec.order_pairs,
        classes=classes,
    )


BYTE_RATE_CLASS_RANGES = {
    "benign": (0.0, 100.0),
    "flood": (150.0, 330.0),
    "scan": (350.0, 530.0),
    "exfil": (550.0, 730.0),
}


class RangeOracle:
    """Exact true-class predictor for disjoint_synthetic_spec data."""

    def __init__(self, byte_rate_column: int):
        self.column = byte_rate_column

    def classify(self, value: float) -> str:
        for label, (lo, hi) in BYTE_RATE_CLASS_RANGES.items():
            if lo <= value <= hi:
                return label
        raise AssertionError(f"byte_rate {value} outside every class range")

    def predict_batch(self, X):
        import numpy as _np

        X = _np.atleast_2d(X)
        return [self.classify(float(v)) for v in X[:, self.column]]


@pytest.fixture(scope="session")
def synth_spec():
    return small_synthetic_spec()


@pytest.fixture(scope="session")
def synth_data(synth_spec):
    rows, schema = generate_synthetic(synth_spec, seed=99)
    return rows, schema


@pytest.fixture(scope="session")
def synth_encoded(synth_data):
    rows, schema = synth_data
    return encode(rows, schema), schema


def tiny_dataset():
    """Two numeric columns (order pair) plus a 3-category protocol."""
    columns = [
        EncodedColumn("min_iat", "min_iat"),
        EncodedColumn("max_iat", "max_iat"),
        EncodedColumn("proto=tcp", "proto", "tcp"),
        EncodedColumn("proto=udp", "proto", "udp"),
        EncodedColumn("proto=other", "proto", "other"),
    ]
    rows = np.array(
        [
            [2.0, 6.0, 1.0, 0.0, 0.0],
            [4.0, 9.0, 0.0, 1.0, 0.0],
            [10.0, 12.0, 1.0, 0.0, 0.0],
            [1.0, 30.0, 1.0, 0.0, 0.0],
            [0.5, 20.0, 0.0, 1.0, 0.0],
        ]
    )
    labels = ["dos", "dos", "dos", "benign", "benign"]
    return EncodedDataset(columns, rows, labels)
