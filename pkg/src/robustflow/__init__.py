"""Adversarial robustness workbench for tree-ensemble flow classifiers.

The package covers the full analysis loop: preprocess tabular flow
data, derive realism constraints, fit per-class perturbation patterns,
train four tree-ensemble families, run budgeted black-box evasion
attacks, and compare regular against adversarial training.
"""

from .flowdata import (
    EncodedColumn,
    EncodedDataset,
    FeatureSchema,
    FeatureSpec,
    SplitPair,
    SyntheticSpec,
    encode,
    decode,
    generate_synthetic,
    infer_schema,
    load_csv,
    stratified_split,
)
from .constraints import (
    ClassConstraintTable,
    OneHotExclusive,
    OrderPair,
    ValidationResult,
    ValueRange,
    Violation,
    derive_class_constraints,
    validate,
)
from .patterns import (
    ClassPatternSequence,
    CombinationPattern,
    IntervalPattern,
    PatternConfig,
    fit_patterns,
    perturb,
    update_patterns,
)

__version__ = "0.1.0"
