"""Invariance-quality testing toolkit.

Builds variance matrices from signal traces, measures 16 imagery features
per matrix, and trains tree-family assessors that map the resulting 80-dim
feature vectors to an invariant/variant verdict.  A synthetic model
repository generator makes the whole pipeline testable without any neural
networks; real-model traces come from the separate exporter package.
"""

from .trace import (
    CANONICAL_PLANES,
    FormatError,
    Modality,
    Position,
    SignalTrace,
    TraceError,
    TransformationFamily,
    ValidationError,
    plane_label,
    read_trace,
    validate_trace,
    write_trace,
)
from .varmat import (
    VarianceMatrix,
    compute_dif,
    compute_variance_matrix,
    concentration_report,
    hoeffding_bound,
    proportion_sweep,
    proposition2_check,
    subsample_matrix,
)
from .features import (
    FEATURE_NAMES,
    FeatureConfig,
    FeatureVector,
    assemble_vector,
    extract_all,
    proposition1_check,
)
from .assessors import (
    Assessor,
    CVReport,
    LabelledExample,
    baseline_fit,
    correlation_table,
    cross_validate,
    load_assessor,
    plain_accuracy,
    predict,
    robust_accuracy,
    save_assessor,
    train_adaboost,
    train_forest,
    train_linreg,
    train_tree,
)
from .synthrepo import SyntheticSpec, generate_repository, generate_trace, repository_examples
from .render import render_grid, render_matrix

__version__ = "0.1.0"
