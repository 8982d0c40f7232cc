"""Group fairness gaps for classifiers, with replicate variance and significance tests."""

__version__ = "0.1.0"

from .data import AuditDataset, Record, attach_predictions, load_dataset, validate, write_jsonl
from .metrics import (
    UNDEFINED,
    GapAuditor,
    MetricKind,
    accuracy,
    f1_per_class,
    gap,
    gap_table,
    group_parity,
    predictive_parity,
    support_counts,
    true_positive_rate,
)
from .sampling import SamplingPlan, run_plan, split, stratified_sample
from .stats import build_report, filter_classes, summarize, t_test
from .debias import DebiasConfig, GenderNeutralizer, neutralize, neutralize_dataset
from .synth import ConfusionPredictor, PopulationSpec, generate, surgeon_scenario, true_metrics

__all__ = [
    "AuditDataset", "Record", "attach_predictions", "load_dataset", "validate", "write_jsonl",
    "UNDEFINED", "GapAuditor", "MetricKind", "accuracy", "f1_per_class", "gap", "gap_table",
    "group_parity", "predictive_parity", "support_counts", "true_positive_rate",
    "SamplingPlan", "run_plan", "split", "stratified_sample",
    "build_report", "filter_classes", "summarize", "t_test",
    "DebiasConfig", "GenderNeutralizer", "neutralize", "neutralize_dataset",
    "ConfusionPredictor", "PopulationSpec", "generate", "surgeon_scenario", "true_metrics",
]
