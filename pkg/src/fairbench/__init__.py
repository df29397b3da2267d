"""Benchmarking bias mitigation methods for binary classification."""

from .bench import (
    PerformanceTable,
    RunRecord,
    TableSpec,
    infer_k,
    performance_table,
    run_benchmark,
    tradeoff_export,
)
from .data import (
    DualLabelConfig,
    SensitiveEncoding,
    TabularDataset,
    encode_sensitive,
    generate_dual_label,
    load_csv,
    split,
)
from .metrics import NOTIONS, accuracy, auroc, evaluate, statistic, violation
from .model import Scorer, TrainConfig, forward, init_scorer, train

__version__ = "0.1.0"
