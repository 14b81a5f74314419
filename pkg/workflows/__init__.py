from .metrics import MetricsError, MetricsReport, MetricsSummary, compute_metrics, confusion_matrix, summarize
from .mapping import PALETTE, map_to_bytes, predict_map, render_map
from .training import (
    EpochRecord,
    TrainingResult,
    TrainingWorkflow,
    build_model,
    check_compatible,
    evaluate,
    run_training,
)
from .gradient_check import GradientCheckRunner, SuiteResult, check_gradients, format_report
from .ablation import AblationKind, AblationRow, run_ablation, write_ablation_csv
from .acceptance import AcceptanceResult, AcceptanceRunner, format_acceptance

__all__ = [
    'MetricsError', 'MetricsReport', 'MetricsSummary', 'compute_metrics', 'confusion_matrix', 'summarize',
    'PALETTE', 'map_to_bytes', 'predict_map', 'render_map',
    'EpochRecord', 'TrainingResult', 'TrainingWorkflow', 'build_model', 'check_compatible', 'evaluate',
    'run_training',
    'GradientCheckRunner', 'SuiteResult', 'check_gradients', 'format_report',
    'AblationKind', 'AblationRow', 'run_ablation', 'write_ablation_csv',
    'AcceptanceResult', 'AcceptanceRunner', 'format_acceptance',
]
