"""Experiment plumbing: configuration, CSV ingestion, planted ground-truth
instances, the seed x k x threshold-grid experiment protocol, and report
emission."""

from .config import (
    ALGORITHMS,
    ConfigError,
    RunConfig,
    parse_config,
    resolve_z,
    theta_grid_values,
)
from .experiment import (
    evaluate_candidate,
    grid_candidate,
    run_experiment,
    score_reports,
)
from .io import (
    RunReport,
    emit_results,
    load_csv,
    report_from_dict,
    reports_to_csv,
    reports_to_json_lines,
)
from .planted import PlantedInstance, gen_planted

__all__ = [
    "ALGORITHMS",
    "ConfigError",
    "PlantedInstance",
    "RunConfig",
    "RunReport",
    "emit_results",
    "evaluate_candidate",
    "gen_planted",
    "grid_candidate",
    "load_csv",
    "parse_config",
    "report_from_dict",
    "reports_to_csv",
    "reports_to_json_lines",
    "resolve_z",
    "run_experiment",
    "score_reports",
    "theta_grid_values",
]
