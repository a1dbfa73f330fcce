"""Scenario files, the experiment runner, reports and the command line."""

from .report import CSV_COLUMNS, emit_report, merge_reports, report_to_csv, report_to_json
from .runner import Campaign, RunReport, ScenarioRunError, build_target, eval_inputs, run_scenario
from .scenario import Scenario, load_scenario, parse_scenario, sub_seed

__all__ = [
    "CSV_COLUMNS", "Campaign", "RunReport", "Scenario", "ScenarioRunError", "build_target",
    "emit_report", "eval_inputs", "load_scenario", "merge_reports", "parse_scenario",
    "report_to_csv", "report_to_json", "run_scenario", "sub_seed",
]
