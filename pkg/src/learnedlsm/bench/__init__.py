"""Datasets, workloads and reporting for exercising a store."""

from .competitive import LifetimeTrace, competitive_ratios, gen_lifetime_traces, offline_optimal_cost, wait_policy_cost
from .datasets import DATASET_KINDS, DatasetSpec, gen_dataset, load_order
from .runner import BenchReport, LevelFileReport, format_file_stats, load_keys, report_file_stats, run_workload
from .workloads import DISTRIBUTIONS, WorkloadSpec, gen_workload, value_for

__all__ = [
    "BenchReport",
    "DATASET_KINDS",
    "DISTRIBUTIONS",
    "DatasetSpec",
    "LevelFileReport",
    "LifetimeTrace",
    "WorkloadSpec",
    "competitive_ratios",
    "format_file_stats",
    "gen_dataset",
    "gen_lifetime_traces",
    "gen_workload",
    "load_keys",
    "load_order",
    "offline_optimal_cost",
    "report_file_stats",
    "run_workload",
    "value_for",
    "wait_policy_cost",
]
