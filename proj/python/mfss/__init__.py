# SPDX-License-Identifier: Apache-2.0
"""Multi-fidelity stratified sampling for rare-event structural reliability."""

from ._core import (
    Error,
    budget_allocation,
    consequence,
    convergence_index,
    equivalent_count,
    gss_estimate,
    mfmc_stratum_estimate,
    mfmc_variance,
    mfss_aggregate,
    optimal_a,
    optimal_ratio,
    pod_basis,
    probabilities_from_counts,
    run_baseline_gss,
    run_estimate,
    run_oracle,
    run_phase1,
    run_report,
    run_train,
    simulate,
    speedup,
    wavedec,
    waverec,
)

__all__ = [
    "Error",
    "budget_allocation",
    "consequence",
    "convergence_index",
    "equivalent_count",
    "gss_estimate",
    "mfmc_stratum_estimate",
    "mfmc_variance",
    "mfss_aggregate",
    "optimal_a",
    "optimal_ratio",
    "pod_basis",
    "probabilities_from_counts",
    "run_baseline_gss",
    "run_estimate",
    "run_oracle",
    "run_phase1",
    "run_report",
    "run_train",
    "simulate",
    "speedup",
    "wavedec",
    "waverec",
]
