"""Cost model, SA queue simulation and host microbenchmarks."""

from .costs import (CostParameters, CostRow, LatencyConstants, OpCountFormula, PrimitiveTimings,
                    compose_rsf_time, compose_sf_time, cost_table, formula, load_cost_parameters,
                    paper_parameters, predict_sf_time, reduction_percent)
from .queue import QueueConfig, QueueReport, md1_mean_wait, simulate_queue, sweep

__all__ = [
    "CostParameters", "CostRow", "LatencyConstants", "OpCountFormula", "PrimitiveTimings",
    "compose_rsf_time", "compose_sf_time", "cost_table", "formula", "load_cost_parameters",
    "paper_parameters", "predict_sf_time", "reduction_percent",
    "QueueConfig", "QueueReport", "md1_mean_wait", "simulate_queue", "sweep",
]
