"""Trace reconstruction toolkit: channels, mean traces, channel polynomials,
Littlewood polynomial experiments and mean-based decoding."""

from .channel import ChannelParams, SourceString, TraceBatch, sample_traces
from .meantrace import (
    MeanTrace,
    empirical_mean_trace,
    exact_mean_trace_deletion,
    exact_mean_trace_general,
)
from .reconstruct import (
    ReconstructionConfig,
    ReconstructionReport,
    end_to_end,
    epsilon_del_bruteforce,
    reconstruct_bruteforce,
    reconstruct_mean_based,
)

__version__ = "0.1.0"

__all__ = [
    "ChannelParams", "MeanTrace", "ReconstructionConfig", "ReconstructionReport",
    "SourceString", "TraceBatch", "empirical_mean_trace", "end_to_end",
    "epsilon_del_bruteforce", "exact_mean_trace_deletion", "exact_mean_trace_general",
    "reconstruct_bruteforce", "reconstruct_mean_based", "sample_traces",
]
