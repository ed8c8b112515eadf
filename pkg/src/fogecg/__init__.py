"""Fog-layer ECG monitoring: synthetic acquisition, HRV analysis, store-and-forward sync."""

__version__ = "0.1.0"

from .delineation import NormalRanges, classify, delineate, summarize_periods
from .evaluation import percent_error, power_budget, range_error, table_summary
from .fog import AlertSink, FogConfig, FogNode, dispatch_alerts, transition
from .hrv import PeakDetectionConfig, assess_vitals, compute_measures, detect_peaks
from .netsim import CloudStore, LinkModel, bandwidth, reassemble
from .signal import AdcConfig, EcgSynthParams, SampleStream, load_csv, quantize, synthesize, write_csv

__all__ = [
    "AdcConfig",
    "AlertSink",
    "CloudStore",
    "EcgSynthParams",
    "FogConfig",
    "FogNode",
    "LinkModel",
    "NormalRanges",
    "PeakDetectionConfig",
    "SampleStream",
    "assess_vitals",
    "bandwidth",
    "classify",
    "compute_measures",
    "delineate",
    "detect_peaks",
    "dispatch_alerts",
    "load_csv",
    "percent_error",
    "power_budget",
    "quantize",
    "range_error",
    "reassemble",
    "summarize_periods",
    "synthesize",
    "table_summary",
    "transition",
    "write_csv",
]
