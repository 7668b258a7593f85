"""Travel-diary derivation from smartphone location traces.

Raw fixes are validated, split at recording gaps and segmented into stops and
trips; trips become diary rows with times, destination address, mode and
distance. Diary and app rows can then be stacked in one schema
(:mod:`smartdiary.harmonize`) or combined at the estimate level
(:mod:`smartdiary.multisource`). :mod:`smartdiary.simulation` generates
synthetic days with known truth for checking the whole chain.
"""
from .kernels import BACKEND
from .trajectory import GeoPoint, Trace, haversine_m, read_traces, split_on_gaps, track_length_m, validate_trace
from .stops import Segmentation, Stop, StopParams, TripSegment, detect_stops, segment_trace
from .episodes import DiaryEntry, DistanceKind, Gazetteer, ModeThresholds, build_diary, infer_mode, reverse_geocode
from .harmonize import HarmonizedDataset, SourceTag, harmonize, mode_effect_report
from .multisource import apply_calibration, calibration_ratio, estimate_mean_distance, macro_integrate

__version__ = "0.1.0"

__all__ = [
    "BACKEND", "GeoPoint", "Trace", "haversine_m", "read_traces", "split_on_gaps", "track_length_m",
    "validate_trace", "Segmentation", "Stop", "StopParams", "TripSegment", "detect_stops", "segment_trace",
    "DiaryEntry", "DistanceKind", "Gazetteer", "ModeThresholds", "build_diary", "infer_mode",
    "reverse_geocode", "HarmonizedDataset", "SourceTag", "harmonize", "mode_effect_report",
    "apply_calibration", "calibration_ratio", "estimate_mean_distance", "macro_integrate",
]
