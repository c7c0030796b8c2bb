"""Leveled LSM key-value store with learned per-file and per-level indexes."""

from .cba import CbaDecision, CostBenefitAnalyzer, FileStats, LevelStats, Verdict
from .clock import MonotonicClock, VirtualClock
from .engine import CompactionJob, MemTable, Options, Store, open_store
from .errors import CorruptionError, InvalidInputError, InvalidPointerError, StoreError, UnsupportedError
from .keys import decode_key, encode_key
from .learner import LearningTask, LevelModel
from .lookup import InternalLookupRecord
from .plr import PLRModel, PredictedRange, Segment, deserialize_model, predict, serialize_model, train_greedy_plr
from .sstable import SSTableMeta, ValuePointer
from .version import Version

__all__ = [
    "CbaDecision",
    "CompactionJob",
    "CorruptionError",
    "CostBenefitAnalyzer",
    "FileStats",
    "InternalLookupRecord",
    "InvalidInputError",
    "InvalidPointerError",
    "LearningTask",
    "LevelModel",
    "LevelStats",
    "MemTable",
    "MonotonicClock",
    "Options",
    "PLRModel",
    "PredictedRange",
    "SSTableMeta",
    "Segment",
    "Store",
    "StoreError",
    "UnsupportedError",
    "ValuePointer",
    "Verdict",
    "Version",
    "VirtualClock",
    "decode_key",
    "deserialize_model",
    "encode_key",
    "open_store",
    "predict",
    "serialize_model",
    "train_greedy_plr",
]
