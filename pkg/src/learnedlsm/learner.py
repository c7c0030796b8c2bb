"""Wait-then-learn scheduling of file and level models.

A new file gets a timer that fires after ``t_wait``. If the file is still
live when it fires, the cost-benefit analyzer is asked for a verdict and a
learning task may be queued. Tasks are served highest priority first. A
trained model is attached only if the file survived training.

Files the analyzer skips are re-checked later with exponential backoff,
since the lookups they serve in the meantime raise their benefit estimate.
"""

from __future__ import annotations

import heapq
import itertools
import logging
import threading
from bisect import bisect_right
from dataclasses import dataclass, field
from time import perf_counter
from typing import Callable, Optional, Protocol, Sequence

from .cba import CbaDecision, CostBenefitAnalyzer, Verdict, decide
from .errors import StoreError, UnsupportedError
from .plr import PLRModel, fit_keys
from .sstable import SSTableMeta, Table

log = logging.getLogger(__name__)

FILE = "file"
LEVEL = "level"
OFF = "off"
LEARNING_MODES = (FILE, LEVEL, OFF)

CBA = "cba"
ALWAYS = "always"
OFFLINE = "offline"
CBA_MODES = (CBA, ALWAYS, OFFLINE)

MAX_BACKOFF_STEPS = 3
MIN_RECHECK = 0.001


@dataclass(order=True)
class LearningTask:
    sort_key: tuple = field(init=False, repr=False)
    kind: str = field(compare=False)
    target: int = field(compare=False)
    priority: float = field(compare=False)
    enqueued_at: float = field(compare=False)
    seq: int = field(compare=False, default=0)
    epoch: int = field(compare=False, default=0)

    def __post_init__(self) -> None:
        self.sort_key = (-self.priority, self.seq)


@dataclass
class LevelModel:
    """One model over the concatenated records of a sorted level."""

    plr: PLRModel
    files: tuple[SSTableMeta, ...]
    cumulative_counts: list[int]
    epoch: int

    @classmethod
    def build(cls, plr: PLRModel, files: Sequence[SSTableMeta], epoch: int) -> "LevelModel":
        cum = list(itertools.accumulate(m.record_count for m in files))
        return cls(plr, tuple(files), cum, epoch)

    def locate(self, global_pos: int) -> tuple[int, int]:
        """``(file index, local offset)`` of a global record position."""
        i = bisect_right(self.cumulative_counts, global_pos)
        if i >= len(self.files) or global_pos < 0:
            raise IndexError(global_pos)
        start = self.cumulative_counts[i - 1] if i else 0
        return i, global_pos - start

    def file_start(self, i: int) -> int:
        return self.cumulative_counts[i - 1] if i else 0


class LearnerHost(Protocol):
    """What the learner needs from the store."""

    def live_meta(self, file_id: int) -> Optional[SSTableMeta]: ...

    def table_for(self, meta: SSTableMeta) -> Table: ...

    def attach_model(self, meta: SSTableMeta, model: PLRModel) -> bool: ...

    def level_snapshot(self, level: int) -> tuple[int, tuple[SSTableMeta, ...]]: ...

    def install_level_model(self, level: int, model: LevelModel) -> bool: ...


class Learner:
    def __init__(
        self,
        host: LearnerHost,
        analyzer: CostBenefitAnalyzer,
        clock,
        *,
        t_wait: Optional[float],
        delta: int,
        learning_mode: str = FILE,
        cba_mode: str = CBA,
        recheck: bool = True,
    ):
        if learning_mode not in LEARNING_MODES:
            raise ValueError(f"learning_mode must be one of {LEARNING_MODES}")
        if cba_mode not in CBA_MODES:
            raise ValueError(f"cba_mode must be one of {CBA_MODES}")
        self.host = host
        self.analyzer = analyzer
        self.clock = clock
        self.t_wait = t_wait  # None means per-file estimated build time
        self.delta = delta
        self.learning_mode = learning_mode
        self.cba_mode = cba_mode
        self.recheck = recheck
        # Test hook: called with the target after training, before attaching.
        self.before_attach: Optional[Callable[[object], None]] = None

        self._lock = threading.Lock()
        self._wake = threading.Event()
        self._timers: list[tuple[float, int, str, int, int, int]] = []
        self._queue: list[LearningTask] = []
        self._queued: set[tuple[str, int]] = set()
        self._counter = itertools.count()
        self._active = False

        self.learn_seconds = 0.0
        self.files_learned = 0
        self.levels_learned = 0
        self.level_failures = 0
        self.discarded = 0
        self.decisions = {v: 0 for v in Verdict}
        self.failures = 0

    @property
    def enabled(self) -> bool:
        return self.learning_mode != OFF and self.cba_mode != OFFLINE

    def wait_for(self, records: int) -> float:
        if self.t_wait is None:
            return self.analyzer.estimate_cost(records)
        return self.t_wait

    # -- events --------------------------------------------------------

    def on_file_created(self, meta: SSTableMeta) -> None:
        if not self.enabled:
            return
        if self.learning_mode == LEVEL and meta.level > 0:
            return
        self._schedule(FILE, meta.file_id, self.clock.now() + self.wait_for(meta.record_count), 0)

    def on_level_changed(self, level: int, epoch: int, records: int) -> None:
        if not self.enabled or self.learning_mode != LEVEL or level == 0 or records == 0:
            return
        self._schedule(LEVEL, level, self.clock.now() + self.wait_for(records), 0, epoch)

    def _schedule(self, kind: str, target: int, due: float, attempt: int, epoch: int = 0) -> None:
        with self._lock:
            heapq.heappush(self._timers, (due, next(self._counter), kind, target, attempt, epoch))
        self._wake.set()

    # -- timers and queue ----------------------------------------------

    def due(self, now: float) -> bool:
        timers = self._timers
        return bool(timers) and timers[0][0] <= now

    def next_due(self) -> Optional[float]:
        timers = self._timers
        return timers[0][0] if timers else None

    def poll(self, now: Optional[float] = None) -> int:
        """Fire due timers; returns the number of tasks queued."""
        if not self._timers:
            return 0
        if now is None:
            now = self.clock.now()
        queued = 0
        while True:
            with self._lock:
                if not self._timers or self._timers[0][0] > now:
                    break
                due, _, kind, target, attempt, epoch = heapq.heappop(self._timers)
            if kind == FILE:
                queued += self._fire_file(target, attempt, now)
            else:
                queued += self._fire_level(target, epoch, now)
        return queued

    def _fire_file(self, file_id: int, attempt: int, now: float) -> int:
        meta = self.host.live_meta(file_id)
        if meta is None or meta.model is not None:
            return 0
        if self.cba_mode == ALWAYS:
            decision = CbaDecision(Verdict.LEARN, 0.0, 0.0)
        else:
            decision = self.analyzer.should_learn(file_id)
        self.decisions[decision.verdict] += 1
        if decision.learn:
            return self._enqueue(FILE, file_id, max(0.0, decision.priority), now)
        if self.recheck:
            step = min(attempt, MAX_BACKOFF_STEPS)
            base = max(self.wait_for(meta.record_count), self.analyzer.estimate_cost(meta.record_count), MIN_RECHECK)
            self._schedule(FILE, file_id, now + base * (2 << step), attempt + 1)
        return 0

    def _fire_level(self, level: int, epoch: int, now: float) -> int:
        cur_epoch, files = self.host.level_snapshot(level)
        if cur_epoch != epoch or not files:
            return 0
        if self.cba_mode == ALWAYS:
            decision = CbaDecision(Verdict.LEARN, 0.0, 0.0)
        else:
            decision = self._level_decision(files)
        self.decisions[decision.verdict] += 1
        if not decision.learn:
            return 0
        return self._enqueue(LEVEL, level, max(0.0, decision.priority), now, epoch)

    def _level_decision(self, files: Sequence[SSTableMeta]) -> CbaDecision:
        total_b = 0.0
        for m in files:
            b = self.analyzer.estimate_benefit(m.file_id)
            if b is None:
                total_b = None
                break
            total_b += b
        cost = self.analyzer.estimate_cost(sum(m.record_count for m in files))
        return decide(total_b, cost)

    def _enqueue(self, kind: str, target: int, priority: float, now: float, epoch: int = 0) -> int:
        with self._lock:
            if (kind, target) in self._queued and kind == FILE:
                return 0
            self._queued.add((kind, target))
            heapq.heappush(self._queue, LearningTask(kind, target, priority, now, next(self._counter), epoch))
        self._wake.set()
        return 1

    def pending(self) -> list[LearningTask]:
        """Queued tasks, highest priority first."""
        with self._lock:
            return sorted(self._queue)

    def timers_pending(self) -> int:
        return len(self._timers)

    def pop_task(self) -> Optional[LearningTask]:
        with self._lock:
            if not self._queue:
                return None
            task = heapq.heappop(self._queue)
            self._queued.discard((task.kind, task.target))
            return task

    @property
    def busy(self) -> bool:
        """Tasks queued or one in training."""
        return bool(self._queue) or self._active

    def run_one(self) -> bool:
        task = self.pop_task()
        if task is None:
            return False
        self._active = True
        try:
            if task.kind == FILE:
                meta = self.host.live_meta(task.target)
                if meta is not None:
                    self.learn_file(meta)
            else:
                self.learn_level(task.target, task.epoch)
        finally:
            self._active = False
        return True

    def run_pending(self, limit: Optional[int] = None) -> int:
        done = 0
        while (limit is None or done < limit) and self.run_one():
            done += 1
        return done

    # -- training ------------------------------------------------------

    def learn_file(self, meta: SSTableMeta) -> bool:
        if meta.model is not None:
            return False
        t0 = perf_counter()
        try:
            keys = self.host.table_for(meta).int_keys()
            model = fit_keys(keys, self.delta)
        except (StoreError, ValueError, OSError) as exc:
            log.warning("learning file %d failed: %s", meta.file_id, exc)
            self.failures += 1
            return False
        if self.before_attach is not None:
            self.before_attach(meta)
        attached = self.host.attach_model(meta, model)
        self.learn_seconds += perf_counter() - t0
        if attached:
            self.files_learned += 1
        else:
            self.discarded += 1
        return attached

    def learn_level(self, level: int, epoch: Optional[int] = None) -> Optional[LevelModel]:
        if level == 0:
            raise UnsupportedError("level 0 files overlap; it cannot carry a level model")
        t0 = perf_counter()
        cur_epoch, files = self.host.level_snapshot(level)
        if not files or (epoch is not None and epoch != cur_epoch):
            self.level_failures += 1
            return None
        keys: list[int] = []
        for m in files:
            keys.extend(self.host.table_for(m).int_keys())
        lm = LevelModel.build(fit_keys(keys, self.delta), files, cur_epoch)
        if self.before_attach is not None:
            self.before_attach(lm)
        ok = self.host.install_level_model(level, lm)
        self.learn_seconds += perf_counter() - t0
        if ok:
            self.levels_learned += 1
            return lm
        self.level_failures += 1
        return None

    # -- background worker ---------------------------------------------

    def run_background(self, stop: threading.Event, idle: float = 0.05) -> None:
        while not stop.is_set():
            self.poll()
            if self.run_one():
                continue
            due = self.next_due()
            timeout = idle if due is None else max(0.0, min(idle, due - self.clock.now()))
            self._wake.wait(timeout)
            self._wake.clear()
