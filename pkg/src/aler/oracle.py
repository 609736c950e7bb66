"""Labeling oracles: ground truth for unattended runs, a task queue for humans.

Every answered pair charges the shared budget exactly once; the queue gives
exactly-once answer semantics under concurrent submitters.
"""

from __future__ import annotations

import threading
import time
from dataclasses import dataclass, field

from .ingest import MatchSet, RecordCollection


class BudgetExhaustedError(Exception):
    """The hard labeling cap was reached; carries (pair, label) answers
    obtained before the cap was hit."""

    def __init__(self, message: str, partial: list[tuple[tuple[str, str], int]] | None = None):
        super().__init__(message)
        self.partial = partial or []


class TaskQueueError(Exception):
    pass


@dataclass
class OracleBudget:
    hard_cap: int | None = None
    consumed: int = 0
    _lock: threading.Lock = field(default_factory=threading.Lock, repr=False)

    def charge(self) -> int:
        """Consume one label or raise without changing the counter."""
        with self._lock:
            if self.hard_cap is not None and self.consumed >= self.hard_cap:
                raise BudgetExhaustedError(f"labeling budget of {self.hard_cap} exhausted")
            self.consumed += 1
            return self.consumed

    @property
    def remaining(self) -> int | None:
        if self.hard_cap is None:
            return None
        return max(self.hard_cap - self.consumed, 0)

    @property
    def exhausted(self) -> bool:
        return self.hard_cap is not None and self.consumed >= self.hard_cap


def ground_truth_label(pair: tuple[str, str], truth: MatchSet, budget: OracleBudget) -> int:
    """1 iff the pair is a true match; charges the budget."""
    budget.charge()
    return 1 if pair in truth else 0


class GroundTruthOracle:
    """Perfect oracle backed by the planted or benchmark match set."""

    def __init__(self, truth: MatchSet, budget: OracleBudget):
        self.truth = truth
        self.budget = budget

    def label_pairs(self, pairs: list[tuple[str, str]], provenance: str = "") -> list[int]:
        """Labels in pair order; raises BudgetExhaustedError carrying the
        (pair, label) answers obtained before the cap was hit."""
        answers: list[int] = []
        for pair in pairs:
            try:
                answers.append(ground_truth_label(pair, self.truth, self.budget))
            except BudgetExhaustedError as exc:
                raise BudgetExhaustedError(str(exc), partial=list(zip(pairs, answers))) from None
        return answers


@dataclass
class LabelTask:
    task_id: int
    pair: tuple[str, str]
    r_attributes: list[tuple[str, str]]
    s_attributes: list[tuple[str, str]]
    provenance: str
    status: str = "pending"
    answer: int | None = None


class LabelQueue:
    """Pending pair tasks shared between the training loop and HTTP handlers."""

    def __init__(self, records_r: RecordCollection, records_s: RecordCollection,
                 budget: OracleBudget):
        self.records_r = records_r
        self.records_s = records_s
        self.budget = budget
        self._tasks: dict[int, LabelTask] = {}
        self._pending_pairs: dict[tuple[str, str], int] = {}
        self._next_id = 1
        self._cond = threading.Condition()

    def _attributes(self, collection: RecordCollection, record_id: str) -> list[tuple[str, str]]:
        rec = collection.records[record_id]
        return list(zip(collection.schema, rec.values))

    def enqueue_tasks(self, pairs: list[tuple[str, str]], provenance: str = "") -> list[int]:
        with self._cond:
            for pair in pairs:
                if pair in self._pending_pairs:
                    raise TaskQueueError(f"pair {pair} is already pending")
            ids = []
            for pair in pairs:
                task = LabelTask(
                    task_id=self._next_id,
                    pair=pair,
                    r_attributes=self._attributes(self.records_r, pair[0]),
                    s_attributes=self._attributes(self.records_s, pair[1]),
                    provenance=provenance,
                )
                self._tasks[task.task_id] = task
                self._pending_pairs[pair] = task.task_id
                ids.append(task.task_id)
                self._next_id += 1
            self._cond.notify_all()
            return ids

    def pending(self, limit: int | None = None) -> list[LabelTask]:
        with self._cond:
            out = [t for t in self._tasks.values() if t.status == "pending"]
            out.sort(key=lambda t: t.task_id)
            return out[:limit] if limit is not None else out

    def get(self, task_id: int) -> LabelTask:
        with self._cond:
            if task_id not in self._tasks:
                raise TaskQueueError(f"unknown task id {task_id}")
            return self._tasks[task_id]

    def submit_label(self, task_id: int, answer: int) -> dict:
        """Answer a pending task; charges the budget; exactly-once."""
        if answer not in (0, 1):
            raise TaskQueueError(f"label must be 0 or 1, got {answer!r}")
        with self._cond:
            if task_id not in self._tasks:
                raise TaskQueueError(f"unknown task id {task_id}")
            task = self._tasks[task_id]
            if task.status == "answered":
                raise TaskQueueError(f"task {task_id} already answered")
            consumed = self.budget.charge()  # raises without mutating on exhaustion
            task.status = "answered"
            task.answer = answer
            del self._pending_pairs[task.pair]
            self._cond.notify_all()
            return {"consumed": consumed, "remaining": self.budget.remaining}

    def wait_for(self, task_ids: list[int], timeout: float | None) -> list[int]:
        """Block until every task is answered; raises on timeout or when the
        budget is exhausted while tasks are still pending."""
        end = None if timeout is None else time.monotonic() + timeout
        with self._cond:
            while True:
                unanswered = [t for t in task_ids if self._tasks[t].status != "answered"]
                if not unanswered:
                    return [self._tasks[t].answer for t in task_ids]
                if self.budget.exhausted:
                    partial = [(self._tasks[t].pair, self._tasks[t].answer) for t in task_ids
                               if self._tasks[t].status == "answered"]
                    raise BudgetExhaustedError(
                        f"budget exhausted with {len(unanswered)} tasks pending", partial=partial)
                wait = None if end is None else end - time.monotonic()
                if wait is not None and wait <= 0:
                    raise TaskQueueError(f"timed out waiting for {len(unanswered)} labels")
                self._cond.wait(timeout=wait)


class HumanOracle:
    """Oracle facade that enqueues pairs and blocks until a human answers."""

    def __init__(self, queue: LabelQueue, timeout: float | None = None):
        self.queue = queue
        self.budget = queue.budget
        self.timeout = timeout

    def label_pairs(self, pairs: list[tuple[str, str]], provenance: str = "") -> list[int]:
        if not pairs:
            return []
        ids = self.queue.enqueue_tasks(pairs, provenance)
        answers = self.queue.wait_for(ids, self.timeout)
        return answers
