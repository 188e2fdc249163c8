"""Deterministic seeded simulation of transactions over per-object data managers.

One logical event loop in integer ticks.  Transactions acquire read/write
locks on their access sets in ascending object order (which rules out
deadlock), observe each data manager's checkpoint index as a lock is granted,
perform seeded work, and commit atomically.  At commit the transaction
manager sends one message per accessed object, carrying the maximum observed
index, with a seeded delay per message: written objects get a commit message
that applies the new version, read-only ones get a lock-release notification.
Each lock is held until its data manager processes that message, so
per-object access order follows commit order even though deliveries
interleave.  Data manager timers drive basic checkpoints while an object has
no write in flight; message deliveries drive the forced-checkpoint rules of
the configured protocol.

A run is a pure function of (workload, config): identical inputs give
byte-identical traces.
"""

from __future__ import annotations

import heapq
import json
import random
from collections import deque
from dataclasses import dataclass, fields
from typing import Any, Mapping

from .model import Execution, Transaction, ValidatedExecution, validate_execution
from .protocol import (
    PROTOCOL_A,
    PROTOCOL_B,
    CheckpointRecord,
    CommitMessage,
    DataManagerState,
    dm_on_commit_a,
    dm_on_commit_b,
    dm_on_release_a,
    dm_on_release_b,
    dm_on_timer,
    initial_record,
    tm_commit_metadata,
)
from .scenario import WorkloadSpec, workload_from_dict, workload_transactions

EV_TXN_BEGIN = "txn_begin"
EV_LOCK_ACQUIRED = "lock_acquired"
EV_TXN_COMMIT = "txn_commit"
EV_COMMIT_MSG = "commit_msg_delivered"
EV_TIMER = "timer_expired"


class SimulationError(ValueError):
    pass


@dataclass(frozen=True)
class SimConfig:
    seed: int
    num_objects: int
    protocol: str = PROTOCOL_A
    z_param: int = 1
    message_delay_range: tuple[int, int] = (1, 10)
    timer_period: int = 25
    timer_jitter: int = 0
    arrival_gap_range: tuple[int, int] = (0, 5)
    work_delay_range: tuple[int, int] = (1, 5)
    object_placement: tuple[int, ...] | None = None

    def __post_init__(self) -> None:
        if self.protocol not in (PROTOCOL_A, PROTOCOL_B):
            raise SimulationError(f"unknown protocol {self.protocol!r}")
        if self.z_param < 1:
            raise SimulationError("z_param must be at least 1")
        if self.timer_period < 1:
            raise SimulationError("timer_period must be at least 1")
        if self.timer_jitter < 0:
            raise SimulationError("timer_jitter must be non-negative")
        for name in ("message_delay_range", "arrival_gap_range", "work_delay_range"):
            lo, hi = getattr(self, name)
            if not 0 <= lo <= hi:
                raise SimulationError(f"{name} must satisfy 0 <= lo <= hi")
        if self.object_placement is not None and len(self.object_placement) != self.num_objects:
            raise SimulationError("object_placement must name a site per object")

    def placement(self) -> tuple[int, ...]:
        return self.object_placement or tuple(range(self.num_objects))


@dataclass(frozen=True)
class SimEvent:
    time: int
    seq: int
    kind: str
    data: tuple[tuple[str, int], ...]

    def to_dict(self) -> dict[str, int | str]:
        out: dict[str, int | str] = {"time": self.time, "seq": self.seq, "kind": self.kind}
        out.update(self.data)
        return out


@dataclass(frozen=True)
class Trace:
    config: SimConfig
    workload: WorkloadSpec
    execution: ValidatedExecution
    events: tuple[SimEvent, ...]
    checkpoint_log: tuple[CheckpointRecord, ...]

    def to_dict(self) -> dict[str, Any]:
        cfg = {f.name: getattr(self.config, f.name) for f in fields(self.config)}
        cfg["message_delay_range"] = list(self.config.message_delay_range)
        cfg["arrival_gap_range"] = list(self.config.arrival_gap_range)
        cfg["work_delay_range"] = list(self.config.work_delay_range)
        cfg["object_placement"] = list(self.config.placement())
        wl = {f.name: getattr(self.workload, f.name) for f in fields(self.workload)}
        wl["ops_per_txn"] = list(self.workload.ops_per_txn)
        return {
            "schema_version": 1,
            "config": cfg,
            "workload": wl,
            "execution": {
                "objects": self.execution.num_objects,
                "transactions": [
                    {"id": t.id, "reads": sorted(t.read_set), "writes": sorted(t.write_set)}
                    for t in self.execution.transactions
                ],
                "commit_order": list(self.execution.commit_order),
            },
            "events": [e.to_dict() for e in self.events],
            "checkpoint_log": [
                {"obj": r.obj, "index": r.index, "kind": r.kind, "version": r.version, "time": r.time}
                for r in self.checkpoint_log
            ],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"

    @staticmethod
    def from_dict(data: Mapping[str, Any]) -> "Trace":
        if data.get("schema_version") != 1:
            raise SimulationError("unsupported trace schema version")
        cfg = dict(data["config"])
        cfg["message_delay_range"] = tuple(cfg["message_delay_range"])
        cfg["arrival_gap_range"] = tuple(cfg["arrival_gap_range"])
        cfg["work_delay_range"] = tuple(cfg["work_delay_range"])
        cfg["object_placement"] = tuple(cfg["object_placement"])
        config = SimConfig(**cfg)
        workload = workload_from_dict(data["workload"])
        exe = data["execution"]
        execution = validate_execution(
            Execution(
                exe["objects"],
                tuple(Transaction.make(t["id"], t["reads"], t["writes"]) for t in exe["transactions"]),
                tuple(exe["commit_order"]),
            )
        )
        events = tuple(
            SimEvent(
                e["time"],
                e["seq"],
                e["kind"],
                tuple(sorted((k, v) for k, v in e.items() if k not in ("time", "seq", "kind"))),
            )
            for e in data["events"]
        )
        log = tuple(
            CheckpointRecord(r["obj"], r["index"], r["kind"], r["version"], r["time"])
            for r in data["checkpoint_log"]
        )
        return Trace(config, workload, execution, events, log)

    @staticmethod
    def from_json(text: str) -> "Trace":
        return Trace.from_dict(json.loads(text))


class _Lock:
    __slots__ = ("writer", "readers", "queue")

    def __init__(self) -> None:
        self.writer: int | None = None
        self.readers: set[int] = set()
        self.queue: deque[tuple[int, str]] = deque()

    def free_for(self, mode: str) -> bool:
        if mode == "write":
            return self.writer is None and not self.readers
        return self.writer is None


class _TxnRun:
    __slots__ = ("txn", "order", "pos", "observed", "commit_scheduled")

    def __init__(self, txn: Transaction):
        self.txn = txn
        self.order = sorted(txn.access_set)
        self.pos = 0
        self.observed: dict[int, int] = {}
        self.commit_scheduled = False

    def mode(self, obj: int) -> str:
        return "write" if obj in self.txn.write_set else "read"


class _Simulation:
    def __init__(self, workload: WorkloadSpec, config: SimConfig):
        if workload.num_objects != config.num_objects:
            raise SimulationError("workload and config disagree on object count")
        self.workload = workload
        self.config = config
        self.rng = random.Random(config.seed)
        self.txns = {t.id: _TxnRun(t) for t in workload_transactions(workload)}
        self.locks = [_Lock() for _ in range(config.num_objects)]
        self.dms = [DataManagerState(obj) for obj in range(config.num_objects)]
        self.timer_gen = [0] * config.num_objects
        self.heap: list[tuple[int, int, str, tuple]] = []
        self.seq = 0
        self.now = 0
        self.events: list[SimEvent] = []
        self.log: list[CheckpointRecord] = [initial_record(o) for o in range(config.num_objects)]
        self.commit_order: list[int] = []
        self.outstanding_msgs = 0

    # -- plumbing --------------------------------------------------------

    def _schedule(self, time: int, kind: str, payload: tuple) -> None:
        heapq.heappush(self.heap, (time, self.seq, kind, payload))
        self.seq += 1

    def _record(self, kind: str, **data: int) -> None:
        self.events.append(
            SimEvent(self.now, len(self.events), kind, tuple(sorted(data.items())))
        )

    def _next_deadline(self) -> int:
        jitter = self.rng.randint(0, self.config.timer_jitter) if self.config.timer_jitter else 0
        return self.now + self.config.timer_period + jitter

    def _work_done(self) -> bool:
        return len(self.commit_order) == len(self.txns) and self.outstanding_msgs == 0

    # -- locking -----------------------------------------------------------

    def _grant(self, txn_id: int, obj: int) -> None:
        run = self.txns[txn_id]
        mode = run.mode(obj)
        lock = self.locks[obj]
        if mode == "write":
            lock.writer = txn_id
        else:
            lock.readers.add(txn_id)
        run.observed[obj] = self.dms[obj].index
        self._record(EV_LOCK_ACQUIRED, txn=txn_id, obj=obj, write=int(mode == "write"))
        run.pos += 1

    def _try_acquire(self, run: _TxnRun) -> bool:
        """Request the next lock; True when granted immediately."""
        obj = run.order[run.pos]
        lock = self.locks[obj]
        if not lock.queue and lock.free_for(run.mode(obj)):
            self._grant(run.txn.id, obj)
            return True
        lock.queue.append((run.txn.id, run.mode(obj)))
        return False

    def _pump(self, obj: int) -> None:
        """Grant queued requests that became compatible, in FIFO order."""
        lock = self.locks[obj]
        while lock.queue:
            txn_id, mode = lock.queue[0]
            if not lock.free_for(mode):
                break
            lock.queue.popleft()
            self._grant(txn_id, obj)
            self._advance(self.txns[txn_id])

    def _advance(self, run: _TxnRun) -> None:
        while run.pos < len(run.order):
            if not self._try_acquire(run):
                return
        if not run.commit_scheduled:
            run.commit_scheduled = True
            delay = self.rng.randint(*self.config.work_delay_range)
            self._schedule(self.now + delay, EV_TXN_COMMIT, (run.txn.id,))

    # -- event handlers ------------------------------------------------------

    def _on_begin(self, txn_id: int) -> None:
        self._record(EV_TXN_BEGIN, txn=txn_id)
        self._advance(self.txns[txn_id])

    def _on_commit(self, txn_id: int) -> None:
        run = self.txns[txn_id]
        self.commit_order.append(txn_id)
        tm_commit_metadata(run.txn, run.observed)  # validates coverage
        max_index = max(run.observed.values())
        self._record(EV_TXN_COMMIT, txn=txn_id, max_index=max_index)
        lo, hi = self.config.message_delay_range
        # Commit metadata rides every lock release this transaction owes:
        # commit messages to written objects, release notifications to
        # read-only ones.  Locks free only when the message lands, so
        # per-object processing order matches commit order.
        for obj in sorted(run.txn.access_set):
            self.outstanding_msgs += 1
            apply_write = int(obj in run.txn.write_set)
            self._schedule(
                self.now + self.rng.randint(lo, hi), EV_COMMIT_MSG, (txn_id, max_index, obj, apply_write)
            )

    def _on_delivery(self, txn_id: int, max_index: int, obj: int, apply_write: int) -> None:
        self.outstanding_msgs -= 1
        msg = CommitMessage(txn_id, max_index, obj)
        deadline = self._next_deadline()
        protocol_a = self.config.protocol == PROTOCOL_A
        if apply_write:
            step = dm_on_commit_a if protocol_a else dm_on_commit_b
        else:
            step = dm_on_release_a if protocol_a else dm_on_release_b
        if protocol_a:
            dm, record = step(self.dms[obj], msg, self.now, deadline)
        else:
            dm, record = step(self.dms[obj], msg, self.config.z_param, self.now, deadline)
        self.dms[obj] = dm
        if record is not None:
            self.log.append(record)
            self.timer_gen[obj] += 1
            self._schedule(dm.timer_deadline, EV_TIMER, (obj, self.timer_gen[obj]))
        self._record(
            EV_COMMIT_MSG,
            txn=txn_id,
            obj=obj,
            max_index=max_index,
            apply=apply_write,
            forced=int(record is not None),
        )
        if apply_write:
            self.locks[obj].writer = None
        else:
            self.locks[obj].readers.discard(txn_id)
        self._pump(obj)

    def _on_timer(self, obj: int, gen: int) -> None:
        if gen != self.timer_gen[obj] or self._work_done():
            return
        deadline = self._next_deadline()
        if self.locks[obj].writer is not None:
            # Basic checkpoints happen only while the data manager is idle: a
            # write in flight has already observed the current index, so a new
            # checkpoint here would not be reflected in that writer's metadata.
            self._schedule(deadline, EV_TIMER, (obj, gen))
            return
        z = self.config.z_param if self.config.protocol == PROTOCOL_B else None
        dm, record = dm_on_timer(self.dms[obj], self.now, deadline, z)
        self.dms[obj] = dm
        self.log.append(record)
        self._record(EV_TIMER, obj=obj, index=dm.index)
        self._schedule(dm.timer_deadline, EV_TIMER, (obj, gen))

    # -- main loop -------------------------------------------------------

    def run(self) -> Trace:
        clock = 0
        lo, hi = self.config.arrival_gap_range
        for txn_id in sorted(self.txns):
            clock += self.rng.randint(lo, hi)
            self._schedule(clock, EV_TXN_BEGIN, (txn_id,))
        for obj in range(self.config.num_objects):
            deadline = self._next_deadline()
            self.dms[obj] = DataManagerState(obj, timer_deadline=deadline)
            self._schedule(deadline, EV_TIMER, (obj, 0))
        while self.heap:
            time, _, kind, payload = heapq.heappop(self.heap)
            self.now = time
            if kind == EV_TXN_BEGIN:
                self._on_begin(*payload)
            elif kind == EV_TXN_COMMIT:
                self._on_commit(*payload)
            elif kind == EV_COMMIT_MSG:
                self._on_delivery(*payload)
            else:
                self._on_timer(*payload)
        execution = validate_execution(
            Execution(
                self.config.num_objects,
                tuple(self.txns[i].txn for i in sorted(self.txns)),
                tuple(self.commit_order),
            )
        )
        for obj in range(self.config.num_objects):
            count = sum(1 for t in self.txns.values() if obj in t.txn.write_set)
            if self.dms[obj].version != count:
                raise SimulationError(f"object {obj}: undelivered writes at end of run")
        return Trace(
            self.config,
            self.workload,
            execution,
            tuple(self.events),
            tuple(self.log),
        )


def run_simulation(workload: WorkloadSpec, config: SimConfig) -> Trace:
    """Simulate the workload under the configured protocol; fully deterministic."""
    return _Simulation(workload, config).run()
