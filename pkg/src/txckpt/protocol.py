"""Transaction-induced checkpointing protocols and their guarantee checks.

Every data manager keeps an index: the rank of its last checkpoint, starting
at 0 for the initial state.  Transaction managers piggyback, on each commit
message, the maximum index the transaction observed across the objects it
accessed.  Data managers take basic checkpoints on a timer and forced
checkpoints on commit messages:

* protocol A forces a checkpoint (of the pre-commit state) whenever its index
  is below the piggybacked maximum, adopting that maximum as the new index;

* protocol B coarsens coordination with a parameter z >= 1: it forces only
  when the piggybacked maximum, rounded down to a multiple of z, exceeds the
  current index, and that rounded value becomes the forced checkpoint's
  index.  The guard compares coordination epochs (index divided by z), so
  per-object indices stay strictly increasing even when basic checkpoints
  interleave, and the bookkeeping threshold (next multiple of z to react to)
  advances with every checkpoint whose index is a multiple of z.

With z = 1 protocol B forces checkpoints at exactly the same indices as
protocol A.

Commit metadata travels with every lock release the committing transaction
owes: write-set data managers receive it on the commit message that applies
the write, read-set data managers on the read-lock release notification.
Both apply the same forcing rule; only the write path advances the version.
Without the read path, a chain of serialization conflicts through a
read-write pair would not relay the maximum index, and the index-ordering
guarantees below fail.

Guarantees checked over a simulation trace: no checkpoint has a dependence
path to itself; a dependence path between checkpoints implies strictly
increasing protocol indices; equal-index assemblies (exact, and gap-filled
for protocol A) are consistent global checkpoints.  For protocol B all of
this is restricted to indices that are multiples of z.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import TYPE_CHECKING, Iterable, Mapping

from .dependence import CheckpointAnalysis, CheckpointPattern, ExecutionAnalysis
from .model import Transaction
from .theory import assemble_indexed_gc, is_consistent_global_state

if TYPE_CHECKING:  # pragma: no cover
    from .sim import Trace

PROTOCOL_A = "A"
PROTOCOL_B = "B"

KIND_INITIAL = "initial"
KIND_BASIC = "basic"
KIND_FORCED = "forced"


class ProtocolError(ValueError):
    pass


@dataclass(frozen=True)
class DataManagerState:
    """Checkpointing-relevant state of one object's data manager."""

    obj: int
    index: int = 0
    version: int = 0
    v_threshold: int = 0
    timer_deadline: int = 0


@dataclass(frozen=True)
class CommitMessage:
    txn: int
    max_index: int
    dest: int


@dataclass(frozen=True)
class CheckpointRecord:
    obj: int
    index: int
    kind: str
    version: int
    time: int


def initial_record(obj: int) -> CheckpointRecord:
    return CheckpointRecord(obj, 0, KIND_INITIAL, 0, 0)


def tm_commit_metadata(txn: Transaction, observed: Mapping[int, int]) -> list[CommitMessage]:
    """Commit messages for a committing transaction.

    observed maps each accessed object to the index its data manager reported;
    one message per written object, all carrying the maximum observed index.
    """
    missing = sorted(txn.access_set - set(observed))
    if missing:
        raise ProtocolError(f"transaction {txn.id}: no observed index for objects {missing}")
    if not txn.write_set:
        return []
    max_index = max(observed[obj] for obj in txn.access_set)
    return [CommitMessage(txn.id, max_index, obj) for obj in sorted(txn.write_set)]


def dm_on_timer(
    dm: DataManagerState, now: int, next_deadline: int, z: int | None = None
) -> tuple[DataManagerState, CheckpointRecord]:
    """Basic checkpoint: bump the index and save the current version."""
    index = dm.index + 1
    record = CheckpointRecord(dm.obj, index, KIND_BASIC, dm.version, now)
    v_threshold = dm.v_threshold
    if z is not None and index % z == 0:
        v_threshold = max(v_threshold, index + z)
    return (
        replace(dm, index=index, v_threshold=v_threshold, timer_deadline=next_deadline),
        record,
    )


def _check_dest(dm: DataManagerState, msg: CommitMessage) -> None:
    if msg.dest != dm.obj:
        raise ProtocolError(f"message for object {msg.dest} delivered to data manager {dm.obj}")


def _forced_step_a(
    dm: DataManagerState, max_index: int, now: int, next_deadline: int
) -> tuple[DataManagerState, CheckpointRecord | None]:
    if dm.index < max_index:
        record = CheckpointRecord(dm.obj, max_index, KIND_FORCED, dm.version, now)
        return replace(dm, index=max_index, timer_deadline=next_deadline), record
    return dm, None


def _forced_step_b(
    dm: DataManagerState, max_index: int, z: int, now: int, next_deadline: int
) -> tuple[DataManagerState, CheckpointRecord | None]:
    if z < 1:
        raise ProtocolError("z must be at least 1")
    # rounded > index is exactly "the incoming metadata names a later
    # coordination epoch than ours" (index // z < max_index // z); firing on
    # any weaker guard cannot keep equal-epoch checkpoints independent.
    rounded = (max_index // z) * z
    if rounded > dm.index:
        record = CheckpointRecord(dm.obj, rounded, KIND_FORCED, dm.version, now)
        return (
            replace(dm, index=rounded, v_threshold=rounded + z, timer_deadline=next_deadline),
            record,
        )
    return dm, None


def dm_on_commit_a(
    dm: DataManagerState, msg: CommitMessage, now: int, next_deadline: int
) -> tuple[DataManagerState, CheckpointRecord | None]:
    """Protocol A commit handling: force a checkpoint when the index lags.

    The forced checkpoint saves the state before the incoming write applies;
    the write is applied afterwards in either case.
    """
    _check_dest(dm, msg)
    dm, record = _forced_step_a(dm, msg.max_index, now, next_deadline)
    return replace(dm, version=dm.version + 1), record


def dm_on_commit_b(
    dm: DataManagerState, msg: CommitMessage, z: int, now: int, next_deadline: int
) -> tuple[DataManagerState, CheckpointRecord | None]:
    """Protocol B commit handling: force at most every z index values."""
    _check_dest(dm, msg)
    dm, record = _forced_step_b(dm, msg.max_index, z, now, next_deadline)
    return replace(dm, version=dm.version + 1), record


def dm_on_release_a(
    dm: DataManagerState, msg: CommitMessage, now: int, next_deadline: int
) -> tuple[DataManagerState, CheckpointRecord | None]:
    """Read-lock release from a committed reader: same forcing rule, no write.

    A committed reader's metadata has to reach the data managers of the
    objects it only read: a transaction that later overwrites such an object
    is serialized after the reader, and without this step its own commit
    metadata could carry a smaller maximum than the reader's, letting a
    checkpoint taken after the overwrite reuse (or undercut) an index that a
    checkpoint before the reader's snapshot already carries.
    """
    _check_dest(dm, msg)
    return _forced_step_a(dm, msg.max_index, now, next_deadline)


def dm_on_release_b(
    dm: DataManagerState, msg: CommitMessage, z: int, now: int, next_deadline: int
) -> tuple[DataManagerState, CheckpointRecord | None]:
    """Protocol B variant of dm_on_release_a."""
    _check_dest(dm, msg)
    return _forced_step_b(dm, msg.max_index, z, now, next_deadline)


@dataclass(frozen=True)
class GuaranteeReport:
    protocol: str
    z: int
    num_checkpoints: int
    counts_by_kind: Mapping[str, int]
    violations: tuple[str, ...]

    @property
    def ok(self) -> bool:
        return not self.violations


def trace_pattern(trace: "Trace") -> tuple[ExecutionAnalysis, CheckpointAnalysis]:
    """Analysis stack for a trace, with its logged versions as the pattern."""
    base = ExecutionAnalysis(trace.execution)
    raw: dict[int, set[int]] = {obj: {0} for obj in range(trace.execution.num_objects)}
    for record in trace.checkpoint_log:
        raw[record.obj].add(record.version)
    pattern = CheckpointPattern.make(raw, base.timeline)
    return base, CheckpointAnalysis(base, pattern)


def verify_protocol_guarantees(trace: "Trace") -> GuaranteeReport:
    """Check every protocol guarantee the trace is supposed to satisfy."""
    protocol = trace.config.protocol
    z = trace.config.z_param if protocol == PROTOCOL_B else 1
    base, analysis = trace_pattern(trace)
    records = list(trace.checkpoint_log)
    violations: list[str] = []

    per_obj: dict[int, list[CheckpointRecord]] = {}
    for record in records:
        per_obj.setdefault(record.obj, []).append(record)
    for obj, obj_records in sorted(per_obj.items()):
        indices = [r.index for r in obj_records]
        if any(b <= a for a, b in zip(indices, indices[1:])):
            violations.append(f"object {obj}: checkpoint indices not strictly increasing: {indices}")

    scoped = [r for r in records if r.index % z == 0]
    ckpt_of = {id(r): analysis.checkpoint_at_version(r.obj, r.version) for r in records}

    for record in scoped:
        ck = ckpt_of[id(record)]
        if analysis.dp_reachable(ck, ck):
            violations.append(
                f"checkpoint {ck} (index {record.index}) has a dependence path to itself"
            )
    for r1 in scoped:
        c1 = ckpt_of[id(r1)]
        for r2 in scoped:
            if r1 is r2:
                continue
            if analysis.dp_reachable(c1, ckpt_of[id(r2)]) and not r1.index < r2.index:
                violations.append(
                    f"dependence path from {c1} (index {r1.index}) to "
                    f"{ckpt_of[id(r2)]} (index {r2.index}) without index increase"
                )

    all_objects = set(range(trace.execution.num_objects))
    scoped_indices = sorted({r.index for r in scoped})
    for n in scoped_indices:
        exact = {r.obj: r for r in scoped if r.index == n}
        if set(exact) == all_objects:
            states = {obj: r.version for obj, r in exact.items()}
            if not is_consistent_global_state(states, base):
                violations.append(f"equal-index assembly at index {n} is not consistent")
    if protocol == PROTOCOL_A:
        max_index = max((r.index for r in records), default=0)
        for n in range(max_index + 1):
            gc = assemble_indexed_gc(n, records, analysis)
            if gc is not None and not is_consistent_global_state(gc.states(), base):
                violations.append(f"gap-filled assembly at index {n} is not consistent")

    counts = {KIND_INITIAL: 0, KIND_BASIC: 0, KIND_FORCED: 0}
    for record in records:
        counts[record.kind] += 1
    return GuaranteeReport(
        protocol=protocol,
        z=z,
        num_checkpoints=len(records),
        counts_by_kind=counts,
        violations=tuple(violations),
    )


def checkpoint_counts(records: Iterable[CheckpointRecord]) -> dict[int, dict[str, int]]:
    """Per-object counts by kind, for reports."""
    out: dict[int, dict[str, int]] = {}
    for record in records:
        out.setdefault(record.obj, {KIND_INITIAL: 0, KIND_BASIC: 0, KIND_FORCED: 0})
        out[record.obj][record.kind] += 1
    return out
