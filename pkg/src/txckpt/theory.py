"""Deciding and constructing consistent global checkpoints.

A global state (one local state per object) is consistent when no member
happened-before another member.  A global checkpoint is a global state whose
members are all checkpoints.  The central decision procedure: a set of
checkpoints, at most one per object, extends to a consistent global
checkpoint exactly when no dependence path runs between any two of its
members (including from a member to itself).  When the condition holds the
extension is built constructively; a brute-force enumerator over the whole
pattern serves as the independent oracle for both directions.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from typing import Iterable, Mapping, Protocol

from .dependence import (
    AnalysisError,
    Checkpoint,
    CheckpointAnalysis,
    DependenceEdge,
    ExecutionAnalysis,
)
from .model import LocalState


@dataclass(frozen=True)
class GlobalCheckpoint:
    """Exactly one checkpoint per object, indexed by object id."""

    members: tuple[Checkpoint, ...]

    def __post_init__(self) -> None:
        for obj, member in enumerate(self.members):
            if member.obj != obj:
                raise AnalysisError("global checkpoint members out of object order")

    def rank_vector(self) -> tuple[int, ...]:
        return tuple(c.rank for c in self.members)

    def version_vector(self) -> tuple[int, ...]:
        return tuple(c.state.version for c in self.members)

    def states(self) -> dict[int, int]:
        return {c.obj: c.state.version for c in self.members}

    def contains(self, candidate: Mapping[int, int]) -> bool:
        """True iff every (object -> rank) entry of candidate appears here."""
        return all(self.members[obj].rank == rank for obj, rank in candidate.items())


class ConditionViolated(Exception):
    """Two candidate members are joined by a dependence path."""

    def __init__(self, source: Checkpoint, target: Checkpoint, witness: list[DependenceEdge]):
        self.source = source
        self.target = target
        self.witness = witness
        super().__init__(f"dependence path from {source} to {target}")


def _complete_states(states: Mapping[int, int], analysis: ExecutionAnalysis) -> list[LocalState]:
    num_objects = analysis.execution.num_objects
    if set(states) != set(range(num_objects)):
        raise AnalysisError("global state must name every object exactly once")
    return [LocalState(obj, states[obj]) for obj in range(num_objects)]


def is_consistent_global_state(states: Mapping[int, int], analysis: ExecutionAnalysis) -> bool:
    """True iff no member state happened-before another member state.

    states maps every object to a version.
    """
    members = _complete_states(states, analysis)
    for a, b in itertools.combinations(members, 2):
        if analysis.happened_before(a, b) or analysis.happened_before(b, a):
            return False
    return True


def _resolve_candidate(candidate: Mapping[int, int], analysis: CheckpointAnalysis) -> list[Checkpoint]:
    if not candidate:
        raise AnalysisError("candidate set must contain at least one checkpoint")
    return [analysis.checkpoint(obj, rank) for obj, rank in sorted(candidate.items())]


def theorem_condition(candidate: Mapping[int, int], analysis: CheckpointAnalysis) -> bool:
    """No dependence path between any two members, self-paths included.

    candidate maps object -> checkpoint rank, at most one entry per object.
    """
    members = _resolve_candidate(candidate, analysis)
    for a in members:
        for b in members:
            if analysis.dp_reachable(a, b):
                return False
    return True


@dataclass(frozen=True)
class ExtensionResult:
    global_checkpoint: GlobalCheckpoint
    # For each object outside the candidate: the minimal safe rank toward each member.
    min_safe_ranks: dict[int, dict[int, int]]


def extend_to_global(candidate: Mapping[int, int], analysis: CheckpointAnalysis) -> ExtensionResult:
    """Extend a candidate set to a full consistent global checkpoint.

    Raises ConditionViolated (with a witness edge sequence) when the members
    themselves are joined by a dependence path.  Otherwise, every object not
    in the candidate gets the maximum over the members of the least rank
    whose checkpoint has no dependence path to that member (rank 0 when the
    member has rank 0).
    """
    members = _resolve_candidate(candidate, analysis)
    for a in members:
        for b in members:
            if analysis.dp_reachable(a, b):
                raise ConditionViolated(a, b, analysis.dp_witness(a, b) or [])
    chosen: list[Checkpoint] = []
    min_safe: dict[int, dict[int, int]] = {}
    for obj in range(analysis.pattern.num_objects):
        if obj in candidate:
            chosen.append(analysis.checkpoint(obj, candidate[obj]))
            continue
        per_member: dict[int, int] = {}
        for member in members:
            if member.rank == 0:
                per_member[member.obj] = 0
                continue
            safe = 0
            for rank in analysis.pattern.ranks(obj):
                if not analysis.dp_reachable(analysis.checkpoint(obj, rank), member):
                    safe = rank
                    break
            per_member[member.obj] = safe
        min_safe[obj] = per_member
        chosen.append(analysis.checkpoint(obj, max(per_member.values())))
    return ExtensionResult(GlobalCheckpoint(tuple(chosen)), min_safe)


class OracleBoundExceeded(RuntimeError):
    pass


def enumerate_consistent_globals(
    analysis: CheckpointAnalysis, bound: int = 10**6
) -> list[GlobalCheckpoint]:
    """All consistent global checkpoints over the pattern, in rank order.

    The candidate space is the product of each object's checkpoint list;
    raises OracleBoundExceeded when it is larger than bound.
    """
    pattern = analysis.pattern
    space = 1
    for obj in range(pattern.num_objects):
        space *= len(pattern.versions[obj])
        if space > bound:
            raise OracleBoundExceeded(f"{space}+ candidate global checkpoints exceeds bound {bound}")
    base = analysis.base
    out: list[GlobalCheckpoint] = []
    rank_ranges = [pattern.ranks(obj) for obj in range(pattern.num_objects)]
    for ranks in itertools.product(*rank_ranges):
        states = {obj: pattern.version_of(obj, rank) for obj, rank in enumerate(ranks)}
        if is_consistent_global_state(states, base):
            out.append(
                GlobalCheckpoint(tuple(analysis.checkpoint(obj, rank) for obj, rank in enumerate(ranks)))
            )
    return out


@dataclass(frozen=True)
class LineCrossing:
    edge: DependenceEdge


def recovery_line_violations(
    line: Mapping[int, int], analysis: ExecutionAnalysis
) -> list[LineCrossing]:
    """Dependence edges that cross the recovery line.

    line maps every object to the version its member checkpoint saved.  An
    edge crosses when its source sits at or after the saved version of its
    own object while its target sits at or before the saved version of its
    object: the source side already reflects the line, the target side is
    being depended on from beyond it.  Black edges whose endpoints fall
    strictly on opposite sides always show up here through the mirrored
    edge of the same transaction, and left-to-right dashed edges (earlier
    source, later target) never do: they are merely in transit.
    """
    _complete_states(line, analysis)
    violations = []
    for edge in analysis.edges:
        if (
            edge.source.version >= line[edge.source.obj]
            and edge.target.version <= line[edge.target.obj]
        ):
            violations.append(LineCrossing(edge))
    return violations


def recovery_line_check(line: Mapping[int, int], analysis: ExecutionAnalysis) -> bool:
    """True iff no dependence edge crosses the line (agrees with consistency)."""
    return not recovery_line_violations(line, analysis)


class IndexedCheckpoint(Protocol):
    obj: int
    index: int
    version: int


def assemble_indexed_gc(
    n: int, log: Iterable[IndexedCheckpoint], analysis: CheckpointAnalysis
) -> GlobalCheckpoint | None:
    """Pick, per object, the checkpoint with protocol index n, else the first
    with a greater index; None when some object has no checkpoint indexed >= n.
    """
    per_obj: dict[int, list[IndexedCheckpoint]] = {
        obj: [] for obj in range(analysis.pattern.num_objects)
    }
    for record in log:
        per_obj[record.obj].append(record)
    members: list[Checkpoint] = []
    for obj in range(analysis.pattern.num_objects):
        candidates = sorted((r for r in per_obj[obj] if r.index >= n), key=lambda r: r.index)
        if not candidates:
            return None
        members.append(analysis.checkpoint_at_version(obj, candidates[0].version))
    return GlobalCheckpoint(tuple(members))
