"""Committed transaction executions over versioned data objects.

An execution is modelled at the commit-atomic level: each committed
transaction is a read set plus a write set, and a total commit order.
Under a strict scheduler every write takes effect at the writer's commit
point, so the per-object access order (and with it the serialization
relation between transactions) is fully determined by the commit order.
Aborted transactions leave no version and no dependence and are not
represented.

Versions: every object starts at version 0; the k-th committed writer of
an object (in commit order) moves it from version k-1 to version k.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Mapping


class ExecutionError(ValueError):
    """The execution violates a structural invariant."""


@dataclass(frozen=True, order=True)
class LocalState:
    """One version of one object: version 0 is the initial state."""

    obj: int
    version: int

    def __repr__(self) -> str:
        return f"s({self.obj},{self.version})"


@dataclass(frozen=True)
class Transaction:
    id: int
    read_set: frozenset[int]
    write_set: frozenset[int]

    @staticmethod
    def make(txn_id: int, reads: Iterable[int] = (), writes: Iterable[int] = ()) -> "Transaction":
        return Transaction(txn_id, frozenset(reads), frozenset(writes))

    @property
    def access_set(self) -> frozenset[int]:
        return self.read_set | self.write_set


@dataclass(frozen=True)
class Execution:
    """m data objects (indices 0..m-1), committed transactions, total commit order."""

    num_objects: int
    transactions: tuple[Transaction, ...]
    commit_order: tuple[int, ...]


class ValidatedExecution(Execution):
    """An Execution that passed validate_execution. Construct only via it."""


def validate_execution(execution: Execution) -> ValidatedExecution:
    """Check the structural invariants and return the execution tagged valid.

    Raises ExecutionError on: duplicate transaction ids, commit_order not a
    permutation of the transaction ids, a transaction with empty read and
    write sets, or an object index outside [0, num_objects).
    """
    if execution.num_objects < 0:
        raise ExecutionError("num_objects must be non-negative")
    seen: set[int] = set()
    for txn in execution.transactions:
        if txn.id < 0:
            raise ExecutionError(f"transaction id {txn.id} is negative")
        if txn.id in seen:
            raise ExecutionError(f"duplicate transaction id {txn.id}")
        seen.add(txn.id)
        if not txn.read_set and not txn.write_set:
            raise ExecutionError(f"transaction {txn.id} has empty read and write sets")
        for obj in txn.access_set:
            if not 0 <= obj < execution.num_objects:
                raise ExecutionError(
                    f"transaction {txn.id} accesses object {obj}, "
                    f"outside [0, {execution.num_objects})"
                )
    order_seen: set[int] = set()
    for txn_id in execution.commit_order:
        if txn_id in order_seen:
            raise ExecutionError(f"duplicate transaction id {txn_id} in commit order")
        order_seen.add(txn_id)
        if txn_id not in seen:
            raise ExecutionError(f"commit order names unknown transaction {txn_id}")
    if order_seen != seen:
        missing = sorted(seen - order_seen)
        raise ExecutionError(f"transactions missing from commit order: {missing}")
    return ValidatedExecution(
        execution.num_objects, tuple(execution.transactions), tuple(execution.commit_order)
    )


@dataclass(frozen=True)
class SerializationGraph:
    """Direct conflict-order edges between committed transactions.

    Edge (i, j) means i committed before j and they conflict on some object
    (both access it, at least one of the two accesses is a write).  Edges
    always point forward in commit order, so the graph is acyclic and the
    commit order is one of its linear extensions.
    """

    nodes: tuple[int, ...]
    direct_edges: frozenset[tuple[int, int]]
    _successors: Mapping[int, frozenset[int]] = field(repr=False, hash=False, compare=False, default=None)  # type: ignore[assignment]

    def successors(self, txn_id: int) -> frozenset[int]:
        """All transactions strictly after txn_id in the serialization order."""
        return self._successors[txn_id]

    def reaches(self, a: int, b: int) -> bool:
        """True iff a precedes b in the transitive serialization order."""
        return b in self._successors[a]


def build_serialization_graph(execution: ValidatedExecution) -> SerializationGraph:
    """Derive the serialization relation from commit order and access sets.

    Read-read sharing does not order transactions; any pair where at least
    one side writes a commonly accessed object is ordered by commit order.
    """
    txn_by_id = {t.id: t for t in execution.transactions}
    order = execution.commit_order
    edges: set[tuple[int, int]] = set()
    for pos_i, i in enumerate(order):
        ti = txn_by_id[i]
        for j in order[pos_i + 1 :]:
            tj = txn_by_id[j]
            if (ti.write_set & tj.access_set) or (ti.read_set & tj.write_set):
                edges.add((i, j))
    # Transitive closure, walking backwards in commit order.
    succ: dict[int, set[int]] = {i: set() for i in order}
    direct: dict[int, set[int]] = {i: set() for i in order}
    for i, j in edges:
        direct[i].add(j)
    for i in reversed(order):
        acc = set(direct[i])
        for j in direct[i]:
            acc |= succ[j]
        succ[i] = acc
    closed = {i: frozenset(s) for i, s in succ.items()}
    return SerializationGraph(tuple(order), frozenset(edges), closed)


@dataclass(frozen=True)
class StateTimeline:
    """Per-object version history and per-transaction pre/post versions.

    writers[x][k-1] is the transaction that wrote version k of object x.
    pre_version[(t, x)] is the version of x a transaction t saw when it
    accessed x; post_version[(t, x)] = pre + 1 exists only for writes.
    """

    num_objects: int
    writers: tuple[tuple[int, ...], ...]
    pre_version: Mapping[tuple[int, int], int]
    post_version: Mapping[tuple[int, int], int]

    def max_version(self, obj: int) -> int:
        return len(self.writers[obj])

    def writer_of(self, obj: int, version: int) -> int | None:
        """Transaction that produced (obj, version), None for version 0 or unknown."""
        if 1 <= version <= len(self.writers[obj]):
            return self.writers[obj][version - 1]
        return None

    def states(self, obj: int) -> list[LocalState]:
        return [LocalState(obj, v) for v in range(self.max_version(obj) + 1)]

    def all_states(self) -> list[LocalState]:
        return [s for obj in range(self.num_objects) for s in self.states(obj)]

    def has_state(self, state: LocalState) -> bool:
        return 0 <= state.obj < self.num_objects and 0 <= state.version <= self.max_version(state.obj)


def assign_versions(execution: ValidatedExecution) -> StateTimeline:
    """Number versions by commit order: the k-th writer of x produces version k."""
    txn_by_id = {t.id: t for t in execution.transactions}
    writers: list[list[int]] = [[] for _ in range(execution.num_objects)]
    pre: dict[tuple[int, int], int] = {}
    post: dict[tuple[int, int], int] = {}
    current = [0] * execution.num_objects
    for txn_id in execution.commit_order:
        txn = txn_by_id[txn_id]
        for obj in txn.access_set:
            pre[(txn_id, obj)] = current[obj]
        for obj in sorted(txn.write_set):
            writers[obj].append(txn_id)
            current[obj] += 1
            post[(txn_id, obj)] = current[obj]
    return StateTimeline(
        execution.num_objects, tuple(tuple(w) for w in writers), pre, post
    )
