"""Shared builders, independent oracles, and hypothesis strategies."""

from __future__ import annotations

from collections import deque

import pytest
from hypothesis import strategies as st

from txckpt.dependence import CheckpointAnalysis, CheckpointPattern, ExecutionAnalysis
from txckpt.model import (
    Execution,
    LocalState,
    Transaction,
    assign_versions,
    validate_execution,
)
from txckpt.scenario import builtin_scenario


def make_execution(num_objects, txns, order=None):
    """txns: iterable of (id, reads, writes)."""
    transactions = tuple(Transaction.make(i, r, w) for i, r, w in txns)
    if order is None:
        order = [t.id for t in transactions]
    return validate_execution(Execution(num_objects, transactions, tuple(order)))


def hb_oracle(execution, a: LocalState, b: LocalState) -> bool:
    """Happened-before by explicit search of the extended relation.

    Nodes are states plus transactions; each writer links its pre-state to
    itself and itself to its post-state, and conflicting transaction pairs
    are linked in commit order.  Strict reachability between the two states
    is the answer.
    """
    timeline = assign_versions(execution)
    txn_by_id = {t.id: t for t in execution.transactions}
    adj: dict[object, list[object]] = {}

    def link(u, v):
        adj.setdefault(u, []).append(v)

    for txn_id in execution.commit_order:
        txn = txn_by_id[txn_id]
        for obj in txn.write_set:
            link(LocalState(obj, timeline.pre_version[(txn_id, obj)]), ("t", txn_id))
            link(("t", txn_id), LocalState(obj, timeline.post_version[(txn_id, obj)]))
    order = list(execution.commit_order)
    for i, ti in enumerate(order):
        for tj in order[i + 1 :]:
            a_t, b_t = txn_by_id[ti], txn_by_id[tj]
            if (a_t.write_set & b_t.access_set) or (a_t.read_set & b_t.write_set):
                link(("t", ti), ("t", tj))
    seen = set()
    queue = deque(adj.get(a, []))
    while queue:
        node = queue.popleft()
        if node in seen:
            continue
        seen.add(node)
        if node == b:
            return True
        queue.extend(adj.get(node, []))
    return False


def dp_oracle(analysis: CheckpointAnalysis, src, dst) -> bool:
    """Dependence-path reachability by direct search over edge sequences.

    A chain may continue from any edge whose source version's interval is at
    least the interval in which the previous edge arrived (the interval of
    target version - 1); it succeeds when an edge lands at or below the
    destination checkpoint's version.
    """
    if src.obj == dst.obj and src.rank < dst.rank:
        return True
    interval_rank = lambda obj, ver: analysis.intervals[LocalState(obj, ver)].rank
    edges = analysis.base.edges
    start_floor = analysis.pattern.version_of(src.obj, src.rank)
    frontier = deque()
    seen = set()
    for e in edges:
        if e.source.obj == src.obj and e.source.version >= start_floor:
            frontier.append(e)
    while frontier:
        e = frontier.popleft()
        key = (e.source, e.target)
        if key in seen:
            continue
        seen.add(key)
        if e.target.obj == dst.obj and e.target.version <= analysis.pattern.version_of(dst.obj, dst.rank):
            return True
        arrived = interval_rank(e.target.obj, e.target.version - 1)
        for nxt in edges:
            if nxt.source.obj == e.target.obj and interval_rank(nxt.source.obj, nxt.source.version) >= arrived:
                frontier.append(nxt)
    return False


def analysis_for(execution, raw_checkpoints=None) -> CheckpointAnalysis:
    base = ExecutionAnalysis(execution)
    pattern = CheckpointPattern.make(raw_checkpoints or {}, base.timeline)
    return CheckpointAnalysis(base, pattern)


@pytest.fixture(scope="session")
def fig1a():
    return builtin_scenario("fig1a")


@pytest.fixture(scope="session")
def fig1b():
    return builtin_scenario("fig1b")


@pytest.fixture(scope="session")
def fig3():
    return builtin_scenario("fig3")


def scenario_analysis(scenario) -> CheckpointAnalysis:
    return CheckpointAnalysis(ExecutionAnalysis(scenario.execution), scenario.pattern)


@st.composite
def executions(draw, max_objects=4, max_txns=6):
    num_objects = draw(st.integers(1, max_objects))
    num_txns = draw(st.integers(0, max_txns))
    txns = []
    for txn_id in range(num_txns):
        objs = draw(
            st.lists(st.integers(0, num_objects - 1), min_size=1, max_size=3, unique=True)
        )
        writes = [o for o in objs if draw(st.booleans())]
        reads = [o for o in objs if o not in writes or draw(st.booleans())]
        if not reads and not writes:
            writes = objs[:1]
        txns.append((txn_id, reads, writes))
    order = draw(st.permutations(range(num_txns)))
    return make_execution(num_objects, txns, order)


@st.composite
def analyses(draw, max_objects=4, max_txns=6, max_extra_checkpoints=2):
    execution = draw(executions(max_objects=max_objects, max_txns=max_txns))
    base = ExecutionAnalysis(execution)
    raw = {}
    for obj in range(execution.num_objects):
        top = base.timeline.max_version(obj)
        if top:
            size = draw(st.integers(0, min(max_extra_checkpoints, top)))
            raw[obj] = draw(
                st.lists(st.integers(1, top), min_size=size, max_size=size, unique=True)
            )
    pattern = CheckpointPattern.make(raw, base.timeline)
    return CheckpointAnalysis(base, pattern)
