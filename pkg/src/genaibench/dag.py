"""Execution graph compiled from a benchmark spec.

Every workflow node (one application instance) expands into a
setup -> exec -> cleanup chain. Instances whose tasks name the same shared
server collapse onto a single setup node and a single cleanup node; the
shared cleanup runs only after every sharer's exec. ``depend_on`` edges
connect producer exec nodes to consumer exec nodes, so a producer's cleanup
never gates a consumer that already received its output.

The graph is immutable after :func:`build_dag`; readiness is a pure query
and iteration order is everywhere the declaration order of the spec, so a
run's dispatch order is deterministic.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from typing import Iterable

from .config import BenchmarkSpec


class NodeKind(str, Enum):
    SETUP = "setup"
    EXEC = "exec"
    CLEANUP = "cleanup"


class CycleError(Exception):
    """The graph has a directed cycle; ``cycle`` is one witness path whose
    first and last entries coincide."""

    def __init__(self, cycle: list[str]):
        super().__init__(f"cycle: {' -> '.join(cycle)}")
        self.cycle = cycle


class OrderingError(Exception):
    """An exec node is reachable without its app's setup node."""

    def __init__(self, node_id: str, message: str):
        super().__init__(f"{node_id}: {message}")
        self.node_id = node_id


class PreconditionError(Exception):
    """A readiness query was made with a completed set that is not
    downward-closed."""


@dataclass(frozen=True)
class DagNode:
    id: str
    kind: NodeKind
    app_instance: str
    background: bool
    task: str
    sharers: tuple[str, ...]


@dataclass
class Dag:
    nodes: dict[str, DagNode] = field(default_factory=dict)
    edges: list[tuple[str, str]] = field(default_factory=list)
    preds: dict[str, list[str]] = field(default_factory=dict)
    succs: dict[str, list[str]] = field(default_factory=dict)

    def add_node(self, node: DagNode) -> None:
        if node.id in self.nodes:
            raise ValueError(f"duplicate node id {node.id!r}")
        self.nodes[node.id] = node
        self.preds[node.id] = []
        self.succs[node.id] = []

    def add_edge(self, src: str, dst: str) -> None:
        if src not in self.nodes or dst not in self.nodes:
            raise ValueError(f"edge ({src!r}, {dst!r}) references unknown node")
        if (src, dst) in set(self.edges):
            return
        self.edges.append((src, dst))
        self.succs[src].append(dst)
        self.preds[dst].append(src)

    @property
    def roots(self) -> list[str]:
        return [nid for nid in self.nodes if not self.preds[nid]]

    def nodes_of_kind(self, kind: NodeKind) -> list[DagNode]:
        return [n for n in self.nodes.values() if n.kind is kind]


def setup_node_id(instance_or_ref: str, shared: bool = False) -> str:
    return f"setup:server:{instance_or_ref}" if shared else f"setup:{instance_or_ref}"


def exec_node_id(instance: str) -> str:
    return f"exec:{instance}"


def cleanup_node_id(instance_or_ref: str, shared: bool = False) -> str:
    return f"cleanup:server:{instance_or_ref}" if shared else f"cleanup:{instance_or_ref}"


def build_dag(spec: BenchmarkSpec) -> Dag:
    """Compile a validated spec into its setup/exec/cleanup graph."""
    dag = Dag()

    shared_emitted: set[str] = set()
    for node in spec.workflow:
        task = spec.tasks[node.uses]
        ref = task.server
        if ref is not None:
            sharers = tuple(
                n.node_id for n in spec.workflow if spec.tasks[n.uses].server == ref
            )
            sid = setup_node_id(ref, shared=True)
            cid = cleanup_node_id(ref, shared=True)
            if ref not in shared_emitted:
                shared_emitted.add(ref)
                shared_bg = all(
                    n.background for n in spec.workflow if n.node_id in sharers
                )
                dag.add_node(DagNode(sid, NodeKind.SETUP, sharers[0], shared_bg, node.uses, sharers))
                dag.add_node(DagNode(cid, NodeKind.CLEANUP, sharers[0], shared_bg, node.uses, sharers))
        else:
            sid = setup_node_id(node.node_id)
            cid = cleanup_node_id(node.node_id)
            dag.add_node(DagNode(sid, NodeKind.SETUP, node.node_id, node.background, node.uses, (node.node_id,)))
            dag.add_node(DagNode(cid, NodeKind.CLEANUP, node.node_id, node.background, node.uses, (node.node_id,)))
        eid = exec_node_id(node.node_id)
        dag.add_node(DagNode(eid, NodeKind.EXEC, node.node_id, node.background, node.uses, (node.node_id,)))
        dag.add_edge(sid, eid)
        dag.add_edge(eid, cid)

    for node in spec.workflow:
        for dep in node.depend_on:
            dag.add_edge(exec_node_id(dep), exec_node_id(node.node_id))

    return dag


def _find_cycle(dag: Dag, candidates: Iterable[str]) -> list[str]:
    # Kahn's leaves cycle members plus their downstream nodes; strip nodes
    # with no successor in the set until only cycle cores remain, then walk
    # successors until the first revisit closes a witness path.
    remaining = set(candidates)
    changed = True
    while changed:
        changed = False
        for nid in list(remaining):
            if not any(s in remaining for s in dag.succs[nid]):
                remaining.discard(nid)
                changed = True
    start = min(remaining)
    path: list[str] = []
    index: dict[str, int] = {}
    node = start
    while node not in index:
        index[node] = len(path)
        path.append(node)
        node = next(s for s in dag.succs[node] if s in remaining)
    return path[index[node] :] + [node]


def validate_dag(dag: Dag) -> None:
    """Raise :class:`CycleError` or :class:`OrderingError` unless the graph
    is acyclic and every exec node is preceded by its app's setup node."""
    indegree = {nid: len(dag.preds[nid]) for nid in dag.nodes}
    queue = [nid for nid in dag.nodes if indegree[nid] == 0]
    processed = 0
    topo_order: list[str] = []
    while queue:
        nid = queue.pop(0)
        topo_order.append(nid)
        processed += 1
        for succ in dag.succs[nid]:
            indegree[succ] -= 1
            if indegree[succ] == 0:
                queue.append(succ)
    if processed < len(dag.nodes):
        stuck = [nid for nid in dag.nodes if indegree[nid] > 0]
        raise CycleError(_find_cycle(dag, stuck))

    # Ancestor sets accumulate along the topological order.
    ancestors: dict[str, set[str]] = {nid: set() for nid in dag.nodes}
    for nid in topo_order:
        for succ in dag.succs[nid]:
            ancestors[succ].add(nid)
            ancestors[succ] |= ancestors[nid]

    setups_for: dict[str, list[str]] = {}
    for node in dag.nodes.values():
        if node.kind is NodeKind.SETUP:
            for instance in node.sharers:
                setups_for.setdefault(instance, []).append(node.id)
    for node in dag.nodes.values():
        if node.kind is not NodeKind.EXEC:
            continue
        setups = setups_for.get(node.app_instance, [])
        if not setups:
            raise OrderingError(node.id, "app instance has no setup node")
        if not any(sid in ancestors[node.id] for sid in setups):
            raise OrderingError(node.id, "setup node is not an ancestor of this exec node")


def ready_set(dag: Dag, completed: set[str]) -> list[str]:
    """Nodes whose predecessors are all completed and which are not
    themselves completed, in declaration order.

    ``completed`` must be downward-closed (every ancestor of a member is a
    member); otherwise readiness would be ill-defined.
    """
    for nid in completed:
        if nid not in dag.nodes:
            raise PreconditionError(f"completed set contains unknown node {nid!r}")
        missing = [p for p in dag.preds[nid] if p not in completed]
        if missing:
            raise PreconditionError(
                f"completed set is not downward-closed: {nid!r} lacks {missing[0]!r}"
            )
    return [
        nid
        for nid in dag.nodes
        if nid not in completed and all(p in completed for p in dag.preds[nid])
    ]


def to_dot(dag: Dag) -> str:
    """Graphviz DOT rendering for inspection."""
    shape = {NodeKind.SETUP: "box", NodeKind.EXEC: "ellipse", NodeKind.CLEANUP: "box"}
    lines = ["digraph workflow {", "  rankdir=LR;"]
    for node in dag.nodes.values():
        style = ' style=dashed' if node.background else ""
        lines.append(
            f'  "{node.id}" [shape={shape[node.kind]}{style} label="{node.id}\\n({node.task})"];'
        )
    for src, dst in dag.edges:
        lines.append(f'  "{src}" -> "{dst}";')
    lines.append("}")
    return "\n".join(lines) + "\n"
