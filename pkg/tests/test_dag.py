from __future__ import annotations

import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from genaibench.config import (
    AppKind,
    BenchmarkSpec,
    Device,
    TaskDefinition,
    WorkflowNodeSpec,
    parse_config,
)
from genaibench.dag import (
    CycleError,
    Dag,
    DagNode,
    NodeKind,
    OrderingError,
    PreconditionError,
    build_dag,
    ready_set,
    to_dot,
    validate_dag,
)

FIG_SPEC = """
Analysis (DeepResearch):
  num_requests: 1
  device: cpu
Creating Cover Art (ImageGen):
  num_requests: 5
  device: gpu
  slo: 1s
Generating Captions (LiveCaptions):
  num_requests: 1
  device: gpu
  slo: 2s
workflows:
  analysis_1:
    uses: Analysis (DeepResearch)
  cover_art:
    uses: Creating Cover Art (ImageGen)
    depend_on: ["analysis_1"]
  analysis_2:
    uses: Analysis (DeepResearch)
    depend_on: ["analysis_1"]
  generate_captions:
    uses: Generating Captions (LiveCaptions)
    depend_on: ["cover_art", "analysis_2"]
"""


def _simple_spec(n_nodes: int = 1, deps: dict[str, list[str]] | None = None) -> BenchmarkSpec:
    task = TaskDefinition(name="t", app_kind=AppKind.SYNTHETIC, num_requests=1, device=Device.GPU)
    deps = deps or {}
    workflow = tuple(
        WorkflowNodeSpec(node_id=f"n{i}", uses="t", depend_on=tuple(deps.get(f"n{i}", [])))
        for i in range(n_nodes)
    )
    return BenchmarkSpec(tasks={"t": task}, workflow=workflow)


# -- independent oracle: tri-color DFS cycle detection -----------------------


def has_cycle_oracle(nodes: list[str], succs: dict[str, list[str]]) -> bool:
    WHITE, GREY, BLACK = 0, 1, 2
    color = {n: WHITE for n in nodes}

    def dfs(start: str) -> bool:
        stack: list[tuple[str, int]] = [(start, 0)]
        color[start] = GREY
        while stack:
            node, i = stack.pop()
            if i < len(succs[node]):
                stack.append((node, i + 1))
                child = succs[node][i]
                if color[child] == GREY:
                    return True
                if color[child] == WHITE:
                    color[child] = GREY
                    stack.append((child, 0))
            else:
                color[node] = BLACK
        return False

    return any(color[n] == WHITE and dfs(n) for n in nodes)


def _random_graph(rng: random.Random, n: int = 50) -> Dag:
    dag = Dag()
    names = [f"g{i}" for i in range(n)]
    for name in names:
        # Setup-kind nodes carry no ordering constraint, isolating the
        # cycle check.
        dag.add_node(DagNode(name, NodeKind.SETUP, name, False, "t", (name,)))
    for _ in range(rng.randrange(0, 2 * n)):
        a, b = rng.choice(names), rng.choice(names)
        if a != b or rng.random() < 0.02:
            dag.add_edge(a, b)
    return dag


class TestBuildDag:
    def test_single_node_chain(self):
        dag = build_dag(_simple_spec(1))
        assert set(dag.nodes) == {"setup:n0", "exec:n0", "cleanup:n0"}
        assert set(dag.edges) == {("setup:n0", "exec:n0"), ("exec:n0", "cleanup:n0")}

    def test_fig_workflow_dependencies(self):
        dag = build_dag(parse_config(FIG_SPEC))
        preds = set(dag.preds["exec:generate_captions"])
        assert "exec:cover_art" in preds
        assert "exec:analysis_2" in preds
        validate_dag(dag)

    def test_shared_server_merges_setup_and_cleanup(self):
        task = TaskDefinition(
            name="chat",
            app_kind=AppKind.CHATBOT,
            num_requests=1,
            device=Device.GPU,
            model="llama",
            server="llama",
        )
        spec = BenchmarkSpec(
            tasks={"chat": task},
            workflow=(
                WorkflowNodeSpec(node_id="a", uses="chat"),
                WorkflowNodeSpec(node_id="b", uses="chat"),
            ),
        )
        dag = build_dag(spec)
        expected_nodes = {
            "setup:server:llama",
            "cleanup:server:llama",
            "exec:a",
            "exec:b",
        }
        assert set(dag.nodes) == expected_nodes
        expected_edges = {
            ("setup:server:llama", "exec:a"),
            ("setup:server:llama", "exec:b"),
            ("exec:a", "cleanup:server:llama"),
            ("exec:b", "cleanup:server:llama"),
        }
        assert set(dag.edges) == expected_edges
        assert dag.nodes["setup:server:llama"].sharers == ("a", "b")

    def test_node_count_formula(self):
        rng = random.Random(7)
        task_plain = TaskDefinition(
            name="p", app_kind=AppKind.SYNTHETIC, num_requests=1, device=Device.GPU
        )
        task_shared = TaskDefinition(
            name="s",
            app_kind=AppKind.CHATBOT,
            num_requests=1,
            device=Device.GPU,
            model="m",
            server="m",
        )
        for _ in range(200):
            n = rng.randrange(1, 8)
            workflow = tuple(
                WorkflowNodeSpec(node_id=f"n{i}", uses=rng.choice(["p", "s"]))
                for i in range(n)
            )
            spec = BenchmarkSpec(tasks={"p": task_plain, "s": task_shared}, workflow=workflow)
            dag = build_dag(spec)
            shared = sum(1 for w in workflow if w.uses == "s")
            merges = max(0, shared - 1)
            assert len(dag.nodes) == 3 * n - 2 * merges
            validate_dag(dag)


class TestValidateDag:
    def test_self_loop_witness(self):
        dag = Dag()
        dag.add_node(DagNode("n", NodeKind.SETUP, "n", False, "t", ("n",)))
        dag.add_edge("n", "n")
        with pytest.raises(CycleError) as err:
            validate_dag(dag)
        assert err.value.cycle == ["n", "n"]

    def test_fig_graph_is_acyclic(self):
        validate_dag(build_dag(parse_config(FIG_SPEC)))

    def test_cycle_witness_is_a_real_cycle(self):
        dag = build_dag(_simple_spec(3, deps={"n1": ["n0"], "n2": ["n1"]}))
        dag.add_edge("exec:n0", "exec:n0")
        with pytest.raises(CycleError) as err:
            validate_dag(dag)
        cycle = err.value.cycle
        assert cycle[0] == cycle[-1]
        for a, b in zip(cycle, cycle[1:]):
            assert (a, b) in set(dag.edges)

    def test_missing_setup_is_ordering_error(self):
        dag = Dag()
        dag.add_node(DagNode("exec:a", NodeKind.EXEC, "a", False, "t", ("a",)))
        with pytest.raises(OrderingError):
            validate_dag(dag)

    def test_setup_not_ancestor_is_ordering_error(self):
        dag = Dag()
        dag.add_node(DagNode("setup:a", NodeKind.SETUP, "a", False, "t", ("a",)))
        dag.add_node(DagNode("exec:a", NodeKind.EXEC, "a", False, "t", ("a",)))
        # no edge between them
        with pytest.raises(OrderingError):
            validate_dag(dag)

    def test_matches_dfs_oracle_on_random_graphs(self):
        rng = random.Random(42)
        agreements = 0
        for _ in range(300):
            dag = _random_graph(rng, n=30)
            expected = has_cycle_oracle(list(dag.nodes), dag.succs)
            try:
                validate_dag(dag)
                got = False
            except CycleError:
                got = True
            assert got == expected
            agreements += 1
        assert agreements == 300


class TestReadySet:
    def test_empty_completed_yields_roots(self):
        dag = build_dag(parse_config(FIG_SPEC))
        assert ready_set(dag, set()) == dag.roots

    def test_fig_progression(self):
        dag = build_dag(parse_config(FIG_SPEC))
        completed = {"setup:analysis_1", "exec:analysis_1"}
        ready = ready_set(dag, completed)
        assert "cleanup:analysis_1" in ready
        assert "setup:cover_art" in ready
        assert "setup:analysis_2" in ready
        assert "exec:generate_captions" not in ready

    def test_precondition_rejects_non_downward_closed(self):
        dag = build_dag(_simple_spec(1))
        with pytest.raises(PreconditionError):
            ready_set(dag, {"exec:n0"})  # setup missing

    def test_full_iteration_visits_each_node_once_in_order(self):
        rng = random.Random(3)
        for _ in range(50):
            n = rng.randrange(1, 7)
            deps = {
                f"n{i}": rng.sample([f"n{j}" for j in range(i)], k=rng.randrange(0, i + 1) % (i + 1))
                for i in range(1, n)
            }
            dag = build_dag(_simple_spec(n, deps))
            completed: set[str] = set()
            visited: list[str] = []
            while True:
                ready = ready_set(dag, completed)
                if not ready:
                    break
                node = ready[0]
                # no predecessor may be unvisited
                assert all(p in completed for p in dag.preds[node])
                visited.append(node)
                completed.add(node)
            assert len(visited) == len(dag.nodes)
            assert len(set(visited)) == len(visited)

    def test_monotone_under_completion_growth(self):
        dag = build_dag(parse_config(FIG_SPEC))
        completed: set[str] = set()
        while True:
            ready = ready_set(dag, completed)
            if not ready:
                break
            before = set(ready)
            completed.add(ready[0])
            after = set(ready_set(dag, completed))
            # everything previously ready and still incomplete stays ready
            assert before - completed <= after


@st.composite
def _acyclic_workflows(draw: st.DrawFn) -> dict[str, list[str]]:
    n = draw(st.integers(min_value=1, max_value=8))
    deps: dict[str, list[str]] = {}
    for i in range(n):
        pool = [f"n{j}" for j in range(i)]
        deps[f"n{i}"] = draw(
            st.lists(st.sampled_from(pool), max_size=min(3, len(pool)), unique=True)
        ) if pool else []
    return deps


@given(_acyclic_workflows(), st.data())
@settings(max_examples=80, deadline=None)
def test_ready_set_monotone_property(deps: dict[str, list[str]], data: st.DataObject):
    # enlarging `completed` never removes a previously ready, still-uncompleted node
    dag = build_dag(_simple_spec(len(deps), deps))
    completed: set[str] = set()
    while True:
        ready = ready_set(dag, completed)
        if not ready:
            break
        before = set(ready)
        pick = data.draw(st.sampled_from(ready))
        completed.add(pick)
        after = set(ready_set(dag, completed))
        assert before - completed <= after
    assert completed == set(dag.nodes)


@given(_acyclic_workflows())
@settings(max_examples=80, deadline=None)
def test_build_output_always_validates(deps: dict[str, list[str]]):
    validate_dag(build_dag(_simple_spec(len(deps), deps)))


def test_to_dot_contains_all_nodes_and_edges():
    dag = build_dag(parse_config(FIG_SPEC))
    dot = to_dot(dag)
    assert dot.startswith("digraph")
    for node_id in dag.nodes:
        assert f'"{node_id}"' in dot
    for a, b in dag.edges:
        assert f'"{a}" -> "{b}";' in dot
