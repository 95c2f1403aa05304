from __future__ import annotations

from pathlib import Path

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from genaibench.config import (
    AppKind,
    BenchmarkSpec,
    ConfigSyntaxError,
    Device,
    KernelSpec,
    Mode,
    Policy,
    SchemaError,
    SloKind,
    SloSpec,
    TaskDefinition,
    UnknownReferenceError,
    ViolationKind,
    WorkflowNodeSpec,
    WorkloadProfile,
    load_config,
    parse_config,
    parse_duration,
    serialize_spec,
    validate_spec,
)

FIG_TASKS = """
Analysis (DeepResearch):
  model: Llama-3.2-3B
  num_requests: 1
  device: cpu
Creating Cover Art (ImageGen):
  model: SD-3.5-Medium-Turbo
  num_requests: 5
  device: gpu
  slo: 1s
Generating Captions (LiveCaptions):
  model: Whisper-Large-V3-Turbo
  num_requests: 1
  device: gpu
  slo: 2s
"""

FIG_WORKFLOW = """
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


class TestDurations:
    @pytest.mark.parametrize(
        "literal,expected",
        [("1s", 1.0), ("0.25s", 0.25), ("250ms", 0.25), (1, 1.0), (0.5, 0.5), ("2", 2.0)],
    )
    def test_literals(self, literal, expected):
        assert parse_duration(literal) == expected

    @pytest.mark.parametrize("literal", ["", "abc", "1h", "-1s", 0, -2, "0s", True])
    def test_rejects(self, literal):
        with pytest.raises(SchemaError):
            parse_duration(literal)


class TestParseConfig:
    def test_imagegen_task_fragment(self):
        spec = parse_config(FIG_TASKS)
        task = spec.tasks["Creating Cover Art (ImageGen)"]
        assert task.app_kind is AppKind.IMAGEGEN
        assert task.num_requests == 5
        assert task.device is Device.GPU
        assert task.slo == SloSpec.step_time(1.0)

    def test_kind_inferred_from_name_suffix(self):
        spec = parse_config(FIG_TASKS)
        assert spec.tasks["Analysis (DeepResearch)"].app_kind is AppKind.DEEP_RESEARCH
        assert spec.tasks["Generating Captions (LiveCaptions)"].app_kind is AppKind.LIVE_CAPTIONS

    def test_empty_document(self):
        spec = parse_config("")
        assert spec.tasks == {}
        assert spec.workflow == ()
        assert validate_spec(spec) == []

    def test_bare_workflows_key(self):
        spec = parse_config(FIG_TASKS + "workflows:\n")
        assert spec.workflow == ()

    def test_defaults(self):
        spec = parse_config(FIG_TASKS)
        assert spec.policy is Policy.GREEDY
        assert spec.mode is Mode.LIVE
        assert spec.sample_interval == pytest.approx(0.1)
        task = spec.tasks["Analysis (DeepResearch)"]
        assert task.mps_share == 100
        assert task.slo.kind is SloKind.NONE

    def test_split_files_merge(self):
        # Task and workflow definitions may arrive as separate YAML
        # documents; top-level entries with `uses` are workflow nodes.
        merged = FIG_TASKS + "\n---\n" + FIG_WORKFLOW
        spec = parse_config(merged)
        assert len(spec.tasks) == 3
        assert [n.node_id for n in spec.workflow] == [
            "analysis_1",
            "cover_art",
            "analysis_2",
            "generate_captions",
        ]
        caps = next(n for n in spec.workflow if n.node_id == "generate_captions")
        assert caps.depend_on == ("cover_art", "analysis_2")
        assert all(not n.background for n in spec.workflow)

    def test_unknown_task_key_rejected(self):
        with pytest.raises(SchemaError, match="unknown key"):
            parse_config("t (chatbot):\n  num_requests: 1\n  device: gpu\n  slos: [1s, 1s]\n")

    def test_unknown_node_key_rejected(self):
        text = FIG_TASKS + "workflows:\n  a:\n    uses: Analysis (DeepResearch)\n    after: [b]\n"
        with pytest.raises(SchemaError, match="unknown key"):
            parse_config(text)

    def test_malformed_yaml(self):
        with pytest.raises(ConfigSyntaxError):
            parse_config("a: [unclosed")

    def test_undeclared_uses(self):
        with pytest.raises(UnknownReferenceError):
            parse_config("workflows:\n  a:\n    uses: nothing\n")

    def test_undeclared_dependency(self):
        text = FIG_TASKS + "workflows:\n  a:\n    uses: Analysis (DeepResearch)\n    depend_on: [ghost]\n"
        with pytest.raises(UnknownReferenceError):
            parse_config(text)

    def test_chatbot_pair_slo(self):
        spec = parse_config(
            "chat (chatbot):\n  num_requests: 1\n  device: gpu\n  slo: [1s, 0.25s]\n"
        )
        assert spec.tasks["chat (chatbot)"].slo == SloSpec.latency_pair(1.0, 0.25)

    def test_model_and_server_model_conflict(self):
        with pytest.raises(SchemaError):
            parse_config(
                "t (imagegen):\n  model: a\n  server_model: b\n  num_requests: 1\n  device: gpu\n"
            )

    def test_server_model_names_shared_server(self):
        spec = parse_config(
            "t (imagegen):\n  server_model: sd\n  num_requests: 1\n  device: gpu\n"
        )
        task = spec.tasks["t (imagegen)"]
        assert task.model == "sd"
        assert task.server == "sd"

    def test_dataset_resolved_relative_to_config_dir(self, tmp_path: Path):
        (tmp_path / "prompts.txt").write_text("hello\n")
        cfg = tmp_path / "bench.yaml"
        cfg.write_text(
            "chat (chatbot):\n  num_requests: 1\n  device: gpu\n  dataset: prompts.txt\n"
        )
        spec = load_config(cfg)
        assert spec.tasks["chat (chatbot)"].dataset == str(tmp_path / "prompts.txt")

    def test_mps_share_bounds(self):
        with pytest.raises(SchemaError):
            parse_config("t (chatbot):\n  num_requests: 1\n  device: gpu\n  mps: 0\n")
        with pytest.raises(SchemaError):
            parse_config("t (chatbot):\n  num_requests: 1\n  device: gpu\n  mps: 101\n")

    def test_profile_parsing(self):
        spec = parse_config(
            "t (synthetic):\n  num_requests: 2\n  device: gpu\n"
            "  profile:\n    kernels:\n      - {duration: 1s, sm_demand: 50}\n    sleep: 100ms\n"
        )
        profile = spec.tasks["t (synthetic)"].profile
        assert profile is not None
        assert profile.kernels == (KernelSpec(duration=1.0, sm_demand=50.0),)
        assert profile.sleep == pytest.approx(0.1)


class TestValidateSpec:
    def _spec(self, **task_kwargs) -> BenchmarkSpec:
        defaults = dict(
            name="chat", app_kind=AppKind.CHATBOT, num_requests=1, device=Device.GPU
        )
        defaults.update(task_kwargs)
        task = TaskDefinition(**defaults)
        return BenchmarkSpec(
            tasks={task.name: task},
            workflow=(WorkflowNodeSpec(node_id="n0", uses=task.name),),
        )

    def test_valid_spec_is_clean(self):
        assert validate_spec(self._spec(slo=SloSpec.latency_pair(1.0, 0.25))) == []

    def test_chatbot_with_step_slo_is_mismatch(self):
        violations = validate_spec(self._spec(slo=SloSpec.step_time(1.0)))
        assert [v.kind for v in violations] == [ViolationKind.SLO_MISMATCH]

    def test_deep_research_must_not_have_slo(self):
        violations = validate_spec(
            self._spec(app_kind=AppKind.DEEP_RESEARCH, slo=SloSpec.segment_time(1.0))
        )
        assert any(v.kind is ViolationKind.SLO_MISMATCH for v in violations)

    def test_dangling_reference(self):
        spec = self._spec()
        bad = BenchmarkSpec(
            tasks=spec.tasks,
            workflow=spec.workflow + (WorkflowNodeSpec(node_id="n1", uses="chat", depend_on=("ghost",)),),
        )
        violations = validate_spec(bad)
        assert [v.kind for v in violations] == [ViolationKind.DANGLING_REFERENCE]

    def test_collects_all_violations(self):
        task = TaskDefinition(
            name="chat",
            app_kind=AppKind.CHATBOT,
            num_requests=0,
            device=Device.GPU,
            mps_share=200,
            slo=SloSpec.step_time(1.0),
        )
        spec = BenchmarkSpec(
            tasks={"chat": task},
            workflow=(
                WorkflowNodeSpec(node_id="n0", uses="chat"),
                WorkflowNodeSpec(node_id="n0", uses="ghost"),
            ),
            sample_interval=-1.0,
        )
        kinds = {v.kind for v in validate_spec(spec)}
        assert kinds == {
            ViolationKind.BAD_VALUE,
            ViolationKind.SLO_MISMATCH,
            ViolationKind.DUPLICATE_ID,
            ViolationKind.DANGLING_REFERENCE,
        }

    def test_duplicate_node_ids(self):
        spec = self._spec()
        bad = BenchmarkSpec(
            tasks=spec.tasks,
            workflow=spec.workflow + (WorkflowNodeSpec(node_id="n0", uses="chat"),),
        )
        assert any(v.kind is ViolationKind.DUPLICATE_ID for v in validate_spec(bad))


# -- round-trip property ----------------------------------------------------

_NAMES = st.from_regex(r"[a-z][a-z0-9_]{0,8}", fullmatch=True).filter(
    lambda s: s not in {"workflows", "policy", "mode", "sample_interval", "output_dir"}
)
_DURATIONS = st.floats(min_value=0.001, max_value=1000.0, allow_nan=False, allow_infinity=False)


def _slo_for(kind: AppKind) -> st.SearchStrategy[SloSpec]:
    options: list[st.SearchStrategy[SloSpec]] = [st.just(SloSpec.none())]
    if kind is AppKind.CHATBOT:
        options.append(st.builds(SloSpec.latency_pair, _DURATIONS, _DURATIONS))
    elif kind is AppKind.IMAGEGEN:
        options.append(_DURATIONS.map(SloSpec.step_time))
    elif kind in (AppKind.LIVE_CAPTIONS, AppKind.SYNTHETIC):
        options.append(_DURATIONS.map(SloSpec.segment_time))
    return st.one_of(options)


_PROFILES = st.one_of(
    st.none(),
    st.builds(
        WorkloadProfile,
        kernels=st.lists(
            st.builds(
                KernelSpec,
                duration=_DURATIONS,
                sm_demand=st.floats(min_value=1.0, max_value=100.0, allow_nan=False),
            ),
            max_size=3,
        ).map(tuple),
        sleep=st.one_of(st.none(), _DURATIONS),
        tokens=st.one_of(st.none(), st.integers(min_value=1, max_value=64)),
        segments=st.one_of(st.none(), st.integers(min_value=1, max_value=16)),
        period=st.one_of(st.none(), _DURATIONS),
    ),
)


@st.composite
def _task(draw: st.DrawFn, name: str) -> TaskDefinition:
    kind = draw(st.sampled_from(list(AppKind)))
    model = draw(st.one_of(st.none(), _NAMES))
    server = draw(st.sampled_from([None, "model", "other"]))
    if server == "model":
        server_val = model
    elif server == "other":
        server_val = draw(_NAMES)
    else:
        server_val = None
    return TaskDefinition(
        name=name,
        app_kind=kind,
        num_requests=draw(st.integers(min_value=1, max_value=50)),
        device=draw(st.sampled_from(list(Device))),
        model=model,
        mps_share=draw(st.integers(min_value=1, max_value=100)),
        slo=draw(_slo_for(kind)),
        dataset=draw(st.one_of(st.none(), st.just("/data/prompts.jsonl"))),
        server=server_val,
        kv_cache_on_cpu=draw(st.sampled_from([None, True, False])),
        profile=draw(_PROFILES),
    )


@st.composite
def valid_specs(draw: st.DrawFn) -> BenchmarkSpec:
    task_names = draw(st.lists(_NAMES, min_size=1, max_size=4, unique=True))
    tasks = {name: draw(_task(name)) for name in task_names}
    node_ids = draw(st.lists(_NAMES, min_size=0, max_size=5, unique=True))
    workflow = []
    for i, node_id in enumerate(node_ids):
        deps = draw(st.lists(st.sampled_from(node_ids[:i]), max_size=2, unique=True)) if i else []
        workflow.append(
            WorkflowNodeSpec(
                node_id=node_id,
                uses=draw(st.sampled_from(task_names)),
                depend_on=tuple(deps),
                background=draw(st.booleans()),
            )
        )
    return BenchmarkSpec(
        tasks=tasks,
        workflow=tuple(workflow),
        policy=draw(st.sampled_from(list(Policy))),
        mode=draw(st.sampled_from(list(Mode))),
        sample_interval=draw(_DURATIONS),
        output_dir=draw(_NAMES),
    )


@given(valid_specs())
@settings(max_examples=150, deadline=None)
def test_serialize_parse_round_trip(spec: BenchmarkSpec):
    assert parse_config(serialize_spec(spec)) == spec


@given(valid_specs())
@settings(max_examples=60, deadline=None)
def test_parse_never_lets_reference_violations_through(spec: BenchmarkSpec):
    parsed = parse_config(serialize_spec(spec))
    kinds = {v.kind for v in validate_spec(parsed)}
    assert ViolationKind.DANGLING_REFERENCE not in kinds
