import random

import pytest

from cat_dse.errors import (
    CatDseError, InfeasiblePlanError, InputArtifactError, PlanningError
)
from cat_dse.planner import (
    PIPELINE_DEPTH, AtbRatio, ParallelMode, PrgKind, Trigger, atb_ratio,
    buffer_components, buffer_footprint, compute_factor1, decide_p_atb,
    decide_parallel_mode, design, plan_from_json, plan_hash, plan_to_json
)
from cat_dse.platform import derive_plio_aie
from cat_dse.pu_design import enumerate_pu_specs
from cat_dse.workload import Stage, read_config
from test.common import (
    bert, limited, random_config, random_profile, vck5000
)


def specs():
    return enumerate_pu_specs(vck5000())


def test_factor1_bert() -> None:
    assert compute_factor1(Stage.MHA, bert(), vck5000(), specs()) == 1.5
    assert compute_factor1(Stage.FFN, bert(), vck5000(), specs()) == 6.0
    strict = compute_factor1(Stage.MHA, bert(), vck5000(), specs(),
                             strict=True)
    assert strict == pytest.approx(0.36)


def test_factor2_bert() -> None:
    components = dict(buffer_components(bert(), 4,
                                        ParallelMode.FULLY_PIPELINED))
    assert components['weights'] == 7_077_888
    assert buffer_footprint(bert(), 4, ParallelMode.FULLY_PIPELINED) == \
        7_929_856


def test_factor2_grows_with_p_atb() -> None:
    footprints = [buffer_footprint(bert(), p_atb,
                                   ParallelMode.FULLY_PIPELINED)
                  for p_atb in range(1, 13)]
    assert footprints == sorted(footprints)


@pytest.mark.parametrize("stage", [Stage.MHA, Stage.FFN])
@pytest.mark.parametrize("mode", list(ParallelMode))
def test_factor2_monotone(stage: Stage, mode: ParallelMode) -> None:
    rng = random.Random(17)
    for _ in range(200):
        cfg = random_config(rng)
        p_atb = rng.randint(1, cfg.head)
        before = buffer_footprint(cfg, p_atb, mode, stage)
        for grown in (
                cfg._replace(seq_len=cfg.seq_len + rng.randint(1, 256)),
                cfg._replace(embed_dim=cfg.embed_dim
                             + cfg.head * rng.randint(1, 8)),
                cfg._replace(dff=cfg.dff + rng.randint(1, 1024))):
            assert buffer_footprint(grown, p_atb, mode, stage) >= before


def test_p_atb_bert() -> None:
    ratio = atb_ratio(bert(), vck5000(), specs())
    assert ratio.qkv_output_heads == 4
    assert ratio.atb_input_heads == 1
    assert decide_p_atb(ratio) == 4


def test_p_atb_throughput_rounding() -> None:
    # heads do not divide: the throughput ratio is rounded half up
    assert decide_p_atb(AtbRatio(3, 2, 2.5, 1.0)) == 3
    assert decide_p_atb(AtbRatio(3, 2, 2.49, 1.0)) == 2
    assert decide_p_atb(AtbRatio(3, 2, 0.1, 1.0)) == 1
    with pytest.raises(PlanningError):
        decide_p_atb(AtbRatio(4, 0, 1.0, 1.0))


def test_decide_bert() -> None:
    mha = decide_parallel_mode(Stage.MHA, bert(), vck5000(), specs(), 4)
    assert mha.chosen == ParallelMode.FULLY_PIPELINED
    assert mha.triggered_by == Trigger.NONE
    assert mha.max_pipeline_depth == 4
    assert mha.factor2_bytes == 7_929_856
    assert mha.factor1_strict is None
    ffn = decide_parallel_mode(Stage.FFN, bert(), vck5000(), specs(), 4,
                               strict_factor1=True)
    assert ffn.chosen == ParallelMode.SERIAL
    assert ffn.triggered_by == Trigger.FACTOR1
    assert ffn.factor1_strict == pytest.approx(1.44)


def test_decide_factor2() -> None:
    p = vck5000()._replace(total_buffer_bytes=1 << 20)
    mha = decide_parallel_mode(Stage.MHA, bert(), p, specs(), 4)
    assert mha.triggered_by == Trigger.FACTOR2
    assert mha.chosen == ParallelMode.HYBRID


@pytest.mark.slow
def test_decision_rule_property() -> None:
    rng = random.Random(20)
    checked = 0
    for _ in range(1000):
        cfg, p = random_config(rng), random_profile(rng)
        try:
            pu_specs = enumerate_pu_specs(p, cfg.data_bits)
        except CatDseError:
            continue
        p_atb = rng.randint(1, cfg.head)
        for stage in Stage:
            decision = decide_parallel_mode(stage, cfg, p, pu_specs, p_atb)
            factor1 = compute_factor1(stage, cfg, p, pu_specs)
            factor2 = buffer_footprint(cfg, p_atb,
                                       ParallelMode.FULLY_PIPELINED, stage)
            serial = (factor1 >= PIPELINE_DEPTH[stage]
                      or factor2 > p.total_buffer_bytes)
            assert (decision.chosen != ParallelMode.FULLY_PIPELINED) == \
                serial
            assert (decision.triggered_by == Trigger.NONE) == (not serial)
        checked += 1
    assert checked > 900


def test_design_bert() -> None:
    plan = design(bert(), vck5000())
    assert plan.pm_mha == ParallelMode.FULLY_PIPELINED
    assert plan.pm_ffn == ParallelMode.SERIAL
    assert plan.p_atb == 4
    assert plan.deployed_aie == 352
    assert plan.deployment_rate == 0.88
    groups = {prg.id: [(spec.name, count) for spec, count in prg.pu_groups()]
              for prg in plan.prgs}
    for prg_id in ('mha.q_lb', 'mha.k_lb', 'mha.v_lb', 'mha.proj_lb'):
        assert groups[prg_id] == [('Large', 1)]
    for lane in range(4):
        assert groups[f'mha.atb{lane}.pre'] == [('Small', 2)]
        assert groups[f'mha.atb{lane}.post'] == [('Standard', 1)]
    assert groups['ffn.ffn1_lb'] == [('Large', 4)]
    assert groups['ffn.ffn2_lb'] == [('Large', 4)]
    lanes = [prg.heads for prg in plan.mha_prgs
             if prg.kind == PrgKind.ATB_PRE]
    assert lanes == [(0, 4, 8), (1, 5, 9), (2, 6, 10), (3, 7, 11)]
    assert plan.buffer_footprint_bytes == 7_929_856


def test_design_buffers_sum_to_factor2() -> None:
    plan = design(bert(), vck5000())
    total = sum(size for prg in plan.mha_prgs for _, size in prg.buffers)
    total += sum(size for prg in plan.ffn_prgs for label, size in prg.buffers
                 if label.startswith('weights.'))
    assert total == plan.buffer_footprint_bytes


def test_design_limited() -> None:
    plan = design(read_config('bert-base-limited'), limited())
    assert plan.pm_mha == ParallelMode.HYBRID
    assert plan.pm_ffn == ParallelMode.SERIAL
    assert plan.deployed_aie == 64
    assert plan.deployment_rate == 1.0
    assert plan.decisions is not None
    assert plan.decisions[0].triggered_by == Trigger.FACTOR1
    assert [pu.id for pu in plan.physical_instances] == ['large0']
    for prg in plan.mha_prgs:
        if prg.kind == PrgKind.ATB_PRE:
            assert [(spec.name, count) for spec, count in
                    prg.pu_groups()] == [('Small', 4)]
            assert all(pu.view for pu in prg.allocated_pus)
        elif prg.kind == PrgKind.ATB_POST:
            assert [(spec.name, count) for spec, count in
                    prg.pu_groups()] == [('Standard', 1)]
    pre = [prg for prg in plan.mha_prgs if prg.kind == PrgKind.ATB_PRE]
    assert [min(prg.cores) for prg in pre] == [0, 16, 32, 48]


def test_design_per_head_linear() -> None:
    plan = design(bert(), vck5000(), independent_linear=False)
    lane_lbs = [prg for prg in plan.mha_prgs
                if prg.kind == PrgKind.QKV_LB]
    assert all(prg.lane is not None for prg in lane_lbs)
    assert len(lane_lbs) == 3 * plan.p_atb
    assert plan.deployed_aie <= 400


def test_design_decoder() -> None:
    assert plan_to_json(design(bert(), vck5000(), decoder=True)) == \
        plan_to_json(design(bert(), vck5000()))


def test_design_ffn_override() -> None:
    plan = design(bert(), vck5000(), paper_ffn_override=True)
    assert plan.pm_ffn == ParallelMode.FULLY_PIPELINED
    assert any("overridden" in note for note in plan.notes)
    ffn1, ffn2 = plan.ffn_prgs
    assert not ffn1.cores & ffn2.cores


def test_design_infeasible() -> None:
    p = vck5000()._replace(total_aie=2)
    with pytest.raises(InfeasiblePlanError):
        design(bert(), p)


@pytest.mark.slow
def test_design_random_plans() -> None:
    rng = random.Random(7)
    designed = 0
    for _ in range(200):
        cfg, p = random_config(rng), random_profile(rng)
        try:
            plan = design(cfg, p)
        except CatDseError:
            continue
        designed += 1
        assert 0 < plan.deployed_aie <= p.total_aie
        assert plan.deployment_rate == plan.deployed_aie / p.total_aie
        cores = [core for pu in plan.physical_instances for core in pu.cores]
        assert len(cores) == len(set(cores)) == plan.deployed_aie
        physical = set(cores)
        for pu in plan.instances:
            assert set(pu.cores) <= physical
        assert 1 <= plan.p_atb <= cfg.head
        assert derive_plio_aie(p) >= 2
    assert designed > 50


def test_plan_json() -> None:
    plan = design(bert(), vck5000(), strict_factor1=True)
    document = plan_to_json(plan)
    assert document['plan_version'] == 1
    assert document['deployed_aie'] == 352
    assert plan_from_json(document) == plan
    assert plan_hash(plan_from_json(document)) == plan_hash(plan)


def test_plan_json_errors() -> None:
    document = plan_to_json(design(bert(), vck5000()))
    with pytest.raises(InputArtifactError, match="plan_version"):
        plan_from_json(dict(document, plan_version=2))
    with pytest.raises(InputArtifactError, match="corrupted"):
        plan_from_json({k: v for k, v in document.items() if k != 'pm_mha'})
    broken = dict(document, pu_instances=document['pu_instances'][1:])
    with pytest.raises(InputArtifactError, match="unknown PU instance"):
        plan_from_json(broken)
    with pytest.raises(InputArtifactError, match="invalid model"):
        plan_from_json(dict(document, model=dict(document['model'], head=5)))
