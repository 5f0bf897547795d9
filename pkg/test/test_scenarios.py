import pytest

from cat_dse.errors import ConfigError
from cat_dse.planner import ParallelMode, PrgKind
from cat_dse.scenarios import (
    LABS, TABLE5_PAPER, TABLE6_PAPER, TableRow, attention_workload,
    compare_modes, lab_plan, table5, table6
)
from cat_dse.workload import MatMulRole, NonlinearKind
from test.common import vck5000, vit


def test_attention_workload() -> None:
    w = attention_workload(vit(), True)
    assert MatMulRole.PROJ_LB not in {mm.role for mm in w.mms}
    assert not w.has_nonlinear(NonlinearKind.LAYERNORM_ADD)
    assert w.has_nonlinear(NonlinearKind.SOFTMAX)


def test_lab_plans() -> None:
    single, _ = lab_plan(1, vit(), vck5000())
    assert [pu.id for pu in single.instances] == ['standard0']
    assert single.pm_mha == ParallelMode.SERIAL
    hybrid, _ = lab_plan(3, vit(), vck5000())
    assert hybrid.pm_mha == ParallelMode.HYBRID
    assert hybrid.p_atb == 4
    shared = {prg.allocated_pus for prg in hybrid.mha_prgs
              if prg.kind == PrgKind.QKV_LB}
    assert len(shared) == 1
    pipelined, _ = lab_plan(5, vit(), vck5000())
    for prg in pipelined.mha_prgs:
        if prg.kind == PrgKind.QKV_LB:
            assert len(prg.allocated_pus) == 4
    assert all(prg.spec.name == 'Standard' for prg in pipelined.prgs)


@pytest.mark.parametrize("lab", [0, 6, -1])
def test_lab_plan_range(lab: int) -> None:
    with pytest.raises(ConfigError, match="lab must be one of 1 to 5"):
        lab_plan(lab, vit(), vck5000())


def test_compare_modes() -> None:
    rows = compare_modes(vit(), vck5000(), batch=16)
    assert [row.lab for row in rows] == list(LABS)
    assert rows[0].speedup == 1.0
    speedups = [row.speedup for row in rows]
    assert speedups == sorted(speedups)
    assert len(set(speedups)) == len(speedups)
    assert [row.rank for row in rows] == [row.paper_rank for row in rows]
    assert 8 <= rows[3].speedup <= 22
    assert 12 <= rows[4].speedup <= 30


def test_table_row_delta() -> None:
    assert TableRow('bert-base', 'x', 1.0, 1.5).delta == 0.5
    assert TableRow('bert-base', 'x', None, 1.5).delta is None
    assert TableRow('bert-base', 'x', 1.0, None).delta is None


def test_table5() -> None:
    rows = table5(batch=2)
    assert len(rows) == 3 * 4
    values = {(row.item, row.metric): row for row in rows}
    assert set(TABLE5_PAPER) == {item for item, _ in values}
    bert_rate = values['bert-base', 'deployment_rate']
    assert bert_rate.delta == pytest.approx(0.0)
    assert values['bert-base', 'eff_util_mha'].simulated == 1.0
    for metric in ('deployment_rate', 'eff_util_mha', 'eff_util_ffn',
                   'eff_util_avg'):
        row = values['bert-base-limited', metric]
        assert row.simulated == pytest.approx(1.0)
        assert row.delta == pytest.approx(0.0)


def test_table6() -> None:
    rows = table6(batch=2)
    values = {(row.item, row.metric): row for row in rows}
    assert len(rows) == 3 * len(TABLE6_PAPER['bert-base'])
    assert values['bert-base', 'ffn.latency_ms'].simulated == \
        pytest.approx(0.081)
    assert values['bert-base', 'system.power_w'].simulated is None
    tops = values['vit-base', 'system.tops'].simulated
    assert values['vit-base', 'system.gops_per_w'].simulated == \
        pytest.approx(tops * 1e3 / 61.464)
    for (_, metric), row in values.items():
        if metric != 'system.power_w':
            assert row.simulated is not None and row.simulated > 0


def test_table6_limited_calibration() -> None:
    values = {(row.item, row.metric): row for row in table6(batch=2)}
    row = values['bert-base-limited', 'ffn.gops_per_aie']
    # 72 serial iterations of 4500 ns per batch on 64 cores
    assert row.simulated == pytest.approx(
        2 * 2 * 256 * 768 * 3072 / (72 * 4500) / 64)
    assert row.delta < -30
