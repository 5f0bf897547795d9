import math
import random

import pytest

from cat_dse.errors import InfeasiblePlanError, PlanningError
from cat_dse.platform import derive_plio_aie
from cat_dse.pu_design import (
    PuSpec, audit_geometry, enumerate_pu_specs, max_mmsz, pu_invocation_time,
    pu_routing, tile_mm, tile_shape
)
from cat_dse.workload import MatMulRole, MatMulSpec, Stage
from test.common import limited, vck5000


def specs_by_name():
    return {spec.name: spec for spec in enumerate_pu_specs(vck5000())}


def test_max_mmsz_vck5000() -> None:
    assert max_mmsz(vck5000(), 8) == 64
    assert max_mmsz(vck5000(), 16) == 64
    assert max_mmsz(vck5000(), 32) == 32


def test_max_mmsz_brute_force() -> None:
    rng = random.Random(3)
    for _ in range(100):
        window = rng.randint(4, 1 << 17)
        bits = rng.choice([8, 16, 32])
        p = vck5000()._replace(m_window_bytes=window)
        fits = [s for s in range(1, 1025)
                if s * s * bits / 8 <= window / 4]
        powers = [s for s in fits if s & (s - 1) == 0]
        if powers:
            assert max_mmsz(p, bits) == max(powers)
        else:
            with pytest.raises(InfeasiblePlanError):
                max_mmsz(p, bits)


def test_enumerate_vck5000() -> None:
    specs = specs_by_name()
    assert specs['Large'] == PuSpec('Large', 64, 8, 4, 4, 4, 4, 64)
    assert specs['Standard'].tile == (2, 4, 2)
    assert specs['Standard'].core_count == 16
    assert specs['Small'].tile == (1, 1, 4)
    assert specs['Small'].extents == (64, 64, 256)
    assert specs['Large'].invocation_macs == 256 ** 3


def test_audit_shipped_geometries() -> None:
    for spec in enumerate_pu_specs(vck5000()):
        assert audit_geometry(spec, 4) == []


def test_routing_large() -> None:
    routing = pu_routing(specs_by_name()['Large'], 4)
    assert len(routing.inputs) == 8
    assert len(routing.outputs) == 4
    assert len(routing.cores) == 64
    for plio in routing.plios:
        assert len(plio.packets) == 4
    for plio in routing.inputs:
        assert len(plio.cores) == 16


def test_audit_violation() -> None:
    wide = specs_by_name()['Large']._replace(name='Large', core_count=63)
    violations = audit_geometry(wide, 4)
    assert violations == ["Large has 63 cores but its tile holds 64"]
    # the same tile with half the multiplexing bound overloads channels
    violations = audit_geometry(specs_by_name()['Large'], 2)
    assert any("more than PLIO_AIE=2" in v for v in violations)


def test_enumerate_omits_oversized() -> None:
    p = vck5000()._replace(total_aie=32)
    names = [spec.name for spec in enumerate_pu_specs(p)]
    assert names == ['Standard', 'Small']


def test_enumerate_needs_plio() -> None:
    p = vck5000()._replace(t_calc_ns=1000)
    assert derive_plio_aie(p) == 1
    with pytest.raises(PlanningError, match="PLIO_AIE=1"):
        enumerate_pu_specs(p)


def test_tile_exact() -> None:
    large = specs_by_name()['Large']
    tiling = tile_shape((256, 768, 3072), large)
    assert tiling.invocations == 36
    assert tiling.efficiency == 1.0
    assert tiling.padded_shape == (256, 768, 3072)


def test_tile_small_padding() -> None:
    tiling = tile_shape((197, 64, 197), specs_by_name()['Small'])
    assert tiling.padded_shape == (256, 64, 256)
    assert tiling.efficiency == pytest.approx(0.592, abs=1e-3)


def test_tile_monotone() -> None:
    rng = random.Random(9)
    specs = list(specs_by_name().values())
    for _ in range(300):
        shape = [rng.randint(1, 4000) for _ in range(3)]
        spec = rng.choice(specs)
        before = tile_shape((shape[0], shape[1], shape[2]), spec)
        shape[rng.randrange(3)] += rng.randint(1, 1000)
        after = tile_shape((shape[0], shape[1], shape[2]), spec)
        assert after.invocations >= before.invocations


def test_tile_padding() -> None:
    large = specs_by_name()['Large']
    mm = MatMulSpec(197, 768, 64, 12, Stage.MHA, MatMulRole.QKV_LB)
    tiling = tile_mm(mm, large)
    assert tiling.padded_shape == (256, 768, 256)
    assert tiling.invocations == 3
    assert tiling.useful_macs == 197 * 768 * 64
    assert tiling.efficiency == pytest.approx(
        197 * 768 * 64 / (256 * 768 * 256))


def test_tile_random_covers_product() -> None:
    rng = random.Random(5)
    specs = list(specs_by_name().values())
    for _ in range(200):
        shape = (rng.randint(1, 4000), rng.randint(1, 4000),
                 rng.randint(1, 4000))
        spec = rng.choice(specs)
        tiling = tile_shape(shape, spec)
        assert tiling.padded_macs >= tiling.useful_macs
        assert tiling.invocations * spec.invocation_macs == \
            tiling.padded_macs
        for dim, padded, ext in zip(shape, tiling.padded_shape,
                                    spec.extents):
            assert padded == math.ceil(dim / ext) * ext


def test_invocation_time() -> None:
    specs = specs_by_name()
    for spec in specs.values():
        assert pu_invocation_time(spec, vck5000()) == 4500
    # four windows per channel outlast one iteration
    p = vck5000()._replace(t_window_ns=1500)
    assert derive_plio_aie(p) == 3
    assert pu_invocation_time(specs['Large'], p) == 6000


def test_limited_profile_keeps_large() -> None:
    names = [spec.name for spec in enumerate_pu_specs(limited())]
    assert names == ['Large', 'Standard', 'Small']
