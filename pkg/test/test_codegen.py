import dataclasses
import json
import random

import networkx as nx
import pytest

from cat_dse.codegen import (
    dump_graph, emit_graph, graph_from_json, graph_to_json, graph_to_text,
    to_networkx, validate_graph
)
from cat_dse.errors import CatDseError, GenerationError, InputArtifactError
from cat_dse.planner import design
from cat_dse.pu_design import ROUTING_MODEL
from cat_dse.workload import read_config
from test.common import (
    bert, golden, limited, one_large_plan, random_config, random_profile,
    vck5000
)


def test_golden_one_large() -> None:
    g = emit_graph(*one_large_plan())
    assert dump_graph(g) == golden('one-large.graph.json')
    assert graph_to_text(g) == golden('one-large.graph')


def test_one_large_routing() -> None:
    plan, p = one_large_plan()
    g = emit_graph(plan, p)
    assert len(g.kernels) == 64
    assert [plio.direction for plio in g.plios] == ['in'] * 8 + ['out'] * 4
    assert all(len(plio.packet_group) == 4 for plio in g.plios)
    assert g.metadata['plio_aie'] == 4
    assert g.metadata['routing'] == ROUTING_MODEL
    assert g.metadata['instances'] == [
        {'id': 'large0', 'spec': 'Large', 'first_core': 0, 'kernels': 64}]
    assert validate_graph(g, p).passed


def test_bert_graph() -> None:
    plan = design(bert(), vck5000())
    g = emit_graph(plan, vck5000())
    assert len(g.kernels) == 352
    assert g.metadata['views'] == []
    result = validate_graph(g, vck5000())
    assert result.passed, result.violations
    graph = to_networkx(g)
    assert nx.is_directed_acyclic_graph(graph)
    assert graph.number_of_nodes() == len(g.kernels) + len(g.plios)


def test_limited_graph_views() -> None:
    plan = design(read_config('bert-base-limited'), limited())
    g = emit_graph(plan, limited())
    assert len(g.kernels) == 64
    views = g.metadata['views']
    assert len(views) == 4 * 5
    assert sorted(len(view['kernels']) for view in views) == \
        [4] * 16 + [16] * 4
    assert validate_graph(g, limited()).passed


def test_validate_violations() -> None:
    plan, p = one_large_plan()
    g = emit_graph(plan, p)
    broken = g._replace(plios=g.plios[:-1])
    result = validate_graph(broken, p)
    assert not result.passed
    assert "kernel k48 is in 0 output groups, expected 1" in result.violations
    looped = g._replace(connections=g.connections + (('k0', 'p0'),))
    assert "connections form a cycle" in validate_graph(looped, p).violations
    dangling = g._replace(connections=g.connections + (('p0', 'k99'),))
    assert any("unknown node k99" in violation
               for violation in validate_graph(dangling, p).violations)
    narrow = p._replace(t_calc_ns=2250)
    assert any("more than PLIO_AIE=2" in violation
               for violation in validate_graph(g, narrow).violations)
    small = p._replace(total_aie=32)
    assert "graph has 64 kernels, total_aie is 32" in \
        validate_graph(g, small).violations


@pytest.mark.slow
def test_validate_random_plans() -> None:
    rng = random.Random(11)
    checked = 0
    for _ in range(500):
        cfg, p = random_config(rng), random_profile(rng)
        try:
            plan = design(cfg, p)
        except CatDseError:
            continue
        g = emit_graph(plan, p)
        result = validate_graph(g, p)
        assert result.passed, result.violations
        assert len(g.kernels) == plan.deployed_aie
        checked += 1
    assert checked > 50


def test_unknown_spec() -> None:
    plan, p = one_large_plan()
    with pytest.raises(GenerationError, match="does not define"):
        emit_graph(dataclasses.replace(plan, pu_specs=()), p)
    huge = plan.pu_specs[0]._replace(name='Huge')
    prg = plan.mha_prgs[0]
    pu = prg.allocated_pus[0]._replace(spec=huge)
    renamed = dataclasses.replace(
        plan, pu_specs=(huge,),
        mha_prgs=(dataclasses.replace(prg, allocated_pus=(pu,)),))
    with pytest.raises(GenerationError, match="unknown PU geometry Huge"):
        emit_graph(renamed, p)


def test_graph_json() -> None:
    g = emit_graph(*one_large_plan())
    assert graph_from_json(json.loads(dump_graph(g))) == g
    document = graph_to_json(g)
    with pytest.raises(InputArtifactError, match="graph_version 2"):
        graph_from_json(dict(document, graph_version=2))
    with pytest.raises(InputArtifactError, match="corrupted"):
        graph_from_json({k: v for k, v in document.items()
                         if k != 'kernels'})
    with pytest.raises(InputArtifactError, match="corrupted"):
        graph_from_json(dict(document, connections=[['p0']]))


def test_empty_plan() -> None:
    plan, p = one_large_plan()
    empty = dataclasses.replace(plan, mha_prgs=(), deployed_aie=0)
    g = emit_graph(empty, p)
    assert g.kernels == g.plios == g.connections == ()
    assert validate_graph(g, p).passed


def test_oversized_packet_group() -> None:
    plan, p = one_large_plan()
    g = emit_graph(plan, p)
    first = g.plios[0]
    wide = first._replace(packet_group=first.packet_group
                          + (first.packet_group[0],))
    result = validate_graph(g._replace(plios=(wide,) + g.plios[1:]), p)
    assert result.violations == (
        "packet group of PLIO p0 has 5 packets, more than PLIO_AIE=4",)
