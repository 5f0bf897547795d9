"""
    AIE dataflow graph generation. The graph lists one kernel per deployed
    AIE core, the PLIO channels of every PU instance with their
    packet-switch groups, and the stream and cascade connections between
    them.

    .. autoclass:: Kernel
        :members:

    .. autoclass:: Plio
        :members:

    .. autoclass:: GraphDescription
        :members:

    .. autoclass:: ValidationReport
        :members:

    .. autofunction:: emit_graph

    .. autofunction:: validate_graph

    .. autofunction:: graph_to_json

    .. autofunction:: graph_from_json

    .. autofunction:: dump_graph

    .. autofunction:: graph_to_text

    .. autofunction:: to_networkx
"""

import json
from collections import Counter
from typing import Any, Dict, List, Mapping, NamedTuple, Tuple

import networkx as nx
from sphinx.util.logging import getLogger

from . import __version__
from .errors import GenerationError, InputArtifactError
from .geometry import Coord
from .planner import EdpuPlan, plan_hash
from .platform import PlatformProfile, derive_plio_aie
from .pu_design import ROUTING_MODEL, pu_routing


logger = getLogger(__name__)

GRAPH_VERSION = 1


class Kernel(NamedTuple):
    id: str
    pu_instance: str
    tile_coord: Coord


class Plio(NamedTuple):
    """A PLIO channel. Each packet of the group reaches a list of kernels,
    in ascending kernel order.
    """
    id: str
    direction: str  #: ``"in"`` or ``"out"``.
    pu_instance: str
    operand: str
    packet_group: Tuple[Tuple[str, ...], ...]

    @property
    def kernels(self) -> List[str]:
        return sorted({kernel for packet in self.packet_group
                       for kernel in packet}, key=_kernel_index)


class GraphDescription(NamedTuple):
    kernels: Tuple[Kernel, ...]
    plios: Tuple[Plio, ...]
    connections: Tuple[Tuple[str, str], ...]
    metadata: Dict[str, Any]


class ValidationReport(NamedTuple):
    passed: bool
    violations: Tuple[str, ...]


def _kernel_index(kernel_id: str) -> Tuple[int, str]:
    # k2 before k10
    return len(kernel_id), kernel_id


def emit_graph(plan: EdpuPlan, p: PlatformProfile) -> GraphDescription:
    """Graph of the physical PU instances of *plan*, ordered by instance
    and then by block coordinate.

    :raises GenerationError: if an instance uses a PU specification
        whose geometry is unknown.
    """
    logger.info(f"emitting graph for {len(plan.physical_instances)} "
                f"PU instances... ", nonl=True)
    plio_aie = derive_plio_aie(p)
    known_specs = set(plan.pu_specs)
    kernels: List[Kernel] = []
    plios: List[Plio] = []
    connections: List[Tuple[str, str]] = []
    core_kernel: Dict[int, str] = {}
    instances = []
    for pu in plan.physical_instances:
        if pu.spec not in known_specs:
            raise GenerationError(
                f"PU instance {pu.id} references PU specification "
                f"{pu.spec.name}, which the plan does not define")
        try:
            routing = pu_routing(pu.spec, plio_aie)
        except ImportError:
            raise GenerationError(
                f"PU instance {pu.id} references unknown PU geometry "
                f"{pu.spec.name}")
        ids: Dict[Coord, str] = {}
        for offset, coord in enumerate(routing.cores):
            kernel_id = f"k{len(kernels)}"
            ids[coord] = kernel_id
            core_kernel[pu.first_core + offset] = kernel_id
            kernels.append(Kernel(kernel_id, pu.id, coord))
        instances.append({'id': pu.id, 'spec': pu.spec.name,
                          'first_core': pu.first_core,
                          'kernels': len(routing.cores)})
        for route in routing.inputs:
            plio = Plio(f"p{len(plios)}", 'in', pu.id, route.operand,
                        tuple(tuple(sorted((ids[c] for c in packet),
                                           key=_kernel_index))
                              for packet in route.packets))
            plios.append(plio)
            connections.extend((plio.id, kernel) for kernel in plio.kernels)
        for route in routing.outputs:
            plio = Plio(f"p{len(plios)}", 'out', pu.id, route.operand,
                        tuple(tuple(ids[c] for c in chain)
                              for chain in route.packets))
            plios.append(plio)
            for chain in plio.packet_group:
                connections.extend(zip(chain, chain[1:]))
                connections.append((chain[-1], plio.id))
    views = [{'id': pu.id, 'spec': pu.spec.name,
              'kernels': [core_kernel[core] for core in pu.cores
                          if core in core_kernel]}
             for pu in plan.instances if pu.view]
    metadata = {
        'graph_version': GRAPH_VERSION,
        'generator': f"cat-dse {__version__}",
        'plan_hash': plan_hash(plan),
        'plio_aie': plio_aie,
        'routing': ROUTING_MODEL,
        'instances': instances,
        'views': views,
    }
    logger.info("done")
    return GraphDescription(tuple(kernels), tuple(plios), tuple(connections),
                            metadata)


def to_networkx(g: GraphDescription) -> nx.DiGraph:
    """Kernels and PLIOs as nodes, connections as edges."""
    graph = nx.DiGraph()
    for kernel in g.kernels:
        graph.add_node(kernel.id, kind='kernel', pu=kernel.pu_instance,
                       at=kernel.tile_coord)
    for plio in g.plios:
        graph.add_node(plio.id, kind='plio', direction=plio.direction,
                       pu=plio.pu_instance)
    graph.add_edges_from(g.connections)
    return graph


def validate_graph(g: GraphDescription, p: PlatformProfile
                   ) -> ValidationReport:
    """Check packet groups, kernel coverage, core count and connections."""
    plio_aie = derive_plio_aie(p)
    violations = []
    kernel_ids = [kernel.id for kernel in g.kernels]
    duplicates = sorted(kernel for kernel, count in Counter(kernel_ids).items()
                        if count > 1)
    if duplicates:
        violations.append(f"duplicate kernel ids: {', '.join(duplicates)}")
    known = set(kernel_ids)
    in_groups: Counter = Counter()
    out_groups: Counter = Counter()
    for plio in g.plios:
        if plio.direction not in ('in', 'out'):
            violations.append(
                f"PLIO {plio.id} has invalid direction {plio.direction!r}")
            continue
        if len(plio.packet_group) > plio_aie:
            violations.append(
                f"packet group of PLIO {plio.id} has "
                f"{len(plio.packet_group)} packets, more than "
                f"PLIO_AIE={plio_aie}")
        unknown = [kernel for kernel in plio.kernels if kernel not in known]
        if unknown:
            violations.append(
                f"packet group of PLIO {plio.id} references unknown "
                f"kernels {', '.join(unknown)}")
        groups = in_groups if plio.direction == 'in' else out_groups
        groups.update(plio.kernels)
    for kernel in g.kernels:
        if in_groups[kernel.id] < 1:
            violations.append(f"kernel {kernel.id} is in no input group")
        if out_groups[kernel.id] != 1:
            violations.append(
                f"kernel {kernel.id} is in {out_groups[kernel.id]} output "
                f"groups, expected 1")
    if len(g.kernels) > p.total_aie:
        violations.append(
            f"graph has {len(g.kernels)} kernels, total_aie is "
            f"{p.total_aie}")
    instances = g.metadata.get('instances')
    if instances is not None:
        expected = sum(instance['kernels'] for instance in instances)
        if expected != len(g.kernels):
            violations.append(
                f"graph has {len(g.kernels)} kernels, its PU instances "
                f"hold {expected} cores")
    nodes = known | {plio.id for plio in g.plios}
    for source, sink in g.connections:
        for node in (source, sink):
            if node not in nodes:
                violations.append(
                    f"connection {source} -> {sink} references unknown "
                    f"node {node}")
    if not nx.is_directed_acyclic_graph(to_networkx(g)):
        violations.append("connections form a cycle")
    return ValidationReport(not violations, tuple(violations))


def graph_to_json(g: GraphDescription) -> Dict[str, Any]:
    """Graph document, schema version :data:`GRAPH_VERSION`."""
    return {
        'graph_version': GRAPH_VERSION,
        'metadata': g.metadata,
        'kernels': [{'id': kernel.id, 'pu_instance': kernel.pu_instance,
                     'tile_coord': list(kernel.tile_coord)}
                    for kernel in g.kernels],
        'plios': [{'id': plio.id, 'direction': plio.direction,
                   'pu_instance': plio.pu_instance, 'operand': plio.operand,
                   'packet_group': [list(packet)
                                    for packet in plio.packet_group]}
                  for plio in g.plios],
        'connections': [list(connection) for connection in g.connections],
    }


def graph_from_json(document: Mapping[str, Any]) -> GraphDescription:
    """Parse a graph document.

    :raises InputArtifactError: if the document is not a valid graph.
    """
    try:
        if document.get('graph_version') != GRAPH_VERSION:
            raise InputArtifactError(
                f"unsupported graph_version "
                f"{document.get('graph_version')!r}")
        kernels = tuple(
            Kernel(str(kernel['id']), str(kernel['pu_instance']),
                   (int(kernel['tile_coord'][0]),
                    int(kernel['tile_coord'][1]),
                    int(kernel['tile_coord'][2])))
            for kernel in document['kernels'])
        plios = tuple(
            Plio(str(plio['id']), str(plio['direction']),
                 str(plio['pu_instance']), str(plio['operand']),
                 tuple(tuple(str(kernel) for kernel in packet)
                       for packet in plio['packet_group']))
            for plio in document['plios'])
        connections = tuple((str(source), str(sink))
                            for source, sink in document['connections'])
        return GraphDescription(kernels, plios, connections,
                                dict(document['metadata']))
    except (AttributeError, IndexError, KeyError, TypeError,
            ValueError) as exc:
        raise InputArtifactError(f"corrupted graph: {exc!r}")


def dump_graph(g: GraphDescription) -> str:
    """Canonical JSON text of *g*."""
    return json.dumps(graph_to_json(g), indent=1, sort_keys=True) + '\n'


def graph_to_text(g: GraphDescription) -> str:
    """Human-readable form, one line per kernel, PLIO and connection."""
    lines = [f"# graph_version={GRAPH_VERSION} "
             f"plan={g.metadata.get('plan_hash', '')}"]
    for kernel in g.kernels:
        i, j, k = kernel.tile_coord
        lines.append(f"kernel {kernel.id} pu={kernel.pu_instance} "
                     f"at=({i},{j},{k})")
    for plio in g.plios:
        group = ','.join('[' + ','.join(packet) + ']'
                         for packet in plio.packet_group)
        lines.append(f"plio {plio.direction} {plio.id} group=[{group}]")
    for source, sink in g.connections:
        lines.append(f"connect {source} -> {sink}")
    return '\n'.join(lines) + '\n'
