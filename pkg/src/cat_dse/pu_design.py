"""
    AIE MM PU specifications and the block tiling of matrix
    multiplications onto them.

    .. autoclass:: PuSpec
        :members:

    .. autoclass:: TilingPlan
        :members:

    .. autofunction:: max_mmsz

    .. autofunction:: geometry_for

    .. autofunction:: build_spec

    .. autofunction:: pu_routing

    .. autofunction:: audit_geometry

    .. autofunction:: enumerate_pu_specs

    .. autofunction:: tile_shape

    .. autofunction:: tile_mm

    .. autofunction:: pu_invocation_time
"""

import math
from typing import Any, Dict, List, Mapping, NamedTuple, Sequence, Tuple

from sphinx.util.logging import getLogger

from .errors import InfeasiblePlanError, PlanningError
from .geometry import BasePuGeometry, PuRouting
from .platform import PlatformProfile, derive_plio_aie
from .plugin import PU_GEOMETRY_GROUP, find_plugin
from .workload import MatMulSpec


logger = getLogger(__name__)

DEFAULT_GEOMETRIES = ('large', 'standard', 'small')

#: How PU routing satisfies the PLIO multiplexing bound.
ROUTING_MODEL = ("at most PLIO_AIE^2 cores per core group, each group behind "
                 "its own input PLIO pair")


class PuSpec(NamedTuple):
    """A rectangular group of AIE cores with its PLIO channels.

    One invocation computes a (tile_m * mmsz) x (tile_k * mmsz) by
    (tile_k * mmsz) x (tile_n * mmsz) block product.
    """
    name: str
    core_count: int
    in_plio: int
    out_plio: int
    tile_m: int
    tile_k: int
    tile_n: int
    mmsz: int  #: MMSZ_AIE, the single-core block size.

    @property
    def tile(self) -> Tuple[int, int, int]:
        return self.tile_m, self.tile_k, self.tile_n

    @property
    def extents(self) -> Tuple[int, int, int]:
        """Matrix extents along m, k and n of one invocation."""
        return (self.tile_m * self.mmsz, self.tile_k * self.mmsz,
                self.tile_n * self.mmsz)

    @property
    def invocation_macs(self) -> int:
        return math.prod(self.extents)

    def to_json(self) -> Dict[str, Any]:
        return {'name': self.name, 'core_count': self.core_count,
                'in_plio': self.in_plio, 'out_plio': self.out_plio,
                'tile': list(self.tile), 'mmsz': self.mmsz}

    @classmethod
    def from_json(cls, document: Mapping[str, Any]) -> "PuSpec":
        tile_m, tile_k, tile_n = (int(x) for x in document['tile'])
        return cls(name=str(document['name']),
                   core_count=int(document['core_count']),
                   in_plio=int(document['in_plio']),
                   out_plio=int(document['out_plio']),
                   tile_m=tile_m, tile_k=tile_k, tile_n=tile_n,
                   mmsz=int(document['mmsz']))


class TilingPlan(NamedTuple):
    """Block decomposition of one matrix multiplication onto a PU."""
    pu: PuSpec
    invocations: int   #: PU invocations for one instance of the product.
    padded_m: int
    padded_k: int
    padded_n: int
    useful_macs: int
    padded_macs: int
    efficiency: float  #: useful_macs / padded_macs

    @property
    def padded_shape(self) -> Tuple[int, int, int]:
        return self.padded_m, self.padded_k, self.padded_n


def max_mmsz(p: PlatformProfile, data_bits: int) -> int:
    """Largest power of two *s* with s * s * (data_bits / 8) bytes fitting
    in a quarter of the window memory (input and output windows, double
    buffered).
    """
    # s^2 * bits/8 <= m_window/4, in integers
    budget = 2 * p.m_window_bytes
    if data_bits > budget:
        raise InfeasiblePlanError(
            f"no block size fits m_window_bytes={p.m_window_bytes} "
            f"at {data_bits} bits")
    size = 1
    while (2 * size) ** 2 * data_bits <= budget:
        size *= 2
    return size


def geometry_for(name: str) -> BasePuGeometry:
    """Instantiate the geometry plugin called *name* (case insensitive)."""
    return find_plugin(PU_GEOMETRY_GROUP, name.lower())()


def build_spec(geometry: BasePuGeometry, plio_aie: int, mmsz: int
               ) -> PuSpec:
    tile = geometry.tile(plio_aie)
    routing = geometry.routing(tile, plio_aie)
    return PuSpec(name=geometry.name, core_count=math.prod(tile),
                  in_plio=len(routing.inputs), out_plio=len(routing.outputs),
                  tile_m=tile[0], tile_k=tile[1], tile_n=tile[2], mmsz=mmsz)


def pu_routing(spec: PuSpec, plio_aie: int) -> PuRouting:
    """Routing table of *spec*, looked up through its geometry plugin."""
    return geometry_for(spec.name).routing(spec.tile, plio_aie)


def audit_geometry(spec: PuSpec, plio_aie: int) -> List[str]:
    """Check every channel of *spec* against the PLIO multiplexing bound.

    A channel may carry at most *plio_aie* packets, and the cores behind
    one input channel form a two-dimensional group of at most
    *plio_aie* squared cores. Returns the list of violations.
    """
    violations = []
    routing = pu_routing(spec, plio_aie)
    for index, plio in enumerate(routing.plios):
        label = f"{spec.name} {plio.direction}-PLIO {index}"
        if len(plio.packets) > plio_aie:
            violations.append(
                f"{label} carries {len(plio.packets)} packets, "
                f"more than PLIO_AIE={plio_aie}")
        if plio.direction == 'in' and len(plio.cores) > plio_aie ** 2:
            violations.append(
                f"{label} serves {len(plio.cores)} cores, "
                f"more than PLIO_AIE^2={plio_aie ** 2}")
    if spec.core_count != len(routing.cores):
        violations.append(
            f"{spec.name} has {spec.core_count} cores but its tile "
            f"holds {len(routing.cores)}")
    return violations


def enumerate_pu_specs(p: PlatformProfile, data_bits: int = 8,
                       geometries: Sequence[str] = DEFAULT_GEOMETRIES
                       ) -> List[PuSpec]:
    """PU specifications that satisfy the window and PLIO constraints of
    *p*. Geometries that violate them, or that need more cores than the
    platform has, are omitted with a warning.
    """
    plio_aie = derive_plio_aie(p)
    if plio_aie < 2:
        raise PlanningError(
            f"profile {p.name} gives PLIO_AIE={plio_aie}, at least 2 needed")
    mmsz = max_mmsz(p, data_bits)
    specs = []
    for name in geometries:
        spec = build_spec(geometry_for(name), plio_aie, mmsz)
        violations = audit_geometry(spec, plio_aie)
        if spec.core_count > p.total_aie:
            violations.append(
                f"{spec.name} needs {spec.core_count} cores, "
                f"total_aie is {p.total_aie}")
        if violations:
            for violation in violations:
                logger.warning(f"omitting PU geometry: {violation}",
                               type="cat_dse", subtype="pu_geometry")
            continue
        specs.append(spec)
    return specs


def tile_shape(shape: Tuple[int, int, int], pu: PuSpec) -> TilingPlan:
    """Tile an m x k x n product, padding every dimension up to a whole
    number of PU invocations. Partial products along k accumulate over
    consecutive invocations.
    """
    counts = [math.ceil(dim / ext) for dim, ext in zip(shape, pu.extents)]
    padded = [count * ext for count, ext in zip(counts, pu.extents)]
    useful = math.prod(shape)
    padded_macs = math.prod(padded)
    return TilingPlan(pu=pu, invocations=math.prod(counts),
                      padded_m=padded[0], padded_k=padded[1],
                      padded_n=padded[2], useful_macs=useful,
                      padded_macs=padded_macs,
                      efficiency=useful / padded_macs)


def tile_mm(mm: MatMulSpec, pu: PuSpec) -> TilingPlan:
    """Tile one instance of *mm* onto *pu*."""
    return tile_shape(mm.shape, pu)


def pu_invocation_time(pu: PuSpec, p: PlatformProfile) -> float:
    """T_PU: the single-core iteration time, unless a channel must send
    more windows per invocation than fit in it.
    """
    plio_aie = derive_plio_aie(p)
    routing = pu_routing(pu, plio_aie)
    packets = max(len(plio.packets) for plio in routing.plios)
    return max(p.t_calc_ns, packets * p.t_window_ns)
