"""
    Customization strategy: parallel mode decisions, ATB parallelism, and
    allocation of PUs to PRGs.

    .. autoclass:: ParallelMode
        :members:

    .. autoclass:: Trigger
        :members:

    .. autoclass:: PrgKind
        :members:

    .. autoclass:: PlanDecision
        :members:

    .. autoclass:: AtbRatio
        :members:

    .. autoclass:: PuInstance
        :members:

    .. autoclass:: PrgNode
        :members:

    .. autoclass:: EdpuPlan
        :members:

    .. autoclass:: CoreAllocator
        :members:

    .. autofunction:: largest_spec

    .. autofunction:: engine_scale

    .. autofunction:: compute_factor1

    .. autofunction:: buffer_components

    .. autofunction:: buffer_footprint

    .. autofunction:: decide_parallel_mode

    .. autofunction:: atb_ratio

    .. autofunction:: decide_p_atb

    .. autofunction:: allocate

    .. autofunction:: assemble_plan

    .. autofunction:: design

    .. autofunction:: plan_to_json

    .. autofunction:: plan_from_json

    .. autofunction:: plan_hash
"""

import hashlib
import json
import math
from collections import Counter
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import (
    Any, Dict, FrozenSet, Iterable, List, Mapping, NamedTuple, Optional,
    Sequence, Tuple
)

from sphinx.util.logging import getLogger

from .errors import (
    ConfigError, InfeasiblePlanError, InputArtifactError, PlanningError
)
from .platform import PlatformProfile, derive_plio_aie
from .pu_design import (
    DEFAULT_GEOMETRIES, PuSpec, enumerate_pu_specs, pu_invocation_time,
    tile_shape
)
from .workload import (
    MatMulRole, MatMulSpec, Stage, TransformerConfig, Workload,
    derive_workload, load_config, stage_workload
)


logger = getLogger(__name__)

PLAN_VERSION = 1

#: PRG_MAX_Pipeline_Depth: QKV LB, ATB-pre, ATB-post, Proj LB for MHA;
#: the two linear layers for FFN.
PIPELINE_DEPTH: Dict[Stage, int] = {Stage.MHA: 4, Stage.FFN: 2}


class ParallelMode(str, Enum):
    FULLY_PIPELINED = 'FullyPipelined'
    HYBRID = 'HybridSerialAtbParallel'
    SERIAL = 'Serial'


class Trigger(str, Enum):
    NONE = 'None'
    FACTOR1 = 'Factor1'
    FACTOR2 = 'Factor2'
    BOTH = 'Both'


class PrgKind(str, Enum):
    QKV_LB = 'QkvLB'
    PROJ_LB = 'ProjLB'
    ATB_PRE = 'AtbPre'
    ATB_POST = 'AtbPost'
    FFN1_LB = 'Ffn1LB'
    FFN2_LB = 'Ffn2LB'


LB_KINDS = (PrgKind.QKV_LB, PrgKind.PROJ_LB)


@dataclass(frozen=True)
class PlanDecision:
    """Outcome of the parallel mode decision of one stage."""
    stage: Stage
    factor1: float
    factor2_bytes: int
    max_pipeline_depth: int
    chosen: ParallelMode
    triggered_by: Trigger
    total_buffer_bytes: int
    #: Factor1 with the literal engine count floor(Total_AIE/PLIO_AIE^2).
    factor1_strict: Optional[float] = None

    def to_json(self) -> Dict[str, Any]:
        return {'stage': self.stage.value, 'factor1': self.factor1,
                'factor2_bytes': self.factor2_bytes,
                'max_pipeline_depth': self.max_pipeline_depth,
                'chosen': self.chosen.value,
                'triggered_by': self.triggered_by.value,
                'total_buffer_bytes': self.total_buffer_bytes,
                'factor1_strict': self.factor1_strict}

    @classmethod
    def from_json(cls, document: Mapping[str, Any]) -> "PlanDecision":
        strict = document.get('factor1_strict')
        return cls(stage=Stage(document['stage']),
                   factor1=float(document['factor1']),
                   factor2_bytes=int(document['factor2_bytes']),
                   max_pipeline_depth=int(document['max_pipeline_depth']),
                   chosen=ParallelMode(document['chosen']),
                   triggered_by=Trigger(document['triggered_by']),
                   total_buffer_bytes=int(document['total_buffer_bytes']),
                   factor1_strict=None if strict is None else float(strict))


class AtbRatio(NamedTuple):
    """Data exchange between the QKV LB and one ATB."""
    qkv_output_heads: int    #: Heads produced by one QKV LB execution.
    atb_input_heads: int     #: Heads consumed by one ATB execution.
    throughput_qkv: float    #: Heads per second produced by the QKV LB.
    throughput_atb: float    #: Heads per second consumed by one ATB.


class PuInstance(NamedTuple):
    """A PU occupying a contiguous range of physical cores.

    Views are reconfigurations of cores that belong to other instances;
    they do not add to the deployed core count.
    """
    id: str
    spec: PuSpec
    first_core: int
    view: bool = False

    @property
    def cores(self) -> range:
        return range(self.first_core, self.first_core + self.spec.core_count)


@dataclass(frozen=True)
class PrgNode:
    """A parallel region: one PU group plus its PL buffers."""
    id: str
    kind: PrgKind
    stage: Stage
    assigned_mms: Tuple[MatMulSpec, ...]
    allocated_pus: Tuple[PuInstance, ...]
    buffers: Tuple[Tuple[str, int], ...] = ()
    lane: Optional[int] = None      #: ATB lane, for per-lane PRGs.
    heads: Tuple[int, ...] = ()     #: Heads handled by per-lane PRGs.
    operand: str = ''               #: ``q``, ``k`` or ``v`` for QKV PRGs.

    def __post_init__(self) -> None:
        if len({pu.spec for pu in self.allocated_pus}) > 1:
            raise PlanningError(f"PRG {self.id} mixes PU specifications")

    @property
    def spec(self) -> PuSpec:
        if not self.allocated_pus:
            raise PlanningError(f"PRG {self.id} has no PU allocated")
        return self.allocated_pus[0].spec

    @property
    def cores(self) -> FrozenSet[int]:
        return frozenset(core for pu in self.allocated_pus
                         for core in pu.cores)

    def pu_groups(self) -> List[Tuple[PuSpec, int]]:
        """The PU group as (specification, instance count) pairs."""
        counts = Counter(pu.spec for pu in self.allocated_pus)
        return list(counts.items())


@dataclass(frozen=True)
class EdpuPlan:
    """The customized accelerator."""
    cfg: TransformerConfig
    profile_name: str
    total_aie: int
    independent_linear: bool
    pm_mha: ParallelMode
    pm_ffn: ParallelMode
    p_atb: int
    mha_prgs: Tuple[PrgNode, ...]
    ffn_prgs: Tuple[PrgNode, ...]
    pu_specs: Tuple[PuSpec, ...]
    deployed_aie: int
    deployment_rate: float
    buffer_footprint_bytes: int
    decisions: Optional[Tuple[PlanDecision, PlanDecision]] = None
    atb_ratio: Optional[AtbRatio] = None
    notes: Tuple[str, ...] = field(default_factory=tuple)

    @property
    def prgs(self) -> Tuple[PrgNode, ...]:
        return self.mha_prgs + self.ffn_prgs

    @property
    def instances(self) -> List[PuInstance]:
        """Distinct PU instances, physical ones first, by first core."""
        found: Dict[str, PuInstance] = {}
        for prg in self.prgs:
            for pu in prg.allocated_pus:
                found.setdefault(pu.id, pu)
        return sorted(found.values(),
                      key=lambda pu: (pu.view, pu.first_core, pu.id))

    @property
    def physical_instances(self) -> List[PuInstance]:
        return [pu for pu in self.instances if not pu.view]

    def stage_prgs(self, stage: Stage) -> Tuple[PrgNode, ...]:
        return self.mha_prgs if stage == Stage.MHA else self.ffn_prgs


def largest_spec(specs: Sequence[PuSpec]) -> PuSpec:
    if not specs:
        raise PlanningError("no PU specification available")
    return max(specs, key=lambda s: (s.core_count, s.invocation_macs))


def engine_scale(p: PlatformProfile, specs: Sequence[PuSpec],
                 strict: bool = False) -> int:
    """MACs the whole computation engine completes in one invocation:
    N_max largest PUs working at once.
    """
    largest = largest_spec(specs)
    if strict:
        plio_aie = derive_plio_aie(p)
        count = p.total_aie // plio_aie ** 2
        scale = (plio_aie * largest.mmsz) ** 3
    else:
        count = p.total_aie // largest.core_count
        scale = largest.invocation_macs
    if count == 0:
        raise PlanningError(
            f"profile {p.name} cannot hold a single {largest.name} PU")
    return count * scale


def compute_factor1(stage: Stage, cfg: TransformerConfig, p: PlatformProfile,
                    specs: Sequence[PuSpec], strict: bool = False) -> float:
    """Ratio of the stage's linear layer scale to the engine scale."""
    L, E = cfg.seq_len, cfg.embed_dim
    numerator = L * E * E if stage == Stage.MHA else L * E * cfg.dff
    return numerator / engine_scale(p, specs, strict=strict)


def _split(total: int, parts: int) -> List[int]:
    """Split *total* into *parts* near-equal shares, larger ones first."""
    share, extra = divmod(total, parts)
    return [share + (1 if index < extra else 0) for index in range(parts)]


def buffer_components(cfg: TransformerConfig, p_atb: int,
                      mode: ParallelMode, stage: Stage = Stage.MHA
                      ) -> List[Tuple[str, int]]:
    """On-chip buffers in bytes, weights resident.

    For the MHA stage the terms are the QKV LB output cache, the ATB input
    and output buffers, the attention score buffer (half of the score
    matrix, double buffered), the projection input and output, and the
    weights of all linear layers.
    """
    L, E, hd = cfg.seq_len, cfg.embed_dim, cfg.head_dim
    bpe = cfg.bytes_per_element
    if stage == Stage.FFN:
        terms = [('ffn_in', L * E), ('ffn_hidden', L * cfg.dff),
                 ('ffn_out', L * E), ('ffn_weights', 2 * E * cfg.dff)]
        return [(label, size * bpe) for label, size in terms]
    p = 1 if mode == ParallelMode.SERIAL else p_atb
    if mode == ParallelMode.FULLY_PIPELINED:
        qkv_out = 3 * L * hd * p
    else:
        qkv_out = 3 * L * E
    terms = [
        ('qkv_out', qkv_out),
        ('atb_io', 4 * L * hd * p),
        ('attn', (L * L * p + 1) // 2),
        ('proj_io', L * E + L * hd * p),
        ('weights', 4 * E * E + 2 * E * cfg.dff),
    ]
    return [(label, size * bpe) for label, size in terms]


def buffer_footprint(cfg: TransformerConfig, p_atb: int, mode: ParallelMode,
                     stage: Stage = Stage.MHA) -> int:
    """Factor2: total buffer bytes of the stage."""
    return sum(size for _, size in
               buffer_components(cfg, p_atb, mode, stage))


def decide_parallel_mode(stage: Stage, cfg: TransformerConfig,
                         p: PlatformProfile, specs: Sequence[PuSpec],
                         p_atb: int, independent_linear: bool = True,
                         strict_factor1: bool = False) -> PlanDecision:
    """Fully pipelined unless the linear layers outgrow the pipeline or
    the buffers outgrow the on-chip memory. In that case the stage runs
    serially, with parallel ATBs unless every MM of the stage exceeds the
    engine scale.
    """
    factor1 = compute_factor1(stage, cfg, p, specs)
    factor2 = buffer_footprint(cfg, p_atb, ParallelMode.FULLY_PIPELINED,
                               stage)
    depth = PIPELINE_DEPTH[stage]
    by_factor1 = factor1 >= depth
    by_factor2 = factor2 > p.total_buffer_bytes
    if by_factor1 and by_factor2:
        trigger = Trigger.BOTH
    elif by_factor1:
        trigger = Trigger.FACTOR1
    elif by_factor2:
        trigger = Trigger.FACTOR2
    else:
        trigger = Trigger.NONE
    if trigger == Trigger.NONE:
        chosen = ParallelMode.FULLY_PIPELINED
    else:
        scale = engine_scale(p, specs)
        w = stage_workload(derive_workload(cfg, independent_linear), stage)
        if all(mm.macs > scale for mm in w.mms):
            chosen = ParallelMode.SERIAL
        else:
            chosen = ParallelMode.HYBRID
    strict = (compute_factor1(stage, cfg, p, specs, strict=True)
              if strict_factor1 else None)
    return PlanDecision(stage=stage, factor1=factor1, factor2_bytes=factor2,
                        max_pipeline_depth=depth, chosen=chosen,
                        triggered_by=trigger,
                        total_buffer_bytes=p.total_buffer_bytes,
                        factor1_strict=strict)


def _best_fit_spec(shape: Tuple[int, int, int], specs: Sequence[PuSpec]
                   ) -> PuSpec:
    """Spec with the least padding for *shape*; larger PUs win ties."""
    return min(specs, key=lambda s: (tile_shape(shape, s).padded_macs,
                                     -s.core_count))


def atb_ratio(cfg: TransformerConfig, p: PlatformProfile,
              specs: Sequence[PuSpec]) -> AtbRatio:
    """Heads exchanged per execution between the QKV LB, running on the
    largest PU, and one ATB, each of whose MMs runs on one instance of its
    best fitting PU.
    """
    L, E, hd = cfg.seq_len, cfg.embed_dim, cfg.head_dim
    largest = largest_spec(specs)
    m_ext, k_ext, n_ext = largest.extents
    common = math.gcd(n_ext, hd)
    lb_ns = (math.ceil(L / m_ext) * math.ceil(E / k_ext)
             * pu_invocation_time(largest, p))
    atb_ns = 0.0
    for shape in ((L, hd, L), (L, L, hd)):
        spec = _best_fit_spec(shape, specs)
        atb_ns = max(atb_ns, tile_shape(shape, spec).invocations
                     * pu_invocation_time(spec, p))
    return AtbRatio(qkv_output_heads=n_ext // common,
                    atb_input_heads=hd // common,
                    throughput_qkv=(n_ext / hd) / lb_ns * 1e9,
                    throughput_atb=1 / atb_ns * 1e9)


def decide_p_atb(r: AtbRatio) -> int:
    """ATB parallelism from the head ratio when it is integral,
    otherwise from the throughput ratio rounded half up.
    """
    if r.atb_input_heads == 0:
        raise PlanningError("ATB input heads must be positive")
    if min(r) <= 0:
        raise PlanningError(f"invalid ATB ratio {r}")
    if r.qkv_output_heads % r.atb_input_heads == 0:
        return r.qkv_output_heads // r.atb_input_heads
    return max(1, math.floor(r.throughput_qkv / r.throughput_atb + 0.5))


class CoreAllocator:
    """Hands out PU instances over consecutive physical cores."""

    def __init__(self) -> None:
        self.next_core = 0
        self.counters: Counter = Counter()

    def _id(self, prefix: str, spec: PuSpec) -> str:
        key = f"{prefix}{spec.name.lower()}"
        index = self.counters[key]
        self.counters[key] += 1
        return f"{key}{index}"

    def new(self, spec: PuSpec) -> PuInstance:
        pu = PuInstance(self._id('', spec), spec, self.next_core)
        self.next_core += spec.core_count
        return pu

    def views(self, prefix: str, spec: PuSpec, count: int, first_core: int
              ) -> Tuple[PuInstance, ...]:
        return tuple(
            PuInstance(self._id(prefix + '.', spec), spec,
                       first_core + index * spec.core_count, view=True)
            for index in range(count))


def _lane_heads(head: int, lanes: int) -> List[Tuple[int, ...]]:
    return [tuple(range(lane, head, lanes)) for lane in range(lanes)]


def _balanced(shape: Tuple[int, int, int], specs: Sequence[PuSpec],
              p: PlatformProfile, target_ns: float) -> Tuple[PuSpec, int]:
    """Best fitting spec and the fewest instances keeping one product
    within *target_ns*.
    """
    spec = _best_fit_spec(shape, specs)
    invocations = tile_shape(shape, spec).invocations
    t_pu = pu_invocation_time(spec, p)
    for count in range(1, invocations + 1):
        if math.ceil(invocations / count) * t_pu <= target_ns:
            return spec, count
    return spec, invocations


def _fit_share(shape: Tuple[int, int, int], products: int, budget: int,
               specs: Sequence[PuSpec], p: PlatformProfile, what: str
               ) -> Tuple[PuSpec, int]:
    """Spec and instance count within *budget* cores minimizing the time
    of *products* products; larger PUs win ties.
    """
    best: Optional[Tuple[float, int, PuSpec, int]] = None
    for spec in specs:
        count = budget // spec.core_count
        if count == 0:
            continue
        invocations = tile_shape(shape, spec).invocations * products
        busy = math.ceil(invocations / count) * pu_invocation_time(spec, p)
        key = (busy, -spec.core_count, spec, count)
        if best is None or key[:2] < best[:2]:
            best = key
    if best is None:
        smallest = min(spec.core_count for spec in specs)
        raise InfeasiblePlanError(
            f"{what}: core share of {budget} cores is smaller than the "
            f"smallest PU ({smallest} cores)")
    return best[2], best[3]


def _mm(shape: Tuple[int, int, int], count: int, stage: Stage,
        role: MatMulRole) -> MatMulSpec:
    return MatMulSpec(shape[0], shape[1], shape[2], count, stage, role)


def _pipelined_mha(w: Workload, p: PlatformProfile, specs: Sequence[PuSpec],
                   lanes: int) -> List[PrgNode]:
    cfg = w.cfg
    L, E, hd, h = cfg.seq_len, cfg.embed_dim, cfg.head_dim, cfg.head
    bpe = cfg.bytes_per_element
    largest = largest_spec(specs)
    alloc = CoreAllocator()
    mha = Stage.MHA
    prgs: List[PrgNode] = []
    if w.independent_linear:
        for operand in 'qkv':
            prgs.append(PrgNode(
                id=f"mha.{operand}_lb", kind=PrgKind.QKV_LB, stage=mha,
                assigned_mms=(_mm((L, E, E), 1, mha, MatMulRole.QKV_LB),),
                allocated_pus=(alloc.new(largest),),
                buffers=((f"qkv_out.{operand}", L * hd * lanes * bpe),
                         (f"weights.{operand}", E * E * bpe)),
                operand=operand))
        block = tile_shape((L, E, hd * lanes), largest)
        target_ns = block.invocations * pu_invocation_time(largest, p)
    else:
        linear_spec = _best_fit_spec((L, E, hd), specs)
        target_ns = (tile_shape((L, E, hd), linear_spec).invocations
                     * pu_invocation_time(linear_spec, p))
    prgs.append(PrgNode(
        id="mha.proj_lb", kind=PrgKind.PROJ_LB, stage=mha,
        assigned_mms=(_mm((L, E, E), 1, mha, MatMulRole.PROJ_LB),),
        allocated_pus=(alloc.new(largest),),
        buffers=(("proj_io.in", L * hd * lanes * bpe),
                 ("proj_io.out", L * E * bpe),
                 ("weights.proj", E * E * bpe))))
    pre_spec, pre_count = _balanced((L, hd, L), specs, p, target_ns)
    post_spec, post_count = _balanced((L, L, hd), specs, p, target_ns)
    attn = _split((L * L * lanes + 1) // 2, lanes)
    for lane, heads in enumerate(_lane_heads(h, lanes)):
        prefix = f"mha.atb{lane}"
        if not w.independent_linear:
            for operand in 'qkv':
                prgs.append(PrgNode(
                    id=f"{prefix}.{operand}_lb", kind=PrgKind.QKV_LB,
                    stage=mha,
                    assigned_mms=(_mm((L, E, hd), len(heads), mha,
                                      MatMulRole.QKV_LB),),
                    allocated_pus=(alloc.new(linear_spec),),
                    buffers=((f"qkv_out.{operand}", L * hd * bpe),
                             (f"weights.{operand}",
                              E * hd * len(heads) * bpe)),
                    lane=lane, heads=heads, operand=operand))
        prgs.append(PrgNode(
            id=f"{prefix}.pre", kind=PrgKind.ATB_PRE, stage=mha,
            assigned_mms=(_mm((L, hd, L), len(heads), mha,
                              MatMulRole.ATB_QKT),),
            allocated_pus=tuple(alloc.new(pre_spec)
                                for _ in range(pre_count)),
            buffers=(("atb_io.q", L * hd * bpe), ("atb_io.k", L * hd * bpe),
                     ("attn", attn[lane] * bpe)),
            lane=lane, heads=heads))
        prgs.append(PrgNode(
            id=f"{prefix}.post", kind=PrgKind.ATB_POST, stage=mha,
            assigned_mms=(_mm((L, L, hd), len(heads), mha,
                              MatMulRole.ATB_AV),),
            allocated_pus=tuple(alloc.new(post_spec)
                                for _ in range(post_count)),
            buffers=(("atb_io.v", L * hd * bpe),
                     ("atb_io.out", L * hd * bpe)),
            lane=lane, heads=heads))
    return prgs


def _shared_mha(w: Workload, mode: ParallelMode, p: PlatformProfile,
                specs: Sequence[PuSpec], lanes: int, notes: List[str]
                ) -> List[PrgNode]:
    cfg = w.cfg
    L, E, hd, h = cfg.seq_len, cfg.embed_dim, cfg.head_dim, cfg.head
    bpe = cfg.bytes_per_element
    largest = largest_spec(specs)
    alloc = CoreAllocator()
    shared = tuple(alloc.new(largest)
                   for _ in range(p.total_aie // largest.core_count))
    mha = Stage.MHA
    prgs: List[PrgNode] = []
    if w.independent_linear:
        for operand in 'qkv':
            prgs.append(PrgNode(
                id=f"mha.{operand}_lb", kind=PrgKind.QKV_LB, stage=mha,
                assigned_mms=(_mm((L, E, E), 1, mha, MatMulRole.QKV_LB),),
                allocated_pus=shared,
                buffers=((f"qkv_out.{operand}", L * E * bpe),
                         (f"weights.{operand}", E * E * bpe)),
                operand=operand))
    shares = _split(sum(pu.spec.core_count for pu in shared), lanes)
    if len(set(shares)) > 1:
        message = (f"ATB core shares {shares} are uneven; "
                   f"the first lanes receive the remainder")
        logger.warning(message, type="cat_dse", subtype="hybrid_split")
        notes.append(message)
    attn = _split((L * L * lanes + 1) // 2, lanes)
    first_core = 0
    for lane, heads in enumerate(_lane_heads(h, lanes)):
        prefix = f"mha.atb{lane}"
        budget = shares[lane]
        if not w.independent_linear:
            spec, count = _fit_share((L, E, hd), 3 * len(heads), budget,
                                     specs, p, prefix)
            views = alloc.views(prefix + '.lb', spec, count, first_core)
            for operand in 'qkv':
                prgs.append(PrgNode(
                    id=f"{prefix}.{operand}_lb", kind=PrgKind.QKV_LB,
                    stage=mha,
                    assigned_mms=(_mm((L, E, hd), len(heads), mha,
                                      MatMulRole.QKV_LB),),
                    allocated_pus=views,
                    buffers=((f"qkv_out.{operand}", L * hd * bpe),
                             (f"weights.{operand}",
                              E * hd * len(heads) * bpe)),
                    lane=lane, heads=heads, operand=operand))
        spec, count = _fit_share((L, hd, L), len(heads), budget, specs, p,
                                 prefix)
        prgs.append(PrgNode(
            id=f"{prefix}.pre", kind=PrgKind.ATB_PRE, stage=mha,
            assigned_mms=(_mm((L, hd, L), len(heads), mha,
                              MatMulRole.ATB_QKT),),
            allocated_pus=alloc.views(prefix + '.pre', spec, count,
                                      first_core),
            buffers=(("atb_io.q", L * hd * bpe), ("atb_io.k", L * hd * bpe),
                     ("attn", attn[lane] * bpe)),
            lane=lane, heads=heads))
        spec, count = _fit_share((L, L, hd), len(heads), budget, specs, p,
                                 prefix)
        prgs.append(PrgNode(
            id=f"{prefix}.post", kind=PrgKind.ATB_POST, stage=mha,
            assigned_mms=(_mm((L, L, hd), len(heads), mha,
                              MatMulRole.ATB_AV),),
            allocated_pus=alloc.views(prefix + '.post', spec, count,
                                      first_core),
            buffers=(("atb_io.v", L * hd * bpe),
                     ("atb_io.out", L * hd * bpe)),
            lane=lane, heads=heads))
        first_core += budget
    prgs.append(PrgNode(
        id="mha.proj_lb", kind=PrgKind.PROJ_LB, stage=mha,
        assigned_mms=(_mm((L, E, E), 1, mha, MatMulRole.PROJ_LB),),
        allocated_pus=shared,
        buffers=(("proj_io.in", L * hd * lanes * bpe),
                 ("proj_io.out", L * E * bpe),
                 ("weights.proj", E * E * bpe))))
    return prgs


def _physical_cores(prgs: Iterable[PrgNode]) -> int:
    return len({core for prg in prgs for pu in prg.allocated_pus
                if not pu.view for core in pu.cores})


def _ffn_prgs(w: Workload, mode: ParallelMode, mha_prgs: Sequence[PrgNode],
              notes: List[str]) -> Tuple[ParallelMode, List[PrgNode]]:
    """FFN PRGs on the PU instances of the MHA linear blocks."""
    cfg = w.cfg
    L, E, dff = cfg.seq_len, cfg.embed_dim, cfg.dff
    bpe = cfg.bytes_per_element
    reuse: Dict[str, PuInstance] = {}
    for prg in mha_prgs:
        if prg.kind in LB_KINDS:
            for pu in prg.allocated_pus:
                if not pu.view:
                    reuse.setdefault(pu.id, pu)
    largest = max((pu.spec for pu in reuse.values()),
                  key=lambda s: (s.core_count, s.invocation_macs))
    pus = tuple(sorted((pu for pu in reuse.values() if pu.spec == largest),
                       key=lambda pu: pu.first_core))
    if mode == ParallelMode.FULLY_PIPELINED and len(pus) < 2:
        message = "FFN stage has a single PU instance and runs serially"
        logger.info(message)
        notes.append(message)
        mode = ParallelMode.SERIAL
    if mode == ParallelMode.FULLY_PIPELINED:
        half = len(pus) // 2
        ffn1_pus, ffn2_pus = pus[:half], pus[half:]
    else:
        ffn1_pus = ffn2_pus = pus
    ffn = Stage.FFN
    prgs = [
        PrgNode(id="ffn.ffn1_lb", kind=PrgKind.FFN1_LB, stage=ffn,
                assigned_mms=(_mm((L, E, dff), 1, ffn, MatMulRole.FFN1_LB),),
                allocated_pus=ffn1_pus,
                buffers=(("ffn_in", L * E * bpe),
                         ("ffn_hidden", L * dff * bpe),
                         ("weights.ffn1", E * dff * bpe))),
        PrgNode(id="ffn.ffn2_lb", kind=PrgKind.FFN2_LB, stage=ffn,
                assigned_mms=(_mm((L, dff, E), 1, ffn, MatMulRole.FFN2_LB),),
                allocated_pus=ffn2_pus,
                buffers=(("ffn_out", L * E * bpe),
                         ("weights.ffn2", dff * E * bpe))),
    ]
    return mode, prgs


def assemble_plan(cfg: TransformerConfig, p: PlatformProfile,
                  independent_linear: bool, pm_mha: ParallelMode,
                  pm_ffn: ParallelMode, p_atb: int,
                  mha_prgs: Sequence[PrgNode], ffn_prgs: Sequence[PrgNode],
                  pu_specs: Sequence[PuSpec], buffer_footprint_bytes: int,
                  decisions: Optional[Tuple[PlanDecision, PlanDecision]]
                  = None,
                  ratio: Optional[AtbRatio] = None,
                  notes: Sequence[str] = ()) -> EdpuPlan:
    """Count the deployed cores once across both stages and build the
    plan, rejecting it when the cores exceed the platform.
    """
    deployed = _physical_cores(list(mha_prgs) + list(ffn_prgs))
    if deployed > p.total_aie:
        raise InfeasiblePlanError(
            f"plan deploys {deployed} AIE cores, total_aie is {p.total_aie}")
    return EdpuPlan(
        cfg=cfg, profile_name=p.name, total_aie=p.total_aie,
        independent_linear=independent_linear, pm_mha=pm_mha, pm_ffn=pm_ffn,
        p_atb=p_atb, mha_prgs=tuple(mha_prgs), ffn_prgs=tuple(ffn_prgs),
        pu_specs=tuple(pu_specs), deployed_aie=deployed,
        deployment_rate=deployed / p.total_aie,
        buffer_footprint_bytes=buffer_footprint_bytes, decisions=decisions,
        atb_ratio=ratio, notes=tuple(notes))


def allocate(w: Workload, decisions: Tuple[PlanDecision, PlanDecision],
             p: PlatformProfile, specs: Sequence[PuSpec], p_atb: int,
             paper_ffn_override: bool = False) -> EdpuPlan:
    """Assign PU instances to the PRGs of both stages.

    A fully pipelined MHA stage gives each linear block its own largest
    PU and each ATB lane balanced pre and post PU groups. A stage that
    does not fit falls back to the hybrid mode, where every PRG time
    shares one set of largest PUs and the ATB lanes split its cores.
    The FFN stage reuses the PUs of the MHA linear blocks.
    """
    if not specs:
        raise PlanningError("no PU specification available")
    mha_decision, ffn_decision = decisions
    cfg = w.cfg
    lanes = min(p_atb, cfg.head)
    notes: List[str] = []
    pm_mha = mha_decision.chosen
    mha_prgs: List[PrgNode] = []
    if pm_mha == ParallelMode.FULLY_PIPELINED:
        mha_prgs = _pipelined_mha(w, p, specs, lanes)
        deployed = _physical_cores(mha_prgs)
        if deployed > p.total_aie:
            message = (f"fully pipelined MHA needs {deployed} AIE cores, "
                       f"total_aie is {p.total_aie}; falling back to "
                       f"{ParallelMode.HYBRID.value}")
            logger.warning(message, type="cat_dse", subtype="allocation")
            notes.append(message)
            pm_mha = ParallelMode.HYBRID
    if pm_mha != ParallelMode.FULLY_PIPELINED:
        mha_lanes = lanes if pm_mha == ParallelMode.HYBRID else 1
        mha_prgs = _shared_mha(w, pm_mha, p, specs, mha_lanes, notes)
    ffn_mode = ffn_decision.chosen
    if paper_ffn_override and ffn_mode != ParallelMode.FULLY_PIPELINED:
        message = (f"FFN decision {ffn_mode.value} overridden: "
                   f"linear blocks pipelined on split PU sets")
        logger.warning(message, type="cat_dse", subtype="ffn_override")
        notes.append(message)
        ffn_mode = ParallelMode.FULLY_PIPELINED
    pm_ffn, ffn_prgs = _ffn_prgs(w, ffn_mode, mha_prgs, notes)
    mha_lanes = lanes if pm_mha != ParallelMode.SERIAL else 1
    return assemble_plan(
        cfg, p, w.independent_linear, pm_mha, pm_ffn, mha_lanes,
        mha_prgs, ffn_prgs, specs,
        buffer_footprint(cfg, mha_lanes, pm_mha), decisions=decisions,
        notes=notes)


def design(cfg: TransformerConfig, p: PlatformProfile,
           independent_linear: bool = True, strict_factor1: bool = False,
           paper_ffn_override: bool = False, decoder: bool = False,
           geometries: Sequence[str] = DEFAULT_GEOMETRIES) -> EdpuPlan:
    """Run the whole customization strategy for *cfg* on *p*."""
    logger.info(f"planning {cfg.name or 'model'} on {p.name}... ", nonl=True)
    w = derive_workload(cfg, independent_linear, decoder)
    specs = enumerate_pu_specs(p, cfg.data_bits, geometries)
    if not specs:
        raise InfeasiblePlanError(f"no PU geometry fits profile {p.name}")
    ratio = atb_ratio(cfg, p, specs)
    p_atb = decide_p_atb(ratio)
    notes = []
    if p_atb > cfg.head:
        notes.append(f"P_ATB={p_atb} exceeds the {cfg.head} heads; "
                     f"using {cfg.head}")
        p_atb = cfg.head
    decisions = (
        decide_parallel_mode(Stage.MHA, cfg, p, specs, p_atb,
                             independent_linear, strict_factor1),
        decide_parallel_mode(Stage.FFN, cfg, p, specs, p_atb,
                             independent_linear, strict_factor1),
    )
    plan = allocate(w, decisions, p, specs, p_atb,
                    paper_ffn_override=paper_ffn_override)
    logger.info("done")
    return replace(plan, atb_ratio=ratio, notes=tuple(notes) + plan.notes)


def _prg_to_json(prg: PrgNode) -> Dict[str, Any]:
    return {'id': prg.id, 'kind': prg.kind.value, 'stage': prg.stage.value,
            'lane': prg.lane, 'heads': list(prg.heads),
            'operand': prg.operand,
            'assigned_mms': [mm.to_json() for mm in prg.assigned_mms],
            'allocated_pus': [pu.id for pu in prg.allocated_pus],
            'buffers': [[label, size] for label, size in prg.buffers]}


def plan_to_json(plan: EdpuPlan) -> Dict[str, Any]:
    """Plan document, schema version :data:`PLAN_VERSION`."""
    return {
        'plan_version': PLAN_VERSION,
        'model': dict(plan.cfg.to_json(), name=plan.cfg.name),
        'profile': plan.profile_name,
        'total_aie': plan.total_aie,
        'independent_linear': plan.independent_linear,
        'pm_mha': plan.pm_mha.value,
        'pm_ffn': plan.pm_ffn.value,
        'p_atb': plan.p_atb,
        'pu_specs': [spec.to_json() for spec in plan.pu_specs],
        'pu_instances': [
            {'id': pu.id, 'spec': pu.spec.name, 'first_core': pu.first_core,
             'view': pu.view} for pu in plan.instances],
        'mha_prgs': [_prg_to_json(prg) for prg in plan.mha_prgs],
        'ffn_prgs': [_prg_to_json(prg) for prg in plan.ffn_prgs],
        'deployed_aie': plan.deployed_aie,
        'deployment_rate': plan.deployment_rate,
        'buffer_footprint_bytes': plan.buffer_footprint_bytes,
        'decisions': None if plan.decisions is None else {
            'mha': plan.decisions[0].to_json(),
            'ffn': plan.decisions[1].to_json()},
        'atb_ratio': (None if plan.atb_ratio is None
                      else plan.atb_ratio._asdict()),
        'notes': list(plan.notes),
    }


def _prg_from_json(document: Mapping[str, Any],
                   instances: Mapping[str, PuInstance]) -> PrgNode:
    pus = []
    for pu_id in document['allocated_pus']:
        if pu_id not in instances:
            raise InputArtifactError(
                f"PRG {document['id']} references unknown PU instance "
                f"{pu_id}")
        pus.append(instances[pu_id])
    lane = document.get('lane')
    return PrgNode(
        id=str(document['id']), kind=PrgKind(document['kind']),
        stage=Stage(document['stage']),
        assigned_mms=tuple(MatMulSpec.from_json(mm)
                           for mm in document['assigned_mms']),
        allocated_pus=tuple(pus),
        buffers=tuple((str(label), int(size))
                      for label, size in document.get('buffers', [])),
        lane=None if lane is None else int(lane),
        heads=tuple(int(head) for head in document.get('heads', [])),
        operand=str(document.get('operand', '')))


def plan_from_json(document: Mapping[str, Any]) -> EdpuPlan:
    """Parse a plan document.

    :raises InputArtifactError: if the document is not a valid plan.
    """
    try:
        if document.get('plan_version') != PLAN_VERSION:
            raise InputArtifactError(
                f"unsupported plan_version {document.get('plan_version')!r}")
        model = dict(document['model'])
        cfg = load_config(model, name=str(model.pop('name', '')))
        specs = {spec['name']: PuSpec.from_json(spec)
                 for spec in document['pu_specs']}
        instances = {}
        for pu in document['pu_instances']:
            if pu['spec'] not in specs:
                raise InputArtifactError(
                    f"PU instance {pu['id']} references unknown PU "
                    f"specification {pu['spec']}")
            instances[pu['id']] = PuInstance(
                id=str(pu['id']), spec=specs[pu['spec']],
                first_core=int(pu['first_core']), view=bool(pu['view']))
        decisions = document.get('decisions')
        ratio = document.get('atb_ratio')
        return EdpuPlan(
            cfg=cfg, profile_name=str(document['profile']),
            total_aie=int(document['total_aie']),
            independent_linear=bool(document['independent_linear']),
            pm_mha=ParallelMode(document['pm_mha']),
            pm_ffn=ParallelMode(document['pm_ffn']),
            p_atb=int(document['p_atb']),
            mha_prgs=tuple(_prg_from_json(prg, instances)
                           for prg in document['mha_prgs']),
            ffn_prgs=tuple(_prg_from_json(prg, instances)
                           for prg in document['ffn_prgs']),
            pu_specs=tuple(specs.values()),
            deployed_aie=int(document['deployed_aie']),
            deployment_rate=float(document['deployment_rate']),
            buffer_footprint_bytes=int(document['buffer_footprint_bytes']),
            decisions=None if decisions is None else (
                PlanDecision.from_json(decisions['mha']),
                PlanDecision.from_json(decisions['ffn'])),
            atb_ratio=None if ratio is None else AtbRatio(**ratio),
            notes=tuple(str(note) for note in document.get('notes', [])))
    except ConfigError as exc:
        raise InputArtifactError(f"invalid model in plan: {exc}")
    except (AttributeError, KeyError, TypeError, ValueError) as exc:
        raise InputArtifactError(f"corrupted plan: {exc!r}")


def plan_hash(plan: EdpuPlan) -> str:
    """SHA-256 of the canonical plan document."""
    text = json.dumps(plan_to_json(plan), sort_keys=True,
                      separators=(',', ':'))
    return hashlib.sha256(text.encode('utf-8')).hexdigest()
