"""
    Reproduction harness: the ATB mode comparison, and the deployment,
    utilization and performance tables of the three reference
    accelerators, each set against its published values.

    .. autoclass:: Lab
        :members:

    .. autoclass:: ModeComparison
        :members:

    .. autoclass:: TableRow
        :members:

    .. autofunction:: attention_workload

    .. autofunction:: lab_plan

    .. autofunction:: compare_modes

    .. autofunction:: harness

    .. autofunction:: table5

    .. autofunction:: table6
"""

from typing import Dict, List, NamedTuple, Optional, Sequence, Tuple

from sphinx.util.logging import getLogger

from .errors import ConfigError, PlanningError
from .planner import (
    CoreAllocator, EdpuPlan, ParallelMode, PrgKind, PrgNode, PuInstance,
    assemble_plan, buffer_footprint, design
)
from .platform import PlatformProfile, read_profile
from .pu_design import PuSpec, enumerate_pu_specs
from .simulator import SimConfig, StageSelection, simulate
from .workload import (
    MatMulRole, MatMulSpec, NonlinearKind, Stage, TransformerConfig,
    Workload, derive_workload, read_config, stage_workload
)


logger = getLogger(__name__)


class Lab(NamedTuple):
    """One ATB configuration of the mode comparison."""
    number: int
    independent_linear: bool
    atb_mode: ParallelMode
    p_atb: int
    paper_speedup: float


LABS: Tuple[Lab, ...] = (
    Lab(1, False, ParallelMode.SERIAL, 1, 1.0),
    Lab(2, False, ParallelMode.FULLY_PIPELINED, 1, 3.8),
    Lab(3, True, ParallelMode.HYBRID, 4, 5.3),
    Lab(4, False, ParallelMode.FULLY_PIPELINED, 4, 14.6),
    Lab(5, True, ParallelMode.FULLY_PIPELINED, 4, 20.1),
)

#: Model and profile of the three reference accelerators.
HARNESS: Tuple[Tuple[str, str], ...] = (
    ('bert-base', 'vck5000'),
    ('vit-base', 'vck5000'),
    ('bert-base-limited', 'vck5000-limited'),
)

#: Published deployment rate and effective utilization.
TABLE5_PAPER: Dict[str, Dict[str, float]] = {
    'bert-base': {'deployment_rate': 0.88, 'eff_util_mha': 1.0,
                  'eff_util_ffn': 0.73, 'eff_util_avg': 0.87},
    'vit-base': {'deployment_rate': 0.88, 'eff_util_mha': 1.0,
                 'eff_util_ffn': 0.73, 'eff_util_avg': 0.87},
    'bert-base-limited': {'deployment_rate': 1.0, 'eff_util_mha': 1.0,
                          'eff_util_ffn': 1.0, 'eff_util_avg': 1.0},
}

#: Published per-batch latency (ms), TOPS and GOPS per AIE of each stage
#: and of the system, with the measured board power (W).
TABLE6_PAPER: Dict[str, Dict[str, float]] = {
    'bert-base': {
        'mha.latency_ms': 0.037, 'mha.tops': 40.237,
        'mha.gops_per_aie': 114.309,
        'ffn.latency_ms': 0.081, 'ffn.tops': 29.846,
        'ffn.gops_per_aie': 116.589,
        'system.latency_ms': 0.118, 'system.tops': 35.194,
        'system.gops_per_aie': 99.983,
        'system.power_w': 67.555, 'system.gops_per_w': 520.968},
    'vit-base': {
        'mha.latency_ms': 0.049, 'mha.tops': 30.450,
        'mha.gops_per_aie': 86.505,
        'ffn.latency_ms': 0.081, 'ffn.tops': 29.846,
        'ffn.gops_per_aie': 116.589,
        'system.latency_ms': 0.129, 'system.tops': 30.279,
        'system.gops_per_aie': 86.020,
        'system.power_w': 61.464, 'system.gops_per_w': 492.629},
    'bert-base-limited': {
        'mha.latency_ms': 0.147, 'mha.tops': 9.607,
        'mha.gops_per_aie': 150.109,
        'ffn.latency_ms': 0.252, 'ffn.tops': 9.595,
        'ffn.gops_per_aie': 149.922,
        'system.latency_ms': 0.398, 'system.tops': 9.598,
        'system.gops_per_aie': 149.968,
        'system.power_w': 16.168, 'system.gops_per_w': 593.642},
}


class ModeComparison(NamedTuple):
    lab: Lab
    latency_ns: float      #: Whole batch, attention path only.
    tops: float
    speedup: float         #: Lab 1 latency over this lab's latency.
    rank: int              #: 1 for the fastest lab.
    paper_rank: int


class TableRow(NamedTuple):
    item: str
    metric: str
    paper: Optional[float]
    simulated: Optional[float]

    @property
    def delta(self) -> Optional[float]:
        if self.paper is None or self.simulated is None:
            return None
        return self.simulated - self.paper


def attention_workload(cfg: TransformerConfig, independent_linear: bool
                       ) -> Workload:
    """The QKV linear layers and the ATBs of one MHA stage, without the
    projection and the layer norm.
    """
    mha = stage_workload(derive_workload(cfg, independent_linear), Stage.MHA)
    return mha._replace(
        mms=tuple(mm for mm in mha.mms if mm.role != MatMulRole.PROJ_LB),
        nonlinear=tuple(op for op in mha.nonlinear
                        if op.kind != NonlinearKind.LAYERNORM_ADD))


def _spec(specs: Sequence[PuSpec], name: str) -> PuSpec:
    for spec in specs:
        if spec.name == name:
            return spec
    raise PlanningError(f"PU specification {name} is not available")


def lab_plan(lab: int, cfg: TransformerConfig, p: PlatformProfile
             ) -> Tuple[EdpuPlan, Workload]:
    """Attention-path plan of mode comparison *lab*, on Standard PUs.

    Each PRG owns Standard instances, except in lab 1 where one Standard
    PU computes everything.
    """
    if lab not in range(1, len(LABS) + 1):
        raise ConfigError(
            f"lab must be one of 1 to {len(LABS)}, got {lab!r}")
    config = LABS[lab - 1]
    specs = enumerate_pu_specs(p, cfg.data_bits)
    standard = _spec(specs, 'Standard')
    L, E, hd, h = cfg.seq_len, cfg.embed_dim, cfg.head_dim, cfg.head
    lanes = config.p_atb
    alloc = CoreAllocator()
    mha = Stage.MHA
    single = alloc.new(standard) if lab == 1 else None

    def pus(count: int = 1) -> Tuple[PuInstance, ...]:
        if single is not None:
            return (single,)
        return tuple(alloc.new(standard) for _ in range(count))

    def mm(shape: Tuple[int, int, int], count: int,
           role: MatMulRole) -> Tuple[MatMulSpec, ...]:
        return (MatMulSpec(shape[0], shape[1], shape[2], count, mha, role),)

    prgs: List[PrgNode] = []
    if config.independent_linear:
        per_lb = 4 if config.atb_mode == ParallelMode.FULLY_PIPELINED else 1
        shared = pus(3) if config.atb_mode == ParallelMode.HYBRID else ()
        for operand in 'qkv':
            prgs.append(PrgNode(
                id=f"mha.{operand}_lb", kind=PrgKind.QKV_LB, stage=mha,
                assigned_mms=mm((L, E, E), 1, MatMulRole.QKV_LB),
                allocated_pus=shared or pus(per_lb), operand=operand))
    for lane in range(lanes):
        heads = tuple(range(lane, h, lanes))
        prefix = f"mha.atb{lane}"
        if not config.independent_linear:
            for operand in 'qkv':
                prgs.append(PrgNode(
                    id=f"{prefix}.{operand}_lb", kind=PrgKind.QKV_LB,
                    stage=mha,
                    assigned_mms=mm((L, E, hd), len(heads),
                                    MatMulRole.QKV_LB),
                    allocated_pus=pus(), lane=lane, heads=heads,
                    operand=operand))
        if config.atb_mode == ParallelMode.HYBRID:
            lane_pus = pus()
            pre_pus = post_pus = lane_pus
        else:
            pre_pus, post_pus = pus(), pus()
        prgs.append(PrgNode(
            id=f"{prefix}.pre", kind=PrgKind.ATB_PRE, stage=mha,
            assigned_mms=mm((L, hd, L), len(heads), MatMulRole.ATB_QKT),
            allocated_pus=pre_pus, lane=lane, heads=heads))
        prgs.append(PrgNode(
            id=f"{prefix}.post", kind=PrgKind.ATB_POST, stage=mha,
            assigned_mms=mm((L, L, hd), len(heads), MatMulRole.ATB_AV),
            allocated_pus=post_pus, lane=lane, heads=heads))
    plan = assemble_plan(
        cfg, p, config.independent_linear, config.atb_mode,
        ParallelMode.SERIAL, lanes, prgs, (), specs,
        buffer_footprint(cfg, lanes, config.atb_mode),
        notes=(f"lab {lab}: attention path only",))
    return plan, attention_workload(cfg, config.independent_linear)


def _ranks(values: Sequence[float]) -> List[int]:
    """Rank 1 for the largest value; ties share the lower rank."""
    ordered = sorted(values, reverse=True)
    return [ordered.index(value) + 1 for value in values]


def compare_modes(cfg: TransformerConfig, p: PlatformProfile,
                  batch: int = 16) -> List[ModeComparison]:
    """Simulate every lab with the same PU scale and report speedups over
    lab 1.
    """
    results = []
    for config in LABS:
        plan, w = lab_plan(config.number, cfg, p)
        report = simulate(plan, w, p, SimConfig(
            batch_size=batch, stages=StageSelection.MHA_ONLY))
        results.append((config, report.total_latency_ns, report.tops))
    baseline = results[0][1]
    speedups = [baseline / latency for _, latency, _ in results]
    ranks = _ranks(speedups)
    paper_ranks = _ranks([config.paper_speedup for config in LABS])
    return [ModeComparison(config, latency, tops, speedup, rank, paper_rank)
            for (config, latency, tops), speedup, rank, paper_rank
            in zip(results, speedups, ranks, paper_ranks)]


def harness(search_dir: Optional[str] = None
            ) -> List[Tuple[TransformerConfig, PlatformProfile, EdpuPlan]]:
    """Design the three reference accelerators."""
    designs = []
    for model, profile in HARNESS:
        cfg = read_config(model)
        p = read_profile(profile, search_dir=search_dir)
        designs.append((cfg, p, design(cfg, p)))
    return designs


def table5(batch: int = 16, search_dir: Optional[str] = None
           ) -> List[TableRow]:
    """Deployment rate and effective utilization of each accelerator."""
    rows = []
    for cfg, p, plan in harness(search_dir):
        report = simulate(plan, derive_workload(cfg), p,
                          SimConfig(batch_size=batch))
        simulated = {'deployment_rate': report.deployment_rate,
                     'eff_util_mha': report.eff_util_mha,
                     'eff_util_ffn': report.eff_util_ffn,
                     'eff_util_avg': report.eff_util_avg}
        paper = TABLE5_PAPER.get(cfg.name, {})
        for metric, value in simulated.items():
            rows.append(TableRow(cfg.name, metric, paper.get(metric), value))
    return rows


def table6(batch: int = 32, search_dir: Optional[str] = None
           ) -> List[TableRow]:
    """Per-batch latency, TOPS and GOPS per AIE of each accelerator.

    Energy efficiency divides the simulated throughput by the published
    board power, which is not simulated.
    """
    rows = []
    for cfg, p, plan in harness(search_dir):
        report = simulate(plan, derive_workload(cfg), p,
                          SimConfig(batch_size=batch))
        deployed = report.deployed_aie
        paper = TABLE6_PAPER.get(cfg.name, {})
        simulated: Dict[str, Optional[float]] = {}
        for scope, latency, tops in (
                ('mha', report.mha_latency_ns, report.tops_mha),
                ('ffn', report.ffn_latency_ns, report.tops_ffn),
                ('system', report.total_latency_ns, report.tops)):
            simulated[f"{scope}.latency_ms"] = latency / batch / 1e6
            simulated[f"{scope}.tops"] = tops
            simulated[f"{scope}.gops_per_aie"] = tops * 1e3 / deployed
        power = paper.get('system.power_w')
        simulated['system.power_w'] = None
        simulated['system.gops_per_w'] = (
            report.tops * 1e3 / power if power else None)
        for metric, value in simulated.items():
            rows.append(TableRow(cfg.name, metric, paper.get(metric), value))
    return rows
