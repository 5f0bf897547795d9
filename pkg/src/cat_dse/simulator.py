"""
    Discrete-event simulation of an EDPU plan: the MHA stage, then the FFN
    stage, over a batch of iterations.

    Every PRG service holds all PU instances of its group for
    ``ceil(invocations / instances) * T_PU``. Fully pipelined stages pass
    blocks between PRGs through double-buffered FIFOs; serial and hybrid
    stages run PRGs one after the other on the shared PUs, with ATB lanes
    side by side in hybrid mode.

    .. autoclass:: StageSelection
        :members:

    .. autoclass:: EventKind
        :members:

    .. autoclass:: SimConfig
        :members:

    .. autoclass:: SimEvent
        :members:

    .. autoclass:: SimReport
        :members:

    .. autoclass:: SweepPoint
        :members:

    .. autoclass:: Utilization
        :members:

    .. autofunction:: check_plan_workload

    .. autofunction:: simulate

    .. autofunction:: sweep_batch

    .. autofunction:: utilization
"""

import math
from collections import defaultdict
from enum import Enum
from typing import (
    Dict, Generator, Iterable, List, NamedTuple, Optional, Sequence, Tuple
)

import simpy
from sphinx.util.logging import getLogger

from .errors import ConfigError, SimulationError
from .planner import EdpuPlan, ParallelMode, PrgKind, PrgNode, PuInstance
from .platform import PlatformProfile
from .pu_design import (
    ROUTING_MODEL, PuSpec, pu_invocation_time, tile_shape
)
from .workload import (
    MatMulRole, NonlinearKind, Stage, Workload, stage_workload, total_ops
)


logger = getLogger(__name__)

Shape = Tuple[int, int, int]

#: Capacity of the FIFO between two pipelined PRGs (double buffering).
FIFO_DEPTH = 2


class StageSelection(str, Enum):
    MHA_ONLY = 'MhaOnly'
    FFN_ONLY = 'FfnOnly'
    BOTH = 'Both'

    @property
    def stages(self) -> Tuple[Stage, ...]:
        if self == StageSelection.MHA_ONLY:
            return (Stage.MHA,)
        if self == StageSelection.FFN_ONLY:
            return (Stage.FFN,)
        return (Stage.MHA, Stage.FFN)


class EventKind(str, Enum):
    INVOCATION_START = 'InvocationStart'
    INVOCATION_END = 'InvocationEnd'
    STAGE_START = 'StageStart'
    STAGE_END = 'StageEnd'
    BATCH_END = 'BatchEnd'


_KIND_ORDER = {kind: index for index, kind in enumerate(EventKind)}


class SimConfig(NamedTuple):
    batch_size: int = 1
    stages: StageSelection = StageSelection.BOTH
    record_timeline: bool = False
    #: Latency added by each nonlinear operator edge, in units of the
    #: producing PU's invocation time.
    nonlinear_fill: float = 1.0


class SimEvent(NamedTuple):
    time_ns: float
    prg_id: str
    kind: EventKind
    pu_instance: str = ''

    def sort_key(self) -> Tuple[float, str, int, str]:
        return (self.time_ns, self.prg_id, _KIND_ORDER[self.kind],
                self.pu_instance)


class SimReport(NamedTuple):
    """Latency, throughput and utilization of one simulated batch chain.

    Latencies cover the whole batch. ``tops`` counts two operations per
    useful MAC of the stages that ran.
    """
    batch_size: int
    stages: StageSelection
    mha_latency_ns: float
    ffn_latency_ns: float
    total_latency_ns: float
    ops_total: int
    ops_simulated: int  #: Useful operations of all simulated blocks.
    tops: float
    tops_mha: float
    tops_ffn: float
    gops_per_aie: float
    deployed_aie: int
    deployment_rate: float
    eff_util_mha: Optional[float]
    eff_util_ffn: Optional[float]
    eff_util_avg: float           #: Simple mean over the simulated stages.
    eff_util_avg_weighted: float  #: Mean weighted by stage latency.
    busy_fraction: float  #: Deployed core time spent in invocations.
    timeline: Tuple[SimEvent, ...] = ()
    assumptions: Tuple[str, ...] = ()


class SweepPoint(NamedTuple):
    batch: int
    tops: float
    latency_ns: float
    eff_util_avg: float


class Utilization(NamedTuple):
    deployment_rate: float
    eff_util_mha: Optional[float]
    eff_util_ffn: Optional[float]
    eff_util_avg: float
    eff_util_avg_weighted: float


class _Token(NamedTuple):
    """A block handed between pipelined PRGs."""
    batch: int
    block: int
    ready_at: float


class _Service(NamedTuple):
    stage: Stage
    prg_id: str
    start: float
    end: float
    pus: Tuple[PuInstance, ...]
    busy_core_ns: float


def check_plan_workload(plan: EdpuPlan, w: Workload,
                        stages: Iterable[Stage] = (Stage.MHA, Stage.FFN)
                        ) -> None:
    """Check that the PRGs of *plan* cover exactly the MMs of *w*.

    :raises SimulationError: naming the first PRG that does not match.
    """
    for stage in stages:
        expected: Dict[MatMulRole, Tuple[Shape, int]] = {}
        for mm in stage_workload(w, stage).mms:
            shape, count = expected.get(mm.role, (mm.shape, 0))
            if shape != mm.shape:
                raise SimulationError(
                    f"workload has two shapes for {mm.role.value}")
            expected[mm.role] = (mm.shape, count + mm.count)
        found: Dict[MatMulRole, int] = defaultdict(int)
        owner: Dict[MatMulRole, str] = {}
        for prg in plan.stage_prgs(stage):
            if not prg.allocated_pus:
                raise SimulationError(f"PRG {prg.id} has no PU allocated")
            for mm in prg.assigned_mms:
                if mm.role not in expected:
                    raise SimulationError(
                        f"PRG {prg.id} computes {mm.role.value}, which the "
                        f"{stage.value} workload does not contain")
                if mm.shape != expected[mm.role][0]:
                    raise SimulationError(
                        f"PRG {prg.id} computes {mm.shape} for "
                        f"{mm.role.value}, the workload has "
                        f"{expected[mm.role][0]}")
                found[mm.role] += mm.count
                owner.setdefault(mm.role, prg.id)
        for role, (shape, count) in expected.items():
            if found[role] != count:
                name = owner.get(role, f"for {role.value}")
                raise SimulationError(
                    f"PRG {name} covers {found[role]} of the {count} "
                    f"{role.value} products in the workload")


class _Lane(NamedTuple):
    heads: Tuple[int, ...]
    pre: PrgNode
    post: PrgNode
    linear: Dict[str, PrgNode]  #: Per-head Q, K and V PRGs, if any.


class _Simulation:
    """State of one simulation run."""

    def __init__(self, plan: EdpuPlan, w: Workload, p: PlatformProfile,
                 sc: SimConfig) -> None:
        self.plan = plan
        self.w = w
        self.p = p
        self.sc = sc
        self.env = simpy.Environment()
        self.resources = {pu.id: simpy.Resource(self.env, capacity=1)
                          for pu in plan.instances}
        self.events: List[SimEvent] = []
        self.services: List[_Service] = []
        self.ops: Dict[Stage, int] = defaultdict(int)
        self.t_pu: Dict[PuSpec, float] = {}
        self.drain_end = 0.0
        cfg = w.cfg
        self.L, self.E, self.hd = cfg.seq_len, cfg.embed_dim, cfg.head_dim
        self.dff = cfg.dff

    def invocation_time(self, spec: PuSpec) -> float:
        if spec not in self.t_pu:
            self.t_pu[spec] = pu_invocation_time(spec, self.p)
        return self.t_pu[spec]

    def record(self, time_ns: float, prg_id: str, kind: EventKind,
               pu_instance: str = '') -> None:
        if self.sc.record_timeline:
            self.events.append(SimEvent(time_ns, prg_id, kind, pu_instance))

    def fill(self, prg: PrgNode, kind: NonlinearKind) -> float:
        if not self.w.has_nonlinear(kind):
            return 0.0
        return self.sc.nonlinear_fill * self.invocation_time(prg.spec)

    def serve(self, prg: PrgNode, shape: Shape, count: int = 1
              ) -> Generator:
        """Run *count* products of *shape* on the PU group of *prg*."""
        pus = tuple(sorted(prg.allocated_pus, key=lambda pu: pu.id))
        requests = [self.resources[pu.id].request() for pu in pus]
        yield self.env.all_of(requests)
        tiling = tile_shape(shape, prg.spec)
        invocations = tiling.invocations * count
        t_pu = self.invocation_time(prg.spec)
        start = self.env.now
        for pu in pus:
            self.record(start, prg.id, EventKind.INVOCATION_START, pu.id)
        yield self.env.timeout(math.ceil(invocations / len(pus)) * t_pu)
        for pu, request in zip(pus, requests):
            self.record(self.env.now, prg.id, EventKind.INVOCATION_END,
                        pu.id)
            self.resources[pu.id].release(request)
        self.services.append(_Service(
            prg.stage, prg.id, start, self.env.now, pus,
            invocations * t_pu * prg.spec.core_count))
        self.ops[prg.stage] += 2 * tiling.useful_macs * count

    def batch_end(self, stage: Stage, time_ns: float) -> None:
        self.record(time_ns, stage.value, EventKind.BATCH_END)
        self.drain_end = max(self.drain_end, time_ns)

    def wait_ready(self, *tokens: _Token) -> Generator:
        ready = max(token.ready_at for token in tokens)
        yield self.env.timeout(max(0.0, ready - self.env.now))

    # MHA stage

    def lanes(self) -> List[_Lane]:
        found: Dict[int, Dict[str, PrgNode]] = defaultdict(dict)
        for prg in self.plan.mha_prgs:
            if prg.lane is None:
                continue
            if prg.kind == PrgKind.QKV_LB:
                found[prg.lane][prg.operand] = prg
            else:
                found[prg.lane][prg.kind.value] = prg
        lanes = []
        for lane in sorted(found):
            prgs = found[lane]
            try:
                pre = prgs.pop(PrgKind.ATB_PRE.value)
                post = prgs.pop(PrgKind.ATB_POST.value)
            except KeyError:
                raise SimulationError(
                    f"ATB lane {lane} lacks an AtbPre or AtbPost PRG")
            lanes.append(_Lane(pre.heads, pre, post, prgs))
        return lanes

    def shared_lbs(self) -> Tuple[Dict[str, PrgNode], Optional[PrgNode]]:
        qkv = {prg.operand: prg for prg in self.plan.mha_prgs
               if prg.kind == PrgKind.QKV_LB and prg.lane is None}
        proj = [prg for prg in self.plan.mha_prgs
                if prg.kind == PrgKind.PROJ_LB]
        return qkv, proj[0] if proj else None

    def pipelined_mha(self, batches: int) -> Generator:
        lanes = self.lanes()
        qkv, proj = self.shared_lbs()
        L, E, hd = self.L, self.E, self.hd
        stores = [{name: simpy.Store(self.env, capacity=FIFO_DEPTH)
                   for name in ('q', 'k', 'v', 's', 'o')} for _ in lanes]
        blocks = max((len(lane.heads) for lane in lanes), default=0)

        def active(block: int) -> List[int]:
            return [index for index, lane in enumerate(lanes)
                    if block < len(lane.heads)]

        def shared_lb(operand: str, prg: PrgNode) -> Generator:
            delay = (self.fill(prg, NonlinearKind.TRANSPOSE)
                     if operand == 'k' else 0.0)
            for batch in range(batches):
                for block in range(blocks):
                    targets = active(block)
                    yield self.env.process(
                        self.serve(prg, (L, E, hd * len(targets))))
                    for index in targets:
                        yield stores[index][operand].put(
                            _Token(batch, block, self.env.now + delay))

        def lane_lb(index: int, operand: str, prg: PrgNode) -> Generator:
            delay = (self.fill(prg, NonlinearKind.TRANSPOSE)
                     if operand == 'k' else 0.0)
            for batch in range(batches):
                for block in range(len(lanes[index].heads)):
                    yield self.env.process(self.serve(prg, (L, E, hd)))
                    yield stores[index][operand].put(
                        _Token(batch, block, self.env.now + delay))

        def pre(index: int) -> Generator:
            lane = lanes[index]
            delay = self.fill(lane.pre, NonlinearKind.SOFTMAX)
            for batch in range(batches):
                for block in range(len(lane.heads)):
                    q = yield stores[index]['q'].get()
                    k = yield stores[index]['k'].get()
                    yield self.env.process(self.wait_ready(q, k))
                    yield self.env.process(self.serve(lane.pre, (L, hd, L)))
                    yield stores[index]['s'].put(
                        _Token(batch, block, self.env.now + delay))

        def post(index: int) -> Generator:
            lane = lanes[index]
            for batch in range(batches):
                for block in range(len(lane.heads)):
                    s = yield stores[index]['s'].get()
                    v = yield stores[index]['v'].get()
                    yield self.env.process(self.wait_ready(s, v))
                    yield self.env.process(
                        self.serve(lane.post, (L, L, hd)))
                    yield stores[index]['o'].put(
                        _Token(batch, block, self.env.now))

        def projection() -> Generator:
            for batch in range(batches):
                for block in range(blocks):
                    targets = active(block)
                    tokens = []
                    for index in targets:
                        token = yield stores[index]['o'].get()
                        tokens.append(token)
                    yield self.env.process(self.wait_ready(*tokens))
                    delay = 0.0
                    if proj is not None:
                        yield self.env.process(
                            self.serve(proj, (L, hd * len(targets), E)))
                        delay = self.fill(proj, NonlinearKind.LAYERNORM_ADD)
                    if block == blocks - 1:
                        self.batch_end(Stage.MHA, self.env.now + delay)

        processes = [self.env.process(shared_lb(operand, prg))
                     for operand, prg in sorted(qkv.items())]
        for index, lane in enumerate(lanes):
            for operand, prg in sorted(lane.linear.items()):
                processes.append(
                    self.env.process(lane_lb(index, operand, prg)))
            processes.append(self.env.process(pre(index)))
            processes.append(self.env.process(post(index)))
        processes.append(self.env.process(projection()))
        yield self.env.all_of(processes)

    def serial_lane(self, lane: _Lane) -> Generator:
        L, E, hd = self.L, self.E, self.hd
        for _ in lane.heads:
            for operand in sorted(lane.linear):
                yield self.env.process(
                    self.serve(lane.linear[operand], (L, E, hd)))
            yield self.env.process(self.serve(lane.pre, (L, hd, L)))
            yield self.env.process(self.serve(lane.post, (L, L, hd)))

    def serial_mha(self, batches: int) -> Generator:
        lanes = self.lanes()
        qkv, proj = self.shared_lbs()
        L, E = self.L, self.E
        for _ in range(batches):
            for operand in sorted(qkv):
                yield self.env.process(self.serve(qkv[operand], (L, E, E)))
            yield self.env.all_of([self.env.process(self.serial_lane(lane))
                                   for lane in lanes])
            if proj is not None:
                yield self.env.process(self.serve(proj, (L, E, E)))
            self.batch_end(Stage.MHA, self.env.now)

    # FFN stage

    def ffn_lbs(self) -> Tuple[PrgNode, PrgNode]:
        by_kind = {prg.kind: prg for prg in self.plan.ffn_prgs}
        return by_kind[PrgKind.FFN1_LB], by_kind[PrgKind.FFN2_LB]

    def serial_ffn(self, batches: int) -> Generator:
        ffn1, ffn2 = self.ffn_lbs()
        L, E, dff = self.L, self.E, self.dff
        for _ in range(batches):
            yield self.env.process(self.serve(ffn1, (L, E, dff)))
            yield self.env.process(self.serve(ffn2, (L, dff, E)))
            self.batch_end(Stage.FFN, self.env.now)

    def pipelined_ffn(self, batches: int) -> Generator:
        ffn1, ffn2 = self.ffn_lbs()
        L, E, dff = self.L, self.E, self.dff
        width = len(ffn1.allocated_pus) * ffn1.spec.extents[2]
        columns = [min(width, dff - start) for start in range(0, dff, width)]
        hidden = simpy.Store(self.env, capacity=FIFO_DEPTH)
        gelu = self.fill(ffn1, NonlinearKind.GELU)
        layernorm = self.fill(ffn2, NonlinearKind.LAYERNORM_ADD)

        def first() -> Generator:
            for batch in range(batches):
                for block, cols in enumerate(columns):
                    yield self.env.process(self.serve(ffn1, (L, E, cols)))
                    yield hidden.put(
                        _Token(batch, block, self.env.now + gelu))

        def second() -> Generator:
            for _ in range(batches):
                for block, cols in enumerate(columns):
                    token = yield hidden.get()
                    yield self.env.process(self.wait_ready(token))
                    yield self.env.process(self.serve(ffn2, (L, cols, E)))
                    if block == len(columns) - 1:
                        self.batch_end(Stage.FFN, self.env.now + layernorm)

        yield self.env.all_of([self.env.process(first()),
                               self.env.process(second())])

    def stage(self, stage: Stage, batches: int,
              spans: Dict[Stage, Tuple[float, float]]) -> Generator:
        start = self.env.now
        self.drain_end = start
        self.record(start, stage.value, EventKind.STAGE_START)
        if stage == Stage.MHA:
            pipelined = self.plan.pm_mha == ParallelMode.FULLY_PIPELINED
            body = (self.pipelined_mha if pipelined else self.serial_mha)
        else:
            pipelined = self.plan.pm_ffn == ParallelMode.FULLY_PIPELINED
            body = (self.pipelined_ffn if pipelined else self.serial_ffn)
        yield self.env.process(body(batches))
        yield self.env.timeout(max(0.0, self.drain_end - self.env.now))
        self.record(self.env.now, stage.value, EventKind.STAGE_END)
        spans[stage] = (start, self.env.now)

    def run(self, stages: Sequence[Stage]
            ) -> Dict[Stage, Tuple[float, float]]:
        spans: Dict[Stage, Tuple[float, float]] = {}

        def chain() -> Generator:
            for stage in stages:
                yield self.env.process(
                    self.stage(stage, self.sc.batch_size, spans))

        self.env.process(chain())
        self.env.run()
        return spans

    # accounting

    def stage_util(self, stage: Stage, span: Tuple[float, float]) -> float:
        """Running cores over deployed cores, weighted by time.

        Every core of a pipelined stage runs for the whole stage. Cores
        of a serial stage run while a PRG holding them computes.
        """
        start, end = span
        deployed = self.plan.deployed_aie
        if end <= start or deployed == 0:
            return 0.0
        pipelined = (self.plan.pm_mha if stage == Stage.MHA
                     else self.plan.pm_ffn) == ParallelMode.FULLY_PIPELINED
        if pipelined:
            cores = {core for prg in self.plan.stage_prgs(stage)
                     for pu in prg.allocated_pus for core in pu.cores}
            return len(cores) / deployed
        intervals: Dict[int, List[Tuple[float, float]]] = defaultdict(list)
        for service in self.services:
            if service.stage != stage:
                continue
            for pu in service.pus:
                for core in pu.cores:
                    intervals[core].append((service.start, service.end))
        engaged = sum(_covered(spans) for spans in intervals.values())
        return engaged / (deployed * (end - start))


def _covered(intervals: List[Tuple[float, float]]) -> float:
    """Length of the union of *intervals*."""
    total = 0.0
    ordered = sorted(intervals)
    if not ordered:
        return total
    current_start, current_end = ordered[0]
    for start, end in ordered[1:]:
        if start > current_end:
            total += current_end - current_start
            current_start, current_end = start, end
        else:
            current_end = max(current_end, end)
    return total + current_end - current_start


def _tops(ops: int, latency_ns: float) -> float:
    # ops per ns are giga-ops per second
    return ops / latency_ns / 1e3 if latency_ns > 0 else 0.0


def simulate(plan: EdpuPlan, w: Workload, p: PlatformProfile,
             sc: SimConfig) -> SimReport:
    """Simulate *sc.batch_size* iterations of *w* on *plan*.

    :raises SimulationError: if the PRGs of *plan* do not compute the MMs
        of *w*.
    """
    if (isinstance(sc.batch_size, bool) or not isinstance(sc.batch_size, int)
            or sc.batch_size < 1):
        raise ConfigError(f"batch_size must be at least 1, "
                          f"got {sc.batch_size!r}")
    stages = StageSelection(sc.stages).stages
    check_plan_workload(plan, w, stages)
    logger.info(f"simulating batch {sc.batch_size} of "
                f"{plan.cfg.name or 'model'}... ", nonl=True)
    sim = _Simulation(plan, w, p, sc)
    spans = sim.run(stages)
    latency = {stage: end - start for stage, (start, end) in spans.items()}
    ops = {stage: total_ops(stage_workload(w, stage)) * sc.batch_size
           for stage in stages}
    ops_total = sum(ops.values())
    ops_simulated = sum(sim.ops.values())
    if ops_simulated != ops_total:
        raise SimulationError(
            f"simulated {ops_simulated} operations, the workload has "
            f"{ops_total}")
    total_latency = sum(latency.values())
    utils = {stage: sim.stage_util(stage, spans[stage]) for stage in stages}
    tops = _tops(ops_total, total_latency)
    deployed = plan.deployed_aie
    busy = sum(service.busy_core_ns for service in sim.services)
    report = SimReport(
        batch_size=sc.batch_size, stages=StageSelection(sc.stages),
        mha_latency_ns=latency.get(Stage.MHA, 0.0),
        ffn_latency_ns=latency.get(Stage.FFN, 0.0),
        total_latency_ns=total_latency,
        ops_total=ops_total, ops_simulated=ops_simulated, tops=tops,
        tops_mha=_tops(ops.get(Stage.MHA, 0), latency.get(Stage.MHA, 0.0)),
        tops_ffn=_tops(ops.get(Stage.FFN, 0), latency.get(Stage.FFN, 0.0)),
        gops_per_aie=tops * 1e3 / deployed if deployed else 0.0,
        deployed_aie=deployed, deployment_rate=plan.deployment_rate,
        eff_util_mha=utils.get(Stage.MHA), eff_util_ffn=utils.get(Stage.FFN),
        eff_util_avg=sum(utils.values()) / len(utils),
        eff_util_avg_weighted=(
            sum(utils[stage] * latency[stage] for stage in stages)
            / total_latency if total_latency > 0 else 0.0),
        busy_fraction=(busy / (deployed * total_latency)
                       if deployed and total_latency > 0 else 0.0),
        timeline=tuple(sorted(sim.events, key=SimEvent.sort_key)),
        assumptions=(
            "service time is ceil(invocations / PU instances) * T_PU",
            f"each nonlinear operator edge adds {sc.nonlinear_fill:g} "
            f"T_PU of latency in pipelined stages",
            "stages run serially: MHA for every batch, then FFN",
            "DRAM, NoC and PL kernel timing are not modelled",
            f"PU routing: {ROUTING_MODEL}",
            f"timing of profile {p.name}: T_Calc {p.t_calc_ns:g} ns, "
            f"T_Window {p.t_window_ns:g} ns",
        ))
    logger.info("done")
    return report


def sweep_batch(plan: EdpuPlan, w: Workload, p: PlatformProfile,
                batches: Sequence[int],
                stages: StageSelection = StageSelection.BOTH
                ) -> List[SweepPoint]:
    """Throughput of *plan* for each batch size, ordered by batch."""
    if not batches:
        raise ConfigError("batch list must not be empty")
    points = []
    for batch in sorted(set(batches)):
        report = simulate(plan, w, p, SimConfig(batch_size=batch,
                                                stages=stages))
        points.append(SweepPoint(batch, report.tops,
                                 report.total_latency_ns,
                                 report.eff_util_avg))
    return points


def utilization(report: SimReport, plan: EdpuPlan) -> Utilization:
    """Deployment rate of *plan* and the effective utilization of the
    stages in *report*.
    """
    return Utilization(deployment_rate=plan.deployment_rate,
                       eff_util_mha=report.eff_util_mha,
                       eff_util_ffn=report.eff_util_ffn,
                       eff_util_avg=report.eff_util_avg,
                       eff_util_avg_weighted=report.eff_util_avg_weighted)
