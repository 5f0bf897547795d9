"""
    Report files: the decision log, the simulation report, the batch
    sweep, the event timeline and the reproduction tables.

    .. autofunction:: decisions_text

    .. autofunction:: write_decisions

    .. autofunction:: report_to_json

    .. autofunction:: write_report

    .. autofunction:: write_sweep

    .. autofunction:: write_timeline

    .. autofunction:: write_table

    .. autofunction:: write_mode_table
"""

import csv
import json
from typing import Any, Dict, Iterable, List, Optional, Sequence

from .planner import (
    EdpuPlan, ParallelMode, PlanDecision, buffer_components, decide_p_atb,
    largest_spec
)
from .platform import PlatformProfile, derive_plio_aie
from .scenarios import ModeComparison, TableRow
from .simulator import SimEvent, SimReport, SweepPoint
from .workload import Stage

MB = 1 << 20


def _fmt(value: Optional[float]) -> str:
    return '' if value is None else f"{value:g}"


def _decision_lines(plan: EdpuPlan, p: PlatformProfile,
                    decision: PlanDecision, p_atb: Optional[int]
                    ) -> List[str]:
    cfg = plan.cfg
    L, E = cfg.seq_len, cfg.embed_dim
    largest = largest_spec(plan.pu_specs)
    n_max = p.total_aie // largest.core_count
    plio_aie = derive_plio_aie(p)
    if decision.stage == Stage.MHA:
        numerator, formula = f"{L}*{E}*{E}", "L*E*E"
    else:
        numerator, formula = f"{L}*{E}*{cfg.dff}", "L*E*dff"
    lines = [
        f"## {decision.stage.value} stage",
        "",
        f"- Factor1 = {decision.factor1:g}, from {formula} / "
        f"(N_max * (PLIO_AIE*MMSZ_AIE)^3) = {numerator} / "
        f"({n_max} * {largest.invocation_macs})",
    ]
    if decision.factor1_strict is not None:
        lines.append(
            f"- Factor1 (strict) = {decision.factor1_strict:g}, from "
            f"{formula} / (floor(Total_AIE/PLIO_AIE^2) * "
            f"(PLIO_AIE*MMSZ_AIE)^3) = {numerator} / "
            f"({p.total_aie // plio_aie ** 2} * "
            f"{(plio_aie * largest.mmsz) ** 3})")
    lines.append(
        f"- Factor2 = {decision.factor2_bytes / MB:g} MB "
        f"({decision.factor2_bytes} bytes), "
        f"Total_Buffer = {decision.total_buffer_bytes} bytes")
    if p_atb is not None:
        components = buffer_components(cfg, p_atb,
                                       ParallelMode.FULLY_PIPELINED,
                                       decision.stage)
        lines.append("  - " + " + ".join(f"{label} {size}"
                                         for label, size in components))
    depth = decision.max_pipeline_depth
    lines += [
        f"- Factor1 >= {depth}: {decision.factor1 >= depth}; "
        f"Factor2 > Total_Buffer: "
        f"{decision.factor2_bytes > decision.total_buffer_bytes}",
        f"- Parallel mode = {decision.chosen.value} "
        f"(triggered by {decision.triggered_by.value})",
        "",
    ]
    return lines


def decisions_text(plan: EdpuPlan, p: PlatformProfile) -> str:
    """Markdown decision log of *plan*, with the arithmetic behind each
    decision.
    """
    cfg = plan.cfg
    plio_aie = derive_plio_aie(p)
    lines = [
        f"# EDPU design: {cfg.name or 'model'} on {plan.profile_name}",
        "",
        "## Platform",
        "",
        f"- PLIO_AIE = floor(T_Calc / T_Window) = "
        f"floor({p.t_calc_ns:g} / {p.t_window_ns:g}) = {plio_aie}",
    ]
    if plan.pu_specs:
        lines.append(f"- MMSZ_AIE = {plan.pu_specs[0].mmsz}")
    for spec in plan.pu_specs:
        m, k, n = spec.extents
        lines.append(
            f"- {spec.name}: {spec.core_count} cores, {spec.in_plio} in / "
            f"{spec.out_plio} out PLIO, {m}x{k}x{n} per invocation")
    lines.append("")
    p_atb = None
    if plan.atb_ratio is not None:
        p_atb = min(decide_p_atb(plan.atb_ratio), cfg.head)
    if plan.decisions is not None:
        for decision in plan.decisions:
            lines += _decision_lines(plan, p, decision, p_atb)
    lines += ["## ATB parallelism", ""]
    ratio = plan.atb_ratio
    if ratio is not None:
        if ratio.qkv_output_heads % ratio.atb_input_heads == 0:
            lines.append(
                f"- P_ATB = {plan.p_atb}, from {ratio.qkv_output_heads} QKV "
                f"output heads / {ratio.atb_input_heads} ATB input heads")
        else:
            lines.append(
                f"- P_ATB = {plan.p_atb}, from floor("
                f"{ratio.throughput_qkv:g} / {ratio.throughput_atb:g} "
                f"+ 0.5) heads per second")
    else:
        lines.append(f"- P_ATB = {plan.p_atb}")
    lines += [
        "",
        "## Allocation",
        "",
        f"- MHA stage: {plan.pm_mha.value}; FFN stage: {plan.pm_ffn.value}",
        f"- deployed AIE = {plan.deployed_aie} of {plan.total_aie}, "
        f"deployment rate {plan.deployment_rate:g}",
        "",
        "| PRG | kind | PU group | cores |",
        "|---|---|---|---|",
    ]
    for prg in plan.prgs:
        group = ', '.join(f"{count} {spec.name}"
                          for spec, count in prg.pu_groups())
        lines.append(f"| {prg.id} | {prg.kind.value} | {group} | "
                     f"{len(prg.cores)} |")
    if plan.notes:
        lines += ["", "## Notes", ""]
        lines += [f"- {note}" for note in plan.notes]
    return '\n'.join(lines) + '\n'


def write_decisions(plan: EdpuPlan, p: PlatformProfile, filename: str
                    ) -> None:
    with open(filename, 'w', encoding='utf-8') as stream:
        stream.write(decisions_text(plan, p))


def report_to_json(report: SimReport) -> Dict[str, Any]:
    return {
        'batch_size': report.batch_size,
        'stages': report.stages.value,
        'latency_ns': {'mha': report.mha_latency_ns,
                       'ffn': report.ffn_latency_ns,
                       'total': report.total_latency_ns},
        'ops': {'total': report.ops_total,
                'simulated': report.ops_simulated},
        'tops': report.tops,
        'tops_mha': report.tops_mha,
        'tops_ffn': report.tops_ffn,
        'gops_per_aie': report.gops_per_aie,
        'deployed_aie': report.deployed_aie,
        'deployment_rate': report.deployment_rate,
        'eff_util': {'mha': report.eff_util_mha,
                     'ffn': report.eff_util_ffn,
                     'avg_simple': report.eff_util_avg,
                     'avg_weighted': report.eff_util_avg_weighted},
        'busy_fraction': report.busy_fraction,
        'assumptions': list(report.assumptions),
    }


def write_report(reports: Sequence[SimReport], filename: str) -> None:
    """Write the reports of a sweep, ordered by batch size."""
    document = {'reports': [report_to_json(report) for report in
                            sorted(reports, key=lambda r: r.batch_size)]}
    with open(filename, 'w', encoding='utf-8') as stream:
        json.dump(document, stream, indent=2, sort_keys=True)
        stream.write('\n')


def _write_csv(filename: str, header: Sequence[str],
               rows: Iterable[Sequence[Any]]) -> None:
    with open(filename, 'w', encoding='utf-8', newline='') as stream:
        writer = csv.writer(stream, lineterminator='\n')
        writer.writerow(header)
        writer.writerows(rows)


def write_sweep(points: Sequence[SweepPoint], filename: str) -> None:
    _write_csv(filename, ('batch', 'tops', 'latency_ns', 'eff_util_avg'),
               ((point.batch, repr(point.tops), repr(point.latency_ns),
                 repr(point.eff_util_avg))
                for point in sorted(points)))


def write_timeline(events: Sequence[SimEvent], filename: str) -> None:
    _write_csv(filename, ('time_ns', 'prg', 'kind', 'pu'),
               ((repr(float(event.time_ns)), event.prg_id, event.kind.value,
                 event.pu_instance)
                for event in sorted(events, key=SimEvent.sort_key)))


def write_table(rows: Sequence[TableRow], filename: str) -> None:
    """Published against simulated values, with their difference."""
    _write_csv(filename, ('item', 'metric', 'paper', 'simulated', 'delta'),
               ((row.item, row.metric, _fmt(row.paper),
                 _fmt(row.simulated), _fmt(row.delta)) for row in rows))


def write_mode_table(rows: Sequence[ModeComparison], filename: str) -> None:
    _write_csv(
        filename,
        ('lab', 'independent_linear', 'atb_mode', 'p_atb', 'paper_speedup',
         'simulated_speedup', 'delta', 'paper_rank', 'simulated_rank'),
        ((row.lab.number, row.lab.independent_linear,
          row.lab.atb_mode.value, row.lab.p_atb,
          _fmt(row.lab.paper_speedup), _fmt(row.speedup),
          _fmt(row.speedup - row.lab.paper_speedup), row.paper_rank,
          row.rank) for row in rows))
