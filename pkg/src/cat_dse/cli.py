"""
    Command line interface::

        cat-dse design --model bert-base --profile vck5000 --out build
        cat-dse simulate --out build --batches 1..32
        cat-dse codegen --out build
        cat-dse table table6 --out build

    .. autofunction:: parse_batches

    .. autofunction:: main
"""

import argparse
import json
import logging
import os
import sys
from contextlib import contextmanager
from typing import Iterator, List, Optional, Sequence

from sphinx.util.logging import getLogger

from . import codegen, report, scenarios
from .errors import (
    CatDseError, ConfigError, InputArtifactError, SimulationError,
    ValidationError
)
from .planner import EdpuPlan, design, plan_from_json, plan_to_json
from .platform import PlatformProfile, read_profile
from .simulator import SimConfig, SweepPoint, simulate
from .workload import TransformerConfig, derive_workload, read_config


logger = getLogger(__name__)

LOGGER_NAME = 'sphinx.cat_dse'
DEFAULT_MODEL = 'bert-base'
DEFAULT_PROFILE = 'vck5000'
TABLE2_MODEL = 'vit-base'


@contextmanager
def _logging(verbosity: int) -> Iterator[None]:
    """Send cat-dse log records to stderr while a command runs."""
    root = logging.getLogger(LOGGER_NAME)
    saved = root.propagate, root.level
    handler = logging.StreamHandler(sys.stderr)
    handler.setFormatter(logging.Formatter('%(message)s'))
    root.addHandler(handler)
    root.propagate = False
    root.setLevel([logging.WARNING, logging.INFO,
                   logging.DEBUG][min(verbosity, 2)])
    try:
        yield
    finally:
        root.removeHandler(handler)
        root.propagate, root.level = saved


def parse_batches(text: str) -> List[int]:
    """Batch sizes from ``a..b``, ``a,b,c`` or a single number."""
    try:
        if '..' in text:
            first, last = (int(part) for part in text.split('..', 1))
            batches = list(range(first, last + 1))
        else:
            batches = [int(part) for part in text.split(',')]
    except ValueError:
        raise ConfigError(f"invalid batch list {text!r}")
    if not batches or min(batches) < 1:
        raise ConfigError(
            f"batch list {text!r} must hold sizes of at least 1")
    return sorted(set(batches))


def _profile(args: argparse.Namespace) -> PlatformProfile:
    return read_profile(args.profile or DEFAULT_PROFILE)


def _plan_profile(args: argparse.Namespace, plan: EdpuPlan
                  ) -> PlatformProfile:
    """The profile *plan* was designed on. An explicit profile must carry
    the same name.
    """
    if not args.profile:
        try:
            return read_profile(plan.profile_name)
        except ConfigError as exc:
            raise InputArtifactError(
                f"plan was designed on profile {plan.profile_name}, "
                f"which cannot be loaded, pass --profile: {exc}")
    p = read_profile(args.profile)
    if p.name != plan.profile_name:
        raise InputArtifactError(
            f"plan was designed on profile {plan.profile_name}, "
            f"not on {p.name}")
    return p


def _model(args: argparse.Namespace, default: str = DEFAULT_MODEL
           ) -> TransformerConfig:
    return read_config(args.model or default)


def _out_dir(args: argparse.Namespace) -> str:
    try:
        os.makedirs(args.out, exist_ok=True)
    except OSError as exc:
        raise ConfigError(
            f"cannot create output directory {args.out}: {exc}")
    if not os.access(args.out, os.W_OK):
        raise ConfigError(f"output directory {args.out} is not writable")
    return args.out


def _read_plan(args: argparse.Namespace) -> EdpuPlan:
    filename = args.plan or os.path.join(args.out, 'plan.json')
    try:
        with open(filename, encoding='utf-8') as stream:
            document = json.load(stream)
    except (OSError, ValueError) as exc:
        raise InputArtifactError(f"could not read plan {filename}: {exc}")
    return plan_from_json(document)


def _write_text(filename: str, text: str) -> None:
    with open(filename, 'w', encoding='utf-8') as stream:
        stream.write(text)


def cmd_design(args: argparse.Namespace) -> int:
    cfg, p = _model(args), _profile(args)
    plan = design(cfg, p, independent_linear=args.independent_linear,
                  strict_factor1=args.strict_factor1,
                  paper_ffn_override=args.paper_ffn_override)
    out = _out_dir(args)
    _write_text(os.path.join(out, 'plan.json'),
                json.dumps(plan_to_json(plan), indent=2, sort_keys=True)
                + '\n')
    report.write_decisions(plan, p, os.path.join(out, 'decisions.md'))
    print(f"{cfg.name}: MHA {plan.pm_mha.value}, FFN {plan.pm_ffn.value}, "
          f"P_ATB={plan.p_atb}, {plan.deployed_aie}/{plan.total_aie} AIE")
    return 0


def cmd_simulate(args: argparse.Namespace) -> int:
    plan = _read_plan(args)
    cfg = plan.cfg
    if args.model:
        cfg = read_config(args.model)
        if cfg.to_json() != plan.cfg.to_json():
            raise SimulationError(
                f"plan was designed for {plan.cfg.name or 'another model'}, "
                f"not for {cfg.name}")
    p = _plan_profile(args, plan)
    w = derive_workload(cfg, plan.independent_linear)
    reports = [simulate(plan, w, p, SimConfig(batch_size=batch,
                                              record_timeline=args.timeline))
               for batch in parse_batches(args.batches)]
    out = _out_dir(args)
    report.write_report(reports, os.path.join(out, 'report.json'))
    report.write_sweep(
        [SweepPoint(r.batch_size, r.tops, r.total_latency_ns, r.eff_util_avg)
         for r in reports],
        os.path.join(out, 'sweep.csv'))
    last = reports[-1]
    if args.timeline:
        report.write_timeline(last.timeline,
                              os.path.join(out, 'timeline.csv'))
    print(f"batch {last.batch_size}: {last.tops:.3f} TOPS, "
          f"{last.gops_per_aie:.3f} GOPS/AIE, "
          f"eff_util_avg {last.eff_util_avg:.3f}")
    return 0


def cmd_codegen(args: argparse.Namespace) -> int:
    plan = _read_plan(args)
    p = _plan_profile(args, plan)
    graph = codegen.emit_graph(plan, p)
    out = _out_dir(args)
    _write_text(os.path.join(out, 'edpu.graph.json'),
                codegen.dump_graph(graph))
    _write_text(os.path.join(out, 'edpu.graph'), codegen.graph_to_text(graph))
    result = codegen.validate_graph(graph, p)
    if not result.passed:
        raise ValidationError(
            "generated graph is invalid:\n"
            + '\n'.join(f"  {violation}" for violation in result.violations))
    print(f"{len(graph.kernels)} kernels, {len(graph.plios)} PLIOs")
    return 0


def cmd_table(args: argparse.Namespace) -> int:
    out = _out_dir(args)
    filename = os.path.join(out, f"{args.which}.csv")
    if args.which == 'table2':
        rows = scenarios.compare_modes(_model(args, TABLE2_MODEL),
                                       _profile(args),
                                       batch=args.batch or 16)
        report.write_mode_table(rows, filename)
    elif args.which == 'table5':
        report.write_table(scenarios.table5(batch=args.batch or 16),
                           filename)
    else:
        report.write_table(scenarios.table6(batch=args.batch or 32),
                           filename)
    print(f"wrote {filename}")
    return 0


def _parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument('--model', help="model config path or name")
    common.add_argument('--profile', help="platform profile path or name")
    common.add_argument('--out', default='.', help="output directory")
    common.add_argument('-v', '--verbose', action='count', default=0)
    parser = argparse.ArgumentParser(
        prog='cat-dse',
        description="Customize a Transformer accelerator for AIE arrays.")
    commands = parser.add_subparsers(dest='command', required=True)
    cmd = commands.add_parser('design', parents=[common],
                              help="write plan.json and decisions.md")
    cmd.add_argument('--independent-linear',
                     action=argparse.BooleanOptionalAction, default=True)
    cmd.add_argument('--strict-factor1', action='store_true')
    cmd.add_argument('--paper-ffn-override', action='store_true')
    cmd.set_defaults(func=cmd_design)
    cmd = commands.add_parser('simulate', parents=[common],
                              help="write report.json and sweep.csv")
    cmd.add_argument('--plan', help="plan file (default OUT/plan.json)")
    cmd.add_argument('--batches', default='16', help="a..b or a,b,c")
    cmd.add_argument('--timeline', action='store_true',
                     help="write timeline.csv for the largest batch")
    cmd.set_defaults(func=cmd_simulate)
    cmd = commands.add_parser('codegen', parents=[common],
                              help="write edpu.graph.json and edpu.graph")
    cmd.add_argument('--plan', help="plan file (default OUT/plan.json)")
    cmd.set_defaults(func=cmd_codegen)
    cmd = commands.add_parser('table', parents=[common],
                              help="compare simulation with published data")
    cmd.add_argument('which', choices=('table2', 'table5', 'table6'))
    cmd.add_argument('--batch', type=int)
    cmd.set_defaults(func=cmd_table)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = _parser().parse_args(argv)
    with _logging(args.verbose):
        try:
            return args.func(args)
        except CatDseError as exc:
            logger.error(f"{exc.category}: {exc}")
            return exc.exit_code


if __name__ == '__main__':
    sys.exit(main())
