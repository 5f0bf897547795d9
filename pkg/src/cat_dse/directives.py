"""
    .. autoclass:: EdpuPlanDirective

        .. automethod:: run
"""

import os.path
from typing import TYPE_CHECKING, List, Sequence, cast

import docutils.nodes
import docutils.parsers.rst.directives as directives
from docutils.parsers.rst import Directive
from sphinx.util.logging import getLogger

from .errors import CatDseError, ConfigError
from .planner import EdpuPlan, design
from .platform import PlatformProfile, read_profile
from .pu_design import DEFAULT_GEOMETRIES
from .simulator import SimConfig, simulate
from .workload import TransformerConfig, derive_workload, read_config

if TYPE_CHECKING:
    from sphinx.environment import BuildEnvironment


logger = getLogger(__name__)


def _table(header: Sequence[str], rows: Sequence[Sequence[str]]
           ) -> docutils.nodes.table:
    table = docutils.nodes.table()
    group = docutils.nodes.tgroup(cols=len(header))
    table += group
    for _ in header:
        group += docutils.nodes.colspec(colwidth=1)

    def row_node(cells: Sequence[str]) -> docutils.nodes.row:
        row = docutils.nodes.row()
        for cell in cells:
            entry = docutils.nodes.entry()
            entry += docutils.nodes.paragraph(text=str(cell))
            row += entry
        return row

    head = docutils.nodes.thead()
    head += row_node(header)
    group += head
    body = docutils.nodes.tbody()
    for cells in rows:
        body += row_node(cells)
    group += body
    return table


class EdpuPlanDirective(Directive):

    """Class for processing the :rst:dir:`edpu-plan` directive.

    Designs the accelerator for the given model and profile while the
    documentation builds, and renders the decision and allocation tables,
    plus a simulation summary when ``:batch:`` is set.
    """

    required_arguments = 0
    optional_arguments = 0
    has_content = False
    option_spec = {
        'model': directives.unchanged_required,
        'profile': directives.unchanged_required,
        'independent-linear': directives.flag,
        'per-head-linear': directives.flag,
        'strict-factor1': directives.flag,
        'paper-ffn-override': directives.flag,
        'batch': directives.positive_int,
    }

    def _config(self, env: "BuildEnvironment") -> TransformerConfig:
        model = self.options.get('model', 'bert-base')
        filename = env.relfn2path(model, env.docname)[1]
        if os.path.isfile(filename):
            env.note_dependency(filename)
            return read_config(filename)
        return read_config(model)

    def _profile(self, env: "BuildEnvironment") -> PlatformProfile:
        config = env.app.config
        name = self.options.get('profile', config.cat_dse_default_profile)
        filename = env.relfn2path(name, env.docname)[1]
        if os.path.isfile(filename):
            env.note_dependency(filename)
            return read_profile(filename)
        if config.cat_dse_profile_dir:
            search_dir = os.path.join(env.srcdir, config.cat_dse_profile_dir)
            try:
                return read_profile(name, search_dir=search_dir)
            except ConfigError:
                pass
        return read_profile(name)

    def _decision_table(self, plan: EdpuPlan) -> docutils.nodes.table:
        rows = [[decision.stage.value, f"{decision.factor1:g}",
                 f"{decision.factor2_bytes}",
                 f"{decision.max_pipeline_depth}", decision.chosen.value,
                 decision.triggered_by.value]
                for decision in plan.decisions or ()]
        rows.append(['P_ATB', '', '', '', f"{plan.p_atb}", ''])
        return _table(['Stage', 'Factor1', 'Factor2 (bytes)', 'Depth',
                       'Mode', 'Trigger'], rows)

    def _allocation_table(self, plan: EdpuPlan) -> docutils.nodes.table:
        rows = [[prg.id, prg.kind.value,
                 ', '.join(f"{count} {spec.name}"
                           for spec, count in prg.pu_groups()),
                 f"{len(prg.cores)}"]
                for prg in plan.prgs]
        rows.append(['deployed', '', f"{plan.deployment_rate:.2f}",
                     f"{plan.deployed_aie}"])
        return _table(['PRG', 'Kind', 'PU group', 'Cores'], rows)

    def _simulation_table(self, plan: EdpuPlan, cfg: TransformerConfig,
                          p: PlatformProfile, batch: int
                          ) -> docutils.nodes.table:
        report = simulate(plan, derive_workload(cfg, plan.independent_linear),
                          p, SimConfig(batch_size=batch))

        def util(value: object) -> str:
            return '' if value is None else f"{value:.3f}"

        rows = [
            ['batch', f"{batch}"],
            ['latency (ns)', f"{report.total_latency_ns:g}"],
            ['TOPS', f"{report.tops:.3f}"],
            ['GOPS/AIE', f"{report.gops_per_aie:.3f}"],
            ['deployment rate', f"{report.deployment_rate:.3f}"],
            ['eff. util. MHA', util(report.eff_util_mha)],
            ['eff. util. FFN', util(report.eff_util_ffn)],
            ['eff. util. average', util(report.eff_util_avg)],
        ]
        return _table(['Metric', 'Value'], rows)

    def run(self) -> List[docutils.nodes.Node]:
        """Design the accelerator and return its tables, or an error
        node if the design fails.
        """
        env = cast("BuildEnvironment", self.state.document.settings.env)
        independent_linear = 'per-head-linear' not in self.options
        try:
            cfg = self._config(env)
            p = self._profile(env)
            plan = design(
                cfg, p, independent_linear=independent_linear,
                strict_factor1='strict-factor1' in self.options,
                paper_ffn_override='paper-ffn-override' in self.options,
                geometries=env.app.config.cat_dse_pu_geometries
                or DEFAULT_GEOMETRIES)
            result: List[docutils.nodes.Node] = [
                self._decision_table(plan), self._allocation_table(plan)]
            if 'batch' in self.options:
                result.append(self._simulation_table(
                    plan, cfg, p, self.options['batch']))
        except CatDseError as exc:
            message = f"{exc.category}: {exc}"
            logger.warning(message, location=(env.docname, self.lineno),
                           type="cat_dse", subtype="plan")
            error = docutils.nodes.error()
            error += docutils.nodes.paragraph(text=message)
            return [error]
        return result
