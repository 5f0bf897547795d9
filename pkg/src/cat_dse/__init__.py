"""
    .. autofunction:: setup
"""

__version__ = '0.1.0'

from typing import Any, Dict  # noqa: E402
from sphinx.application import Sphinx  # noqa: E402

from .directives import EdpuPlanDirective  # noqa: E402
from .pu_design import DEFAULT_GEOMETRIES  # noqa: E402


def setup(app: Sphinx) -> Dict[str, Any]:
    """Set up the cat-dse extension:

    * register config values
    * register the edpu-plan directive
    """
    app.add_config_value("cat_dse_default_profile", "vck5000", "env")
    app.add_config_value("cat_dse_profile_dir", None, "env")
    app.add_config_value("cat_dse_pu_geometries", list(DEFAULT_GEOMETRIES),
                         "env")
    app.add_directive("edpu-plan", EdpuPlanDirective)
    return {
        'version': __version__,
        'parallel_read_safe': True,
        'parallel_write_safe': True,
        }
