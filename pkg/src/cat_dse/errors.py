"""
    Exceptions raised by cat-dse. Each carries the process exit code that
    the command line returns for it.

    .. autoclass:: CatDseError
        :members:

    .. autoclass:: ConfigError

    .. autoclass:: InputArtifactError

    .. autoclass:: ValidationError

    .. autoclass:: PlanningError

    .. autoclass:: InfeasiblePlanError

    .. autoclass:: SimulationError

    .. autoclass:: GenerationError
"""

from sphinx.errors import SphinxError


class CatDseError(SphinxError):
    """Base class for all cat-dse errors."""
    category = 'cat-dse error'
    exit_code = 1  #: Exit status of the command line for this error.


class ConfigError(CatDseError):
    """Invalid model configuration, platform profile, or command option."""
    category = 'configuration error'
    exit_code = 2


class InputArtifactError(CatDseError):
    """A plan or graph file could not be read or is corrupted."""
    category = 'input artifact error'
    exit_code = 3


class ValidationError(CatDseError):
    """A generated artifact violates its invariants."""
    category = 'validation failure'
    exit_code = 4


class PlanningError(CatDseError):
    category = 'planning error'
    exit_code = 1


class InfeasiblePlanError(PlanningError):
    """No parallel mode fits the workload onto the platform."""
    category = 'infeasible plan'


class SimulationError(CatDseError):
    """Plan and workload do not describe the same model."""
    category = 'simulation error'
    exit_code = 3


class GenerationError(CatDseError):
    category = 'generation error'
    exit_code = 3
