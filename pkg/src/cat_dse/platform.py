"""
    Hardware platform profiles.

    .. autoclass:: PlatformProfile
        :members:

    .. autofunction:: check_profile

    .. autofunction:: load_profile

    .. autofunction:: serialize_profile

    .. autofunction:: read_profile

    .. autofunction:: vck5000_default

    .. autofunction:: derive_plio_aie
"""

import json
import math
import os
import os.path
from typing import Any, Dict, Mapping, NamedTuple, Optional, Union

from sphinx.util.logging import getLogger

from .errors import ConfigError


logger = getLogger(__name__)

PROFILE_DIR = os.path.join(os.path.dirname(__file__), 'profiles')
PROFILE_DIR_ENV = 'CAT_DSE_PROFILE_DIR'

Number = Union[int, float]


class PlatformProfile(NamedTuple):
    """Intrinsic hardware parameters of the target board."""
    name: str
    total_aie: int            #: Total_AIE, cores available to the design.
    total_buffer_bytes: int   #: Total_Buffer, on-chip SRAM in bytes.
    m_window_bytes: int       #: M_Window, one AIE window in bytes.
    t_calc_ns: Number         #: T_Calc, one single-core MM iteration.
    t_window_ns: Number       #: T_Window, one PLIO transfer of a window.
    aie_clock_ghz: float
    pl_clock_mhz: float


PROFILE_KEYS = PlatformProfile._fields
_INTEGER_KEYS = ('total_aie', 'total_buffer_bytes', 'm_window_bytes')


def check_profile(p: PlatformProfile) -> PlatformProfile:
    """Check the invariants of *p* and return it unchanged.

    :raises ConfigError: naming the offending field.
    """
    if not isinstance(p.name, str) or not p.name:
        raise ConfigError("profile name must be a non-empty string")
    for key in PROFILE_KEYS[1:]:
        value = getattr(p, key)
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"{key} must be a number, got {value!r}")
        if key in _INTEGER_KEYS and not isinstance(value, int):
            raise ConfigError(f"{key} must be an integer, got {value!r}")
        if value <= 0:
            raise ConfigError(f"{key} must be positive, got {value}")
    if p.m_window_bytes < 4:
        raise ConfigError(
            f"m_window_bytes must be at least 4, got {p.m_window_bytes}")
    return p


def load_profile(document: Mapping[str, Any]) -> PlatformProfile:
    """Build a validated profile from a parsed JSON *document*."""
    if not isinstance(document, Mapping):
        raise ConfigError("platform profile must be a JSON object")
    unknown = sorted(set(document) - set(PROFILE_KEYS))
    if unknown:
        raise ConfigError(
            f"unknown platform profile key(s): {', '.join(unknown)}")
    missing = [key for key in PROFILE_KEYS if key not in document]
    if missing:
        raise ConfigError(
            f"missing platform profile key(s): {', '.join(missing)}")
    return check_profile(PlatformProfile(**document))


def serialize_profile(p: PlatformProfile) -> Dict[str, Any]:
    return dict(p._asdict())


def _profile_filename(path_or_name: str, search_dir: Optional[str]) -> str:
    if os.path.isfile(path_or_name):
        return path_or_name
    if search_dir is None:
        search_dir = os.environ.get(PROFILE_DIR_ENV) or PROFILE_DIR
    filename = os.path.join(search_dir, path_or_name + '.json')
    if not os.path.isfile(filename):
        raise ConfigError(
            f"platform profile {path_or_name} not found in {search_dir}")
    return filename


def read_profile(path_or_name: str, search_dir: Optional[str] = None
                 ) -> PlatformProfile:
    """Read a profile from a file, or look up a profile by name.

    Names are resolved in *search_dir*, which defaults to the directory
    named by the ``CAT_DSE_PROFILE_DIR`` environment variable, or to the
    built-in profiles directory if that variable is not set.
    """
    filename = _profile_filename(path_or_name, search_dir)
    logger.debug(f"reading platform profile {filename}")
    try:
        with open(filename, encoding='utf-8') as stream:
            document = json.load(stream)
    except (OSError, ValueError) as exc:
        raise ConfigError(f"could not read platform profile {filename}: {exc}")
    return load_profile(document)


def vck5000_default() -> PlatformProfile:
    """The built-in VCK5000 profile (400 AIE cores, 23.9 MB SRAM)."""
    return read_profile('vck5000', search_dir=PROFILE_DIR)


def derive_plio_aie(p: PlatformProfile) -> int:
    """Maximum number of cores one PLIO serves in packet-switch mode
    without stalling computation, that is floor(T_Calc / T_Window),
    but at least one.
    """
    if p.t_window_ns <= 0:
        raise ConfigError(
            f"invalid profile {p.name}: t_window_ns must be positive")
    return max(1, math.floor(p.t_calc_ns / p.t_window_ns))
