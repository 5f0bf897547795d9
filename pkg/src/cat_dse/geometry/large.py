from dataclasses import dataclass
from typing import Tuple

from . import BasePuGeometry


@dataclass
class LargePuGeometry(BasePuGeometry):
    """Cube of PLIO_AIE blocks per side, built from PLIO_AIE two-dimensional
    core groups along k. Each group has a dedicated A channel and B channel,
    so 4 x 4 x 4 blocks use 8 input and 4 output channels.
    """

    name = 'Large'

    def tile(self, plio_aie: int) -> Tuple[int, int, int]:
        return plio_aie, plio_aie, plio_aie

    def a_channel(self, i: int, k: int) -> int:
        return k

    def b_channel(self, k: int, j: int) -> int:
        return k
