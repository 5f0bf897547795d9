from dataclasses import dataclass
from typing import Tuple

from . import BasePuGeometry


@dataclass
class SmallPuGeometry(BasePuGeometry):
    """A single row of PLIO_AIE cores sharing one broadcast A block."""

    name = 'Small'

    def tile(self, plio_aie: int) -> Tuple[int, int, int]:
        return 1, 1, plio_aie

    def a_channel(self, i: int, k: int) -> int:
        return 0

    def b_channel(self, k: int, j: int) -> int:
        return 0
