from dataclasses import dataclass
from typing import Tuple

from . import BasePuGeometry


@dataclass
class StandardPuGeometry(BasePuGeometry):
    """Half width along m and n, full depth along k: 2 x 4 x 2 blocks
    with one A channel per row and one B channel per column.
    """

    name = 'Standard'

    def tile(self, plio_aie: int) -> Tuple[int, int, int]:
        half = max(1, plio_aie // 2)
        return half, plio_aie, half

    def a_channel(self, i: int, k: int) -> int:
        return i

    def b_channel(self, k: int, j: int) -> int:
        return j
