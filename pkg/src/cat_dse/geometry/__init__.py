"""
    PU geometry families. A geometry decides the block tiling of an AIE MM
    PU and how its operand blocks are assigned to input PLIO channels.

    Core ``(i, j, k)`` of a PU computes the partial product of A block
    ``(i, k)`` and B block ``(k, j)``. A blocks are multicast along ``j``,
    B blocks along ``i``, and partial sums cascade along ``k``. Each cascade
    chain forms one output packet.

    .. autoclass:: PlioRoute
        :members:

    .. autoclass:: PuRouting
        :members:

    .. autoclass:: BasePuGeometry
        :members:
"""

from abc import ABC
from dataclasses import dataclass
from itertools import product
from typing import Dict, List, NamedTuple, Tuple

Coord = Tuple[int, int, int]
Packet = Tuple[Coord, ...]


class PlioRoute(NamedTuple):
    """One PLIO channel of a PU in packet-switch mode."""
    direction: str                #: ``"in"`` or ``"out"``.
    operand: str                  #: ``"A"``, ``"B"`` or ``"C"``.
    packets: Tuple[Packet, ...]   #: Cores reached by each packet.

    @property
    def cores(self) -> Tuple[Coord, ...]:
        return tuple(sorted({core for packet in self.packets
                             for core in packet}))


class PuRouting(NamedTuple):
    tile: Tuple[int, int, int]  #: Blocks along m, k and n.
    inputs: Tuple[PlioRoute, ...]
    outputs: Tuple[PlioRoute, ...]

    @property
    def plios(self) -> Tuple[PlioRoute, ...]:
        return self.inputs + self.outputs

    @property
    def cores(self) -> List[Coord]:
        """All cores, ordered by ``(i, j, k)``."""
        tm, tk, tn = self.tile
        return list(product(range(tm), range(tn), range(tk)))


def _chunks(packets: List[Packet], size: int) -> List[Tuple[Packet, ...]]:
    return [tuple(packets[start:start + size])
            for start in range(0, len(packets), size)]


@dataclass
class BasePuGeometry(ABC):
    """Base class for PU geometry families.

    Subclasses are dataclasses without required arguments, so that
    :func:`~cat_dse.plugin.find_plugin` results can be instantiated
    directly.
    """

    #: Name of the PU specification built from this geometry.
    name = ''

    def tile(self, plio_aie: int) -> Tuple[int, int, int]:
        """Blocks along m, k and n for the given PLIO multiplexing bound."""
        raise NotImplementedError

    def a_channel(self, i: int, k: int) -> int:
        """Input channel carrying A block ``(i, k)``."""
        raise NotImplementedError

    def b_channel(self, k: int, j: int) -> int:
        """Input channel carrying B block ``(k, j)``."""
        raise NotImplementedError

    def routing(self, tile: Tuple[int, int, int], plio_aie: int
                ) -> PuRouting:
        """Routing table of a PU with the given *tile*.

        Output chains are packed onto output channels in ``(i, j)``
        order, *plio_aie* chains per channel.
        """
        tm, tk, tn = tile
        a_plios: Dict[int, List[Packet]] = {}
        for i, k in product(range(tm), range(tk)):
            packet = tuple((i, j, k) for j in range(tn))
            a_plios.setdefault(self.a_channel(i, k), []).append(packet)
        b_plios: Dict[int, List[Packet]] = {}
        for k, j in product(range(tk), range(tn)):
            packet = tuple((i, j, k) for i in range(tm))
            b_plios.setdefault(self.b_channel(k, j), []).append(packet)
        inputs = tuple(
            [PlioRoute('in', 'A', tuple(a_plios[c])) for c in sorted(a_plios)]
            + [PlioRoute('in', 'B', tuple(b_plios[c]))
               for c in sorted(b_plios)])
        chains = [tuple((i, j, k) for k in range(tk))
                  for i, j in product(range(tm), range(tn))]
        outputs = tuple(PlioRoute('out', 'C', group)
                        for group in _chunks(chains, max(1, plio_aie)))
        return PuRouting(tile=tile, inputs=inputs, outputs=outputs)
