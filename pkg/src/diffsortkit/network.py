"""Sorting-network topologies (odd-even transposition and bitonic) and hard execution."""
from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np


class NetworkKind(str, enum.Enum):
    ODD_EVEN = "odd_even"
    BITONIC = "bitonic"


class Direction(str, enum.Enum):
    ASCENDING = "asc"
    DESCENDING = "desc"


@dataclass(frozen=True)
class Comparator:
    """Compare wires ``lo`` and ``hi``; ascending puts the minimum on ``lo``."""

    lo: int
    hi: int
    direction: Direction = Direction.ASCENDING

    @property
    def min_wire(self) -> int:
        return self.lo if self.direction is Direction.ASCENDING else self.hi

    @property
    def max_wire(self) -> int:
        return self.hi if self.direction is Direction.ASCENDING else self.lo


@dataclass(frozen=True)
class SortingNetwork:
    n: int
    kind: NetworkKind
    layers: tuple[tuple[Comparator, ...], ...]
    # per layer: (min-wire indices, max-wire indices), used by the vectorized executors
    wires: tuple[tuple[np.ndarray, np.ndarray], ...] = field(repr=False, compare=False, default=())

    def __post_init__(self):
        if not self.wires:
            wires = []
            for layer in self.layers:
                i = np.array([c.min_wire for c in layer], dtype=np.intp)
                j = np.array([c.max_wire for c in layer], dtype=np.intp)
                wires.append((i, j))
            object.__setattr__(self, "wires", tuple(wires))

    @property
    def depth(self) -> int:
        return len(self.layers)

    @property
    def size(self) -> int:
        """Total number of comparators."""
        return sum(len(layer) for layer in self.layers)

    def dump(self) -> str:
        """One ``lo,hi,dir`` line per comparator, layers separated by blank lines."""
        blocks = []
        for layer in self.layers:
            blocks.append("\n".join(f"{c.lo},{c.hi},{c.direction.value}" for c in layer))
        return "\n\n".join(blocks)


def _odd_even(n):
    layers = []
    for t in range(n):
        layers.append(tuple(Comparator(i, i + 1) for i in range(t % 2, n - 1, 2)))
    return layers


def _bitonic(n):
    layers = []
    k = 2
    while k <= n:
        j = k // 2
        while j >= 1:
            layer = []
            for i in range(n):
                partner = i ^ j
                if partner > i:
                    d = Direction.ASCENDING if i & k == 0 else Direction.DESCENDING
                    layer.append(Comparator(i, partner, d))
            layers.append(tuple(layer))
            j //= 2
        k *= 2
    return layers


def build(kind, n: int) -> SortingNetwork:
    kind = NetworkKind(kind)
    if n < 1:
        raise ValueError(f"n must be positive, got {n}")
    if kind is NetworkKind.ODD_EVEN:
        layers = _odd_even(n)
    else:
        if n & (n - 1):
            raise ValueError(f"unsupported size {n} for bitonic network (needs a power of two)")
        layers = _bitonic(n)
    return SortingNetwork(n=n, kind=kind, layers=tuple(layers))


def bitonic_depth(n: int) -> int:
    k = n.bit_length() - 1
    return k * (k + 1) // 2


def hard_sort(net: SortingNetwork, x):
    """Run the network with exact swaps.

    Returns ``(sorted_values, ranks)`` where ``ranks[c]`` is the output
    position of input ``c``.  Works on a trailing axis of length ``n``.
    A swap happens only on strict ``>``, so equal values keep their order
    through each comparator.
    """
    x = np.asarray(x, dtype=np.float64)
    if x.shape[-1:] != (net.n,):
        raise ValueError(f"expected trailing length {net.n}, got shape {x.shape}")
    lead = x.shape[:-1]
    # wire-major layout so each comparator gathers contiguous rows
    v = x.reshape(-1, net.n).T.copy()
    origin = np.repeat(np.arange(net.n)[:, None], v.shape[1], axis=1)
    for i, j in net.wires:
        if i.size == 0:
            continue
        a, b = v[i], v[j]
        swap = a > b
        v[i], v[j] = np.where(swap, b, a), np.where(swap, a, b)
        oi, oj = origin[i], origin[j]
        origin[i], origin[j] = np.where(swap, oj, oi), np.where(swap, oi, oj)
    v = v.T.reshape(*lead, net.n)
    origin = origin.T.reshape(*lead, net.n)
    ranks = np.empty_like(origin)
    np.put_along_axis(ranks, origin, np.broadcast_to(np.arange(net.n), origin.shape), axis=-1)
    return v, ranks


def ranks_of(scores):
    """Hard ascending ranks along the last axis; ties broken by index."""
    scores = np.asarray(scores)
    order = np.argsort(scores, axis=-1, kind="stable")
    ranks = np.empty(scores.shape, dtype=np.intp)
    np.put_along_axis(ranks, order, np.broadcast_to(np.arange(scores.shape[-1]), scores.shape), axis=-1)
    return ranks
