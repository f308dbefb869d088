"""Edge-node grid geometry: placement, adjacency and hop distances."""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .errors import InvalidArgument


class Connectivity(str, Enum):
    HIGH = "high"
    MIDDLE = "middle"
    LOW = "low"


@dataclass(frozen=True)
class Topology:
    rows: int
    cols: int
    region_side: float
    connectivity_kind: Connectivity
    node_positions: np.ndarray = field(repr=False)  # (M, 2) cell centers, meters
    adjacency: np.ndarray = field(repr=False)  # (M, M) bool
    hop_matrix: np.ndarray = field(repr=False)  # (M, M) int

    @property
    def n_nodes(self) -> int:
        return self.rows * self.cols

    def edges(self) -> list[tuple[int, int]]:
        a, b = np.nonzero(np.triu(self.adjacency))
        return list(zip(a.tolist(), b.tolist()))

    def neighbors(self, node: int) -> list[int]:
        return np.flatnonzero(self.adjacency[node]).tolist()

    def to_dict(self) -> dict:
        return {
            "rows": self.rows,
            "cols": self.cols,
            "region_side": self.region_side,
            "connectivity_kind": self.connectivity_kind.value,
            "edges": self.edges(),
        }


def _lattice_edges(rows, cols):
    edges = []
    for r in range(rows):
        for c in range(cols):
            i = r * cols + c
            if c + 1 < cols:
                edges.append((i, i + 1))
            if r + 1 < rows:
                edges.append((i, i + cols))
    return edges


def _bfs_tree_edges(rows, cols, roots):
    """Breadth-first spanning forest of the lattice grown from ``roots``.

    Returns the tree edges that connect every non-root node; neighbors are
    expanded in increasing index order so the result is deterministic.
    """
    lattice = [[] for _ in range(rows * cols)]
    for a, b in _lattice_edges(rows, cols):
        lattice[a].append(b)
        lattice[b].append(a)
    seen = set(roots)
    queue = deque(sorted(roots))
    edges = []
    while queue:
        u = queue.popleft()
        for v in sorted(lattice[u]):
            if v not in seen:
                seen.add(v)
                edges.append((u, v))
                queue.append(v)
    return edges


def _core_block(rows, cols):
    h, w = max(rows // 2, 1), max(cols // 2, 1)
    r0, c0 = (rows - h) // 2, (cols - w) // 2
    return [r * cols + c for r in range(r0, r0 + h) for c in range(c0, c0 + w)]


def _hop_matrix(adjacency):
    m = adjacency.shape[0]
    hops = np.full((m, m), -1, dtype=np.int64)
    nbrs = [np.flatnonzero(adjacency[i]).tolist() for i in range(m)]
    for s in range(m):
        hops[s, s] = 0
        queue = deque([s])
        while queue:
            u = queue.popleft()
            for v in nbrs[u]:
                if hops[s, v] < 0:
                    hops[s, v] = hops[s, u] + 1
                    queue.append(v)
    return hops


def build_grid_topology(rows: int, cols: int, region_side: float,
                        connectivity_kind: Connectivity | str = Connectivity.HIGH) -> Topology:
    """Place ``rows x cols`` edge nodes at cell centers of a square region.

    ``high`` keeps every 4-neighbor lattice link. ``middle`` keeps the lattice
    only inside a central block of ``floor(rows/2) x floor(cols/2)`` cells and
    hangs the remaining nodes off it with a breadth-first spanning forest.
    ``low`` is a breadth-first spanning tree rooted at the central node.
    """
    if rows < 1 or cols < 1:
        raise InvalidArgument(f"grid dimensions must be positive, got {rows}x{cols}")
    if not region_side > 0:
        raise InvalidArgument(f"region_side must be positive, got {region_side}")
    kind = Connectivity(connectivity_kind)
    m = rows * cols

    if kind is Connectivity.HIGH:
        edges = _lattice_edges(rows, cols)
    elif kind is Connectivity.MIDDLE:
        core = _core_block(rows, cols)
        core_set = set(core)
        edges = [(a, b) for a, b in _lattice_edges(rows, cols) if a in core_set and b in core_set]
        edges += _bfs_tree_edges(rows, cols, core)
    else:
        center = (rows // 2) * cols + cols // 2
        edges = _bfs_tree_edges(rows, cols, [center])

    adjacency = np.zeros((m, m), dtype=bool)
    for a, b in edges:
        adjacency[a, b] = adjacency[b, a] = True
    hops = _hop_matrix(adjacency)
    if (hops < 0).any():
        raise RuntimeError("grid construction produced a disconnected graph")

    cw, ch = region_side / cols, region_side / rows
    rr, cc = np.divmod(np.arange(m), cols)
    positions = np.column_stack([(cc + 0.5) * cw, (rr + 0.5) * ch]).astype(float)

    adjacency.setflags(write=False)
    hops.setflags(write=False)
    positions.setflags(write=False)
    return Topology(rows, cols, float(region_side), kind, positions, adjacency, hops)


def hop_distance(topology: Topology, a: int, b: int) -> int:
    m = topology.n_nodes
    if not (0 <= a < m and 0 <= b < m):
        raise InvalidArgument(f"node ids must lie in [0, {m}), got {a}, {b}")
    return int(topology.hop_matrix[a, b])


def clamp_to_region(topology: Topology, points) -> np.ndarray:
    return np.clip(np.asarray(points, dtype=float), 0.0, topology.region_side)


def nearest_node(topology: Topology, p) -> int:
    """Index of the node closest to ``p`` (clamped into the region); ties go to the lowest index."""
    q = clamp_to_region(topology, p)
    d2 = ((topology.node_positions - q) ** 2).sum(axis=1)
    return int(np.argmin(d2))


def nearest_nodes(topology: Topology, points) -> np.ndarray:
    """Vectorized :func:`nearest_node` over an ``(n, 2)`` array."""
    q = clamp_to_region(topology, points).reshape(-1, 2)
    d2 = ((q[:, None, :] - topology.node_positions[None, :, :]) ** 2).sum(axis=2)
    return np.argmin(d2, axis=1)
