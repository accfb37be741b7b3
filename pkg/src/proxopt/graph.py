"""Communication networks: generators, connectivity and Laplacian spectrum.

Edges are stored once as sorted pairs ``(i, j)`` with ``i < j``. Per-edge
quantities that live on both directions (multipliers, tolerances) use the
*directed* edge list, ordered lexicographically by ``(src, dst)`` so the
outgoing edges of a node are contiguous and appear in ascending neighbor
order.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field
from functools import cached_property
from typing import Callable, Optional

import numpy as np
import scipy.linalg
from scipy.spatial import cKDTree

from .errors import GenerationFailure, InvalidArgument

__all__ = [
    "Network",
    "make_grid",
    "make_random_geometric",
    "sample_geometric",
    "geometric_sampler",
    "laplacian",
    "fiedler_value",
    "match_fiedler",
    "save_network",
    "load_network",
    "CONNECTIVITY_RETRIES",
]

CONNECTIVITY_RETRIES = 1000


@dataclass(frozen=True, eq=False)
class Network:
    """Undirected simple graph with node positions.

    Attributes
    ----------
    n_nodes : int
        Number of nodes ``N``.
    edges : ndarray, shape (M, 2)
        Unordered edges as ``i < j`` rows, sorted lexicographically.
    positions : ndarray, shape (N, p)
        Node coordinates.
    """

    n_nodes: int
    edges: np.ndarray
    positions: np.ndarray = field(repr=False)

    def __post_init__(self):
        n = int(self.n_nodes)
        if n < 1:
            raise InvalidArgument("a network needs at least one node")
        pos = np.asarray(self.positions, dtype=float)
        if pos.ndim == 1:
            pos = pos[:, None]
        if pos.shape[0] != n:
            raise InvalidArgument(f"expected {n} positions, got {pos.shape[0]}")
        e = np.asarray(self.edges, dtype=np.int64).reshape(-1, 2)
        if np.any(e[:, 0] == e[:, 1]):
            raise InvalidArgument("self-loops are not allowed")
        if e.size and (e.min() < 0 or e.max() >= n):
            raise InvalidArgument("edge endpoint out of range")
        e = np.sort(e, axis=1)
        e = np.unique(e, axis=0) if e.size else e
        pos.setflags(write=False)
        e.setflags(write=False)
        object.__setattr__(self, "n_nodes", n)
        object.__setattr__(self, "edges", e)
        object.__setattr__(self, "positions", pos)

    @property
    def n_edges(self) -> int:
        return len(self.edges)

    @cached_property
    def directed(self) -> np.ndarray:
        """Directed edges ``(src, dst)``, shape (2M, 2), lexicographic order."""
        e = self.edges
        both = np.concatenate([e, e[:, ::-1]], axis=0)
        order = np.lexsort((both[:, 1], both[:, 0]))
        d = both[order]
        d.setflags(write=False)
        return d

    @property
    def src(self) -> np.ndarray:
        return self.directed[:, 0]

    @property
    def dst(self) -> np.ndarray:
        return self.directed[:, 1]

    @cached_property
    def reverse(self) -> np.ndarray:
        """Index of the opposite direction for every directed edge."""
        d = self.directed
        n = self.n_nodes
        keys = d[:, 0] * n + d[:, 1]
        rev_keys = d[:, 1] * n + d[:, 0]
        idx = np.searchsorted(keys, rev_keys)
        idx.setflags(write=False)
        return idx

    @cached_property
    def forward(self) -> np.ndarray:
        """Mask selecting directed edges with ``src < dst`` (one per pair)."""
        m = self.directed[:, 0] < self.directed[:, 1]
        m.setflags(write=False)
        return m

    @cached_property
    def neighborhoods(self) -> tuple:
        nbrs = [[] for _ in range(self.n_nodes)]
        for i, j in self.directed:
            nbrs[i].append(int(j))
        return tuple(tuple(n) for n in nbrs)

    @cached_property
    def degrees(self) -> np.ndarray:
        deg = np.bincount(self.directed[:, 0], minlength=self.n_nodes)
        deg.setflags(write=False)
        return deg

    def is_connected(self) -> bool:
        seen = np.zeros(self.n_nodes, dtype=bool)
        seen[0] = True
        queue = deque([0])
        while queue:
            i = queue.popleft()
            for j in self.neighborhoods[i]:
                if not seen[j]:
                    seen[j] = True
                    queue.append(j)
        return bool(seen.all())

    def edge_index(self, i: int, j: int) -> int:
        """Position of directed edge ``(i, j)`` in :attr:`directed`."""
        keys = self.directed[:, 0] * self.n_nodes + self.directed[:, 1]
        k = int(np.searchsorted(keys, i * self.n_nodes + j))
        if k >= len(keys) or keys[k] != i * self.n_nodes + j:
            raise InvalidArgument(f"({i}, {j}) is not an edge")
        return k

    def same_as(self, other: "Network") -> bool:
        return (
            self.n_nodes == other.n_nodes
            and np.array_equal(self.edges, other.edges)
            and np.array_equal(self.positions, other.positions)
        )


def _region(region) -> tuple[float, float]:
    if np.isscalar(region):
        w = h = float(region)
    else:
        w, h = (float(v) for v in region)
    if not (w > 0 and h > 0):
        raise InvalidArgument(f"region dimensions must be positive, got {region!r}")
    return w, h


def make_grid(rows: int, cols: int, region=(1.0, 1.0)) -> Network:
    """4-connected ``rows x cols`` lattice filling a rectangle.

    Each node sits at the centre of its cell, so spacing is ``width/cols``
    horizontally and ``height/rows`` vertically. Node ``r*cols + c`` is in
    row ``r``, column ``c``.
    """
    if rows < 1 or cols < 1:
        raise InvalidArgument(f"grid dimensions must be >= 1, got {rows}x{cols}")
    w, h = _region(region)
    xs = (np.arange(cols) + 0.5) * (w / cols)
    ys = (np.arange(rows) + 0.5) * (h / rows)
    pos = np.array([(x, y) for y in ys for x in xs])
    edges = []
    for r in range(rows):
        for c in range(cols):
            i = r * cols + c
            if c + 1 < cols:
                edges.append((i, i + 1))
            if r + 1 < rows:
                edges.append((i, i + cols))
    return Network(rows * cols, np.array(edges, dtype=np.int64).reshape(-1, 2), pos)


def _place(n, region, placement, rng):
    w, h = _region(region)
    if placement == "uniform":
        return rng.uniform((0.0, 0.0), (w, h), size=(n, 2))
    if placement == "gaussian":
        # std = side/4, truncated to the region by resampling
        centre = np.array([w / 2, h / 2])
        scale = np.array([w / 4, h / 4])
        pos = np.empty((n, 2))
        filled = 0
        while filled < n:
            cand = centre + scale * rng.standard_normal((n, 2))
            ok = cand[(cand >= 0).all(axis=1) & (cand <= (w, h)).all(axis=1)]
            take = min(len(ok), n - filled)
            pos[filled:filled + take] = ok[:take]
            filled += take
        return pos
    raise InvalidArgument(f"unknown placement {placement!r} (uniform|gaussian)")


def sample_geometric(n, region, radius, placement, rng) -> Network:
    """One random geometric graph; may be disconnected."""
    if n < 2:
        raise InvalidArgument("random geometric graphs need n >= 2")
    if not radius > 0:
        raise InvalidArgument("radius must be positive")
    pos = _place(n, region, placement, rng)
    pairs = cKDTree(pos).query_pairs(float(radius), output_type="ndarray")
    return Network(n, pairs.reshape(-1, 2), pos)


def make_random_geometric(n: int, region, radius: float, placement: str = "uniform",
                          rng_seed=0, max_tries: int = CONNECTIVITY_RETRIES) -> Network:
    """Connected random geometric graph, resampling until connected."""
    rng = np.random.default_rng(rng_seed)
    for _ in range(max_tries):
        net = sample_geometric(n, region, radius, placement, rng)
        if net.is_connected():
            return net
    raise GenerationFailure(
        f"no connected {placement} geometric graph with n={n}, radius={radius} "
        f"in region {region} after {max_tries} samples; the radius is likely "
        f"too small for this density"
    )


def geometric_sampler(n, region, radius, placement="uniform") -> Callable:
    """Bind geometric-graph parameters into a ``rng -> Network`` sampler."""
    return lambda rng: sample_geometric(n, region, radius, placement, rng)


def laplacian(net: Network) -> np.ndarray:
    L = np.zeros((net.n_nodes, net.n_nodes))
    i, j = net.edges[:, 0], net.edges[:, 1]
    L[i, j] = -1.0
    L[j, i] = -1.0
    L[np.arange(net.n_nodes), np.arange(net.n_nodes)] = net.degrees
    return L


def fiedler_value(net: Network) -> float:
    """Second-smallest Laplacian eigenvalue (0 for a single node)."""
    if net.n_nodes == 1:
        return 0.0
    lam = scipy.linalg.eigh(laplacian(net), eigvals_only=True, subset_by_index=[1, 1])
    return max(float(lam[0]), 0.0)


def match_fiedler(target: Network, sampler: Callable[[np.random.Generator], Network],
                  tolerance: float = 0.25, rng_seed=0,
                  max_tries: int = CONNECTIVITY_RETRIES) -> Network:
    """First connected sample whose Fiedler value is within ``tolerance``
    (relative) of the target's.
    """
    if not tolerance > 0:
        raise InvalidArgument("tolerance must be positive")
    goal = fiedler_value(target)
    rng = np.random.default_rng(rng_seed)
    closest = None
    for _ in range(max_tries):
        net = sampler(rng)
        if not net.is_connected():
            continue
        lam2 = fiedler_value(net)
        if abs(lam2 - goal) <= tolerance * goal:
            return net
        if closest is None or abs(lam2 - goal) < abs(closest - goal):
            closest = lam2
    raise GenerationFailure(
        f"no sample within {tolerance:.0%} of target Fiedler value {goal:.4g} "
        f"after {max_tries} tries (closest connected: {closest})"
    )


def save_network(net: Network, path) -> None:
    lines = [f"nodes {net.n_nodes}", "edges"]
    lines += [f"{i} {j}" for i, j in net.edges]
    lines.append("positions")
    for i, p in enumerate(net.positions):
        lines.append(" ".join([str(i)] + [repr(float(v)) for v in p]))
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def load_network(path) -> Network:
    with open(path) as fh:
        lines = [ln.strip() for ln in fh if ln.strip() and not ln.startswith("#")]
    try:
        head, n = lines[0].split()
        if head != "nodes":
            raise ValueError
        n = int(n)
        k = lines.index("edges")
        p = lines.index("positions")
    except ValueError:
        raise InvalidArgument(f"{path}: expected 'nodes N', 'edges' and 'positions' blocks")
    edges = [tuple(int(v) for v in ln.split()) for ln in lines[k + 1:p]]
    pos: list[Optional[list]] = [None] * n
    for ln in lines[p + 1:]:
        i, *xy = ln.split()
        pos[int(i)] = [float(v) for v in xy]
    if any(v is None for v in pos):
        raise InvalidArgument(f"{path}: missing node positions")
    return Network(n, np.array(edges, dtype=np.int64).reshape(-1, 2), np.array(pos))
