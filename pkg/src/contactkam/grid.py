"""Periodic grids and the velocity-stencil cost graph.

Edges are stored sorted by (target, source) with a CSR pointer over targets,
which is the access pattern of the backward Lax-Oleinik step: node j reads
all of its predecessors in increasing index order.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import connected_components

from .errors import BadGrid
from .model import TWO_PI, LagrangianModel, SATURATION_SLOPE_MAX


@dataclass(frozen=True)
class TorusGrid:
    dim: int
    n: int
    dt: float
    vmax: float

    @property
    def dx(self) -> float:
        return TWO_PI / self.n

    @property
    def num_nodes(self) -> int:
        return self.n ** self.dim

    @property
    def radius(self) -> float:
        return self.vmax * self.dt

    def coords(self, index=None) -> np.ndarray:
        """Coordinates (radians) of nodes in row-major order, shape (N, dim)."""
        idx = np.arange(self.num_nodes) if index is None else np.asarray(index)
        digits = self.unravel(idx)
        return digits * self.dx

    def unravel(self, index) -> np.ndarray:
        index = np.asarray(index, dtype=np.int64)
        if self.dim == 1:
            return index[..., None]
        return np.stack([index // self.n, index % self.n], axis=-1)

    def ravel(self, digits) -> np.ndarray:
        digits = np.mod(np.asarray(digits, dtype=np.int64), self.n)
        if self.dim == 1:
            return digits[..., 0]
        return digits[..., 0] * self.n + digits[..., 1]

    def nearest_node(self, x) -> int:
        x = np.atleast_1d(np.asarray(x, dtype=float))
        digits = np.rint(np.mod(x, TWO_PI) / self.dx).astype(np.int64)
        return int(self.ravel(digits))

    def stencil(self) -> list[tuple[int, ...]]:
        """Distinct minimal periodic offsets within the speed bound."""
        reach = int(math.floor(self.radius / self.dx + 1e-9))
        limit = self.radius * (1.0 + 1e-12)
        reps = set()
        rng = range(-reach, reach + 1)
        offsets = [(k,) for k in rng] if self.dim == 1 else [(a, b) for a in rng for b in rng]
        for off in offsets:
            if self.dx * math.sqrt(sum(k * k for k in off)) > limit:
                continue
            reps.add(tuple(minimal_offset(k, self.n) for k in off))
        return sorted(reps)


def minimal_offset(k: int, n: int) -> int:
    """Minimal periodic representative of k mod n; ties at n/2 go positive."""
    r = k % n
    if 2 * r > n:
        return r - n
    return r


def build_grid(dim: int, n: int, dt: float, vmax: float) -> TorusGrid:
    if dim not in (1, 2):
        raise BadGrid("dim must be 1 or 2")
    if n < 8:
        raise BadGrid(f"n = {n} < 8")
    if not dt > 0:
        raise BadGrid("dt must be positive")
    if not vmax > 0:
        raise BadGrid("vmax must be positive")
    grid = TorusGrid(int(dim), int(n), float(dt), float(vmax))
    if grid.radius < grid.dx * (1.0 - 1e-12):
        raise BadGrid(
            f"stencil radius vmax*dt = {grid.radius:.6g} < dx = {grid.dx:.6g}; "
            "the graph would be disconnected")
    return grid


@dataclass
class CostGraph:
    """Directed graph with base costs dt * L(x_j, v_ij, 0) and node couplings.

    ``lam`` holds -dL/du(x_j, ., 0) per node; with ``kappa`` it determines
    the full coupling g(x_j, u) = -lam_j u - kappa u^3/(1+u^2).
    """

    num_nodes: int
    src: np.ndarray
    dst: np.ndarray
    base_cost: np.ndarray
    disp: np.ndarray
    dt: float
    lam: np.ndarray
    kappa: float = 0.0
    delta: float = 1.0
    Delta: float = 1.0
    coords: np.ndarray | None = None
    grid: TorusGrid | None = None
    model: LagrangianModel | None = None

    def __post_init__(self):
        order = np.lexsort((self.src, self.dst))
        self.src = np.ascontiguousarray(self.src[order], dtype=np.int64)
        self.dst = np.ascontiguousarray(self.dst[order], dtype=np.int64)
        self.base_cost = np.ascontiguousarray(self.base_cost[order], dtype=float)
        self.disp = np.ascontiguousarray(self.disp[order], dtype=float)
        self.lam = np.ascontiguousarray(self.lam, dtype=float)
        counts = np.bincount(self.dst, minlength=self.num_nodes)
        self.in_ptr = np.zeros(self.num_nodes + 1, dtype=np.int64)
        np.cumsum(counts, out=self.in_ptr[1:])
        if self.coords is None:
            self.coords = np.zeros((self.num_nodes, self.disp.shape[1]))

    @property
    def num_edges(self) -> int:
        return len(self.src)

    @property
    def dim(self) -> int:
        return self.disp.shape[1]

    @property
    def velocity(self) -> np.ndarray:
        return self.disp / self.dt

    @property
    def is_loop(self) -> np.ndarray:
        return self.src == self.dst

    @property
    def slope_max(self) -> float:
        """Upper bound Delta' of dH/du used for the contraction precondition."""
        return self.Delta + self.kappa * SATURATION_SLOPE_MAX

    @property
    def dx(self) -> float:
        return self.grid.dx if self.grid is not None else 1.0

    @property
    def stencil_radius(self) -> float:
        return float(np.sqrt((self.disp ** 2).sum(axis=1)).max()) if self.num_edges else 0.0

    def coupling(self, u: np.ndarray) -> np.ndarray:
        u = np.asarray(u, dtype=float)
        g = -self.lam * u
        if self.kappa:
            g = g - self.kappa * (u * u * u) / (1.0 + u * u)
        return g

    def coupling_slope(self, u: np.ndarray) -> np.ndarray:
        u = np.asarray(u, dtype=float)
        s = -self.lam + 0.0 * u
        if self.kappa:
            u2 = u * u
            s = s - self.kappa * (u2 * u2 + 3.0 * u2) / ((1.0 + u2) * (1.0 + u2))
        return s

    def adjacency(self, mask: np.ndarray | None = None) -> csr_matrix:
        sel = slice(None) if mask is None else mask
        data = np.ones(len(self.src[sel]))
        return csr_matrix((data, (self.src[sel], self.dst[sel])),
                          shape=(self.num_nodes, self.num_nodes))

    def edge_index(self, i: int, j: int) -> int:
        """First edge i -> j in storage order, -1 when absent."""
        lo, hi = self.in_ptr[j], self.in_ptr[j + 1]
        hits = np.nonzero(self.src[lo:hi] == i)[0]
        return int(lo + hits[0]) if len(hits) else -1

    def dump_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["i", "j"] + [f"d{k}" for k in range(self.dim)] + ["cost"])
            for e in range(self.num_edges):
                w.writerow([int(self.src[e]), int(self.dst[e])]
                           + [fmt(d) for d in self.disp[e]] + [fmt(self.base_cost[e])])


def fmt(value: float) -> str:
    """Fixed 17-significant-digit text, byte-stable across runs."""
    return format(float(value), ".17g")


def build_cost_graph(model: LagrangianModel, grid: TorusGrid) -> CostGraph:
    """Stencil graph with endpoint-rule costs c0_ij = dt * L(x_j, v_ij, 0)."""
    if model.dim != grid.dim:
        raise BadGrid(f"model dim {model.dim} != grid dim {grid.dim}")
    N = grid.num_nodes
    coords = grid.coords()
    digits = grid.unravel(np.arange(N))
    offsets = np.array(grid.stencil(), dtype=np.int64)
    S = len(offsets)
    src = np.repeat(np.arange(N, dtype=np.int64), S)
    tgt_digits = digits[:, None, :] + offsets[None, :, :]
    dst = grid.ravel(tgt_digits).reshape(-1)
    disp = np.tile(offsets * grid.dx, (N, 1)).astype(float)
    vel = disp / grid.dt
    cost = grid.dt * model.base_lagrangian(coords[dst], vel)
    lam = model.lam(coords)
    return CostGraph(num_nodes=N, src=src, dst=dst, base_cost=cost, disp=disp, dt=grid.dt,
                     lam=lam, kappa=model.kappa, delta=model.delta, Delta=model.Delta,
                     coords=coords, grid=grid, model=model)


def graph_from_edges(num_nodes: int, edges: Iterable[Sequence[float]], dt: float = 1.0,
                     lam=1.0, kappa: float = 0.0) -> CostGraph:
    """Abstract graph from (i, j, cost) triples.

    Displacements are zero and the node index doubles as its coordinate.
    """
    edges = list(edges)
    src = np.array([int(e[0]) for e in edges], dtype=np.int64)
    dst = np.array([int(e[1]) for e in edges], dtype=np.int64)
    cost = np.array([float(e[2]) for e in edges])
    if len(edges) and (src.max() >= num_nodes or dst.max() >= num_nodes or min(src.min(), dst.min()) < 0):
        raise ValueError("edge endpoint out of range")
    lam_arr = np.broadcast_to(np.asarray(lam, dtype=float), (num_nodes,)).copy()
    return CostGraph(num_nodes=num_nodes, src=src, dst=dst, base_cost=cost,
                     disp=np.zeros((len(edges), 1)), dt=float(dt), lam=lam_arr,
                     coords=np.arange(num_nodes, dtype=float)[:, None],
                     kappa=float(kappa), delta=float(lam_arr.min()),
                     Delta=float(lam_arr.max()))


def is_strongly_connected(graph: CostGraph, mask: np.ndarray | None = None) -> bool:
    count, _ = connected_components(graph.adjacency(mask), directed=True, connection="strong")
    return count == 1
