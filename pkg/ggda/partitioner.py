"""Multilevel graph partitioner minimizing edge cut under a part size balance constraint."""

import dataclasses
import logging
import math

import numpy as np
import scipy.sparse

from ggda.errors import DataError
from ggda.graph_model import AttributedGraph

BALANCE_TOLERANCE = 0.25
MIN_COARSE_VERTICES = 64
COARSENING_STALL_RATIO = 0.95
MAX_COARSE_VERTEX_WEIGHT_FACTOR = 1.5
SWAP_CANDIDATES = 32
MIN_DEFAULT_PARTS = 2
MAX_DEFAULT_PARTS = 64
VERTICES_PER_DEFAULT_PART = 500


@dataclasses.dataclass(frozen=True, eq=False)
class Partition:
    """Assignment of every vertex to one of n_parts non empty parts."""

    assignment: np.ndarray
    n_parts: int

    def __post_init__(self):
        assignment = np.array(self.assignment, dtype=np.int64)
        if self.n_parts < 1:
            raise DataError(f"Invalid part count {self.n_parts}")
        if assignment.ndim != 1 or (assignment.size and (assignment.min() < 0 or assignment.max() >= self.n_parts)):
            raise DataError(f"Part ids must be in [0, {self.n_parts})")
        empty = np.count_nonzero(np.bincount(assignment, minlength=self.n_parts) == 0)
        if empty:
            raise DataError(f"Partition has {empty} empty part(s)")
        assignment.setflags(write=False)
        object.__setattr__(self, "assignment", assignment)

    @property
    def part_sizes(self) -> np.ndarray:
        """Vertex count of every part."""
        return np.bincount(self.assignment, minlength=self.n_parts)

    def members(self, part: int) -> np.ndarray:
        """Vertices of a part, in increasing order."""
        return np.flatnonzero(self.assignment == part)


def default_part_count(n: int) -> int:
    """Part count used when none is given: one part per 500 vertices, clamped to [2, 64] and to n."""
    return max(1, min(n, max(MIN_DEFAULT_PARTS, min(MAX_DEFAULT_PARTS, math.ceil(n / VERTICES_PER_DEFAULT_PART)))))


def edge_cut(graph: AttributedGraph, partition: Partition) -> int:
    """Count edges whose endpoints lie in different parts."""
    if partition.assignment.size != graph.n:
        raise DataError(f"Partition covers {partition.assignment.size} vertices, graph has {graph.n}")
    if len(graph.edges) == 0:
        return 0
    return int(np.count_nonzero(partition.assignment[graph.edges[:, 0]] != partition.assignment[graph.edges[:, 1]]))


def balance_bounds(total: float, n_parts: int):
    """Return (lo, hi) part size bounds, ±25% around total / n_parts, always admitting a floor/ceil split."""
    mean = total / n_parts
    hi = max(math.floor((1 + BALANCE_TOLERANCE) * mean), math.ceil(mean))
    lo = min(math.ceil((1 - BALANCE_TOLERANCE) * mean), math.floor(mean))
    return lo, hi


class _PartState:
    """Part assignment of a (possibly coarse) weighted graph, with incrementally maintained vertex to part weights."""

    def __init__(self, adjacency, weights, assignment, n_parts, lo, hi):
        self.adjacency = adjacency
        self.weights = weights
        self.assignment = np.array(assignment, dtype=np.int64)
        self.n_parts = n_parts
        self.lo = lo
        self.hi = hi
        self.sizes = np.bincount(self.assignment, weights=weights, minlength=n_parts)
        self.conn = np.asarray(adjacency @ np.eye(n_parts)[self.assignment])
        self.rows = np.arange(adjacency.shape[0])

    def cut(self) -> float:
        """Weighted edge cut."""
        return (self.conn.sum() - self.conn[self.rows, self.assignment].sum()) / 2

    def gains(self) -> np.ndarray:
        """Cut decrease of moving every vertex to every part."""
        return self.conn - self.conn[self.rows, self.assignment][:, None]

    def move(self, u: int, q: int) -> None:
        """Move vertex u to part q."""
        p = self.assignment[u]
        a, b = self.adjacency.indptr[u], self.adjacency.indptr[u + 1]
        nbrs, w = self.adjacency.indices[a:b], self.adjacency.data[a:b]
        self.conn[nbrs, p] -= w
        self.conn[nbrs, q] += w
        self.sizes[p] -= self.weights[u]
        self.sizes[q] += self.weights[u]
        self.assignment[u] = q

    def rebalance(self) -> None:
        """Move best gain vertices from the heaviest to the lightest part until sizes fit the bounds."""
        while True:
            p = int(np.argmax(self.sizes))
            q = int(np.argmin(self.sizes))
            if self.sizes[p] <= self.hi and self.sizes[q] >= self.lo:
                return
            members = np.flatnonzero((self.assignment == p) & (self.weights < self.sizes[p] - self.sizes[q]))
            if members.size == 0:
                return
            gain = self.conn[members, q] - self.conn[members, p]
            self.move(members[np.lexsort((members, -gain))[0]], q)

    def _apply_best_move(self) -> bool:
        w = self.weights[:, None]
        remaining = self.sizes[self.assignment] - self.weights
        feasible = (self.sizes[None, :] + w <= self.hi) & (remaining[:, None] >= self.lo)
        feasible[self.rows, self.assignment] = False
        gains = np.where(feasible, self.gains(), -np.inf)
        u, q = divmod(int(np.argmax(gains)), self.n_parts)
        if not gains[u, q] > 0:
            return False
        self.move(u, q)
        return True

    def _apply_best_swap(self) -> bool:
        gains = self.gains()
        gains[self.rows, self.assignment] = -np.inf
        best_part = np.argmax(gains, axis=1)
        best_gain = gains[self.rows, best_part]
        candidates = np.flatnonzero(best_gain > 0)
        candidates = candidates[np.lexsort((candidates, -best_gain[candidates]))][:SWAP_CANDIDATES]
        best = (0.0, -1, -1)
        for u in candidates:
            p, q = self.assignment[u], best_part[u]
            partners = np.flatnonzero(self.assignment == q)
            new_p = self.sizes[p] - self.weights[u] + self.weights[partners]
            new_q = self.sizes[q] + self.weights[u] - self.weights[partners]
            feasible = (new_p >= self.lo) & (new_p <= self.hi) & (new_q >= self.lo) & (new_q <= self.hi)
            shared = self.adjacency[u].toarray().ravel()[partners]
            swap_gain = best_gain[u] + self.conn[partners, p] - self.conn[partners, q] - 2 * shared
            swap_gain = np.where(feasible, swap_gain, -np.inf)
            i = int(np.argmax(swap_gain))
            if swap_gain[i] > best[0]:
                best = (swap_gain[i], u, partners[i])
        _, u, v = best
        if u < 0:
            return False
        p, q = self.assignment[u], self.assignment[v]
        self.move(u, q)
        self.move(v, p)
        return True

    def refine(self) -> None:
        """Boundary refinement: positive gain single moves, then positive gain pair swaps, under the balance bounds."""
        cut_before = self.cut()
        for _ in range(2 * self.adjacency.shape[0]):
            if not (self._apply_best_move() or self._apply_best_swap()):
                break
        assert self.cut() <= cut_before + 1e-9


def _heavy_edge_matching(adjacency, weights, max_weight, rng):
    """Match every vertex with its heaviest unmatched neighbor, visiting vertices in random order."""
    n = adjacency.shape[0]
    match = np.full(n, -1, dtype=np.int64)
    for u in rng.permutation(n):
        if match[u] >= 0:
            continue
        a, b = adjacency.indptr[u], adjacency.indptr[u + 1]
        nbrs, w = adjacency.indices[a:b], adjacency.data[a:b]
        ok = (match[nbrs] < 0) & (nbrs != u) & (weights[nbrs] + weights[u] <= max_weight)
        if ok.any():
            nbrs, w = nbrs[ok], w[ok]
            v = nbrs[np.lexsort((nbrs, -w))[0]]
            match[u] = v
            match[v] = u
        else:
            match[u] = u
    coarse_map = np.full(n, -1, dtype=np.int64)
    n_coarse = 0
    for u in range(n):
        if coarse_map[u] < 0:
            coarse_map[u] = coarse_map[match[u]] = n_coarse
            n_coarse += 1
    return coarse_map, n_coarse


def _contract(adjacency, weights, coarse_map, n_coarse):
    n = adjacency.shape[0]
    projection = scipy.sparse.csr_matrix((np.ones(n), (np.arange(n), coarse_map)), shape=(n, n_coarse))
    coarse = (projection.T @ adjacency @ projection).tocsr()
    coarse = (coarse - scipy.sparse.diags(coarse.diagonal())).tocsr()
    coarse.eliminate_zeros()
    coarse.sort_indices()
    return coarse, np.bincount(coarse_map, weights=weights, minlength=n_coarse)


def _grow(adjacency, weights, n_parts, rng) -> np.ndarray:
    """Initial split: grow the currently lightest part by its most connected frontier vertex."""
    n = adjacency.shape[0]
    assignment = np.full(n, -1, dtype=np.int64)
    sizes = np.zeros(n_parts)
    conn = np.zeros((n, n_parts))

    def assign(u, p):
        assignment[u] = p
        sizes[p] += weights[u]
        a, b = adjacency.indptr[u], adjacency.indptr[u + 1]
        conn[adjacency.indices[a:b], p] += adjacency.data[a:b]

    for p, u in enumerate(rng.choice(n, size=n_parts, replace=False)):
        assign(u, p)
    while True:
        unassigned = assignment < 0
        if not unassigned.any():
            break
        p = int(np.argmin(sizes))
        frontier = np.flatnonzero(unassigned & (conn[:, p] > 0))
        if frontier.size:
            u = frontier[np.lexsort((frontier, -conn[frontier, p]))[0]]
        else:
            # part is enclosed, reseed it elsewhere
            u = rng.choice(np.flatnonzero(unassigned))
        assign(u, p)
    return assignment


def _multilevel(adjacency, n_parts, rng) -> np.ndarray:
    n = adjacency.shape[0]
    weights = np.ones(n)
    limit = max(2 * n_parts, MIN_COARSE_VERTICES)
    max_weight = max(1.0, math.ceil(MAX_COARSE_VERTEX_WEIGHT_FACTOR * n / limit))
    levels = []
    while adjacency.shape[0] > limit:
        coarse_map, n_coarse = _heavy_edge_matching(adjacency, weights, max_weight, rng)
        if n_coarse > COARSENING_STALL_RATIO * adjacency.shape[0]:
            break
        levels.append((adjacency, weights, coarse_map))
        adjacency, weights = _contract(adjacency, weights, coarse_map, n_coarse)
    logging.getLogger().debug(f"Coarsened {n} vertices to {adjacency.shape[0]} in {len(levels)} level(s)")

    lo, hi = balance_bounds(n, n_parts)
    state = _PartState(adjacency, weights, _grow(adjacency, weights, n_parts, rng), n_parts, lo, hi)
    state.rebalance()
    state.refine()
    while levels:
        adjacency, weights, coarse_map = levels.pop()
        state = _PartState(adjacency, weights, state.assignment[coarse_map], n_parts, lo, hi)
        state.rebalance()
        state.refine()
    return state.assignment


def partition(graph: AttributedGraph, n_parts: int, seed: int) -> Partition:
    """
    Split graph into n_parts parts with small edge cut.

    Vertices with at least one edge are partitioned by a multilevel scheme: heavy edge matching coarsening, greedy
    growth on the coarsest graph, then rebalancing and boundary refinement at every level while uncoarsening.
    Isolated vertices are then given to the currently smallest part. Deterministic for a given seed.
    """
    n = graph.n
    if not 1 <= n_parts <= n:
        raise DataError(f"Part count must be in [1, {n}], got {n_parts}")
    if n_parts == 1:
        return Partition(np.zeros(n, dtype=np.int64), 1)

    rng = np.random.default_rng(seed)
    adjacency = graph.adjacency.tocsr(copy=True)
    adjacency.sum_duplicates()
    adjacency.sort_indices()
    isolated = graph.degrees == 0
    core = np.flatnonzero(~isolated)
    assignment = np.full(n, -1, dtype=np.int64)
    n_core_parts = min(n_parts, core.size)
    if n_core_parts > 1:
        core_adjacency = adjacency[core][:, core].tocsr()
        assignment[core] = _multilevel(core_adjacency, n_core_parts, rng)
    elif n_core_parts == 1:
        assignment[core] = 0
    sizes = np.bincount(assignment[core], minlength=n_parts)
    for v in np.flatnonzero(isolated):
        p = int(np.argmin(sizes))
        assignment[v] = p
        sizes[p] += 1

    result = Partition(assignment, n_parts)
    logging.getLogger().debug(
        f"Partitioned {n} vertices into {n_parts} parts (sizes {result.part_sizes.min()}-{result.part_sizes.max()}), "
        f"cut {edge_cut(graph, result)}"
    )
    return result


def save_assignment(partition_: Partition, filepath: str) -> None:
    """Write one part id per line."""
    with open(filepath, "wt") as f:
        f.writelines(f"{p}\n" for p in partition_.assignment)
