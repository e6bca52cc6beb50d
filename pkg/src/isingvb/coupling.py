"""Coupling-matrix construction and diagnostics.

A coupling matrix is a known, sparse, symmetric, nonnegative n x n
matrix with zero diagonal that encodes which spins interact and how
strongly.  The two constructions used throughout are the scaled
adjacency matrix of a random d-regular graph and of a 4-nearest-
neighbour lattice: every edge carries the weight n / (2 * edge_count),
so a d-regular graph has all row sums exactly 1.

The assumption report collects the raw quantities that control how well
the model parameters can be recovered from a single configuration: the
maximum row sum (gamma), the total mass, the total squared mass, and
the variance of the row sums.
"""

from collections import defaultdict
from dataclasses import dataclass, field

import numpy as np

from .errors import GenerationError, ParameterError
from .rng import TAG_GRAPH, make_rng

_MAX_PAIRING_ATTEMPTS = 200


@dataclass(frozen=True)
class EdgeSet:
    """Undirected simple graph on vertices 0..n-1.

    Edges are stored canonically as (i, j) with i < j, sorted, with no
    duplicates and no self-loops.
    """

    n: int
    edges: tuple

    def __post_init__(self):
        if self.n < 1:
            raise ParameterError(f"vertex count must be >= 1, got {self.n}")
        canon = []
        for i, j in self.edges:
            if i == j:
                raise ParameterError(f"self-loop at vertex {i}")
            if not (0 <= i < self.n and 0 <= j < self.n):
                raise ParameterError(f"edge ({i},{j}) out of range for n={self.n}")
            canon.append((i, j) if i < j else (j, i))
        if len(set(canon)) != len(canon):
            raise ParameterError("duplicate edges")
        object.__setattr__(self, "edges", tuple(sorted(canon)))

    def __len__(self):
        return len(self.edges)


@dataclass(frozen=True)
class CouplingMatrix:
    """Sparse symmetric nonnegative matrix with zero diagonal.

    Stored as one row per undirected edge (edge_i[k], edge_j[k]) with
    weight edge_weights[k]; the symmetric counterpart is implied.  A
    compressed row form (indptr, indices, data) over both directions is
    derived at construction for fast row operations.
    """

    n: int
    edge_i: np.ndarray
    edge_j: np.ndarray
    edge_weights: np.ndarray
    indptr: np.ndarray = field(init=False, repr=False, compare=False)
    indices: np.ndarray = field(init=False, repr=False, compare=False)
    data: np.ndarray = field(init=False, repr=False, compare=False)
    row_ids: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        n = int(self.n)
        if n < 1:
            raise ParameterError(f"dimension must be >= 1, got {n}")
        ei = np.asarray(self.edge_i, dtype=np.int64)
        ej = np.asarray(self.edge_j, dtype=np.int64)
        w = np.asarray(self.edge_weights, dtype=np.float64)
        if not (ei.shape == ej.shape == w.shape and ei.ndim == 1):
            raise ParameterError("edge arrays must be 1-D and of equal length")
        if ei.size and (np.any(ei == ej)):
            raise ParameterError("diagonal entries must be zero (self-edge found)")
        if ei.size and (ei.min() < 0 or ej.min() < 0 or max(ei.max(), ej.max()) >= n):
            raise ParameterError("edge index out of range")
        if np.any(~np.isfinite(w)) or np.any(w < 0):
            raise ParameterError("edge weights must be finite and nonnegative")
        lo, hi = np.minimum(ei, ej), np.maximum(ei, ej)
        order = np.lexsort((hi, lo))
        lo, hi, w = lo[order], hi[order], w[order]
        if lo.size > 1 and np.any((lo[1:] == lo[:-1]) & (hi[1:] == hi[:-1])):
            raise ParameterError("duplicate edges")

        # symmetric CSR over both directions
        rows = np.concatenate([lo, hi])
        cols = np.concatenate([hi, lo])
        vals = np.concatenate([w, w])
        csr_order = np.lexsort((cols, rows))
        counts = np.bincount(rows, minlength=n)
        indptr = np.zeros(n + 1, dtype=np.int64)
        np.cumsum(counts, out=indptr[1:])

        for name, arr in (
            ("edge_i", lo), ("edge_j", hi), ("edge_weights", w),
            ("indptr", indptr), ("indices", cols[csr_order]),
            ("data", vals[csr_order]),
            ("row_ids", np.repeat(np.arange(n, dtype=np.int64), counts)),
        ):
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    @property
    def edge_count(self):
        return int(self.edge_i.size)

    def row_sums(self):
        """Vector of row sums, one per vertex (zero for isolated ones)."""
        out = np.zeros(self.n)
        np.add.at(out, self.edge_i, self.edge_weights)
        np.add.at(out, self.edge_j, self.edge_weights)
        return out

    def to_dense(self):
        """Dense n x n array; intended for small-n checks only."""
        a = np.zeros((self.n, self.n))
        a[self.edge_i, self.edge_j] = self.edge_weights
        a[self.edge_j, self.edge_i] = self.edge_weights
        return a


@dataclass(frozen=True)
class AssumptionReport:
    """Raw diagnostics of a coupling matrix; no thresholding applied.

    gamma is the maximum row sum, sum_a the full double sum of entries,
    sum_a_sq the double sum of squared entries, and rowsum_variance the
    population variance of the row sums.
    """

    gamma: float
    sum_a: float
    sum_a_sq: float
    rowsum_variance: float


def random_regular_edges(n, d, seed):
    """Uniform-ish random d-regular simple graph via the pairing model.

    Repeatedly matches up vertex stubs, re-queueing stubs whose pair
    would form a loop or duplicate; restarts when no legal pair remains
    (adapted from the standard NetworkX routine).  Deterministic for a
    fixed seed.
    """
    n, d = int(n), int(d)
    if d >= n or d < 0:
        raise ParameterError(f"need 0 <= d < n, got d={d}, n={n}")
    if (n * d) % 2 != 0:
        raise ParameterError(f"n*d must be even, got n={n}, d={d}")
    rng = make_rng(seed, TAG_GRAPH)

    def _suitable(edges, potential_edges):
        # Can any legal pair still be formed from the leftover stubs?
        if not potential_edges:
            return True
        for s1 in potential_edges:
            for s2 in potential_edges:
                if s1 == s2:
                    break
                if s1 > s2:
                    s1, s2 = s2, s1
                if (s1, s2) not in edges:
                    return True
        return False

    def _try_creation():
        edges = set()
        stubs = list(range(n)) * d
        while stubs:
            potential_edges = defaultdict(int)
            rng.shuffle(stubs)
            stubiter = iter(stubs)
            for s1, s2 in zip(stubiter, stubiter):
                if s1 > s2:
                    s1, s2 = s2, s1
                if s1 != s2 and (s1, s2) not in edges:
                    edges.add((s1, s2))
                else:
                    potential_edges[s1] += 1
                    potential_edges[s2] += 1
            if not _suitable(edges, potential_edges):
                return None
            stubs = [v for v, k in potential_edges.items() for _ in range(k)]
        return edges

    for _ in range(_MAX_PAIRING_ATTEMPTS):
        edges = _try_creation()
        if edges is not None:
            return EdgeSet(n=n, edges=tuple(edges))
    raise GenerationError(
        f"no simple {d}-regular graph found on {n} vertices "
        f"in {_MAX_PAIRING_ATTEMPTS} pairing attempts"
    )


def scaled_adjacency(edges):
    """Coupling matrix with every edge weighted n / (2 * edge_count)."""
    m = len(edges)
    if m < 1:
        raise ParameterError("edge set is empty; scaled weight undefined")
    w = edges.n / (2.0 * m)
    ei = np.array([e[0] for e in edges.edges], dtype=np.int64)
    ej = np.array([e[1] for e in edges.edges], dtype=np.int64)
    return CouplingMatrix(n=edges.n, edge_i=ei, edge_j=ej,
                          edge_weights=np.full(m, w))


def lattice4_adjacency(rows, cols):
    """Scaled adjacency of the rows x cols grid with 4-nearest-neighbour
    links and free (non-periodic) boundary."""
    rows, cols = int(rows), int(cols)
    if rows < 2 or cols < 2:
        raise ParameterError(f"need rows, cols >= 2, got {rows}x{cols}")
    pairs = []
    for r in range(rows):
        for c in range(cols):
            v = r * cols + c
            if c + 1 < cols:
                pairs.append((v, v + 1))
            if r + 1 < rows:
                pairs.append((v, v + cols))
    return scaled_adjacency(EdgeSet(n=rows * cols, edges=tuple(pairs)))


def assumption_report(a):
    """Exact row-sum and mass diagnostics of a coupling matrix."""
    rs = a.row_sums()
    w = a.edge_weights
    return AssumptionReport(
        gamma=float(rs.max()) if a.n else 0.0,
        sum_a=float(2.0 * w.sum()),
        sum_a_sq=float(2.0 * np.square(w).sum()),
        rowsum_variance=float(np.mean(np.square(rs - rs.mean()))),
    )


def save_coupling(a, path):
    """Write the text form: one header line "n m", then m lines
    "i j value" with i < j, sorted."""
    lines = [f"{a.n} {a.edge_count}\n"]
    for i, j, w in zip(a.edge_i, a.edge_j, a.edge_weights):
        lines.append(f"{i} {j} {float(w)!r}\n")
    with open(path, "w") as fh:
        fh.writelines(lines)


def load_coupling(path):
    """Read the text form written by save_coupling."""
    with open(path) as fh:
        header = fh.readline().split()
        if len(header) != 2:
            raise ParameterError(f"{path}: malformed header, want 'n m'")
        n, m = int(header[0]), int(header[1])
        ei = np.empty(m, dtype=np.int64)
        ej = np.empty(m, dtype=np.int64)
        w = np.empty(m, dtype=np.float64)
        for k in range(m):
            parts = fh.readline().split()
            if len(parts) != 3:
                raise ParameterError(f"{path}: malformed edge line {k + 2}")
            ei[k], ej[k], w[k] = int(parts[0]), int(parts[1]), float(parts[2])
    return CouplingMatrix(n=n, edge_i=ei, edge_j=ej, edge_weights=w)
