"""Areal adjacency graphs and the neighbourhood matrices built from them."""

from collections import deque
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import DisconnectedGraph, IndexOutOfRange, ParseError, SelfLoop, ValidationError

# eigenvalues below this fraction of the largest are treated as zero
PINV_RTOL = 1e-10


@dataclass(frozen=True, eq=False)
class ArealGraph:
    """Undirected adjacency structure over ``n`` small areas.

    Attributes
    ----------
    n : int
        Number of areas.
    edges : tuple of (int, int)
        Sorted, deduplicated unordered pairs ``(i, j)`` with ``i < j``.
    degree : ndarray of int
        Number of neighbours of each area (the diagonal of D).
    connected : bool
        Whether a traversal from area 0 reaches every area.
    """

    n: int
    edges: tuple
    degree: np.ndarray = field(repr=False)
    connected: bool

    @property
    def n_edges(self):
        return len(self.edges)

    def adjacency(self):
        """Dense binary adjacency matrix W."""
        W = np.zeros((self.n, self.n))
        if self.edges:
            i, j = np.asarray(self.edges).T
            W[i, j] = 1.0
            W[j, i] = 1.0
        return W

    def __eq__(self, other):
        if not isinstance(other, ArealGraph):
            return NotImplemented
        return self.n == other.n and self.edges == other.edges

    def __hash__(self):
        return hash((self.n, self.edges))


def _is_connected(n, edges):
    adj = [[] for _ in range(n)]
    for i, j in edges:
        adj[i].append(j)
        adj[j].append(i)
    seen = np.zeros(n, dtype=bool)
    seen[0] = True
    queue = deque([0])
    while queue:
        u = queue.popleft()
        for v in adj[u]:
            if not seen[v]:
                seen[v] = True
                queue.append(v)
    return bool(seen.all())


def from_edge_list(n, pairs):
    """Build a validated graph from index pairs (0-based).

    Duplicate pairs, in either orientation, are collapsed.

    Raises
    ------
    ValidationError
        If ``n < 2``.
    IndexOutOfRange, SelfLoop
        On invalid pairs.
    """
    n = int(n)
    if n < 2:
        raise ValidationError(f"a graph needs at least 2 areas, got n={n}")
    edges = set()
    for pair in pairs:
        i, j = (int(v) for v in pair)
        if not (0 <= i < n and 0 <= j < n):
            raise IndexOutOfRange(f"edge ({i}, {j}) outside [0, {n})")
        if i == j:
            raise SelfLoop(f"self-loop at area {i}")
        edges.add((min(i, j), max(i, j)))
    edges = tuple(sorted(edges))
    degree = np.zeros(n, dtype=int)
    for i, j in edges:
        degree[i] += 1
        degree[j] += 1
    degree.setflags(write=False)
    return ArealGraph(n=n, edges=edges, degree=degree, connected=_is_connected(n, edges))


def grid_graph(rows, cols):
    """Rook-adjacency lattice with ``rows * cols`` areas, row-major numbering."""
    rows, cols = int(rows), int(cols)
    if rows < 1 or cols < 1 or rows * cols < 2:
        raise ValidationError(f"grid {rows}x{cols} has fewer than 2 areas")
    pairs = []
    for r in range(rows):
        for c in range(cols):
            i = r * cols + c
            if c + 1 < cols:
                pairs.append((i, i + 1))
            if r + 1 < rows:
                pairs.append((i, i + cols))
    return from_edge_list(rows * cols, pairs)


def _require_connected(g):
    if not g.connected:
        raise DisconnectedGraph("the ICAR structure requires a connected graph")


def icar_structure(g):
    """Neighbourhood matrix Q = D - W of a connected graph."""
    _require_connected(g)
    W = g.adjacency()
    return np.diag(g.degree.astype(float)) - W


def pseudo_inverse(Q, rtol=PINV_RTOL):
    """Moore-Penrose inverse of a symmetric PSD matrix via ``eigh``."""
    vals, vecs = np.linalg.eigh(Q)
    keep = vals > rtol * vals.max()
    return (vecs[:, keep] / vals[keep]) @ vecs[:, keep].T


@dataclass(frozen=True, eq=False)
class ScaledStructure:
    """ICAR structure plus the BYM2-scaled generalized inverse.

    ``Q_scaled_geninv = pinv(Q) / scale_factor`` where ``scale_factor`` is the
    geometric mean of ``diag(pinv(Q))``, so the scaled intrinsic field has
    geometric-mean marginal variance one. The scaled precision itself is
    ``scale_factor * Q``.
    """

    graph: ArealGraph
    Q: np.ndarray = field(repr=False)
    Q_scaled_geninv: np.ndarray = field(repr=False)
    scale_factor: float

    @property
    def n(self):
        return self.graph.n

    @property
    def Q_scaled(self):
        return self.scale_factor * self.Q


def bym2_scaled_structure(g):
    Q = icar_structure(g)
    Qinv = pseudo_inverse(Q)
    Qinv = 0.5 * (Qinv + Qinv.T)
    scale = float(np.exp(np.mean(np.log(np.diag(Qinv)))))
    return ScaledStructure(graph=g, Q=Q, Q_scaled_geninv=Qinv / scale, scale_factor=scale)


def read_edge_list(path):
    """Parse an edge-list file.

    Format: a header line ``n=<count>``, then one ``<i> <j>`` pair per line.
    Blank lines and ``#`` comments are ignored.
    """
    path = Path(path)
    n = None
    pairs = []
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if n is None:
                key, sep, value = line.partition("=")
                if key.strip() != "n" or not sep:
                    raise ParseError("expected header 'n=<count>'", path, lineno)
                try:
                    n = int(value)
                except ValueError:
                    raise ParseError(f"bad area count {value!r}", path, lineno) from None
                continue
            parts = line.split()
            if len(parts) != 2:
                raise ParseError(f"expected two indices, got {line!r}", path, lineno)
            try:
                pairs.append((int(parts[0]), int(parts[1])))
            except ValueError:
                raise ParseError(f"non-integer index in {line!r}", path, lineno) from None
    if n is None:
        raise ParseError("missing 'n=<count>' header", path)
    return from_edge_list(n, pairs)


def write_edge_list(g, path, comment=None):
    path = Path(path)
    lines = []
    if comment:
        lines.extend(f"# {c}" for c in comment.splitlines())
    lines.append(f"n={g.n}")
    lines.extend(f"{i} {j}" for i, j in g.edges)
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
