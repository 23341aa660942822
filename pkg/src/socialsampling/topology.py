"""Interaction-graph generation and spectral utilities.

Five topology families: 2-D grid, star, Erdos-Renyi, preferential
attachment, and grid-based Watts-Strogatz. Random families are resampled
until connected (experiments assume information can spread).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import BadParameters, DisconnectedAfterRetries, NotSymmetric

CONNECT_RETRY_CAP = 1000
JACOBI_OFF_TOL = 1e-10


@dataclass(frozen=True)
class Graph:
    """Undirected simple graph on nodes 0..n-1."""

    n: int
    edges: tuple[tuple[int, int], ...]
    adjacency: np.ndarray = field(init=False, repr=False)
    degrees: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        adj = np.zeros((self.n, self.n), dtype=np.int64)
        seen = set()
        for i, j in self.edges:
            if i == j:
                raise BadParameters(f"self-loop at node {i}")
            if not (0 <= i < self.n and 0 <= j < self.n):
                raise BadParameters(f"edge ({i},{j}) outside 0..{self.n - 1}")
            pair = (min(i, j), max(i, j))
            if pair in seen:
                raise BadParameters(f"duplicate edge {pair}")
            seen.add(pair)
            adj[i, j] = adj[j, i] = 1
        canonical = tuple(sorted(seen))
        adj.setflags(write=False)
        deg = adj.sum(axis=1)
        deg.setflags(write=False)
        object.__setattr__(self, "edges", canonical)
        object.__setattr__(self, "adjacency", adj)
        object.__setattr__(self, "degrees", deg)

    @property
    def m(self) -> int:
        return len(self.edges)

    def neighbors(self, i: int) -> np.ndarray:
        return np.nonzero(self.adjacency[i])[0]

    def neighbor_lists(self) -> tuple[np.ndarray, np.ndarray]:
        """Flat CSR-style (neighbors, offsets) arrays for tight loops."""
        offsets = np.zeros(self.n + 1, dtype=np.int64)
        chunks = []
        for i in range(self.n):
            js = self.neighbors(i)
            chunks.append(js)
            offsets[i + 1] = offsets[i] + js.size
        flat = np.concatenate(chunks) if chunks else np.zeros(0, dtype=np.int64)
        return flat.astype(np.int64), offsets


@dataclass(frozen=True)
class TopologySpec:
    """Recipe for one topology; ``seed`` fixes the random families."""

    kind: str  # grid | star | erdos_renyi | preferential_attachment | watts_strogatz
    n: int = 0
    rows: int = 0
    cols: int = 0
    p: float = 0.0
    m_new: int = 3
    rewire_p: float = 0.1
    seed: int = 0
    require_connected: bool = True

    def node_count(self) -> int:
        if self.kind in ("grid", "watts_strogatz"):
            return self.rows * self.cols
        return self.n

    def describe(self) -> str:
        if self.kind == "grid":
            return f"grid:{self.rows}x{self.cols}"
        if self.kind == "watts_strogatz":
            return f"watts_strogatz:{self.rows}x{self.cols}:{self.rewire_p}"
        if self.kind == "star":
            return f"star:{self.n}"
        if self.kind == "erdos_renyi":
            return f"erdos_renyi:{self.n}:{self.p}"
        if self.kind == "preferential_attachment":
            return f"preferential_attachment:{self.n}:{self.m_new}"
        return self.kind


def grid(rows: int, cols: int) -> TopologySpec:
    return TopologySpec(kind="grid", rows=rows, cols=cols)


def star(n: int) -> TopologySpec:
    return TopologySpec(kind="star", n=n)


def erdos_renyi(n: int, p: float, seed: int = 0) -> TopologySpec:
    return TopologySpec(kind="erdos_renyi", n=n, p=p, seed=seed)


def preferential_attachment(n: int, m_new: int = 3, seed: int = 0) -> TopologySpec:
    return TopologySpec(kind="preferential_attachment", n=n, m_new=m_new, seed=seed)


def watts_strogatz(rows: int, cols: int, rewire_p: float = 0.1, seed: int = 0) -> TopologySpec:
    return TopologySpec(kind="watts_strogatz", rows=rows, cols=cols, rewire_p=rewire_p, seed=seed)


def _grid_edges(rows: int, cols: int) -> list[tuple[int, int]]:
    edges = []
    for r in range(rows):
        for c in range(cols):
            u = r * cols + c
            if c + 1 < cols:
                edges.append((u, u + 1))
            if r + 1 < rows:
                edges.append((u, u + cols))
    return edges


def _gen_grid(spec: TopologySpec) -> Graph:
    if spec.rows < 1 or spec.cols < 1:
        raise BadParameters("grid needs rows >= 1 and cols >= 1")
    return Graph(spec.rows * spec.cols, tuple(_grid_edges(spec.rows, spec.cols)))


def _gen_star(spec: TopologySpec) -> Graph:
    if spec.n < 1:
        raise BadParameters("star needs n >= 1")
    return Graph(spec.n, tuple((0, i) for i in range(1, spec.n)))


def _gen_erdos_renyi(spec: TopologySpec, rng: np.random.Generator) -> Graph:
    if spec.n < 1 or not 0.0 <= spec.p <= 1.0:
        raise BadParameters("erdos_renyi needs n >= 1 and p in [0, 1]")
    n = spec.n
    iu, ju = np.triu_indices(n, k=1)
    keep = rng.random(iu.size) < spec.p
    return Graph(n, tuple(zip(iu[keep].tolist(), ju[keep].tolist())))


def _gen_preferential_attachment(spec: TopologySpec, rng: np.random.Generator) -> Graph:
    # Seed with a 3-clique; each newcomer picks m_new distinct targets with
    # probability proportional to current degree, without replacement.
    if spec.n < 3 or spec.m_new < 1:
        raise BadParameters("preferential_attachment needs n >= 3 and m_new >= 1")
    n, m_new = spec.n, spec.m_new
    edges = [(0, 1), (0, 2), (1, 2)]
    deg = np.zeros(n, dtype=np.float64)
    deg[:3] = 2
    for v in range(3, n):
        k = min(m_new, v)
        weights = deg[:v].copy()
        targets = []
        for _ in range(k):
            pvec = weights / weights.sum()
            t = int(rng.choice(v, p=pvec))
            targets.append(t)
            weights[t] = 0.0
        for t in targets:
            edges.append((t, v))
            deg[t] += 1
            deg[v] += 1
    return Graph(n, tuple(edges))


def _gen_watts_strogatz(spec: TopologySpec, rng: np.random.Generator) -> Graph:
    # Bounded (non-torus) grid with each edge independently rewired: keep
    # the first endpoint, move the other to a uniform non-adjacent node.
    if spec.rows < 1 or spec.cols < 1 or not 0.0 <= spec.rewire_p <= 1.0:
        raise BadParameters("watts_strogatz needs a valid grid and rewire_p in [0, 1]")
    n = spec.rows * spec.cols
    base = _grid_edges(spec.rows, spec.cols)
    adj = [set() for _ in range(n)]
    for i, j in base:
        adj[i].add(j)
        adj[j].add(i)
    edges = list(base)
    for idx, (i, j) in enumerate(base):
        if rng.random() >= spec.rewire_p:
            continue
        for _ in range(CONNECT_RETRY_CAP):
            k = int(rng.integers(n))
            if k != i and k not in adj[i]:
                break
        else:  # graph locally complete; keep the original edge
            continue
        adj[i].discard(j)
        adj[j].discard(i)
        adj[i].add(k)
        adj[k].add(i)
        edges[idx] = (i, k)
    return Graph(n, tuple(edges))


def generate(spec: TopologySpec, rng: np.random.Generator | None = None) -> Graph:
    """Build the graph for ``spec``; random families draw from ``rng``
    (default: a fresh stream from ``spec.seed``) and are resampled until
    connected when ``spec.require_connected``."""
    if spec.kind == "grid":
        return _gen_grid(spec)
    if spec.kind == "star":
        return _gen_star(spec)
    if rng is None:
        rng = np.random.default_rng(spec.seed)
    builders = {
        "erdos_renyi": _gen_erdos_renyi,
        "preferential_attachment": _gen_preferential_attachment,
        "watts_strogatz": _gen_watts_strogatz,
    }
    if spec.kind not in builders:
        raise BadParameters(f"unknown topology kind {spec.kind!r}")
    build = builders[spec.kind]
    for _ in range(CONNECT_RETRY_CAP):
        g = build(spec, rng)
        if not spec.require_connected or is_connected(g):
            return g
    raise DisconnectedAfterRetries(
        f"{spec.describe()} produced no connected graph in {CONNECT_RETRY_CAP} tries"
    )


def laplacian(g: Graph) -> np.ndarray:
    """L = D - G, the (combinatorial) graph Laplacian."""
    return np.diag(g.degrees).astype(np.float64) - g.adjacency.astype(np.float64)


def max_degree(g: Graph) -> int:
    return int(g.degrees.max()) if g.n else 0


def is_connected(g: Graph) -> bool:
    """Breadth-first reachability from node 0."""
    if g.n <= 1:
        return True
    seen = np.zeros(g.n, dtype=bool)
    seen[0] = True
    frontier = [0]
    while frontier:
        nxt = []
        for u in frontier:
            for v in g.neighbors(u):
                if not seen[v]:
                    seen[v] = True
                    nxt.append(int(v))
        frontier = nxt
    return bool(seen.all())


def spectrum(m: np.ndarray, off_tol: float = JACOBI_OFF_TOL, max_sweeps: int = 100) -> np.ndarray:
    """Eigenvalues of a symmetric matrix, ascending, by cyclic Jacobi
    rotations; sweeps stop once the off-diagonal Frobenius norm is below
    ``off_tol``."""
    a = np.asarray(m, dtype=np.float64)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise NotSymmetric(f"expected a square matrix, got shape {a.shape}")
    if not np.allclose(a, a.T, atol=1e-12, rtol=0.0):
        raise NotSymmetric("matrix is not symmetric within 1e-12")
    a = (a + a.T) / 2.0
    n = a.shape[0]
    if n == 1:
        return a[0].copy()
    for _ in range(max_sweeps):
        off = np.sqrt(max(0.0, (a * a).sum() - (np.diag(a) ** 2).sum()))
        if off <= off_tol:
            break
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = a[p, q]
                if apq == 0.0:
                    continue
                # overflow-free form of sign(theta)/(|theta| + sqrt(theta^2+1))
                d = (a[q, q] - a[p, p]) / 2.0
                sgn = 1.0 if d >= 0.0 else -1.0
                t = sgn * apq / (abs(d) + np.hypot(d, apq))
                c = 1.0 / np.sqrt(t * t + 1.0)
                s = t * c
                rp, rq = a[p, :].copy(), a[q, :].copy()
                a[p, :] = c * rp - s * rq
                a[q, :] = s * rp + c * rq
                cp, cq = a[:, p].copy(), a[:, q].copy()
                a[:, p] = c * cp - s * cq
                a[:, q] = s * cp + c * cq
                a[p, q] = a[q, p] = 0.0
    return np.sort(np.diag(a))


def write_edgelist(g: Graph, path: str | Path) -> None:
    """Plain text: first line "n m", then one "i j" per edge, 0-indexed."""
    lines = [f"{g.n} {g.m}"]
    lines += [f"{i} {j}" for i, j in g.edges]
    Path(path).write_text("\n".join(lines) + "\n")


def read_edgelist(path: str | Path) -> Graph:
    tokens = Path(path).read_text().split()
    if len(tokens) < 2:
        raise BadParameters(f"{path}: missing 'n m' header")
    n, m = int(tokens[0]), int(tokens[1])
    if len(tokens) != 2 + 2 * m:
        raise BadParameters(f"{path}: expected {m} edges, found {(len(tokens) - 2) // 2}")
    it = iter(tokens[2:])
    edges = tuple((int(i), int(j)) for i, j in zip(it, it))
    return Graph(n, edges)
