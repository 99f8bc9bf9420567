"""Communication graphs, doubly stochastic weight matrices and their spectral data."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

STOCHASTIC_TOL = 1e-12


class TopologyError(ValueError):
    """Raised for invalid graphs, weights or spectral preconditions."""


@dataclass(frozen=True)
class Graph:
    """Directed communication graph on agents 0..n-1.

    An edge (i, j) means agent i can send to agent j.  Self-loops are not
    stored; the self-weight lives on the diagonal of the weight matrix.
    The graph must be strongly connected.
    """

    n: int
    edges: frozenset[tuple[int, int]] = field(default_factory=frozenset)
    directed: bool = True

    def __post_init__(self) -> None:
        if self.n < 1:
            raise TopologyError(f"need at least one agent, got n={self.n}")
        for i, j in self.edges:
            if not (0 <= i < self.n and 0 <= j < self.n):
                raise TopologyError(f"edge ({i}, {j}) out of range for n={self.n}")
            if i == j:
                raise TopologyError(f"self-loop ({i}, {i}) not allowed")
        if not self.directed:
            for i, j in self.edges:
                if (j, i) not in self.edges:
                    raise TopologyError(f"undirected graph missing reverse edge ({j}, {i})")
        if not self._strongly_connected():
            raise TopologyError("graph is not strongly connected")

    def _strongly_connected(self) -> bool:
        if self.n == 1:
            return True
        fwd: list[list[int]] = [[] for _ in range(self.n)]
        bwd: list[list[int]] = [[] for _ in range(self.n)]
        for i, j in self.edges:
            fwd[i].append(j)
            bwd[j].append(i)
        return _reaches_all(fwd, self.n) and _reaches_all(bwd, self.n)

    def out_neighbors(self, i: int) -> list[int]:
        return sorted(j for (a, j) in self.edges if a == i)

    def in_neighbors(self, i: int) -> list[int]:
        return sorted(a for (a, j) in self.edges if j == i)

    def out_degree(self, i: int) -> int:
        return sum(1 for (a, _) in self.edges if a == i)

    def in_degree(self, i: int) -> int:
        return sum(1 for (_, j) in self.edges if j == i)


def _reaches_all(adj: list[list[int]], n: int) -> bool:
    seen = {0}
    stack = [0]
    while stack:
        u = stack.pop()
        for v in adj[u]:
            if v not in seen:
                seen.add(v)
                stack.append(v)
    return len(seen) == n


def build_ring(n: int, directed: bool = True) -> Graph:
    """Ring on n agents: i -> (i+1) mod n, plus reverse edges if undirected."""
    if n < 2:
        raise TopologyError(f"ring needs n >= 2, got n={n}")
    edges = {(i, (i + 1) % n) for i in range(n)}
    if not directed:
        edges |= {(j, i) for (i, j) in edges}
    return Graph(n=n, edges=frozenset(edges), directed=directed)


@dataclass(frozen=True)
class WeightMatrix:
    """Nonnegative doubly stochastic mixing matrix supported on a graph."""

    graph: Graph
    matrix: np.ndarray

    def __post_init__(self) -> None:
        m = np.asarray(self.matrix, dtype=float)
        m.setflags(write=False)
        object.__setattr__(self, "matrix", m)
        validate_doubly_stochastic(m)

    @property
    def n(self) -> int:
        return self.graph.n


def check_doubly_stochastic(m: np.ndarray, tol: float = STOCHASTIC_TOL) -> tuple[bool, str]:
    """Return (ok, detail); detail names the first offending row/column/entry."""
    m = np.asarray(m, dtype=float)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        return False, f"matrix must be square, got shape {m.shape}"
    if not np.all(np.isfinite(m)):
        return False, "matrix has non-finite entries"
    neg = np.argwhere(m < 0)
    if neg.size:
        i, j = neg[0]
        return False, f"negative entry at ({i}, {j}): {m[i, j]!r}"
    rows = np.abs(m.sum(axis=1) - 1.0)
    if rows.max() > tol:
        i = int(rows.argmax())
        return False, f"row {i} sums to {m[i].sum()!r} (error {rows[i]:.3e} > {tol:g})"
    cols = np.abs(m.sum(axis=0) - 1.0)
    if cols.max() > tol:
        j = int(cols.argmax())
        return False, f"column {j} sums to {m[:, j].sum()!r} (error {cols[j]:.3e} > {tol:g})"
    return True, "ok"


def validate_doubly_stochastic(m: np.ndarray, tol: float = STOCHASTIC_TOL) -> None:
    ok, detail = check_doubly_stochastic(m, tol)
    if not ok:
        raise TopologyError(f"not doubly stochastic: {detail}")


def build_weights_outdegree(g: Graph, p: float | np.ndarray) -> WeightMatrix:
    """Weights w_ij = p_i for j in i's out-neighborhood, remainder on the diagonal.

    ``p`` is a shared scalar or a per-agent vector.  The construction is only
    doubly stochastic on balanced graphs; the result is validated rather than
    assumed, and a failed validation names the offending row or column.
    """
    p_vec = np.broadcast_to(np.asarray(p, dtype=float), (g.n,)).copy()
    if np.any(p_vec <= 0):
        raise TopologyError("per-agent weights p_i must be positive")
    w = np.zeros((g.n, g.n))
    for i in range(g.n):
        deg = g.out_degree(i)
        diag = 1.0 - deg * p_vec[i]
        if diag <= 0:
            raise TopologyError(
                f"agent {i}: 1 - Deg_out*p = {diag!r} <= 0 (Deg_out={deg}, p={p_vec[i]!r})"
            )
        for j in g.out_neighbors(i):
            w[i, j] = p_vec[i]
        w[i, i] = diag
    return WeightMatrix(graph=g, matrix=w)


def build_weights_laplacian(g: Graph, a: float) -> WeightMatrix:
    """W = I - a*L for balanced graphs; rejects ``a`` that yields negative entries."""
    if a <= 0:
        raise TopologyError(f"tuning parameter a must be positive, got {a!r}")
    degs = np.array([g.out_degree(i) for i in range(g.n)], dtype=float)
    in_degs = np.array([g.in_degree(i) for i in range(g.n)], dtype=float)
    if not np.array_equal(degs, in_degs):
        raise TopologyError("Laplacian construction needs in-degree == out-degree per agent")
    adj = np.zeros((g.n, g.n))
    for i, j in g.edges:
        adj[i, j] = 1.0
    lap = np.diag(degs) - adj
    w = np.eye(g.n) - a * lap
    if np.any(np.diag(w) < 0):
        a_max = 1.0 / degs.max()
        raise TopologyError(f"a={a!r} makes a diagonal entry negative; need a <= {a_max!r}")
    return WeightMatrix(graph=g, matrix=w)


@dataclass(frozen=True)
class SpectralInfo:
    """Spectral quantities of a doubly stochastic W used by the convergence analysis.

    rho_w is the spectral norm of W - (1/n) 1 1^T, s = 1 - rho_w is the gap,
    and norm_IminusW is the spectral norm of I - W.
    """

    rho_w: float
    s: float
    norm_IminusW: float

    def rho_tilde(self, gamma: float) -> float:
        """Contraction factor of (1-gamma) I + gamma W on mean-zero matrices."""
        if not 0 < gamma <= 1:
            raise TopologyError(f"gamma must be in (0, 1], got {gamma!r}")
        return 1.0 - gamma * self.s


def spectral_norm(m: np.ndarray, tol: float = 1e-12, max_iter: int = 100_000) -> float:
    """Largest singular value by power iteration on M^T M.

    Deterministic: the start vector comes from a fixed-seed generator, so
    repeated calls are bit-identical.
    """
    m = np.asarray(m, dtype=float)
    b = m.T @ m
    n = b.shape[0]
    rng = np.random.default_rng(0x5EED)
    v = rng.standard_normal(n)
    v /= np.linalg.norm(v)
    lam = 0.0
    for _ in range(max_iter):
        w = b @ v
        nw = np.linalg.norm(w)
        if nw == 0.0:
            return 0.0
        v = w / nw
        lam_new = float(v @ (b @ v))
        if abs(lam_new - lam) <= tol * max(1.0, abs(lam_new)):
            lam = lam_new
            break
        lam = lam_new
    return float(np.sqrt(max(lam, 0.0)))


def spectral_info(w: WeightMatrix | np.ndarray) -> SpectralInfo:
    """Compute (rho_w, s, ||I-W||) for a doubly stochastic matrix."""
    m = w.matrix if isinstance(w, WeightMatrix) else np.asarray(w, dtype=float)
    validate_doubly_stochastic(m)
    n = m.shape[0]
    dev = m - np.full((n, n), 1.0 / n)
    rho_w = spectral_norm(dev)
    norm_iw = spectral_norm(np.eye(n) - m)
    return SpectralInfo(rho_w=rho_w, s=1.0 - rho_w, norm_IminusW=norm_iw)
