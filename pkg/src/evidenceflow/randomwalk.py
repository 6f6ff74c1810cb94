"""Random walks on the aggregate network.

The walk hops ``c -> d`` with probability proportional to the edge weight.
Absorbing it at ``b`` and starting at ``a``, the expected net number of
crossings of each edge equals the corresponding entry of hat-matrix row
``ab``. Two routes to those numbers live here: the Dirichlet (potential)
solve and a Monte Carlo simulator that serves as an independent check.
"""

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import Disconnected, SingularMatrix, UnknownNode, WalkLengthExceeded
from .hat import laplacian
from .numerics import solve_linear

MAX_WALK_STEPS = 10**8
BLOCK_SIZE = 8192


@dataclass(frozen=True, eq=False)
class TransitionMatrix:
    nodes: tuple
    entries: np.ndarray
    absorbing: Optional[str] = None

    def __post_init__(self):
        T = np.array(self.entries, dtype=float)
        if np.any(T < 0) or np.max(np.abs(T.sum(axis=1) - 1.0)) > 1e-12:
            raise ValueError("transition matrix must be non-negative with unit row sums")
        T.flags.writeable = False
        object.__setattr__(self, "entries", T)

    def index(self, node):
        try:
            return self.nodes.index(node)
        except ValueError:
            raise UnknownNode(f"unknown node {node!r}") from None


@dataclass(frozen=True, eq=False)
class CrossingEstimate:
    """Monte Carlo net crossings along each oriented edge ``(c, d)``."""

    edges: tuple
    mean: np.ndarray
    stderr: np.ndarray
    walkers: int
    seed: int
    max_steps: int = 0


def transition_matrix(net):
    """Hop probabilities ``T_cd = w_cd / sum_x w_cx``."""
    L = laplacian(net)
    degree = np.diag(L)
    if np.any(degree <= 0):
        raise Disconnected("a treatment has no incident edge")
    A = 0.0 - L  # avoids negative zeros
    np.fill_diagonal(A, 0.0)
    return TransitionMatrix(tuple(net.treatments), A / degree[:, None])


def make_absorbing(T, b):
    """Copy of ``T`` whose row ``b`` is the unit row at ``b``."""
    i = T.index(b)
    M = np.array(T.entries)
    M[i] = 0.0
    M[i, i] = 1.0
    return TransitionMatrix(T.nodes, M, b)


def dirichlet_potentials(net, a, b):
    """Node potentials with ``v_a = 1``, ``v_b = 0``, harmonic elsewhere.

    Solves ``(I - T_red) v_red = T_{., a}`` over the interior nodes.
    """
    ia, ib = net.index(a), net.index(b)
    if ia == ib:
        raise ValueError("a and b must differ")
    T = transition_matrix(net).entries
    inner = [i for i in range(net.n_treatments) if i not in (ia, ib)]
    v = np.zeros(net.n_treatments)
    v[ia] = 1.0
    if inner:
        M = np.eye(len(inner)) - T[np.ix_(inner, inner)]
        try:
            v[inner] = solve_linear(M, T[inner, ia])
        except SingularMatrix as exc:  # impossible on a connected network
            raise RuntimeError(f"Dirichlet system singular: {exc}") from exc
    return v


def analytic_currents(net, a, b):
    """Unit-current edge flows for the comparison ``(a, b)``, one per oriented edge.

    Ohm's law on the Dirichlet potentials gives currents ``w_cd (v_c - v_d)``,
    which are then scaled so that one unit leaves ``a``.
    """
    v = dirichlet_potentials(net, a, b)
    B = net.incidence
    raw = net.edge_weights * (B @ v)
    leaving_a = raw @ B[:, net.index(a)]
    return raw / leaving_a


def _edge_lookup(T):
    """Map node pairs to oriented edges ``(i, j)``, ``i < j``, sharing the network's order."""
    adj = (T.entries > 0) | (T.entries.T > 0)
    np.fill_diagonal(adj, False)
    pairs = [(i, j) for i in range(len(T.nodes)) for j in range(i + 1, len(T.nodes)) if adj[i, j]]
    idx = np.full(adj.shape, -1, dtype=np.int64)
    sign = np.zeros(adj.shape, dtype=np.int64)
    for k, (i, j) in enumerate(pairs):
        idx[i, j] = idx[j, i] = k
        sign[i, j], sign[j, i] = 1, -1
    return pairs, idx, sign


def _cumulative(T):
    cum = np.cumsum(T, axis=1)
    for r in range(T.shape[0]):
        last = np.flatnonzero(T[r] > 0)[-1]
        cum[r, last:] = 2.0  # guards against rounding in the final bin
    return cum


def _simulate_block(cum, start, stop, idx, sign, n, n_edges, seed_seq, max_steps):
    rng = np.random.Generator(np.random.PCG64(seed_seq))
    counts = np.zeros((n, n_edges), dtype=np.int64)
    pos = np.full(n, start, dtype=np.int64)
    active = np.arange(n)
    steps = 0
    while active.size:
        steps += 1
        if steps > max_steps:
            raise WalkLengthExceeded(f"a walk exceeded {max_steps} steps; is the target absorbing?")
        cur = pos[active]
        u = rng.random(active.size)
        nxt = np.argmax(u[:, None] < cum[cur], axis=1)
        e = idx[cur, nxt]
        counts[active, e] += sign[cur, nxt]
        pos[active] = nxt
        active = active[nxt != stop]
    return counts.sum(axis=0), (counts.astype(float) ** 2).sum(axis=0), steps


def simulate_crossings(T_abs, a, walkers, seed, workers=1, max_steps=MAX_WALK_STEPS):
    """Average net edge crossings of ``walkers`` independent walks from ``a``.

    Walkers are processed in fixed blocks, each with its own generator spawned
    from ``seed``, so the result depends only on ``seed`` and ``walkers`` and
    not on ``workers``.
    """
    if T_abs.absorbing is None:
        raise ValueError("transition matrix has no absorbing node; call make_absorbing first")
    if walkers < 1:
        raise ValueError("walkers must be >= 1")
    start, stop = T_abs.index(a), T_abs.index(T_abs.absorbing)
    pairs, idx, sign = _edge_lookup(T_abs)
    edges = tuple((T_abs.nodes[i], T_abs.nodes[j]) for i, j in pairs)
    K = len(pairs)
    if start == stop:
        zeros = np.zeros(K)
        return CrossingEstimate(edges, zeros, zeros.copy(), walkers, seed)

    cum = _cumulative(T_abs.entries)
    sizes = [BLOCK_SIZE] * (walkers // BLOCK_SIZE)
    if walkers % BLOCK_SIZE:
        sizes.append(walkers % BLOCK_SIZE)
    seqs = np.random.SeedSequence(seed).spawn(len(sizes))

    def run(job):
        n, ss = job
        return _simulate_block(cum, start, stop, idx, sign, n, K, ss, max_steps)

    jobs = list(zip(sizes, seqs))
    if workers > 1 and len(jobs) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(run, jobs))
    else:
        results = [run(j) for j in jobs]

    total = sum(r[0] for r in results).astype(float)
    total_sq = sum(r[1] for r in results)
    mean = total / walkers
    if walkers > 1:
        var = np.maximum(total_sq - walkers * mean**2, 0.0) / (walkers - 1)
        se = np.sqrt(var / walkers)
    else:
        se = np.zeros(K)
    return CrossingEstimate(edges, mean, se, walkers, seed, max(r[2] for r in results))
