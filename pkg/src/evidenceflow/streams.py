"""Evidence streams and proportion contributions.

A walker on the evidence-flow DAG of comparison ``ab`` leaves each node
along an outgoing flow edge with probability proportional to its flow. The
flow of a stream (a source-to-sink path) is the probability that the walker
takes that path. Each stream's flow is then spread evenly over its edges to
get the proportion contribution of every direct comparison.

The legacy iterative decomposition (pick a path, peel off its bottleneck
flow, repeat) is kept for comparison.
"""

import enum
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .errors import ConservationViolation, CycleDetected, PathExplosion, Stalled
from .flow import topological_order, verify_conservation

MAX_PATHS = 10**6
RESIDUAL_TOL = 1e-9


@dataclass(frozen=True, eq=False)
class StreamTransitionMatrix:
    comparison: tuple
    nodes: tuple
    entries: np.ndarray

    @property
    def absorbing(self):
        return self.comparison[1]

    def prob(self, c, d):
        return self.entries[self.nodes.index(c), self.nodes.index(d)]


@dataclass(frozen=True)
class EvidenceStream:
    path: tuple
    flow: float

    @property
    def length(self):
        return len(self.path) - 1

    def steps(self):
        return list(zip(self.path[:-1], self.path[1:]))

    def label(self):
        return "->".join(map(str, self.path))


@dataclass(frozen=True)
class ContributionRow:
    """Proportion contribution of each direct comparison, keyed by oriented edge."""

    comparison: tuple
    contributions: dict

    def total(self):
        return sum(self.contributions.values())

    def __getitem__(self, edge):
        c, d = edge
        if (c, d) in self.contributions:
            return self.contributions[(c, d)]
        return self.contributions[(d, c)]


def stream_transition_matrix(fnet):
    """``U_cd = f_cd / sum_x f_cx``; the sink and any node without outflow absorb."""
    report = verify_conservation(fnet)
    if not report.passed:
        raise ConservationViolation(
            f"flow network {fnet.comparison} fails conservation "
            f"(max residual {report.max_residual():.3e}, acyclic={report.acyclic})"
        )
    nodes = tuple(fnet.nodes)
    pos = {n: i for i, n in enumerate(nodes)}
    U = np.zeros((len(nodes), len(nodes)))
    for c in nodes:
        out = fnet.successors(c) if c != fnet.sink else []
        total = sum(f for _, f in out)
        if total > 0:
            for d, f in out:
                U[pos[c], pos[d]] = f / total
        else:
            U[pos[c], pos[c]] = 1.0
    return StreamTransitionMatrix(tuple(fnet.comparison), nodes, U)


def enumerate_paths(fnet, max_paths=MAX_PATHS):
    """Every directed source-to-sink path, in lexicographic node order."""
    if topological_order(fnet) is None:
        raise CycleDetected(f"flow network {fnet.comparison} has a cycle")
    a, b = fnet.comparison
    children = {n: [d for d, _ in fnet.successors(n)] for n in fnet.nodes}
    paths = []
    stack = [(a,)]
    while stack:
        path = stack.pop()
        node = path[-1]
        if node == b:
            paths.append(path)
            if len(paths) > max_paths:
                raise PathExplosion(f"more than {max_paths} paths; the network is too dense to enumerate")
            continue
        for d in reversed(children[node]):
            stack.append(path + (d,))
    return paths


def stream_flows(U, paths):
    """``phi = prod of U along the path`` for each path."""
    pos = {n: i for i, n in enumerate(U.nodes)}
    streams = []
    for path in paths:
        phi = 1.0
        for c, d in zip(path[:-1], path[1:]):
            phi *= U.entries[pos[c], pos[d]]
        streams.append(EvidenceStream(tuple(path), float(phi)))
    return streams


def analytic_streams(fnet):
    return stream_flows(stream_transition_matrix(fnet), enumerate_paths(fnet))


def proportion_contributions(streams, fnet=None):
    """``p_cd = sum over streams through cd of phi / |path|``.

    With ``fnet`` supplied, every edge of the underlying network is reported
    (zero when no stream uses it) under its stored orientation.
    """
    if fnet is not None:
        comparison = tuple(fnet.comparison)
        edges = list(fnet.edges)
    else:
        comparison = (streams[0].path[0], streams[0].path[-1]) if streams else ()
        edges = []
    contrib = {tuple(e): 0.0 for e in edges}
    for s in streams:
        share = s.flow / s.length
        for c, d in s.steps():
            key = (c, d) if (c, d) in contrib or (d, c) not in contrib else (d, c)
            contrib[key] = contrib.get(key, 0.0) + share
    return ContributionRow(comparison, contrib)


def stream_estimate(streams, net):
    """Network estimate rebuilt from streams: each path sums signed direct estimates."""
    theta = net.direct_estimates
    total = 0.0
    for s in streams:
        acc = 0.0
        for c, d in s.steps():
            k, sgn = net.edge_index(c, d)
            acc += sgn * theta[k]
        total += s.flow * acc
    return total


class Strategy(enum.Enum):
    SHORTEST = "shortest"
    RANDOM = "random"


def _legacy_run(fnet, paths, edge_ids, strategy, rng):
    a = fnet.source
    residual = dict(fnet.flows)
    alive = list(range(len(paths)))
    found = {}
    while sum(residual.values()) >= RESIDUAL_TOL:
        alive = [i for i in alive if all(e in residual for e in edge_ids[i])]
        if not alive:
            raise Stalled(
                f"residual flow {sum(residual.values()):.3e} left but no {a}->{fnet.sink} path remains",
                residual,
            )
        if strategy is Strategy.SHORTEST:
            pick = min(
                alive,
                key=lambda i: (len(paths[i]), -min(residual[e] for e in edge_ids[i]), paths[i]),
            )
        else:
            pick = alive[int(rng.integers(len(alive)))]
        phi = min(residual[e] for e in edge_ids[pick])
        found[paths[pick]] = found.get(paths[pick], 0.0) + phi
        for e in edge_ids[pick]:
            residual[e] -= phi
            if residual[e] < RESIDUAL_TOL:
                del residual[e]
    return found


def _prepare(fnet):
    paths = enumerate_paths(fnet)
    rank = {n: i for i, n in enumerate(fnet.nodes)}
    # tuple-of-ranks keys give numeric ordering for tie-breaks
    keyed = [tuple(rank[n] for n in p) for p in paths]
    edge_ids = [list(zip(p[:-1], p[1:])) for p in paths]
    return paths, keyed, edge_ids


def legacy_streams(fnet, strategy=Strategy.SHORTEST, seed=None):
    """Iterative path-peeling decomposition.

    ``Strategy.SHORTEST`` takes the shortest remaining path first, breaking
    ties by larger bottleneck flow and then node order; ``Strategy.RANDOM``
    picks uniformly among remaining paths using ``seed``. Paths that never
    receive flow are omitted.
    """
    strategy = Strategy(strategy)
    paths, keyed, edge_ids = _prepare(fnet)
    rng = np.random.default_rng(seed)
    found = _legacy_run(fnet, keyed, edge_ids, strategy, rng)
    return _to_streams(found, paths, keyed)


def _to_streams(found, paths, keyed):
    lookup = dict(zip(keyed, paths))
    return [EvidenceStream(lookup[k], found[k]) for k in sorted(found)]


def legacy_average(fnet, runs, seed, workers=1):
    """Mean path flows over ``runs`` Random decompositions (absent paths count as zero).

    Run ``i`` uses a generator spawned from ``seed``, so the output does not
    depend on ``workers``.
    """
    if runs < 1:
        raise ValueError("runs must be >= 1")
    paths, keyed, edge_ids = _prepare(fnet)
    seqs = np.random.SeedSequence(seed).spawn(runs)

    def run(ss):
        return _legacy_run(fnet, keyed, edge_ids, Strategy.RANDOM, np.random.default_rng(ss))

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(run, seqs))
    else:
        results = [run(ss) for ss in seqs]
    totals = {}
    for found in results:
        for k, phi in found.items():
            totals[k] = totals.get(k, 0.0) + phi
    return _to_streams({k: v / runs for k, v in totals.items()}, paths, keyed)
