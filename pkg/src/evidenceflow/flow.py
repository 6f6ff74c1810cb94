"""Evidence-flow networks: one directed acyclic graph per hat-matrix row."""

from dataclasses import dataclass, field

import numpy as np

from .errors import EvidenceFlowError
from .model import order_treatments, treatment_sort_key

ZERO_TOL = 1e-10
CONSERVATION_TOL = 1e-9


class InvalidFlowNetwork(EvidenceFlowError, ValueError):
    pass


@dataclass(frozen=True, eq=False)
class EvidenceFlowNetwork:
    """Directed flows ``(c, d) -> f`` for the comparison ``(a, b)``.

    ``edges`` keeps the oriented edge list of the underlying network so that
    comparisons without flow (zero hat entries) stay visible downstream.
    """

    comparison: tuple
    nodes: tuple
    flows: dict
    edges: tuple = ()
    isolated: frozenset = field(init=False)

    def __post_init__(self):
        a, b = self.comparison
        if a == b or a not in self.nodes or b not in self.nodes:
            raise InvalidFlowNetwork(f"comparison {a}-{b} is not a pair of distinct network nodes")
        for (c, d), f in self.flows.items():
            if c not in self.nodes or d not in self.nodes:
                raise InvalidFlowNetwork(f"flow {c}->{d} uses an unknown node")
            if not f > 0:
                raise InvalidFlowNetwork(f"flow {c}->{d} must be positive, got {f}")
            if (d, c) in self.flows:
                raise InvalidFlowNetwork(f"flow present in both directions on {c}-{d}")
        touched = {n for e in self.flows for n in e}
        object.__setattr__(self, "isolated", frozenset(n for n in self.nodes if n not in touched))
        if not self.edges:
            key = treatment_sort_key(self.nodes)
            edges = tuple(sorted((tuple(sorted(e, key=key)) for e in self.flows), key=lambda e: (key(e[0]), key(e[1]))))
            object.__setattr__(self, "edges", edges)

    @property
    def source(self):
        return self.comparison[0]

    @property
    def sink(self):
        return self.comparison[1]

    def successors(self, node):
        """Outgoing ``(target, flow)`` pairs, in node order."""
        order = {n: i for i, n in enumerate(self.nodes)}
        out = [(d, f) for (c, d), f in self.flows.items() if c == node]
        return sorted(out, key=lambda t: order[t[0]])

    def outflow(self, node):
        return sum(f for (c, _), f in self.flows.items() if c == node)

    def inflow(self, node):
        return sum(f for (_, d), f in self.flows.items() if d == node)

    def edge_flow(self, c, d):
        """Flow along ``c -> d`` (zero if absent or reversed)."""
        return self.flows.get((c, d), 0.0)


def flow_from_row(edges, values, comparison, nodes=None, zero_tol=ZERO_TOL):
    """Split a signed row over oriented ``edges`` into directed flows.

    A positive entry on ``(c, d)`` is flow ``c -> d``; a negative entry is
    flow ``d -> c`` of the same magnitude. Entries with ``|h| < zero_tol``
    are dropped.
    """
    edges = tuple(tuple(e) for e in edges)
    values = np.asarray(values, dtype=float)
    if nodes is None:
        nodes = order_treatments(t for e in edges for t in e)
    flows = {}
    for (c, d), h in zip(edges, values):
        if h > zero_tol:
            flows[(c, d)] = float(h)
        elif h < -zero_tol:
            flows[(d, c)] = float(-h)
    return EvidenceFlowNetwork(tuple(comparison), tuple(nodes), flows, edges)


def evidence_flow(H, comparison, nodes=None, zero_tol=ZERO_TOL):
    """Evidence-flow network of hat-matrix row ``comparison``.

    ``comparison`` may be given against the stored edge orientation, in
    which case the row is negated and the flows run from the first node.
    """
    a, b = comparison
    return flow_from_row(H.edges, H.row(a, b), (a, b), nodes, zero_tol)


@dataclass(frozen=True)
class ConservationReport:
    source_residual: float
    sink_residual: float
    interior_residual: float
    acyclic: bool
    order: tuple = ()
    tol: float = CONSERVATION_TOL

    @property
    def passed(self):
        return (
            self.acyclic
            and self.source_residual <= self.tol
            and self.sink_residual <= self.tol
            and self.interior_residual <= self.tol
        )

    def max_residual(self):
        return max(self.source_residual, self.sink_residual, self.interior_residual)


def topological_order(fnet):
    """Kahn ordering of the flow graph, or ``None`` if it has a cycle."""
    indeg = {n: 0 for n in fnet.nodes}
    for (_, d) in fnet.flows:
        indeg[d] += 1
    ready = [n for n in fnet.nodes if indeg[n] == 0]
    order = []
    while ready:
        n = ready.pop(0)
        order.append(n)
        for d, _ in fnet.successors(n):
            indeg[d] -= 1
            if indeg[d] == 0:
                ready.append(d)
    return tuple(order) if len(order) == len(fnet.nodes) else None


def verify_conservation(fnet, tol=CONSERVATION_TOL):
    """Residuals of the source, sink and interior flow laws plus acyclicity.

    Flow into the source or out of the sink counts against the respective
    residual, since both nodes must be one-sided.
    """
    a, b = fnet.comparison
    src = abs(fnet.outflow(a) - 1.0) + fnet.inflow(a)
    snk = abs(fnet.inflow(b) - 1.0) + fnet.outflow(b)
    interior = 0.0
    for c in fnet.nodes:
        if c not in (a, b):
            interior = max(interior, abs(fnet.outflow(c) - fnet.inflow(c)))
    order = topological_order(fnet)
    return ConservationReport(src, snk, interior, order is not None, order or (), tol)


def flow_rows(fnet):
    """``(from, to, flow)`` rows sorted by node order."""
    order = {n: i for i, n in enumerate(fnet.nodes)}
    return sorted(((c, d, f) for (c, d), f in fnet.flows.items()), key=lambda r: (order[r[0]], order[r[1]]))


def to_dot(fnet, digits=3):
    """Graphviz digraph; ``penwidth`` grows linearly from 0.5 (no flow) to 5 (unit flow)."""
    a, b = fnet.comparison
    lines = [f'digraph "evidence_flow_{a}_{b}" {{', "  rankdir=LR;"]
    for n in fnet.nodes:
        attrs = ' color="blue", fontcolor="blue"' if n in (a, b) else ""
        lines.append(f'  "{n}" [label="{n}"{attrs}];')
    for c, d, f in flow_rows(fnet):
        width = 0.5 + 4.5 * min(max(f, 0.0), 1.0)
        lines.append(f'  "{c}" -> "{d}" [label="{f:.{digits}g}", penwidth={width:.3f}];')
    lines.append("}")
    return "\n".join(lines) + "\n"


__all__ = [
    "ConservationReport",
    "EvidenceFlowNetwork",
    "InvalidFlowNetwork",
    "evidence_flow",
    "flow_from_row",
    "flow_rows",
    "to_dot",
    "topological_order",
    "verify_conservation",
]
