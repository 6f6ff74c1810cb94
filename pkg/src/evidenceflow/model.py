"""Trial data, multi-arm weight adjustment and the aggregate network.

Sign convention: an effect stored for the pair ``(a, b)`` is the effect of
``b`` relative to ``a``. Reversing a pair negates its effect.
"""

import csv
import io
import math
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np

from .errors import (
    DisconnectedNetwork,
    DuplicateContrast,
    IncompleteMultiArm,
    MalformedRow,
    NegativeAdjustedWeight,
    NegativeTau2,
    NonPositiveVariance,
    UnknownNode,
)
from .numerics import as_matrix, pinv_symmetric

CONTRAST_HEADER = ("study", "treat1", "treat2", "effect", "se")
AGGREGATE_HEADER = ("treat1", "treat2", "direct_estimate", "weight")
NEGATIVE_WEIGHT_TOL = 1e-10


@dataclass(frozen=True)
class ContrastObservation:
    study: str
    treat_a: str
    treat_b: str
    effect: float
    se: float

    def __post_init__(self):
        if self.treat_a == self.treat_b:
            raise MalformedRow(f"study {self.study}: contrast compares {self.treat_a} with itself")
        if not (math.isfinite(self.se) and self.se > 0):
            raise MalformedRow(f"study {self.study}: standard error must be positive, got {self.se}")
        if not math.isfinite(self.effect):
            raise MalformedRow(f"study {self.study}: effect must be finite, got {self.effect}")

    @property
    def variance(self):
        return self.se * self.se


@dataclass(frozen=True)
class Study:
    id: str
    arms: tuple
    contrasts: tuple

    def __post_init__(self):
        arms = tuple(self.arms)
        if len(set(arms)) != len(arms):
            raise MalformedRow(f"study {self.id}: repeated arm labels {arms}")
        seen = set()
        for c in self.contrasts:
            if c.treat_a not in arms or c.treat_b not in arms:
                raise MalformedRow(f"study {self.id}: contrast {c.treat_a}-{c.treat_b} uses an unknown arm")
            key = frozenset((c.treat_a, c.treat_b))
            if key in seen:
                raise DuplicateContrast(f"study {self.id}: pair {c.treat_a}-{c.treat_b} given twice")
            seen.add(key)
        n = len(arms)
        if len(self.contrasts) != n * (n - 1) // 2:
            raise IncompleteMultiArm(
                f"study {self.id}: {n} arms need {n * (n - 1) // 2} contrasts, got {len(self.contrasts)}"
            )

    def variance(self, a, b):
        for c in self.contrasts:
            if {c.treat_a, c.treat_b} == {a, b}:
                return c.variance
        raise KeyError((a, b))


@dataclass(frozen=True)
class AdjustedStudyWeights:
    study: str
    weights: dict  # frozenset({a, b}) -> w_{i,ab}

    def weight(self, a, b):
        return self.weights[frozenset((a, b))]


def treatment_sort_key(labels):
    """Ordering key: numeric when every label is an integer, else lexicographic."""
    labels = list(labels)
    try:
        for lab in labels:
            int(lab)
    except ValueError:
        return lambda lab: (0, str(lab))
    return lambda lab: (int(lab), str(lab))


def order_treatments(labels):
    labels = list(dict.fromkeys(labels))
    return sorted(labels, key=treatment_sort_key(labels))


def edge_label(edge):
    return f"{edge[0]}-{edge[1]}"


@dataclass(frozen=True, eq=False)
class AggregateNetwork:
    """Per-edge pooled network.

    ``edges[k] = (baseline, other)`` with the baseline earlier in
    ``treatments``. Row ``k`` of ``incidence`` has +1 at the baseline and -1
    at the other treatment. ``direct_estimates`` may be ``None`` when only
    weights are known.
    """

    treatments: tuple
    edges: tuple
    incidence: np.ndarray
    weights: np.ndarray
    direct_estimates: Optional[np.ndarray] = None
    _index: dict = field(init=False, repr=False, compare=False)
    _edge_pos: dict = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "_index", {t: i for i, t in enumerate(self.treatments)})
        object.__setattr__(self, "_edge_pos", {e: k for k, e in enumerate(self.edges)})
        N, K = len(self.treatments), len(self.edges)
        B = as_matrix(self.incidence, "incidence")
        W = as_matrix(self.weights, "weights")
        if B.shape != (K, N) or W.shape != (K, K):
            raise MalformedRow(f"inconsistent shapes: B {B.shape}, W {W.shape}, K={K}, N={N}")
        if np.any(np.sum(B == 1, axis=1) != 1) or np.any(np.sum(B == -1, axis=1) != 1) or np.any(
            np.sum(B != 0, axis=1) != 2
        ):
            raise MalformedRow("each incidence row needs exactly one +1 and one -1")
        w = np.diag(W)
        if np.any(w <= 0) or np.any(W - np.diag(w)):
            raise MalformedRow("weight matrix must be diagonal with positive entries")
        object.__setattr__(self, "incidence", B)
        object.__setattr__(self, "weights", W)
        if self.direct_estimates is not None:
            d = np.array(self.direct_estimates, dtype=float)
            if d.shape != (K,):
                raise MalformedRow(f"direct estimates need length {K}")
            d.flags.writeable = False
            object.__setattr__(self, "direct_estimates", d)
        comps = _components(self.treatments, self.edges)
        if len(comps) > 1:
            raise DisconnectedNetwork(comps)

    @property
    def n_treatments(self):
        return len(self.treatments)

    @property
    def n_edges(self):
        return len(self.edges)

    @property
    def edge_weights(self):
        return np.diag(self.weights).copy()

    def index(self, treatment):
        try:
            return self._index[treatment]
        except KeyError:
            raise UnknownNode(f"unknown treatment {treatment!r}") from None

    def edge_index(self, a, b):
        """Position of edge ``{a, b}`` and the sign relating ``(a, b)`` to its stored orientation."""
        if (a, b) in self._edge_pos:
            return self._edge_pos[(a, b)], 1
        if (b, a) in self._edge_pos:
            return self._edge_pos[(b, a)], -1
        return None, 0

    @classmethod
    def from_edges(cls, edges, weights, estimates=None, treatments=None):
        """Build a network from (a, b) pairs, weights and optional b-vs-a estimates.

        Pairs are re-oriented so the baseline is the earlier treatment, with the
        estimate negated when a pair is flipped; edges are then sorted.
        """
        edges = [(str(a), str(b)) for a, b in edges]
        if treatments is None:
            treatments = order_treatments([t for e in edges for t in e])
        else:
            treatments = [str(t) for t in treatments]
        pos = {t: i for i, t in enumerate(treatments)}
        rows = []
        seen = set()
        for k, (a, b) in enumerate(edges):
            if a == b:
                raise MalformedRow(f"edge {a}-{b} is a self loop")
            if a not in pos or b not in pos:
                raise UnknownNode(f"edge {a}-{b} uses a treatment outside {treatments}")
            key = frozenset((a, b))
            if key in seen:
                raise DuplicateContrast(f"edge {a}-{b} listed twice")
            seen.add(key)
            est = None if estimates is None else estimates[k]
            if pos[a] > pos[b]:
                a, b = b, a
                est = None if est is None else -est
            rows.append((pos[a], pos[b], a, b, float(weights[k]), est))
        rows.sort()
        N, K = len(treatments), len(rows)
        B = np.zeros((K, N))
        for k, (i, j, *_rest) in enumerate(rows):
            B[k, i] = 1.0
            B[k, j] = -1.0
        W = np.diag([r[4] for r in rows]) if K else np.zeros((0, 0))
        est = None
        if estimates is not None and all(r[5] is not None for r in rows):
            est = np.array([r[5] for r in rows], dtype=float)
        return cls(tuple(treatments), tuple((r[2], r[3]) for r in rows), B, W, est)

    def with_estimates(self, estimates):
        return replace(self, direct_estimates=np.array(estimates, dtype=float))


def _components(nodes, edges):
    parent = {n: n for n in nodes}

    def find(x):
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    for a, b in edges:
        parent[find(a)] = find(b)
    groups = {}
    for n in nodes:
        groups.setdefault(find(n), []).append(n)
    return list(groups.values())


@dataclass(frozen=True)
class ParseOptions:
    delimiter: str = ","


def _rows(text, delimiter):
    if isinstance(text, str):
        text = io.StringIO(text)
    for lineno, row in enumerate(csv.reader(text, delimiter=delimiter), start=1):
        if not row or all(not cell.strip() for cell in row):
            continue
        yield lineno, [cell.strip() for cell in row]


def _float(value, lineno, what):
    try:
        return float(value)
    except ValueError:
        raise MalformedRow(f"line {lineno}: cannot parse {what} {value!r} as a number") from None


def parse_contrasts(text, options=ParseOptions()):
    """Read contrast-level CSV (``study,treat1,treat2,effect,se``) into studies.

    The header line is optional. Rows are grouped by study id in order of
    first appearance; arms are listed in the order they are first seen.
    """
    grouped = {}
    for lineno, row in _rows(text, options.delimiter):
        if tuple(c.lower() for c in row) == CONTRAST_HEADER:
            continue
        if len(row) != 5:
            raise MalformedRow(f"line {lineno}: expected 5 fields, got {len(row)}")
        sid, ta, tb = row[0], row[1], row[2]
        obs = ContrastObservation(
            sid, ta, tb, _float(row[3], lineno, "effect"), _float(row[4], lineno, "se")
        )
        grouped.setdefault(sid, []).append(obs)

    studies = []
    for sid, obs in grouped.items():
        arms = list(dict.fromkeys(t for o in obs for t in (o.treat_a, o.treat_b)))
        studies.append(Study(sid, tuple(arms), tuple(obs)))
    return studies


def parse_aggregate(text, options=ParseOptions()):
    """Read pre-pooled CSV (``treat1,treat2,direct_estimate,weight``).

    ``direct_estimate`` may be left empty on every row, in which case the
    network carries weights only.
    """
    edges, weights, estimates = [], [], []
    for lineno, row in _rows(text, options.delimiter):
        if tuple(c.lower() for c in row) == AGGREGATE_HEADER:
            continue
        if len(row) != 4:
            raise MalformedRow(f"line {lineno}: expected 4 fields, got {len(row)}")
        w = _float(row[3], lineno, "weight")
        if not (math.isfinite(w) and w > 0):
            raise MalformedRow(f"line {lineno}: weight must be positive, got {row[3]}")
        edges.append((row[0], row[1]))
        weights.append(w)
        estimates.append(None if row[2] == "" else _float(row[2], lineno, "direct_estimate"))
    n_missing = sum(e is None for e in estimates)
    if 0 < n_missing < len(estimates):
        raise MalformedRow("direct_estimate must be given on every row or on none")
    return AggregateNetwork.from_edges(edges, weights, None if n_missing else estimates)


def apply_heterogeneity(study, tau2):
    """Add between-trial variance ``tau2`` to every contrast of ``study``."""
    if not (tau2 >= 0):
        raise NegativeTau2(f"tau2 must be >= 0, got {tau2}")
    if tau2 == 0:
        return study
    contrasts = tuple(replace(c, se=math.sqrt(c.variance + tau2)) for c in study.contrasts)
    return replace(study, contrasts=contrasts)


def adjust_multiarm(study):
    """Adjusted per-pair weights whose complete sub-network reproduces the study's variances.

    Two-arm studies get plain inverse-variance weights. For ``n >= 3`` arms
    the pairwise variances are read as resistance distances and inverted:
    ``Lambda = pinv(-C V C / 2)`` with the centering matrix ``C``, and the
    weight of pair ``ab`` is ``-Lambda_ab``.
    """
    arms = list(study.arms)
    n = len(arms)
    for c in study.contrasts:
        if not c.variance > 0:
            raise NonPositiveVariance(f"study {study.id}: variance of {c.treat_a}-{c.treat_b} is {c.variance}")
    if n == 2:
        (c,) = study.contrasts
        return AdjustedStudyWeights(study.id, {frozenset((c.treat_a, c.treat_b)): 1.0 / c.variance})

    V = np.zeros((n, n))
    for c in study.contrasts:
        i, j = arms.index(c.treat_a), arms.index(c.treat_b)
        V[i, j] = V[j, i] = c.variance
    C = np.eye(n) - np.full((n, n), 1.0 / n)
    lam = pinv_symmetric(-0.5 * C @ V @ C)

    weights = {}
    for i in range(n):
        for j in range(i + 1, n):
            w = -lam[i, j]
            if w < -NEGATIVE_WEIGHT_TOL:
                raise NegativeAdjustedWeight(
                    f"study {study.id}: adjusted weight for {arms[i]}-{arms[j]} is {w:.4g}; "
                    "the variance structure cannot come from a multi-arm trial"
                )
            weights[frozenset((arms[i], arms[j]))] = max(w, 0.0)
    return AdjustedStudyWeights(study.id, weights)


def pool_edges(adjusted, observations):
    """Inverse-variance pooling of every compared pair into an aggregate network."""
    if not observations:
        raise MalformedRow("no studies to pool")
    by_id = {a.study: a for a in adjusted}
    labels = order_treatments(t for s in observations for t in s.arms)
    pos = {t: i for i, t in enumerate(labels)}
    sums = {}  # (baseline, other) -> [sum w, sum w*y]
    for study in observations:
        adj = by_id[study.id]
        for c in study.contrasts:
            a, b, y = c.treat_a, c.treat_b, c.effect
            if pos[a] > pos[b]:
                a, b, y = b, a, -y
            w = adj.weight(a, b)
            acc = sums.setdefault((a, b), [0.0, 0.0])
            acc[0] += w
            acc[1] += w * y
    edges, weights, estimates = [], [], []
    for (a, b), (sw, swy) in sums.items():
        if sw <= 0:
            continue
        edges.append((a, b))
        weights.append(sw)
        estimates.append(swy / sw)
    return AggregateNetwork.from_edges(edges, weights, estimates, treatments=labels)


def aggregate_from_studies(studies, tau2=0.0):
    """Heterogeneity, multi-arm adjustment and pooling in one call."""
    studies = [apply_heterogeneity(s, tau2) for s in studies]
    return pool_edges([adjust_multiarm(s) for s in studies], studies)


def format_aggregate(net, digits=15):
    """Aggregate CSV text for ``net``; round-trips through :func:`parse_aggregate`."""
    out = io.StringIO()
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow(AGGREGATE_HEADER)
    w = net.edge_weights
    for k, (a, b) in enumerate(net.edges):
        est = "" if net.direct_estimates is None else f"{net.direct_estimates[k]:.{digits}g}"
        writer.writerow((a, b, est, f"{w[k]:.{digits}g}"))
    return out.getvalue()
