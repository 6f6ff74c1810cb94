"""Bundled datasets and the hat-row file format.

A hat-row file holds a single row of a hat matrix, one signed entry per
direct comparison (``treat1,treat2,hat``), plus the comparison it belongs
to. It is enough to build the evidence-flow network without the weights.
"""

from dataclasses import dataclass
from importlib import resources

import numpy as np

from .errors import MalformedRow
from .model import ParseOptions, _float, _rows, order_treatments, parse_aggregate, treatment_sort_key

HATROW_HEADER = ("treat1", "treat2", "hat")

FIXTURES = {
    "fictional5": ("fictional5.csv", "aggregate"),
    "depression": ("depression.csv", "aggregate"),
    "macfadyen": ("macfadyen.csv", "hatrow"),
}
FIXTURE_COMPARISONS = {"macfadyen": ("1", "2")}


@dataclass(frozen=True, eq=False)
class HatRow:
    """Signed hat-matrix entries over oriented ``edges`` (baseline first)."""

    edges: tuple
    values: np.ndarray
    nodes: tuple


def parse_hatrow(text, options=ParseOptions()):
    """Read ``treat1,treat2,hat`` rows; a pair given against node order has its entry negated."""
    raw = []
    for lineno, row in _rows(text, options.delimiter):
        if tuple(c.lower() for c in row) == HATROW_HEADER:
            continue
        if len(row) != 3:
            raise MalformedRow(f"line {lineno}: expected 3 fields, got {len(row)}")
        raw.append((row[0], row[1], _float(row[2], lineno, "hat")))
    if not raw:
        raise MalformedRow("hat-row input has no rows")
    nodes = order_treatments(t for c, d, _ in raw for t in (c, d))
    key = treatment_sort_key(nodes)
    seen = {}
    for c, d, h in raw:
        if c == d:
            raise MalformedRow(f"self-comparison {c}-{d}")
        if key(c) > key(d):
            c, d, h = d, c, -h
        if (c, d) in seen:
            raise MalformedRow(f"comparison {c}-{d} listed twice")
        seen[(c, d)] = h
    edges = sorted(seen, key=lambda e: (key(e[0]), key(e[1])))
    values = np.array([seen[e] for e in edges])
    values.flags.writeable = False
    return HatRow(tuple(edges), values, tuple(nodes))


def fixture_text(name):
    try:
        filename, _ = FIXTURES[name]
    except KeyError:
        raise KeyError(f"unknown fixture {name!r}; choose from {sorted(FIXTURES)}") from None
    return resources.files(__package__).joinpath("data", filename).read_text(encoding="utf-8")


def load_fixture(name):
    """An :class:`AggregateNetwork` (``fictional5``, ``depression``) or :class:`HatRow` (``macfadyen``)."""
    text = fixture_text(name)
    if FIXTURES[name][1] == "hatrow":
        return parse_hatrow(text)
    return parse_aggregate(text)
