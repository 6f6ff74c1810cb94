"""Command-line front end.

Every subcommand reads one dataset (``--input`` file or bundled
``--fixture``), runs a pipeline and writes CSV, JSON or DOT to standard
output. Exit status is 0 on success, 1 on a domain error and 2 on a usage
error.
"""

import argparse
import contextlib
import csv
import io
import json
import os
import sys
from dataclasses import dataclass
from typing import Optional

import numpy as np

from . import fixtures
from .errors import EvidenceFlowError
from .flow import evidence_flow, flow_from_row, flow_rows, to_dot, verify_conservation
from .hat import hat_matrix
from .model import aggregate_from_studies, edge_label, format_aggregate, parse_aggregate, parse_contrasts
from .randomwalk import analytic_currents, make_absorbing, simulate_crossings, transition_matrix
from .streams import Strategy, analytic_streams, legacy_average, legacy_streams, proportion_contributions

SEED_ENV = "EVIDENCEFLOW_SEED"
KINDS = ("contrasts", "aggregate", "hatrow")
METHODS = ("rw", "shortest", "random", "average")
CHECK_TOL = 1e-9
HATROW_COMMANDS = ("flow", "streams", "contributions")


class UsageError(Exception):
    pass


@dataclass(frozen=True)
class AnalysisConfig:
    input: Optional[str]
    kind: str
    fixture: Optional[str] = None
    tau2: float = 0.0
    comparison: Optional[tuple] = None
    method: str = "rw"
    runs: int = 1000
    seed: int = 0
    walkers: int = 10000
    workers: int = 1
    digits: int = 15
    output_format: str = "csv"

    def __post_init__(self):
        if self.kind not in KINDS:
            raise UsageError(f"--kind must be one of {', '.join(KINDS)}")
        if not self.tau2 >= 0:
            raise UsageError(f"--tau2 must be >= 0, got {self.tau2}")
        if self.runs < 1 or self.walkers < 1 or self.workers < 1:
            raise UsageError("--runs, --walkers and --workers must be >= 1")
        if not 1 <= self.digits <= 17:
            raise UsageError(f"--digits must lie in [1, 17], got {self.digits}")
        if self.method not in METHODS:
            raise UsageError(f"--method must be one of {', '.join(METHODS)}")


def _num(x, digits):
    return f"{float(x):.{digits}g}"


def _csv(rows):
    out = io.StringIO()
    csv.writer(out, lineterminator="\n").writerows(rows)
    return out.getvalue()


def _parse_comparison(text):
    parts = [p.strip() for p in text.split(",")]
    if len(parts) != 2 or not all(parts) or parts[0] == parts[1]:
        raise argparse.ArgumentTypeError(f"expected two distinct treatments as A,B, got {text!r}")
    return tuple(parts)


def _default_seed():
    raw = os.environ.get(SEED_ENV)
    if raw is None or raw == "":
        return 0
    try:
        return int(raw)
    except ValueError:
        raise UsageError(f"{SEED_ENV} must be an integer, got {raw!r}") from None


def _load(cfg):
    """Aggregate network or hat row named by the config."""
    if cfg.fixture is not None:
        if cfg.fixture not in fixtures.FIXTURES:
            raise UsageError(f"unknown fixture {cfg.fixture!r}; choose from {', '.join(sorted(fixtures.FIXTURES))}")
        text = fixtures.fixture_text(cfg.fixture)
    else:
        with open(cfg.input, encoding="utf-8") as fh:
            text = fh.read()
    if cfg.kind == "contrasts":
        return aggregate_from_studies(parse_contrasts(text), cfg.tau2)
    if cfg.kind == "aggregate":
        return parse_aggregate(text)
    return fixtures.parse_hatrow(text)


def _flow_network(cfg, data):
    if cfg.comparison is None:
        raise UsageError("--comparison A,B is required for this subcommand")
    if isinstance(data, fixtures.HatRow):
        return flow_from_row(data.edges, data.values, cfg.comparison, data.nodes)
    return evidence_flow(hat_matrix(data), cfg.comparison, data.treatments)


def _streams(cfg, fnet):
    if cfg.method == "rw":
        return analytic_streams(fnet)
    if cfg.method == "shortest":
        return legacy_streams(fnet, Strategy.SHORTEST)
    if cfg.method == "random":
        return legacy_streams(fnet, Strategy.RANDOM, seed=cfg.seed)
    return legacy_average(fnet, cfg.runs, cfg.seed, cfg.workers)


def cmd_aggregate(cfg, net):
    return format_aggregate(net, cfg.digits)


def cmd_hatmatrix(cfg, net):
    H = hat_matrix(net)
    rows = [["comparison", *H.labels]]
    for label, row in zip(H.labels, H.entries):
        rows.append([label, *(_num(h, cfg.digits) for h in row)])
    return _csv(rows)


def cmd_flow(cfg, data):
    fnet = _flow_network(cfg, data)
    if cfg.output_format == "dot":
        return to_dot(fnet, cfg.digits)
    return _csv([["from", "to", "flow"], *[[c, d, _num(f, cfg.digits)] for c, d, f in flow_rows(fnet)]])


def cmd_walk(cfg, net, simulate=False):
    if cfg.comparison is None:
        raise UsageError("--comparison A,B is required for this subcommand")
    a, b = cfg.comparison
    currents = analytic_currents(net, a, b)
    header = ["treat1", "treat2", "current"]
    if simulate:
        T = make_absorbing(transition_matrix(net), b)
        est = simulate_crossings(T, a, cfg.walkers, cfg.seed, cfg.workers)
        header += ["simulated", "stderr"]
    rows = [header]
    for k, (c, d) in enumerate(net.edges):
        row = [c, d, _num(currents[k], cfg.digits)]
        if simulate:
            # simulator edges follow node order, which is the network edge order
            row += [_num(est.mean[k], cfg.digits), _num(est.stderr[k], cfg.digits)]
        rows.append(row)
    return _csv(rows)


def cmd_streams(cfg, data):
    fnet = _flow_network(cfg, data)
    streams = _streams(cfg, fnet)
    if cfg.output_format == "json":
        return _json(fnet, streams, None, cfg.digits)
    return _csv([["path", "flow"], *[[s.label(), _num(s.flow, cfg.digits)] for s in streams]])


def _json(fnet, streams, contrib, digits):
    doc = {
        "comparison": list(fnet.comparison),
        "streams": [{"path": list(s.path), "flow": float(_num(s.flow, digits))} for s in streams],
    }
    if contrib is not None:
        doc["contributions"] = {edge_label(e): float(_num(p, digits)) for e, p in contrib.contributions.items()}
    return json.dumps(doc, indent=2) + "\n"


def cmd_contributions(cfg, data):
    fnet = _flow_network(cfg, data)
    streams = _streams(cfg, fnet)
    contrib = proportion_contributions(streams, fnet)
    if cfg.output_format == "json":
        return _json(fnet, streams, contrib, cfg.digits)
    rows = [["treat1", "treat2", "contribution", "percent"]]
    for (c, d), p in contrib.contributions.items():
        rows.append([c, d, _num(p, cfg.digits), _num(100 * p, cfg.digits)])
    return _csv(rows)


def cmd_check(cfg, net):
    """Conservation and current/hat-row agreement over every comparison; returns (text, ok)."""
    H = hat_matrix(net)
    worst_cons, worst_eq, cyclic = 0.0, 0.0, 0
    for k, (a, b) in enumerate(net.edges):
        report = verify_conservation(evidence_flow(H, (a, b), net.treatments))
        worst_cons = max(worst_cons, report.max_residual())
        cyclic += not report.acyclic
        worst_eq = max(worst_eq, float(np.max(np.abs(analytic_currents(net, a, b) - H.entries[k]))))
    ok = worst_cons <= CHECK_TOL and worst_eq <= CHECK_TOL and cyclic == 0
    rows = [
        ["check", "value"],
        ["comparisons", str(net.n_edges)],
        ["max_conservation_residual", f"{worst_cons:.3e}"],
        ["max_current_hat_difference", f"{worst_eq:.3e}"],
        ["cyclic_rows", str(cyclic)],
        ["status", "ok" if ok else "FAIL"],
    ]
    return _csv(rows), ok


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    src = common.add_mutually_exclusive_group()
    src.add_argument("--input", help="input CSV file")
    src.add_argument("--fixture", help="bundled dataset: " + ", ".join(sorted(fixtures.FIXTURES)))
    common.add_argument("--kind", choices=KINDS, help="input format (default: contrasts, or the fixture's own)")
    common.add_argument("--tau2", type=float, default=0.0, help="between-trial variance added to contrasts")
    common.add_argument("--digits", type=int, help="significant digits in output (default 15; 3 for DOT)")

    def comparison(p, required=True):
        p.add_argument("--comparison", type=_parse_comparison, required=required, metavar="A,B")

    parser = argparse.ArgumentParser(prog="evidenceflow", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True, metavar="COMMAND")
    sub.add_parser("aggregate", parents=[common], help="pooled aggregate network as CSV")
    sub.add_parser("hatmatrix", parents=[common], help="hat matrix as CSV")

    p = sub.add_parser("flow", parents=[common], help="evidence-flow network of one comparison")
    comparison(p, required=False)
    p.add_argument("--format", choices=("csv", "dot"), default="csv")

    p = sub.add_parser("walk", parents=[common], help="edge currents of the random walk")
    comparison(p)
    p.add_argument("--simulate", action="store_true", help="add Monte Carlo estimates")
    p.add_argument("--walkers", type=int, default=10000)
    p.add_argument("--seed", type=int)
    p.add_argument("--workers", type=int, default=1)

    for name, what in (("streams", "evidence streams"), ("contributions", "proportion contributions")):
        p = sub.add_parser(name, parents=[common], help=what)
        comparison(p, required=False)
        p.add_argument("--method", choices=METHODS, default="rw")
        p.add_argument("--runs", type=int, default=1000, help="runs of the random algorithm for 'average'")
        p.add_argument("--seed", type=int)
        p.add_argument("--workers", type=int, default=1)
        p.add_argument("--format", choices=("csv", "json"), default="csv")

    sub.add_parser("check", parents=[common], help="conservation and equivalence checks")
    return parser


def config_from_args(args):
    if args.input is None and args.fixture is None:
        raise UsageError("one of --input or --fixture is required")
    kind = args.kind
    if kind is None:
        kind = fixtures.FIXTURES[args.fixture][1] if args.fixture in fixtures.FIXTURES else "contrasts"
    comparison = getattr(args, "comparison", None)
    if comparison is None and args.fixture in fixtures.FIXTURE_COMPARISONS:
        comparison = fixtures.FIXTURE_COMPARISONS[args.fixture]
    fmt = getattr(args, "format", "csv")
    digits = args.digits if args.digits is not None else (3 if fmt == "dot" else 15)
    seed = getattr(args, "seed", None)
    return AnalysisConfig(
        input=args.input,
        kind=kind,
        fixture=args.fixture,
        tau2=args.tau2,
        comparison=comparison,
        method=getattr(args, "method", "rw"),
        runs=getattr(args, "runs", 1000),
        seed=_default_seed() if seed is None else seed,
        walkers=getattr(args, "walkers", 10000),
        workers=getattr(args, "workers", 1),
        digits=digits,
        output_format=fmt,
    )


def run_command(argv, stdout=None, stderr=None):
    """Run one subcommand; returns the exit status."""
    stdout = sys.stdout if stdout is None else stdout
    stderr = sys.stderr if stderr is None else stderr
    parser = build_parser()
    try:
        with contextlib.redirect_stdout(stdout), contextlib.redirect_stderr(stderr):
            args = parser.parse_args(argv)
    except SystemExit as exc:
        return 0 if exc.code == 0 else 2
    try:
        cfg = config_from_args(args)
        if cfg.kind == "hatrow" and args.command not in HATROW_COMMANDS:
            raise UsageError(f"hat-row input supports only {', '.join(HATROW_COMMANDS)}")
        data = _load(cfg)
        ok = True
        if args.command == "walk":
            text = cmd_walk(cfg, data, args.simulate)
        elif args.command == "check":
            text, ok = cmd_check(cfg, data)
        else:
            text = globals()[f"cmd_{args.command}"](cfg, data)
    except UsageError as exc:
        parser.print_usage(stderr)
        print(f"evidenceflow: error: {exc}", file=stderr)
        return 2
    except (EvidenceFlowError, OSError) as exc:
        print(f"{type(exc).__name__}: {exc}", file=stderr)
        return 1
    stdout.write(text)
    return 0 if ok else 1


def main(argv=None):
    return run_command(sys.argv[1:] if argv is None else argv)


if __name__ == "__main__":
    sys.exit(main())
