"""Command-line entry point: price, thresholds, experiment, audit, rankopt.

Exit codes: 0 ok, 1 violation found, 2 usage or input error.
"""
from __future__ import annotations

import argparse
import csv
import json
import sys
from pathlib import Path

import numpy as np

from .audit import audit_ic, first_price_strawman, random_instance, random_profiles, standard_mechanisms
from .harness import ExperimentConfig, draw_profiles, run_experiment
from .matching import load_matrix_csv
from .priors import GammaPrior, clipped_virtual, prior_from_spec
from .rank import crb_outcome, google_vector, optimize_rank_vector, rb_outcome
from .thresholds import compute_prices

PRICE_MECHANISMS = ("vcg", "optimal", "crb", "crb:virtual", "rb:yahoo", "rb:google", "rb:[w1,...]")


class UsageError(Exception):
    pass


def _fmt(x: float) -> str:
    if np.isposinf(x):
        return "+inf"
    if np.isnan(x):
        return "nan"
    return f"{x:.17g}"


def _load_bids(path, n):
    bids = load_matrix_csv(path).ravel()
    if bids.shape != (n,):
        raise UsageError(f"{path}: expected {n} bids, got {bids.size}")
    return bids


def _prior(args):
    if args.prior is None:
        return GammaPrior(5.0, 1.0)
    return prior_from_spec(json.loads(args.prior))


def _single_outcome(name, c, bids, prior):
    """(matching, value-scale thresholds or None, PriceSchedule, payments) for a one-shot run."""
    n = c.shape[0]
    if name == "vcg":
        out = compute_prices(c, bids)
        return out.matching, out.thresholds, out.prices, out.payments.T
    if name == "optimal":
        out = compute_prices(c, bids, [clipped_virtual(prior)] * n)
        return out.matching, out.thresholds, out.prices, out.payments.T
    if name in ("crb", "crb:values", "crb:virtual"):
        tr = [clipped_virtual(prior)] * n if name == "crb:virtual" else None
        out = crb_outcome(c, bids, tr)
        return out.matching, out.extra["thresholds"], out.prices, out.payments.T
    base, _, opt = name.partition(":")
    if base == "rb":
        if opt in ("", "yahoo"):
            w = np.ones(n)
        elif opt == "google":
            w = google_vector(c)
        else:
            try:
                w = np.asarray(json.loads(opt), dtype=float)
            except json.JSONDecodeError as exc:
                raise UsageError(f"bad rank vector {opt!r}") from exc
        out = rb_outcome(c, bids, w)
        return out.matching, None, out.prices, out.payments.T
    raise UsageError(f"unknown mechanism {name!r}; choose from {', '.join(PRICE_MECHANISMS)}")


def _open_out(path):
    if path is None:
        return sys.stdout
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    return open(path, "w", newline="", encoding="utf-8")


def cmd_price(args) -> int:
    c = load_matrix_csv(args.ctr)
    bids = _load_bids(args.bids, c.shape[0])
    matching, _, prices, T = _single_outcome(args.mechanism, c, bids, _prior(args))
    m = c.shape[1]
    fh = _open_out(args.out)
    try:
        out = csv.writer(fh, lineterminator="\n")
        out.writerow(["bidder", "slot", "payment"] + [f"price_{j + 1}" for j in range(m)])
        for i in range(c.shape[0]):
            j = matching.slot_of(i)
            out.writerow([i + 1, 0 if j is None else j + 1, _fmt(T[i])] + [_fmt(p) for p in prices.p[i]])
    finally:
        if fh is not sys.stdout:
            fh.close()
    return 0


def cmd_thresholds(args) -> int:
    c = load_matrix_csv(args.ctr)
    bids = _load_bids(args.bids, c.shape[0])
    _, a, _, _ = _single_outcome(args.mechanism, c, bids, _prior(args))
    if a is None:
        raise UsageError(f"{args.mechanism} does not expose thresholds; use vcg, optimal or crb")
    fh = _open_out(args.out)
    try:
        out = csv.writer(fh, lineterminator="\n")
        out.writerow(["bidder"] + [f"slot_{j + 1}" for j in range(c.shape[1])])
        for i, row in enumerate(a):
            out.writerow([i + 1] + [_fmt(x) for x in row])
    finally:
        if fh is not sys.stdout:
            fh.close()
    return 0


def _config(args) -> ExperimentConfig:
    if args.config is None:
        raise UsageError("--config is required")
    cfg = ExperimentConfig.from_json(args.config)
    if args.seed is not None:
        cfg.seed = args.seed
    if args.samples is not None:
        if args.samples < 1:
            raise UsageError("--samples must be positive")
        cfg.samples = args.samples
    if getattr(args, "mechanism", None):
        cfg.mechanisms = args.mechanism
        cfg.__post_init__()
    return cfg


def cmd_experiment(args) -> int:
    cfg = _config(args)
    if args.out is not None:
        out = Path(args.out)
        cfg.output = out / f"{Path(args.config).stem}.csv" if out.suffix.lower() != ".csv" else out
    table = run_experiment(cfg)
    print(f"{'mechanism':28s} {'revenue':>12s} {'efficiency':>12s}")
    for name in cfg.mechanisms:
        print(f"{name:28s} {table.mean(name, 'revenue'):12.4f} {table.mean(name, 'efficiency'):12.4f}")
    if cfg.output is not None:
        print(f"wrote {cfg.output}")
    return 0


def cmd_audit(args) -> int:
    if args.trials < 1:
        raise UsageError("--trials must be positive")
    mechs = standard_mechanisms(args.n, args.m, args.seed)
    mechs["first_price"] = first_price_strawman()
    if args.mechanism not in mechs:
        raise UsageError(f"unknown mechanism {args.mechanism!r}; choose from {', '.join(mechs)}")
    mech = mechs[args.mechanism]
    rng = np.random.default_rng(args.seed)
    c = random_instance(rng, args.n, args.m)
    profiles = random_profiles(rng, mech, args.n, args.m, args.trials)
    report = audit_ic(mech, c, profiles, grid_points=args.grid)
    text = report.to_json()
    if args.out is not None:
        Path(args.out).parent.mkdir(parents=True, exist_ok=True)
        Path(args.out).write_text(text + "\n", encoding="utf-8")
    print(text)
    return 0 if report.passed else 1


def cmd_rankopt(args) -> int:
    if args.config is not None:
        cfg = _config(args)
        c, priors, N, seed = cfg.ctr, cfg.priors, cfg.samples, cfg.seed
    elif args.ctr is not None:
        c = load_matrix_csv(args.ctr)
        priors = [_prior(args)] * c.shape[0]
        N = 10000 if args.samples is None else args.samples
        seed = 0 if args.seed is None else args.seed
    else:
        raise UsageError("need --config or --ctr")
    V, _ = draw_profiles(priors, N, seed)
    res = optimize_rank_vector(c, V, args.objective, seed=seed)
    print(json.dumps({"objective": args.objective, "value": res.objective,
                      "weights": res.w.tolist(), "evaluations": res.evaluations}, indent=2))
    return 0


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        sys.exit(2)


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="adauction", description="Ad-slot auction mechanisms: pricing, experiments, IC audits.")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def one_shot(name, helptext):
        q = sub.add_parser(name, help=helptext)
        q.add_argument("--ctr", required=True, help="CTR matrix CSV (row = bidder)")
        q.add_argument("--bids", required=True, help="bids CSV, one value per bidder")
        q.add_argument("--mechanism", default="vcg", help=", ".join(PRICE_MECHANISMS))
        q.add_argument("--prior", help='prior JSON for virtual values, e.g. {"kind": "gamma", "shape": 5}')
        q.add_argument("--out", help="output CSV (default stdout)")
        return q

    one_shot("price", "allocation, payments and per-click prices").set_defaults(func=cmd_price)
    one_shot("thresholds", "per-bidder slot-or-better thresholds").set_defaults(func=cmd_thresholds)

    q = sub.add_parser("experiment", help="Monte Carlo run from a JSON config")
    q.add_argument("--config", required=True)
    q.add_argument("--seed", type=int)
    q.add_argument("--samples", type=int)
    q.add_argument("--mechanism", action="append", help="override the configured mechanisms (repeatable)")
    q.add_argument("--out", help="output directory or .csv path")
    q.set_defaults(func=cmd_experiment)

    q = sub.add_parser("audit", help="IC audit of a shipped mechanism on random profiles; JSON report")
    q.add_argument("--mechanism", default="crb")
    q.add_argument("--trials", type=int, default=100)
    q.add_argument("--seed", type=int, default=0)
    q.add_argument("--n", type=int, default=4, help="bidders")
    q.add_argument("--m", type=int, default=3, help="slots")
    q.add_argument("--grid", type=int, default=21, help="misreport grid points")
    q.add_argument("--out", help="also write the JSON report here")
    q.set_defaults(func=cmd_audit)

    q = sub.add_parser("rankopt", help="optimize a rank vector on sampled values")
    q.add_argument("--config")
    q.add_argument("--ctr")
    q.add_argument("--prior")
    q.add_argument("--seed", type=int)
    q.add_argument("--samples", type=int)
    q.add_argument("--objective", choices=("revenue", "efficiency"), default="revenue")
    q.set_defaults(func=cmd_rankopt)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (UsageError, ValueError, OSError, KeyError) as exc:
        print(f"adauction {args.command}: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
