"""Monte Carlo comparison of mechanisms on common sampled profiles.

Sample t draws from its own Philox stream keyed by (seed, t): first one value
per bidder, then (slotted runs) one depth per bidder.  Every mechanism in a
run sees the same profiles.
"""
from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .matching import check_ctr, load_matrix_csv
from .priors import UniformIntPrior, clipped_virtual, empirical_virtual, prior_from_spec
from .rank import crb_allocation, crb_thresholds, google_vector, optimize_rank_vector, rb_sample_metrics
from .slotted import value_free_side_payment
from .thresholds import (
    IdentityTransform,
    bidder_lines,
    envelope_thresholds,
    monotone_allocation,
    slot_or_better,
    threshold_prices_array,
    transformed_thresholds,
    _eligibility_mask,
)

__all__ = [
    "ExperimentConfig",
    "ResultsTable",
    "SampleResults",
    "draw_profiles",
    "evaluate_monotone",
    "evaluate_crb",
    "evaluate_rb",
    "run_experiment",
    "MECHANISM_KINDS",
]

MECHANISM_KINDS = (
    "vcg",
    "optimal",
    "optimal:empirical",
    "rb:yahoo",
    "rb:google",
    "rb:optimized",
    "rb:optimized_revenue",
    "rb:optimized_efficiency",
    "crb:values",
    "crb:virtual",
    "crb:empirical",
    "slotted_vcg",
    "slotted_pointwise",
    "slotted_pointwise:empirical",
    "slotted_pointwise:value_free",
    "slotted_crb",
    "slotted_crb:values",
    "slotted_crb:empirical",
)


@dataclass
class ExperimentConfig:
    ctr: np.ndarray
    priors: list
    samples: int
    seed: int
    mechanisms: list
    objective: str = "revenue"
    slot_prior: UniformIntPrior | None = None
    output: Path | None = None

    def __post_init__(self):
        self.ctr = check_ctr(self.ctr)
        if self.samples < 1:
            raise ValueError("need at least one sample")
        if not self.mechanisms:
            raise ValueError("no mechanisms configured")
        if len(self.priors) != self.ctr.shape[0]:
            raise ValueError("need one prior per bidder")
        if self.objective not in ("revenue", "efficiency"):
            raise ValueError(f"unknown objective {self.objective!r}")
        for name in self.mechanisms:
            _parse_mechanism(name)
            if name.startswith("slotted") and self.slot_prior is None:
                raise ValueError(f"{name} needs a slot_prior")

    @classmethod
    def from_dict(cls, d: dict, base_dir=None) -> "ExperimentConfig":
        if "ctr" in d:
            ctr = np.asarray(d["ctr"], dtype=float)
        elif "ctr_csv" in d:
            path = Path(d["ctr_csv"])
            if base_dir is not None and not path.is_absolute():
                path = Path(base_dir) / path
            ctr = load_matrix_csv(path)
        else:
            raise ValueError("config needs 'ctr' or 'ctr_csv'")
        n = ctr.shape[0]
        if "priors" in d:
            priors = [prior_from_spec(p, base_dir) for p in d["priors"]]
        elif "prior" in d:
            priors = [prior_from_spec(d["prior"], base_dir)] * n
        else:
            raise ValueError("config needs 'priors' or 'prior'")
        slot_prior = prior_from_spec(d["slot_prior"]) if d.get("slot_prior") else None
        if slot_prior is not None and not isinstance(slot_prior, UniformIntPrior):
            raise ValueError("slot_prior must be of kind uniform_int")
        out = d.get("output")
        return cls(
            ctr=ctr,
            priors=priors,
            samples=int(d.get("samples", 10000)),
            seed=int(d.get("seed", 0)),
            mechanisms=list(d.get("mechanisms", [])),
            objective=d.get("objective", "revenue"),
            slot_prior=slot_prior,
            output=None if out is None else Path(out),
        )

    @classmethod
    def from_json(cls, path) -> "ExperimentConfig":
        path = Path(path)
        with open(path, encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh), path.parent)


def _parse_mechanism(name: str):
    base, _, opt = name.partition(":")
    if name not in MECHANISM_KINDS and not (base == "rb" and opt.startswith("[")):
        raise ValueError(f"unknown mechanism {name!r}; choose from {', '.join(MECHANISM_KINDS)} or rb:[w1,...]")
    return base, opt


@dataclass
class SampleResults:
    """Per-sample outcome arrays (rows = samples)."""

    payments: np.ndarray  # N x n
    value: np.ndarray  # N x n realized value
    slot_prices: np.ndarray  # N x m per-click price paid, nan when the slot is empty
    side: np.ndarray | None = None  # N x n
    extra: dict = field(default_factory=dict)

    @property
    def revenue(self) -> np.ndarray:
        return self.payments.sum(1)

    @property
    def efficiency(self) -> np.ndarray:
        return self.value.sum(1)


def draw_profiles(priors, n_samples: int, seed: int, slot_prior=None):
    """Values (N x n) and depths (N x n or None), one counter-keyed stream per sample."""
    n = len(priors)
    V = np.empty((n_samples, n))
    K = None if slot_prior is None else np.empty((n_samples, n), dtype=int)
    for t in range(n_samples):
        rng = np.random.Generator(np.random.Philox(np.random.SeedSequence([seed, t])))
        for i, pr in enumerate(priors):
            V[t, i] = pr.sample(rng)
        if K is not None:
            K[t] = slot_prior.sample(rng, n)
    return V, K


def _inverse_batch(transforms, Z):
    """Apply each bidder's inverse along axis 1 of Z (N x n x ...)."""
    A = np.empty_like(Z)
    for i, tr in enumerate(transforms):
        A[:, i] = np.asarray(tr.inverse(Z[:, i]), dtype=float)
    return np.maximum(A, 0.0)


def _forward_batch(transforms, V):
    return np.column_stack([np.asarray(tr.forward(V[:, i]), dtype=float) for i, tr in enumerate(transforms)])


def _surplus_by_depth(c, A, V):
    """Nominal surplus for thresholds A (N x n x D x m) at values V (N x n)."""
    cp = np.hstack([c, np.zeros((c.shape[0], 1))])
    steps = cp[:, :-1] - cp[:, 1:]
    gain = np.where(np.isfinite(A), np.maximum(V[:, :, None, None] - A, 0.0), 0.0)
    return np.einsum("nj,sndj->snd", steps, gain)


def _collect(c, slots, V, K, A_true, U=None, A_depth=None, side_rule="printed"):
    N, n = V.shape
    m = c.shape[1]
    rows = np.arange(N)[:, None]
    bid = np.arange(n)[None, :]
    assigned = slots >= 0
    jj = np.where(assigned, slots, 0)
    clicks = np.where(assigned, c[bid, jj], 0.0)
    if K is not None:
        clicks = np.where(assigned & (jj < K), clicks, 0.0)
    P = threshold_prices_array(c, A_true)
    paid = np.where(assigned, P[rows, bid, jj], np.nan)
    value = clicks * V
    side = None
    if U is None:
        payments = np.where(assigned & (clicks > 0), clicks * paid, 0.0)
    else:
        depth = np.arange(U.shape[2])[None, None, :]
        nominal = np.take_along_axis(U, (K - 1)[:, :, None], axis=2)[:, :, 0]
        if side_rule == "printed":
            best = np.where(depth < K[:, :, None], U, -np.inf).max(axis=2)
            side = np.maximum(best - nominal, 0.0)
        else:
            side = np.zeros((N, n))
            for s in range(N):
                for i in range(n):
                    side[s, i] = value_free_side_payment(c[i], A_depth[s, i, : K[s, i]])
        payments = value - nominal - side
    slot_prices = np.full((N, m), np.nan)
    for s in range(N):
        for i in range(n):
            if assigned[s, i]:
                slot_prices[s, slots[s, i]] = paid[s, i]
    return SampleResults(payments, value, slot_prices, side)


def evaluate_monotone(c, V, transforms, K=None, side_rule: str = "printed") -> SampleResults:
    """Monotone maximizer (VCG / optimal / slotted pointwise) on every sample row."""
    c = np.asarray(c, dtype=float)
    N, n = V.shape
    m = c.shape[1]
    Z = _forward_batch(transforms, V)
    if np.any(Z < 0):
        raise ValueError("transformed bids must be nonnegative")
    slots = np.empty((N, n), dtype=int)
    if K is None:
        Zt = np.empty((N, n, m))
        for s in range(N):
            slots[s] = monotone_allocation(c, Z[s]).bidder_slots()
            Zt[s] = transformed_thresholds(c, Z[s])
        return _collect(c, slots, V, None, _inverse_batch(transforms, Zt))
    Zt = np.full((N, n, m, m), np.inf)
    for s in range(N):
        k = K[s]
        slots[s] = monotone_allocation(c, Z[s], k).bidder_slots()
        mask = _eligibility_mask(k, n, m)
        for i in range(n):
            w0, wj = bidder_lines(c, i, Z[s], mask)
            for d in range(1, k[i] + 1):
                Zt[s, i, d - 1] = slot_or_better(envelope_thresholds(c[i], w0, wj, d))
    A = _inverse_batch(transforms, Zt)
    A_true = np.take_along_axis(A, (K - 1)[:, :, None, None], axis=2)[:, :, 0]
    U = _surplus_by_depth(c, A, V)
    return _collect(c, slots, V, K, A_true, U, A, side_rule)


def evaluate_crb(c, V, transforms, K=None) -> SampleResults:
    """CRB (or slotted CRB with depths K) on every sample row."""
    c = np.asarray(c, dtype=float)
    N, n = V.shape
    m = c.shape[1]
    Z = _forward_batch(transforms, V)
    slots = np.empty((N, n), dtype=int)
    depth_count = 1 if K is None else m
    Zt = np.full((N, n, depth_count, m), np.inf)
    for s in range(N):
        k = None if K is None else K[s]
        slots[s] = crb_allocation(c, Z[s], k).bidder_slots()
        for i in range(n):
            if k is None:
                Zt[s, i, 0] = crb_thresholds(c, Z[s], i)
            else:
                for d in range(1, k[i] + 1):
                    Zt[s, i, d - 1] = crb_thresholds(c, Z[s], i, k, own_eligible=d)
    A = _inverse_batch(transforms, Zt)
    if K is None:
        return _collect(c, slots, V, None, A[:, :, 0])
    A_true = np.take_along_axis(A, (K - 1)[:, :, None, None], axis=2)[:, :, 0]
    return _collect(c, slots, V, K, A_true, _surplus_by_depth(c, A, V), A)


def evaluate_rb(c, V, w) -> SampleResults:
    metrics = rb_sample_metrics(c, V, w)
    return SampleResults(metrics.payments, metrics.surplus + metrics.payments, metrics.slot_prices)


@dataclass
class ResultsTable:
    """Rows of (mechanism, metric, index, mean, stderr); index 0 marks a total."""

    rows: list = field(default_factory=list)
    samples: dict = field(default_factory=dict)  # mechanism -> SampleResults

    def add(self, mechanism, metric, index, data=None, mean=None, stderr=None):
        if data is not None:
            x = np.asarray(data, dtype=float)
            x = x[~np.isnan(x)]
            mean = float(x.mean()) if x.size else float("nan")
            stderr = float(x.std(ddof=1) / np.sqrt(x.size)) if x.size > 1 else float("nan")
        self.rows.append((mechanism, metric, int(index), float(mean), float(stderr)))

    def get(self, mechanism, metric, index=0) -> tuple[float, float]:
        for row in self.rows:
            if row[0] == mechanism and row[1] == metric and row[2] == index:
                return row[3], row[4]
        raise KeyError((mechanism, metric, index))

    def mean(self, mechanism, metric, index=0) -> float:
        return self.get(mechanism, metric, index)[0]

    def write_csv(self, path):
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", newline="", encoding="utf-8") as fh:
            out = csv.writer(fh, lineterminator="\n")
            out.writerow(["mechanism", "metric", "index", "mean", "stderr"])
            for mech, metric, idx, mean, se in self.rows:
                out.writerow([mech, metric, idx, f"{mean:.17g}", f"{se:.17g}"])


def _transforms_for(option, priors, V, n):
    if option in ("values",):
        return [IdentityTransform()] * n
    if option == "empirical":
        return [clipped_virtual(empirical_virtual(V[:, i])) for i in range(n)]
    return [clipped_virtual(p) for p in priors]


def _evaluate(name, cfg: ExperimentConfig, V, K):
    c = cfg.ctr
    n = c.shape[0]
    base, opt = _parse_mechanism(name)
    extra = {}
    if base == "vcg":
        res = evaluate_monotone(c, V, [IdentityTransform()] * n)
    elif base == "optimal":
        res = evaluate_monotone(c, V, _transforms_for(opt or "virtual", cfg.priors, V, n))
    elif base == "crb":
        res = evaluate_crb(c, V, _transforms_for(opt, cfg.priors, V, n))
    elif base == "rb":
        if opt == "yahoo":
            w = np.ones(n)
        elif opt == "google":
            w = google_vector(c)
        elif opt.startswith("optimized"):
            objective = opt.partition("_")[2] or cfg.objective
            w = optimize_rank_vector(c, V, objective, seed=cfg.seed).w
        else:
            w = np.asarray(json.loads(opt), dtype=float)
            if w.shape != (n,) or np.any(w <= 0):
                raise ValueError(f"{name}: need {n} positive weights")
        res = evaluate_rb(c, V, w)
        extra["rank_weight"] = w
    elif base == "slotted_vcg":
        res = evaluate_monotone(c, V, [IdentityTransform()] * n, K)
    elif base == "slotted_pointwise":
        rule = "value_free" if opt == "value_free" else "printed"
        tr = _transforms_for("empirical" if opt == "empirical" else "virtual", cfg.priors, V, n)
        res = evaluate_monotone(c, V, tr, K, side_rule=rule)
    elif base == "slotted_crb":
        res = evaluate_crb(c, V, _transforms_for(opt or "virtual", cfg.priors, V, n), K)
    else:  # pragma: no cover - guarded by _parse_mechanism
        raise ValueError(name)
    res.extra.update(extra)
    return res


def run_experiment(config: ExperimentConfig, write: bool = True) -> ResultsTable:
    V, K = draw_profiles(config.priors, config.samples, config.seed, config.slot_prior)
    table = ResultsTable()
    for name in config.mechanisms:
        res = _evaluate(name, config, V, K)
        table.samples[name] = res
        table.add(name, "revenue", 0, res.revenue)
        table.add(name, "efficiency", 0, res.efficiency)
        for i in range(V.shape[1]):
            table.add(name, "surplus", i + 1, res.value[:, i] - res.payments[:, i])
        for j in range(config.ctr.shape[1]):
            table.add(name, "price", j + 1, res.slot_prices[:, j])
        if res.side is not None:
            table.add(name, "side_payment", 0, res.side.sum(1))
            for i in range(V.shape[1]):
                table.add(name, "side_payment", i + 1, res.side[:, i])
            table.add(name, "revenue_bound", 0, res.revenue + res.side.sum(1))
        if "rank_weight" in res.extra:
            for i, w in enumerate(res.extra["rank_weight"]):
                table.add(name, "rank_weight", i + 1, mean=w, stderr=0.0)
    if write and config.output is not None:
        table.write_csv(config.output)
    return table
