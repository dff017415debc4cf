"""Rank-based (RB) and customized rank-based (CRB) allocation with prices."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .matching import Matching, check_ctr
from .pricing import Outcome, PriceSchedule, payments_from_prices
from .thresholds import IdentityTransform, prices_from_thresholds, slot_or_better

__all__ = [
    "RankMetrics",
    "RankOptResult",
    "Example2Analytics",
    "rank_order",
    "rb_outcome",
    "rb_sample_metrics",
    "crb_allocation",
    "crb_thresholds",
    "crb_outcome",
    "google_vector",
    "optimize_rank_vector",
    "example2_analytics",
]


def rank_order(scores) -> np.ndarray:
    """Bidders by decreasing score; equal scores go to the lower index."""
    return np.argsort(-np.asarray(scores, dtype=float), kind="stable")


def google_vector(c) -> np.ndarray:
    c = np.asarray(c, dtype=float)
    return c[:, 0] / c[0, 0]


def rb_outcome(c, v, w) -> Outcome:
    """Slot j to the j-th largest w_i v_i; the prices are the unique IC prices of that rule."""
    c = check_ctr(c)
    n, m = c.shape
    v = np.asarray(v, dtype=float)
    w = np.asarray(w, dtype=float)
    if v.shape != (n,) or w.shape != (n,):
        raise ValueError("need one value and one weight per bidder")
    if np.any(w <= 0):
        raise ValueError("rank weights must be positive")
    gamma = w * v
    order = rank_order(gamma)
    matching = Matching(tuple(int(b) for b in order[:m]), n)
    cpad = np.hstack([c, np.zeros((n, 1))])
    p = np.zeros((n, m))
    for i in range(n):
        rivals = np.sort(np.delete(gamma, i))[::-1]
        rivals = np.append(rivals, np.zeros(max(0, m - rivals.size)))
        for j in range(m):
            if c[i, j] == 0:
                continue
            steps = cpad[i, j:m] - cpad[i, j + 1:m + 1]
            p[i, j] = float(np.sum(steps * rivals[j:m])) / (c[i, j] * w[i])
    prices = PriceSchedule(p)
    return Outcome(matching, payments_from_prices(c, matching, prices), prices)


@dataclass
class RankMetrics:
    """Per-sample RB results (rows = samples)."""

    revenue: np.ndarray
    efficiency: np.ndarray
    payments: np.ndarray  # samples x n
    surplus: np.ndarray  # samples x n
    slot_prices: np.ndarray  # samples x m, per-click price paid in each slot


def rb_sample_metrics(c, values, w) -> RankMetrics:
    """Vectorized RB evaluation over a samples x n value array."""
    c = np.asarray(c, dtype=float)
    n, m = c.shape
    V = np.atleast_2d(np.asarray(values, dtype=float))
    w = np.asarray(w, dtype=float)
    N = V.shape[0]
    gamma = V * w
    order = np.argsort(-gamma, axis=1, kind="stable")
    ranked = np.take_along_axis(gamma, order, axis=1)
    ranked = np.hstack([ranked, np.zeros((N, max(0, m + 1 - n)))])
    cpad = np.hstack([c, np.zeros((n, 1))])
    rows = np.arange(N)
    payments = np.zeros((N, n))
    clicks = np.zeros((N, n))
    slot_prices = np.full((N, m), np.nan)
    for j in range(m):
        b = order[:, j]
        total = np.zeros(N)
        for k in range(j, m):
            total += (cpad[b, k] - cpad[b, k + 1]) * ranked[:, k + 1]
        total /= w[b]
        payments[rows, b] = total
        clicks[rows, b] = c[b, j]
        with np.errstate(divide="ignore", invalid="ignore"):
            slot_prices[:, j] = np.where(c[b, j] > 0, total / c[b, j], np.nan)
    value = clicks * V
    return RankMetrics(payments.sum(1), value.sum(1), payments, value - payments, slot_prices)


@dataclass
class RankOptResult:
    w: np.ndarray
    objective: float
    evaluations: int


def optimize_rank_vector(c, samples, objective: str = "revenue", seed: int = 0,
                         n_random: int = 3, step: float = 0.2, min_step: float = 1e-3) -> RankOptResult:
    """Maximize the sample-average revenue or efficiency over rank vectors with w_1 = 1.

    Multi-start coordinate search in log-weights: starts at w = 1, the Google
    vector and ``n_random`` seeded perturbations of 1; steps halve when a
    full sweep finds no improvement.
    """
    c = check_ctr(c)
    n = c.shape[0]
    V = np.atleast_2d(np.asarray(samples, dtype=float))
    if V.shape[0] < 1 or V.shape[1] != n:
        raise ValueError("samples must be a nonempty array with one column per bidder")
    if n < 2:
        raise ValueError("rank-vector search needs at least two bidders")
    if objective not in ("revenue", "efficiency"):
        raise ValueError(f"unknown objective {objective!r}")
    if np.ptp(V) == 0:
        return RankOptResult(np.ones(n), _rank_objective(c, V, np.ones(n), objective), 1)

    evals = 0

    def f(x):
        nonlocal evals
        evals += 1
        return _rank_objective(c, V, np.exp(np.concatenate([[0.0], x])), objective)

    rng = np.random.default_rng(seed)
    starts = [np.zeros(n - 1), np.log(google_vector(c)[1:])]
    starts += [rng.normal(0.0, 0.3, n - 1) for _ in range(n_random)]
    best_x, best_f = None, -np.inf
    for x in starts:
        fx = f(x)
        h = step
        while h >= min_step:
            improved = False
            for d in range(n - 1):
                for sign in (1.0, -1.0):
                    y = x.copy()
                    y[d] += sign * h
                    fy = f(y)
                    if fy > fx:
                        x, fx, improved = y, fy, True
                        break
            if not improved:
                h /= 2.0
        if fx > best_f:
            best_x, best_f = x, fx
    return RankOptResult(np.exp(np.concatenate([[0.0], best_x])), float(best_f), evals)


def _rank_objective(c, V, w, objective):
    metrics = rb_sample_metrics(c, V, w)
    return float(np.mean(metrics.revenue if objective == "revenue" else metrics.efficiency))


@dataclass(frozen=True)
class Example2Analytics:
    """Closed forms for two bidders, two slots, uniform[0,1] values, w = (1, alpha)."""

    c: np.ndarray
    A: float
    B: float
    alpha_star: float
    alpha_eff: float

    def revenue(self, alpha):
        alpha = np.asarray(alpha, dtype=float)
        A, B = self.A, self.B
        low = A * (alpha / 2.0 - alpha ** 2 / 3.0) + B * alpha / 6.0
        with np.errstate(divide="ignore"):
            high = A / (6.0 * alpha) + B * (1.0 / (2.0 * alpha) - 1.0 / (3.0 * alpha ** 2))
        out = np.where(alpha <= 1.0, low, high)
        return float(out) if out.ndim == 0 else out

    def efficiency(self, alpha):
        alpha = np.asarray(alpha, dtype=float)
        A, B, c = self.A, self.B, self.c
        low = alpha * B / 3.0 - alpha ** 2 * A / 6.0 + 0.5 * (c[1, 1] + c[0, 0])
        with np.errstate(divide="ignore"):
            high = A / (3.0 * alpha) - B / (6.0 * alpha ** 2) + 0.5 * (c[1, 0] + c[0, 1])
        out = np.where(alpha < 1.0, low, high)
        return float(out) if out.ndim == 0 else out


def example2_analytics(c) -> Example2Analytics:
    c = check_ctr(c)
    if c.shape != (2, 2):
        raise ValueError("closed forms need a 2 x 2 CTR matrix")
    A = float(c[0, 0] - c[0, 1])
    B = float(c[1, 0] - c[1, 1])
    if A <= 0:
        raise ValueError("closed forms need c11 > c12")
    alpha_star = (3.0 * A + B) / (4.0 * A) if A >= B else 4.0 * B / (A + 3.0 * B)
    return Example2Analytics(c, A, B, alpha_star, B / A)


def crb_allocation(c, z, eligible=None) -> Matching:
    """Slot by slot, the unassigned eligible bidder with the largest positive c_ij z_i."""
    c = np.asarray(c, dtype=float)
    n, m = c.shape
    z = np.asarray(z, dtype=float)
    k = np.full(n, m) if eligible is None else np.asarray(eligible, dtype=int)
    free = np.ones(n, dtype=bool)
    s2b = []
    for j in range(m):
        score = np.where(free & (k > j), c[:, j] * z, 0.0)
        b = int(np.argmax(score))
        if score[b] > 0:
            s2b.append(b)
            free[b] = False
        else:
            s2b.append(None)
    return Matching(tuple(s2b), n)


def crb_thresholds(c, z, i: int, eligible=None, own_eligible=None) -> np.ndarray:
    """Slot-or-better thresholds of bidder i on the z scale.

    Runs the allocation without bidder i; the raw threshold for slot j is the
    winning rival score there over c_ij (0 when no rival is left).  A
    running minimum then gives thresholds for slot j or better.
    """
    c = np.asarray(c, dtype=float)
    n, m = c.shape
    z = np.asarray(z, dtype=float)
    k = np.full(n, m) if eligible is None else np.asarray(eligible, dtype=int)
    k_own = k[i] if own_eligible is None else own_eligible
    free = np.ones(n, dtype=bool)
    free[i] = False
    raw = np.full(m, np.inf)
    for j in range(m):
        score = np.where(free & (k > j), c[:, j] * z, 0.0)
        b = int(np.argmax(score))
        top = score[b]
        if top > 0:
            free[b] = False
        else:
            top = 0.0
        if j < k_own and c[i, j] > 0:
            raw[j] = top / c[i, j]
    return slot_or_better(raw)


def crb_outcome(c, bids, transforms=None, eligible=None) -> Outcome:
    """CRB on z = psi(bids) with value-scale prices from the bidders' thresholds.

    Without ``transforms`` the bids rank directly (efficiency version).
    ``eligible`` (slot counts) restricts bidder i to slots below eligible[i].
    """
    c = check_ctr(c)
    n, m = c.shape
    bids = np.asarray(bids, dtype=float)
    if bids.shape != (n,):
        raise ValueError("need one bid per bidder")
    if transforms is None:
        tr = [IdentityTransform()] * n
    elif hasattr(transforms, "forward"):
        tr = [transforms] * n
    else:
        tr = list(transforms)
    z = np.array([float(t.forward(b)) for t, b in zip(tr, bids)])
    if np.any(z < 0):
        raise ValueError("transformed bids must be nonnegative")
    matching = crb_allocation(c, z, eligible)
    a = np.empty((n, m))
    for i in range(n):
        a[i] = np.asarray(tr[i].inverse(crb_thresholds(c, z, i, eligible)), dtype=float)
    a = np.maximum(a, 0.0)
    prices = prices_from_thresholds(c, a)
    out = Outcome(matching, payments_from_prices(c, matching, prices), prices)
    out.extra["thresholds"] = a
    out.extra["transformed"] = z
    return out
