"""Slot thresholds and the unique prices of monotone-maximizer allocations.

For a fixed bidder i0 and fixed rivals, the optimal assignment value as a
function of i0's transformed bid lambda is the upper envelope of m + 1
lines: ``lambda * c[i0, j] + W_j`` (i0 in slot j, rivals best on the other
slots) and the constant ``W_0`` (i0 unassigned).  Walking that envelope from
lambda = 0+ gives every breakpoint, i.e. the thresholds.  Each ``W`` is one
exact assignment solve.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .matching import Matching, _solve_strict, best_value, check_ctr, max_weight_matching
from .pricing import PaymentVector, PriceSchedule, payments_from_prices

__all__ = [
    "MonotoneTransform",
    "IdentityTransform",
    "FunctionTransform",
    "KnotTransform",
    "ClippedTransform",
    "MonotoneOutcome",
    "bidder_lines",
    "envelope_thresholds",
    "optmatch_thresholds",
    "bisection_thresholds_oracle",
    "slot_or_better",
    "threshold_prices",
    "strip_prices",
    "prices_from_thresholds",
    "nominal_surplus_from_thresholds",
    "transformed_thresholds",
    "monotone_allocation",
    "threshold_prices_array",
    "compute_prices",
]

_MAX_BISECT = 2100


class MonotoneTransform:
    """Nondecreasing map from values to the allocation scale.

    ``inverse`` is the right-continuous generalized inverse
    ``inf{x : forward(x) > y}``, so a flat stretch maps back to its right end.
    """

    lo = 0.0

    def forward(self, x):
        raise NotImplementedError

    def inverse(self, y):
        raise NotImplementedError

    def __call__(self, x):
        return self.forward(x)


class IdentityTransform(MonotoneTransform):
    def forward(self, x):
        return np.asarray(x, dtype=float) if np.ndim(x) else float(x)

    def inverse(self, y):
        return np.asarray(y, dtype=float) if np.ndim(y) else float(y)


class FunctionTransform(MonotoneTransform):
    """Wraps a vectorized nondecreasing function; inverse by bisection."""

    def __init__(self, fn, lo=0.0, hi_guess=1.0):
        self.fn = fn
        self.lo = float(lo)
        self.hi_guess = float(hi_guess)

    def forward(self, x):
        return self.fn(x)

    def inverse(self, y):
        y = np.asarray(y, dtype=float)
        scalar = y.ndim == 0
        y = np.atleast_1d(y)
        out = np.full(y.shape, np.inf)
        finite = np.isfinite(y)
        if finite.any():
            out[finite] = _bisect_right(self.fn, y[finite], self.lo, self.hi_guess)
        return float(out[0]) if scalar else out


def _bisect_right(fn, y, lo, hi_guess):
    """Vectorized inf{x >= lo : fn(x) > y}."""
    lo_arr = np.full(y.shape, lo, dtype=float)
    below = np.asarray(fn(lo_arr + 0.0)) > y
    hi = np.full(y.shape, max(hi_guess, lo + 1.0))
    span = hi - lo
    for _ in range(200):
        bad = np.asarray(fn(hi)) <= y
        if not bad.any():
            break
        span = np.where(bad, span * 2.0, span)
        hi = np.where(bad, lo + span, hi)
    # Run to float resolution: each entry then ends on the same bracket
    # whatever else is in the batch.
    a, b = lo_arr.copy(), hi
    for _ in range(_MAX_BISECT):
        mid = 0.5 * (a + b)
        if np.all((mid == a) | (mid == b)):
            break
        up = np.asarray(fn(mid)) > y
        b = np.where(up, mid, b)
        a = np.where(up, a, mid)
    return np.where(below, lo, b)


class KnotTransform(MonotoneTransform):
    """Piecewise-linear nondecreasing map through knots, slope 1 outside them."""

    def __init__(self, xs, ys, lo=-np.inf):
        xs = np.asarray(xs, dtype=float)
        ys = np.asarray(ys, dtype=float)
        order = np.argsort(xs, kind="stable")
        xs, ys = xs[order], ys[order]
        if np.any(np.diff(ys) < -1e-12):
            raise ValueError("knot values must be nondecreasing")
        # Collapse repeated abscissae, keeping the right-continuous value.
        keep = np.append(np.diff(xs) > 0, True)
        self.xs, self.ys = xs[keep], np.maximum.accumulate(ys[keep])
        self.lo = float(lo)

    def forward(self, x):
        x = np.asarray(x, dtype=float)
        xs, ys = self.xs, self.ys
        out = np.interp(x, xs, ys)
        out = np.where(x > xs[-1], ys[-1] + (x - xs[-1]), out)
        out = np.where(x < xs[0], ys[0] - (xs[0] - x), out)
        return float(out) if out.ndim == 0 else out

    def inverse(self, y):
        y = np.asarray(y, dtype=float)
        xs, ys = self.xs, self.ys
        k = np.searchsorted(ys, y, side="right")
        inside = (k > 0) & (k < len(ys))
        kk = np.clip(k, 1, len(ys) - 1)
        x0, x1, y0, y1 = xs[kk - 1], xs[kk], ys[kk - 1], ys[kk]
        with np.errstate(invalid="ignore", divide="ignore"):
            mid = x0 + (y - y0) / (y1 - y0) * (x1 - x0)
        out = np.where(inside, mid, np.where(k == 0, xs[0] - (ys[0] - y), xs[-1] + (y - ys[-1])))
        out = np.where(np.isinf(y) & (y > 0), np.inf, out)
        out = np.maximum(out, self.lo)
        return float(out) if out.ndim == 0 else out


class ClippedTransform(MonotoneTransform):
    """``max(base, 0)``; nonpositive base values carry zero weight."""

    def __init__(self, base: MonotoneTransform):
        self.base = base
        self.lo = base.lo

    def forward(self, x):
        out = np.maximum(self.base.forward(x), 0.0)
        return float(out) if np.ndim(out) == 0 else out

    def inverse(self, y):
        y = np.asarray(y, dtype=float)
        out = np.where(y < 0, self.lo, self.base.inverse(np.maximum(y, 0.0)))
        return float(out) if out.ndim == 0 else out


def bidder_lines(c, i0: int, z, allowed=None):
    """Rival surplus W_0 (i0 unassigned) and W_j (slot j reserved for i0)."""
    c = np.asarray(c, dtype=float)
    n, m = c.shape
    z = np.asarray(z, dtype=float)
    rows = [k for k in range(n) if k != i0]
    w = c[rows] * z[rows, None]
    a = None if allowed is None else np.asarray(allowed, dtype=bool)[rows]
    w0 = best_value(w, a, cover=False)
    wj = np.empty(m)
    for j in range(m):
        cols = [s for s in range(m) if s != j]
        wj[j] = best_value(w[:, cols], None if a is None else a[:, cols], cover=False)
    return w0, wj


def envelope_thresholds(c_row, w0: float, wj, eligible=None) -> np.ndarray:
    """Raw thresholds inf{lambda > 0 : slot j is optimal for the bidder}.

    Lines tied everywhere resolve towards the lower slot index, and the
    unassigned option loses every exact tie.  Slots never on the envelope get
    ``inf``.
    """
    c_row = np.asarray(c_row, dtype=float)
    m = len(c_row)
    if eligible is None:
        eligible = m
    # (slope, intercept, preference, label); label -1 = unassigned
    lines = [(c_row[j], float(wj[j]), -j, j) for j in range(min(eligible, m))]
    lines.append((0.0, float(w0), -(m + 1), -1))
    out = np.full(m, np.inf)
    cur = max(lines, key=lambda ln: (ln[1], ln[0], ln[2]))
    lam = 0.0
    if cur[3] >= 0:
        out[cur[3]] = 0.0
    while True:
        best = None
        for ln in lines:
            if ln[0] <= cur[0]:
                continue
            x = max(lam, (cur[1] - ln[1]) / (ln[0] - cur[0]))
            key = (x, -ln[0], -ln[2])
            if best is None or key < best[0]:
                best = (key, ln)
        if best is None:
            break
        lam, cur = best[0][0], best[1]
        if cur[3] >= 0 and np.isinf(out[cur[3]]):
            out[cur[3]] = lam
    return out


def optmatch_thresholds(c, i0: int, z_minus, eligible=None, allowed=None) -> np.ndarray:
    """Per-slot thresholds for bidder i0 on the transformed scale.

    ``z_minus`` holds the other bidders' transformed bids in index order.
    ``eligible`` limits i0 to its first slots; ``allowed`` masks rival edges.
    """
    c = np.asarray(c, dtype=float)
    n = c.shape[0]
    z_minus = np.asarray(z_minus, dtype=float)
    if not 0 <= i0 < n:
        raise IndexError(f"bidder {i0} out of range")
    if z_minus.shape != (n - 1,):
        raise ValueError(f"expected {n - 1} rival bids, got {z_minus.shape}")
    if np.any(z_minus < 0):
        raise ValueError("rival transformed bids must be nonnegative")
    z = np.insert(z_minus, i0, 0.0)
    w0, wj = bidder_lines(c, i0, z, allowed)
    return envelope_thresholds(c[i0], w0, wj, eligible)


def slot_or_better(raw) -> np.ndarray:
    """Threshold for winning slot j or a better one: running minimum over slots."""
    return np.minimum.accumulate(np.asarray(raw, dtype=float))


def bisection_thresholds_oracle(c, i0: int, z_minus, tol: float = 1e-11, grid: int = 64) -> np.ndarray:
    """Slot-or-better thresholds found by re-solving the full assignment.

    Independent of the envelope: every probe is a fresh max-weight
    assignment with bidder i0 bidding lambda.  Probes skip the solver's
    tie band, which would otherwise blur the crossing by about 1e-12 of the
    total surplus; bisection never lands exactly on a tie anyway.
    """
    c = np.asarray(c, dtype=float)
    n, m = c.shape
    z = np.insert(np.asarray(z_minus, dtype=float), i0, 0.0)
    row = c[i0]
    diffs = np.abs(np.diff(np.append(row, 0.0)))
    gap = diffs[diffs > 0].min() if np.any(diffs > 0) else 1.0
    lam_max = 4.0 * (1.0 + float(np.sum(c * z[:, None]))) / gap

    def slot_at(lam):
        zz = z.copy()
        zz[i0] = lam
        s2b, _ = _solve_strict(c * zz[:, None], np.ones((n, m), dtype=bool))
        return s2b.index(i0) if i0 in s2b else m

    lams = np.concatenate([[1e-13], np.geomspace(1e-9, lam_max, grid)])
    slots = [slot_at(x) for x in lams]
    out = np.full(m, np.inf)
    for j in range(m):
        hit = [k for k, s in enumerate(slots) if s <= j]
        if not hit:
            continue
        k = hit[0]
        if k == 0:
            out[j] = 0.0
            continue
        lo, hi = lams[k - 1], lams[k]
        while hi - lo > tol:
            mid = 0.5 * (lo + hi)
            if slot_at(mid) <= j:
                hi = mid
            else:
                lo = mid
        out[j] = hi
    return out


def threshold_prices(c_row, a_row) -> list:
    """p_j = (1/c_j) sum_{k>=j} (a_k - a_{k+1})(c_j - c_{k+1}), a_{m+1} = c_{m+1} = 0.

    Plain Python arithmetic so exact number types stay exact.
    """
    m = len(c_row)
    c = list(c_row) + [0]
    a = list(a_row) + [0]
    out = []
    for j in range(m):
        if a[j] == np.inf:
            out.append(np.inf)
            continue
        if c[j] == 0:
            out.append(0 * c[j])
            continue
        acc = 0
        for k in range(j, m):
            acc += (a[k] - a[k + 1]) * (c[j] - c[k + 1])
        out.append(acc / c[j])
    return out


def strip_prices(c_row, a_row) -> list:
    """Same prices summed by horizontal strips: (1/c_j) sum_{k>=j} (c_k - c_{k+1}) a_k."""
    m = len(c_row)
    c = list(c_row) + [0]
    a = list(a_row)
    out = []
    for j in range(m):
        if a[j] == np.inf:
            out.append(np.inf)
            continue
        if c[j] == 0:
            out.append(0 * c[j])
            continue
        acc = 0
        for k in range(j, m):
            acc += (c[k] - c[k + 1]) * a[k]
        out.append(acc / c[j])
    return out


def _check_order(a):
    a = np.asarray(a, dtype=float)
    if np.any(a < 0):
        raise ValueError("thresholds must be nonnegative")
    with np.errstate(invalid="ignore"):
        bad = np.diff(a, axis=-1) > 0
    if np.any(bad):
        raise ValueError("thresholds must be nonincreasing across slots")
    return a


def prices_from_thresholds(c, a) -> PriceSchedule:
    """Per-click prices from ordered thresholds, cross-checked by strip summation."""
    c = np.asarray(c, dtype=float)
    a = _check_order(a)
    p = np.empty_like(c)
    for i in range(c.shape[0]):
        p_step = threshold_prices(c[i], a[i])
        p_strip = strip_prices(c[i], a[i])
        for j, (x, y) in enumerate(zip(p_step, p_strip)):
            if not (x == y or abs(x - y) <= 1e-12 * max(1.0, abs(x))):
                raise RuntimeError(f"price rearrangement mismatch at ({i}, {j}): {x} vs {y}")
        p[i] = p_step
    return PriceSchedule(p)


def nominal_surplus_from_thresholds(c_row, a_row, v: float) -> float:
    """Integral of allocated clicks over [0, v]: sum_j (c_j - c_{j+1}) (v - a_j)^+."""
    c = np.append(np.asarray(c_row, dtype=float), 0.0)
    a = np.asarray(a_row, dtype=float)
    steps = c[:-1] - c[1:]
    gain = np.where(np.isfinite(a), np.maximum(v - a, 0.0), 0.0)
    return float(np.sum(steps * gain))


@dataclass
class MonotoneOutcome:
    matching: Matching
    thresholds: np.ndarray  # value-scale, slot-or-better, n x m
    prices: PriceSchedule
    payments: PaymentVector
    transformed: np.ndarray  # z_i = psi_i(v_i)

    @property
    def revenue(self) -> float:
        return float(np.sum(self.payments.T))


def _as_transforms(transforms, n):
    if transforms is None:
        return [IdentityTransform()] * n
    if isinstance(transforms, MonotoneTransform):
        return [transforms] * n
    transforms = list(transforms)
    if len(transforms) != n:
        raise ValueError("need one transform per bidder")
    return transforms


def _eligibility_mask(eligible, n, m):
    if eligible is None:
        return None
    eligible = np.asarray(eligible, dtype=int)
    if eligible.shape != (n,):
        raise ValueError("need one slot count per bidder")
    return np.arange(m)[None, :] < eligible[:, None]


def transformed_thresholds(c, z, eligible=None) -> np.ndarray:
    """n x m slot-or-better thresholds on the transformed scale for every bidder."""
    c = np.asarray(c, dtype=float)
    n, m = c.shape
    allowed = _eligibility_mask(eligible, n, m)
    out = np.empty((n, m))
    for i in range(n):
        w0, wj = bidder_lines(c, i, z, allowed)
        raw = envelope_thresholds(c[i], w0, wj, None if eligible is None else int(eligible[i]))
        out[i] = slot_or_better(raw)
    return out


def monotone_allocation(c, z, eligible=None) -> Matching:
    """Max-weight matching on c_ij z_i, zero-weight bidders left out.

    With depth limits the deleted edges can make full coverage a binding
    constraint, so slots are then allowed to stay empty.
    """
    c = np.asarray(c, dtype=float)
    n, m = c.shape
    z = np.asarray(z, dtype=float)
    mask = _eligibility_mask(eligible, n, m)
    matching, _ = max_weight_matching(c * z[:, None], mask, cover=mask is None)
    return matching.without_empty(lambda b: z[b] > 0)


def threshold_prices_array(c, a) -> np.ndarray:
    """Vectorized per-click prices for threshold arrays of shape (..., n, m)."""
    c = np.asarray(c, dtype=float)
    a = np.asarray(a, dtype=float)
    m = c.shape[1]
    cpad = np.concatenate([c, np.zeros((c.shape[0], 1))], axis=1)
    apad = np.concatenate([a, np.zeros(a.shape[:-1] + (1,))], axis=-1)
    p = np.zeros(np.broadcast_shapes(a.shape, c.shape))
    with np.errstate(invalid="ignore"):
        for j in range(m):
            acc = np.zeros(p.shape[:-1])
            for k in range(j, m):
                acc = acc + (apad[..., k] - apad[..., k + 1]) * (cpad[:, j] - cpad[:, k + 1])
            with np.errstate(divide="ignore"):
                pj = np.where(c[:, j] > 0, acc / np.where(c[:, j] > 0, c[:, j], 1.0), 0.0)
            p[..., j] = np.where(np.isinf(a[..., j]), np.inf, pj)
    return p


def compute_prices(c, v, transforms=None, eligible=None) -> MonotoneOutcome:
    """Allocation maximizing sum c_ij psi_i(v_i) x_ij and its implementing prices.

    A bidder whose transformed bid is zero adds nothing to the objective and
    is left unassigned, which matches its thresholds (psi^{-1}(0) taken
    right-continuously is at least its value).  ``eligible`` (length n,
    slot counts) deletes edges j >= eligible[i] for the slotted model.
    """
    c = check_ctr(c)
    n, m = c.shape
    v = np.asarray(v, dtype=float)
    if v.shape != (n,):
        raise ValueError("need one value per bidder")
    tr = _as_transforms(transforms, n)
    z = np.array([float(t.forward(x)) for t, x in zip(tr, v)])
    if np.any(z < 0):
        raise ValueError("transformed bids must be nonnegative; clip virtual values first")
    matching = monotone_allocation(c, z, eligible)
    zt = transformed_thresholds(c, z, eligible)
    a = np.empty((n, m))
    for i in range(n):
        a[i] = np.asarray(tr[i].inverse(zt[i]), dtype=float)
    a = np.maximum(a, 0.0)
    prices = prices_from_thresholds(c, a)
    return MonotoneOutcome(matching, a, prices, payments_from_prices(c, matching, prices), z)
