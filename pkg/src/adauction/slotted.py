"""Slotted valuations: value v per click for slots up to a private depth k, nothing below.

Bidders can only misreport k downwards.  The pointwise maximizer keeps the
value dimension IC through threshold prices; side payments top each bidder's
surplus up to the best it could get by reporting a shallower depth.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .matching import Matching, check_ctr
from .rank import crb_allocation, crb_thresholds
from .thresholds import (
    _as_transforms,
    bidder_lines,
    envelope_thresholds,
    monotone_allocation,
    nominal_surplus_from_thresholds,
    prices_from_thresholds,
    slot_or_better,
    _eligibility_mask,
)
from .pricing import PriceSchedule

__all__ = [
    "SlottedOutcome",
    "check_depths",
    "slotted_max_surplus",
    "slotted_thresholds_by_depth",
    "nominal_surplus",
    "side_payments",
    "slotted_heuristic_outcome",
    "slotted_crb_outcome",
    "slotted_value",
    "value_free_side_payment",
    "revenue_upper_bound",
]


@dataclass
class SlottedOutcome:
    matching: Matching
    T: np.ndarray
    side: np.ndarray  # side payments, >= 0
    nominal: np.ndarray  # nominal surplus at the reported depth
    prices: PriceSchedule
    thresholds: np.ndarray  # value scale, at the reported depths

    @property
    def revenue(self) -> float:
        return float(np.sum(self.T))


def check_depths(k, n: int, m: int) -> np.ndarray:
    k = np.asarray(k)
    if k.shape != (n,):
        raise ValueError("need one depth per bidder")
    if not np.all(np.equal(np.mod(k, 1), 0)) or np.any(k < 1) or np.any(k > m):
        raise ValueError(f"depths must be integers in 1..{m}")
    return k.astype(int)


def slotted_value(c, v, k, matching: Matching) -> float:
    """Realized surplus: c_ij v_i for each assigned pair within the bidder's depth."""
    c = np.asarray(c, dtype=float)
    total = 0.0
    for j, b in enumerate(matching.slot_to_bidder):
        if b is not None and j < k[b]:
            total += c[b, j] * v[b]
    return total


def _transform_all(tr, v):
    return np.array([float(t.forward(x)) for t, x in zip(tr, v)])


def slotted_max_surplus(c, v, k, transforms=None) -> Matching:
    """Max-weight matching on c_ij psi_i(v_i) with edges beyond each depth deleted."""
    c = check_ctr(c)
    n, m = c.shape
    k = check_depths(k, n, m)
    z = _transform_all(_as_transforms(transforms, n), np.asarray(v, dtype=float))
    return monotone_allocation(c, z, k)


def slotted_thresholds_by_depth(c, z, k, i: int) -> np.ndarray:
    """Slot-or-better thresholds (transformed scale) of bidder i for each report 1..k_i.

    Row d - 1 holds the thresholds when bidder i reports depth d.  Rival
    depths stay at ``k``.
    """
    c = np.asarray(c, dtype=float)
    n, m = c.shape
    w0, wj = bidder_lines(c, i, z, _eligibility_mask(k, n, m))
    return np.array([slot_or_better(envelope_thresholds(c[i], w0, wj, d)) for d in range(1, k[i] + 1)])


def _depth_surplus(c_row, a_by_depth, v):
    return np.array([nominal_surplus_from_thresholds(c_row, a, v) for a in a_by_depth])


def _value_thresholds(tr, zt):
    return np.maximum(np.asarray(tr.inverse(zt), dtype=float), 0.0)


def nominal_surplus(c, v, k, transforms=None) -> np.ndarray:
    """Integral of allocated clicks over [0, v_i] at the reported depth, per bidder."""
    c = check_ctr(c)
    n, m = c.shape
    k = check_depths(k, n, m)
    v = np.asarray(v, dtype=float)
    tr = _as_transforms(transforms, n)
    z = _transform_all(tr, v)
    out = np.zeros(n)
    for i in range(n):
        a = _value_thresholds(tr[i], slotted_thresholds_by_depth(c, z, k, i)[-1])
        out[i] = nominal_surplus_from_thresholds(c[i], a, v[i])
    return out


def side_payments(c, v, k, transforms=None) -> np.ndarray:
    """max over shallower reports of the nominal surplus, minus the truthful one."""
    c = check_ctr(c)
    n, m = c.shape
    k = check_depths(k, n, m)
    v = np.asarray(v, dtype=float)
    tr = _as_transforms(transforms, n)
    z = _transform_all(tr, v)
    out = np.zeros(n)
    for i in range(n):
        a = _value_thresholds(tr[i], slotted_thresholds_by_depth(c, z, k, i))
        u = _depth_surplus(c[i], a, v[i])
        out[i] = max(0.0, u.max() - u[-1])
    return out


def value_free_side_payment(c_row, a_by_depth) -> float:
    """Smallest side payment for the deepest report that does not depend on the own value.

    With s(1) = 0 and s(d) = max_{e<d} [s(e) + sup_v (u0(v, e) - u0(v, d))],
    total surplus is monotone in the depth for every value.  The supremum is
    attained at v = 0 or in the limit v -> inf, where the nominal-surplus gap
    reduces to sum_j (c_j - c_{j+1}) (a_j(d) - a_j(e)).
    """
    c = np.append(np.asarray(c_row, dtype=float), 0.0)
    steps = c[:-1] - c[1:]
    a = np.asarray(a_by_depth, dtype=float)
    s = [0.0]
    for d in range(1, a.shape[0]):
        gaps = [s[e] + max(0.0, float(np.sum(steps * (a[d] - a[e])))) for e in range(d)]
        s.append(max(gaps))
    return s[-1]


def _assemble(c, v, k, matching, a_true, u_by_depth, a_by_depth=None, side_rule="printed"):
    n = c.shape[0]
    nominal = np.array([u[-1] for u in u_by_depth])
    if side_rule == "printed":
        side = np.array([max(0.0, u.max() - u[-1]) for u in u_by_depth])
    elif side_rule == "value_free":
        side = np.array([value_free_side_payment(c[i], a_by_depth[i]) for i in range(n)])
    else:
        raise ValueError(f"unknown side-payment rule {side_rule!r}")
    prices = prices_from_thresholds(c, a_true)
    received = np.zeros(n)
    for j, b in enumerate(matching.slot_to_bidder):
        if b is not None and j < k[b]:
            received[b] = c[b, j] * v[b]
    T = received - nominal - side
    return SlottedOutcome(matching, T, side, nominal, prices, a_true)


def slotted_heuristic_outcome(c, v, k, transforms=None, side_rule: str = "printed") -> SlottedOutcome:
    """Pointwise maximizer of sum c_ij psi_i(v_i) over eligible edges, with side payments.

    T_i = value received - nominal surplus - side payment.  With identity
    transforms this is the slotted VCG outcome.

    ``side_rule="printed"`` pays max over shallower reports of the nominal
    surplus at the reported value.  That amount moves with the own value
    report, so it can reward over-reporting the value.  ``"value_free"``
    uses ``value_free_side_payment`` instead, which keeps the mechanism IC in
    both coordinates at a much larger cost in revenue.
    """
    c = check_ctr(c)
    n, m = c.shape
    k = check_depths(k, n, m)
    v = np.asarray(v, dtype=float)
    tr = _as_transforms(transforms, n)
    z = _transform_all(tr, v)
    matching = monotone_allocation(c, z, k)
    a_true = np.zeros((n, m))
    u_by_depth, a_by_depth = [], []
    for i in range(n):
        a = _value_thresholds(tr[i], slotted_thresholds_by_depth(c, z, k, i))
        a_true[i] = a[-1]
        a_by_depth.append(a)
        u_by_depth.append(_depth_surplus(c[i], a, v[i]))
    return _assemble(c, v, k, matching, a_true, u_by_depth, a_by_depth, side_rule)


def slotted_crb_outcome(c, v, k, transforms=None) -> SlottedOutcome:
    """Slot-by-slot CRB where slot j only considers bidders whose depth reaches j.

    Side payments are computed the same way as for the heuristic; they come
    out zero because a deeper report never shrinks a bidder's thresholds.
    """
    c = check_ctr(c)
    n, m = c.shape
    k = check_depths(k, n, m)
    v = np.asarray(v, dtype=float)
    tr = _as_transforms(transforms, n)
    z = _transform_all(tr, v)
    matching = crb_allocation(c, z, k)
    a_true = np.zeros((n, m))
    u_by_depth = []
    for i in range(n):
        zt = np.array([crb_thresholds(c, z, i, k, own_eligible=d) for d in range(1, k[i] + 1)])
        a = _value_thresholds(tr[i], zt)
        a_true[i] = a[-1]
        u_by_depth.append(_depth_surplus(c[i], a, v[i]))
    return _assemble(c, v, k, matching, a_true, u_by_depth)


def revenue_upper_bound(c, values, depths, transforms=None) -> float:
    """Sample mean of value received minus nominal surplus under the pointwise maximizer."""
    V = np.atleast_2d(np.asarray(values, dtype=float))
    K = np.atleast_2d(np.asarray(depths))
    if V.shape[0] == 0:
        raise ValueError("need at least one sample")
    totals = []
    for v, k in zip(V, K):
        out = slotted_heuristic_outcome(c, v, k, transforms)
        totals.append(out.revenue + out.side.sum())
    return float(np.mean(totals))
