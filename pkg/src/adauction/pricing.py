"""Dominant-strategy prices for efficiency and affine-maximizer allocations.

All prices are per click.  A bidder assigned slot j pays ``c[i, j] * p[i, j]``
per period; unassigned bidders pay nothing.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import linprog

from .matching import Matching, best_value, check_ctr, max_weight_matching

__all__ = [
    "PriceSchedule",
    "PaymentVector",
    "Outcome",
    "AffineParams",
    "payments_from_prices",
    "vcg_outcome",
    "vcg_externality_prices",
    "leonard_dual_prices",
    "affine_maximizer_outcome",
    "separable_efficient_prices",
    "separable_revenue_prices",
]


@dataclass
class PriceSchedule:
    """Per-bidder, per-slot per-click prices; ``inf`` marks an unattainable slot."""

    p: np.ndarray
    p0: np.ndarray = None

    def __post_init__(self):
        self.p = np.asarray(self.p, dtype=float)
        if self.p0 is None:
            self.p0 = np.zeros(self.p.shape[0])

    def assigned(self, matching: Matching) -> np.ndarray:
        """Per-click price each bidder faces on its own slot (nan if unassigned)."""
        out = np.full(self.p.shape[0], np.nan)
        for j, b in enumerate(matching.slot_to_bidder):
            if b is not None:
                out[b] = self.p[b, j]
        return out


@dataclass
class PaymentVector:
    """Total payments T and per-click payments t (nan when unassigned)."""

    T: np.ndarray
    t: np.ndarray


@dataclass
class Outcome:
    matching: Matching
    payments: PaymentVector
    prices: PriceSchedule
    extra: dict = field(default_factory=dict)

    @property
    def revenue(self) -> float:
        return float(np.sum(self.payments.T))


@dataclass(frozen=True)
class AffineParams:
    """Positive bidder weights w and additive slot offsets r (n x m)."""

    w: np.ndarray
    r: np.ndarray

    def __post_init__(self):
        w = np.asarray(self.w, dtype=float)
        if np.any(w <= 0):
            raise ValueError("affine bidder weights must be positive")
        object.__setattr__(self, "w", w)
        object.__setattr__(self, "r", np.asarray(self.r, dtype=float))


def payments_from_prices(c, matching: Matching, prices: PriceSchedule) -> PaymentVector:
    c = np.asarray(c, dtype=float)
    n = c.shape[0]
    T = np.zeros(n)
    t = np.full(n, np.nan)
    for j, b in enumerate(matching.slot_to_bidder):
        if b is None:
            continue
        t[b] = prices.p[b, j]
        T[b] = c[b, j] * prices.p[b, j] if c[b, j] > 0 else 0.0
    return PaymentVector(T, t)


def _others(n, i):
    return [k for k in range(n) if k != i]


def _pair_prices(w, c, scale=None):
    """Full schedule p_ij = (Phi(-i) - Phi~_j(-i)) / (scale_i * c_ij)."""
    n, m = w.shape
    p = np.zeros((n, m))
    for i in range(n):
        rows = _others(n, i)
        phi_minus = best_value(w[rows])
        for j in range(m):
            cols = [s for s in range(m) if s != j]
            phi_pair = best_value(w[np.ix_(rows, cols)])
            denom = c[i, j] * (1.0 if scale is None else scale[i])
            p[i, j] = (phi_minus - phi_pair) / denom if denom > 0 else 0.0
    return p


def vcg_outcome(c, v) -> Outcome:
    """Surplus-maximizing allocation with per-click VCG prices for every slot."""
    c = check_ctr(c)
    v = np.asarray(v, dtype=float)
    if v.shape != (c.shape[0],):
        raise ValueError("need one value per bidder")
    w = c * v[:, None]
    matching, _ = max_weight_matching(w)
    prices = PriceSchedule(np.maximum(_pair_prices(w, c), 0.0))
    return Outcome(matching, payments_from_prices(c, matching, prices), prices)


def vcg_externality_prices(c, v, matching: Matching | None = None) -> np.ndarray:
    """Per-click price of each assigned bidder from the externality it imposes.

    t_i = (Phi(v_-i) - (Phi(v) - c_ij v_i)) / c_ij; nan for unassigned bidders.
    """
    c = check_ctr(c)
    v = np.asarray(v, dtype=float)
    w = c * v[:, None]
    if matching is None:
        matching, total = max_weight_matching(w)
    else:
        total = matching.weight(w)
    out = np.full(c.shape[0], np.nan)
    for j, i in enumerate(matching.slot_to_bidder):
        if i is None:
            continue
        phi_minus = best_value(w[_others(c.shape[0], i)])
        out[i] = (phi_minus - (total - w[i, j])) / c[i, j]
    return out


def leonard_dual_prices(c, v, matching: Matching) -> np.ndarray:
    """Minimal slot prices nu solving Leonard's dual of the assignment LP.

    min sum nu  s.t.  rho_i + nu_j >= w_ij,  rho_i* + nu_j = w_i*j on matched
    pairs, rho = 0 for losing bidders, rho, nu >= 0.  Raises ``ValueError`` if the matching is not optimal.
    """
    c = check_ctr(c)
    w = c * np.asarray(v, dtype=float)[:, None]
    n, m = w.shape
    nvar = n + m  # rho then nu
    cost = np.concatenate([np.zeros(n), np.ones(m)])
    a_ub, b_ub = [], []
    for i in range(n):
        for j in range(m):
            row = np.zeros(nvar)
            row[i] = -1.0
            row[n + j] = -1.0
            a_ub.append(row)
            b_ub.append(-w[i, j])
    a_eq, b_eq = [], []
    for j, i in enumerate(matching.slot_to_bidder):
        row = np.zeros(nvar)
        if i is None:
            row[n + j] = 1.0  # empty slot is free
            a_eq.append(row)
            b_eq.append(0.0)
            continue
        row[i] = 1.0
        row[n + j] = 1.0
        a_eq.append(row)
        b_eq.append(w[i, j])
    # complementary slackness: losing bidders keep zero surplus
    for i in set(range(n)) - set(matching.slot_to_bidder):
        row = np.zeros(nvar)
        row[i] = 1.0
        a_eq.append(row)
        b_eq.append(0.0)
    res = linprog(
        cost,
        A_ub=np.array(a_ub),
        b_ub=np.array(b_ub),
        A_eq=np.array(a_eq) if a_eq else None,
        b_eq=np.array(b_eq) if b_eq else None,
        bounds=[(0, None)] * nvar,
        method="highs",
    )
    if res.status != 0:
        raise ValueError(f"dual infeasible for the given matching: {res.message}")
    return res.x[n:]


def affine_maximizer_outcome(c, v, params: AffineParams) -> Outcome:
    """Allocation maximizing sum (w_i c_ij v_ij + r_ij) x_ij, with its payments.

    ``v`` may be slot independent (length n) or a full n x m matrix.  Prices
    are expressed per click; with large positive offsets r they can be
    negative.
    """
    c = check_ctr(c)
    n, m = c.shape
    v = np.asarray(v, dtype=float)
    vm = np.repeat(v[:, None], m, axis=1) if v.ndim == 1 else v
    if vm.shape != (n, m):
        raise ValueError("valuations must be length n or n x m")
    if params.w.shape != (n,) or params.r.shape != (n, m):
        raise ValueError("affine parameters do not match the instance")
    aw = params.w[:, None] * c * vm + params.r
    matching, total = max_weight_matching(aw)

    # Total payment for slot j: (Phi(-i) - others_j - r_ij) / w_i.
    p = np.zeros((n, m))
    T = np.zeros(n)
    t = np.full(n, np.nan)
    for i in range(n):
        rows = _others(n, i)
        phi_minus = best_value(aw[rows])
        for j in range(m):
            cols = [s for s in range(m) if s != j]
            others_j = best_value(aw[np.ix_(rows, cols)])
            total_j = (phi_minus - others_j - params.r[i, j]) / params.w[i]
            p[i, j] = total_j / c[i, j] if c[i, j] > 0 else 0.0
    for j, i in enumerate(matching.slot_to_bidder):
        if i is None:
            continue
        # own offset r_ij is netted out, otherwise the bidder ignores it and IC fails
        T[i] = (best_value(aw[_others(n, i)]) - total + aw[i, j] - params.r[i, j]) / params.w[i]
        t[i] = T[i] / c[i, j] if c[i, j] > 0 else np.nan
    return Outcome(matching, PaymentVector(T, t), PriceSchedule(p))


def _separable_schedule(phi, mu, score, threshold):
    """Per-click price schedule for c_ij = phi_i mu_j allocations ranked by ``score``.

    ``threshold(i, s)`` maps a competitor score s to bidder i's value
    threshold.  The price of slot j sums the steps of the mu profile below j,
    each valued at the threshold against the k-th best rival score.
    """
    n, m = len(phi), len(mu)
    mu_ext = np.append(mu, 0.0)
    p = np.zeros((n, m))
    for i in range(n):
        rivals = np.sort(np.delete(score, i))[::-1]
        rivals = np.append(rivals, np.zeros(max(0, m - len(rivals))))
        for j in range(m):
            acc = 0.0
            for k in range(j, m):
                acc += (mu_ext[k] - mu_ext[k + 1]) * threshold(i, rivals[k])
            p[i, j] = acc / mu[j]
    return p


def _check_separable(phi, mu):
    phi = np.asarray(phi, dtype=float)
    mu = np.asarray(mu, dtype=float)
    if np.any(mu <= 0) or np.any(np.diff(mu) > 0):
        raise ValueError("mu must be positive and nonincreasing")
    if np.any(phi <= 0):
        raise ValueError("phi must be positive")
    return phi, mu


def separable_efficient_prices(phi, mu, v) -> PriceSchedule:
    """Closed-form VCG prices when c_ij = phi_i * mu_j.

    The rank-r bidder pays (1/mu_r) sum_{j>=r} (mu_j - mu_{j+1})
    (phi_[j+1] / phi_[r]) v_[j+1] per click; the schedule extends this to
    every slot using the bidder's rivals in place of the ranked list.
    """
    phi, mu = _check_separable(phi, mu)
    v = np.asarray(v, dtype=float)
    score = phi * v
    p = _separable_schedule(phi, mu, score, lambda i, s: s / phi[i])
    return PriceSchedule(p)


def separable_revenue_prices(phi, mu, v, priors) -> PriceSchedule:
    """Closed-form optimal-auction prices when c_ij = phi_i * mu_j.

    Bidders are ranked by phi_i * max(nu_i(v_i), 0); a rival score s becomes
    the value threshold nu_i^{-1}(s / phi_i), taken right-continuously so a
    zero score yields the monopoly reserve.
    """
    from .priors import clipped_virtual

    phi, mu = _check_separable(phi, mu)
    v = np.asarray(v, dtype=float)
    transforms = [clipped_virtual(pr) for pr in priors]
    score = phi * np.array([tr.forward(x) for tr, x in zip(transforms, v)])
    p = _separable_schedule(phi, mu, score, lambda i, s: float(transforms[i].inverse(s / phi[i])))
    return PriceSchedule(p)
