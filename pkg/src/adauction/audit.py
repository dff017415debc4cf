"""Black-box incentive and participation audits for every mechanism in the package."""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from typing import Callable

import numpy as np

from .matching import Matching, check_ctr, max_weight_matching
from .pricing import AffineParams, PriceSchedule, affine_maximizer_outcome, vcg_outcome
from .priors import GammaPrior, clipped_virtual
from .rank import crb_outcome, rb_outcome
from .slotted import slotted_crb_outcome, slotted_heuristic_outcome
from .thresholds import compute_prices

__all__ = [
    "MechanismResult",
    "MechanismUnderTest",
    "AuditReport",
    "audit_ic",
    "audit_self_selection",
    "replay_violation",
    "example1_rule",
    "example1_mechanism",
    "first_price_strawman",
    "standard_mechanisms",
    "random_instance",
    "random_profiles",
]

TOL = 1e-9


@dataclass
class MechanismResult:
    matching: Matching
    T: np.ndarray
    prices: PriceSchedule | None = None
    thresholds: np.ndarray | None = None  # value-scale, n x m


@dataclass
class MechanismUnderTest:
    """A mechanism as a function (ctr, bids) -> MechanismResult.

    ``kind`` fixes the bid format: "single" (length-n values), "multi"
    (n x m values) or "slotted" (a (values, depths) pair).
    """

    name: str
    run: Callable
    kind: str = "single"
    check_ir: bool = True
    outside_option: bool = True


@dataclass
class AuditReport:
    mechanism: str
    max_deviation_gain: float = -np.inf
    violation: dict | None = None
    min_truthful_utility: float = np.inf
    ir_ok: bool = True
    monotone_ok: bool = True
    self_selection_ok: bool = True
    profiles: int = 0
    deviations_checked: int = 0
    tol: float = TOL
    notes: list = field(default_factory=list)

    @property
    def ic_ok(self) -> bool:
        return self.max_deviation_gain <= self.tol

    @property
    def passed(self) -> bool:
        return self.ic_ok and self.ir_ok and self.monotone_ok and self.self_selection_ok

    def to_json(self) -> str:
        d = asdict(self)
        d["passed"] = self.passed
        d["ic_ok"] = self.ic_ok
        return json.dumps(_jsonable(d), indent=2)


def _jsonable(x):
    if isinstance(x, dict):
        return {k: _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, np.ndarray):
        return _jsonable(x.tolist())
    if isinstance(x, (np.floating, float)):
        x = float(x)
        return x if np.isfinite(x) else str(x)
    if isinstance(x, np.integer):
        return int(x)
    return x


def _utility(mech: MechanismUnderTest, c, truth, i: int, res: MechanismResult) -> float:
    j = res.matching.slot_of(i)
    if j is None:
        return -float(res.T[i])
    if mech.kind == "multi":
        value = c[i, j] * truth[i, j]
    elif mech.kind == "slotted":
        v, k = truth
        value = c[i, j] * v[i] if j < k[i] else 0.0
    else:
        value = c[i, j] * truth[i]
    return float(value - res.T[i])


def _clicks(c, i, res):
    j = res.matching.slot_of(i)
    return 0.0 if j is None else float(c[i, j])


def _value_grid(v: float, points: int, extra=()) -> np.ndarray:
    scale = max(abs(v), 1e-3)
    grid = [0.0, v]
    grid += list(scale * np.geomspace(0.05, 20.0, points))
    for t in extra:
        if np.isfinite(t):
            eps = 1e-7 * max(1.0, abs(t))
            grid += [t - eps, t, t + eps]
    return np.unique(np.maximum(grid, 0.0))


def _replace(mech, bids, i, report):
    if mech.kind == "slotted":
        v, k = bids
        v2, k2 = np.array(v, dtype=float), np.array(k)
        v2[i], k2[i] = report
        return (v2, k2)
    out = np.array(bids, dtype=float)
    out[i] = report
    return out


def _reports(mech, c, bids, i, res, points):
    """Misreports for bidder i: geometric grid, zero and threshold neighbourhoods."""
    extra = () if res.thresholds is None else tuple(res.thresholds[i])
    if mech.kind == "multi":
        row = np.asarray(bids[i], dtype=float)
        for j in range(row.size):
            for x in _value_grid(row[j], points):
                r = row.copy()
                r[j] = x
                yield r
    elif mech.kind == "slotted":
        v, k = bids
        for x in _value_grid(float(v[i]), points, extra):
            for d in range(1, int(k[i]) + 1):
                yield (x, d)
    else:
        yield from _value_grid(float(bids[i]), points, extra)


def audit_ic(mech: MechanismUnderTest, c, profiles, grid_points: int = 21, tol: float = TOL) -> AuditReport:
    """Search unilateral misreports for every bidder in every true profile."""
    if grid_points < 11:
        raise ValueError("use at least 11 grid points per misreport coordinate")
    c = check_ctr(c)
    report = AuditReport(mech.name, tol=tol)
    for truth in profiles:
        report.profiles += 1
        base = mech.run(c, truth)
        for i in range(c.shape[0]):
            u_true = _utility(mech, c, truth, i, base)
            report.min_truthful_utility = min(report.min_truthful_utility, u_true)
            if mech.check_ir and u_true < -tol:
                report.ir_ok = False
            if base.prices is not None and mech.kind == "single":
                j = base.matching.slot_of(i)
                if not audit_self_selection(base.prices.p[i], c[i], truth[i], j, tol, mech.outside_option):
                    report.self_selection_ok = False
            seen = []
            for r in _reports(mech, c, truth, i, base, grid_points):
                dev = mech.run(c, _replace(mech, truth, i, r))
                gain = _utility(mech, c, truth, i, dev) - u_true
                report.deviations_checked += 1
                if mech.kind == "single":
                    seen.append((float(r), _clicks(c, i, dev)))
                if gain > report.max_deviation_gain:
                    report.max_deviation_gain = gain
                    if gain > tol:
                        report.violation = {
                            "ctr": c.tolist(),
                            "truth": _jsonable(_as_list(truth)),
                            "bidder": i,
                            "misreport": _jsonable(_as_list(r)),
                            "gain": gain,
                        }
            if seen:
                seen.sort()
                clicks = [x[1] for x in seen]
                if any(b < a - tol for a, b in zip(clicks, clicks[1:])):
                    report.monotone_ok = False
    return report


def _as_list(x):
    if isinstance(x, tuple):
        return [np.asarray(p).tolist() for p in x]
    return np.asarray(x).tolist()


def replay_violation(mech: MechanismUnderTest, violation: dict) -> float:
    """Recompute the gain of a recorded violation from scratch."""
    c = np.asarray(violation["ctr"], dtype=float)
    i = violation["bidder"]
    if mech.kind == "slotted":
        truth = (np.asarray(violation["truth"][0], dtype=float), np.asarray(violation["truth"][1]))
        r = tuple(violation["misreport"])
    else:
        truth = np.asarray(violation["truth"], dtype=float)
        r = violation["misreport"]
    u_true = _utility(mech, c, truth, i, mech.run(c, truth))
    return _utility(mech, c, truth, i, mech.run(c, _replace(mech, truth, i, r))) - u_true


def audit_self_selection(prices, c_row, v_row, assigned, tol: float = TOL,
                         outside_option: bool = True, bidder: int | None = None) -> bool:
    """True when the assigned slot (None = outside option) maximizes c_j (v_j - p_j).

    ``prices`` is the bidder's row of per-click prices, or a PriceSchedule
    together with ``bidder``.
    """
    if isinstance(prices, PriceSchedule):
        if bidder is None:
            raise ValueError("bidder index needed with a full price schedule")
        prices = prices.p[bidder]
    p = np.asarray(prices, dtype=float)
    c_row = np.asarray(c_row, dtype=float)
    m = c_row.size
    v_row = np.broadcast_to(np.asarray(v_row, dtype=float), (m,))

    def surplus(j):
        if j is None:
            return 0.0
        if not np.isfinite(p[j]):
            return -np.inf
        return c_row[j] * (v_row[j] - p[j])

    if assigned is None and not outside_option:
        return False
    options = list(range(m)) + ([None] if outside_option else [])
    best = max(surplus(j) for j in options)
    return surplus(assigned) >= best - tol * max(1.0, abs(best))


def example1_rule(v, gamma: float):
    """Two bidders, two unit-CTR slots; an IC rule that no affine maximizer reproduces.

    Bidder 1 takes slot 1 iff v11 - v12 >= f(v21 - v22) with
    f(d) = sign(d) |d|^(1 + gamma).  Prices are signed.
    """
    v = np.asarray(v, dtype=float)
    if v.shape != (2, 2):
        raise ValueError("the rule needs a 2 x 2 valuation matrix")
    if not 0.0 < gamma < 1.0:
        raise ValueError("gamma must lie in (0, 1)")
    d1 = v[0, 0] - v[0, 1]
    d2 = v[1, 0] - v[1, 1]
    f2 = np.sign(d2) * abs(d2) ** (1.0 + gamma)
    g1 = np.sign(d1) * abs(d1) ** (1.0 / (1.0 + gamma))
    p = np.array([[0.5 * f2, -0.5 * f2], [0.5 * g1, -0.5 * g1]])
    matching = Matching((0, 1) if d1 >= f2 else (1, 0), 2)
    return matching, PriceSchedule(p)


def example1_mechanism(gamma: float = 0.5) -> MechanismUnderTest:
    def run(c, v):
        matching, prices = example1_rule(v, gamma)
        T = np.array([prices.p[i, matching.slot_of(i)] for i in range(2)])
        return MechanismResult(matching, T, prices)

    return MechanismUnderTest("example1", run, kind="multi", check_ir=False, outside_option=False)


def first_price_strawman() -> MechanismUnderTest:
    """Efficient allocation, each winner pays its own bid per click (not IC)."""

    def run(c, b):
        b = np.asarray(b, dtype=float)
        matching, _ = max_weight_matching(c * b[:, None])
        T = np.zeros(len(b))
        for j, i in enumerate(matching.slot_to_bidder):
            if i is not None:
                T[i] = c[i, j] * b[i]
        return MechanismResult(matching, T)

    return MechanismUnderTest("first_price", run)


def _wrap_outcome(fn):
    def run(c, b):
        out = fn(c, b)
        thr = out.extra.get("thresholds") if hasattr(out, "extra") else None
        return MechanismResult(out.matching, out.payments.T, out.prices, thr)

    return run


def _wrap_monotone(transforms):
    def run(c, b):
        out = compute_prices(c, b, transforms)
        return MechanismResult(out.matching, out.payments.T, out.prices, out.thresholds)

    return run


def _wrap_slotted(fn, transforms, **kw):
    def run(c, bids):
        v, k = bids
        out = fn(c, v, k, transforms, **kw)
        return MechanismResult(out.matching, out.T, None, out.thresholds)

    return run


def standard_mechanisms(n: int, m: int, seed: int = 0, prior=None) -> dict:
    """Every shipped IC mechanism configured for n bidders and m slots."""
    rng = np.random.default_rng(seed)
    prior = GammaPrior(5.0, 1.0) if prior is None else prior
    psi = clipped_virtual(prior)
    w = rng.uniform(0.5, 2.0, n)
    aff = AffineParams(rng.uniform(0.5, 2.0, n), rng.uniform(0.0, 1.0, (n, m)))
    mechs = [
        MechanismUnderTest("vcg", _wrap_outcome(vcg_outcome)),
        MechanismUnderTest("affine", _wrap_outcome(lambda c, v: affine_maximizer_outcome(c, v, aff)), kind="multi"),
        MechanismUnderTest("optimal", _wrap_monotone([psi] * n)),
        MechanismUnderTest("rb", _wrap_outcome(lambda c, v: rb_outcome(c, v, w))),
        MechanismUnderTest("crb", _wrap_outcome(crb_outcome)),
        MechanismUnderTest("crb_virtual", _wrap_outcome(lambda c, v: crb_outcome(c, v, [psi] * n))),
        MechanismUnderTest("slotted_vcg", _wrap_slotted(slotted_heuristic_outcome, None), kind="slotted"),
        MechanismUnderTest("slotted_pointwise", _wrap_slotted(slotted_heuristic_outcome, [psi] * n), kind="slotted"),
        MechanismUnderTest("slotted_pointwise_value_free",
                           _wrap_slotted(slotted_heuristic_outcome, [psi] * n, side_rule="value_free"), kind="slotted"),
        MechanismUnderTest("slotted_crb", _wrap_slotted(slotted_crb_outcome, [psi] * n), kind="slotted"),
    ]
    return {mech.name: mech for mech in mechs}


def random_instance(rng: np.random.Generator, n: int, m: int) -> np.ndarray:
    """Random CTR matrix with rows sorted in decreasing order."""
    return -np.sort(-rng.uniform(1.0, 100.0, (n, m)), axis=1)


def random_profiles(rng: np.random.Generator, mech: MechanismUnderTest, n: int, m: int, count: int, prior=None):
    prior = GammaPrior(5.0, 1.0) if prior is None else prior
    out = []
    for _ in range(count):
        if mech.kind == "multi":
            out.append(prior.sample(rng, (n, m)))
        elif mech.kind == "slotted":
            out.append((prior.sample(rng, n), rng.integers(1, m + 1, n)))
        else:
            out.append(prior.sample(rng, n))
    return out
