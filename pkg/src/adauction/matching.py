"""Max-weight bipartite assignment of bidders (rows) to slots (columns).

Every slot is filled when that is feasible.  When it is not (too few
bidders after an exclusion, or deleted edges in the slotted model) the best
partial matching is returned instead, with empty slots contributing zero.

Ties between optimal matchings are broken towards the lexicographically
smallest slot -> bidder map (slot 0's bidder first, then slot 1's, ...),
with an empty slot ranking after every bidder.
"""
from __future__ import annotations

import csv
import itertools
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.optimize import linear_sum_assignment

__all__ = [
    "CtrMatrix",
    "Matching",
    "check_ctr",
    "load_matrix_csv",
    "max_weight_matching",
    "best_value",
    "surplus_excluding_bidder",
    "surplus_excluding_pair",
    "enumerate_matchings_oracle",
]

ORACLE_MAX_BIDDERS = 8
_REL_TIE_TOL = 1e-12


def check_ctr(c, require_m_le_n: bool = True) -> np.ndarray:
    """Validate a click-through-rate matrix and return it as a float array.

    Rows must be nonnegative and nonincreasing along the slot axis.  Zero
    rates are accepted (some textbook instances use them) even though the
    model assumes strictly positive ones.
    """
    c = np.asarray(c, dtype=float)
    if c.ndim != 2:
        raise ValueError(f"CTR matrix must be 2-d, got shape {c.shape}")
    if np.any(c < 0) or not np.all(np.isfinite(c)):
        raise ValueError("CTR entries must be finite and nonnegative")
    if np.any(np.diff(c, axis=1) > 0):
        raise ValueError("CTR rows must be nonincreasing in the slot index")
    if require_m_le_n and c.shape[1] > c.shape[0]:
        raise ValueError(f"more slots ({c.shape[1]}) than bidders ({c.shape[0]})")
    return c


@dataclass(frozen=True)
class CtrMatrix:
    """n x m expected clicks; ``c[i, j]`` for bidder i in slot j."""

    c: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "c", check_ctr(self.c))

    @property
    def n(self) -> int:
        return self.c.shape[0]

    @property
    def m(self) -> int:
        return self.c.shape[1]

    def padded(self) -> np.ndarray:
        """The matrix with the trailing zero column c[:, m] = 0."""
        return np.hstack([self.c, np.zeros((self.n, 1))])

    def weights(self, values) -> np.ndarray:
        """Edge weights c_ij * v_i (slot-independent values)."""
        return self.c * np.asarray(values, dtype=float)[:, None]

    @classmethod
    def from_csv(cls, path) -> "CtrMatrix":
        return cls(load_matrix_csv(path))


def load_matrix_csv(path) -> np.ndarray:
    """Read a numeric matrix (row = bidder, column = slot).

    A non-numeric first row is treated as a header and skipped.
    """
    rows = []
    with open(Path(path), newline="", encoding="utf-8") as fh:
        for k, row in enumerate(csv.reader(fh)):
            cells = [x.strip() for x in row if x.strip() != ""]
            if not cells:
                continue
            try:
                rows.append([float(x) for x in cells])
            except ValueError:
                if k == 0:
                    continue
                raise
    if not rows:
        raise ValueError(f"{path}: no numeric rows")
    if len({len(r) for r in rows}) != 1:
        raise ValueError(f"{path}: ragged rows")
    return np.array(rows, dtype=float)


@dataclass(frozen=True)
class Matching:
    """Slot -> bidder assignment; ``None`` marks an empty slot."""

    slot_to_bidder: tuple
    n: int

    @property
    def m(self) -> int:
        return len(self.slot_to_bidder)

    def slot_of(self, i: int):
        for j, b in enumerate(self.slot_to_bidder):
            if b == i:
                return j
        return None

    def bidder_slots(self) -> np.ndarray:
        """Length-n array with each bidder's slot, -1 when unassigned."""
        out = np.full(self.n, -1, dtype=int)
        for j, b in enumerate(self.slot_to_bidder):
            if b is not None:
                out[b] = j
        return out

    def as_array(self) -> np.ndarray:
        """n x m 0/1 allocation matrix."""
        x = np.zeros((self.n, self.m))
        for j, b in enumerate(self.slot_to_bidder):
            if b is not None:
                x[b, j] = 1.0
        return x

    def weight(self, w) -> float:
        w = np.asarray(w, dtype=float)
        return float(sum(w[b, j] for j, b in enumerate(self.slot_to_bidder) if b is not None))

    def without_empty(self, keep) -> "Matching":
        """Empty every slot whose bidder fails ``keep(bidder)``."""
        return Matching(tuple(b if b is not None and keep(b) else None for b in self.slot_to_bidder), self.n)


def _as_weights(w, allowed):
    w = np.asarray(w, dtype=float)
    if w.ndim != 2:
        raise ValueError(f"weight matrix must be 2-d, got shape {w.shape}")
    if allowed is None:
        allowed = np.ones(w.shape, dtype=bool)
    else:
        allowed = np.asarray(allowed, dtype=bool)
        if allowed.shape != w.shape:
            raise ValueError("allowed mask does not match the weight matrix")
    return w, allowed


def _solve_strict(w, allowed):
    """Fill every slot; returns (slot_to_bidder list, value) or None if infeasible."""
    n, m = w.shape
    if m == 0:
        return [], 0.0
    if n < m:
        return None
    cost = np.where(allowed, w, -np.inf).T
    try:
        rows, cols = linear_sum_assignment(cost, maximize=True)
    except ValueError:
        return None
    s2b = [None] * m
    for j, i in zip(rows, cols):
        s2b[j] = int(i)
    return s2b, float(w[cols, rows].sum())


def _solve_partial(w, allowed):
    """Slots may stay empty at zero weight."""
    n, m = w.shape
    if m == 0:
        return [], 0.0
    if n == 0:
        return [None] * m, 0.0
    cost = np.full((m, n + m), 0.0)
    cost[:, :n] = np.where(allowed, w, -np.inf).T
    rows, cols = linear_sum_assignment(cost, maximize=True)
    s2b = [None] * m
    value = 0.0
    for j, i in zip(rows, cols):
        if i < n:
            s2b[j] = int(i)
            value += w[i, j]
    return s2b, float(value)


def _strict_feasible(w, allowed) -> bool:
    n, m = w.shape
    if m == 0:
        return True
    if n < m:
        return False
    if allowed.all():
        return True
    return _solve_strict(np.zeros_like(w), allowed) is not None


def best_value(w, allowed=None, cover: bool = True) -> float:
    """Optimal total weight (no tie-breaking work).

    ``cover=False`` lets slots stay empty even when they could be filled.
    """
    w, allowed = _as_weights(w, allowed)
    res = _solve_strict(w, allowed) if cover and _strict_feasible(w, allowed) else None
    if res is None:
        res = _solve_partial(w, allowed)
    return res[1]


def max_weight_matching(w, allowed=None, cover: bool = True) -> tuple[Matching, float]:
    """Maximize sum_ij w_ij x_ij over matchings that fill every slot.

    Raises ``ValueError`` when there are more slots than bidders.  With an
    ``allowed`` mask that makes full coverage impossible, or with
    ``cover=False``, the best partial matching is returned.
    """
    w, allowed = _as_weights(w, allowed)
    n, m = w.shape
    if m > n:
        raise ValueError(f"more slots ({m}) than bidders ({n})")
    strict = cover and _strict_feasible(w, allowed)
    solve = _solve_strict if strict else _solve_partial
    s2b, value = solve(w, allowed)
    tol = _REL_TIE_TOL * max(1.0, float(np.abs(w[allowed]).sum()) if allowed.any() else 1.0)

    # Walk the slots in order; try every smaller bidder index that could
    # replace the current holder without losing optimality.
    fixed: dict[int, int | None] = {}
    for j in range(m):
        current = s2b[j]
        used = {b for b in fixed.values() if b is not None}
        limit = n if current is None else current
        for i in range(limit):
            if i in used or not allowed[i, j]:
                continue
            rest = _restricted(w, allowed, fixed, j, i)
            sub = solve(*rest[:2])
            if sub is None:
                continue
            total = rest[2] + sub[1]
            if total >= value - tol:
                s2b = _merge(rest, sub[0], m)
                break
        fixed[j] = s2b[j]
    return Matching(tuple(s2b), n), value


def _restricted(w, allowed, fixed, j, i):
    """Subproblem with slots 0..j-1 fixed as given and slot j -> bidder i."""
    fixed = dict(fixed)
    fixed[j] = i
    used = {b for b in fixed.values() if b is not None}
    rows = [r for r in range(w.shape[0]) if r not in used]
    cols = [s for s in range(w.shape[1]) if s not in fixed]
    base = sum(w[b, s] for s, b in fixed.items() if b is not None)
    sub_w = w[np.ix_(rows, cols)]
    sub_a = allowed[np.ix_(rows, cols)]
    return sub_w, sub_a, base, rows, cols, fixed


def _merge(rest, sub_s2b, m):
    _, _, _, rows, cols, fixed = rest
    s2b = [None] * m
    for s, b in fixed.items():
        s2b[s] = b
    for k, s in enumerate(cols):
        b = sub_s2b[k]
        s2b[s] = None if b is None else rows[b]
    return s2b


def surplus_excluding_bidder(w, i: int, allowed=None) -> float:
    """Best total weight with bidder i removed (partial if slots go uncovered)."""
    w, allowed = _as_weights(w, allowed)
    if not 0 <= i < w.shape[0]:
        raise IndexError(f"bidder {i} out of range")
    keep = [r for r in range(w.shape[0]) if r != i]
    return best_value(w[keep], allowed[keep])


def surplus_excluding_pair(w, i: int, j: int, allowed=None) -> float:
    """Best weight of the other bidders on the other slots, bidder i held on slot j."""
    w, allowed = _as_weights(w, allowed)
    if not 0 <= i < w.shape[0]:
        raise IndexError(f"bidder {i} out of range")
    if not 0 <= j < w.shape[1]:
        raise IndexError(f"slot {j} out of range")
    rows = [r for r in range(w.shape[0]) if r != i]
    cols = [s for s in range(w.shape[1]) if s != j]
    return best_value(w[np.ix_(rows, cols)], allowed[np.ix_(rows, cols)])


def enumerate_matchings_oracle(w, allowed=None, cover: bool = True) -> tuple[Matching, float]:
    """Exhaustive search over slot -> bidder maps, same tie-break as the solver."""
    w, allowed = _as_weights(w, allowed)
    n, m = w.shape
    if n > ORACLE_MAX_BIDDERS:
        raise ValueError(f"oracle limited to {ORACLE_MAX_BIDDERS} bidders, got {n}")
    if m > n:
        raise ValueError(f"more slots ({m}) than bidders ({n})")
    tol = _REL_TIE_TOL * max(1.0, float(np.abs(w[allowed]).sum()) if allowed.any() else 1.0)

    def scan(candidates):
        best, best_map = -np.inf, None
        for cand in candidates:
            if any(b is not None and not allowed[b, s] for s, b in enumerate(cand)):
                continue
            val = sum(w[b, s] for s, b in enumerate(cand) if b is not None)
            if best_map is None or val > best + tol:
                best, best_map = val, cand
        return best_map, best

    best_map, best = scan(itertools.permutations(range(n), m)) if cover else (None, None)
    if best_map is None:
        # None sorts after every bidder index.
        options = list(range(n)) + [None]
        partial = (
            p for p in itertools.product(options, repeat=m)
            if len([b for b in p if b is not None]) == len({b for b in p if b is not None})
        )
        best_map, best = scan(partial)
    return Matching(tuple(best_map), n), float(best)
