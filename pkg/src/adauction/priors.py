"""Value priors, virtual values, ironing and sample-based virtual values."""
from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy import special

from .thresholds import ClippedTransform, FunctionTransform, KnotTransform, MonotoneTransform

__all__ = [
    "Prior",
    "UniformPrior",
    "GammaPrior",
    "ExponentialPrior",
    "MixturePrior",
    "EmpiricalPrior",
    "UniformIntPrior",
    "virtual_value",
    "iron",
    "empirical_virtual",
    "mixture_prior",
    "clipped_virtual",
    "virtual_transform",
    "printed_mixture_virtual",
    "printed_mixture_virtual_inverse",
    "prior_from_spec",
]


class Prior:
    """Continuous value distribution on [lo, hi]."""

    lo: float = 0.0
    hi: float = np.inf

    def cdf(self, x):
        raise NotImplementedError

    def pdf(self, x):
        raise NotImplementedError

    def sample(self, rng: np.random.Generator, size=None):
        raise NotImplementedError

    def hazard_inverse(self, x):
        """(1 - F(x)) / f(x)."""
        return (1.0 - self.cdf(x)) / self.pdf(x)

    def virtual(self, x):
        x = np.asarray(x, dtype=float)
        if np.any(x < self.lo) or np.any(x > self.hi):
            raise ValueError(f"value outside support [{self.lo}, {self.hi}]")
        with np.errstate(divide="ignore", invalid="ignore"):
            out = x - self.hazard_inverse(x)
        return float(out) if out.ndim == 0 else out

    def _virtual_unchecked(self, x):
        x = np.clip(np.asarray(x, dtype=float), self.lo, self.hi)
        with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
            out = x - self.hazard_inverse(x)
        return np.where(np.isnan(out), -np.inf, out)

    def virtual_inverse(self, y):
        """Right-continuous inverse inf{x : virtual(x) > y}; needs a monotone virtual value."""
        return FunctionTransform(self._virtual_unchecked, self.lo, self._scale()).inverse(y)

    def _scale(self) -> float:
        return 1.0 if not np.isfinite(self.hi) else float(self.hi)


@dataclass(frozen=True)
class UniformPrior(Prior):
    lo: float = 0.0
    hi: float = 1.0

    def __post_init__(self):
        if not self.hi > self.lo:
            raise ValueError("uniform prior needs hi > lo")

    def cdf(self, x):
        return np.clip((np.asarray(x, dtype=float) - self.lo) / (self.hi - self.lo), 0.0, 1.0)

    def pdf(self, x):
        x = np.asarray(x, dtype=float)
        return np.where((x >= self.lo) & (x <= self.hi), 1.0 / (self.hi - self.lo), 0.0)

    def hazard_inverse(self, x):
        return self.hi - np.asarray(x, dtype=float)

    def virtual_inverse(self, y):
        y = np.asarray(y, dtype=float)
        out = np.clip((y + self.hi) / 2.0, self.lo, None)
        return float(out) if out.ndim == 0 else out

    def sample(self, rng, size=None):
        return rng.uniform(self.lo, self.hi, size)


@dataclass(frozen=True)
class GammaPrior(Prior):
    shape: float = 5.0
    scale: float = 1.0
    lo: float = 0.0
    hi: float = np.inf

    def __post_init__(self):
        if self.shape <= 0 or self.scale <= 0:
            raise ValueError("gamma shape and scale must be positive")

    def cdf(self, x):
        return special.gammainc(self.shape, np.maximum(np.asarray(x, dtype=float), 0.0) / self.scale)

    def _log_pdf(self, x):
        y = np.asarray(x, dtype=float) / self.scale
        with np.errstate(divide="ignore"):
            return (self.shape - 1.0) * np.log(y) - y - special.gammaln(self.shape) - np.log(self.scale)

    def pdf(self, x):
        return np.exp(self._log_pdf(x))

    def hazard_inverse(self, x):
        # log-space ratio stays finite far into the tail
        y = np.asarray(x, dtype=float) / self.scale
        with np.errstate(divide="ignore"):
            log_sf = np.log(special.gammaincc(self.shape, y))
        return np.exp(log_sf - self._log_pdf(x))

    def _scale(self) -> float:
        return self.shape * self.scale

    def sample(self, rng, size=None):
        return rng.gamma(self.shape, self.scale, size)


@dataclass(frozen=True)
class ExponentialPrior(Prior):
    """Exponential with the given rate, shifted to start at ``loc``."""

    rate: float = 1.0
    loc: float = 0.0

    def __post_init__(self):
        if self.rate <= 0:
            raise ValueError("exponential rate must be positive")

    @property
    def lo(self):
        return self.loc

    @property
    def hi(self):
        return np.inf

    def cdf(self, x):
        return 1.0 - np.exp(-self.rate * np.maximum(np.asarray(x, dtype=float) - self.loc, 0.0))

    def pdf(self, x):
        x = np.asarray(x, dtype=float)
        return np.where(x >= self.loc, self.rate * np.exp(-self.rate * (x - self.loc)), 0.0)

    def hazard_inverse(self, x):
        return np.full(np.shape(x), 1.0 / self.rate) if np.ndim(x) else 1.0 / self.rate

    def _scale(self) -> float:
        return self.loc + 1.0 / self.rate

    def sample(self, rng, size=None):
        return self.loc + rng.exponential(1.0 / self.rate, size)


class MixturePrior(Prior):
    def __init__(self, components, weights):
        weights = np.asarray(weights, dtype=float)
        if len(components) == 0 or len(components) != len(weights):
            raise ValueError("need one weight per mixture component")
        if np.any(weights < 0) or abs(weights.sum() - 1.0) > 1e-9:
            raise ValueError("mixture weights must be nonnegative and sum to 1")
        self.components = list(components)
        self.weights = weights
        self.lo = min(c.lo for c in components)
        self.hi = max(c.hi for c in components)

    def cdf(self, x):
        return sum(w * c.cdf(x) for w, c in zip(self.weights, self.components))

    def pdf(self, x):
        return sum(w * c.pdf(x) for w, c in zip(self.weights, self.components))

    def _scale(self) -> float:
        return max(c._scale() for c in self.components)

    def sample(self, rng, size=None):
        shape = () if size is None else size
        which = rng.choice(len(self.components), size=shape, p=self.weights)
        draws = np.stack([np.broadcast_to(c.sample(rng, shape), shape) for c in self.components])
        out = np.take_along_axis(draws, np.asarray(which)[None, ...], axis=0)[0]
        return float(out) if size is None else out


def mixture_prior(components, weights) -> MixturePrior:
    return MixturePrior(components, weights)


@dataclass(frozen=True)
class UniformIntPrior:
    """Discrete uniform on {lo, ..., hi}; used for the deepest acceptable slot."""

    lo: int = 1
    hi: int = 4

    def __post_init__(self):
        if self.hi < self.lo:
            raise ValueError("uniform_int needs hi >= lo")

    def sample(self, rng, size=None):
        return rng.integers(self.lo, self.hi + 1, size)


def virtual_value(prior: Prior, v):
    """Myerson virtual value v - (1 - F(v)) / f(v)."""
    return prior.virtual(v)


def iron(values, weights=None) -> np.ndarray:
    """Nondecreasing ironed curve by pooling adjacent violators.

    Equals the slope of the greatest convex minorant of the weighted cumulative
    sum, so blockwise weighted means and the total are preserved.
    """
    y = np.asarray(values, dtype=float)
    if y.ndim != 1 or y.size == 0:
        raise ValueError("iron needs a nonempty 1-d curve")
    w = np.ones_like(y) if weights is None else np.asarray(weights, dtype=float)
    if w.shape != y.shape or np.any(w <= 0):
        raise ValueError("weights must be positive and match the curve")
    means, wts, counts = [], [], []
    for yi, wi in zip(y, w):
        means.append(yi)
        wts.append(wi)
        counts.append(1)
        while len(means) > 1 and means[-2] > means[-1]:
            w2 = wts[-2] + wts[-1]
            m2 = (means[-2] * wts[-2] + means[-1] * wts[-1]) / w2
            c2 = counts[-2] + counts[-1]
            del means[-2:], wts[-2:], counts[-2:]
            means.append(m2)
            wts.append(w2)
            counts.append(c2)
    return np.repeat(means, counts)


@dataclass
class EmpiricalPrior:
    """Sample-implied virtual values, raw and ironed, keyed by sorted samples."""

    samples: np.ndarray
    raw: np.ndarray
    ironed: np.ndarray
    transform: KnotTransform = field(repr=False)

    def virtual(self, x):
        """Ironed virtual value at any x, interpolating between sample points."""
        return self.transform.forward(x)

    def virtual_inverse(self, y):
        return self.transform.inverse(y)

    def sample(self, rng, size=None):
        return rng.choice(self.samples, size=size)


def empirical_virtual(samples) -> EmpiricalPrior:
    """Virtual values implied by N samples, then ironed on the uniform rank grid."""
    v = np.sort(np.asarray(samples, dtype=float).ravel())
    n = v.size
    if n < 2:
        raise ValueError("need at least two samples")
    t = np.arange(1, n + 1, dtype=float)
    raw = v.copy()
    raw[:-1] = v[:-1] - (v[1:] - v[:-1]) * (1.0 - t[:-1] / n) * n
    ironed = iron(raw)
    return EmpiricalPrior(v, raw, ironed, KnotTransform(v, ironed, lo=v[0]))


def virtual_transform(prior) -> MonotoneTransform:
    """The (unclipped) virtual value of a prior as a monotone transform."""
    if isinstance(prior, EmpiricalPrior):
        return prior.transform
    if isinstance(prior, UniformPrior):
        return _UniformVirtual(prior)
    return FunctionTransform(prior._virtual_unchecked, prior.lo, prior._scale())


class _UniformVirtual(MonotoneTransform):
    def __init__(self, prior):
        self.prior = prior
        self.lo = prior.lo

    def forward(self, x):
        x = np.asarray(x, dtype=float)
        out = 2.0 * x - self.prior.hi
        return float(out) if out.ndim == 0 else out

    def inverse(self, y):
        return self.prior.virtual_inverse(y)


def clipped_virtual(prior) -> ClippedTransform:
    """psi(v) = max(virtual(v), 0), the allocation scale for revenue objectives."""
    return ClippedTransform(virtual_transform(prior))


def printed_mixture_virtual(x):
    """Piecewise virtual value used for the two-bidder slotted example.

    2x - 1/3 below 1/4 and x - 1/12 from 1/4 on; continuous at 1/4.
    """
    x = np.asarray(x, dtype=float)
    out = np.where(x < 0.25, 2.0 * x - 1.0 / 3.0, x - 1.0 / 12.0)
    return float(out) if out.ndim == 0 else out


def printed_mixture_virtual_inverse(y):
    y = np.asarray(y, dtype=float)
    out = np.where(y < 1.0 / 6.0, (y + 1.0 / 3.0) / 2.0, y + 1.0 / 12.0)
    return float(out) if out.ndim == 0 else out


def prior_from_spec(spec: dict, base_dir=None):
    """Build a prior from a JSON-style dict (kind = gamma | uniform | exponential | mixture | empirical | uniform_int)."""
    if not isinstance(spec, dict) or "kind" not in spec:
        raise ValueError(f"prior description needs a 'kind': {spec!r}")
    kind = spec["kind"]
    if kind == "gamma":
        return GammaPrior(float(spec.get("shape", 5.0)), float(spec.get("scale", 1.0)))
    if kind == "uniform":
        return UniformPrior(float(spec.get("lo", 0.0)), float(spec.get("hi", 1.0)))
    if kind == "exponential":
        return ExponentialPrior(float(spec.get("rate", 1.0)), float(spec.get("loc", 0.0)))
    if kind == "mixture":
        comps = [prior_from_spec(c, base_dir) for c in spec["components"]]
        return MixturePrior(comps, spec["weights"])
    if kind == "empirical":
        path = Path(spec["samples_csv"])
        if base_dir is not None and not path.is_absolute():
            path = Path(base_dir) / path
        data = np.loadtxt(path, delimiter=",", ndmin=1)
        return empirical_virtual(data)
    if kind == "uniform_int":
        return UniformIntPrior(int(spec.get("lo", 1)), int(spec.get("hi", 4)))
    raise ValueError(f"unknown prior kind {kind!r}")
