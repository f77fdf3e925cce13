"""Offspring distributions of the branching tree.

Each distribution knows its probability mass function, its generating
function G(x) = sum_m x^m P(m children) with the closed form used wherever
the family admits one, the derivative G'(x), and how to draw child counts
from a caller-owned random generator.

Every family must place positive mass on {1, 2, ...}: a tree whose root
never has children makes the game trivial, so P(0 children) = 1 is rejected
at construction time.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Union

import numpy as np

ArrayLike = Union[float, np.ndarray]

_PGF_DOMAIN_SLACK = 1e-9


class DistributionError(ValueError):
    """Invalid distribution parameters."""


def _check_unit_interval(x: ArrayLike) -> ArrayLike:
    """Validate pgf arguments, tolerating tiny floating-point overshoot."""
    arr = np.asarray(x, dtype=float)
    if np.any(arr < -_PGF_DOMAIN_SLACK) or np.any(arr > 1.0 + _PGF_DOMAIN_SLACK):
        raise DistributionError(f"pgf argument outside [0, 1]: {x!r}")
    clipped = np.clip(arr, 0.0, 1.0)
    return clipped if isinstance(x, np.ndarray) else float(clipped)


class OffspringDistribution:
    """Base class; subclasses implement the per-family closed forms."""

    family: str = ""

    def pmf(self, m: int) -> float:
        raise NotImplementedError

    def pgf(self, x: ArrayLike) -> ArrayLike:
        raise NotImplementedError

    def pgf_derivative(self, x: ArrayLike) -> ArrayLike:
        raise NotImplementedError

    def sample(self, rng: np.random.Generator, size=None):
        raise NotImplementedError

    def support_bound(self, tail_mass: float = 1e-12) -> int:
        """Smallest M with P(children > M) < tail_mass."""
        total = 0.0
        m = 0
        while total < 1.0 - tail_mass:
            total += self.pmf(m)
            m += 1
            if m > 10**7:
                raise DistributionError("support bound search did not terminate")
        return m - 1

    def params(self) -> dict:
        raise NotImplementedError

    def to_json(self) -> dict:
        return {"family": self.family, "params": self.params()}

    def _validate(self) -> None:
        if self.pmf(0) >= 1.0:
            raise DistributionError("distribution must give positive mass to m >= 1")


@dataclass(frozen=True)
class Dirac(OffspringDistribution):
    """Every vertex has exactly m children (the rooted m-regular tree)."""

    m: int
    family: str = field(default="dirac", init=False, repr=False)

    def __post_init__(self):
        if not (isinstance(self.m, (int, np.integer)) and self.m >= 1):
            raise DistributionError("Dirac: m must be a positive integer")

    def pmf(self, m: int) -> float:
        return 1.0 if m == self.m else 0.0

    def pgf(self, x):
        return _check_unit_interval(x) ** self.m

    def pgf_derivative(self, x):
        x = _check_unit_interval(x)
        return self.m * x ** (self.m - 1)

    def sample(self, rng, size=None):
        return self.m if size is None else np.full(size, self.m, dtype=np.int64)

    def params(self):
        return {"m": self.m}


@dataclass(frozen=True)
class UniformRange(OffspringDistribution):
    """Uniform child count on {1, ..., m}."""

    m: int
    family: str = field(default="uniform", init=False, repr=False)

    def __post_init__(self):
        if not (isinstance(self.m, (int, np.integer)) and self.m >= 1):
            raise DistributionError("UniformRange: m must be a positive integer")

    def pmf(self, m: int) -> float:
        return 1.0 / self.m if 1 <= m <= self.m else 0.0

    def pgf(self, x):
        x = _check_unit_interval(x)
        acc = np.zeros_like(np.asarray(x, dtype=float))
        for _ in range(self.m):  # Horner: x(1 + x(1 + ...)) = x + x^2 + ... + x^m
            acc = x * (acc + 1.0)
        acc = acc / self.m
        return acc if isinstance(x, np.ndarray) else float(acc)

    def pgf_derivative(self, x):
        x = _check_unit_interval(x)
        acc = np.zeros_like(np.asarray(x, dtype=float))
        for k in range(self.m, 0, -1):  # Horner on sum_k k x^(k-1)
            acc = acc * x + k
        acc = acc / self.m
        return acc if isinstance(x, np.ndarray) else float(acc)

    def sample(self, rng, size=None):
        return int(rng.integers(1, self.m + 1)) if size is None else rng.integers(1, self.m + 1, size=size)

    def params(self):
        return {"m": self.m}


@dataclass(frozen=True)
class Binomial(OffspringDistribution):
    """Binomial(n, pi) child counts."""

    n: int
    pi: float
    family: str = field(default="binomial", init=False, repr=False)

    def __post_init__(self):
        if not (isinstance(self.n, (int, np.integer)) and self.n >= 1):
            raise DistributionError("Binomial: n must be a positive integer")
        if not 0.0 < self.pi <= 1.0:
            raise DistributionError("Binomial: pi must be in (0, 1]")

    def pmf(self, m: int) -> float:
        if not 0 <= m <= self.n:
            return 0.0
        return math.comb(self.n, m) * self.pi**m * (1.0 - self.pi) ** (self.n - m)

    def pgf(self, x):
        x = _check_unit_interval(x)
        return (1.0 - self.pi + self.pi * x) ** self.n

    def pgf_derivative(self, x):
        x = _check_unit_interval(x)
        return self.n * self.pi * (1.0 - self.pi + self.pi * x) ** (self.n - 1)

    def sample(self, rng, size=None):
        out = rng.binomial(self.n, self.pi, size=size)
        return int(out) if size is None else out

    def params(self):
        return {"n": self.n, "pi": self.pi}


@dataclass(frozen=True)
class Poisson(OffspringDistribution):
    """Poisson(lam) child counts; G(x) = exp(lam (x - 1))."""

    lam: float
    family: str = field(default="poisson", init=False, repr=False)

    def __post_init__(self):
        if not self.lam > 0.0:
            raise DistributionError("Poisson: lam must be positive")

    def pmf(self, m: int) -> float:
        return math.exp(-self.lam + m * math.log(self.lam) - math.lgamma(m + 1)) if m >= 0 else 0.0

    def pgf(self, x):
        x = _check_unit_interval(x)
        return np.exp(self.lam * (x - 1.0))

    def pgf_derivative(self, x):
        return self.lam * self.pgf(x)

    def sample(self, rng, size=None):
        out = rng.poisson(self.lam, size=size)
        return int(out) if size is None else out

    def params(self):
        return {"lam": self.lam}


@dataclass(frozen=True)
class NegBinomial(OffspringDistribution):
    """Negative binomial: failures before the r-th success, success prob pi.

    G(x) = pi^r (1 - (1 - pi) x)^(-r).  With r = 1 this is the geometric law,
    for which the draw probability is known to vanish identically.
    """

    r: int
    pi: float
    family: str = field(default="negbinomial", init=False, repr=False)

    def __post_init__(self):
        if not (isinstance(self.r, (int, np.integer)) and self.r >= 1):
            raise DistributionError("NegBinomial: r must be a positive integer")
        if not 0.0 < self.pi < 1.0:
            raise DistributionError("NegBinomial: pi must be in (0, 1)")

    def pmf(self, m: int) -> float:
        if m < 0:
            return 0.0
        return math.comb(m + self.r - 1, m) * self.pi**self.r * (1.0 - self.pi) ** m

    def pgf(self, x):
        x = _check_unit_interval(x)
        return self.pi**self.r * (1.0 - (1.0 - self.pi) * x) ** (-self.r)

    def pgf_derivative(self, x):
        x = _check_unit_interval(x)
        return (self.r * (1.0 - self.pi) * self.pi**self.r
                * (1.0 - (1.0 - self.pi) * x) ** (-self.r - 1))

    def sample(self, rng, size=None):
        out = rng.negative_binomial(self.r, self.pi, size=size)
        return int(out) if size is None else out

    def params(self):
        return {"r": self.r, "pi": self.pi}


@dataclass(frozen=True)
class TwoPoint(OffspringDistribution):
    """Mass 1 - pi on 0 children and pi on d children, d >= 2."""

    pi: float
    d: int
    family: str = field(default="twopoint", init=False, repr=False)

    def __post_init__(self):
        if not 0.0 < self.pi < 1.0:
            raise DistributionError("TwoPoint: pi must be in (0, 1)")
        if not (isinstance(self.d, (int, np.integer)) and self.d >= 2):
            raise DistributionError("TwoPoint: d must be an integer >= 2")

    def pmf(self, m: int) -> float:
        if m == 0:
            return 1.0 - self.pi
        if m == self.d:
            return self.pi
        return 0.0

    def pgf(self, x):
        x = _check_unit_interval(x)
        return (1.0 - self.pi) + self.pi * x**self.d

    def pgf_derivative(self, x):
        x = _check_unit_interval(x)
        return self.pi * self.d * x ** (self.d - 1)

    def sample(self, rng, size=None):
        if size is None:
            return self.d if rng.random() < self.pi else 0
        return np.where(rng.random(size) < self.pi, self.d, 0).astype(np.int64)

    def params(self):
        return {"pi": self.pi, "d": self.d}


@dataclass(frozen=True)
class Explicit(OffspringDistribution):
    """Finite user-supplied pmf; entry m is the probability of m children."""

    pmf_values: tuple
    family: str = field(default="explicit", init=False, repr=False)

    def __init__(self, pmf_values):
        values = tuple(float(v) for v in pmf_values)
        if len(values) == 0:
            raise DistributionError("Explicit: pmf must be non-empty")
        if any(v < 0 for v in values):
            raise DistributionError("Explicit: pmf entries must be non-negative")
        if abs(sum(values) - 1.0) > 1e-12:
            raise DistributionError("Explicit: pmf must sum to 1 within 1e-12")
        object.__setattr__(self, "pmf_values", values)
        self._validate()

    def pmf(self, m: int) -> float:
        return self.pmf_values[m] if 0 <= m < len(self.pmf_values) else 0.0

    def pgf(self, x):
        x = _check_unit_interval(x)
        acc = np.zeros_like(np.asarray(x, dtype=float))
        for v in reversed(self.pmf_values):
            acc = acc * x + v
        return acc if isinstance(x, np.ndarray) else float(acc)

    def pgf_derivative(self, x):
        x = _check_unit_interval(x)
        acc = np.zeros_like(np.asarray(x, dtype=float))
        for m in range(len(self.pmf_values) - 1, 0, -1):
            acc = acc * x + m * self.pmf_values[m]
        return acc if isinstance(x, np.ndarray) else float(acc)

    def sample(self, rng, size=None):
        out = rng.choice(len(self.pmf_values), size=size, p=self.pmf_values)
        return int(out) if size is None else out.astype(np.int64)

    def params(self):
        return {"pmf": list(self.pmf_values)}


def geometric(pi: float) -> NegBinomial:
    """Geometric(pi) offspring, exposed as NegBinomial with r = 1."""
    return NegBinomial(1, pi)


_FAMILIES = {
    "dirac": lambda p: Dirac(int(p["m"])),
    "uniform": lambda p: UniformRange(int(p["m"])),
    "binomial": lambda p: Binomial(int(p["n"]), float(p["pi"])),
    "poisson": lambda p: Poisson(float(p["lam"])),
    "negbinomial": lambda p: NegBinomial(int(p["r"]), float(p["pi"])),
    "geometric": lambda p: geometric(float(p["pi"])),
    "twopoint": lambda p: TwoPoint(float(p["pi"]), int(p["d"])),
    "explicit": lambda p: Explicit(p["pmf"]),
}


def distribution_from_json(obj: dict) -> OffspringDistribution:
    """Build a distribution from {"family": ..., "params": {...}}."""
    try:
        family = obj["family"]
        params = obj.get("params", {})
    except (TypeError, KeyError) as exc:
        raise DistributionError(f"malformed distribution spec: {obj!r}") from exc
    if family not in _FAMILIES:
        raise DistributionError(f"unknown offspring family: {family!r}")
    return _FAMILIES[family](params)
