"""Classification schemes: the cell probabilities of a multinomial experiment."""
from __future__ import annotations

import threading
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Mapping

import numpy as np

from . import kernels

SUM_TOL = 1e-12

KINDS = ("explicit", "uniform", "power")


def harmonic(r: int, a: float) -> float:
    """Generalised harmonic number ``sum_{k=1}^r k**(-a)``.

    Summed from the smallest term upward with compensation, so that
    ``harmonic(r, 0) == r`` exactly.
    """
    r = int(r)
    if r < 1:
        raise ValueError(f"r must be >= 1, got {r}")
    a = float(a)
    if a == 0.0:
        return float(r)
    k = np.arange(r, 0, -1, dtype=np.float64)
    return kernels.compensated_sum(k ** (-a))


@dataclass(frozen=True, eq=False)
class ClassificationScheme:
    """Cell probabilities ``p_1..p_r`` plus the parameters that generated them.

    Instances are immutable; moments are memoised behind a lock so a scheme
    can be shared between threads.
    """

    kind: str
    r: int
    a: float | None = None
    _probs: np.ndarray | None = field(default=None, repr=False)
    _cache: dict = field(default_factory=dict, repr=False, compare=False)
    _lock: threading.RLock = field(default_factory=threading.RLock, repr=False, compare=False)

    @property
    def probs(self) -> np.ndarray:
        with self._lock:
            p = self._cache.get("probs")
            if p is None:
                if self.kind == "uniform":
                    p = np.full(self.r, 1.0 / self.r)
                elif self.kind == "power":
                    z = self.normalizer
                    p = np.arange(1, self.r + 1, dtype=np.float64) ** (-self.a) / z
                else:
                    p = self._probs
                p.setflags(write=False)
                self._cache["probs"] = p
            return p

    @property
    def normalizer(self) -> float:
        """``z_r(a)`` for power schemes, ``r`` for uniform, 1 for explicit."""
        if self.kind == "uniform":
            return float(self.r)
        if self.kind == "power":
            return self._memo(("z", self.a), lambda: harmonic(self.r, self.a))
        return 1.0

    @property
    def max_prob(self) -> float:
        if self.kind == "uniform":
            return 1.0 / self.r
        if self.kind == "power":
            return 1.0 / self.normalizer
        return float(self.probs.max())

    @property
    def min_prob(self) -> float:
        if self.kind == "uniform":
            return 1.0 / self.r
        if self.kind == "power":
            return float(self.r) ** (-self.a) / self.normalizer
        return float(self.probs.min())

    @property
    def is_uniform(self) -> bool:
        return self.kind == "uniform" or (self.kind == "power" and self.a == 0.0)

    def descriptor(self) -> dict[str, Any]:
        if self.kind == "uniform":
            return {"kind": "uniform", "r": self.r}
        if self.kind == "power":
            return {"kind": "power", "r": self.r, "a": self.a}
        return {"kind": "explicit", "probs": self.probs.tolist()}

    def _memo(self, key, compute):
        with self._lock:
            if key in self._cache:
                return self._cache[key]
        value = compute()
        with self._lock:
            return self._cache.setdefault(key, value)


def uniform(r: int) -> ClassificationScheme:
    r = int(r)
    if r < 1:
        raise ValueError(f"uniform scheme needs r >= 1, got {r}")
    return ClassificationScheme("uniform", r)


def power(a: float, r: int) -> ClassificationScheme:
    """Discrete power distribution ``p_j = j**(-a) / z_r(a)``, ``a`` in [0, 1]."""
    r = int(r)
    a = float(a)
    if r < 1:
        raise ValueError(f"power scheme needs r >= 1, got {r}")
    if not 0.0 <= a <= 1.0:
        raise ValueError(f"power exponent a must lie in [0, 1], got {a}")
    return ClassificationScheme("power", r, a)


def explicit(probs) -> ClassificationScheme:
    p = np.array(probs, dtype=np.float64).ravel()
    if p.size < 1:
        raise ValueError("explicit scheme needs at least one cell")
    if not np.all(np.isfinite(p)) or np.any(p <= 0):
        raise ValueError("all cell probabilities must be strictly positive")
    total = kernels.compensated_sum(p)
    if abs(total - 1.0) > SUM_TOL:
        raise ValueError(f"cell probabilities sum to {total!r}, not 1")
    return ClassificationScheme("explicit", int(p.size), None, p)


def load_probs(path: str | Path) -> np.ndarray:
    """Read one probability per line; blank lines and ``#`` comments are skipped."""
    values = []
    for line in Path(path).read_text().splitlines():
        line = line.split("#", 1)[0].strip()
        if line:
            values.append(float(line))
    return np.array(values, dtype=np.float64)


def build_scheme(spec: Mapping[str, Any] | ClassificationScheme) -> ClassificationScheme:
    """Build a validated scheme from a descriptor.

    Accepted descriptors are ``{"kind": "uniform", "r": ...}``,
    ``{"kind": "power", "a": ..., "r": ...}`` and
    ``{"kind": "explicit", "probs": [...]}`` or
    ``{"kind": "explicit", "file": path}``.
    """
    if isinstance(spec, ClassificationScheme):
        return spec
    kind = spec.get("kind")
    if kind == "uniform":
        return uniform(_require(spec, "r"))
    if kind == "power":
        return power(_require(spec, "a"), _require(spec, "r"))
    if kind == "explicit":
        if spec.get("probs") is not None:
            return explicit(spec["probs"])
        if spec.get("file"):
            return explicit(load_probs(spec["file"]))
        raise ValueError("explicit scheme needs 'probs' or 'file'")
    raise ValueError(f"unknown scheme kind {kind!r}; expected one of {KINDS}")


def _require(spec, key):
    value = spec.get(key)
    if value is None:
        raise ValueError(f"scheme descriptor missing {key!r}")
    return value


def moment(scheme: ClassificationScheme, x: float) -> float:
    """``E[P**x] = sum_j p_j**(1 + x)``."""
    x = float(x)
    if scheme.kind == "uniform":
        return float(scheme.r) ** (-x)

    def compute():
        return kernels.compensated_sum(scheme.probs ** (1.0 + x))

    return scheme._memo(("moment", x), compute)


def var_log(scheme: ClassificationScheme) -> float:
    """``Var(log P)``, two-pass so the result is never negative."""
    if scheme.is_uniform:
        return 0.0

    def compute():
        p = scheme.probs
        lp = np.log(p)
        m = kernels.compensated_sum(p * lp)
        return kernels.compensated_sum(p * (lp - m) ** 2)

    return scheme._memo(("var_log",), compute)


def var_power(scheme: ClassificationScheme, x: float) -> float:
    """``Var(P**x)`` computed as ``E[(P**x - E[P**x])**2]``."""
    x = float(x)
    if scheme.is_uniform or x == 0.0:
        return 0.0

    def compute():
        p = scheme.probs
        px = p ** x
        m = moment(scheme, x)
        return kernels.compensated_sum(p * (px - m) ** 2)

    return scheme._memo(("var_power", x), compute)

