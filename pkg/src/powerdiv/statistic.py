"""The power divergence statistic, its normalised form and occupancy counts."""
from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping

import numpy as np

from . import kernels
from .scheme import ClassificationScheme, moment


def g_lambda(x, lam: float):
    """Power divergence kernel ``g_lambda`` for ``x >= 0`` and ``lam > -1``.

    ``lam == 0`` gives ``2 x log x``; otherwise ``2x(x**lam - 1)/(lam(lam+1))``,
    evaluated through ``expm1`` so small ``lam`` and ``x`` near 1 keep full
    precision. ``g_lambda(0) == 0`` by continuity and ``g_lambda(1) == 0``
    exactly. Scalars in, float out; arrays in, arrays out.
    """
    lam = float(lam)
    if not lam > -1.0:
        raise ValueError(f"lambda must be > -1, got {lam}")
    arr = np.asarray(x, dtype=np.float64)
    if np.any(arr < 0) or np.any(np.isnan(arr)):
        raise ValueError("g_lambda is defined for x >= 0 only")
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        lx = np.log(arr)
        if lam == 0.0:
            out = 2.0 * arr * lx
        else:
            # (x**lam - 1)/lam = log(x) * expm1(t)/t with t = lam log x; the
            # ratio is taken from its series for tiny t, so lam never divides.
            t = lam * lx
            ratio = np.where(np.abs(t) < 1e-8, 1.0 + 0.5 * t, np.expm1(t) / t)
            out = 2.0 * arr * lx * ratio / (lam + 1.0)
    out = np.where(arr == 0.0, 0.0, out)
    if out.ndim == 0:
        return float(out)
    return out


@dataclass(frozen=True)
class StatisticConfig:
    lam: float
    n: int
    g2: float = field(init=False)

    def __post_init__(self):
        if not float(self.lam) > -1.0:
            raise ValueError(f"lambda must be > -1, got {self.lam}")
        if int(self.n) != self.n or self.n < 1:
            raise ValueError(f"n must be a positive integer, got {self.n}")
        object.__setattr__(self, "lam", float(self.lam))
        object.__setattr__(self, "n", int(self.n))
        object.__setattr__(self, "g2", g_lambda(2.0, self.lam))

    def g(self, x):
        return g_lambda(x, self.lam)

    def g_table(self) -> np.ndarray:
        """``g(k) / g(2)`` for ``k = 0..n``; entry 2 is exactly 1."""
        return g_lambda(np.arange(self.n + 1, dtype=np.float64), self.lam) / self.g2


@dataclass(frozen=True)
class Counts:
    """Cell counts in sparse form: occupied 0-based cells and their counts."""

    cells: np.ndarray
    values: np.ndarray
    r: int

    def __post_init__(self):
        cells = np.asarray(self.cells, dtype=np.int64)
        values = np.asarray(self.values, dtype=np.int64)
        if cells.shape != values.shape:
            raise ValueError("cells and values must have equal length")
        if cells.size and (cells.min() < 0 or cells.max() >= self.r):
            raise ValueError("cell index out of range")
        if np.any(values <= 0):
            raise ValueError("sparse counts must be positive")
        order = np.argsort(cells, kind="stable")
        cells, values = cells[order], values[order]
        if cells.size > 1 and np.any(cells[1:] == cells[:-1]):
            raise ValueError("duplicate cell in sparse counts")
        object.__setattr__(self, "cells", cells)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "r", int(self.r))

    @property
    def n(self) -> int:
        return int(self.values.sum())

    @classmethod
    def from_dense(cls, counts) -> "Counts":
        dense = np.asarray(counts)
        if dense.ndim != 1 or np.any(dense < 0) or not np.all(dense == np.floor(dense)):
            raise ValueError("dense counts must be a vector of non-negative integers")
        dense = dense.astype(np.int64)
        cells = np.flatnonzero(dense)
        return cls(cells, dense[cells], dense.shape[0])

    @classmethod
    def from_assignments(cls, assignments, r: int) -> "Counts":
        a = np.asarray(assignments, dtype=np.int64)
        if a.size and (a.min() < 0 or a.max() >= r):
            raise ValueError(f"assignment outside cells 0..{r - 1}")
        cells, values = np.unique(a, return_counts=True)
        return cls(cells, values, r)

    @classmethod
    def from_mapping(cls, mapping: Mapping[int, int], r: int) -> "Counts":
        items = [(int(c), int(v)) for c, v in mapping.items() if int(v) != 0]
        cells = [c for c, _ in items]
        values = [v for _, v in items]
        return cls(np.array(cells, dtype=np.int64), np.array(values, dtype=np.int64), r)

    def dense(self) -> np.ndarray:
        out = np.zeros(self.r, dtype=np.int64)
        out[self.cells] = self.values
        return out

    def to_csv(self, path: str | Path) -> None:
        """Write ``cell,count`` rows (1-based cells); zero cells are implied."""
        lines = ["cell,count"]
        lines += [f"{c + 1},{v}" for c, v in zip(self.cells.tolist(), self.values.tolist())]
        Path(path).write_text("\n".join(lines) + "\n")

    @classmethod
    def read_csv(cls, path: str | Path, r: int) -> "Counts":
        mapping: dict[int, int] = {}
        for line in Path(path).read_text().splitlines():
            line = line.strip()
            if not line or line.startswith("cell"):
                continue
            c, v = line.split(",")
            mapping[int(c) - 1] = mapping.get(int(c) - 1, 0) + int(v)
        return cls.from_mapping(mapping, r)


def read_assignments(path: str | Path) -> np.ndarray:
    """Whitespace-separated 1-based cell indices, returned 0-based."""
    return np.array(Path(path).read_text().split(), dtype=np.int64) - 1


@dataclass(frozen=True)
class RepresentationSplit:
    w_part: float
    r_part: float

    @property
    def total(self) -> float:
        return self.w_part + self.r_part


def _check(cfg: StatisticConfig, scheme: ClassificationScheme, counts: Counts) -> None:
    if counts.r != scheme.r:
        raise ValueError(f"counts have {counts.r} cells but the scheme has {scheme.r}")
    if counts.n != cfg.n:
        raise ValueError(f"counts total {counts.n} differs from n={cfg.n}")


def _occupied_probs(scheme: ClassificationScheme, cells: np.ndarray) -> np.ndarray:
    if scheme.kind == "uniform":
        return np.full(cells.shape[0], 1.0 / scheme.r)
    return scheme.probs[cells]


def _use_sparse(method: str, cfg: StatisticConfig, scheme: ClassificationScheme) -> bool:
    if method not in ("auto", "dense", "sparse"):
        raise ValueError(f"unknown method {method!r}")
    return method == "sparse" or (method == "auto" and scheme.r > 10 * cfg.n)


def t_lambda(cfg: StatisticConfig, scheme: ClassificationScheme, counts: Counts, method: str = "auto") -> float:
    """``T_lambda = n sum_j p_j g(N_j / (n p_j))``.

    The sparse path touches occupied cells only, using
    ``T = n**-lam sum p_j**-lam g(N_j) + n sum N_j p_j g(1/(n p_j))``.
    """
    _check(cfg, scheme, counts)
    n, lam = cfg.n, cfg.lam
    if _use_sparse(method, cfg, scheme):
        p = _occupied_probs(scheme, counts.cells)
        N = counts.values.astype(np.float64)
        cell_part = kernels.compensated_sum(p ** (-lam) * cfg.g(N))
        draw_part = kernels.compensated_sum(N * p * cfg.g(1.0 / (n * p)))
        return n ** (-lam) * cell_part + n * draw_part
    p = scheme.probs
    N = counts.dense().astype(np.float64)
    return n * kernels.compensated_sum(p * cfg.g(N / (n * p)))


def normalization(cfg: StatisticConfig, scheme: ClassificationScheme, generic: bool = False) -> tuple[float, float]:
    """Centre and scale with ``T~ = scale * (T - centre)``.

    ``centre = n**2 E[P g(1/(nP))]`` and ``scale = n**lam / (g(2) E[P**-lam])``.
    Uniform schemes use closed forms unless ``generic`` is set.
    """
    n, lam = cfg.n, cfg.lam
    if scheme.kind == "uniform" and not generic:
        r = scheme.r
        return n * n / r * cfg.g(r / n), (n / r) ** lam / cfg.g2
    p = scheme.probs
    center = n * n * kernels.compensated_sum(p * p * cfg.g(1.0 / (n * p)))
    e = kernels.compensated_sum(p ** (1.0 - lam)) if scheme.kind == "uniform" else moment(scheme, -lam)
    return center, n ** lam / (cfg.g2 * e)


def _cell_weights(cfg: StatisticConfig, scheme: ClassificationScheme, p: np.ndarray) -> np.ndarray:
    return p ** (-cfg.lam) / moment(scheme, -cfg.lam)


def _draw_term(cfg: StatisticConfig, p: np.ndarray) -> np.ndarray:
    return p * cfg.g(1.0 / (cfg.n * p))


def remainder_center(cfg: StatisticConfig, scheme: ClassificationScheme) -> tuple[float, float]:
    """``(n E[P g(1/(nP))], n**(lam+1) / (g(2) E[P**-lam]))`` used by the draw-term remainder."""
    n, lam = cfg.n, cfg.lam
    mean = n * kernels.compensated_sum(scheme.probs * _draw_term(cfg, scheme.probs))
    return mean, n ** (lam + 1.0) / (cfg.g2 * moment(scheme, -lam))


def _split_from_counts(cfg: StatisticConfig, scheme: ClassificationScheme, counts: Counts) -> RepresentationSplit:
    N = counts.values
    gk = cfg.g(N.astype(np.float64)) / cfg.g2
    if scheme.is_uniform:
        # p_j**-lam / E[P**-lam] == 1 and the draw term is constant: R vanishes identically.
        return RepresentationSplit(kernels.compensated_sum(gk), 0.0)
    p = scheme.probs[counts.cells]
    w = kernels.compensated_sum(_cell_weights(cfg, scheme, p) * gk)
    mean, rscale = remainder_center(cfg, scheme)
    s = kernels.compensated_sum(N * _draw_term(cfg, p))
    return RepresentationSplit(w, rscale * (s - mean))


def t_tilde(cfg: StatisticConfig, scheme: ClassificationScheme, counts: Counts, method: str = "auto") -> float:
    """Normalised statistic ``scale * (T_lambda - centre)``."""
    _check(cfg, scheme, counts)
    if _use_sparse(method, cfg, scheme):
        return _split_from_counts(cfg, scheme, counts).total
    center, scale = normalization(cfg, scheme)
    return scale * (t_lambda(cfg, scheme, counts, method="dense") - center)


def representation_split(cfg: StatisticConfig, scheme: ClassificationScheme, assignments) -> RepresentationSplit:
    """Split ``T~ = W + R`` from the individual trial outcomes (0-based cells).

    ``W`` is the weighted sum of ``g(N_j)`` over occupied cells and ``R`` the
    centred sum of per-trial terms ``p_X g(1/(n p_X))``.
    """
    a = np.asarray(assignments, dtype=np.int64)
    if a.shape[0] != cfg.n:
        raise ValueError(f"expected {cfg.n} assignments, got {a.shape[0]}")
    counts = Counts.from_assignments(a, scheme.r)
    if scheme.is_uniform:
        return _split_from_counts(cfg, scheme, counts)
    gk = cfg.g(counts.values.astype(np.float64)) / cfg.g2
    w = kernels.compensated_sum(_cell_weights(cfg, scheme, scheme.probs[counts.cells]) * gk)
    mean, rscale = remainder_center(cfg, scheme)
    s = kernels.compensated_sum(_draw_term(cfg, scheme.probs[a]))
    return RepresentationSplit(w, rscale * (s - mean))


def occupancy_count(counts: Counts, m: int) -> int:
    """Number of cells holding exactly ``m`` observations."""
    m = int(m)
    if m < 0:
        raise ValueError("m must be non-negative")
    if m == 0:
        return counts.r - int(counts.cells.shape[0])
    return int(np.count_nonzero(counts.values == m))


def pearson(scheme: ClassificationScheme, counts: Counts) -> float:
    """``sum_j (N_j - n p_j)**2 / (n p_j)``."""
    n = counts.n
    e = n * scheme.probs
    return kernels.compensated_sum((counts.dense() - e) ** 2 / e)


def log_likelihood_ratio(scheme: ClassificationScheme, counts: Counts) -> float:
    """``2 sum_{N_j > 0} N_j log(N_j / (n p_j))``."""
    n = counts.n
    N = counts.values.astype(np.float64)
    p = _occupied_probs(scheme, counts.cells)
    return 2.0 * kernels.compensated_sum(N * np.log(N / (n * p)))


def kernel_inputs(cfg: StatisticConfig, scheme: ClassificationScheme) -> dict:
    """Per-scheme constants consumed by the replicate kernels."""
    if scheme.is_uniform:
        return {"wcell": np.empty(0), "scell": np.empty(0), "mean": 0.0, "rscale": 0.0}
    p = scheme.probs
    mean, rscale = remainder_center(cfg, scheme)
    return {
        "wcell": np.ascontiguousarray(_cell_weights(cfg, scheme, p)),
        "scell": np.ascontiguousarray(_draw_term(cfg, p)),
        "mean": mean,
        "rscale": rscale,
    }

