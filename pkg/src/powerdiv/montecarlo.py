"""Monte Carlo sampling of multinomial experiments and empirical Kolmogorov distances.

Randomness is counter based: trial ``k`` of replicate ``i`` is a pure
function of ``(seed, i, k)``. Splitting replicates across workers therefore
cannot change any sample, and the compiled and numpy kernels agree bit for
bit.
"""
from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Mapping, Sequence

import numpy as np
from scipy import special

from . import kernels
from .bounds import mu as _mu
from .report import format_float, write_npz
from .scheme import ClassificationScheme, build_scheme
from .statistic import Counts, StatisticConfig, kernel_inputs

TAIL_EPS = 1e-12
DKW_ALPHA = 0.05
TARGETS = ("t_tilde", "occupancy")

WORKERS_ENV = "POWERDIV_WORKERS"


def default_workers() -> int:
    env = os.environ.get(WORKERS_ENV)
    if env:
        return max(1, int(env))
    return os.cpu_count() or 1


class Sampler:
    """Categorical sampler for one scheme.

    Uniform schemes map a uniform variate straight to a cell; other schemes
    use an alias table built once in O(r).
    """

    def __init__(self, scheme: ClassificationScheme):
        self.scheme = scheme
        if scheme.kind == "uniform":
            self.prob = np.empty(0, dtype=np.float64)
            self.alias = np.empty(0, dtype=np.int64)
        else:
            self.prob, self.alias = kernels.build_alias(scheme.probs * scheme.r)

    def draw(self, seed: int, replicate: int, n: int) -> np.ndarray:
        return kernels.draw_cells(seed, replicate, n, self.scheme.r, self.prob, self.alias)


def sample_counts(scheme: ClassificationScheme, n: int, seed: int, replicate: int = 0,
                  sampler: Sampler | None = None) -> Counts:
    """Counts of ``n`` categorical trials from the stream ``(seed, replicate)``."""
    sampler = sampler or Sampler(scheme)
    return Counts.from_assignments(sampler.draw(seed, replicate, int(n)), scheme.r)


@dataclass(frozen=True)
class ExperimentConfig:
    scheme: Mapping[str, Any]
    n: int
    lam: float
    replicates: int
    seed: int
    targets: tuple[str, ...] = ("t_tilde",)
    level: int = 2

    def __post_init__(self):
        if self.replicates < 1:
            raise ValueError("replicates must be >= 1")
        if self.n < 1:
            raise ValueError("n must be >= 1")
        bad = [t for t in self.targets if t not in TARGETS]
        if bad:
            raise ValueError(f"unknown targets {bad}; expected a subset of {TARGETS}")
        object.__setattr__(self, "targets", tuple(self.targets))


@dataclass
class ReplicateBatch:
    """Per-replicate samples in replicate order."""

    config: ExperimentConfig
    t_tilde: np.ndarray
    w_part: np.ndarray
    r_part: np.ndarray
    occupancy: np.ndarray
    mu: float = field(default=float("nan"))

    def target(self, name: str) -> np.ndarray:
        if name == "t_tilde":
            return self.t_tilde
        if name == "occupancy":
            return self.occupancy.astype(np.float64)
        raise KeyError(name)

    def write_csv(self, path: str | Path) -> None:
        """One row per replicate, one column per requested target."""
        cols = [self.target(t) for t in self.config.targets]
        with open(path, "w") as fh:
            fh.write(",".join(self.config.targets) + "\n")
            for row in zip(*(c.tolist() for c in cols)):
                fh.write(",".join(format_float(v) for v in row) + "\n")

    def write_npz(self, path: str | Path) -> None:
        write_npz(path, {t: self.target(t) for t in self.config.targets})

    def write(self, path: str | Path) -> None:
        """Dump to ``.npz`` or CSV, chosen by the file suffix."""
        if str(path).endswith(".npz"):
            self.write_npz(path)
        else:
            self.write_csv(path)


def _block_size(n: int) -> int:
    # Bounds fallback memory (~2**21 draws per block); has no effect on values.
    return max(1, min(1 << 16, (1 << 21) // max(n, 1)))


def simulate(config: ExperimentConfig, workers: int | None = None,
             scheme: ClassificationScheme | None = None) -> ReplicateBatch:
    """Run ``config.replicates`` independent experiments.

    Replicates are cut into fixed blocks that are dealt to a thread pool; the
    compiled kernel releases the GIL. Results are assembled in replicate
    order, so output does not depend on ``workers``.
    """
    scheme = scheme or build_scheme(config.scheme)
    cfg = StatisticConfig(config.lam, config.n)
    sampler = Sampler(scheme)
    inputs = kernel_inputs(cfg, scheme)
    gk = np.ascontiguousarray(cfg.g_table())
    total = int(config.replicates)
    size = _block_size(cfg.n)
    starts = list(range(0, total, size))
    workers = workers or default_workers()

    def run(start: int):
        count = min(size, total - start)
        return kernels.simulate_block(
            int(config.seed), start, count, cfg.n, scheme.r, sampler.prob, sampler.alias,
            inputs["wcell"], inputs["scell"], gk, int(config.level),
        )

    if workers == 1 or len(starts) == 1:
        parts = [run(s) for s in starts]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(run, starts))
    w = np.concatenate([p[0] for p in parts])
    s = np.concatenate([p[1] for p in parts])
    occ = np.concatenate([p[2] for p in parts])
    if scheme.is_uniform:
        r_part = np.zeros(total)
    else:
        r_part = inputs["rscale"] * (s - inputs["mean"])
    mu_val = _mu(scheme, cfg.n, int(config.level)) if cfg.n >= config.level else 0.0
    return ReplicateBatch(config, w + r_part, w, r_part, occ, mu_val)


def poisson_pmf(mu: float, kmax: int) -> np.ndarray:
    """Poisson(mu) pmf on ``0..kmax``, by recurrence outward from the mode.

    The recurrence is run past the numerically relevant horizon and rescaled
    to unit mass, so the rounding in the anchor value at the mode cancels and
    lower and upper tail sums agree to a few ulps.
    """
    if mu < 0:
        raise ValueError("mu must be non-negative")
    kmax = int(kmax)
    if mu == 0.0:
        out = np.zeros(kmax + 1)
        out[0] = 1.0
        return out
    kend = max(kmax, _poisson_horizon(mu, 0) + 60)
    out = np.zeros(kend + 1)
    mode = int(math.floor(mu))
    out[mode] = math.exp(mode * math.log(mu) - mu - math.lgamma(mode + 1))
    for k in range(mode + 1, kend + 1):
        out[k] = out[k - 1] * mu / k
    for k in range(mode - 1, -1, -1):
        out[k] = out[k + 1] * (k + 1) / mu
    out /= math.fsum(out.tolist())
    return out[: kmax + 1].copy()


def _poisson_horizon(mu: float, k0: int) -> int:
    return int(max(k0, mu + 40.0 * math.sqrt(mu) + 60.0))


def _mode(mu: float) -> int:
    return int(math.floor(mu))


def poisson_survival(mu: float, y: float) -> float:
    """``P(Z >= y)`` for ``Z ~ Poisson(mu)``.

    At or below the mode the complement ``1 - P(Z < y)`` is summed, above it
    the upper tail, so both the bulk (absolute error) and the far tail
    (relative error) stay accurate.
    """
    if mu < 0:
        raise ValueError("mu must be non-negative")
    k0 = math.ceil(y)
    if k0 <= 0:
        return 1.0
    if mu == 0.0:
        return 0.0
    if k0 <= _mode(mu):
        return 1.0 - math.fsum(poisson_pmf(mu, k0 - 1).tolist())
    kend = _poisson_horizon(mu, k0) + 60
    pmf = poisson_pmf(mu, kend)
    return math.fsum(pmf[k0:].tolist())


def poisson_survival_table(mu: float, kmax: int) -> np.ndarray:
    """``P(Z >= k)`` for ``k = 0..kmax``, with the same split as :func:`poisson_survival`."""
    kend = _poisson_horizon(mu, kmax) + 60
    pmf = poisson_pmf(mu, kend)
    upper = np.cumsum(pmf[::-1])[::-1]
    lower = 1.0 - np.concatenate(([0.0], np.cumsum(pmf)[:-1]))
    k = np.arange(kend + 1)
    out = np.where(k <= _mode(mu), lower, upper)[: kmax + 1].copy()
    out[0] = 1.0
    return out


def poisson_tail_cutoff(mu: float, eps: float = TAIL_EPS) -> int:
    """Smallest ``K`` with ``P(Z >= K) < eps``."""
    if mu == 0.0:
        return 1
    kend = _poisson_horizon(mu, 0)
    surv = poisson_survival_table(mu, kend)
    below = np.flatnonzero(surv < eps)
    return int(below[0])


def normal_survival(y):
    """``P(N >= y)`` for a standard normal."""
    out = 0.5 * special.erfc(np.asarray(y, dtype=np.float64) / math.sqrt(2.0))
    return float(out) if np.ndim(out) == 0 else out


def dkw_margin(n_samples: int, alpha: float = DKW_ALPHA) -> float:
    """Distribution-free half-width ``sqrt(log(2/alpha) / (2N))``."""
    return math.sqrt(math.log(2.0 / alpha) / (2.0 * n_samples))


def empirical_survival(sorted_samples: np.ndarray, y) -> np.ndarray:
    """``#{x >= y} / N`` on sorted samples."""
    x = np.asarray(sorted_samples)
    return (x.shape[0] - np.searchsorted(x, y, side="left")) / x.shape[0]


@dataclass(frozen=True)
class KolmogorovReport:
    d_hat: float
    argmax_point: float
    argmax_side: str
    dkw_margin: float
    tail_truncation: float
    n_samples: int
    reference: str

    def to_dict(self) -> dict:
        return {
            "d_hat": self.d_hat,
            "argmax_point": self.argmax_point,
            "argmax_side": self.argmax_side,
            "dkw_margin": self.dkw_margin,
            "tail_truncation": self.tail_truncation,
            "n_samples": self.n_samples,
            "reference": self.reference,
        }


def empirical_dk(samples: Sequence[float] | np.ndarray, reference: str = "poisson",
                 mu: float | None = None) -> KolmogorovReport:
    """Exact ``sup_y |P_hat(X >= y) - P(Z >= y)|`` against Poisson(mu) or N(0, 1).

    Both survival functions are left-continuous steps (the normal one is
    continuous), so the supremum is attained at a candidate point or just
    above one. Candidates are the sample atoms plus, for Poisson, the
    lattice ``0..K`` where ``P(Z >= K) < 1e-12``.
    """
    x = np.sort(np.asarray(samples, dtype=np.float64))
    N = x.shape[0]
    if N == 0:
        raise ValueError("empirical_dk needs at least one sample")
    atoms = np.unique(x)
    if reference == "poisson":
        if mu is None or mu < 0:
            raise ValueError("Poisson reference needs mu >= 0")
        K = poisson_tail_cutoff(mu)
        cand = np.union1d(atoms, np.arange(K + 1, dtype=np.float64))
        lo = np.ceil(cand).astype(np.int64)
        hi = np.floor(cand).astype(np.int64) + 1
        top = max(K + 1, 1)
        table = poisson_survival_table(mu, top)

        def ref(k):
            k = np.clip(k, 0, None)
            out = np.empty(k.shape[0])
            inside = k <= top
            out[inside] = table[k[inside]]
            for i in np.flatnonzero(~inside):
                out[i] = poisson_survival(mu, float(k[i]))
            return out

        s_at, s_above = ref(lo), ref(hi)
        tail = float(table[top]) if top <= K + 1 else 0.0
        label = f"poisson({mu!r})"
    elif reference == "normal":
        cand = atoms
        s_at = s_above = normal_survival(cand)
        s_at = np.atleast_1d(s_at)
        s_above = s_at
        tail = 0.0
        label = "normal"
    else:
        raise ValueError(f"unknown reference {reference!r}")
    e_at = (N - np.searchsorted(x, cand, side="left")) / N
    e_above = (N - np.searchsorted(x, cand, side="right")) / N
    d_at = np.abs(e_at - s_at)
    d_above = np.abs(e_above - s_above)
    i_at = int(np.argmax(d_at))
    i_above = int(np.argmax(d_above))
    if d_above[i_above] >= d_at[i_at]:
        d_hat, point, side = float(d_above[i_above]), float(cand[i_above]), "above"
    else:
        d_hat, point, side = float(d_at[i_at]), float(cand[i_at]), "at"
    return KolmogorovReport(d_hat, point, side, dkw_margin(N), tail, N, label)
