"""Numerical checks of the unconditional-setting theory.

Each update maximizes ``h(P) = log P(A) - lam * KL(P || P_t)`` over all
distributions.  The maximizer keeps the within-set proportions of ``P_t`` and
only moves the total mass ``alpha`` on the accepted set ``A``.  Stationarity in
``alpha`` gives

    lam * logit(alpha_next) - lam * logit(alpha) - 1 / alpha_next = 0,

solved here by bisection.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from itertools import combinations
from pathlib import Path
from typing import Sequence

import numpy as np
from scipy.stats import norm

SQRT_2_OVER_PI = math.sqrt(2.0 / math.pi)


@dataclass(frozen=True)
class TwoSetDist:
    """Base distribution ``p0`` over a finite outcome space, split into A (mask True) and B."""

    p0: np.ndarray
    in_a: np.ndarray
    alpha: float

    def __post_init__(self) -> None:
        p0 = np.asarray(self.p0, dtype=float)
        in_a = np.asarray(self.in_a, dtype=bool)
        object.__setattr__(self, "p0", p0)
        object.__setattr__(self, "in_a", in_a)
        if p0.shape != in_a.shape or p0.ndim != 1:
            raise ValueError("p0 and in_a must be 1-d arrays of equal length")
        if np.any(p0 < 0) or not math.isclose(p0.sum(), 1.0, abs_tol=1e-12):
            raise ValueError("p0 must be a probability vector")
        if p0[in_a].sum() <= 0 or p0[~in_a].sum() <= 0:
            raise ValueError("p0 needs nonzero mass on both A and B")
        if not 0.0 <= self.alpha <= 1.0:
            raise ValueError("alpha must lie in [0, 1]")

    @classmethod
    def from_base(cls, p0, in_a) -> "TwoSetDist":
        p0 = np.asarray(p0, dtype=float)
        return cls(p0, np.asarray(in_a, dtype=bool), float(p0[np.asarray(in_a, dtype=bool)].sum()))

    def probs(self) -> np.ndarray:
        pa = self.p0[self.in_a].sum()
        pb = self.p0[~self.in_a].sum()
        return np.where(self.in_a, self.alpha * self.p0 / pa, (1.0 - self.alpha) * self.p0 / pb)

    def with_alpha(self, alpha: float) -> "TwoSetDist":
        return TwoSetDist(self.p0, self.in_a, alpha)


def kl(p: np.ndarray, q: np.ndarray) -> float:
    """KL(p || q) with 0 log 0 = 0; inf when p puts mass where q has none."""
    p = np.asarray(p, dtype=float)
    q = np.asarray(q, dtype=float)
    nz = p > 0
    if np.any(q[nz] <= 0):
        return math.inf
    return float(np.sum(p[nz] * np.log(p[nz] / q[nz])))


def objective_h(p, p_t, in_a, lam: float) -> float:
    """``log P(A) - lam * KL(P || P_t)``; ``-inf`` when P(A) = 0."""
    p = np.asarray(p, dtype=float)
    mass_a = float(p[np.asarray(in_a, dtype=bool)].sum())
    if mass_a <= 0.0:
        return -math.inf
    return math.log(mass_a) - lam * kl(p, p_t)


def _logit(a: float) -> float:
    return math.log(a) - math.log1p(-a)


def logit_step(u: float, lam: float, tol: float = 1e-12) -> float:
    """Next log-odds of A given current log-odds ``u``.

    In log-odds ``v`` the stationarity condition reads
    ``lam * (v - u) = 1 + exp(-v)``; the left side minus the right is strictly
    increasing in ``v``, negative at ``v = u`` and positive at
    ``v = u + (1 + exp(-u)) / lam``, so bisection on that bracket converges.
    """
    if lam <= 0 or not math.isfinite(lam):
        raise ValueError("lam must be finite and positive")

    def g(v: float) -> float:
        return lam * (v - u) - 1.0 - math.exp(-v)

    lo = u
    hi = u + (1.0 + math.exp(-u)) / lam
    while hi - lo > tol * max(1.0, abs(lo)):
        mid = 0.5 * (lo + hi)
        if mid <= lo or mid >= hi:
            break
        if g(mid) < 0.0:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def _expit(u: float) -> float:
    return 1.0 / (1.0 + math.exp(-u)) if u >= 0 else math.exp(u) / (1.0 + math.exp(u))


def alpha_step(alpha: float, lam: float, tol: float = 1e-12) -> float:
    """Next mass on A after one KL-penalized update (unique root on ``(alpha, 1)``)."""
    if lam <= 0 or not math.isfinite(lam):
        raise ValueError("lam must be finite and positive")
    if alpha >= 1.0:
        return 1.0
    if alpha <= 0.0:
        # zero mass on A makes log P(A) = -inf for every P absolutely continuous w.r.t. P_t
        return 0.0
    return _expit(logit_step(_logit(alpha), lam, tol))


@dataclass
class AlphaTrace:
    alphas: list[float]
    odds: list[float]
    h_values: list[float]


def iterate_alpha(alpha0: float, lam: float, T: int) -> AlphaTrace:
    """Run ``T`` updates from ``alpha0``; records odds ratios and ``h(P_{t+1}; P_t)``."""
    alphas = [alpha0]
    for _ in range(T):
        alphas.append(alpha_step(alphas[-1], lam))
    odds = [a / (1.0 - a) if a < 1.0 else math.inf for a in alphas]
    h_vals = [math.nan]
    for a_prev, a_next in zip(alphas, alphas[1:]):
        h_vals.append(_h_alpha(a_next, a_prev, lam))
    return AlphaTrace(alphas, odds, h_vals)


def _h_alpha(a: float, a_t: float, lam: float) -> float:
    """h restricted to prop-preserving distributions, as a function of their A-mass."""
    if a <= 0.0:
        return -math.inf
    klv = 0.0
    if a > 0:
        klv += a * math.log(a / a_t)
    if a < 1:
        klv += (1 - a) * math.log((1 - a) / (1 - a_t))
    return math.log(a) - lam * klv


def bound_time(eps: float, alpha0: float, lam: float) -> float:
    """Sufficient iteration count for ``alpha >= 1 - eps``: ``-lam * log(eps * alpha0)``."""
    return -lam * math.log(eps * alpha0)


def check_bound(trace: AlphaTrace, eps: float, lam: float) -> bool:
    t_star = bound_time(eps, trace.alphas[0], lam)
    return all(a >= 1.0 - eps for t, a in enumerate(trace.alphas) if t >= t_star)


def simplex_grid(n: int, resolution: int) -> np.ndarray:
    """All points of the probability simplex in R^n with coordinates in multiples of 1/resolution."""
    # stars and bars: choose n-1 bar positions among resolution + n - 1 slots
    rows = []
    for bars in combinations(range(resolution + n - 1), n - 1):
        prev = -1
        parts = []
        for b in bars:
            parts.append(b - prev - 1)
            prev = b
        parts.append(resolution + n - 2 - prev)
        rows.append(parts)
    return np.asarray(rows, dtype=float) / resolution


def argmax_bruteforce(p_t: np.ndarray, in_a: np.ndarray, lam: float, resolution: int = 200) -> np.ndarray:
    """Grid-search maximizer of ``objective_h`` over the simplex (oracle for small outcome spaces)."""
    p_t = np.asarray(p_t, dtype=float)
    in_a = np.asarray(in_a, dtype=bool)
    if p_t.size > 5:
        raise ValueError("grid search limited to |Y| <= 5")
    grid = _cached_grid(p_t.size, resolution)
    mass_a = grid[:, in_a].sum(axis=1)
    with np.errstate(divide="ignore", invalid="ignore"):
        terms = np.where(grid > 0, grid * np.log(grid / p_t), 0.0)
        vals = np.log(mass_a) - lam * terms.sum(axis=1)
    vals[mass_a <= 0] = -np.inf
    return grid[int(np.argmax(vals))]


_GRIDS: dict[tuple[int, int], np.ndarray] = {}


def _cached_grid(n: int, resolution: int) -> np.ndarray:
    key = (n, resolution)
    if key not in _GRIDS:
        _GRIDS[key] = simplex_grid(n, resolution)
    return _GRIDS[key]


def closed_form_update(dist: TwoSetDist, lam: float) -> TwoSetDist:
    return dist.with_alpha(alpha_step(dist.alpha, lam))


# -- Gaussian toy ------------------------------------------------------------------


def truncated_mean(mu: float) -> float:
    """Mean of N(mu, 1) conditioned on Y > 0."""
    return mu + math.exp(norm.logpdf(mu) - norm.logcdf(mu))


@dataclass
class GaussianTrace:
    mus: list[float]
    truncated_means: list[float]
    direct_projection_mean: float = SQRT_2_OVER_PI


def gaussian_toy(T: int, finite_samples: int | None = None, seed: int = 0) -> GaussianTrace:
    """Refit the mean of N(mu, 1) on its own samples restricted to Y > 0, starting at mu = 0.

    The default is the population update ``mu <- E[Y | Y > 0]``; with
    ``finite_samples`` each step instead averages that many accepted draws.
    """
    rng = np.random.default_rng(seed)
    mus = [0.0]
    for _ in range(T):
        mu = mus[-1]
        if finite_samples is None:
            mus.append(truncated_mean(mu))
        else:
            acc: list[np.ndarray] = []
            got = 0
            while got < finite_samples:
                y = rng.normal(mu, 1.0, size=2 * finite_samples)
                y = y[y > 0]
                acc.append(y)
                got += y.size
            mus.append(float(np.concatenate(acc)[:finite_samples].mean()))
    return GaussianTrace(mus, [truncated_mean(m) for m in mus])


# -- reports ---------------------------------------------------------------------------


def write_alpha_report(path: str | Path, trace: AlphaTrace) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["t", "alpha", "odds_ratio", "h"])
        for t, (a, o, h) in enumerate(zip(trace.alphas, trace.odds, trace.h_values)):
            w.writerow([t, repr(a), repr(o), repr(h)])


def write_gaussian_report(path: str | Path, trace: GaussianTrace) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["t", "mu", "truncated_mean", "direct_projection_mean"])
        for t, (m, tm) in enumerate(zip(trace.mus, trace.truncated_means)):
            w.writerow([t, repr(m), repr(tm), repr(trace.direct_projection_mean)])


def prop1_sweep(lams: Sequence[float], alpha0s: Sequence[float], epsilons: Sequence[float]) -> list[dict]:
    """Check monotonicity, objective ascent and the sufficient-time bound on a parameter grid."""
    rows = []
    for lam in lams:
        for a0 in alpha0s:
            T = int(math.ceil(max(bound_time(e, a0, lam) for e in epsilons))) + 5
            tr = iterate_alpha(a0, lam, T)
            increasing = all(b > a for a, b in zip(tr.alphas, tr.alphas[1:]) if a < 1.0)
            ascent = all(
                _h_alpha(b, a, lam) >= _h_alpha(a, a, lam) - 1e-10 for a, b in zip(tr.alphas, tr.alphas[1:])
            )
            for eps in epsilons:
                rows.append({
                    "lam": lam, "alpha0": a0, "eps": eps, "T": T,
                    "t_bound": bound_time(eps, a0, lam),
                    "strictly_increasing": increasing,
                    "objective_ascent": ascent,
                    "bound_holds": check_bound(tr, eps, lam),
                })
    return rows
