"""Monte-Carlo tail probabilities against the finite-time concentration bounds.

Replications are keyed by children of ``SeedSequence(seed)`` and run in
fixed-size chunks. The chunking does not depend on the number of worker
processes, so results are identical for any ``jobs`` value.
"""

from __future__ import annotations

import csv
import json
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from ..errors import MissingOptimum
from ..geometry import MapKind, MirrorMap, bregman_divergence
from ..optimizer import GRADIENT_FIRST, StepSchedule, run_smd_batch
from ..problems import ProblemConstants, ProblemSpec

Z95 = 1.959963984540054
CHUNK = 25


def wilson_interval(k, M, z: float = Z95):
    """Wilson score interval as ``(centre, half_width)``; arrays broadcast."""
    k = np.asarray(k, dtype=float)
    p = k / M
    denom = 1.0 + z * z / M
    centre = (p + z * z / (2 * M)) / denom
    half = z * np.sqrt(p * (1 - p) / M + z * z / (4 * M * M)) / denom
    return centre, half


def wilson_limits(k, M, z: float = Z95):
    """Wilson ``(lower, upper)`` without cancellation in the lower limit.

    The limits are the roots of a quadratic whose product is
    ``p^2 / (1 + z^2 / M)``, so the lower one is exactly 0 when ``k = 0``.
    """
    centre, half = wilson_interval(k, M, z)
    upper = centre + half
    p = np.asarray(k, dtype=float) / M
    lower = p * p / ((1.0 + z * z / M) * upper)
    return lower, upper


def checkpoint_grid(N: int, start_exp: int = 5) -> np.ndarray:
    """``2^k`` for ``k >= start_exp`` strictly below ``N``, then ``N`` itself."""
    if N < 1:
        raise ValueError("N must be >= 1")
    pts = []
    k = start_exp
    while 2 ** k < N:
        pts.append(2 ** k)
        k += 1
    pts.append(N)
    return np.array(pts, dtype=int)


# -- bounds and preconditions -----------------------------------------------------

def _exp_bound(num, den):
    num = np.asarray(num, dtype=float)
    den = np.asarray(den, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        expo = np.where(num > 0, num / den, 0.0)
    return np.exp(-np.nan_to_num(expo, nan=0.0, posinf=np.inf))


def convex_tail_bound(eps, sum_a, sum_a2, c: ProblemConstants):
    """``exp(-eps^2 (sum a)^2 / (72 D^2 G^2 sum a^2))``; 1 when ``sum a = 0``."""
    eps = np.asarray(eps, dtype=float)
    return _exp_bound(eps ** 2 * np.asarray(sum_a) ** 2,
                      72.0 * c.D_diam ** 2 * c.G_bound ** 2 * np.asarray(sum_a2))


def nonconvex_tail_bound(eps, sum_a, sum_a2, c: ProblemConstants):
    """``exp(-eps^4 (sum a)^2 / (18 G^4 sum a^2))``."""
    eps = np.asarray(eps, dtype=float)
    return _exp_bound(eps ** 4 * np.asarray(sum_a) ** 2, 18.0 * c.G_bound ** 4 * np.asarray(sum_a2))


def pl_tail_bound(eps, sum_a, sum_a2, c: ProblemConstants):
    """``exp(-eps^2 (sum a)^2 / (18 G^4 sum a^2))`` for the running minimum of ``f - f*``."""
    eps = np.asarray(eps, dtype=float)
    return _exp_bound(eps ** 2 * np.asarray(sum_a) ** 2, 18.0 * c.G_bound ** 4 * np.asarray(sum_a2))


def convex_precondition(eps, sum_a, sum_a2, c: ProblemConstants, D1: float):
    G, D, s = c.G_bound, c.D_diam, c.sigma_R
    with np.errstate(divide="ignore"):
        r1 = (3.0 / eps) * (D1 + 4.0 * G * D)
        r2 = 3.0 * (G + G * G + 2.0 * c.L_Pi * D * G) / (2.0 * s * eps) * sum_a2
    return sum_a >= np.maximum(r1, r2)


def nonconvex_precondition(eps, sum_a, sum_a2, c: ProblemConstants, f_excess: float):
    # the first clause uses max(G, G^2 / sigma): the statement has G, the proof G^2
    G, s = c.G_bound, c.sigma_R
    with np.errstate(divide="ignore"):
        r1 = (3.0 / eps ** 2) * (f_excess + 3.0 * max(G, G * G / s))
        r2 = (3.0 / eps ** 2) * (c.L_nu * G * G / s + c.L_Pi * G * G / s
                                 + c.L_smooth * G * G / (2.0 * s * s)) * sum_a2
    return sum_a >= np.maximum(r1, r2)


def pl_precondition(eps, sum_a, sum_a2, c: ProblemConstants, f_excess: float):
    G = c.G_bound
    third = eps * sum_a / 3.0
    ok1 = f_excess + 3.0 * G * G <= third
    ok2 = (c.L_nu * G * G + c.L_Pi * G * G + c.L_smooth * G * G / 2.0) * sum_a2 <= third
    return ok1 & ok2


def threshold_index(ok_path: np.ndarray) -> int:
    """1-based ``n`` from which ``ok_path`` stays true to the end of the horizon.

    Returns ``len(ok_path) + 1`` if the last entry fails.
    """
    bad = np.flatnonzero(~ok_path)
    return 1 if bad.size == 0 else int(bad[-1]) + 2


# -- estimate container --------------------------------------------------------

@dataclass
class TailEstimate:
    kind: str  # "convex", "nonconvex" or "pl"
    n_grid: np.ndarray
    eps_grid: np.ndarray
    M: int
    counts: np.ndarray  # (K, E) runs with statistic >= eps
    bound: np.ndarray
    precondition_ok: np.ndarray
    n_threshold: np.ndarray  # (E,) n_1 / n_0 over the checked horizon
    sum_alpha: np.ndarray
    sum_alpha_sq: np.ndarray
    constants: dict = field(default_factory=dict)
    fingerprint: str = ""

    @property
    def p_hat(self) -> np.ndarray:
        return self.counts / self.M

    @property
    def wilson(self):
        return wilson_interval(self.counts, self.M)

    @property
    def half_width(self) -> np.ndarray:
        return self.wilson[1]

    def assertions(self) -> list[dict]:
        """One record per grid cell.

        A cell is checked when the precondition holds and the bound is below
        one; it passes when the Wilson lower limit does not exceed the bound.
        """
        centre, half = self.wilson
        lower_all, _ = wilson_limits(self.counts, self.M)
        rows = []
        for i, n in enumerate(self.n_grid):
            for j, eps in enumerate(self.eps_grid):
                lower = float(lower_all[i, j])
                checked = bool(self.precondition_ok[i, j] and self.bound[i, j] < 1.0)
                rows.append(dict(
                    n=int(n), eps=float(eps), p_hat=float(self.p_hat[i, j]),
                    half_width=float(half[i, j]), wilson_lower=lower,
                    p_hat_minus_half=float(self.p_hat[i, j] - half[i, j]),
                    bound=float(self.bound[i, j]), precondition_ok=bool(self.precondition_ok[i, j]),
                    checked=checked, passed=(lower <= self.bound[i, j]) if checked else True,
                ))
        return rows

    @property
    def all_pass(self) -> bool:
        return all(r["passed"] for r in self.assertions())

    @property
    def n_checked(self) -> int:
        return sum(r["checked"] for r in self.assertions())

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            fh.write(f"# config_fingerprint={self.fingerprint}\n")
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(("n", "eps", "p_hat", "half_width", "bound", "precondition_ok"))
            for r in self.assertions():
                w.writerow((r["n"], repr(r["eps"]), repr(r["p_hat"]), repr(r["half_width"]),
                            repr(r["bound"]), int(r["precondition_ok"])))

    def summary(self) -> dict:
        rows = self.assertions()
        return {
            "kind": self.kind,
            "config_fingerprint": self.fingerprint,
            "M": self.M,
            "constants": self.constants,
            "n_threshold": {repr(float(e)): int(t) for e, t in zip(self.eps_grid, self.n_threshold)},
            "cells": len(rows),
            "cells_checked": sum(r["checked"] for r in rows),
            "verdict": "pass" if all(r["passed"] for r in rows) else "fail",
            "assertions": rows,
        }

    def write_json(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.summary(), fh, indent=2, sort_keys=True)
            fh.write("\n")


# -- experiment drivers ---------------------------------------------------------

def spawn_seeds(seed, M: int):
    return np.random.SeedSequence(seed).spawn(M)


def _run_chunk(args):
    prob, mmap, sched, N, seeds, record_at, order = args
    trajs = run_smd_batch(prob, mmap, sched, N, seeds, record_at=record_at, order=order)
    return [dict(f_gap_ergodic=t.f_gap_ergodic, gap_running_min=t.gap_running_min,
                 f_running_min=t.f_running_min, recorded_n=t.recorded_n, fingerprint=t.fingerprint,
                 max_step_ratio=t.max_step_ratio, min_coordinate=t.min_coordinate)
            for t in trajs]


def run_replications(prob: ProblemSpec, mmap: MirrorMap, sched: StepSchedule, N: int, M: int, seed,
                     record_at, jobs: int = 1, order: str = GRADIENT_FIRST, chunk: int = CHUNK) -> list[dict]:
    """Per-run statistics at ``record_at`` for ``M`` replications, in seed order."""
    seeds = spawn_seeds(seed, M)
    tasks = [(prob, mmap, sched, N, seeds[i:i + chunk], record_at, order) for i in range(0, M, chunk)]
    if jobs <= 1 or len(tasks) == 1:
        results = [_run_chunk(t) for t in tasks]
    else:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_run_chunk, tasks))
    return [r for chunk_res in results for r in chunk_res]


def _stat_at(runs, key, n_grid):
    rec = runs[0]["recorded_n"]
    idx = np.searchsorted(rec, n_grid)
    return np.stack([r[key][idx] for r in runs])  # (M, K)


def _horizon_sums(sched: StepSchedule, N: int):
    a = sched.alphas(N)
    return np.cumsum(a), np.cumsum(a * a)


def _prepare(N, M, eps_grid, n_grid):
    if M < 1:
        raise ValueError("M must be >= 1")
    eps = np.asarray(eps_grid, dtype=float)
    if eps.size == 0:
        raise ValueError("eps_grid must not be empty")
    if np.any(eps < 0):
        raise ValueError("eps values must be nonnegative")
    n_grid = checkpoint_grid(N) if n_grid is None else np.asarray(n_grid, dtype=int)
    return eps, n_grid


def _estimate(kind, stat, eps, n_grid, sched, N, bound_fn, pre_fn, consts, fingerprint, horizon_factor=4):
    M = stat.shape[0]
    counts = (stat[:, :, None] >= eps[None, None, :]).sum(axis=0)
    sa_h, sa2_h = _horizon_sums(sched, horizon_factor * N)
    sa, sa2 = sa_h[n_grid - 1], sa2_h[n_grid - 1]
    bound = bound_fn(eps[None, :], sa[:, None], sa2[:, None])
    thresholds = np.array([threshold_index(pre_fn(e, sa_h, sa2_h)) for e in eps])
    pre_ok = n_grid[:, None] >= thresholds[None, :]
    return TailEstimate(kind=kind, n_grid=n_grid, eps_grid=eps, M=M, counts=counts, bound=bound,
                        precondition_ok=pre_ok, n_threshold=thresholds, sum_alpha=sa, sum_alpha_sq=sa2,
                        constants=consts, fingerprint=fingerprint)


def _constants_for(prob, mmap):
    return prob.constants.for_map(mmap, prob.d)


def tail_experiment_convex(prob: ProblemSpec, mmap: MirrorMap, sched: StepSchedule, N: int, M: int,
                           eps_grid: Sequence[float], seed, jobs: int = 1, n_grid=None,
                           D1: Optional[float] = None, order: str = GRADIENT_FIRST) -> TailEstimate:
    """Empirical ``P(f(z_n) - f* >= eps)`` on the checkpoint grid.

    ``D1`` defaults to ``D_R(x*, x_1)`` for the uniform start.
    """
    if prob.x_star is None or prob.f_star is None:
        raise MissingOptimum("convex tail experiment needs a recorded optimum")
    eps, n_grid = _prepare(N, M, eps_grid, n_grid)
    c = _constants_for(prob, mmap)
    if D1 is None:
        D1 = float(bregman_divergence(mmap, prob.x_star, np.full(prob.d, 1.0 / prob.d)))
    runs = run_replications(prob, mmap, sched, N, M, seed, n_grid, jobs=jobs, order=order)
    stat = _stat_at(runs, "f_gap_ergodic", n_grid)
    consts = dict(c.as_dict(), D1=D1)
    return _estimate("convex", stat, eps, n_grid, sched, N,
                     lambda e, a, a2: convex_tail_bound(e, a, a2, c),
                     lambda e, a, a2: convex_precondition(e, a, a2, c, D1),
                     consts, runs[0]["fingerprint"])


def tail_experiment_nonconvex(prob: ProblemSpec, mmap: MirrorMap, sched: StepSchedule, N: int, M: int,
                              eps_grid: Sequence[float], seed, jobs: int = 1, n_grid=None,
                              order: str = GRADIENT_FIRST) -> dict[str, TailEstimate]:
    """Empirical ``P(min_{k<=n} Gap(x_k) >= eps)``.

    Returns ``{"nonconvex": ...}`` plus ``"pl"`` (running minimum of
    ``f - f_inf``) when the problem records a gradient-domination constant.
    """
    if mmap.kind is not MapKind.NEGATIVE_ENTROPY:
        raise ValueError("the non-convex tail experiment is defined for the entropy geometry")
    eps, n_grid = _prepare(N, M, eps_grid, n_grid)
    c = _constants_for(prob, mmap)
    x1 = np.full(prob.d, 1.0 / prob.d)
    f_excess = float(prob.f(x1) - prob.f_inf)
    runs = run_replications(prob, mmap, sched, N, M, seed, n_grid, jobs=jobs, order=order)
    fp = runs[0]["fingerprint"]
    consts = dict(c.as_dict(), f_excess=f_excess)
    out = {"nonconvex": _estimate(
        "nonconvex", _stat_at(runs, "gap_running_min", n_grid), eps, n_grid, sched, N,
        lambda e, a, a2: nonconvex_tail_bound(e, a, a2, c),
        lambda e, a, a2: nonconvex_precondition(e, a, a2, c, f_excess), consts, fp)}
    if c.mu_PL is not None:
        stat = _stat_at(runs, "f_running_min", n_grid) - prob.f_inf
        out["pl"] = _estimate(
            "pl", stat, eps, n_grid, sched, N,
            lambda e, a, a2: pl_tail_bound(e, a, a2, c),
            lambda e, a, a2: pl_precondition(e, a, a2, c, f_excess), consts, fp)
    return out
