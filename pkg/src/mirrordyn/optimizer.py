"""Stochastic mirror descent driven by an iterate-dependent Markov chain.

Per iteration ``n`` (default ordering)::

    g       = G(x_n, S_n)
    x_{n+1} = prox step of x_n along g with step alpha_n
    S_{n+1} ~ P(x_n)[S_n, :]

The engine advances a batch of independent trajectories (one per seed) in
lock-step with vectorised numpy. Each trajectory owns its generator and
consumes exactly one uniform per iteration, so a trajectory's output depends
only on its seed and the configuration.
"""

from __future__ import annotations

import csv
import enum
import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from . import geometry
from ._hashing import stable_hash
from .errors import DimensionMismatch, DomainError, IndexOutOfRange, ScheduleExhausted, StepBoundViolation
from .geometry import MapKind, MirrorMap
from .markov import inverse_cdf, stationary_distribution
from .problems import ProblemSpec

_UNIFORM_BLOCK = 4096


class ScheduleKind(enum.Enum):
    INV_SQRT = "invsqrt"
    CONSTANT = "constant"
    CUSTOM = "custom"


@dataclass(frozen=True)
class StepSchedule:
    kind: ScheduleKind
    a: float = 1.0
    values: tuple = ()

    def __post_init__(self):
        if self.kind is ScheduleKind.CUSTOM:
            v = np.asarray(self.values, dtype=float)
            if v.size == 0:
                raise ValueError("custom schedule needs at least one value")
            if np.any(v < 0) or not np.all(np.isfinite(v)):
                raise ValueError("step sizes must be finite and nonnegative")
            if np.any(np.diff(v) > 0):
                raise ValueError("step sizes must be non-increasing")
            object.__setattr__(self, "values", tuple(float(t) for t in v))
        elif not (self.a > 0 and math.isfinite(self.a)):
            raise ValueError("schedule scale a must be positive")

    @classmethod
    def inv_sqrt(cls, a: float = 1.0):
        return cls(ScheduleKind.INV_SQRT, a)

    @classmethod
    def constant(cls, a: float):
        return cls(ScheduleKind.CONSTANT, a)

    @classmethod
    def custom(cls, values: Sequence[float]):
        return cls(ScheduleKind.CUSTOM, values=tuple(values))

    def alphas(self, n: int) -> np.ndarray:
        """Step sizes ``alpha_1 .. alpha_n``."""
        if self.kind is ScheduleKind.INV_SQRT:
            return self.a / np.sqrt(np.arange(1, n + 1, dtype=float))
        if self.kind is ScheduleKind.CONSTANT:
            return np.full(n, float(self.a))
        if n > len(self.values):
            raise ScheduleExhausted(f"custom schedule has {len(self.values)} steps, {n} requested")
        return np.asarray(self.values[:n], dtype=float)

    def alpha(self, n: int) -> float:
        return float(self.alphas(n)[-1])

    def describe(self) -> dict:
        out = {"kind": self.kind.value, "a": self.a}
        if self.kind is ScheduleKind.CUSTOM:
            out["values"] = list(self.values)
        return out


GRADIENT_FIRST = "gradient_first"
TRANSITION_FIRST = "transition_first"


@dataclass
class Trajectory:
    """Recorded run. Row ``k`` of every per-row array describes iterate ``x_n``
    with ``n = recorded_n[k]``; the last row is the final iterate
    ``x_{N+1}``, for which ``alphas`` and ``step_len_l1`` are NaN.

    ``ergodic`` holds ``z_n = sum_{k<=n} alpha_k x_k / sum_{k<=n} alpha_k``.
    Running minima are exact over every iteration, not only recorded ones.
    """

    seed: object
    n_iters: int
    order: str
    recorded_n: np.ndarray
    iterates: np.ndarray
    states: np.ndarray
    alphas: np.ndarray
    ergodic: np.ndarray
    f_values: np.ndarray
    f_gap: np.ndarray
    f_gap_ergodic: np.ndarray
    gap: np.ndarray
    gap_running_min: np.ndarray
    f_running_min: np.ndarray
    bregman_to_opt: np.ndarray
    bregman_running_min: np.ndarray
    step_len_l1: np.ndarray
    grad_dual: np.ndarray
    sum_alpha: np.ndarray
    sum_alpha_sq: np.ndarray
    min_coordinate: float
    max_step_ratio: float
    fingerprint: str = ""
    meta: dict = field(default_factory=dict)

    @property
    def is_dense(self) -> bool:
        """True when every iterate ``x_1..x_{N+1}`` was recorded."""
        return len(self.recorded_n) == self.n_iters + 1

    def row(self, n: int) -> int:
        idx = np.searchsorted(self.recorded_n, n)
        if idx >= len(self.recorded_n) or self.recorded_n[idx] != n:
            raise IndexOutOfRange(f"iterate {n} was not recorded")
        return int(idx)


def ergodic_average(traj: Trajectory, n: int) -> np.ndarray:
    """Step-weighted average ``z_n`` of ``x_1..x_n``."""
    if not 1 <= n <= traj.n_iters:
        raise IndexOutOfRange(f"n={n} outside 1..{traj.n_iters}")
    return traj.ergodic[traj.row(n)].copy()


def record_indices(n_iters: int, stride: int) -> np.ndarray:
    """``1, 1+stride, 1+2*stride, ...`` plus the final iterate ``n_iters + 1``."""
    if stride < 1:
        raise ValueError("stride must be >= 1")
    idx = np.arange(1, n_iters + 2, stride)
    if idx[-1] != n_iters + 1:
        idx = np.append(idx, n_iters + 1)
    return idx


def _safe_gap(x, g):
    # Gap is only defined on the interior; euclidean runs may touch the boundary
    interior = np.all(x > 0, axis=-1)
    xs = np.where(interior[:, None], x, 1.0)
    inner = np.sum(xs * g, axis=-1, keepdims=True)
    nu = -xs * g + inner * xs
    out = np.sqrt(np.sum(nu * nu / xs, axis=-1))
    return np.where(interior, out, np.nan)


def _bregman_to(mmap, x_star, x):
    if mmap.kind is MapKind.NEGATIVE_ENTROPY:
        # log floor keeps a boundary component finite in diagnostics only
        xs = np.maximum(x, geometry.LOG_FLOOR)
        pos = x_star > 0
        return np.sum(x_star[pos] * np.log(x_star[pos] / xs[:, pos]), axis=-1)
    diff = x - x_star
    return 0.5 * np.sum(diff * diff, axis=-1)


class _Uniforms:
    """Per-trajectory uniform streams, drawn in blocks from independent generators."""

    def __init__(self, seeds):
        self.rngs = [np.random.default_rng(s) for s in seeds]
        self.buf = None
        self.pos = _UNIFORM_BLOCK

    def next(self):
        if self.pos == _UNIFORM_BLOCK:
            self.buf = np.stack([r.random(_UNIFORM_BLOCK) for r in self.rngs])
            self.pos = 0
        u = self.buf[:, self.pos]
        self.pos += 1
        return u


def run_smd_batch(prob: ProblemSpec, mmap: MirrorMap, sched: StepSchedule, n_iters: int,
                  seeds: Sequence, x_init=None, s_init: int = 0, stride: int = 1,
                  record_at=None, order: str = GRADIENT_FIRST,
                  fingerprint: Optional[str] = None) -> list[Trajectory]:
    """Run one trajectory per seed; returns trajectories in seed order.

    ``record_at`` (1-based iterate indices) overrides ``stride``; the final
    iterate is always recorded. Raises :class:`StepBoundViolation` if any step
    moves farther than ``alpha_n ||g||_* / sigma_R`` in the reference norm.
    """
    if n_iters < 1:
        raise ValueError("n_iters must be >= 1")
    if order not in (GRADIENT_FIRST, TRANSITION_FIRST):
        raise ValueError(f"unknown order {order!r}")
    seeds = list(seeds)
    M, d = len(seeds), prob.d
    alphas = sched.alphas(n_iters)

    x0 = np.full(d, 1.0 / d) if x_init is None else np.asarray(x_init, dtype=float)
    if x0.shape != (d,):
        raise DimensionMismatch(f"x_init has shape {x0.shape}, expected {(d,)}")
    if abs(x0.sum() - 1.0) > 1e-12 or np.any(x0 < 0):
        raise DomainError("x_init must lie on the simplex")
    if mmap.kind is MapKind.NEGATIVE_ENTROPY and np.any(x0 <= 0):
        raise DomainError("x_init must be strictly interior for the entropy map")
    if not 0 <= s_init < prob.m:
        raise IndexError(f"s_init must be in 0..{prob.m - 1}")

    if record_at is None:
        rec = record_indices(n_iters, stride)
    else:
        rec = np.unique(np.append(np.asarray(record_at, dtype=int), n_iters + 1))
        if rec[0] < 1 or rec[-1] > n_iters + 1:
            raise ValueError("record_at indices must lie in 1..n_iters+1")
    K = rec.size
    is_rec = np.zeros(n_iters + 2, dtype=bool)
    is_rec[rec] = True

    out = {name: np.full((M, K), np.nan) for name in (
        "alphas", "f_values", "f_gap", "f_gap_ergodic", "gap", "gap_running_min", "f_running_min",
        "bregman_to_opt", "bregman_running_min", "step_len_l1", "grad_dual", "sum_alpha", "sum_alpha_sq")}
    iterates = np.empty((M, K, d))
    ergodic = np.full((M, K, d), np.nan)
    states = np.empty((M, K), dtype=int)

    has_opt = prob.x_star is not None
    x_star = prob.x_star
    f_ref = prob.f_star if has_opt else None
    sigma = mmap.sigma_R
    C = prob.offsets
    rows = np.arange(M)
    uniforms = _Uniforms(seeds)

    x = np.tile(x0, (M, 1))
    s = np.full(M, s_init, dtype=int)
    sa = 0.0
    sa2 = 0.0
    wsum = np.zeros((M, d))
    run_gap = np.full(M, np.inf)
    run_f = np.full(M, np.inf)
    run_breg = np.full(M, np.inf)
    min_coord = x.min(axis=1)
    max_ratio = np.zeros(M)
    k = 0

    def diagnostics(x):
        fx = prob.f(x)
        gapv = _safe_gap(x, prob.grad(x))
        breg = _bregman_to(mmap, x_star, x) if has_opt else np.full(M, np.nan)
        return fx, gapv, breg

    for n in range(1, n_iters + 1):
        alpha = alphas[n - 1]
        P = prob.kernel.matrix(x)
        mu = stationary_distribution(P, check=False)
        s_next = inverse_cdf(P[rows, s], uniforms.next())
        s_grad = s if order == GRADIENT_FIRST else s_next
        g = prob.grad(x) + C[s_grad] - mu @ C
        x_new = geometry.mirror_update(mmap, x, g, alpha)

        step = x_new - x
        step_ref = geometry.norm(step, mmap.reference_norm)
        g_dual = geometry.norm(g, mmap.dual_norm)
        bound = alpha * g_dual / sigma
        if np.any(step_ref > bound * (1.0 + 1e-9) + 1e-15):
            bad = int(np.argmax(step_ref - bound))
            raise StepBoundViolation(
                f"step {n}: moved {step_ref[bad]:.3e} > alpha*||g||*/sigma = {bound[bad]:.3e}")
        with np.errstate(divide="ignore", invalid="ignore"):
            max_ratio = np.maximum(max_ratio, np.where(bound > 0, step_ref / bound, 0.0))

        fx, gapv, breg = diagnostics(x)
        sa += alpha
        sa2 += alpha * alpha
        wsum += alpha * x
        run_gap = np.fmin(run_gap, gapv)
        run_f = np.minimum(run_f, fx)
        run_breg = np.fmin(run_breg, breg)

        if is_rec[n]:
            z = wsum / sa if sa > 0 else x
            iterates[:, k] = x
            ergodic[:, k] = z
            states[:, k] = s
            out["alphas"][:, k] = alpha
            out["f_values"][:, k] = fx
            out["gap"][:, k] = gapv
            out["gap_running_min"][:, k] = run_gap
            out["f_running_min"][:, k] = run_f
            out["step_len_l1"][:, k] = np.abs(step).sum(axis=1)
            out["grad_dual"][:, k] = g_dual
            out["sum_alpha"][:, k] = sa
            out["sum_alpha_sq"][:, k] = sa2
            if has_opt:
                out["f_gap"][:, k] = fx - f_ref
                out["f_gap_ergodic"][:, k] = prob.f(z) - f_ref
                out["bregman_to_opt"][:, k] = breg
                out["bregman_running_min"][:, k] = run_breg
            k += 1

        x = x_new
        s = s_next
        min_coord = np.minimum(min_coord, x.min(axis=1))

    # final iterate x_{N+1}: no step is taken from it
    fx, gapv, breg = diagnostics(x)
    iterates[:, k] = x
    states[:, k] = s
    out["f_values"][:, k] = fx
    out["gap"][:, k] = gapv
    out["gap_running_min"][:, k] = np.fmin(run_gap, gapv)
    out["f_running_min"][:, k] = np.minimum(run_f, fx)
    out["sum_alpha"][:, k] = sa
    out["sum_alpha_sq"][:, k] = sa2
    if has_opt:
        out["f_gap"][:, k] = fx - f_ref
        out["bregman_to_opt"][:, k] = breg
        out["bregman_running_min"][:, k] = np.fmin(run_breg, breg)

    if fingerprint is None:
        fingerprint = stable_hash({"problem": prob.params, "map": mmap.name, "schedule": sched.describe(),
                                   "n_iters": n_iters, "order": order})
    trajs = []
    for i, seed in enumerate(seeds):
        trajs.append(Trajectory(
            seed=seed, n_iters=n_iters, order=order, recorded_n=rec.copy(),
            iterates=iterates[i], states=states[i], ergodic=ergodic[i],
            min_coordinate=float(min_coord[i]), max_step_ratio=float(max_ratio[i]),
            fingerprint=fingerprint,
            meta={"x_init": x0.tolist(), "s_init": s_init, "map": mmap.name},
            **{name: arr[i] for name, arr in out.items()},
        ))
    return trajs


def run_smd(prob: ProblemSpec, mmap: MirrorMap, sched: StepSchedule, n_iters: int,
            x_init=None, s_init: int = 0, seed=0, stride: int = 1, record_at=None,
            order: str = GRADIENT_FIRST, fingerprint: Optional[str] = None) -> Trajectory:
    """Run a single trajectory. Deterministic given ``seed`` and the arguments."""
    return run_smd_batch(prob, mmap, sched, n_iters, [seed], x_init=x_init, s_init=s_init,
                         stride=stride, record_at=record_at, order=order,
                         fingerprint=fingerprint)[0]


TRAJECTORY_COLUMNS = ("n", "alpha", "f_gap", "gap_riemann", "bregman_to_opt", "step_len_l1", "state")


def _fmt(v) -> str:
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    v = float(v)
    return "" if math.isnan(v) else repr(v)


def write_trajectory_csv(traj: Trajectory, path) -> None:
    """Write the recorded rows with a leading ``# config_fingerprint=`` line."""
    with open(path, "w", newline="") as fh:
        fh.write(f"# config_fingerprint={traj.fingerprint}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(TRAJECTORY_COLUMNS)
        for k, n in enumerate(traj.recorded_n):
            w.writerow([_fmt(n), _fmt(traj.alphas[k]), _fmt(traj.f_gap[k]), _fmt(traj.gap[k]),
                        _fmt(traj.bregman_to_opt[k]), _fmt(traj.step_len_l1[k]), _fmt(traj.states[k])])
