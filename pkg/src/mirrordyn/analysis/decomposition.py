"""Poisson-equation decomposition of the Markov gradient noise.

For a recorded trajectory ``(x_n, S_n)`` with the gradient-first ordering,

    noise_{n+1} = G(x_n, S_n) - grad f(x_n) = A1_{n+1} + A2_{n+1}
    A1_{n+1}    = Gt(x_n, S_{n+1}) - (Pi Gt)(x_n, S_n)
    A2_{n+1}    = Gt(x_n, S_n) - Gt(x_n, S_{n+1})

where ``Gt`` is the centred Poisson solution at ``x_n``. Everything is
computed with the exact dense solvers.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from ..errors import DomainError, MissingOptimum
from ..markov import apply_kernel_expectation, inverse_cdf, poisson_solve, stationary_distribution
from ..optimizer import GRADIENT_FIRST, Trajectory
from ..problems import ObjectiveKind, ProblemSpec, subgradient_field
from ..stationarity import projected_direction

_CHUNK = 2048


@dataclass(frozen=True)
class NoiseDecomposition:
    """Per-step arrays indexed by ``n = 1..N`` (row ``n-1``)."""

    n: np.ndarray
    noise: np.ndarray
    A1: np.ndarray
    A2: np.ndarray
    residual: np.ndarray  # ||noise - A1 - A2||_inf
    cond_mean_A1: np.ndarray  # ||E[A1 | F_n]||_inf from the kernel row
    poisson_residual: np.ndarray  # ||(I - P) Gt - (G - 1 mu^T G)||_max
    successor_Gt: np.ndarray  # Gt(x_{n+1}, S_{n+1}), needed by the telescoping bounds

    @property
    def max_residual(self) -> float:
        return float(self.residual.max(initial=0.0))

    @property
    def max_cond_mean(self) -> float:
        return float(self.cond_mean_A1.max(initial=0.0))


def _require_dense(traj: Trajectory):
    if not traj.is_dense:
        raise ValueError("noise decomposition needs a trajectory recorded at every step (stride=1)")
    if traj.order != GRADIENT_FIRST:
        raise ValueError("the decomposition identity holds for the gradient-first ordering only")


def decompose_noise(traj: Trajectory, prob: ProblemSpec) -> NoiseDecomposition:
    _require_dense(traj)
    N = traj.n_iters
    X = traj.iterates  # x_1 .. x_{N+1}
    S = traj.states  # S_1 .. S_{N+1}
    parts = {k: [] for k in ("noise", "A1", "A2", "res", "cm", "pres", "succ")}
    for lo in range(0, N, _CHUNK):
        hi = min(lo + _CHUNK, N)
        # solve at x_lo .. x_hi (one extra point for the successor term)
        x = X[lo:hi + 1]
        P = prob.kernel.matrix(x)
        mu = stationary_distribution(P, check=False)
        G = subgradient_field(prob, x, mu=mu)
        Gt = poisson_solve(P, mu, G)
        PiGt = apply_kernel_expectation(P, Gt)
        centred = G - mu[..., None, :] @ G
        pres = np.abs(Gt - PiGt - centred).max(axis=(-1, -2))

        k = np.arange(hi - lo)
        s_now, s_next = S[lo:hi], S[lo + 1:hi + 1]
        noise = G[k, s_now] - prob.grad(x[k])
        A1 = Gt[k, s_next] - PiGt[k, s_now]
        A2 = Gt[k, s_now] - Gt[k, s_next]
        # conditional mean of A1 written out as a sum over the kernel row
        cm = np.einsum("nj,njd->nd", P[k, s_now], Gt[k]) - PiGt[k, s_now]
        parts["noise"].append(noise)
        parts["A1"].append(A1)
        parts["A2"].append(A2)
        parts["res"].append(np.abs(noise - A1 - A2).max(axis=-1))
        parts["cm"].append(np.abs(cm).max(axis=-1))
        parts["pres"].append(pres[k])
        parts["succ"].append(Gt[k + 1, s_next])
    cat = {k: np.concatenate(v) for k, v in parts.items()}
    return NoiseDecomposition(
        n=np.arange(1, N + 1), noise=cat["noise"], A1=cat["A1"], A2=cat["A2"],
        residual=cat["res"], cond_mean_A1=cat["cm"], poisson_residual=cat["pres"],
        successor_Gt=cat["succ"],
    )


@dataclass(frozen=True)
class MartingaleCheck:
    exact_mean: np.ndarray
    sample_mean: np.ndarray
    sample_std: np.ndarray
    z_scores: np.ndarray
    M: int


def martingale_check(prob: ProblemSpec, x, s: int, M: int, seed) -> MartingaleCheck:
    """Exact and sampled conditional mean of ``A1`` given ``(x, s)``.

    ``M`` successors are drawn from ``P(x)[s, :]``. A coordinate with zero
    sample variance gets z-score 0 if its sample mean is exactly zero and
    ``inf`` otherwise.
    """
    if M < 1000:
        raise ValueError("martingale_check needs M >= 1000 samples")
    x = np.asarray(x, dtype=float)
    if not 0 <= s < prob.m:
        raise IndexError(f"state {s} outside 0..{prob.m - 1}")
    P = prob.kernel.matrix(x)
    mu = stationary_distribution(P)
    Gt = poisson_solve(P, mu, subgradient_field(prob, x, mu=mu))
    PiGt = apply_kernel_expectation(P, Gt)
    row = P[s]
    exact = row @ Gt - PiGt[s]

    rng = np.random.default_rng(seed)
    succ = inverse_cdf(np.broadcast_to(row, (M, prob.m)), rng.random(M))
    samples = Gt[succ] - PiGt[s]
    mean = samples.mean(axis=0)
    std = samples.std(axis=0, ddof=1)
    with np.errstate(divide="ignore", invalid="ignore"):
        z = mean / (std / np.sqrt(M))
    z = np.where(std > 0, z, np.where(mean == 0, 0.0, np.inf))
    return MartingaleCheck(exact_mean=exact, sample_mean=mean, sample_std=std, z_scores=z, M=M)


@dataclass(frozen=True)
class BiasLedger:
    """Partial sums ``lhs[n-1]`` against the right-hand expressions ``rhs[n-1]``."""

    variant: str
    n: np.ndarray
    lhs: np.ndarray
    rhs: np.ndarray
    G: float

    @property
    def holds(self) -> np.ndarray:
        return self.lhs <= self.rhs

    @property
    def all_hold(self) -> bool:
        return bool(np.all(self.holds))

    @property
    def worst_ratio(self) -> float:
        return float(np.max(self.lhs / self.rhs))


def _effective_G(prob: ProblemSpec) -> float:
    # G must dominate both the oracle and the Poisson solution
    c = prob.constants
    g_t = c.g_tilde_sup if np.isfinite(c.g_tilde_sup) else 0.0
    return max(c.G_bound, g_t)


def bias_bound_check(traj: Trajectory, prob: ProblemSpec, decomposition: Optional[NoiseDecomposition] = None,
                     variant: Optional[str] = None) -> BiasLedger:
    """Markov-bias partial sums and their bounds at every ``n <= N``.

    ``variant="convex"`` uses ``|sum alpha_k <x* - x_k, A2_{k+1}>|`` with
    bound ``4GD + (G^2 / (2 sigma) + D L_Pi G / sigma) sum alpha_k^2``.
    ``variant="nonconvex"`` uses ``|sum alpha_k <grad f(x_k), T3_k>|``,
    ``T3_k`` the tangent projection of ``-x_k * A2_{k+1}``, with bound
    ``3 G^2 alpha_1 + (L_nu + L_Pi) G^2 sum alpha_k^2``. The default picks by
    objective kind.
    """
    if variant is None:
        variant = "nonconvex" if prob.kind is ObjectiveKind.NONCONVEX_QUADRATIC else "convex"
    if variant not in ("convex", "nonconvex"):
        raise ValueError(f"unknown variant {variant!r}")
    dec = decomposition if decomposition is not None else decompose_noise(traj, prob)
    N = traj.n_iters
    alphas = traj.alphas[:N]
    X = traj.iterates[:N]
    c = prob.constants
    G = _effective_G(prob)
    cum_a2 = np.cumsum(alphas * alphas)
    if variant == "convex":
        if prob.x_star is None:
            raise MissingOptimum("convex bias bound needs the optimum x*")
        terms = alphas * np.sum((prob.x_star - X) * dec.A2, axis=-1)
        D = c.D_diam
        rhs = 4.0 * G * D + (G * G / (2.0 * c.sigma_R) + D * c.L_Pi * G / c.sigma_R) * cum_a2
    else:
        if np.any(X <= 0):
            raise DomainError("non-convex bias term needs interior iterates")
        T3 = projected_direction(X, dec.A2)
        terms = alphas * np.sum(prob.grad(X) * T3, axis=-1)
        rhs = 3.0 * G * G * alphas[0] + (c.L_nu + c.L_Pi) * G * G * cum_a2
    lhs = np.abs(np.cumsum(terms))
    return BiasLedger(variant=variant, n=np.arange(1, N + 1), lhs=lhs, rhs=rhs, G=G)
