"""Finite-state decision-dependent Markov kernels and exact chain solvers.

A :class:`DecisionKernel` maps a decision ``x`` on the simplex to a
row-stochastic ``m x m`` matrix ``P(x)``. The solvers here (stationary
distribution, Poisson equation) are dense and exact, and double as the
ground-truth oracles for the noise-decomposition checks.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from pathlib import Path
from typing import Callable

import numpy as np

from .errors import (
    DimensionMismatch,
    NonErgodic,
    NonStochasticRow,
    SingularFundamentalMatrix,
)

ROW_SUM_TOL = 1e-9


class KernelKind(enum.Enum):
    CONSTANT = "constant"
    GIBBS_TILTED = "gibbs_tilted"
    CUSTOM = "custom"


class DecisionKernel:
    """Base class; subclasses implement :meth:`matrix` for stacked decisions."""

    kind: KernelKind
    m: int

    def matrix(self, x) -> np.ndarray:
        raise NotImplementedError

    def __call__(self, x) -> np.ndarray:
        return self.matrix(x)


class ConstantKernel(DecisionKernel):
    """Iterate-independent kernel ``P(x) = P``."""

    kind = KernelKind.CONSTANT

    def __init__(self, P):
        P = np.array(P, dtype=float)
        check_stochastic(P)
        self.P = P
        self.P.setflags(write=False)
        self.m = P.shape[0]

    def matrix(self, x):
        x = np.asarray(x, dtype=float)
        return np.broadcast_to(self.P, x.shape[:-1] + self.P.shape)


class GibbsTiltedKernel(DecisionKernel):
    """``P(x)[s, s'] ∝ B[s, s'] * exp(theta * <w_{s'}, x>)``, rows normalised.

    With a strictly positive base matrix ``B`` every ``P(x)`` is strictly
    positive, hence ergodic. ``theta = 0`` recovers the row-normalised ``B``.
    """

    kind = KernelKind.GIBBS_TILTED

    def __init__(self, base, weights, theta: float):
        base = np.array(base, dtype=float)
        weights = np.array(weights, dtype=float)
        if base.ndim != 2 or base.shape[0] != base.shape[1]:
            raise DimensionMismatch(f"base matrix must be square, got {base.shape}")
        if weights.ndim != 2 or weights.shape[0] != base.shape[0]:
            raise DimensionMismatch(f"weights must have {base.shape[0]} rows, got {weights.shape}")
        if np.any(base <= 0):
            raise ValueError("base matrix must be strictly positive")
        self.base = base
        self.weights = weights
        self.theta = float(theta)
        self.m = base.shape[0]

    @property
    def d(self) -> int:
        return self.weights.shape[1]

    def matrix(self, x):
        x = np.asarray(x, dtype=float)
        if x.shape[-1] != self.d:
            raise DimensionMismatch(f"kernel expects decisions of dimension {self.d}, got {x.shape[-1]}")
        logits = self.theta * (x @ self.weights.T)
        logits = logits - logits.max(axis=-1, keepdims=True)
        P = self.base * np.exp(logits)[..., None, :]
        return P / P.sum(axis=-1, keepdims=True)


class CallableKernel(DecisionKernel):
    """Wraps a user function ``x -> P(x)`` for a single decision."""

    kind = KernelKind.CUSTOM

    def __init__(self, fn: Callable[[np.ndarray], np.ndarray], m: int):
        self.fn = fn
        self.m = int(m)

    def matrix(self, x):
        x = np.asarray(x, dtype=float)
        flat = x.reshape(-1, x.shape[-1])
        out = np.stack([np.asarray(self.fn(xi), dtype=float) for xi in flat])
        if out.shape[1:] != (self.m, self.m):
            raise DimensionMismatch(f"kernel function returned shape {out.shape[1:]}, expected {(self.m, self.m)}")
        return out.reshape(x.shape[:-1] + (self.m, self.m))


def check_stochastic(P, tol: float = ROW_SUM_TOL) -> None:
    P = np.asarray(P, dtype=float)
    if P.ndim < 2 or P.shape[-1] != P.shape[-2]:
        raise DimensionMismatch(f"transition matrix must be square, got shape {P.shape}")
    if not np.all(np.isfinite(P)) or np.any(P < 0):
        raise NonStochasticRow("transition matrix has negative or non-finite entries")
    dev = np.abs(P.sum(axis=-1) - 1.0)
    if np.any(dev > tol):
        bad = np.unravel_index(np.argmax(dev), dev.shape)
        raise NonStochasticRow(f"row {bad[-1]} sums to {P.sum(axis=-1)[bad]:.12g}, not 1")


def load_kernel_file(path) -> ConstantKernel:
    """Read a constant kernel: one matrix row per line, whitespace separated.

    Blank lines and ``#`` comments are ignored.
    """
    rows = []
    for line in Path(path).read_text().splitlines():
        line = line.split("#", 1)[0].strip()
        if line:
            rows.append([float(tok) for tok in line.split()])
    if not rows:
        raise DimensionMismatch(f"{path}: no matrix rows found")
    m = len(rows)
    if any(len(r) != m for r in rows):
        raise DimensionMismatch(f"{path}: expected {m} entries per row for a square matrix")
    return ConstantKernel(np.array(rows))


# -- sampling -----------------------------------------------------------------

@dataclass(frozen=True)
class ChainState:
    s: int
    rng: np.random.Generator


def _clone(rng: np.random.Generator) -> np.random.Generator:
    out = np.random.Generator(type(rng.bit_generator)())
    out.bit_generator.state = rng.bit_generator.state
    return out


def inverse_cdf(rows, u):
    """Index ``j`` with ``cdf[j-1] <= u < cdf[j]`` for each row of ``rows``."""
    rows = np.asarray(rows)
    cdf = np.cumsum(rows, axis=-1)
    idx = (cdf <= np.asarray(u)[..., None]).sum(axis=-1)
    return np.minimum(idx, rows.shape[-1] - 1)


def kernel_step(kernel: DecisionKernel, x, state: ChainState) -> ChainState:
    """Draw ``S' ~ P(x)[s, :]`` by inverse CDF, consuming one uniform.

    The input state is left untouched; the returned state carries its own
    advanced generator.
    """
    if not 0 <= state.s < kernel.m:
        raise IndexError(f"state {state.s} outside 0..{kernel.m - 1}")
    row = np.asarray(kernel.matrix(x))[state.s]
    if np.any(row < 0) or abs(row.sum() - 1.0) > ROW_SUM_TOL:
        raise NonStochasticRow(f"row {state.s} sums to {row.sum():.12g}, not 1")
    rng = _clone(state.rng)
    u = rng.random()
    return ChainState(int(inverse_cdf(row, u)), rng)


# -- exact solvers --------------------------------------------------------------

def stationary_distribution(P, check: bool = True):
    """Stationary distribution ``mu`` with ``mu^T P = mu^T`` and ``sum mu = 1``.

    Solves ``(P^T - I) mu = 0`` with one balance equation replaced by the
    normalisation row. Works on stacks ``(..., m, m)``.

    Raises
    ------
    NonErgodic
        If ``I - P`` has more than one null direction.
    """
    P = np.asarray(P, dtype=float)
    if check:
        check_stochastic(P)
    m = P.shape[-1]
    eye = np.eye(m)
    if check and m > 1:
        sv = np.linalg.svd(eye - P, compute_uv=False)
        # one singular value is zero by construction; the next must not be
        if np.any(sv[..., -2] <= 1e-10 * np.maximum(sv[..., 0], 1.0)):
            raise NonErgodic("transition matrix has more than one closed class")
    A = np.swapaxes(P, -1, -2) - eye
    A[..., -1, :] = 1.0
    rhs = np.zeros(P.shape[:-1])
    rhs[..., -1] = 1.0
    try:
        mu = np.linalg.solve(A, rhs[..., None])[..., 0]
    except np.linalg.LinAlgError:
        raise NonErgodic("stationary system is singular") from None
    # one step of iterative refinement keeps the residual at roundoff level
    r = rhs - (A @ mu[..., None])[..., 0]
    mu = mu + np.linalg.solve(A, r[..., None])[..., 0]
    return mu


def poisson_solve(P, mu, G):
    """Centred solution ``Gt`` of the Poisson equation of the chain.

    Solves ``(I - P) Gt = G - 1 (mu^T G)`` with ``mu^T Gt = 0`` through the
    fundamental matrix ``(I - P + 1 mu^T)^{-1}``. ``G`` holds one vector per
    state, shape ``(..., m, d)``.
    """
    P = np.asarray(P, dtype=float)
    mu = np.asarray(mu, dtype=float)
    G = np.asarray(G, dtype=float)
    m = P.shape[-1]
    if mu.shape[-1] != m or G.shape[-2] != m:
        raise DimensionMismatch(f"shapes disagree: P {P.shape}, mu {mu.shape}, G {G.shape}")
    resid = np.abs((mu[..., None, :] @ P)[..., 0, :] - mu).max()
    if resid > 1e-8:
        raise SingularFundamentalMatrix(f"mu is not stationary for P (residual {resid:.3g})")
    mean = (mu[..., None, :] @ G)  # (..., 1, d)
    centred = G - mean
    fund = np.eye(m) - P + mu[..., None, :]
    try:
        cond = np.linalg.cond(fund)
    except np.linalg.LinAlgError:
        cond = np.inf
    if not np.all(np.isfinite(cond)) or np.any(cond > 1e12):
        raise SingularFundamentalMatrix("fundamental matrix is singular; chain is not ergodic")
    Gt = np.linalg.solve(fund, centred)
    # pin the free additive constant: mu^T Gt = 0
    Gt = Gt - mu[..., None, :] @ Gt
    return Gt


def apply_kernel_expectation(P, Gt):
    """``(Pi Gt)[s] = sum_{s'} P[s, s'] Gt[s']``."""
    P = np.asarray(P, dtype=float)
    Gt = np.asarray(Gt, dtype=float)
    if P.shape[-1] != Gt.shape[-2] or P.shape[-2] != P.shape[-1]:
        raise DimensionMismatch(f"cannot apply kernel of shape {P.shape} to {Gt.shape}")
    return P @ Gt
