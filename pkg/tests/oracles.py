"""Independent reference implementations used only by the tests.

None of these reuse the package's numerical routes: the prox oracle runs a
primal Newton method on the KKT system, the Poisson oracle solves the
stacked least-squares form, the stationary oracle uses an eigenvector, and
the KL oracle evaluates in 50-digit arithmetic.
"""

from __future__ import annotations

import mpmath
import numpy as np


def kl_mp(x, y, dps: int = 50) -> float:
    with mpmath.workdps(dps):
        total = mpmath.mpf(0)
        for xi, yi in zip(x, y):
            xi, yi = mpmath.mpf(xi), mpmath.mpf(yi)
            if xi > 0:
                total += xi * mpmath.log(xi / yi)
        return float(total)


def prox_objective(x_new, x, g, alpha):
    with np.errstate(divide="ignore", invalid="ignore"):
        kl = np.where(x_new > 0, x_new * np.log(x_new / x), 0.0).sum(axis=-1)
    return np.sum(g * x_new, axis=-1) + kl / alpha


def prox_newton(x, g, alpha, iters: int = 200, tol: float = 1e-15):
    """Interior Newton method for ``min <g, y> + KL(y, x) / alpha`` s.t. ``1^T y = 1``.

    Batched over rows. Each step solves the equality-constrained Newton KKT
    system ``[H 1; 1^T 0][dy; nu] = [-grad; 0]`` (``H`` diagonal, so the
    multiplier is eliminated in closed form) and is damped to stay positive.
    """
    x = np.atleast_2d(np.asarray(x, dtype=float))
    g = np.atleast_2d(np.asarray(g, dtype=float))
    alpha = np.broadcast_to(np.asarray(alpha, dtype=float), x.shape[:1])[:, None]
    y = x.copy()
    for _ in range(iters):
        grad = g + (np.log(y / x) + 1.0) / alpha
        hinv = alpha * y
        nu = -np.sum(hinv * grad, axis=1, keepdims=True) / np.sum(hinv, axis=1, keepdims=True)
        step = -hinv * (grad + nu)
        with np.errstate(divide="ignore", invalid="ignore"):
            ratio = np.where(step < 0, -y / step, np.inf)
        t = np.minimum(1.0, 0.9 * ratio.min(axis=1, keepdims=True))
        y = y + t * step
        y = y / y.sum(axis=1, keepdims=True)
        if np.max(np.abs(t * step) / y) < tol:
            break
    return y


def stationary_eig(P):
    w, V = np.linalg.eig(np.asarray(P, dtype=float).T)
    v = np.real(V[:, np.argmin(np.abs(w - 1.0))])
    return v / v.sum()


def poisson_lstsq(P, mu, G):
    """Least-squares solve of ``[(I - P); mu^T] Gt = [G - 1 mu^T G; 0]``."""
    P, mu, G = (np.asarray(a, dtype=float) for a in (P, mu, G))
    m = P.shape[0]
    A = np.vstack([np.eye(m) - P, mu[None, :]])
    rhs = np.vstack([G - mu @ G, np.zeros((1, G.shape[1]))])
    return np.linalg.lstsq(A, rhs, rcond=None)[0]


def simplex_qp_bruteforce(a, b, grid: int = 400):
    """Minimum of a separable quadratic on the 2-simplex over a barycentric grid."""
    a, b = np.asarray(a, dtype=float), np.asarray(b, dtype=float)
    i, j = np.meshgrid(np.arange(grid + 1), np.arange(grid + 1), indexing="ij")
    keep = i + j <= grid
    x = np.stack([i[keep], j[keep], grid - i[keep] - j[keep]], axis=1) / grid
    f = np.sum(a * x * x + b * x, axis=1)
    k = int(np.argmin(f))
    return x[k], float(f[k])


def tangent_qp_dense(x, g):
    """Unscaled KKT solve of ``min (v + x g)^T diag(1/x) (v + x g)`` s.t. ``1^T v = 0``."""
    x, g = np.asarray(x, dtype=float), np.asarray(g, dtype=float)
    d = x.size
    K = np.zeros((d + 1, d + 1))
    K[:d, :d] = np.diag(2.0 / x)
    K[:d, d] = 1.0
    K[d, :d] = 1.0
    rhs = np.concatenate([-2.0 * g, [0.0]])
    return np.linalg.solve(K, rhs)[:d]


def complexity_scan(holds, upto: int) -> int:
    """``1 +`` the last failing ``n`` in ``1..upto`` (1 if none fails)."""
    n = np.arange(1, upto + 1)
    bad = n[~holds(n)]
    return int(bad[-1]) + 1 if bad.size else 1
