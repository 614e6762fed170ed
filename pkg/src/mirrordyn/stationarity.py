"""Riemannian projected direction and stationarity gap on the simplex interior.

In the entropy geometry the tangent space at an interior point is the fixed
hyperplane ``{v : 1^T v = 0}`` and the Hessian-metric projection of the
negative natural gradient has the closed form

    nu_x = -x * g + <x, g> x.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DimensionMismatch, DomainError, SingularKKT


def _prepare(x, g):
    x = np.asarray(x, dtype=float)
    g = np.asarray(g, dtype=float)
    if x.shape[-1] != g.shape[-1]:
        raise DimensionMismatch(f"dimension mismatch: {x.shape} vs {g.shape}")
    if np.any(x <= 0.0):
        raise DomainError("stationarity quantities are defined on the relative interior only")
    return x, g


def projected_direction(x, g):
    x, g = _prepare(x, g)
    inner = np.sum(x * g, axis=-1, keepdims=True)
    return -x * g + inner * x


def gap(x, g):
    """Local-norm length ``||nu_x||_x = sqrt(sum nu_i^2 / x_i)``."""
    x, g = _prepare(x, g)
    nu = projected_direction(x, g)
    return np.sqrt(np.sum(nu * nu / x, axis=-1))


@dataclass(frozen=True)
class GapReport:
    nu: np.ndarray
    gap: float
    nu_l1: float
    inner_identity_residual: float


def gap_report(x, g) -> GapReport:
    """Direction, gap (local norm and l1) and the orthogonality residual.

    The residual is ``|<g, nu> + nu^T diag(1/x) nu|``, zero in exact arithmetic.
    """
    x, g = _prepare(x, g)
    nu = projected_direction(x, g)
    quad = float(np.sum(nu * nu / x))
    return GapReport(
        nu=nu,
        gap=float(np.sqrt(quad)),
        nu_l1=float(np.abs(nu).sum()),
        inner_identity_residual=abs(float(g @ nu) + quad),
    )


def qp_projection_oracle(x, g):
    """Tangent-space QP solved through its KKT system (test oracle).

    Minimises ``(v + x*g)^T diag(1/x) (v + x*g)`` subject to ``1^T v = 0``.
    The system is written in the scaled variable ``u = v / sqrt(x)``,

        [2 I      sqrt(x)] [u]   [-2 sqrt(x) * g]
        [sqrt(x)^T      0] [l] = [0            ],

    which stays well conditioned near the boundary.
    """
    x, g = _prepare(x, g)
    if x.ndim != 1:
        return np.stack([qp_projection_oracle(xi, gi) for xi, gi in zip(x.reshape(-1, x.shape[-1]),
                                                                        np.broadcast_to(g, x.shape).reshape(-1, x.shape[-1]))]).reshape(x.shape)
    d = x.size
    r = np.sqrt(x)
    K = np.zeros((d + 1, d + 1))
    K[:d, :d] = 2.0 * np.eye(d)
    K[:d, d] = r
    K[d, :d] = r
    rhs = np.concatenate([-2.0 * r * g, [0.0]])
    try:
        sol = np.linalg.solve(K, rhs)
    except np.linalg.LinAlgError:
        raise SingularKKT("KKT matrix is singular") from None
    return r * sol[:d]
