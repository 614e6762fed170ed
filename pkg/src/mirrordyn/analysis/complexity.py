"""Iteration count after which the convex tail probability is at most ``p``.

With ``alpha_n = a / sqrt(n)`` the requirement is ``n >= max(c1, c2(n), c3(n))``:

    c1    = 9 / (2 eps^2) (D1^2 + 16 G^2 D^2)
    c2(n) = C^2 / (4 a^2 eps^2) ln(1 + n)^2,   C = 3 (G + G^2 + 2 L_Pi D G) / (2 sigma)
    c3(n) = 18 D^2 G^2 / eps^2 ln(1/p) ln(1 + n)

``N`` is the smallest integer such that every ``n >= N`` satisfies all three.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ..errors import NoFiniteN
from ..problems import ProblemConstants

CLAUSE_NAMES = ("accuracy", "step_variance", "confidence")


@dataclass(frozen=True)
class ComplexityResult:
    N: int
    eps: float
    p: float
    clause_values: tuple  # (c1, c2(N), c3(N))
    binding: str
    o_tilde: float
    coefficients: tuple  # (c1, K2, K3) with c2 = K2 ln^2(1+n), c3 = K3 ln(1+n)

    def as_dict(self) -> dict:
        return {
            "N": self.N, "eps": self.eps, "p": self.p,
            "clause_values": dict(zip(CLAUSE_NAMES, self.clause_values)),
            "binding_clause": self.binding,
            "o_tilde": self.o_tilde,
            "coefficients": dict(zip(("c1", "K2", "K3"), self.coefficients)),
        }


def clause_coefficients(eps: float, p: float, c: ProblemConstants, D1: float, a: float = 1.0):
    G, D, s = c.G_bound, c.D_diam, c.sigma_R
    C = 3.0 * (G + G * G + 2.0 * c.L_Pi * D * G) / (2.0 * s)
    c1 = 9.0 / (2.0 * eps ** 2) * (D1 ** 2 + 16.0 * G * G * D * D)
    K2 = C * C / (4.0 * a * a * eps ** 2)
    K3 = 18.0 * D * D * G * G / eps ** 2 * math.log(1.0 / p)
    return c1, K2, K3


def clauses_hold(n, coeffs) -> np.ndarray:
    """Vectorised check of all three clauses at ``n``."""
    c1, K2, K3 = coeffs
    n = np.asarray(n, dtype=float)
    L = np.log1p(n)
    return (n >= c1) & (n >= K2 * L * L) & (n >= K3 * L)


def o_tilde(eps: float, p: float, c: ProblemConstants, D1: float, a: float = 1.0) -> float:
    G, D, s, Lp = c.G_bound, c.D_diam, c.sigma_R, c.L_Pi
    return max(D1 ** 2 + G * G * D * D,
               (G ** 4 + G * G * (1.0 + 2.0 * Lp * D) ** 2) / (a * a * s * s),
               G * G * D * D * math.log(1.0 / p)) / eps ** 2


def _monotone_from(K2: float, K3: float) -> int:
    # beyond this n both n - K2 ln^2(1+n) and n - K3 ln(1+n) are increasing
    n = max(1, math.ceil(K3))
    while 2.0 * K2 * math.log1p(n) > 1.0 + n:
        n *= 2
    return n


def sample_complexity(eps: float, p: float, constants: ProblemConstants, D1: float,
                      a: float = 1.0) -> ComplexityResult:
    """Smallest ``N`` with every ``n >= N`` satisfying the three clauses.

    ``D1`` is the Bregman radius of the start (``ln d`` bounds it for the
    uniform start in the entropy geometry). ``a`` is the schedule scale.
    """
    if not (eps > 0 and math.isfinite(eps)):
        raise ValueError("eps must be positive")
    if not 0.0 < p < 1.0:
        raise ValueError("p must lie in (0, 1)")
    c = constants
    if min(c.G_bound, c.D_diam, c.sigma_R, a) <= 0 or c.L_Pi < 0 or D1 < 0:
        raise NoFiniteN("constants must be positive for a finite iteration count")
    coeffs = clause_coefficients(eps, p, c, D1, a)
    if not all(math.isfinite(v) for v in coeffs):
        raise NoFiniteN("clause coefficients are not finite")

    start = _monotone_from(coeffs[1], coeffs[2])
    # on [start, inf) the holding set is an interval [N0, inf)
    if clauses_hold(start, coeffs):
        below = np.arange(1, start)
        fails = below[~clauses_hold(below, coeffs)]
        N = int(fails[-1]) + 1 if fails.size else 1
    else:
        lo, hi = start, 2 * start
        while not clauses_hold(hi, coeffs):
            lo, hi = hi, 2 * hi
        while hi - lo > 1:  # invariant: lo fails, hi holds
            mid = (lo + hi) // 2
            if clauses_hold(mid, coeffs):
                hi = mid
            else:
                lo = mid
        N = hi

    c1, K2, K3 = coeffs
    L = math.log1p(N)
    values = (c1, K2 * L * L, K3 * L)
    binding = CLAUSE_NAMES[int(np.argmax(values))]
    return ComplexityResult(N=N, eps=float(eps), p=float(p), clause_values=values, binding=binding,
                            o_tilde=o_tilde(eps, p, c, D1, a), coefficients=coeffs)
