"""Test problems with a decision-dependent Markov gradient oracle.

Every objective here is a separable quadratic on the simplex,

    f(x) = sum_i a_i x_i^2 + <b, x> + c0,

and the per-state oracle is

    G(x, s) = grad f(x) + (c_s - sum_{s'} mu_x(s') c_{s'}),

so the mu_x-average of G(x, .) is exactly grad f(x) for any kernel. The
constants that enter the finite-time bounds are recorded w.r.t. the l1 norm
and its dual l-infinity.
"""

from __future__ import annotations

import enum
import itertools
import math
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np

from .errors import DimensionMismatch
from .geometry import ENTROPY, MapKind, MirrorMap
from .markov import (
    ConstantKernel,
    DecisionKernel,
    GibbsTiltedKernel,
    load_kernel_file,
    poisson_solve,
    stationary_distribution,
)


class ObjectiveKind(enum.Enum):
    CONVEX_QUADRATIC = "convex"
    LINEAR = "linear"
    NONCONVEX_QUADRATIC = "nonconvex"


@dataclass(frozen=True)
class ProblemConstants:
    G_bound: float
    L_smooth: float
    L_Pi: float
    D_diam: float = 2.0
    sigma_R: float = 1.0
    mu_PL: Optional[float] = None
    # empirical sup of ||Gt(x, s)||_inf over the construction sample (reported only)
    g_tilde_sup: float = float("nan")

    @property
    def L_nu(self) -> float:
        return 2.0 * self.L_smooth + 3.0 * self.G_bound

    def for_map(self, mmap: MirrorMap, d: int) -> "ProblemConstants":
        """Constants re-expressed in the reference/dual norms of ``mmap``."""
        if mmap.kind is MapKind.NEGATIVE_ENTROPY:
            return replace(self, sigma_R=mmap.sigma_R)
        # ||v||_2 <= sqrt(d) ||v||_inf and ||v||_1 <= sqrt(d) ||v||_2
        return replace(
            self,
            G_bound=math.sqrt(d) * self.G_bound,
            L_Pi=d * self.L_Pi,
            D_diam=math.sqrt(2.0),
            sigma_R=mmap.sigma_R,
            g_tilde_sup=math.sqrt(d) * self.g_tilde_sup,
        )

    def as_dict(self) -> dict:
        out = {k: getattr(self, k) for k in ("G_bound", "L_smooth", "L_Pi", "D_diam", "sigma_R", "mu_PL", "g_tilde_sup")}
        out["L_nu"] = self.L_nu
        return out


@dataclass(frozen=True, eq=False)
class ProblemSpec:
    kind: ObjectiveKind
    d: int
    m: int
    kernel: DecisionKernel
    offsets: np.ndarray  # (m, d)
    quad: np.ndarray  # a, shape (d,)
    lin: np.ndarray  # b, shape (d,)
    const: float
    constants: ProblemConstants
    x_star: Optional[np.ndarray] = None
    f_star: Optional[float] = None
    f_inf: float = float("nan")  # min of f over the simplex
    params: dict = field(default_factory=dict)

    def f(self, x):
        x = np.asarray(x, dtype=float)
        return np.sum(self.quad * x * x + self.lin * x, axis=-1) + self.const

    def grad(self, x):
        x = np.asarray(x, dtype=float)
        return 2.0 * self.quad * x + self.lin

    @property
    def has_optimum(self) -> bool:
        return self.x_star is not None


def mean_field_gradient(prob: ProblemSpec, x):
    """Exact ``grad f(x)`` from the closed form (does not touch the chain)."""
    x = np.asarray(x, dtype=float)
    if x.shape[-1] != prob.d:
        raise DimensionMismatch(f"expected dimension {prob.d}, got {x.shape[-1]}")
    return prob.grad(x)


def subgradient_field(prob: ProblemSpec, x, P=None, mu=None):
    """All per-state oracle vectors ``G(x, s)``, shape ``(..., m, d)``."""
    x = np.asarray(x, dtype=float)
    if mu is None:
        if P is None:
            P = prob.kernel.matrix(x)
        mu = stationary_distribution(P, check=False)
    shift = mu @ prob.offsets  # (..., d)
    return prob.grad(x)[..., None, :] + prob.offsets - shift[..., None, :]


def sample_subgradient(prob: ProblemSpec, x, s, mu=None):
    """Oracle output ``G(x, s)``; deterministic given ``(x, s)``.

    ``s`` may be an integer or an integer array matching the leading shape of
    ``x`` (one state per stacked decision).
    """
    x = np.asarray(x, dtype=float)
    if mu is None:
        mu = stationary_distribution(prob.kernel.matrix(x), check=False)
    s = np.asarray(s)
    if np.any(s < 0) or np.any(s >= prob.m):
        raise IndexError(f"state index outside 0..{prob.m - 1}")
    return prob.grad(x) + prob.offsets[s] - mu @ prob.offsets


def poisson_field(prob: ProblemSpec, x):
    """Centred Poisson solution ``Gt(x, .)``, shape ``(..., m, d)``."""
    P = prob.kernel.matrix(x)
    mu = stationary_distribution(P, check=False)
    return poisson_solve(P, mu, subgradient_field(prob, x, mu=mu))


# -- exact minimisation on the simplex ------------------------------------------

def minimize_on_simplex(a, b, c0: float = 0.0):
    """Global minimiser of ``sum a_i x_i^2 + b_i x_i + c0`` over the simplex.

    The minimiser lies in the relative interior of some face and is a
    stationary point of the restriction there, so enumerating the KKT system
    of every face (``2^d - 1`` of them) finds it. Faces whose restricted system
    is singular are skipped; their minima are attained on smaller faces.
    """
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    d = a.size
    if d > 15:
        raise ValueError("face enumeration is limited to d <= 15")
    best_x, best_f = None, math.inf
    for k in range(1, d + 1):
        for face in itertools.combinations(range(d), k):
            idx = list(face)
            K = np.zeros((k + 1, k + 1))
            K[:k, :k] = np.diag(2.0 * a[idx])
            K[:k, k] = -1.0
            K[k, :k] = 1.0
            rhs = np.concatenate([-b[idx], [1.0]])
            try:
                sol = np.linalg.solve(K, rhs)
            except np.linalg.LinAlgError:
                continue
            if np.linalg.cond(K) > 1e12 or np.any(sol[:k] < -1e-14):
                continue
            x = np.zeros(d)
            x[idx] = np.maximum(sol[:k], 0.0)
            x /= x.sum()
            val = float(np.sum(a * x * x + b * x) + c0)
            if val < best_f - 1e-15:
                best_x, best_f = x, val
    return best_x, best_f


# -- constants ------------------------------------------------------------------

def _gradient_sup(a, b) -> float:
    # each coordinate of 2 a x + b is affine in x_i in [0, 1]
    return float(np.max(np.maximum(np.abs(b), np.abs(2.0 * a + b))))


def estimate_poisson_constants(prob: ProblemSpec, seed: int, n_points: int = 1000, n_pairs: int = 500):
    """Empirical ``sup ||Gt||_inf`` and ``1.5 x`` the largest sampled Lipschitz ratio.

    The ratio is ``max_s ||Gt(x, s) - Gt(y, s)||_inf / ||x - y||_1`` over
    random pairs at separations from 1e-3 to 1.
    """
    rng = np.random.default_rng(np.random.SeedSequence([seed, 0x5EED]))
    d = prob.d
    pts = rng.dirichlet(np.ones(d), size=n_points)
    pts = np.vstack([pts, np.full((1, d), 1.0 / d)])
    g_sup = float(np.abs(poisson_field(prob, pts)).max())

    x = rng.dirichlet(np.ones(d), size=n_pairs)
    z = rng.dirichlet(np.ones(d), size=n_pairs)
    t = 10.0 ** rng.uniform(-3.0, 0.0, size=(n_pairs, 1))
    y = (1.0 - t) * x + t * z
    dist = np.abs(x - y).sum(axis=-1)
    keep = dist > 1e-12
    diff = np.abs(poisson_field(prob, x[keep]) - poisson_field(prob, y[keep])).max(axis=(-1, -2))
    ratio = diff / dist[keep]
    L_Pi = 1.5 * float(ratio.max()) if ratio.size else 0.0
    return g_sup, L_Pi


# -- builders -------------------------------------------------------------------

def _as_vector(v, d, name):
    v = np.asarray(v, dtype=float).ravel()
    if v.size != d:
        raise DimensionMismatch(f"{name} has {v.size} entries, expected d={d}")
    return v


def _random_kernel(rng, d, m, theta):
    base = rng.uniform(0.5, 1.5, size=(m, m))
    weights = rng.normal(size=(m, d))
    if theta == 0.0:
        return ConstantKernel(base / base.sum(axis=1, keepdims=True))
    return GibbsTiltedKernel(base, weights, theta)


def _validate(d, m, theta):
    if int(d) != d or d < 2:
        raise ValueError("d must be an integer >= 2")
    if int(m) != m or m < 1:
        raise ValueError("m must be a positive integer")
    if theta < 0 or not math.isfinite(theta):
        raise ValueError("theta must be finite and nonnegative")


def _assemble(kind, d, m, seed, theta, kernel, offsets, a, b, c0, with_optimum, mu_PL, params):
    if kernel.m != m:
        raise DimensionMismatch(f"kernel has {kernel.m} states but m={m}")
    offsets = np.asarray(offsets, dtype=float)
    if offsets.shape != (m, d):
        raise DimensionMismatch(f"offsets have shape {offsets.shape}, expected {(m, d)}")
    G_bound = _gradient_sup(a, b) + 2.0 * float(np.abs(offsets).max(initial=0.0))
    L_smooth = 2.0 * float(np.abs(a).max())
    x_min, f_min = minimize_on_simplex(a, b, c0)
    prob = ProblemSpec(
        kind=kind, d=d, m=m, kernel=kernel, offsets=offsets, quad=a, lin=b, const=c0,
        constants=ProblemConstants(G_bound=G_bound, L_smooth=L_smooth, L_Pi=0.0, mu_PL=mu_PL),
        x_star=x_min if with_optimum else None,
        f_star=f_min if with_optimum else None,
        f_inf=f_min,
        params=params,
    )
    g_sup, L_Pi = estimate_poisson_constants(prob, seed)
    consts = replace(prob.constants, L_Pi=L_Pi, g_tilde_sup=g_sup)
    return replace(prob, constants=consts)


def _kernel_and_offsets(rng, d, m, theta, offset_scale, kernel_file):
    kernel = _random_kernel(rng, d, m, theta)
    offsets = offset_scale * rng.uniform(-1.0, 1.0, size=(m, d))
    if kernel_file is not None:
        kernel = load_kernel_file(kernel_file)
    return kernel, offsets


def make_convex_problem(d: int, m: int, seed: int, theta: float, center=None,
                        offset_scale: float = 0.5, kernel_file=None) -> ProblemSpec:
    """Convex instance ``f(x) = 0.5 ||x - p||_2^2`` with a Gibbs-tilted kernel.

    The default centre ``p`` lies outside the simplex so that the minimiser
    sits on a proper face (see :func:`default_center`).
    """
    _validate(d, m, theta)
    rng = np.random.default_rng(seed)
    kernel, offsets = _kernel_and_offsets(rng, d, m, theta, offset_scale, kernel_file)
    if center is None:
        center = default_center(rng, d)
    p = _as_vector(center, d, "center")
    params = dict(kind="convex", d=d, m=m, seed=seed, theta=theta, offset_scale=offset_scale,
                  center=p.tolist(), kernel_file=None if kernel_file is None else str(kernel_file))
    return _assemble(ObjectiveKind.CONVEX_QUADRATIC, d, m, seed, theta, kernel, offsets,
                     np.full(d, 0.5), -p, 0.5 * float(p @ p), True, None, params)


def default_center(rng, d):
    """Centre whose projection onto the simplex lies on a known proper face.

    About half of the coordinates (at least one) are inactive at the optimum
    with KKT multiplier gaps drawn from U(0.2, 0.4); the rest carry a
    Dirichlet(2) optimum. Since ``grad f(x*) = x* - p``, setting ``p = x*`` on
    the support and ``p_i = -gap_i`` off it makes ``x*`` optimal with
    Lagrange multiplier 0.
    """
    n_off = max(1, d // 2)
    off = rng.choice(d, size=n_off, replace=False)
    on = np.setdiff1d(np.arange(d), off)
    p = np.zeros(d)
    p[on] = rng.dirichlet(np.full(on.size, 2.0))
    p[off] = -rng.uniform(0.2, 0.4, size=n_off)
    return p


def make_linear_problem(d: int, m: int, seed: int, theta: float, cost=None,
                        offset_scale: float = 0.5, kernel_file=None) -> ProblemSpec:
    """Linear instance ``f(x) = <c, x>``; optimum at the cheapest vertex."""
    _validate(d, m, theta)
    rng = np.random.default_rng(seed)
    kernel, offsets = _kernel_and_offsets(rng, d, m, theta, offset_scale, kernel_file)
    c = rng.uniform(-1.0, 1.0, size=d) if cost is None else _as_vector(cost, d, "cost")
    params = dict(kind="linear", d=d, m=m, seed=seed, theta=theta, offset_scale=offset_scale,
                  cost=c.tolist(), kernel_file=None if kernel_file is None else str(kernel_file))
    return _assemble(ObjectiveKind.LINEAR, d, m, seed, theta, kernel, offsets,
                     np.zeros(d), c, 0.0, True, None, params)


def make_nonconvex_problem(d: int, m: int, seed: int, theta: float, a=None, b=None,
                           offset_scale: float = 0.5, mu_PL: Optional[float] = None,
                           kernel_file=None) -> ProblemSpec:
    """Separable quadratic ``sum a_i x_i^2 + <b, x>`` with mixed-sign ``a``.

    Randomly drawn ``a`` always has at least one negative entry. User-supplied
    coefficients are taken as given, convex ones included. No optimum is
    recorded; ``f_inf`` still holds the exact minimum over the simplex.
    """
    _validate(d, m, theta)
    rng = np.random.default_rng(seed)
    kernel, offsets = _kernel_and_offsets(rng, d, m, theta, offset_scale, kernel_file)
    # small default coefficients keep coordinate gradient differences below
    # 0.6, so vertex-seeking runs do not underflow within 1e6 steps
    if a is None:
        a = rng.uniform(-0.2, 0.2, size=d)
        if np.all(a >= 0):
            a[0] = -a[0] - 0.02
    if b is None:
        b = rng.uniform(-0.1, 0.1, size=d)
    a = _as_vector(a, d, "a")
    b = _as_vector(b, d, "b")
    params = dict(kind="nonconvex", d=d, m=m, seed=seed, theta=theta, offset_scale=offset_scale,
                  a=a.tolist(), b=b.tolist(), mu_pl=mu_PL,
                  kernel_file=None if kernel_file is None else str(kernel_file))
    return _assemble(ObjectiveKind.NONCONVEX_QUADRATIC, d, m, seed, theta, kernel, offsets,
                     a, b, 0.0, False, mu_PL, params)


def problem_from_params(params: dict) -> ProblemSpec:
    """Rebuild a problem from its ``params`` record (inverse of ``prob.params``)."""
    kind = params.get("kind")
    common = dict(d=int(params["d"]), m=int(params["m"]), seed=int(params["seed"]),
                  theta=float(params.get("theta", 0.0)),
                  offset_scale=float(params.get("offset_scale", 0.5)),
                  kernel_file=params.get("kernel_file"))
    if kind == "convex":
        return make_convex_problem(center=params.get("center"), **common)
    if kind == "linear":
        return make_linear_problem(cost=params.get("cost"), **common)
    if kind == "nonconvex":
        return make_nonconvex_problem(a=params.get("a"), b=params.get("b"),
                                      mu_PL=params.get("mu_pl"), **common)
    raise ValueError(f"unknown problem kind {kind!r}")


def interior_uniform(d: int) -> np.ndarray:
    return np.full(d, 1.0 / d)


__all__ = [
    "ObjectiveKind",
    "ProblemConstants",
    "ProblemSpec",
    "make_convex_problem",
    "make_linear_problem",
    "make_nonconvex_problem",
    "mean_field_gradient",
    "minimize_on_simplex",
    "poisson_field",
    "problem_from_params",
    "sample_subgradient",
    "subgradient_field",
]
