"""Mirror maps, Bregman divergences and the mirror-descent prox step.

Two geometries are supported on the probability simplex:

* negative entropy ``R(x) = sum x_i log x_i``, strongly convex with modulus 1
  w.r.t. the l1 norm (Pinsker), dual norm l-infinity;
* squared Euclidean ``R(x) = 0.5 ||x||_2^2``, modulus 1 w.r.t. l2.

All functions accept a single point of shape ``(d,)`` or a stack of points of
shape ``(..., d)`` and operate along the last axis.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np
from scipy.special import kl_div, xlogy

from .errors import DimensionMismatch, DomainError, NonFiniteInput

# Floor used only when diagnostics take logarithms; never applied to iterates.
LOG_FLOOR = 1e-300


class MapKind(enum.Enum):
    NEGATIVE_ENTROPY = "entropy"
    SQUARED_EUCLIDEAN = "euclidean"


class Norm(enum.Enum):
    L1 = "l1"
    L2 = "l2"
    LINF = "linf"


@dataclass(frozen=True)
class MirrorMap:
    kind: MapKind
    sigma_R: float = 1.0

    @property
    def reference_norm(self) -> Norm:
        return Norm.L1 if self.kind is MapKind.NEGATIVE_ENTROPY else Norm.L2

    @property
    def dual_norm(self) -> Norm:
        return Norm.LINF if self.kind is MapKind.NEGATIVE_ENTROPY else Norm.L2

    @property
    def name(self) -> str:
        return self.kind.value

    def potential(self, x):
        x = np.asarray(x, dtype=float)
        if self.kind is MapKind.NEGATIVE_ENTROPY:
            return xlogy(x, x).sum(axis=-1)
        return 0.5 * np.sum(x * x, axis=-1)

    def gradient(self, x):
        x = np.asarray(x, dtype=float)
        if self.kind is MapKind.NEGATIVE_ENTROPY:
            _require_interior(x)
            return np.log(x) + 1.0
        return x.copy()

    def hessian_diag(self, x):
        """Diagonal of the Hessian; both supported maps have diagonal Hessians."""
        x = np.asarray(x, dtype=float)
        if self.kind is MapKind.NEGATIVE_ENTROPY:
            _require_interior(x)
            return 1.0 / x
        return np.ones_like(x)

    def primal_norm(self, v):
        return norm(v, self.reference_norm)

    def dual_norm_of(self, g):
        return norm(g, self.dual_norm)


ENTROPY = MirrorMap(MapKind.NEGATIVE_ENTROPY)
EUCLIDEAN = MirrorMap(MapKind.SQUARED_EUCLIDEAN)


def mirror_map(name: str) -> MirrorMap:
    """Look up a mirror map by its config name (``entropy`` or ``euclidean``)."""
    try:
        return MirrorMap(MapKind(name))
    except ValueError:
        raise ValueError(f"unknown mirror map {name!r}; expected 'entropy' or 'euclidean'") from None


def norm(v, which: Norm):
    v = np.asarray(v, dtype=float)
    if which is Norm.L1:
        return np.abs(v).sum(axis=-1)
    if which is Norm.LINF:
        return np.abs(v).max(axis=-1)
    return np.sqrt(np.sum(v * v, axis=-1))


def _require_interior(x):
    if np.any(x <= 0.0):
        raise DomainError("point has a non-positive coordinate; entropy geometry needs the relative interior")


def _check_pair(x, y):
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.shape[-1:] != y.shape[-1:]:
        raise DimensionMismatch(f"dimension mismatch: {x.shape} vs {y.shape}")
    return x, y


def bregman_divergence(mmap: MirrorMap, x, y):
    """Bregman divergence ``D_R(x, y) = R(x) - R(y) - <grad R(y), x - y>``.

    For the entropy map this is the (generalised) KL divergence
    ``sum x log(x/y) - x + y`` with ``0 log 0 = 0``; on the simplex the last two
    terms cancel. Raises :class:`DomainError` when ``y`` vanishes on a
    coordinate where ``x`` does not, since the divergence is infinite there.
    """
    x, y = _check_pair(x, y)
    if mmap.kind is MapKind.NEGATIVE_ENTROPY:
        if np.any(x < 0) or np.any(y < 0):
            raise DomainError("entropy Bregman divergence needs nonnegative arguments")
        if np.any((y == 0.0) & (x > 0.0)):
            raise DomainError("KL divergence is infinite: y has a zero where x is positive")
        return kl_div(x, y).sum(axis=-1)
    diff = x - y
    return 0.5 * np.sum(diff * diff, axis=-1)


def project_simplex(v):
    """Euclidean projection onto the probability simplex (sort and threshold)."""
    v = np.asarray(v, dtype=float)
    d = v.shape[-1]
    u = -np.sort(-v, axis=-1)
    css = np.cumsum(u, axis=-1) - 1.0
    ind = np.arange(1, d + 1)
    cond = u - css / ind > 0
    # cond is true on a prefix; its length is the support size
    rho = cond.sum(axis=-1, keepdims=True)
    theta = np.take_along_axis(css, rho - 1, axis=-1) / rho
    return np.maximum(v - theta, 0.0)


def mirror_update(mmap: MirrorMap, x, g, alpha):
    """One prox step ``argmin_x' <g, x'> + D_R(x', x) / alpha`` over the simplex.

    Entropy: multiplicative weights, ``x'_i ∝ x_i exp(-alpha g_i)``, with the
    largest exponent shifted to zero before exponentiating. Euclidean:
    projection of ``x - alpha g`` onto the simplex.
    """
    x, g = _check_pair(x, g)
    if not np.all(np.isfinite(g)):
        raise NonFiniteInput("gradient contains non-finite entries")
    alpha = np.asarray(alpha, dtype=float)
    if np.any(alpha < 0):
        raise ValueError("step size must be nonnegative")
    if alpha.ndim:
        alpha = alpha[..., None]
    if mmap.kind is MapKind.NEGATIVE_ENTROPY:
        expo = -alpha * g
        expo = expo - expo.max(axis=-1, keepdims=True)
        w = x * np.exp(expo)
        return w / w.sum(axis=-1, keepdims=True)
    return project_simplex(x - alpha * g)


def local_norm(mmap: MirrorMap, x, v):
    """Hessian-metric norm ``sqrt(v^T grad^2 R(x) v)``."""
    x, v = _check_pair(x, v)
    if mmap.kind is MapKind.NEGATIVE_ENTROPY:
        _require_interior(x)
        return np.sqrt(np.sum(v * v / x, axis=-1))
    return np.sqrt(np.sum(v * v, axis=-1))


def prox_objective(mmap: MirrorMap, x_new, x, g, alpha):
    """Value of the prox-step objective at a candidate ``x_new``."""
    return np.sum(np.asarray(g) * x_new, axis=-1) + bregman_divergence(mmap, x_new, x) / alpha
