"""Property suite behind ``mirrordyn validate``.

Each check is a small randomized experiment with a fixed seed. The suite is
a smoke-level mirror of the test-suite invariants, sized to run in seconds.
"""

from __future__ import annotations

import time
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from . import geometry
from .analysis import decompose_noise
from .geometry import ENTROPY, EUCLIDEAN
from .markov import apply_kernel_expectation, poisson_solve, stationary_distribution
from .optimizer import StepSchedule, run_smd
from .problems import ProblemSpec, poisson_field, subgradient_field
from .stationarity import projected_direction, qp_projection_oracle


@dataclass(frozen=True)
class CheckResult:
    name: str
    passed: bool
    value: float  # worst observed statistic
    tolerance: float
    seconds: float


def _interior(rng, n, d):
    x = rng.dirichlet(np.ones(d), size=n)
    x = np.maximum(x, 1e-6)
    return x / x.sum(axis=-1, keepdims=True)


def check_bregman(rng) -> tuple[float, float]:
    # worst violation of D(x, y) >= 0.5 ||x - y||^2 (strong convexity and nonnegativity)
    worst = 0.0
    for d in (2, 5, 20):
        x, y = _interior(rng, 1000, d), _interior(rng, 1000, d)
        for mmap in (ENTROPY, EUCLIDEAN):
            D = geometry.bregman_divergence(mmap, x, y)
            lb = 0.5 * mmap.sigma_R * geometry.norm(x - y, mmap.reference_norm) ** 2
            worst = max(worst, float(np.max(lb - D)))
    return worst, 1e-12


def check_prox(rng) -> tuple[float, float]:
    # entropic update against the stationarity condition alpha g + ln(x'/x) = const
    worst = 0.0
    for d in (2, 5, 20):
        x = _interior(rng, 500, d)
        g = rng.normal(size=(500, d))
        alpha = rng.uniform(0.01, 2.0, size=500)
        xn = geometry.mirror_update(ENTROPY, x, g, alpha)
        r = alpha[:, None] * g + np.log(xn / x)
        worst = max(worst, float(np.max(r.max(axis=1) - r.min(axis=1))),
                    float(np.max(np.abs(xn.sum(axis=1) - 1.0))))
    return worst, 1e-9


def _random_poisson_cases(rng, count=200):
    for _ in range(count):
        m, d = int(rng.integers(2, 9)), int(rng.integers(2, 7))
        P = rng.uniform(0.01, 1.0, size=(m, m))
        P /= P.sum(axis=1, keepdims=True)
        G = rng.normal(size=(m, d))
        mu = stationary_distribution(P)
        yield P, mu, G, poisson_solve(P, mu, G)


def check_poisson(rng) -> tuple[float, float]:
    worst = max(float(np.abs(Gt - P @ Gt - (G - mu @ G)).max())
                for P, mu, G, Gt in _random_poisson_cases(rng))
    return worst, 1e-10


def check_poisson_pin(rng) -> tuple[float, float]:
    worst = max(float(np.abs(mu @ Gt).max()) for P, mu, G, Gt in _random_poisson_cases(rng))
    return worst, 1e-12


def _problem_check(fn):
    def run(rng, problems):
        return max(fn(rng, p) for p in problems)
    return run


def _mean_field(rng, prob: ProblemSpec) -> float:
    x = _interior(rng, 200, prob.d)
    P = prob.kernel.matrix(x)
    mu = stationary_distribution(P)
    G = subgradient_field(prob, x, mu=mu)
    avg = np.einsum("ns,nsd->nd", mu, G)
    return float(np.abs(avg - prob.grad(x)).max())


def check_nu_oracle(rng) -> tuple[float, float]:
    worst = 0.0
    for d in (2, 5, 10, 20):
        x = _interior(rng, 200, d)
        g = rng.normal(size=(200, d))
        worst = max(worst, float(np.abs(projected_direction(x, g) - qp_projection_oracle(x, g)).max()))
    return worst, 1e-10


def _decomposition(rng, prob: ProblemSpec) -> float:
    traj = run_smd(prob, ENTROPY, StepSchedule.inv_sqrt(0.5), 500, seed=int(rng.integers(2 ** 31)))
    dec = decompose_noise(traj, prob)
    return dec.max_residual


def _martingale(rng, prob: ProblemSpec) -> float:
    x = _interior(rng, 50, prob.d)
    P = prob.kernel.matrix(x)
    Gt = poisson_field(prob, x)
    PiGt = apply_kernel_expectation(P, Gt)
    # sum_{s'} P[s, s'] Gt[s'] - (Pi Gt)[s], every s
    cm = np.einsum("nij,njd->nid", P, Gt) - PiGt
    return float(np.abs(cm).max())


CHECKS: Sequence[tuple[str, Callable, float, bool]] = (
    ("bregman_strong_convexity", check_bregman, 1e-12, False),
    ("prox_stationarity", check_prox, 1e-9, False),
    ("poisson_residual", check_poisson, 1e-10, False),
    ("poisson_centring", check_poisson_pin, 1e-12, False),
    ("mean_field_identity", _problem_check(_mean_field), 1e-10, True),
    ("nu_oracle_equivalence", check_nu_oracle, 1e-10, False),
    ("decomposition_identity", _problem_check(_decomposition), 1e-9, True),
    ("martingale_exact_mean", _problem_check(_martingale), 1e-12, True),
)


def run_suite(problems: Sequence[ProblemSpec], seed: int = 0) -> list[CheckResult]:
    results = []
    for i, (name, fn, tol, needs_problems) in enumerate(CHECKS):
        rng = np.random.default_rng([seed, i])
        t0 = time.perf_counter()
        if needs_problems:
            value = fn(rng, problems)
        else:
            value, tol = fn(rng)
        results.append(CheckResult(name, bool(value <= tol), float(value), tol, time.perf_counter() - t0))
    return results


def format_table(results: Sequence[CheckResult]) -> str:
    width = max(len(r.name) for r in results)
    lines = [f"{'check':<{width}}  status  {'worst':>10}  {'tol':>8}  seconds"]
    for r in results:
        lines.append(f"{r.name:<{width}}  {'PASS' if r.passed else 'FAIL':<6}  {r.value:10.3e}  "
                     f"{r.tolerance:8.1e}  {r.seconds:7.2f}")
    return "\n".join(lines)
