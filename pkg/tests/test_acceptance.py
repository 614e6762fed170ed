"""Acceptance criteria 1-12 at their stated tolerances.

Each test appends one ``[PASS]`` or ``[FAIL]`` line, printed together at the
end of the pytest run, and then asserts.
"""

import math
import time

import numpy as np
import pytest

from conftest import ACCEPTANCE_LINES
from mirrordyn import cli
from mirrordyn.analysis import (
    bias_bound_check,
    clauses_hold,
    decompose_noise,
    sample_complexity,
    tail_experiment_convex,
    tail_experiment_nonconvex,
)
from mirrordyn.analysis.complexity import clause_coefficients
from mirrordyn.config import builtin_config, replace_section
from mirrordyn.geometry import ENTROPY, mirror_update
from mirrordyn.markov import poisson_solve, stationary_distribution
from mirrordyn.optimizer import StepSchedule, run_smd, run_smd_batch
from mirrordyn.problems import make_convex_problem, make_nonconvex_problem, mean_field_gradient, subgradient_field
from mirrordyn.stationarity import projected_direction, qp_projection_oracle

from oracles import complexity_scan, prox_newton

SCHED = StepSchedule.inv_sqrt(0.5)

# (label, alphas, step lengths, G_bound, max ratio against ||g||_inf) of every run in this module
STEP_RECORDS = []


def report(n, ok, detail):
    ACCEPTANCE_LINES.append(f"[{'PASS' if ok else 'FAIL'}] criterion {n}: {detail}")
    assert ok, detail


def track(label, prob, trajs):
    for t in trajs:
        STEP_RECORDS.append((label, t.alphas[:-1], t.step_len_l1[:-1], prob.constants.G_bound, t.max_step_ratio))
    return trajs


@pytest.fixture(scope="module")
def convex():
    return make_convex_problem(5, 4, seed=7, theta=2.0)


@pytest.fixture(scope="module")
def nonconvex():
    return make_nonconvex_problem(3, 4, seed=3, theta=2.0)


def interior(rng, n, d):
    x = rng.dirichlet(np.ones(d), size=n)
    x = np.maximum(x, 1e-9)
    return x / x.sum(axis=-1, keepdims=True)


def test_c01_prox():
    rng = np.random.default_rng(101)
    cases = []
    for d in rng.integers(2, 21, size=10_000):
        cases.append((interior(rng, 1, d)[0], rng.normal(scale=2.0, size=d), rng.uniform(0.01, 2.0)))
    t0 = time.perf_counter()
    worst = 0.0
    for d in range(2, 21):
        sel = [c for c in cases if c[0].size == d]
        x = np.stack([c[0] for c in sel])
        g = np.stack([c[1] for c in sel])
        a = np.array([c[2] for c in sel])
        worst = max(worst, float(np.abs(mirror_update(ENTROPY, x, g, a) - prox_newton(x, g, a)).max()))
    elapsed = time.perf_counter() - t0
    report(1, worst <= 1e-8 and elapsed < 10.0,
           f"prox vs Newton KKT over 1e4 cases: max err {worst:.2e} (tol 1e-8), {elapsed:.2f} s (< 10 s)")


def test_c02_poisson():
    rng = np.random.default_rng(102)
    t0 = time.perf_counter()
    res = cen = 0.0
    for _ in range(1000):
        m, d = int(rng.integers(2, 9)), int(rng.integers(1, 6))
        P = rng.uniform(0.0, 1.0, size=(m, m)) ** 3 + 1e-3
        P /= P.sum(axis=1, keepdims=True)
        G = rng.normal(size=(m, d))
        mu = stationary_distribution(P)
        Gt = poisson_solve(P, mu, G)
        res = max(res, float(np.abs((np.eye(m) - P) @ Gt - (G - mu @ G)).max()))
        cen = max(cen, float(np.abs(mu @ Gt).max()))
    elapsed = time.perf_counter() - t0
    report(2, res <= 1e-10 and cen <= 1e-12 and elapsed < 5.0,
           f"Poisson residual over 1e3 kernels {res:.2e} (tol 1e-10), centring {cen:.2e} (tol 1e-12), "
           f"{elapsed:.2f} s (< 5 s)")


def test_c03_mean_field(convex, nonconvex):
    rng = np.random.default_rng(103)
    worst = 0.0
    for prob in (convex, nonconvex):
        x = rng.dirichlet(np.ones(prob.d), size=1000)
        mu = stationary_distribution(prob.kernel.matrix(x))
        avg = np.einsum("ns,nsd->nd", mu, subgradient_field(prob, x, mu=mu))
        worst = max(worst, float(np.abs(avg - mean_field_gradient(prob, x)).max()))
    report(3, worst <= 1e-10, f"mean-field identity on both built-ins, 1e3 points each: {worst:.2e} (tol 1e-10)")


def test_c04_nu_oracle():
    rng = np.random.default_rng(104)
    eq = orth = tan = 0.0
    for d in rng.integers(2, 21, size=20):
        x = interior(rng, 500, int(d))
        g = rng.normal(scale=2.0, size=x.shape)
        nu = projected_direction(x, g)
        eq = max(eq, float(np.abs(nu - qp_projection_oracle(x, g)).max()))
        orth = max(orth, float(np.abs(np.sum(g * nu, axis=1) + np.sum(nu * nu / x, axis=1)).max()))
        tan = max(tan, float(np.abs(nu.sum(axis=1)).max()))
    ok = eq <= 1e-10 and orth <= 1e-10 and tan <= 1e-12
    report(4, ok, f"nu vs KKT QP over 1e4 cases {eq:.2e} (tol 1e-10), orthogonality {orth:.2e} (tol 1e-10), "
                  f"tangency {tan:.2e} (tol 1e-12)")


def test_c05_decomposition(convex):
    traj = track("c5", convex, [run_smd(convex, ENTROPY, SCHED, 1000, seed=5)])[0]
    dec = decompose_noise(traj, convex)
    ok = dec.max_residual <= 1e-9 and dec.max_cond_mean <= 1e-12
    report(5, ok, f"1e3-step decomposition residual {dec.max_residual:.2e} (tol 1e-9), "
                  f"A1 conditional mean {dec.max_cond_mean:.2e} (tol 1e-12)")


def test_c06_bias_ledgers(convex, nonconvex):
    parts, ok = [], True
    for name, prob in (("convex", convex), ("nonconvex", nonconvex)):
        traj = track("c6", prob, [run_smd(prob, ENTROPY, SCHED, 10_000, seed=6)])[0]
        led = bias_bound_check(traj, prob)
        ok &= led.all_hold and led.n[-1] == 10_000
        parts.append(f"{name} worst lhs/rhs {led.worst_ratio:.3f}")
    report(6, ok, "bias partial sums dominated at every n <= 1e4: " + ", ".join(parts))


@pytest.fixture(scope="module")
def long_runs(convex, nonconvex):
    t0 = time.perf_counter()
    rec = [1, 100, 1000, 10_000, 100_000]
    conv = track("c8", convex, run_smd_batch(convex, ENTROPY, SCHED, 100_000, seeds=range(20), record_at=rec))
    nonc = track("c8", nonconvex, run_smd_batch(nonconvex, ENTROPY, SCHED, 100_000, seeds=range(20),
                                                record_at=rec))
    return conv, nonc, time.perf_counter() - t0


def test_c08_convergence(long_runs):
    conv, nonc, elapsed = long_runs
    d_ratio = max(t.bregman_running_min[-2] / t.bregman_to_opt[0] for t in conv)
    g_ratio = max(t.gap_running_min[-2] / t.gap[0] for t in nonc)
    ok = d_ratio < 0.01 and g_ratio < 0.10 and elapsed < 300
    report(8, ok, f"20 seeds x 1e5: worst min D_R ratio {d_ratio:.2e} (< 1e-2), worst min Gap ratio "
                  f"{g_ratio:.2e} (< 1e-1), {elapsed:.0f} s (< 300 s)")


def test_c09_rate_shape(long_runs):
    conv = long_runs[0]
    ns = np.array([100, 1000, 10_000])
    med = np.array([np.median([t.f_gap_ergodic[t.row(n)] for t in conv]) for n in ns])
    slope = float(np.polyfit(np.log(ns), np.log(med), 1)[0])
    report(9, -0.70 <= slope <= -0.30,
           f"median f(z_n) - f* at 1e2/1e3/1e4 = {med[0]:.3g}/{med[1]:.3g}/{med[2]:.3g}, slope {slope:.3f} "
           f"(in [-0.70, -0.30])")


def test_c10_concentration(convex, nonconvex):
    t0 = time.perf_counter()
    cc, nc = builtin_config("convex"), builtin_config("nonconvex")
    conv = tail_experiment_convex(convex, ENTROPY, SCHED, N=20_000, M=200, eps_grid=cc.experiment.eps_grid,
                                  seed=10)
    nonc = tail_experiment_nonconvex(nonconvex, ENTROPY, SCHED, N=10_000, M=200,
                                     eps_grid=nc.experiment.eps_grid, seed=10)["nonconvex"]
    elapsed = time.perf_counter() - t0
    cells = [(r, "convex") for r in conv.assertions()] + [(r, "nonconvex") for r in nonc.assertions()]
    checked = [r for r, _ in cells if r["checked"]]
    failed = [r for r in checked if not r["passed"]]
    ok = not failed and elapsed < 600
    report(10, ok, f"M=200 tails: {len(checked)}/{len(cells)} cells satisfy the preconditions with bound < 1 "
                   f"(convex {conv.n_checked}, nonconvex {nonc.n_checked}), {len(failed)} violations, "
                   f"{elapsed:.0f} s (< 600 s)")


def test_c11_complexity_minimality(convex):
    c = convex.constants.for_map(ENTROPY, 5)
    D1 = math.log(5)
    parts, ok = [], True
    for eps, p in ((0.1, 0.05), (0.5, 0.01), (1.0, 0.2)):
        res = sample_complexity(eps, p, c, D1, a=0.5)
        coeffs = clause_coefficients(eps, p, c, D1, 0.5)
        scanned = complexity_scan(lambda n: clauses_hold(n, coeffs), 2 * res.N)
        ok &= bool(clauses_hold(res.N, coeffs)) and not bool(clauses_hold(res.N - 1, coeffs)) and scanned == res.N
        parts.append(f"(eps={eps}, p={p}) N={res.N}")
    report(11, ok, "N holds and N-1 fails, matching a linear scan: " + "; ".join(parts))


def test_c12_determinism(tmp_path, capsys):
    cfg = replace_section(builtin_config("convex"), "run", n_iters=2000, n_runs=50, checkpoint_stride=10)
    path = tmp_path / "c.ini"
    path.write_text(cfg.to_ini())
    base = ["--config", str(path), "--seed", "12"]
    codes = [cli.main(["run", *base, "--out", str(tmp_path / d)]) for d in ("r1", "r2")]
    codes += [cli.main(["mc", *base, "--out", str(tmp_path / d), "--jobs", j])
              for d, j in (("m1", "1"), ("m2", "1"), ("m4", "4"))]
    capsys.readouterr()
    read = lambda d, f: (tmp_path / d / f).read_bytes()
    same_run = read("r1", "trajectory.csv") == read("r2", "trajectory.csv")
    same_mc = read("m1", "tails_convex.csv") == read("m2", "tails_convex.csv") == read("m4", "tails_convex.csv")
    ok = codes == [0] * 5 and same_run and same_mc
    report(12, ok, f"trajectory CSV identical across invocations: {same_run}; tails CSV identical across "
                   f"invocations and --jobs 1/4: {same_mc}")


def test_c07_step_bound(convex, nonconvex):
    # runs above include every trajectory produced by this module
    if not STEP_RECORDS:
        for prob in (convex, nonconvex):
            track("c7", prob, run_smd_batch(prob, ENTROPY, SCHED, 10_000, seeds=range(5)))
    dense = violations = 0
    worst_ratio = 0.0
    for label, alphas, steps, G, ratio in STEP_RECORDS:
        ok = np.isfinite(steps)
        dense += int(ok.sum())
        violations += int(np.sum(steps[ok] > alphas[ok] * G / ENTROPY.sigma_R))
        worst_ratio = max(worst_ratio, ratio)
    # the optimizer checks ||dx||_1 <= alpha ||g||_inf at every step in-loop; ||g||_inf <= G_bound
    ok = violations == 0 and worst_ratio <= 1.0 + 1e-9
    report(7, ok, f"{len(STEP_RECORDS)} runs, {dense} recorded steps checked against alpha*G_bound/sigma: "
                  f"{violations} violations; worst in-loop ratio {worst_ratio:.4f} (<= 1)")
