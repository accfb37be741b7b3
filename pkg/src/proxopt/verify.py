"""Built-in desk-scale property checks driven by ``proxopt verify``.

Each suite returns a list of :class:`Check` records; a suite passes when
every record does.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import streams
from .engine import (Ball, HorizonConstant, SaddleProblem, edge_gamma, decrement_margins,
                     primal_step_decentralized, dual_step, run, step_centralized)
from .experiments import FieldScenario
from .graph import Network
from .metrics import (ExpectedQuadratic, constrained_optimum, loglog_slope,
                      regret_and_violation)
from .problems import LseRange, QuadraticObjective, QuadraticProximity, SrlsObjective, lift_positions

__all__ = ["Check", "SUITES", "run_suite", "random_instance", "rate_study",
           "prop1_suite", "gradients_suite", "lemma1_suite", "rates_suite"]


@dataclass
class Check:
    name: str
    passed: bool
    detail: str = ""


def random_connected(n, rng, extra=0.3):
    """Random spanning tree plus a fraction of the remaining pairs."""
    perm = rng.permutation(n)
    edges = {tuple(sorted((int(perm[k]), int(perm[rng.integers(k)])))) for k in range(1, n)}
    for i in range(n):
        for j in range(i + 1, n):
            if rng.random() < extra:
                edges.add((i, j))
    return Network(n, np.array(sorted(edges), dtype=np.int64).reshape(-1, 2), rng.uniform(0, 1, (n, 2)))


def random_instance(rng, variant=None, n_max=8, d_max=3):
    """Random network, problem and state for one-step comparisons.

    Returns ``(problem, net, x, lam, theta, eps)``.
    """
    variant = variant or rng.choice(["quadratic", "consensus", "lse"])
    n = int(rng.integers(2, n_max + 1))
    net = random_connected(n, rng)
    anchors = rng.uniform(-1, 1, (n, 2))
    if variant == "lse":
        d = 3
        obj = SrlsObjective(anchors)
        con = LseRange(lift_positions(anchors))
        theta = rng.uniform(0, 2, n)
        gamma = np.zeros(2 * net.n_edges)
    else:
        d = int(rng.integers(1, d_max + 1))
        q = int(rng.integers(1, 3))
        obj = QuadraticObjective(rng.standard_normal((n, q, d)))
        con = QuadraticProximity()
        theta = rng.standard_normal((n, q))
        if variant == "consensus":
            gamma = np.zeros(2 * net.n_edges)
        else:
            G = rng.uniform(0, 1, (n, n))
            gamma = edge_gamma(net, G + G.T)
    problem = SaddleProblem(obj, con, gamma, delta=float(rng.uniform(0, 1e-2)),
                            projection=Ball(float(rng.uniform(0.5, 3.0))),
                            coupling=float(rng.choice([1.0, 0.5])))
    x = problem.projection.project(rng.uniform(-1, 1, (n, d)))
    lam = rng.uniform(0, 2, 2 * net.n_edges) * (rng.random(2 * net.n_edges) < 0.8)
    eps = float(rng.uniform(0, 0.1))
    return problem, net, x, lam, theta, eps


def prop1_suite(seed=1, trials=100, tol=1e-12):
    rng = np.random.default_rng(seed)
    checks = []
    for k in range(trials):
        variant = ("quadratic", "consensus", "lse")[k % 3]
        problem, net, x, lam, theta, eps = random_instance(rng, variant)
        xd = primal_step_decentralized(problem, net, x, lam, theta, eps)
        ld = dual_step(problem, net, x, lam, eps)
        xc, lc = step_centralized(problem, net, x, lam, theta, eps)
        err = max(np.max(np.abs(xd - xc)), np.max(np.abs(ld - lc), initial=0.0))
        checks.append(Check(f"prop1[{k}] {variant} N={net.n_nodes} d={x.shape[1]}",
                            bool(err <= tol), f"max diff {err:.2e}"))
    return checks


def _fd_rel_error(f, grad, x, h=1e-6):
    g = grad(x)
    fd = np.zeros_like(x)
    flat = x.reshape(-1)
    for k in range(flat.size):
        e = np.zeros_like(flat)
        e[k] = h
        fd.reshape(-1)[k] = (f((flat + e).reshape(x.shape)) - f((flat - e).reshape(x.shape))) / (2 * h)
    return float(np.linalg.norm(fd - g) / max(np.linalg.norm(g), 1e-8))


def gradients_suite(seed=1, points=100, tol=1e-5):
    rng = np.random.default_rng(seed)
    worst = {}

    def record(name, err):
        worst[name] = max(worst.get(name, 0.0), err)

    for _ in range(points):
        d, q = 3, 2
        H = rng.standard_normal((1, q, d))
        th = rng.standard_normal((1, q))
        quad = QuadraticObjective(H)
        record("quadratic objective", _fd_rel_error(
            lambda x: quad.value_and_grad(x, th)[0].sum(),
            lambda x: quad.value_and_grad(x, th)[1], rng.standard_normal((1, d))))
        l = rng.uniform(-1, 1, (1, 2))
        r = rng.uniform(0, 2, 1)
        srls = SrlsObjective(l)
        record("srls objective", _fd_rel_error(
            lambda y: srls.value_and_grad(y, r)[0].sum(),
            lambda y: srls.value_and_grad(y, r)[1], rng.uniform(-1, 1, (1, 3))))
        anchors = lift_positions(rng.uniform(-1, 1, (2, 2)))
        for name, con, dim in (("quadratic proximity", QuadraticProximity(), 3),
                               ("lse range", LseRange(anchors), 3)):
            xi, xj = rng.uniform(-1.5, 1.5, (2, dim))
            record(name + " d/dx_i", _fd_rel_error(
                lambda v: con.evaluate(v, xj, 0, 1)[0],
                lambda v: con.evaluate(v, xj, 0, 1)[1], xi))
            record(name + " d/dx_j", _fd_rel_error(
                lambda v: con.evaluate(xi, v, 0, 1)[0],
                lambda v: con.evaluate(xi, v, 0, 1)[2], xj))
    return [Check(f"gradients {name}", err <= tol, f"worst rel err {err:.2e}")
            for name, err in worst.items()]


def field_decrement_instance(seed, T=500, rows=2, cols=5):
    """Small field run for the decrement checks: ``(problem, net, stream, traj, x_star)``."""
    sc = FieldScenario(rows=rows, cols=cols, side=40.0 * cols, T=T, n_runs=1)
    net = sc.network()
    problem = sc.problem(net)
    stream = streams.GaussianStream(np.ones((net.n_nodes, 1)), np.sqrt(sc.sigma2), seed)
    traj = run(problem, net, stream, sc.schedule(), T, np.zeros((net.n_nodes, 1)))
    expected = ExpectedQuadratic(problem.objective, np.ones((net.n_nodes, 1)), sc.sigma2)
    x_star, _ = constrained_optimum(expected, expected.grad, problem, net, np.ones((net.n_nodes, 1)))
    return problem, net, stream, traj, x_star


def lemma1_suite(seed=9, T=500, slack=1e-9):
    problem, net, stream, traj, x_star = field_decrement_instance(seed, T)
    rng = np.random.default_rng(seed)
    probes = {
        "(x*, 0)": (x_star, np.zeros(2 * net.n_edges)),
        "random feasible": (np.full_like(x_star, rng.uniform(-2, 2)),
                            rng.uniform(0, 5, 2 * net.n_edges)),
    }
    checks = []
    for name, (px, pl) in probes.items():
        m = decrement_margins(problem, net, traj, stream, px, pl)
        checks.append(Check(f"lemma1 probe {name}", bool(np.all(m >= -slack)),
                            f"{T} rounds, min margin {m.min():.3e}"))
    return checks


RATE_MEAN = np.array([0.0, 2.0])
RATE_GAMMA = 0.5


def rate_problem(replicas):
    """``replicas`` disjoint copies of the two-node scalar instance
    ``f_i = (x_i - theta_i)^2``, ``theta ~ N((0, 2), 1)``,
    ``0.5 (x_1 - x_2)^2 <= 0.5``.
    """
    n = 2 * replicas
    edges = np.arange(n).reshape(-1, 2)
    net = Network(n, edges, np.zeros((n, 1)))
    problem = SaddleProblem(QuadraticObjective.scalar(n), QuadraticProximity(),
                            np.full(2 * replicas, RATE_GAMMA), delta=0.0, projection=Ball(1e6))
    return net, problem


def rate_study(T_values=(100, 1000, 10000), replicas=100, seed=1):
    """Average optimality gap and clamped violation under ``eps = 1/sqrt(T)``.

    Returns a dict with ``gaps``, ``violations``, ``slope``, ``F_star`` and
    the per-replica Jensen/average-iterate margins (``jensen_viol``,
    ``jensen_obj``: worst ``lhs - rhs`` over all runs).
    """
    one_net, one_problem = rate_problem(1)
    expected1 = ExpectedQuadratic(one_problem.objective, RATE_MEAN[:, None], 1.0)
    x_star, F_star = constrained_optimum(expected1, expected1.grad, one_problem, one_net,
                                         np.zeros((2, 1)))
    net, problem = rate_problem(replicas)
    mean = np.tile(RATE_MEAN, replicas)[:, None]
    gaps, viols = [], []
    jensen_viol = -np.inf
    jensen_obj = -np.inf
    for T in T_values:
        stream = streams.GaussianStream(mean, 1.0, seed, run=int(T))
        traj = run(problem, net, stream, HorizonConstant(int(T)), int(T), np.zeros((2 * replicas, 1)))
        xs = traj.x[:T].reshape(T, replicas, 2)
        F = np.sum((xs - RATE_MEAN) ** 2, axis=2) + 2.0
        slack = 0.5 * (xs[:, :, 0] - xs[:, :, 1]) ** 2 - RATE_GAMMA
        reg, vio = [], []
        for r in range(replicas):
            g, v = regret_and_violation(F[:, r], F_star, slack[:, r])
            reg.append(g / T)
            vio.append(v / T)
            xbar = xs[:, r].mean(axis=0)
            at_avg = max(0.5 * (xbar[0] - xbar[1]) ** 2 - RATE_GAMMA, 0.0)
            jensen_viol = max(jensen_viol, at_avg - max(slack[:, r].mean(), 0.0))
            jensen_obj = max(jensen_obj, float(np.sum((xbar - RATE_MEAN) ** 2) + 2.0 - F[:, r].mean()))
        gaps.append(float(np.mean(reg)))
        viols.append(float(np.mean(vio)))
    return {"T": list(T_values), "gaps": gaps, "violations": viols,
            "slope": loglog_slope(T_values, gaps), "F_star": F_star, "x_star": x_star,
            "jensen_viol": jensen_viol, "jensen_obj": jensen_obj}


def rates_suite(seed=1, T_values=(100, 1000, 10000), replicas=100):
    res = rate_study(T_values, replicas, seed)
    v = res["violations"]
    return [
        Check("rates gap slope in [-0.65, -0.35]", abs(res["slope"] + 0.5) <= 0.15,
              f"slope {res['slope']:.3f}, gaps {np.round(res['gaps'], 4).tolist()}"),
        Check("rates violation decreasing", all(a > b for a, b in zip(v, v[1:])),
              f"violations {np.round(v, 5).tolist()}"),
        Check("average-iterate violation <= average violation", bool(res["jensen_viol"] <= 1e-12),
              f"worst margin {res['jensen_viol']:.2e}"),
        Check("objective at average <= average objective", res["jensen_obj"] <= 1e-9,
              f"worst margin {res['jensen_obj']:.2e}"),
    ]


SUITES = {
    "prop1": prop1_suite,
    "gradients": gradients_suite,
    "lemma1": lemma1_suite,
    "rates": rates_suite,
}


def run_suite(name, seed):
    return SUITES[name](seed=seed)
