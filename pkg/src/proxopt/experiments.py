"""Scenario builders and Monte-Carlo drivers for the two sensor-network
experiments: correlated random-field estimation and range-based source
localization.

Randomness is drawn from counter-based substreams keyed on
``(seed, purpose, run, t)`` (see :mod:`proxopt.streams`). All methods in one
replica see the same observations and the same initial point.
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, fields
from typing import Optional

import numpy as np

from . import streams
from .baselines import lmmse_oracle, lmmse_paper_formula, metropolis_weights, run_dogd
from .engine import Ball, Constant, Hybrid, SaddleProblem, edge_gamma, run
from .errors import InvalidArgument
from .graph import Network, geometric_sampler, make_grid, match_fiedler
from .metrics import ExpectedQuadratic, MetricsSeries, constrained_optimum
from .problems import LseRange, QuadraticObjective, QuadraticProximity, SrlsObjective, lift_positions

__all__ = [
    "FIELD_METHODS",
    "LOCALIZATION_METHODS",
    "FieldScenario",
    "LocalizationScenario",
    "ExperimentResult",
    "incidence",
    "resolve_monitor",
    "constraint_violation",
    "run_field_experiment",
    "run_localization_experiment",
]

FIELD_METHODS = ("sp-proximity", "lmmse-stream")
LOCALIZATION_METHODS = ("sp-proximity", "sp-consensus", "dogd")


def _require_positive(obj, names):
    for name in names:
        v = getattr(obj, name)
        if not v > 0:
            raise InvalidArgument(f"{name} must be positive, got {v!r}")


def _require_nonnegative(obj, names):
    for name in names:
        v = getattr(obj, name)
        if not v >= 0:
            raise InvalidArgument(f"{name} must be nonnegative, got {v!r}")


@dataclass
class FieldScenario:
    """Grid of scalar sensors observing a spatially correlated field.

    Correlation between nodes is ``exp(-dist)`` with distance in metres;
    tolerances are ``gamma_ij`` equal to that correlation. ``truth="ones"``
    fixes the field at one everywhere; ``truth="draw"`` samples it per
    replica from ``N(1, R_x)``.
    """

    rows: int = 5
    cols: int = 10
    side: float = 200.0
    sigma2: float = 10.0
    gain: float = 1.0
    eps: float = 1e-2
    t0: float = 100.0
    delta: float = 1e-5
    T: int = 500
    n_runs: int = 20
    radius: float = 1e6
    truth: str = "ones"
    coupling: float = 0.5
    threshold: float = 0.1

    def __post_init__(self):
        _require_positive(self, ["rows", "cols", "side", "gain", "eps", "t0", "T",
                                 "n_runs", "radius", "coupling"])
        _require_nonnegative(self, ["sigma2", "delta"])
        if self.truth not in ("ones", "draw"):
            raise InvalidArgument(f"truth must be 'ones' or 'draw', got {self.truth!r}")

    def network(self) -> Network:
        return make_grid(self.rows, self.cols, (self.side, self.side))

    @staticmethod
    def correlation(net: Network) -> np.ndarray:
        diff = net.positions[:, None, :] - net.positions[None, :, :]
        return np.exp(-np.linalg.norm(diff, axis=-1))

    def problem(self, net: Network) -> SaddleProblem:
        return SaddleProblem(
            QuadraticObjective.scalar(net.n_nodes, self.gain),
            QuadraticProximity(),
            edge_gamma(net, self.correlation(net)),
            delta=self.delta,
            projection=Ball(self.radius),
            coupling=self.coupling,
        )

    def schedule(self):
        return Hybrid(self.eps, self.t0)

    def field_values(self, net, seed, run):
        if self.truth == "ones":
            return np.ones(net.n_nodes)
        R = self.correlation(net)
        # R is PSD but can be numerically singular; eigh is robust
        w, V = np.linalg.eigh(R)
        root = V * np.sqrt(np.clip(w, 0.0, None))
        z = streams.substream(seed, streams.TRUTH, run).standard_normal(net.n_nodes)
        return 1.0 + root @ z


@dataclass
class LocalizationScenario:
    """Range-only localization of a source at the sensors' centroid.

    Coordinates are divided by ``side`` when ``normalize`` is set, so the
    region becomes the unit square and the noise variance
    ``noise_coef * ||l_i - x*||`` is measured in those units.
    """

    layout: str = "grid"
    n_nodes: int = 64
    side: float = 1000.0
    radius: float = 50.0
    fiedler_tol: float = 0.25
    noise_coef: float = 2.0
    eps: float = 10 ** -1.5
    t0: float = 100.0
    delta: float = 1e-7
    T: int = 1000
    n_runs: int = 20
    eval_batch: int = 1000
    coupling: float = 0.5
    proj_radius: float = 1e6
    normalize: bool = True

    def __post_init__(self):
        _require_positive(self, ["n_nodes", "side", "radius", "fiedler_tol", "eps", "t0",
                                 "T", "n_runs", "eval_batch", "coupling", "proj_radius"])
        _require_nonnegative(self, ["noise_coef", "delta"])
        if self.layout not in ("grid", "uniform", "gaussian"):
            raise InvalidArgument(f"layout must be grid, uniform or gaussian, got {self.layout!r}")
        if self.layout == "grid" and math.isqrt(self.n_nodes) ** 2 != self.n_nodes:
            raise InvalidArgument(f"n_nodes must be a perfect square for the grid layout, got {self.n_nodes}")

    def network(self, seed=0) -> Network:
        k = math.isqrt(self.n_nodes)
        grid = make_grid(k, k, (self.side, self.side)) if k * k == self.n_nodes else None
        if self.layout == "grid":
            return grid
        if grid is None:
            raise InvalidArgument("Fiedler matching needs a square node count for the reference grid")
        sampler = geometric_sampler(self.n_nodes, (self.side, self.side), self.radius, self.layout)
        return match_fiedler(grid, sampler, self.fiedler_tol, rng_seed=seed)

    def scale(self):
        return self.side if self.normalize else 1.0

    def schedule(self, method):
        return Constant(self.eps) if method == "dogd" else Hybrid(self.eps, self.t0)

    def problem(self, net, method) -> SaddleProblem:
        pos = net.positions / self.scale()
        con = LseRange(lift_positions(pos)) if method == "sp-proximity" else QuadraticProximity()
        return SaddleProblem(SrlsObjective(pos), con, np.zeros(2 * net.n_edges),
                             delta=self.delta, projection=Ball(self.proj_radius),
                             coupling=self.coupling)


@dataclass
class ExperimentResult:
    """Per-replica metric series for each method, in replica order."""

    methods: tuple
    runs: dict
    monitor: object
    extras: dict = field(default_factory=dict)
    trajectories: Optional[dict] = None

    def mean(self, method) -> MetricsSeries:
        return MetricsSeries.mean_of(self.runs[method])

    def column(self, method, name) -> np.ndarray:
        """(n_runs, T) array of one metric column."""
        return np.array([s[name] for s in self.runs[method]])


def incidence(net: Network) -> np.ndarray:
    """(N, 2M) matrix summing directed-edge values into their source node."""
    S = np.zeros((net.n_nodes, 2 * net.n_edges))
    S[net.src, np.arange(2 * net.n_edges)] = 1.0
    return S


def resolve_monitor(net: Network, monitor, centre=None):
    """Node index to report, or ``"mean"`` to average over all nodes.

    ``None`` or ``"center"`` selects the node nearest ``centre`` (lowest
    index on ties).
    """
    if monitor == "mean":
        return "mean"
    if monitor is None or monitor == "center":
        c = net.positions.mean(axis=0) if centre is None else np.asarray(centre, dtype=float)
        return int(np.argmin(np.linalg.norm(net.positions - c, axis=1)))
    i = int(monitor)
    if not 0 <= i < net.n_nodes:
        raise InvalidArgument(f"monitor node {i} outside 0..{net.n_nodes - 1}")
    return i


def _reduce(values, monitor):
    """Pick the monitored node's column (last axis) or average over nodes."""
    return values.mean(axis=-1) if monitor == "mean" else values[..., monitor]


def constraint_violation(net: Network, y, variant: str, node: int, constraint=None) -> float:
    """Violation reported for one node.

    ``variant="proximity"`` gives ``sum_j 0.5 h_ij`` with ``constraint``
    defaulting to the quadratic proximity; ``variant="consensus"`` gives
    ``sum_j ||y_i - y_j||``.
    """
    if not 0 <= node < net.n_nodes:
        raise InvalidArgument(f"node {node} outside 0..{net.n_nodes - 1}")
    y = np.asarray(y, dtype=float)
    nbrs = np.array(net.neighborhoods[node], dtype=np.int64)
    if len(nbrs) == 0:
        return 0.0
    yi = np.broadcast_to(y[node], (len(nbrs),) + y.shape[1:])
    if variant == "consensus":
        return float(np.sum(np.linalg.norm(yi - y[nbrs], axis=-1)))
    if variant == "proximity":
        con = QuadraticProximity() if constraint is None else constraint
        h, _, _ = con.evaluate(yi, y[nbrs], np.full(len(nbrs), node), nbrs)
        return float(np.sum(0.5 * h))
    raise InvalidArgument(f"unknown violation variant {variant!r}")


def _run_parallel(worker, tasks, jobs):
    if jobs is None or jobs <= 1 or len(tasks) <= 1:
        return [worker(task) for task in tasks]
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(worker, tasks))


def _check_methods(methods, allowed):
    methods = tuple(allowed if methods is None else methods)
    unknown = [m for m in methods if m not in allowed]
    if unknown or not methods:
        raise InvalidArgument(f"unknown methods {unknown}; choose from {', '.join(allowed)}")
    return methods


# -- random field ------------------------------------------------------------

def _field_replica(task):
    sc, seed, run_id, methods, monitor, paper_formula, keep = task
    net = sc.network()
    problem = sc.problem(net)
    obj = problem.objective
    n, T = net.n_nodes, sc.T
    x_true = sc.field_values(net, seed, run_id)
    mean_obs = sc.gain * x_true[:, None]
    stream = streams.GaussianStream(mean_obs, math.sqrt(sc.sigma2), seed, run_id)
    expected = ExpectedQuadratic(obj, mean_obs, sc.sigma2)
    R = sc.correlation(net)

    # batch benchmark from every observation of the replica
    obs = np.stack([stream.draw(t)[:, 0] for t in range(1, T + 1)])
    sigma2_hat = float(np.mean(np.var(obs, axis=0, ddof=1))) if T > 1 else sc.sigma2
    sigma2_hat = max(sigma2_hat, 1e-12)
    # H^T H = T gain^2 I and H^T theta = gain * sum_t theta_t, so the stacked
    # T*N-row system reduces to an N-row one with the same normal equations
    x_ref = lmmse_oracle(math.sqrt(T) * sc.gain * np.eye(n), R, sigma2_hat,
                         obs.sum(axis=0) / math.sqrt(T))
    extras = {"x_ref": x_ref, "x_true": x_true, "sigma2_hat": sigma2_hat}
    if paper_formula:
        extras["x_ref_paper"] = lmmse_paper_formula(sc.gain * np.eye(n), R, sigma2_hat,
                                                   obs.mean(axis=0))

    x_opt, F_star = constrained_optimum(expected, expected.grad, problem, net, x_true[:, None])
    extras["F_star"] = F_star
    S = incidence(net)
    x0 = np.zeros((n, 1))
    schedule = sc.schedule()
    out, trajs = {}, {}
    for method in methods:
        if method == "sp-proximity":
            traj = run(problem, net, stream, schedule, T, x0)
        else:
            traj = run_dogd(np.eye(n), obj, stream, schedule, T, x0, problem.projection)
        xs = traj.x[1:]
        node_f = np.array([expected.node_values(x) for x in xs])
        h, _, _ = problem.constraint.evaluate(xs[:, net.src], xs[:, net.dst], net.src, net.dst)
        node_viol = (h - problem.gamma) @ S.T
        err = np.abs(xs[:, :, 0] - x_ref)
        lam = traj.lam[1:]
        out[method] = MetricsSeries.build(
            t=np.arange(1, T + 1), eps=traj.eps, F=node_f.sum(axis=1), F_star=F_star,
            local_obj=_reduce(node_f, monitor), noise_floor=sc.sigma2,
            std_err=_reduce(err, monitor), viol_raw=_reduce(node_viol, monitor),
            dual_norm=np.linalg.norm(lam, axis=1))
        if keep:
            trajs[method] = traj
    return out, extras, (trajs if keep else None)


def run_field_experiment(scenario: FieldScenario, seed: int, methods=None, jobs=1,
                         monitor=None, paper_formula=False, keep_trajectories=False):
    """Monte-Carlo comparison of the proximity-constrained saddle-point method
    and correlation-blind per-node stochastic gradient descent.

    Parameters
    ----------
    monitor : None, "center", "mean" or int
        Node whose local metrics are reported.
    paper_formula : bool
        Also evaluate the printed single-slot LMMSE expression (stored in
        ``extras``; never used as the reference).
    """
    methods = _check_methods(methods, FIELD_METHODS)
    net = scenario.network()
    mon = resolve_monitor(net, monitor, (scenario.side / 2, scenario.side / 2))
    tasks = [(scenario, seed, r, methods, mon, paper_formula, keep_trajectories)
             for r in range(scenario.n_runs)]
    results = _run_parallel(_field_replica, tasks, jobs)
    return _collect(methods, mon, results, keep_trajectories)


def _collect(methods, mon, results, keep):
    runs = {m: [r[0][m] for r in results] for m in methods}
    extras = {}
    for key in results[0][1]:
        extras[key] = np.array([r[1][key] for r in results])
    trajs = {m: [r[2][m] for r in results] for m in methods} if keep else None
    return ExperimentResult(methods, runs, mon, extras, trajs)


# -- source localization -----------------------------------------------------

def _localization_replica(task):
    sc, net, seed, run_id, methods, monitor, keep = task
    pos = net.positions / sc.scale()
    source = pos.mean(axis=0)
    dist = np.linalg.norm(pos - source, axis=1)
    noise = np.sqrt(sc.noise_coef * dist)
    stream = streams.GaussianStream(dist, noise, seed, run_id)
    held_out = streams.GaussianStream(dist, noise, seed, run_id, purpose=streams.EVAL)
    b_eval = held_out.batch(sc.eval_batch) ** 2 - np.sum(pos ** 2, axis=1)
    b_mean = b_eval.mean(axis=0)
    b_var = b_eval.var(axis=0)
    y0 = streams.substream(seed, streams.INIT, run_id).uniform(0.0, 1.0, (net.n_nodes, pos.shape[1] + 1))
    S = incidence(net)
    W = metropolis_weights(net) if "dogd" in methods else None
    out, trajs = {}, {}
    for method in methods:
        problem = sc.problem(net, method)
        schedule = sc.schedule(method)
        if method == "dogd":
            traj = run_dogd(W, problem.objective, stream, schedule, sc.T, y0, problem.projection)
        else:
            traj = run(problem, net, stream, schedule, sc.T, y0)
        ys = traj.x[1:]
        A = problem.objective.A
        node_f = (np.sum(A * ys, axis=-1) - b_mean) ** 2 + b_var
        ysrc, ydst = ys[:, net.src], ys[:, net.dst]
        if method == "sp-proximity":
            h, _, _ = problem.constraint.evaluate(ysrc, ydst, net.src, net.dst)
            per_edge = 0.5 * h
        else:
            per_edge = np.linalg.norm(ysrc - ydst, axis=-1)
        node_viol = per_edge @ S.T
        err = np.linalg.norm(ys[:, :, :pos.shape[1]] - source, axis=-1)
        out[method] = MetricsSeries.build(
            t=np.arange(1, sc.T + 1), eps=traj.eps, F=node_f.sum(axis=1), F_star=float(b_var.sum()),
            local_obj=_reduce(node_f, monitor), noise_floor=_reduce(b_var, monitor),
            std_err=_reduce(err, monitor), viol_raw=_reduce(node_viol, monitor),
            dual_norm=np.linalg.norm(traj.lam[1:], axis=1))
        if keep:
            trajs[method] = traj
    return out, {"source": source}, (trajs if keep else None)


def run_localization_experiment(scenario: LocalizationScenario, seed: int, methods=None,
                                jobs=1, monitor=None, keep_trajectories=False, net=None):
    """Monte-Carlo comparison of proximity-constrained and consensus-style
    localization.

    The network is built once from ``seed`` (unless given) and shared by
    all replicas and methods. Standard errors and the objective floor are in
    normalized coordinates when the scenario normalizes.
    """
    methods = _check_methods(methods, LOCALIZATION_METHODS)
    if net is None:
        net = scenario.network(seed)
    centre = np.full(2, scenario.side / 2)
    mon = resolve_monitor(net, monitor, centre)
    tasks = [(scenario, net, seed, r, methods, mon, keep_trajectories)
             for r in range(scenario.n_runs)]
    results = _run_parallel(_localization_replica, tasks, jobs)
    return _collect(methods, mon, results, keep_trajectories)


def scenario_fields(cls):
    """Names and defaults of a scenario dataclass."""
    return {f.name: f.default for f in fields(cls)}
