"""Convergence diagnostics, optimum oracle, rate fits and CSV export.

CSV schema (one row per round, in this order):

    t          round index (row t describes the iterate after t rounds)
    eps        step size used in round t
    F          expected global objective at the iterate
    F_gap      F - F(x*)
    local_obj  expected local objective of the monitored node
    local_excess  local_obj minus its irreducible noise floor
    std_err    distance of the monitored node to the reference estimate
    viol_raw   signed constraint violation at the monitored node
    viol_pos   max(viol_raw, 0)
    dual_norm  Euclidean norm of all multipliers
    avg_gap    running mean of F_gap
    avg_viol   running mean of viol_pos
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np
from scipy.optimize import minimize

from .errors import InvalidArgument, NumericFailure

__all__ = [
    "COLUMNS",
    "MetricsSeries",
    "running_mean",
    "regret_and_violation",
    "average_iterate_check",
    "edge_slacks",
    "ExpectedQuadratic",
    "constrained_optimum",
    "loglog_slope",
    "settle_time",
    "export_csv",
    "read_csv",
]

COLUMNS = ("t", "eps", "F", "F_gap", "local_obj", "local_excess", "std_err",
           "viol_raw", "viol_pos", "dual_norm", "avg_gap", "avg_viol")


@dataclass
class MetricsSeries:
    """Column-oriented per-round records; every column has the same length."""

    data: dict

    def __post_init__(self):
        missing = [c for c in COLUMNS if c not in self.data]
        if missing:
            raise InvalidArgument(f"missing metric columns: {missing}")
        self.data = {c: np.asarray(self.data[c], dtype=float) for c in COLUMNS}
        lengths = {len(v) for v in self.data.values()}
        if len(lengths) > 1:
            raise InvalidArgument("metric columns differ in length")

    def __len__(self):
        return len(self.data["t"])

    def __getitem__(self, name):
        return self.data[name]

    @classmethod
    def empty(cls):
        return cls({c: np.zeros(0) for c in COLUMNS})

    @classmethod
    def build(cls, t, eps, F, F_star, local_obj, noise_floor, std_err, viol_raw, dual_norm):
        """Fill the derived columns from the primary ones."""
        F = np.asarray(F, dtype=float)
        gap = F - F_star
        viol_raw = np.asarray(viol_raw, dtype=float)
        viol_pos = np.maximum(viol_raw, 0.0)
        local_obj = np.asarray(local_obj, dtype=float)
        return cls({
            "t": t, "eps": eps, "F": F, "F_gap": gap,
            "local_obj": local_obj, "local_excess": local_obj - noise_floor,
            "std_err": std_err, "viol_raw": viol_raw, "viol_pos": viol_pos,
            "dual_norm": dual_norm,
            "avg_gap": running_mean(gap), "avg_viol": running_mean(viol_pos),
        })

    @classmethod
    def mean_of(cls, series):
        """Columnwise mean over replicas, summed in replica order."""
        series = list(series)
        if not series:
            raise InvalidArgument("no series to average")
        out = {}
        for c in COLUMNS:
            acc = np.zeros_like(series[0][c])
            for s in series:
                acc = acc + s[c]
            out[c] = acc / len(series)
        return cls(out)

    def equals(self, other) -> bool:
        return all(np.array_equal(self[c], other[c]) for c in COLUMNS)


def running_mean(values):
    values = np.asarray(values, dtype=float)
    return np.cumsum(values) / np.arange(1, len(values) + 1)


def regret_and_violation(F_values, F_star, slacks):
    """Time-aggregated suboptimality and clamped aggregated violation.

    Parameters
    ----------
    F_values : array, shape (T,)
        Expected objective at each iterate.
    F_star : float
        Optimal value from an oracle.
    slacks : array, shape (T, E)
        ``h_e(x_t) - gamma_e`` per round and (undirected) edge.

    Returns
    -------
    regret : float
        ``sum_t (F(x_t) - F*)``.
    violation : float
        ``sum_e [sum_t slack_{e,t}]_+`` (clamp after summing over time).
    """
    if F_star is None:
        raise InvalidArgument("an optimal value F* is required")
    F_values = np.asarray(F_values, dtype=float)
    slacks = np.asarray(slacks, dtype=float).reshape(len(F_values), -1)
    regret = float(np.sum(F_values - F_star))
    violation = float(np.sum(np.maximum(np.sum(slacks, axis=0), 0.0)))
    return regret, violation


def edge_slacks(problem, net, x):
    """``h_e - gamma_e`` on each undirected edge (forward direction)."""
    fwd = net.forward
    src, dst = net.src[fwd], net.dst[fwd]
    h, _, _ = problem.constraint.evaluate(x[src], x[dst], src, dst)
    return h - problem.gamma[fwd]


def average_iterate_check(xs, T, problem, net, expected_F, F_star):
    """Gap and clamped violation at the averaged iterate.

    Parameters
    ----------
    xs : array, shape (K, N, d)
        Iterates; the first ``T`` are averaged.
    expected_F : callable
        ``x -> F(x)`` for the expected problem.

    Returns
    -------
    (gap, violation) with ``gap = F(xbar) - F*`` and
    ``violation = sum_e [h_e(xbar) - gamma_e]_+``.
    """
    from .engine import time_average

    if F_star is None:
        raise InvalidArgument("an optimal value F* is required")
    xbar = time_average(xs, T)
    gap = float(expected_F(xbar) - F_star)
    viol = float(np.sum(np.maximum(edge_slacks(problem, net, xbar), 0.0)))
    return gap, viol


class ExpectedQuadratic:
    """Expected objective of ``||H_i x_i - theta_i||^2`` under
    ``theta_i ~ N(mu_i, noise_var I)``.
    """

    def __init__(self, objective, mean, noise_var):
        self.H = objective.H
        self.mean = np.asarray(mean, dtype=float).reshape(self.H.shape[0], self.H.shape[1])
        self.noise_var = np.broadcast_to(np.asarray(noise_var, dtype=float),
                                         (self.H.shape[0],)).astype(float)
        self.floor = self.noise_var * self.H.shape[1]

    def node_values(self, x):
        resid = np.einsum("nqd,nd->nq", self.H, x) - self.mean
        return np.sum(resid ** 2, axis=1) + self.floor

    def __call__(self, x):
        return float(np.sum(self.node_values(np.asarray(x, dtype=float))))

    def grad(self, x):
        resid = np.einsum("nqd,nd->nq", self.H, x) - self.mean
        return 2.0 * np.einsum("nqd,nq->nd", self.H, resid)


def constrained_optimum(expected_F, grad_F, problem, net, x0, tol=1e-12, maxiter=1000):
    """Minimize the expected objective subject to every proximity
    constraint, by SLSQP.

    The projection set is assumed inactive at the optimum. Returns
    ``(x_star, F_star)``. Desk scale only.
    """
    x0 = np.asarray(x0, dtype=float)
    shape = x0.shape
    fwd = net.forward
    src, dst = net.src[fwd], net.dst[fwd]
    gamma = problem.gamma[fwd]
    n_var = x0.size

    def cons(v):
        x = v.reshape(shape)
        h, _, _ = problem.constraint.evaluate(x[src], x[dst], src, dst)
        return gamma - h

    def cons_jac(v):
        x = v.reshape(shape)
        _, gi, gj = problem.constraint.evaluate(x[src], x[dst], src, dst)
        J = np.zeros((len(src), n_var))
        d = shape[1]
        rows = np.arange(len(src))
        for k in range(d):
            J[rows, src * d + k] -= gi[:, k]
            J[rows, dst * d + k] -= gj[:, k]
        return J

    constraints = [{"type": "ineq", "fun": cons, "jac": cons_jac}] if len(src) else []
    res = minimize(lambda v: expected_F(v.reshape(shape)), x0.ravel(),
                   jac=lambda v: grad_F(v.reshape(shape)).ravel(),
                   method="SLSQP", constraints=constraints,
                   options={"ftol": tol, "maxiter": maxiter})
    if not res.success or not np.all(np.isfinite(res.x)):
        raise NumericFailure(f"optimum oracle did not converge: {res.message}")
    x = problem.projection.project(res.x.reshape(shape))
    return x, float(expected_F(x))


def loglog_slope(xs, ys):
    """Least-squares slope of ``log y`` against ``log x``."""
    xs = np.asarray(xs, dtype=float)
    ys = np.asarray(ys, dtype=float)
    if np.any(xs <= 0) or np.any(ys <= 0):
        raise InvalidArgument("log-log fit needs positive data")
    return float(np.polyfit(np.log(xs), np.log(ys), 1)[0])


def settle_time(values, threshold):
    """First round after which ``values`` stays at or below ``threshold``.

    ``values[k]`` belongs to round ``k+1``. Returns 0 if the series never
    exceeds the threshold and ``len(values)+1`` if it ends above it.
    """
    above = np.flatnonzero(np.asarray(values) > threshold)
    return 0 if len(above) == 0 else int(above[-1]) + 2


def _fmt(v):
    return "%.17g" % v


def export_csv(series: MetricsSeries, path) -> None:
    try:
        with open(path, "w", newline="") as fh:
            fh.write(",".join(COLUMNS) + "\n")
            cols = [series[c] for c in COLUMNS]
            for row in zip(*cols):
                fh.write(",".join(_fmt(v) for v in row) + "\n")
    except OSError as exc:
        raise OSError(f"cannot write metrics to {path}: {exc.strerror}") from exc


def read_csv(path) -> MetricsSeries:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if tuple(header) != COLUMNS:
            raise InvalidArgument(f"{path}: unexpected header {header}")
        rows = [[float(v) for v in r] for r in reader if r]
    arr = np.array(rows, dtype=float).reshape(-1, len(COLUMNS))
    return MetricsSeries({c: arr[:, k] for k, c in enumerate(COLUMNS)})
