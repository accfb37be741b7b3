"""Stochastic saddle-point iteration for proximity-constrained networks.

State layout
------------
Primal iterates are arrays of shape (N, d), one row per node. Multipliers are
arrays of shape (2M,), one entry per directed edge in ``net.directed`` order.

The Lagrangian used throughout is

    L_t(x, lam) = sum_i f_i(x_i; theta_{i,t})
                  + c * sum_{(i,j) directed} [lam_ij (h_ij(x_i, x_j) - gamma_ij)
                                              - (delta/2) lam_ij^2]

with coupling ``c``. Its x-gradient at node ``i`` is
``grad f_i + c * sum_j (lam_ij + lam_ji) grad_1 h_ij``. The dual update
``lam <- [(1 - eps*delta) lam + eps (h - gamma)]_+`` is a projected ascent
step of length ``eps/c`` on the same function, so both updates are exact
(projected) gradient steps. ``c = 1`` is the generic per-node form;
``c = 1/2`` gives the specialised field and localization updates.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Iterator, Protocol

import numpy as np

from .errors import InvalidArgument, NumericFailure
from .graph import Network

__all__ = [
    "Ball",
    "Box",
    "Unconstrained",
    "Constant",
    "HorizonConstant",
    "Hybrid",
    "SaddleProblem",
    "Trajectory",
    "edge_gamma",
    "primal_step_decentralized",
    "dual_step",
    "step_centralized",
    "sspm_round",
    "iterate",
    "run",
    "time_average",
    "lagrangian_value",
    "lagrangian_gradients",
    "decrement_margins",
    "check_lemma1",
    "delta_condition",
    "DeltaConditionWarning",
]


# -- projection sets ---------------------------------------------------------

class Unconstrained:
    def project(self, x):
        return np.array(x, dtype=float, copy=True)

    def contains(self, x):
        return bool(np.all(np.isfinite(x)))


@dataclass(frozen=True)
class Ball:
    """Euclidean ball of radius ``radius`` centred at the origin, per node."""

    radius: float = 1e6

    def __post_init__(self):
        if not self.radius > 0:
            raise InvalidArgument("ball radius must be positive")

    def project(self, x):
        x = np.array(x, dtype=float, copy=True)
        rows = np.atleast_2d(x)
        norms = _norm(rows)
        out = norms > self.radius
        if np.any(out):
            scaled = rows[out] * (self.radius / norms[out])[:, None]
            # rounding can leave the norm a hair above the radius; shrink so
            # that projecting again is the identity
            over = _norm(scaled) > self.radius
            while np.any(over):
                scaled[over] *= 1.0 - 2.0 ** -52
                over = _norm(scaled) > self.radius
            rows[out] = scaled
        return rows.reshape(x.shape)

    def contains(self, x):
        return bool(np.all(_norm(np.atleast_2d(x)) <= self.radius))


def _norm(rows):
    """Row norms without intermediate overflow."""
    if rows.shape[-1] == 0:
        return np.zeros(rows.shape[:-1])
    return np.hypot.reduce(rows, axis=-1)


@dataclass(frozen=True)
class Box:
    lower: np.ndarray
    upper: np.ndarray

    def __post_init__(self):
        lo = np.asarray(self.lower, dtype=float)
        hi = np.asarray(self.upper, dtype=float)
        if np.any(lo > hi):
            raise InvalidArgument("box lower bound exceeds upper bound")
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", hi)

    def project(self, x):
        return np.clip(np.asarray(x, dtype=float), self.lower, self.upper)

    def contains(self, x):
        x = np.asarray(x, dtype=float)
        return bool(np.all((x >= self.lower) & (x <= self.upper)))


# -- step schedules ----------------------------------------------------------

@dataclass(frozen=True)
class Constant:
    eps: float

    def __post_init__(self):
        if not self.eps > 0:
            raise InvalidArgument("step size must be positive")

    def __call__(self, t):
        return self.eps


@dataclass(frozen=True)
class HorizonConstant:
    """``eps = 1/sqrt(T)`` for a known horizon ``T``."""

    horizon: int

    def __post_init__(self):
        if self.horizon < 1:
            raise InvalidArgument("horizon must be >= 1")

    @property
    def eps(self):
        return 1.0 / math.sqrt(self.horizon)

    def __call__(self, t):
        return self.eps


@dataclass(frozen=True)
class Hybrid:
    """Constant ``eps`` up to ``t0``, then ``eps * t0 / t``."""

    eps: float
    t0: float

    def __post_init__(self):
        if not (self.eps > 0 and self.t0 > 0):
            raise InvalidArgument("hybrid schedule needs eps > 0 and t0 > 0")

    def __call__(self, t):
        return min(self.eps, self.eps * self.t0 / t)


# -- problem -----------------------------------------------------------------

def edge_gamma(net: Network, gamma) -> np.ndarray:
    """Per-directed-edge tolerances from a scalar, an (N, N) matrix or a
    callable ``(i, j) -> float``.
    """
    src, dst = net.src, net.dst
    if callable(gamma):
        g = np.array([gamma(int(i), int(j)) for i, j in zip(src, dst)], dtype=float)
    else:
        arr = np.asarray(gamma, dtype=float)
        if arr.ndim == 0:
            g = np.full(len(src), float(arr))
        elif arr.shape == (net.n_nodes, net.n_nodes):
            g = arr[src, dst]
        elif arr.shape == (len(src),):
            g = arr.copy()
        else:
            raise InvalidArgument(f"cannot interpret gamma with shape {arr.shape}")
    return g


@dataclass
class SaddleProblem:
    """Objective, proximity constraint, tolerances and regularization.

    ``gamma`` is indexed like ``net.directed`` and must be symmetric.
    """

    objective: object
    constraint: object
    gamma: np.ndarray
    delta: float = 0.0
    projection: object = field(default_factory=Ball)
    coupling: float = 1.0

    def __post_init__(self):
        self.gamma = np.asarray(self.gamma, dtype=float)
        if self.delta < 0:
            raise InvalidArgument("delta must be nonnegative")
        if not self.coupling > 0:
            raise InvalidArgument("coupling must be positive")

    def validate(self, net: Network):
        if self.gamma.shape != (2 * net.n_edges,):
            raise InvalidArgument(
                f"gamma has shape {self.gamma.shape}, expected ({2 * net.n_edges},)")
        if not np.array_equal(self.gamma, self.gamma[net.reverse]):
            raise InvalidArgument("gamma must be symmetric (gamma_ij == gamma_ji)")


class ObservationStream(Protocol):
    def draw(self, t: int) -> np.ndarray: ...


def _check_finite(arr, what, t, net=None, per_edge=False):
    bad = ~np.isfinite(arr)
    if bad.ndim > 1:
        bad = bad.any(axis=tuple(range(1, bad.ndim)))
    if np.any(bad):
        k = int(np.argmax(bad))
        node = int(net.src[k]) if per_edge and net is not None else k
        raise NumericFailure(f"non-finite {what}", node=node, iteration=t)


def primal_step_decentralized(problem: SaddleProblem, net: Network, x, lam, theta, eps, t=None):
    """Synchronous round of per-node projected primal updates.

    Node ``i`` descends along ``grad f_i + c * sum_j (lam_ij + lam_ji) grad_1 h_ij``
    using only its own observation and its neighbors' round-start values.
    """
    x = np.asarray(x, dtype=float)
    lam = np.asarray(lam, dtype=float)
    _, g = problem.objective.value_and_grad(x, theta)
    _check_finite(g, "objective gradient", t)
    if net.n_edges:
        src, dst = net.src, net.dst
        _, gi, _ = problem.constraint.evaluate(x[src], x[dst], src, dst)
        weight = problem.coupling * (lam + lam[net.reverse])
        pull = weight[:, None] * gi
        g = g.copy()
        np.add.at(g, src, pull)
        _check_finite(g, "primal gradient", t)
    return problem.projection.project(x - eps * g)


def dual_step(problem: SaddleProblem, net: Network, x, lam, eps, t=None):
    """``lam_ij <- [(1 - eps*delta) lam_ij + eps (h_ij(x_i, x_j) - gamma_ij)]_+``."""
    lam = np.asarray(lam, dtype=float)
    if not net.n_edges:
        return lam.copy()
    src, dst = net.src, net.dst
    h, _, _ = problem.constraint.evaluate(x[src], x[dst], src, dst)
    _check_finite(h, "constraint value", t, net, per_edge=True)
    return np.maximum(0.0, (1.0 - eps * problem.delta) * lam + eps * (h - problem.gamma))


def sspm_round(problem, net, x, lam, theta, eps, t=None):
    """Primal and dual updates, both from the round-start snapshot."""
    return (primal_step_decentralized(problem, net, x, lam, theta, eps, t),
            dual_step(problem, net, x, lam, eps, t))


def lagrangian_gradients(problem: SaddleProblem, net: Network, x, lam, theta):
    """Stacked ``(grad_x L, grad_lam L)`` assembled term by term.

    Every directed-edge term ``c lam_e (h_e - gamma_e)`` contributes to both
    endpoints; no symmetry of ``h`` is assumed.
    """
    x = np.asarray(x, dtype=float)
    lam = np.asarray(lam, dtype=float)
    n, d = x.shape
    _, gf = problem.objective.value_and_grad(x, theta)
    gx = gf.reshape(n * d).copy()
    if not net.n_edges:
        return gx.reshape(n, d), np.zeros(0)
    c = problem.coupling
    src, dst = net.src, net.dst
    h, g1, g2 = problem.constraint.evaluate(x[src], x[dst], src, dst)
    cols = np.arange(d)
    np.add.at(gx, (src[:, None] * d + cols).ravel(), (c * lam[:, None] * g1).ravel())
    np.add.at(gx, (dst[:, None] * d + cols).ravel(), (c * lam[:, None] * g2).ravel())
    glam = c * ((h - problem.gamma) - problem.delta * lam)
    return gx.reshape(n, d), glam


def step_centralized(problem, net, x, lam, theta, eps, t=None):
    """Projected descent/ascent on the stacked Lagrangian."""
    x = np.asarray(x, dtype=float)
    gx, glam = lagrangian_gradients(problem, net, x, lam, theta)
    _check_finite(gx, "primal gradient", t)
    _check_finite(glam, "dual gradient", t, net, per_edge=True)
    x_new = problem.projection.project(x - eps * gx)
    lam_new = np.maximum(0.0, np.asarray(lam, dtype=float) + (eps / problem.coupling) * glam)
    return x_new, lam_new


def lagrangian_value(problem: SaddleProblem, net: Network, x, lam, theta, eps=None):
    """Stochastic Lagrangian at ``(x, lam)`` for observations ``theta``.

    ``eps`` is accepted for symmetry with the step functions; the regularizer
    matching the dual update does not depend on it.
    """
    x = np.asarray(x, dtype=float)
    lam = np.asarray(lam, dtype=float)
    fv, _ = problem.objective.value_and_grad(x, theta)
    total = float(np.sum(fv))
    if net.n_edges:
        h, _, _ = problem.constraint.evaluate(x[net.src], x[net.dst], net.src, net.dst)
        total += problem.coupling * float(
            np.sum(lam * (h - problem.gamma) - 0.5 * problem.delta * lam ** 2))
    if not math.isfinite(total):
        raise NumericFailure("non-finite Lagrangian value")
    return total


# -- run loop ----------------------------------------------------------------

@dataclass
class Trajectory:
    """Iterates ``x[k], lam[k]`` for k = 0..T; round k+1 used ``eps[k]``."""

    x: np.ndarray
    lam: np.ndarray
    eps: np.ndarray

    def __len__(self):
        return len(self.x)


class DeltaConditionWarning(UserWarning):
    pass


def delta_condition(n_nodes, n_edges, delta, eps, lipschitz=None, warn=True):
    """Check ``(N + M) L^2 + delta^2 eps^2 <= delta``.

    Returns ``None`` when ``lipschitz`` is unknown, else whether it holds.
    """
    if lipschitz is None:
        ok = None
        msg = "dual-regularizer condition unverifiable without a Lipschitz constant"
    else:
        ok = (n_nodes + n_edges) * lipschitz ** 2 + delta ** 2 * eps ** 2 <= delta
        msg = (f"delta={delta:g} violates (N+M)L^2 + delta^2 eps^2 <= delta "
               f"for N={n_nodes}, M={n_edges}, L={lipschitz:g}, eps={eps:g}")
    if warn and not ok:
        warnings.warn(msg, DeltaConditionWarning, stacklevel=2)
    return ok


def iterate(problem, net, stream, schedule, T, x0, lam0=None) -> Iterator[tuple]:
    """Yield ``(t, eps_t, x_{t+1}, lam_{t+1})`` for rounds t = 1..T."""
    problem.validate(net)
    x = problem.projection.project(np.asarray(x0, dtype=float))
    lam = np.zeros(2 * net.n_edges) if lam0 is None else np.array(lam0, dtype=float)
    if np.any(lam < 0):
        raise InvalidArgument("initial multipliers must be nonnegative")
    for t in range(1, T + 1):
        eps = schedule(t)
        # overflow surfaces as a NumericFailure from the finiteness checks
        with np.errstate(over="ignore", invalid="ignore"):
            x, lam = sspm_round(problem, net, x, lam, stream.draw(t), eps, t)
        yield t, eps, x, lam


def run(problem, net, stream, schedule, T, x0, lam0=None) -> Trajectory:
    """Run ``T`` synchronous rounds and keep every iterate."""
    if T < 0:
        raise InvalidArgument("T must be nonnegative")
    x0 = problem.projection.project(np.asarray(x0, dtype=float))
    lam0 = np.zeros(2 * net.n_edges) if lam0 is None else np.array(lam0, dtype=float)
    xs = np.empty((T + 1,) + x0.shape)
    lams = np.empty((T + 1, len(lam0)))
    epss = np.empty(T)
    xs[0], lams[0] = x0, lam0
    for t, eps, x, lam in iterate(problem, net, stream, schedule, T, x0, lam0):
        xs[t], lams[t], epss[t - 1] = x, lam, eps
    return Trajectory(xs, lams, epss)


def time_average(xs, T=None):
    """Mean of the first ``T`` iterates (all of them by default)."""
    xs = np.asarray(xs.x if isinstance(xs, Trajectory) else xs, dtype=float)
    if len(xs) == 0:
        raise InvalidArgument("cannot average an empty trajectory")
    T = len(xs) if T is None else T
    if not 1 <= T <= len(xs):
        raise InvalidArgument(f"T={T} outside 1..{len(xs)}")
    return np.sum(xs[:T], axis=0) / T


# -- per-iterate decrement check --------------------------------------------

def decrement_margins(problem, net, traj: Trajectory, stream, probe_x, probe_lam):
    """``rhs - lhs`` of the per-iterate decrement inequality for each round.

    For round t (iterates k = t-1 -> t):

        L_t(x_k, lam) - L_t(x, lam_k)
            <= (1/2eps)(|x_k - x|^2 - |x_{k+1} - x|^2)
             + (c/2eps)(|lam_k - lam|^2 - |lam_{k+1} - lam|^2)
             + (eps/2)|grad_x L_t|^2 + (eps/2c)|grad_lam L_t|^2

    where gradients are taken at ``(x_k, lam_k)``. With ``c = 1`` this is
    the textbook form with a common step for both variables.
    """
    probe_x = np.asarray(probe_x, dtype=float)
    probe_lam = np.asarray(probe_lam, dtype=float)
    if probe_x.shape != traj.x.shape[1:] or probe_lam.shape != traj.lam.shape[1:]:
        raise InvalidArgument("probe dimensions do not match the trajectory")
    if not problem.projection.contains(probe_x):
        raise InvalidArgument("probe x must lie in the projection set")
    if np.any(probe_lam < 0):
        raise InvalidArgument("probe multipliers must be nonnegative")
    c = problem.coupling
    out = np.empty(len(traj) - 1)
    for k in range(len(traj) - 1):
        t = k + 1
        eps = traj.eps[k]
        theta = stream.draw(t)
        xk, lk = traj.x[k], traj.lam[k]
        lhs = (lagrangian_value(problem, net, xk, probe_lam, theta)
               - lagrangian_value(problem, net, probe_x, lk, theta))
        gx, gl = lagrangian_gradients(problem, net, xk, lk, theta)
        rhs = ((np.sum((xk - probe_x) ** 2) - np.sum((traj.x[k + 1] - probe_x) ** 2)) / (2 * eps)
               + c * (np.sum((lk - probe_lam) ** 2) - np.sum((traj.lam[k + 1] - probe_lam) ** 2)) / (2 * eps)
               + 0.5 * eps * np.sum(gx ** 2) + 0.5 * eps / c * np.sum(gl ** 2))
        out[k] = rhs - lhs
    return out


def check_lemma1(problem, net, traj, stream, probe_x, probe_lam, slack=1e-9):
    """Per-round pass/fail of the decrement inequality with ``slack``."""
    return [bool(m >= -slack) for m in decrement_margins(problem, net, traj, stream, probe_x, probe_lam)]
