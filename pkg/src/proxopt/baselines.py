"""Comparison methods: distributed online gradient descent and batch LMMSE."""

from __future__ import annotations

import numpy as np
import scipy.linalg

from .errors import InvalidArgument, NumericFailure
from .graph import Network

__all__ = ["metropolis_weights", "dogd_step", "run_dogd", "lmmse_oracle", "lmmse_paper_formula"]


def metropolis_weights(net: Network) -> np.ndarray:
    """Symmetric doubly-stochastic averaging matrix on the graph.

    ``W_ij = 1/(1 + max(deg_i, deg_j))`` on edges and the remainder on the
    diagonal.
    """
    n = net.n_nodes
    W = np.zeros((n, n))
    i, j = net.edges[:, 0], net.edges[:, 1]
    deg = net.degrees
    w = 1.0 / (1.0 + np.maximum(deg[i], deg[j]))
    W[i, j] = w
    W[j, i] = w
    W[np.arange(n), np.arange(n)] = 1.0 - W.sum(axis=1)
    return W


def dogd_step(W, x, grads, eps, projection=None):
    """``x_i <- sum_j W_ij x_j - eps * g_i`` from the round snapshot."""
    W = np.asarray(W, dtype=float)
    x = np.asarray(x, dtype=float)
    grads = np.asarray(grads, dtype=float)
    if W.shape != (len(x), len(x)) or grads.shape != x.shape:
        raise InvalidArgument(
            f"dimension mismatch: W {W.shape}, x {x.shape}, grads {grads.shape}")
    out = W @ x - eps * grads
    return out if projection is None else projection.project(out)


def lmmse_oracle(H, R_x, sigma2, theta, prior_mean=None):
    """Linear MMSE estimate of ``x`` from ``theta = H x + w``.

    Computes ``m + R_x H^T (H R_x H^T + sigma2 I)^{-1} (theta - H m)``,
    evaluated through the equivalent ``d x d`` system
    ``(R_x H^T H + sigma2 I) u = R_x H^T (theta - H m)`` so that stacking
    many time slots stays cheap.

    Parameters
    ----------
    H : ndarray, shape (n_obs, d)
    R_x : ndarray, shape (d, d)
        Prior covariance (PSD).
    sigma2 : float
        Noise variance, > 0.
    theta : ndarray, shape (n_obs,)
    prior_mean : ndarray, shape (d,), optional
        Defaults to zero.
    """
    H = np.atleast_2d(np.asarray(H, dtype=float))
    R = np.atleast_2d(np.asarray(R_x, dtype=float))
    theta = np.atleast_1d(np.asarray(theta, dtype=float))
    d = H.shape[1]
    if R.shape != (d, d) or theta.shape != (H.shape[0],):
        raise InvalidArgument(
            f"dimension mismatch: H {H.shape}, R_x {R.shape}, theta {theta.shape}")
    if not sigma2 > 0:
        raise InvalidArgument("sigma2 must be positive")
    m = np.zeros(d) if prior_mean is None else np.asarray(prior_mean, dtype=float)
    rhs = R @ (H.T @ (theta - H @ m))
    system = R @ (H.T @ H) + sigma2 * np.eye(d)
    try:
        with np.errstate(all="raise"):
            u = scipy.linalg.solve(system, rhs)
    except (np.linalg.LinAlgError, FloatingPointError, ValueError) as exc:
        raise NumericFailure(f"LMMSE system is singular: {exc}") from None
    return m + u


def lmmse_paper_formula(H, R_x, sigma2, theta):
    """``(H R_x H^T + I/sigma2)^{-1} (1/sigma2) theta``, as printed.

    Kept for side-by-side inspection only; it is not an MMSE estimator.
    Requires square ``H``.
    """
    H = np.atleast_2d(np.asarray(H, dtype=float))
    if H.shape[0] != H.shape[1]:
        raise InvalidArgument("the printed formula needs a square H (a single time slot)")
    n = H.shape[0]
    M = H @ np.asarray(R_x, dtype=float) @ H.T + np.eye(n) / sigma2
    try:
        return scipy.linalg.solve(M, np.asarray(theta, dtype=float) / sigma2)
    except (np.linalg.LinAlgError, ValueError) as exc:
        raise NumericFailure(f"singular system: {exc}") from None


def run_dogd(W, objective, stream, schedule, T, x0, projection=None):
    """``T`` rounds of :func:`dogd_step`; ``W = I`` gives independent local SGD.

    Returns an :class:`~proxopt.engine.Trajectory` with no multipliers.
    """
    from .engine import Trajectory

    x = np.asarray(x0, dtype=float)
    if projection is not None:
        x = projection.project(x)
    xs = np.empty((T + 1,) + x.shape)
    epss = np.empty(T)
    xs[0] = x
    for t in range(1, T + 1):
        eps = schedule(t)
        with np.errstate(over="ignore", invalid="ignore"):
            _, g = objective.value_and_grad(x, stream.draw(t))
            x = dogd_step(W, x, g, eps, projection)
        if not np.all(np.isfinite(x)):
            bad = int(np.argmax(~np.isfinite(x).all(axis=-1)))
            raise NumericFailure("non-finite iterate", node=bad, iteration=t)
        xs[t], epss[t - 1] = x, eps
    return Trajectory(xs, np.zeros((T + 1, 0)), epss)
