"""Objective and proximity-constraint families with value/gradient oracles.

Objectives are evaluated for all nodes at once: ``x`` has shape (N, d) and
the observation array carries one entry per node. Constraints are evaluated
per directed edge: ``xi``/``xj`` have shape (E, d) and ``i``/``j`` give the
endpoint ids (needed by :class:`LseRange`, whose anchors are per node).
"""

from __future__ import annotations


import numpy as np
from scipy.special import expit

from .errors import InvalidArgument

__all__ = [
    "QuadraticObjective",
    "SrlsObjective",
    "QuadraticProximity",
    "LseRange",
    "build_srls_row",
    "objective_value_and_grad",
    "constraint_value_and_grads",
    "lift_positions",
]


class QuadraticObjective:
    """``f_i(x; theta) = ||H_i x - theta||^2`` with per-node ``H_i`` (q x d)."""

    def __init__(self, H):
        H = np.asarray(H, dtype=float)
        if H.ndim != 3:
            raise InvalidArgument("H must have shape (N, q, d)")
        self.H = H

    @classmethod
    def scalar(cls, n_nodes, gain=1.0):
        return cls(np.full((n_nodes, 1, 1), float(gain)))

    @property
    def n_nodes(self):
        return self.H.shape[0]

    @property
    def dim(self):
        return self.H.shape[2]

    def value_and_grad(self, x, theta):
        x = np.asarray(x, dtype=float)
        theta = np.asarray(theta, dtype=float).reshape(self.H.shape[0], self.H.shape[1])
        if x.shape != (self.H.shape[0], self.H.shape[2]):
            raise InvalidArgument(f"x has shape {x.shape}, expected {(self.H.shape[0], self.H.shape[2])}")
        resid = np.einsum("nqd,nd->nq", self.H, x) - theta
        return np.sum(resid ** 2, axis=1), 2.0 * np.einsum("nqd,nq->nd", self.H, resid)

    def node_value_and_grad(self, i, x_i, theta_i):
        H = self.H[i]
        x_i = np.atleast_1d(np.asarray(x_i, dtype=float))
        theta_i = np.atleast_1d(np.asarray(theta_i, dtype=float))
        if x_i.shape != (H.shape[1],) or theta_i.shape != (H.shape[0],):
            raise InvalidArgument("dimension mismatch between H_i, x_i and theta_i")
        r = H @ x_i - theta_i
        return float(r @ r), 2.0 * H.T @ r


def build_srls_row(l_i, r_i):
    """Row ``A_i = [-2 l_i, 1]`` and target ``b_i = r_i^2 - ||l_i||^2``."""
    l_i = np.atleast_1d(np.asarray(l_i, dtype=float))
    return np.append(-2.0 * l_i, 1.0), float(r_i) ** 2 - float(l_i @ l_i)


class SrlsObjective:
    """Squared-range least squares ``f_i(y; r) = (A_i y - b_i(r))^2``.

    The observation for node ``i`` is a range sample ``r_i``; ``b_i`` is
    rebuilt from it on every call. Decision vectors are ``y = [x; alpha]``.
    """

    def __init__(self, positions):
        self.positions = np.asarray(positions, dtype=float)
        self.A = np.hstack([-2.0 * self.positions, np.ones((len(self.positions), 1))])
        self._sq = np.sum(self.positions ** 2, axis=1)

    @property
    def n_nodes(self):
        return self.A.shape[0]

    @property
    def dim(self):
        return self.A.shape[1]

    def targets(self, ranges):
        return np.asarray(ranges, dtype=float) ** 2 - self._sq

    def value_and_grad(self, y, ranges):
        y = np.asarray(y, dtype=float)
        if y.shape != self.A.shape:
            raise InvalidArgument(f"y has shape {y.shape}, expected {self.A.shape}")
        resid = np.sum(self.A * y, axis=1) - self.targets(np.ravel(ranges))
        return resid ** 2, 2.0 * self.A * resid[:, None]

    def node_value_and_grad(self, i, y_i, r_i):
        y_i = np.asarray(y_i, dtype=float)
        if y_i.shape != (self.A.shape[1],):
            raise InvalidArgument("dimension mismatch between A_i and y_i")
        a, b = build_srls_row(self.positions[i], r_i)
        r = a @ y_i - b
        return float(r * r), 2.0 * r * a


class QuadraticProximity:
    """``h(a, b) = 0.5 ||a - b||^2``.

    Consensus is the same function paired with zero tolerances.
    """

    def evaluate(self, xi, xj, i=None, j=None):
        diff = np.asarray(xi, dtype=float) - np.asarray(xj, dtype=float)
        return 0.5 * np.sum(diff ** 2, axis=-1), diff, -diff


def lift_positions(positions):
    """Append a zero coordinate so anchors live in the ``[x; alpha]`` space."""
    positions = np.asarray(positions, dtype=float)
    return np.hstack([positions, np.zeros((len(positions), 1))])


class LseRange:
    """Log-sum-exp convexified range proximity.

    ``h(y_i, y_j) = 0.5 (||y_i - y_j||^2 + log(exp(a) + exp(b)))`` with
    ``a = ||y_i - l_i||^2`` and ``b = ||y_j - l_j||^2``. Anchors ``l`` must
    already be in the decision space (see :func:`lift_positions`).
    """

    def __init__(self, anchors):
        self.anchors = np.asarray(anchors, dtype=float)

    @classmethod
    def pair(cls, l_i, l_j):
        return cls(np.vstack([l_i, l_j]))

    def evaluate(self, xi, xj, i, j):
        xi = np.asarray(xi, dtype=float)
        xj = np.asarray(xj, dtype=float)
        ui = xi - self.anchors[i]
        uj = xj - self.anchors[j]
        a = np.sum(ui ** 2, axis=-1)
        b = np.sum(uj ** 2, axis=-1)
        diff = xi - xj
        h = 0.5 * (np.sum(diff ** 2, axis=-1) + np.logaddexp(a, b))
        wi = expit(a - b)[..., None]
        wj = expit(b - a)[..., None]
        return h, diff + wi * ui, -diff + wj * uj


def objective_value_and_grad(obj, x_i, theta_i, i=0):
    """Value and gradient of node ``i``'s local objective."""
    return obj.node_value_and_grad(i, x_i, theta_i)


def constraint_value_and_grads(con, x_i, x_j, i=0, j=1):
    """``(h, dh/dx_i, dh/dx_j)`` for one pair of neighbors."""
    x_i = np.atleast_1d(np.asarray(x_i, dtype=float))
    x_j = np.atleast_1d(np.asarray(x_j, dtype=float))
    if x_i.shape != x_j.shape:
        raise InvalidArgument("x_i and x_j must have the same shape")
    h, gi, gj = con.evaluate(x_i, x_j, i, j)
    return float(h), gi, gj
