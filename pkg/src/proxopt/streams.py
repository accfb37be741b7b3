"""Counter-based random substreams and per-round observation streams.

Every draw is addressed by ``(seed, purpose, run, t)`` and produced by a
fresh Philox generator keyed on the root seed with that tuple as its
counter. Draws therefore do not depend on the order in which runs or rounds
are executed, which is what makes parallel Monte-Carlo bitwise reproducible.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InvalidArgument

OBS = 1
INIT = 2
EVAL = 3
TRUTH = 4
NETWORK = 5


def substream(seed: int, purpose: int, run: int = 0, t: int = 0) -> np.random.Generator:
    if seed < 0:
        raise InvalidArgument("seed must be nonnegative")
    return np.random.Generator(np.random.Philox(key=int(seed), counter=[0, purpose, t, run]))


@dataclass
class GaussianStream:
    """``theta_t = mean + scale * w_t`` with standard normal ``w_t``.

    ``mean`` has the per-node observation shape, e.g. (N, q) or (N,).
    """

    mean: np.ndarray
    scale: object
    seed: int
    run: int = 0
    purpose: int = OBS

    def __post_init__(self):
        self.mean = np.asarray(self.mean, dtype=float)
        self.scale = np.asarray(self.scale, dtype=float)
        if np.any(self.scale < 0):
            raise InvalidArgument("noise scale must be nonnegative")

    def draw(self, t: int) -> np.ndarray:
        rng = substream(self.seed, self.purpose, self.run, t)
        return self.mean + self.scale * rng.standard_normal(self.mean.shape)

    def batch(self, n: int, t: int = 0) -> np.ndarray:
        """``n`` draws at once, shape (n,) + mean.shape."""
        rng = substream(self.seed, self.purpose, self.run, t)
        return self.mean + self.scale * rng.standard_normal((n,) + self.mean.shape)


@dataclass
class FixedStream:
    """Replays one observation every round."""

    value: np.ndarray

    def draw(self, t: int) -> np.ndarray:
        return np.asarray(self.value, dtype=float)
