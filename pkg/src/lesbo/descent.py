"""Run ADAM or gradient descent on sample paths and discretize the iterates."""

from __future__ import annotations

import enum
import warnings
from dataclasses import dataclass, field
from functools import cached_property
from typing import Callable

import numpy as np

from .gp import BoxDomain


class OptimizerKind(str, enum.Enum):
    ADAM = "ADAM"
    GD = "GD"


class DescentWarning(UserWarning):
    pass


@dataclass(frozen=True)
class OptimizerConfig:
    kind: OptimizerKind = OptimizerKind.ADAM
    steps: int = 500
    learning_rate: float = 0.002
    beta1: float = 0.9
    beta2: float = 0.999
    eps_hat: float = 1e-7  # Keras default

    def __post_init__(self):
        object.__setattr__(self, "kind", OptimizerKind(self.kind))
        if self.steps < 1:
            raise ValueError("steps must be >= 1")
        if not self.learning_rate > 0:
            raise ValueError("learning_rate must be positive")
        if not (0 <= self.beta1 < 1 and 0 <= self.beta2 < 1):
            raise ValueError("beta1 and beta2 must lie in [0, 1)")
        if not self.eps_hat > 0:
            raise ValueError("eps_hat must be positive")


@dataclass(frozen=True)
class DescentSequence:
    iterates: np.ndarray  # (n + 1, d), iterates[0] is the start
    path: object = field(default=None, repr=False, compare=False)
    aborted: bool = False

    @property
    def start(self) -> np.ndarray:
        return self.iterates[0]

    @property
    def terminal(self) -> np.ndarray:
        return self.iterates[-1]

    @cached_property
    def values(self) -> np.ndarray:
        if self.path is None:
            raise AttributeError("sequence was built without its path")
        return np.array([self.path(z) for z in self.iterates])

    def support(self, P: int) -> np.ndarray:
        return discretize(self, P)


def run_optimizer(
    grad_fn: Callable[[np.ndarray], np.ndarray],
    Z0: np.ndarray,
    cfg: OptimizerConfig,
    domain: BoxDomain,
) -> tuple[np.ndarray, np.ndarray]:
    """Optimize the rows of Z0 in lockstep; grad_fn maps (L, d) -> (L, d).

    Returns iterates (N + 1, L, d) and, per row, the number of valid steps.
    A row whose gradient turns non-finite is frozen at its last finite iterate.
    """
    Z = domain.clip(np.array(Z0, dtype=float))
    nrow = Z.shape[0]
    out = np.empty((cfg.steps + 1,) + Z.shape)
    out[0] = Z
    valid = np.full(nrow, cfg.steps)
    alive = np.ones(nrow, dtype=bool)
    m = np.zeros_like(Z)
    v = np.zeros_like(Z)
    b1, b2 = cfg.beta1, cfg.beta2
    for n in range(1, cfg.steps + 1):
        with np.errstate(over="ignore", invalid="ignore"):
            g = grad_fn(Z)
        bad = alive & ~np.all(np.isfinite(g), axis=1)
        if bad.any():
            valid[bad] = n - 1
            alive &= ~bad
        g = np.where(alive[:, None], g, 0.0)
        if cfg.kind is OptimizerKind.GD:
            step = cfg.learning_rate * g
        else:
            m = b1 * m + (1 - b1) * g
            v = b2 * v + (1 - b2) * g * g
            lr_t = cfg.learning_rate * np.sqrt(1 - b2**n) / (1 - b1**n)
            step = lr_t * m / (np.sqrt(v) + cfg.eps_hat)
        Z = np.where(alive[:, None], domain.clip(Z - step), Z)
        out[n] = Z
    return out, valid


def descend_ensemble(paths, start, cfg: OptimizerConfig, domain: BoxDomain) -> list[DescentSequence]:
    """Descend every path of a PathEnsemble from the same start."""
    start = np.asarray(start, dtype=float)
    if not domain.contains(start, tol=1e-12):
        raise ValueError("start point outside the domain")
    Z0 = np.tile(start, (len(paths), 1))
    iters, valid = run_optimizer(paths.grads, Z0, cfg, domain)
    seqs = []
    for l in range(len(paths)):
        aborted = valid[l] < cfg.steps
        seqs.append(DescentSequence(iters[: valid[l] + 1, l].copy(), paths[l], aborted))
    if np.any(valid < cfg.steps):
        warnings.warn(f"{np.sum(valid < cfg.steps)} descents hit a non-finite gradient", DescentWarning)
    return seqs


def descend(path, start, cfg: OptimizerConfig, domain: BoxDomain) -> DescentSequence:
    """Run `cfg.steps` optimizer steps on a single path from `start`."""
    start = np.asarray(start, dtype=float)
    if not domain.contains(start, tol=1e-12):
        raise ValueError("start point outside the domain")
    iters, valid = run_optimizer(lambda Z: path.grad(Z[0])[None, :], start[None, :], cfg, domain)
    aborted = bool(valid[0] < cfg.steps)
    if aborted:
        warnings.warn("descent stopped at a non-finite gradient", DescentWarning)
    return DescentSequence(iters[: valid[0] + 1, 0].copy(), path, aborted)


def discretize(seq, P: int) -> np.ndarray:
    """P points equally spaced by arc length along the polyline through the iterates."""
    if P < 2:
        raise ValueError("P must be at least 2")
    Z = seq.iterates if isinstance(seq, DescentSequence) else np.asarray(seq, dtype=float)
    if Z.shape[0] < 1:
        raise ValueError("sequence has no iterates")
    seg = np.linalg.norm(np.diff(Z, axis=0), axis=1)
    cum = np.concatenate([[0.0], np.cumsum(seg)])
    total = cum[-1]
    if total < 1e-12:
        return np.tile(Z[0], (P, 1))
    s = np.linspace(0.0, total, P)
    # index of the segment containing each target arc length
    idx = np.clip(np.searchsorted(cum, s, side="right") - 1, 0, len(seg) - 1)
    # skip zero-length segments sitting exactly at the target
    frac = np.divide(s - cum[idx], seg[idx], out=np.zeros(P), where=seg[idx] > 0)
    out = Z[idx] + np.clip(frac, 0.0, 1.0)[:, None] * (Z[idx + 1] - Z[idx])
    out[0] = Z[0]
    out[-1] = Z[-1]
    return out
