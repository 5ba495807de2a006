"""Monte-Carlo stopping rule for (epsilon, delta)-local optimality.

The per-sample local regret of the incumbent is the drop each sample path
achieves along its own descent. A run stops at a decision iteration when at
least ``k_max`` of the L samples have regret below epsilon, where ``k_max`` is
the smallest count whose one-sided Clopper-Pearson lower bound on the pass
probability exceeds ``1 - delta_mod``.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np
from scipy.stats import beta


def clopper_pearson_lower(k: int, n: int, alpha: float) -> float:
    """One-sided (1 - alpha) lower confidence bound on a binomial proportion."""
    if k <= 0:
        return 0.0
    return float(beta.ppf(alpha, k, n - k + 1))


def compute_k_max(num_samples: int, delta_mod: float, delta_test: float) -> int | None:
    """Smallest pass count certifying Pr[pass] > 1 - delta_mod; None if unattainable."""
    target = 1.0 - delta_mod
    if clopper_pearson_lower(num_samples, num_samples, delta_test) <= target:
        return None
    lo, hi = 1, num_samples
    while lo < hi:
        mid = (lo + hi) // 2
        if clopper_pearson_lower(mid, num_samples, delta_test) > target:
            hi = mid
        else:
            lo = mid + 1
    return lo


@dataclass(frozen=True)
class StoppingConfig:
    num_samples: int = 250
    epsilon: float = 0.1
    delta: float = 0.05
    delta_est: float = 0.0025
    delta_mod: float | None = None  # None -> delta - delta_est
    decision_period: int = 25
    horizon: int = 100  # queries over which delta_est is spent
    k_max: int | None = None  # None -> derived from the risk parameters

    def __post_init__(self):
        if not self.epsilon > 0:
            raise ValueError("epsilon must be positive")
        if not 0 < self.delta < 1:
            raise ValueError("delta must lie in (0, 1)")
        if self.delta_mod is None:
            object.__setattr__(self, "delta_mod", self.delta - self.delta_est)
        if not (self.delta_mod > 0 and self.delta_est > 0):
            raise ValueError("delta_mod and delta_est must be positive")
        if self.delta_mod + self.delta_est > self.delta + 1e-15:
            raise ValueError("delta_mod + delta_est must not exceed delta")
        if self.decision_period < 1 or self.horizon < self.decision_period:
            raise ValueError("need 1 <= decision_period <= horizon")
        if self.k_max is None:
            k = compute_k_max(self.num_samples, self.delta_mod, self.delta_test)
            if k is None:
                raise ValueError(
                    f"no pass count out of {self.num_samples} samples certifies 1 - delta_mod "
                    f"at test risk {self.delta_test:g}; increase num_samples"
                )
            object.__setattr__(self, "k_max", k)
        elif not 0 < self.k_max <= self.num_samples:
            raise ValueError("k_max must lie in 1..num_samples")

    @property
    def delta_test(self) -> float:
        """Per-decision test risk; sums to delta_est over the decisions in the horizon."""
        return self.delta_est * self.decision_period / self.horizon


@dataclass(frozen=True)
class Certificate:
    iteration: int
    passes: int
    num_samples: int
    epsilon: float
    delta: float
    k_max: int

    def as_dict(self) -> dict:
        return dict(self.__dict__)


@dataclass(frozen=True)
class StoppingState:
    iteration: int = 0
    last_decision_iteration: int | None = None
    stopped: bool = False
    certificate: Certificate | None = None

    def at(self, iteration: int) -> "StoppingState":
        return replace(self, iteration=int(iteration))


def local_regret_samples(rnd, incumbent) -> np.ndarray:
    """r^l = f^l(incumbent) - f^l(terminal of descent l), reusing the round's paths."""
    incumbent = np.asarray(incumbent, dtype=float)
    seqs = rnd.sequences
    if rnd.paths is not None and len(seqs) == len(rnd.paths):
        terminals = np.stack([s.terminal for s in seqs])
        start = np.tile(incumbent, (len(seqs), 1))
        return rnd.paths.values(start) - rnd.paths.values(terminals)
    return np.array([s.path(incumbent) - s.path(s.terminal) for s in seqs])


def stop_decision(regrets, cfg: StoppingConfig, state: StoppingState) -> StoppingState:
    """Apply the stopping test at ``state.iteration`` if it is a decision point."""
    regrets = np.asarray(regrets, dtype=float)
    if regrets.shape != (cfg.num_samples,):
        raise ValueError(f"expected {cfg.num_samples} regrets, got {regrets.shape}")
    if state.stopped or state.iteration <= 0 or state.iteration % cfg.decision_period:
        return state
    passes = int(np.sum(regrets <= cfg.epsilon))
    if passes >= cfg.k_max:
        cert = Certificate(state.iteration, passes, cfg.num_samples, cfg.epsilon, cfg.delta, cfg.k_max)
        return replace(state, last_decision_iteration=state.iteration, stopped=True, certificate=cert)
    return replace(state, last_decision_iteration=state.iteration)
