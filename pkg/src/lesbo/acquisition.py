"""Local entropy search acquisition over a finite candidate set.

A round draws L posterior paths, descends each from the incumbent and keeps P
arc-length support points per descent. The score of a point x is the
predictive entropy of y(x) minus the average entropy left after also
conditioning on one descent's support points. Per-sequence factors are cached
once so that scoring a point costs a small triangular product per sequence.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial import cKDTree

from .descent import DescentSequence, OptimizerConfig, descend, descend_ensemble, discretize
from .gp import GpModel, NumericalError, kernel_matrix, robust_cholesky
from .pathwise import DEFAULT_NUM_FEATURES, PathEnsemble, draw_path, draw_paths, seed_sequence

MAX_FAILED_FRACTION = 0.05


class AcquisitionWarning(UserWarning):
    pass


@dataclass(frozen=True)
class AcquisitionConfig:
    num_paths: int = 250
    support_points: int = 8
    optimizer: OptimizerConfig = field(default_factory=OptimizerConfig)
    num_features: int = DEFAULT_NUM_FEATURES
    dedup_radius: float | None = None  # None -> 1e-6 * sqrt(d)

    def __post_init__(self):
        if self.num_paths < 1:
            raise ValueError("num_paths must be >= 1")
        if self.support_points < 2:
            raise ValueError("support_points must be >= 2")
        if self.dedup_radius is not None and self.dedup_radius < 0:
            raise ValueError("dedup_radius must be non-negative")

    def radius(self, dim: int) -> float:
        return 1e-6 * math.sqrt(dim) if self.dedup_radius is None else self.dedup_radius


def select_incumbent(model: GpModel) -> np.ndarray:
    """Observed input with the lowest posterior mean."""
    if len(model.dataset) == 0:
        raise ValueError("no observations to pick an incumbent from")
    return model.X[int(np.argmin(model.mean(model.X)))].copy()


def dedup_points(points: np.ndarray, radius: float) -> np.ndarray:
    """Greedy keep-first deduplication: indices of points kept."""
    n = points.shape[0]
    keep = np.ones(n, dtype=bool)
    if n > 1:
        pairs = cKDTree(points).query_pairs(radius, output_type="ndarray")
        if pairs.size:
            pairs = pairs[np.lexsort((pairs[:, 1], pairs[:, 0]))]
            for i, j in pairs:
                if keep[i]:
                    keep[j] = False
    return np.flatnonzero(keep)


def _supports_cov(model: GpModel, S: np.ndarray) -> np.ndarray:
    """Noisy conditional covariance Cov(y(S_l) | D) for each block; S is (L, P, d)."""
    hp = model.hyperparams
    L, P, d = S.shape
    Z = S / hp.lengthscales
    sq = np.sum((Z[:, :, None, :] - Z[:, None, :, :]) ** 2, axis=-1)
    K = hp.output_scale * np.exp(-0.5 * sq)
    if len(model.dataset):
        V = model.cross_whitened(S.reshape(-1, d)).reshape(-1, L, P)  # (t, L, P)
        K = K - np.einsum("tlp,tlq->lpq", V, V)
    K = 0.5 * (K + np.swapaxes(K, 1, 2))
    return K + hp.noise_var * np.eye(P)


@dataclass(frozen=True, eq=False)
class AcquisitionRound:
    model: GpModel
    incumbent: np.ndarray
    paths: PathEnsemble | None
    sequences: list
    supports: np.ndarray  # (L, P, d)
    candidates: np.ndarray  # (n, d)
    factors: np.ndarray  # (L, P, P) chol of Cov(y(Q^l) | D)
    factor_inverses: np.ndarray  # (L, P, P)
    valid: np.ndarray  # (L,) bool, False where the factorization failed
    fallback: bool = False

    @property
    def num_sequences(self) -> int:
        return self.supports.shape[0]

    def _reductions(self, Xq: np.ndarray) -> np.ndarray:
        """Whitened cross-covariances W_l = L_l^{-1} Cov(y(Q^l), f(Xq) | D); (L, P, n)."""
        L, P, d = self.supports.shape
        S = self.supports.reshape(-1, d)
        C = kernel_matrix(S, Xq, self.model.hyperparams)
        if len(self.model.dataset):
            C = C - self.model.cross_whitened(S).T @ self.model.cross_whitened(Xq)
        return np.matmul(self.factor_inverses, C.reshape(L, P, Xq.shape[0]))

    def variances(self, X):
        """Unaugmented and per-sequence augmented observation variances at X."""
        Xq = np.asarray(X, dtype=float).reshape(-1, self.model.dim)
        noise = self.model.hyperparams.noise_var
        base = self.model.latent_var(Xq) + noise
        W = self._reductions(Xq)
        aug = base[None, :] - np.sum(W**2, axis=1)
        # the noise term alone bounds both variances from below
        floor = max(noise, np.finfo(float).tiny)
        return np.maximum(base, floor), np.maximum(aug, floor)

    def scores(self, X) -> np.ndarray:
        base, aug = self.variances(X)
        aug = aug[self.valid]
        return 0.5 * np.log(base) - np.mean(0.5 * np.log(aug), axis=0)

    def sequence_scores(self, X) -> np.ndarray:
        """Per-sequence entropy differences, shape (L, n)."""
        base, aug = self.variances(X)
        return 0.5 * np.log(base)[None, :] - 0.5 * np.log(aug)

    def augmented_cholesky(self, l: int) -> np.ndarray:
        """Full Cholesky factor of K(D ∪ Q^l) + noise I assembled from the cached blocks."""
        model = self.model
        t = len(model.dataset)
        Q = self.supports[l]
        L21 = model.cross_whitened(Q).T if t else np.zeros((Q.shape[0], 0))
        P = Q.shape[0]
        out = np.zeros((t + P, t + P))
        out[:t, :t] = model.chol
        out[t:, :t] = L21
        out[t:, t:] = self.factors[l]
        return out


def _factorize(model: GpModel, supports: np.ndarray):
    C = _supports_cov(model, supports)
    L, P, _ = C.shape
    valid = np.ones(L, dtype=bool)
    try:
        chol = np.linalg.cholesky(C)
    except np.linalg.LinAlgError:
        chol = np.zeros_like(C)
        for l in range(L):
            try:
                chol[l], _ = robust_cholesky(C[l], model.hyperparams.output_scale)
            except NumericalError:
                valid[l] = False
                chol[l] = np.eye(P)
    failed = L - valid.sum()
    if failed:
        if failed > MAX_FAILED_FRACTION * L:
            raise NumericalError(f"{failed} of {L} augmented factorizations failed")
        warnings.warn(f"dropping {failed} sequences with failed factorizations", AcquisitionWarning)
    return chol, np.linalg.inv(chol), valid


def round_from_supports(model: GpModel, incumbent, supports, candidates=None, radius: float = 0.0,
                        paths=None, sequences=None, fallback_seed=None) -> AcquisitionRound:
    """Assemble a round from given support sets (L, P, d).

    Used by :func:`build_round` and for constructing rounds by hand.
    """
    incumbent = np.asarray(incumbent, dtype=float)
    supports = np.asarray(supports, dtype=float)
    if supports.ndim == 2:
        supports = supports[None]
    d = model.dim
    flat = supports.reshape(-1, d)
    fallback = False
    if candidates is None:
        candidates = flat[dedup_points(flat, radius)]
        if np.all(np.linalg.norm(candidates - incumbent, axis=1) <= radius):
            fallback = True
            rng = np.random.default_rng(seed_sequence(0 if fallback_seed is None else fallback_seed))
            extra = model.dataset.domain.sample_uniform(rng, supports.shape[0])
            candidates = np.vstack([incumbent[None, :], extra])
            warnings.warn("all descents collapsed to the incumbent; using random candidates",
                          AcquisitionWarning)
    candidates = np.asarray(candidates, dtype=float).reshape(-1, d)
    chol, inv, valid = _factorize(model, supports)
    return AcquisitionRound(model, incumbent, paths, sequences or [], supports, candidates,
                            chol, inv, valid, fallback)


def build_round(model: GpModel, incumbent, cfg: AcquisitionConfig, rng_seed) -> AcquisitionRound:
    domain = model.dataset.domain
    incumbent = np.asarray(incumbent, dtype=float)
    path_ss, fallback_ss = seed_sequence(rng_seed).spawn(2)
    paths = draw_paths(model, cfg.num_paths, cfg.num_features, path_ss)
    sequences = descend_ensemble(paths, incumbent, cfg.optimizer, domain)
    supports = np.stack([discretize(s, cfg.support_points) for s in sequences])
    return round_from_supports(model, incumbent, supports, radius=cfg.radius(model.dim),
                               paths=paths, sequences=sequences, fallback_seed=fallback_ss)


def les_score(rnd: AcquisitionRound, x):
    x = np.asarray(x, dtype=float)
    s = rnd.scores(x.reshape(-1, rnd.model.dim))
    return float(s[0]) if x.ndim == 1 else s


def select_query(rnd: AcquisitionRound) -> tuple[np.ndarray, float]:
    """Best candidate; ties go to the lower posterior mean, then the first index."""
    if rnd.candidates.shape[0] == 0:
        raise ValueError("empty candidate set")
    s = rnd.scores(rnd.candidates)
    best = np.max(s)
    tied = np.flatnonzero(s >= best - 1e-12 * max(1.0, abs(best)))
    if tied.size > 1:
        mu = rnd.model.mean(rnd.candidates[tied])
        tied = tied[np.flatnonzero(mu == mu.min())]
    i = int(tied[0])
    return rnd.candidates[i].copy(), float(s[i])


def _logdet_chol(A: np.ndarray) -> np.ndarray:
    try:
        L = np.linalg.cholesky(A)
    except np.linalg.LinAlgError as exc:
        raise NumericalError("batch covariance is singular") from exc
    return 2.0 * np.sum(np.log(np.diagonal(L, axis1=-2, axis2=-1)), axis=-1)


def qles_score(rnd: AcquisitionRound, batch) -> float:
    """Joint information of a batch of q points about the descent sequences."""
    model = rnd.model
    B = np.asarray(batch, dtype=float).reshape(-1, model.dim)
    q = B.shape[0]
    if q < 1:
        raise ValueError("empty batch")
    Sigma = model.posterior_cov(B, B) + model.hyperparams.noise_var * np.eye(q)
    Sigma = 0.5 * (Sigma + Sigma.T)
    W = rnd._reductions(B)[rnd.valid]  # (L, P, q)
    Sigma_l = Sigma[None] - np.einsum("lpi,lpj->lij", W, W)
    return float(0.5 * _logdet_chol(Sigma) - np.mean(0.5 * _logdet_chol(Sigma_l)))


def select_batch(rnd: AcquisitionRound, q: int) -> tuple[np.ndarray, float]:
    """Greedy qLES batch over the candidate set, seeded with the LES maximizer."""
    first, _ = select_query(rnd)
    batch = [first]
    remaining = [c for c in rnd.candidates if not np.array_equal(c, first)]
    score = qles_score(rnd, np.array(batch))
    while len(batch) < q and remaining:
        vals = []
        for c in remaining:
            try:
                vals.append(qles_score(rnd, np.array(batch + [c])))
            except NumericalError:
                vals.append(-np.inf)
        j = int(np.argmax(vals))
        if not np.isfinite(vals[j]):
            break
        batch.append(remaining.pop(j))
        score = vals[j]
    return np.array(batch), score


def local_thompson_select(model: GpModel, incumbent, cfg: OptimizerConfig, domain=None,
                          rng_seed=0, num_features: int = DEFAULT_NUM_FEATURES) -> np.ndarray:
    """Descend a single posterior path from the incumbent and return where it ends."""
    domain = model.dataset.domain if domain is None else domain
    path = draw_path(model, num_features, rng_seed)
    seq: DescentSequence = descend(path, incumbent, cfg, domain)
    return seq.terminal.copy()
