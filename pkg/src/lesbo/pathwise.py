"""Analytic posterior sample paths: random Fourier features plus a Matheron update.

A path is ``f(x) = sum_i w_i phi_i(x) + sum_j v_j k(x, x_j)`` with
``phi_i(x) = amp * cos(omega_i . (x / l) + b_i)``. Paths drawn in the same
acquisition round share one :class:`FeatureBasis`; :class:`PathEnsemble`
evaluates all of them at once, one point per path.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.linalg import cho_solve

from .gp import GpHyperparams, GpModel, kernel_matrix

DEFAULT_NUM_FEATURES = 1024


def seed_sequence(seed) -> np.random.SeedSequence:
    if isinstance(seed, np.random.SeedSequence):
        return seed
    if isinstance(seed, (list, tuple)):
        return np.random.SeedSequence([int(s) for s in seed])
    return np.random.SeedSequence(int(seed))


@dataclass(frozen=True)
class FeatureBasis:
    frequencies: np.ndarray  # (M, d), standard normal before lengthscale scaling
    phases: np.ndarray  # (M,)
    amp: float
    lengthscales: np.ndarray

    @property
    def num_features(self) -> int:
        return self.phases.size

    @property
    def dim(self) -> int:
        return self.lengthscales.size

    @property
    def scaled_frequencies(self) -> np.ndarray:
        return self.frequencies / self.lengthscales

    def features(self, X) -> np.ndarray:
        """phi(X), shape (n, M)."""
        X = np.asarray(X, dtype=float).reshape(-1, self.dim)
        return self.amp * np.cos(X @ self.scaled_frequencies.T + self.phases)


def draw_basis(hp: GpHyperparams, M: int, rng_seed) -> FeatureBasis:
    if M < 1:
        raise ValueError("need at least one feature")
    rng = np.random.default_rng(seed_sequence(rng_seed))
    omega = rng.standard_normal((M, hp.dim))
    phases = rng.uniform(0.0, 2.0 * math.pi, M)
    return FeatureBasis(omega, phases, math.sqrt(2.0 * hp.output_scale / M), hp.lengthscales.copy())


def _kernel_grad(x, X, hp: GpHyperparams) -> np.ndarray:
    """d/dx k(x, X_j) for every row j; shape (t, d)."""
    k = kernel_matrix(x, X, hp)[0]
    return -k[:, None] * (x - X) / hp.lengthscales**2


@dataclass(frozen=True)
class SamplePath:
    weights: np.ndarray  # (M,)
    basis: FeatureBasis
    correction_inputs: np.ndarray  # (t, d)
    correction_coeffs: np.ndarray  # (t,)
    hyperparams: GpHyperparams

    @property
    def dim(self) -> int:
        return self.basis.dim

    def _check(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if x.shape != (self.dim,):
            raise ValueError(f"expected a point of dimension {self.dim}, got shape {x.shape}")
        return x

    def __call__(self, x) -> float:
        x = self._check(x)
        val = self.basis.features(x)[0] @ self.weights
        if self.correction_coeffs.size:
            val += kernel_matrix(x, self.correction_inputs, self.hyperparams)[0] @ self.correction_coeffs
        return float(val)

    def grad(self, x) -> np.ndarray:
        x = self._check(x)
        W = self.basis.scaled_frequencies
        s = np.sin(W @ x + self.basis.phases)
        g = -self.basis.amp * (self.weights * s) @ W
        if self.correction_coeffs.size:
            g += self.correction_coeffs @ _kernel_grad(x, self.correction_inputs, self.hyperparams)
        return g

    def values(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=float).reshape(-1, self.dim)
        val = self.basis.features(X) @ self.weights
        if self.correction_coeffs.size:
            val += kernel_matrix(X, self.correction_inputs, self.hyperparams) @ self.correction_coeffs
        return val


def hessian_norm_bound(path: SamplePath) -> float:
    """Upper bound on the spectral norm of the path Hessian anywhere.

    Feature term: amp * sum |w_i| ||omega_i / l||^2. Kernel term: the SE Hessian
    has norm at most output_scale / min(l)^2.
    """
    W = path.basis.scaled_frequencies
    bound = path.basis.amp * float(np.sum(np.abs(path.weights) * np.sum(W**2, axis=1)))
    if path.correction_coeffs.size:
        hp = path.hyperparams
        bound += float(np.sum(np.abs(path.correction_coeffs))) * hp.output_scale / np.min(hp.lengthscales) ** 2
    return bound


def eval_path(path: SamplePath, x) -> float:
    return path(x)


def eval_path_grad(path: SamplePath, x) -> np.ndarray:
    return path.grad(x)


def matheron_coefficients(model: GpModel, basis: FeatureBasis, weights, rng_seed) -> np.ndarray:
    """Coefficients v of the function-space update for one or many weight vectors.

    `weights` is (M,) or (L, M); the result is (t,) or (t, L). Each path gets
    its own observation-noise draw.
    """
    weights = np.asarray(weights, dtype=float)
    t = len(model.dataset)
    if t == 0:
        return np.zeros((0,) + weights.shape[:-1])
    rng = np.random.default_rng(seed_sequence(rng_seed))
    prior_at_data = basis.features(model.X) @ weights.T  # (t,) or (t, L)
    noise = math.sqrt(model.hyperparams.noise_var) * rng.standard_normal(prior_at_data.shape)
    return cho_solve((model.chol, True), model.y.reshape((t,) + (1,) * (weights.ndim - 1)) - prior_at_data - noise)


def draw_path(model: GpModel, M: int, rng_seed, basis: FeatureBasis | None = None) -> SamplePath:
    ss = seed_sequence(rng_seed)
    basis_ss, w_ss, noise_ss = ss.spawn(3)
    if basis is None:
        basis = draw_basis(model.hyperparams, M, basis_ss)
    w = np.random.default_rng(w_ss).standard_normal(basis.num_features)
    v = matheron_coefficients(model, basis, w, noise_ss)
    return SamplePath(w, basis, model.X, v, model.hyperparams)


@dataclass(frozen=True)
class PathEnsemble:
    """L sample paths sharing a basis and training inputs."""

    weights: np.ndarray  # (L, M)
    basis: FeatureBasis
    correction_inputs: np.ndarray  # (t, d)
    correction_coeffs: np.ndarray  # (t, L)
    hyperparams: GpHyperparams

    def __len__(self) -> int:
        return self.weights.shape[0]

    @property
    def dim(self) -> int:
        return self.basis.dim

    def __getitem__(self, l: int) -> SamplePath:
        return SamplePath(self.weights[l], self.basis, self.correction_inputs,
                          self.correction_coeffs[:, l], self.hyperparams)

    def values(self, Z) -> np.ndarray:
        """f^l(Z[l]) for each path l; Z is (L, d)."""
        Z = np.asarray(Z, dtype=float)
        val = np.einsum("lm,lm->l", self.basis.features(Z), self.weights)
        if self.correction_coeffs.size:
            K = kernel_matrix(Z, self.correction_inputs, self.hyperparams)
            val += np.einsum("lt,tl->l", K, self.correction_coeffs)
        return val

    def grads(self, Z) -> np.ndarray:
        """grad f^l(Z[l]) for each path l; shape (L, d)."""
        Z = np.asarray(Z, dtype=float)
        W = self.basis.scaled_frequencies
        s = np.sin(Z @ W.T + self.basis.phases)
        g = -self.basis.amp * (self.weights * s) @ W
        if self.correction_coeffs.size:
            X = self.correction_inputs
            K = kernel_matrix(Z, X, self.hyperparams)  # (L, t)
            Kv = K * self.correction_coeffs.T  # (L, t)
            ls2 = self.hyperparams.lengthscales**2
            g -= (Kv.sum(1)[:, None] * Z - Kv @ X) / ls2
        return g


def draw_paths(model: GpModel, num_paths: int, M: int = DEFAULT_NUM_FEATURES, rng_seed=0) -> PathEnsemble:
    """Draw an ensemble of posterior paths with per-path seed substreams."""
    if num_paths < 1:
        raise ValueError("need at least one path")
    basis_ss, *path_ss = seed_sequence(rng_seed).spawn(num_paths + 1)
    basis = draw_basis(model.hyperparams, M, basis_ss)
    t = len(model.dataset)
    W = np.empty((num_paths, M))
    noise = np.empty((t, num_paths))
    for l, ss in enumerate(path_ss):
        rng = np.random.default_rng(ss)
        W[l] = rng.standard_normal(M)
        noise[:, l] = rng.standard_normal(t)
    if t:
        resid = model.y[:, None] - basis.features(model.X) @ W.T
        resid -= math.sqrt(model.hyperparams.noise_var) * noise
        V = cho_solve((model.chol, True), resid)
    else:
        V = np.zeros((0, num_paths))
    return PathEnsemble(W, basis, model.X, V, model.hyperparams)
