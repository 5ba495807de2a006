"""Gaussian process regression with an SE-ARD kernel.

Everything works on plain numpy arrays. A fitted :class:`GpModel` is
immutable; refitting or adding data produces a new model.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import cho_solve, solve_triangular
from scipy.optimize import minimize

JITTER_START = 1e-10
JITTER_MAX = 1e-4
LOG_2PI = math.log(2.0 * math.pi)


class NumericalError(ArithmeticError):
    """A covariance matrix could not be factorized, even with jitter."""


class MapFitWarning(UserWarning):
    pass


@dataclass(frozen=True)
class BoxDomain:
    lower: np.ndarray
    upper: np.ndarray

    def __post_init__(self):
        lower = np.atleast_1d(np.asarray(self.lower, dtype=float))
        upper = np.atleast_1d(np.asarray(self.upper, dtype=float))
        if lower.shape != upper.shape or lower.ndim != 1:
            raise ValueError("lower and upper must be 1-d vectors of equal length")
        if not np.all(lower < upper):
            raise ValueError("need lower < upper in every dimension")
        object.__setattr__(self, "lower", lower)
        object.__setattr__(self, "upper", upper)

    @classmethod
    def unit(cls, dim: int) -> "BoxDomain":
        return cls(np.zeros(dim), np.ones(dim))

    @property
    def dim(self) -> int:
        return self.lower.size

    def contains(self, x, tol: float = 0.0) -> bool:
        x = np.asarray(x, dtype=float)
        return bool(np.all(x >= self.lower - tol) and np.all(x <= self.upper + tol))

    def clip(self, x):
        return np.clip(x, self.lower, self.upper)

    def sample_uniform(self, rng: np.random.Generator, n: int) -> np.ndarray:
        return self.lower + (self.upper - self.lower) * rng.random((n, self.dim))


@dataclass(frozen=True)
class Dataset:
    """Ordered (input, observation) pairs inside a box domain."""

    domain: BoxDomain
    inputs: np.ndarray = None
    observations: np.ndarray = None

    def __post_init__(self):
        d = self.domain.dim
        X = np.empty((0, d)) if self.inputs is None else np.asarray(self.inputs, dtype=float)
        y = np.empty(0) if self.observations is None else np.asarray(self.observations, dtype=float)
        X = X.reshape(-1, d)
        y = y.reshape(-1)
        if X.shape[0] != y.shape[0]:
            raise ValueError(f"{X.shape[0]} inputs but {y.shape[0]} observations")
        if X.shape[0] and not all(self.domain.contains(x, tol=1e-12) for x in X):
            raise ValueError("dataset input outside the domain")
        object.__setattr__(self, "inputs", X)
        object.__setattr__(self, "observations", y)

    def __len__(self) -> int:
        return self.observations.size

    @property
    def dim(self) -> int:
        return self.domain.dim

    def append(self, x, y) -> "Dataset":
        x = np.asarray(x, dtype=float).reshape(-1, self.dim)
        y = np.atleast_1d(np.asarray(y, dtype=float))
        return Dataset(self.domain, np.vstack([self.inputs, x]), np.concatenate([self.observations, y]))


@dataclass(frozen=True)
class GpHyperparams:
    lengthscales: np.ndarray
    output_scale: float = 1.0
    noise_var: float = 0.0

    def __post_init__(self):
        ls = np.atleast_1d(np.asarray(self.lengthscales, dtype=float))
        if ls.ndim != 1 or not np.all(ls > 0):
            raise ValueError("lengthscales must be a positive vector")
        if not self.output_scale > 0:
            raise ValueError("output_scale must be positive")
        if not self.noise_var >= 0:
            raise ValueError("noise_var must be non-negative")
        object.__setattr__(self, "lengthscales", ls)
        object.__setattr__(self, "output_scale", float(self.output_scale))
        object.__setattr__(self, "noise_var", float(self.noise_var))

    @property
    def dim(self) -> int:
        return self.lengthscales.size


@dataclass(frozen=True)
class LengthscalePrior:
    """Log-normal prior shared by every lengthscale: log(l) ~ N(log_mean, log_std^2)."""

    log_mean: float
    log_std: float

    def __post_init__(self):
        if not self.log_std > 0:
            raise ValueError("log_std must be positive")

    @property
    def mean(self) -> float:
        return math.exp(self.log_mean + 0.5 * self.log_std**2)

    def log_density(self, lengthscales) -> float:
        ls = np.asarray(lengthscales, dtype=float)
        z = (np.log(ls) - self.log_mean) / self.log_std
        return float(np.sum(-np.log(ls) - math.log(self.log_std) - 0.5 * LOG_2PI - 0.5 * z**2))


def _points(x, dim: int) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.shape[-1] != dim:
        raise ValueError(f"expected points of dimension {dim}, got shape {x.shape}")
    return x.reshape(-1, dim)


def kernel_matrix(A, B, hp: GpHyperparams) -> np.ndarray:
    """SE-ARD cross-covariance between the rows of A and B."""
    A = _points(A, hp.dim) / hp.lengthscales
    B = _points(B, hp.dim) / hp.lengthscales
    sq = np.sum(A**2, 1)[:, None] + np.sum(B**2, 1)[None, :] - 2.0 * A @ B.T
    return hp.output_scale * np.exp(-0.5 * np.maximum(sq, 0.0))


def kernel_eval(a, b, hp: GpHyperparams) -> float:
    a = np.atleast_1d(np.asarray(a, dtype=float))
    b = np.atleast_1d(np.asarray(b, dtype=float))
    if a.shape != (hp.dim,) or b.shape != (hp.dim,):
        raise ValueError(f"points must have dimension {hp.dim}")
    r = (a - b) / hp.lengthscales
    return hp.output_scale * math.exp(-0.5 * float(r @ r))


def robust_cholesky(A: np.ndarray, scale: float = 1.0) -> tuple[np.ndarray, float]:
    """Cholesky of A, adding diagonal jitter (relative to `scale`) if needed.

    Returns the lower factor and the jitter that was added.
    """
    n = A.shape[0]
    if n == 0:
        return np.zeros((0, 0)), 0.0
    try:
        return np.linalg.cholesky(A), 0.0
    except np.linalg.LinAlgError:
        pass
    jitter = JITTER_START
    while jitter <= JITTER_MAX * (1 + 1e-12):
        try:
            return np.linalg.cholesky(A + jitter * scale * np.eye(n)), jitter * scale
        except np.linalg.LinAlgError:
            jitter *= 10.0
    raise NumericalError(
        f"matrix of size {n} not positive definite after jitter {JITTER_MAX * scale:g}; "
        f"min diag {np.min(np.diag(A)):g}"
    )


@dataclass(frozen=True)
class GpModel:
    dataset: Dataset
    hyperparams: GpHyperparams
    chol: np.ndarray
    alpha: np.ndarray
    jitter: float = 0.0

    @property
    def X(self) -> np.ndarray:
        return self.dataset.inputs

    @property
    def y(self) -> np.ndarray:
        return self.dataset.observations

    @property
    def dim(self) -> int:
        return self.dataset.dim

    def cross_whitened(self, Z) -> np.ndarray:
        """L^{-1} K(X, Z), shape (t, n)."""
        Kxz = kernel_matrix(self.X, Z, self.hyperparams)
        if len(self.dataset) == 0:
            return Kxz
        return solve_triangular(self.chol, Kxz, lower=True)

    def posterior_cov(self, A, B) -> np.ndarray:
        """Latent posterior covariance k(a, b | D) between rows of A and B."""
        K = kernel_matrix(A, B, self.hyperparams)
        if len(self.dataset) == 0:
            return K
        return K - self.cross_whitened(A).T @ self.cross_whitened(B)

    def mean(self, Z) -> np.ndarray:
        Z = _points(Z, self.dim)
        if len(self.dataset) == 0:
            return np.zeros(Z.shape[0])
        return kernel_matrix(Z, self.X, self.hyperparams) @ self.alpha

    def latent_var(self, Z) -> np.ndarray:
        Z = _points(Z, self.dim)
        prior = np.full(Z.shape[0], self.hyperparams.output_scale)
        if len(self.dataset) == 0:
            return prior
        V = self.cross_whitened(Z)
        return np.maximum(prior - np.sum(V**2, 0), 0.0)


def fit(dataset: Dataset, hp: GpHyperparams) -> GpModel:
    if hp.dim != dataset.dim:
        raise ValueError("hyperparameter dimension does not match dataset")
    X, y = dataset.inputs, dataset.observations
    K = kernel_matrix(X, X, hp) + hp.noise_var * np.eye(len(dataset))
    L, jitter = robust_cholesky(K, hp.output_scale)
    alpha = cho_solve((L, True), y) if len(dataset) else np.zeros(0)
    return GpModel(dataset, hp, L, alpha, jitter)


def predict(model: GpModel, x):
    """Posterior mean and noisy-observation variance at x.

    Scalars for a single point, arrays for an (n, d) batch.
    """
    x = np.asarray(x, dtype=float)
    single = x.ndim == 1
    Z = _points(x, model.dim)
    mean = model.mean(Z)
    var = model.latent_var(Z) + model.hyperparams.noise_var
    if single:
        return float(mean[0]), float(var[0])
    return mean, var


def conditional_virtual_cov(model: GpModel, virtual) -> np.ndarray:
    """Cov of noisy virtual observations at `virtual` given the data."""
    Q = _points(virtual, model.dim)
    return model.posterior_cov(Q, Q) + model.hyperparams.noise_var * np.eye(Q.shape[0])


def augmented_variance(model: GpModel, virtual_locations, x):
    """sigma_y^2(x | D ∪ virtual), virtual points observed with the same noise.

    Observation values never enter a GP variance, so only locations are needed.
    """
    x = np.asarray(x, dtype=float)
    single = x.ndim == 1
    Z = _points(x, model.dim)
    base = model.latent_var(Z) + model.hyperparams.noise_var
    Q = np.asarray(virtual_locations, dtype=float).reshape(-1, model.dim)
    if Q.shape[0] == 0:
        return float(base[0]) if single else base
    C = conditional_virtual_cov(model, Q)
    Lc, _ = robust_cholesky(C, model.hyperparams.output_scale)
    W = solve_triangular(Lc, model.posterior_cov(Q, Z), lower=True)
    var = np.maximum(base - np.sum(W**2, 0), 0.0)
    return float(var[0]) if single else var


def gaussian_entropy(variance):
    v = np.asarray(variance, dtype=float)
    if np.any(v <= 0):
        raise ValueError("variance must be positive")
    h = 0.5 * np.log(2.0 * math.pi * math.e * v)
    return float(h) if h.ndim == 0 else h


def _lml_and_grad(X, y, log_ls, log_os, noise_var, need_grad=True):
    """Log evidence and its gradient w.r.t. (log lengthscales, log output scale)."""
    ls = np.exp(log_ls)
    hp = GpHyperparams(ls, math.exp(log_os), noise_var)
    n = y.size
    Kf = kernel_matrix(X, X, hp)
    L, _ = robust_cholesky(Kf + noise_var * np.eye(n), hp.output_scale)
    alpha = cho_solve((L, True), y)
    lml = -0.5 * y @ alpha - np.sum(np.log(np.diag(L))) - 0.5 * n * LOG_2PI
    if not need_grad:
        return lml, None
    W = np.outer(alpha, alpha) - cho_solve((L, True), np.eye(n))
    grad = np.empty(ls.size + 1)
    for i in range(ls.size):
        D2 = (X[:, i, None] - X[None, :, i]) ** 2 / ls[i] ** 2
        grad[i] = 0.5 * np.sum(W * Kf * D2)
    grad[-1] = 0.5 * np.sum(W * Kf)
    return lml, grad


def log_marginal_likelihood(dataset: Dataset, hp: GpHyperparams) -> float:
    """log N(y; 0, K + noise I)."""
    if len(dataset) == 0:
        return 0.0
    lml, _ = _lml_and_grad(
        dataset.inputs, dataset.observations, np.log(hp.lengthscales), math.log(hp.output_scale),
        hp.noise_var, need_grad=False,
    )
    return float(lml)


def map_objective(dataset: Dataset, hp: GpHyperparams, prior: LengthscalePrior | None) -> float:
    """Log evidence plus the lengthscale log-prior (flat prior on log output scale)."""
    val = log_marginal_likelihood(dataset, hp)
    if prior is not None:
        val += prior.log_density(hp.lengthscales)
    return val


@dataclass
class _MapProblem:
    X: np.ndarray
    y: np.ndarray
    prior: LengthscalePrior | None
    noise_var: float
    calls: int = field(default=0)

    def __call__(self, theta):
        self.calls += 1
        log_ls, log_os = theta[:-1], theta[-1]
        try:
            lml, grad = _lml_and_grad(self.X, self.y, log_ls, log_os, self.noise_var)
        except NumericalError:
            return 1e25, np.zeros_like(theta)
        if self.prior is not None:
            z = (log_ls - self.prior.log_mean) / self.prior.log_std
            # density over l, so d/dlog(l) of -log(l) contributes -1
            lml += float(np.sum(-log_ls - math.log(self.prior.log_std) - 0.5 * LOG_2PI - 0.5 * z**2))
            grad = grad.copy()
            grad[:-1] += -1.0 - z / self.prior.log_std
        return -lml, -grad


def map_fit(
    dataset: Dataset,
    prior: LengthscalePrior | None,
    init: GpHyperparams,
    fixed_noise: float,
    lengthscale_bounds: tuple[float, float] = (1e-4, 1e4),
    output_scale_bounds: tuple[float, float] = (1e-6, 1e6),
    maxiter: int = 100,
) -> GpHyperparams:
    """MAP estimate of lengthscales and output scale with noise held fixed.

    Optimizes in log space from three starts (init, half and double the
    initial lengthscales) and keeps the best. Warns and returns `init` if no
    start improves on it.
    """
    if len(dataset) == 0:
        raise ValueError("map_fit needs at least one observation")
    problem = _MapProblem(dataset.inputs, dataset.observations, prior, float(fixed_noise))
    lo, hi = np.log(lengthscale_bounds)
    bounds = [(lo, hi)] * init.dim + [tuple(np.log(output_scale_bounds))]

    theta0 = np.append(np.log(init.lengthscales), math.log(init.output_scale))
    theta0 = np.clip(theta0, [b[0] for b in bounds], [b[1] for b in bounds])
    init_val = -problem(theta0)[0]
    best_theta, best_val = theta0, init_val
    for factor in (1.0, 0.5, 2.0):
        start = theta0.copy()
        start[:-1] = np.clip(start[:-1] + math.log(factor), lo, hi)
        res = minimize(problem, start, jac=True, method="L-BFGS-B", bounds=bounds,
                       options={"maxiter": maxiter, "gtol": 1e-5})
        if np.all(np.isfinite(res.x)) and -res.fun > best_val:
            best_theta, best_val = res.x, -res.fun

    if best_val <= init_val + 1e-12 and best_theta is theta0:
        grad_norm = np.linalg.norm(problem(theta0)[1])
        if grad_norm > 1e-5:
            warnings.warn("MAP fit did not improve on the initial hyperparameters", MapFitWarning)
        return GpHyperparams(init.lengthscales, init.output_scale, fixed_noise)
    return GpHyperparams(np.exp(best_theta[:-1]), math.exp(best_theta[-1]), fixed_noise)
