"""Benchmark objectives and the sequential optimization loop.

GP-sample objectives are prior sample paths on the unit cube whose
lengthscales come from a log-normal prior at one of four complexity levels.
Sphere and Ackley live on their usual boxes and are exposed on the unit cube
through an affine map.
"""

from __future__ import annotations

import enum
import logging
import math
import time
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.stats import qmc

from .acquisition import (AcquisitionConfig, build_round, local_thompson_select, select_batch,
                          select_incumbent, select_query)
from .descent import OptimizerConfig, descend
from .gp import BoxDomain, Dataset, GpHyperparams, LengthscalePrior, fit, map_fit
from .pathwise import DEFAULT_NUM_FEATURES, SamplePath, draw_basis, seed_sequence
from .stopping import StoppingConfig, StoppingState, local_regret_samples, stop_decision

log = logging.getLogger(__name__)

SQRT3 = math.sqrt(3.0)
GP_SAMPLE_NOISE_STD = 0.002
ANALYTIC_NOISE_STD = 0.001

# stream ids for SeedSequence([seed, stream, ...])
_OBJECTIVE, _INITIAL, _NOISE, _ROUND, _SOBOL = range(5)


class ComplexityLevel(enum.Enum):
    HIGH = ("high", -2.5, SQRT3 / 5)
    MEDIUM = ("medium", -2.0, SQRT3 / 4)
    LOW = ("low", -1.0, SQRT3 / 2)
    EXTREMELY_LOW = ("extremely_low", 1.0, SQRT3)

    def __init__(self, label, c1, c2):
        self.label = label
        self.c1 = c1
        self.c2 = c2

    @classmethod
    def from_name(cls, name: str) -> "ComplexityLevel":
        for level in cls:
            if level.label == name:
                return level
        raise ValueError(f"unknown complexity level {name!r}")

    def prior(self, d: int) -> LengthscalePrior:
        return LengthscalePrior(self.c1 * math.sqrt(2.0) + math.log(math.sqrt(d)), self.c2)


def sample_lengthscales(level, d: int, rng_seed) -> np.ndarray:
    """d i.i.d. draws exp(mu + sigma z); `level` is a ComplexityLevel or a LengthscalePrior."""
    if d < 1:
        raise ValueError("d must be >= 1")
    prior = level.prior(d) if isinstance(level, ComplexityLevel) else level
    z = np.random.default_rng(seed_sequence(rng_seed)).standard_normal(d)
    return np.exp(prior.log_mean + prior.log_std * z)


@dataclass(frozen=True)
class ModelSetup:
    """How an optimizer should model an objective when hyperparameters are unknown."""

    init: GpHyperparams
    prior: LengthscalePrior | None
    lengthscale_bounds: tuple[float, float] = (1e-4, 1e4)
    standardize: bool = False


class Objective:
    domain: BoxDomain
    noise_std: float = 0.0
    has_ground_truth: bool = True
    name: str = "objective"

    @property
    def dim(self) -> int:
        return self.domain.dim

    def noiseless(self, x) -> float:
        raise NotImplementedError

    def evaluate(self, x, rng: np.random.Generator) -> float:
        val = self.noiseless(x)
        if self.noise_std:
            val += self.noise_std * rng.standard_normal()
        return float(val)

    @property
    def true_hyperparams(self) -> GpHyperparams | None:
        return None

    def model_setup(self) -> ModelSetup:
        raise NotImplementedError


@dataclass
class GpObjective(Objective):
    level: ComplexityLevel
    true_lengthscales: np.ndarray
    true_path: SamplePath
    noise_std: float = GP_SAMPLE_NOISE_STD

    def __post_init__(self):
        self.domain = BoxDomain.unit(self.true_lengthscales.size)
        self.name = f"gp_{self.level.label}_d{self.dim}"

    def noiseless(self, x) -> float:
        return self.true_path(np.asarray(x, dtype=float))

    @property
    def true_hyperparams(self) -> GpHyperparams:
        return GpHyperparams(self.true_lengthscales, 1.0, self.noise_std**2)

    def model_setup(self) -> ModelSetup:
        prior = self.level.prior(self.dim)
        init = GpHyperparams(np.full(self.dim, prior.mean), 1.0, self.noise_std**2)
        return ModelSetup(init, prior)


def make_gp_objective(level: ComplexityLevel, d: int, M: int = DEFAULT_NUM_FEATURES, rng_seed=0) -> GpObjective:
    if M < 1:
        raise ValueError("M must be >= 1")
    ls_ss, basis_ss, w_ss = seed_sequence(rng_seed).spawn(3)
    ls = sample_lengthscales(level, d, ls_ss)
    hp = GpHyperparams(ls, 1.0, GP_SAMPLE_NOISE_STD**2)
    basis = draw_basis(hp, M, basis_ss)
    w = np.random.default_rng(w_ss).standard_normal(M)
    path = SamplePath(w, basis, np.zeros((0, d)), np.zeros(0), hp)
    return GpObjective(level, ls, path)


def sphere(x) -> float:
    x = np.asarray(x, dtype=float)
    return float(x @ x)


def ackley(x, a: float = 20.0, b: float = 0.2, c: float = 2 * math.pi) -> float:
    x = np.atleast_1d(np.asarray(x, dtype=float))
    val = -a * math.exp(-b * math.sqrt(np.mean(x**2))) - math.exp(np.mean(np.cos(c * x))) + a + math.e
    return max(val, 0.0)


@dataclass
class BoxFunction(Objective):
    """An analytic function on [lower, upper]^d seen through the unit cube."""

    fn: Callable
    lower: float
    upper: float
    d: int
    label: str = "function"

    def __post_init__(self):
        self.domain = BoxDomain.unit(self.d)
        self.name = f"{self.label}_d{self.d}"

    def to_native(self, u) -> np.ndarray:
        return self.lower + (self.upper - self.lower) * np.asarray(u, dtype=float)

    def noiseless(self, x) -> float:
        return float(self.fn(self.to_native(x)))

    def model_setup(self) -> ModelSetup:
        rd = math.sqrt(self.d)
        init = GpHyperparams(np.full(self.d, 0.2 * rd), 1.0, ANALYTIC_NOISE_STD**2)
        return ModelSetup(init, None, (0.05, rd), standardize=True)


def sphere_objective(d: int) -> BoxFunction:
    return BoxFunction(sphere, -2.0, 2.0, d, "sphere")


def ackley_objective(d: int) -> BoxFunction:
    return BoxFunction(ackley, -32.768, 32.768, d, "ackley")


def sobol_baseline(domain: BoxDomain, budget: int, rng_seed) -> np.ndarray:
    """First `budget` points of a scrambled Sobol sequence over the domain."""
    if budget < 1:
        raise ValueError("budget must be >= 1")
    rng = np.random.default_rng(seed_sequence(rng_seed))
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", UserWarning)  # non power-of-two sample counts
        u = qmc.Sobol(domain.dim, scramble=True, seed=rng).random(budget)
    return domain.lower + (domain.upper - domain.lower) * u


# ---------------------------------------------------------------------------
# experiment loop


class Algo(str, enum.Enum):
    LES = "LES"
    QLES = "qLES"
    LOCAL_TS = "LocalTS"
    SOBOL = "Sobol"


class Protocol(str, enum.Enum):
    WITHIN_MODEL = "within_model"
    OUT_OF_MODEL = "out_of_model"


@dataclass(frozen=True)
class Task:
    kind: str  # gp_sample | sphere | ackley
    dim: int
    complexity: str | None = None
    num_features: int = DEFAULT_NUM_FEATURES

    def __post_init__(self):
        if self.kind not in ("gp_sample", "sphere", "ackley"):
            raise ValueError(f"unknown task kind {self.kind!r}")
        if self.dim < 1:
            raise ValueError("dim must be >= 1")
        if self.kind == "gp_sample":
            ComplexityLevel.from_name(self.complexity or "")

    @property
    def label(self) -> str:
        if self.kind == "gp_sample":
            return f"gp_{self.complexity}_d{self.dim}"
        return f"{self.kind}_d{self.dim}"

    def make(self, seed: int) -> Objective:
        if self.kind == "gp_sample":
            level = ComplexityLevel.from_name(self.complexity)
            return make_gp_objective(level, self.dim, self.num_features, [seed, _OBJECTIVE])
        if self.kind == "sphere":
            return sphere_objective(self.dim)
        return ackley_objective(self.dim)


@dataclass(frozen=True)
class RunSettings:
    acquisition: AcquisitionConfig = field(default_factory=AcquisitionConfig)
    batch_size: int = 1
    initial_samples: int = 2
    stopping: StoppingConfig | None = None


@dataclass
class RunRecord:
    seed: int
    iteration: int
    x: np.ndarray
    y: float
    best_y: float
    true_y: float | None
    cum_y: float
    acq: float | None
    stopped: bool
    wall_ms: float


@dataclass
class SeedResult:
    seed: int
    records: list[RunRecord]
    certificate: dict | None = None
    failed: bool = False
    error: str | None = None
    map_fits: int = 0

    @property
    def stop_iteration(self) -> int | None:
        return self.certificate["iteration"] if self.certificate else None


class ObjectiveError(RuntimeError):
    pass


class _Recorder:
    def __init__(self, seed: int, objective: Objective, rng: np.random.Generator):
        self.seed = seed
        self.objective = objective
        self.rng = rng
        self.records: list[RunRecord] = []
        self.X: list[np.ndarray] = []
        self.y: list[float] = []
        self._tic = time.perf_counter()

    def evaluate(self, x, acq=None):
        x = np.asarray(x, dtype=float)
        try:
            y = self.objective.evaluate(x, self.rng)
        except Exception as exc:  # noqa: BLE001 - any failure aborts the seed
            raise ObjectiveError(f"objective failed at {x.tolist()}: {exc}") from exc
        if not math.isfinite(y):
            raise ObjectiveError(f"objective returned {y} at {x.tolist()}")
        true_y = self.objective.noiseless(x) if self.objective.has_ground_truth else None
        prev = self.records[-1] if self.records else None
        now = time.perf_counter()
        self.records.append(RunRecord(
            seed=self.seed,
            iteration=len(self.records) + 1,
            x=x.copy(),
            y=y,
            best_y=y if prev is None else min(prev.best_y, y),
            true_y=true_y,
            cum_y=y if prev is None else prev.cum_y + y,
            acq=None if acq is None else float(acq),
            stopped=False,
            wall_ms=(now - self._tic) * 1e3,
        ))
        self._tic = now
        self.X.append(x.copy())
        self.y.append(y)


def run_seed(objective: Objective | Callable[[int], Objective], algo, protocol, budget: int, seed: int,
             settings: RunSettings = RunSettings(), on_round=None) -> SeedResult:
    """One optimization run.

    `on_round(iteration, round, query)` is called after each LES/qLES selection.
    """
    algo, protocol = Algo(algo), Protocol(protocol)
    if callable(objective) and not isinstance(objective, Objective):
        objective = objective(seed)
    domain = objective.domain
    rec = _Recorder(seed, objective, np.random.default_rng(seed_sequence([seed, _NOISE])))
    result = SeedResult(seed, rec.records)
    if budget < settings.initial_samples:
        raise ValueError("budget is smaller than the initial design")
    try:
        if algo is Algo.SOBOL:
            for x in sobol_baseline(domain, budget, [seed, _SOBOL]):
                rec.evaluate(x)
            return result
        _run_model_based(objective, algo, protocol, budget, seed, settings, rec, result, on_round)
    except ObjectiveError as exc:
        log.warning("seed %d aborted: %s", seed, exc)
        result.failed = True
        result.error = str(exc)
    return result


def _run_model_based(objective, algo, protocol, budget, seed, settings, rec, result, on_round):
    domain = objective.domain
    setup = objective.model_setup()
    if protocol is Protocol.WITHIN_MODEL:
        hp = objective.true_hyperparams
        if hp is None:
            raise ValueError(f"{objective.name} has no ground-truth hyperparameters")
    else:
        hp = setup.init
    acq_cfg = settings.acquisition
    stop_cfg = settings.stopping
    if stop_cfg is not None and stop_cfg.num_samples != acq_cfg.num_paths:
        raise ValueError("stopping num_samples must equal the number of paths")
    state = StoppingState()

    rng_init = np.random.default_rng(seed_sequence([seed, _INITIAL]))
    for x in domain.sample_uniform(rng_init, settings.initial_samples):
        rec.evaluate(x)

    while len(rec.records) < budget:
        t = len(rec.records)
        y = np.array(rec.y)
        scale = 1.0
        if setup.standardize and protocol is Protocol.OUT_OF_MODEL:
            scale = float(np.std(y)) or 1.0
            y = (y - np.mean(y)) / scale
        data = Dataset(domain, np.array(rec.X), y)
        if protocol is Protocol.OUT_OF_MODEL:
            hp = map_fit(data, setup.prior, setup.init, setup.init.noise_var, setup.lengthscale_bounds)
            result.map_fits += 1
        model = fit(data, hp)
        incumbent = select_incumbent(model)
        round_seed = seed_sequence([seed, _ROUND, t])

        if algo is Algo.LOCAL_TS:
            x = local_thompson_select(model, incumbent, acq_cfg.optimizer, domain, round_seed,
                                      acq_cfg.num_features)
            rec.evaluate(x)
            continue

        rnd = build_round(model, incumbent, acq_cfg, round_seed)
        if algo is Algo.QLES and settings.batch_size > 1:
            batch, score = select_batch(rnd, min(settings.batch_size, budget - t))
        else:
            x, score = select_query(rnd)
            batch = x[None, :]
        if on_round is not None:
            on_round(t, rnd, batch)
        if stop_cfg is not None:
            regrets = scale * local_regret_samples(rnd, incumbent)
            state = stop_decision(regrets, stop_cfg, state.at(t))
            if state.stopped:
                rec.records[-1].stopped = True
                result.certificate = dict(state.certificate.as_dict(), seed=seed,
                                          incumbent=incumbent.tolist())
                return
        for x in batch:
            rec.evaluate(x, acq=score)


def _run_seed_star(args):
    return run_seed(*args)


def run_experiment(task, algo, protocol, budget: int, seeds, settings: RunSettings = RunSettings(),
                   workers: int = 1) -> list[SeedResult]:
    """Run every seed; results come back in seed order regardless of `workers`."""
    make = task.make if isinstance(task, Task) else task
    jobs = [(make, algo, protocol, budget, int(s), settings) for s in seeds]
    if workers <= 1:
        return [_run_seed_star(j) for j in jobs]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(_run_seed_star, jobs))


def true_local_regret(objective: GpObjective, incumbent, cfg: OptimizerConfig) -> float:
    """f(incumbent) - f(descent terminal) on the noiseless ground truth path."""
    seq = descend(objective.true_path, np.asarray(incumbent, dtype=float), cfg, objective.domain)
    return objective.noiseless(seq.start) - objective.noiseless(seq.terminal)
