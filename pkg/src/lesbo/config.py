"""Experiment configuration: a YAML document validated into dataclasses.

Omitted fields take the library defaults (250 paths, 8 support points, 1024
features, ADAM with lr 0.002 for 500 steps, 2 initial samples, epsilon 0.1,
delta 0.05, delta_est 0.0025, a decision every 25 queries).
"""

from __future__ import annotations

from dataclasses import dataclass, field, fields

import yaml

from .acquisition import AcquisitionConfig
from .bench import Algo, Protocol, RunSettings, Task
from .descent import OptimizerConfig, OptimizerKind
from .stopping import StoppingConfig


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class StoppingSpec:
    enabled: bool = False
    epsilon: float = 0.1
    delta: float = 0.05
    delta_est: float = 0.0025
    decision_period: int = 25
    horizon: int = 100

    def build(self, num_samples: int) -> StoppingConfig:
        return StoppingConfig(num_samples=num_samples, epsilon=self.epsilon, delta=self.delta,
                              delta_est=self.delta_est, decision_period=self.decision_period,
                              horizon=self.horizon)


@dataclass(frozen=True)
class AlgoSpec:
    name: Algo
    acquisition: AcquisitionConfig = field(default_factory=AcquisitionConfig)
    batch_size: int = 1


@dataclass(frozen=True)
class ExperimentConfig:
    tasks: list[Task]
    algorithms: list[AlgoSpec]
    protocol: Protocol
    budget: int
    seeds: list[int]
    stopping: StoppingSpec = field(default_factory=StoppingSpec)
    initial_samples: int = 2
    output_dir: str = "results"
    workers: int = 1

    def settings(self, algo: AlgoSpec) -> RunSettings:
        stop = None
        if self.stopping.enabled and algo.name in (Algo.LES, Algo.QLES):
            stop = self.stopping.build(algo.acquisition.num_paths)
        return RunSettings(algo.acquisition, algo.batch_size, self.initial_samples, stop)


_TOP_KEYS = {"task", "tasks", "algorithm", "algorithms", "protocol", "budget", "seeds", "stopping",
             "initial_samples", "output_dir", "workers"}
_TASK_KEYS = {"kind", "dim", "complexity", "num_features"}
_ALGO_KEYS = {"name", "num_paths", "support_points", "num_features", "dedup_radius", "batch_size",
              "optimizer"}
_OPT_KEYS = {f.name for f in fields(OptimizerConfig)}
_STOP_KEYS = {f.name for f in fields(StoppingSpec)}


def _mapping(obj, where: str) -> dict:
    if not isinstance(obj, dict):
        raise ConfigError(f"{where}: expected a mapping")
    return obj


def _check_keys(obj: dict, allowed: set, where: str):
    unknown = sorted(set(obj) - allowed)
    if unknown:
        prefix = f"{where}." if where else ""
        raise ConfigError(f"unknown key {prefix}{unknown[0]}")


def _int(obj: dict, key: str, where: str, default=None, minimum=None) -> int:
    val = obj.get(key, default)
    if val is None:
        raise ConfigError(f"{where}{key}: required")
    if isinstance(val, bool) or not isinstance(val, int):
        raise ConfigError(f"{where}{key}: expected an integer, got {val!r}")
    if minimum is not None and val < minimum:
        raise ConfigError(f"{where}{key}: must be >= {minimum}, got {val}")
    return val


def _listify(doc: dict, single: str, plural: str) -> list:
    if single in doc and plural in doc:
        raise ConfigError(f"give either {single} or {plural}, not both")
    if plural in doc:
        items = doc[plural]
        if not isinstance(items, list) or not items:
            raise ConfigError(f"{plural}: expected a non-empty list")
        return items
    if single in doc:
        return [doc[single]]
    raise ConfigError(f"{single}: required")


def _parse_task(obj, where: str) -> Task:
    obj = _mapping(obj, where)
    _check_keys(obj, _TASK_KEYS, where)
    kind = obj.get("kind")
    if kind not in ("gp_sample", "sphere", "ackley"):
        raise ConfigError(f"{where}.kind: invalid value {kind!r}")
    dim = _int(obj, "dim", f"{where}.", minimum=1)
    complexity = obj.get("complexity")
    if kind == "gp_sample":
        if complexity not in ("high", "medium", "low", "extremely_low"):
            raise ConfigError(f"{where}.complexity: invalid value {complexity!r}")
    elif complexity is not None:
        raise ConfigError(f"{where}.complexity: only valid for gp_sample tasks")
    return Task(kind, dim, complexity, _int(obj, "num_features", f"{where}.", 1024, 1))


def _parse_optimizer(obj, where: str) -> OptimizerConfig:
    obj = _mapping(obj, where)
    _check_keys(obj, _OPT_KEYS, where)
    kw = dict(obj)
    if "kind" in kw:
        try:
            kw["kind"] = OptimizerKind(kw["kind"])
        except ValueError:
            raise ConfigError(f"{where}.kind: invalid value {kw['kind']!r}") from None
    try:
        return OptimizerConfig(**kw)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{where}: {exc}") from None


def _parse_algo(obj, where: str) -> AlgoSpec:
    if isinstance(obj, str):
        obj = {"name": obj}
    obj = _mapping(obj, where)
    _check_keys(obj, _ALGO_KEYS, where)
    try:
        name = Algo(obj.get("name"))
    except ValueError:
        raise ConfigError(f"{where}.name: invalid value {obj.get('name')!r}") from None
    opt = _parse_optimizer(obj.get("optimizer", {}), f"{where}.optimizer")
    try:
        acq = AcquisitionConfig(
            num_paths=_int(obj, "num_paths", f"{where}.", 250, 1),
            support_points=_int(obj, "support_points", f"{where}.", 8, 2),
            optimizer=opt,
            num_features=_int(obj, "num_features", f"{where}.", 1024, 1),
            dedup_radius=obj.get("dedup_radius"),
        )
    except ValueError as exc:
        raise ConfigError(f"{where}: {exc}") from None
    batch = _int(obj, "batch_size", f"{where}.", 1, 1)
    if batch > 1 and name is not Algo.QLES:
        raise ConfigError(f"{where}.batch_size: only qLES supports batches")
    return AlgoSpec(name, acq, batch)


def parse_config(text: str) -> ExperimentConfig:
    try:
        doc = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigError(f"malformed document: {exc}") from None
    doc = _mapping(doc, "config")
    _check_keys(doc, _TOP_KEYS, "")

    tasks = [_parse_task(t, f"tasks[{i}]") for i, t in enumerate(_listify(doc, "task", "tasks"))]
    algos = [_parse_algo(a, f"algorithms[{i}]")
             for i, a in enumerate(_listify(doc, "algorithm", "algorithms"))]
    try:
        protocol = Protocol(doc.get("protocol", "within_model"))
    except ValueError:
        raise ConfigError(f"protocol: invalid value {doc.get('protocol')!r}") from None

    initial = _int(doc, "initial_samples", "", 2, 1)
    budget = _int(doc, "budget", "")
    if budget < max(2, initial):
        raise ConfigError(f"budget: must be at least the initial design size {max(2, initial)}")

    seeds = doc.get("seeds")
    if not isinstance(seeds, list) or not seeds:
        raise ConfigError("seeds: expected a non-empty list of integers")
    if any(isinstance(s, bool) or not isinstance(s, int) for s in seeds):
        raise ConfigError("seeds: expected integers")
    if len(set(seeds)) != len(seeds):
        raise ConfigError("seeds: duplicate seed values")

    stop_doc = _mapping(doc.get("stopping", {}) or {}, "stopping")
    _check_keys(stop_doc, _STOP_KEYS, "stopping")
    stopping = StoppingSpec(**stop_doc)

    if protocol is Protocol.WITHIN_MODEL:
        for i, t in enumerate(tasks):
            uses_model = any(a.name is not Algo.SOBOL for a in algos)
            if t.kind != "gp_sample" and uses_model:
                raise ConfigError(f"tasks[{i}].kind: {t.kind} has no ground-truth hyperparameters "
                                  "for the within_model protocol")
    if stopping.enabled:
        for i, a in enumerate(algos):
            if a.name in (Algo.LES, Algo.QLES):
                try:
                    stopping.build(a.acquisition.num_paths)
                except ValueError as exc:
                    raise ConfigError(f"stopping: {exc} (algorithms[{i}])") from None

    cfg = ExperimentConfig(tasks, algos, protocol, budget, [int(s) for s in seeds], stopping, initial,
                           str(doc.get("output_dir", "results")), _int(doc, "workers", "", 1, 1))
    return cfg
