"""
Search Module for LCDA.
The propose -> evaluate -> score -> record loop, the reward functions,
evaluation caching, Pareto analysis and the summaries written after a run.
"""

import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np

from cim_cost import CostReport, UnitCosts, cost, hardware_config, network_shapes, resolve_area_budget
from config import (
    ADC_SCALING,
    COLDSTART_MAX_EPISODES,
    COLDSTART_SEEDS,
    COLDSTART_TOLERANCE,
    COMPARE_SEEDS,
    DEFAULT_EPISODES,
    ENERGY_NORM,
    ENUMERATION_CAP,
    FPS_NORM,
    INVALID_PERFORMANCE,
    MC_SAMPLES,
    NOISE_SIGMA,
    TRAIN_EPOCHS,
    WEIGHT_BITS,
)
from datasets import Dataset
from design_space import Backbone, DesignSpace, Rollout, enumerate_rollouts, validate
from dnn_eval import NoiseModel, build_network, mc_accuracy, train_noise_injection
from errors import HistoryError, LatencyError, OptimizerError, ReplayDivergenceError
from history_store import HistoryStore, load_history_records
from logger import get_logger
from surrogate import SurrogateModel

logger = get_logger(__name__)

REWARD_KINDS = ("accuracy_energy", "accuracy_latency", "custom")
COST_METRICS = ("energy", "latency", "area")


# ---------------------------------------------------------------------------
# Rewards
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class RewardSpec:
    """
    Which reward to use and how to normalize its hardware term.

    custom = accuracy - energy_weight*sqrt(E/energy_norm) + latency_weight*FPS/fps_norm
    """
    kind: str = "accuracy_energy"
    energy_norm: float = ENERGY_NORM
    fps_norm: float = FPS_NORM
    energy_weight: float = 1.0
    latency_weight: float = 1.0

    def __post_init__(self):
        if self.kind not in REWARD_KINDS:
            raise ValueError(f"reward kind must be one of {REWARD_KINDS}, got {self.kind!r}")
        if not (self.energy_norm > 0 and self.fps_norm > 0):
            raise ValueError("energy_norm and fps_norm must be positive")

    def to_dict(self) -> Dict:
        return {
            "kind": self.kind,
            "energy_norm": self.energy_norm,
            "fps_norm": self.fps_norm,
            "energy_weight": self.energy_weight,
            "latency_weight": self.latency_weight,
        }


DEFAULT_REWARD = RewardSpec()


def reward_ae(accuracy: float, energy: float, spec: RewardSpec = DEFAULT_REWARD) -> float:
    """accuracy - sqrt(energy / energy_norm); energy in pJ."""
    if energy < 0:
        raise ValueError(f"energy must be non-negative, got {energy}")
    return accuracy - math.sqrt(energy / spec.energy_norm)


def frames_per_second(latency_ns: float) -> float:
    if not latency_ns > 0:
        raise LatencyError(f"latency must be positive, got {latency_ns}")
    return 1e9 / latency_ns


def reward_al(accuracy: float, latency: float, spec: RewardSpec = DEFAULT_REWARD) -> float:
    """accuracy + FPS / fps_norm, with latency given in ns."""
    return accuracy + frames_per_second(latency) / spec.fps_norm


def reward_custom(accuracy: float, report: CostReport, spec: RewardSpec) -> float:
    return (accuracy
            - spec.energy_weight * math.sqrt(max(report.energy, 0.0) / spec.energy_norm)
            + spec.latency_weight * frames_per_second(report.latency) / spec.fps_norm)


def score(accuracy: float, report: CostReport, spec: RewardSpec = DEFAULT_REWARD) -> float:
    """The value reported back to the optimizer: -1 for designs over the area budget."""
    if not report.valid:
        return INVALID_PERFORMANCE
    if spec.kind == "accuracy_energy":
        return reward_ae(accuracy, report.energy, spec)
    if spec.kind == "accuracy_latency":
        return reward_al(accuracy, report.latency, spec)
    return reward_custom(accuracy, report, spec)


# ---------------------------------------------------------------------------
# Records
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class EvalRecord:
    episode: int
    rollout: Rollout
    accuracy: float
    cost: CostReport
    reward: float
    optimizer_tag: str
    fallback: bool = False
    lints: Tuple[str, ...] = ()
    cached: bool = False

    def to_dict(self) -> Dict:
        return {
            "episode": self.episode,
            "rollout": self.rollout.to_dict(),
            "accuracy": self.accuracy,
            "cost": self.cost.to_dict(),
            "reward": self.reward,
            "optimizer": self.optimizer_tag,
            "fallback": self.fallback,
            "lints": list(self.lints),
            "cached": self.cached,
        }

    @classmethod
    def from_dict(cls, data: Dict) -> "EvalRecord":
        return cls(
            episode=data["episode"],
            rollout=Rollout.from_dict(data["rollout"]),
            accuracy=data["accuracy"],
            cost=CostReport.from_dict(data["cost"]),
            reward=data["reward"],
            optimizer_tag=data["optimizer"],
            fallback=data.get("fallback", False),
            lints=tuple(data.get("lints", ())),
            cached=data.get("cached", False),
        )


def load_history(path: Path) -> List[EvalRecord]:
    """
    Records of a history file as EvalRecords.

    Raises:
        HistoryError: if the file is unreadable or a record lacks a field
    """
    records = []
    for number, data in enumerate(load_history_records(path), start=1):
        try:
            records.append(EvalRecord.from_dict(data))
        except (KeyError, TypeError, ValueError) as e:
            raise HistoryError(f"{path}: record {number} is malformed: {e!r}")
    return records


# ---------------------------------------------------------------------------
# Evaluators
# ---------------------------------------------------------------------------

class SurrogateEvaluator:
    """Analytic accuracy proxy; the seed is accepted for interface parity and ignored."""
    name = "surrogate"

    def __init__(self, backbone: Backbone, sigma: float = NOISE_SIGMA, model: Optional[SurrogateModel] = None):
        self.backbone = backbone
        self.sigma = sigma
        self.model = model or SurrogateModel()

    def accuracy(self, rollout: Rollout, seed: int) -> float:
        return self.model.accuracy(rollout, self.backbone, self.sigma)


class TrainedEvaluator:
    """Noise-injection training followed by Monte Carlo accuracy under the same noise."""
    name = "trained"

    def __init__(self, backbone: Backbone, train: Dataset, test: Dataset,
                 noise: Optional[NoiseModel] = None, epochs: int = TRAIN_EPOCHS,
                 learning_rate: Optional[float] = None, batch_size: Optional[int] = None,
                 mc_samples: int = MC_SAMPLES):
        self.backbone = backbone
        self.train = train
        self.test = test
        self.noise = noise or NoiseModel()
        self.epochs = epochs
        self.train_kwargs = {}
        if learning_rate is not None:
            self.train_kwargs["lr"] = learning_rate
        if batch_size is not None:
            self.train_kwargs["batch_size"] = batch_size
        self.mc_samples = mc_samples

    def accuracy(self, rollout: Rollout, seed: int) -> float:
        net = build_network(rollout, self.backbone, seed)
        trained = train_noise_injection(net, self.train, self.noise, self.epochs, seed=seed, **self.train_kwargs)
        result = mc_accuracy(trained, self.test, self.noise, self.mc_samples, seed)
        logger.debug(f"Trained evaluation: clean {result.clean_accuracy:.4f}, "
                     f"mc {result.mc_mean_accuracy:.4f} +/- {result.mc_std:.4f}")
        return result.mc_mean_accuracy


class CostModel:
    """Binds a backbone, unit costs and the resolved area budget."""

    def __init__(self, space: DesignSpace, unit_costs: Optional[UnitCosts] = None,
                 weight_bits: int = WEIGHT_BITS, backbone: Optional[Backbone] = None,
                 adc_scaling: bool = ADC_SCALING):
        self.backbone = backbone or space.backbone
        self.unit_costs = unit_costs or UnitCosts()
        self.weight_bits = weight_bits
        self.adc_scaling = adc_scaling
        self.area_budget = resolve_area_budget(space, self.unit_costs, weight_bits, adc_scaling)

    def __call__(self, rollout: Rollout) -> CostReport:
        hw = hardware_config(rollout.hardware, self.unit_costs, self.weight_bits, self.area_budget,
                             self.adc_scaling)
        return cost(network_shapes(rollout, self.backbone), hw)


# ---------------------------------------------------------------------------
# Search loop
# ---------------------------------------------------------------------------

def run_search(space: DesignSpace, optimizer, spec: RewardSpec, episodes: int, seed: int,
               evaluator=None, backbone: Optional[Backbone] = None,
               cost_model: Optional[CostModel] = None,
               history_path: Optional[Path] = None, resume: bool = False,
               stop_when: Optional[Callable[[List[EvalRecord]], bool]] = None) -> List[EvalRecord]:
    """
    Run the co-design loop for `episodes` episodes.

    Each episode asks the optimizer for a rollout given the full history,
    evaluates its accuracy and hardware cost, scores it and appends the
    record. Designs seen earlier in the run reuse their evaluation.

    Args:
        space: Design space proposals must belong to
        optimizer: Object with `name` and `propose(history, episode)`
        spec: Reward definition
        episodes: Total number of episodes, counting resumed ones
        seed: Seed shared by evaluation and optimizers
        evaluator: Accuracy evaluator; surrogate by default
        history_path: When set, every record is appended there as it is produced
        resume: Continue an existing history file instead of starting over
        stop_when: Optional predicate checked after each episode to end early

    Returns:
        All records in episode order

    Raises:
        OptimizerError: if a proposal is not a member of the space
        ReplayDivergenceError: tagged with the episode at which replay diverged
    """
    if episodes < 1:
        raise ValueError(f"episodes must be at least 1, got {episodes}")
    backbone = backbone or space.backbone
    evaluator = evaluator or SurrogateEvaluator(backbone)
    cost_model = cost_model or CostModel(space, backbone=backbone)

    store = HistoryStore(history_path, resume=resume) if history_path else None
    history: List[EvalRecord] = [EvalRecord.from_dict(r) for r in store.existing] if store else []
    cache: Dict[Tuple[Rollout, int], Tuple[float, CostReport]] = {
        (r.rollout, seed): (r.accuracy, r.cost) for r in history
    }

    for episode in range(len(history), episodes):
        try:
            proposal = optimizer.propose(history, episode)
        except ReplayDivergenceError as e:
            raise e.at_episode(episode)

        rollout = proposal.rollout
        check = validate(rollout, space)
        if not check.ok:
            raise OptimizerError(f"{optimizer.name} proposed a rollout outside the space: "
                                 f"{'; '.join(str(v) for v in check.violations)}")

        key = (rollout, seed)
        cached = key in cache
        if not cached:
            cache[key] = (evaluator.accuracy(rollout, seed), cost_model(rollout))
        accuracy, report = cache[key]

        record = EvalRecord(
            episode=episode,
            rollout=rollout,
            accuracy=accuracy,
            cost=report,
            reward=score(accuracy, report, spec),
            optimizer_tag=optimizer.name,
            fallback=proposal.fallback,
            lints=tuple(proposal.lints),
            cached=cached,
        )
        history.append(record)
        if store:
            store.append(record.to_dict())
        logger.info(f"Episode {episode}: {optimizer.name} reward={record.reward:.4f} "
                    f"acc={accuracy:.4f} valid={report.valid}{' (cached)' if cached else ''}")

        if stop_when is not None and stop_when(history):
            logger.info(f"Stopping after episode {episode}: target reached")
            break

    return history


# ---------------------------------------------------------------------------
# Analysis
# ---------------------------------------------------------------------------

def _metric(record: EvalRecord, cost_metric: str) -> float:
    if cost_metric not in COST_METRICS:
        raise ValueError(f"cost_metric must be one of {COST_METRICS}, got {cost_metric!r}")
    return getattr(record.cost, cost_metric)


def pareto_front(history: Sequence[EvalRecord], cost_metric: str = "energy",
                 include_invalid: bool = False) -> List[EvalRecord]:
    """
    Records not dominated in (maximize accuracy, minimize cost_metric).

    Identical points are all kept. Result is in episode order.
    """
    candidates = [r for r in history if include_invalid or r.cost.valid]
    ordered = sorted(candidates, key=lambda r: (_metric(r, cost_metric), -r.accuracy))
    front = []
    best_lower = -math.inf
    i = 0
    while i < len(ordered):
        group_cost = _metric(ordered[i], cost_metric)
        j = i
        while j < len(ordered) and _metric(ordered[j], cost_metric) == group_cost:
            j += 1
        top = ordered[i].accuracy
        if top > best_lower:
            front.extend(r for r in ordered[i:j] if r.accuracy == top)
            best_lower = top
        i = j
    return sorted(front, key=lambda r: r.episode)


def best_so_far(history: Sequence[EvalRecord]) -> List[float]:
    curve, best = [], -math.inf
    for record in history:
        best = max(best, record.reward)
        curve.append(best)
    return curve


def best_record(history: Sequence[EvalRecord]) -> Optional[EvalRecord]:
    """Highest reward; ties go to the earliest episode."""
    best = None
    for record in history:
        if best is None or record.reward > best.reward:
            best = record
    return best


def within_target(reward: float, target: float, tolerance: float) -> bool:
    return reward >= target - tolerance * abs(target)


def episodes_to_target(history: Sequence[EvalRecord], target: float, tolerance: float) -> Optional[int]:
    """Number of episodes until a reward within `tolerance` (relative) of target; None if never."""
    for count, record in enumerate(history, start=1):
        if within_target(record.reward, target, tolerance):
            return count
    return None


def summarize(history: Sequence[EvalRecord], spec: RewardSpec) -> Dict:
    best = best_record(history)
    return {
        "episodes": len(history),
        "reward": spec.to_dict(),
        "best": best.to_dict() if best else None,
        "best_so_far": best_so_far(history),
        "invalid": sum(1 for r in history if not r.cost.valid),
        "fallbacks": sum(1 for r in history if r.fallback),
        "cached": sum(1 for r in history if r.cached),
        "pareto_energy": [r.episode for r in pareto_front(history, "energy")],
        "pareto_latency": [r.episode for r in pareto_front(history, "latency")],
    }


@dataclass(frozen=True)
class ExhaustiveResult:
    best: Rollout
    best_reward: float
    table: Tuple[Tuple[Rollout, float, float, CostReport], ...] = field(repr=False)

    def top(self, count: int):
        """Best `count` entries, highest reward first (earliest enumeration order on ties)."""
        ranked = sorted(range(len(self.table)), key=lambda i: (-self.table[i][1], i))
        return [self.table[i] for i in ranked[:count]]


def exhaustive_optimum(space: DesignSpace, spec: RewardSpec, evaluator=None, seed: int = 0,
                       cost_model: Optional[CostModel] = None, cap: int = ENUMERATION_CAP) -> ExhaustiveResult:
    """
    Score every rollout of the space.

    Raises:
        EnumerationCapError: if the space exceeds `cap`
    """
    evaluator = evaluator or SurrogateEvaluator(space.backbone)
    cost_model = cost_model or CostModel(space)
    table = []
    best_index = None
    for rollout in enumerate_rollouts(space, cap):
        accuracy = evaluator.accuracy(rollout, seed)
        report = cost_model(rollout)
        reward = score(accuracy, report, spec)
        table.append((rollout, reward, accuracy, report))
        if best_index is None or reward > table[best_index][1]:
            best_index = len(table) - 1
    logger.info(f"Enumerated {len(table)} rollouts; optimum reward {table[best_index][1]:.4f}")
    return ExhaustiveResult(table[best_index][0], table[best_index][1], tuple(table))


def coldstart_bench(space: DesignSpace, spec: RewardSpec,
                    optimizer_factories: Dict[str, Callable[[int], object]],
                    seeds: int = COLDSTART_SEEDS, max_episodes: int = COLDSTART_MAX_EPISODES,
                    tolerance: float = COLDSTART_TOLERANCE, evaluator=None,
                    cost_model: Optional[CostModel] = None) -> Dict:
    """
    Episodes each optimizer needs to get within `tolerance` of the exhaustive optimum.

    Every optimizer runs once per seed; runs that never reach the target are
    counted as max_episodes + 1.
    """
    evaluator = evaluator or SurrogateEvaluator(space.backbone)
    cost_model = cost_model or CostModel(space)
    optimum = exhaustive_optimum(space, spec, evaluator, cost_model=cost_model)
    target = optimum.best_reward

    def reached(history):
        return within_target(history[-1].reward, target, tolerance)

    results = {}
    for name, factory in optimizer_factories.items():
        counts = []
        for seed in range(seeds):
            history = run_search(space, factory(seed), spec, max_episodes, seed, evaluator,
                                 cost_model=cost_model, stop_when=reached)
            hit = episodes_to_target(history, target, tolerance)
            counts.append(hit if hit is not None else max_episodes + 1)
        results[name] = {"episodes": counts, "median": float(np.median(counts))}
        logger.info(f"Cold start {name}: median {results[name]['median']} episodes over {seeds} seeds")

    report = {
        "space_size": len(optimum.table),
        "optimum": {"rollout": optimum.best.to_dict(), "reward": target},
        "tolerance": tolerance,
        "max_episodes": max_episodes,
        "optimizers": results,
    }
    if "heuristic_oracle" in results and "random" in results and results["heuristic_oracle"]["median"] > 0:
        report["speedup"] = results["random"]["median"] / results["heuristic_oracle"]["median"]
    return report


def compare_histories(runs: Dict[str, Sequence[Sequence[EvalRecord]]]) -> Dict:
    """
    Best-so-far reward per optimizer across its runs.

    A run shorter than the optimizer's longest is padded with its final
    best-so-far value, so `mean` and `std` span the longest run. `best` is the
    highest-reward record over all runs (earlier runs win ties).

    Raises:
        ValueError: if an optimizer has no non-empty run
    """
    report = {}
    for name, histories in runs.items():
        histories = [h for h in histories if h]
        if not histories:
            raise ValueError(f"{name} has no non-empty run to compare")
        curves = [best_so_far(h) for h in histories]
        length = max(len(c) for c in curves)
        matrix = np.array([c + [c[-1]] * (length - len(c)) for c in curves])
        best = best_record([best_record(h) for h in histories])
        report[name] = {
            "runs": len(curves),
            "best_so_far": curves,
            "mean": matrix.mean(axis=0).tolist(),
            "std": matrix.std(axis=0).tolist(),
            "final": matrix[:, -1].tolist(),
            "best": best.to_dict(),
        }
    return report


def compare_optimizers(space: DesignSpace, spec: RewardSpec,
                       optimizer_factories: Dict[str, Callable[[int], object]],
                       seeds: int = COMPARE_SEEDS, episodes: int = DEFAULT_EPISODES, evaluator=None,
                       cost_model: Optional[CostModel] = None,
                       recorded: Optional[Dict[str, Sequence[Sequence[EvalRecord]]]] = None) -> Dict:
    """
    Run every optimizer for `episodes` episodes on seeds 0..seeds-1 and
    compare their best-so-far curves. Recorded runs (for example LLM
    searches loaded from history files) join the comparison under their own
    names.
    """
    if seeds < 1:
        raise ValueError(f"seeds must be at least 1, got {seeds}")
    evaluator = evaluator or SurrogateEvaluator(space.backbone)
    cost_model = cost_model or CostModel(space)
    runs: Dict[str, List[Sequence[EvalRecord]]] = {name: list(h) for name, h in (recorded or {}).items()}
    for name, factory in optimizer_factories.items():
        runs.setdefault(name, []).extend(
            run_search(space, factory(seed), spec, episodes, seed, evaluator, cost_model=cost_model)
            for seed in range(seeds))
        logger.info(f"Compared {name} over {seeds} seeds")
    return {
        "episodes": episodes,
        "seeds": seeds,
        "reward": spec.to_dict(),
        "optimizers": compare_histories(runs),
    }
