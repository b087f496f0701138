"""
LCDA command line entry point.
Runs LLM-guided DNN / crossbar-accelerator co-design searches, replays
recorded searches, and exports the reports and plot data of a run.

Exit codes: 0 success, 2 configuration error, 3 runtime error,
4 replay divergence.
"""

import argparse
import json
import sys
from pathlib import Path
from typing import List, Optional

from config import (
    APP_NAME,
    APP_VERSION,
    COLDSTART_CONFIG_FILE,
    COLDSTART_FILE_NAME,
    COMPARE_FILE_NAME,
    COMPARE_SEEDS,
    CURVE_FILE_NAME,
    DEFAULT_CONFIG_FILE,
    ENUMERATION_FILE_NAME,
    HISTORY_FILE_NAME,
    PARETO_FILE_NAME,
    SUMMARY_FILE_NAME,
    TRANSCRIPT_FILE_NAME,
)
from datasets import load_image_batch, make_synthetic_split
from design_space import heuristic_lints, render_rollout
from dnn_eval import NoiseModel
from errors import ConfigError, HistoryError, LcdaError, ReplayDivergenceError
from history_store import write_json
from llm_client import ChatCompletionClient, ReplayClient, TranscriptWriter
from logger import get_logger
from optimizers import (
    OPTIMIZER_NAMES,
    EvolutionaryOptimizer,
    HeuristicOracleOptimizer,
    LlmOptimizer,
    RandomOptimizer,
)
from prompt_engine import parse_response
from run_config import RunConfig, apply_overrides, load_config
from search import (
    CostModel,
    EvalRecord,
    SurrogateEvaluator,
    TrainedEvaluator,
    best_so_far,
    coldstart_bench,
    compare_optimizers,
    exhaustive_optimum,
    load_history,
    pareto_front,
    run_search,
    score,
    summarize,
)

logger = get_logger(__name__)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_RUNTIME = 3
EXIT_REPLAY = 4

REFERENCE_ROLLOUT = "[[32,3],[32,3],[64,3],[64,3],[128,3],[128,3]]"


# ---------------------------------------------------------------------------
# Factories
# ---------------------------------------------------------------------------

def make_evaluator(config: RunConfig):
    backbone = config.backbone
    if config.evaluator == "surrogate":
        return SurrogateEvaluator(backbone, config.sigma)

    ds = config.dataset
    if ds.kind == "synthetic":
        train, test = make_synthetic_split(
            num_classes=ds.num_classes,
            image_size=ds.image_size,
            channels=backbone.input_channels,
            train_per_class=ds.train_per_class,
            test_per_class=ds.test_per_class,
            seed=config.seed,
            pixel_noise=ds.pixel_noise,
        )
    else:
        train = load_image_batch(Path(ds.train_path), backbone.input_shape, backbone.num_classes, ds.limit)
        test = load_image_batch(Path(ds.test_path), backbone.input_shape, backbone.num_classes, ds.limit)
    training = config.training
    return TrainedEvaluator(backbone, train, test, NoiseModel(config.sigma), training.epochs,
                            training.learning_rate, training.batch_size, training.mc_samples)


def make_cost_model(config: RunConfig) -> CostModel:
    hw = config.hardware
    return CostModel(config.space, hw.unit_costs, hw.weight_bits, adc_scaling=hw.adc_scaling)


def make_client(config: RunConfig, out_dir: Path, replay: Optional[Path], resume: bool = False):
    if replay is not None:
        logger.info(f"Replaying LLM responses from {replay}")
        return ReplayClient.from_file(replay)
    llm = config.llm
    writer = TranscriptWriter(out_dir / TRANSCRIPT_FILE_NAME, resume=resume)
    return ChatCompletionClient(llm.endpoint, llm.model, llm.max_retries, llm.backoff_seconds,
                                llm.timeout_seconds, writer=writer)


def make_optimizer(config: RunConfig, client=None, seed: Optional[int] = None):
    seed = config.seed if seed is None else seed
    name = config.optimizer
    if name in ("llm_full", "llm_naive"):
        if client is None:
            raise ConfigError(f"optimizer {name} needs an LLM client")
        llm = config.llm
        return LlmOptimizer(config.space, client, naive=name == "llm_naive", seed=seed, model_id=llm.model,
                            temperature=llm.temperature, max_tokens=llm.max_tokens,
                            history_cap=llm.history_cap, max_attempts=llm.max_attempts)
    if name == "random":
        return RandomOptimizer(config.space, seed)
    if name == "evolutionary":
        return EvolutionaryOptimizer(config.space, seed)
    return HeuristicOracleOptimizer(config.space, seed)


# ---------------------------------------------------------------------------
# Output
# ---------------------------------------------------------------------------

def _emit(data):
    print(json.dumps(data, sort_keys=True))


def write_reports(out_dir: Path, history: List[EvalRecord], config: RunConfig) -> dict:
    summary = summarize(history, config.reward)
    write_json(out_dir / SUMMARY_FILE_NAME, summary)
    write_json(out_dir / PARETO_FILE_NAME, {
        "energy": [r.to_dict() for r in pareto_front(history, "energy")],
        "latency": [r.to_dict() for r in pareto_front(history, "latency")],
    })
    write_json(out_dir / CURVE_FILE_NAME, [
        {"episode": r.episode, "reward": r.reward, "best_so_far": best}
        for r, best in zip(history, best_so_far(history))
    ])
    return summary


def _search(config: RunConfig, out_dir: Path, replay: Optional[Path], resume: bool) -> List[EvalRecord]:
    client = None
    if config.optimizer.startswith("llm_"):
        client = make_client(config, out_dir, replay, resume)
    history = run_search(
        config.space,
        make_optimizer(config, client),
        config.reward,
        config.episodes,
        config.seed,
        make_evaluator(config),
        cost_model=make_cost_model(config),
        history_path=out_dir / HISTORY_FILE_NAME,
        resume=resume,
    )
    if isinstance(client, ReplayClient) and not client.exhausted:
        logger.warning(f"Replay finished with {len(client.transcript) - client.position} unused transcript entries")
    return history


# ---------------------------------------------------------------------------
# Subcommands
# ---------------------------------------------------------------------------

def cmd_search(args, config: RunConfig) -> int:
    out_dir = Path(config.output_dir)
    replay = Path(args.replay) if args.replay else None
    history = _search(config, out_dir, replay, args.resume)
    summary = write_reports(out_dir, history, config)
    _emit({"episodes": summary["episodes"], "best": summary["best"]["rollout"] if summary["best"] else None,
           "best_reward": summary["best"]["reward"] if summary["best"] else None, "output_dir": str(out_dir)})
    return EXIT_OK


def cmd_replay(args, config: RunConfig) -> int:
    transcript = args.replay or config.transcript_path
    if not transcript:
        raise ConfigError("replay needs --replay <transcript> or transcript_path in the config")
    if not config.optimizer.startswith("llm_"):
        raise ConfigError(f"replay needs an LLM optimizer, config selects {config.optimizer!r}")
    out_dir = Path(config.output_dir)

    expected = None
    if args.expect:
        expect_path = Path(args.expect)
        if expect_path.resolve() == (out_dir / HISTORY_FILE_NAME).resolve():
            raise ConfigError(f"replay would overwrite {expect_path}; pass an --out other than its directory")
        try:
            expected = expect_path.read_bytes()
        except OSError as e:
            raise ConfigError(f"Cannot read expected history {expect_path}: {e}")

    history = _search(config, out_dir, Path(transcript), resume=False)
    write_reports(out_dir, history, config)

    if expected is not None:
        produced = (out_dir / HISTORY_FILE_NAME).read_bytes()
        if produced != expected:
            line = _first_difference(produced, expected)
            _error(f"replayed history differs from {args.expect} at line {line}", "HistoryMismatch")
            return EXIT_REPLAY
    _emit({"episodes": len(history), "identical": True if expected is not None else None,
           "output_dir": str(out_dir)})
    return EXIT_OK


def _first_difference(a: bytes, b: bytes) -> int:
    """1-based number of the first line where two files differ."""
    a_lines, b_lines = a.split(b"\n"), b.split(b"\n")
    for number, (x, y) in enumerate(zip(a_lines, b_lines), start=1):
        if x != y:
            return number
    return min(len(a_lines), len(b_lines)) + 1


def cmd_pareto(args, config: RunConfig) -> int:
    history_path = Path(args.history) if args.history else Path(config.output_dir) / HISTORY_FILE_NAME
    history = load_history(history_path)
    front = pareto_front(history, args.metric, include_invalid=args.include_invalid)
    data = {"metric": args.metric, "front": [r.to_dict() for r in front]}
    out = Path(args.out) if args.out else history_path.parent
    write_json(out / PARETO_FILE_NAME, data)
    _emit({"metric": args.metric, "episodes": [r.episode for r in front],
           "points": [[r.accuracy, getattr(r.cost, args.metric)] for r in front]})
    return EXIT_OK


def cmd_evaluate(args, config: RunConfig) -> int:
    parsed = parse_response(args.rollout, config.space)
    rollout = parsed.rollout
    accuracy = make_evaluator(config).accuracy(rollout, config.seed)
    report = make_cost_model(config)(rollout)
    lints = [f.kind for f in heuristic_lints(rollout, config.backbone.input_channels)]
    if parsed.hardware_defaulted:
        lints.append("hardware_defaulted")
    _emit({
        "rollout": render_rollout(rollout),
        "accuracy": accuracy,
        "energy": report.energy,
        "latency": report.latency,
        "area": report.area,
        "valid": report.valid,
        "reward": score(accuracy, report, config.reward),
        "lints": lints,
    })
    return EXIT_OK


def cmd_enumerate(args, config: RunConfig) -> int:
    result = exhaustive_optimum(config.space, config.reward, make_evaluator(config), config.seed,
                                make_cost_model(config))
    top = [{"rollout": render_rollout(r), "reward": reward, "accuracy": acc, "energy": rep.energy,
            "latency": rep.latency, "area": rep.area, "valid": rep.valid}
           for r, reward, acc, rep in result.top(args.top)]
    out_dir = Path(config.output_dir)
    write_json(out_dir / ENUMERATION_FILE_NAME, {"space_size": len(result.table), "top": top})
    _emit({"space_size": len(result.table), "optimum": render_rollout(result.best),
           "optimum_reward": result.best_reward})
    return EXIT_OK


def cmd_coldstart(args, config: RunConfig) -> int:
    cs = config.coldstart
    factories = {
        "heuristic_oracle": lambda seed: HeuristicOracleOptimizer(config.space, seed),
        "random": lambda seed: RandomOptimizer(config.space, seed),
    }
    report = coldstart_bench(config.space, config.reward, factories, cs.seeds, cs.max_episodes,
                             cs.tolerance, make_evaluator(config), make_cost_model(config))
    write_json(Path(config.output_dir) / COLDSTART_FILE_NAME, report)
    medians = {name: r["median"] for name, r in report["optimizers"].items()}
    _emit({"medians": medians, "speedup": report.get("speedup")})
    return EXIT_OK


def _recorded_runs(entries: List[str]) -> dict:
    runs = {}
    for entry in entries:
        name, sep, path = entry.partition("=")
        if not sep or not name or not path:
            raise ConfigError(f"--history expects NAME=PATH, got {entry!r}")
        history = load_history(Path(path))
        if not history:
            raise HistoryError(f"{path} holds no records")
        runs.setdefault(name, []).append(history)
    return runs


def cmd_compare(args, config: RunConfig) -> int:
    names = [n for n in args.optimizers.split(",") if n] if args.optimizers is not None else \
        [n for n in OPTIMIZER_NAMES if not n.startswith("llm_")]
    for name in names:
        if name not in OPTIMIZER_NAMES or name.startswith("llm_"):
            raise ConfigError(f"compare runs the offline optimizers only, got {name!r}; "
                              f"add recorded LLM runs with --history NAME=PATH")
    if args.seeds < 1:
        raise ConfigError(f"--seeds must be at least 1, got {args.seeds}")
    recorded = _recorded_runs(args.history or [])
    if not names and not recorded:
        raise ConfigError("nothing to compare: name optimizers or pass --history NAME=PATH")

    factories = {name: (lambda seed, name=name: make_optimizer(apply_overrides(config, optimizer=name), seed=seed))
                 for name in names}
    report = compare_optimizers(config.space, config.reward, factories, args.seeds, config.episodes,
                                make_evaluator(config), make_cost_model(config), recorded)
    write_json(Path(config.output_dir) / COMPARE_FILE_NAME, report)
    _emit({"final_mean": {name: r["mean"][-1] for name, r in report["optimizers"].items()},
           "output_dir": str(config.output_dir)})
    return EXIT_OK


COMMANDS = {
    "search": cmd_search,
    "replay": cmd_replay,
    "pareto": cmd_pareto,
    "evaluate": cmd_evaluate,
    "enumerate": cmd_enumerate,
    "coldstart-bench": cmd_coldstart,
    "compare": cmd_compare,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog=APP_NAME, description="LLM-guided DNN and crossbar accelerator co-design")
    parser.add_argument("--version", action="version", version=f"%(prog)s {APP_VERSION}")
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help=f"run configuration JSON (default {DEFAULT_CONFIG_FILE.name})")
    common.add_argument("--out", help="output directory")
    common.add_argument("--seed", type=int)
    common.add_argument("--episodes", type=int)
    common.add_argument("--optimizer")

    sub = parser.add_subparsers(dest="command", required=True)
    search = sub.add_parser("search", parents=[common], help="run a co-design search")
    search.add_argument("--replay", help="serve LLM responses from this transcript")
    search.add_argument("--resume", action="store_true", help="continue an interrupted run in --out")

    replay = sub.add_parser("replay", parents=[common], help="re-run a search from its transcript")
    replay.add_argument("--replay", help="transcript to replay (defaults to transcript_path)")
    replay.add_argument("--expect", help="history file the replay must reproduce byte for byte")

    pareto = sub.add_parser("pareto", parents=[common], help="export the Pareto front of a history")
    pareto.add_argument("--history", help="history file (default <out>/history.jsonl)")
    pareto.add_argument("--metric", choices=("energy", "latency", "area"), default="energy")
    pareto.add_argument("--include-invalid", action="store_true")

    evaluate = sub.add_parser("evaluate", parents=[common], help="score one rollout")
    evaluate.add_argument("--rollout", default=REFERENCE_ROLLOUT, help="rollout list, optional trailing hardware triple")

    enumerate_ = sub.add_parser("enumerate", parents=[common], help="score every rollout of a small space")
    enumerate_.add_argument("--top", type=int, default=10)

    sub.add_parser("coldstart-bench", parents=[common], help="episodes-to-optimum: heuristic oracle vs random")

    compare = sub.add_parser("compare", parents=[common], help="best-so-far curves of optimizers across seeds")
    compare.add_argument("--optimizers", help="comma-separated offline optimizers (default: all of them)")
    compare.add_argument("--seeds", type=int, default=COMPARE_SEEDS)
    compare.add_argument("--history", action="append", metavar="NAME=PATH", help="add a recorded run; repeatable")
    return parser


def _error(message: str, kind: str):
    print(json.dumps({"error": kind, "message": message}), file=sys.stderr)


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        default = COLDSTART_CONFIG_FILE if args.command == "coldstart-bench" else DEFAULT_CONFIG_FILE
        config = load_config(Path(args.config) if args.config else default)
        config = apply_overrides(config, seed=args.seed, episodes=args.episodes,
                                 optimizer=args.optimizer, output_dir=args.out)
        return COMMANDS[args.command](args, config)
    except ConfigError as e:
        _error(str(e), type(e).__name__)
        return EXIT_CONFIG
    except ReplayDivergenceError as e:
        _error(str(e), type(e).__name__)
        return EXIT_REPLAY
    except LcdaError as e:
        _error(str(e), type(e).__name__)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
