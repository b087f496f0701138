"""
Optimizers Module for LCDA.
Proposers that suggest the next rollout from the search history: the LLM
co-design optimizer (full and naive prompts) and the random, evolutionary
and heuristic-oracle baselines.
"""

from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple

import numpy as np

from config import (
    LLM_MAX_TOKENS,
    LLM_MODEL,
    LLM_TEMPERATURE,
    MAX_PROPOSAL_ATTEMPTS,
    PROMPT_HISTORY_CAP,
    TOURNAMENT_SIZE,
)
from design_space import (
    DesignSpace,
    HardwareParams,
    Rollout,
    admissible,
    heuristic_lints,
    random_rollout,
    render_rollout,
    unavoidable_stem_flags,
)
from errors import ParseError
from llm_client import LlmRequest
from logger import get_logger
from prompt_engine import (
    FULL_TEMPLATE,
    NAIVE_TEMPLATE,
    PromptContext,
    build_naive_prompt,
    build_prompt,
    clip_performance,
    correction_text,
    parse_response,
)
from search import best_record

logger = get_logger(__name__)

OPTIMIZER_NAMES = ("llm_full", "llm_naive", "random", "evolutionary", "heuristic_oracle")
RESTART_TRIES = 200


@dataclass(frozen=True)
class Proposal:
    rollout: Rollout
    fallback: bool = False
    lints: Tuple[str, ...] = ()
    attempts: int = 1


def episode_rng(seed: int, episode: int) -> np.random.Generator:
    """Per-episode stream, so a proposal depends only on seed, episode and history."""
    return np.random.default_rng([seed, episode])


class RandomOptimizer:
    """Uniform over the option lists, with replacement."""
    name = "random"

    def __init__(self, space: DesignSpace, seed: int = 0):
        self.space = space
        self.seed = seed

    def propose(self, history: Sequence, episode: int) -> Proposal:
        return Proposal(random_rollout(self.space, episode_rng(self.seed, episode)))


def _slots(space: DesignSpace) -> List[Tuple[str, int, Tuple[int, ...]]]:
    """Every independently choosable value: (field, layer index, options)."""
    slots = []
    for index, choice in enumerate(space.layer_choices):
        slots.append(("channels", index, choice.channel_options))
        slots.append(("kernel", index, choice.kernel_options))
    hw = space.hardware
    slots.append(("crossbar_size", -1, hw.crossbar_sizes))
    slots.append(("adc_resolution", -1, hw.adc_resolutions))
    slots.append(("device_precision", -1, hw.device_precisions))
    return slots


def _with_slot(rollout: Rollout, slot: str, index: int, value: int) -> Rollout:
    if slot == "channels":
        layers = list(rollout.layers)
        layers[index] = (value, layers[index][1])
        return Rollout(tuple(layers), rollout.hardware)
    if slot == "kernel":
        layers = list(rollout.layers)
        layers[index] = (layers[index][0], value)
        return Rollout(tuple(layers), rollout.hardware)
    values = {"crossbar_size": rollout.hardware.crossbar_size,
              "adc_resolution": rollout.hardware.adc_resolution,
              "device_precision": rollout.hardware.device_precision}
    values[slot] = value
    return Rollout(rollout.layers, HardwareParams(**values))


def neighbours(rollout: Rollout, space: DesignSpace) -> List[Rollout]:
    """Rollouts that differ from `rollout` in exactly one slot, in slot order."""
    result = []
    for slot, index, options in _slots(space):
        current = rollout.layers[index][0 if slot == "channels" else 1] if index >= 0 else \
            getattr(rollout.hardware, slot)
        result.extend(_with_slot(rollout, slot, index, v) for v in options if v != current)
    return result


class EvolutionaryOptimizer:
    """
    Tournament selection: draw `tournament_size` valid records with replacement
    and mutate one slot of the best of them.
    Falls back to random sampling until a valid record exists.
    """
    name = "evolutionary"

    def __init__(self, space: DesignSpace, seed: int = 0, tournament_size: int = TOURNAMENT_SIZE):
        if tournament_size < 1:
            raise ValueError(f"tournament_size must be at least 1, got {tournament_size}")
        self.space = space
        self.seed = seed
        self.tournament_size = tournament_size

    def propose(self, history: Sequence, episode: int) -> Proposal:
        rng = episode_rng(self.seed, episode)
        valid = [r for r in history if r.cost.valid]
        if not valid:
            return Proposal(random_rollout(self.space, rng))

        entrants = [valid[i] for i in rng.integers(len(valid), size=self.tournament_size)]
        parent = min(entrants, key=lambda r: (-r.reward, r.episode)).rollout
        mutable = [s for s in _slots(self.space) if len(s[2]) > 1]
        if not mutable:
            return Proposal(parent)
        slot, index, options = mutable[int(rng.integers(len(mutable)))]
        current = parent.layers[index][0 if slot == "channels" else 1] if index >= 0 else \
            getattr(parent.hardware, slot)
        choices = [v for v in options if v != current]
        return Proposal(_with_slot(parent, slot, index, choices[int(rng.integers(len(choices)))]))


class HeuristicOracleOptimizer:
    """
    Proposes only rollouts a careful designer would: channels never shrink,
    widen at most 4x per layer and kernels change gradually.

    Cold starts from a random admissible design, then hill-climbs: the next
    proposal is an unvisited admissible neighbour of the best record so far.
    When the best record has no such neighbour left it restarts from a fresh
    admissible design.
    """
    name = "heuristic_oracle"

    def __init__(self, space: DesignSpace, seed: int = 0):
        self.space = space
        self.seed = seed
        self._stem = unavoidable_stem_flags(space)

    def _layer_ok(self, layers: List[Tuple[int, int]]) -> bool:
        partial = Rollout(tuple(layers), HardwareParams(1, 1, 1))
        for flag in heuristic_lints(partial, self.space.backbone.input_channels):
            if flag.layer == len(layers) - 1 and not (flag.layer == 0 and flag.kind in self._stem):
                return False
        return True

    def sample_admissible(self, rng: np.random.Generator) -> Optional[Rollout]:
        """Build a rollout layer by layer from options that keep it lint clean."""
        layers: List[Tuple[int, int]] = []
        for choice in self.space.layer_choices:
            options = [p for p in choice.pairs if self._layer_ok(layers + [p])]
            if not options:
                return None
            layers.append(options[int(rng.integers(len(options)))])
        hw = random_rollout(self.space, rng).hardware
        return Rollout(tuple(layers), hw)

    def propose(self, history: Sequence, episode: int) -> Proposal:
        rng = episode_rng(self.seed, episode)
        visited = {r.rollout for r in history}

        best = best_record(history)
        if best is not None:
            candidates = [n for n in neighbours(best.rollout, self.space)
                          if n not in visited and admissible(n, self.space)]
            if candidates:
                return Proposal(candidates[int(rng.integers(len(candidates)))])

        fallback = None
        for _ in range(RESTART_TRIES):
            rollout = self.sample_admissible(rng)
            if rollout is None:
                continue
            if rollout not in visited:
                return Proposal(rollout)
            fallback = fallback or rollout
        if fallback is not None:
            logger.debug("No unvisited admissible design found; revisiting one")
            return Proposal(fallback)
        logger.warning("No admissible design could be built; proposing a random rollout")
        return Proposal(random_rollout(self.space, rng), fallback=True)


class LlmOptimizer:
    """
    Asks a chat model for the next rollout.

    The prompt carries every explored design with its clipped reward. A reply
    that does not parse is answered with a correction sentence appended to the
    same user message; after `max_attempts` failures the episode falls back to
    a random rollout and is marked as such.
    """

    def __init__(self, space: DesignSpace, client, naive: bool = False, seed: int = 0,
                 model_id: str = LLM_MODEL, temperature: float = LLM_TEMPERATURE,
                 max_tokens: int = LLM_MAX_TOKENS, history_cap: int = PROMPT_HISTORY_CAP,
                 max_attempts: int = MAX_PROPOSAL_ATTEMPTS):
        self.space = space
        self.client = client
        self.naive = naive
        self.seed = seed
        self.model_id = model_id
        self.temperature = temperature
        self.max_tokens = max_tokens
        self.history_cap = history_cap
        self.max_attempts = max_attempts
        self.name = "llm_naive" if naive else "llm_full"

    def context(self, history: Sequence) -> PromptContext:
        return PromptContext(
            explored_designs=tuple(r.rollout for r in history),
            normalized_performance=tuple(clip_performance(r.reward) for r in history),
            space=self.space,
        )

    def propose(self, history: Sequence, episode: int) -> Proposal:
        ctx = self.context(history)
        prompt = build_naive_prompt(ctx, self.history_cap) if self.naive else build_prompt(ctx, self.history_cap)
        template = NAIVE_TEMPLATE if self.naive else FULL_TEMPLATE
        user = prompt.user_text
        logger.debug(f"Episode {episode} prompt:\n{user}")

        for attempt in range(1, self.max_attempts + 1):
            req = LlmRequest(self.model_id, (("system", prompt.system_text), ("user", user)),
                             self.temperature, self.max_tokens)
            reply = self.client.complete(req)
            try:
                parsed = parse_response(reply, self.space)
            except ParseError as e:
                logger.warning(f"Episode {episode}: unusable reply on attempt {attempt}: {e}")
                user = prompt.user_text + "\n\n" + correction_text(attempt, e.kind, self.space, template)
                continue
            lints = ("hardware_defaulted",) if parsed.hardware_defaulted else ()
            logger.debug(f"Episode {episode}: parsed {render_rollout(parsed.rollout)}")
            return Proposal(parsed.rollout, lints=lints, attempts=attempt)

        logger.warning(f"Episode {episode}: {self.max_attempts} unusable replies, falling back to a random rollout")
        rollout = random_rollout(self.space, episode_rng(self.seed, episode))
        return Proposal(rollout, fallback=True, attempts=self.max_attempts)
