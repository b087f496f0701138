"""
Prompt Engine Module for LCDA.
Renders co-design prompts from the search history and parses LLM replies
back into rollouts. Template text lives in prompts/*.json.
"""

import json
import math
import re
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, Optional, Sequence, Tuple, Union

from config import PERFORMANCE_CLIP, PROMPT_HISTORY_CAP, PROMPTS_DIR
from design_space import (
    Backbone,
    DesignSpace,
    HardwareParams,
    Rollout,
    render_rollout,
    validate,
)
from errors import ConfigError, ParseError
from logger import get_logger

logger = get_logger(__name__)

FULL_TEMPLATE = "lcda_full"
NAIVE_TEMPLATE = "lcda_naive"


class PromptTemplates:
    """
    Loads prompt templates from the prompts directory.
    One JSON file per template; the file stem is the template name.
    """

    def __init__(self, prompts_dir: Optional[Path] = None):
        self.prompts_dir = Path(prompts_dir) if prompts_dir else PROMPTS_DIR
        self.templates: Dict[str, Dict] = {}
        self._load_templates()

    def _load_templates(self):
        if not self.prompts_dir.exists():
            logger.warning(f"Prompts directory not found: {self.prompts_dir}")
            return

        for template_file in sorted(self.prompts_dir.glob("*.json")):
            try:
                with open(template_file, 'r', encoding='utf-8') as f:
                    self.templates[template_file.stem] = json.load(f)
                logger.debug(f"Loaded prompt template: {template_file.stem}")
            except (OSError, json.JSONDecodeError) as e:
                logger.error(f"Failed to load prompt template {template_file}: {e}")

    def get(self, name: str) -> Dict:
        """
        Get a template by name.

        Raises:
            ConfigError: if the template is not available
        """
        if name not in self.templates:
            raise ConfigError(f"Prompt template '{name}' not found. Available: {sorted(self.templates)}")
        return self.templates[name]


_templates: Optional[PromptTemplates] = None


def get_prompt_templates() -> PromptTemplates:
    """Get the global PromptTemplates instance."""
    global _templates
    if _templates is None:
        _templates = PromptTemplates()
    return _templates


# ---------------------------------------------------------------------------
# Context rendering
# ---------------------------------------------------------------------------

def _options(values: Sequence[int]) -> str:
    return "[" + ", ".join(str(v) for v in values) + "]"


def render_backbone(backbone: Backbone) -> str:
    height, width, channels = backbone.input_shape
    pools = ", ".join(str(i) for i in sorted(backbone.pool_after)) or "none"
    return (
        f"Input: {height}x{width} images with {channels} channels, {backbone.num_classes} classes.\n"
        f"{backbone.num_conv_layers} convolutional layers; layer i is Conv2d(out_channels=rollout[i][0], "
        f"kernel_size=rollout[i][1], stride=1, same padding) followed by ReLU; "
        f"2x2 max pooling after layers {pools}.\n"
        f"Flatten, then {backbone.num_fc_layers} fully connected layers "
        f"(hidden size {backbone.fc_hidden_size}) ending in {backbone.num_classes} outputs."
    )


def render_choices(space: DesignSpace) -> str:
    lines = [
        f"index {i}: [out_channels, kernel_size] with out_channels in {_options(c.channel_options)} "
        f"and kernel_size in {_options(c.kernel_options)}"
        for i, c in enumerate(space.layer_choices)
    ]
    hw = space.hardware
    lines.append(
        f"hardware: [crossbar_size, adc_resolution, device_precision] with crossbar_size in "
        f"{_options(hw.crossbar_sizes)}, adc_resolution in {_options(hw.adc_resolutions)} "
        f"and device_precision in {_options(hw.device_precisions)}"
    )
    return "\n" + "\n".join(lines)


def render_abstract_choices(space: DesignSpace) -> str:
    """Same option lists with every domain word stripped."""
    lines = [
        f"position {i}: [a, b] with a in {_options(c.channel_options)} and b in {_options(c.kernel_options)}"
        for i, c in enumerate(space.layer_choices)
    ]
    hw = space.hardware
    lines.append(
        f"final triple: [x, y, z] with x in {_options(hw.crossbar_sizes)}, "
        f"y in {_options(hw.adc_resolutions)} and z in {_options(hw.device_precisions)}"
    )
    return "\n" + "\n".join(lines)


def clip_performance(value: float) -> float:
    low, high = PERFORMANCE_CLIP
    return min(high, max(low, value))


def render_history(designs: Sequence[Rollout], performance: Sequence[float],
                   cap: int = PROMPT_HISTORY_CAP, omitted_note: str = "({omitted} earlier results omitted)") -> str:
    """
    One (rollout, performance) pair per line, oldest first.

    Only the newest `cap` entries are shown; the omitted count is noted above the list.
    """
    pairs = list(zip(designs, performance))
    omitted = max(0, len(pairs) - cap)
    pairs = pairs[omitted:]
    if not pairs:
        body = "[]"
    else:
        body = "[\n" + ",\n".join(f"({render_rollout(r)}, {p:.4f})" for r, p in pairs) + "\n]"
    if omitted:
        return omitted_note.format(omitted=omitted) + "\n" + body
    return body


def _example_layers(space: DesignSpace, template_example: Optional[str]) -> str:
    """Template example if it fits the layer count, otherwise one built from the options."""
    num_layers = space.backbone.num_conv_layers
    if template_example and template_example.count("],[") + 1 == num_layers:
        return template_example
    pairs = []
    for i, choice in enumerate(space.layer_choices):
        channels = choice.channel_options[(i * len(choice.channel_options)) // num_layers]
        kernels = choice.kernel_options
        kernel = 3 if 3 in kernels else kernels[len(kernels) // 2]
        pairs.append(f"[{channels},{kernel}]")
    return "[" + ",".join(pairs) + "]"


def _example_hardware(space: DesignSpace) -> str:
    hw = space.hardware
    triple = [opts[len(opts) // 2] for opts in (hw.crossbar_sizes, hw.adc_resolutions, hw.device_precisions)]
    return "[" + ",".join(str(v) for v in triple) + "]"


@dataclass(frozen=True)
class PromptContext:
    """Explored designs with their performance, plus the space they come from."""
    explored_designs: Tuple[Rollout, ...]
    normalized_performance: Tuple[float, ...]
    space: DesignSpace
    backbone_text: str = ""
    choices_text: str = ""

    def __post_init__(self):
        object.__setattr__(self, "explored_designs", tuple(self.explored_designs))
        object.__setattr__(self, "normalized_performance", tuple(float(p) for p in self.normalized_performance))
        if len(self.explored_designs) != len(self.normalized_performance):
            raise ValueError(f"{len(self.explored_designs)} designs but "
                             f"{len(self.normalized_performance)} performance values")
        low, high = PERFORMANCE_CLIP
        for p in self.normalized_performance:
            if not math.isfinite(p) or not low <= p <= high:
                raise ValueError(f"performance {p} outside [{low}, {high}]")
        if not self.backbone_text:
            object.__setattr__(self, "backbone_text", render_backbone(self.space.backbone))
        if not self.choices_text:
            object.__setattr__(self, "choices_text", render_choices(self.space))


@dataclass(frozen=True)
class PromptPair:
    system_text: str
    user_text: str

    def messages(self):
        return [("system", self.system_text), ("user", self.user_text)]


def _fields(template: Dict, ctx: PromptContext, cap: int, abstract: bool) -> Dict[str, object]:
    example = _example_layers(ctx.space, template.get("example"))
    return {
        "backbone": ctx.backbone_text,
        "choices": render_abstract_choices(ctx.space) if abstract else ctx.choices_text,
        "num_layers": ctx.space.backbone.num_conv_layers,
        "example": example,
        "example_with_hardware": example[:-1] + "," + _example_hardware(ctx.space) + "]",
        "history": render_history(ctx.explored_designs, ctx.normalized_performance, cap,
                                  template["history_omitted"]),
    }


def _build(template_name: str, ctx: PromptContext, cap: int, abstract: bool) -> PromptPair:
    template = get_prompt_templates().get(template_name)
    values = _fields(template, ctx, cap, abstract)
    user = "\n\n".join(paragraph.format(**values) for paragraph in template["user"])
    return PromptPair(template["system"], user)


def build_prompt(ctx: PromptContext, history_cap: int = PROMPT_HISTORY_CAP) -> PromptPair:
    """
    Render the full co-design prompt.

    Args:
        ctx: History and design space
        history_cap: Maximum number of history entries shown

    Returns:
        PromptPair; identical contexts give byte-identical prompts
    """
    return _build(FULL_TEMPLATE, ctx, history_cap, abstract=False)


def build_naive_prompt(ctx: PromptContext, history_cap: int = PROMPT_HISTORY_CAP) -> PromptPair:
    """Same history and format request with all co-design framing removed."""
    return _build(NAIVE_TEMPLATE, ctx, history_cap, abstract=True)


def correction_text(attempt: int, kind: str, space: DesignSpace, template_name: str = FULL_TEMPLATE) -> str:
    """Sentence appended to the user message when a reply could not be parsed."""
    template = get_prompt_templates().get(template_name)
    example = _example_layers(space, template.get("example"))
    return template["correction"].format(
        reason=template["reasons"].get(kind, kind),
        attempt=attempt,
        num_layers=space.backbone.num_conv_layers,
        example_with_hardware=example[:-1] + "," + _example_hardware(space) + "]",
    )


# ---------------------------------------------------------------------------
# Parsing
# ---------------------------------------------------------------------------

_LIST_START = re.compile(r"\[\s*\[")
_FRAGMENT_CHARS = 80


@dataclass(frozen=True)
class ParsedResponse:
    rollout: Rollout
    hardware_defaulted: bool = False


def _balanced_end(text: str, start: int) -> int:
    depth = 0
    for i in range(start, len(text)):
        ch = text[i]
        if ch == "[":
            depth += 1
        elif ch == "]":
            depth -= 1
            if depth == 0:
                return i
    return -1


def _is_int(value) -> bool:
    return isinstance(value, int) and not isinstance(value, bool)


def parse_response(text: Union[str, bytes], space: DesignSpace) -> ParsedResponse:
    """
    Extract the first bracketed list of number pairs from an LLM reply.

    Prose and code fences around the list are ignored. A trailing triple sets
    the hardware; without it the first option of each hardware list is used.

    Raises:
        ParseError: kind no_list, malformed or validation, carrying the offending substring
    """
    if isinstance(text, bytes):
        text = text.decode("utf-8", errors="replace")

    match = _LIST_START.search(text)
    if match is None:
        raise ParseError("no_list", "no bracketed list of pairs found", text[:_FRAGMENT_CHARS])

    start = match.start()
    end = _balanced_end(text, start)
    if end < 0:
        raise ParseError("malformed", "unbalanced brackets", text[start:start + _FRAGMENT_CHARS])
    fragment = text[start:end + 1]

    try:
        items = json.loads(fragment)
    except (ValueError, RecursionError):
        raise ParseError("malformed", "list is not valid JSON", fragment[:_FRAGMENT_CHARS])

    if not all(isinstance(item, list) and item and all(_is_int(v) for v in item) for item in items):
        raise ParseError("malformed", "every element must be a list of integers", fragment[:_FRAGMENT_CHARS])

    hardware_defaulted = True
    hw = space.hardware
    hardware = HardwareParams(hw.crossbar_sizes[0], hw.adc_resolutions[0], hw.device_precisions[0])
    if items and len(items[-1]) == 3:
        hardware = HardwareParams(*items[-1])
        hardware_defaulted = False
        items = items[:-1]

    bad = [item for item in items if len(item) != 2]
    if bad:
        raise ParseError("malformed", f"expected number pairs, got {bad[0]}", fragment[:_FRAGMENT_CHARS])

    rollout = Rollout(tuple(tuple(item) for item in items), hardware)
    result = validate(rollout, space)
    if not result.ok:
        raise ParseError("validation", "; ".join(str(v) for v in result.violations),
                         fragment[:_FRAGMENT_CHARS], result.violations)
    if hardware_defaulted:
        logger.debug("Reply carried no hardware triple; using the first option of each hardware list")
    return ParsedResponse(rollout, hardware_defaulted)
