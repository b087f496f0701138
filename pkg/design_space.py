"""
Design Space Module for LCDA.
Defines the searchable DNN + hardware space, validates candidate rollouts,
enumerates small spaces exhaustively and lints rollouts against the
channel/kernel heuristics a human designer would apply.
"""

import itertools
import math
from dataclasses import dataclass, field
from typing import Dict, FrozenSet, Iterator, List, Optional, Sequence, Tuple

from config import (
    CHANNEL_GROWTH_LIMIT,
    DEFAULT_ADC_RESOLUTIONS,
    DEFAULT_CHANNEL_OPTIONS,
    DEFAULT_CROSSBAR_SIZES,
    DEFAULT_DEVICE_PRECISIONS,
    DEFAULT_FC_HIDDEN_SIZE,
    DEFAULT_INPUT_SHAPE,
    DEFAULT_KERNEL_OPTIONS,
    DEFAULT_NUM_CLASSES,
    DEFAULT_NUM_CONV_LAYERS,
    DEFAULT_NUM_FC_LAYERS,
    DEFAULT_POOL_AFTER,
    ENUMERATION_CAP,
    KERNEL_JUMP_LIMIT,
)
from errors import DesignSpaceError, EnumerationCapError

LayerPair = Tuple[int, int]


def _check_options(name: str, values: Sequence[int]) -> Tuple[int, ...]:
    values = tuple(values)
    if not values:
        raise DesignSpaceError(f"{name} must not be empty")
    for v in values:
        if isinstance(v, bool) or not isinstance(v, int) or v < 1:
            raise DesignSpaceError(f"{name} must hold positive integers, got {v!r}")
    if any(b <= a for a, b in zip(values, values[1:])):
        raise DesignSpaceError(f"{name} must be strictly increasing, got {list(values)}")
    return values


@dataclass(frozen=True)
class LayerChoice:
    """Channel and kernel options for one rollout slot."""
    channel_options: Tuple[int, ...]
    kernel_options: Tuple[int, ...]

    def __post_init__(self):
        object.__setattr__(self, "channel_options", _check_options("channel_options", self.channel_options))
        kernels = _check_options("kernel_options", self.kernel_options)
        even = [k for k in kernels if k % 2 == 0]
        if even:
            raise DesignSpaceError(f"kernel_options must be odd, got {even}")
        object.__setattr__(self, "kernel_options", kernels)

    @property
    def pairs(self) -> List[LayerPair]:
        return [(c, k) for c in self.channel_options for k in self.kernel_options]


@dataclass(frozen=True)
class HardwareChoice:
    """Hardware hyperparameter options shared by every layer."""
    crossbar_sizes: Tuple[int, ...]
    adc_resolutions: Tuple[int, ...]
    device_precisions: Tuple[int, ...]
    area_budget: Optional[float] = None

    def __post_init__(self):
        object.__setattr__(self, "crossbar_sizes", _check_options("crossbar_sizes", self.crossbar_sizes))
        object.__setattr__(self, "adc_resolutions", _check_options("adc_resolutions", self.adc_resolutions))
        object.__setattr__(self, "device_precisions",
                           _check_options("device_precisions", self.device_precisions))
        if self.area_budget is not None and not self.area_budget > 0:
            raise DesignSpaceError(f"area_budget must be positive, got {self.area_budget}")

    @property
    def combos(self) -> List["HardwareParams"]:
        return [HardwareParams(r, a, p) for r, a, p in
                itertools.product(self.crossbar_sizes, self.adc_resolutions, self.device_precisions)]


@dataclass(frozen=True)
class HardwareParams:
    """Selected hardware values of one rollout."""
    crossbar_size: int
    adc_resolution: int
    device_precision: int

    def as_list(self) -> List[int]:
        return [self.crossbar_size, self.adc_resolution, self.device_precision]


@dataclass(frozen=True)
class Backbone:
    """Fixed network skeleton the rollout fills in."""
    num_conv_layers: int = DEFAULT_NUM_CONV_LAYERS
    num_fc_layers: int = DEFAULT_NUM_FC_LAYERS
    fc_hidden_size: int = DEFAULT_FC_HIDDEN_SIZE
    input_shape: Tuple[int, int, int] = DEFAULT_INPUT_SHAPE
    num_classes: int = DEFAULT_NUM_CLASSES
    pool_after: FrozenSet[int] = field(default_factory=lambda: frozenset(DEFAULT_POOL_AFTER))

    def __post_init__(self):
        object.__setattr__(self, "input_shape", tuple(self.input_shape))
        object.__setattr__(self, "pool_after", frozenset(self.pool_after))
        for name in ("num_conv_layers", "num_fc_layers", "fc_hidden_size", "num_classes"):
            value = getattr(self, name)
            if isinstance(value, bool) or not isinstance(value, int) or value < 1:
                raise DesignSpaceError(f"{name} must be a positive integer, got {value!r}")
        if len(self.input_shape) != 3 or any(int(v) < 1 for v in self.input_shape):
            raise DesignSpaceError(f"input_shape must be (height, width, channels), got {self.input_shape}")
        bad = sorted(i for i in self.pool_after if not 0 <= i < self.num_conv_layers)
        if bad:
            raise DesignSpaceError(f"pool_after indices out of range: {bad}")
        height, width = self.final_spatial
        if height < 1 or width < 1:
            raise DesignSpaceError(
                f"Spatial size collapses to {height}x{width} after {len(self.pool_after)} poolings")

    @property
    def input_channels(self) -> int:
        return self.input_shape[2]

    def spatial_before(self, layer: int) -> Tuple[int, int]:
        """Input height/width seen by conv layer `layer` (stride 1, same padding)."""
        height, width = self.input_shape[0], self.input_shape[1]
        for i in range(layer):
            if i in self.pool_after:
                height, width = height // 2, width // 2
        return height, width

    @property
    def final_spatial(self) -> Tuple[int, int]:
        return self.spatial_before(self.num_conv_layers)

    def fc_sizes(self, last_channels: int) -> List[Tuple[int, int]]:
        """(in, out) of each fully connected layer for a given last conv width."""
        height, width = self.final_spatial
        sizes = []
        fan_in = height * width * last_channels
        for _ in range(self.num_fc_layers - 1):
            sizes.append((fan_in, self.fc_hidden_size))
            fan_in = self.fc_hidden_size
        sizes.append((fan_in, self.num_classes))
        return sizes


@dataclass(frozen=True)
class Rollout:
    """One candidate design: per-layer (out_channels, kernel) plus hardware."""
    layers: Tuple[LayerPair, ...]
    hardware: HardwareParams

    def __post_init__(self):
        object.__setattr__(self, "layers", tuple((int(c), int(k)) for c, k in self.layers))

    def to_dict(self) -> Dict:
        return {"layers": [list(p) for p in self.layers], "hardware": self.hardware.as_list()}

    @classmethod
    def from_dict(cls, data: Dict) -> "Rollout":
        return cls(tuple(tuple(p) for p in data["layers"]), HardwareParams(*data["hardware"]))


@dataclass(frozen=True)
class DesignSpace:
    """Per-slot layer choices, hardware choices and the backbone they fill."""
    layer_choices: Tuple[LayerChoice, ...]
    hardware: HardwareChoice
    backbone: Backbone

    def __post_init__(self):
        object.__setattr__(self, "layer_choices", tuple(self.layer_choices))
        if len(self.layer_choices) != self.backbone.num_conv_layers:
            raise DesignSpaceError(
                f"{len(self.layer_choices)} layer choices for a {self.backbone.num_conv_layers}-layer backbone")

    def to_dict(self) -> Dict:
        return {
            "layers": [{"channels": list(lc.channel_options), "kernels": list(lc.kernel_options)}
                       for lc in self.layer_choices],
            "hardware": {
                "crossbar_sizes": list(self.hardware.crossbar_sizes),
                "adc_resolutions": list(self.hardware.adc_resolutions),
                "device_precisions": list(self.hardware.device_precisions),
            },
            "backbone": backbone_to_dict(self.backbone),
        }

    @classmethod
    def from_dict(cls, data: Dict, area_budget: Optional[float] = None) -> "DesignSpace":
        backbone = backbone_from_dict(data.get("backbone", {}))
        layers = data["layers"]
        if isinstance(layers, dict):
            layers = [layers] * backbone.num_conv_layers
        hw = data["hardware"]
        return cls(
            layer_choices=tuple(LayerChoice(tuple(l["channels"]), tuple(l["kernels"])) for l in layers),
            hardware=HardwareChoice(tuple(hw["crossbar_sizes"]), tuple(hw["adc_resolutions"]),
                                    tuple(hw["device_precisions"]), area_budget),
            backbone=backbone,
        )


def backbone_to_dict(backbone: Backbone) -> Dict:
    return {
        "num_conv_layers": backbone.num_conv_layers,
        "num_fc_layers": backbone.num_fc_layers,
        "fc_hidden_size": backbone.fc_hidden_size,
        "input_shape": list(backbone.input_shape),
        "num_classes": backbone.num_classes,
        "pool_after": sorted(backbone.pool_after),
    }


def backbone_from_dict(data: Dict) -> Backbone:
    defaults = backbone_to_dict(Backbone())
    merged = {**defaults, **data}
    return Backbone(
        num_conv_layers=merged["num_conv_layers"],
        num_fc_layers=merged["num_fc_layers"],
        fc_hidden_size=merged["fc_hidden_size"],
        input_shape=tuple(merged["input_shape"]),
        num_classes=merged["num_classes"],
        pool_after=frozenset(merged["pool_after"]),
    )


def default_design_space(backbone: Optional[Backbone] = None, area_budget: Optional[float] = None) -> DesignSpace:
    """The default search space: four channel and four kernel options per layer."""
    backbone = backbone or Backbone()
    choice = LayerChoice(DEFAULT_CHANNEL_OPTIONS, DEFAULT_KERNEL_OPTIONS)
    return DesignSpace(
        layer_choices=(choice,) * backbone.num_conv_layers,
        hardware=HardwareChoice(DEFAULT_CROSSBAR_SIZES, DEFAULT_ADC_RESOLUTIONS,
                                DEFAULT_DEVICE_PRECISIONS, area_budget),
        backbone=backbone,
    )


# ---------------------------------------------------------------------------
# Validation
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Violation:
    """One reason a rollout falls outside the design space."""
    kind: str            # length_mismatch | out_of_vocabulary | non_odd_kernel
    index: Optional[int]
    field: str
    value: object
    allowed: Tuple

    def __str__(self) -> str:
        where = f"index {self.index} " if self.index is not None else ""
        return f"{self.kind}: {where}{self.field}={self.value!r} not in {list(self.allowed)}"


@dataclass(frozen=True)
class ValidationResult:
    violations: Tuple[Violation, ...] = ()

    @property
    def ok(self) -> bool:
        return not self.violations

    def __bool__(self) -> bool:
        return self.ok


def validate(rollout: Rollout, space: DesignSpace) -> ValidationResult:
    """
    Check every rollout entry against its option list.

    Returns:
        ValidationResult; empty violations means the rollout is a member of the space
    """
    violations: List[Violation] = []
    expected = space.backbone.num_conv_layers
    if len(rollout.layers) != expected:
        violations.append(Violation("length_mismatch", None, "layers", len(rollout.layers), (expected,)))

    for index, ((channels, kernel), choice) in enumerate(zip(rollout.layers, space.layer_choices)):
        if channels not in choice.channel_options:
            violations.append(Violation("out_of_vocabulary", index, "out_channels", channels,
                                        choice.channel_options))
        if kernel not in choice.kernel_options:
            violations.append(Violation("out_of_vocabulary", index, "kernel", kernel, choice.kernel_options))
        if kernel % 2 == 0:
            violations.append(Violation("non_odd_kernel", index, "kernel", kernel, choice.kernel_options))

    hw, options = rollout.hardware, space.hardware
    for name, value, allowed in (
        ("crossbar_size", hw.crossbar_size, options.crossbar_sizes),
        ("adc_resolution", hw.adc_resolution, options.adc_resolutions),
        ("device_precision", hw.device_precision, options.device_precisions),
    ):
        if value not in allowed:
            violations.append(Violation("out_of_vocabulary", None, name, value, allowed))

    return ValidationResult(tuple(violations))


# ---------------------------------------------------------------------------
# Enumeration
# ---------------------------------------------------------------------------

def space_size(space: DesignSpace) -> int:
    """Number of distinct rollouts in the space."""
    size = math.prod(len(c.channel_options) * len(c.kernel_options) for c in space.layer_choices)
    hw = space.hardware
    return size * len(hw.crossbar_sizes) * len(hw.adc_resolutions) * len(hw.device_precisions)


def enumerate_rollouts(space: DesignSpace, cap: int = ENUMERATION_CAP) -> Iterator[Rollout]:
    """
    Yield every rollout exactly once, in lexicographic order of option indices.

    Slot order: layer 0 channels, layer 0 kernel, layer 1 channels, ..., crossbar,
    ADC resolution, device precision.
    """
    size = space_size(space)
    if size > cap:
        raise EnumerationCapError(size, cap)

    layer_slots = [choice.pairs for choice in space.layer_choices]
    hw_slots = space.hardware.combos
    for layers in itertools.product(*layer_slots):
        for hw in hw_slots:
            yield Rollout(tuple(layers), hw)


def random_rollout(space: DesignSpace, rng) -> Rollout:
    """Uniform sample over the option lists (numpy Generator)."""
    layers = []
    for choice in space.layer_choices:
        channels = choice.channel_options[int(rng.integers(len(choice.channel_options)))]
        kernel = choice.kernel_options[int(rng.integers(len(choice.kernel_options)))]
        layers.append((channels, kernel))
    hw = space.hardware
    return Rollout(tuple(layers), HardwareParams(
        hw.crossbar_sizes[int(rng.integers(len(hw.crossbar_sizes)))],
        hw.adc_resolutions[int(rng.integers(len(hw.adc_resolutions)))],
        hw.device_precisions[int(rng.integers(len(hw.device_precisions)))],
    ))


def render_rollout(rollout: Rollout) -> str:
    """Compact list-of-pairs form with the trailing hardware triple."""
    items = [f"[{c},{k}]" for c, k in rollout.layers]
    items.append("[" + ",".join(str(v) for v in rollout.hardware.as_list()) + "]")
    return "[" + ",".join(items) + "]"


# ---------------------------------------------------------------------------
# Heuristic lints
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class LintFlag:
    """Advisory design smell; never blocks evaluation."""
    layer: Optional[int]
    kind: str   # channel_shrink | channel_explosion | kernel_jump | hardware_defaulted
    message: str


def heuristic_lints(rollout: Rollout, input_channels: int = DEFAULT_INPUT_SHAPE[2]) -> List[LintFlag]:
    """
    Flag layers that break the usual hand-design rules.

    Args:
        rollout: Rollout to inspect (assumed validated)
        input_channels: Channel count of the network input

    Returns:
        List of LintFlag, empty when the rollout looks sensible
    """
    flags: List[LintFlag] = []
    in_channels = input_channels
    prev_kernel = None
    for index, (channels, kernel) in enumerate(rollout.layers):
        if channels < in_channels:
            flags.append(LintFlag(index, "channel_shrink",
                                  f"layer {index} narrows {in_channels} -> {channels} channels"))
        if channels > CHANNEL_GROWTH_LIMIT * in_channels:
            flags.append(LintFlag(index, "channel_explosion",
                                  f"layer {index} widens {in_channels} -> {channels} channels "
                                  f"(more than {CHANNEL_GROWTH_LIMIT}x)"))
        if prev_kernel is not None and abs(kernel - prev_kernel) > KERNEL_JUMP_LIMIT:
            flags.append(LintFlag(index, "kernel_jump",
                                  f"layer {index} jumps kernel {prev_kernel} -> {kernel}"))
        in_channels = channels
        prev_kernel = kernel
    return flags


def unavoidable_stem_flags(space: DesignSpace) -> FrozenSet[str]:
    """Lint kinds at layer 0 that every option of the first slot triggers."""
    in_channels = space.backbone.input_channels
    options = space.layer_choices[0].channel_options
    kinds = set()
    if all(c < in_channels for c in options):
        kinds.add("channel_shrink")
    if all(c > CHANNEL_GROWTH_LIMIT * in_channels for c in options):
        kinds.add("channel_explosion")
    return frozenset(kinds)


def admissible(rollout: Rollout, space: DesignSpace) -> bool:
    """True when the rollout is lint clean, ignoring stem flags no option can avoid."""
    stem = unavoidable_stem_flags(space)
    for flag in heuristic_lints(rollout, space.backbone.input_channels):
        if flag.layer == 0 and flag.kind in stem:
            continue
        return False
    return True
