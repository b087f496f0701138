"""
Crossbar Cost Module for LCDA.
Analytic compute-in-memory cost model: maps each layer onto R x R NVM
crossbar tiles and reports energy (pJ), latency (ns), area (um^2) and
per-layer utilization.
"""

import math
from dataclasses import dataclass, field, replace
from typing import Dict, List, Optional, Sequence

from config import (
    ADC_AREA,
    ADC_ENERGY_PER_CONVERSION,
    ADC_SCALING,
    AREA_BUDGET_CROSSBAR,
    AREA_BUDGET_FACTOR,
    CELL_AREA,
    CYCLE_TIME,
    READ_ENERGY_PER_CELL,
    REFERENCE_ADC_BITS,
    WEIGHT_BITS,
)
from design_space import Backbone, DesignSpace, HardwareParams, Rollout
from errors import MappingError
from logger import get_logger

logger = get_logger(__name__)


@dataclass(frozen=True)
class UnitCosts:
    """Per-operation constants; ADC figures are quoted at reference_adc_bits."""
    read_energy_per_cell: float = READ_ENERGY_PER_CELL
    adc_energy_per_conversion: float = ADC_ENERGY_PER_CONVERSION
    cycle_time: float = CYCLE_TIME
    cell_area: float = CELL_AREA
    adc_area: float = ADC_AREA
    reference_adc_bits: int = REFERENCE_ADC_BITS

    def to_dict(self) -> Dict:
        return {
            "read_energy_per_cell": self.read_energy_per_cell,
            "adc_energy_per_conversion": self.adc_energy_per_conversion,
            "cycle_time": self.cycle_time,
            "cell_area": self.cell_area,
            "adc_area": self.adc_area,
            "reference_adc_bits": self.reference_adc_bits,
        }


@dataclass(frozen=True)
class HardwareConfig:
    """One concrete accelerator instance."""
    crossbar_size: int
    adc_resolution: int
    device_precision: int
    weight_bits: int = WEIGHT_BITS
    unit_costs: UnitCosts = field(default_factory=UnitCosts)
    area_budget: float = math.inf
    adc_scaling: bool = ADC_SCALING

    def __post_init__(self):
        for name in ("crossbar_size", "adc_resolution", "device_precision", "weight_bits"):
            if getattr(self, name) < 1:
                raise MappingError(f"{name} must be positive, got {getattr(self, name)}")
        if not self.area_budget > 0:
            raise MappingError(f"area_budget must be positive, got {self.area_budget}")

    @property
    def cells_per_weight(self) -> int:
        return math.ceil(self.weight_bits / self.device_precision)

    @property
    def adc_scale(self) -> float:
        """
        1.0 unless adc_scaling is on; then ADC energy and area double with
        every bit of resolution above reference_adc_bits.
        """
        if not self.adc_scaling:
            return 1.0
        return 2.0 ** (self.adc_resolution - self.unit_costs.reference_adc_bits)


@dataclass(frozen=True)
class LayerShape:
    """Geometry of one layer as seen by the mapper."""
    kind: str            # conv | fc
    kernel: int
    in_channels: int
    out_channels: int
    height: int = 1
    width: int = 1

    @property
    def activations(self) -> int:
        """Output positions; stride 1 with same padding keeps the input grid."""
        return self.height * self.width


@dataclass(frozen=True)
class LayerMapping:
    shape: LayerShape
    crossbar_size: int
    rows_needed: int
    cols_needed: int
    tiles_rows: int
    tiles_cols: int
    utilization: float
    activations: int
    energy: float = 0.0
    latency: float = 0.0
    area: float = 0.0

    @property
    def tiles(self) -> int:
        return self.tiles_rows * self.tiles_cols

    def to_dict(self) -> Dict:
        return {
            "kind": self.shape.kind,
            "kernel": self.shape.kernel,
            "in_channels": self.shape.in_channels,
            "out_channels": self.shape.out_channels,
            "rows_needed": self.rows_needed,
            "cols_needed": self.cols_needed,
            "tiles_rows": self.tiles_rows,
            "tiles_cols": self.tiles_cols,
            "utilization": self.utilization,
            "activations": self.activations,
            "energy": self.energy,
            "latency": self.latency,
            "area": self.area,
        }

    @classmethod
    def from_dict(cls, data: Dict, crossbar_size: int) -> "LayerMapping":
        shape = LayerShape(data["kind"], data["kernel"], data["in_channels"], data["out_channels"])
        return cls(shape=shape, crossbar_size=crossbar_size,
                   **{k: data[k] for k in ("rows_needed", "cols_needed", "tiles_rows", "tiles_cols",
                                           "utilization", "activations", "energy", "latency", "area")})


@dataclass(frozen=True)
class CostReport:
    energy: float
    latency: float
    area: float
    per_layer: tuple
    valid: bool
    crossbar_size: int = 0

    def to_dict(self) -> Dict:
        return {
            "energy": self.energy,
            "latency": self.latency,
            "area": self.area,
            "valid": self.valid,
            "crossbar_size": self.crossbar_size,
            "per_layer": [m.to_dict() for m in self.per_layer],
        }

    @classmethod
    def from_dict(cls, data: Dict) -> "CostReport":
        size = data.get("crossbar_size", 0)
        return cls(
            energy=data["energy"],
            latency=data["latency"],
            area=data["area"],
            per_layer=tuple(LayerMapping.from_dict(m, size) for m in data.get("per_layer", [])),
            valid=data["valid"],
            crossbar_size=size,
        )


def map_layer(shape: LayerShape, hw: HardwareConfig) -> LayerMapping:
    """
    Place one layer's weight matrix onto crossbar tiles.

    The unrolled weight matrix has K*K*C_in rows and C_out*cells_per_weight
    columns; FC layers arrive as K=1 layers on a 1x1 grid.

    Raises:
        MappingError: if the layer has no rows or columns to map
    """
    if min(shape.kernel, shape.in_channels, shape.out_channels, shape.height, shape.width) < 1:
        raise MappingError(f"Layer shape is degenerate: {shape}")

    size = hw.crossbar_size
    rows_needed = shape.kernel * shape.kernel * shape.in_channels
    cols_needed = shape.out_channels * hw.cells_per_weight
    tiles_rows = -(-rows_needed // size)
    tiles_cols = -(-cols_needed // size)
    utilization = (rows_needed * cols_needed) / (tiles_rows * tiles_cols * size * size)

    costs = hw.unit_costs
    activations = shape.activations
    # Column bands run in parallel, row bands serialize per activation
    energy = activations * tiles_rows * (
        tiles_cols * size * costs.read_energy_per_cell
        + cols_needed * costs.adc_energy_per_conversion * hw.adc_scale
    )
    latency = activations * tiles_rows * costs.cycle_time
    area = tiles_rows * tiles_cols * (size * size * costs.cell_area + size * costs.adc_area * hw.adc_scale)

    return LayerMapping(
        shape=shape,
        crossbar_size=size,
        rows_needed=rows_needed,
        cols_needed=cols_needed,
        tiles_rows=tiles_rows,
        tiles_cols=tiles_cols,
        utilization=utilization,
        activations=activations,
        energy=energy,
        latency=latency,
        area=area,
    )


def cost(network: Sequence[LayerShape], hw: HardwareConfig) -> CostReport:
    """Sum per-layer energy, latency and area and check the area budget."""
    mappings = tuple(map_layer(shape, hw) for shape in network)
    area = sum(m.area for m in mappings)
    report = CostReport(
        energy=sum(m.energy for m in mappings),
        latency=sum(m.latency for m in mappings),
        area=area,
        per_layer=mappings,
        valid=area <= hw.area_budget,
        crossbar_size=hw.crossbar_size,
    )
    logger.debug(f"Cost R={hw.crossbar_size}: E={report.energy:.1f}pJ L={report.latency:.1f}ns "
                 f"A={report.area:.1f}um2 valid={report.valid}")
    return report


def check_validity(report: CostReport, hw: HardwareConfig) -> bool:
    """A design is valid when its area fits the budget (boundary inclusive)."""
    return report.area <= hw.area_budget


def network_shapes(rollout: Rollout, backbone: Backbone) -> List[LayerShape]:
    """Conv layers from the rollout followed by the backbone's FC stack."""
    shapes = []
    in_channels = backbone.input_channels
    for index, (channels, kernel) in enumerate(rollout.layers):
        height, width = backbone.spatial_before(index)
        shapes.append(LayerShape("conv", kernel, in_channels, channels, height, width))
        in_channels = channels
    for fan_in, fan_out in backbone.fc_sizes(in_channels):
        shapes.append(LayerShape("fc", 1, fan_in, fan_out))
    return shapes


def hardware_config(params: HardwareParams, unit_costs: Optional[UnitCosts] = None,
                    weight_bits: int = WEIGHT_BITS, area_budget: float = math.inf,
                    adc_scaling: bool = ADC_SCALING) -> HardwareConfig:
    return HardwareConfig(
        crossbar_size=params.crossbar_size,
        adc_resolution=params.adc_resolution,
        device_precision=params.device_precision,
        weight_bits=weight_bits,
        unit_costs=unit_costs or UnitCosts(),
        area_budget=area_budget,
        adc_scaling=adc_scaling,
    )


def default_area_budget(space: DesignSpace, unit_costs: Optional[UnitCosts] = None,
                        weight_bits: int = WEIGHT_BITS, adc_scaling: bool = ADC_SCALING) -> float:
    """
    Budget = 1.2x the area of the largest rollout at R=128.

    The largest rollout takes every layer's widest channel and kernel option; the
    worst ADC / precision combination in the space is used.
    """
    largest = Rollout(
        tuple((max(c.channel_options), max(c.kernel_options)) for c in space.layer_choices),
        HardwareParams(AREA_BUDGET_CROSSBAR, space.hardware.adc_resolutions[0],
                       space.hardware.device_precisions[0]),
    )
    shapes = network_shapes(largest, space.backbone)
    worst = 0.0
    for adc in space.hardware.adc_resolutions:
        for precision in space.hardware.device_precisions:
            params = replace(largest.hardware, adc_resolution=adc, device_precision=precision)
            hw = hardware_config(params, unit_costs, weight_bits, adc_scaling=adc_scaling)
            worst = max(worst, cost(shapes, hw).area)
    return AREA_BUDGET_FACTOR * worst


def resolve_area_budget(space: DesignSpace, unit_costs: Optional[UnitCosts] = None,
                        weight_bits: int = WEIGHT_BITS, adc_scaling: bool = ADC_SCALING) -> float:
    """The space's explicit budget, or the computed default."""
    if space.hardware.area_budget is not None:
        return space.hardware.area_budget
    budget = default_area_budget(space, unit_costs, weight_bits, adc_scaling)
    logger.debug(f"Using computed area budget {budget:.1f} um2")
    return budget
