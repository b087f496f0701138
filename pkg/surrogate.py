"""
Surrogate Module for LCDA.
A fast, deterministic, clearly non-physical accuracy proxy used for
exhaustive-space experiments and search-mechanics tests. It never stands
in for accuracy claims.
"""

import math
from dataclasses import dataclass

from config import (
    NOISE_SIGMA,
    SURROGATE_LOG_PARAMS_MID,
    SURROGATE_LOG_PARAMS_SCALE,
    SURROGATE_MAX_ACCURACY,
    SURROGATE_VARIATION_PENALTY,
)
from design_space import Backbone, Rollout


def parameter_count(rollout: Rollout, backbone: Backbone) -> int:
    """Weights plus biases of the network the rollout describes."""
    total = 0
    in_channels = backbone.input_channels
    for channels, kernel in rollout.layers:
        total += kernel * kernel * in_channels * channels + channels
        in_channels = channels
    for fan_in, fan_out in backbone.fc_sizes(in_channels):
        total += fan_in * fan_out + fan_out
    return total


def max_conv_fan_in(rollout: Rollout, backbone: Backbone) -> int:
    fan_in = 0
    in_channels = backbone.input_channels
    for channels, kernel in rollout.layers:
        fan_in = max(fan_in, kernel * kernel * in_channels)
        in_channels = channels
    return fan_in


@dataclass(frozen=True)
class SurrogateModel:
    """
    accuracy = max_accuracy * logistic((ln P - mid) / scale)
               - penalty * sigma * sqrt(max conv fan-in), clipped to [0, 1].

    Larger kernels widen the fan-in and so pay more under device variation.
    """
    max_accuracy: float = SURROGATE_MAX_ACCURACY
    log_params_mid: float = SURROGATE_LOG_PARAMS_MID
    log_params_scale: float = SURROGATE_LOG_PARAMS_SCALE
    variation_penalty: float = SURROGATE_VARIATION_PENALTY

    def accuracy(self, rollout: Rollout, backbone: Backbone, sigma: float = NOISE_SIGMA) -> float:
        z = (math.log(parameter_count(rollout, backbone)) - self.log_params_mid) / self.log_params_scale
        base = self.max_accuracy / (1.0 + math.exp(-z))
        penalty = self.variation_penalty * sigma * math.sqrt(max_conv_fan_in(rollout, backbone))
        return min(1.0, max(0.0, base - penalty))


_DEFAULT_MODEL = SurrogateModel()


def surrogate_accuracy(rollout: Rollout, backbone: Backbone, sigma: float = NOISE_SIGMA) -> float:
    return _DEFAULT_MODEL.accuracy(rollout, backbone, sigma)
