"""
Tests for the surrogate accuracy proxy.
"""

import math
import os
import sys
import unittest
from collections import defaultdict

sys.path.insert(0, os.path.dirname(os.path.abspath(__file__)))

from config import COLDSTART_CONFIG_FILE
from design_space import Backbone, HardwareParams, Rollout, enumerate_rollouts
from run_config import load_config
from surrogate import SurrogateModel, max_conv_fan_in, parameter_count, surrogate_accuracy

HW = HardwareParams(128, 8, 2)
SMALLEST = Rollout(((16, 1),) * 6, HW)
REFERENCE = Rollout(((32, 3), (32, 3), (64, 3), (64, 3), (128, 3), (128, 3)), HW)


class TestSurrogate(unittest.TestCase):
    def setUp(self):
        self.backbone = Backbone()

    def test_parameter_count_pinned(self):
        self.assertEqual(parameter_count(SMALLEST, self.backbone), 274842)

    def test_accuracy_pinned(self):
        self.assertAlmostEqual(math.log(274842), 12.5239517, places=6)
        self.assertAlmostEqual(surrogate_accuracy(SMALLEST, self.backbone, sigma=0.0), 0.36403, delta=1e-4)

    def test_variation_penalty(self):
        clean = surrogate_accuracy(REFERENCE, self.backbone, sigma=0.0)
        noisy = surrogate_accuracy(REFERENCE, self.backbone, sigma=0.1)
        self.assertEqual(max_conv_fan_in(REFERENCE, self.backbone), 9 * 128)
        self.assertAlmostEqual(clean - noisy, 0.01 * 0.1 * math.sqrt(1152))

    def test_more_parameters_help_without_noise(self):
        self.assertGreater(surrogate_accuracy(REFERENCE, self.backbone, sigma=0.0),
                           surrogate_accuracy(SMALLEST, self.backbone, sigma=0.0))

    def test_ordering_over_the_enumerated_space(self):
        space = load_config(COLDSTART_CONFIG_FILE).space
        backbone = space.backbone
        by_fan_in = defaultdict(list)
        by_layers = {}
        for rollout in enumerate_rollouts(space):
            clean = surrogate_accuracy(rollout, backbone, sigma=0.0)
            noisy = surrogate_accuracy(rollout, backbone, sigma=0.1)
            if clean > 0.0:
                self.assertLess(noisy, clean, rollout)
            self.assertEqual(by_layers.setdefault(rollout.layers, clean), clean)
            by_fan_in[max_conv_fan_in(rollout, backbone)].append((parameter_count(rollout, backbone), noisy))
        for group in by_fan_in.values():
            group.sort()
            for (p_small, a_small), (p_large, a_large) in zip(group, group[1:]):
                if p_large > p_small:
                    self.assertGreaterEqual(a_large, a_small)

    def test_clipped_to_unit_interval(self):
        harsh = SurrogateModel(variation_penalty=10.0)
        self.assertEqual(harsh.accuracy(REFERENCE, self.backbone, sigma=1.0), 0.0)
        generous = SurrogateModel(max_accuracy=5.0)
        self.assertEqual(generous.accuracy(REFERENCE, self.backbone, sigma=0.0), 1.0)

    def test_deterministic(self):
        self.assertEqual(surrogate_accuracy(REFERENCE, self.backbone), surrogate_accuracy(REFERENCE, self.backbone))


if __name__ == "__main__":
    unittest.main()
