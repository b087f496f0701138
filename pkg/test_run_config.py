"""
Tests for loading, validating and writing run configurations.
"""

import json
import os
import shutil
import sys
import tempfile
import unittest
from pathlib import Path

sys.path.insert(0, os.path.dirname(os.path.abspath(__file__)))

from config import COLDSTART_CONFIG_FILE, DEFAULT_CONFIG_FILE
from design_space import space_size
from errors import ConfigError
from run_config import (
    apply_overrides,
    config_from_dict,
    default_config,
    load_config,
    render_config,
    save_config,
)


class TestRunConfig(unittest.TestCase):
    def setUp(self):
        self.test_dir = tempfile.mkdtemp()

    def tearDown(self):
        shutil.rmtree(self.test_dir)

    def _write(self, data) -> Path:
        path = Path(self.test_dir) / "run.json"
        path.write_text(json.dumps(data), encoding="utf-8")
        return path

    def test_shipped_default(self):
        config = load_config(DEFAULT_CONFIG_FILE)
        self.assertEqual(config.optimizer, "llm_full")
        self.assertEqual(config.evaluator, "surrogate")
        self.assertEqual(space_size(config.space), 16 ** 6 * 27)
        self.assertIsNone(config.space.hardware.area_budget)
        self.assertEqual(config.reward.energy_norm, 8e7)
        self.assertEqual(config.sigma, 0.1)
        self.assertFalse(config.hardware.adc_scaling)

    def test_shipped_coldstart(self):
        config = load_config(COLDSTART_CONFIG_FILE)
        self.assertEqual(space_size(config.space), 4374)
        self.assertEqual(config.coldstart.seeds, 20)
        self.assertEqual(config.coldstart.max_episodes, 3000)
        self.assertTrue(config.hardware.adc_scaling)

    def test_round_trip(self):
        config = load_config(DEFAULT_CONFIG_FILE)
        self.assertEqual(config_from_dict(render_config(config)), config)
        path = Path(self.test_dir) / "saved.json"
        save_config(config, path)
        self.assertEqual(load_config(path), config)

    def test_empty_object_gives_defaults(self):
        self.assertEqual(config_from_dict({}), default_config())

    def test_area_budget(self):
        config = config_from_dict({"hardware": {"area_budget": 5e7}})
        self.assertEqual(config.space.hardware.area_budget, 5e7)

    def test_credentials_rejected(self):
        for data in ({"llm": {"api_key": "sk-123"}}, {"token": "abc"}):
            with self.assertRaises(ConfigError):
                config_from_dict(data)

    def test_unknown_keys(self):
        with self.assertRaises(ConfigError):
            config_from_dict({"episode": 3})
        with self.assertRaises(ConfigError):
            config_from_dict({"training": {"epoch": 3}})
        with self.assertRaises(ConfigError):
            config_from_dict({"noise": {"sigma": 0.1, "drift": 0.2}})

    def test_out_of_range_values(self):
        for data in ({"episodes": 0}, {"seed": -1}, {"optimizer": "gradient"}, {"evaluator": "oracle"},
                     {"noise": {"sigma": -0.1}}, {"training": {"epochs": 0}},
                     {"reward": {"kind": "accuracy_power"}}, {"hardware": {"adc_scaling": "yes"}}):
            with self.assertRaises(ConfigError, msg=str(data)):
                config_from_dict(data)

    def test_bad_design_space(self):
        with self.assertRaises(ConfigError):
            config_from_dict({"design_space": {"layers": {"channels": [16], "kernels": [4]},
                                               "hardware": {"crossbar_sizes": [64], "adc_resolutions": [8],
                                                            "device_precisions": [2]}}})

    def test_trained_evaluator_needs_matching_images(self):
        with self.assertRaises(ConfigError):
            config_from_dict({"evaluator": "trained"})
        config = config_from_dict({
            "evaluator": "trained",
            "backbone": {"input_shape": [16, 16, 3], "num_classes": 4},
            "dataset": {"kind": "synthetic", "image_size": 16, "num_classes": 4},
        })
        self.assertEqual(config.evaluator, "trained")
        with self.assertRaises(ConfigError):
            config_from_dict({"evaluator": "trained", "dataset": {"kind": "image_batch"}})

    def test_overrides(self):
        config = default_config()
        changed = apply_overrides(config, seed=7, episodes=None, optimizer="random")
        self.assertEqual((changed.seed, changed.episodes, changed.optimizer), (7, config.episodes, "random"))
        self.assertIs(apply_overrides(config), config)
        with self.assertRaises(ConfigError):
            apply_overrides(config, optimizer="annealing")

    def test_missing_and_broken_files(self):
        with self.assertRaises(ConfigError):
            load_config(Path(self.test_dir) / "absent.json")
        path = Path(self.test_dir) / "broken.json"
        path.write_text("{not json", encoding="utf-8")
        with self.assertRaises(ConfigError):
            load_config(path)
        with self.assertRaises(ConfigError):
            load_config(self._write([1, 2, 3]))


if __name__ == "__main__":
    unittest.main()
