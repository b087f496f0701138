"""
End-to-end tests for the lcda command line.
The LLM endpoint is replaced by a mock session; no network access.
"""

import io
import json
import os
import shutil
import sys
import tempfile
import unittest
from pathlib import Path
from unittest.mock import MagicMock, patch

sys.path.insert(0, os.path.dirname(os.path.abspath(__file__)))

import lcda
from history_store import load_history_records

SMALL_CONFIG = {
    "design_space": {
        "layers": {"channels": [8, 16], "kernels": [3]},
        "hardware": {"crossbar_sizes": [64, 128], "adc_resolutions": [6, 8], "device_precisions": [2]},
    },
    "backbone": {"num_conv_layers": 2, "num_fc_layers": 1, "input_shape": [8, 8, 3],
                 "num_classes": 4, "pool_after": [0]},
    "optimizer": "heuristic_oracle",
    "evaluator": "surrogate",
    "episodes": 5,
    "coldstart": {"seeds": 2, "max_episodes": 50, "tolerance": 0.02},
}

REPLIES = [
    "[[32,3],[32,3],[64,3],[64,3],[128,3],[128,3],[128,8,2]]",
    "[[16,3],[32,3],[32,3],[64,3],[64,3],[128,3],[256,6,2]]",
    "Try this: [[16,1],[16,3],[32,3],[32,5],[64,3],[64,3],[64,4,1]]",
]


def fake_session():
    session = MagicMock()
    calls = {"n": 0}

    def post(url, json=None, headers=None, timeout=None):
        text = REPLIES[calls["n"] % len(REPLIES)]
        calls["n"] += 1
        response = MagicMock(status_code=200)
        response.json.return_value = {"choices": [{"message": {"content": text}}]}
        return response

    session.post.side_effect = post
    return session


class TestCli(unittest.TestCase):
    def setUp(self):
        self.test_dir = Path(tempfile.mkdtemp())

    def tearDown(self):
        shutil.rmtree(self.test_dir)

    def run_cli(self, *argv):
        """Returns (exit code, parsed stdout line or None, stderr text)."""
        out, err = io.StringIO(), io.StringIO()
        with patch("sys.stdout", out), patch("sys.stderr", err):
            code = lcda.main(list(argv))
        text = out.getvalue().strip()
        return code, json.loads(text) if text else None, err.getvalue()

    def small_config(self, **changes) -> str:
        data = dict(SMALL_CONFIG, output_dir=str(self.test_dir / "small"), **changes)
        path = self.test_dir / "small.json"
        path.write_text(json.dumps(data), encoding="utf-8")
        return str(path)

    def test_evaluate_is_deterministic(self):
        code, first, _ = self.run_cli("evaluate")
        self.assertEqual(code, lcda.EXIT_OK)
        _, second, _ = self.run_cli("evaluate")
        self.assertEqual(first, second)
        self.assertTrue(first["rollout"].endswith("[64,4,1]]"))
        self.assertIn("hardware_defaulted", first["lints"])
        self.assertTrue(first["valid"])

    def test_evaluate_rejects_garbage(self):
        code, out, err = self.run_cli("evaluate", "--rollout", "hello")
        self.assertEqual(code, lcda.EXIT_RUNTIME)
        self.assertIsNone(out)
        self.assertIn('"error": "ParseError"', err)

    def test_missing_config(self):
        code, _, err = self.run_cli("search", "--config", str(self.test_dir / "absent.json"))
        self.assertEqual(code, lcda.EXIT_CONFIG)
        self.assertIn("ConfigError", err)

    def test_search_writes_artifacts(self):
        out_dir = self.test_dir / "random"
        code, result, _ = self.run_cli("search", "--optimizer", "random", "--episodes", "5", "--out", str(out_dir))
        self.assertEqual(code, lcda.EXIT_OK)
        self.assertEqual(result["episodes"], 5)
        self.assertEqual(len(load_history_records(out_dir / "history.jsonl")), 5)
        for name in ("summary.json", "pareto.json", "curve.json"):
            self.assertTrue((out_dir / name).exists(), name)
        self.assertFalse((out_dir / "transcript.jsonl").exists())

        code, front, _ = self.run_cli("pareto", "--history", str(out_dir / "history.jsonl"), "--metric", "latency",
                                      "--out", str(self.test_dir / "front"))
        self.assertEqual(code, lcda.EXIT_OK)
        self.assertEqual(front["metric"], "latency")
        self.assertTrue(set(front["episodes"]) <= set(range(5)))
        self.assertTrue((self.test_dir / "front" / "pareto.json").exists())

    def test_llm_search_then_replay(self):
        recorded = self.test_dir / "recorded"
        with patch("llm_client.requests.Session", return_value=fake_session()):
            code, _, _ = self.run_cli("search", "--episodes", "4", "--out", str(recorded))
        self.assertEqual(code, lcda.EXIT_OK)
        transcript = recorded / "transcript.jsonl"
        self.assertTrue(transcript.exists())

        code, result, _ = self.run_cli("replay", "--episodes", "4", "--replay", str(transcript),
                                       "--expect", str(recorded / "history.jsonl"),
                                       "--out", str(self.test_dir / "replayed"))
        self.assertEqual(code, lcda.EXIT_OK)
        self.assertTrue(result["identical"])

        code, _, err = self.run_cli("replay", "--episodes", "4", "--replay", str(transcript),
                                    "--optimizer", "llm_naive", "--out", str(self.test_dir / "naive"))
        self.assertEqual(code, lcda.EXIT_REPLAY)
        self.assertIn("episode 0", err)

    def _record_llm_run(self) -> Path:
        recorded = self.test_dir / "recorded"
        with patch("llm_client.requests.Session", return_value=fake_session()):
            code, _, _ = self.run_cli("search", "--episodes", "4", "--out", str(recorded))
        self.assertEqual(code, lcda.EXIT_OK)
        return recorded

    def test_replay_detects_an_edited_history(self):
        recorded = self._record_llm_run()
        lines = (recorded / "history.jsonl").read_text(encoding="utf-8").split("\n")
        record = json.loads(lines[2])
        record["accuracy"] += 0.001
        lines[2] = json.dumps(record)
        edited = self.test_dir / "edited.jsonl"
        edited.write_text("\n".join(lines), encoding="utf-8")
        before = edited.read_bytes()

        code, result, err = self.run_cli("replay", "--episodes", "4",
                                         "--replay", str(recorded / "transcript.jsonl"),
                                         "--expect", str(edited), "--out", str(self.test_dir / "replayed"))
        self.assertEqual(code, lcda.EXIT_REPLAY)
        self.assertIsNone(result)
        self.assertIn("line 3", err)
        self.assertEqual(edited.read_bytes(), before)

    def test_replay_refuses_to_overwrite_the_expected_history(self):
        recorded = self._record_llm_run()
        before = (recorded / "history.jsonl").read_bytes()
        code, _, err = self.run_cli("replay", "--episodes", "4", "--replay", str(recorded / "transcript.jsonl"),
                                    "--expect", str(recorded / "history.jsonl"), "--out", str(recorded))
        self.assertEqual(code, lcda.EXIT_CONFIG)
        self.assertIn("overwrite", err)
        self.assertEqual((recorded / "history.jsonl").read_bytes(), before)

    def test_replay_with_missing_expected_history(self):
        recorded = self._record_llm_run()
        code, _, err = self.run_cli("replay", "--episodes", "4", "--replay", str(recorded / "transcript.jsonl"),
                                    "--expect", str(self.test_dir / "absent.jsonl"),
                                    "--out", str(self.test_dir / "replayed"))
        self.assertEqual(code, lcda.EXIT_CONFIG)
        self.assertIn("ConfigError", err)

    def test_pareto_on_a_malformed_history(self):
        out_dir = self.test_dir / "random"
        code, _, _ = self.run_cli("search", "--optimizer", "random", "--episodes", "3", "--out", str(out_dir))
        self.assertEqual(code, lcda.EXIT_OK)
        lines = (out_dir / "history.jsonl").read_text(encoding="utf-8").split("\n")
        record = json.loads(lines[1])
        del record["cost"]
        lines[1] = json.dumps(record)
        broken = self.test_dir / "broken.jsonl"
        broken.write_text("\n".join(lines), encoding="utf-8")

        code, result, err = self.run_cli("pareto", "--history", str(broken))
        self.assertEqual(code, lcda.EXIT_RUNTIME)
        self.assertIsNone(result)
        self.assertIn("HistoryError", err)

        code, _, err = self.run_cli("pareto", "--history", str(self.test_dir / "absent.jsonl"))
        self.assertEqual(code, lcda.EXIT_RUNTIME)
        self.assertIn("HistoryError", err)

    def test_replay_needs_a_transcript(self):
        code, _, _ = self.run_cli("replay", "--out", str(self.test_dir / "none"))
        self.assertEqual(code, lcda.EXIT_CONFIG)

    def test_enumerate(self):
        code, result, _ = self.run_cli("enumerate", "--config", self.small_config(), "--top", "3")
        self.assertEqual(code, lcda.EXIT_OK)
        self.assertEqual(result["space_size"], 16)
        data = json.loads((self.test_dir / "small" / "enumeration.json").read_text(encoding="utf-8"))
        self.assertEqual(len(data["top"]), 3)
        self.assertEqual(data["top"][0]["rollout"], result["optimum"])

    def test_coldstart_bench(self):
        code, result, _ = self.run_cli("coldstart-bench", "--config", self.small_config())
        self.assertEqual(code, lcda.EXIT_OK)
        self.assertEqual(set(result["medians"]), {"heuristic_oracle", "random"})
        report = json.loads((self.test_dir / "small" / "coldstart.json").read_text(encoding="utf-8"))
        self.assertEqual(report["space_size"], 16)
        self.assertEqual(len(report["optimizers"]["random"]["episodes"]), 2)

    def test_compare(self):
        config = self.small_config()
        code, _, _ = self.run_cli("search", "--config", config, "--out", str(self.test_dir / "oracle"))
        self.assertEqual(code, lcda.EXIT_OK)
        code, result, _ = self.run_cli("compare", "--config", config, "--episodes", "6", "--seeds", "2",
                                       "--optimizers", "random,evolutionary",
                                       "--history", f"oracle={self.test_dir / 'oracle' / 'history.jsonl'}")
        self.assertEqual(code, lcda.EXIT_OK)
        self.assertEqual(set(result["final_mean"]), {"random", "evolutionary", "oracle"})
        report = json.loads((self.test_dir / "small" / "compare.json").read_text(encoding="utf-8"))
        self.assertEqual(report["seeds"], 2)
        self.assertEqual(len(report["optimizers"]["random"]["best_so_far"]), 2)
        self.assertEqual(len(report["optimizers"]["random"]["mean"]), 6)
        self.assertEqual(len(report["optimizers"]["oracle"]["mean"]), 5)

    def test_compare_rejects_bad_arguments(self):
        config = self.small_config()
        for extra in (["--optimizers", "llm_full"], ["--optimizers", "annealing"], ["--seeds", "0"],
                      ["--history", "no-separator"], ["--optimizers", ""]):
            code, _, _ = self.run_cli("compare", "--config", config, *extra)
            self.assertEqual(code, lcda.EXIT_CONFIG, extra)
        code, _, err = self.run_cli("compare", "--config", config, "--history", f"x={self.test_dir / 'absent'}")
        self.assertEqual(code, lcda.EXIT_RUNTIME)
        self.assertIn("HistoryError", err)


if __name__ == "__main__":
    unittest.main()
