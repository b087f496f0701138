"""
Tests for the chat-completion client, transcripts and replay.
No network access: the HTTP session is a mock.
"""

import os
import shutil
import sys
import tempfile
import unittest
from pathlib import Path
from unittest.mock import MagicMock, patch

import requests

sys.path.insert(0, os.path.dirname(os.path.abspath(__file__)))

from errors import (
    AuthenticationError,
    LlmError,
    MalformedReplyError,
    ReplayDivergenceError,
    RetriesExhaustedError,
    TranscriptError,
)
from llm_client import (
    ChatCompletionClient,
    LlmRequest,
    ReplayClient,
    Transcript,
    TranscriptEntry,
    TranscriptWriter,
    build_request,
    load_transcript,
    record,
    request_digest,
)

SECRET = "sk-test-not-a-real-key"


def reply(content="[[16,3]]", status=200):
    response = MagicMock()
    response.status_code = status
    response.json.return_value = {"choices": [{"message": {"role": "assistant", "content": content}}]}
    return response


def make_request(user="Suggest a rollout."):
    return build_request([("system", "You are an expert."), ("user", user)], model_id="gpt-4")


class TestLlmRequest(unittest.TestCase):
    def test_role_order(self):
        with self.assertRaises(ValueError):
            LlmRequest("gpt-4", (("user", "hi"),))
        with self.assertRaises(ValueError):
            LlmRequest("gpt-4", (("system", "s"), ("assistant", "a")))
        with self.assertRaises(ValueError):
            LlmRequest("gpt-4", (("system", "s"), ("tool", "t"), ("user", "u")))

    def test_parameter_ranges(self):
        with self.assertRaises(ValueError):
            LlmRequest("gpt-4", (("system", "s"), ("user", "u")), temperature=-0.1)
        with self.assertRaises(ValueError):
            LlmRequest("gpt-4", (("system", "s"), ("user", "u")), max_tokens=0)

    def test_digest(self):
        self.assertEqual(request_digest(make_request()), request_digest(make_request()))
        self.assertNotEqual(request_digest(make_request()), request_digest(make_request("other")))
        self.assertEqual(len(request_digest(make_request())), 64)


class TestChatCompletionClient(unittest.TestCase):
    def setUp(self):
        self.session = MagicMock()
        self.sleeps = []

    def client(self, **kwargs):
        return ChatCompletionClient(endpoint="https://llm.example/v1/", model_id="gpt-4",
                                    session=self.session, sleep=self.sleeps.append, **kwargs)

    @patch.dict(os.environ, {"LCDA_API_KEY": SECRET})
    def test_success(self):
        self.session.post.return_value = reply("[[32,3]]")
        client = self.client()
        self.assertEqual(client.complete(make_request()), "[[32,3]]")

        args, kwargs = self.session.post.call_args
        self.assertEqual(args[0], "https://llm.example/v1/chat/completions")
        self.assertEqual(kwargs["headers"]["Authorization"], f"Bearer {SECRET}")
        self.assertEqual(kwargs["json"]["messages"][0], {"role": "system", "content": "You are an expert."})
        self.assertEqual(len(client.transcript), 1)
        self.assertEqual(client.transcript.entries[0].digest, request_digest(make_request()))

    @patch.dict(os.environ, {}, clear=True)
    def test_no_key_sends_no_credential(self):
        self.session.post.return_value = reply()
        self.client().complete(make_request())
        _, kwargs = self.session.post.call_args
        self.assertNotIn("Authorization", kwargs["headers"])

    def test_auth_failure_is_not_retried(self):
        self.session.post.return_value = reply(status=401)
        with self.assertRaises(AuthenticationError):
            self.client().complete(make_request())
        self.assertEqual(self.session.post.call_count, 1)
        self.assertEqual(self.sleeps, [])

    def test_transient_errors_are_retried(self):
        self.session.post.side_effect = [reply(status=503), requests.ConnectionError("reset"), reply("ok")]
        self.assertEqual(self.client().complete(make_request()), "ok")
        self.assertEqual(self.sleeps, [1.0, 2.0])

    def test_retries_exhausted(self):
        self.session.post.return_value = reply(status=429)
        with self.assertRaises(RetriesExhaustedError):
            self.client(max_retries=3, backoff=1.0).complete(make_request())
        self.assertEqual(self.session.post.call_count, 4)
        self.assertEqual(self.sleeps, [1.0, 2.0, 4.0])

    def test_other_status_fails(self):
        self.session.post.return_value = reply(status=400)
        with self.assertRaises(LlmError) as ctx:
            self.client().complete(make_request())
        self.assertNotIsInstance(ctx.exception, RetriesExhaustedError)

    def test_malformed_bodies(self):
        not_json = MagicMock(status_code=200)
        not_json.json.side_effect = ValueError("no json")
        no_choices = MagicMock(status_code=200)
        no_choices.json.return_value = {"choices": []}
        not_text = MagicMock(status_code=200)
        not_text.json.return_value = {"choices": [{"message": {"content": None}}]}
        for response in (not_json, no_choices, not_text):
            self.session.post.return_value = response
            with self.assertRaises(MalformedReplyError):
                self.client().complete(make_request())

    @patch.dict(os.environ, {"LCDA_API_KEY": SECRET})
    def test_writer_never_sees_the_key(self):
        test_dir = tempfile.mkdtemp()
        try:
            path = Path(test_dir) / "transcript.jsonl"
            self.session.post.return_value = reply("[[16,3]]")
            client = self.client(writer=TranscriptWriter(path))
            client.complete(make_request())
            self.assertNotIn(SECRET, path.read_text(encoding="utf-8"))
            self.assertEqual(load_transcript(path), client.transcript)
        finally:
            shutil.rmtree(test_dir)

    def test_resumed_client_reuses_recorded_replies(self):
        test_dir = tempfile.mkdtemp()
        try:
            path = Path(test_dir) / "transcript.jsonl"
            self.session.post.return_value = reply("[[32,3]]")
            self.client(writer=TranscriptWriter(path)).complete(make_request())
            before = path.read_bytes()

            self.session.post.return_value = reply("[[64,3]]")
            resumed = self.client(writer=TranscriptWriter(path, resume=True))
            self.assertEqual(resumed.complete(make_request()), "[[32,3]]")
            self.assertEqual(self.session.post.call_count, 1)
            self.assertEqual(path.read_bytes(), before)

            self.assertEqual(resumed.complete(make_request("next")), "[[64,3]]")
            self.assertEqual(self.session.post.call_count, 2)
            self.assertEqual(len(load_transcript(path)), 2)
            self.assertEqual(load_transcript(path), resumed.transcript)
        finally:
            shutil.rmtree(test_dir)


class TestTranscript(unittest.TestCase):
    def setUp(self):
        self.test_dir = tempfile.mkdtemp()
        self.path = Path(self.test_dir) / "transcript.jsonl"

    def tearDown(self):
        shutil.rmtree(self.test_dir)

    def test_record_and_load(self):
        transcript = Transcript([TranscriptEntry("a" * 64, "[[16,3]]", "2026-01-01T00:00:00"),
                                 TranscriptEntry("b" * 64, "no idea", "2026-01-01T00:00:01")])
        record(transcript, self.path)
        self.assertEqual(load_transcript(self.path), transcript)

    def test_duplicate_digest(self):
        with self.assertRaises(TranscriptError):
            Transcript([TranscriptEntry("a", "x", ""), TranscriptEntry("a", "y", "")])
        transcript = Transcript([TranscriptEntry("a", "x", "")])
        with self.assertRaises(TranscriptError):
            transcript.append(TranscriptEntry("a", "z", ""))

    def test_history_file_is_not_a_transcript(self):
        self.path.write_text('{"format": "lcda-history", "version": 1}\n', encoding="utf-8")
        with self.assertRaises(TranscriptError):
            load_transcript(self.path)

    def test_missing_field(self):
        self.path.write_text('{"format": "lcda-transcript", "version": 1}\n{"digest": "a"}\n', encoding="utf-8")
        with self.assertRaises(TranscriptError):
            load_transcript(self.path)


class TestReplayClient(unittest.TestCase):
    def setUp(self):
        self.first, self.second = make_request("one"), make_request("two")
        self.transcript = Transcript([
            TranscriptEntry(request_digest(self.first), "reply one", ""),
            TranscriptEntry(request_digest(self.second), "reply two", ""),
        ])

    def test_serves_in_order(self):
        client = ReplayClient(self.transcript)
        self.assertEqual(client.complete(self.first), "reply one")
        self.assertEqual(client.complete(self.second), "reply two")
        self.assertTrue(client.exhausted)

    def test_divergence(self):
        client = ReplayClient(self.transcript)
        client.complete(self.first)
        with self.assertRaises(ReplayDivergenceError) as ctx:
            client.complete(make_request("three"))
        self.assertEqual(ctx.exception.call_index, 1)
        self.assertEqual(ctx.exception.expected, request_digest(self.second))

    def test_exhausted(self):
        client = ReplayClient(Transcript())
        with self.assertRaises(ReplayDivergenceError) as ctx:
            client.complete(self.first)
        self.assertIsNone(ctx.exception.expected)
        self.assertIn("episode 4", str(ctx.exception.at_episode(4)))


if __name__ == "__main__":
    unittest.main()
