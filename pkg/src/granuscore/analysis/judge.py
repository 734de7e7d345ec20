"""Minimal client for grading QA answers with a chat-completion endpoint."""

from __future__ import annotations

import logging
import os
import re
import threading
import time
from collections.abc import Callable, Sequence
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from importlib import resources

import httpx

from ..datasets import Outcome
from ..errors import ConfigurationError, JudgeTransportError

logger = logging.getLogger(__name__)

GRADER_TEMPLATE = "grader_v1.txt"


def load_prompt(name: str) -> str:
    """Text of a packaged prompt fixture (``granuscore/data/prompts/<name>``)."""
    return resources.files("granuscore.data.prompts").joinpath(name).read_text(encoding="utf-8")


@dataclass(frozen=True)
class JudgeConfig:
    endpoint: str
    model: str
    api_key_env: str | None = "OPENAI_API_KEY"
    timeout: float = 60.0
    max_retries: int = 3
    backoff: float = 1.0  # seconds; doubled after every failed attempt
    max_concurrency: int = 4
    temperature: float = 0.0

    def __post_init__(self):
        if self.max_retries < 0 or self.max_concurrency < 1:
            raise ConfigurationError("max_retries must be >= 0 and max_concurrency >= 1")

    @property
    def url(self) -> str:
        base = self.endpoint.rstrip("/")
        return base if base.endswith("/chat/completions") else base + "/chat/completions"


@dataclass(frozen=True)
class Verdict:
    outcome: Outcome
    parsed: bool
    raw: str


_LETTER = re.compile(r"^\W*([ABC])\b")
_WORDS = {
    "NOT_ATTEMPTED": Outcome.NOT_ATTEMPTED,
    "NOT ATTEMPTED": Outcome.NOT_ATTEMPTED,
    "INCORRECT": Outcome.WRONG,
    "CORRECT": Outcome.CORRECT,
}
_LETTERS = {"A": Outcome.CORRECT, "B": Outcome.WRONG, "C": Outcome.NOT_ATTEMPTED}


def parse_verdict(reply: str) -> Verdict:
    """Map a grader reply to an outcome; unparseable replies become not_attempted."""
    text = (reply or "").strip()
    m = _LETTER.match(text.upper())
    if m:
        return Verdict(_LETTERS[m.group(1)], True, reply)
    upper = text.upper()
    for word, outcome in _WORDS.items():  # longest alternatives first
        if re.search(rf"\b{word}\b", upper):
            return Verdict(outcome, True, reply)
    return Verdict(Outcome.NOT_ATTEMPTED, False, reply)


class JudgeClient:
    """Grades (question, gold, answer) triples against a grading template."""

    def __init__(self, config: JudgeConfig, template: str | None = None,
                 client: httpx.Client | None = None, sleep: Callable[[float], None] = time.sleep):
        self.config = config
        self.template = template if template is not None else load_prompt(GRADER_TEMPLATE)
        self._client = client or httpx.Client(timeout=config.timeout)
        self._sleep = sleep
        self._gate = threading.BoundedSemaphore(config.max_concurrency)

    def _headers(self) -> dict:
        headers = {"Content-Type": "application/json"}
        if self.config.api_key_env:
            key = os.environ.get(self.config.api_key_env)
            if key:
                headers["Authorization"] = f"Bearer {key}"
        return headers

    def prompt(self, question: str, gold: str, answer: str) -> str:
        return self.template.format(question=question, target=gold, predicted_answer=answer)

    def complete(self, prompt: str) -> str:
        body = {"model": self.config.model, "temperature": self.config.temperature,
                "messages": [{"role": "user", "content": prompt}]}
        delay = self.config.backoff
        last = None
        for attempt in range(self.config.max_retries + 1):
            try:
                with self._gate:
                    resp = self._client.post(self.config.url, json=body, headers=self._headers())
                if resp.status_code == 429 or resp.status_code >= 500:
                    last = f"HTTP {resp.status_code}"
                else:
                    resp.raise_for_status()
                    return resp.json()["choices"][0]["message"]["content"]
            except httpx.HTTPStatusError as exc:
                raise JudgeTransportError(f"grader request rejected: HTTP {exc.response.status_code}") from exc
            except (httpx.TransportError, ValueError, KeyError, IndexError) as exc:
                last = f"{type(exc).__name__}: {exc}"
            if attempt < self.config.max_retries:
                logger.warning("grader attempt %d failed (%s); retrying in %.1fs", attempt + 1, last, delay)
                self._sleep(delay)
                delay *= 2
        raise JudgeTransportError(f"grader unreachable after {self.config.max_retries + 1} attempts: {last}")

    def grade(self, question: str, gold: str, answer: str) -> Verdict:
        verdict = parse_verdict(self.complete(self.prompt(question, gold, answer)))
        if not verdict.parsed:
            logger.warning("unparseable grader reply %r; recorded as not_attempted", verdict.raw[:80])
        return verdict

    def grade_many(self, triples: Sequence[tuple[str, str, str]]) -> list[Verdict]:
        with ThreadPoolExecutor(max_workers=self.config.max_concurrency) as pool:
            return list(pool.map(lambda t: self.grade(*t), triples))

    def close(self):
        self._client.close()
