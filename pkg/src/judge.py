"""
Tier-2 semantic judge.

Sends a side-by-side screenshot pair to a remote multimodal model over a
generic multipart HTTP POST and parses its strict JSON verdict. A
label-based mock judge stands in for the remote model in tests and
offline runs.
"""

import json
import logging
import os
import threading
import time
from abc import ABC, abstractmethod
from dataclasses import dataclass
from enum import Enum
from typing import Any, Callable, Mapping, Optional

import requests

from .errors import ConfigError, JudgeResponseError, JudgeSchemaError, JudgeTransportError
from .trace_model import StateObservation

logger = logging.getLogger(__name__)

EQUIVALENCE_PROMPT = """Compare these two UI screenshots side-by-side.
Are the differences semantically meaningful?

Examples of NOT meaningful:
- Different window decorations
- Minor font rendering differences
- Timestamp changes

Examples of MEANINGFUL:
- Different form validation errors
- Different data displayed
- Different UI controls available

Please analyze the images and respond with:
1. Whether the differences are semantically meaningful (Yes/No)
2. A brief explanation of the key differences
3. Your confidence level in this assessment

Response format:
{
  "equivalent": true/false,
  "explanation": "...",
  "confidence": "high/medium/low"
}"""

BACKOFF_BASE_SECONDS = 1.0

ENV_ENDPOINT = "JUDGE_ENDPOINT"
ENV_TOKEN_VAR = "JUDGE_TOKEN_VAR"
ENV_TIMEOUT = "JUDGE_TIMEOUT"
ENV_MAX_RETRIES = "JUDGE_MAX_RETRIES"
ENV_MAX_CONCURRENCY = "JUDGE_MAX_CONCURRENCY"


class Confidence(str, Enum):
    HIGH = "high"
    MEDIUM = "medium"
    LOW = "low"


class JudgeMode(str, Enum):
    REMOTE = "remote"
    MOCK = "mock"


@dataclass(frozen=True)
class SemanticJudgment:
    """A judge's answer. ``equivalent`` is True when the differences are NOT meaningful."""
    equivalent: bool
    explanation: str
    confidence: Confidence


@dataclass(frozen=True)
class JudgeConfig:
    """Connection and behaviour settings for the semantic judge."""
    mode: JudgeMode = JudgeMode.MOCK
    endpoint: Optional[str] = None
    token_env: str = "JUDGE_TOKEN"
    timeout: float = 30.0
    max_retries: int = 3
    max_concurrency: int = 4
    cosmetic_separator: str = "#"

    def __post_init__(self) -> None:
        if self.timeout <= 0:
            raise ConfigError(f"Judge timeout must be positive, got {self.timeout}")
        if self.max_retries < 0:
            raise ConfigError(f"Judge max_retries must be >= 0, got {self.max_retries}")
        if self.max_concurrency < 1:
            raise ConfigError(f"Judge max_concurrency must be >= 1, got {self.max_concurrency}")
        if self.mode == JudgeMode.REMOTE and not self.endpoint:
            raise ConfigError(f"Remote judge needs an endpoint (set {ENV_ENDPOINT})")

    @classmethod
    def from_env(cls, mode: Optional[str] = None,
                 environ: Optional[Mapping[str, str]] = None) -> "JudgeConfig":
        """
        Build a config from environment variables.

        Args:
            mode: 'mock' or 'remote'; when None, remote if JUDGE_ENDPOINT is set
            environ: Mapping to read instead of ``os.environ``
        """
        env = os.environ if environ is None else environ
        endpoint = env.get(ENV_ENDPOINT) or None
        if mode is None:
            mode = JudgeMode.REMOTE.value if endpoint else JudgeMode.MOCK.value
        try:
            return cls(
                mode=JudgeMode(mode),
                endpoint=endpoint,
                token_env=env.get(ENV_TOKEN_VAR, "JUDGE_TOKEN"),
                timeout=float(env.get(ENV_TIMEOUT, 30.0)),
                max_retries=int(env.get(ENV_MAX_RETRIES, 3)),
                max_concurrency=int(env.get(ENV_MAX_CONCURRENCY, 4)),
            )
        except ValueError as e:
            raise ConfigError(f"Invalid judge configuration: {e}") from e


def parse_judgment(payload: Any) -> SemanticJudgment:
    """
    Parse a decoded response body against the response schema.

    Every field must be present with the right type; nothing is defaulted.

    Raises:
        JudgeSchemaError: missing field, wrong type or unknown confidence
    """
    if not isinstance(payload, dict):
        raise JudgeSchemaError(f"Judge response must be a JSON object, got {type(payload).__name__}")
    for key in ("equivalent", "explanation", "confidence"):
        if key not in payload:
            raise JudgeSchemaError(f"Judge response is missing '{key}'")
    extra = set(payload) - {"equivalent", "explanation", "confidence"}
    if extra:
        logger.debug("Ignoring extra judge response fields: %s", sorted(extra))
    if not isinstance(payload["equivalent"], bool):
        raise JudgeSchemaError("'equivalent' must be a boolean")
    if not isinstance(payload["explanation"], str):
        raise JudgeSchemaError("'explanation' must be a string")
    try:
        confidence = Confidence(payload["confidence"])
    except (ValueError, TypeError) as e:
        raise JudgeSchemaError(f"Unknown confidence {payload['confidence']!r}") from e
    return SemanticJudgment(payload["equivalent"], payload["explanation"], confidence)


def parse_response_text(text: str) -> SemanticJudgment:
    """Decode a raw response body and parse it strictly."""
    try:
        payload = json.loads(text)
    except (json.JSONDecodeError, TypeError) as e:
        raise JudgeResponseError(f"Judge response is not JSON: {text[:200]!r}") from e
    return parse_judgment(payload)


class SemanticJudge(ABC):
    """Decides whether two observations differ in a meaningful way."""

    @abstractmethod
    def judge(self, a: StateObservation, b: StateObservation) -> SemanticJudgment:
        ...


def _strip_cosmetic(label: str, separator: str) -> str:
    return label.split(separator, 1)[0] if separator else label


def mock_judge(a: StateObservation, b: StateObservation,
               cosmetic_separator: str = "#") -> SemanticJudgment:
    """
    Label-based stand-in for the remote judge.

    Labels are compared after dropping everything from ``cosmetic_separator``
    on, so ``results#fontA`` and ``results#fontB`` are equivalent. Unlabeled
    observations are never equivalent.
    """
    if not a.label or not b.label:
        return SemanticJudgment(False, "Unlabeled observation; mock judge cannot compare",
                                Confidence.HIGH)
    base_a = _strip_cosmetic(a.label, cosmetic_separator)
    base_b = _strip_cosmetic(b.label, cosmetic_separator)
    if base_a == base_b:
        return SemanticJudgment(True, f"Both observations show '{base_a}'", Confidence.HIGH)
    # order-independent explanation
    first, second = sorted((base_a, base_b))
    return SemanticJudgment(False, f"'{first}' and '{second}' are different states",
                            Confidence.HIGH)


class MockJudge(SemanticJudge):
    """Deterministic judge driven by observation labels."""

    def __init__(self, cosmetic_separator: str = "#"):
        self.cosmetic_separator = cosmetic_separator

    def judge(self, a: StateObservation, b: StateObservation) -> SemanticJudgment:
        return mock_judge(a, b, self.cosmetic_separator)


class RemoteJudge(SemanticJudge):
    """Multipart-POST client for a remote multimodal judge."""

    def __init__(self, config: JudgeConfig,
                 session: Optional[requests.Session] = None,
                 sleep: Callable[[float], None] = time.sleep):
        self.config = config
        self.session = session or requests.Session()
        self._sleep = sleep
        self._slots = threading.BoundedSemaphore(config.max_concurrency)

    def _headers(self) -> dict:
        token = os.environ.get(self.config.token_env)
        return {"Authorization": f"Bearer {token}"} if token else {}

    def _post_once(self, a: StateObservation, b: StateObservation) -> requests.Response:
        with open(a.image, "rb") as fa, open(b.image, "rb") as fb:
            files = {
                "prompt": (None, EQUIVALENCE_PROMPT),
                "image_a": ("image_a.png", fa.read(), "image/png"),
                "image_b": ("image_b.png", fb.read(), "image/png"),
            }
        try:
            response = self.session.post(self.config.endpoint, files=files,
                                         headers=self._headers(), timeout=self.config.timeout)
        except requests.RequestException as e:
            raise JudgeTransportError(f"Judge request failed: {e}") from e
        if response.status_code >= 400:
            raise JudgeTransportError(f"Judge answered HTTP {response.status_code}")
        return response

    def judge(self, a: StateObservation, b: StateObservation) -> SemanticJudgment:
        attempts = self.config.max_retries + 1
        with self._slots:
            for attempt in range(attempts):
                try:
                    response = self._post_once(a, b)
                    break
                except JudgeTransportError as e:
                    if attempt == attempts - 1:
                        raise
                    delay = BACKOFF_BASE_SECONDS * (2 ** attempt)
                    logger.warning("%s; retrying in %.0fs (%d/%d)", e, delay, attempt + 1,
                                   self.config.max_retries)
                    self._sleep(delay)
        # schema problems are never retried
        return parse_response_text(response.text)


def build_judge(config: JudgeConfig) -> SemanticJudge:
    """Instantiate the judge selected by ``config.mode``."""
    if config.mode == JudgeMode.REMOTE:
        return RemoteJudge(config)
    return MockJudge(config.cosmetic_separator)


def judge_pair(a: StateObservation, b: StateObservation, config: JudgeConfig) -> SemanticJudgment:
    """Ask the configured judge whether two observations are the same logical state."""
    return build_judge(config).judge(a, b)
