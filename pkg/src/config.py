"""Runtime configuration: logging setup, threshold files and judge settings."""

import logging
import sys
from typing import Mapping, Optional

from .equivalence import EquivalenceThresholds, FallbackPolicy, load_thresholds
from .errors import ConfigError
from .judge import JudgeConfig

LOG_FORMAT = "%(asctime)s %(levelname)s %(name)s: %(message)s"

__all__ = ["LOG_FORMAT", "configure_logging", "judge_config", "fallback_policy",
           "load_thresholds", "EquivalenceThresholds"]


def configure_logging(verbose: bool = False) -> None:
    """Send package logs to stderr; WARNING by default, DEBUG when verbose."""
    logging.basicConfig(
        level=logging.DEBUG if verbose else logging.WARNING,
        format=LOG_FORMAT,
        stream=sys.stderr,
        force=True,
    )


def judge_config(mode: Optional[str] = None,
                 environ: Optional[Mapping[str, str]] = None) -> JudgeConfig:
    """
    Judge settings for the CLI.

    Args:
        mode: 'mock' or 'remote'; None picks remote when JUDGE_ENDPOINT is set
        environ: Mapping to read instead of the process environment
    """
    return JudgeConfig.from_env(mode=mode, environ=environ)


def fallback_policy(value: Optional[str]) -> Optional[FallbackPolicy]:
    """Parse an ``--on-judge-error`` value; None keeps the phase default."""
    if value is None:
        return None
    try:
        return FallbackPolicy(value)
    except ValueError as e:
        choices = ", ".join(p.value for p in FallbackPolicy)
        raise ConfigError(f"Unknown judge error policy {value!r} (choose from {choices})") from e
