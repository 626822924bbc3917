"""Step-level scoring and selection of reasoning traces.

The scoring engine is native (``grace._core``); this package adds thin
helpers for reading its JSONL outputs.
"""

from __future__ import annotations

import json
from pathlib import Path
from typing import Iterable, Mapping

from . import _core
from ._core import (
    InputError,
    ZeroVectorError,
    aggregate_token_level,
    cosine,
    history_weights,
    read_signals,
    select_top,
    selection_budget,
    upstream_signal,
    write_signals,
)

__all__ = [
    "InputError",
    "ZeroVectorError",
    "aggregate_token_level",
    "combined_values",
    "cosine",
    "history_weights",
    "read_signals",
    "score",
    "select_top",
    "selection_budget",
    "upstream_signal",
    "validate",
    "write_signals",
]

__version__ = "0.1.0"


def score(
    samples: str | Path,
    signals: Mapping[str, str | Path] | Iterable[tuple[str, str | Path]],
    *,
    alpha: float = 0.7,
    history: str = "uniform",
    target: str = "answer",
    zero_vector: str = "score_zero",
    strict: bool = True,
    jobs: int = 1,
) -> list[dict]:
    """Score every sample at every checkpoint and return the parsed JSONL lines.

    ``signals`` maps checkpoint ids to GSIG paths, in checkpoint order.
    """
    pairs = list(signals.items()) if isinstance(signals, Mapping) else list(signals)
    text = _core.score(
        Path(samples),
        [(str(k), Path(p)) for k, p in pairs],
        alpha=alpha,
        history=history,
        target=target,
        zero_vector=zero_vector,
        strict=strict,
        jobs=jobs,
    )
    return [json.loads(line) for line in text.splitlines() if line]


def combined_values(lines: Iterable[dict]) -> dict[str, float]:
    """sample_id -> checkpoint-averaged value from parsed scores lines."""
    return {l["sample_id"]: l["value"] for l in lines if l.get("type") == "combined"}


def validate(seed: int = 20240601) -> dict:
    """Run the exact-gradient oracle suite and return its report."""
    return json.loads(_core.validate(seed))
