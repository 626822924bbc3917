"""Signal extraction from a causal model into the samples JSONL + GSIG formats.

One forward pass per sample gives next-token probabilities p_t over the full
vocabulary. With the output projection W_out (d x V) and the supervised
targets y_t, each token contributes u_t = W_out (p_t - onehot(y_t)); segment
means of u_t are the stored proxies. No backward pass is needed.

The model side is behind ``ForwardModel`` so the numeric path can be checked
without a real checkpoint.
"""

from __future__ import annotations

import argparse
import json
import logging
import re
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Iterable, Protocol, Sequence

import numpy as np

from . import _core

log = logging.getLogger("grace.extract")

# A new segment starts at a line that opens with a step number ("1.", "2)",
# "Step 3:") or with "Answer"; the last segment is the answer.
DEFAULT_DELIMITER = r"\n(?=[ \t]*(?:(?:Step[ \t]*)?\d+[.):]|(?:Final )?Answer\b))"


@dataclass
class ExtractionRecipe:
    model: str
    checkpoint_id: str
    out_dir: Path
    delimiter: str | None = DEFAULT_DELIMITER
    spans_path: Path | None = None  # explicit span annotations instead of a delimiter
    batch_size: int = 1
    precision: str = "float32"
    dump_token_level: bool = False

    def validate(self) -> None:
        if not self.checkpoint_id:
            raise ValueError("checkpoint id must not be empty")
        if (self.delimiter is None) == (self.spans_path is None):
            raise ValueError("give exactly one of a delimiter regex or a spans file")
        if self.delimiter is not None:
            re.compile(self.delimiter)
        if self.batch_size < 1:
            raise ValueError("batch size must be >= 1")
        if self.precision not in ("float32", "float64", "bfloat16", "float16"):
            raise ValueError(f"unsupported precision {self.precision!r}")

    def describe(self) -> dict:
        d = asdict(self)
        return {k: (str(v) if isinstance(v, Path) else v) for k, v in d.items()}


class ForwardModel(Protocol):
    def output_projection(self) -> np.ndarray:
        """W_out as a (d, V) array."""

    def forward(self, text: str) -> tuple[np.ndarray, np.ndarray, list[tuple[int, int]]]:
        """One forward pass over a trace. Returns (logits (T, V), targets (T,),
        char offsets (T,) of the supervised tokens in ``text``). Must not build a
        gradient graph."""


def upstream_signals(logits: np.ndarray, targets: np.ndarray, w_out: np.ndarray) -> np.ndarray:
    """u_t = W_out (softmax(logits_t) - onehot(y_t)) for every row, shape (T, d)."""
    logits = np.asarray(logits, dtype=np.float64)
    z = logits - logits.max(axis=1, keepdims=True)
    p = np.exp(z)
    p /= p.sum(axis=1, keepdims=True)
    p[np.arange(len(targets)), np.asarray(targets)] -= 1.0
    return p @ np.asarray(w_out, dtype=np.float64).T


def segment(text: str, offsets: Sequence[tuple[int, int]], delimiter: str) -> tuple[list[list[int]], list[int]]:
    """Split supervised tokens into step spans and a final answer span.

    Pieces of ``text`` between delimiter matches become segments; the last one is
    the answer. A token belongs to the segment its first character falls in.
    Returns token-index spans [begin, end) or raises ValueError when a segment
    ends up empty.
    """
    cuts = [m.end() for m in re.finditer(delimiter, text)]
    bounds = [0, *cuts, len(text) + 1]
    owner = []
    for start, _ in offsets:
        seg = next(i for i in range(len(bounds) - 1) if bounds[i] <= start < bounds[i + 1])
        owner.append(seg)
    if any(b < a for a, b in zip(owner, owner[1:])):
        raise ValueError("token offsets are not in text order")
    spans: list[list[int]] = []
    for seg in range(len(bounds) - 1):
        idx = [t for t, o in enumerate(owner) if o == seg]
        if not idx:
            raise ValueError(f"segment {seg} has no supervised tokens")
        spans.append([idx[0], idx[-1] + 1])
    if len(spans) < 2:
        raise ValueError("need at least one step and an answer")
    return spans[:-1], spans[-1]


@dataclass
class ExtractionSummary:
    written: int = 0
    skipped: dict[str, str] = field(default_factory=dict)


def extract(recipe: ExtractionRecipe, rows: Iterable[dict], model: ForwardModel) -> ExtractionSummary:
    """Write samples.jsonl, signals.gsig and extraction.json under recipe.out_dir.

    Each row needs ``sample_id`` and ``text``; with a spans file the row's
    ``steps``/``answer`` token spans are used instead of the delimiter.
    """
    recipe.validate()
    out = Path(recipe.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    w_out = np.asarray(model.output_projection(), dtype=np.float64)
    summary = ExtractionSummary()
    records, lines = [], []
    for row in rows:
        sid = row["sample_id"]
        logits, targets, offsets = model.forward(row["text"])
        if not isinstance(logits, np.ndarray):
            raise TypeError("forward must return detached numpy arrays")
        try:
            if recipe.spans_path is not None:
                steps, answer = row["steps"], row["answer"]
            else:
                steps, answer = segment(row["text"], offsets, recipe.delimiter)
        except ValueError as e:
            log.warning("skipping %s: %s", sid, e)
            summary.skipped[sid] = str(e)
            continue
        line = json.dumps({"sample_id": sid, "steps": steps, "answer": answer}, separators=(",", ":"))
        u = upstream_signals(logits, targets, w_out).astype(np.float32)
        record = _core.aggregate_token_level(line, list(range(len(u))), u, recipe.checkpoint_id)
        if not recipe.dump_token_level:
            record["token_indices"] = None
            record["token_values"] = None
        records.append(record)
        lines.append(line)
        summary.written += 1
    if not records:
        raise ValueError("no sample survived segmentation")
    (out / "samples.jsonl").write_text("".join(l + "\n" for l in lines), encoding="utf-8")
    _core.write_signals(records, out / "signals.gsig")
    # GSIG has no metadata block, so the segmentation rule and precision go here.
    meta = {"recipe": recipe.describe(), "written": summary.written, "skipped": summary.skipped}
    (out / "extraction.json").write_text(json.dumps(meta, indent=2) + "\n", encoding="utf-8")
    return summary


def main(argv: Sequence[str] | None = None) -> int:
    ap = argparse.ArgumentParser(prog="grace-extract", description=__doc__.splitlines()[0])
    ap.add_argument("--model", required=True)
    ap.add_argument("--checkpoint-id", required=True)
    ap.add_argument("--data", required=True, type=Path, help="JSONL rows with sample_id and text")
    ap.add_argument("--out", required=True, type=Path)
    rule = ap.add_mutually_exclusive_group()
    rule.add_argument("--delimiter", default=None)
    rule.add_argument("--spans", type=Path, default=None)
    ap.add_argument("--batch-size", type=int, default=1)
    ap.add_argument("--precision", default="float32")
    ap.add_argument("--dump-token-level", action="store_true")
    args = ap.parse_args(argv)
    recipe = ExtractionRecipe(
        model=args.model,
        checkpoint_id=args.checkpoint_id,
        out_dir=args.out,
        delimiter=None if args.spans else (args.delimiter or DEFAULT_DELIMITER),
        spans_path=args.spans,
        batch_size=args.batch_size,
        precision=args.precision,
        dump_token_level=args.dump_token_level,
    )
    recipe.validate()
    # TODO: a transformers-backed ForwardModel (AutoModelForCausalLM under
    # torch.inference_mode, lm_head.weight.T as W_out) to back this entry point.
    ap.error(f"no model backend available for {recipe.model!r}")
    return 2


if __name__ == "__main__":
    raise SystemExit(main())
