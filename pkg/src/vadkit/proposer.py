"""Anomaly proposal stage: prompt construction, backend calls, parsing.

The proposer sees one montage per call and must return a structured
array of {description, evidence_cells, confidence}. Parsing is total:
any backend output yields a (possibly empty) proposal list, never an
exception.
"""

from __future__ import annotations

import base64
import json
import logging
import threading
import time
from dataclasses import dataclass, field, replace
from typing import Protocol

from .sampler import BinPartition, CellDecodeError, GridSample, decode_cells, montage_png
from .types import Proposal

log = logging.getLogger(__name__)

DEFAULT_CONFIDENCE = 0.5  # uninformative prior when the backend omits it


@dataclass(frozen=True)
class ProposerConfig:
    backend: str = "simulated"  # "http-chat" or "simulated"
    endpoint_url: str = ""
    model_name: str = ""
    temperature: float = 0.7
    max_retries: int = 3
    timeout: float = 60.0
    # dot-path into the response JSON holding the generated text
    response_text_path: tuple = ("choices", 0, "message", "content")

    def __post_init__(self) -> None:
        if self.temperature < 0:
            raise ValueError("temperature must be >= 0")


class CallLedger:
    """Atomic counters for backend usage plus backend wall time."""

    def __init__(self) -> None:
        self._lock = threading.Lock()
        self.vlm_calls = 0
        self.scc_calls = 0
        self.grounding_calls = 0
        self.propagation_calls = 0
        self.wall_time = 0.0

    def add(self, counter: str, n: int = 1) -> None:
        with self._lock:
            setattr(self, counter, getattr(self, counter) + n)

    def add_wall(self, seconds: float) -> None:
        with self._lock:
            self.wall_time += seconds

    def snapshot(self) -> dict:
        with self._lock:
            return {
                "vlm_calls": self.vlm_calls,
                "scc_calls": self.scc_calls,
                "grounding_calls": self.grounding_calls,
                "propagation_calls": self.propagation_calls,
                "wall_time": self.wall_time,
            }


class ProposerBackend(Protocol):
    """Produces the raw text response for one montage."""

    def generate(self, grid: GridSample, part: BinPartition, prompt: str) -> str: ...


def build_prompt(grid: GridSample, part: BinPartition) -> str:
    """Prompt text for one montage; depends only on grid geometry.

    Deliberately gives no anomaly category list: the backend decides
    what counts as anomalous on its own.
    """
    g = grid.grid_side
    K = part.K
    return (
        f"The attached image is a {g}x{g} montage of {K} frames taken in temporal order "
        f"from one surveillance clip. Cells are numbered 1..{K} row by row, left to right; "
        "the number printed in each cell's top-left corner is its cell index. "
        "Cell 1 is the earliest part of the clip and "
        f"cell {K} the latest.\n\n"
        "Inspect the montage and report every event or object that deviates from what is "
        "normal for the scene. Decide yourself what is anomalous; do not assume any fixed "
        "list of event types.\n\n"
        "Answer with a JSON array only. Each element must be an object with exactly these "
        "fields:\n"
        '  "description": short free-form description of the anomalous event,\n'
        f'  "evidence_cells": array of cell indices (1..{K}) where the event is visible,\n'
        '  "confidence": number in [0, 1].\n'
        "If nothing is anomalous, answer with an empty array []."
    )


def extract_json_array(text: str) -> list | None:
    """Find the first JSON array of objects embedded anywhere in text.

    Models often wrap their JSON in prose or code fences; scan for every
    '[' and try a strict decode from there.
    """
    decoder = json.JSONDecoder()
    for pos, ch in enumerate(text):
        if ch != "[":
            continue
        try:
            value, _ = decoder.raw_decode(text, pos)
        except json.JSONDecodeError:
            continue
        if isinstance(value, list) and all(isinstance(v, dict) for v in value):
            return value
    return None


def parse_response(text: str, part: BinPartition, source_sampling: int) -> list[Proposal]:
    """Convert backend text into proposals; invalid entries are dropped."""
    entries = extract_json_array(text)
    if entries is None:
        log.warning("proposer response carries no JSON array; treating as zero proposals")
        return []
    proposals = []
    for entry in entries:
        try:
            description = entry["description"]
            if not isinstance(description, str) or not description.strip():
                raise ValueError("bad description")
            raw_cells = entry["evidence_cells"]
            cells = {int(c) for c in raw_cells}
            interval = decode_cells(part, cells)
            if "confidence" in entry:
                confidence = float(entry["confidence"])
            else:
                confidence = DEFAULT_CONFIDENCE
                log.warning("proposal %r lacks confidence, assuming %.2f", description, confidence)
            proposals.append(
                Proposal(
                    description=description.strip(),
                    interval=interval,
                    confidence=min(1.0, max(0.0, confidence)),
                    source_sampling=source_sampling,
                    evidence_cells=frozenset(cells),
                )
            )
        except (KeyError, TypeError, ValueError, CellDecodeError) as exc:
            log.warning("dropping unparseable proposal entry %r: %s", entry, exc)
    return proposals


def propose(
    grid: GridSample,
    part: BinPartition,
    backend: ProposerBackend,
    ledger: CallLedger,
) -> list[Proposal]:
    """Run one backend call for one montage and parse the result.

    Exactly one VLM call is counted whether or not the call succeeds; a
    failed sampling contributes zero proposals so that downstream
    support statistics stay well-defined.
    """
    prompt = build_prompt(grid, part)
    ledger.add("vlm_calls")
    t0 = time.monotonic()
    try:
        text = backend.generate(grid, part, prompt)
    except Exception as exc:
        log.warning("proposer backend failed for sampling %d: %s", grid.sampling_index, exc)
        return []
    finally:
        ledger.add_wall(time.monotonic() - t0)
    return parse_response(text, part, grid.sampling_index)


class HttpChatBackend:
    """Chat-completions style HTTP backend carrying the montage as base64 PNG."""

    def __init__(self, cfg: ProposerConfig, session=None):
        import requests

        self.cfg = cfg
        self.session = session or requests.Session()

    def generate(self, grid: GridSample, part: BinPartition, prompt: str) -> str:
        image_b64 = base64.b64encode(montage_png(grid)).decode("ascii")
        body = {
            "model": self.cfg.model_name,
            "temperature": self.cfg.temperature,
            "messages": [
                {
                    "role": "user",
                    "content": [
                        {"type": "image_url", "image_url": {"url": f"data:image/png;base64,{image_b64}"}},
                        {"type": "text", "text": prompt},
                    ],
                }
            ],
        }
        return self._post(body)

    def complete_text(self, prompt: str) -> str:
        """Text-only call (used by the consolidation stage)."""
        body = {
            "model": self.cfg.model_name,
            "temperature": self.cfg.temperature,
            "messages": [{"role": "user", "content": prompt}],
        }
        return self._post(body)

    def _post(self, body: dict) -> str:
        last_exc: Exception | None = None
        for attempt in range(self.cfg.max_retries):
            try:
                resp = self.session.post(self.cfg.endpoint_url, json=body, timeout=self.cfg.timeout)
                resp.raise_for_status()
                return _dig(resp.json(), self.cfg.response_text_path)
            except Exception as exc:  # transport or schema failure
                last_exc = exc
                if attempt + 1 < self.cfg.max_retries:
                    time.sleep(min(8.0, 0.5 * 2**attempt))
        raise RuntimeError(f"backend unreachable after {self.cfg.max_retries} attempts: {last_exc}")


def _dig(doc, path):
    for key in path:
        doc = doc[key]
    if not isinstance(doc, str):
        raise ValueError(f"response field at {path} is not text")
    return doc
