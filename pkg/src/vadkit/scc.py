"""Self-consistency consolidation of pooled proposals.

Proposals from the M samplings of one clip are grouped into clusters
that describe the same event, intervals are merged by min-start /
max-end, and clusters without enough distinct-sampling support are
dropped. Two consolidators exist: an LLM backend (the faithful one,
reusing the proposer's text wire) and a deterministic token-overlap
clusterer that serves as offline fallback and testing spine.
"""

from __future__ import annotations

import json
import logging
import re
import time
from dataclasses import dataclass
from typing import Protocol

from .proposer import CallLedger, extract_json_array
from .types import ConsolidatedProposal, Proposal

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class SccConfig:
    tau: int = 3
    mode: str = "deterministic"  # "llm" or "deterministic"
    similarity_floor: float = 0.5

    def __post_init__(self) -> None:
        if self.tau < 1:
            raise ValueError("tau must be >= 1")
        if not 0.0 <= self.similarity_floor <= 1.0:
            raise ValueError("similarity_floor must be in [0, 1]")


class TextBackend(Protocol):
    def complete_text(self, prompt: str) -> str: ...


_WORD = re.compile(r"[a-z0-9]+")


def token_set_similarity(a: str, b: str) -> float:
    """Case-folded word-set Jaccard similarity."""
    ta = set(_WORD.findall(a.lower()))
    tb = set(_WORD.findall(b.lower()))
    if not ta and not tb:
        return 1.0
    if not ta or not tb:
        return 0.0
    return len(ta & tb) / len(ta | tb)


def _linked(a: Proposal, b: Proposal, floor: float) -> bool:
    # same event: similar wording AND temporally overlapping or abutting
    # (bin-quantized intervals from adjacent samplings commonly abut)
    return (
        token_set_similarity(a.description, b.description) >= floor
        and a.interval.overlaps_or_abuts(b.interval)
    )


def _canonical_description(members: list[Proposal]) -> str:
    # highest-confidence wording, earliest sampling breaking ties
    best = max(members, key=lambda m: (m.confidence, -m.source_sampling))
    return best.description


def _sort_output(entries: list[ConsolidatedProposal]) -> list[ConsolidatedProposal]:
    return sorted(entries, key=lambda c: (-c.support, -c.confidence, c.interval.start))


def deterministic_consolidate(pooled: list[Proposal], cfg: SccConfig) -> list[ConsolidatedProposal]:
    """Single-linkage clustering under the description/interval link rule."""
    n = len(pooled)
    parent = list(range(n))

    def find(i: int) -> int:
        while parent[i] != i:
            parent[i] = parent[parent[i]]
            i = parent[i]
        return i

    for i in range(n):
        for j in range(i + 1, n):
            if _linked(pooled[i], pooled[j], cfg.similarity_floor):
                parent[find(i)] = find(j)

    clusters: dict[int, list[Proposal]] = {}
    for i in range(n):
        clusters.setdefault(find(i), []).append(pooled[i])
    out = [
        ConsolidatedProposal.from_members(_canonical_description(members), members)
        for members in clusters.values()
    ]
    return _sort_output(out)


def build_scc_prompt(pooled: list[Proposal]) -> str:
    """Text-only consolidation prompt; entries are echoed by member id."""
    listing = [
        {
            "id": i,
            "description": p.description,
            "start": p.interval.start,
            "end": p.interval.end,
            "sampling": p.source_sampling,
        }
        for i, p in enumerate(pooled)
    ]
    return (
        "Below are candidate anomaly reports collected from several independent looks at "
        "the same video clip. Reports that describe the same object or event (possibly "
        "worded differently) must be grouped into one entry; genuinely different events "
        "must stay separate.\n\n"
        f"Candidates:\n{json.dumps(listing, indent=1)}\n\n"
        "Answer with a JSON array only. Each element must be an object with fields:\n"
        '  "description": one canonical description for the group,\n'
        '  "members": array of candidate ids belonging to the group.\n'
        "Every candidate id must appear in exactly one group. If the candidate list is "
        "empty, answer []."
    )


def _parse_scc_groups(text: str, pooled: list[Proposal]) -> list[ConsolidatedProposal]:
    entries = extract_json_array(text)
    if entries is None:
        raise ValueError("consolidator response carries no JSON array")
    seen: set[int] = set()
    out = []
    for entry in entries:
        ids = [int(i) for i in entry["members"]]
        if (
            not ids
            or len(set(ids)) != len(ids)
            or any(i < 0 or i >= len(pooled) for i in ids)
            or seen & set(ids)
        ):
            raise ValueError(f"bad membership {ids}")
        seen.update(ids)
        members = [pooled[i] for i in ids]
        description = str(entry.get("description") or _canonical_description(members))
        # support and interval are recomputed from the echoed membership,
        # never trusted from the backend's own arithmetic
        out.append(ConsolidatedProposal.from_members(description, members))
    if seen != set(range(len(pooled))):
        raise ValueError("consolidator did not assign every candidate")
    return _sort_output(out)


def consolidate(
    pooled: list[Proposal],
    M: int,
    cfg: SccConfig,
    ledger: CallLedger,
    text_backend: TextBackend | None = None,
) -> list[ConsolidatedProposal]:
    """One consolidation pass over the pooled proposals of one clip.

    Counts one SCC pass on the ledger in either mode; in llm mode that
    pass is an actual text-only backend call. An llm failure falls back
    to the deterministic clusterer with a warning.
    """
    if any(not (1 <= p.source_sampling <= M) for p in pooled):
        raise ValueError(f"proposal source_sampling outside [1, {M}]")
    ledger.add("scc_calls")
    if cfg.mode == "llm":
        if text_backend is None:
            raise ValueError("llm mode requires a text backend")
        t0 = time.monotonic()
        try:
            text = text_backend.complete_text(build_scc_prompt(pooled))
            return _parse_scc_groups(text, pooled)
        except Exception as exc:
            log.warning("llm consolidation failed (%s); falling back to deterministic", exc)
        finally:
            ledger.add_wall(time.monotonic() - t0)
    return deterministic_consolidate(pooled, cfg)


def filter_support(
    consolidated: list[ConsolidatedProposal], tau: int
) -> list[ConsolidatedProposal]:
    """Keep exactly the entries with support >= tau, preserving order."""
    if tau < 1:
        raise ValueError("tau must be >= 1")
    return [c for c in consolidated if c.support >= tau]
