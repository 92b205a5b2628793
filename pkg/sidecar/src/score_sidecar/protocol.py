"""Line protocol: JSON requests in, JSON responses out, order preserving.

A request line is a JSON object with at least ``id`` (non-empty string) and
``text`` (string); extra fields (as found in corpus shard files) are
ignored. Each well-formed request yields exactly one response line
``{"id", "score", "label"}`` in input order. A malformed line yields one
error record ``{"error", "line"}`` carrying its 1-based line number, and
processing continues.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Iterable, Iterator

PROTOCOL_VERSION = 1


class ProtocolError(Exception):
    pass


@dataclass(frozen=True)
class ScoringRequest:
    id: str
    text: str


@dataclass(frozen=True)
class ScoringResponse:
    id: str
    score: float
    label: str

    def to_json(self) -> str:
        return json.dumps(
            {"id": self.id, "score": self.score, "label": self.label}, ensure_ascii=False
        )


def parse_request(line: str) -> ScoringRequest:
    try:
        raw = json.loads(line)
    except json.JSONDecodeError as exc:
        raise ProtocolError(f"invalid JSON: {exc}") from exc
    if not isinstance(raw, dict):
        raise ProtocolError("request must be a JSON object")
    doc_id = raw.get("id")
    text = raw.get("text")
    if not isinstance(doc_id, str) or not doc_id:
        raise ProtocolError("field 'id' must be a non-empty string")
    if not isinstance(text, str):
        raise ProtocolError("field 'text' missing or not a string")
    return ScoringRequest(id=doc_id, text=text)


def label_from_thresholds(score: float, thresholds: dict) -> str:
    if score < thresholds["medium"]:
        return "low"
    if score < thresholds["high"]:
        return "medium"
    return "high"


def score_stream(
    lines: Iterable[str], backend, batch_size: int = 64
) -> Iterator[dict]:
    """One output record per input line: a response, or an error record."""
    pending: list[tuple[int, ScoringRequest]] = []
    emitted_errors: dict[int, dict] = {}
    order: list[tuple[str, int]] = []  # ("req", pending-idx) / ("err", line_no)

    def flush() -> Iterator[dict]:
        nonlocal pending, order
        scores = backend.score_batch([req.text for _, req in pending]) if pending else []
        responses = {
            idx: ScoringResponse(
                id=req.id,
                score=scores[i],
                label=label_from_thresholds(scores[i], backend.thresholds),
            )
            for i, (idx, req) in enumerate(pending)
        }
        for kind, key in order:
            if kind == "req":
                yield {"id": responses[key].id, "score": responses[key].score,
                       "label": responses[key].label}
            else:
                yield emitted_errors[key]
        pending = []
        order = []
        emitted_errors.clear()

    for line_no, line in enumerate(lines, start=1):
        line = line.rstrip("\n")
        if not line:
            continue
        try:
            request = parse_request(line)
        except ProtocolError as exc:
            emitted_errors[line_no] = {"error": str(exc), "line": line_no}
            order.append(("err", line_no))
            continue
        pending.append((line_no, request))
        order.append(("req", line_no))
        if len(pending) >= batch_size:
            yield from flush()
    yield from flush()


def manifest_record(backend) -> dict:
    record = {
        "backend": backend.name,
        "protocol": PROTOCOL_VERSION,
        "thresholds": dict(backend.thresholds),
        "labels": ["low", "medium", "high"],
        "label_rule": "low if score < thresholds.medium, medium if score < thresholds.high, else high",
    }
    record.update(backend.manifest_extras())
    return record
