"""score-sidecar: document-quality scoring behind a simple line protocol."""

__version__ = "0.1.0"

from .heuristic import BACKEND_NAME, HeuristicBackend, label_for, score_text
from .protocol import (
    ProtocolError,
    ScoringRequest,
    ScoringResponse,
    label_from_thresholds,
    manifest_record,
    parse_request,
    score_stream,
)

__all__ = [
    "BACKEND_NAME",
    "HeuristicBackend",
    "ProtocolError",
    "ScoringRequest",
    "ScoringResponse",
    "label_for",
    "label_from_thresholds",
    "manifest_record",
    "parse_request",
    "score_stream",
    "score_text",
]
