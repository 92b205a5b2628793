"""Deterministic fallback scorer: fixed feature formula, no ML runtime.

The score of a text is a weighted sum of three cheap features, clamped to
[0, 1] and rounded to 6 decimals:

    length_feature    = min(1, n_chars / 4000)
    alphabetic_ratio  = alphabetic chars / n_chars
    distinct_words    = distinct whitespace words / total words

    score = 0.25 * length_feature + 0.45 * alphabetic_ratio
          + 0.30 * distinct_words          (empty text scores 0.0)

Labels come from fixed monotone thresholds: low < 0.33 <= medium < 0.66 <= high.
Every constant is part of the published contract (see the emitted manifest),
so any independent implementation produces identical score files.
"""

from __future__ import annotations

BACKEND_NAME = "heuristic-v1"

THRESHOLD_MEDIUM = 0.33
THRESHOLD_HIGH = 0.66

LENGTH_SATURATION_CHARS = 4000
WEIGHT_LENGTH = 0.25
WEIGHT_ALPHABETIC = 0.45
WEIGHT_DISTINCT_WORDS = 0.30

SCORE_DECIMALS = 6


def score_text(text: str) -> float:
    if not text:
        return 0.0
    n = len(text)
    length_feature = min(1.0, n / LENGTH_SATURATION_CHARS)
    alphabetic_ratio = sum(1 for c in text if c.isalpha()) / n
    words = text.split()
    distinct_words = len(set(words)) / len(words) if words else 0.0
    raw = (
        WEIGHT_LENGTH * length_feature
        + WEIGHT_ALPHABETIC * alphabetic_ratio
        + WEIGHT_DISTINCT_WORDS * distinct_words
    )
    return round(min(max(raw, 0.0), 1.0), SCORE_DECIMALS)


def label_for(score: float) -> str:
    if score < THRESHOLD_MEDIUM:
        return "low"
    if score < THRESHOLD_HIGH:
        return "medium"
    return "high"


class HeuristicBackend:
    """Backend facade over the module-level formula."""

    name = BACKEND_NAME
    thresholds = {"medium": THRESHOLD_MEDIUM, "high": THRESHOLD_HIGH}

    def score_batch(self, texts: list[str]) -> list[float]:
        return [score_text(t) for t in texts]

    def manifest_extras(self) -> dict:
        return {
            "score_precision": SCORE_DECIMALS,
            "features": {
                "length_saturation_chars": LENGTH_SATURATION_CHARS,
                "weights": {
                    "length": WEIGHT_LENGTH,
                    "alphabetic_ratio": WEIGHT_ALPHABETIC,
                    "distinct_words": WEIGHT_DISTINCT_WORDS,
                },
            },
        }
