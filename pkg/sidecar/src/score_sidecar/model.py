"""Optional classifier backend wrapping a Hugging Face text-classification model.

Requires the ``model`` extra (transformers + torch). The wrapped model's
class probabilities are collapsed to one score in [0, 1]:

* models with Low/Medium/High heads: score = P(high) + 0.5 * P(medium)
* binary or single-logit models: score = positive-class probability

Labels always come from the same monotone thresholds as the heuristic
backend, so downstream consumers can re-derive them from the manifest.
"""

from __future__ import annotations

from .heuristic import THRESHOLD_HIGH, THRESHOLD_MEDIUM


class ModelLoadError(Exception):
    pass


class ModelBackend:
    thresholds = {"medium": THRESHOLD_MEDIUM, "high": THRESHOLD_HIGH}

    def __init__(self, model_path: str, batch_size: int = 16):
        self.name = f"model:{model_path}"
        self._batch_size = batch_size
        try:
            from transformers import pipeline
        except ImportError as exc:
            raise ModelLoadError(
                "the model backend needs the 'model' extra (pip install score-sidecar[model])"
            ) from exc
        try:
            self._pipe = pipeline(
                "text-classification", model=model_path, top_k=None, truncation=True
            )
        except Exception as exc:
            raise ModelLoadError(f"could not load model {model_path!r}: {exc}") from exc

    def _collapse(self, result: list[dict]) -> float:
        probs = {entry["label"].lower(): float(entry["score"]) for entry in result}
        if "high" in probs or "medium" in probs:
            return min(1.0, max(0.0, probs.get("high", 0.0) + 0.5 * probs.get("medium", 0.0)))
        positive = probs.get("positive", probs.get("label_1"))
        if positive is None:
            positive = max(probs.values())
        return min(1.0, max(0.0, positive))

    def score_batch(self, texts: list[str]) -> list[float]:
        scores: list[float] = []
        for start in range(0, len(texts), self._batch_size):
            chunk = texts[start : start + self._batch_size]
            for result in self._pipe(chunk):
                scores.append(round(self._collapse(result), 6))
        return scores

    def manifest_extras(self) -> dict:
        return {"score_precision": 6, "batch_size": self._batch_size}
