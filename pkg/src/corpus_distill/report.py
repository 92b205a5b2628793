"""Stage-by-stage corpus accounting and mixture-weight arithmetic.

Accounting is kept in raw token/document integers; rendering converts to
billions only for display. The rendered table has one row per source, a
"start" column, one column per stage (tokens remaining after that stage),
and a totals row; per-stage removal fractions are appended underneath.

Mixture weights solve for per-source epoch multipliers that realize target
proportions: weight(s) = target(s) * total_effective / native(s), with
total_effective fixed so the smallest weight is exactly 1 (sources already
at their natural proportion are not repeated).
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping

from .errors import DataError


@dataclass
class StageCell:
    """Per (source, stage) flow counts. Document counts may be unknown."""

    tokens_in: int
    tokens_out: int
    documents_in: int | None = None
    documents_out: int | None = None

    def validate(self, context: str) -> None:
        if self.tokens_out > self.tokens_in:
            raise DataError(f"{context}: tokens_out {self.tokens_out} > tokens_in {self.tokens_in}")
        if (
            self.documents_in is not None
            and self.documents_out is not None
            and self.documents_out > self.documents_in
        ):
            raise DataError(f"{context}: documents_out > documents_in")


class StageAccounting:
    """Token/document counts per source at each pipeline stage."""

    def __init__(self, sources: Iterable[str], stages: Iterable[str]):
        self.sources = list(sources)
        self.stages = list(stages)
        self._cells: dict[tuple[str, str], StageCell] = {}

    def record(self, source: str, stage: str, cell: StageCell) -> None:
        if source not in self.sources:
            raise DataError(f"unknown source {source!r}")
        if stage not in self.stages:
            raise DataError(f"unknown stage {stage!r}")
        cell.validate(f"{source}/{stage}")
        self._cells[(source, stage)] = cell

    def cell(self, source: str, stage: str) -> StageCell:
        try:
            return self._cells[(source, stage)]
        except KeyError:
            raise DataError(f"no accounting cell for ({source}, {stage})") from None

    def validate(self) -> None:
        """Check completeness and stage chaining (stage N out == stage N+1 in)."""
        for source in self.sources:
            for prev, nxt in zip(self.stages, self.stages[1:]):
                a, b = self.cell(source, prev), self.cell(source, nxt)
                if a.tokens_out != b.tokens_in:
                    raise DataError(
                        f"{source}: stage {prev} tokens_out {a.tokens_out} != "
                        f"stage {nxt} tokens_in {b.tokens_in}"
                    )
                if (
                    a.documents_out is not None
                    and b.documents_in is not None
                    and a.documents_out != b.documents_in
                ):
                    raise DataError(f"{source}: document chaining broken at {prev} -> {nxt}")

    def start_tokens(self, source: str) -> int:
        return self.cell(source, self.stages[0]).tokens_in

    def tokens_after(self, source: str, stage: str) -> int:
        return self.cell(source, stage).tokens_out

    def total_start_tokens(self) -> int:
        return sum(self.start_tokens(s) for s in self.sources)

    def total_tokens_after(self, stage: str) -> int:
        return sum(self.tokens_after(s, stage) for s in self.sources)

    def stage_removal_fraction(self, stage: str) -> float:
        """Fraction of tokens the stage removed, over all sources."""
        tokens_in = sum(self.cell(s, stage).tokens_in for s in self.sources)
        tokens_out = self.total_tokens_after(stage)
        if tokens_in == 0:
            return 0.0
        return 1.0 - tokens_out / tokens_in

    @classmethod
    def from_token_snapshots(
        cls,
        snapshots: Mapping[str, list[int]],
        stages: list[str],
        documents: Mapping[str, list[int]] | None = None,
    ) -> "StageAccounting":
        """Build accounting from per-source token counts at stage boundaries.

        ``snapshots[source]`` holds ``len(stages) + 1`` values: the starting
        count followed by the count remaining after each stage.
        """
        acc = cls(snapshots.keys(), stages)
        for source, counts in snapshots.items():
            if len(counts) != len(stages) + 1:
                raise DataError(
                    f"{source}: expected {len(stages) + 1} snapshot values, got {len(counts)}"
                )
            docs = documents.get(source) if documents else None
            for i, stage in enumerate(stages):
                acc.record(
                    source,
                    stage,
                    StageCell(
                        tokens_in=counts[i],
                        tokens_out=counts[i + 1],
                        documents_in=docs[i] if docs else None,
                        documents_out=docs[i + 1] if docs else None,
                    ),
                )
        acc.validate()
        return acc

    def to_json_dict(self) -> dict:
        cells: dict[str, dict[str, dict]] = {}
        for source in self.sources:
            cells[source] = {}
            for stage in self.stages:
                c = self._cells.get((source, stage))
                if c is None:
                    continue
                cells[source][stage] = {
                    "tokens_in": c.tokens_in,
                    "tokens_out": c.tokens_out,
                    "documents_in": c.documents_in,
                    "documents_out": c.documents_out,
                }
        return {
            "sources": self.sources,
            "stages": self.stages,
            "cells": cells,
            "totals": {
                "start_tokens": self.total_start_tokens(),
                "tokens_after": {s: self.total_tokens_after(s) for s in self.stages},
            },
        }

    @classmethod
    def from_json_dict(cls, payload: dict) -> "StageAccounting":
        acc = cls(payload["sources"], payload["stages"])
        for source, stages in payload["cells"].items():
            for stage, c in stages.items():
                acc.record(
                    source,
                    stage,
                    StageCell(
                        tokens_in=c["tokens_in"],
                        tokens_out=c["tokens_out"],
                        documents_in=c.get("documents_in"),
                        documents_out=c.get("documents_out"),
                    ),
                )
        return acc


def _format_tokens(value: int, unit: str) -> str:
    if unit == "billions":
        return f"{value / 1e9:.3f}"
    return f"{value:,}"


def render_accounting(acc: StageAccounting, unit: str = "auto") -> str:
    """Aligned text table: rows per source, columns per stage, totals row."""
    if unit == "auto":
        unit = "billions" if acc.total_start_tokens() >= 1_000_000_000 else "tokens"
    if unit not in ("tokens", "billions"):
        raise DataError(f"unknown unit {unit!r}")

    header = ["source", "start"] + list(acc.stages)
    rows: list[list[str]] = []
    for source in acc.sources:
        row = [source, _format_tokens(acc.start_tokens(source), unit)]
        row += [_format_tokens(acc.tokens_after(source, st), unit) for st in acc.stages]
        rows.append(row)
    total_row = ["total", _format_tokens(acc.total_start_tokens(), unit)]
    total_row += [_format_tokens(acc.total_tokens_after(st), unit) for st in acc.stages]

    widths = [max(len(header[i]), *(len(r[i]) for r in rows + [total_row])) for i in range(len(header))]
    lines = [f"Dataset statistics ({'billion tokens' if unit == 'billions' else 'tokens'})", ""]

    def fmt(row: list[str]) -> str:
        first = row[0].ljust(widths[0])
        rest = "  ".join(cell.rjust(widths[i + 1]) for i, cell in enumerate(row[1:]))
        return f"{first}  {rest}"

    lines.append(fmt(header))
    lines.append("-" * len(fmt(header)))
    lines.extend(fmt(r) for r in rows)
    lines.append("-" * len(fmt(header)))
    lines.append(fmt(total_row))
    lines.append("")
    for stage in acc.stages:
        frac = acc.stage_removal_fraction(stage)
        lines.append(f"{stage}: removed {frac * 100:.1f}% of tokens")
    return "\n".join(lines) + "\n"


def write_accounting(acc: StageAccounting, json_path: str | Path, text_path: str | Path | None = None) -> None:
    Path(json_path).write_text(
        json.dumps(acc.to_json_dict(), indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )
    if text_path is not None:
        Path(text_path).write_text(render_accounting(acc), encoding="utf-8")


def load_accounting(path: str | Path) -> StageAccounting:
    return StageAccounting.from_json_dict(json.loads(Path(path).read_text(encoding="utf-8")))


@dataclass(frozen=True)
class MixtureComponent:
    source: str
    native_tokens: float
    target_proportion: float
    weight: float  # epochs over this source's native tokens

    @property
    def effective_tokens(self) -> float:
        return self.weight * self.native_tokens


@dataclass
class MixtureSpec:
    components: list[MixtureComponent] = field(default_factory=list)

    @property
    def total_native(self) -> float:
        return sum(c.native_tokens for c in self.components)

    @property
    def total_effective(self) -> float:
        return sum(c.effective_tokens for c in self.components)

    def component(self, source: str) -> MixtureComponent:
        for c in self.components:
            if c.source == source:
                return c
        raise DataError(f"unknown source {source!r} in mixture")

    def native_share(self, source: str) -> float:
        return self.component(source).native_tokens / self.total_native

    def effective_share(self, source: str) -> float:
        return self.component(source).effective_tokens / self.total_effective

    def to_json_dict(self) -> dict:
        return {
            "components": [
                {
                    "source": c.source,
                    "native_tokens": c.native_tokens,
                    "target_proportion": c.target_proportion,
                    "weight": c.weight,
                    "native_share": self.native_share(c.source),
                    "effective_share": self.effective_share(c.source),
                }
                for c in self.components
            ],
            "total_native_tokens": self.total_native,
            "total_effective_tokens": self.total_effective,
        }

    def render(self) -> str:
        lines = ["Mixture weights", ""]
        header = f"{'source':<16} {'native':>16} {'nat.share':>10} {'target':>10} {'weight':>10}"
        lines.append(header)
        lines.append("-" * len(header))
        for c in self.components:
            lines.append(
                f"{c.source:<16} {c.native_tokens:>16,.0f} {self.native_share(c.source):>10.4f} "
                f"{c.target_proportion:>10.4f} {c.weight:>10.4f}"
            )
        lines.append("-" * len(header))
        lines.append(f"total effective tokens: {self.total_effective:,.0f}")
        return "\n".join(lines) + "\n"


def compute_mixture(
    native_tokens: Mapping[str, float],
    targets: Mapping[str, float],
) -> MixtureSpec:
    """Per-source repeat weights realizing ``targets`` proportions.

    Weights scale so the binding source (smallest repeat factor) sits at
    exactly 1.0; everything else repeats its native tokens accordingly.
    """
    if set(native_tokens) != set(targets):
        raise DataError(
            f"mixture sources mismatch: counts {sorted(native_tokens)} vs targets {sorted(targets)}"
        )
    if not native_tokens:
        raise DataError("mixture needs at least one source")
    for source, count in native_tokens.items():
        if count <= 0:
            raise DataError(f"source {source!r}: native token count must be positive")
    total_target = sum(targets.values())
    if not math.isclose(total_target, 1.0, rel_tol=1e-9, abs_tol=1e-12):
        raise DataError(f"target proportions must sum to 1, got {total_target}")
    for source, t in targets.items():
        if t < 0:
            raise DataError(f"source {source!r}: negative target proportion")

    # total effective size that makes the smallest repeat factor exactly 1
    total_effective = max(
        native_tokens[s] / targets[s] for s in native_tokens if targets[s] > 0
    )
    components = [
        MixtureComponent(
            source=s,
            native_tokens=float(native_tokens[s]),
            target_proportion=float(targets[s]),
            weight=(targets[s] * total_effective / native_tokens[s]) if targets[s] > 0 else 0.0,
        )
        for s in native_tokens
    ]
    return MixtureSpec(components=components)


def equalized_targets(
    native_tokens: Mapping[str, float],
    boost: str,
    match: str,
) -> dict[str, float]:
    """Targets that upweight ``boost`` to ``match``'s proportion, others natural."""
    if boost not in native_tokens or match not in native_tokens:
        raise DataError(f"sources {boost!r}/{match!r} not in {sorted(native_tokens)}")
    effective = {s: float(n) for s, n in native_tokens.items()}
    effective[boost] = effective[match]
    total = sum(effective.values())
    return {s: n / total for s, n in effective.items()}
