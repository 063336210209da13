"""Per-iteration solver traces and their CSV forms.

Every solver stage appends TraceRecord rows to one flat list; the stage
field ("bipr", "fd", "dcg", "nr") tells concatenated traces apart. Fields
that a stage does not produce stay None and serialize as empty cells.
"""
from __future__ import annotations

import io
from dataclasses import dataclass, replace
from typing import Sequence

TRACE_COLUMNS = ("iteration", "stage", "d_vr", "d_va", "d_p", "d_q",
                 "mbpim", "millis")
BIPR_COLUMNS = ("iteration", "stage", "d_vr", "d_va", "mbpim", "millis")


@dataclass(frozen=True)
class TraceRecord:
    iteration: int
    stage: str
    d_vr: float | None = None
    d_va: float | None = None
    d_p: float | None = None
    d_q: float | None = None
    mbpim: float | None = None
    millis: float = 0.0


IterationTrace = list  # of TraceRecord, iteration indices increasing from 1


def _cell(value) -> str:
    if value is None:
        return ""
    if isinstance(value, float):
        return repr(value)
    return str(value)


def trace_csv(records: Sequence[TraceRecord],
              columns: Sequence[str] = TRACE_COLUMNS) -> str:
    out = io.StringIO()
    out.write(",".join(columns) + "\n")
    for rec in records:
        out.write(",".join(_cell(getattr(rec, c)) for c in columns) + "\n")
    return out.getvalue()


def zero_millis(records: Sequence[TraceRecord]) -> list[TraceRecord]:
    """Timing scrubbed for byte-identical reruns."""
    return [replace(r, millis=0.0) for r in records]
