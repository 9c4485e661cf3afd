"""Learning-record CSV ingestion (``learner_id,timestamp,exercise_id,kc_id,score``)."""
from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, field
from datetime import datetime
from pathlib import Path

from ..errors import IngestionError
from ..student_sim import HistoryRecord, decayed_average

log = logging.getLogger(__name__)

HEADER = ["learner_id", "timestamp", "exercise_id", "kc_id", "score"]


@dataclass
class RecordSet:
    groups: dict[str, list[HistoryRecord]] = field(default_factory=dict)
    malformed: int = 0

    @property
    def learners(self) -> int:
        return len(self.groups)

    @property
    def records(self) -> int:
        return sum(len(g) for g in self.groups.values())

    @property
    def positive_rate(self) -> float:
        n = self.records
        return sum(r.score for g in self.groups.values() for r in g) / n if n else 0.0

    def summary(self) -> dict:
        return {
            "learners": self.learners,
            "records": self.records,
            "positive_rate": self.positive_rate,
            "malformed": self.malformed,
        }


def _timestamp(raw: str) -> float:
    try:
        return float(raw)
    except ValueError:
        return datetime.fromisoformat(raw).timestamp()


def load_records(path: str | Path) -> RecordSet:
    try:
        fh = open(path, newline="", encoding="utf-8")
    except OSError as exc:
        raise IngestionError(f"cannot open {path}: {exc}") from exc
    rows: dict[str, list[tuple[float, int, int, int, int]]] = {}
    bad = 0
    with fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or [h.strip() for h in header] != HEADER:
            raise IngestionError(f"{path}: expected header {','.join(HEADER)}, got {header}")
        for line_no, row in enumerate(reader, start=2):
            try:
                learner, ts, ex, kc, score = (c.strip() for c in row)
                item = (_timestamp(ts), line_no, int(ex), int(kc), int(score))
                if item[4] not in (0, 1) or not learner:
                    raise ValueError("score must be 0/1 and learner non-empty")
            except ValueError:
                bad += 1
                continue
            rows.setdefault(learner, []).append(item)
    if bad:
        log.warning("%s: skipped %d malformed rows", path, bad)
    groups = {}
    for learner in sorted(rows):
        items = sorted(rows[learner])
        groups[learner] = [HistoryRecord(ex, kc, score, i) for i, (_, _, ex, kc, score) in enumerate(items)]
    return RecordSet(groups, bad)


DECAY_GRID = tuple(round(0.1 * k, 1) for k in range(1, 10))


@dataclass(frozen=True)
class TrackerFit:
    decay: float
    brier: float  # held-out mean squared error of the next-answer prediction
    scored: int  # held-out records scored
    train_fraction: float


def tracker_brier(records: RecordSet, decay: float, train_fraction: float = 0.6) -> tuple[float, int]:
    """Replay every learner's log online; score predictions past the first ``train_fraction``."""
    err, count = 0.0, 0
    for hist in records.groups.values():
        cut = int(len(hist) * train_fraction)
        seen: dict[int, list[int]] = {}
        for i, rec in enumerate(hist):
            scores = seen.setdefault(rec.concept_id, [])
            if i >= cut:
                pred = decayed_average(scores, decay) if scores else 0.5
                err += (pred - rec.score) ** 2
                count += 1
            scores.append(rec.score)
    return (err / count if count else float("nan")), count


def fit_tracker(records: RecordSet, train_fraction: float = 0.6, grid=DECAY_GRID) -> TrackerFit:
    """Pick the tracker decay with the lowest held-out Brier score (ties to the smaller decay)."""
    if not 0.0 < train_fraction < 1.0:
        raise ValueError("train_fraction must lie in (0, 1)")
    best = None
    for decay in grid:
        brier, count = tracker_brier(records, decay, train_fraction)
        if count == 0:
            raise IngestionError("no held-out records to fit the tracker on")
        if best is None or brier < best.brier - 1e-15:
            best = TrackerFit(float(decay), brier, count, train_fraction)
    return best
