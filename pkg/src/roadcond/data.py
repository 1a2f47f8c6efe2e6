"""Section-level data model: CSV ingest, score discretization, feature encoding.

A network table is an ordered list of pavement sections; the row order is the
canonical node index order for every downstream matrix. Condition scores live
on a 0-100 scale and are discretized into five ordinal states for modeling.
"""

from __future__ import annotations

import csv
import hashlib
import io
import math
from dataclasses import dataclass, field
from enum import IntEnum
from typing import Sequence, TextIO

import numpy as np

from .errors import (
    DuplicateSectionId,
    EncoderMismatch,
    MalformedRow,
    ScoreOutOfRange,
    UnknownPavementTypeCode,
)

PAVEMENT_TYPE_CODES = (1, 5, 6, 7, 8, 10)
HISTORY_YEARS = (2014, 2015, 2016, 2017)
TARGET_YEAR = 2018
N_STATES = 5

CSV_HEADER = (
    "section_id",
    "route_id",
    "ref_marker",
    "pavement_type_code",
    "functional_class",
    "esal_k",
    "cs_2014",
    "cs_2015",
    "cs_2016",
    "cs_2017",
    "cs_2018",
)


class ConditionState(IntEnum):
    """Five ordinal condition states; lower ordinal means worse condition."""

    VERY_POOR = 0
    POOR = 1
    FAIR = 2
    GOOD = 3
    VERY_GOOD = 4

    @property
    def label(self) -> str:
        return self.name.lower()

    @classmethod
    def from_label(cls, label: str) -> "ConditionState":
        return cls[label.upper()]


def discretize_condition(cs: float) -> ConditionState:
    """Map a 0-100 condition score to its ordinal state.

    Band edges are inclusive below and exclusive above, except that 100 is
    included in VERY_GOOD.
    """
    if not 0.0 <= cs <= 100.0:
        raise ScoreOutOfRange(cs)
    if cs >= 90.0:
        return ConditionState.VERY_GOOD
    if cs >= 70.0:
        return ConditionState.GOOD
    if cs >= 50.0:
        return ConditionState.FAIR
    if cs >= 35.0:
        return ConditionState.POOR
    return ConditionState.VERY_POOR


@dataclass(frozen=True)
class SectionRecord:
    """One pavement section: identity, route position, covariates, scores.

    ``cs_history`` holds only the years that were actually observed;
    ``cs_target`` is the 2018 score or None when missing.
    """

    section_id: str
    route_id: str
    ref_marker: float
    pavement_type_code: int
    functional_class: str
    esal_k: float
    cs_history: dict[int, float] = field(default_factory=dict)
    cs_target: float | None = None


@dataclass(frozen=True)
class Encoders:
    """Fitted category vocabularies for the two one-hot covariates."""

    pavement_types: tuple[int, ...]
    functional_classes: tuple[str, ...]

    def pavement_index(self, code: int) -> int:
        try:
            return self.pavement_types.index(code)
        except ValueError:
            raise EncoderMismatch(f"pavement type code {code} not in encoder") from None

    def functional_index(self, label: str) -> int:
        try:
            return self.functional_classes.index(label)
        except ValueError:
            raise EncoderMismatch(f"functional class {label!r} not in encoder") from None


@dataclass(frozen=True)
class NetworkTable:
    """Ordered section records plus fitted encoders and traffic statistics.

    ``traffic_stats`` is (mean, stddev) of log1p(esal_k) over the table
    (population stddev).
    """

    records: tuple[SectionRecord, ...]
    encoders: Encoders
    traffic_stats: tuple[float, float]

    def __len__(self) -> int:
        return len(self.records)

    @classmethod
    def from_records(cls, records: Sequence[SectionRecord]) -> "NetworkTable":
        records = tuple(records)
        seen: set[str] = set()
        for rec in records:
            if rec.section_id in seen:
                raise DuplicateSectionId(rec.section_id)
            seen.add(rec.section_id)
            if rec.pavement_type_code not in PAVEMENT_TYPE_CODES:
                raise UnknownPavementTypeCode(str(rec.pavement_type_code))
        encoders = Encoders(
            pavement_types=tuple(sorted({r.pavement_type_code for r in records})),
            functional_classes=tuple(sorted({r.functional_class for r in records})),
        )
        logs = np.log1p(np.array([r.esal_k for r in records], dtype=np.float64))
        stats = (float(logs.mean()), float(logs.std())) if len(records) else (0.0, 0.0)
        return cls(records=records, encoders=encoders, traffic_stats=stats)


def rebind_encoders(
    table: NetworkTable, encoders: Encoders, traffic_stats: tuple[float, float]
) -> NetworkTable:
    """Return a copy of ``table`` using externally fitted encoders.

    Used at imputation time so new data is encoded exactly as at training
    time. Raises EncoderMismatch if the data holds an unseen category.
    """
    for rec in table.records:
        encoders.pavement_index(rec.pavement_type_code)
        encoders.functional_index(rec.functional_class)
    return NetworkTable(records=table.records, encoders=encoders, traffic_stats=traffic_stats)


@dataclass(frozen=True)
class FeatureMatrix:
    """N x F node features with a per-column description."""

    values: np.ndarray
    column_spec: tuple[str, ...]


def _parse_score(text: str, row: int) -> float | None:
    if text == "":
        return None
    try:
        value = float(text)
    except ValueError:
        raise MalformedRow(row, f"unparsable score {text!r}") from None
    if not 0.0 <= value <= 100.0:
        raise ScoreOutOfRange(value, row=row)
    return value


def parse_sections_csv(stream: TextIO) -> NetworkTable:
    """Read the canonical sections CSV into a NetworkTable.

    Empty score fields become missing values, never zeros. Row order is
    preserved and becomes the node index order.
    """
    reader = csv.reader(stream)
    try:
        header = next(reader)
    except StopIteration:
        raise MalformedRow(0, "empty input") from None
    if tuple(header) != CSV_HEADER:
        raise MalformedRow(0, f"unexpected header {header!r}")

    records: list[SectionRecord] = []
    seen: set[str] = set()
    for row_idx, row in enumerate(reader, start=1):
        if len(row) != len(CSV_HEADER):
            raise MalformedRow(row_idx, f"expected {len(CSV_HEADER)} fields, got {len(row)}")
        (sid, route, marker, ptype, fclass, esal, *scores) = row
        if sid == "":
            raise MalformedRow(row_idx, "empty section_id")
        if sid in seen:
            raise DuplicateSectionId(f"{sid} (row {row_idx})")
        seen.add(sid)
        try:
            marker_f = float(marker)
            ptype_i = int(ptype)
            esal_f = float(esal)
        except ValueError as exc:
            raise MalformedRow(row_idx, str(exc)) from None
        if ptype_i not in PAVEMENT_TYPE_CODES:
            raise UnknownPavementTypeCode(f"{ptype_i} (row {row_idx})")
        if not esal_f >= 0.0:
            raise MalformedRow(row_idx, f"negative or non-finite esal_k {esal!r}")
        history = {}
        for year, text in zip(HISTORY_YEARS, scores[:4]):
            value = _parse_score(text, row_idx)
            if value is not None:
                history[year] = value
        target = _parse_score(scores[4], row_idx)
        records.append(
            SectionRecord(
                section_id=sid,
                route_id=route,
                ref_marker=marker_f,
                pavement_type_code=ptype_i,
                functional_class=fclass,
                esal_k=esal_f,
                cs_history=history,
                cs_target=target,
            )
        )
    return NetworkTable.from_records(records)


def write_sections_csv(table: NetworkTable, stream: TextIO) -> None:
    """Serialize a table back to the canonical CSV (the parse inverse).

    Floats are written with repr so parse -> write round-trips exactly;
    the line terminator is pinned to "\\n" for stable byte output.
    """
    writer = csv.writer(stream, lineterminator="\n")
    writer.writerow(CSV_HEADER)
    for rec in table.records:
        scores = [rec.cs_history.get(year) for year in HISTORY_YEARS] + [rec.cs_target]
        writer.writerow(
            [
                rec.section_id,
                rec.route_id,
                repr(float(rec.ref_marker)),
                rec.pavement_type_code,
                rec.functional_class,
                repr(float(rec.esal_k)),
                *["" if s is None else repr(float(s)) for s in scores],
            ]
        )


def table_digest(table: NetworkTable) -> str:
    """sha256 hex digest of the canonical CSV serialization."""
    buf = io.StringIO()
    write_sections_csv(table, buf)
    return hashlib.sha256(buf.getvalue().encode("utf-8")).hexdigest()


def target_labels(table: NetworkTable) -> np.ndarray:
    """Per-node discretized 2018 state, -1 where the target score is missing."""
    out = np.full(len(table), -1, dtype=np.int64)
    for i, rec in enumerate(table.records):
        if rec.cs_target is not None:
            out[i] = int(discretize_condition(rec.cs_target))
    return out


def encode_features(table: NetworkTable) -> FeatureMatrix:
    """Build the N x F node feature matrix.

    Layout per row: four 5-wide one-hot blocks for the discretized
    2014-2017 scores (all-zero when the year is absent), one-hot pavement
    type, one-hot functional class, then one standardized traffic column.
    The 2018 target never contributes a column.
    """
    enc = table.encoders
    n = len(table)
    n_hist = len(HISTORY_YEARS) * N_STATES
    n_ptype = len(enc.pavement_types)
    n_fclass = len(enc.functional_classes)
    width = n_hist + n_ptype + n_fclass + 1

    columns: list[str] = []
    for year in HISTORY_YEARS:
        columns.extend(f"cs_{year}={s.label}" for s in ConditionState)
    columns.extend(f"pavement_type={c}" for c in enc.pavement_types)
    columns.extend(f"functional_class={c}" for c in enc.functional_classes)
    columns.append("traffic_log_z")

    mean, std = table.traffic_stats
    values = np.zeros((n, width), dtype=np.float64)
    for i, rec in enumerate(table.records):
        for yi, year in enumerate(HISTORY_YEARS):
            score = rec.cs_history.get(year)
            if score is not None:
                values[i, yi * N_STATES + int(discretize_condition(score))] = 1.0
        values[i, n_hist + enc.pavement_index(rec.pavement_type_code)] = 1.0
        values[i, n_hist + n_ptype + enc.functional_index(rec.functional_class)] = 1.0
        if std > 0.0:
            values[i, -1] = (math.log1p(rec.esal_k) - mean) / std
    return FeatureMatrix(values=values, column_spec=tuple(columns))
