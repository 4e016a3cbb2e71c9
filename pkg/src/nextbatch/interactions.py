"""Timestamped user-item interaction logs and delimited-text ingestion."""

from __future__ import annotations

import csv
import io
from bisect import bisect_left
from dataclasses import dataclass, field
from functools import cached_property
from typing import IO, Iterable, Iterator

from .errors import EmptyDataset, InvalidDescriptor, TooManyRejections

CANONICAL_HEADER = ("user_id", "item_id", "timestamp")
MAX_REPORTED_REJECTIONS = 1000
FATAL_REJECTION_RATE = 0.5

LOGICAL_COLUMNS = ("user", "item", "timestamp")


@dataclass(frozen=True)
class Interaction:
    """One user-item event. ``seq`` is the source-row ordinal, used to break timestamp ties."""

    user_id: str
    item_id: str
    timestamp: int
    seq: int


@dataclass(frozen=True)
class InteractionLog:
    """Immutable event log, sorted ascending by (timestamp, seq)."""

    records: tuple[Interaction, ...]

    @classmethod
    def from_records(cls, records: Iterable[Interaction]) -> "InteractionLog":
        ordered = sorted(records, key=lambda r: (r.timestamp, r.seq))
        return cls(records=tuple(ordered))

    @classmethod
    def from_events(cls, events: Iterable[tuple[str, str, int]]) -> "InteractionLog":
        """Build a log from (user_id, item_id, timestamp) triples; seq follows input order."""
        records = [
            Interaction(user_id=str(u), item_id=str(i), timestamp=int(t), seq=n)
            for n, (u, i, t) in enumerate(events)
        ]
        return cls.from_records(records)

    def __len__(self) -> int:
        return len(self.records)

    def __iter__(self) -> Iterator[Interaction]:
        return iter(self.records)

    def __bool__(self) -> bool:
        return bool(self.records)

    @property
    def span(self) -> tuple[int, int] | None:
        """(t_min, t_max) of the log, or None when empty."""
        if not self.records:
            return None
        return (self.records[0].timestamp, self.records[-1].timestamp)

    @cached_property
    def _timestamps(self) -> list[int]:
        return [r.timestamp for r in self.records]

    @cached_property
    def user_ids(self) -> frozenset[str]:
        return frozenset(r.user_id for r in self.records)

    @cached_property
    def item_ids(self) -> frozenset[str]:
        return frozenset(r.item_id for r in self.records)

    def slice(self, t_lo: int, t_hi: int) -> "InteractionLog":
        """Records with t_lo <= timestamp < t_hi, order preserved."""
        if t_lo > t_hi:
            raise ValueError("t_lo must not exceed t_hi")
        lo = bisect_left(self._timestamps, t_lo)
        hi = bisect_left(self._timestamps, t_hi)
        return InteractionLog(records=self.records[lo:hi])

    def to_csv(self, out: IO[str]) -> None:
        writer = csv.writer(out, lineterminator="\n")
        writer.writerow(CANONICAL_HEADER)
        for r in self.records:
            writer.writerow((r.user_id, r.item_id, r.timestamp))

    def to_csv_text(self) -> str:
        buf = io.StringIO()
        self.to_csv(buf)
        return buf.getvalue()

    @classmethod
    def from_csv(cls, source: IO[str]) -> "InteractionLog":
        """Read the canonical CSV form (header user_id,item_id,timestamp)."""
        reader = csv.reader(source)
        header = next(reader, None)
        if header is None or tuple(h.strip() for h in header) != CANONICAL_HEADER:
            raise InvalidDescriptor("expected canonical header user_id,item_id,timestamp")
        return cls.from_events((row[0], row[1], int(row[2])) for row in reader if row)


@dataclass(frozen=True)
class DatasetDescriptor:
    """How to read one delimited source file.

    ``column_mapping`` maps each logical column (user, item, timestamp) to a
    source column: an integer index, or a header name when ``header`` is True.
    """

    name: str
    source_uri: str = ""
    column_mapping: dict[str, int | str] = field(
        default_factory=lambda: {"user": 0, "item": 1, "timestamp": 2}
    )
    delimiter: str = ","
    header: bool = False

    def __post_init__(self) -> None:
        keys = set(self.column_mapping)
        if keys != set(LOGICAL_COLUMNS):
            raise InvalidDescriptor(
                f"column_mapping must cover exactly {LOGICAL_COLUMNS}, got {sorted(keys)}"
            )
        values = list(self.column_mapping.values())
        if len(set(values)) != len(values):
            raise InvalidDescriptor("column_mapping assigns one source column twice")
        if len(self.delimiter) != 1:
            raise InvalidDescriptor("delimiter must be a single character")
        if not self.header:
            for logical, col in self.column_mapping.items():
                if not isinstance(col, int):
                    raise InvalidDescriptor(
                        f"column for {logical!r} must be an integer index when there is no header"
                    )


@dataclass(frozen=True)
class Rejection:
    line_number: int
    reason: str


@dataclass(frozen=True)
class IngestResult:
    log: InteractionLog
    n_accepted: int
    n_rejected: int
    rejections: tuple[Rejection, ...]  # first MAX_REPORTED_REJECTIONS only


def _resolve_indices(descriptor: DatasetDescriptor, header_row: list[str] | None) -> dict[str, int]:
    indices: dict[str, int] = {}
    for logical, col in descriptor.column_mapping.items():
        if isinstance(col, int):
            indices[logical] = col
        else:
            if header_row is None:
                raise InvalidDescriptor(f"named column {col!r} requires a header row")
            names = [h.strip() for h in header_row]
            if col not in names:
                raise InvalidDescriptor(f"column {col!r} not found in header {names}")
            indices[logical] = names.index(col)
    return indices


def ingest(descriptor: DatasetDescriptor, source: IO[str]) -> IngestResult:
    """Parse a delimited text stream into a sorted InteractionLog.

    Every input row either becomes one Interaction or one counted rejection.
    Raises EmptyDataset when no row is valid, TooManyRejections when more
    than half of all rows are rejected.
    """
    reader = csv.reader(source, delimiter=descriptor.delimiter)
    header_row: list[str] | None = None
    if descriptor.header:
        header_row = next(reader, None)
        if header_row is None:
            raise EmptyDataset("no rows in source")
    indices = _resolve_indices(descriptor, header_row)
    needed = max(indices.values()) + 1

    records: list[Interaction] = []
    rejections: list[Rejection] = []
    n_rejected = 0
    seq = 0
    for row in reader:
        line = reader.line_num
        ordinal = seq
        seq += 1
        reason = None
        if len(row) < needed:
            reason = "missing column"
        else:
            user = row[indices["user"]].strip()
            item = row[indices["item"]].strip()
            raw_ts = row[indices["timestamp"]].strip()
            if not user or not item:
                reason = "missing column"
            else:
                try:
                    ts = int(raw_ts)
                except ValueError:
                    reason = f"non-integer timestamp {raw_ts!r}"
                else:
                    if ts < 0:
                        reason = f"negative timestamp {ts}"
        if reason is not None:
            n_rejected += 1
            if len(rejections) < MAX_REPORTED_REJECTIONS:
                rejections.append(Rejection(line_number=line, reason=reason))
            continue
        records.append(Interaction(user_id=user, item_id=item, timestamp=ts, seq=ordinal))

    if not records:
        raise EmptyDataset(f"no valid rows ({n_rejected} rejected)")
    total = len(records) + n_rejected
    if n_rejected / total > FATAL_REJECTION_RATE:
        raise TooManyRejections(f"{n_rejected} of {total} rows rejected")
    return IngestResult(
        log=InteractionLog.from_records(records),
        n_accepted=len(records),
        n_rejected=n_rejected,
        rejections=tuple(rejections),
    )
