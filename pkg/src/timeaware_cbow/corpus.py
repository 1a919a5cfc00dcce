"""Event-log parsing, vocabulary construction, time bucketing and subsampling.

Input corpora are tab-separated ``entity<TAB>day<TAB>code`` lines. Days are
non-negative integers relative to an arbitrary epoch; coarser time units are
derived by integer division.
"""

from __future__ import annotations

import io
import math
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence, TextIO

import numpy as np


class CorpusFormatError(ValueError):
    """A corpus, vocabulary or label file violates its line format."""

    def __init__(self, message: str, lineno: int | None = None):
        self.lineno = lineno
        if lineno is not None:
            message = f"line {lineno}: {message}"
        super().__init__(message)


class EmptyVocabularyError(ValueError):
    pass


@dataclass
class PatientRecord:
    """One entity's events as ``(day, code)`` pairs sorted by day.

    Before :func:`build_vocab` the codes are strings; afterwards they are
    dense integer ids into a :class:`Vocabulary`.
    """

    entity_id: str
    events: list = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.events)


@dataclass
class BucketedSequence:
    """Events grouped into time units. ``buckets`` holds ``(bucket_index, codes)``."""

    entity_id: str
    buckets: list[tuple[int, list[int]]]

    @property
    def n_codes(self) -> int:
        return sum(len(codes) for _, codes in self.buckets)


@dataclass
class Vocabulary:
    codes: list[str]
    counts: list[int]

    def __post_init__(self):
        if len(set(self.codes)) != len(self.codes):
            raise ValueError("vocabulary codes must be unique")
        if len(self.codes) != len(self.counts):
            raise ValueError("codes and counts differ in length")
        self.index = {c: i for i, c in enumerate(self.codes)}

    @property
    def total_count(self) -> int:
        return int(sum(self.counts))

    def __len__(self) -> int:
        return len(self.codes)

    def __contains__(self, code: str) -> bool:
        return code in self.index

    def save(self, path: str | Path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(f"{len(self.codes)}\n")
            for code, count in zip(self.codes, self.counts):
                fh.write(f"{code}\t{count}\n")

    @classmethod
    def load(cls, path: str | Path) -> "Vocabulary":
        with open(path, encoding="utf-8") as fh:
            lines = fh.read().splitlines()
        if not lines:
            raise CorpusFormatError("empty vocabulary file", 1)
        try:
            n = int(lines[0])
        except ValueError:
            raise CorpusFormatError("header must be the vocabulary size", 1) from None
        codes, counts = [], []
        for lineno, line in enumerate(lines[1:], start=2):
            parts = line.split("\t")
            if len(parts) != 2:
                raise CorpusFormatError("expected code<TAB>count", lineno)
            try:
                counts.append(int(parts[1]))
            except ValueError:
                raise CorpusFormatError(f"non-integer count {parts[1]!r}", lineno) from None
            codes.append(parts[0])
        if len(codes) != n:
            raise CorpusFormatError(f"header says {n} codes, found {len(codes)}", 1)
        return cls(codes, counts)


def _lines(source) -> Iterable[str]:
    if isinstance(source, (str, Path)):
        with open(source, encoding="utf-8") as fh:
            yield from fh
    else:
        yield from source


def parse_events(source: TextIO | Iterable[str] | str | Path) -> list[PatientRecord]:
    """Parse an event log into per-entity records.

    ``source`` is a path, an open text stream or any iterable of lines. Blank
    lines and ``#`` comments are skipped. Entities come out in order of first
    appearance; events within an entity are stably sorted by day.
    """
    records: dict[str, PatientRecord] = {}
    for lineno, raw in enumerate(_lines(source), start=1):
        line = raw.rstrip("\r\n")
        if not line.strip() or line.startswith("#"):
            continue
        parts = line.split("\t")
        if len(parts) != 3:
            raise CorpusFormatError(f"expected 3 tab-separated fields, got {len(parts)}", lineno)
        entity, day_s, code = parts
        try:
            day = int(day_s)
        except ValueError:
            raise CorpusFormatError(f"non-integer day {day_s!r}", lineno) from None
        if day < 0:
            raise CorpusFormatError(f"negative day {day}", lineno)
        if not code or any(ch.isspace() for ch in code):
            raise CorpusFormatError(f"invalid code {code!r}", lineno)
        if not entity:
            raise CorpusFormatError("empty entity id", lineno)
        rec = records.get(entity)
        if rec is None:
            rec = records[entity] = PatientRecord(entity)
        rec.events.append((day, code))
    for rec in records.values():
        rec.events.sort(key=lambda e: e[0])
    return list(records.values())


def parse_events_text(text: str) -> list[PatientRecord]:
    return parse_events(io.StringIO(text))


def write_events(records: Sequence[PatientRecord], out: TextIO, vocab: Vocabulary | None = None) -> None:
    """Inverse of :func:`parse_events`. Pass ``vocab`` if records hold code ids."""
    for rec in records:
        for day, code in rec.events:
            if vocab is not None:
                code = vocab.codes[code]
            out.write(f"{rec.entity_id}\t{day}\t{code}\n")


def build_vocab(records: Sequence[PatientRecord], min_count: int = 5) -> tuple[Vocabulary, list[PatientRecord]]:
    """Count codes, drop the rare ones and re-encode records to dense ids.

    Codes are ordered by descending count, ties broken by the code string.
    Records that lose every event are dropped. Expects string codes, i.e. the
    output of :func:`parse_events` or :func:`decode_records`.
    """
    if min_count < 1:
        raise ValueError("min_count must be >= 1")
    counter = Counter(code for rec in records for _, code in rec.events)
    kept = sorted((c for c, n in counter.items() if n >= min_count), key=lambda c: (-counter[c], c))
    if not kept:
        raise EmptyVocabularyError(f"no code occurs at least {min_count} times")
    vocab = Vocabulary(kept, [counter[c] for c in kept])
    encoded = []
    for rec in records:
        events = [(day, vocab.index[code]) for day, code in rec.events if code in vocab.index]
        if events:
            encoded.append(PatientRecord(rec.entity_id, events))
    return vocab, encoded


def decode_records(records: Sequence[PatientRecord], vocab: Vocabulary) -> list[PatientRecord]:
    return [PatientRecord(r.entity_id, [(d, vocab.codes[c]) for d, c in r.events]) for r in records]


def encode_records(records: Sequence[PatientRecord], vocab: Vocabulary) -> list[PatientRecord]:
    """Map string codes onto an existing vocabulary, dropping unknown codes."""
    out = []
    for rec in records:
        events = [(d, vocab.index[c]) for d, c in rec.events if c in vocab.index]
        if events:
            out.append(PatientRecord(rec.entity_id, events))
    return out


def bucketize(record: PatientRecord, time_unit_days: int = 7) -> BucketedSequence:
    if time_unit_days < 1:
        raise ValueError("time_unit_days must be >= 1")
    if not record.events:
        raise ValueError(f"record {record.entity_id!r} has no events")
    buckets: list[tuple[int, list]] = []
    for day, code in record.events:
        idx = day // time_unit_days
        if buckets and buckets[-1][0] == idx:
            buckets[-1][1].append(code)
        else:
            buckets.append((idx, [code]))
    return BucketedSequence(record.entity_id, buckets)


def keep_probability(count: int, total_count: int, sample_threshold: float) -> float:
    """Probability of keeping one occurrence of a code with the given count.

    Word2vec-style frequent-token subsampling: ``min(1, sqrt(t/f) + t/f)``
    with ``f = count / total_count``.
    """
    if not 0 < count <= total_count:
        raise ValueError("need 0 < count <= total_count")
    if sample_threshold <= 0:
        raise ValueError("sample_threshold must be positive")
    ratio = sample_threshold / (count / total_count)
    return min(1.0, math.sqrt(ratio) + ratio)


def keep_probabilities(vocab: Vocabulary, sample_threshold: float) -> np.ndarray:
    return np.array([keep_probability(c, vocab.total_count, sample_threshold) for c in vocab.counts])
