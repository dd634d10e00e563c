"""Review corpus handling.

Parses raw review dumps into a canonical dataset, extracts the k-core,
segments review text into sentences, and produces the chronological
leave-last-out train/validation/test split. Everything downstream
(graphs, similarities, predictors) consumes the outputs of this module.
"""

from __future__ import annotations

import gzip
import json
import logging
import re
from collections import Counter, defaultdict
from dataclasses import dataclass
from datetime import datetime, timezone
from pathlib import Path
from typing import Iterable, Iterator, Sequence

logger = logging.getLogger(__name__)

RATING_MIN = 1.0
RATING_MAX = 5.0


@dataclass(frozen=True)
class Interaction:
    """One (user, item, rating, timestamp, review text) record."""

    user_id: str
    item_id: str
    rating: float
    timestamp: int
    text: str = ""


@dataclass(frozen=True)
class SentenceRecord:
    """One review sentence with provenance into its parent interaction."""

    sentence_id: int
    user_id: str
    item_id: str
    review_rating: float
    ordinal: int
    text: str


class Dataset:
    """Immutable set of interactions with per-user and per-item views.

    Per-user and per-item lists are sorted by timestamp ascending; equal
    timestamps keep input order (stable sort), which downstream tie rules
    depend on.
    """

    def __init__(self, interactions: Iterable[Interaction], skipped: int = 0):
        self.interactions: tuple[Interaction, ...] = tuple(interactions)
        self.skipped = skipped
        by_user: dict[str, list[Interaction]] = defaultdict(list)
        by_item: dict[str, list[Interaction]] = defaultdict(list)
        for it in self.interactions:
            by_user[it.user_id].append(it)
            by_item[it.item_id].append(it)
        self.by_user = {u: sorted(v, key=lambda x: x.timestamp) for u, v in by_user.items()}
        self.by_item = {i: sorted(v, key=lambda x: x.timestamp) for i, v in by_item.items()}

    def __len__(self) -> int:
        return len(self.interactions)

    def users(self) -> list[str]:
        return sorted(self.by_user)

    def items(self) -> list[str]:
        return sorted(self.by_item)


@dataclass(frozen=True)
class ChronoSplit:
    """Leave-one-last-item split: per eligible user, last interaction goes
    to test and the penultimate one to validation."""

    train: Dataset
    validation: tuple[Interaction, ...]
    test: tuple[Interaction, ...]


# Field layouts of the supported JSON-lines flavors. "time" values may be
# epoch seconds or a date string (Yelp style).
_JSON_PRESETS = {
    "amazon-json": {
        "user": "reviewerID",
        "item": "asin",
        "rating": "overall",
        "time": "unixReviewTime",
        "text": "reviewText",
    },
    "yelp-json": {
        "user": "user_id",
        "item": "business_id",
        "rating": "stars",
        "time": "date",
        "text": "text",
    },
    "canonical": {
        "user": "user_id",
        "item": "item_id",
        "rating": "rating",
        "time": "timestamp",
        "text": "text",
    },
}

FORMATS = tuple(_JSON_PRESETS) + ("generic-tsv",)


def _open_text(path: str | Path, mode: str = "rt"):
    path = Path(path)
    if path.suffix == ".gz":
        return gzip.open(path, mode, encoding="utf-8")
    return open(path, mode, encoding="utf-8")


def _parse_timestamp(value) -> int:
    if isinstance(value, (int, float)):
        return int(value)
    value = str(value).strip()
    if value.isdigit() or (value.startswith("-") and value[1:].isdigit()):
        return int(value)
    for fmt in ("%Y-%m-%d %H:%M:%S", "%Y-%m-%d"):
        try:
            dt = datetime.strptime(value, fmt).replace(tzinfo=timezone.utc)
            return int(dt.timestamp())
        except ValueError:
            continue
    raise ValueError(f"unparseable timestamp {value!r}")


_TSV_UNESCAPE = re.compile(r"\\([\\tnr])")
_TSV_MAP = {"\\": "\\", "t": "\t", "n": "\n", "r": "\r"}


def escape_field(text: str) -> str:
    """Escape tab/newline/backslash so free text survives a TSV column."""
    return (
        text.replace("\\", "\\\\")
        .replace("\t", "\\t")
        .replace("\n", "\\n")
        .replace("\r", "\\r")
    )


def unescape_field(text: str) -> str:
    return _TSV_UNESCAPE.sub(lambda m: _TSV_MAP[m.group(1)], text)


def _record_from_json(line: str, preset: dict) -> Interaction:
    obj = json.loads(line)
    rating = float(obj[preset["rating"]])
    return Interaction(
        user_id=str(obj[preset["user"]]),
        item_id=str(obj[preset["item"]]),
        rating=rating,
        timestamp=_parse_timestamp(obj[preset["time"]]),
        text=str(obj.get(preset["text"]) or ""),
    )


def _record_from_tsv(line: str) -> Interaction:
    parts = line.split("\t", 4)
    if len(parts) < 4:
        raise ValueError("expected at least 4 tab-separated fields")
    text = unescape_field(parts[4]) if len(parts) == 5 else ""
    return Interaction(
        user_id=parts[0],
        item_id=parts[1],
        rating=float(parts[2]),
        timestamp=int(parts[3]),
        text=text,
    )


def parse_reviews(path: str | Path, format: str = "generic-tsv") -> Dataset:
    """Parse a review dump into a Dataset.

    Malformed lines and out-of-range ratings are skipped with a warning;
    the skip count is kept on the returned Dataset. An unreadable file
    raises OSError.
    """
    if format not in FORMATS:
        raise ValueError(f"unknown format {format!r}; expected one of {FORMATS}")
    records: list[Interaction] = []
    skipped = 0
    with _open_text(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.rstrip("\n").rstrip("\r")
            if not line:
                continue
            try:
                if format == "generic-tsv":
                    rec = _record_from_tsv(line)
                else:
                    rec = _record_from_json(line, _JSON_PRESETS[format])
            except (ValueError, KeyError, TypeError) as exc:
                skipped += 1
                logger.warning("%s:%d: skipping malformed line (%s)", path, lineno, exc)
                continue
            if not (RATING_MIN <= rec.rating <= RATING_MAX):
                skipped += 1
                logger.warning(
                    "%s:%d: skipping rating %.3g outside [1,5]", path, lineno, rec.rating
                )
                continue
            records.append(rec)
    if skipped:
        logger.warning("%s: skipped %d malformed line(s)", path, skipped)
    return Dataset(records, skipped=skipped)


def kcore_filter(dataset: Dataset, k: int) -> Dataset:
    """Keep the maximal sub-dataset where every user and item retains at
    least k interactions, by alternately peeling under-degree users and
    items until a fixpoint."""
    if k < 1:
        raise ValueError("k must be >= 1")
    inter: Sequence[Interaction] = dataset.interactions
    while True:
        ucnt = Counter(it.user_id for it in inter)
        kept = [it for it in inter if ucnt[it.user_id] >= k]
        icnt = Counter(it.item_id for it in kept)
        kept = [it for it in kept if icnt[it.item_id] >= k]
        if len(kept) == len(inter):
            return Dataset(kept)
        inter = kept


# Sentence boundary: terminal punctuation run, optional closing quotes or
# brackets, then whitespace. The whitespace is the only text dropped, so
# joining the sentences reproduces the review modulo delimiters.
_SENT_END = re.compile(r"[.!?]+[\"'”’)\]]*\s+")

_ABBREVIATIONS = {
    "mr", "mrs", "ms", "dr", "prof", "sr", "jr", "st", "vs", "etc",
    "e.g", "i.e", "inc", "ltd", "dept", "approx", "fig", "vol", "al",
}


def _ends_in_abbreviation(candidate: str) -> bool:
    token = candidate.rstrip(".!?\"'”’)]").rsplit(None, 1)
    if not token:
        return False
    word = token[-1].lower()
    # Single letters guard initials like "J. K. Rowling".
    return word in _ABBREVIATIONS or (len(word) == 1 and word.isalpha())


def split_sentences(text: str) -> list[str]:
    """Rule-based sentence splitter on terminal punctuation.

    Deterministic and dependency-free. A review with no terminal
    punctuation comes back as a single sentence; a blank review yields
    nothing.
    """
    parts: list[str] = []
    pos = 0
    for m in _SENT_END.finditer(text):
        candidate = text[pos:m.end()].rstrip()
        if _ends_in_abbreviation(candidate):
            continue
        parts.append(candidate)
        pos = m.end()
    tail = text[pos:]
    if tail.strip():
        parts.append(tail)
    return [p.strip() for p in parts if p.strip()]


def segment_sentences(dataset: Dataset) -> list[SentenceRecord]:
    """Segment every review into SentenceRecords with dense contiguous ids
    assigned in corpus order."""
    out: list[SentenceRecord] = []
    sid = 0
    for it in dataset.interactions:
        for ordinal, sent in enumerate(split_sentences(it.text)):
            out.append(
                SentenceRecord(
                    sentence_id=sid,
                    user_id=it.user_id,
                    item_id=it.item_id,
                    review_rating=it.rating,
                    ordinal=ordinal,
                    text=sent,
                )
            )
            sid += 1
    return out


def chrono_split(dataset: Dataset) -> ChronoSplit:
    """Leave-one-last-item split.

    Users with >= 3 interactions send their last interaction to test and
    the penultimate one to validation; everyone else stays entirely in
    train. Equal timestamps are broken by input order.
    """
    positions: dict[str, list[int]] = defaultdict(list)
    for pos, it in enumerate(dataset.interactions):
        positions[it.user_id].append(pos)
    val_pos: set[int] = set()
    test_pos: set[int] = set()
    for user in sorted(positions):
        seq = sorted(positions[user], key=lambda p: dataset.interactions[p].timestamp)
        if len(seq) >= 3:
            test_pos.add(seq[-1])
            val_pos.add(seq[-2])
    train = [it for pos, it in enumerate(dataset.interactions) if pos not in val_pos and pos not in test_pos]
    validation = tuple(
        dataset.interactions[p] for p in sorted(val_pos, key=lambda p: dataset.interactions[p].user_id)
    )
    test = tuple(
        dataset.interactions[p] for p in sorted(test_pos, key=lambda p: dataset.interactions[p].user_id)
    )
    return ChronoSplit(train=Dataset(train), validation=validation, test=test)


def save_dataset(dataset: Dataset, path: str | Path) -> None:
    """Write the canonical dataset file (JSON-lines of Interaction)."""
    with _open_text(path, "wt") as fh:
        for it in dataset.interactions:
            fh.write(
                json.dumps(
                    {
                        "user_id": it.user_id,
                        "item_id": it.item_id,
                        "rating": it.rating,
                        "timestamp": it.timestamp,
                        "text": it.text,
                    },
                    ensure_ascii=False,
                )
                + "\n"
            )


def load_dataset(path: str | Path) -> Dataset:
    return parse_reviews(path, format="canonical")


MANIFEST_HEADER = "sentence_id\tuser_id\titem_id\treview_rating\tordinal\ttext"


def write_manifest(sentences: Iterable[SentenceRecord], path: str | Path) -> None:
    """Write the sentence manifest consumed by the embedding encoder."""
    with _open_text(path, "wt") as fh:
        fh.write(MANIFEST_HEADER + "\n")
        for s in sentences:
            fh.write(
                f"{s.sentence_id}\t{s.user_id}\t{s.item_id}\t"
                f"{s.review_rating:g}\t{s.ordinal}\t{escape_field(s.text)}\n"
            )


def read_manifest(path: str | Path) -> list[SentenceRecord]:
    out: list[SentenceRecord] = []
    with _open_text(path) as fh:
        header = fh.readline().rstrip("\n")
        if header != MANIFEST_HEADER:
            raise ValueError(f"{path}: unexpected manifest header {header!r}")
        for line in fh:
            parts = line.rstrip("\n").split("\t", 5)
            if len(parts) != 6:
                raise ValueError(f"{path}: malformed manifest row {line!r}")
            out.append(
                SentenceRecord(
                    sentence_id=int(parts[0]),
                    user_id=parts[1],
                    item_id=parts[2],
                    review_rating=float(parts[3]),
                    ordinal=int(parts[4]),
                    text=unescape_field(parts[5]),
                )
            )
    return out
