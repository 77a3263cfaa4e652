"""Corpus ingestion: posts, gazetteer, region tables, and count diagnostics.

File formats (all UTF-8):
  posts        JSON lines {"id","text","timestamp","place","lang"} or CSV with
               the same columns; timestamps RFC-3339.
  gazetteer    CSV place_name,commune,region_id,province,importance,population
  region table CSV region_id,population,outcome,<feature columns...>
"""

from __future__ import annotations

import csv
import json
import logging
import unicodedata
from dataclasses import dataclass
from datetime import datetime, timezone
from pathlib import Path
from typing import Iterable, Mapping, Sequence

from .errors import DataValidationError

logger = logging.getLogger(__name__)

__all__ = [
    "GazetteerEntry",
    "RawPost",
    "RegionCount",
    "RegionRecord",
    "filter_located",
    "load_gazetteer",
    "load_posts",
    "load_region_table",
    "normalize_place",
    "region_counts",
    "resolve_region",
]


@dataclass(frozen=True)
class RawPost:
    """One ingested micro-post."""

    id: str
    text: str
    timestamp: datetime
    place_name: str | None = None
    language: str | None = None


@dataclass(frozen=True)
class GazetteerEntry:
    """Place name -> administrative region, with a disambiguation score."""

    place_name: str
    commune: str
    region_id: str
    province: str
    importance: float
    population: int


@dataclass(frozen=True)
class RegionCount:
    count: int
    per_capita: float | None  # count / population; None when population unknown


@dataclass(frozen=True)
class RegionRecord:
    """One region row: outcome share plus named socio-economic features."""

    region_id: str
    population: int
    outcome: float
    features: Mapping[str, float]


def _parse_timestamp(raw: str) -> datetime:
    ts = datetime.fromisoformat(raw.replace("Z", "+00:00"))
    if ts.tzinfo is None:
        ts = ts.replace(tzinfo=timezone.utc)  # naive timestamps read as UTC
    return ts.astimezone(timezone.utc)


def _post_from_record(record: Mapping[str, object]) -> RawPost | None:
    """None when the record fails the ingestion filter (missing id/empty text)."""
    post_id = record.get("id")
    text = record.get("text")
    if post_id in (None, "") or text in (None, "") or not str(text).strip():
        return None
    ts = record.get("timestamp")
    if not ts:
        return None
    place = record.get("place") or None
    lang = record.get("lang") or None
    return RawPost(
        id=str(post_id),
        text=str(text),
        timestamp=_parse_timestamp(str(ts)),
        place_name=str(place) if place else None,
        language=str(lang) if lang else None,
    )


def load_posts(path: str | Path, fmt: str = "jsonl") -> tuple[list[RawPost], int]:
    """Load posts from JSONL or CSV; returns (posts, skipped_count).

    Records with a missing id, empty text, or unparsable fields are skipped
    and counted; input order is preserved. An unreadable file raises.
    """
    path = Path(path)
    if fmt not in ("jsonl", "csv"):
        raise ValueError(f"unknown posts format {fmt!r}")
    posts: list[RawPost] = []
    skipped = 0
    with path.open(encoding="utf-8", newline="") as handle:
        if fmt == "jsonl":
            for line_no, line in enumerate(handle, 1):
                line = line.strip()
                if not line:
                    continue
                try:
                    record = json.loads(line)
                    post = _post_from_record(record) if isinstance(record, dict) else None
                except (json.JSONDecodeError, ValueError):
                    post = None
                if post is None:
                    skipped += 1
                    logger.warning("skipping malformed post record at %s:%d", path, line_no)
                else:
                    posts.append(post)
        else:
            reader = csv.DictReader(handle)
            for line_no, row in enumerate(reader, 2):
                try:
                    post = _post_from_record(row)
                except ValueError:
                    post = None
                if post is None:
                    skipped += 1
                    logger.warning("skipping malformed post record at %s:%d", path, line_no)
                else:
                    posts.append(post)
    return posts, skipped


def filter_located(posts: Iterable[RawPost], language: str) -> list[RawPost]:
    """Posts that declare a place and carry the requested language tag.

    Idempotent; tag comparison is case-insensitive (IETF convention).
    """
    lang = language.lower()
    return [
        p for p in posts
        if p.place_name and p.language is not None and p.language.lower() == lang
    ]


def normalize_place(name: str) -> str:
    """Matching key for place names: NFC normalization + case folding."""
    return unicodedata.normalize("NFC", name).casefold().strip()


def load_gazetteer(path: str | Path) -> list[GazetteerEntry]:
    path = Path(path)
    entries: list[GazetteerEntry] = []
    seen: set[tuple[str, str]] = set()
    with path.open(encoding="utf-8", newline="") as handle:
        reader = csv.DictReader(handle)
        for line_no, row in enumerate(reader, 2):
            try:
                importance = float(row["importance"])
                population = int(row["population"])
                entry = GazetteerEntry(
                    place_name=row["place_name"],
                    commune=row["commune"],
                    region_id=row["region_id"],
                    province=row["province"],
                    importance=importance,
                    population=population,
                )
            except (KeyError, TypeError, ValueError) as exc:
                raise DataValidationError(f"{path}:{line_no}: bad gazetteer row ({exc})") from exc
            if not (0.0 <= importance <= 1.0):
                raise DataValidationError(f"{path}:{line_no}: importance {importance} outside [0, 1]")
            if population < 0:
                raise DataValidationError(f"{path}:{line_no}: negative population")
            key = (entry.place_name, entry.region_id)
            if key in seen:
                raise DataValidationError(f"{path}:{line_no}: duplicate (place_name, region_id) {key}")
            seen.add(key)
            entries.append(entry)
    return entries


def resolve_region(place_name: str, gazetteer: Sequence[GazetteerEntry]) -> str | None:
    """Region of the maximum-importance gazetteer entry matching the name.

    Matching is exact on the normalized name (no fuzzy matching). Importance
    ties are broken by lexicographically smallest region_id, so the result
    never depends on gazetteer order; a tie emits a warning.
    """
    key = normalize_place(place_name)
    best: GazetteerEntry | None = None
    tied = False
    for entry in gazetteer:
        if normalize_place(entry.place_name) != key:
            continue
        if best is None:
            best = entry
            continue
        if entry.importance > best.importance:
            best = entry
            tied = False
        elif entry.importance == best.importance and entry.region_id != best.region_id:
            tied = True
            if entry.region_id < best.region_id:
                best = entry
    if best is None:
        return None
    if tied:
        logger.warning(
            "importance tie for place %r resolved to region %s", place_name, best.region_id
        )
    return best.region_id


def region_counts(
    region_ids: Iterable[str],
    populations: Mapping[str, int],
) -> dict[str, RegionCount]:
    """Post counts per region and the population-weighted count (count/pop).

    A region missing from `populations` reports per_capita as None, not zero.
    """
    counts: dict[str, int] = {}
    for region_id in region_ids:
        counts[region_id] = counts.get(region_id, 0) + 1
    out: dict[str, RegionCount] = {}
    for region_id in sorted(counts):
        count = counts[region_id]
        pop = populations.get(region_id)
        per_capita = count / pop if pop else None
        out[region_id] = RegionCount(count=count, per_capita=per_capita)
    return out


_REGION_TABLE_FIXED = ("region_id", "population", "outcome")


def load_region_table(path: str | Path) -> list[RegionRecord]:
    """Region table rows; every non-fixed column becomes a named feature."""
    path = Path(path)
    records: list[RegionRecord] = []
    seen: set[str] = set()
    with path.open(encoding="utf-8", newline="") as handle:
        reader = csv.DictReader(handle)
        header = reader.fieldnames or []
        missing = [c for c in _REGION_TABLE_FIXED if c not in header]
        if missing:
            raise DataValidationError(f"{path}: missing region table columns {missing}")
        feature_names = [c for c in header if c not in _REGION_TABLE_FIXED]
        for line_no, row in enumerate(reader, 2):
            try:
                region_id = row["region_id"]
                population = int(row["population"])
                outcome = float(row["outcome"])
                features = {name: float(row[name]) for name in feature_names}
            except (KeyError, TypeError, ValueError) as exc:
                raise DataValidationError(f"{path}:{line_no}: bad region row ({exc})") from exc
            if not (0.0 <= outcome <= 1.0):
                raise DataValidationError(f"{path}:{line_no}: outcome {outcome} outside [0, 1]")
            if population <= 0:
                raise DataValidationError(f"{path}:{line_no}: population must be positive")
            if region_id in seen:
                raise DataValidationError(f"{path}:{line_no}: duplicate region_id {region_id!r}")
            seen.add(region_id)
            records.append(
                RegionRecord(region_id=region_id, population=population, outcome=outcome, features=features)
            )
    return records
