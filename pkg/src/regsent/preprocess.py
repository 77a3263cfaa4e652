"""Post normalization chain and corpus-level hashtag/emoji diagnostics.

Cleaning applies a fixed step order: links, mentions, hashtags, emoji
filtering, non-word stripping, whitespace collapse, short-post rejection,
misspelling rejection, lemmatization, stop-word removal. Rejection
short-circuits the remaining steps and is a value, not an error.
"""

from __future__ import annotations

import csv
import re
import unicodedata
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Callable, Iterable, Mapping

from .corpus import RawPost
from .errors import DataValidationError

__all__ = [
    "CleanConfig",
    "CleanPost",
    "FrequencyReport",
    "FrequencyRow",
    "clean",
    "clean_text",
    "emoji_report",
    "hashtag_report",
    "identity_transform",
    "lemmatize_and_stop",
    "load_emoji_polarity",
    "load_lemma_map",
    "load_word_list",
    "render_tokens",
    "select_emoji_whitelist",
    "spell_gate",
    "write_frequency_csv",
]

TextTransform = Callable[[str], str]

URL_RE = re.compile(r"https?://\S+|\bwww\.\S+", re.IGNORECASE)
MENTION_RE = re.compile(r"@\w+")
HASHTAG_RE = re.compile(r"#\w+")

# Codepoint blocks treated as emoji during cleaning and emoji reports.
_EMOJI_RANGES = (
    (0x1F300, 0x1F5FF),
    (0x1F600, 0x1F64F),
    (0x1F680, 0x1F6FF),
    (0x1F900, 0x1F9FF),
    (0x1FA70, 0x1FAFF),
    (0x2600, 0x26FF),
    (0x2700, 0x27BF),
    (0x2B00, 0x2BFF),
)


def _is_emoji(ch: str) -> bool:
    cp = ord(ch)
    return any(lo <= cp <= hi for lo, hi in _EMOJI_RANGES)


def identity_transform(text: str) -> str:
    """Default text transform; the adapter slot for e.g. machine translation."""
    return text


@dataclass(frozen=True)
class CleanConfig:
    """Normalization settings: resources plus per-step toggles.

    For clean() to be idempotent on its own rendered output the resources must
    be coherent: conjunctions should cover the stop words, and the lemma map
    should be idempotent with values inside the dictionary and outside the
    stop set (the bundled fixtures satisfy this).
    """

    dictionary: frozenset[str] = frozenset()
    lemma_map: Mapping[str, str] = field(default_factory=dict)
    stop_words: frozenset[str] = frozenset()
    conjunctions: frozenset[str] = frozenset()
    emoji_whitelist: frozenset[str] = frozenset()
    min_words: int = 3  # reject posts with <= min_words non-conjunction tokens
    remove_links: bool = True
    remove_mentions: bool = True
    remove_hashtags: bool = True
    filter_emojis: bool = True
    strip_nonword: bool = True
    reject_short: bool = True
    reject_misspelled: bool = True
    lemmatize: bool = True
    remove_stop_words: bool = True
    transform: TextTransform = identity_transform

    def with_whitelist(self, whitelist: Iterable[str]) -> "CleanConfig":
        return replace(self, emoji_whitelist=frozenset(whitelist))


@dataclass(frozen=True)
class CleanPost:
    """Cleaned post: word tokens, retained emojis, and removal accounting.

    Rejected posts carry a reason ("too_short" or "misspelled") and an empty
    token list. `removed` counts occurrences for links/mentions/hashtags and
    characters for nonword; emojis_dropped counts non-whitelisted emoji.
    """

    id: str
    tokens: tuple[str, ...]
    kept_emojis: tuple[str, ...]
    removed: Mapping[str, int]
    rejected_reason: str | None = None

    @property
    def accepted(self) -> bool:
        return self.rejected_reason is None


def spell_gate(tokens: Iterable[str], dictionary: frozenset[str] | set[str]) -> bool:
    """True when every token is in the dictionary; one miss fails the post."""
    return all(token in dictionary for token in tokens)


def lemmatize_and_stop(
    tokens: Iterable[str],
    lemma_map: Mapping[str, str],
    stops: frozenset[str] | set[str],
    *,
    lemmatize: bool = True,
    remove_stops: bool = True,
) -> list[str]:
    """Replace tokens with lemmas (identity fallback), then drop stop words."""
    out = [lemma_map.get(t, t) for t in tokens] if lemmatize else list(tokens)
    if remove_stops:
        out = [t for t in out if t not in stops]
    return out


def _reject(post_id: str, kept: list[str], removed: dict[str, int], reason: str) -> CleanPost:
    return CleanPost(
        id=post_id,
        tokens=(),
        kept_emojis=tuple(kept),
        removed=dict(removed),
        rejected_reason=reason,
    )


def clean(post: RawPost, config: CleanConfig) -> CleanPost:
    return clean_text(post.id, post.text, config)


def clean_text(post_id: str, raw_text: str, config: CleanConfig) -> CleanPost:
    removed = {"links": 0, "mentions": 0, "hashtags": 0, "nonword": 0, "emojis_dropped": 0}
    text = unicodedata.normalize("NFC", config.transform(raw_text))

    if config.remove_links:
        text, removed["links"] = URL_RE.subn(" ", text)
    if config.remove_mentions:
        text, removed["mentions"] = MENTION_RE.subn(" ", text)
    if config.remove_hashtags:
        text, removed["hashtags"] = HASHTAG_RE.subn(" ", text)

    kept_emojis: list[str] = []
    if config.filter_emojis:
        chars: list[str] = []
        for ch in text:
            if _is_emoji(ch):
                if ch in config.emoji_whitelist:
                    kept_emojis.append(ch)
                else:
                    removed["emojis_dropped"] += 1
                chars.append(" ")
            else:
                chars.append(ch)
        text = "".join(chars)

    if config.strip_nonword:
        chars = []
        for ch in text:
            if ch.isalpha() or ch.isspace():
                chars.append(ch)
            else:
                removed["nonword"] += 1
                chars.append(" ")
        text = "".join(chars)

    tokens = text.lower().split()

    if config.reject_short:
        content = [t for t in tokens if t not in config.conjunctions]
        if len(content) <= config.min_words:
            return _reject(post_id, kept_emojis, removed, "too_short")

    if config.reject_misspelled and not spell_gate(tokens, config.dictionary):
        return _reject(post_id, kept_emojis, removed, "misspelled")

    tokens = lemmatize_and_stop(
        tokens,
        config.lemma_map,
        config.stop_words,
        lemmatize=config.lemmatize,
        remove_stops=config.remove_stop_words,
    )
    return CleanPost(
        id=post_id,
        tokens=tuple(tokens),
        kept_emojis=tuple(kept_emojis),
        removed=removed,
    )


def render_tokens(cp: CleanPost) -> str:
    """Cleaned post back as text (tokens then kept emojis, space separated)."""
    return " ".join(list(cp.tokens) + list(cp.kept_emojis))


# ---------------------------------------------------------------------------
# Frequency reports
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class FrequencyRow:
    item: str
    count: int
    share: float


@dataclass(frozen=True)
class FrequencyReport:
    """Item counts sorted by count desc then item asc; share = count / total.

    Shares stay relative to the full total even when rows are truncated to a
    top-k, so truncated shares sum to <= 1.
    """

    rows: tuple[FrequencyRow, ...]
    total: int


def _frequency_report(counts: Mapping[str, int], top_k: int | None) -> FrequencyReport:
    total = sum(counts.values())
    ordered = sorted(counts.items(), key=lambda kv: (-kv[1], kv[0]))
    if top_k is not None:
        ordered = ordered[:top_k]
    rows = tuple(
        FrequencyRow(item=item, count=count, share=count / total) for item, count in ordered
    )
    return FrequencyReport(rows=rows, total=total)


def hashtag_report(posts: Iterable[RawPost], top_k: int | None = None) -> FrequencyReport:
    """Occurrence counts of `#word` hashtags (lowercased, '#' stripped)."""
    counts: dict[str, int] = {}
    for post in posts:
        for match in HASHTAG_RE.findall(post.text):
            tag = match[1:].lower()
            counts[tag] = counts.get(tag, 0) + 1
    return _frequency_report(counts, top_k)


def emoji_report(posts: Iterable[RawPost], top_k: int | None = None) -> FrequencyReport:
    """Occurrence counts of emoji codepoints across the corpus."""
    counts: dict[str, int] = {}
    for post in posts:
        for ch in post.text:
            if _is_emoji(ch):
                counts[ch] = counts.get(ch, 0) + 1
    return _frequency_report(counts, top_k)


def select_emoji_whitelist(
    posts: Iterable[RawPost],
    polarity: Mapping[str, str],
    min_share: float = 0.01,
) -> frozenset[str]:
    """Emojis with unambiguous polarity and at least `min_share` of all emoji.

    Polarity values are "pos", "neg", or "ambiguous"; only pos/neg qualify.
    An emoji-free corpus yields an empty set.
    """
    report = emoji_report(posts)
    if report.total == 0:
        return frozenset()
    return frozenset(
        row.item
        for row in report.rows
        if polarity.get(row.item) in ("pos", "neg") and row.share >= min_share
    )


def write_frequency_csv(report: FrequencyReport, path: str | Path) -> None:
    with Path(path).open("w", encoding="utf-8", newline="") as handle:
        writer = csv.writer(handle, lineterminator="\n")
        writer.writerow(["item", "count", "share"])
        for row in report.rows:
            writer.writerow([row.item, row.count, repr(row.share)])


# ---------------------------------------------------------------------------
# Resource file loaders (one term per line, UTF-8)
# ---------------------------------------------------------------------------

def load_word_list(path: str | Path) -> frozenset[str]:
    words = set()
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        word = unicodedata.normalize("NFC", line.strip().lower())
        if word:
            words.add(word)
    return frozenset(words)


def load_lemma_map(path: str | Path) -> dict[str, str]:
    """Lemma file: `word lemma` per line (whitespace separated)."""
    mapping: dict[str, str] = {}
    for line_no, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        line = line.strip()
        if not line:
            continue
        parts = line.split()
        if len(parts) != 2:
            raise DataValidationError(f"{path}:{line_no}: expected 'word lemma', got {line!r}")
        word, lemma = (unicodedata.normalize("NFC", p.lower()) for p in parts)
        mapping[word] = lemma
    return mapping


def load_emoji_polarity(path: str | Path) -> dict[str, str]:
    """Polarity file: `emoji polarity` per line, polarity in pos|neg|ambiguous."""
    mapping: dict[str, str] = {}
    for line_no, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        line = line.strip()
        if not line:
            continue
        parts = line.split()
        if len(parts) != 2 or parts[1] not in ("pos", "neg", "ambiguous"):
            raise DataValidationError(f"{path}:{line_no}: expected 'emoji pos|neg|ambiguous', got {line!r}")
        mapping[parts[0]] = parts[1]
    return mapping
