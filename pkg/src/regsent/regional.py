"""Per-region sentiment aggregation, before/after split, and shift tests.

Binary labels are encoded negative=0 / positive=1, so a region's mean
sentiment is exactly its positive share. Regions enter the analysis only when
their classified-post total strictly exceeds the threshold.
"""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass
from datetime import date, datetime
from pathlib import Path
from typing import Iterable, Sequence

from . import stats
from .errors import DataValidationError

logger = logging.getLogger(__name__)

__all__ = [
    "RegionSentiment",
    "SentimentObservation",
    "ShiftSummary",
    "ShiftTestResult",
    "aggregate",
    "pooled_shift_test",
    "shift_regression",
    "shift_summary",
    "shift_test",
    "shift_test_for_region",
    "write_shift_csv",
]


@dataclass(frozen=True)
class SentimentObservation:
    """One classified post reduced to what aggregation needs."""

    region_id: str | None
    timestamp: datetime
    positive: bool


@dataclass(frozen=True)
class RegionSentiment:
    region_id: str
    n_pos_before: int
    n_neg_before: int
    n_pos_after: int
    n_neg_after: int
    included: bool

    @property
    def total(self) -> int:
        return self.n_pos_before + self.n_neg_before + self.n_pos_after + self.n_neg_after

    @property
    def mean_sentiment(self) -> float:
        """Positive share over both periods."""
        return (self.n_pos_before + self.n_pos_after) / self.total

    @property
    def mean_before(self) -> float:
        return self.n_pos_before / (self.n_pos_before + self.n_neg_before)

    @property
    def mean_after(self) -> float:
        return self.n_pos_after / (self.n_pos_after + self.n_neg_after)


def aggregate(
    observations: Iterable[SentimentObservation],
    event_date: date,
    threshold: int = 100,
    *,
    event_day: str = "before",
) -> tuple[list[RegionSentiment], int]:
    """Fold classified posts into per-region period counts.

    Inclusion is strict: total > threshold. Posts dated exactly on the event
    count as "before" by default (`event_day="after"` flips that). Posts
    without a region are excluded and counted; returns (regions sorted by
    region_id, n_without_region).
    """
    if event_day not in ("before", "after"):
        raise ValueError(f"event_day must be 'before' or 'after', got {event_day!r}")
    counts: dict[str, list[int]] = {}  # [pos_before, neg_before, pos_after, neg_after]
    skipped = 0
    for obs in observations:
        if not obs.region_id:
            skipped += 1
            continue
        obs_date = obs.timestamp.date()
        before = obs_date <= event_date if event_day == "before" else obs_date < event_date
        slot = (0 if obs.positive else 1) if before else (2 if obs.positive else 3)
        counts.setdefault(obs.region_id, [0, 0, 0, 0])[slot] += 1
    regions = [
        RegionSentiment(
            region_id=region_id,
            n_pos_before=c[0],
            n_neg_before=c[1],
            n_pos_after=c[2],
            n_neg_after=c[3],
            included=sum(c) > threshold,
        )
        for region_id, c in sorted(counts.items())
    ]
    return regions, skipped


@dataclass(frozen=True)
class ShiftTestResult:
    """Chi-squared test of equal positive share before vs after (df = 1)."""

    scope: str  # "global" or a region_id
    chi2: float
    df: int
    p_value: float
    significant_at: float
    degenerate: bool = False  # a zero margin forced the chi2=0, p=1 convention

    @property
    def significant(self) -> bool:
        return self.p_value < self.significant_at


def shift_test(
    n_pos_before: int,
    n_neg_before: int,
    n_pos_after: int,
    n_neg_after: int,
    *,
    scope: str = "global",
    alpha: float = 0.05,
) -> ShiftTestResult:
    """2x2 period-by-polarity test: chi2 = N (ad - bc)^2 / product of margins.

    Any zero margin makes the statistic undefined; by convention that yields
    chi2 = 0, p = 1, flagged via `degenerate`.
    """
    a, b, c, d = n_pos_before, n_neg_before, n_pos_after, n_neg_after
    n = a + b + c + d
    margins = ((a + b), (c + d), (a + c), (b + d))
    if any(m == 0 for m in margins):
        return ShiftTestResult(scope=scope, chi2=0.0, df=1, p_value=1.0, significant_at=alpha, degenerate=True)
    chi2 = n * (a * d - b * c) ** 2 / (margins[0] * margins[1] * margins[2] * margins[3])
    return ShiftTestResult(
        scope=scope,
        chi2=float(chi2),
        df=1,
        p_value=stats.chi2_sf(float(chi2), 1),
        significant_at=alpha,
    )


def shift_test_for_region(rs: RegionSentiment, alpha: float = 0.05) -> ShiftTestResult:
    return shift_test(
        rs.n_pos_before, rs.n_neg_before, rs.n_pos_after, rs.n_neg_after,
        scope=rs.region_id, alpha=alpha,
    )


def pooled_shift_test(
    regions: Sequence[RegionSentiment],
    alpha: float = 0.05,
    included_only: bool = True,
) -> ShiftTestResult:
    """Global test on counts pooled over (included) regions."""
    rows = [r for r in regions if r.included] if included_only else list(regions)
    return shift_test(
        sum(r.n_pos_before for r in rows),
        sum(r.n_neg_before for r in rows),
        sum(r.n_pos_after for r in rows),
        sum(r.n_neg_after for r in rows),
        scope="global",
        alpha=alpha,
    )


@dataclass(frozen=True)
class ShiftSummary:
    n_tested: int
    n_significant: int
    alpha: float
    significant_regions: tuple[str, ...]


def shift_summary(results: Iterable[ShiftTestResult], alpha: float = 0.05) -> ShiftSummary:
    results = list(results)
    significant = sorted(r.scope for r in results if r.p_value < alpha)
    return ShiftSummary(
        n_tested=len(results),
        n_significant=len(significant),
        alpha=alpha,
        significant_regions=tuple(significant),
    )


def shift_regression(regions: Sequence[RegionSentiment], included_only: bool = True) -> stats.OlsFit:
    """OLS of period mean sentiment on an after-period dummy.

    Each usable region contributes its before mean (flag 0) and after mean
    (flag 1); regions with an empty period cannot produce that period's mean
    and are skipped with a warning. Fewer than two usable regions is fatal.
    """
    rows = [r for r in regions if r.included] if included_only else list(regions)
    usable: list[RegionSentiment] = []
    for r in rows:
        if (r.n_pos_before + r.n_neg_before) == 0 or (r.n_pos_after + r.n_neg_after) == 0:
            logger.warning("region %s lacks posts in one period; skipped in shift regression", r.region_id)
            continue
        usable.append(r)
    if len(usable) < 2:
        raise DataValidationError("shift regression needs at least two regions with both periods")
    usable.sort(key=lambda r: r.region_id)
    y = [r.mean_before for r in usable] + [r.mean_after for r in usable]
    flag = [0.0] * len(usable) + [1.0] * len(usable)
    design = stats.design_matrix(("after_period",), [[f] for f in flag], y)
    return stats.ols(design)


def write_shift_csv(
    regions: Sequence[RegionSentiment],
    results: dict[str, ShiftTestResult],
    path: str | Path,
) -> None:
    """Per-region CSV with counts, mean, inclusion, and the test outcome."""
    with Path(path).open("w", encoding="utf-8", newline="") as handle:
        writer = csv.writer(handle, lineterminator="\n")
        writer.writerow([
            "region_id", "n_pos_before", "n_neg_before", "n_pos_after", "n_neg_after",
            "mean_sentiment", "included", "chi2", "p",
        ])
        for r in regions:
            test = results.get(r.region_id)
            writer.writerow([
                r.region_id, r.n_pos_before, r.n_neg_before, r.n_pos_after, r.n_neg_after,
                repr(r.mean_sentiment), r.included,
                repr(test.chi2) if test else "",
                repr(test.p_value) if test else "",
            ])
