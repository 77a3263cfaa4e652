"""Batch stages behind the CLI subcommands.

Every stage reads its inputs from configured paths or from artifacts earlier
stages left in the output directory, and writes deterministic artifacts
(plain CSV/JSONL, stable ordering, repr floats). `run_pipeline` is literally
the stages composed in order, so a pipeline run and the equivalent sequence
of subcommands produce identical bytes.
"""

from __future__ import annotations

import csv
import json
import random
from dataclasses import dataclass, field
from datetime import date, datetime
from pathlib import Path
from typing import Any, Mapping, Sequence

from . import regional, stats
from .corpus import (
    RawPost,
    filter_located,
    load_gazetteer,
    load_posts,
    load_region_table,
    region_counts,
    resolve_region,
)
from .errors import ConfigError, DataValidationError
from .preprocess import (
    CleanConfig,
    clean_text,
    emoji_report,
    hashtag_report,
    load_emoji_polarity,
    load_lemma_map,
    load_word_list,
    select_emoji_whitelist,
    write_frequency_csv,
)
from .regional import RegionSentiment, SentimentObservation, aggregate
from .sentiment import (
    LabeledExample,
    SentimentLabel,
    evaluate,
    import_external_predictions,
    load_labeled_csv,
    load_model,
    match_predictions,
    predict,
    pseudo_label,
    save_model,
    train,
    train_test_split,
)

__all__ = [
    "ClassifierSettings",
    "CleaningSettings",
    "PipelineConfig",
    "RegressionSettings",
    "load_config",
    "run_pipeline",
    "stage_aggregate",
    "stage_classify",
    "stage_clean",
    "stage_import_predictions",
    "stage_ingest",
    "stage_regress",
    "stage_report",
    "stage_shift_test",
    "stage_stepwise",
    "stage_train",
]

_PATH_KEYS = (
    "posts",
    "gazetteer",
    "dictionary",
    "lemmas",
    "stop_words",
    "conjunctions",
    "emoji_polarity",
    "training_data",
    "region_table",
    "external_predictions",
)


@dataclass(frozen=True)
class ClassifierSettings:
    kind: str = "naive_bayes"
    binary: bool = True
    smoothing: float = 1.0
    learning_rate: float = 0.1
    epochs: int = 300
    l2: float = 1e-4
    pseudo_label: bool = False
    pseudo_fraction: float = 1.0
    min_confidence: float | None = None
    test_fraction: float = 0.2


@dataclass(frozen=True)
class CleaningSettings:
    """Per-step toggles of the normalization chain (all on by default)."""

    min_words: int = 3
    remove_links: bool = True
    remove_mentions: bool = True
    remove_hashtags: bool = True
    filter_emojis: bool = True
    strip_nonword: bool = True
    reject_short: bool = True
    reject_misspelled: bool = True
    lemmatize: bool = True
    remove_stop_words: bool = True


@dataclass(frozen=True)
class RegressionSettings:
    standardize: bool = True
    features: tuple[str, ...] | None = None  # None -> every table feature column
    direction: str = "both"
    start: str = "full"


@dataclass(frozen=True)
class PipelineConfig:
    base_dir: Path
    paths: Mapping[str, Path | None]
    language: str = "pl"
    event_date: date = date(2019, 10, 13)
    posts_format: str = "jsonl"
    min_region_posts: int = 100
    emoji_min_share: float = 0.01
    alpha: float = 0.05
    event_day: str = "before"  # which period posts dated on the event join
    cleaning: CleaningSettings = field(default_factory=CleaningSettings)
    classifier: ClassifierSettings = field(default_factory=ClassifierSettings)
    regression: RegressionSettings = field(default_factory=RegressionSettings)
    seed: int = 0

    def require_paths(self, *keys: str) -> dict[str, Path]:
        out: dict[str, Path] = {}
        for key in keys:
            path = self.paths.get(key)
            if path is None:
                raise ConfigError(f"config paths.{key} is required for this command")
            out[key] = path
        return out


def _build_settings(cls, raw: Mapping[str, Any], where: str):
    known = {f.name for f in cls.__dataclass_fields__.values()}  # type: ignore[attr-defined]
    unknown = set(raw) - known
    if unknown:
        raise ConfigError(f"unknown {where} settings: {sorted(unknown)}")
    if "features" in raw and raw["features"] is not None:
        raw = dict(raw, features=tuple(raw["features"]))
    try:
        return cls(**raw)
    except TypeError as exc:
        raise ConfigError(f"bad {where} settings: {exc}") from exc


def _apply_override(doc: dict, dotted: str, value: str) -> None:
    keys = dotted.split(".")
    node = doc
    for key in keys[:-1]:
        node = node.setdefault(key, {})
        if not isinstance(node, dict):
            raise ConfigError(f"cannot override {dotted!r}: {key!r} is not a table")
    try:
        node[keys[-1]] = json.loads(value)
    except json.JSONDecodeError:
        node[keys[-1]] = value


def load_config(path: str | Path, overrides: Sequence[str] = (), seed: int | None = None) -> PipelineConfig:
    """Parse and validate the JSON config; `overrides` are `key.path=value`."""
    path = Path(path)
    try:
        doc = json.loads(path.read_text(encoding="utf-8"))
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config {path} is not valid JSON: {exc}") from exc
    if not isinstance(doc, dict):
        raise ConfigError(f"config {path} must be a JSON object")
    for item in overrides:
        if "=" not in item:
            raise ConfigError(f"override {item!r} is not key=value")
        key, _, value = item.partition("=")
        _apply_override(doc, key.strip(), value.strip())
    if seed is not None:
        doc["seed"] = seed

    base_dir = path.parent
    raw_paths = doc.get("paths", {})
    unknown = set(raw_paths) - set(_PATH_KEYS)
    if unknown:
        raise ConfigError(f"unknown path keys: {sorted(unknown)}")
    paths: dict[str, Path | None] = {key: None for key in _PATH_KEYS}
    missing: list[str] = []
    for key, value in raw_paths.items():
        if value is None:
            continue
        resolved = (base_dir / value).resolve() if not Path(value).is_absolute() else Path(value)
        if not resolved.exists():
            missing.append(f"{key} -> {resolved}")
        paths[key] = resolved
    if missing:
        raise ConfigError("configured files do not exist: " + "; ".join(missing))

    thresholds = doc.get("thresholds", {})
    try:
        event_date = date.fromisoformat(doc.get("event_date", "2019-10-13"))
    except ValueError as exc:
        raise ConfigError(f"bad event_date: {exc}") from exc
    if doc.get("event_day", "before") not in ("before", "after"):
        raise ConfigError("event_day must be 'before' or 'after'")
    try:
        cfg = PipelineConfig(
            base_dir=base_dir,
            paths=paths,
            language=str(doc.get("language", "pl")),
            event_date=event_date,
            posts_format=str(doc.get("posts_format", "jsonl")),
            min_region_posts=int(thresholds.get("min_region_posts", 100)),
            emoji_min_share=float(thresholds.get("emoji_min_share", 0.01)),
            alpha=float(doc.get("alpha", 0.05)),
            event_day=str(doc.get("event_day", "before")),
            cleaning=_build_settings(CleaningSettings, doc.get("cleaning", {}), "cleaning"),
            classifier=_build_settings(ClassifierSettings, doc.get("classifier", {}), "classifier"),
            regression=_build_settings(RegressionSettings, doc.get("regression", {}), "regression"),
            seed=int(doc.get("seed", 0)),
        )
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"bad config value: {exc}") from exc
    if cfg.posts_format not in ("jsonl", "csv"):
        raise ConfigError(f"posts_format must be jsonl or csv, got {cfg.posts_format!r}")
    if cfg.classifier.kind not in ("naive_bayes", "logistic"):
        raise ConfigError(f"classifier.kind must be naive_bayes or logistic, got {cfg.classifier.kind!r}")
    if not (0.0 < cfg.classifier.test_fraction < 1.0):
        raise ConfigError("classifier.test_fraction must be in (0, 1)")
    if not (0.0 <= cfg.classifier.pseudo_fraction <= 1.0):
        raise ConfigError("classifier.pseudo_fraction must be in [0, 1]")
    if cfg.regression.direction not in ("backward", "forward", "both"):
        raise ConfigError(f"regression.direction must be backward, forward, or both, got {cfg.regression.direction!r}")
    if cfg.regression.start not in ("full", "empty"):
        raise ConfigError(f"regression.start must be full or empty, got {cfg.regression.start!r}")
    return cfg


# ---------------------------------------------------------------------------
# Artifact helpers
# ---------------------------------------------------------------------------

def _write_json(path: Path, payload: Mapping[str, Any]) -> None:
    path.write_text(json.dumps(payload, indent=2, sort_keys=True, ensure_ascii=False) + "\n", encoding="utf-8")


def _require_artifact(out_dir: Path, name: str) -> Path:
    path = out_dir / name
    if not path.exists():
        raise ConfigError(f"missing intermediate {name}; run the producing stage first")
    return path


def _read_jsonl(path: Path) -> list[dict]:
    rows = []
    with path.open(encoding="utf-8") as handle:
        for line in handle:
            line = line.strip()
            if line:
                rows.append(json.loads(line))
    return rows


def _read_located(out_dir: Path) -> list[dict]:
    return _read_jsonl(_require_artifact(out_dir, "located.jsonl"))


def _located_as_posts(rows: Sequence[dict]) -> list[RawPost]:
    return [
        RawPost(
            id=row["id"],
            text=row["text"],
            timestamp=datetime.fromisoformat(row["timestamp"]),
            place_name=row.get("place") or None,
            language=row.get("lang") or None,
        )
        for row in rows
    ]


def _read_clean(out_dir: Path) -> list[dict]:
    return _read_jsonl(_require_artifact(out_dir, "clean.jsonl"))


def _read_predictions(out_dir: Path) -> list[dict]:
    path = _require_artifact(out_dir, "predictions.csv")
    with path.open(encoding="utf-8", newline="") as handle:
        return list(csv.DictReader(handle))


def _read_region_sentiment(out_dir: Path) -> list[RegionSentiment]:
    path = _require_artifact(out_dir, "region_sentiment.csv")
    regions = []
    with path.open(encoding="utf-8", newline="") as handle:
        for row in csv.DictReader(handle):
            regions.append(
                RegionSentiment(
                    region_id=row["region_id"],
                    n_pos_before=int(row["n_pos_before"]),
                    n_neg_before=int(row["n_neg_before"]),
                    n_pos_after=int(row["n_pos_after"]),
                    n_neg_after=int(row["n_neg_after"]),
                    included=row["included"] == "True",
                )
            )
    return regions


def _clean_settings(cfg: PipelineConfig, whitelist: frozenset[str]) -> CleanConfig:
    paths = cfg.require_paths("dictionary", "lemmas", "stop_words", "conjunctions")
    toggles = cfg.cleaning
    return CleanConfig(
        dictionary=load_word_list(paths["dictionary"]),
        lemma_map=load_lemma_map(paths["lemmas"]),
        stop_words=load_word_list(paths["stop_words"]),
        conjunctions=load_word_list(paths["conjunctions"]),
        emoji_whitelist=whitelist,
        min_words=toggles.min_words,
        remove_links=toggles.remove_links,
        remove_mentions=toggles.remove_mentions,
        remove_hashtags=toggles.remove_hashtags,
        filter_emojis=toggles.filter_emojis,
        strip_nonword=toggles.strip_nonword,
        reject_short=toggles.reject_short,
        reject_misspelled=toggles.reject_misspelled,
        lemmatize=toggles.lemmatize,
        remove_stop_words=toggles.remove_stop_words,
    )


# ---------------------------------------------------------------------------
# Stages
# ---------------------------------------------------------------------------

def stage_ingest(cfg: PipelineConfig, out_dir: Path) -> dict:
    """Load posts, keep located ones in the configured language, resolve regions."""
    out_dir.mkdir(parents=True, exist_ok=True)
    paths = cfg.require_paths("posts", "gazetteer")
    posts, skipped = load_posts(paths["posts"], cfg.posts_format)
    located = filter_located(posts, cfg.language)
    gazetteer = load_gazetteer(paths["gazetteer"])
    cache: dict[str, str | None] = {}
    resolved_ids: list[str] = []
    with (out_dir / "located.jsonl").open("w", encoding="utf-8", newline="") as handle:
        for post in located:
            place = post.place_name or ""
            if place not in cache:
                cache[place] = resolve_region(place, gazetteer)
            region = cache[place]
            if region:
                resolved_ids.append(region)
            handle.write(json.dumps({
                "id": post.id,
                "text": post.text,
                "timestamp": post.timestamp.isoformat(),
                "place": post.place_name,
                "lang": post.language,
                "region": region or "",
            }, ensure_ascii=False) + "\n")

    populations: dict[str, int] = {}
    if cfg.paths.get("region_table"):
        populations = {rec.region_id: rec.population for rec in load_region_table(cfg.paths["region_table"])}
    counts = region_counts(resolved_ids, populations)
    with (out_dir / "region_counts.csv").open("w", encoding="utf-8", newline="") as handle:
        writer = csv.writer(handle, lineterminator="\n")
        writer.writerow(["region_id", "count", "per_capita"])
        for region_id, rc in counts.items():
            writer.writerow([region_id, rc.count, "" if rc.per_capita is None else repr(rc.per_capita)])

    report = {
        "loaded": len(posts),
        "skipped_records": skipped,
        "located": len(located),
        "resolved": len(resolved_ids),
        "unresolved": len(located) - len(resolved_ids),
        "regions": len(counts),
    }
    _write_json(out_dir / "ingest_report.json", report)
    return report


def stage_clean(cfg: PipelineConfig, out_dir: Path) -> dict:
    """Select the emoji whitelist, then run the normalization chain."""
    out_dir.mkdir(parents=True, exist_ok=True)
    rows = _read_located(out_dir)
    posts = _located_as_posts(rows)
    polarity = load_emoji_polarity(cfg.require_paths("emoji_polarity")["emoji_polarity"])
    whitelist = select_emoji_whitelist(posts, polarity, cfg.emoji_min_share)
    (out_dir / "emoji_whitelist.txt").write_text(
        "".join(f"{e}\n" for e in sorted(whitelist)), encoding="utf-8"
    )
    settings = _clean_settings(cfg, whitelist)
    accepted = rejected_short = rejected_misspelled = 0
    with (out_dir / "clean.jsonl").open("w", encoding="utf-8", newline="") as handle:
        for post in posts:
            cp = clean_text(post.id, post.text, settings)
            if cp.rejected_reason == "too_short":
                rejected_short += 1
            elif cp.rejected_reason == "misspelled":
                rejected_misspelled += 1
            else:
                accepted += 1
            handle.write(json.dumps({
                "id": cp.id,
                "tokens": list(cp.tokens),
                "kept_emojis": list(cp.kept_emojis),
                "removed": dict(cp.removed),
                "rejected": cp.rejected_reason,
            }, ensure_ascii=False) + "\n")
    report = {
        "input": len(posts),
        "accepted": accepted,
        "rejected_too_short": rejected_short,
        "rejected_misspelled": rejected_misspelled,
        "emoji_whitelist_size": len(whitelist),
    }
    _write_json(out_dir / "clean_report.json", report)
    return report


def stage_report(cfg: PipelineConfig, out_dir: Path, kind: str) -> dict:
    """Corpus frequency diagnostics over the located posts."""
    out_dir.mkdir(parents=True, exist_ok=True)
    posts = _located_as_posts(_read_located(out_dir))
    if kind == "hashtags":
        report = hashtag_report(posts)
        write_frequency_csv(report, out_dir / "hashtags.csv")
    elif kind == "emojis":
        report = emoji_report(posts)
        write_frequency_csv(report, out_dir / "emojis.csv")
    else:
        raise ConfigError(f"unknown report kind {kind!r} (expected hashtags or emojis)")
    return {"kind": kind, "total": report.total, "distinct": len(report.rows)}


def _training_examples(cfg: PipelineConfig, out_dir: Path) -> tuple[list[LabeledExample], list[tuple[str, ...]]]:
    """Cleaned training examples plus the neutral pool (binary mode)."""
    whitelist = frozenset(
        line.strip()
        for line in _require_artifact(out_dir, "emoji_whitelist.txt").read_text(encoding="utf-8").splitlines()
        if line.strip()
    )
    settings = _clean_settings(cfg, whitelist)
    rows = load_labeled_csv(cfg.require_paths("training_data")["training_data"])
    labeled: list[LabeledExample] = []
    neutral_pool: list[tuple[str, ...]] = []
    for row_id, label, text in rows:
        cp = clean_text(row_id, text, settings)
        if not cp.accepted or not cp.tokens:
            continue
        if cfg.classifier.binary and label is SentimentLabel.NEUTRAL:
            neutral_pool.append(cp.tokens)
        else:
            labeled.append(LabeledExample(tokens=cp.tokens, label=label))
    return labeled, neutral_pool


def _train_one(cfg: PipelineConfig, data: Sequence[LabeledExample]):
    cs = cfg.classifier
    classes = (SentimentLabel.NEGATIVE, SentimentLabel.POSITIVE) if cs.binary else None
    return train(
        data,
        cs.kind,
        smoothing=cs.smoothing,
        learning_rate=cs.learning_rate,
        epochs=cs.epochs,
        l2=cs.l2,
        classes=classes,
    )


def stage_train(cfg: PipelineConfig, out_dir: Path) -> dict:
    """Train the classifier (optionally with pseudo-labeling) and evaluate it."""
    out_dir.mkdir(parents=True, exist_ok=True)
    cs = cfg.classifier
    labeled, neutral_pool = _training_examples(cfg, out_dir)
    if not labeled:
        raise DataValidationError("no usable training examples after cleaning")
    train_part, heldout = train_test_split(labeled, cs.test_fraction, cfg.seed)
    base_model = _train_one(cfg, train_part)
    evals: list[tuple[str, str, Any]] = [
        ("base", "train", evaluate(base_model, train_part)),
        ("base", "heldout", evaluate(base_model, heldout)),
    ]
    final_model = base_model
    n_pseudo = 0
    pool_used = 0
    if cs.pseudo_label and neutral_pool:
        pool = list(neutral_pool)
        if cs.pseudo_fraction < 1.0:
            n_keep = int(round(len(pool) * cs.pseudo_fraction))
            keep = sorted(random.Random(cfg.seed + 1).sample(range(len(pool)), n_keep))
            pool = [pool[i] for i in keep]
        pool_used = len(pool)
        pseudo = pseudo_label(base_model, pool, min_confidence=cs.min_confidence)
        n_pseudo = len(pseudo)
        final_model = _train_one(cfg, list(train_part) + pseudo)
        evals.append(("final", "train", evaluate(final_model, train_part)))
        evals.append(("final", "heldout", evaluate(final_model, heldout)))
    save_model(final_model, out_dir / "model.json")

    with (out_dir / "eval.csv").open("w", encoding="utf-8", newline="") as handle:
        writer = csv.writer(handle, lineterminator="\n")
        writer.writerow(["model", "dataset", "accuracy", "n"])
        for model_name, dataset, report in evals:
            writer.writerow([model_name, dataset, repr(report.accuracy), int(report.confusion.sum())])
    with (out_dir / "confusions.csv").open("w", encoding="utf-8", newline="") as handle:
        writer = csv.writer(handle, lineterminator="\n")
        writer.writerow(["model", "dataset", "true_label", "predicted_label", "count"])
        for model_name, dataset, report in evals:
            for i, true_label in enumerate(report.classes):
                for j, pred_label in enumerate(report.classes):
                    writer.writerow([model_name, dataset, true_label.value, pred_label.value,
                                     int(report.confusion[i, j])])
    report = {
        "n_labeled": len(labeled),
        "n_train": len(train_part),
        "n_heldout": len(heldout),
        "neutral_pool": len(neutral_pool),
        "neutral_pool_used": pool_used,
        "n_pseudo_labels": n_pseudo,
        "kind": cs.kind,
        "binary": cs.binary,
        "accuracies": {f"{m}/{d}": rep.accuracy for m, d, rep in evals},
    }
    _write_json(out_dir / "train_report.json", report)
    return report


def stage_classify(cfg: PipelineConfig, out_dir: Path) -> dict:
    """Predict every accepted cleaned post with the trained model."""
    out_dir.mkdir(parents=True, exist_ok=True)
    model = load_model(_require_artifact(out_dir, "model.json"))
    has_positive = SentimentLabel.POSITIVE in model.classes
    counts = {label.value: 0 for label in model.classes}
    n_fallback = 0
    rows = [r for r in _read_clean(out_dir) if r["rejected"] is None and r["tokens"]]
    with (out_dir / "predictions.csv").open("w", encoding="utf-8", newline="") as handle:
        writer = csv.writer(handle, lineterminator="\n")
        writer.writerow(["id", "label", "fallback", "p_positive"])
        for row in rows:
            pred = predict(model, row["tokens"])
            counts[pred.label.value] += 1
            n_fallback += pred.fallback
            p_pos = (
                repr(pred.score_for(SentimentLabel.POSITIVE, model.classes)) if has_positive else ""
            )
            writer.writerow([row["id"], pred.label.value, pred.fallback, p_pos])
    report = {"classified": len(rows), "fallback": n_fallback, "predicted": counts}
    _write_json(out_dir / "classify_report.json", report)
    return report


def stage_import_predictions(cfg: PipelineConfig, out_dir: Path) -> dict:
    """Use third-party model predictions in place of the local classifier."""
    out_dir.mkdir(parents=True, exist_ok=True)
    path = cfg.require_paths("external_predictions")["external_predictions"]
    imported = import_external_predictions(path)
    clean_ids = [r["id"] for r in _read_clean(out_dir) if r["rejected"] is None and r["tokens"]]
    matched, unknown = match_predictions(imported, clean_ids)
    with (out_dir / "predictions.csv").open("w", encoding="utf-8", newline="") as handle:
        writer = csv.writer(handle, lineterminator="\n")
        writer.writerow(["id", "label", "fallback", "p_positive"])
        for post_id in clean_ids:
            if post_id in matched:
                writer.writerow([post_id, matched[post_id].value, False, ""])
    report = {"imported": len(imported), "matched": len(matched), "unknown_ids": unknown}
    _write_json(out_dir / "import_report.json", report)
    return report


def stage_aggregate(cfg: PipelineConfig, out_dir: Path) -> dict:
    """Join predictions with locations and fold into per-region period counts."""
    out_dir.mkdir(parents=True, exist_ok=True)
    located = {row["id"]: row for row in _read_located(out_dir)}
    observations: list[SentimentObservation] = []
    neutral_skipped = 0
    for row in _read_predictions(out_dir):
        label = SentimentLabel.parse(row["label"])
        if label is SentimentLabel.NEUTRAL:
            neutral_skipped += 1
            continue
        meta = located.get(row["id"])
        if meta is None:
            raise DataValidationError(f"prediction for unknown post id {row['id']!r}")
        observations.append(SentimentObservation(
            region_id=meta["region"] or None,
            timestamp=datetime.fromisoformat(meta["timestamp"]),
            positive=label is SentimentLabel.POSITIVE,
        ))
    regions, no_region = aggregate(
        observations, cfg.event_date, cfg.min_region_posts, event_day=cfg.event_day
    )
    with (out_dir / "region_sentiment.csv").open("w", encoding="utf-8", newline="") as handle:
        writer = csv.writer(handle, lineterminator="\n")
        writer.writerow([
            "region_id", "n_pos_before", "n_neg_before", "n_pos_after", "n_neg_after",
            "mean_sentiment", "included",
        ])
        for r in regions:
            writer.writerow([
                r.region_id, r.n_pos_before, r.n_neg_before, r.n_pos_after, r.n_neg_after,
                repr(r.mean_sentiment), r.included,
            ])
    report = {
        "observations": len(observations),
        "neutral_skipped": neutral_skipped,
        "without_region": no_region,
        "regions": len(regions),
        "included_regions": sum(r.included for r in regions),
        "threshold": cfg.min_region_posts,
    }
    _write_json(out_dir / "aggregate_report.json", report)
    return report


def stage_shift_test(cfg: PipelineConfig, out_dir: Path) -> dict:
    """Global and per-region before/after proportion tests."""
    out_dir.mkdir(parents=True, exist_ok=True)
    regions = _read_region_sentiment(out_dir)
    per_region = {
        r.region_id: regional.shift_test_for_region(r, cfg.alpha) for r in regions if r.included
    }
    global_test = regional.pooled_shift_test(regions, cfg.alpha)
    regional.write_shift_csv(regions, per_region, out_dir / "shift_tests.csv")
    summary = regional.shift_summary(per_region.values(), cfg.alpha)
    payload = {
        "global": {"chi2": global_test.chi2, "p": global_test.p_value, "degenerate": global_test.degenerate},
        "alpha": cfg.alpha,
        "n_tested": summary.n_tested,
        "n_significant": summary.n_significant,
        "significant_regions": list(summary.significant_regions),
    }
    _write_json(out_dir / "shift_summary.json", payload)
    return payload


def _regression_design(cfg: PipelineConfig, out_dir: Path) -> tuple[stats.DesignMatrix, dict]:
    table = load_region_table(cfg.require_paths("region_table")["region_table"])
    included = {r.region_id: r for r in _read_region_sentiment(out_dir) if r.included}
    rows = [rec for rec in table if rec.region_id in included]
    if not rows:
        raise DataValidationError("no overlap between the region table and included regions")
    available = set(rows[0].features)
    features = cfg.regression.features if cfg.regression.features is not None else tuple(sorted(available))
    missing = [f for f in features if f not in available]
    if missing:
        raise DataValidationError(f"region table lacks feature columns {missing}")
    names = ("sentiment", *features)
    columns = [
        [included[rec.region_id].mean_sentiment] + [rec.features[f] for f in features]
        for rec in rows
    ]
    y = [rec.outcome for rec in rows]
    try:
        design = stats.design_matrix(names, columns, y)
        if cfg.regression.standardize:
            design, _, _ = stats.standardize(design)
    except ValueError as exc:
        raise DataValidationError(str(exc)) from exc
    meta = {"n_regions": len(rows), "predictors": list(names), "standardized": cfg.regression.standardize}
    return design, meta


def _write_fit(fit: stats.OlsFit, out_dir: Path, stem: str, title: str) -> None:
    with (out_dir / f"{stem}.csv").open("w", encoding="utf-8", newline="") as handle:
        writer = csv.writer(handle, lineterminator="\n")
        writer.writerow(["term", "coefficient", "se", "t", "p", "stars"])
        terms = ["intercept", *fit.names]
        for i, term in enumerate(terms):
            writer.writerow([
                term, repr(float(fit.beta[i])), repr(float(fit.se[i])),
                repr(float(fit.t[i])), repr(float(fit.p[i])), stats.significance_stars(float(fit.p[i])),
            ])
    (out_dir / f"{stem}.txt").write_text(stats.format_fit_table(fit, title) + "\n", encoding="utf-8")
    _write_json(out_dir / f"{stem}.json", {
        "n": fit.n,
        "r2": fit.r2,
        "adj_r2": fit.adj_r2,
        "f_stat": fit.f_stat,
        "f_p": fit.f_p,
        "aic": fit.aic,
        "rss": fit.rss,
    })


def stage_regress(cfg: PipelineConfig, out_dir: Path) -> dict:
    """Fit the outcome on sentiment plus the configured features."""
    out_dir.mkdir(parents=True, exist_ok=True)
    design, meta = _regression_design(cfg, out_dir)
    fit = stats.ols(design)
    _write_fit(fit, out_dir, "regression_full", "Outcome model (all predictors)")
    return {**meta, "r2": fit.r2, "aic": fit.aic}


def stage_stepwise(cfg: PipelineConfig, out_dir: Path) -> dict:
    """Greedy AIC selection over the regression predictors."""
    out_dir.mkdir(parents=True, exist_ok=True)
    design, meta = _regression_design(cfg, out_dir)
    result = stats.stepwise(design, cfg.regression.direction, cfg.regression.start)
    with (out_dir / "stepwise_trace.csv").open("w", encoding="utf-8", newline="") as handle:
        writer = csv.writer(handle, lineterminator="\n")
        writer.writerow(["step", "action", "name", "aic"])
        for step, action, name, aic in result.trace:
            writer.writerow([step, action, name, repr(aic)])
    _write_fit(result.fit, out_dir, "stepwise_model", "Outcome model (AIC-selected)")
    payload = {
        **meta,
        "selected": list(result.selected),
        "start_aic": result.start_aic,
        "aic": result.fit.aic,
        "steps": len(result.trace),
    }
    _write_json(out_dir / "stepwise.json", payload)
    return payload


# ---------------------------------------------------------------------------
# Full pipeline + summary
# ---------------------------------------------------------------------------

def _md_table(header: Sequence[str], rows: Sequence[Sequence[Any]]) -> str:
    lines = ["| " + " | ".join(header) + " |", "|" + "|".join(["---"] * len(header)) + "|"]
    for row in rows:
        lines.append("| " + " | ".join(str(v) for v in row) + " |")
    return "\n".join(lines)


def _summary_markdown(cfg: PipelineConfig, out_dir: Path, reports: Mapping[str, Any]) -> str:
    sections = ["# Pipeline summary", ""]
    ing = reports["ingest"]
    cln = reports["clean"]
    sections += [
        "## Corpus",
        "",
        _md_table(
            ["metric", "value"],
            [
                ("posts loaded", ing["loaded"]),
                ("malformed records skipped", ing["skipped_records"]),
                ("located, language-matched", ing["located"]),
                ("resolved to a region", ing["resolved"]),
                ("unresolved place names", ing["unresolved"]),
                ("accepted after cleaning", cln["accepted"]),
                ("rejected: too short", cln["rejected_too_short"]),
                ("rejected: misspelled", cln["rejected_misspelled"]),
            ],
        ),
        "",
    ]

    with (out_dir / "hashtags.csv").open(encoding="utf-8", newline="") as handle:
        tag_rows = list(csv.DictReader(handle))[:10]
    sections += [
        "## Top hashtags",
        "",
        _md_table(
            ["hashtag", "count", "share"],
            [(r["item"], r["count"], f"{float(r['share']) * 100:.2f}%") for r in tag_rows],
        ) if tag_rows else "(no hashtags)",
        "",
    ]

    whitelist = (out_dir / "emoji_whitelist.txt").read_text(encoding="utf-8").split()
    with (out_dir / "emojis.csv").open(encoding="utf-8", newline="") as handle:
        emoji_rows = list(csv.DictReader(handle))[:10]
    sections += [
        "## Emojis",
        "",
        _md_table(
            ["emoji", "count", "share", "whitelisted"],
            [
                (r["item"], r["count"], f"{float(r['share']) * 100:.2f}%", r["item"] in whitelist)
                for r in emoji_rows
            ],
        ) if emoji_rows else "(no emojis)",
        "",
    ]

    trn = reports["train"]
    sections += [
        "## Sentiment classifier",
        "",
        _md_table(
            ["model", "dataset", "accuracy"],
            [(key.split("/")[0], key.split("/")[1], f"{value:.4f}") for key, value in sorted(trn["accuracies"].items())],
        ),
        "",
        f"Pseudo-labeled examples added: {trn['n_pseudo_labels']} (pool {trn['neutral_pool_used']}).",
        "",
    ]
    cls = reports["classify"]
    pred_counts = ", ".join(f"{k}: {v}" for k, v in sorted(cls["predicted"].items()))
    sections += [f"Predicted distribution over {cls['classified']} posts: {pred_counts}.", ""]

    agg = reports["aggregate"]
    regions = _read_region_sentiment(out_dir)
    included = [r for r in regions if r.included]
    sections += [
        "## Regional sentiment",
        "",
        f"{agg['included_regions']} of {agg['regions']} regions kept "
        f"(more than {agg['threshold']} classified posts).",
        "",
        _md_table(
            ["region", "posts", "mean sentiment"],
            [(r.region_id, r.total, f"{r.mean_sentiment:.4f}") for r in included],
        ) if included else "(no included regions)",
        "",
    ]

    sh = reports["shift"]
    sections += [
        "## Before/after shift",
        "",
        f"Global test: chi2(1) = {sh['global']['chi2']:.3f}, p = {sh['global']['p']:.3f}.",
        f"Per-region tests: {sh['n_significant']} of {sh['n_tested']} significant at alpha = {sh['alpha']}.",
        "",
    ]

    sections += [
        "## Outcome regression",
        "",
        "```",
        (out_dir / "regression_full.txt").read_text(encoding="utf-8").rstrip(),
        "```",
        "",
        "## Selected model",
        "",
        "```",
        (out_dir / "stepwise_model.txt").read_text(encoding="utf-8").rstrip(),
        "```",
        "",
        "Selection trace: "
        + (
            "; ".join(f"{action} {name}" for _, action, name, _ in _read_trace(out_dir))
            or "no moves"
        )
        + ".",
        "",
    ]
    return "\n".join(sections)


def _read_trace(out_dir: Path) -> list[tuple[int, str, str, float]]:
    with (out_dir / "stepwise_trace.csv").open(encoding="utf-8", newline="") as handle:
        return [
            (int(r["step"]), r["action"], r["name"], float(r["aic"]))
            for r in csv.DictReader(handle)
        ]


def run_pipeline(cfg: PipelineConfig, out_dir: Path) -> dict:
    """ingest -> clean -> reports -> train -> classify -> aggregate -> shift -> regress -> stepwise."""
    out_dir.mkdir(parents=True, exist_ok=True)
    reports: dict[str, Any] = {}
    reports["ingest"] = stage_ingest(cfg, out_dir)
    reports["clean"] = stage_clean(cfg, out_dir)
    reports["hashtags"] = stage_report(cfg, out_dir, "hashtags")
    reports["emojis"] = stage_report(cfg, out_dir, "emojis")
    reports["train"] = stage_train(cfg, out_dir)
    reports["classify"] = stage_classify(cfg, out_dir)
    reports["aggregate"] = stage_aggregate(cfg, out_dir)
    reports["shift"] = stage_shift_test(cfg, out_dir)
    reports["regress"] = stage_regress(cfg, out_dir)
    reports["stepwise"] = stage_stepwise(cfg, out_dir)
    (out_dir / "summary.md").write_text(_summary_markdown(cfg, out_dir, reports), encoding="utf-8")
    return reports
