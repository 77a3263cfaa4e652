"""Classifier training, prediction, evaluation, pseudo-labeling, and the CSV
interfaces."""

from __future__ import annotations

import csv
import math
import random

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from conftest import generative_corpus
from regsent.errors import DataValidationError
from regsent.sentiment import (
    LabeledExample,
    SentimentLabel,
    SentimentModel,
    encode_binary,
    evaluate,
    import_external_predictions,
    load_model,
    logistic_loss_and_grad,
    match_predictions,
    positive_fraction,
    predict,
    pseudo_label,
    save_model,
    train,
)

NEG, NEU, POS = SentimentLabel.NEGATIVE, SentimentLabel.NEUTRAL, SentimentLabel.POSITIVE


def ex(tokens, label):
    return LabeledExample(tokens=tuple(tokens), label=label)


TWO_DOCS = [ex(["good"], POS), ex(["bad"], NEG)]


class TestNaiveBayes:
    def test_hand_computed_laplace_posterior(self):
        # two docs, smoothing 1, vocabulary {bad, good}:
        # P(good|pos) = (1+1)/(1+2) = 2/3, P(good|neg) = (0+1)/(1+2) = 1/3,
        # equal priors => P(pos | "good") = 2/3
        model = train(TWO_DOCS, "naive_bayes", smoothing=1.0)
        pred = predict(model, ["good"])
        assert pred.label is POS
        assert abs(pred.score_for(POS, model.classes) - 2 / 3) < 1e-12
        assert abs(pred.score_for(NEG, model.classes) - 1 / 3) < 1e-12

    def test_training_is_deterministic(self):
        data = generative_corpus(80, seed=1)
        a = train(data, "naive_bayes")
        b = train(data, "naive_bayes")
        assert np.array_equal(a.class_log_prior, b.class_log_prior)
        assert np.array_equal(a.feature_weights, b.feature_weights)
        assert a.vocabulary == b.vocabulary

    def test_class_conditionals_sum_to_one(self):
        model = train(generative_corpus(60, seed=2), "naive_bayes")
        assert np.allclose(np.exp(model.feature_weights).sum(axis=1), 1.0, atol=1e-12)

    def test_missing_class_fatal_with_name(self):
        data = [ex(["good"], POS), ex(["fine"], POS)]
        with pytest.raises(DataValidationError, match="negative"):
            train(data, "naive_bayes", classes=(NEG, POS))

    def test_count_scaling_invariance(self):
        # multiplying every document's token counts by m leaves the decision
        # rule exactly unchanged when the smoothing scales along (the model is
        # a function of count ratios); with smoothing held fixed, each token's
        # log-conditional can move by at most ln(m), so the argmax still
        # cannot flip when the decision margin beats 2 * n_tokens * ln(m)
        data = generative_corpus(60, seed=3)
        queries = [generative_corpus(1, seed=100 + i)[0].tokens for i in range(40)]
        base = train(data, "naive_bayes", smoothing=1.0)
        for m in (2, 3, 5):
            scaled_data = [ex(list(e.tokens) * m, e.label) for e in data]
            rescaled = train(scaled_data, "naive_bayes", smoothing=float(m))
            assert np.allclose(rescaled.feature_weights, base.feature_weights, atol=1e-12)
            assert np.allclose(rescaled.class_log_prior, base.class_log_prior, atol=1e-12)

            fixed = train(scaled_data, "naive_bayes", smoothing=1.0)
            assert np.allclose(fixed.class_log_prior, base.class_log_prior, atol=1e-12)
            bound = 2 * 6 * math.log(m)  # queries have six tokens
            for tokens in queries:
                p_base = predict(base, tokens)
                logit = np.sort(np.log(p_base.scores + 1e-300))
                margin = float(logit[-1] - logit[-2])
                assert predict(rescaled, tokens).label is p_base.label
                if margin > bound:
                    assert predict(fixed, tokens).label is p_base.label


class TestLogistic:
    def test_separable_corpus_trains_to_high_accuracy(self):
        rng = random.Random(8)
        data = []
        for i in range(200):
            if i % 2:
                data.append(ex([rng.choice(["fine", "nice", "sunny"]) for _ in range(4)], POS))
            else:
                data.append(ex([rng.choice(["bleak", "rough", "rainy"]) for _ in range(4)], NEG))
        model = train(data, "logistic")
        assert evaluate(model, data).accuracy >= 0.99

    def test_gradient_matches_finite_differences(self):
        rng = np.random.default_rng(4)
        for trial in range(20):
            n = int(rng.integers(5, 15))
            v = int(rng.integers(2, 8))
            k = int(rng.integers(2, 4))
            X = rng.integers(0, 4, size=(n, v)).astype(float)
            y = rng.integers(0, k, size=n)
            w = rng.normal(0, 0.5, size=(k, v))
            b = rng.normal(0, 0.5, size=k)
            l2 = 0.01
            _, grad_w, grad_b = logistic_loss_and_grad(w, b, X, y, l2)
            eps = 1e-6
            num_w = np.zeros_like(w)
            for i in range(k):
                for j in range(v):
                    up, down = w.copy(), w.copy()
                    up[i, j] += eps
                    down[i, j] -= eps
                    num_w[i, j] = (
                        logistic_loss_and_grad(up, b, X, y, l2)[0]
                        - logistic_loss_and_grad(down, b, X, y, l2)[0]
                    ) / (2 * eps)
            num_b = np.zeros_like(b)
            for i in range(k):
                up, down = b.copy(), b.copy()
                up[i] += eps
                down[i] -= eps
                num_b[i] = (
                    logistic_loss_and_grad(w, up, X, y, l2)[0]
                    - logistic_loss_and_grad(w, down, X, y, l2)[0]
                ) / (2 * eps)
            denom = max(1.0, float(np.linalg.norm(num_w)))
            assert np.linalg.norm(grad_w - num_w) / denom < 1e-5
            assert np.linalg.norm(grad_b - num_b) / max(1.0, float(np.linalg.norm(num_b))) < 1e-5

    def test_weight_affects_loss(self):
        data = [ex(["up"], POS), ex(["down"], NEG),
                LabeledExample(tokens=("up", "up"), label=POS, weight=3.0)]
        model = train(data, "logistic", epochs=50)
        assert predict(model, ["up"]).label is POS


class TestPredict:
    def test_scores_sum_to_one(self):
        model = train(generative_corpus(50, seed=5), "naive_bayes")
        rng = random.Random(6)
        for _ in range(50):
            tokens = generative_corpus(1, seed=rng.randint(0, 10**6))[0].tokens
            pred = predict(model, tokens)
            assert abs(float(pred.scores.sum()) - 1.0) < 1e-9

    def test_empty_tokens_prior_fallback_flagged(self):
        data = [ex(["good"], POS)] * 3 + [ex(["bad"], NEG)]
        model = train(data, "naive_bayes")
        pred = predict(model, [])
        assert pred.fallback
        assert pred.label is POS  # majority prior
        assert abs(pred.score_for(POS, model.classes) - 0.75) < 1e-9

    def test_all_oov_prior_fallback(self):
        model = train(TWO_DOCS, "naive_bayes")
        pred = predict(model, ["zzz", "qqq"])
        assert pred.fallback
        assert pred.label is NEG  # equal priors, tie resolves to first class

    def test_tie_breaks_by_class_order(self):
        model = train(TWO_DOCS, "naive_bayes")
        pred = predict(model, ["good", "bad"])  # symmetric evidence
        assert abs(pred.scores[0] - pred.scores[1]) < 1e-12
        assert pred.label is NEG


class TestEvaluate:
    def test_perfect_model_diagonal(self):
        data = generative_corpus(40, seed=9)
        model = train(data, "naive_bayes")
        report = evaluate(model, data)
        if report.accuracy == 1.0:
            assert report.confusion.sum() == np.trace(report.confusion)
        # memorization is near perfect on this corpus either way
        assert report.accuracy > 0.9

    def test_constant_model_on_balanced_set_is_half(self):
        model = SentimentModel(
            kind="naive_bayes", classes=(NEG, POS), vocabulary={},
            class_log_prior=np.log(np.array([0.7, 0.3])),
            feature_weights=np.zeros((2, 0)), smoothing=1.0,
        )
        data = [ex(["x"], POS), ex(["y"], NEG)] * 10
        report = evaluate(model, data)
        assert report.accuracy == 0.5

    def test_three_class_random_labels_near_chance_and_recount(self):
        rng = random.Random(12)
        vocab = [f"w{i}" for i in range(30)]
        def rand_set(n):
            return [
                ex([rng.choice(vocab) for _ in range(6)], rng.choice([NEG, NEU, POS]))
                for _ in range(n)
            ]
        train_set, eval_set = rand_set(300), rand_set(300)
        model = train(train_set, "naive_bayes")
        report = evaluate(model, eval_set)
        assert 0.25 <= report.accuracy <= 0.42
        recount = sum(
            predict(model, e.tokens).label is e.label for e in eval_set
        ) / len(eval_set)
        assert abs(report.accuracy - recount) < 1e-12
        assert report.confusion.sum() == 300


class TestPseudoLabel:
    def test_empty_pool(self):
        model = train(TWO_DOCS, "naive_bayes")
        assert pseudo_label(model, []) == []

    def test_memorized_document_labeled_positive(self):
        model = train(TWO_DOCS, "naive_bayes")
        out = pseudo_label(model, [("good",)])
        assert len(out) == 1 and out[0].label is POS

    def test_fallback_items_excluded(self):
        model = train(TWO_DOCS, "naive_bayes")
        out = pseudo_label(model, [("zzz",), ("good",)])
        assert [e.tokens for e in out] == [("good",)]

    def test_confidence_gate(self):
        model = train(TWO_DOCS, "naive_bayes")
        # P(pos | good^k) = 2^k / (2^k + 1): 2/3, then 8/9, then 16/17 > 0.9
        assert pseudo_label(model, [("good",)], min_confidence=0.9) == []
        assert len(pseudo_label(model, [("good",) * 4], min_confidence=0.9)) == 1

    def test_original_examples_untouched(self):
        originals = generative_corpus(30, seed=14)
        snapshot = [(e.tokens, e.label, e.weight) for e in originals]
        model = train(originals, "naive_bayes")
        pseudo = pseudo_label(model, [e.tokens for e in generative_corpus(40, seed=15)])
        combined = originals + pseudo
        assert combined[: len(originals)] == originals
        assert all(combined[i] is originals[i] for i in range(len(originals)))
        assert [(e.tokens, e.label, e.weight) for e in originals] == snapshot

    def test_agreement_close_to_heldout_accuracy(self):
        labeled = generative_corpus(300, seed=21)
        heldout = generative_corpus(200, seed=22)
        pool_truth = generative_corpus(500, seed=23)
        model = train(labeled, "naive_bayes")
        heldout_acc = evaluate(model, heldout).accuracy
        truth = {tuple(e.tokens): e.label for e in pool_truth}
        pseudo = pseudo_label(model, [e.tokens for e in pool_truth])
        agreement = sum(e.label is truth[e.tokens] for e in pseudo) / len(pseudo)
        assert agreement >= heldout_acc - 0.05


class TestEncoding:
    def test_binary_values(self):
        assert encode_binary([NEG, POS, POS]) == [0, 1, 1]
        with pytest.raises(ValueError):
            NEU.binary_value

    @given(st.lists(st.sampled_from([NEG, POS]), min_size=1, max_size=50))
    def test_mean_equals_positive_fraction(self, labels):
        assert positive_fraction(labels) == labels.count(POS) / len(labels)


class TestExternalPredictions:
    def test_three_valid_rows(self, tmp_path):
        path = tmp_path / "preds.csv"
        path.write_text("id,label\na,positive\nb,negative\nc,neutral\n", encoding="utf-8")
        out = import_external_predictions(path)
        assert out == {"a": POS, "b": NEG, "c": NEU}

    def test_unknown_label_fatal_with_line(self, tmp_path):
        path = tmp_path / "preds.csv"
        path.write_text("id,label\na,positive\nb,meh\n", encoding="utf-8")
        with pytest.raises(DataValidationError, match=r":3:"):
            import_external_predictions(path)

    def test_duplicate_id_fatal(self, tmp_path):
        path = tmp_path / "preds.csv"
        path.write_text("id,label\na,positive\na,negative\n", encoding="utf-8")
        with pytest.raises(DataValidationError, match="duplicate"):
            import_external_predictions(path)

    def test_thousand_row_roundtrip(self, tmp_path):
        rng = random.Random(31)
        rows = [(f"post{i:04d}", rng.choice(["negative", "neutral", "positive"])) for i in range(1000)]
        path = tmp_path / "preds.csv"
        with path.open("w", encoding="utf-8", newline="") as handle:
            writer = csv.writer(handle)
            writer.writerow(["id", "label"])
            writer.writerows(rows)
        out = import_external_predictions(path)
        assert len(out) == 1000
        for post_id, label in rows:
            assert out[post_id].value == label

    def test_match_predictions_counts_unknown_ids(self):
        preds = {"a": POS, "b": NEG, "zz": POS}
        matched, unknown = match_predictions(preds, ["a", "b", "c"])
        assert matched == {"a": POS, "b": NEG}
        assert unknown == 1


class TestPersistence:
    @pytest.mark.parametrize("kind", ["naive_bayes", "logistic"])
    def test_exact_roundtrip(self, tmp_path, kind):
        model = train(generative_corpus(60, seed=33), kind, epochs=40)
        path = tmp_path / "model.json"
        save_model(model, path)
        loaded = load_model(path)
        assert loaded.kind == model.kind
        assert loaded.classes == model.classes
        assert loaded.vocabulary == model.vocabulary
        assert np.array_equal(loaded.class_log_prior, model.class_log_prior)
        assert np.array_equal(loaded.feature_weights, model.feature_weights)
        tokens = generative_corpus(1, seed=34)[0].tokens
        assert predict(loaded, tokens).label is predict(model, tokens).label

    def test_version_check(self, tmp_path):
        path = tmp_path / "model.json"
        path.write_text('{"format_version": 99}', encoding="utf-8")
        with pytest.raises(DataValidationError, match="version"):
            load_model(path)
