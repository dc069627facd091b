import json
import time

import numpy as np
import pytest

from crisis_ssl.corpus import humaid_schema
from crisis_ssl.featurizer import texts_to_csr, FeaturizerConfig
from crisis_ssl.model import ClassifierParams, init_params, train_model, TrainConfig
from crisis_ssl.mockserver import MockChatServer
from crisis_ssl.oracle import (AnnotationAuthError, AnnotationCache,
                               AnnotationRequest, OracleProfile, PseudoLabel,
                               annotate_remote, annotate_simulated,
                               annotate_teacher, default_oracle_profile,
                               uniform_oracle_profile)
from crisis_ssl.validate import as_label_matrix

from conftest import separable_blobs

SCHEMA = humaid_schema()


class TestPseudoLabel:
    def test_label_xor_oos(self):
        PseudoLabel("a", 3, 0.5, "teacher")
        PseudoLabel("a", None, 1.0, "remote", True, "banana")
        with pytest.raises(ValueError):
            PseudoLabel("a", 3, 0.5, "teacher", out_of_schema=True)
        with pytest.raises(ValueError):
            PseudoLabel("a", None, 0.5, "teacher")

    def test_confidence_and_source_validated(self):
        with pytest.raises(ValueError):
            PseudoLabel("a", 1, 1.5, "teacher")
        with pytest.raises(ValueError):
            PseudoLabel("a", 1, 0.5, "gpt")


class TestOracleProfile:
    def test_validation(self):
        with pytest.raises(ValueError):
            OracleProfile((0.5, 1.2))
        with pytest.raises(ValueError):
            OracleProfile(())
        assert uniform_oracle_profile(0.7, 4).per_class_accuracy == (0.7,) * 4

    def test_default_profile_matches_reported_pattern(self):
        profile = default_oracle_profile()
        acc = profile.per_class_accuracy
        assert len(acc) == 10
        assert acc[SCHEMA.index("Injured or dead people")] == 0.885
        assert acc[SCHEMA.index("Rescue, volunteering, or donation effort")] == 0.827
        assert acc[SCHEMA.index("Other relevant information")] == 0.276
        assert acc[SCHEMA.index("Requests or urgent needs")] == 0.526
        assert acc[SCHEMA.index("Not humanitarian")] == 0.569
        assert acc[SCHEMA.index("Caution and advice")] == 0.634
        assert acc[SCHEMA.index("Sympathy and support")] == 0.739
        assert acc[SCHEMA.index("Displaced people and evacuations")] == 0.766
        assert acc[SCHEMA.index("Missing or found people")] == 0.698
        assert acc[SCHEMA.index("Infrastructure and utility damage")] == 0.704


class TestTeacherOracle:
    def test_zero_weights_uniform_confidence_and_tiebreak(self):
        params = ClassifierParams(None, None, np.zeros((8, 4)), np.zeros(4))
        X = np.ones((5, 8))
        out = annotate_teacher(params, X, [f"e{i}" for i in range(5)])
        assert len(out) == 5
        assert all(pl.label == 0 for pl in out)  # tie-break: lowest index
        assert all(pl.confidence == pytest.approx(0.25) for pl in out)
        assert all(pl.source == "teacher" for pl in out)

    def test_trained_teacher_recovers_gold_on_separable_data(self):
        X, y = separable_blobs(15, 3, 6, seed=0)
        p0 = init_params(6, 0, 3, seed=0)
        res = train_model(p0, X, as_label_matrix(y, 3), None,
                          TrainConfig(learning_rate=0.05, epochs=60, seed=0))
        out = annotate_teacher(res.params, X, [str(i) for i in range(len(y))])
        assert [pl.label for pl in out] == y.tolist()


class TestSimulatedOracle:
    def test_accuracy_one_reproduces_gold(self):
        golds = np.array([0, 3, 7, 9, 2] * 4)
        ids = [f"x{i}" for i in range(len(golds))]
        out = annotate_simulated(ids, golds, uniform_oracle_profile(1.0, 10))
        assert [pl.label for pl in out] == golds.tolist()

    def test_accuracy_zero_never_gold(self):
        golds = np.array([1, 4, 8] * 10)
        ids = [f"x{i}" for i in range(len(golds))]
        out = annotate_simulated(ids, golds, uniform_oracle_profile(0.0, 10))
        assert all(pl.label != g for pl, g in zip(out, golds))
        assert all(0 <= pl.label < 10 for pl in out)

    def test_empirical_agreement_matches_profile(self):
        golds = np.full(10000, 4)
        ids = [f"y{i}" for i in range(10000)]
        out = annotate_simulated(ids, golds, uniform_oracle_profile(0.7, 10, seed=5))
        agree = np.mean([pl.label == 4 for pl in out])
        assert abs(agree - 0.7) < 0.02

    def test_wrong_labels_spread_over_other_classes(self):
        golds = np.full(6000, 2)
        ids = [f"z{i}" for i in range(6000)]
        out = annotate_simulated(ids, golds, uniform_oracle_profile(0.0, 4, seed=1))
        counts = np.bincount([pl.label for pl in out], minlength=4)
        assert counts[2] == 0
        assert (counts[[0, 1, 3]] > 1800).all()  # roughly uniform thirds

    def test_determinism_and_order_independence(self):
        golds = np.array([0, 1, 2, 3, 4, 5])
        ids = [f"q{i}" for i in range(6)]
        profile = uniform_oracle_profile(0.5, 10, seed=9)
        full = annotate_simulated(ids, golds, profile)
        again = annotate_simulated(ids, golds, profile)
        assert full == again
        subset = annotate_simulated(ids[3:], golds[3:], profile)
        assert subset == full[3:]

    def test_gold_out_of_profile_rejected(self):
        with pytest.raises(ValueError):
            annotate_simulated(["a"], [5], uniform_oracle_profile(0.5, 3))


class TestCache:
    def test_put_get_round_trip(self, tmp_path):
        cache = AnnotationCache(tmp_path / "c.jsonl")
        key = cache.make_key("m", "prompt", "text")
        assert cache.get(key) is None
        cache.put(key, "Injured or dead people")
        assert cache.get(key) == "Injured or dead people"

    def test_last_write_wins(self, tmp_path):
        path = tmp_path / "c.jsonl"
        cache = AnnotationCache(path)
        key = cache.make_key("m", "p", "t")
        cache.put(key, "first")
        cache.put(key, "second")
        assert cache.get(key) == "second"
        # and after reloading from disk
        assert AnnotationCache(path).get(key) == "second"

    def test_corrupt_line_skipped_with_warning(self, tmp_path):
        path = tmp_path / "c.jsonl"
        cache = AnnotationCache(path)
        key = cache.make_key("m", "p", "t")
        cache.put(key, "kept")
        with open(path, "a") as fh:
            fh.write("{not json}\n")
            fh.write(json.dumps({"model": "m"}) + "\n")  # missing fields
        with pytest.warns(UserWarning, match="corrupt"):
            reloaded = AnnotationCache(path)
        assert reloaded.get(key) == "kept"
        assert len(reloaded) == 1

    def test_distinct_keys_do_not_collide(self, tmp_path):
        cache = AnnotationCache(tmp_path / "c.jsonl")
        cache.put(cache.make_key("m1", "p", "t"), "a")
        cache.put(cache.make_key("m2", "p", "t"), "b")
        assert cache.get(cache.make_key("m1", "p", "t")) == "a"


class TestRemoteAnnotation:
    def make_request(self, server, batch, **kw):
        return AnnotationRequest(endpoint=server.url, model_id="mock-annotator",
                                 batch=batch, rate_limit_per_s=1000.0,
                                 backoff_base_s=0.01, **kw)

    def test_category_name_parsed_to_index(self, tmp_path):
        with MockChatServer(lambda prompt: " injured or DEAD people \n") as server:
            cache = AnnotationCache(tmp_path / "c.jsonl")
            out = annotate_remote(self.make_request(server, [("a", "hurt people")]),
                                  SCHEMA, cache)
        assert out[0].label == 4
        assert not out[0].out_of_schema
        assert out[0].source == "remote"

    def test_out_of_schema_flagged_with_raw_response(self, tmp_path):
        with MockChatServer(lambda prompt: "banana") as server:
            cache = AnnotationCache(tmp_path / "c.jsonl")
            out = annotate_remote(self.make_request(server, [("a", "x")]),
                                  SCHEMA, cache)
        assert out[0].out_of_schema
        assert out[0].label is None
        assert out[0].raw_response == "banana"

    def test_cached_items_cost_zero_requests(self, tmp_path):
        cache = AnnotationCache(tmp_path / "c.jsonl")
        batch = [("a", "text one"), ("b", "text two")]
        with MockChatServer(lambda prompt: "Not humanitarian") as server:
            annotate_remote(self.make_request(server, batch), SCHEMA, cache)
            assert server.request_count == 2
            out = annotate_remote(self.make_request(server, batch), SCHEMA, cache)
            assert server.request_count == 2  # no new traffic
        assert [pl.label for pl in out] == [9, 9]

    def test_never_requeries_within_one_batch(self, tmp_path):
        cache = AnnotationCache(tmp_path / "c.jsonl")
        batch = [("a", "same text"), ("b", "same text")]
        with MockChatServer(lambda prompt: "Not humanitarian") as server:
            annotate_remote(self.make_request(server, batch), SCHEMA, cache)
            assert server.request_count == 1

    def test_retry_with_backoff_on_transient_failures(self, tmp_path):
        cache = AnnotationCache(tmp_path / "c.jsonl")
        with MockChatServer(lambda prompt: "Caution and advice",
                            failures=[500, 429]) as server:
            out = annotate_remote(
                self.make_request(server, [("a", "x")], max_retries=3),
                SCHEMA, cache)
            assert server.request_count == 3  # two failures, one success
        assert out[0].label == 0

    def test_transport_failure_recorded_run_continues(self, tmp_path):
        cache = AnnotationCache(tmp_path / "c.jsonl")
        with MockChatServer(lambda prompt: "Caution and advice",
                            failures=[500, 500, 500]) as server:
            with pytest.warns(UserWarning, match="failed"):
                out = annotate_remote(
                    self.make_request(server, [("a", "x"), ("b", "y")],
                                      max_retries=2), SCHEMA, cache)
            assert server.request_count == 4  # 3 failed tries for a, 1 for b
        assert out[0].out_of_schema and "error" in out[0].raw_response
        assert out[1].label == 0

    def test_auth_failure_aborts(self, tmp_path, monkeypatch):
        monkeypatch.delenv("ANNOTATION_API_TOKEN", raising=False)
        cache = AnnotationCache(tmp_path / "c.jsonl")
        with MockChatServer(require_token="secret") as server:
            with pytest.raises(AnnotationAuthError):
                annotate_remote(self.make_request(server, [("a", "x")]),
                                SCHEMA, cache)

    def test_bearer_token_from_env(self, tmp_path, monkeypatch):
        monkeypatch.setenv("ANNOTATION_API_TOKEN", "secret")
        cache = AnnotationCache(tmp_path / "c.jsonl")
        with MockChatServer(lambda prompt: "Not humanitarian",
                            require_token="secret") as server:
            out = annotate_remote(self.make_request(server, [("a", "x")]),
                                  SCHEMA, cache)
        assert out[0].label == 9

    def test_rate_limit_throttles(self, tmp_path):
        cache = AnnotationCache(tmp_path / "c.jsonl")
        batch = [("a", "one"), ("b", "two"), ("c", "three")]
        with MockChatServer(lambda prompt: "Not humanitarian") as server:
            request = AnnotationRequest(endpoint=server.url, model_id="m",
                                        batch=batch, rate_limit_per_s=20.0)
            start = time.monotonic()
            annotate_remote(request, SCHEMA, cache)
            elapsed = time.monotonic() - start
        assert elapsed >= 0.1  # two inter-request gaps of 50 ms

    def test_prompt_carries_text_and_definitions(self, tmp_path):
        cache = AnnotationCache(tmp_path / "c.jsonl")
        with MockChatServer(lambda prompt: "Not humanitarian") as server:
            annotate_remote(self.make_request(server, [("a", "THE-POST-TEXT")]),
                            SCHEMA, cache)
            prompt = server.requests[0]["messages"][0]["content"]
        assert "THE-POST-TEXT" in prompt
        assert "Caution and advice" in prompt

    def test_request_validation(self):
        with pytest.raises(ValueError):
            AnnotationRequest(endpoint="http://x", model_id="m", batch=[])
        with pytest.raises(ValueError):
            AnnotationRequest(endpoint="http://x", model_id="m",
                              batch=[("a", "t")], max_retries=-1)
