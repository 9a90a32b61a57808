"""Scoring rules, demand rates, CDF comparisons, and dataset summaries."""

import logging

import numpy as np
import pytest

from conftest import make_playlist, make_session
from seqbundle.baselines import (
    MarkovPredictor,
    ZeroOrderPredictor,
    fit_markov,
    fit_zero_order,
)
from seqbundle.dataio import Dataset, Split, dataset_from_sessions
from seqbundle.domain import Outcome, validate_session
from seqbundle.errors import ConstraintViolation, MetricUndefinedError
from seqbundle.evalkit import (
    EvaluationReport,
    cdf_dominates,
    confusion_normalized,
    evaluate_dataset,
    evaluate_playlist,
    first_max_index,
    hit_rate_cdf,
    hit_rate_from_counts,
    pseudo_r2,
    rollout_session,
    summarize_dataset,
    summary_to_jsonable,
)


class FixedRowPredictor:
    """Every event gets the same probability row (hand-oracle evaluation)."""

    def __init__(self, row=(0.2, 0.7, 0.1)):
        self.row = np.asarray(row, dtype=np.float64)

    def predict_session(self, session):
        return np.tile(self.row, (len(session.events), 1))

    def next_probs(self, events):
        return self.row.copy()


class TestScalarMetrics:
    def test_weighted_hit_rate(self):
        # 100 events at 0.8 pooled with 50 events at 0.6
        assert hit_rate_from_counts(80 + 30, 150) == pytest.approx(11 / 15)

    def test_zero_total_undefined(self):
        with pytest.raises(MetricUndefinedError):
            hit_rate_from_counts(0, 0)

    def test_first_max_tie_goes_to_earliest(self):
        assert first_max_index(np.array([0.4, 0.4, 0.2])) == 0
        assert first_max_index(np.array([0.2, 0.4, 0.4])) == 1

    def test_confusion_rows_normalize_independently(self):
        counts = np.array([[8, 2, 0], [1, 3, 0], [0, 0, 0]])
        rates = confusion_normalized(counts)
        assert np.allclose(rates[0], (0.8, 0.2, 0.0), atol=1e-15)
        assert np.allclose(rates[1], (0.25, 0.75, 0.0), atol=1e-15)
        assert np.all(rates[2] == 0.0)

    def test_pseudo_r2_anchors(self):
        assert pseudo_r2((1.0, 2.0, 3.0), (1.0, 2.0, 3.0)) == pytest.approx(1.0)
        assert pseudo_r2((1.0, 3.0), (2.0, 2.0)) == pytest.approx(0.0)
        assert pseudo_r2((0.0, 1.0), (1.0, 0.0)) == pytest.approx(-3.0)

    def test_pseudo_r2_constant_actual_undefined(self):
        with pytest.raises(MetricUndefinedError):
            pseudo_r2((2.0, 2.0, 2.0), (1.0, 2.0, 3.0))


class TestCdf:
    def test_cdf_fractions(self):
        xs, fractions = hit_rate_cdf((0.5, 0.25, 0.5, 1.0))
        assert np.array_equal(xs, (0.25, 0.5, 1.0))
        assert np.allclose(fractions, (0.25, 0.75, 1.0), atol=1e-15)

    def test_cdf_empty_undefined(self):
        with pytest.raises(MetricUndefinedError):
            hit_rate_cdf(())

    def test_dominance_direction(self):
        better = (0.8, 0.9, 0.85)
        worse = (0.1, 0.2, 0.15)
        assert cdf_dominates(better, worse)
        assert not cdf_dominates(worse, better)

    def test_identical_samples_dominate_both_ways(self):
        values = (0.3, 0.5, 0.5)
        assert cdf_dominates(values, values)

    def test_dominance_fails_on_crossing(self):
        a = (0.1, 0.9)
        b = (0.4, 0.5)
        assert not cdf_dominates(a, b)
        assert not cdf_dominates(b, a)


class TestEvaluatePlaylist:
    def setup_method(self):
        self.playlist = make_playlist(3)
        self.sessions = [
            make_session(["play", "play", "skip"], sid="a"),
            make_session(["skip", "play", "play"], sid="b"),
        ]

    def test_hand_counted_hits(self):
        result = evaluate_playlist(
            FixedRowPredictor(), self.sessions, self.playlist
        )
        # the stub always predicts PLAY; scored outcomes are play, skip, play, play
        assert result.n_scored == 4
        assert result.hits == 3
        assert result.hit_rate == pytest.approx(0.75)

    def test_confusion_matches_hits_exactly(self):
        result = evaluate_playlist(FixedRowPredictor(), self.sessions, self.playlist)
        counts = result.confusion_counts
        assert counts[1, 1] == 3  # actual play, predicted play
        assert counts[0, 1] == 1  # actual skip, predicted play
        assert counts.sum() == result.n_scored
        assert int(np.trace(counts)) == result.hits
        # the weighted diagonal of the normalized matrix is the hit rate
        rates = confusion_normalized(counts)
        weights = counts.sum(axis=1) / counts.sum()
        assert float(np.dot(weights, np.diag(rates))) == pytest.approx(
            result.hit_rate, abs=1e-15
        )

    def test_position_buckets(self):
        result = evaluate_playlist(FixedRowPredictor(), self.sessions, self.playlist)
        assert result.position_hits == ((2, 2, 2), (3, 1, 2))
        assert result.position_rates() == ((2, 1.0), (3, 0.5))

    def test_first_event_is_never_scored(self):
        result = evaluate_playlist(
            FixedRowPredictor(), [make_session(["skip"], sid="solo")], self.playlist
        )
        assert result.n_scored == 0
        with pytest.raises(MetricUndefinedError):
            result.hit_rate

    def test_bad_probability_rows_rejected(self):
        class Broken(FixedRowPredictor):
            def predict_session(self, session):
                return np.tile((0.3, 0.3, 0.3), (len(session.events), 1))

        with pytest.raises(ConstraintViolation, match="sum to 1"):
            evaluate_playlist(Broken(), self.sessions, self.playlist)

    def test_unknown_demand_mode_rejected(self):
        with pytest.raises(ConstraintViolation):
            evaluate_playlist(
                FixedRowPredictor(), self.sessions, self.playlist, demand_mode="magic"
            )


class TestDemandRealized:
    def test_hand_example(self):
        playlist = make_playlist(2)
        sessions = [
            make_session(["play", "replay", "play"], sid="s1"),
            make_session(["skip", "play"], sid="s2"),
        ]
        result = evaluate_playlist(FixedRowPredictor(), sessions, playlist)
        demand = result.demand
        assert demand.track_positions == (2,)
        assert demand.coverage == (2,)
        # both sessions played track 2 exactly once
        assert demand.actual == pytest.approx((1.0,))
        # each session's arrival event at track 2 carries P(PLAY) = 0.7, and
        # no scored event has track 2 as a feasible replay target
        assert demand.predicted == pytest.approx((0.7,))

    def test_replay_credit_goes_to_previous_track(self):
        playlist = make_playlist(2)
        sessions = [make_session(["play", "replay", "play"], sid="s1")]
        result = evaluate_playlist(FixedRowPredictor(), sessions, playlist)
        # track 2's prediction collects only its arrival event: the replay at
        # event 2 targets track 1, which is outside the reported range
        assert result.demand.predicted == pytest.approx((0.7,))

    def test_coverage_counts_only_reaching_sessions(self):
        playlist = make_playlist(3)
        sessions = [
            make_session(["play", "play", "play"], sid="full"),
            make_session(["play"], sid="stub"),  # truncated at track 1
        ]
        result = evaluate_playlist(FixedRowPredictor(), sessions, playlist)
        assert result.demand.coverage == (1, 1)
        assert result.demand.actual == pytest.approx((1.0, 1.0))

    def test_actual_rates_match_zero_order_expectation(self):
        # on full-mode data both sides average play counts over the same
        # covering sessions, so they agree to float precision
        playlist = make_playlist(4)
        sessions = [
            make_session(["play", "replay", "play", "skip", "play"], sid="a"),
            make_session(["skip", "play", "play", "play"], sid="b"),
            make_session(["play", "skip", "skip", "play", "replay"], sid="c"),
            make_session(["skip", "skip", "play", "replay", "skip"], sid="d"),
        ]
        table = fit_zero_order(sessions, playlist)
        predictor = ZeroOrderPredictor(table)
        result = evaluate_playlist(predictor, sessions, playlist)
        for pos, actual in zip(result.demand.track_positions, result.demand.actual):
            assert actual == pytest.approx(table.expected_plays(pos), abs=1e-9)


class TestRollouts:
    def test_rollout_sessions_are_valid(self):
        playlist = make_playlist(3)
        fit_sessions = [
            make_session(["play", "play", "skip"], sid="a"),
            make_session(["skip", "play", "replay", "play"], sid="b"),
            make_session(["play", "replay", "skip", "play"], sid="c"),
        ]
        predictor = MarkovPredictor(fit_markov(fit_sessions, playlist, smoothing=1.0))
        rng = np.random.default_rng(5)
        for _ in range(25):
            rolled = rollout_session(predictor, playlist, np.array([0.4, 0.6, 0.0]), rng)
            validate_session(rolled, len(playlist), cap=2)
            assert len(rolled.events) <= 3 * 2 + 1

    def test_rollout_feasibility_masks_replay(self):
        playlist = make_playlist(2)
        all_replay = FixedRowPredictor((0.0, 0.0, 1.0))
        rng = np.random.default_rng(0)
        # forced first play, then the only unmasked mass is a replay; after it
        # hits the cap no feasible mass remains and the session stops
        rolled = rollout_session(all_replay, playlist, np.array([0.0, 1.0, 0.0]), rng)
        outcomes = [e.outcome for e in rolled.events]
        assert outcomes == [Outcome.PLAY, Outcome.REPLAY]

    def test_rollout_forced_skip_with_no_alternative(self):
        playlist = make_playlist(2)
        all_replay = FixedRowPredictor((0.0, 0.0, 1.0))
        rng = np.random.default_rng(0)
        rolled = rollout_session(all_replay, playlist, np.array([1.0, 0.0, 0.0]), rng)
        assert [e.outcome for e in rolled.events] == [Outcome.SKIP]

    def test_expected_mode_is_seed_deterministic(self):
        playlist = make_playlist(3)
        sessions = [
            make_session(["play", "play", "skip"], sid="a"),
            make_session(["skip", "play", "play"], sid="b"),
            make_session(["play", "replay", "play", "play"], sid="c"),
        ]
        predictor = MarkovPredictor(fit_markov(sessions, playlist, smoothing=0.5))
        runs = [
            evaluate_playlist(
                predictor,
                sessions,
                playlist,
                demand_mode="expected",
                n_rollouts=40,
                seed=123,
            ).demand
            for _ in range(2)
        ]
        assert runs[0] == runs[1]


class TestEvaluateDataset:
    def build_dataset(self):
        pa, pb = make_playlist(3, pid="a"), make_playlist(3, pid="b")
        sessions = [
            make_session(["play", "play", "skip"], sid="a1", pid="a"),
            make_session(["skip", "play", "play"], sid="a2", pid="a"),
            make_session(["play", "skip", "play"], sid="b1", pid="b"),
        ]
        dataset = dataset_from_sessions({"a": pa, "b": pb}, sessions)
        return Dataset(
            playlists=dataset.playlists,
            sessions=dataset.sessions,
            split_tags=(Split.TEST, Split.TEST, Split.TEST),
        )

    def test_pooled_report(self):
        dataset = self.build_dataset()
        predictors = {"a": FixedRowPredictor(), "b": FixedRowPredictor()}
        report = evaluate_dataset(predictors, dataset)
        assert [r.playlist_id for r in report.results] == ["a", "b"]
        assert report.n_scored == 6
        assert report.hits == 4  # plays hit, skips miss
        assert report.hit_rate == pytest.approx(4 / 6)
        assert int(np.trace(report.confusion_counts())) == 4

    def test_missing_predictor_is_an_error(self):
        dataset = self.build_dataset()
        with pytest.raises(ConstraintViolation, match="no predictor"):
            evaluate_dataset({"a": FixedRowPredictor()}, dataset)

    def test_playlist_without_split_sessions_is_skipped(self, caplog):
        dataset = self.build_dataset()
        retagged = Dataset(
            playlists=dataset.playlists,
            sessions=dataset.sessions,
            split_tags=(Split.TEST, Split.TEST, Split.TRAIN),
        )
        with caplog.at_level(logging.WARNING):
            report = evaluate_dataset(
                {"a": FixedRowPredictor(), "b": FixedRowPredictor()}, retagged
            )
        assert [r.playlist_id for r in report.results] == ["a"]
        assert any("skipping" in rec.getMessage() for rec in caplog.records)

    def test_report_jsonable_shape(self):
        dataset = self.build_dataset()
        predictors = {"a": FixedRowPredictor(), "b": FixedRowPredictor()}
        obj = evaluate_dataset(predictors, dataset).to_jsonable()
        assert obj["outcome_order"] == ["skip", "play", "replay"]
        assert obj["n_scored"] == 6
        assert len(obj["playlists"]) == 2
        assert set(obj["position_rate_cdf"]) == {"values", "cumulative"}
        assert obj["position_rate_cdf"]["cumulative"][-1] == pytest.approx(1.0)

    def test_demand_pseudo_r2_none_when_constant(self):
        playlist = make_playlist(2)
        sessions = [make_session(["play", "play"], sid=f"s{i}") for i in range(3)]
        result = evaluate_playlist(FixedRowPredictor(), sessions, playlist)
        report = EvaluationReport(results=(result,), demand_mode="realized")
        # only one track position in range: fewer than two demand points
        assert report.demand_pseudo_r2() is None


class TestSummaries:
    def test_hand_computed_summary(self):
        playlist = make_playlist(3)
        sessions = [
            make_session(["play", "replay", "skip", "play"], sid="a"),
            make_session(["skip", "skip", "skip"], sid="b"),
        ]
        dataset = dataset_from_sessions({"pl": playlist}, sessions)
        (summary,) = summarize_dataset(dataset)
        assert summary.n_tracks == 3
        assert summary.n_sessions == 2
        assert summary.mean_events == pytest.approx(3.5)
        # session a listens 100 + 100 + 0 + 300, session b listens nothing
        assert summary.mean_listening_seconds == pytest.approx(250.0)
        assert summary.mean_tracks_played == pytest.approx(1.0)
        assert summary.share_skip == pytest.approx(4 / 7)
        assert summary.share_play == pytest.approx(2 / 7)
        assert summary.share_replay == pytest.approx(1 / 7)

    def test_jsonable_round_trip_fields(self):
        playlist = make_playlist(2)
        dataset = dataset_from_sessions(
            {"pl": playlist}, [make_session(["play", "play"], sid="a")]
        )
        (obj,) = summary_to_jsonable(summarize_dataset(dataset))
        assert obj["playlist_id"] == "pl"
        assert obj["share_play"] == 1.0

    def test_empty_dataset_rejected(self):
        playlist = make_playlist(2)
        dataset = dataset_from_sessions({"pl": playlist}, [])
        with pytest.raises(ConstraintViolation):
            summarize_dataset(dataset)
