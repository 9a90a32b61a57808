"""Wire formats, splits, session-end handling, features, and prompt export."""

import json
import logging
import math

import numpy as np
import pytest
from hypothesis import given, settings

from conftest import make_playlist, make_session, valid_outcome_walks
from seqbundle.dataio import (
    Dataset,
    FeatureConfig,
    FeaturePipeline,
    SessionEndMode,
    Split,
    apply_session_end,
    build_features,
    dataset_from_sessions,
    event_listening_time,
    export_prompts,
    format_prompt,
    load_dataset,
    load_playlists,
    load_sessions,
    observed_remaining_time,
    parse_prompt,
    predicted_remaining_time,
    split,
    write_playlists_jsonl,
    write_prompts_jsonl,
    write_sessions_jsonl,
)
from seqbundle.domain import Outcome
from seqbundle.errors import ConstraintViolation, SchemaError


@pytest.fixture
def tiny_dataset(playlist3):
    sessions = [
        make_session(["play", "play", "skip"], sid="a"),
        make_session(["play", "replay", "play", "play"], sid="b"),
        make_session(["skip", "skip", "play"], sid="c"),
    ]
    return dataset_from_sessions({"pl": playlist3}, sessions)


class TestRoundTrips:
    def test_jsonl_round_trip(self, tmp_path, tiny_dataset):
        write_playlists_jsonl(tmp_path / "playlists.jsonl", tiny_dataset.playlists)
        write_sessions_jsonl(tmp_path / "sessions.jsonl", tiny_dataset.sessions)
        loaded = load_dataset(tmp_path / "sessions.jsonl", tmp_path / "playlists.jsonl")
        assert loaded.playlists == dict(tiny_dataset.playlists)
        assert loaded.sessions == tiny_dataset.sessions

    def test_csv_matches_jsonl(self, tmp_path, tiny_dataset):
        write_playlists_jsonl(tmp_path / "playlists.jsonl", tiny_dataset.playlists)
        write_sessions_jsonl(tmp_path / "sessions.jsonl", tiny_dataset.sessions)
        lines = ["session_id,playlist_id,pos,action"]
        for s in tiny_dataset.sessions:
            for e in s.events:
                lines.append(f"{s.session_id},{s.playlist_id},{e.track_position},{e.outcome.value}")
        (tmp_path / "sessions.csv").write_text("\n".join(lines) + "\n")
        playlists = load_playlists(tmp_path / "playlists.jsonl")
        from_csv = load_sessions(tmp_path / "sessions.csv", playlists, fmt="csv")
        from_jsonl = load_sessions(tmp_path / "sessions.jsonl", playlists)
        assert from_csv.sessions == from_jsonl.sessions

    def test_duplicate_playlist_id_rejected(self, tmp_path, playlist3):
        write_playlists_jsonl(tmp_path / "p.jsonl", {"pl": playlist3})
        line = (tmp_path / "p.jsonl").read_text()
        (tmp_path / "p.jsonl").write_text(line + line)
        with pytest.raises(SchemaError, match="duplicate"):
            load_playlists(tmp_path / "p.jsonl")

    def test_strict_mode_reports_line_number(self, tmp_path, playlist3):
        write_playlists_jsonl(tmp_path / "p.jsonl", {"pl": playlist3})
        bad = {
            "session_id": "x",
            "playlist_id": "pl",
            "events": [
                {"pos": 1, "action": "skip"},
                {"pos": 1, "action": "replay"},
            ],
        }
        (tmp_path / "s.jsonl").write_text(json.dumps(bad) + "\n")
        playlists = load_playlists(tmp_path / "p.jsonl")
        with pytest.raises((SchemaError, ConstraintViolation)):
            load_sessions(tmp_path / "s.jsonl", playlists)

    def test_lenient_mode_drops_bad_session(self, tmp_path, playlist3, caplog):
        write_playlists_jsonl(tmp_path / "p.jsonl", {"pl": playlist3})
        good = {
            "session_id": "ok",
            "playlist_id": "pl",
            "events": [{"pos": 1, "action": "play"}],
        }
        bad = {
            "session_id": "bad",
            "playlist_id": "pl",
            "events": [{"pos": 1, "action": "skip"}, {"pos": 1, "action": "replay"}],
        }
        (tmp_path / "s.jsonl").write_text(
            json.dumps(good) + "\n" + json.dumps(bad) + "\n"
        )
        playlists = load_playlists(tmp_path / "p.jsonl")
        with caplog.at_level(logging.WARNING):
            dataset = load_sessions(tmp_path / "s.jsonl", playlists, strict=False)
        assert [s.session_id for s in dataset.sessions] == ["ok"]
        assert any("bad" in rec.message for rec in caplog.records)

    def test_orphan_playlist_rejected(self, tmp_path, playlist3):
        write_playlists_jsonl(tmp_path / "p.jsonl", {"pl": playlist3})
        orphan = {
            "session_id": "x",
            "playlist_id": "nope",
            "events": [{"pos": 1, "action": "play"}],
        }
        (tmp_path / "s.jsonl").write_text(json.dumps(orphan) + "\n")
        playlists = load_playlists(tmp_path / "p.jsonl")
        with pytest.raises(SchemaError, match="nope"):
            load_sessions(tmp_path / "s.jsonl", playlists)


class TestSplit:
    def make_many(self, n, playlist):
        sessions = [
            make_session(["play", "play", "play"], sid=f"s{i}") for i in range(n)
        ]
        return dataset_from_sessions({"pl": playlist}, sessions)

    @pytest.mark.parametrize("n,frac", [(10, 0.9), (2, 0.9), (7, 0.5), (100, 0.75)])
    def test_train_size_formula(self, playlist3, n, frac):
        dataset = split(self.make_many(n, playlist3), train_fraction=frac, seed=3)
        expected = min(n - 1, max(1, round(frac * n)))
        assert len(dataset.train_sessions()) == expected
        assert len(dataset.test_sessions()) == n - expected

    def test_deterministic_for_seed(self, playlist3):
        a = split(self.make_many(20, playlist3), seed=11)
        b = split(self.make_many(20, playlist3), seed=11)
        assert a.split_tags == b.split_tags
        c = split(self.make_many(20, playlist3), seed=12)
        assert a.split_tags != c.split_tags  # 2^-20 chance collision, fixed seeds

    def test_single_session_playlist_all_train(self, playlist3, caplog):
        dataset = self.make_many(1, playlist3)
        with caplog.at_level(logging.WARNING):
            tagged = split(dataset)
        assert tagged.split_tags == (Split.TRAIN,)
        assert any("all assigned to TRAIN" in rec.getMessage() for rec in caplog.records)

    def test_stratified_per_playlist(self):
        pa, pb = make_playlist(3, pid="a"), make_playlist(3, pid="b")
        sessions = [
            make_session(["play", "play", "play"], sid=f"a{i}", pid="a")
            for i in range(4)
        ] + [
            make_session(["skip", "skip", "skip"], sid=f"b{i}", pid="b")
            for i in range(4)
        ]
        dataset = split(
            dataset_from_sessions({"a": pa, "b": pb}, sessions), train_fraction=0.75
        )
        for pid in ("a", "b"):
            assert len(dataset.train_sessions(pid)) == 3
            assert len(dataset.test_sessions(pid)) == 1

    def test_rejects_bad_fraction(self, playlist3):
        with pytest.raises(ConstraintViolation):
            split(self.make_many(5, playlist3), train_fraction=1.0)


class TestSessionEnd:
    def test_full_pads_skips(self, playlist3):
        dataset = dataset_from_sessions(
            {"pl": playlist3}, [make_session(["play"], sid="s")]
        )
        full = apply_session_end(dataset, SessionEndMode.FULL)
        outcomes = full.sessions[0].outcomes()
        assert outcomes == (Outcome.PLAY, Outcome.SKIP, Outcome.SKIP)

    def test_truncate_drops_after_last_play(self, playlist3):
        dataset = dataset_from_sessions(
            {"pl": playlist3}, [make_session(["play", "replay", "skip"], sid="s")]
        )
        cut = apply_session_end(dataset, SessionEndMode.TRUNCATE)
        assert cut.sessions[0].outcomes() == (Outcome.PLAY, Outcome.REPLAY)

    def test_truncate_keeps_first_event_of_all_skip_session(self, playlist3):
        dataset = dataset_from_sessions(
            {"pl": playlist3}, [make_session(["skip", "skip", "skip"], sid="s")]
        )
        cut = apply_session_end(dataset, SessionEndMode.TRUNCATE)
        assert cut.sessions[0].outcomes() == (Outcome.SKIP,)

    def test_modes_are_idempotent(self, playlist3):
        dataset = dataset_from_sessions(
            {"pl": playlist3}, [make_session(["play", "skip", "skip"], sid="s")]
        )
        for mode in SessionEndMode:
            once = apply_session_end(dataset, mode)
            twice = apply_session_end(once, mode)
            assert once.sessions == twice.sessions


class TestRemainingTime:
    def test_listening_time(self, playlist3):
        assert event_listening_time(
            make_session(["skip"]).events[0], playlist3
        ) == 0.0
        assert event_listening_time(
            make_session(["play"]).events[0], playlist3
        ) == 100.0

    def test_observed_remaining_time_is_suffix_sum(self, playlist3):
        session = make_session(["play", "replay", "skip"])
        # listening times are (100, 100, 0); the suffix sums include the event itself
        assert observed_remaining_time(session, playlist3) == (200.0, 100.0, 0.0)

    def test_predicted_remaining_time_frozen_example(self):
        playlist = make_playlist(3, durations=(100.0, 200.0, 300.0))
        long = make_session(["play", "play"], sid="a")  # remaining (300, 200)
        short = make_session(["play"], sid="b")  # remaining (100,)
        table = predicted_remaining_time([long, short], playlist)
        # position 1: (300 + 100) / 2; position 2: (200 + 0) / 2, the short
        # session contributing zero beyond its length
        assert table == (200.0, 100.0)

    def test_empty_training_set_rejected(self, playlist3):
        with pytest.raises(ConstraintViolation):
            predicted_remaining_time([], playlist3)


class TestFeatures:
    def test_first_event_has_no_previous_action(self, playlist3):
        session = make_session(["play", "skip"])
        rows = build_features(session, playlist3, (10.0, 5.0))
        assert rows[0].previous_action == (0.0, 0.0, 0.0, 1.0)  # "none" slot
        assert rows[1].previous_action == (0.0, 1.0, 0.0, 0.0)  # "play" slot

    def test_leak_requires_observed_time(self, playlist3):
        session = make_session(["play", "skip"])
        rows = build_features(session, playlist3, (10.0, 5.0), leak=True)
        assert rows[0].observed_remaining_time == 100.0

    def test_matrix_is_z_scored(self, playlist3):
        sessions = [
            make_session(["play", "play", "skip"], sid="a"),
            make_session(["skip", "play", "play"], sid="b"),
        ]
        pipeline = FeaturePipeline(playlist=playlist3, config=FeatureConfig())
        pipeline.fit(sessions)
        stacked = np.concatenate([pipeline.matrix(s) for s in sessions])
        time_channel = stacked[:, 4]
        assert abs(time_channel.mean()) < 1e-12
        assert abs(time_channel.std() - 1.0) < 1e-9

    def test_constant_channel_uses_unit_scale(self):
        playlist = make_playlist(2, durations=(120.0, 120.0))
        sessions = [make_session(["skip", "skip"], sid="a", pid="pl")]
        config = FeatureConfig(include_duration=True)
        pipeline = FeaturePipeline(playlist=playlist, config=config).fit(sessions)
        assert pipeline.duration_std == 1.0
        matrix = pipeline.matrix(sessions[0])
        assert matrix.shape == (2, 6)
        assert np.all(matrix[:, 5] == 0.0)

    def test_leak_pipeline_differs_from_honest_one(self, playlist3):
        sessions = [
            make_session(["play", "play", "skip"], sid="a"),
            make_session(["skip", "skip", "play"], sid="b"),
        ]
        honest = FeaturePipeline(playlist=playlist3, config=FeatureConfig()).fit(sessions)
        leaky = FeaturePipeline(
            playlist=playlist3, config=FeatureConfig(leak=True)
        ).fit(sessions)
        assert not np.array_equal(
            honest.matrix(sessions[0]), leaky.matrix(sessions[0])
        )

    def test_pipeline_json_round_trip(self, playlist3):
        sessions = [make_session(["play", "play", "skip"], sid="a")]
        pipeline = FeaturePipeline(playlist=playlist3, config=FeatureConfig()).fit(sessions)
        restored = FeaturePipeline.from_jsonable(pipeline.to_jsonable(), playlist3)
        assert np.array_equal(
            pipeline.matrix(sessions[0]), restored.matrix(sessions[0])
        )

    def test_unfitted_pipeline_rejects_use(self, playlist3):
        pipeline = FeaturePipeline(playlist=playlist3, config=FeatureConfig())
        with pytest.raises(ConstraintViolation, match="fit"):
            pipeline.matrix(make_session(["play"]))


class TestPrompts:
    def test_format_frozen_example(self):
        playlist = make_playlist(3, durations=(100.0, 200.5, 300.0))
        session = make_session(["play", "skip", "play"])
        prompt, completion = format_prompt(session, playlist, 2)
        assert prompt == "1. (duration=100.00) action=play\n2. (duration=200.50) action="
        assert completion == "skip"

    def test_replay_repeats_duration_line(self):
        playlist = make_playlist(2, durations=(100.0, 200.0))
        session = make_session(["play", "replay"])
        prompt, completion = format_prompt(session, playlist, 2)
        assert prompt.endswith("2. (duration=100.00) action=")
        assert completion == "replay"

    def test_position_bounds(self, playlist3):
        session = make_session(["play", "skip"])
        with pytest.raises(ConstraintViolation):
            format_prompt(session, playlist3, 1)
        with pytest.raises(ConstraintViolation):
            format_prompt(session, playlist3, 3)

    def test_parse_inverts_format(self, playlist3):
        session = make_session(["play", "replay", "skip"])
        prompt, _ = format_prompt(session, playlist3, 3)
        parsed = parse_prompt(prompt)
        assert [d for d, _ in parsed] == [100.0, 100.0, 200.0]
        assert [a for _, a in parsed] == [Outcome.PLAY, Outcome.REPLAY, None]

    @given(valid_outcome_walks(max_tracks=4))
    @settings(max_examples=60)
    def test_round_trip_property(self, walk):
        n, outcomes = walk
        if len(outcomes) < 2:
            return
        playlist = make_playlist(n)
        session = make_session([o.value for o in outcomes])
        for position in range(2, len(outcomes) + 1):
            prompt, completion = format_prompt(session, playlist, position)
            parsed = parse_prompt(prompt)
            assert len(parsed) == position
            assert parsed[-1][1] is None
            assert completion == outcomes[position - 1].value
            assert [a.value for _, a in parsed[:-1]] == [
                o.value for o in outcomes[: position - 1]
            ]

    def test_export_dedupes_identical_prompts(self, tmp_path, playlist3):
        sessions = [
            make_session(["play", "skip", "play"], sid="a"),
            make_session(["play", "skip", "play"], sid="b"),
        ]
        dataset = dataset_from_sessions({"pl": playlist3}, sessions)
        pairs = list(export_prompts(dataset, dedupe=True))
        assert len(pairs) == 2  # positions 2 and 3, each appearing once
        n = write_prompts_jsonl(tmp_path / "p.jsonl", dataset, dedupe=False)
        assert n == 4

    def test_export_respects_split_tag(self, playlist3):
        sessions = [
            make_session(["play", "skip", "play"], sid="a"),
            make_session(["skip", "play", "play"], sid="b"),
        ]
        dataset = Dataset(
            playlists={"pl": playlist3},
            sessions=tuple(sessions),
            split_tags=(Split.TRAIN, Split.TEST),
        )
        test_pairs = list(export_prompts(dataset, split_tag=Split.TEST))
        assert len(test_pairs) == 2
        assert all(p["prompt"].startswith("1. (duration=100.00) action=skip") for p in test_pairs)
