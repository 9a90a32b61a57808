"""Loading, splitting, transforming, and exporting session data.

Wire formats
------------
sessions.jsonl   one session per line:
                 {"session_id": str, "playlist_id": str,
                  "events": [{"pos": int, "action": "skip|play|replay"}, ...]}
sessions.csv     one event per row, header:
                 session_id,playlist_id,pos,action
playlists.jsonl  one playlist per line:
                 {"playlist_id": str,
                  "tracks": [{"track_id": str, "duration": float,
                              "features": {name: float, ...}}, ...]}
prompts.jsonl    {"prompt": str, "completion": str}
"""

from __future__ import annotations

import csv
import json
import logging
import random
import re
from dataclasses import dataclass, replace
from enum import Enum
from pathlib import Path
from typing import Iterable, Iterator, Mapping, Sequence

import numpy as np

from .domain import (
    DEFAULT_CAP,
    OUTCOME_INDEX,
    Event,
    Outcome,
    Playlist,
    Session,
    Track,
    parse_outcome,
    validate_session,
)
from .errors import ConstraintViolation, SchemaError

log = logging.getLogger(__name__)


class Split(str, Enum):
    TRAIN = "train"
    TEST = "test"


class SessionEndMode(str, Enum):
    """How a session's tail is interpreted.

    FULL: the listener saw the whole playlist; unresolved tracks become SKIPs.
    TRUNCATE: everything after the last played track is dropped.
    """

    FULL = "full"
    TRUNCATE = "truncate"


@dataclass(frozen=True, slots=True)
class Dataset:
    """Immutable bundle of playlists, sessions, and per-session split tags."""

    playlists: Mapping[str, Playlist]
    sessions: tuple[Session, ...]
    split_tags: tuple[Split, ...]

    def __post_init__(self) -> None:
        if len(self.sessions) != len(self.split_tags):
            raise ConstraintViolation(
                f"{len(self.sessions)} sessions but {len(self.split_tags)} split tags"
            )

    def playlist_ids(self) -> tuple[str, ...]:
        return tuple(sorted(self.playlists))

    def sessions_for(
        self, playlist_id: str | None = None, split: Split | None = None
    ) -> tuple[Session, ...]:
        out = []
        for session, tag in zip(self.sessions, self.split_tags):
            if playlist_id is not None and session.playlist_id != playlist_id:
                continue
            if split is not None and tag is not split:
                continue
            out.append(session)
        return tuple(out)

    def train_sessions(self, playlist_id: str | None = None) -> tuple[Session, ...]:
        return self.sessions_for(playlist_id, Split.TRAIN)

    def test_sessions(self, playlist_id: str | None = None) -> tuple[Session, ...]:
        return self.sessions_for(playlist_id, Split.TEST)


def dataset_from_sessions(
    playlists: Mapping[str, Playlist], sessions: Sequence[Session]
) -> Dataset:
    """Dataset with every session tagged TRAIN (tags assigned later by split)."""
    return Dataset(
        playlists=dict(playlists),
        sessions=tuple(sessions),
        split_tags=tuple(Split.TRAIN for _ in sessions),
    )


# ---------------------------------------------------------------------------
# loading and writing


def _track_from_json(obj: dict, where: str) -> Track:
    try:
        features = obj.get("features") or {}
        extra = tuple(sorted((str(k), float(v)) for k, v in features.items()))
        return Track(
            track_id=str(obj["track_id"]),
            duration=float(obj["duration"]),
            extra_features=extra,
        )
    except KeyError as exc:
        raise SchemaError(f"{where}: track missing field {exc}") from None


def load_playlists(path: str | Path) -> dict[str, Playlist]:
    """Read playlists.jsonl. Duplicate playlist ids are an error."""
    playlists: dict[str, Playlist] = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            where = f"{path} line {lineno}"
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise SchemaError(f"{where}: invalid JSON ({exc.msg})") from None
            try:
                pid = str(obj["playlist_id"])
                tracks = tuple(_track_from_json(t, where) for t in obj["tracks"])
            except KeyError as exc:
                raise SchemaError(f"{where}: playlist missing field {exc}") from None
            if pid in playlists:
                raise SchemaError(f"{where}: duplicate playlist_id {pid!r}")
            playlists[pid] = Playlist(playlist_id=pid, tracks=tracks)
    if not playlists:
        raise SchemaError(f"{path}: no playlists found")
    return playlists


def _session_from_parts(
    session_id: str,
    playlist_id: str,
    events: Sequence[tuple[int, str]],
    playlists: Mapping[str, Playlist],
    cap: int,
    where: str,
) -> Session:
    if playlist_id not in playlists:
        raise SchemaError(
            f"{where}: session {session_id!r} references unknown playlist {playlist_id!r}"
        )
    built = tuple(
        Event(track_position=pos, outcome=parse_outcome(action))
        for pos, action in events
    )
    session = Session(session_id=session_id, playlist_id=playlist_id, events=built)
    validate_session(session, n_tracks=len(playlists[playlist_id]), cap=cap)
    return session


def load_sessions(
    path: str | Path,
    playlists: Mapping[str, Playlist],
    fmt: str = "jsonl",
    strict: bool = True,
    cap: int = DEFAULT_CAP,
) -> Dataset:
    """Read sessions from JSONL or CSV and validate them against rules.

    strict=True raises on the first invalid row/session with its line number;
    strict=False logs a warning, drops the offending session, and continues.
    """
    if fmt == "jsonl":
        sessions = _load_sessions_jsonl(Path(path), playlists, strict, cap)
    elif fmt == "csv":
        sessions = _load_sessions_csv(Path(path), playlists, strict, cap)
    else:
        raise SchemaError(f"unknown session format {fmt!r} (expected jsonl or csv)")
    if not sessions:
        raise SchemaError(f"{path}: no valid sessions loaded")
    return dataset_from_sessions(playlists, sessions)


def _load_sessions_jsonl(
    path: Path, playlists: Mapping[str, Playlist], strict: bool, cap: int
) -> list[Session]:
    sessions: list[Session] = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            where = f"{path} line {lineno}"
            try:
                obj = json.loads(line)
                raw_events = [
                    (int(e["pos"]), str(e["action"])) for e in obj["events"]
                ]
                session = _session_from_parts(
                    str(obj["session_id"]),
                    str(obj["playlist_id"]),
                    raw_events,
                    playlists,
                    cap,
                    where,
                )
            except json.JSONDecodeError as exc:
                err: Exception = SchemaError(f"{where}: invalid JSON ({exc.msg})")
                if strict:
                    raise err from None
                log.warning("%s (session skipped)", err)
                continue
            except KeyError as exc:
                err = SchemaError(f"{where}: session missing field {exc}")
                if strict:
                    raise err from None
                log.warning("%s (session skipped)", err)
                continue
            except (SchemaError, ConstraintViolation) as exc:
                if strict:
                    raise SchemaError(f"{where}: {exc}") from None
                log.warning("%s: %s (session skipped)", where, exc)
                continue
            sessions.append(session)
    return sessions


_CSV_COLUMNS = ("session_id", "playlist_id", "pos", "action")


def _load_sessions_csv(
    path: Path, playlists: Mapping[str, Playlist], strict: bool, cap: int
) -> list[Session]:
    # Events of one session may be interleaved with others; file order defines
    # event order within each session.
    rows: dict[str, list[tuple[int, str]]] = {}
    pids: dict[str, str] = {}
    first_line: dict[str, int] = {}
    bad: set[str] = set()
    with open(path, encoding="utf-8", newline="") as fh:
        reader = csv.DictReader(fh)
        missing = [c for c in _CSV_COLUMNS if c not in (reader.fieldnames or ())]
        if missing:
            raise SchemaError(f"{path}: missing CSV columns {missing}")
        for lineno, row in enumerate(reader, start=2):  # header is line 1
            where = f"{path} line {lineno}"
            sid = row["session_id"]
            try:
                pos = int(row["pos"])
            except (TypeError, ValueError):
                err = SchemaError(f"{where}: pos {row['pos']!r} is not an integer")
                if strict:
                    raise err from None
                log.warning("%s (session %r skipped)", err, sid)
                bad.add(sid)
                continue
            if sid in pids and pids[sid] != row["playlist_id"]:
                err = SchemaError(
                    f"{where}: session {sid!r} references two playlists "
                    f"({pids[sid]!r} and {row['playlist_id']!r})"
                )
                if strict:
                    raise err
                log.warning("%s (session skipped)", err)
                bad.add(sid)
                continue
            pids.setdefault(sid, row["playlist_id"])
            first_line.setdefault(sid, lineno)
            rows.setdefault(sid, []).append((pos, row["action"]))
    sessions = []
    for sid, events in rows.items():
        if sid in bad:
            continue
        where = f"{path} line {first_line[sid]}"
        try:
            sessions.append(
                _session_from_parts(sid, pids[sid], events, playlists, cap, where)
            )
        except (SchemaError, ConstraintViolation) as exc:
            if strict:
                raise SchemaError(f"{where}: {exc}") from None
            log.warning("%s: %s (session skipped)", where, exc)
    return sessions


def load_dataset(
    sessions_path: str | Path,
    playlists_path: str | Path,
    fmt: str = "jsonl",
    strict: bool = True,
    cap: int = DEFAULT_CAP,
) -> Dataset:
    playlists = load_playlists(playlists_path)
    return load_sessions(sessions_path, playlists, fmt=fmt, strict=strict, cap=cap)


def playlist_to_json(playlist: Playlist) -> dict:
    return {
        "playlist_id": playlist.playlist_id,
        "tracks": [
            {
                "track_id": t.track_id,
                "duration": t.duration,
                "features": {k: v for k, v in t.extra_features},
            }
            for t in playlist.tracks
        ],
    }


def session_to_json(session: Session) -> dict:
    return {
        "session_id": session.session_id,
        "playlist_id": session.playlist_id,
        "events": [
            {"pos": e.track_position, "action": e.outcome.value}
            for e in session.events
        ],
    }


def write_playlists_jsonl(path: str | Path, playlists: Mapping[str, Playlist]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for pid in sorted(playlists):
            fh.write(json.dumps(playlist_to_json(playlists[pid]), sort_keys=True))
            fh.write("\n")


def write_sessions_jsonl(path: str | Path, sessions: Iterable[Session]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for session in sessions:
            fh.write(json.dumps(session_to_json(session), sort_keys=True))
            fh.write("\n")


# ---------------------------------------------------------------------------
# splitting and session-end handling


def split(dataset: Dataset, train_fraction: float = 0.9, seed: int = 0) -> Dataset:
    """Tag each session TRAIN or TEST, stratified per playlist.

    Deterministic for a fixed seed. Playlists with fewer than two sessions go
    entirely to TRAIN (with a warning); otherwise each playlist keeps at least
    one session on each side, within one session of the requested fraction.
    """
    if not 0.0 < train_fraction < 1.0:
        raise ConstraintViolation(
            f"train_fraction must be in (0, 1), got {train_fraction}"
        )
    rng = random.Random(seed)
    tags: list[Split | None] = [None] * len(dataset.sessions)
    by_playlist: dict[str, list[int]] = {}
    for idx, session in enumerate(dataset.sessions):
        by_playlist.setdefault(session.playlist_id, []).append(idx)
    for pid in sorted(by_playlist):
        indices = by_playlist[pid]
        n = len(indices)
        if n < 2:
            log.warning(
                "playlist %r has %d session(s); all assigned to TRAIN", pid, n
            )
            for idx in indices:
                tags[idx] = Split.TRAIN
            continue
        shuffled = list(indices)
        rng.shuffle(shuffled)
        n_train = min(n - 1, max(1, round(train_fraction * n)))
        for j, idx in enumerate(shuffled):
            tags[idx] = Split.TRAIN if j < n_train else Split.TEST
    return Dataset(
        playlists=dataset.playlists,
        sessions=dataset.sessions,
        split_tags=tuple(t if t is not None else Split.TRAIN for t in tags),
    )


def apply_session_end(dataset: Dataset, mode: SessionEndMode) -> Dataset:
    """Normalize session tails under the chosen end-of-session reading."""
    new_sessions = tuple(
        _apply_mode(s, len(dataset.playlists[s.playlist_id]), mode)
        for s in dataset.sessions
    )
    return Dataset(
        playlists=dataset.playlists,
        sessions=new_sessions,
        split_tags=dataset.split_tags,
    )


def _apply_mode(session: Session, n_tracks: int, mode: SessionEndMode) -> Session:
    if mode is SessionEndMode.FULL:
        last = session.last_position
        if last >= n_tracks:
            return session
        pad = tuple(
            Event(track_position=p, outcome=Outcome.SKIP)
            for p in range(last + 1, n_tracks + 1)
        )
        return replace(session, events=session.events + pad)
    # TRUNCATE: drop everything after the last played/replayed event. A
    # session with no plays keeps its first event (sessions cannot be empty).
    last_play = 0
    for idx, event in enumerate(session.events, start=1):
        if event.outcome in (Outcome.PLAY, Outcome.REPLAY):
            last_play = idx
    keep = max(last_play, 1)
    if keep == len(session.events):
        return session
    return replace(session, events=session.events[:keep])


# ---------------------------------------------------------------------------
# time features


def event_listening_time(event: Event, playlist: Playlist) -> float:
    """Seconds consumed by one event (0 for a skip)."""
    if event.outcome is Outcome.SKIP:
        return 0.0
    return playlist.track_at(event.track_position).duration


def observed_remaining_time(session: Session, playlist: Playlist) -> tuple[float, ...]:
    """Per event position: total listening time minus time consumed before it."""
    times = [event_listening_time(e, playlist) for e in session.events]
    out = []
    tail = float(sum(times))
    for t in times:
        out.append(tail)
        tail -= t
    return tuple(out)


def predicted_remaining_time(
    train_sessions: Sequence[Session], playlist: Playlist
) -> tuple[float, ...]:
    """Mean remaining listening time by event position, over training sessions.

    Positions beyond a session's length contribute 0 to that position's mean;
    the denominator is always the number of training sessions. Lookups beyond
    the table mean "no training session was ever this long" and read as 0.
    """
    if not train_sessions:
        raise ConstraintViolation(
            "predicted_remaining_time needs at least one training session"
        )
    max_len = max(len(s) for s in train_sessions)
    sums = np.zeros(max_len, dtype=np.float64)
    for session in train_sessions:
        tail = observed_remaining_time(session, playlist)
        sums[: len(tail)] += np.asarray(tail)
    return tuple(float(v) for v in sums / len(train_sessions))


# ---------------------------------------------------------------------------
# model-facing feature rows

# One-hot layout of the previous action channel.
PREV_ACTION_ORDER = ("skip", "play", "replay", "none")


@dataclass(frozen=True, slots=True)
class FeatureRow:
    """Model input for one event position (raw units; scaling happens later)."""

    previous_action: tuple[int, int, int, int]  # one-hot over PREV_ACTION_ORDER
    predicted_remaining_time: float
    track_duration: float
    observed_remaining_time: float | None = None
    extra: tuple[float, ...] = ()

    def __post_init__(self) -> None:
        if sum(self.previous_action) != 1 or any(
            v not in (0, 1) for v in self.previous_action
        ):
            raise ConstraintViolation(
                f"previous_action must be one-hot, got {self.previous_action}"
            )
        if self.predicted_remaining_time < 0:
            raise ConstraintViolation(
                f"predicted_remaining_time must be >= 0, got "
                f"{self.predicted_remaining_time}"
            )


def _onehot_prev(outcome: Outcome | None) -> tuple[int, int, int, int]:
    if outcome is None:
        return (0, 0, 0, 1)
    idx = OUTCOME_INDEX[outcome]
    hot = [0, 0, 0, 0]
    hot[idx] = 1
    return tuple(hot)  # type: ignore[return-value]


def build_features(
    session: Session,
    playlist: Playlist,
    remaining_time_table: Sequence[float],
    leak: bool = False,
) -> tuple[FeatureRow, ...]:
    """One FeatureRow per event.

    Row j carries the outcome at j-1 (NONE at j=1), the mean remaining time
    for position j from the training table, and the duration of the track the
    event resolves. With leak=True the observed remaining time of this very
    session is attached as well.
    """
    observed = observed_remaining_time(session, playlist) if leak else None
    rows = []
    prev: Outcome | None = None
    for j, event in enumerate(session.events):
        table_value = (
            float(remaining_time_table[j]) if j < len(remaining_time_table) else 0.0
        )
        rows.append(
            FeatureRow(
                previous_action=_onehot_prev(prev),
                predicted_remaining_time=table_value,
                track_duration=playlist.track_at(event.track_position).duration,
                observed_remaining_time=observed[j] if observed else None,
            )
        )
        prev = event.outcome
    return tuple(rows)


@dataclass(frozen=True, slots=True)
class FeatureConfig:
    """Which channels feed the models.

    leak=True swaps the predicted remaining time for the session's observed
    remaining time (a deliberate information leak used for ablations).
    """

    leak: bool = False
    include_duration: bool = False

    @property
    def input_dim(self) -> int:
        return 5 + (1 if self.include_duration else 0)


@dataclass
class FeaturePipeline:
    """Fits per-playlist scaling state on TRAIN sessions, vectorizes any session.

    Time and duration channels are z-scored with training statistics; the
    previous-action one-hot passes through unscaled.
    """

    playlist: Playlist
    config: FeatureConfig
    remaining_time_table: tuple[float, ...] = ()
    time_mean: float = 0.0
    time_std: float = 1.0
    duration_mean: float = 0.0
    duration_std: float = 1.0
    fitted: bool = False

    def fit(self, train_sessions: Sequence[Session]) -> "FeaturePipeline":
        self.remaining_time_table = predicted_remaining_time(
            train_sessions, self.playlist
        )
        times: list[float] = []
        durations: list[float] = []
        for session in train_sessions:
            for row in build_features(
                session, self.playlist, self.remaining_time_table, leak=self.config.leak
            ):
                times.append(self._time_channel(row))
                durations.append(row.track_duration)
        self.time_mean = float(np.mean(times))
        self.time_std = _std_floor(np.std(times))
        self.duration_mean = float(np.mean(durations))
        self.duration_std = _std_floor(np.std(durations))
        self.fitted = True
        return self

    def _time_channel(self, row: FeatureRow) -> float:
        if self.config.leak:
            if row.observed_remaining_time is None:
                raise ConstraintViolation(
                    "leak=True but the feature row has no observed remaining time"
                )
            return row.observed_remaining_time
        return row.predicted_remaining_time

    def feature_rows(self, session: Session) -> tuple[FeatureRow, ...]:
        return build_features(
            session, self.playlist, self.remaining_time_table, leak=self.config.leak
        )

    def matrix(self, session: Session) -> np.ndarray:
        """(n_events, input_dim) float64 model input."""
        if not self.fitted:
            raise ConstraintViolation("feature pipeline used before fit()")
        rows = self.feature_rows(session)
        out = np.zeros((len(rows), self.config.input_dim), dtype=np.float64)
        for j, row in enumerate(rows):
            out[j, 0:4] = row.previous_action
            out[j, 4] = (self._time_channel(row) - self.time_mean) / self.time_std
            if self.config.include_duration:
                out[j, 5] = (row.track_duration - self.duration_mean) / self.duration_std
        return out

    def labels(self, session: Session) -> np.ndarray:
        """(n_events,) int64 outcome indices."""
        return np.asarray(
            [OUTCOME_INDEX[e.outcome] for e in session.events], dtype=np.int64
        )

    def to_jsonable(self) -> dict:
        return {
            "playlist_id": self.playlist.playlist_id,
            "config": {
                "leak": self.config.leak,
                "include_duration": self.config.include_duration,
            },
            "remaining_time_table": list(self.remaining_time_table),
            "time_mean": self.time_mean,
            "time_std": self.time_std,
            "duration_mean": self.duration_mean,
            "duration_std": self.duration_std,
        }

    @classmethod
    def from_jsonable(cls, obj: dict, playlist: Playlist) -> "FeaturePipeline":
        if obj["playlist_id"] != playlist.playlist_id:
            raise SchemaError(
                f"pipeline state is for playlist {obj['playlist_id']!r}, "
                f"got {playlist.playlist_id!r}"
            )
        pipeline = cls(
            playlist=playlist,
            config=FeatureConfig(
                leak=bool(obj["config"]["leak"]),
                include_duration=bool(obj["config"]["include_duration"]),
            ),
            remaining_time_table=tuple(obj["remaining_time_table"]),
            time_mean=float(obj["time_mean"]),
            time_std=float(obj["time_std"]),
            duration_mean=float(obj["duration_mean"]),
            duration_std=float(obj["duration_std"]),
        )
        pipeline.fitted = True
        return pipeline


def _std_floor(value: float) -> float:
    # A constant channel still has to be divisible; unit scale is the
    # convention for zero-variance features.
    return float(value) if value > 1e-12 else 1.0


# ---------------------------------------------------------------------------
# prompt export (text completion format)


def format_prompt(
    session: Session, playlist: Playlist, position: int
) -> tuple[str, str]:
    """Prompt/completion pair asking for the action at event ``position``.

    The prompt lists every earlier event as "k. (duration=D) action=A" and
    ends with the target line's action left blank. Position is 1-based and
    must be >= 2 (the first event is never predicted).
    """
    if not 2 <= position <= len(session.events):
        raise ConstraintViolation(
            f"prompt position must be in 2..{len(session.events)}, got {position}"
        )
    lines = []
    for k, event in enumerate(session.events[:position], start=1):
        duration = playlist.track_at(event.track_position).duration
        action = event.outcome.value if k < position else ""
        lines.append(f"{k}. (duration={duration:.2f}) action={action}")
    completion = session.events[position - 1].outcome.value
    return "\n".join(lines), completion


_PROMPT_LINE = re.compile(
    r"^(\d+)\. \(duration=([0-9]+\.[0-9]{2})\) action=(skip|play|replay)?$"
)


def parse_prompt(prompt: str) -> tuple[tuple[float, Outcome | None], ...]:
    """Inverse of format_prompt: (duration, action) per line, None when blank."""
    out = []
    for lineno, line in enumerate(prompt.split("\n"), start=1):
        match = _PROMPT_LINE.match(line)
        if not match:
            raise SchemaError(f"prompt line {lineno} is malformed: {line!r}")
        if int(match.group(1)) != lineno:
            raise SchemaError(
                f"prompt line {lineno} is numbered {match.group(1)}"
            )
        action = Outcome(match.group(3)) if match.group(3) else None
        out.append((float(match.group(2)), action))
    return tuple(out)


def export_prompts(
    dataset: Dataset,
    split_tag: Split | None = None,
    dedupe: bool = False,
) -> Iterator[dict[str, str]]:
    """Yield prompt/completion dicts for every scored position (j >= 2).

    dedupe=True keeps the first occurrence of each distinct prompt string.
    """
    seen: set[str] = set()
    for session in dataset.sessions_for(split=split_tag):
        playlist = dataset.playlists[session.playlist_id]
        for position in range(2, len(session.events) + 1):
            prompt, completion = format_prompt(session, playlist, position)
            if dedupe:
                if prompt in seen:
                    continue
                seen.add(prompt)
            yield {"prompt": prompt, "completion": completion}


def write_prompts_jsonl(
    path: str | Path,
    dataset: Dataset,
    split_tag: Split | None = None,
    dedupe: bool = False,
) -> int:
    """Write prompts.jsonl; returns the number of pairs written."""
    count = 0
    with open(path, "w", encoding="utf-8") as fh:
        for pair in export_prompts(dataset, split_tag=split_tag, dedupe=dedupe):
            fh.write(json.dumps(pair, sort_keys=True))
            fh.write("\n")
            count += 1
    return count
