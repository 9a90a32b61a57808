"""Core domain model for sequential consumption of an ordered bundle.

A listener walks through an ordered playlist one decision at a time. Each
event either skips the next track, plays the next track, or replays the
track that was just played. Per-track consumption is capped at ``cap`` units
(default 2: one play plus at most one replay), and the walk ends after the
last track is resolved.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from typing import Iterable, Mapping

from .errors import ConstraintViolation

DEFAULT_CAP = 2


class Outcome(str, Enum):
    """Decision outcome at one event position."""

    SKIP = "skip"
    PLAY = "play"
    REPLAY = "replay"

    def __str__(self) -> str:  # keep log/CSV output compact
        return self.value


# Canonical index order; also the deterministic tie-break order for argmax.
OUTCOME_ORDER: tuple[Outcome, Outcome, Outcome] = (
    Outcome.SKIP,
    Outcome.PLAY,
    Outcome.REPLAY,
)
OUTCOME_INDEX: Mapping[Outcome, int] = {o: i for i, o in enumerate(OUTCOME_ORDER)}


def parse_outcome(raw: str) -> Outcome:
    """Parse a serialized outcome string ("skip" | "play" | "replay")."""
    try:
        return Outcome(raw)
    except ValueError:
        raise ConstraintViolation(f"unknown outcome string {raw!r}") from None


@dataclass(frozen=True, slots=True)
class Track:
    """One item of an ordered bundle."""

    track_id: str
    duration: float  # seconds, strictly positive
    extra_features: tuple[tuple[str, float], ...] = ()  # sorted (name, value) pairs

    def __post_init__(self) -> None:
        if not self.duration > 0:
            raise ConstraintViolation(
                f"track {self.track_id!r}: duration must be > 0, got {self.duration}"
            )


@dataclass(frozen=True, slots=True)
class Playlist:
    """An ordered bundle of tracks. Track order is the consumption order."""

    playlist_id: str
    tracks: tuple[Track, ...]

    def __post_init__(self) -> None:
        if not self.tracks:
            raise ConstraintViolation(f"playlist {self.playlist_id!r} has no tracks")

    def __len__(self) -> int:
        return len(self.tracks)

    def track_at(self, position: int) -> Track:
        """Track at a 1-based position."""
        if not 1 <= position <= len(self.tracks):
            raise ConstraintViolation(
                f"playlist {self.playlist_id!r}: position {position} outside 1..{len(self.tracks)}"
            )
        return self.tracks[position - 1]


@dataclass(frozen=True, slots=True)
class Event:
    """One decision: which track position it resolved and how."""

    track_position: int  # 1-based
    outcome: Outcome

    def __post_init__(self) -> None:
        if self.track_position < 1:
            raise ConstraintViolation(
                f"event track_position must be >= 1, got {self.track_position}"
            )


@dataclass(frozen=True, slots=True)
class Session:
    """One listener's walk through one playlist.

    Events are ordered. A REPLAY event carries the same track_position as the
    event before it; SKIP/PLAY events move to the next position. The first
    event always resolves track 1 (and therefore cannot be a REPLAY).
    """

    session_id: str
    playlist_id: str
    events: tuple[Event, ...]

    def __post_init__(self) -> None:
        if not self.events:
            raise ConstraintViolation(f"session {self.session_id!r} has no events")

    def __len__(self) -> int:
        return len(self.events)

    @property
    def last_position(self) -> int:
        return self.events[-1].track_position

    def outcomes(self) -> tuple[Outcome, ...]:
        return tuple(e.outcome for e in self.events)


@dataclass(frozen=True, slots=True)
class ConsumptionState:
    """Play counts (x_1 .. x_i) for the items covered so far.

    Only the last count may still be incremented; earlier items are settled.
    """

    counts: tuple[int, ...]
    cap: int = DEFAULT_CAP

    def __post_init__(self) -> None:
        if self.cap < 1:
            raise ConstraintViolation(f"cap must be >= 1, got {self.cap}")
        for k, c in enumerate(self.counts, start=1):
            if not 0 <= c <= self.cap:
                raise ConstraintViolation(
                    f"state count x_{k}={c} outside 0..{self.cap}"
                )

    @property
    def covered(self) -> int:
        """Number of items resolved so far (i)."""
        return len(self.counts)

    @property
    def last_count(self) -> int:
        if not self.counts:
            raise ConstraintViolation("empty state has no last count")
        return self.counts[-1]


def initial_state(cap: int = DEFAULT_CAP) -> ConsumptionState:
    """State before any decision has been made."""
    return ConsumptionState(counts=(), cap=cap)


def advance_state(
    state: ConsumptionState, outcome: Outcome, n_tracks: int
) -> ConsumptionState:
    """Apply one decision outcome to a consumption state.

    SKIP appends a 0 count for the next item, PLAY appends a 1, REPLAY
    increments the last count. Raises ConstraintViolation naming the violated
    rule when the outcome is infeasible from ``state``.
    """
    if n_tracks < 1:
        raise ConstraintViolation(f"n_tracks must be >= 1, got {n_tracks}")
    if state.covered > n_tracks:
        raise ConstraintViolation(
            f"state covers {state.covered} items but the playlist has {n_tracks}"
        )
    if outcome is Outcome.REPLAY:
        if state.covered == 0:
            raise ConstraintViolation(
                "REPLAY with no preceding item: the first decision must resolve item 1"
            )
        last = state.last_count
        if last == 0:
            raise ConstraintViolation(
                "REPLAY after SKIP: a skipped item cannot be replayed"
            )
        if last >= state.cap:
            raise ConstraintViolation(
                f"REPLAY beyond cap: item already consumed {last} of {state.cap} units"
            )
        return ConsumptionState(state.counts[:-1] + (last + 1,), cap=state.cap)
    # SKIP or PLAY resolve the next item.
    if state.covered >= n_tracks:
        raise ConstraintViolation(
            f"{outcome.value.upper()} past the end: all {n_tracks} items are already resolved"
        )
    unit = 0 if outcome is Outcome.SKIP else 1
    return ConsumptionState(state.counts + (unit,), cap=state.cap)


def is_terminal(state: ConsumptionState, n_tracks: int) -> bool:
    """True when no further decision is possible from ``state``.

    The walk ends once the last item is resolved with count 0 (skipped) or
    count == cap (no replay budget left). With a partial last count the
    listener may still replay, or simply stop; stopping is the caller's call.
    """
    if state.covered < n_tracks:
        return False
    return state.last_count == 0 or state.last_count >= state.cap


def count_states(n_tracks: int, cap: int = DEFAULT_CAP) -> int:
    """Number of reachable consumption states for ``n_tracks`` items.

    Every vector (x_1..x_i) with 1 <= i <= n and each count in 0..cap is
    reachable, giving sum_{i=1..n} (cap+1)^i. Exact integer arithmetic, no
    overflow for any practical size.
    """
    if n_tracks < 1:
        raise ConstraintViolation(f"n_tracks must be >= 1, got {n_tracks}")
    if cap < 1:
        raise ConstraintViolation(f"cap must be >= 1, got {cap}")
    base = cap + 1
    return (base ** (n_tracks + 1) - base) // cap


def validate_session(
    session: Session, n_tracks: int, cap: int = DEFAULT_CAP
) -> None:
    """Check every event of ``session`` against the process rules.

    Raises ConstraintViolation naming the offending event index (1-based)
    and the rule it breaks.
    """
    state = initial_state(cap)
    expected = 0
    for idx, event in enumerate(session.events, start=1):
        if event.outcome is Outcome.REPLAY:
            want = expected
        else:
            want = expected + 1
        if event.track_position != want:
            raise ConstraintViolation(
                f"session {session.session_id!r} event {idx}: "
                f"track_position {event.track_position} does not follow from "
                f"position {expected} under outcome {event.outcome}"
            )
        try:
            state = advance_state(state, event.outcome, n_tracks)
        except ConstraintViolation as exc:
            raise ConstraintViolation(
                f"session {session.session_id!r} event {idx}: {exc}"
            ) from None
        expected = want


def session_to_states(
    session: Session, n_tracks: int, cap: int = DEFAULT_CAP
) -> tuple[ConsumptionState, ...]:
    """Fold a session into the consumption state after each event.

    Validates as it goes; the returned tuple has one state per event.
    """
    validate_session(session, n_tracks, cap)
    states: list[ConsumptionState] = []
    state = initial_state(cap)
    for event in session.events:
        state = advance_state(state, event.outcome, n_tracks)
        states.append(state)
    return tuple(states)


def session_counts(session: Session, n_tracks: int) -> tuple[int, ...]:
    """Final per-track play counts, padded with zeros for unreached tracks."""
    counts = [0] * n_tracks
    for event in session.events:
        if event.outcome in (Outcome.PLAY, Outcome.REPLAY):
            counts[event.track_position - 1] += 1
    return tuple(counts)


def events_from_outcomes(outcomes: Iterable[Outcome]) -> tuple[Event, ...]:
    """Build events with track positions derived from an outcome sequence."""
    events: list[Event] = []
    pos = 0
    for outcome in outcomes:
        pos = pos if outcome is Outcome.REPLAY else pos + 1
        events.append(Event(track_position=max(pos, 1), outcome=outcome))
    return tuple(events)
