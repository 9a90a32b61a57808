"""Synthetic listening sessions with known conditional structure.

Three generator kinds:
  markov1     next outcome depends on the previous outcome
  markov_pos  like markov1, but with a separate row per event position
  order2      next outcome depends on the previous two outcomes

Each session draws from its own bit stream, np.random.default_rng([seed, k])
for session index k, so any one session can be regenerated without replaying
the stream and inserting sessions never disturbs earlier ones.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping

import numpy as np

from .dataio import Dataset, dataset_from_sessions
from .domain import (
    DEFAULT_CAP,
    OUTCOME_INDEX,
    OUTCOME_ORDER,
    Event,
    Outcome,
    Playlist,
    Session,
    Track,
    advance_state,
    initial_state,
    is_terminal,
)
from .errors import ConstraintViolation, SchemaError

ROW_SUM_TOL = 1e-9

_BASE_DURATIONS = (214.0, 187.5, 243.2, 198.7, 256.4, 171.9, 222.4, 204.3)

GENERATOR_KINDS = ("markov1", "markov_pos", "order2")

Row = tuple[float, float, float]


def build_playlist(
    playlist_id: str = "synthetic",
    n_tracks: int = 13,
    durations: tuple[float, ...] | None = None,
) -> Playlist:
    """Playlist with the given or cycled default track durations."""
    if n_tracks < 1:
        raise ConstraintViolation(f"n_tracks must be >= 1, got {n_tracks}")
    if durations is None:
        durations = tuple(
            _BASE_DURATIONS[i % len(_BASE_DURATIONS)] for i in range(n_tracks)
        )
    if len(durations) != n_tracks:
        raise ConstraintViolation(
            f"{len(durations)} durations for {n_tracks} tracks"
        )
    tracks = tuple(
        Track(track_id=f"t{i + 1:03d}", duration=float(d))
        for i, d in enumerate(durations)
    )
    return Playlist(playlist_id=playlist_id, tracks=tracks)


def _validate_row(row: Row, prev: Outcome, cap: int, where: str) -> Row:
    vals = tuple(float(v) for v in row)
    if len(vals) != 3 or any(v < 0 for v in vals):
        raise ConstraintViolation(f"{where}: rows are 3 probabilities >= 0")
    if abs(sum(vals) - 1.0) > ROW_SUM_TOL:
        raise ConstraintViolation(f"{where}: row sums to {sum(vals)!r}, expected 1")
    replay_mass = vals[OUTCOME_INDEX[Outcome.REPLAY]]
    if prev is Outcome.SKIP and replay_mass != 0.0:
        raise ConstraintViolation(
            f"{where}: a skipped track cannot be replayed, replay mass must be 0"
        )
    if prev is Outcome.REPLAY and cap == 2 and replay_mass != 0.0:
        raise ConstraintViolation(
            f"{where}: at cap 2 a replay cannot follow a replay, mass must be 0"
        )
    return vals


@dataclass(frozen=True)
class GeneratorSpec:
    """Generator kind, playlist shape, sampling seeds, and conditional rows.

    ``transitions`` is kind-dependent:
      markov1     {prev Outcome: row}
      markov_pos  {target event position (contiguous from 2): {prev: row}}
      order2      {(prev2 Outcome or None, prev1 Outcome): row}

    Rows are (P(skip), P(play), P(replay)) for the next event. Probability on
    a structurally impossible replay is rejected outright rather than being
    renormalized away at sampling time.
    """

    kind: str
    n_sessions: int
    seed: int
    transitions: Mapping = field(default_factory=dict)
    playlist_id: str = "synthetic"
    n_tracks: int = 13
    durations: tuple[float, ...] | None = None
    cap: int = DEFAULT_CAP
    initial_play_prob: float = 0.65

    def __post_init__(self) -> None:
        if self.kind not in GENERATOR_KINDS:
            raise ConstraintViolation(f"unknown generator kind {self.kind!r}")
        if self.n_sessions < 1:
            raise ConstraintViolation(f"n_sessions must be >= 1, got {self.n_sessions}")
        if not 0.0 <= self.initial_play_prob <= 1.0:
            raise ConstraintViolation("initial_play_prob must be in [0, 1]")
        if self.cap < 2:
            raise ConstraintViolation(f"cap must be >= 2, got {self.cap}")
        object.__setattr__(self, "transitions", self._canonical_transitions())

    def _canonical_transitions(self) -> Mapping:
        t = self.transitions
        if self.kind == "markov1":
            rows = {}
            for prev in OUTCOME_ORDER:
                if prev not in t:
                    raise ConstraintViolation(f"markov1 needs a row for {prev.value!r}")
                rows[prev] = _validate_row(
                    t[prev], prev, self.cap, f"row {prev.value!r}"
                )
            return rows
        if self.kind == "markov_pos":
            if not t:
                raise ConstraintViolation("markov_pos needs at least one position")
            positions = sorted(int(p) for p in t)
            if positions[0] != 2 or positions != list(
                range(2, positions[-1] + 1)
            ):
                raise ConstraintViolation(
                    f"markov_pos positions must be contiguous from 2, got {positions}"
                )
            out: dict[int, dict[Outcome, Row]] = {}
            for pos in positions:
                rows = {}
                for prev in OUTCOME_ORDER:
                    if prev not in t[pos]:
                        raise ConstraintViolation(
                            f"position {pos} needs a row for {prev.value!r}"
                        )
                    rows[prev] = _validate_row(
                        t[pos][prev], prev, self.cap, f"position {pos} row {prev.value!r}"
                    )
                out[pos] = rows
            return out
        # order2
        rows2: dict[tuple[Outcome | None, Outcome], Row] = {}
        for key, row in t.items():
            prev2, prev1 = key
            if prev2 is not None and not isinstance(prev2, Outcome):
                raise ConstraintViolation(f"bad order2 key {key!r}")
            rows2[(prev2, prev1)] = _validate_row(
                row,
                prev1,
                self.cap,
                f"row ({prev2.value if prev2 else 'none'}, {prev1.value})",
            )
        required: list[tuple[Outcome | None, Outcome]] = [
            (None, Outcome.SKIP),
            (None, Outcome.PLAY),
        ]
        for a in OUTCOME_ORDER:
            for b in (Outcome.SKIP, Outcome.PLAY):
                required.append((a, b))
        required.append((Outcome.PLAY, Outcome.REPLAY))
        if self.cap > 2:
            required.append((Outcome.REPLAY, Outcome.REPLAY))
        for key in required:
            if key not in rows2:
                a, b = key
                raise ConstraintViolation(
                    f"order2 needs a row for ({a.value if a else 'none'}, {b.value})"
                )
        return rows2

    def build_playlist(self) -> Playlist:
        return build_playlist(self.playlist_id, self.n_tracks, self.durations)

    def row_for(
        self, prev2: Outcome | None, prev1: Outcome, target_position: int
    ) -> Row:
        """Conditional row for the event at ``target_position`` (>= 2)."""
        if self.kind == "markov1":
            return self.transitions[prev1]
        if self.kind == "markov_pos":
            top = max(self.transitions)
            return self.transitions[min(target_position, top)][prev1]
        try:
            return self.transitions[(prev2, prev1)]
        except KeyError:
            raise ConstraintViolation(
                f"order2 has no row for context "
                f"({prev2.value if prev2 else 'none'}, {prev1.value})"
            ) from None


def _sample_index(row: Row, u: float) -> int:
    edge = 0.0
    for idx in range(2):
        edge += row[idx]
        if u < edge:
            return idx
    return 2


def _generate_session(
    spec: GeneratorSpec, playlist: Playlist, idx: int
) -> Session:
    rng = np.random.default_rng([spec.seed, idx])
    n = len(playlist)
    events: list[Event] = []
    first = Outcome.PLAY if rng.random() < spec.initial_play_prob else Outcome.SKIP
    state = advance_state(initial_state(spec.cap), first, n)
    events.append(Event(track_position=1, outcome=first))
    while not is_terminal(state, n):
        prev1 = events[-1].outcome
        prev2 = events[-2].outcome if len(events) >= 2 else None
        row = spec.row_for(prev2, prev1, len(events) + 1)
        outcome = OUTCOME_ORDER[_sample_index(row, rng.random())]
        if outcome is not Outcome.REPLAY and state.covered >= n:
            # the walk would move past the last track: the session ends here
            break
        state = advance_state(state, outcome, n)
        events.append(Event(track_position=state.covered, outcome=outcome))
    return Session(
        session_id=f"s{idx:05d}",
        playlist_id=spec.playlist_id,
        events=tuple(events),
    )


def generate(spec: GeneratorSpec) -> Dataset:
    """Sample the spec's sessions; all sessions start tagged TRAIN."""
    playlist = spec.build_playlist()
    sessions = [
        _generate_session(spec, playlist, idx) for idx in range(spec.n_sessions)
    ]
    return dataset_from_sessions({playlist.playlist_id: playlist}, sessions)


# ---------------------------------------------------------------------------
# reference rates (Monte Carlo, fresh draws so estimates are independent of
# any generated dataset)


def _event_conditional(
    spec: GeneratorSpec,
    prev2: Outcome | None,
    prev1: Outcome,
    target_position: int,
    covered: int,
    last_count: int,
) -> Row:
    """Distribution of the NEXT EVENT given that one occurs.

    Past the last track only a replay keeps the session alive, so the event
    distribution collapses onto REPLAY there.
    """
    if covered >= spec.n_tracks:
        return (0.0, 0.0, 1.0)
    return spec.row_for(prev2, prev1, target_position)


def bayes_rate(spec: GeneratorSpec, n_sessions: int = 2000, seed: int = 90210) -> float:
    """Hit rate of the most-probable-outcome rule under the true conditionals.

    Estimated by simulation: each scored event contributes the true
    probability of its context's modal outcome, which has smaller variance
    than scoring 0/1 hits.
    """
    playlist = build_playlist("probe", spec.n_tracks, spec.durations)
    probe = GeneratorSpec(
        kind=spec.kind,
        n_sessions=n_sessions,
        seed=seed,
        transitions=spec.transitions,
        playlist_id="probe",
        n_tracks=spec.n_tracks,
        durations=spec.durations,
        cap=spec.cap,
        initial_play_prob=spec.initial_play_prob,
    )
    total = 0.0
    scored = 0
    for idx in range(n_sessions):
        session = _generate_session(probe, playlist, idx)
        total_j, count_j = _session_modal_mass(probe, session, predicted=None)
        total += total_j
        scored += count_j
    if scored == 0:
        raise ConstraintViolation("no scored events; sessions were all length 1")
    return total / scored


def first_order_rate(
    spec: GeneratorSpec, n_sessions: int = 2000, seed: int = 90210
) -> float:
    """Hit rate of the best first-order rule against the true conditionals.

    Pass one fits prev -> argmax(next) on simulated sessions; pass two scores
    that rule on fresh sessions using true event probabilities.
    """
    playlist = build_playlist("probe", spec.n_tracks, spec.durations)
    base = dict(
        kind=spec.kind,
        transitions=spec.transitions,
        playlist_id="probe",
        n_tracks=spec.n_tracks,
        durations=spec.durations,
        cap=spec.cap,
        initial_play_prob=spec.initial_play_prob,
    )
    fit_spec = GeneratorSpec(n_sessions=n_sessions, seed=seed + 1, **base)
    counts = np.zeros((3, 3), dtype=np.float64)
    marginal = np.zeros(3, dtype=np.float64)
    for idx in range(n_sessions):
        outcomes = _generate_session(fit_spec, playlist, idx).outcomes()
        for o in outcomes:
            marginal[OUTCOME_INDEX[o]] += 1
        for j in range(1, len(outcomes)):
            counts[OUTCOME_INDEX[outcomes[j - 1]], OUTCOME_INDEX[outcomes[j]]] += 1
    fallback = int(np.argmax(marginal))
    predicted = tuple(
        int(np.argmax(counts[i])) if counts[i].sum() > 0 else fallback
        for i in range(3)
    )
    score_spec = GeneratorSpec(n_sessions=n_sessions, seed=seed + 2, **base)
    total = 0.0
    scored = 0
    for idx in range(n_sessions):
        session = _generate_session(score_spec, playlist, idx)
        total_j, count_j = _session_modal_mass(score_spec, session, predicted=predicted)
        total += total_j
        scored += count_j
    if scored == 0:
        raise ConstraintViolation("no scored events; sessions were all length 1")
    return total / scored


def _session_modal_mass(
    spec: GeneratorSpec,
    session: Session,
    predicted: tuple[int, int, int] | None,
) -> tuple[float, int]:
    """Sum of true probabilities of the predicted outcome at scored events.

    ``predicted`` maps prev-outcome index to predicted index; None means the
    Bayes rule (modal outcome of the true conditional itself).
    """
    events = session.events
    total = 0.0
    covered = 0
    last_count = 0
    for j, event in enumerate(events):
        if j > 0:
            prev1 = events[j - 1].outcome
            prev2 = events[j - 2].outcome if j >= 2 else None
            row = _event_conditional(
                spec, prev2, prev1, j + 1, covered, last_count
            )
            if predicted is None:
                total += max(row)
            else:
                total += row[predicted[OUTCOME_INDEX[prev1]]]
        if event.outcome is Outcome.REPLAY:
            last_count += 1
        else:
            covered = event.track_position
            last_count = 0 if event.outcome is Outcome.SKIP else 1
    return total, len(events) - 1


# ---------------------------------------------------------------------------
# canonical specs


def frequent_pattern_spec(n_sessions: int = 5000, seed: int = 20240601) -> GeneratorSpec:
    """First-order generator matching observed aggregate switching behavior:
    skips clump, plays persist, and a small replay share follows plays."""
    play_row = (0.31 / 0.99, 0.65 / 0.99, 0.03 / 0.99)
    return GeneratorSpec(
        kind="markov1",
        n_sessions=n_sessions,
        seed=seed,
        transitions={
            Outcome.SKIP: (0.85, 0.15, 0.0),
            Outcome.PLAY: play_row,
            Outcome.REPLAY: (0.38, 0.62, 0.0),
        },
        n_tracks=13,
        initial_play_prob=0.65,
    )


def second_order_spec(n_sessions: int = 3000, seed: int = 20240602) -> GeneratorSpec:
    """Second-order generator a first-order chain cannot fit.

    After a skip the response flips depending on the outcome before it, and
    the two contexts occur at similar rates, so the pooled first-order row is
    close to uniform while the true conditionals are decisive.
    """
    return GeneratorSpec(
        kind="order2",
        n_sessions=n_sessions,
        seed=seed,
        transitions={
            (None, Outcome.SKIP): (0.5, 0.5, 0.0),
            (None, Outcome.PLAY): (0.5, 0.47, 0.03),
            (Outcome.SKIP, Outcome.SKIP): (0.1, 0.9, 0.0),
            (Outcome.PLAY, Outcome.SKIP): (0.9, 0.1, 0.0),
            (Outcome.REPLAY, Outcome.SKIP): (0.9, 0.1, 0.0),
            (Outcome.SKIP, Outcome.PLAY): (0.85, 0.12, 0.03),
            (Outcome.PLAY, Outcome.PLAY): (0.12, 0.85, 0.03),
            (Outcome.REPLAY, Outcome.PLAY): (0.12, 0.85, 0.03),
            (Outcome.PLAY, Outcome.REPLAY): (0.38, 0.62, 0.0),
        },
        n_tracks=8,
        initial_play_prob=0.65,
    )


def stopping_spec(
    n_sessions: int = 400, seed: int = 20240603, n_tracks: int = 6
) -> GeneratorSpec:
    """Absorbing-skip generator: once a listener skips, they never play again.

    Under it, an outcome is SKIP exactly when the observed remaining listening
    time at that event is zero, which a leaky feature set can read off and an
    honest one cannot.
    """
    return GeneratorSpec(
        kind="markov1",
        n_sessions=n_sessions,
        seed=seed,
        transitions={
            Outcome.SKIP: (1.0, 0.0, 0.0),
            Outcome.PLAY: (0.15, 0.85, 0.0),
            Outcome.REPLAY: (0.38, 0.62, 0.0),
        },
        n_tracks=n_tracks,
        initial_play_prob=0.85,
    )


def position_shift_spec(n_sessions: int = 3000, seed: int = 20240604) -> GeneratorSpec:
    """Position-dependent generator: early positions favor skipping, late ones
    favor playing, with the same prev-outcome structure throughout."""
    early = {
        Outcome.SKIP: (0.8, 0.2, 0.0),
        Outcome.PLAY: (0.6, 0.37, 0.03),
        Outcome.REPLAY: (0.6, 0.4, 0.0),
    }
    late = {
        Outcome.SKIP: (0.2, 0.8, 0.0),
        Outcome.PLAY: (0.1, 0.87, 0.03),
        Outcome.REPLAY: (0.2, 0.8, 0.0),
    }
    return GeneratorSpec(
        kind="markov_pos",
        n_sessions=n_sessions,
        seed=seed,
        transitions={2: early, 3: early, 4: late, 5: late},
        n_tracks=6,
        initial_play_prob=0.65,
    )


# ---------------------------------------------------------------------------
# serialization

_CANONICAL_SPECS = {
    "frequent_pattern": frequent_pattern_spec,
    "second_order": second_order_spec,
    "stopping": stopping_spec,
    "position_shift": position_shift_spec,
}

CANONICAL_SPEC_NAMES = tuple(sorted(_CANONICAL_SPECS))


def named_spec(name: str, n_sessions: int | None = None, seed: int | None = None) -> GeneratorSpec:
    """One of the canonical generator specs, optionally resized or reseeded."""
    if name not in _CANONICAL_SPECS:
        raise ConstraintViolation(
            f"unknown spec name {name!r}; choices: {sorted(_CANONICAL_SPECS)}"
        )
    spec = _CANONICAL_SPECS[name]()
    kwargs = {}
    if n_sessions is not None:
        kwargs["n_sessions"] = n_sessions
    if seed is not None:
        kwargs["seed"] = seed
    if kwargs:
        spec = GeneratorSpec(
            kind=spec.kind,
            n_sessions=kwargs.get("n_sessions", spec.n_sessions),
            seed=kwargs.get("seed", spec.seed),
            transitions=spec.transitions,
            playlist_id=spec.playlist_id,
            n_tracks=spec.n_tracks,
            durations=spec.durations,
            cap=spec.cap,
            initial_play_prob=spec.initial_play_prob,
        )
    return spec


def _row_to_json(row: Row) -> list[float]:
    return [float(v) for v in row]


def spec_to_json(spec: GeneratorSpec) -> dict:
    if spec.kind == "markov1":
        transitions: dict = {
            prev.value: _row_to_json(row) for prev, row in spec.transitions.items()
        }
    elif spec.kind == "markov_pos":
        transitions = {
            str(pos): {prev.value: _row_to_json(row) for prev, row in rows.items()}
            for pos, rows in spec.transitions.items()
        }
    else:
        transitions = {
            f"{prev2.value if prev2 else 'none'},{prev1.value}": _row_to_json(row)
            for (prev2, prev1), row in spec.transitions.items()
        }
    return {
        "kind": spec.kind,
        "n_sessions": spec.n_sessions,
        "seed": spec.seed,
        "playlist_id": spec.playlist_id,
        "n_tracks": spec.n_tracks,
        "durations": list(spec.durations) if spec.durations else None,
        "cap": spec.cap,
        "initial_play_prob": spec.initial_play_prob,
        "transitions": transitions,
    }


def spec_from_json(obj: dict) -> GeneratorSpec:
    try:
        kind = obj["kind"]
        raw = obj["transitions"]
        if kind == "markov1":
            transitions: dict = {
                Outcome(prev): tuple(row) for prev, row in raw.items()
            }
        elif kind == "markov_pos":
            transitions = {
                int(pos): {Outcome(prev): tuple(row) for prev, row in rows.items()}
                for pos, rows in raw.items()
            }
        elif kind == "order2":
            transitions = {}
            for key, row in raw.items():
                a, b = key.split(",")
                prev2 = None if a == "none" else Outcome(a)
                transitions[(prev2, Outcome(b))] = tuple(row)
        else:
            raise SchemaError(f"unknown generator kind {kind!r}")
        durations = obj.get("durations")
        return GeneratorSpec(
            kind=kind,
            n_sessions=int(obj["n_sessions"]),
            seed=int(obj["seed"]),
            transitions=transitions,
            playlist_id=str(obj.get("playlist_id", "synthetic")),
            n_tracks=int(obj.get("n_tracks", 13)),
            durations=tuple(float(d) for d in durations) if durations else None,
            cap=int(obj.get("cap", DEFAULT_CAP)),
            initial_play_prob=float(obj.get("initial_play_prob", 0.65)),
        )
    except (KeyError, ValueError) as exc:
        raise SchemaError(f"bad generator spec: {exc}") from None
