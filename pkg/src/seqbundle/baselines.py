"""Count-based baselines: first-order Markov chains and a zero-order model.

All probability rows are ordered (SKIP, PLAY, REPLAY). Ties in an argmax
break toward the earliest outcome in that order.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .domain import (
    DEFAULT_CAP,
    OUTCOME_INDEX,
    OUTCOME_ORDER,
    Event,
    Outcome,
    Playlist,
    Session,
)
from .errors import ConstraintViolation, SchemaError

log = logging.getLogger(__name__)

N_OUTCOMES = 3
ROW_SUM_TOL = 1e-9


def feasible_cells(cap: int = DEFAULT_CAP) -> np.ndarray:
    """(3, 3) bool mask of structurally possible prev -> next transitions.

    A skipped track cannot be replayed, so SKIP -> REPLAY is always closed.
    At cap 2 a replay exhausts the track's budget, closing REPLAY -> REPLAY
    too; with a larger cap the chain cannot tell, so the cell stays open.
    """
    mask = np.ones((N_OUTCOMES, N_OUTCOMES), dtype=bool)
    mask[OUTCOME_INDEX[Outcome.SKIP], OUTCOME_INDEX[Outcome.REPLAY]] = False
    if cap == 2:
        mask[OUTCOME_INDEX[Outcome.REPLAY], OUTCOME_INDEX[Outcome.REPLAY]] = False
    return mask


def max_probability(probs: Sequence[float]) -> Outcome:
    """Argmax outcome; exact ties resolve to the earliest declared outcome."""
    arr = np.asarray(probs, dtype=np.float64)
    if arr.shape != (N_OUTCOMES,):
        raise ConstraintViolation(f"expected 3 probabilities, got shape {arr.shape}")
    return OUTCOME_ORDER[int(np.argmax(arr))]


@dataclass
class TransitionMatrix:
    """Row-stochastic 3x3 transition probabilities with raw counts kept.

    A row that never occurred (and got no smoothing) is all zero and reported
    as structurally empty; every other row must sum to 1 within 1e-9.
    """

    probs: np.ndarray
    counts: np.ndarray
    cap: int = DEFAULT_CAP
    position: int | None = None  # target event position for pMC, None for MC

    def __post_init__(self) -> None:
        self.probs = np.asarray(self.probs, dtype=np.float64)
        self.counts = np.asarray(self.counts, dtype=np.float64)
        if self.probs.shape != (N_OUTCOMES, N_OUTCOMES):
            raise ConstraintViolation(
                f"transition matrix must be 3x3, got {self.probs.shape}"
            )
        mask = feasible_cells(self.cap)
        if np.any(self.probs[~mask] != 0.0):
            raise ConstraintViolation(
                "transition matrix puts mass on an infeasible cell"
            )
        sums = self.probs.sum(axis=1)
        for i, s in enumerate(sums):
            if s != 0.0 and abs(s - 1.0) > ROW_SUM_TOL:
                raise ConstraintViolation(
                    f"row {OUTCOME_ORDER[i].value!r} sums to {s!r}, expected 1"
                )

    def row(self, prev: Outcome) -> np.ndarray:
        return self.probs[OUTCOME_INDEX[prev]]

    def is_row_empty(self, prev: Outcome) -> bool:
        return float(self.probs[OUTCOME_INDEX[prev]].sum()) == 0.0


@dataclass
class MarkovModel:
    """First-order chain over outcomes, optionally position-dependent.

    kind "mc" holds one pooled matrix; kind "pmc" holds one matrix per target
    event position (the transition INTO position j, j >= 2). ``marginal`` is
    the playlist's pooled outcome distribution, used as the fallback row.
    """

    kind: str
    playlist_id: str
    marginal: np.ndarray
    matrix: TransitionMatrix | None = None
    matrices: dict[int, TransitionMatrix] = field(default_factory=dict)
    cap: int = DEFAULT_CAP
    smoothing: float = 0.0

    def __post_init__(self) -> None:
        if self.kind not in ("mc", "pmc"):
            raise ConstraintViolation(f"unknown Markov kind {self.kind!r}")
        self.marginal = np.asarray(self.marginal, dtype=np.float64)
        if abs(float(self.marginal.sum()) - 1.0) > ROW_SUM_TOL:
            raise ConstraintViolation("marginal distribution must sum to 1")

    @property
    def n_parameters(self) -> int:
        mats = [self.matrix] if self.kind == "mc" else list(self.matrices.values())
        return sum(int(feasible_cells(m.cap).sum()) for m in mats if m is not None)


def _transition_counts(
    sessions: Sequence[Session], position: int | None, cap: int
) -> np.ndarray:
    counts = np.zeros((N_OUTCOMES, N_OUTCOMES), dtype=np.float64)
    for session in sessions:
        outcomes = session.outcomes()
        for j in range(1, len(outcomes)):
            if position is not None and j + 1 != position:
                continue
            counts[OUTCOME_INDEX[outcomes[j - 1]], OUTCOME_INDEX[outcomes[j]]] += 1
    return counts


def _normalize(counts: np.ndarray, smoothing: float, cap: int) -> np.ndarray:
    mask = feasible_cells(cap)
    work = counts.copy()
    if smoothing > 0:
        work = work + smoothing * mask
    work[~mask] = 0.0
    probs = np.zeros_like(work)
    for i in range(N_OUTCOMES):
        total = work[i].sum()
        if total > 0:
            probs[i] = work[i] / total
    return probs


def _marginal(sessions: Sequence[Session]) -> np.ndarray:
    counts = np.zeros(N_OUTCOMES, dtype=np.float64)
    for session in sessions:
        for outcome in session.outcomes():
            counts[OUTCOME_INDEX[outcome]] += 1
    total = counts.sum()
    if total == 0:
        raise ConstraintViolation("cannot fit on sessions with no events")
    return counts / total


def fit_markov(
    sessions: Sequence[Session],
    playlist: Playlist,
    position_dependent: bool = False,
    smoothing: float = 0.0,
    cap: int = DEFAULT_CAP,
) -> MarkovModel:
    """Fit MC (pooled) or pMC (per target position) transition probabilities.

    Smoothing adds the given pseudo-count to feasible cells only; infeasible
    cells stay exactly zero.
    """
    if not sessions:
        raise ConstraintViolation("cannot fit a Markov model on zero sessions")
    if smoothing < 0:
        raise ConstraintViolation(f"smoothing must be >= 0, got {smoothing}")
    marginal = _marginal(sessions)
    if not position_dependent:
        counts = _transition_counts(sessions, position=None, cap=cap)
        matrix = TransitionMatrix(
            probs=_normalize(counts, smoothing, cap), counts=counts, cap=cap
        )
        return MarkovModel(
            kind="mc",
            playlist_id=playlist.playlist_id,
            marginal=marginal,
            matrix=matrix,
            cap=cap,
            smoothing=smoothing,
        )
    max_len = max(len(s) for s in sessions)
    matrices: dict[int, TransitionMatrix] = {}
    for position in range(2, max_len + 1):
        counts = _transition_counts(sessions, position=position, cap=cap)
        matrices[position] = TransitionMatrix(
            probs=_normalize(counts, smoothing, cap),
            counts=counts,
            cap=cap,
            position=position,
        )
    return MarkovModel(
        kind="pmc",
        playlist_id=playlist.playlist_id,
        marginal=marginal,
        matrices=matrices,
        cap=cap,
        smoothing=smoothing,
    )


def predict_markov(
    model: MarkovModel, prev: Outcome, position: int | None = None
) -> np.ndarray:
    """Probability row for the next outcome given the previous one.

    Structurally empty rows (and pMC positions that were never fitted) fall
    back to the playlist marginal, with a warning so silent degradation is
    visible in logs.
    """
    if model.kind == "mc":
        matrix = model.matrix
        assert matrix is not None
    else:
        if position is None:
            raise ConstraintViolation("pMC prediction requires a position")
        matrix = model.matrices.get(position)
        if matrix is None:
            log.warning(
                "pMC for playlist %r has no matrix for position %d; "
                "falling back to the playlist marginal",
                model.playlist_id,
                position,
            )
            return model.marginal.copy()
    if matrix.is_row_empty(prev):
        log.warning(
            "%s row %r for playlist %r is structurally empty; "
            "falling back to the playlist marginal",
            model.kind,
            prev.value,
            model.playlist_id,
        )
        return model.marginal.copy()
    return matrix.row(prev).copy()


@dataclass
class ZeroOrderTable:
    """Per-track play-count marginals: probs[i, c] = P(track i+1 consumed c times).

    Each row sums to 1 over counts 0..cap; counts[i] is the number of
    sessions in which track i+1 was observed at all.
    """

    playlist_id: str
    probs: np.ndarray
    counts: np.ndarray
    cap: int = DEFAULT_CAP

    def __post_init__(self) -> None:
        self.probs = np.asarray(self.probs, dtype=np.float64)
        self.counts = np.asarray(self.counts, dtype=np.float64)
        if self.probs.ndim != 2 or self.probs.shape[1] != self.cap + 1:
            raise ConstraintViolation(
                f"zero-order table must be (n_tracks, cap+1), got {self.probs.shape}"
            )
        for i, s in enumerate(self.probs.sum(axis=1)):
            if self.counts[i] > 0 and abs(float(s) - 1.0) > ROW_SUM_TOL:
                raise ConstraintViolation(f"track {i + 1} row sums to {s!r}")

    @property
    def n_tracks(self) -> int:
        return self.probs.shape[0]

    def p(self, track_position: int, count: int) -> float:
        return float(self.probs[track_position - 1, count])

    def p_played(self, track_position: int) -> float:
        return float(self.probs[track_position - 1, 1:].sum())

    def p_replayed(self, track_position: int) -> float:
        return float(self.probs[track_position - 1, 2:].sum())

    def expected_plays(self, track_position: int) -> float:
        """Mean units consumed for a track, implied by the table."""
        row = self.probs[track_position - 1]
        return float(np.dot(row, np.arange(self.cap + 1)))


def fit_zero_order(
    sessions: Sequence[Session], playlist: Playlist, cap: int = DEFAULT_CAP
) -> ZeroOrderTable:
    """Empirical play-count frequencies per track position.

    A track only enters a session's tally if the session reached it (always
    true for full-mode data, not for truncated data).
    """
    if not sessions:
        raise ConstraintViolation("cannot fit a zero-order table on zero sessions")
    n = len(playlist)
    tallies = np.zeros((n, cap + 1), dtype=np.float64)
    seen = np.zeros(n, dtype=np.float64)
    for session in sessions:
        counts: dict[int, int] = {}
        for event in session.events:
            unit = 0 if event.outcome is Outcome.SKIP else 1
            counts[event.track_position] = counts.get(event.track_position, 0) + unit
        for pos, c in counts.items():
            if c > cap:
                raise ConstraintViolation(
                    f"session {session.session_id!r}: track {pos} consumed "
                    f"{c} units, cap is {cap}"
                )
            tallies[pos - 1, c] += 1
            seen[pos - 1] += 1
    probs = np.zeros_like(tallies)
    nonzero = seen > 0
    probs[nonzero] = tallies[nonzero] / seen[nonzero, None]
    return ZeroOrderTable(
        playlist_id=playlist.playlist_id, probs=probs, counts=seen, cap=cap
    )


# ---------------------------------------------------------------------------
# session-level predictors (shared interface with the neural models)


@dataclass
class MarkovPredictor:
    """Teacher-forced per-event probability rows from a fitted Markov model."""

    model: MarkovModel

    @property
    def playlist_id(self) -> str:
        return self.model.playlist_id

    def predict_session(self, session: Session) -> np.ndarray:
        outcomes = session.outcomes()
        probs = np.zeros((len(outcomes), N_OUTCOMES), dtype=np.float64)
        probs[0] = self.model.marginal  # position 1 is never scored
        for j in range(1, len(outcomes)):
            probs[j] = predict_markov(self.model, outcomes[j - 1], position=j + 1)
        return probs

    def next_probs(self, events: Sequence[Event]) -> np.ndarray:
        """Probability row for the event that would follow the given prefix."""
        if not events:
            return self.model.marginal.copy()
        return predict_markov(
            self.model, events[-1].outcome, position=len(events) + 1
        )


@dataclass
class ZeroOrderPredictor:
    """Event-level distribution derived from per-track play-count marginals.

    At the decision after track i (count x_i), the replay probability is the
    table's P(x_i >= 2 | x_i >= 1) when a replay is feasible; the remaining
    mass follows the next track's skip/play marginals.
    """

    table: ZeroOrderTable

    @property
    def playlist_id(self) -> str:
        return self.table.playlist_id

    def _row_after(self, track: int, count: int) -> np.ndarray:
        """Row for the decision taken after the given track holds the given count."""
        if track == 0:
            p1_skip = self.table.p(1, 0)
            return np.array((p1_skip, 1.0 - p1_skip, 0.0))
        r = 0.0
        if 1 <= count < self.table.cap:
            played = self.table.p_played(track)
            if played > 0:
                r = self.table.p_replayed(track) / played
        if track + 1 <= self.table.n_tracks:
            skip = self.table.p(track + 1, 0)
            return np.array(((1 - r) * skip, (1 - r) * (1 - skip), r))
        return np.array((1 - r, 0.0, r))

    def predict_session(self, session: Session) -> np.ndarray:
        out = np.zeros((len(session.events), N_OUTCOMES), dtype=np.float64)
        track = 0
        count = 0
        for j, event in enumerate(session.events):
            out[j] = self._row_after(track, count)
            if event.outcome is Outcome.REPLAY:
                count += 1
            else:
                track = event.track_position
                count = 0 if event.outcome is Outcome.SKIP else 1
        return out

    def next_probs(self, events: Sequence[Event]) -> np.ndarray:
        """Probability row for the event that would follow the given prefix."""
        track = 0
        count = 0
        for event in events:
            if event.outcome is Outcome.REPLAY:
                count += 1
            else:
                track = event.track_position
                count = 0 if event.outcome is Outcome.SKIP else 1
        return self._row_after(track, count)


# ---------------------------------------------------------------------------
# serialization


def markov_to_json(model: MarkovModel) -> dict:
    obj: dict = {
        "type": model.kind,
        "playlist_id": model.playlist_id,
        "cap": model.cap,
        "smoothing": model.smoothing,
        "marginal": model.marginal.tolist(),
    }
    if model.kind == "mc":
        assert model.matrix is not None
        obj["matrix"] = model.matrix.probs.tolist()
        obj["counts"] = model.matrix.counts.tolist()
    else:
        obj["matrices"] = {
            str(pos): m.probs.tolist() for pos, m in sorted(model.matrices.items())
        }
        obj["counts"] = {
            str(pos): m.counts.tolist() for pos, m in sorted(model.matrices.items())
        }
    return obj


def zero_order_to_json(table: ZeroOrderTable) -> dict:
    return {
        "type": "zero",
        "playlist_id": table.playlist_id,
        "cap": table.cap,
        "probs": table.probs.tolist(),
        "counts": table.counts.tolist(),
    }


def baseline_from_json(obj: dict) -> MarkovModel | ZeroOrderTable:
    kind = obj.get("type")
    if kind == "zero":
        return ZeroOrderTable(
            playlist_id=obj["playlist_id"],
            probs=np.asarray(obj["probs"], dtype=np.float64),
            counts=np.asarray(obj["counts"], dtype=np.float64),
            cap=int(obj["cap"]),
        )
    if kind == "mc":
        return MarkovModel(
            kind="mc",
            playlist_id=obj["playlist_id"],
            marginal=np.asarray(obj["marginal"], dtype=np.float64),
            matrix=TransitionMatrix(
                probs=np.asarray(obj["matrix"], dtype=np.float64),
                counts=np.asarray(obj["counts"], dtype=np.float64),
                cap=int(obj["cap"]),
            ),
            cap=int(obj["cap"]),
            smoothing=float(obj.get("smoothing", 0.0)),
        )
    if kind == "pmc":
        cap = int(obj["cap"])
        matrices = {
            int(pos): TransitionMatrix(
                probs=np.asarray(probs, dtype=np.float64),
                counts=np.asarray(obj["counts"][pos], dtype=np.float64),
                cap=cap,
                position=int(pos),
            )
            for pos, probs in obj["matrices"].items()
        }
        return MarkovModel(
            kind="pmc",
            playlist_id=obj["playlist_id"],
            marginal=np.asarray(obj["marginal"], dtype=np.float64),
            matrices=matrices,
            cap=cap,
            smoothing=float(obj.get("smoothing", 0.0)),
        )
    raise SchemaError(f"unknown baseline model type {kind!r}")
