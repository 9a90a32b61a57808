"""Holdout evaluation: hit rates, confusion, demand rates, and dataset summaries.

All predictors expose predict_session(session) -> (n_events, 3) probability
rows ordered (SKIP, PLAY, REPLAY); the row at index j is the prediction for
event j given everything before it. The first event has no history and is
never scored.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np

from .dataio import Dataset, Split, event_listening_time
from .domain import (
    DEFAULT_CAP,
    OUTCOME_INDEX,
    OUTCOME_ORDER,
    Event,
    Outcome,
    Playlist,
    Session,
    advance_state,
    initial_state,
    is_terminal,
    session_counts,
)
from .errors import ConstraintViolation, MetricUndefinedError

log = logging.getLogger(__name__)

N_OUTCOMES = 3
PROB_ROW_TOL = 1e-6


def _check_prob_rows(probs: np.ndarray, n_events: int, where: str) -> np.ndarray:
    arr = np.asarray(probs, dtype=np.float64)
    if arr.shape != (n_events, N_OUTCOMES):
        raise ConstraintViolation(
            f"{where}: expected ({n_events}, 3) probabilities, got {arr.shape}"
        )
    if not np.all(np.isfinite(arr)) or np.any(arr < 0):
        raise ConstraintViolation(f"{where}: probabilities must be finite and >= 0")
    sums = arr.sum(axis=1)
    if np.any(np.abs(sums - 1.0) > PROB_ROW_TOL):
        worst = float(np.abs(sums - 1.0).max())
        raise ConstraintViolation(
            f"{where}: probability rows must sum to 1 (worst deviation {worst:.3e})"
        )
    return arr


def first_max_index(row: np.ndarray) -> int:
    """Index of the largest entry; exact ties go to the earliest outcome."""
    return int(np.argmax(row))


# ---------------------------------------------------------------------------
# scalar metrics


def hit_rate_from_counts(hits: int, total: int) -> float:
    if total <= 0:
        raise MetricUndefinedError("hit rate undefined with zero scored events")
    return hits / total


def confusion_normalized(counts: np.ndarray) -> np.ndarray:
    """Rows are actual outcomes, columns predicted; each non-empty row sums to 1."""
    arr = np.asarray(counts, dtype=np.float64)
    if arr.shape != (N_OUTCOMES, N_OUTCOMES):
        raise ConstraintViolation(f"confusion matrix must be 3x3, got {arr.shape}")
    out = np.zeros_like(arr)
    for i in range(N_OUTCOMES):
        total = arr[i].sum()
        if total > 0:
            out[i] = arr[i] / total
    return out


def pseudo_r2(actual: Sequence[float], predicted: Sequence[float]) -> float:
    """1 - SS_res / SS_tot around the mean of the actual values.

    Can be arbitrarily negative for a bad predictor; undefined when the
    actual values are constant.
    """
    y = np.asarray(actual, dtype=np.float64)
    f = np.asarray(predicted, dtype=np.float64)
    if y.shape != f.shape or y.ndim != 1 or y.size < 2:
        raise ConstraintViolation("pseudo_r2 needs two equal-length vectors, size >= 2")
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    if ss_tot == 0.0:
        raise MetricUndefinedError("pseudo R^2 undefined for constant actual values")
    ss_res = float(np.sum((y - f) ** 2))
    return 1.0 - ss_res / ss_tot


def hit_rate_cdf(values: Sequence[float]) -> tuple[np.ndarray, np.ndarray]:
    """Empirical CDF of per-group hit rates: sorted unique values and F(x)."""
    arr = np.asarray(values, dtype=np.float64)
    if arr.size == 0:
        raise MetricUndefinedError("CDF undefined for an empty sample")
    xs = np.unique(arr)
    fractions = np.searchsorted(np.sort(arr), xs, side="right") / arr.size
    return xs, fractions


def cdf_dominates(
    better: Sequence[float], worse: Sequence[float], tol: float = 1e-12
) -> bool:
    """True when the first sample's CDF lies at or below the second's everywhere
    (higher hit rates stochastically dominate)."""
    a = np.asarray(better, dtype=np.float64)
    b = np.asarray(worse, dtype=np.float64)
    if a.size == 0 or b.size == 0:
        raise MetricUndefinedError("dominance undefined for an empty sample")
    grid = np.unique(np.concatenate([a, b]))
    fa = np.searchsorted(np.sort(a), grid, side="right") / a.size
    fb = np.searchsorted(np.sort(b), grid, side="right") / b.size
    return bool(np.all(fa <= fb + tol))


# ---------------------------------------------------------------------------
# per-playlist evaluation


@dataclass(frozen=True, slots=True)
class DemandRates:
    """Per-track plays per listener, actual vs predicted, tracks 2..n.

    The first track is excluded: the model never predicts the first event.
    Rates are means over the sessions that reached the track; ``coverage``
    records those denominators.
    """

    track_positions: tuple[int, ...]
    actual: tuple[float, ...]
    predicted: tuple[float, ...]
    coverage: tuple[int, ...]


@dataclass(frozen=True, slots=True)
class EvaluationResult:
    playlist_id: str
    n_sessions: int
    n_scored: int
    hits: int
    confusion_counts: np.ndarray  # (3, 3), rows actual, columns predicted
    position_hits: tuple[tuple[int, int, int], ...]  # (position, hits, total)
    demand: DemandRates

    @property
    def hit_rate(self) -> float:
        return hit_rate_from_counts(self.hits, self.n_scored)

    def position_rates(self) -> tuple[tuple[int, float], ...]:
        return tuple((pos, h / t) for pos, h, t in self.position_hits if t > 0)


def _demand_realized(
    sessions: Sequence[Session],
    prob_rows: Sequence[np.ndarray],
    playlist: Playlist,
    cap: int,
) -> DemandRates:
    """Expected plays per track along the realized event paths.

    A track's predicted demand collects P(PLAY) at its arrival event plus
    P(REPLAY) at every later decision where that track is the feasible replay
    target (count in [1, cap)). The actual demand is the session's final play
    count. Denominators count the sessions that reached the track.
    """
    n = len(playlist)
    actual_sum = np.zeros(n, dtype=np.float64)
    predicted_sum = np.zeros(n, dtype=np.float64)
    coverage = np.zeros(n, dtype=np.int64)
    for session, probs in zip(sessions, prob_rows):
        counts = session_counts(session, n)
        reached = session.last_position
        coverage[:reached] += 1
        actual_sum[:reached] += np.asarray(counts[:reached], dtype=np.float64)
        track = 0
        count = 0
        for j, event in enumerate(session.events):
            if j > 0:
                if track >= 1 and 1 <= count < cap:
                    predicted_sum[track - 1] += probs[j, OUTCOME_INDEX[Outcome.REPLAY]]
                if event.outcome is not Outcome.REPLAY:
                    # the arrival event of event.track_position, exactly once
                    predicted_sum[event.track_position - 1] += probs[
                        j, OUTCOME_INDEX[Outcome.PLAY]
                    ]
            if event.outcome is Outcome.REPLAY:
                count += 1
            else:
                track = event.track_position
                count = 0 if event.outcome is Outcome.SKIP else 1
    positions = tuple(range(2, n + 1))
    actual = []
    predicted = []
    cover = []
    for pos in positions:
        c = int(coverage[pos - 1])
        cover.append(c)
        if c > 0:
            actual.append(float(actual_sum[pos - 1] / c))
            predicted.append(float(predicted_sum[pos - 1] / c))
        else:
            actual.append(0.0)
            predicted.append(0.0)
    return DemandRates(
        track_positions=positions,
        actual=tuple(actual),
        predicted=tuple(predicted),
        coverage=tuple(cover),
    )


def _sample_outcome(row: np.ndarray, u: float) -> Outcome:
    edge = 0.0
    for idx in range(N_OUTCOMES - 1):
        edge += row[idx]
        if u < edge:
            return OUTCOME_ORDER[idx]
    return OUTCOME_ORDER[N_OUTCOMES - 1]


def rollout_session(
    predictor,
    playlist: Playlist,
    first_row: np.ndarray,
    rng: np.random.Generator,
    cap: int = DEFAULT_CAP,
) -> Session:
    """Sample one session from a predictor's own conditionals.

    Infeasible outcomes are zeroed and the row renormalized; when no feasible
    outcome has mass left the session ends at the current state.
    """
    n = len(playlist)
    events: list[Event] = []
    state = initial_state(cap)
    first = _sample_outcome(np.asarray(first_row, dtype=np.float64), rng.random())
    events.append(Event(track_position=1, outcome=first))
    state = advance_state(state, first, n)
    max_events = n * cap + 1
    while not is_terminal(state, n) and len(events) < max_events:
        row = np.asarray(predictor.next_probs(tuple(events)), dtype=np.float64).copy()
        if state.covered >= n:
            row[OUTCOME_INDEX[Outcome.SKIP]] = 0.0
            row[OUTCOME_INDEX[Outcome.PLAY]] = 0.0
        if not (state.covered >= 1 and 1 <= state.last_count < cap):
            row[OUTCOME_INDEX[Outcome.REPLAY]] = 0.0
        total = row.sum()
        if total <= 0.0:
            break
        outcome = _sample_outcome(row / total, rng.random())
        state = advance_state(state, outcome, n)
        events.append(
            Event(track_position=state.covered, outcome=outcome)
        )
    return Session(
        session_id="rollout", playlist_id=playlist.playlist_id, events=tuple(events)
    )


def _demand_expected(
    predictor,
    sessions: Sequence[Session],
    playlist: Playlist,
    cap: int,
    n_rollouts: int,
    seed: int,
) -> DemandRates:
    """Monte Carlo demand: roll sessions from the model's own conditionals.

    First events are drawn from the holdout's empirical first-outcome
    frequencies; the actual side is still computed from the holdout sessions.
    """
    if n_rollouts < 1:
        raise ConstraintViolation(f"n_rollouts must be >= 1, got {n_rollouts}")
    n = len(playlist)
    first_counts = np.zeros(N_OUTCOMES, dtype=np.float64)
    for session in sessions:
        first_counts[OUTCOME_INDEX[session.events[0].outcome]] += 1
    first_row = first_counts / first_counts.sum()

    actual_sum = np.zeros(n, dtype=np.float64)
    actual_cover = np.zeros(n, dtype=np.int64)
    for session in sessions:
        counts = session_counts(session, n)
        reached = session.last_position
        actual_cover[:reached] += 1
        actual_sum[:reached] += np.asarray(counts[:reached], dtype=np.float64)

    predicted_sum = np.zeros(n, dtype=np.float64)
    predicted_cover = np.zeros(n, dtype=np.int64)
    rng = np.random.default_rng([seed, 0x5EED])
    for _ in range(n_rollouts):
        rolled = rollout_session(predictor, playlist, first_row, rng, cap=cap)
        counts = session_counts(rolled, n)
        reached = rolled.last_position
        predicted_cover[:reached] += 1
        predicted_sum[:reached] += np.asarray(counts[:reached], dtype=np.float64)

    positions = tuple(range(2, n + 1))
    actual = []
    predicted = []
    cover = []
    for pos in positions:
        ca = int(actual_cover[pos - 1])
        cp = int(predicted_cover[pos - 1])
        cover.append(ca)
        actual.append(float(actual_sum[pos - 1] / ca) if ca > 0 else 0.0)
        predicted.append(float(predicted_sum[pos - 1] / cp) if cp > 0 else 0.0)
    return DemandRates(
        track_positions=positions,
        actual=tuple(actual),
        predicted=tuple(predicted),
        coverage=tuple(cover),
    )


def evaluate_playlist(
    predictor,
    sessions: Sequence[Session],
    playlist: Playlist,
    cap: int = DEFAULT_CAP,
    demand_mode: str = "realized",
    n_rollouts: int = 200,
    seed: int = 0,
) -> EvaluationResult:
    """Score one predictor on one playlist's holdout sessions.

    Events at positions >= 2 are scored with the most-probable-outcome rule.
    """
    if not sessions:
        raise ConstraintViolation(
            f"no sessions to evaluate for playlist {playlist.playlist_id!r}"
        )
    if demand_mode not in ("realized", "expected"):
        raise ConstraintViolation(f"unknown demand mode {demand_mode!r}")
    confusion = np.zeros((N_OUTCOMES, N_OUTCOMES), dtype=np.int64)
    position_hits: dict[int, list[int]] = {}
    hits = 0
    scored = 0
    prob_rows: list[np.ndarray] = []
    for session in sessions:
        probs = _check_prob_rows(
            predictor.predict_session(session),
            len(session.events),
            f"session {session.session_id!r}",
        )
        prob_rows.append(probs)
        outcomes = session.outcomes()
        for j in range(1, len(outcomes)):
            actual_idx = OUTCOME_INDEX[outcomes[j]]
            pred_idx = first_max_index(probs[j])
            confusion[actual_idx, pred_idx] += 1
            scored += 1
            hit = int(pred_idx == actual_idx)
            hits += hit
            bucket = position_hits.setdefault(j + 1, [0, 0])
            bucket[0] += hit
            bucket[1] += 1
    if demand_mode == "realized":
        demand = _demand_realized(sessions, prob_rows, playlist, cap)
    else:
        demand = _demand_expected(predictor, sessions, playlist, cap, n_rollouts, seed)
    return EvaluationResult(
        playlist_id=playlist.playlist_id,
        n_sessions=len(sessions),
        n_scored=scored,
        hits=hits,
        confusion_counts=confusion,
        position_hits=tuple(
            (pos, h, t) for pos, (h, t) in sorted(position_hits.items())
        ),
        demand=demand,
    )


# ---------------------------------------------------------------------------
# dataset-level evaluation


@dataclass(frozen=True, slots=True)
class EvaluationReport:
    results: tuple[EvaluationResult, ...]
    demand_mode: str

    @property
    def n_scored(self) -> int:
        return sum(r.n_scored for r in self.results)

    @property
    def hits(self) -> int:
        return sum(r.hits for r in self.results)

    @property
    def hit_rate(self) -> float:
        """Pooled over playlists, each scored event weighing the same."""
        return hit_rate_from_counts(self.hits, self.n_scored)

    def confusion_counts(self) -> np.ndarray:
        total = np.zeros((N_OUTCOMES, N_OUTCOMES), dtype=np.int64)
        for r in self.results:
            total += r.confusion_counts
        return total

    def position_rate_values(self) -> tuple[float, ...]:
        """Per-(playlist, position) hit rates, the sample behind the CDF."""
        values: list[float] = []
        for r in self.results:
            values.extend(rate for _, rate in r.position_rates())
        return tuple(values)

    def pooled_demand(self) -> tuple[np.ndarray, np.ndarray]:
        actual: list[float] = []
        predicted: list[float] = []
        for r in self.results:
            for i, c in enumerate(r.demand.coverage):
                if c > 0:
                    actual.append(r.demand.actual[i])
                    predicted.append(r.demand.predicted[i])
        return np.asarray(actual), np.asarray(predicted)

    def demand_pseudo_r2(self) -> float | None:
        actual, predicted = self.pooled_demand()
        if actual.size < 2:
            return None
        try:
            return pseudo_r2(actual, predicted)
        except MetricUndefinedError:
            return None

    def to_jsonable(self) -> dict:
        per_playlist = []
        for r in self.results:
            per_playlist.append(
                {
                    "playlist_id": r.playlist_id,
                    "n_sessions": r.n_sessions,
                    "n_scored": r.n_scored,
                    "hits": r.hits,
                    "hit_rate": r.hit_rate,
                    "confusion_counts": r.confusion_counts.tolist(),
                    "confusion_rates": confusion_normalized(
                        r.confusion_counts
                    ).tolist(),
                    "position_hit_rates": [
                        {"position": pos, "hits": h, "observations": t, "rate": h / t}
                        for pos, h, t in r.position_hits
                    ],
                    "demand": {
                        "track_positions": list(r.demand.track_positions),
                        "actual": list(r.demand.actual),
                        "predicted": list(r.demand.predicted),
                        "coverage": list(r.demand.coverage),
                    },
                }
            )
        xs, fractions = hit_rate_cdf(self.position_rate_values())
        return {
            "demand_mode": self.demand_mode,
            "n_scored": self.n_scored,
            "hits": self.hits,
            "hit_rate": self.hit_rate,
            "confusion_counts": self.confusion_counts().tolist(),
            "confusion_rates": confusion_normalized(self.confusion_counts()).tolist(),
            "outcome_order": [o.value for o in OUTCOME_ORDER],
            "position_rate_cdf": {
                "values": xs.tolist(),
                "cumulative": fractions.tolist(),
            },
            "demand_pseudo_r2": self.demand_pseudo_r2(),
            "playlists": per_playlist,
        }


def evaluate_dataset(
    predictors: Mapping[str, object],
    dataset: Dataset,
    split: Split = Split.TEST,
    cap: int = DEFAULT_CAP,
    demand_mode: str = "realized",
    n_rollouts: int = 200,
    seed: int = 0,
) -> EvaluationReport:
    """Evaluate per-playlist predictors on one split of a dataset.

    ``predictors`` maps playlist id to a fitted predictor. Playlists without
    holdout sessions are skipped with a warning; a playlist with sessions but
    no predictor is an error.
    """
    results: list[EvaluationResult] = []
    for pid in sorted(dataset.playlists):
        sessions = dataset.sessions_for(pid, split)
        if not sessions:
            log.warning("playlist %r has no %s sessions; skipping", pid, split.value)
            continue
        if pid not in predictors:
            raise ConstraintViolation(f"no predictor for playlist {pid!r}")
        results.append(
            evaluate_playlist(
                predictors[pid],
                sessions,
                dataset.playlists[pid],
                cap=cap,
                demand_mode=demand_mode,
                n_rollouts=n_rollouts,
                seed=seed,
            )
        )
    if not results:
        raise ConstraintViolation(f"no playlist had any {split.value} sessions")
    return EvaluationReport(results=tuple(results), demand_mode=demand_mode)


# ---------------------------------------------------------------------------
# dataset summaries


@dataclass(frozen=True, slots=True)
class PlaylistSummary:
    playlist_id: str
    n_tracks: int
    n_sessions: int
    mean_events: float
    mean_listening_seconds: float
    mean_tracks_played: float
    share_skip: float
    share_play: float
    share_replay: float


def summarize_dataset(dataset: Dataset) -> tuple[PlaylistSummary, ...]:
    """Descriptive statistics per playlist over all sessions (both splits)."""
    out: list[PlaylistSummary] = []
    for pid in sorted(dataset.playlists):
        playlist = dataset.playlists[pid]
        sessions = [s for s in dataset.sessions if s.playlist_id == pid]
        if not sessions:
            log.warning("playlist %r has no sessions; skipping summary", pid)
            continue
        n = len(playlist)
        total_events = 0
        total_seconds = 0.0
        total_played = 0
        action_counts = np.zeros(N_OUTCOMES, dtype=np.int64)
        for session in sessions:
            total_events += len(session.events)
            total_seconds += sum(
                event_listening_time(e, playlist) for e in session.events
            )
            counts = session_counts(session, n)
            total_played += sum(1 for c in counts if c >= 1)
            for outcome in session.outcomes():
                action_counts[OUTCOME_INDEX[outcome]] += 1
        n_sessions = len(sessions)
        n_actions = int(action_counts.sum())
        out.append(
            PlaylistSummary(
                playlist_id=pid,
                n_tracks=n,
                n_sessions=n_sessions,
                mean_events=total_events / n_sessions,
                mean_listening_seconds=total_seconds / n_sessions,
                mean_tracks_played=total_played / n_sessions,
                share_skip=action_counts[OUTCOME_INDEX[Outcome.SKIP]] / n_actions,
                share_play=action_counts[OUTCOME_INDEX[Outcome.PLAY]] / n_actions,
                share_replay=action_counts[OUTCOME_INDEX[Outcome.REPLAY]] / n_actions,
            )
        )
    if not out:
        raise ConstraintViolation("dataset has no sessions to summarize")
    return tuple(out)


def summary_to_jsonable(summaries: Iterable[PlaylistSummary]) -> list[dict]:
    return [
        {
            "playlist_id": s.playlist_id,
            "n_tracks": s.n_tracks,
            "n_sessions": s.n_sessions,
            "mean_events": s.mean_events,
            "mean_listening_seconds": s.mean_listening_seconds,
            "mean_tracks_played": s.mean_tracks_played,
            "share_skip": s.share_skip,
            "share_play": s.share_play,
            "share_replay": s.share_replay,
        }
        for s in summaries
    ]
