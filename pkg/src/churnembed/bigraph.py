"""Play-history storage, per-day bipartite snapshots, and churn labels.

The observed history is a day-indexed series of attributed bipartite graphs.
An edge (u, v) exists at day t when the player has a play record for the game
inside the window [t+1, t+T]. The label of an existing edge at day t concerns
its presence at day t+1; near the end of the observation period that label can
be undeterminable, which is recorded as right censoring (delta = 0).
"""

from __future__ import annotations

import bisect
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .errors import ContractError, DayRangeError, DimensionError, NotFoundError


class NodeKind(Enum):
    PLAYER = "player"
    GAME = "game"


@dataclass(frozen=True, order=True)
class NodeId:
    kind: NodeKind
    index: int

    def __post_init__(self):
        if self.index < 0:
            raise ContractError(f"node index must be non-negative, got {self.index}")


def player(index: int) -> NodeId:
    return NodeId(NodeKind.PLAYER, index)


def game(index: int) -> NodeId:
    return NodeId(NodeKind.GAME, index)


@dataclass(frozen=True)
class PlayRecord:
    player: NodeId
    game: NodeId
    day: int

    def __post_init__(self):
        if self.player.kind is not NodeKind.PLAYER or self.game.kind is not NodeKind.GAME:
            raise ContractError("play record endpoints must be (player, game)")


@dataclass(frozen=True, order=True)
class EdgeKey:
    player: NodeId
    game: NodeId

    def __post_init__(self):
        if self.player.kind is not NodeKind.PLAYER or self.game.kind is not NodeKind.GAME:
            raise ContractError("edge endpoints must be (player, game)")


class Label(Enum):
    CHURNED = "churned"
    RETAINED = "retained"
    CENSORED = "censored"


@dataclass(frozen=True)
class LabelOutcome:
    """Outcome of labelling an edge at a day.

    ``e_next`` is the edge-existence indicator one day later: 1 for retained,
    0 for churned, None when censored. ``delta`` is 1 exactly when the label
    is determinable inside the observation period.
    """

    label: Label
    delta: int
    e_next: int | None

    def __post_init__(self):
        censored = self.label is Label.CENSORED
        if censored != (self.delta == 0) or censored != (self.e_next is None):
            raise ContractError("censoring fields are inconsistent")


class FeatureTable:
    """Per-day node feature matrices with a constant fallback.

    Holds one base matrix (n_nodes, dim) used for every day without an
    explicit override. Overrides share the base shape.
    """

    def __init__(self, base: np.ndarray, overrides: dict[int, np.ndarray] | None = None):
        base = np.asarray(base, dtype=float)
        if base.ndim != 2:
            raise DimensionError("feature table base must be 2-D (nodes x dim)")
        if not np.all(np.isfinite(base)):
            raise ContractError("feature values must be finite")
        self.base = base
        self.overrides: dict[int, np.ndarray] = {}
        for day, mat in (overrides or {}).items():
            self.set_day(day, mat)

    @property
    def n_nodes(self) -> int:
        return self.base.shape[0]

    @property
    def dim(self) -> int:
        return self.base.shape[1]

    def set_day(self, day: int, mat: np.ndarray) -> None:
        mat = np.asarray(mat, dtype=float)
        if mat.shape != self.base.shape:
            raise DimensionError(f"override for day {day} has shape {mat.shape}, expected {self.base.shape}")
        if not np.all(np.isfinite(mat)):
            raise ContractError("feature values must be finite")
        self.overrides[day] = mat

    def features_on(self, day: int) -> np.ndarray:
        """Feature matrix valid on ``day``."""
        return self.overrides.get(day, self.base)


@dataclass
class Snapshot:
    """One day's attributed bipartite graph, materialized for fast walks."""

    day: int
    edges: tuple[tuple[int, int], ...]          # sorted (player_idx, game_idx)
    player_adj: dict[int, list[int]]            # player -> sorted game indices
    game_adj: dict[int, list[int]]              # game -> sorted player indices
    player_feats: np.ndarray                    # (n_players, n_u)
    game_feats: np.ndarray                      # (n_games, n_v)

    def has_edge(self, player_idx: int, game_idx: int) -> bool:
        games = self.player_adj.get(player_idx)
        if games is None:
            return False
        i = bisect.bisect_left(games, game_idx)
        return i < len(games) and games[i] == game_idx


class SnapshotSeries:
    """The observed play history plus node features over [t0, t_end].

    Read-only after construction. ``T`` is the churn window length in days.
    """

    def __init__(
        self,
        t0: int,
        t_end: int,
        T: int,
        records: list[PlayRecord],
        player_features: FeatureTable,
        game_features: FeatureTable,
    ):
        if t0 > t_end:
            raise ContractError(f"t0={t0} must not exceed t_end={t_end}")
        if T < 1:
            raise ContractError(f"churn window T must be >= 1, got {T}")
        self.t0 = t0
        self.t_end = t_end
        self.T = T
        self.player_features = player_features
        self.game_features = game_features
        self.n_players = player_features.n_nodes
        self.n_games = game_features.n_nodes

        play_days: dict[tuple[int, int], list[int]] = {}
        for rec in records:
            if not (t0 <= rec.day <= t_end):
                raise DayRangeError(f"record day {rec.day} outside [{t0}, {t_end}]")
            if rec.player.index >= self.n_players:
                raise ContractError(f"player index {rec.player.index} not covered by feature table")
            if rec.game.index >= self.n_games:
                raise ContractError(f"game index {rec.game.index} not covered by feature table")
            play_days.setdefault((rec.player.index, rec.game.index), []).append(rec.day)
        self._play_days = {
            pair: sorted(set(days)) for pair, days in sorted(play_days.items())
        }
        self._edges_by_day: dict[int, list[tuple[int, int]]] | None = None

    # -- raw record queries -------------------------------------------------

    def play_days(self, edge: EdgeKey) -> list[int]:
        return self._play_days.get((edge.player.index, edge.game.index), [])

    def has_play_in(self, edge: EdgeKey, lo: int, hi: int) -> bool:
        """True when the pair has a play record with day in [lo, hi]."""
        days = self.play_days(edge)
        i = bisect.bisect_left(days, lo)
        return i < len(days) and days[i] <= hi

    # -- per-day edge sets ----------------------------------------------------

    def _build_edge_index(self) -> dict[int, list[tuple[int, int]]]:
        by_day: dict[int, set[tuple[int, int]]] = {}
        for pair, days in self._play_days.items():
            covered: set[int] = set()
            for p in days:
                lo = max(self.t0, p - self.T)
                hi = min(self.t_end, p - 1)
                covered.update(range(lo, hi + 1))
            for t in covered:
                by_day.setdefault(t, set()).add(pair)
        return {t: sorted(pairs) for t, pairs in by_day.items()}

    def edges_at(self, t: int) -> list[tuple[int, int]]:
        """Sorted (player_idx, game_idx) pairs forming E^(t)."""
        self._check_day(t)
        if self._edges_by_day is None:
            self._edges_by_day = self._build_edge_index()
        return self._edges_by_day.get(t, [])

    def snapshot_at(self, t: int) -> Snapshot:
        edges = tuple(self.edges_at(t))
        player_adj: dict[int, list[int]] = {}
        game_adj: dict[int, list[int]] = {}
        for u, v in edges:
            player_adj.setdefault(u, []).append(v)
            game_adj.setdefault(v, []).append(u)
        return Snapshot(
            day=t,
            edges=edges,
            player_adj=player_adj,
            game_adj=game_adj,
            player_feats=self.player_features.features_on(t),
            game_feats=self.game_features.features_on(t),
        )

    def _check_day(self, t: int) -> None:
        if not (self.t0 <= t <= self.t_end):
            raise DayRangeError(f"day {t} outside series range [{self.t0}, {self.t_end}]")


# -- label operations ----------------------------------------------------------


def edge_exists(series: SnapshotSeries, edge: EdgeKey, t: int) -> int:
    """Edge indicator e_uv^(t): 1 iff a play record falls in [t+1, t+T]."""
    series._check_day(t)
    return int(series.has_play_in(edge, t + 1, t + series.T))


def _classify(series: SnapshotSeries, edge: EdgeKey, t: int) -> LabelOutcome:
    # Label of day t concerns existence at t+1, i.e. plays in [t+2, t+1+T].
    if series.has_play_in(edge, t + 2, t + 1 + series.T):
        return LabelOutcome(Label.RETAINED, delta=1, e_next=1)
    if t + 1 + series.T <= series.t_end:
        return LabelOutcome(Label.CHURNED, delta=1, e_next=0)
    return LabelOutcome(Label.CENSORED, delta=0, e_next=None)


def churn_label(series: SnapshotSeries, edge: EdgeKey, t: int) -> LabelOutcome:
    """Label an existing edge at day t; censored when the window overruns."""
    series._check_day(t)
    if not edge_exists(series, edge, t):
        raise ContractError(f"churn_label called on non-edge {edge} at day {t}")
    return _classify(series, edge, t)


def label_determinable(series: SnapshotSeries, edge: EdgeKey, t: int) -> int:
    """Censoring indicator delta for (edge, t), defined for every day.

    1 when the day-t label is determinable: either a later play pins the edge
    as retained, or the full window [t+2, t+1+T] sits inside the observation.
    Unlike churn_label this does not require the edge to exist at t.
    """
    series._check_day(t)
    return _classify(series, edge, t).delta


def last_observed_timestamp(series: SnapshotSeries, edge: EdgeKey) -> int:
    """Largest day with a determinable label for the edge (t_uv).

    Raises NotFoundError when no day in [t0, t_end] is uncensored.
    """
    for t in range(series.t_end, series.t0 - 1, -1):
        if _classify(series, edge, t).delta == 1:
            return t
    raise NotFoundError(f"edge {edge} has no uncensored day in [{series.t0}, {series.t_end}]")
