"""Attributed random walks over the bipartite graph plus similarity edges.

Same-type nodes with cosine similarity above 1 - epsilon are linked by
augmented edges (kept only for the walker, never part of the play graph). A
walker that just moved prev -> curr picks its next node among same-type
candidates around prev: prev itself (weight 1/p), augmented neighbours of prev
(weight sim/q), and nodes at graph distance two from prev that are adjacent to
curr (weight sim/q). Consecutive walk positions are emitted as player-game
context pairs, which need not be real edges.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .bigraph import EdgeKey, NodeId, NodeKind, Snapshot
from .errors import ConfigError, ContractError, VocabularyError

PLAYER = 0
GAME = 1

_KINDS = {PLAYER: NodeKind.PLAYER, GAME: NodeKind.GAME}


@dataclass(frozen=True)
class WalkConfig:
    """Walk and negative-sampling knobs; defaults follow the reference run."""

    epsilon: float = 1.0
    p: float = 1.0
    q: float = 0.05
    walk_len: int = 8
    contexts_per_edge: int = 4
    k_aug: int = 10
    negatives_per_context: int = 5
    unigram_power: float | None = None  # None draws negatives uniformly

    def __post_init__(self):
        if not (0.0 < self.epsilon <= 1.0):
            raise ConfigError(f"epsilon must be in (0, 1], got {self.epsilon}")
        if self.p <= 0 or self.q <= 0:
            raise ConfigError("p and q must be positive")
        if self.walk_len < 1 or self.contexts_per_edge < 1:
            raise ConfigError("walk_len and contexts_per_edge must be >= 1")
        if self.k_aug < 1 or self.negatives_per_context < 1:
            raise ConfigError("k_aug and negatives_per_context must be >= 1")


@dataclass(frozen=True)
class ContextPair:
    player: NodeId
    game: NodeId

    def __post_init__(self):
        if self.player.kind is not NodeKind.PLAYER or self.game.kind is not NodeKind.GAME:
            raise ContractError("context pair must be (player, game)")

    def as_indices(self) -> tuple[int, int]:
        return self.player.index, self.game.index


class AugmentedIndex:
    """Per-node same-type similarity neighbours above the epsilon threshold.

    For each node: the top k_aug same-type nodes with cosine similarity
    strictly above 1 - epsilon, sorted by similarity descending with node
    index as the tie-break.
    """

    def __init__(self, player_nbrs: list[tuple[np.ndarray, np.ndarray]],
                 game_nbrs: list[tuple[np.ndarray, np.ndarray]]):
        self._nbrs = {PLAYER: player_nbrs, GAME: game_nbrs}

    def neighbours(self, kind: int, idx: int) -> tuple[np.ndarray, np.ndarray]:
        """(indices, similarities) of augmented neighbours, strongest first."""
        return self._nbrs[kind][idx]


def _normalize_rows(x: np.ndarray) -> np.ndarray:
    norms = np.linalg.norm(x, axis=1, keepdims=True)
    return np.where(norms > 0.0, x / np.where(norms > 0.0, norms, 1.0), 0.0)


def _top_neighbours(feats: np.ndarray, threshold: float, k: int):
    normed = _normalize_rows(np.asarray(feats, dtype=float))
    sims = np.clip(normed @ normed.T, -1.0, 1.0)
    np.fill_diagonal(sims, -np.inf)
    out = []
    for i in range(sims.shape[0]):
        cand = np.nonzero(sims[i] > threshold)[0]
        if cand.size > k:
            # similarity descending, node index ascending on ties
            order = np.lexsort((cand, -sims[i, cand]))[:k]
            cand = cand[order]
        else:
            order = np.lexsort((cand, -sims[i, cand]))
            cand = cand[order]
        out.append((cand.astype(np.int64), sims[i, cand].copy()))
    return out


def build_augmented_index(snapshot: Snapshot, cfg: WalkConfig) -> AugmentedIndex:
    """Exact top-k same-type similarity neighbours for every node."""
    threshold = 1.0 - cfg.epsilon
    return AugmentedIndex(
        _top_neighbours(snapshot.player_feats, threshold, cfg.k_aug),
        _top_neighbours(snapshot.game_feats, threshold, cfg.k_aug),
    )


class DayWalker:
    """Walk sampler for one snapshot; caches distance-2 neighbourhoods."""

    def __init__(self, snapshot: Snapshot, aug: AugmentedIndex, cfg: WalkConfig):
        self.snapshot = snapshot
        self.aug = aug
        self.cfg = cfg
        self._normed = {
            PLAYER: _normalize_rows(np.asarray(snapshot.player_feats, dtype=float)),
            GAME: _normalize_rows(np.asarray(snapshot.game_feats, dtype=float)),
        }
        self._bip = {PLAYER: snapshot.player_adj, GAME: snapshot.game_adj}
        self._d2_cache: dict[tuple[int, int], frozenset[int]] = {}

    def _bip_nbrs(self, kind: int, idx: int) -> list[int]:
        return self._bip[kind].get(idx, [])

    def _d2_same_kind(self, kind: int, idx: int) -> frozenset[int]:
        """Same-kind nodes at graph distance exactly 2, counting augmented edges."""
        key = (kind, idx)
        cached = self._d2_cache.get(key)
        if cached is not None:
            return cached
        aug_idx, _ = self.aug.neighbours(kind, idx)
        aug_set = set(aug_idx.tolist())
        reach: set[int] = set()
        for mid in self._bip_nbrs(kind, idx):
            reach.update(self._bip_nbrs(1 - kind, mid))
        for mid in aug_set:
            reach.update(self.aug.neighbours(kind, mid)[0].tolist())
        reach.discard(idx)
        reach -= aug_set
        result = frozenset(reach)
        self._d2_cache[key] = result
        return result

    def transition(self, prev: tuple[int, int], curr: tuple[int, int]):
        """Candidate next nodes and their probabilities.

        ``prev`` and ``curr`` are (kind, index) with opposite kinds. Returns
        (indices, probs) over nodes of prev's kind, or None when no candidate
        has positive weight (stuck walker).
        """
        (pk, pi), (ck, ci) = prev, curr
        if pk == ck:
            raise ContractError("prev and curr must have opposite kinds")
        cands: list[int] = [pi]
        weights: list[float] = [1.0 / self.cfg.p]
        aug_idx, aug_sim = self.aug.neighbours(pk, pi)
        aug_set = set(aug_idx.tolist())
        for j, s in zip(aug_idx.tolist(), aug_sim.tolist()):
            if s > 0.0:
                cands.append(j)
                weights.append(s / self.cfg.q)
        d2 = None
        prev_vec = self._normed[pk][pi]
        feats = self._normed[pk]
        for o in self._bip_nbrs(ck, ci):
            if o == pi or o in aug_set:
                continue
            if d2 is None:
                d2 = self._d2_same_kind(pk, pi)
            if o not in d2:
                continue
            sim = float(prev_vec @ feats[o])
            if sim > 0.0:
                cands.append(o)
                weights.append(sim / self.cfg.q)
        total = float(np.sum(weights))
        if not cands or total <= 0.0:
            return None
        return np.asarray(cands, dtype=np.int64), np.asarray(weights) / total

    def sample_step(self, prev, curr, rng: np.random.Generator) -> int | None:
        dist = self.transition(prev, curr)
        if dist is None:
            return None
        idxs, probs = dist
        r = rng.random()
        pick = int(np.searchsorted(np.cumsum(probs), r, side="right"))
        return int(idxs[min(pick, len(idxs) - 1)])

    def contexts_for(self, seed: tuple[int, int], rng: np.random.Generator) -> list[tuple[int, int]]:
        """Up to contexts_per_edge distinct (player, game) pairs for one edge."""
        u0, v0 = seed
        if not self.snapshot.has_edge(u0, v0):
            raise ContractError(f"seed {seed} is not an edge of the snapshot")
        want = self.cfg.contexts_per_edge
        collected: dict[tuple[int, int], None] = {}
        for _ in range(5 * want):
            prev = (PLAYER, u0)
            curr = (GAME, v0)
            for _ in range(self.cfg.walk_len):
                nxt = self.sample_step(prev, curr, rng)
                if nxt is None:
                    break
                ck, ci = curr
                pair = (ci, nxt) if ck == PLAYER else (nxt, ci)
                if pair != seed and pair not in collected:
                    collected[pair] = None
                    if len(collected) == want:
                        return list(collected)
                prev, curr = curr, (prev[0], nxt)
            if len(collected) == want:
                break
        return list(collected)


# -- spec-level wrappers using NodeId ------------------------------------------


def _as_state(node: NodeId) -> tuple[int, int]:
    return (PLAYER if node.kind is NodeKind.PLAYER else GAME, node.index)


def transition_distribution(snapshot: Snapshot, aug: AugmentedIndex, prev: NodeId,
                            curr: NodeId, cfg: WalkConfig) -> dict[NodeId, float]:
    """Probability map over next nodes; empty map signals a stuck walker."""
    walker = DayWalker(snapshot, aug, cfg)
    dist = walker.transition(_as_state(prev), _as_state(curr))
    if dist is None:
        return {}
    idxs, probs = dist
    kind = _KINDS[_as_state(prev)[0]]
    return {NodeId(kind, int(i)): float(pr) for i, pr in zip(idxs, probs)}


def sample_contexts(seed: EdgeKey, snapshot: Snapshot, aug: AugmentedIndex,
                    cfg: WalkConfig, rng: np.random.Generator) -> list[ContextPair]:
    walker = DayWalker(snapshot, aug, cfg)
    pairs = walker.contexts_for((seed.player.index, seed.game.index), rng)
    return [
        ContextPair(NodeId(NodeKind.PLAYER, u), NodeId(NodeKind.GAME, v))
        for u, v in pairs
    ]


# -- context vocabulary and negatives ---------------------------------------


class ContextVocabulary:
    """Dense integer ids for sampled context pairs, with occurrence counts."""

    def __init__(self):
        self._ids: dict[tuple[int, int], int] = {}
        self._pairs: list[tuple[int, int]] = []
        self.counts: list[int] = []

    def __len__(self) -> int:
        return len(self._pairs)

    @property
    def size(self) -> int:
        return len(self._pairs)

    def add(self, pair: tuple[int, int]) -> int:
        """Id of the pair, assigning the next dense id on first sight."""
        got = self._ids.get(pair)
        if got is not None:
            self.counts[got] += 1
            return got
        idx = len(self._pairs)
        self._ids[pair] = idx
        self._pairs.append(pair)
        self.counts.append(1)
        return idx

    def id_of(self, pair: tuple[int, int]) -> int:
        try:
            return self._ids[pair]
        except KeyError:
            raise VocabularyError(f"pair {pair} not in vocabulary") from None

    def pair_of(self, idx: int) -> tuple[int, int]:
        if not 0 <= idx < len(self._pairs):
            raise VocabularyError(f"id {idx} outside [0, {len(self._pairs)})")
        return self._pairs[idx]

    def pairs(self) -> list[tuple[int, int]]:
        return list(self._pairs)


def sample_negatives(vocab: ContextVocabulary, exclude: int, n: int,
                     rng: np.random.Generator, power: float | None = None) -> np.ndarray:
    """n vocabulary ids drawn i.i.d. excluding ``exclude``.

    Uniform by default; with ``power`` set, draws follow occurrence counts
    raised to that power (unigram-style).
    """
    size = len(vocab)
    if size < 2:
        raise VocabularyError(f"need at least 2 context pairs to sample negatives, have {size}")
    if not 0 <= exclude < size:
        raise VocabularyError(f"exclude id {exclude} outside [0, {size})")
    if power is None:
        draws = rng.integers(0, size - 1, size=n)
        return np.where(draws >= exclude, draws + 1, draws).astype(np.int64)
    weights = np.asarray(vocab.counts, dtype=float) ** power
    weights[exclude] = 0.0
    weights /= weights.sum()
    return rng.choice(size, size=n, p=weights).astype(np.int64)
