"""Monte-Carlo ground truth: exact game solving on sampled trees.

Trees are drawn generation by generation from the offspring law, edges get
independent weights in {-1, 0, +1}, and each realized game is solved exactly
by backward induction over (vertex, mover capital, opponent capital) states
with a bounded round horizon.  The empirical frequencies of the root being a
horizon-n loss or win are unbiased estimates of the analytic horizon-n
probabilities, because a horizon-n verdict only reads the first n
generations.

Terminal rules follow the recurrences: a move that empties the mover's
capital loses immediately and one that reaches the target capital wins
immediately, both taking precedence over the destination being a leaf; a
mover stranded at a leaf with interior capital loses.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from typing import List, Optional

import numpy as np

from .fixpoint import EdgeWeightLaw, GameSpec
from .offspring import OffspringDistribution

DEFAULT_NODE_CAP = 10**7
DEFAULT_CHUNK_SIZE = 25000


class NodeCapExceeded(RuntimeError):
    """A sampled tree outgrew the configured node budget."""


class GameVerdict(Enum):
    WIN = "WIN"
    LOSE = "LOSE"
    UNDECIDED = "UNDECIDED"


@dataclass
class WeightedTree:
    """Finite rooted tree with one weight in {-1, 0, +1} per edge.

    Nodes are indexed in breadth-first order, the root is node 0 and parents
    precede children.  weights[v] is the weight of the edge (parent(v), v);
    weights[0] is unused and kept at 0.
    """

    parents: np.ndarray
    weights: np.ndarray
    depth: int

    def __post_init__(self):
        parents = np.asarray(self.parents, dtype=np.int64)
        weights = np.asarray(self.weights, dtype=np.int8)
        if parents.shape != weights.shape or parents.ndim != 1 or parents.size == 0:
            raise ValueError("parents and weights must be equal-length 1-d arrays")
        if parents[0] != -1:
            raise ValueError("node 0 must be the root (parent -1)")
        if parents.size > 1:
            if np.any(parents[1:] < 0) or np.any(parents[1:] >= np.arange(1, parents.size)):
                raise ValueError("parents must precede children (breadth-first indexing)")
        if np.any(np.abs(weights[1:]) > 1):
            raise ValueError("edge weights must lie in {-1, 0, +1}")
        object.__setattr__(self, "parents", parents)
        object.__setattr__(self, "weights", weights)
        levels = np.zeros(parents.size, dtype=np.int64)
        if parents.size > 1:
            for v in range(1, parents.size):
                levels[v] = levels[parents[v]] + 1
        object.__setattr__(self, "node_depth", levels)
        if self.depth < int(levels.max(initial=0)):
            raise ValueError("declared depth smaller than deepest node")

    @property
    def n_nodes(self) -> int:
        return int(self.parents.size)

    def children_of(self, u: int) -> np.ndarray:
        return np.flatnonzero(self.parents == u)


def sample_tree(dist: OffspringDistribution, law: EdgeWeightLaw, depth: int,
                rng: np.random.Generator, node_cap: int = DEFAULT_NODE_CAP) -> WeightedTree:
    """Breadth-first tree sample truncated after `depth` generations."""
    if depth < 0:
        raise ValueError("depth must be non-negative")
    parents = [-1]
    weights = [0]
    frontier = [0]
    p1, p0 = law.p_1, law.p_0
    for _ in range(depth):
        if not frontier:
            break
        counts = np.atleast_1d(dist.sample(rng, size=len(frontier)))
        total = int(counts.sum())
        if len(parents) + total > node_cap:
            raise NodeCapExceeded(f"tree exceeded node cap {node_cap}")
        new_frontier = []
        if total:
            u = rng.random(total)
            drawn = np.where(u < p1, 1, np.where(u < p1 + p0, 0, -1))
            pos = 0
            for node, c in zip(frontier, counts):
                for _ in range(int(c)):
                    parents.append(node)
                    weights.append(int(drawn[pos]))
                    new_frontier.append(len(parents) - 1)
                    pos += 1
        frontier = new_frontier
    return WeightedTree(parents=np.array(parents, dtype=np.int64),
                        weights=np.array(weights, dtype=np.int8),
                        depth=depth)


@dataclass
class GameTable:
    """Backward-induction verdicts for every node and interior capital pair.

    win[u, i-1, j-1] / lose[u, i-1, j-1] give the mover's verdict at node u
    with mover capital i and opponent capital j after `horizon` rounds of
    induction.  Nodes deeper than depth - horizon carry the verdict at their
    truncation-limited horizon; the root verdict is horizon-exact.
    """

    kappa: int
    horizon: int
    win: np.ndarray
    lose: np.ndarray

    def verdict(self, node: int, i: int, j: int) -> GameVerdict:
        if not (1 <= i <= self.kappa - 1 and 1 <= j <= self.kappa - 1):
            raise ValueError("capitals must be interior")
        if self.win[node, i - 1, j - 1]:
            return GameVerdict.WIN
        if self.lose[node, i - 1, j - 1]:
            return GameVerdict.LOSE
        return GameVerdict.UNDECIDED


def _generation_index(tree: WeightedTree):
    # pad to the declared depth: extinct lineages still need their frontier
    # generations so childlessness is processed at every level
    return [np.flatnonzero(tree.node_depth == d) for d in range(tree.depth + 1)]


def solve_game_exact(tree: WeightedTree, kappa: int, horizon: int) -> GameTable:
    """Round-bounded backward induction over one realized tree.

    A mover loses at horizon m+1 when the node is childless or every child,
    under the weight-shifted mover capital, lies in the opponent's horizon-m
    win set (capital 0 counting as an immediate win for the opponent, capital
    kappa as an immediate loss).  The win case is dual.
    """
    if kappa < 2:
        raise ValueError("kappa must be >= 2")
    if horizon < 0:
        raise ValueError("horizon must be non-negative")
    if horizon > tree.depth:
        raise ValueError("horizon exceeds the sampled depth")
    n = kappa - 1
    gens = _generation_index(tree)
    n_gens = len(gens)
    Wp, Lp = [], []
    for d in range(n_gens):
        N = gens[d].size
        wv = np.zeros((N, n, kappa + 1), dtype=bool)
        lv = np.zeros((N, n, kappa + 1), dtype=bool)
        wv[:, :, 0] = True
        lv[:, :, kappa] = True
        Wp.append(wv)
        Lp.append(lv)
    # local child bookkeeping per generation
    child_parent_local = []
    child_weight = []
    nchild = []
    for d in range(n_gens - 1):
        kids = gens[d + 1]
        local_of = {int(g): idx for idx, g in enumerate(gens[d])}
        pl = np.array([local_of[int(tree.parents[v])] for v in kids], dtype=np.int64)
        child_parent_local.append(pl)
        child_weight.append(tree.weights[kids].astype(np.int64))
        nchild.append(np.bincount(pl, minlength=gens[d].size))
    aa = np.arange(n)
    for _ in range(horizon):
        for d in range(n_gens - 1):
            N = gens[d].size
            Nc = gens[d + 1].size
            if Nc == 0:
                lose_g = np.ones((N, n, n), dtype=bool)
                win_g = np.zeros((N, n, n), dtype=bool)
            else:
                nodes = np.arange(Nc)[:, None, None]
                jm1 = aa[None, None, :]
                col = (aa[None, :, None] + 1) + child_weight[d][:, None, None]
                condW = Wp[d + 1][nodes, jm1, col]
                condL = Lp[d + 1][nodes, jm1, col]
                flat = (child_parent_local[d][:, None, None] * (n * n)
                        + aa[None, :, None] * n + jm1).reshape(-1)
                cntW = np.bincount(flat, weights=condW.reshape(-1), minlength=N * n * n).reshape(N, n, n)
                cntL = np.bincount(flat, weights=condL.reshape(-1), minlength=N * n * n).reshape(N, n, n)
                nch = nchild[d][:, None, None]
                lose_g = (nch == 0) | (cntW >= nch)
                win_g = cntL > 0
            Wp[d][:, :, 1:kappa] = win_g
            Lp[d][:, :, 1:kappa] = lose_g
    win = np.zeros((tree.n_nodes, n, n), dtype=bool)
    lose = np.zeros((tree.n_nodes, n, n), dtype=bool)
    for d in range(n_gens):
        win[gens[d]] = Wp[d][:, :, 1:kappa]
        lose[gens[d]] = Lp[d][:, :, 1:kappa]
    return GameTable(kappa=kappa, horizon=horizon, win=win, lose=lose)


# ---------------------------------------------------------------------------
# batched estimation
# ---------------------------------------------------------------------------

@dataclass
class Forest:
    """Columnar batch of sampled trees, grouped by generation."""

    n_samples: int
    depth: int
    sizes: List[int]                       # nodes per generation
    parents: List[Optional[np.ndarray]]    # index into previous generation
    weights: List[Optional[np.ndarray]]
    sample_id: List[np.ndarray]
    aborted: np.ndarray                    # bool per sample: exceeded node cap

    def tree(self, s: int) -> WeightedTree:
        """Extract sample s as a WeightedTree (breadth-first indexing)."""
        if self.aborted[s]:
            raise NodeCapExceeded(f"sample {s} was aborted during sampling")
        parents = [-1]
        weights = [0]
        prev_global_to_local = {s: 0}  # generation-local index -> tree index
        for g in range(1, self.depth + 1):
            if self.sizes[g] == 0:
                break
            sel = np.flatnonzero(self.sample_id[g] == s)
            cur_map = {}
            for local in sel:
                parent_local = int(self.parents[g][local])
                parents.append(prev_global_to_local[parent_local])
                weights.append(int(self.weights[g][local]))
                cur_map[int(local)] = len(parents) - 1
            prev_global_to_local = cur_map
            if not cur_map:
                break
        return WeightedTree(parents=np.array(parents, dtype=np.int64),
                            weights=np.array(weights, dtype=np.int8), depth=self.depth)


def sample_forest(dist: OffspringDistribution, law: EdgeWeightLaw, depth: int,
                  n_samples: int, rng: np.random.Generator,
                  node_cap: int = DEFAULT_NODE_CAP) -> Forest:
    """Sample n_samples trees at once, generation by generation.

    A sample whose cumulative node count exceeds node_cap is marked aborted
    and stops growing; callers resample aborted slots.
    """
    p1, p0 = law.p_1, law.p_0
    sizes = [n_samples]
    parents: List[Optional[np.ndarray]] = [None]
    weights: List[Optional[np.ndarray]] = [None]
    sample_id = [np.arange(n_samples, dtype=np.int64)]
    cum = np.ones(n_samples, dtype=np.int64)
    aborted = np.zeros(n_samples, dtype=bool)
    for g in range(1, depth + 1):
        prev_n = sizes[g - 1]
        if prev_n == 0:
            sizes.append(0)
            parents.append(np.empty(0, dtype=np.int64))
            weights.append(np.empty(0, dtype=np.int8))
            sample_id.append(np.empty(0, dtype=np.int64))
            continue
        counts = np.atleast_1d(dist.sample(rng, size=prev_n)).astype(np.int64)
        counts[aborted[sample_id[g - 1]]] = 0
        parent = np.repeat(np.arange(prev_n, dtype=np.int64), counts)
        sid = sample_id[g - 1][parent]
        u = rng.random(parent.size)
        w = np.where(u < p1, 1, np.where(u < p1 + p0, 0, -1)).astype(np.int8)
        sizes.append(int(parent.size))
        parents.append(parent)
        weights.append(w)
        sample_id.append(sid)
        cum += np.bincount(sid, minlength=n_samples)
        aborted |= cum > node_cap
    return Forest(n_samples=n_samples, depth=depth, sizes=sizes, parents=parents,
                  weights=weights, sample_id=sample_id, aborted=aborted)


def _forest_root_counts(forest: Forest, kappa: int, horizon: int):
    """Per-horizon root loss/win counts over the non-aborted samples."""
    n = kappa - 1
    H = horizon
    Wp, Lp = [], []
    for g in range(H + 1):
        N = forest.sizes[g]
        wv = np.zeros((N, n, kappa + 1), dtype=bool)
        lv = np.zeros((N, n, kappa + 1), dtype=bool)
        wv[:, :, 0] = True
        lv[:, :, kappa] = True
        Wp.append(wv)
        Lp.append(lv)
    nchild = [np.bincount(forest.parents[g + 1], minlength=forest.sizes[g])
              if forest.sizes[g + 1] else np.zeros(forest.sizes[g], dtype=np.int64)
              for g in range(H)]
    keep = ~forest.aborted
    loss = np.zeros((H, n, n))
    win = np.zeros((H, n, n))
    aa = np.arange(n)
    for step in range(1, H + 1):
        for g in range(H - step + 1):
            N = forest.sizes[g]
            Nc = forest.sizes[g + 1]
            if N == 0:
                continue
            if Nc == 0:
                lose_g = np.ones((N, n, n), dtype=bool)
                win_g = np.zeros((N, n, n), dtype=bool)
            else:
                parent = forest.parents[g + 1]
                wts = forest.weights[g + 1].astype(np.int64)
                nodes = np.arange(Nc)[:, None, None]
                jm1 = aa[None, None, :]
                col = (aa[None, :, None] + 1) + wts[:, None, None]
                condW = Wp[g + 1][nodes, jm1, col]
                condL = Lp[g + 1][nodes, jm1, col]
                flat = (parent[:, None, None] * (n * n) + aa[None, :, None] * n + jm1).reshape(-1)
                cntW = np.bincount(flat, weights=condW.reshape(-1), minlength=N * n * n).reshape(N, n, n)
                cntL = np.bincount(flat, weights=condL.reshape(-1), minlength=N * n * n).reshape(N, n, n)
                nch = nchild[g][:, None, None]
                lose_g = (nch == 0) | (cntW >= nch)
                win_g = cntL > 0
            Wp[g][:, :, 1:kappa] = win_g
            Lp[g][:, :, 1:kappa] = lose_g
        loss[step - 1] = Lp[0][keep][:, :, 1:kappa].sum(axis=0)
        win[step - 1] = Wp[0][keep][:, :, 1:kappa].sum(axis=0)
    return loss, win


def _chunk_counts(spec: GameSpec, horizon: int, m: int, seed_seq, node_cap: int):
    rng = np.random.default_rng(seed_seq)
    n = spec.size
    loss = np.zeros((horizon, n, n))
    win = np.zeros((horizon, n, n))
    aborted_total = 0
    want = m
    rounds = 0
    while want > 0:
        rounds += 1
        if rounds > 1000:
            raise NodeCapExceeded("resampling keeps hitting the node cap; raise node_cap")
        forest = sample_forest(spec.dist, spec.law, horizon, want, rng, node_cap=node_cap)
        lo, wi = _forest_root_counts(forest, spec.kappa, horizon)
        loss += lo
        win += wi
        n_aborted = int(forest.aborted.sum())
        aborted_total += n_aborted
        want = n_aborted
    return loss, win, aborted_total


@dataclass
class OracleEstimate:
    """Monte-Carlo estimates of the horizon-n loss/win probabilities."""

    spec: GameSpec
    horizon: int
    samples: int
    loss_hat: np.ndarray      # shape (horizon, kappa-1, kappa-1); index n-1 = horizon n
    win_hat: np.ndarray
    loss_stderr: np.ndarray
    win_stderr: np.ndarray
    aborted_samples: int
    seed: int

    def loss_at(self, n: int) -> np.ndarray:
        return self.loss_hat[n - 1]

    def win_at(self, n: int) -> np.ndarray:
        return self.win_hat[n - 1]

    def to_json_dict(self) -> dict:
        return {
            "L": self.loss_hat[-1].tolist(),
            "W": self.win_hat[-1].tolist(),
            "L_stderr": self.loss_stderr[-1].tolist(),
            "W_stderr": self.win_stderr[-1].tolist(),
            "horizon": self.horizon,
            "samples": self.samples,
            "aborted_samples": self.aborted_samples,
        }

    def csv_rows(self) -> list:
        rows = []
        n = self.spec.size
        for i in range(1, n + 1):
            for j in range(1, n + 1):
                rows.append({"i": i, "j": j,
                             "ell": self.loss_hat[-1][i - 1, j - 1],
                             "ell_stderr": self.loss_stderr[-1][i - 1, j - 1],
                             "w": self.win_hat[-1][i - 1, j - 1],
                             "w_stderr": self.win_stderr[-1][i - 1, j - 1]})
        return rows


def estimate_probs(spec: GameSpec, horizon: int, samples: int, seed: int = 0,
                   chunk_size: int = DEFAULT_CHUNK_SIZE,
                   node_cap: int = DEFAULT_NODE_CAP, jobs: int = 1) -> OracleEstimate:
    """Estimate the horizon-n loss/win probabilities for n = 1..horizon.

    Samples are processed in fixed-size chunks, each driven by a substream
    spawned deterministically from the master seed, so results are
    bit-identical for a given (seed, samples, chunk_size) regardless of the
    number of worker processes.
    """
    if samples < 1:
        raise ValueError("samples must be >= 1")
    if horizon < 1:
        raise ValueError("horizon must be >= 1")
    master = np.random.SeedSequence(seed)
    chunk_sizes = []
    remaining = samples
    while remaining > 0:
        take = min(chunk_size, remaining)
        chunk_sizes.append(take)
        remaining -= take
    subs = master.spawn(len(chunk_sizes))
    n = spec.size
    loss = np.zeros((horizon, n, n))
    win = np.zeros((horizon, n, n))
    aborted = 0
    if jobs > 1 and len(chunk_sizes) > 1:
        import concurrent.futures
        with concurrent.futures.ProcessPoolExecutor(max_workers=jobs) as pool:
            futures = [pool.submit(_chunk_counts, spec, horizon, m, ss, node_cap)
                       for m, ss in zip(chunk_sizes, subs)]
            for fut in futures:
                lo, wi, ab = fut.result()
                loss += lo
                win += wi
                aborted += ab
    else:
        for m, ss in zip(chunk_sizes, subs):
            lo, wi, ab = _chunk_counts(spec, horizon, m, ss, node_cap)
            loss += lo
            win += wi
            aborted += ab
    loss_hat = loss / samples
    win_hat = win / samples
    loss_se = np.sqrt(loss_hat * (1.0 - loss_hat) / samples)
    win_se = np.sqrt(win_hat * (1.0 - win_hat) / samples)
    return OracleEstimate(spec=spec, horizon=horizon, samples=samples,
                          loss_hat=loss_hat, win_hat=win_hat,
                          loss_stderr=loss_se, win_stderr=win_se,
                          aborted_samples=aborted, seed=seed)
