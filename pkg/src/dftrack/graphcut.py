"""Binary map inference: energy terms, cut-graph construction, max-flow.

Each frame's environment map is the minimizer of an energy with three parts:
a second-order temporal prior and an RSS log-likelihood per location (unary),
plus a coherence penalty on differing neighbor labels (pairwise). The
pairwise table has zero diagonal and positive off-diagonal entries, so the
energy is regular and the exact minimizer is a single s-t min-cut on an
n+2-node graph.

Unary costs are negative log probabilities: the source t-edge carries the
inactive-state cost and the sink t-edge the active-state cost, so a node
ending on the source side (paying its severed sink edge) is ACTIVE. The cut
cost then equals the energy of the returned labeling, which the brute-force
oracle checks exhaustively.
"""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass, field
import numpy as np

from .fingerprint import Fingerprint, likelihood
from .types import EnvironmentMap, ModelParams, RssFrame

__all__ = [
    "CutGraph",
    "TrackerState",
    "FrameScores",
    "frame_scores",
    "spatial_weight",
    "unary_energy",
    "pairwise_energy",
    "total_energy",
    "pairwise_table_regular",
    "check_regular",
    "build_cut_graph",
    "min_cut",
    "brute_force_map",
    "infer_map",
    "dump_cut_graph",
]

_CAP_TOL = 1e-13
_BRUTE_FORCE_LIMIT = 20
_BRUTE_FORCE_CHUNK = 1 << 16


@dataclass(frozen=True)
class CutGraph:
    """Weighted s-t graph encoding one frame's energy function.

    ``source_tedge[i]`` is the source-to-node weight (inactive-state cost),
    ``sink_tedge[i]`` the node-to-sink weight (active-state cost), and
    ``n_edges`` the undirected neighbor weights (disagreement costs).
    """

    n: int
    source_tedge: tuple[float, ...]
    sink_tedge: tuple[float, ...]
    n_edges: tuple[tuple[int, int, float], ...]
    timestamp: float = 0.0

    def __post_init__(self) -> None:
        if len(self.source_tedge) != self.n or len(self.sink_tedge) != self.n:
            raise ValueError("t-edge arrays must have length n")
        for w in (*self.source_tedge, *self.sink_tedge):
            if not (math.isfinite(w) and w >= 0.0):
                raise ValueError(f"t-edge weight {w} must be finite and >= 0")
        for i, j, w in self.n_edges:
            if not (0 <= i < self.n and 0 <= j < self.n and i != j):
                raise ValueError(f"n-edge ({i}, {j}) out of range")
            if not (math.isfinite(w) and w >= 0.0):
                raise ValueError(f"n-edge weight {w} must be finite and >= 0")


@dataclass
class TrackerState:
    """Mutable per-trace inference state (single writer).

    Holds the two most recent maps for the temporal prior plus the ring of
    the last w maps consumed by window merging.
    """

    prev_map: EnvironmentMap
    prev_prev_map: EnvironmentMap
    map_window: deque[EnvironmentMap] = field(default_factory=deque)

    @staticmethod
    def initial(n: int, w: int) -> "TrackerState":
        empty = EnvironmentMap.all_inactive(n)
        return TrackerState(empty, empty, deque(maxlen=w))

    def push(self, new_map: EnvironmentMap) -> None:
        self.prev_prev_map = self.prev_map
        self.prev_map = new_map
        self.map_window.append(new_map)


@dataclass(frozen=True)
class FrameScores:
    """Per-frame location scores shared by the spatial-contrast computation."""

    log_active: tuple[float, ...]
    log_inactive: tuple[float, ...]
    normalized: tuple[float, ...]


def frame_scores(fp: Fingerprint, frame: RssFrame) -> FrameScores:
    """Log-likelihoods per location plus min-max normalized activity scores.

    The normalized score rescales -log P(frame | active) to [0, 1] across the
    current frame's locations (all zeros when the frame cannot tell locations
    apart).
    """
    log_active = []
    log_inactive = []
    for i in range(fp.n):
        la = 0.0
        li = 0.0
        lf = fp.locations[i]
        for stream, value in frame.readings.items():
            ha = lf.active.get(stream)
            hi = lf.inactive.get(stream)
            if ha is not None:
                la += math.log(ha.probability(value))
            if hi is not None:
                li += math.log(hi.probability(value))
        log_active.append(la)
        log_inactive.append(li)
    costs = [-v for v in log_active]
    lo, hi_ = min(costs), max(costs)
    if hi_ > lo:
        normalized = tuple((c - lo) / (hi_ - lo) for c in costs)
    else:
        normalized = (0.0,) * fp.n
    return FrameScores(tuple(log_active), tuple(log_inactive), normalized)


def spatial_weight(delta: float, gamma: float) -> float:
    """Disagreement cost gamma * (1 + exp(-delta^2)) / 2, in [gamma/2, gamma]."""
    return gamma * (1.0 + math.exp(-(delta * delta))) / 2.0


def unary_energy(
    fp: Fingerprint,
    loc: int,
    state: bool,
    frame: RssFrame,
    history: tuple[bool, bool],
    params: ModelParams,
) -> float:
    """beta * -log P(state | history) + delta * -log P(frame | state).

    ``history`` is (previous, before-previous) activity at the location.
    Probabilities must be strictly positive (histogram smoothing and Laplace
    counts guarantee this for trained fingerprints).
    """
    prev, prev_prev = history
    if params.hmm_order == 1:
        p_temporal = fp.temporal.probability_first_order(state, prev)
    else:
        p_temporal = fp.temporal.probability(state, prev, prev_prev)
    p_signal = likelihood(fp, loc, state, frame)
    return params.beta * -math.log(p_temporal) + params.delta * -math.log(p_signal)


def pairwise_energy(
    fp: Fingerprint,
    i: int,
    j: int,
    frame: RssFrame,
    params: ModelParams,
    scores: FrameScores | None = None,
) -> float:
    """Cost of locations i and j taking different labels (equal labels cost 0).

    The likelihood contrast is, by default, the difference of the two
    locations' normalized activity scores; ``spatial_contrast="literal"``
    uses the raw difference P(frame | i active) - P(frame | j inactive) with
    (i, j) in canonical i < j order, which saturates near zero for
    multi-stream products.
    """
    a, b = (i, j) if i < j else (j, i)
    if (a, b) not in fp.neighbor_set:
        raise ValueError(f"locations {i} and {j} are not adjacent")
    if scores is None:
        scores = frame_scores(fp, frame)
    if params.spatial_contrast == "literal":
        delta = math.exp(scores.log_active[a]) - math.exp(scores.log_inactive[b])
    else:
        delta = abs(scores.normalized[i] - scores.normalized[j])
    return spatial_weight(delta, params.gamma)


def total_energy(
    env_map: EnvironmentMap,
    frame: RssFrame,
    prev: EnvironmentMap,
    prev_prev: EnvironmentMap,
    fp: Fingerprint,
    params: ModelParams,
) -> float:
    """Full energy of a labeling: temporal + likelihood + spatial terms."""
    n = fp.n
    if not len(env_map) == len(prev) == len(prev_prev) == n:
        raise ValueError("map lengths do not match the fingerprint grid")
    scores = frame_scores(fp, frame)
    energy = 0.0
    for i in range(n):
        energy += unary_energy(
            fp, i, env_map.active[i], frame, (prev.active[i], prev_prev.active[i]), params
        )
    for i, j in fp.neighbors:
        if env_map.active[i] != env_map.active[j]:
            energy += pairwise_energy(fp, i, j, frame, params, scores)
    return energy


def pairwise_table_regular(e00: float, e01: float, e10: float, e11: float) -> bool:
    """Graph-representability test for one pairwise table: E00+E11 <= E01+E10."""
    return e00 + e11 <= e01 + e10


def check_regular(fp: Fingerprint, frame: RssFrame, params: ModelParams) -> bool:
    """Check every neighbor pair's table; always true for this energy family
    (zero diagonal, nonnegative off-diagonal)."""
    scores = frame_scores(fp, frame)
    for i, j in fp.neighbors:
        w = pairwise_energy(fp, i, j, frame, params, scores)
        if not pairwise_table_regular(0.0, w, w, 0.0):
            return False
    return True


def build_cut_graph(
    frame: RssFrame,
    prev: EnvironmentMap,
    prev_prev: EnvironmentMap,
    fp: Fingerprint,
    params: ModelParams,
) -> CutGraph:
    """Encode one frame's energy as t-edge/n-edge weights.

    source->x carries the inactive-state unary cost, x->sink the active-state
    cost, and each neighbor pair its disagreement cost.
    """
    n = fp.n
    if not len(prev) == len(prev_prev) == n:
        raise ValueError("history map lengths do not match the fingerprint grid")
    scores = frame_scores(fp, frame)
    src = []
    snk = []
    for i in range(n):
        history = (prev.active[i], prev_prev.active[i])
        src.append(unary_energy(fp, i, False, frame, history, params))
        snk.append(unary_energy(fp, i, True, frame, history, params))
    edges = tuple(
        (i, j, pairwise_energy(fp, i, j, frame, params, scores))
        for i, j in fp.neighbors
    )
    assert all(w >= 0.0 for _, _, w in edges)  # regularity (zero-diagonal tables)
    return CutGraph(
        n=n,
        source_tedge=tuple(src),
        sink_tedge=tuple(snk),
        n_edges=edges,
        timestamp=frame.timestamp,
    )


class _MaxFlow:
    """Augmenting-path max-flow with source/sink search-tree reuse.

    Grows both trees breadth-first, augments along the meeting path, then
    re-adopts orphans instead of rebuilding the trees; on easy instances
    (most nodes settled by their terminal edges) the work stays near-linear.
    """

    FREE, SRC, SNK = 0, 1, 2

    def __init__(self, n_nodes: int):
        self.n_nodes = n_nodes
        self.to: list[int] = []
        self.cap: list[float] = []
        self.adj: list[list[int]] = [[] for _ in range(n_nodes)]

    def add_edge(self, u: int, v: int, cap_uv: float, cap_vu: float) -> None:
        self.adj[u].append(len(self.to))
        self.to.append(v)
        self.cap.append(cap_uv)
        self.adj[v].append(len(self.to))
        self.to.append(u)
        self.cap.append(cap_vu)

    def solve(self, source: int, sink: int) -> list[bool]:
        """Run to completion; returns per-node source-side membership."""
        to, cap, adj = self.to, self.cap, self.adj
        tree = [self.FREE] * self.n_nodes
        parent = [-1] * self.n_nodes  # edge into v (SRC tree) / out of v (SNK tree)
        tree[source] = self.SRC
        tree[sink] = self.SNK
        active: deque[int] = deque((source, sink))
        orphans: deque[int] = deque()

        def grow() -> int:
            # Returns the connecting edge (S-side -> T-side), or -1 when the
            # trees cannot grow further (max flow reached).
            while active:
                u = active[0]
                if tree[u] == self.SRC:
                    for e in adj[u]:
                        if cap[e] <= _CAP_TOL:
                            continue
                        v = to[e]
                        if tree[v] == self.FREE:
                            tree[v] = self.SRC
                            parent[v] = e
                            active.append(v)
                        elif tree[v] == self.SNK:
                            return e
                elif tree[u] == self.SNK:
                    for e in adj[u]:
                        rev = e ^ 1
                        if cap[rev] <= _CAP_TOL:
                            continue
                        v = to[e]
                        if tree[v] == self.FREE:
                            tree[v] = self.SNK
                            parent[v] = rev
                            active.append(v)
                        elif tree[v] == self.SRC:
                            return rev
                active.popleft()
            return -1

        def augment(bridge: int) -> None:
            u = to[bridge ^ 1]
            v = to[bridge]
            bottleneck = cap[bridge]
            node = u
            while node != source:
                e = parent[node]
                bottleneck = min(bottleneck, cap[e])
                node = to[e ^ 1]
            node = v
            while node != sink:
                e = parent[node]
                bottleneck = min(bottleneck, cap[e])
                node = to[e]
            cap[bridge] -= bottleneck
            cap[bridge ^ 1] += bottleneck
            node = u
            while node != source:
                e = parent[node]
                cap[e] -= bottleneck
                cap[e ^ 1] += bottleneck
                child = node
                node = to[e ^ 1]
                if cap[e] <= _CAP_TOL:
                    parent[child] = -1
                    orphans.append(child)
            node = v
            while node != sink:
                e = parent[node]
                cap[e] -= bottleneck
                cap[e ^ 1] += bottleneck
                child = node
                node = to[e]
                if cap[e] <= _CAP_TOL:
                    parent[child] = -1
                    orphans.append(child)

        def rooted(v: int) -> bool:
            while v != source and v != sink:
                e = parent[v]
                if e < 0:
                    return False
                v = to[e ^ 1] if tree[v] == self.SRC else to[e]
            return True

        def adopt() -> None:
            while orphans:
                v = orphans.popleft()
                side = tree[v]
                found = False
                for e in adj[v]:
                    if side == self.SRC:
                        into = e ^ 1  # candidate parent -> v
                        u = to[e]
                        ok = cap[into] > _CAP_TOL
                    else:
                        into = e  # v -> candidate parent
                        u = to[e]
                        ok = cap[into] > _CAP_TOL
                    if ok and tree[u] == side and rooted(u):
                        parent[v] = into
                        found = True
                        break
                if found:
                    continue
                # No parent: v leaves its tree; its children become orphans
                # and tree neighbors with residual capacity become active.
                for e in adj[v]:
                    u = to[e]
                    if tree[u] != side:
                        continue
                    residual = cap[e ^ 1] if side == self.SRC else cap[e]
                    if residual > _CAP_TOL:
                        active.append(u)
                    pe = parent[u]
                    if pe >= 0 and to[pe ^ 1 if side == self.SRC else pe] == v:
                        parent[u] = -1
                        orphans.append(u)
                tree[v] = self.FREE

        while True:
            bridge = grow()
            if bridge < 0:
                break
            augment(bridge)
            adopt()
        return [tree[v] == self.SRC for v in range(self.n_nodes)]


def min_cut(g: CutGraph) -> EnvironmentMap:
    """Exact minimizer of the encoded energy via max-flow.

    Nodes left on the source side of the cut are active (their severed sink
    edge is the active-state cost); the result's total energy equals the
    exhaustive minimum, which the oracle suite verifies.
    """
    source = g.n
    sink = g.n + 1
    flow = _MaxFlow(g.n + 2)
    for i in range(g.n):
        w_src = g.source_tedge[i]
        w_snk = g.sink_tedge[i]
        # Saturate the common part of the two t-edges up front; only the
        # surplus side can influence the cut.
        base = min(w_src, w_snk)
        flow.add_edge(source, i, w_src - base, 0.0)
        flow.add_edge(i, sink, w_snk - base, 0.0)
    for i, j, w in g.n_edges:
        if w > 0.0:
            flow.add_edge(i, j, w, w)
    side = flow.solve(source, sink)
    return EnvironmentMap(g.timestamp, tuple(side[: g.n]))


def brute_force_map(
    frame: RssFrame,
    prev: EnvironmentMap,
    prev_prev: EnvironmentMap,
    fp: Fingerprint,
    params: ModelParams,
) -> EnvironmentMap:
    """Exhaustive global minimizer over all 2^n labelings (oracle; n <= 20).

    Ties break toward the smallest binary value of the activation vector read
    with location 0 as the most significant bit.
    """
    n = fp.n
    if n > _BRUTE_FORCE_LIMIT:
        raise ValueError(f"brute force limited to n <= {_BRUTE_FORCE_LIMIT}, got {n}")
    if not len(prev) == len(prev_prev) == n:
        raise ValueError("history map lengths do not match the fingerprint grid")
    scores = frame_scores(fp, frame)
    u0 = np.empty(n)
    u1 = np.empty(n)
    for i in range(n):
        history = (prev.active[i], prev_prev.active[i])
        u0[i] = unary_energy(fp, i, False, frame, history, params)
        u1[i] = unary_energy(fp, i, True, frame, history, params)
    edges = [
        (i, j, pairwise_energy(fp, i, j, frame, params, scores))
        for i, j in fp.neighbors
    ]

    shifts = np.array([n - 1 - i for i in range(n)], dtype=np.uint32)
    best_energy = math.inf
    best_code = -1
    total = 1 << n
    for start in range(0, total, _BRUTE_FORCE_CHUNK):
        codes = np.arange(start, min(start + _BRUTE_FORCE_CHUNK, total), dtype=np.uint32)
        bits = (codes[:, None] >> shifts[None, :]) & 1
        energies = bits @ u1 + (1 - bits) @ u0
        for i, j, w in edges:
            energies += w * (bits[:, i] != bits[:, j])
        k = int(np.argmin(energies))
        if energies[k] < best_energy:
            best_energy = float(energies[k])
            best_code = start + k
    active = tuple(bool((best_code >> (n - 1 - i)) & 1) for i in range(n))
    return EnvironmentMap(frame.timestamp, active)


def infer_map(
    state: TrackerState,
    frame: RssFrame,
    fp: Fingerprint,
    params: ModelParams,
) -> EnvironmentMap:
    """One online step: build the graph, cut it, advance the tracker state."""
    graph = build_cut_graph(frame, state.prev_map, state.prev_prev_map, fp, params)
    result = min_cut(graph)
    state.push(result)
    return result


def dump_cut_graph(g: CutGraph) -> str:
    """Line-based debug dump: ``tedge i src snk`` / ``nedge i j w``."""
    lines = [
        f"tedge {i} {g.source_tedge[i]!r} {g.sink_tedge[i]!r}" for i in range(g.n)
    ]
    lines.extend(f"nedge {i} {j} {w!r}" for i, j, w in g.n_edges)
    return "\n".join(lines) + "\n"
