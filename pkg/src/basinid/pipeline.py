"""End-to-end basin identification: discovery, pair datasets, refinement,
and partition indicators.

Discovery simulates chains from random initializations and keeps their
endpoints as candidate basin representatives. Refinement simulates a batch
of trajectories per candidate, trains one siamese classifier on endpoint
pairs labeled same/different initialization, estimates per-cell held-out
misclassification risk, and merges every candidate pair whose risk exceeds
the threshold, closing merges transitively.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from . import net
from .core import MarkovKernel, simulate_batch, simulate_group
from .net import CellPairs, EvalPairs, MlpParams, TrainConfig
from .rng import TrajectoryStreams, derive_seed, generator
from .unionfind import DisjointSet

# sub-seed stream tags
_INIT_DRAWS = 0
_DISCOVERY_SIM = 1
_CANDIDATE_SIM = 10
_PAIR_SAMPLING = 11
_NET_INIT = 12
_NET_TRAIN = 13


@dataclass
class DiscoveryConfig:
    num_chains: int
    horizon: int
    init: dict = field(default_factory=lambda: {"kind": "gaussian", "scale": 1.0})

    def __post_init__(self):
        if self.num_chains < 1:
            raise ValueError("num_chains must be >= 1")
        if self.horizon < 0:
            raise ValueError("discovery horizon must be >= 0")


@dataclass
class NbiConfig:
    horizon: int
    trajectories_per_candidate: int
    discovery: DiscoveryConfig
    train: TrainConfig = field(default_factory=TrainConfig)
    merge_threshold: float = 0.3
    train_pairs: int = 8000
    eval_pairs_per_cell: int = 200
    split: float = 0.5
    trunk_hidden: tuple = (128, 128, 64)
    head_hidden: tuple = (32,)
    indicator_trajectories: int = 1
    reestimate_after_merge: bool = False  # reserved; single-pass only

    def __post_init__(self):
        if not 0.0 < self.merge_threshold < 0.5:
            raise ValueError("merge_threshold must be in (0, 0.5)")
        if self.eval_pairs_per_cell % 4 != 0:
            raise ValueError("eval_pairs_per_cell must be divisible by 4 for balanced pools")
        if not 0.0 < self.split < 1.0:
            raise ValueError("split must be in (0, 1)")
        if self.reestimate_after_merge:
            raise ValueError("risk re-estimation after merging is reserved and not implemented")


@dataclass
class CandidateSet:
    """Representative states, one per candidate basin, with provenance."""

    states: np.ndarray  # (K, D)
    provenance: list[dict] = field(default_factory=list)

    def __post_init__(self):
        self.states = np.asarray(self.states, dtype=np.float64)
        if self.states.ndim != 2 or self.states.shape[0] < 1:
            raise ValueError("candidates must be a (K, D) array with K >= 1")
        if not np.isfinite(self.states).all():
            raise ValueError("candidate states must be finite")
        if not self.provenance:
            self.provenance = [{"sim_key": i} for i in range(len(self.states))]

    def __len__(self) -> int:
        return self.states.shape[0]

    def sim_key(self, i: int) -> int:
        return int(self.provenance[i].get("sim_key", i))


@dataclass
class PartitionResult:
    labels: list[int]
    num_basins: int
    risk_matrix: np.ndarray
    merged_pairs: list[tuple[int, int, float]]
    classifier: MlpParams | None
    candidates: CandidateSet
    eval_endpoints: dict[int, np.ndarray] = field(default_factory=dict)


def sample_inits(spec: dict, dim: int, count: int, rng: np.random.Generator) -> np.ndarray:
    kind = spec.get("kind", "gaussian")
    if kind == "gaussian":
        scale = spec.get("scale", 1.0)
        center = np.asarray(spec.get("center", np.zeros(dim)), dtype=np.float64)
        if center.shape != (dim,):
            raise ValueError("init center has wrong dimension")
        return center + scale * rng.standard_normal((count, dim))
    if kind == "sphere":
        radius = spec.get("radius", 1.0)
        v = rng.standard_normal((count, dim))
        return radius * v / np.linalg.norm(v, axis=1, keepdims=True)
    raise ValueError(f"unknown init distribution kind {kind!r}")


def discover_candidates(kernel: MarkovKernel, discovery: DiscoveryConfig, seed: int) -> CandidateSet:
    """Random-endpoint discovery: one candidate per chain endpoint."""
    rng = generator(derive_seed(seed, _INIT_DRAWS))
    inits = sample_inits(discovery.init, kernel.dim, discovery.num_chains, rng)
    seeds = [derive_seed(seed, _DISCOVERY_SIM, i) for i in range(discovery.num_chains)]
    endpoints, _ = simulate_group(kernel, inits, discovery.horizon, seeds, store="endpoints")
    provenance = [
        {"sim_key": i, "chain": i, "seed": seeds[i]} for i in range(discovery.num_chains)
    ]
    return CandidateSet(states=endpoints, provenance=provenance)


def _split_pools(endpoints: np.ndarray, split: float):
    n = endpoints.shape[0]
    n_train = int(round(split * n))
    if n_train < 2 or n - n_train < 2:
        raise ValueError(
            f"{n} trajectories with split {split} leave fewer than 2 endpoints on one side"
        )
    return endpoints[:n_train], endpoints[n_train:]


def _distinct_pairs(rng, count, n):
    i1 = rng.integers(0, n, size=count)
    i2 = rng.integers(0, n - 1, size=count)
    i2 = i2 + (i2 >= i1)
    return i1, i2


def build_pair_dataset(
    endpoint_pools: list[np.ndarray],
    split: float,
    seed: int,
    train_pairs: int,
    eval_pairs_per_cell: int,
) -> tuple[net.PairBatch, EvalPairs]:
    """Trajectory-level train/eval split and balanced pair pools.

    The first round(split * n) endpoints of each candidate feed the training
    pairs, the rest feed the held-out cells, so no trajectory contributes to
    both. The train set is balanced globally (|#same - #different| <= 1);
    every eval cell is balanced as half cross pairs and a quarter same pairs
    from each side.
    """
    k = len(endpoint_pools)
    if k < 2:
        raise ValueError("need K >= 2 candidates for cross pairs")
    if eval_pairs_per_cell % 4 != 0:
        raise ValueError("eval_pairs_per_cell must be divisible by 4")
    train_pools, eval_pools = [], []
    for ep in endpoint_pools:
        tr, ev = _split_pools(ep, split)
        train_pools.append(tr)
        eval_pools.append(ev)

    rng = generator(seed)
    n_same = train_pairs // 2
    n_diff = train_pairs - n_same

    tr_stack = np.stack(train_pools)  # (K, n_tr, D)
    n_tr = tr_stack.shape[1]
    cs = rng.integers(0, k, size=n_same)
    s1, s2 = _distinct_pairs(rng, n_same, n_tr)
    c1 = rng.integers(0, k, size=n_diff)
    c2 = rng.integers(0, k - 1, size=n_diff)
    c2 = c2 + (c2 >= c1)
    d1 = rng.integers(0, n_tr, size=n_diff)
    d2 = rng.integers(0, n_tr, size=n_diff)

    train_batch = net.PairBatch(
        a=np.concatenate([tr_stack[cs, s1], tr_stack[c1, d1]]),
        b=np.concatenate([tr_stack[cs, s2], tr_stack[c2, d2]]),
        labels=np.concatenate([np.full(n_same, float(net.SAME)), np.full(n_diff, float(net.DIFFERENT))]),
    )

    ev_stack = np.stack(eval_pools)
    n_ev = ev_stack.shape[1]
    m = eval_pairs_per_cell
    quarter, half = m // 4, m // 2
    cells: dict[tuple[int, int], CellPairs] = {}
    for i in range(k):
        for j in range(i + 1, k):
            cand_a = np.concatenate(
                [np.full(half, i), np.full(quarter, i), np.full(quarter, j)]
            )
            cand_b = np.concatenate(
                [np.full(half, j), np.full(quarter, i), np.full(quarter, j)]
            )
            x1 = rng.integers(0, n_ev, size=half)
            x2 = rng.integers(0, n_ev, size=half)
            si1, si2 = _distinct_pairs(rng, quarter, n_ev)
            sj1, sj2 = _distinct_pairs(rng, quarter, n_ev)
            cells[(i, j)] = CellPairs(
                cand_a=cand_a,
                a_idx=np.concatenate([x1, si1, sj1]),
                cand_b=cand_b,
                b_idx=np.concatenate([x2, si2, sj2]),
                labels=np.concatenate(
                    [np.full(half, float(net.DIFFERENT)), np.full(half, float(net.SAME))]
                ),
            )
    pools = {i: ev_stack[i] for i in range(k)}
    return train_batch, EvalPairs(pools=pools, cells=cells)


_GROUP_ROWS = 256


def _simulate_candidate_pools(candidates: CandidateSet, kernel, cfg: NbiConfig, seed: int):
    """Endpoint pools of n trajectories per candidate.

    Trajectory j of candidate i is seeded exactly as simulate_batch with the
    candidate's batch seed would seed it, so results match per-candidate
    batch simulation bit for bit; rows are grouped into fixed-size chunks
    only for throughput.
    """
    k = len(candidates)
    n = cfg.trajectories_per_candidate
    inits = np.repeat(candidates.states, n, axis=0)
    seeds = [
        derive_seed(derive_seed(seed, _CANDIDATE_SIM, candidates.sim_key(i)), j)
        for i in range(k)
        for j in range(n)
    ]
    endpoints = np.empty_like(inits)
    for start in range(0, k * n, _GROUP_ROWS):
        stop = min(start + _GROUP_ROWS, k * n)
        streams = [TrajectoryStreams.from_seed(s) for s in seeds[start:stop]]
        endpoints[start:stop] = _run_block_rows(kernel, inits[start:stop], cfg.horizon, streams, start)
    return [endpoints[i * n : (i + 1) * n] for i in range(k)]


def _run_block_rows(kernel, x, horizon, streams, traj_offset=0):
    from .core import _run_block

    return _run_block(kernel, x.copy(), horizon, streams, None, start_step=0, traj_offset=traj_offset)


def partition_from_risk(risk: np.ndarray, merge_threshold: float):
    """Threshold the risk matrix, close merges transitively, relabel
    contiguously ordered by smallest member index."""
    k = risk.shape[0]
    dsu = DisjointSet(k)
    merged: list[tuple[int, int, float]] = []
    for i in range(k):
        for j in range(i + 1, k):
            if np.isfinite(risk[i, j]) and risk[i, j] > merge_threshold:
                dsu.union(i, j)
                merged.append((i, j, float(risk[i, j])))
    labels = dsu.labels()
    return labels, len(set(labels)), merged


def refine(candidates: CandidateSet, kernel: MarkovKernel, cfg: NbiConfig, seed: int) -> PartitionResult:
    """Neural basin refinement over a candidate set."""
    k = len(candidates)
    if k == 1:
        return PartitionResult(
            labels=[0],
            num_basins=1,
            risk_matrix=np.full((1, 1), np.nan),
            merged_pairs=[],
            classifier=None,
            candidates=candidates,
        )

    pools = _simulate_candidate_pools(candidates, kernel, cfg, seed)

    train_batch, eval_pairs = build_pair_dataset(
        pools,
        cfg.split,
        derive_seed(seed, _PAIR_SAMPLING),
        cfg.train_pairs,
        cfg.eval_pairs_per_cell,
    )

    dim = candidates.states.shape[1]
    params = net.init_params(
        [dim, *cfg.trunk_hidden],
        [cfg.trunk_hidden[-1], *cfg.head_hidden, 1],
        derive_seed(seed, _NET_INIT),
    )
    params = params.with_standardization(np.concatenate([train_batch.a, train_batch.b]))
    train_cfg = replace(cfg.train, seed=derive_seed(seed, _NET_TRAIN))
    result = net.train(params, train_batch, train_cfg)

    risk = net.estimate_pair_risk(result.params, eval_pairs, min_pairs=cfg.eval_pairs_per_cell)
    labels, num_basins, merged = partition_from_risk(risk, cfg.merge_threshold)
    return PartitionResult(
        labels=labels,
        num_basins=num_basins,
        risk_matrix=risk,
        merged_pairs=merged,
        classifier=result.params,
        candidates=candidates,
        eval_endpoints=eval_pairs.pools,
    )


def indicate(
    partition: PartitionResult,
    kernel: MarkovKernel,
    cfg: NbiConfig,
    x: np.ndarray,
    seed: int,
) -> int:
    """Assign a new state to a basin of the trained partition.

    Simulates ``cfg.indicator_trajectories`` trajectories of the refinement
    horizon from ``x``, scores the mean predicted same-probability between
    the new endpoints and each candidate's stored held-out endpoints, and
    returns the basin label of the best-scoring candidate (ties go to the
    lowest candidate index).
    """
    if partition.classifier is None:
        return 0
    batch = simulate_batch(
        kernel, np.asarray(x, dtype=np.float64), cfg.horizon, cfg.indicator_trajectories, seed, store="endpoints"
    )
    f_new = net.embed(partition.classifier, batch.endpoints)
    k = len(partition.candidates)
    scores = np.empty(k)
    for i in range(k):
        f_stored = net.embed(partition.classifier, partition.eval_endpoints[i])
        u = np.abs(f_new[:, None, :] - f_stored[None, :, :]).reshape(-1, f_new.shape[1])
        z, _ = net._mlp_forward(partition.classifier.head, u)
        scores[i] = float(np.mean(net._sigmoid(z[:, 0])))
    best = int(np.argmax(scores))
    return partition.labels[best]
