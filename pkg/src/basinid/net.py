"""Dense feed-forward network with a symmetric siamese pairing head.

The trunk embeds each state; a pair is combined through the elementwise
absolute difference of the two embeddings, which makes the pair output
symmetric by construction (bit-exactly: |f(a)-f(b)| and |f(b)-f(a)| are the
same floats). A small ReLU head maps the combination to a logit, and the
sigmoid of the logit is the predicted probability that both states come
from the same initialization.

Everything is float64 NumPy with hand-written backpropagation; training is
mini-batch Adam, deterministic given the config seed.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import InsufficientPairsError, NumericFailureError
from .rng import derive_seed, generator

SAME = 1
DIFFERENT = 0

_P_CLAMP = 1e-12


@dataclass
class PairSample:
    """One training/evaluation unit: two states and a same/different label."""

    a: np.ndarray
    b: np.ndarray
    label: int
    meta: tuple[int, int] = (-1, -1)


@dataclass
class PairBatch:
    a: np.ndarray       # (N, D)
    b: np.ndarray       # (N, D)
    labels: np.ndarray  # (N,) floats in {0.0, 1.0}

    @classmethod
    def from_samples(cls, samples) -> "PairBatch":
        if isinstance(samples, PairBatch):
            return samples
        samples = list(samples)
        if not samples:
            raise ValueError("empty pair set")
        return cls(
            a=np.stack([np.asarray(s.a, dtype=np.float64) for s in samples]),
            b=np.stack([np.asarray(s.b, dtype=np.float64) for s in samples]),
            labels=np.array([float(s.label) for s in samples]),
        )

    def __len__(self) -> int:
        return self.labels.shape[0]


@dataclass
class MlpParams:
    """Trunk and head weight stacks; layer l maps dims[l] -> dims[l+1].

    ``input_offset``/``input_scale`` standardize states before the trunk;
    they are fixed preprocessing constants, not trained.
    """

    trunk: list[tuple[np.ndarray, np.ndarray]]
    head: list[tuple[np.ndarray, np.ndarray]]
    input_offset: np.ndarray | None = None
    input_scale: np.ndarray | None = None

    @property
    def input_dim(self) -> int:
        return self.trunk[0][0].shape[1]

    @property
    def embedding_dim(self) -> int:
        return self.trunk[-1][0].shape[0]

    def copy(self) -> "MlpParams":
        return MlpParams(
            trunk=[(w.copy(), b.copy()) for w, b in self.trunk],
            head=[(w.copy(), b.copy()) for w, b in self.head],
            input_offset=None if self.input_offset is None else self.input_offset.copy(),
            input_scale=None if self.input_scale is None else self.input_scale.copy(),
        )

    def with_standardization(self, states: np.ndarray) -> "MlpParams":
        """Copy with input standardization fitted to the given states."""
        out = self.copy()
        out.input_offset = states.mean(axis=0)
        out.input_scale = np.maximum(states.std(axis=0), 1e-6)
        return out

    def preprocess(self, x: np.ndarray) -> np.ndarray:
        if self.input_offset is None:
            return x
        return (x - self.input_offset) / self.input_scale


@dataclass
class TrainConfig:
    epochs: int = 25
    batch_size: int = 256
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    seed: int = 0
    validation_fraction: float = 0.1
    weight_decay: float = 0.0
    keep_best: bool = True  # return the best-validation-loss snapshot

    def __post_init__(self):
        if not 0.0 < self.validation_fraction < 1.0:
            raise ValueError("validation_fraction must be in (0, 1)")
        if self.epochs < 0 or self.batch_size < 1:
            raise ValueError("epochs must be >= 0 and batch_size >= 1")
        if self.weight_decay < 0.0:
            raise ValueError("weight_decay must be >= 0")


def init_params(trunk_dims, head_dims, seed: int) -> MlpParams:
    """He-initialized parameters. ``trunk_dims`` runs input..embedding;
    ``head_dims`` runs embedding..1."""
    if trunk_dims[-1] != head_dims[0]:
        raise ValueError("head input must match trunk embedding dimension")
    if head_dims[-1] != 1:
        raise ValueError("head must end in a single logit")
    rng = generator(seed)

    def make(dims):
        layers = []
        for i in range(len(dims) - 1):
            fan_in = dims[i]
            w = rng.standard_normal((dims[i + 1], dims[i])) * np.sqrt(2.0 / fan_in)
            layers.append((w, np.zeros(dims[i + 1])))
        return layers

    return MlpParams(trunk=make(list(trunk_dims)), head=make(list(head_dims)))


def default_params(input_dim: int, seed: int) -> MlpParams:
    return init_params([input_dim, 128, 128, 64], [64, 32, 1], seed)


def _sigmoid(z: np.ndarray) -> np.ndarray:
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def _mlp_forward(layers, x):
    """Forward through Linear(+ReLU on all but the last layer)."""
    acts = [x]
    pre = []
    h = x
    last = len(layers) - 1
    for i, (w, b) in enumerate(layers):
        z = h @ w.T + b
        pre.append(z)
        h = np.maximum(z, 0.0) if i < last else z
        acts.append(h)
    return h, (acts, pre)


def _mlp_backward(layers, cache, dout):
    """Returns per-layer (dW, db) grads and the gradient wrt the input."""
    acts, pre = cache
    grads = [None] * len(layers)
    g = dout
    last = len(layers) - 1
    for i in range(last, -1, -1):
        w, _ = layers[i]
        dz = g if i == last else g * (pre[i] > 0)
        grads[i] = (dz.T @ acts[i], dz.sum(axis=0))
        g = dz @ w
    return grads, g


def embed(params: MlpParams, x: np.ndarray) -> np.ndarray:
    """Trunk embedding of states (N, D) -> (N, e)."""
    out, _ = _mlp_forward(params.trunk, params.preprocess(np.asarray(x, dtype=np.float64)))
    return out


def pair_logits_from_embeddings(params: MlpParams, fa: np.ndarray, fb: np.ndarray) -> np.ndarray:
    u = np.abs(fa - fb)
    z, _ = _mlp_forward(params.head, u)
    return z[:, 0]


def forward_pairs(params: MlpParams, a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Same-initialization probability for each pair; symmetric in (a, b)."""
    fa = embed(params, a)
    fb = embed(params, b)
    p = _sigmoid(pair_logits_from_embeddings(params, fa, fb))
    if not np.isfinite(p).all():
        raise NumericFailureError("non-finite activation in pair forward pass")
    return p


def siamese_forward(params: MlpParams, pair: PairSample) -> float:
    """Probability in (0, 1) that the pair shares an initialization."""
    return float(forward_pairs(params, pair.a[None, :], pair.b[None, :])[0])


def bce_loss(p, label) -> float | np.ndarray:
    """Binary cross entropy -[y log p + (1-y) log(1-p)], with p clamped to
    [1e-12, 1-1e-12] before the logs."""
    p = np.clip(np.asarray(p, dtype=np.float64), _P_CLAMP, 1.0 - _P_CLAMP)
    y = np.asarray(label, dtype=np.float64)
    out = -(y * np.log(p) + (1.0 - y) * np.log(1.0 - p))
    return float(out) if out.ndim == 0 else out


def pair_loss_and_grads(params: MlpParams, a, b, y):
    """Mean BCE over the pair batch and exact gradients for every parameter."""
    a = params.preprocess(np.asarray(a, dtype=np.float64))
    b = params.preprocess(np.asarray(b, dtype=np.float64))
    y = np.asarray(y, dtype=np.float64)
    n = a.shape[0]

    fa, cache_a = _mlp_forward(params.trunk, a)
    fb, cache_b = _mlp_forward(params.trunk, b)
    diff = fa - fb
    u = np.abs(diff)
    z, cache_h = _mlp_forward(params.head, u)
    z = z[:, 0]
    p = _sigmoid(z)
    # softplus(z) - y z, computed stably
    loss = float(np.mean(np.maximum(z, 0.0) + np.log1p(np.exp(-np.abs(z))) - y * z))
    if not np.isfinite(loss):
        raise NumericFailureError("non-finite loss in pair forward pass")

    dz = ((p - y) / n)[:, None]
    head_grads, du = _mlp_backward(params.head, cache_h, dz)
    dfa = du * np.sign(diff)
    trunk_grads_a, _ = _mlp_backward(params.trunk, cache_a, dfa)
    trunk_grads_b, _ = _mlp_backward(params.trunk, cache_b, -dfa)
    trunk_grads = [
        (ga[0] + gb[0], ga[1] + gb[1]) for ga, gb in zip(trunk_grads_a, trunk_grads_b)
    ]
    return loss, MlpParams(trunk=trunk_grads, head=head_grads)


class _Adam:
    def __init__(self, params: MlpParams, cfg: TrainConfig):
        self.cfg = cfg
        self.t = 0
        self.m = [(np.zeros_like(w), np.zeros_like(b)) for w, b in params.trunk + params.head]
        self.v = [(np.zeros_like(w), np.zeros_like(b)) for w, b in params.trunk + params.head]

    def step(self, params: MlpParams, grads: MlpParams) -> None:
        cfg = self.cfg
        self.t += 1
        bias1 = 1.0 - cfg.beta1**self.t
        bias2 = 1.0 - cfg.beta2**self.t
        pairs = list(zip(params.trunk + params.head, grads.trunk + grads.head))
        for i, ((w, b), (gw, gb)) in enumerate(pairs):
            for j, (theta, g) in enumerate(((w, gw), (b, gb))):
                m, v = self.m[i][j], self.v[i][j]
                m *= cfg.beta1
                m += (1.0 - cfg.beta1) * g
                v *= cfg.beta2
                v += (1.0 - cfg.beta2) * g * g
                if cfg.weight_decay and j == 0:  # decoupled decay, weights only
                    theta -= cfg.lr * cfg.weight_decay * theta
                theta -= cfg.lr * (m / bias1) / (np.sqrt(v / bias2) + cfg.eps)


@dataclass
class TrainResult:
    params: MlpParams
    train_losses: list[float] = field(default_factory=list)
    val_losses: list[float] = field(default_factory=list)
    aborted: bool = False


def train(params: MlpParams, samples, cfg: TrainConfig) -> TrainResult:
    """Mini-batch Adam on shuffled pairs; deterministic given cfg.seed.

    A validation split is held out up front; validation loss is recorded
    after every epoch. A non-finite batch loss aborts training, returning
    the parameters from the start of the failing epoch.
    """
    batch = PairBatch.from_samples(samples)
    n = len(batch)
    labels = set(np.unique(batch.labels).tolist())
    if not labels <= {0.0, 1.0}:
        raise ValueError("pair labels must be 0 (different) or 1 (same)")
    if len(labels) < 2:
        raise ValueError("training needs both same and different pairs")

    params = params.copy()
    result = TrainResult(params=params)
    if cfg.epochs == 0:
        return result

    order = generator(derive_seed(cfg.seed, 0)).permutation(n)
    n_val = max(1, int(round(cfg.validation_fraction * n)))
    if n_val >= n:
        raise ValueError("validation split leaves no training pairs")
    val_idx, tr_idx = order[:n_val], order[n_val:]
    a_tr, b_tr, y_tr = batch.a[tr_idx], batch.b[tr_idx], batch.labels[tr_idx]
    a_val, b_val, y_val = batch.a[val_idx], batch.b[val_idx], batch.labels[val_idx]

    opt = _Adam(params, cfg)
    n_tr = len(tr_idx)
    for epoch in range(cfg.epochs):
        snapshot = params.copy()
        perm = generator(derive_seed(cfg.seed, 1, epoch)).permutation(n_tr)
        epoch_losses = []
        failed = False
        for start in range(0, n_tr, cfg.batch_size):
            idx = perm[start : start + cfg.batch_size]
            try:
                loss, grads = pair_loss_and_grads(params, a_tr[idx], b_tr[idx], y_tr[idx])
            except NumericFailureError:
                failed = True
                break
            epoch_losses.append(loss)
            opt.step(params, grads)
        if failed:
            result.params = snapshot
            result.aborted = True
            break
        result.train_losses.append(float(np.mean(epoch_losses)))
        p_val = forward_pairs(params, a_val, b_val)
        result.val_losses.append(float(np.mean(bce_loss(p_val, y_val))))
    return result


def holdout_accuracy(params: MlpParams, samples) -> float:
    """Fraction of pairs classified correctly at threshold 0.5 (ties are
    predicted 'different')."""
    batch = PairBatch.from_samples(samples)
    p = forward_pairs(params, batch.a, batch.b)
    pred_same = p > 0.5
    return float(np.mean(pred_same == (batch.labels == 1.0)))


# --- held-out risk estimation ----------------------------------------------


@dataclass
class CellPairs:
    """Index-based pair pool for one candidate cell (i, j).

    ``cand_a[r], a_idx[r]`` locate row r's first state inside the per-
    candidate endpoint pools; labels follow the same/different convention.
    """

    cand_a: np.ndarray
    a_idx: np.ndarray
    cand_b: np.ndarray
    b_idx: np.ndarray
    labels: np.ndarray

    def __len__(self) -> int:
        return self.labels.shape[0]


@dataclass
class EvalPairs:
    """Held-out evaluation pairs grouped by unordered candidate cell."""

    pools: dict[int, np.ndarray]
    cells: dict[tuple[int, int], CellPairs]


def _cell_risk(p: np.ndarray, labels: np.ndarray) -> float:
    pred_same = p > 0.5  # tie at exactly 0.5 predicts 'different'
    return float(np.mean(pred_same != (labels == 1.0)))


def estimate_pair_risk(params: MlpParams, eval_pairs, min_pairs: int = 200) -> np.ndarray:
    """Symmetric K x K matrix of held-out misclassification rates.

    ``eval_pairs`` is either an :class:`EvalPairs` (fast path, embeddings
    computed once per pool) or a mapping (i, j) -> pairs. Entry (i, j) is
    the error rate at threshold 0.5 over that cell's balanced pool; the
    diagonal is NaN.
    """
    if isinstance(eval_pairs, EvalPairs):
        cells = eval_pairs.cells
        for cell, cp in cells.items():
            if len(cp) < min_pairs:
                raise InsufficientPairsError(cell, len(cp), min_pairs)
        k = max(max(i, j) for i, j in cells) + 1
        emb = {c: embed(params, pool) for c, pool in eval_pairs.pools.items()}
        risk = np.full((k, k), np.nan)
        e_dim = params.embedding_dim
        for (i, j), cp in cells.items():
            fa = np.empty((len(cp), e_dim))
            fb = np.empty((len(cp), e_dim))
            for c in (i, j):
                mask = cp.cand_a == c
                fa[mask] = emb[c][cp.a_idx[mask]]
                mask = cp.cand_b == c
                fb[mask] = emb[c][cp.b_idx[mask]]
            p = _sigmoid(pair_logits_from_embeddings(params, fa, fb))
            risk[i, j] = risk[j, i] = _cell_risk(p, cp.labels)
        return risk

    cells = {tuple(sorted(cell)): PairBatch.from_samples(pairs) for cell, pairs in eval_pairs.items()}
    for cell, pb in cells.items():
        if len(pb) < min_pairs:
            raise InsufficientPairsError(cell, len(pb), min_pairs)
    k = max(max(i, j) for i, j in cells) + 1
    risk = np.full((k, k), np.nan)
    for (i, j), pb in cells.items():
        p = forward_pairs(params, pb.a, pb.b)
        risk[i, j] = risk[j, i] = _cell_risk(p, pb.labels)
    return risk


# --- checkpoint io ----------------------------------------------------------

_CKPT_MAGIC = b"NBIMLP01"


def save_params(params: MlpParams, path) -> None:
    """Versioned binary checkpoint: layer dims, input standardization, then
    row-major float64 weights."""
    import struct

    def dims(layers):
        return [layers[0][0].shape[1]] + [w.shape[0] for w, _ in layers]

    tdims, hdims = dims(params.trunk), dims(params.head)
    has_std = params.input_offset is not None
    with open(path, "wb") as fh:
        fh.write(_CKPT_MAGIC)
        fh.write(struct.pack("<IIII", 2, len(tdims), len(hdims), int(has_std)))
        fh.write(struct.pack(f"<{len(tdims)}I", *tdims))
        fh.write(struct.pack(f"<{len(hdims)}I", *hdims))
        if has_std:
            fh.write(np.ascontiguousarray(params.input_offset, dtype="<f8").tobytes())
            fh.write(np.ascontiguousarray(params.input_scale, dtype="<f8").tobytes())
        for w, b in params.trunk + params.head:
            fh.write(np.ascontiguousarray(w, dtype="<f8").tobytes())
            fh.write(np.ascontiguousarray(b, dtype="<f8").tobytes())


def load_params(path) -> MlpParams:
    import struct

    with open(path, "rb") as fh:
        raw = fh.read()
    if raw[:8] != _CKPT_MAGIC:
        raise ValueError("not a checkpoint file")
    version, nt, nh, has_std = struct.unpack_from("<IIII", raw, 8)
    if version != 2:
        raise ValueError(f"unsupported checkpoint version {version}")
    off = 8 + 16
    tdims = struct.unpack_from(f"<{nt}I", raw, off)
    off += 4 * nt
    hdims = struct.unpack_from(f"<{nh}I", raw, off)
    off += 4 * nh
    offset = scale = None
    if has_std:
        d = tdims[0]
        offset = np.frombuffer(raw, dtype="<f8", count=d, offset=off).astype(np.float64)
        off += d * 8
        scale = np.frombuffer(raw, dtype="<f8", count=d, offset=off).astype(np.float64)
        off += d * 8

    def read(dims):
        nonlocal off
        layers = []
        for i in range(len(dims) - 1):
            out_d, in_d = dims[i + 1], dims[i]
            w = np.frombuffer(raw, dtype="<f8", count=out_d * in_d, offset=off).reshape(out_d, in_d)
            off += out_d * in_d * 8
            b = np.frombuffer(raw, dtype="<f8", count=out_d, offset=off)
            off += out_d * 8
            layers.append((w.astype(np.float64), b.astype(np.float64)))
        return layers

    return MlpParams(trunk=read(tdims), head=read(hdims), input_offset=offset, input_scale=scale)
