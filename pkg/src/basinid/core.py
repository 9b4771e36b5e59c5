"""Black-box Markov kernels, seeded trajectory simulation, and storage.

A :class:`MarkovKernel` advances states one discrete time unit. Simulation
is driven by per-trajectory noise streams (see :mod:`basinid.rng`): the
simulator pre-draws noise in fixed-size blocks and advances all trajectories
of a batch step-synchronously. Kernel batch math uses only row-invariant
NumPy operations (elementwise ops, last-axis reductions, ``einsum``), so row
``i`` of a batched run is bit-identical to simulating trajectory ``i`` alone
with its own sub-seed -- results never depend on how trajectories are
grouped or scheduled.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field

import numpy as np

from .errors import SimulationDivergedError
from .rng import TrajectoryStreams, derive_seed

# Steps per noise block. Purely an execution detail: stream-prefix
# consistency of the generators makes results independent of this value.
_CHUNK = 256


class MarkovKernel:
    """Time-homogeneous Markov kernel advanced in unit time steps.

    Subclasses declare how much noise one step consumes and implement
    :meth:`step_batch` as a pure function of states and noise. The base
    :meth:`step` draws one step's noise from a stream pair and delegates.

    Kernels that evaluate something expensive at the current state (e.g. an
    energy gradient) may override the carry hooks to reuse it across steps;
    the carry must never change results relative to the stateless path.
    """

    dim: int
    gauss_per_step: int = 0
    unif_per_step: int = 0

    def step_batch(self, x: np.ndarray, gauss: np.ndarray, unif: np.ndarray) -> np.ndarray:
        """Advance a batch of states (m, dim) one step. Must be row-invariant."""
        raise NotImplementedError

    def init_carry(self, x: np.ndarray):
        return None

    def step_batch_carry(self, x: np.ndarray, carry, gauss: np.ndarray, unif: np.ndarray):
        return self.step_batch(x, gauss, unif), None

    def step(self, x: np.ndarray, streams: TrajectoryStreams) -> np.ndarray:
        """Advance a single state one step, drawing noise from ``streams``."""
        x = np.asarray(x, dtype=np.float64)
        gauss = streams.gauss.standard_normal((1, self.gauss_per_step))
        unif = streams.unif.random((1, self.unif_per_step))
        return self.step_batch(x[None, :], gauss, unif)[0]


@dataclass
class TrajectoryBatch:
    """n independent trajectories of a common horizon from one initialization.

    ``states`` is (n, horizon+1, dim) when fully stored, else None;
    ``endpoints`` (n, dim) is always present. Regenerating with the same
    seed yields bit-identical arrays.
    """

    init: np.ndarray
    horizon: int
    count: int
    seed: int
    endpoints: np.ndarray
    states: np.ndarray | None = None
    trajectory_seeds: list[int] = field(default_factory=list)

    @property
    def dim(self) -> int:
        return self.init.shape[0]


def _run_block(kernel, x, horizon, streams, states_out, start_step, traj_offset=0):
    """Advance states (m, D) for ``horizon`` steps, drawing noise in chunks."""
    m = x.shape[0]
    carry = kernel.init_carry(x)
    done = 0
    while done < horizon:
        length = min(_CHUNK, horizon - done)
        if kernel.gauss_per_step:
            gauss = np.stack([s.gauss.standard_normal((length, kernel.gauss_per_step)) for s in streams])
        else:
            gauss = np.zeros((m, length, 0))
        if kernel.unif_per_step:
            unif = np.stack([s.unif.random((length, kernel.unif_per_step)) for s in streams])
        else:
            unif = np.zeros((m, length, 0))
        for t in range(length):
            x, carry = kernel.step_batch_carry(x, carry, gauss[:, t], unif[:, t])
            bad = ~np.isfinite(x).all(axis=1)
            if bad.any():
                traj = int(np.argmax(bad)) + traj_offset
                raise SimulationDivergedError(step=start_step + done + t + 1, trajectory=traj)
            if states_out is not None:
                states_out[:, start_step + done + t + 1] = x
        done += length
    return x


def simulate_batch(
    kernel: MarkovKernel,
    init: np.ndarray,
    horizon: int,
    count: int,
    seed: int,
    store: str = "full",
) -> TrajectoryBatch:
    """Simulate ``count`` iid trajectories of ``horizon`` steps from ``init``.

    Trajectory ``i`` uses sub-seed ``derive_seed(seed, i)``, so every row is
    a function of (kernel, init, horizon, sub-seed) alone. ``store`` is
    ``"full"`` to keep all intermediate states or ``"endpoints"`` to bound
    memory at (n, dim).
    """
    init = np.asarray(init, dtype=np.float64)
    if init.ndim != 1 or init.shape[0] != kernel.dim:
        raise ValueError(f"init has shape {init.shape}, kernel dimension is {kernel.dim}")
    if not np.isfinite(init).all():
        raise ValueError("init contains non-finite entries")
    if horizon < 0:
        raise ValueError("horizon must be >= 0")
    if count < 1:
        raise ValueError("count must be >= 1")
    if store not in ("full", "endpoints"):
        raise ValueError(f"unknown store mode {store!r}")

    traj_seeds = [derive_seed(seed, i) for i in range(count)]
    streams = [TrajectoryStreams.from_seed(s) for s in traj_seeds]
    x = np.tile(init, (count, 1))
    states = None
    if store == "full":
        states = np.empty((count, horizon + 1, kernel.dim))
        states[:, 0] = init
    x = _run_block(kernel, x, horizon, streams, states, start_step=0)
    return TrajectoryBatch(
        init=init,
        horizon=horizon,
        count=count,
        seed=seed,
        endpoints=x.copy(),
        states=states,
        trajectory_seeds=traj_seeds,
    )


def simulate_trajectory(kernel: MarkovKernel, init: np.ndarray, horizon: int, seed: int) -> np.ndarray:
    """Simulate one trajectory; returns states of shape (horizon+1, dim).

    Equivalent to row 0 of :func:`simulate_batch` with ``count=1``: the
    trajectory uses sub-seed ``derive_seed(seed, 0)``.
    """
    batch = simulate_batch(kernel, init, horizon, count=1, seed=seed, store="full")
    return batch.states[0]


def simulate_group(
    kernel: MarkovKernel,
    inits: np.ndarray,
    horizon: int,
    seeds: list[int],
    store: str = "endpoints",
):
    """Simulate one trajectory per row of ``inits`` (m, dim), trajectory i
    seeded directly with ``seeds[i]``. Returns (endpoints, states-or-None).
    """
    inits = np.asarray(inits, dtype=np.float64)
    if inits.ndim != 2 or inits.shape[1] != kernel.dim:
        raise ValueError(f"inits have shape {inits.shape}, expected (m, {kernel.dim})")
    if len(seeds) != inits.shape[0]:
        raise ValueError("need one seed per initialization")
    streams = [TrajectoryStreams.from_seed(s) for s in seeds]
    states = None
    if store == "full":
        states = np.empty((inits.shape[0], horizon + 1, kernel.dim))
        states[:, 0] = inits
    x = _run_block(kernel, inits.copy(), horizon, streams, states, start_step=0)
    return x, states


def continue_batch(kernel: MarkovKernel, x: np.ndarray, horizon: int, streams: list[TrajectoryStreams]) -> np.ndarray:
    """Advance explicit states with explicit (already advanced) streams.

    Splitting a run of ``a + b`` steps into a run of ``a`` followed by
    ``continue_batch`` for ``b`` with the same stream objects reproduces the
    unsplit trajectories exactly.
    """
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2 or x.shape[1] != kernel.dim:
        raise ValueError(f"states have shape {x.shape}, expected (m, {kernel.dim})")
    return _run_block(kernel, x.copy(), horizon, streams, None, start_step=0)


# --- serialization ---------------------------------------------------------

_MAGIC = b"NBITRAJ1"
_HEADER = struct.Struct("<8sIIQQQ")  # magic, version, dim, count, horizon, seed
_VERSION = 1


def save_batch(batch: TrajectoryBatch, path) -> None:
    """Write a batch to the flat binary format.

    Header: magic, version, dim, count, horizon, seed (little-endian),
    followed by the init vector and the payload as row-major float64. The
    payload is the full (n, horizon+1, dim) state array when present,
    otherwise the (n, dim) endpoints; readers distinguish the two by size.
    """
    header = _HEADER.pack(
        _MAGIC, _VERSION, batch.dim, batch.count, batch.horizon, batch.seed & ((1 << 64) - 1)
    )
    payload = batch.states if batch.states is not None else batch.endpoints
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(np.ascontiguousarray(batch.init, dtype="<f8").tobytes())
        fh.write(np.ascontiguousarray(payload, dtype="<f8").tobytes())


def load_batch(path) -> TrajectoryBatch:
    with open(path, "rb") as fh:
        raw = fh.read()
    if len(raw) < _HEADER.size or raw[:8] != _MAGIC:
        raise ValueError("not a trajectory batch file")
    magic, version, dim, count, horizon, seed = _HEADER.unpack_from(raw, 0)
    if version != _VERSION:
        raise ValueError(f"unsupported version {version}")
    off = _HEADER.size
    init = np.frombuffer(raw, dtype="<f8", count=dim, offset=off).astype(np.float64)
    off += dim * 8
    remaining = (len(raw) - off) // 8
    full_len = count * (horizon + 1) * dim
    if remaining == full_len:
        states = np.frombuffer(raw, dtype="<f8", count=full_len, offset=off).astype(np.float64)
        states = states.reshape(count, horizon + 1, dim)
        endpoints = states[:, -1].copy()
    elif remaining == count * dim:
        states = None
        endpoints = np.frombuffer(raw, dtype="<f8", count=count * dim, offset=off).astype(np.float64)
        endpoints = endpoints.reshape(count, dim).copy()
    else:
        raise ValueError(f"payload size {remaining} matches neither full nor endpoint storage")
    return TrajectoryBatch(
        init=init, horizon=horizon, count=count, seed=seed, endpoints=endpoints, states=states
    )


def batch_to_csv(batch: TrajectoryBatch, path) -> None:
    """One state per row: trajectory id, step, then the coordinates."""
    if batch.states is None:
        raise ValueError("CSV export needs full state storage")
    dim = batch.dim
    with open(path, "w") as fh:
        fh.write("trajectory,step," + ",".join(f"x{i}" for i in range(dim)) + "\n")
        for i in range(batch.count):
            for t in range(batch.horizon + 1):
                coords = ",".join(repr(float(v)) for v in batch.states[i, t])
                fh.write(f"{i},{t},{coords}\n")
