import numpy as np
import pytest

from basinid import (
    GaussianMixture,
    MalaKernel,
    SimulationDivergedError,
    batch_to_csv,
    load_batch,
    save_batch,
    simulate_batch,
    simulate_group,
    simulate_trajectory,
)
from basinid.core import continue_batch
from basinid.rng import TrajectoryStreams, derive_seed

from conftest import ExplodingKernel, IdentityKernel, ShiftKernel


def test_identity_kernel_keeps_state():
    traj = simulate_trajectory(IdentityKernel(2), np.array([1.0, 2.0]), horizon=3, seed=0)
    assert traj.shape == (4, 2)
    assert np.array_equal(traj, np.tile([1.0, 2.0], (4, 1)))


def test_shift_kernel_composes():
    traj = simulate_trajectory(ShiftKernel(1), np.array([0.0]), horizon=2, seed=0)
    assert np.array_equal(traj[:, 0], [0.0, 1.0, 2.0])


def test_zero_horizon_returns_init_only():
    traj = simulate_trajectory(ShiftKernel(1), np.array([5.0]), horizon=0, seed=0)
    assert np.array_equal(traj, [[5.0]])


def test_double_run_determinism():
    kernel = MalaKernel(GaussianMixture(np.zeros((1, 3)), 1.0), step_size=0.2)
    a = simulate_batch(kernel, np.zeros(3), horizon=50, count=4, seed=9)
    b = simulate_batch(kernel, np.zeros(3), horizon=50, count=4, seed=9)
    assert np.array_equal(a.states, b.states)
    assert np.array_equal(a.endpoints, b.endpoints)


def test_single_count_batch_matches_simulate_trajectory():
    kernel = MalaKernel(GaussianMixture(np.zeros((1, 2)), 1.0), step_size=0.3)
    batch = simulate_batch(kernel, np.ones(2), horizon=40, count=1, seed=77)
    traj = simulate_trajectory(kernel, np.ones(2), horizon=40, seed=77)
    assert np.array_equal(batch.states[0], traj)


def test_batch_rows_match_isolated_trajectories():
    # trajectory i is a function of its sub-seed alone, independent of grouping
    kernel = MalaKernel(GaussianMixture(np.zeros((1, 2)), 1.0), step_size=0.25)
    batch = simulate_batch(kernel, np.ones(2), horizon=30, count=6, seed=5)
    for i in range(6):
        _, states = simulate_group(kernel, np.ones((1, 2)), 30, [derive_seed(5, i)], store="full")
        assert np.array_equal(batch.states[i], states[0])


def test_identity_batch_rows_equal_init():
    batch = simulate_batch(IdentityKernel(3), np.array([1.0, 2.0, 3.0]), 5, count=100, seed=1)
    assert np.array_equal(batch.endpoints, np.tile([1.0, 2.0, 3.0], (100, 1)))
    assert np.array_equal(batch.states[:, 0], np.tile([1.0, 2.0, 3.0], (100, 1)))


def test_markov_split_of_seed_stream():
    # horizon a+b equals horizon a then b more steps on the same streams
    kernel = MalaKernel(GaussianMixture(np.zeros((1, 2)), 1.0), step_size=0.3)
    init = np.zeros(2)
    a, b = 17, 26
    full = simulate_batch(kernel, init, horizon=a + b, count=3, seed=4)
    streams = [TrajectoryStreams.from_seed(derive_seed(4, i)) for i in range(3)]
    x_a = continue_batch(kernel, np.tile(init, (3, 1)), a, streams)
    assert np.array_equal(full.states[:, a], x_a)
    x_ab = continue_batch(kernel, x_a, b, streams)
    assert np.array_equal(full.endpoints, x_ab)


def test_interleaved_simulations_match_sequential():
    kernel = MalaKernel(GaussianMixture(np.zeros((1, 1)), 1.0), step_size=0.4)
    s1 = TrajectoryStreams.from_seed(100)
    s2 = TrajectoryStreams.from_seed(200)
    x1, x2 = np.array([0.5]), np.array([-0.5])
    inter1, inter2 = [x1], [x2]
    for _ in range(20):
        x1 = kernel.step(x1, s1)
        x2 = kernel.step(x2, s2)
        inter1.append(x1)
        inter2.append(x2)
    t1 = TrajectoryStreams.from_seed(100)
    y1 = np.array([0.5])
    seq1 = [y1]
    for _ in range(20):
        y1 = kernel.step(y1, t1)
        seq1.append(y1)
    assert np.array_equal(np.stack(inter1), np.stack(seq1))


def test_divergence_reports_step_and_trajectory():
    with pytest.raises(SimulationDivergedError) as err:
        simulate_batch(ExplodingKernel(), np.array([1.0]), horizon=400, count=3, seed=0)
    assert err.value.step >= 1
    assert err.value.trajectory is not None
    assert "step" in str(err.value)


def test_input_validation():
    kernel = IdentityKernel(2)
    with pytest.raises(ValueError):
        simulate_batch(kernel, np.zeros(3), 5, 1, 0)
    with pytest.raises(ValueError):
        simulate_batch(kernel, np.zeros(2), -1, 1, 0)
    with pytest.raises(ValueError):
        simulate_batch(kernel, np.zeros(2), 5, 0, 0)
    with pytest.raises(ValueError):
        simulate_batch(kernel, np.array([np.nan, 0.0]), 5, 1, 0)
    with pytest.raises(ValueError):
        simulate_batch(kernel, np.zeros(2), 5, 1, 0, store="bogus")


def test_binary_roundtrip_full(tmp_path):
    kernel = MalaKernel(GaussianMixture(np.zeros((1, 2)), 1.0), step_size=0.3)
    batch = simulate_batch(kernel, np.ones(2), horizon=12, count=5, seed=3)
    path = tmp_path / "batch.bin"
    save_batch(batch, path)
    loaded = load_batch(path)
    assert np.array_equal(loaded.states, batch.states)
    assert np.array_equal(loaded.endpoints, batch.endpoints)
    assert loaded.horizon == 12 and loaded.count == 5
    assert np.array_equal(loaded.init, batch.init)


def test_binary_roundtrip_endpoints(tmp_path):
    kernel = MalaKernel(GaussianMixture(np.zeros((1, 2)), 1.0), step_size=0.3)
    batch = simulate_batch(kernel, np.ones(2), horizon=12, count=5, seed=3, store="endpoints")
    assert batch.states is None
    path = tmp_path / "ep.bin"
    save_batch(batch, path)
    loaded = load_batch(path)
    assert loaded.states is None
    assert np.array_equal(loaded.endpoints, batch.endpoints)


def test_store_endpoints_matches_full(tmp_path):
    kernel = MalaKernel(GaussianMixture(np.zeros((1, 2)), 1.0), step_size=0.3)
    full = simulate_batch(kernel, np.ones(2), horizon=20, count=4, seed=8)
    ends = simulate_batch(kernel, np.ones(2), horizon=20, count=4, seed=8, store="endpoints")
    assert np.array_equal(full.endpoints, ends.endpoints)


def test_csv_export(tmp_path):
    batch = simulate_batch(ShiftKernel(2, 0.5), np.zeros(2), horizon=2, count=2, seed=0)
    path = tmp_path / "batch.csv"
    batch_to_csv(batch, path)
    lines = path.read_text().strip().splitlines()
    assert lines[0] == "trajectory,step,x0,x1"
    assert len(lines) == 1 + 2 * 3
    assert lines[1].startswith("0,0,")
    fields = lines[3].split(",")
    assert fields[:2] == ["0", "2"] and float(fields[2]) == 1.0


def test_bad_magic_rejected(tmp_path):
    path = tmp_path / "junk.bin"
    path.write_bytes(b"not a batch file at all, definitely")
    with pytest.raises(ValueError):
        load_batch(path)
