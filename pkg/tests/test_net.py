import numpy as np
import pytest

from basinid import (
    InsufficientPairsError,
    MlpParams,
    PairSample,
    TrainConfig,
    bce_loss,
    estimate_pair_risk,
    init_params,
    siamese_forward,
    train,
)
from basinid.net import (
    PairBatch,
    forward_pairs,
    holdout_accuracy,
    load_params,
    pair_loss_and_grads,
    save_params,
)


def small_params(seed=0, input_dim=4):
    return init_params([input_dim, 8, 6], [6, 4, 1], seed)


def random_pairs(rng, n, dim, separated=False):
    if separated:
        centers = np.array([[3.0] + [0.0] * (dim - 1), [-3.0] + [0.0] * (dim - 1)])
        which_a = rng.integers(0, 2, n)
        same = rng.integers(0, 2, n)
        which_b = np.where(same == 1, which_a, 1 - which_a)
        a = centers[which_a] + 0.3 * rng.standard_normal((n, dim))
        b = centers[which_b] + 0.3 * rng.standard_normal((n, dim))
        return PairBatch(a=a, b=b, labels=same.astype(float))
    a = rng.standard_normal((n, dim))
    b = rng.standard_normal((n, dim))
    return PairBatch(a=a, b=b, labels=rng.integers(0, 2, n).astype(float))


# --- forward -----------------------------------------------------------------


def test_identical_pairs_share_one_probability(rng):
    params = small_params()
    xs = rng.standard_normal((10, 4))
    p = forward_pairs(params, xs, xs)
    assert np.all(p == p[0])
    assert 0.0 < p[0] < 1.0


def test_swap_symmetry_is_bit_exact(rng):
    params = small_params()
    a = rng.standard_normal((1000, 4))
    b = rng.standard_normal((1000, 4))
    assert np.array_equal(forward_pairs(params, a, b), forward_pairs(params, b, a))


def test_fresh_params_give_valid_probability(rng):
    params = init_params([7, 16, 8], [8, 4, 1], seed=5)
    pair = PairSample(a=rng.standard_normal(7), b=rng.standard_normal(7), label=1)
    p = siamese_forward(params, pair)
    assert 0.0 < p < 1.0 and np.isfinite(p)


# --- loss and gradients ------------------------------------------------------


def test_bce_values():
    assert np.isclose(bce_loss(0.5, 1), np.log(2.0), atol=1e-15)
    assert np.isclose(bce_loss(0.5, 0), np.log(2.0), atol=1e-15)
    assert bce_loss(1.0 - 1e-12, 1) < 1e-11
    assert bce_loss(1e-12, 0) < 1e-11
    assert bce_loss(1.0, 1) >= 0.0  # clamped, no error


def test_gradients_match_finite_differences(rng):
    params = small_params(seed=3)
    batch = random_pairs(rng, 20, 4)
    _, grads = pair_loss_and_grads(params, batch.a, batch.b, batch.labels)
    h = 1e-5
    worst = 0.0
    for stack_name in ("trunk", "head"):
        layers = getattr(params, stack_name)
        glayers = getattr(grads, stack_name)
        for li, (w, b) in enumerate(layers):
            for arr, garr in ((w, glayers[li][0]), (b, glayers[li][1])):
                flat = arr.ravel()
                gflat = garr.ravel()
                for idx in range(flat.size):
                    orig = flat[idx]
                    flat[idx] = orig + h
                    lp, _ = pair_loss_and_grads(params, batch.a, batch.b, batch.labels)
                    flat[idx] = orig - h
                    lm, _ = pair_loss_and_grads(params, batch.a, batch.b, batch.labels)
                    flat[idx] = orig
                    fd = (lp - lm) / (2 * h)
                    rel = abs(gflat[idx] - fd) / max(1e-6, abs(gflat[idx]), abs(fd))
                    worst = max(worst, rel)
    assert worst < 1e-4, f"worst relative gradient error {worst}"


# --- training ----------------------------------------------------------------


def test_train_separable_blobs(rng):
    batch = random_pairs(rng, 1500, 2, separated=True)
    eval_batch = random_pairs(rng, 1000, 2, separated=True)
    params = init_params([2, 32, 16], [16, 8, 1], seed=1)
    cfg = TrainConfig(epochs=30, batch_size=64, lr=3e-3, seed=7)
    result = train(params, batch, cfg)
    assert not result.aborted
    assert holdout_accuracy(result.params, eval_batch) > 0.99


def test_identical_distributions_give_chance_accuracy(rng):
    accs = []
    for seed in range(5):
        batch = random_pairs(rng, 800, 2)
        eval_batch = random_pairs(rng, 1200, 2)
        params = init_params([2, 16, 8], [8, 4, 1], seed=seed)
        cfg = TrainConfig(epochs=10, batch_size=128, lr=1e-3, seed=seed)
        result = train(params, batch, cfg)
        accs.append(holdout_accuracy(result.params, eval_batch))
    assert all(0.45 <= a <= 0.55 for a in accs), accs
    assert 0.47 <= np.mean(accs) <= 0.53


def test_zero_epochs_returns_params_unchanged(rng):
    params = small_params(seed=2)
    batch = random_pairs(rng, 50, 4)
    result = train(params, batch, TrainConfig(epochs=0, seed=1))
    for (w0, b0), (w1, b1) in zip(params.trunk + params.head, result.params.trunk + result.params.head):
        assert np.array_equal(w0, w1) and np.array_equal(b0, b1)


def test_training_determinism_and_seed_sensitivity(rng):
    batch = random_pairs(rng, 400, 3)
    params = init_params([3, 8, 4], [4, 1], seed=0)
    r1 = train(params, batch, TrainConfig(epochs=3, seed=5))
    r2 = train(params, batch, TrainConfig(epochs=3, seed=5))
    r3 = train(params, batch, TrainConfig(epochs=3, seed=6))
    assert all(
        np.array_equal(a[0], b[0]) and np.array_equal(a[1], b[1])
        for a, b in zip(r1.params.trunk + r1.params.head, r2.params.trunk + r2.params.head)
    )
    assert any(
        not np.array_equal(a[0], b[0])
        for a, b in zip(r1.params.trunk, r3.params.trunk)
    )


def test_train_requires_both_labels(rng):
    a = rng.standard_normal((20, 2))
    batch = PairBatch(a=a, b=a + 0.1, labels=np.ones(20))
    with pytest.raises(ValueError):
        train(small_params(input_dim=2), batch, TrainConfig(epochs=1))


def test_train_accepts_pair_sample_lists(rng):
    samples = [
        PairSample(a=rng.standard_normal(4), b=rng.standard_normal(4), label=i % 2)
        for i in range(64)
    ]
    result = train(small_params(), samples, TrainConfig(epochs=1, batch_size=16, seed=0))
    assert len(result.train_losses) == 1


def test_abort_on_numeric_failure(rng):
    batch = random_pairs(rng, 200, 4)
    params = small_params(seed=4)
    cfg = TrainConfig(epochs=5, batch_size=32, lr=1e12, seed=0)
    result = train(params, batch, cfg)
    assert result.aborted
    for w, b in result.params.trunk + result.params.head:
        assert np.isfinite(w).all() and np.isfinite(b).all()


def test_validation_fraction_bounds():
    with pytest.raises(ValueError):
        TrainConfig(validation_fraction=0.0)
    with pytest.raises(ValueError):
        TrainConfig(validation_fraction=1.0)


# --- risk estimation ---------------------------------------------------------


def constant_half_params(input_dim=2):
    params = init_params([input_dim, 4], [4, 1], seed=0)
    w, b = params.head[-1]
    params.head[-1] = (np.zeros_like(w), np.zeros_like(b))
    return params


def balanced_cell(rng, center_i, center_j, m=200, dim=2):
    half, quarter = m // 2, m // 4
    pts_i = center_i + 0.1 * rng.standard_normal((m, dim))
    pts_j = center_j + 0.1 * rng.standard_normal((m, dim))
    pairs = []
    for r in range(half):
        pairs.append(PairSample(a=pts_i[r], b=pts_j[r], label=0))
    for r in range(quarter):
        pairs.append(PairSample(a=pts_i[r], b=pts_i[r + quarter], label=1))
        pairs.append(PairSample(a=pts_j[r], b=pts_j[r + quarter], label=1))
    return pairs


def test_constant_predictor_risk_exactly_half(rng):
    params = constant_half_params()
    cells = {(0, 1): balanced_cell(rng, np.zeros(2), np.ones(2))}
    risk = estimate_pair_risk(params, cells, min_pairs=200)
    assert risk[0, 1] == 0.5 and risk[1, 0] == 0.5
    assert np.isnan(risk[0, 0]) and np.isnan(risk[1, 1])


def test_perfect_separator_risk_zero(rng):
    # hand-built net on 1-d input: p = sigmoid(5 - 10 * |a - b|)
    trunk = [(np.array([[1.0]]), np.zeros(1))]
    head = [(np.array([[-10.0]]), np.array([5.0]))]
    params = MlpParams(trunk=trunk, head=head)
    cells = {(0, 1): balanced_cell(rng, np.array([-10.0]), np.array([10.0]), dim=1)}
    risk = estimate_pair_risk(params, cells, min_pairs=200)
    assert risk[0, 1] == 0.0


def test_insufficient_pairs_error(rng):
    params = constant_half_params()
    cells = {(0, 1): balanced_cell(rng, np.zeros(2), np.ones(2), m=40)}
    with pytest.raises(InsufficientPairsError) as err:
        estimate_pair_risk(params, cells, min_pairs=200)
    assert err.value.cell == (0, 1)


def test_risk_symmetric_in_cell_orientation(rng):
    params = small_params(input_dim=2, seed=9)
    cell = balanced_cell(rng, np.zeros(2), np.ones(2))
    swapped = [PairSample(a=s.b, b=s.a, label=s.label) for s in cell]
    r1 = estimate_pair_risk(params, {(0, 1): cell}, min_pairs=200)
    r2 = estimate_pair_risk(params, {(1, 0): swapped}, min_pairs=200)
    assert r1[0, 1] == r2[0, 1]


# --- checkpoints -------------------------------------------------------------


def test_checkpoint_roundtrip(tmp_path, rng):
    params = init_params([5, 8, 6], [6, 3, 1], seed=11)
    params = params.with_standardization(rng.standard_normal((100, 5)) * 3 + 1)
    path = tmp_path / "net.bin"
    save_params(params, path)
    loaded = load_params(path)
    a = rng.standard_normal((20, 5))
    b = rng.standard_normal((20, 5))
    assert np.array_equal(forward_pairs(params, a, b), forward_pairs(loaded, a, b))
    assert np.array_equal(loaded.input_offset, params.input_offset)


def test_checkpoint_roundtrip_without_standardization(tmp_path, rng):
    params = init_params([3, 4], [4, 1], seed=0)
    path = tmp_path / "net.bin"
    save_params(params, path)
    loaded = load_params(path)
    assert loaded.input_offset is None
    a = rng.standard_normal((5, 3))
    assert np.array_equal(forward_pairs(params, a, a + 1), forward_pairs(loaded, a, a + 1))


def test_checkpoint_rejects_junk(tmp_path):
    path = tmp_path / "junk.bin"
    path.write_bytes(b"garbage")
    with pytest.raises(ValueError):
        load_params(path)
