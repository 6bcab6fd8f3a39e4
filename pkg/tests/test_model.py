import json

import numpy as np
import pytest

from blvkit.data import Dataset, GeneratorSpec, generate_longtail
from blvkit.errors import DataError
from blvkit.losses import LossConfig, cross_entropy
from blvkit.model import (
    SGD,
    Adam,
    ClassifierHead,
    TrainConfig,
    Trainer,
    checkpoint_to_dict,
    load_checkpoint,
    mean_pool,
    predict,
    save_checkpoint,
    train,
)
from blvkit.numerics import Rng
from conftest import central_diff


def _separable(seed=0, n=200):
    spec = GeneratorSpec(n_classes=2, n_samples=n, priors="uniform", dim=4, noise_std=0.05, separation=3.0, seed=seed)
    return generate_longtail(spec)


def test_zero_head_gives_uniform_softmax():
    head = ClassifierHead(np.zeros((3, 4)), np.zeros(4), dropout_rate=0.0)
    z = head.forward(np.ones((5, 2, 3)), np.array([2, 1, 2, 2, 1]))
    np.testing.assert_array_equal(z, np.zeros((5, 4)))


def test_single_token_pooling_is_identity(rng):
    x = rng.normal(size=(6, 1, 3))
    np.testing.assert_array_equal(mean_pool(x, np.ones(6, dtype=int)), x[:, 0])


def test_forward_matches_loop(rng):
    w, b = rng.normal(size=(3, 4)), rng.normal(size=4)
    x = rng.normal(size=(5, 4, 3))
    lengths = np.array([1, 4, 2, 3, 4])
    head = ClassifierHead(w, b, dropout_rate=0.0)
    out = head.forward(x, lengths)
    for i in range(5):
        pooled = x[i, : lengths[i]].mean(axis=0)
        np.testing.assert_allclose(out[i], pooled @ w + b, rtol=0, atol=1e-12)


def test_backward_basics(rng):
    head = ClassifierHead(rng.normal(size=(3, 2)), np.zeros(2), dropout_rate=0.0)
    x, lengths = rng.normal(size=(4, 1, 3)), np.ones(4, dtype=int)
    head.forward(x, lengths, training=True)
    zero = head.backward(np.zeros((4, 2)))
    assert not zero["weight"].any() and not zero["bias"].any()
    head.forward(x, lengths, training=True)
    g = rng.normal(size=(4, 2))
    np.testing.assert_allclose(head.backward(g)["bias"], g.sum(axis=0), rtol=0, atol=1e-15)
    with pytest.raises(RuntimeError):
        head.backward(g)


def test_backward_matches_finite_differences(rng):
    x = rng.normal(size=(6, 3, 4))
    lengths = np.array([3, 1, 2, 3, 2, 1])
    y = rng.integers(0, 3, size=6)
    w0, b0 = rng.normal(size=(4, 3)), rng.normal(size=3)

    def loss_at(w, b):
        return cross_entropy(ClassifierHead(w, b, 0.0).forward(x, lengths), y).value

    head = ClassifierHead(w0, b0, 0.0)
    grads = head.backward(cross_entropy(head.forward(x, lengths, training=True), y).grad)
    np.testing.assert_allclose(grads["weight"], central_diff(lambda w: loss_at(w, b0), w0), rtol=1e-4, atol=1e-7)
    np.testing.assert_allclose(grads["bias"], central_diff(lambda b: loss_at(w0, b), b0), rtol=1e-4, atol=1e-7)


def test_dropout_is_inverted_and_seeded():
    head = ClassifierHead(np.eye(2), np.zeros(2), dropout_rate=0.5)
    x = np.ones((4000, 1, 2))
    lengths = np.ones(4000, dtype=int)
    a = head.forward(x, lengths, training=True, rng=Rng(1))
    b = head.forward(x, lengths, training=True, rng=Rng(1))
    np.testing.assert_array_equal(a, b)
    assert set(np.unique(a)) <= {0.0, 2.0}
    assert abs(a.mean() - 1.0) < 0.05
    np.testing.assert_array_equal(head.forward(x, lengths), np.ones((4000, 2)))


def test_adam_zero_lr_leaves_parameters():
    p = {"w": np.array([1.0, -2.0])}
    Adam().step(p, {"w": np.array([0.3, -4.0])}, 0.0)
    np.testing.assert_array_equal(p["w"], [1.0, -2.0])


def test_adam_first_step_is_signed_lr():
    p = {"w": np.zeros(3)}
    Adam().step(p, {"w": np.array([0.5, -3.0, 1e-3])}, 0.01)
    np.testing.assert_allclose(p["w"], [-0.01, 0.01, -0.01], rtol=1e-5)


def test_adam_matches_reference_recursion(rng):
    p = {"w": rng.normal(size=4)}
    ref = p["w"].copy()
    m = np.zeros(4)
    v = np.zeros(4)
    opt = Adam(0.8, 0.95, 1e-6)
    for t in range(1, 6):
        g = rng.normal(size=4)
        opt.step(p, {"w": g}, 0.1)
        m = 0.8 * m + 0.2 * g
        v = 0.95 * v + 0.05 * g**2
        ref = ref - 0.1 * (m / (1 - 0.8**t)) / (np.sqrt(v / (1 - 0.95**t)) + 1e-6)
    np.testing.assert_allclose(p["w"], ref, rtol=1e-12)


def test_sgd_step():
    p = {"w": np.array([1.0])}
    SGD().step(p, {"w": np.array([2.0])}, 0.25)
    assert p["w"][0] == 0.5


def test_accumulating_copies_equals_single_step(rng):
    x = rng.normal(size=(4, 1, 5))
    lengths = np.ones(4, dtype=int)
    y = np.array([0, 1, 2, 1])
    cfg = TrainConfig(dropout_rate=0.0, learning_rate=1e-2, seed=4)
    a, b = Trainer(cfg, 5, 3), Trainer(cfg, 5, 3)
    _, g = a.microbatch_grads(x, lengths, y, None)
    sums = {k: v.copy() for k, v in g.items()}
    for _ in range(2):
        _, g2 = a.microbatch_grads(x, lengths, y, None)
        sums = {k: sums[k] + g2[k] for k in sums}
    a.apply(sums, 3)
    _, g = b.microbatch_grads(x, lengths, y, None)
    b.apply(g, 1)
    np.testing.assert_allclose(a.head.weight, b.head.weight, rtol=0, atol=1e-12)
    np.testing.assert_allclose(a.head.bias, b.head.bias, rtol=0, atol=1e-12)


def test_effective_batch_identity():
    ds = Dataset.from_vectors(np.tile([[0.5, -1.0, 2.0]], (8, 1)), [1] * 8, 3)
    base = dict(epochs=1, dropout_rate=0.0, learning_rate=1e-3, seed=2)
    h1, _, r1 = train(ds, TrainConfig(batch_size=4, grad_accumulation_steps=2, **base))
    h2, _, r2 = train(ds, TrainConfig(batch_size=8, grad_accumulation_steps=1, **base))
    assert r1.optimizer_steps == r2.optimizer_steps == 1
    np.testing.assert_allclose(h1.weight, h2.weight, rtol=0, atol=1e-12)
    np.testing.assert_allclose(h1.bias, h2.bias, rtol=0, atol=1e-12)


def test_partial_window_is_flushed():
    ds = Dataset.from_vectors(np.arange(20.0).reshape(10, 2), [0, 1] * 5, 2)
    # 10 samples, batch 4: microbatches of 4, 4, 2 -> one full window plus one partial
    _, _, report = train(ds, TrainConfig(epochs=3, learning_rate=1e-3))
    assert report.optimizer_steps == 6


def test_separable_data_reaches_full_training_accuracy():
    ds = _separable()
    _, _, report = train(ds, TrainConfig(learning_rate=1e-3, seed=1))
    assert report.train_accuracy == 1.0


@pytest.mark.parametrize("seed", [0, 1, 2])
def test_loss_non_increasing_after_second_epoch(seed):
    ds = _separable(seed=seed)
    _, _, report = train(ds, TrainConfig(seed=seed))
    tail = np.array(report.eval_losses[1:])
    assert np.all(np.diff(tail) <= 0), report.eval_losses


def test_training_is_deterministic():
    ds = generate_longtail(GeneratorSpec(n_samples=200, seed=5))
    cfg = TrainConfig(epochs=3, learning_rate=1e-3, seed=8, loss=LossConfig(kind="blv", sigma=2.0))
    h1, t1, r1 = train(ds, cfg)
    h2, t2, r2 = train(ds, cfg)
    assert h1.weight.tobytes() == h2.weight.tobytes()
    assert r1.epoch_losses == r2.epoch_losses
    assert json.dumps(checkpoint_to_dict(h1, t1.optimizer, t1.rngs)) == json.dumps(
        checkpoint_to_dict(h2, t2.optimizer, t2.rngs)
    )


def test_blv_sigma_zero_equals_cross_entropy_training():
    ds = generate_longtail(GeneratorSpec(n_samples=200, seed=5))
    a, _, _ = train(ds, TrainConfig(epochs=2, seed=3, loss=LossConfig(kind="cross_entropy")))
    b, _, _ = train(ds, TrainConfig(epochs=2, seed=3, loss=LossConfig(kind="blv", sigma=0.0)))
    assert a.weight.tobytes() == b.weight.tobytes()


def test_predict_tie_breaks_low_and_ignores_sigma():
    ds = generate_longtail(GeneratorSpec(n_samples=100, seed=2))
    zero = ClassifierHead(np.zeros((ds.dim, 5)), np.zeros(5), 0.1)
    pred, logits = predict(zero, ds)
    assert not pred.any() and logits.shape == (100, 5)
    head = ClassifierHead(Rng(1).normal(ds.dim * 5).reshape(ds.dim, 5), np.zeros(5))
    p1, _ = predict(head, ds)
    p2, _ = predict(head, ds)
    np.testing.assert_array_equal(p1, p2)


def test_predict_checks_shapes():
    ds = generate_longtail(GeneratorSpec(n_samples=100, seed=2))
    with pytest.raises(DataError):
        predict(ClassifierHead(np.zeros((ds.dim + 1, 5)), np.zeros(5)), ds)
    with pytest.raises(DataError):
        predict(ClassifierHead(np.zeros((ds.dim, 4)), np.zeros(4)), ds)


def test_train_rejects_empty_dev():
    ds = _separable()
    with pytest.raises(DataError):
        train(ds, TrainConfig(epochs=1), dev=ds.subset(np.array([], dtype=int)))


def test_train_config_validation():
    for bad in (dict(batch_size=0), dict(grad_accumulation_steps=0), dict(learning_rate=0.0), dict(epochs=0)):
        with pytest.raises(ValueError):
            TrainConfig(**bad).validate()


def test_checkpoint_round_trip(tmp_path):
    ds = generate_longtail(GeneratorSpec(n_samples=120, seed=6))
    head, trainer, _ = train(ds, TrainConfig(epochs=2, learning_rate=1e-3))
    path = tmp_path / "ck.json"
    save_checkpoint(path, head, trainer.optimizer, trainer.rngs, ds.class_names)
    back, opt, rngs, names = load_checkpoint(path)
    assert back.weight.tobytes() == head.weight.tobytes()
    assert back.bias.tobytes() == head.bias.tobytes()
    assert names == ds.class_names
    assert opt.state_dict() == trainer.optimizer.state_dict()
    np.testing.assert_array_equal(rngs["noise"].normal(5), trainer.rngs["noise"].normal(5))
    save_checkpoint(tmp_path / "again.json", back, opt, rngs, names)
    saved_again = checkpoint_to_dict(back, opt, rngs, names)
    original = json.loads(path.read_text())
    assert saved_again["weight"] == original["weight"]


def test_load_checkpoint_rejects_other_files(tmp_path):
    path = tmp_path / "x.json"
    path.write_text('{"format": "other"}')
    with pytest.raises(DataError):
        load_checkpoint(path)
    path.write_text("not json")
    with pytest.raises(DataError):
        load_checkpoint(path)
