import numpy as np
import pytest

from graphere.autodiff import Tensor
from graphere.checkpoint import load_checkpoint, restore_params, save_checkpoint
from graphere.optim import AdamW, ParamGroup


def test_zero_grad_zero_decay_leaves_param_unchanged():
    p = Tensor([1.0, -2.0], requires_grad=True)
    p.grad = np.zeros(2)
    opt = AdamW([ParamGroup({"p": p}, lr=0.1)], weight_decay=0.0)
    opt.step()
    np.testing.assert_array_equal(p.data, [1.0, -2.0])


def test_single_step_hand_value():
    # one bias-corrected step: m_hat = g, v_hat = g^2, so p -= lr * g/(|g|+eps)
    p = Tensor(np.array(1.0), requires_grad=True)
    p.grad = np.array(1.0)
    opt = AdamW([ParamGroup({"p": p}, lr=0.1)], betas=(0.9, 0.999), eps=1e-8,
                weight_decay=0.0)
    opt.step()
    assert float(p.data) == pytest.approx(0.9, abs=1e-7)
    assert p.grad is None
    assert opt.state.step_count == 1


def test_descends_quadratic():
    p = Tensor(np.array(1.0), requires_grad=True)
    opt = AdamW([ParamGroup({"p": p}, lr=0.1)], weight_decay=0.0)
    values = [abs(float(p.data))]
    for _ in range(10):
        loss = (p * p).sum()
        loss.backward()
        opt.step()
        values.append(abs(float(p.data)))
    assert all(b < a for a, b in zip(values, values[1:]))


def test_missing_grad_names_parameter():
    p = Tensor([1.0], requires_grad=True)
    opt = AdamW([ParamGroup({"weights.alpha": p}, lr=0.1)])
    with pytest.raises(ValueError, match="weights.alpha"):
        opt.step()


def test_bit_reproducible_across_runs():
    def run():
        rng = np.random.default_rng(5)
        p = Tensor(rng.normal(size=(3, 3)), requires_grad=True)
        opt = AdamW([ParamGroup({"p": p}, lr=0.01)], weight_decay=0.01)
        for step in range(5):
            g = np.random.default_rng(100 + step).normal(size=(3, 3))
            p.grad = g
            opt.step()
        return p.data.copy()

    a, b = run(), run()
    assert np.array_equal(a, b)


def test_per_group_learning_rates():
    slow = Tensor(np.array(1.0), requires_grad=True)
    fast = Tensor(np.array(1.0), requires_grad=True)
    slow.grad = np.array(1.0)
    fast.grad = np.array(1.0)
    opt = AdamW([ParamGroup({"slow": slow}, lr=1e-3), ParamGroup({"fast": fast}, lr=1e-1)],
                weight_decay=0.0)
    opt.step()
    assert abs(1.0 - float(fast.data)) > abs(1.0 - float(slow.data))


def test_checkpoint_round_trip(tmp_path):
    rng = np.random.default_rng(2)
    params = {
        "layer.weight": Tensor(rng.normal(size=(4, 3)), requires_grad=True),
        "layer.bias": Tensor(rng.normal(size=4), requires_grad=True),
    }
    save_checkpoint(params, tmp_path / "ckpt")
    loaded = load_checkpoint(tmp_path / "ckpt")
    for name, p in params.items():
        np.testing.assert_array_equal(loaded[name], p.data)

    fresh = {name: Tensor(np.zeros_like(p.data), requires_grad=True)
             for name, p in params.items()}
    restore_params(fresh, loaded)
    for name in params:
        np.testing.assert_array_equal(fresh[name].data, params[name].data)


def test_checkpoint_shape_mismatch_rejected(tmp_path):
    params = {"w": Tensor(np.zeros((2, 2)), requires_grad=True)}
    save_checkpoint(params, tmp_path / "ckpt")
    wrong = {"w": Tensor(np.zeros((3, 3)), requires_grad=True)}
    with pytest.raises(ValueError, match="shape"):
        restore_params(wrong, load_checkpoint(tmp_path / "ckpt"))
