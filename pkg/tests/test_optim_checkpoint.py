"""Optimizer behavior and the binary checkpoint format."""
import numpy as np
import pytest

from dualfuse.numerics import (
    MAGIC,
    Adam,
    Tensor,
    load_checkpoint,
    save_checkpoint,
)


def test_zero_gradient_leaves_parameters_unchanged():
    w = Tensor([1.0, -2.0], requires_grad=True)
    opt = Adam([w], lr=0.1)
    w.grad = np.zeros(2)
    before = w.data.copy()
    opt.step()
    np.testing.assert_array_equal(w.data, before)


def test_single_step_descends_quadratic():
    w = Tensor([1.0], requires_grad=True)
    opt = Adam([w], lr=0.1)
    loss = (w * w).sum()
    loss.backward()
    opt.step()
    assert w.data[0] < 1.0


def test_converges_to_quadratic_minimum():
    # 200 steps on f(w) = (w - 3)^2 must land within 1e-2 of the minimum
    w = Tensor([0.0], requires_grad=True)
    opt = Adam([w], lr=0.1)
    for _ in range(200):
        opt.zero_grad()
        d = w - 3.0
        (d * d).sum().backward()
        opt.step()
    assert abs(w.data[0] - 3.0) < 1e-2


def test_missing_grad_is_an_error():
    w = Tensor([1.0], requires_grad=True)
    opt = Adam([w])
    with pytest.raises(RuntimeError, match="no gradient"):
        opt.step()


def test_moments_persist_across_calls():
    w = Tensor([10.0], requires_grad=True)
    opt = Adam([w], lr=0.5)
    for _ in range(3):
        opt.zero_grad()
        (w * w).sum().backward()
        opt.step()
    assert opt.t == 3
    assert opt.v[0][0] > 0


def test_checkpoint_roundtrip(tmp_path):
    rng = np.random.default_rng(0)
    params = {
        "enc.w": rng.standard_normal((3, 4)),
        "head.b": rng.standard_normal(5),
        "scalar": np.array(2.5),
    }
    path = tmp_path / "model.bin"
    save_checkpoint(path, params, meta={"seed": 7})
    loaded, meta = load_checkpoint(path)
    assert meta == {"seed": 7}
    assert set(loaded) == set(params)
    for k in params:
        np.testing.assert_array_equal(loaded[k], params[k])


def test_checkpoint_magic_and_layout(tmp_path):
    path = tmp_path / "model.bin"
    save_checkpoint(path, {"w": np.arange(3.0)})
    blob = path.read_bytes()
    assert blob.startswith(MAGIC)
    # trailing bytes are the little-endian float64 payload
    assert blob[-24:] == np.arange(3.0).astype("<f8").tobytes()


def test_checkpoint_rejects_wrong_magic(tmp_path):
    path = tmp_path / "bad.bin"
    path.write_bytes(b"NOTDF1" + b"\x00" * 16)
    with pytest.raises(ValueError, match="magic"):
        load_checkpoint(path)
