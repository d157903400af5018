"""Standardized common-space codes and the per-modality decoders."""
import numpy as np
import pytest

from dualfuse.encoders import FeatureGaussian
from dualfuse.numerics import Tensor, gradcheck
from dualfuse.reconstruction import (
    ModalityDecoder,
    common_code,
    normalize_available,
    reconstruct,
    recover_loss,
)


def gaussian(mean, var):
    return FeatureGaussian(mean=Tensor(mean), variance=Tensor(var))


def test_normalize_mean_is_zero():
    rng = np.random.default_rng(0)
    mu = rng.standard_normal((3, 4))
    g = gaussian(mu, np.ones((3, 4)))
    out = normalize_available(Tensor(mu.copy()), g)
    np.testing.assert_allclose(out.data, 0.0, atol=1e-12)


def test_normalize_unit_offset_gives_ones():
    rng = np.random.default_rng(1)
    mu = rng.standard_normal((2, 5))
    var = rng.uniform(0.5, 2.0, (2, 5))
    z = mu + np.sqrt(var)
    out = normalize_available(Tensor(z), gaussian(mu, var))
    np.testing.assert_allclose(out.data, 1.0, rtol=1e-12)


def test_normalize_rejects_sub_floor_variance():
    g = gaussian(np.zeros((1, 3)), np.full((1, 3), 1e-9))
    with pytest.raises(ValueError, match="floor"):
        normalize_available(Tensor(np.zeros((1, 3))), g)


def test_common_code_order_invariance():
    rng = np.random.default_rng(2)
    z = [Tensor(rng.standard_normal((2, 4))) for _ in range(3)]
    gs = [gaussian(rng.standard_normal((2, 4)), rng.uniform(0.5, 2, (2, 4)))
          for _ in range(3)]
    avail = np.ones((2, 3))
    u_a = common_code(z, gs, avail, skip=None)
    perm = [2, 0, 1]
    u_b = common_code([z[i] for i in perm], [gs[i] for i in perm],
                      avail[:, perm], skip=None)
    # a sum over the available set: any ordering gives the same total
    np.testing.assert_allclose(u_a.data, u_b.data, atol=1e-12)


def test_reconstruct_with_all_absent_fails():
    rng = np.random.default_rng(3)
    dec = ModalityDecoder(rng, 8)
    z = [Tensor(np.zeros((1, 8))) for _ in range(2)]
    gs = [gaussian(np.zeros((1, 8)), np.ones((1, 8))) for _ in range(2)]
    avail = np.zeros((1, 2))
    with pytest.raises(ValueError, match="no available modality"):
        reconstruct(0, z, gs, avail, dec)


def test_reconstruct_single_source_finite_and_deterministic():
    rng = np.random.default_rng(4)
    dec = ModalityDecoder(rng, 8)
    z = [Tensor(np.zeros((2, 8))), Tensor(rng.standard_normal((2, 8)))]
    gs = [gaussian(np.zeros((2, 8)), np.ones((2, 8))),
          gaussian(rng.standard_normal((2, 8)), rng.uniform(0.5, 2, (2, 8)))]
    avail = np.array([[0.0, 1.0], [0.0, 1.0]])
    a = reconstruct(0, z, gs, avail, dec)
    b = reconstruct(0, z, gs, avail, dec)
    assert np.isfinite(a.data).all()
    assert a.data.tobytes() == b.data.tobytes()


def test_decoder_shape_roundtrip():
    dec = ModalityDecoder(np.random.default_rng(5), 16)
    out = dec(Tensor(np.random.default_rng(6).standard_normal((3, 16))))
    assert out.shape == (3, 16)


def test_recover_loss_zero_when_equal():
    z = Tensor(np.random.default_rng(7).standard_normal((2, 8)))
    assert recover_loss(z, z).item() == 0.0


def test_recover_loss_unit_offset_is_dimension():
    z = Tensor(np.zeros((1, 64)))
    z_hat = Tensor(np.ones((1, 64)))
    assert abs(recover_loss(z_hat, z).item() - 64.0) < 1e-12


def test_recover_loss_nonnegative():
    rng = np.random.default_rng(8)
    for _ in range(20):
        a = Tensor(rng.standard_normal((3, 6)))
        b = Tensor(rng.standard_normal((3, 6)))
        assert recover_loss(a, b).item() >= 0.0


def test_recover_loss_gradients_match_finite_differences():
    rng = np.random.default_rng(9)
    dec = ModalityDecoder(rng, 8)
    z = [Tensor(np.zeros((2, 8))), Tensor(rng.standard_normal((2, 8)), requires_grad=True)]
    gs = [gaussian(np.zeros((2, 8)), np.ones((2, 8))),
          gaussian(rng.standard_normal((2, 8)), rng.uniform(0.5, 2, (2, 8)))]
    avail = np.array([[0.0, 1.0], [0.0, 1.0]])
    target = Tensor(rng.standard_normal((2, 8)))

    def fn(*args):
        z_hat = reconstruct(0, [z[0], args[0]], gs, avail, dec)
        return recover_loss(z_hat, target)

    err = gradcheck(fn, [z[1]] + dec.parameters(), rng, sample=10)
    assert err < 1e-4


def test_averaging_flag_divides_by_count():
    rng = np.random.default_rng(10)
    z = [Tensor(rng.standard_normal((2, 4))) for _ in range(3)]
    gs = [gaussian(np.zeros((2, 4)), np.ones((2, 4))) for _ in range(3)]
    avail = np.ones((2, 3))
    u_sum = common_code(z, gs, avail, skip=0)
    u_avg = common_code(z, gs, avail, skip=0, average=True)
    np.testing.assert_allclose(u_avg.data, u_sum.data / 2.0, rtol=1e-12)
