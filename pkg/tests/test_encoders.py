"""Encoder trunks, Gaussian heads, and temporal uncertainty plumbing."""
import numpy as np
import pytest

from dualfuse.datasim import ModalitySpec
from dualfuse.encoders import (
    VAR_FLOOR,
    FeatureGaussian,
    GaussianHead,
    GRUCell,
    ModalityEncoder,
    input_uncertainty,
)
from dualfuse.numerics import ShapeError, Tensor, gradcheck


def make_encoder(kind="conv", window=16, channels=2, dim=8, seed=0):
    rng = np.random.default_rng(seed)
    spec = ModalitySpec("m", window=window, channels=channels, encoder=kind)
    return ModalityEncoder(rng, spec, dim)


def test_zero_window_gives_finite_features():
    enc = make_encoder()
    z = enc.encode(Tensor(np.zeros((3, 16, 2))))
    assert np.isfinite(z.data).all()


def test_encode_deterministic():
    enc = make_encoder()
    x = np.random.default_rng(1).standard_normal((2, 16, 2))
    z1 = enc.encode(Tensor(x))
    z2 = enc.encode(Tensor(x))
    assert z1.data.tobytes() == z2.data.tobytes()


def test_noise_perturbs_features():
    enc = make_encoder()
    rng = np.random.default_rng(2)
    x = rng.standard_normal((1, 16, 2))
    noisy = x + 0.5 * rng.standard_normal(x.shape)
    z_clean = enc.encode(Tensor(x))
    z_noisy = enc.encode(Tensor(noisy))
    assert np.abs(z_clean.data - z_noisy.data).max() > 0


def test_encoder_rejects_wrong_shape():
    enc = make_encoder()
    with pytest.raises(ShapeError):
        enc.encode(Tensor(np.zeros((2, 8, 2))))
    enc_mlp = make_encoder(kind="mlp")
    with pytest.raises(ShapeError):
        enc_mlp.encode(Tensor(np.zeros((2, 16, 3))))


def test_gaussian_head_variance_floor():
    rng = np.random.default_rng(3)
    head = GaussianHead(rng, 6)
    # drive the variance head strongly negative: floor still wins
    head.var2.w.data[:] = 0.0
    head.var2.b.data[:] = -40.0
    g = head(Tensor(rng.standard_normal((4, 6))))
    assert g.variance.data.min() >= VAR_FLOOR


def test_gaussian_head_deterministic():
    head = GaussianHead(np.random.default_rng(4), 6)
    x = Tensor(np.random.default_rng(5).standard_normal((2, 6)))
    a, b = head(x), head(x)
    assert a.mean.data.tobytes() == b.mean.data.tobytes()
    assert a.variance.data.tobytes() == b.variance.data.tobytes()


def test_input_uncertainty_is_l2_norm_of_variance():
    var = np.full((1, 4), VAR_FLOOR)
    g = FeatureGaussian(mean=Tensor(np.zeros((1, 4))), variance=Tensor(var))
    r = input_uncertainty(g)
    assert abs(r.data[0] - 2 * VAR_FLOOR) < 1e-18

    g2 = FeatureGaussian(
        mean=Tensor(np.zeros((1, 4))),
        variance=Tensor(np.array([[3.0, 4.0, 1e-9, 1e-9]])),
    )
    assert abs(input_uncertainty(g2).data[0] - 5.0) < 1e-9


def test_uncertainty_scales_linearly_with_variance():
    rng = np.random.default_rng(6)
    var = rng.uniform(0.1, 2.0, (3, 5))
    g1 = FeatureGaussian(Tensor(np.zeros((3, 5))), Tensor(var))
    g2 = FeatureGaussian(Tensor(np.zeros((3, 5))), Tensor(2.5 * var))
    np.testing.assert_allclose(
        input_uncertainty(g2).data, 2.5 * input_uncertainty(g1).data, rtol=1e-12
    )


def test_gru_empty_history_fails():
    cell = GRUCell(np.random.default_rng(7), 4, 4)
    with pytest.raises(ValueError, match="nonempty"):
        cell(Tensor(np.zeros((2, 0, 4))))


def test_temporal_gaussian_floor_and_determinism():
    enc = make_encoder(dim=8)
    seq = Tensor(np.random.default_rng(8).standard_normal((3, 5, 8)))
    g1 = enc.temporal_gaussian(seq)
    g2 = enc.temporal_gaussian(seq)
    assert g1.variance.data.min() >= VAR_FLOOR
    assert g1.variance.data.tobytes() == g2.variance.data.tobytes()


def test_gru_gradients_match_finite_differences():
    rng = np.random.default_rng(9)
    cell = GRUCell(rng, 3, 3)
    seq = Tensor(rng.standard_normal((2, 4, 3)), requires_grad=True)
    inputs = [seq] + cell.parameters()
    err = gradcheck(lambda *args: cell(args[0]), inputs, rng, sample=8)
    assert err < 1e-4


def test_trunk_gradients_match_finite_differences():
    rng = np.random.default_rng(10)
    enc = make_encoder(window=8, channels=2, dim=8, seed=11)
    x = Tensor(rng.standard_normal((2, 8, 2)), requires_grad=True)
    inputs = [x] + enc.trunk.parameters()
    err = gradcheck(lambda *args: enc.encode(args[0]), inputs, rng, sample=8)
    assert err < 1e-4


def test_channel_permutation_symmetry():
    """Consistently permuting feature channels of the history and the
    recurrent weights leaves the fluctuation uncertainty unchanged."""
    rng = np.random.default_rng(12)
    dim = 6
    enc = make_encoder(dim=dim, seed=13)
    seq = rng.standard_normal((2, 4, dim))
    s_orig = input_uncertainty(enc.temporal_gaussian(Tensor(seq))).data

    perm = np.random.default_rng(14).permutation(dim)
    cell = enc.gru
    for w in (cell.wxz, cell.wxr, cell.wxn):
        w.data = w.data[perm, :]
    s_perm = input_uncertainty(enc.temporal_gaussian(Tensor(seq[:, :, perm]))).data
    np.testing.assert_allclose(s_perm, s_orig, rtol=1e-10)
