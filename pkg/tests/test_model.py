import math

import numpy as np
import pytest

from mvae import autograd as ad
from mvae.errors import DimensionError, MVaeError
from mvae.gradcheck import finite_difference, relative_errors
from mvae.model import (
    ModelDims,
    ancestral_sample,
    build_model,
    encode,
    predict,
    predict_proba,
)
from mvae.networks import zero_network
from mvae.noise import new_noise_matrix, uniform_noise


@pytest.fixture
def model():
    return build_model(ModelDims(d_x=3, d_z1=2, d_z2=2, n_classes=3), hidden=(8,), seed=21,
                       noise=uniform_noise(0.2, 3))


def test_network_shapes(model):
    d = model.dims
    assert model.enc_z1.in_dim == d.d_x and model.enc_z1.out_dim == d.d_z1
    assert model.enc_y.out_dim == d.n_classes
    assert model.enc_z2.in_dim == d.d_z1 + d.n_classes and model.enc_z2.out_dim == d.d_z2
    assert model.dec_z1.in_dim == d.d_z2 + d.n_classes and model.dec_z1.out_dim == d.d_z1
    assert model.dec_x.in_dim == d.d_z1 and model.dec_x.out_dim == d.d_x


def test_bad_dims():
    with pytest.raises(MVaeError):
        ModelDims(2, 2, 2, 1)
    with pytest.raises(MVaeError):
        ModelDims(0, 2, 2, 2)


class TestAncestralSample:
    def test_identity_noise_keeps_labels(self):
        m = build_model(ModelDims(2, 2, 2, 3), seed=0, noise=new_noise_matrix(np.eye(3)))
        s = ancestral_sample(m, 500, seed=1)
        np.testing.assert_array_equal(s.y_obs, s.y)

    def test_zero_rows(self, model):
        with pytest.raises(MVaeError):
            ancestral_sample(model, 0)

    def test_degenerate_prior(self):
        # build_model rejects zero prior mass (the KL term needs log p(y)); sampling does not
        m = build_model(ModelDims(2, 2, 2, 3), seed=0, noise=uniform_noise(0.1, 3))
        m.prior_y = np.array([1.0, 0.0, 0.0])
        assert np.all(ancestral_sample(m, 300, seed=3).y == 0)

    def test_reproducible(self, model):
        a, b = ancestral_sample(model, 50, seed=9), ancestral_sample(model, 50, seed=9)
        for f in ("x", "y", "y_obs", "z1", "z2"):
            assert getattr(a, f).tobytes() == getattr(b, f).tobytes()

    def test_shapes(self, model):
        s = ancestral_sample(model, 7, seed=0)
        assert s.x.shape == (7, 3) and s.z1.shape == (7, 2) and s.z2.shape == (7, 2)

    def test_flip_rate(self):
        eps, n = 0.3, 100_000
        m = build_model(ModelDims(2, 2, 2, 4), hidden=(4,), seed=2, noise=uniform_noise(eps, 4))
        s = ancestral_sample(m, n, seed=5)
        rate = np.mean(s.y_obs != s.y)
        assert abs(rate - eps) < 3 * math.sqrt(eps * (1 - eps) / n)


class TestEncode:
    def test_zero_network(self, model):
        zero_network(model.enc_z1)
        g = encode(model, np.array([1.0, -2.0, 3.0]))
        np.testing.assert_array_equal(g.mean, 0.0)
        np.testing.assert_array_equal(g.log_var, 0.0)

    def test_deterministic(self, model):
        x = np.array([0.1, 0.2, 0.3])
        a, b = encode(model, x), encode(model, x)
        assert a.mean.tobytes() == b.mean.tobytes()

    def test_dimension(self, model):
        with pytest.raises(DimensionError):
            encode(model, np.ones(2))

    def test_jacobian_matches_finite_differences(self, model):
        x0 = np.array([0.4, -1.1, 0.7])
        for out in ("mean", "log_var"):
            for j in range(model.dims.d_z1):
                x = ad.parameter(x0)
                getattr(model.enc_z1(x), out)[j].backward()
                xs = x0.copy()
                numeric = finite_difference(
                    lambda: float(getattr(encode(model, xs), out)[j]), [xs])
                assert relative_errors([x.grad], numeric).max() < 1e-4


class TestPredict:
    def test_zero_classifier_is_uniform(self, model):
        zero_network(model.enc_y)
        np.testing.assert_allclose(predict(model, np.ones(3)).probs, 1 / 3)

    def test_single_zero_draw_equals_mean(self, model):
        x = np.array([0.3, 0.1, -0.5])
        mc = predict(model, x, mode="mc", n_samples=1, noise=np.zeros((1, 2)))
        np.testing.assert_allclose(mc.probs, predict(model, x).probs, atol=1e-15)

    def test_mc_needs_samples(self, model):
        with pytest.raises(MVaeError):
            predict(model, np.ones(3), mode="mc", n_samples=0)

    def test_mc_converges(self, model):
        x = np.array([0.3, 0.1, -0.5])
        a = predict(model, x, mode="mc", n_samples=10_000, seed=1).probs
        b = predict(model, x, mode="mc", n_samples=10_000, seed=2).probs
        assert 0.5 * np.abs(a - b).sum() < 0.02

    def test_always_a_distribution(self, model):
        x = np.random.default_rng(0).normal(scale=5, size=(200, 3))
        for mode in ("mean", "mc"):
            p = predict_proba(model, x, mode=mode, n_samples=3)
            assert np.all(p >= 0)
            np.testing.assert_allclose(p.sum(axis=1), 1.0, atol=1e-9)


def test_separate_classifier_width():
    m = build_model(ModelDims(3, 2, 2, 4), hidden=(8,), seed=0, classifier_hidden=())
    assert len(m.enc_y.weights) == 1 and m.enc_y.weights[0].data.shape == (4, 2)
    assert len(m.enc_z1.weights) == 2
