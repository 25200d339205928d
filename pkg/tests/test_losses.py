import math

import numpy as np
import pytest
import torch
from hypothesis import given, settings, strategies as st
from scipy import integrate, stats

from vaeinfocgan import losses as L
from vaeinfocgan.tiles import DomainError



@pytest.fixture(autouse=True)
def _float64():
    old = torch.get_default_dtype()
    torch.set_default_dtype(torch.float64)
    yield
    torch.set_default_dtype(old)


def _post(w, mu, logvar):
    t = lambda v: torch.as_tensor(np.asarray(v, dtype=np.float64))
    return L.ConditionPosterior(t(w), t(mu), t(logvar))


def test_loss_ae_identity_and_closed_form():
    x = torch.rand(3, 1, 4, 4)
    assert L.loss_ae(x, x).item() == 0.0
    x = torch.full((2, 1, 4, 4), math.log(2.0))
    assert L.loss_ae(x, torch.zeros_like(x)).item() == pytest.approx(0.480453013918201, abs=1e-12)


def test_loss_ae_scalar_oracle():
    rng = np.random.default_rng(0)
    x, m = rng.normal(size=(2, 3, 5, 5)), rng.normal(size=(2, 3, 5, 5))
    expect = sum((a - b) ** 2 for a, b in zip(x.ravel(), m.ravel())) / x.size
    assert L.loss_ae(torch.tensor(x), torch.tensor(m)).item() == pytest.approx(expect, abs=1e-12)


def test_loss_ae_shape_mismatch():
    with pytest.raises(DomainError):
        L.loss_ae(torch.zeros(1, 1, 4, 4), torch.zeros(1, 1, 4, 5))


def test_kl_closed_form_values():
    assert L.kl_normal(torch.tensor([1.0]), torch.tensor([0.0])).item() == pytest.approx(0.5, abs=1e-12)
    assert L.kl_normal(torch.zeros(5), torch.zeros(5)).item() == 0.0


@settings(max_examples=100, deadline=None)
@given(st.floats(-5, 5), st.floats(-4, 4))
def test_kl_closed_form_nonnegative(mu, logvar):
    kl = L.kl_normal(torch.tensor([mu]), torch.tensor([logvar])).item()
    expect = 0.5 * (mu ** 2 + math.exp(logvar) - 1 - logvar)
    assert kl >= 0 and kl == pytest.approx(expect, rel=1e-12, abs=1e-15)


def test_vae_standard_normal_degeneracy():
    x = torch.rand(2, 1, 4, 4)
    post = _post([[1.0], [1.0]], np.zeros((2, 1, 3)), np.zeros((2, 1, 3)))
    total, nll, kl = L.loss_vae(x, post, x.clone(), torch.tensor(0.0), torch.zeros(2, 3))
    assert kl.item() == 0.0
    assert nll.item() == pytest.approx(0.5 * math.log(2 * math.pi), abs=1e-12)
    assert total.item() == nll.item()


def test_vae_kl_normalized_per_element():
    x = torch.zeros(1, 1, 4, 4)
    post = _post([[1.0]], [[[1.0]]], [[[0.0]]])
    total, nll, kl = L.loss_vae(x, post, x, torch.tensor(0.0), torch.zeros(1, 1))
    assert kl.item() == pytest.approx(0.5)
    assert (total - nll).item() == pytest.approx(0.5 / 16)


def test_vae_rejects_bad_variance():
    x = torch.zeros(1, 1, 2, 2)
    post = _post([[1.0]], [[[0.0]]], [[[0.0]]])
    with pytest.raises(DomainError):
        L.loss_vae(x, post, x, torch.tensor(float("inf")), torch.zeros(1, 1))
    post = _post([[1.0]], [[[0.0]]], [[[float("nan")]]])
    with pytest.raises(DomainError):
        L.loss_vae(x, post, x, torch.tensor(0.0), torch.zeros(1, 1))


def test_gaussian_nll_matches_scipy():
    rng = np.random.default_rng(1)
    x, m = rng.normal(size=(2, 1, 3, 3)), rng.normal(size=(2, 1, 3, 3))
    ls = 0.3
    expect = -stats.norm.logpdf(x, m, math.exp(ls)).mean()
    got = L.gaussian_nll(torch.tensor(x), torch.tensor(m), torch.tensor(ls)).item()
    assert got == pytest.approx(expect, abs=1e-12)


MIX_W = np.array([0.1, 0.2, 0.3, 0.4])
MIX_MU = np.array([-2.0, -0.5, 0.7, 2.5])
MIX_SD = np.array([0.5, 1.0, 0.3, 0.8])


def _mixture_pdf(z):
    return float(np.sum(MIX_W * stats.norm.pdf(z, MIX_MU, MIX_SD)))


def quadrature_kl() -> float:
    """KL(mixture || N(0,1)) by adaptive 1-D quadrature (independent oracle)."""
    def integrand(z):
        q = _mixture_pdf(z)
        return 0.0 if q == 0 else q * (math.log(q) - stats.norm.logpdf(z))
    val, _ = integrate.quad(integrand, -20, 20, points=list(MIX_MU), limit=400, epsabs=1e-12)
    return val


def monte_carlo_kl(samples: int = 100_000, seed: int = 0) -> float:
    g = torch.Generator().manual_seed(seed)
    post = _post(np.tile(MIX_W, (samples, 1)), np.tile(MIX_MU[:, None], (samples, 1, 1)),
                 np.tile(2 * np.log(MIX_SD)[:, None], (samples, 1, 1)))
    z = L.sample_posterior(post, torch.rand(samples, generator=g), torch.randn(samples, 1, generator=g))
    return L.kl_posterior(post, z).mean().item()


def test_quadrature_oracle_frozen():
    # 30-digit mpmath quadrature of the same integral
    assert quadrature_kl() == pytest.approx(0.913477064000809, abs=1e-9)


def test_mixture_mc_kl_matches_quadrature():
    assert monte_carlo_kl() == pytest.approx(quadrature_kl(), rel=0.01)


def test_mixture_log_prob_matches_scipy():
    post = _post(MIX_W[None], MIX_MU[None, :, None], 2 * np.log(MIX_SD)[None, :, None])
    for z in (-3.0, 0.0, 1.2):
        got = L.mixture_log_prob(torch.tensor([[z]]), post).item()
        assert got == pytest.approx(math.log(_mixture_pdf(z)), abs=1e-12)


def test_sample_posterior_single_component():
    post = _post([[1.0]], [[[0.5, -1.0]]], [[[math.log(4.0), 0.0]]])
    eps = torch.tensor([[1.0, 2.0]])
    z = L.sample_posterior(post, torch.tensor([0.3]), eps)
    assert torch.allclose(z, torch.tensor([[2.5, 1.0]]))


def test_sample_posterior_zero_variance_picks_mean():
    post = _post([[0.25, 0.75]], [[[1.0], [7.0]]], [[[-80.0], [-80.0]]])
    z_lo = L.sample_posterior(post, torch.tensor([0.2]), torch.ones(1, 1))
    z_hi = L.sample_posterior(post, torch.tensor([0.9]), torch.ones(1, 1))
    assert z_lo.item() == pytest.approx(1.0) and z_hi.item() == pytest.approx(7.0)


def test_sample_mean_matches_mixture_mean():
    n = 10_000
    g = torch.Generator().manual_seed(3)
    post = _post(np.tile(MIX_W, (n, 1)), np.tile(MIX_MU[:, None], (n, 1, 1)),
                 np.tile(2 * np.log(MIX_SD)[:, None], (n, 1, 1)))
    z = L.sample_posterior(post, torch.rand(n, generator=g), torch.randn(n, 1, generator=g)).numpy().ravel()
    mean = float(np.sum(MIX_W * MIX_MU))
    var = float(np.sum(MIX_W * (MIX_SD ** 2 + MIX_MU ** 2))) - mean ** 2
    assert abs(z.mean() - mean) < 3 * math.sqrt(var / n)
    assert post.mixture_mean()[0].item() == pytest.approx(mean)


def test_straight_through_gradient_reaches_weights():
    w = torch.tensor([[0.3, 0.7]], requires_grad=True)
    post = L.ConditionPosterior(w, torch.tensor([[[1.0], [3.0]]]), torch.zeros(1, 2, 1))
    z = L.sample_posterior(post, torch.tensor([0.9]), torch.zeros(1, 1))
    assert z.item() == 3.0
    z.sum().backward()
    assert torch.allclose(w.grad, torch.tensor([[1.0, 3.0]]))


def test_loss_gan_values():
    g, d = L.loss_gan(torch.zeros(4), torch.zeros(4))
    assert g.item() == pytest.approx(math.log(2), abs=1e-12)
    assert d.item() == pytest.approx(2 * math.log(2), abs=1e-12)
    _, d = L.loss_gan(torch.full((3,), 60.0), torch.full((3,), -60.0))
    assert d.item() < 1e-20


def test_loss_gan_scalar_oracle():
    rng = np.random.default_rng(2)
    r, f = rng.normal(size=7) * 3, rng.normal(size=7) * 3
    sp = lambda v: math.log1p(math.exp(-abs(v))) + max(v, 0.0)
    g, d = L.loss_gan(torch.tensor(r), torch.tensor(f))
    assert g.item() == pytest.approx(sum(sp(-v) for v in f) / 7, abs=1e-12)
    assert d.item() == pytest.approx(sum(sp(-v) for v in r) / 7 + sum(sp(v) for v in f) / 7, abs=1e-12)


def test_generator_loss_is_non_saturating():
    f = torch.tensor([-50.0, -20.0], requires_grad=True)
    g, _ = L.loss_gan(torch.zeros(2), f)
    g.backward()
    # per-logit derivative of softplus(-f) tends to -1, scaled by the 1/2 mean
    assert torch.allclose(f.grad, torch.full((2,), -0.5))


def test_loss_info_values():
    a = torch.rand(3, 4)
    assert L.loss_info(a, a).item() == 0.0
    assert L.loss_info(torch.ones(2, 4), torch.zeros(2, 4)).item() == 1.0
    with pytest.raises(DomainError):
        L.loss_info(torch.ones(2, 4), torch.zeros(2, 3))


def test_info_nll_constants_match_gaussian_nll():
    rng = np.random.default_rng(4)
    a, q = rng.uniform(size=(5, 3)), rng.uniform(size=(5, 3))
    sigma = 0.7
    scale, offset = L.info_nll_constants(3, sigma)
    mse = float(((a - q) ** 2).mean())
    nll = -stats.norm.logpdf(a, q, sigma).sum(axis=1).mean()
    assert scale * mse + offset == pytest.approx(nll, abs=1e-12)


def test_total_losses():
    assert L.total_losses(1, 1, 1, 1, 1) == (4, 4)
    assert L.total_losses(0, 0, 0, 0, 0) == (0, 0)
    rng = np.random.default_rng(5)
    for _ in range(100):
        p = rng.normal(size=5)
        g, d = L.total_losses(*p)
        assert abs(g - (p[0] + p[1] + p[2] + p[4])) <= 1e-9
        assert abs(d - (p[0] + p[1] + p[3] + p[4])) <= 1e-9
