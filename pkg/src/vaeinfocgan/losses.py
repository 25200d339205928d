"""Loss terms of the hybrid model.

All reconstruction terms live in the log-normalized domain ``ln(1 + counts)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import torch
import torch.nn.functional as F

from .tiles import DomainError

LOG_2PI = math.log(2.0 * math.pi)


@dataclass
class ConditionPosterior:
    """Batched mixture-of-Gaussians posterior over z_c.

    weights: (B, K) simplex; means, log_variances: (B, K, d_z).
    """

    weights: torch.Tensor
    means: torch.Tensor
    log_variances: torch.Tensor

    @property
    def k(self) -> int:
        return self.weights.shape[-1]

    def mixture_mean(self) -> torch.Tensor:
        return (self.weights.unsqueeze(-1) * self.means).sum(dim=1)


def _same_shape(a: torch.Tensor, b: torch.Tensor) -> None:
    if a.shape != b.shape:
        raise DomainError(f"shape mismatch {tuple(a.shape)} vs {tuple(b.shape)}")


def sample_posterior(post: ConditionPosterior, u: torch.Tensor, eps: torch.Tensor) -> torch.Tensor:
    """Pick component k ~ weights by inverse CDF on ``u`` then draw mu_k + sigma_k * eps.

    The component choice is straight-through: the forward pass uses the
    one-hot choice, the backward pass sees the weights.
    """
    cdf = torch.cumsum(post.weights.detach(), dim=1)
    k = torch.searchsorted(cdf, u.unsqueeze(1).to(cdf.dtype)).clamp(max=post.k - 1)
    onehot = torch.zeros_like(post.weights).scatter_(1, k, 1.0)
    st = onehot + post.weights - post.weights.detach()
    comp = post.means + torch.exp(0.5 * post.log_variances) * eps.unsqueeze(1)
    return (st.unsqueeze(-1) * comp).sum(dim=1)


def kl_normal(mu: torch.Tensor, logvar: torch.Tensor) -> torch.Tensor:
    """KL(N(mu, exp(logvar)) || N(0, I)) summed over the last axis."""
    # expm1 avoids cancellation near logvar = 0, keeping the result >= 0
    return 0.5 * (mu.pow(2) + torch.expm1(logvar) - logvar).sum(dim=-1)


def log_normal_pdf(z: torch.Tensor, mu: torch.Tensor, logvar: torch.Tensor) -> torch.Tensor:
    return -0.5 * (LOG_2PI + logvar + (z - mu).pow(2) / logvar.exp()).sum(dim=-1)


def mixture_log_prob(z: torch.Tensor, post: ConditionPosterior) -> torch.Tensor:
    """log q(z) for (B, d_z) samples under the batched mixture."""
    comp = log_normal_pdf(z.unsqueeze(1), post.means, post.log_variances)  # (B, K)
    return torch.logsumexp(torch.log(post.weights) + comp, dim=1)


def kl_posterior(post: ConditionPosterior, z: torch.Tensor) -> torch.Tensor:
    """Per-example KL to the standard normal prior.

    Closed form for a single component, single-sample estimate
    log q(z) - log p(z) otherwise.
    """
    if not torch.all(torch.isfinite(post.log_variances)):
        raise DomainError("posterior log-variances must be finite")
    if post.k == 1:
        return kl_normal(post.means[:, 0], post.log_variances[:, 0])
    zeros = torch.zeros_like(z)
    return mixture_log_prob(z, post) - log_normal_pdf(z, zeros, zeros)


def loss_ae(x_log: torch.Tensor, mu: torch.Tensor) -> torch.Tensor:
    _same_shape(x_log, mu)
    return (x_log - mu).pow(2).mean()


def gaussian_nll(x_log: torch.Tensor, mu: torch.Tensor, log_sigma: torch.Tensor) -> torch.Tensor:
    """Mean per-element -log N(x; mu, sigma^2)."""
    _same_shape(x_log, mu)
    return (0.5 * LOG_2PI + log_sigma + 0.5 * (x_log - mu).pow(2) * torch.exp(-2.0 * log_sigma)).mean()


def loss_vae(x_log: torch.Tensor, post: ConditionPosterior, mu: torch.Tensor,
             log_sigma: torch.Tensor, z_c: torch.Tensor) -> tuple[torch.Tensor, torch.Tensor, torch.Tensor]:
    """Negative ELBO per output element: ``(total, nll, kl)``.

    ``nll`` is the mean per-element Gaussian NLL of the log-domain counts (the
    log-normal Jacobian does not depend on parameters and is dropped); ``kl``
    is the batch-mean KL, divided by the number of elements per example
    before being added so both terms share one scale.
    """
    if not torch.all(torch.isfinite(log_sigma)):
        raise DomainError("invalid output variance")
    nll = gaussian_nll(x_log, mu, log_sigma)
    kl = kl_posterior(post, z_c).mean()
    per_example = x_log[0].numel()
    return nll + kl / per_example, nll, kl


def loss_gan(real_logits: torch.Tensor, fake_logits: torch.Tensor) -> tuple[torch.Tensor, torch.Tensor]:
    """Non-saturating pair ``(L_gen, L_disc)``."""
    l_gen = F.softplus(-fake_logits).mean()
    l_disc = F.softplus(-real_logits).mean() + F.softplus(fake_logits).mean()
    return l_gen, l_disc


def loss_info(a: torch.Tensor, q_mean: torch.Tensor) -> torch.Tensor:
    """MSE form of the Gaussian info loss with fixed variance."""
    _same_shape(a, q_mean)
    return (a - q_mean).pow(2).mean()


def info_nll_constants(d_a: int, sigma_q: float) -> tuple[float, float]:
    """(scale, offset) so that the per-code Gaussian NLL = scale * MSE + offset."""
    return d_a / (2.0 * sigma_q ** 2), d_a * (0.5 * LOG_2PI + math.log(sigma_q))


def total_losses(ae, vae, gen, disc, info):
    """``(L_G_total, L_D_total)`` as plain unweighted sums."""
    return ae + vae + gen + info, ae + vae + disc + info
