"""The hybrid VAE / autoencoder / conditional InfoGAN with one shared decoder.

Dataflow: the feature encoder maps a raster ``x`` to a code ``a`` in
``[0, 1]^d_a``; the condition encoder maps the road raster ``y`` to a
mixture-of-Gaussians posterior over ``z_c``; the generator decodes
``z = [a; z_c]`` into the log-domain mean field ``mu``.  The discriminator sees
an image concatenated with ``y`` and carries an info head that regresses
``a``.  Only the condition encoder and generator are needed at inference.
"""

from __future__ import annotations

import logging
from dataclasses import asdict, dataclass, fields

import numpy as np
import torch
from torch import nn

from . import losses as L
from .losses import ConditionPosterior
from .nets import ConvDecoder, ConvEncoder, init_weights, sn
from .tiles import DomainError

log = logging.getLogger(__name__)

LOSS_KEYS = ("L_AE", "L_VAE", "L_gen", "L_disc", "L_info", "L_G_total", "L_D_total")


class NonFiniteLossError(RuntimeError):
    def __init__(self, msg: str, telemetry: dict | None = None):
        super().__init__(msg)
        self.telemetry = telemetry or {}


@dataclass
class TrainConfig:
    n: int = 64
    c: int = 1
    d_a: int = 8
    d_z: int = 32
    K: int = 4
    width: int = 32
    stages: int = 4
    hidden: int = 128
    lr_g: float = 2e-4
    lr_d: float = 2e-4
    beta1: float = 0.5
    beta2: float = 0.999
    batch_size: int = 32
    steps: int = 2000
    checkpoint_every: int = 500
    info_sigma: float = 1.0
    d_feat: int = 2
    seed: int = 0

    def __post_init__(self):
        if self.c not in (1, 12):
            raise DomainError("c must be 1 (CRM) or 12 (HCRM)")
        for f in fields(self):
            v = getattr(self, f.name)
            if f.name != "seed" and not v > 0:
                raise DomainError(f"config field {f.name} must be positive")
        if self.seed < 0:
            raise DomainError("seed must be non-negative")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        names = {f.name for f in fields(cls)}
        return cls(**{k: v for k, v in d.items() if k in names})


@dataclass
class Noise:
    """Every random draw a forward pass needs, fixed up front."""

    u: torch.Tensor      # (B,) component selection
    eps_z: torch.Tensor  # (B, d_z)
    eps_x: torch.Tensor  # (B, c, n, n) log-normal sample fed to the discriminator


def draw_noise(cfg: TrainConfig, batch: int, gen: torch.Generator, dtype=torch.float32) -> Noise:
    return Noise(
        u=torch.rand(batch, generator=gen, dtype=dtype),
        eps_z=torch.randn(batch, cfg.d_z, generator=gen, dtype=dtype),
        eps_x=torch.randn(batch, cfg.c, cfg.n, cfg.n, generator=gen, dtype=dtype),
    )


@dataclass
class LossParts:
    ae: torch.Tensor
    vae: torch.Tensor
    gen: torch.Tensor
    disc: torch.Tensor
    info: torch.Tensor

    def totals(self):
        return L.total_losses(self.ae, self.vae, self.gen, self.disc, self.info)


class VAEInfoCGAN(nn.Module):
    def __init__(self, cfg: TrainConfig):
        super().__init__()
        self.cfg = cfg
        n, w, s = cfg.n, cfg.width, cfg.stages
        self.feature_encoder = ConvEncoder(cfg.c, n, w, s, cfg.d_a)
        self.condition_encoder = ConvEncoder(1, n, w, s, cfg.hidden)
        self.posterior_head = nn.Linear(cfg.hidden, cfg.K * (1 + 2 * cfg.d_z))
        self.generator = ConvDecoder(cfg.d_a + cfg.d_z, n, w, s, cfg.c)
        self.log_sigma = nn.Parameter(torch.zeros(()))
        self.disc_trunk = ConvEncoder(cfg.c + 1, n, w, s, cfg.hidden, spectral=True)
        self.disc_head = sn(nn.Linear(cfg.hidden, 1))
        self.info_head = nn.Linear(cfg.hidden, cfg.d_a)
        init_weights(self)

    # parameter partitions used by the alternating optimizer
    def generator_side_parameters(self) -> list[nn.Parameter]:
        mods = (self.feature_encoder, self.condition_encoder, self.posterior_head, self.generator)
        return [p for m in mods for p in m.parameters()] + [self.log_sigma]

    def discriminator_parameters(self) -> list[nn.Parameter]:
        return list(self.disc_trunk.parameters()) + list(self.disc_head.parameters())

    def info_parameters(self) -> list[nn.Parameter]:
        return list(self.info_head.parameters())

    def _check(self, t: torch.Tensor, ch: int, what: str) -> None:
        n = self.cfg.n
        if t.dim() != 4 or tuple(t.shape[1:]) != (ch, n, n):
            raise DomainError(f"{what} has shape {tuple(t.shape)}, expected (B, {ch}, {n}, {n})")

    def encode_feature(self, x_log: torch.Tensor) -> torch.Tensor:
        self._check(x_log, self.cfg.c, "x")
        return torch.sigmoid(self.feature_encoder(x_log))

    def encode_condition(self, y: torch.Tensor) -> ConditionPosterior:
        self._check(y, 1, "y")
        cfg = self.cfg
        h = torch.nn.functional.leaky_relu(self.condition_encoder(y), 0.2)
        out = self.posterior_head(h)
        logits = out[:, :cfg.K]
        rest = out[:, cfg.K:].view(-1, cfg.K, 2, cfg.d_z)
        return ConditionPosterior(torch.softmax(logits, dim=1), rest[:, :, 0], rest[:, :, 1])

    def sample_condition(self, y: torch.Tensor, u: torch.Tensor, eps: torch.Tensor):
        post = self.encode_condition(y)
        return post, L.sample_posterior(post, u, eps)

    def generate(self, a: torch.Tensor, z_c: torch.Tensor) -> torch.Tensor:
        """Log-domain mean field for the latent code ``[a; z_c]``."""
        z = torch.cat([a, z_c], dim=1)
        if z.shape[1] != self.cfg.d_a + self.cfg.d_z:
            raise DomainError("latent code has the wrong dimension")
        return self.generator(z)

    @staticmethod
    def decode(mu: torch.Tensor) -> torch.Tensor:
        """Count-domain output exp(mu) - 1, clamped at zero."""
        return torch.clamp(torch.expm1(mu), min=0.0)

    def fake_image(self, mu: torch.Tensor, eps_x: torch.Tensor) -> torch.Tensor:
        """Log-domain sample of the output distribution, clamped at zero counts."""
        return torch.clamp(mu + torch.exp(self.log_sigma) * eps_x, min=0.0)

    def discriminate(self, img: torch.Tensor, y: torch.Tensor) -> tuple[torch.Tensor, torch.Tensor]:
        self._check(img, self.cfg.c, "image")
        self._check(y, 1, "y")
        h = torch.nn.functional.leaky_relu(self.disc_trunk(torch.cat([img, y], dim=1)), 0.2)
        return self.disc_head(h).squeeze(1), torch.sigmoid(self.info_head(h))

    def forward_generator(self, x_log, y, noise: Noise):
        a = self.encode_feature(x_log)
        post, z_c = self.sample_condition(y, noise.u, noise.eps_z)
        mu = self.generate(a, z_c)
        return a, post, z_c, mu

    def losses(self, x_log: torch.Tensor, y: torch.Tensor, noise: Noise) -> LossParts:
        """All five loss parts on one batch, with the full autograd graph."""
        a, post, z_c, mu = self.forward_generator(x_log, y, noise)
        vae, _, _ = L.loss_vae(x_log, post, mu, self.log_sigma, z_c)
        real_logit, _ = self.discriminate(x_log, y)
        fake_logit, q = self.discriminate(self.fake_image(mu, noise.eps_x), y)
        gen, disc = L.loss_gan(real_logit, fake_logit)
        return LossParts(L.loss_ae(x_log, mu), vae, gen, disc, L.loss_info(a, q))

    @torch.no_grad()
    def infer(self, y: torch.Tensor, a: torch.Tensor, gen: torch.Generator) -> torch.Tensor:
        """Count-domain raster from the road raster and a feature code."""
        b = y.shape[0]
        u = torch.rand(b, generator=gen, dtype=y.dtype)
        eps = torch.randn(b, self.cfg.d_z, generator=gen, dtype=y.dtype)
        _, z_c = self.sample_condition(y, u, eps)
        return self.decode(self.generate(a, z_c))


def make_optimizers(model: VAEInfoCGAN, cfg: TrainConfig) -> dict[str, torch.optim.Optimizer]:
    betas = (cfg.beta1, cfg.beta2)
    return {
        "opt_d": torch.optim.Adam(model.discriminator_parameters() + model.info_parameters(),
                                  lr=cfg.lr_d, betas=betas),
        "opt_g": torch.optim.Adam(model.generator_side_parameters() + model.info_parameters(),
                                  lr=cfg.lr_g, betas=betas),
    }


def _finite_or_raise(parts: dict) -> None:
    bad = [k for k, v in parts.items() if not np.isfinite(v)]
    if bad:
        raise NonFiniteLossError(f"non-finite loss in {bad}", parts)


def train_step(model: VAEInfoCGAN, opts: dict, x_log: torch.Tensor, y: torch.Tensor,
               noise: Noise) -> dict:
    """One discriminator phase followed by one generator phase.

    Returned telemetry holds the five parts evaluated at the pre-step
    parameters on this batch, and both totals as sums of those parts.
    """
    # phase D: {D, Q} descend L_D_total; the generator side is held fixed,
    # so L_AE and L_VAE are constants here
    with torch.no_grad():
        a, post, z_c, mu = model.forward_generator(x_log, y, noise)
        ae = L.loss_ae(x_log, mu)
        vae, _, _ = L.loss_vae(x_log, post, mu, model.log_sigma, z_c)
        fake = model.fake_image(mu, noise.eps_x)
    real_logit, _ = model.discriminate(x_log, y)
    fake_logit, q = model.discriminate(fake, y)
    gen, disc = L.loss_gan(real_logit, fake_logit)
    info = L.loss_info(a, q)
    parts = {"L_AE": ae.item(), "L_VAE": vae.item(), "L_gen": gen.item(),
             "L_disc": disc.item(), "L_info": info.item()}
    _finite_or_raise(parts)
    _, d_total = L.total_losses(ae, vae, gen, disc, info)
    model.zero_grad(set_to_none=True)
    d_total.backward()
    opts["opt_d"].step()

    # phase G: generator side and Q descend L_G_total; D's own weights stay fixed
    model.zero_grad(set_to_none=True)
    g_ae, g_vae, g_gen, g_info = _generator_phase(model, x_log, y, noise)
    g_total = g_ae + g_vae + g_gen + g_info
    if not torch.isfinite(g_total):
        raise NonFiniteLossError("non-finite generator-phase loss", parts)
    g_total.backward()
    opts["opt_g"].step()
    model.zero_grad(set_to_none=True)

    parts["L_G_total"] = parts["L_AE"] + parts["L_VAE"] + parts["L_gen"] + parts["L_info"]
    parts["L_D_total"] = parts["L_AE"] + parts["L_VAE"] + parts["L_disc"] + parts["L_info"]
    return parts


def _generator_phase(model: VAEInfoCGAN, x_log, y, noise):
    a, post, z_c, mu = model.forward_generator(x_log, y, noise)
    ae = L.loss_ae(x_log, mu)
    vae, _, _ = L.loss_vae(x_log, post, mu, model.log_sigma, z_c)
    fake_logit, q = model.discriminate(model.fake_image(mu, noise.eps_x), y)
    gen = torch.nn.functional.softplus(-fake_logit).mean()
    return ae, vae, gen, L.loss_info(a, q)
