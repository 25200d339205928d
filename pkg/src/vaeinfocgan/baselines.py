"""Conditional VAE and conditional GAN baselines.

Each family comes in two conditioning variants: road raster only (PLC), or
road raster plus the feature-level condition vector (PLC+FLC).  They reuse
the main model's conv blocks, and their width is chosen so the parameter
count lands within 10% of the main model's.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import torch
import torch.nn.functional as F
from torch import nn

from . import losses as L
from .model import NonFiniteLossError, TrainConfig, VAEInfoCGAN
from .nets import ConvDecoder, ConvEncoder, init_weights, n_params, sn
from .tiles import DomainError

FAMILIES = ("cVAE", "cGAN")
CONDITIONINGS = ("PLC", "PLC+FLC")
CAPACITY_TOLERANCE = 0.10


@dataclass(frozen=True)
class BaselineSpec:
    family: str
    conditioning: str

    def __post_init__(self):
        if self.family not in FAMILIES or self.conditioning not in CONDITIONINGS:
            raise DomainError(f"invalid baseline spec ({self.family}, {self.conditioning})")

    @property
    def flc(self) -> bool:
        return self.conditioning == "PLC+FLC"

    @property
    def name(self) -> str:
        return f"{self.family}-{self.conditioning}"

    @classmethod
    def parse(cls, name: str) -> "BaselineSpec":
        family, _, cond = name.partition("-")
        return cls(family, cond)


ALL_BASELINES = tuple(BaselineSpec(f, c) for f in FAMILIES for c in CONDITIONINGS)


class CVAE(nn.Module):
    telemetry_keys = ("L_VAE", "L_VAE_nll", "L_VAE_kl")

    def __init__(self, cfg: TrainConfig, flc: bool, width: int):
        super().__init__()
        self.cfg, self.flc, self.width = cfg, flc, width
        df = cfg.d_feat if flc else 0
        n, s = cfg.n, cfg.stages
        self.encoder = ConvEncoder(cfg.c + 1, n, width, s, cfg.hidden)
        self.posterior_head = nn.Linear(cfg.hidden + df, 2 * cfg.d_z)
        self.condition_embed = ConvEncoder(1, n, width, s, cfg.hidden)
        self.decoder_input_dim = cfg.d_z + cfg.hidden + df
        self.decoder = ConvDecoder(self.decoder_input_dim, n, width, s, cfg.c)
        self.log_sigma = nn.Parameter(torch.zeros(()))
        init_weights(self)

    def _cond(self, y, f):
        h = F.leaky_relu(self.condition_embed(y), 0.2)
        return torch.cat([h, f], dim=1) if self.flc else h

    def loss(self, x_log, y, f, eps):
        h = F.leaky_relu(self.encoder(torch.cat([x_log, y], dim=1)), 0.2)
        if self.flc:
            h = torch.cat([h, f], dim=1)
        mu_z, logvar = self.posterior_head(h).chunk(2, dim=1)
        z = mu_z + torch.exp(0.5 * logvar) * eps
        mu = self.decoder(torch.cat([z, self._cond(y, f)], dim=1))
        nll = L.gaussian_nll(x_log, mu, self.log_sigma)
        kl = L.kl_normal(mu_z, logvar).mean()
        return nll + kl / x_log[0].numel(), nll, kl

    @torch.no_grad()
    def predict(self, y, f, gen: torch.Generator) -> torch.Tensor:
        z = torch.randn(y.shape[0], self.cfg.d_z, generator=gen, dtype=y.dtype)
        mu = self.decoder(torch.cat([z, self._cond(y, f)], dim=1))
        return VAEInfoCGAN.decode(mu)


class CGAN(nn.Module):
    telemetry_keys = ("L_gen", "L_disc")

    def __init__(self, cfg: TrainConfig, flc: bool, width: int):
        super().__init__()
        self.cfg, self.flc, self.width = cfg, flc, width
        df = cfg.d_feat if flc else 0
        n, s = cfg.n, cfg.stages
        self.condition_embed = ConvEncoder(1, n, width, s, cfg.hidden)
        self.generator_input_dim = cfg.d_z + cfg.hidden + df
        self.generator = ConvDecoder(self.generator_input_dim, n, width, s, cfg.c)
        self.disc_trunk = ConvEncoder(cfg.c + 1, n, width, s, cfg.hidden, spectral=True)
        self.disc_head = sn(nn.Linear(cfg.hidden + df, 1))
        init_weights(self)

    def generator_parameters(self):
        return list(self.condition_embed.parameters()) + list(self.generator.parameters())

    def discriminator_parameters(self):
        return list(self.disc_trunk.parameters()) + list(self.disc_head.parameters())

    def generate(self, y, f, noise):
        h = F.leaky_relu(self.condition_embed(y), 0.2)
        parts = [noise, h, f] if self.flc else [noise, h]
        return self.generator(torch.cat(parts, dim=1))

    def discriminate(self, img, y, f):
        h = F.leaky_relu(self.disc_trunk(torch.cat([img, y], dim=1)), 0.2)
        if self.flc:
            h = torch.cat([h, f], dim=1)
        return self.disc_head(h).squeeze(1)

    @torch.no_grad()
    def predict(self, y, f, gen: torch.Generator) -> torch.Tensor:
        z = torch.randn(y.shape[0], self.cfg.d_z, generator=gen, dtype=y.dtype)
        return VAEInfoCGAN.decode(self.generate(y, f, z))


def _construct(spec: BaselineSpec, cfg: TrainConfig, width: int) -> nn.Module:
    cls = CVAE if spec.family == "cVAE" else CGAN
    return cls(cfg, spec.flc, width)


def matched_width(spec: BaselineSpec, cfg: TrainConfig) -> int:
    """Width whose parameter count is closest to the main model's."""
    target = n_params(VAEInfoCGAN(cfg))
    best, best_gap = None, None
    for w in range(1, 4 * cfg.width + 1):
        count = n_params(_construct(spec, cfg, w))
        gap = abs(count - target)
        if best_gap is None or gap < best_gap:
            best, best_gap = w, gap
        if count > target:
            break  # counts grow with width
    if best_gap / target > CAPACITY_TOLERANCE:
        raise DomainError(f"cannot match capacity for {spec.name} within 10%")
    return best


def build_baseline(spec: BaselineSpec, cfg: TrainConfig, width: int | None = None) -> nn.Module:
    if not isinstance(spec, BaselineSpec):
        raise DomainError("build_baseline needs a BaselineSpec")
    return _construct(spec, cfg, matched_width(spec, cfg) if width is None else width)


def make_baseline_optimizers(model: nn.Module, cfg: TrainConfig) -> dict:
    betas = (cfg.beta1, cfg.beta2)
    if isinstance(model, CVAE):
        return {"opt": torch.optim.Adam(model.parameters(), lr=cfg.lr_g, betas=betas)}
    return {"opt_d": torch.optim.Adam(model.discriminator_parameters(), lr=cfg.lr_d, betas=betas),
            "opt_g": torch.optim.Adam(model.generator_parameters(), lr=cfg.lr_g, betas=betas)}


def baseline_step(model: nn.Module, opts: dict, x_log, y, f, gen: torch.Generator) -> dict:
    b = x_log.shape[0]
    if isinstance(model, CVAE):
        eps = torch.randn(b, model.cfg.d_z, generator=gen)
        total, nll, kl = model.loss(x_log, y, f, eps)
        row = {"L_VAE": total.item(), "L_VAE_nll": nll.item(), "L_VAE_kl": kl.item()}
        _check(row)
        model.zero_grad(set_to_none=True)
        total.backward()
        opts["opt"].step()
        return row

    noise = torch.randn(b, model.cfg.d_z, generator=gen)
    with torch.no_grad():
        fake = model.generate(y, f, noise)
    _, l_disc = L.loss_gan(model.discriminate(x_log, y, f), model.discriminate(fake, y, f))
    model.zero_grad(set_to_none=True)
    l_disc.backward()
    opts["opt_d"].step()
    model.zero_grad(set_to_none=True)
    l_gen = F.softplus(-model.discriminate(model.generate(y, f, noise), y, f)).mean()
    row = {"L_gen": l_gen.item(), "L_disc": l_disc.item()}
    _check(row)
    l_gen.backward()
    opts["opt_g"].step()
    model.zero_grad(set_to_none=True)
    return row


def _check(row: dict) -> None:
    if not all(math.isfinite(v) for v in row.values()):
        raise NonFiniteLossError("non-finite baseline loss", row)
