"""Training objectives.

Both losses share the reconstruction term (1/(n*b)) * ||Y - Yhat||_p^p.
The deterministic latent term penalizes the LSTM's one-step latent
prediction error, (1/(d*(b-L))) * sum_i ||x_{i+1} - xhat_{i+1}||_q^q.
The probabilistic latent term is the average negative log density of
the realized latents under a unit-variance Gaussian centered on the
predicted means: per step, (d/2)*log(2*pi) + 0.5*||x_i - mu_{i-1}||^2.
The constant is kept in the reported value (it matters when comparing
weighted losses across latent sizes) but has zero gradient.

Totals always satisfy total = recon + weight * latent.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .errors import ConfigError, ShapeError
from .model import LatentPath
from .numeric import RngStream


@dataclass
class LossBreakdown:
    total: float
    recon: float
    latent: float
    weight: float
    p: int
    q: int


def _check_norm_order(name: str, v: int):
    if v not in (1, 2):
        raise ConfigError(f"loss: {name} must be 1 or 2, got {v}")


def _lp_sum(diff: ad.Tensor, p: int) -> ad.Tensor:
    return ad.sum_all(ad.abs_val(diff) if p == 1 else ad.square(diff))


def _recon_term(Y, Yhat: ad.Tensor, p: int) -> ad.Tensor:
    yc = Y if isinstance(Y, ad.Tensor) else ad.constant(Y)
    if yc.value.shape != Yhat.value.shape:
        raise ShapeError(f"loss: target {yc.value.shape} vs output {Yhat.value.shape}")
    n, b = yc.value.shape
    return ad.scale(_lp_sum(ad.sub(yc, Yhat), p), 1.0 / (n * b))


def _latent_tail(path: LatentPath) -> ad.Tensor:
    d, b = path.X.value.shape
    horizon = path.Xhat.value.shape[1]
    return ad.slice_cols(path.X, b - horizon, b)


def loss_deterministic(Y, Yhat: ad.Tensor, path: LatentPath, weight: float, p: int = 1, q: int = 2):
    """Reconstruction plus weighted latent prediction error.

    Returns (total scalar Tensor, LossBreakdown).
    """
    if weight < 0:
        raise ConfigError(f"loss: weight must be nonnegative, got {weight}")
    _check_norm_order("p", p)
    _check_norm_order("q", q)
    recon = _recon_term(Y, Yhat, p)
    d = path.X.value.shape[0]
    horizon = path.Xhat.value.shape[1]
    latent = ad.scale(_lp_sum(ad.sub(_latent_tail(path), path.Xhat), q), 1.0 / (d * horizon))
    total = ad.add(recon, ad.scale(latent, weight))
    return total, LossBreakdown(
        total=float(total.value), recon=float(recon.value), latent=float(latent.value),
        weight=float(weight), p=p, q=q,
    )


def loss_probabilistic(Y, Yhat: ad.Tensor, path: LatentPath, weight: float, p: int = 1):
    """Reconstruction plus weighted Gaussian negative log likelihood of
    the realized latents under N(mu, I)."""
    if weight < 0:
        raise ConfigError(f"loss: weight must be nonnegative, got {weight}")
    _check_norm_order("p", p)
    recon = _recon_term(Y, Yhat, p)
    d = path.X.value.shape[0]
    horizon = path.Xhat.value.shape[1]
    sq = ad.sum_all(ad.square(ad.sub(_latent_tail(path), path.mu)))
    nll = ad.add_const(ad.scale(sq, 0.5 / horizon), 0.5 * d * math.log(2.0 * math.pi))
    total = ad.add(recon, ad.scale(nll, weight))
    return total, LossBreakdown(
        total=float(total.value), recon=float(recon.value), latent=float(nll.value),
        weight=float(weight), p=p, q=2,
    )


def reparameterize(path: LatentPath, rng: RngStream) -> ad.Tensor:
    """Latent sample mu + eps with eps ~ N(0, I); gradients flow through
    mu only, so sampling stays differentiable."""
    d, horizon = path.mu.value.shape
    eps = ad.constant(rng.normal(d, horizon))
    return ad.add(path.mu, eps)


def sample_with_frozen_noise(path: LatentPath, eps: np.ndarray) -> ad.Tensor:
    """Like reparameterize but with caller-supplied noise (gradient checks)."""
    if eps.shape != path.mu.value.shape:
        raise ShapeError(f"frozen noise {eps.shape} vs mu {path.mu.value.shape}")
    return ad.add(path.mu, ad.constant(eps))
