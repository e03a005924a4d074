"""Loss terms of the style-transfer objective and their weighted totals.

Every term reduces with a mean (over points, dimensions and batch elements)
so values are comparable across sampling densities and code sizes. The
adversarial default is the least-squares form; the saturating log form is
available behind ``form="log"``.
"""

from dataclasses import dataclass
from typing import Optional

import torch


class LossError(ValueError):
    """Malformed loss inputs (empty batches, mismatched lengths, missing terms)."""


def chamfer_distance(a, b):
    """Differentiable bidirectional Chamfer distance, mean over the batch.

    a: (B, N, 3), b: (B, M, 3) (2D inputs are treated as a batch of one).
    Per element: mean_n min_m ||a_n - b_m||^2 + mean_m min_n ||.||^2.
    """
    if a.dim() == 2:
        a = a.unsqueeze(0)
    if b.dim() == 2:
        b = b.unsqueeze(0)
    if a.shape[0] != b.shape[0]:
        raise LossError("batch sizes differ")
    d2 = torch.cdist(a, b) ** 2  # (B, N, M)
    forward = d2.min(dim=2).values.mean(dim=1)
    backward = d2.min(dim=1).values.mean(dim=1)
    return (forward + backward).mean()


def reconstruction_loss(target_samples, generated):
    """Chamfer distance between surface samples and the decoded cloud."""
    return chamfer_distance(target_samples, generated)


def cycle_loss(source_samples, cycled):
    """Chamfer distance between source samples and the there-and-back decode."""
    return chamfer_distance(source_samples, cycled)


def adversarial_generator_loss(score_fake, form="lsgan"):
    """Generator-side adversarial term on discriminator scores of fakes."""
    if score_fake.numel() == 0:
        raise LossError("empty score batch")
    if form == "lsgan":
        return ((score_fake - 1.0) ** 2).mean()
    if form == "log":
        # saturating form: minimize log(1 - D(fake)) with a sigmoid score head
        return torch.log1p(-torch.sigmoid(score_fake) + 1e-8).mean()
    raise ValueError(f"unknown adversarial form {form!r}")


def adversarial_discriminator_loss(score_real, score_fake, form="lsgan"):
    """Discriminator-side adversarial term; fakes must be detached upstream."""
    if score_real.numel() == 0 or score_fake.numel() == 0:
        raise LossError("empty score batch")
    if form == "lsgan":
        return ((score_real - 1.0) ** 2).mean() + (score_fake**2).mean()
    if form == "log":
        real = torch.sigmoid(score_real)
        fake = torch.sigmoid(score_fake)
        return -(torch.log(real + 1e-8).mean() + torch.log1p(-fake + 1e-8).mean())
    raise ValueError(f"unknown adversarial form {form!r}")


def latent_loss(code_recovered, code_reference):
    """Mean absolute difference between two code vectors (or batches)."""
    if code_recovered.shape != code_reference.shape:
        raise LossError(
            f"code length mismatch: {tuple(code_recovered.shape)} vs {tuple(code_reference.shape)}"
        )
    return (code_recovered - code_reference).abs().mean()


@dataclass(frozen=True)
class LossWeights:
    """Non-negative weights of the total objective."""

    rec: float = 1.0
    adv: float = 0.1
    cycle: float = 1.0
    content: float = 0.1
    style: float = 0.1

    def __post_init__(self):
        for name in ("rec", "adv", "cycle", "content", "style"):
            v = getattr(self, name)
            if not (v >= 0.0 and v == v and v != float("inf")):
                raise ValueError(f"weight {name} must be finite and >= 0")


@dataclass
class LossReport:
    """Per-term values of one training step.

    Latent terms are None unless the multimodal objective is active. The
    totals satisfy the weighted-sum identity checked by `loss_total`.
    """

    rec_1: float
    rec_2: float
    adv_1: float
    adv_2: float
    cycle_1: float
    cycle_2: float
    disc_1: float
    disc_2: float
    total_generator: float
    total_discriminator: float
    latent_c_1: Optional[float] = None
    latent_c_2: Optional[float] = None
    latent_s_1: Optional[float] = None
    latent_s_2: Optional[float] = None

    BASE_COLUMNS = (
        "rec_1", "rec_2", "adv_1", "adv_2", "cycle_1", "cycle_2",
        "disc_1", "disc_2", "total_generator", "total_discriminator",
    )
    LATENT_COLUMNS = ("latent_c_1", "latent_c_2", "latent_s_1", "latent_s_2")

    @classmethod
    def csv_columns(cls, multimodal):
        cols = list(cls.BASE_COLUMNS)
        if multimodal:
            cols[6:6] = list(cls.LATENT_COLUMNS)  # keep totals last
        return cols

    def csv_row(self, multimodal):
        return [f"{getattr(self, c):.8g}" for c in self.csv_columns(multimodal)]


def loss_total(report, weights, multimodal):
    """Weighted generator total and the (unweighted) discriminator total.

    `report` may be a LossReport or any object with the same term attributes;
    latent terms must be present exactly when `multimodal` is set.
    """
    terms = {}
    for name in ("rec_1", "rec_2", "adv_1", "adv_2", "cycle_1", "cycle_2",
                 "disc_1", "disc_2"):
        value = getattr(report, name, None)
        if value is None:
            raise LossError(f"missing loss term {name}")
        terms[name] = value
    total_g = (
        weights.rec * (terms["rec_1"] + terms["rec_2"])
        + weights.adv * (terms["adv_1"] + terms["adv_2"])
        + weights.cycle * (terms["cycle_1"] + terms["cycle_2"])
    )
    latent = [getattr(report, n, None) for n in LossReport.LATENT_COLUMNS]
    if multimodal:
        if any(v is None for v in latent):
            raise LossError("missing latent loss terms for the multimodal objective")
        lc1, lc2, ls1, ls2 = latent
        total_g = total_g + weights.content * (lc1 + lc2) + weights.style * (ls1 + ls2)
    elif any(v is not None for v in latent):
        raise LossError("latent terms present but the objective is not multimodal")
    total_d = terms["disc_1"] + terms["disc_2"]
    return total_g, total_d
