"""Selector losses: cross-entropy, variance profiles, and the shift constraint.

The shift constraint compares two "variance profiles": one between the
previous gold knowledge and the Gumbel-selected prediction, one between the
previous and current gold. Their KL divergence penalizes selections whose
topic movement differs from the gold movement.
"""

import warnings
from dataclasses import asdict, dataclass, field

import torch
import torch.nn.functional as F

from .rng import generator_for
from .selector import select

PROB_FLOOR = 1e-12


@dataclass
class AblationFlags:
    shift_loss: bool = True
    cross_opt: bool = True
    coher_opt: bool = True
    pointer_net: bool = True


@dataclass
class TrainConfig:
    lambda_shift: float = 0.5
    lr_encoder: float = 1e-5
    lr_head: float = 1e-4
    weight_decay: float = 0.0
    batch_size: int = 4
    epochs: int = 5
    tau_gumbel: float = 1.0
    seed: int = 0
    window_l: int = 1
    early_stop_train_acc: float = None  # stop once train ACC reaches this
    ablations: AblationFlags = field(default_factory=AblationFlags)

    def __post_init__(self):
        if self.lambda_shift < 0:
            raise ValueError("lambda_shift must be >= 0")
        if isinstance(self.ablations, dict):
            self.ablations = AblationFlags(**self.ablations)

    def to_dict(self):
        return asdict(self)


@dataclass
class LossBreakdown:
    l_ce: float
    l_sc: float
    l_cls: float
    n_shift_samples: int


def ce_loss(dists, gold_indices):
    """Mean -log p[gold] over the batch; probabilities floored at 1e-12."""
    losses = []
    for dist, gold in zip(dists, gold_indices):
        if not 0 <= gold < dist.probs.shape[0]:
            raise ValueError(f"gold index {gold} out of range")
        p = dist.probs[gold]
        if float(p.detach()) < PROB_FLOOR:
            warnings.warn("gold probability underflow, clamping before log")
            p = p.clamp_min(PROB_FLOOR)
        losses.append(-torch.log(p))
    return torch.stack(losses).mean()


def variance_profile(u, v):
    """log_softmax([(u - v)^2 ; u * v]); exponentials sum to one."""
    if u.shape != v.shape:
        raise ValueError("variance_profile expects equal shapes")
    feats = torch.cat([(u - v) ** 2, u * v], dim=-1)
    return F.log_softmax(feats, dim=-1)


def shift_loss(k_last, k_hat, k_gold):
    """KL(profile(k_last, k_hat) || profile(k_last, k_gold)), nonnegative."""
    log_p = variance_profile(k_last, k_hat)
    log_q = variance_profile(k_last, k_gold)
    p = torch.exp(log_p)
    # KL is nonnegative; near-identical profiles can round epsilon-negative
    return (p * (log_p - log_q)).sum().clamp_min(0.0)


def selector_loss(outputs, gold_indices, config, sample_keys=None, epoch=0,
                  gumbel_noise=None, hard_select=True):
    """Combined selection objective over a batch.

    ``outputs`` are SampleOutput items; samples lacking a previous-knowledge
    vector are excluded from the shift term (not averaged as zeros).
    ``sample_keys`` (one hashable per sample) seed the per-sample Gumbel
    noise; ``gumbel_noise`` overrides it and ``hard_select=False`` keeps the
    soft mixture, which the finite-difference gradient checks require.

    Returns (loss tensor, LossBreakdown).
    """
    l_ce = ce_loss([o.dist for o in outputs], gold_indices)

    lam = config.lambda_shift if config.ablations.shift_loss else 0.0
    shift_terms = []
    if lam > 0:
        for i, (out, gold) in enumerate(zip(outputs, gold_indices)):
            if out.k_last_cls is None:
                continue
            if gumbel_noise is not None:
                noise = gumbel_noise[i]
                gen = None
            else:
                noise = None
                key = sample_keys[i] if sample_keys is not None else i
                gen = generator_for(config.seed, "gumbel", key, epoch)
            _, y = select(out.dist, mode="gumbel", tau=config.tau_gumbel,
                          generator=gen, noise=noise, hard=hard_select)
            k_hat = y @ out.k_cls
            shift_terms.append(shift_loss(out.k_last_cls, k_hat, out.k_cls[gold]))

    if shift_terms:
        l_sc = torch.stack(shift_terms).mean()
        loss = l_ce + lam * l_sc
    else:
        l_sc = torch.zeros((), dtype=l_ce.dtype)
        loss = l_ce
    # breakdown identity L_cls = L_ce + lambda * L_sc is kept exact in
    # float64, independent of float32 rounding in the autograd graph
    l_ce_f = float(l_ce.detach())
    l_sc_f = float(l_sc.detach())
    breakdown = LossBreakdown(
        l_ce=l_ce_f,
        l_sc=l_sc_f,
        l_cls=l_ce_f + lam * l_sc_f,
        n_shift_samples=len(shift_terms),
    )
    return loss, breakdown
