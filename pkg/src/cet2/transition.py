"""Topic transition features and the transition-aware representation.

Two features per candidate: a coherence feature from the pair's [cls]
vector, and a development feature comparing the candidate against the
previous turn's knowledge (elementwise difference and product). Their
concatenation with the [cls] and pooled-knowledge vectors is the
representation the pointer scorer ranks.
"""

import torch
import torch.nn as nn


class TransitionFeatures(nn.Module):
    """Holds W_coh (d_coh x d) and W_cro (d_cro x 2d).

    ``use_coherence=False`` drops the coherence block from the output
    entirely; ``use_development=False`` forces the development block to zero
    while keeping its width.
    """

    def __init__(self, d, d_coh=None, d_cro=None, activation="tanh",
                 use_coherence=True, use_development=True):
        super().__init__()
        self.d = d
        self.d_coh = d if d_coh is None else d_coh
        self.d_cro = d if d_cro is None else d_cro
        self.use_coherence = use_coherence
        self.use_development = use_development
        if activation == "tanh":
            self.act = torch.tanh
        elif activation == "sigmoid":
            self.act = torch.sigmoid
        else:
            raise ValueError(f"unknown activation {activation!r}")
        if use_coherence:
            self.W_coh = nn.Parameter(torch.empty(self.d_coh, d))
            nn.init.xavier_uniform_(self.W_coh)
        self.W_cro = nn.Parameter(torch.empty(self.d_cro, 2 * d))
        nn.init.xavier_uniform_(self.W_cro)

    @property
    def repr_dim(self):
        """Width of the transition-aware representation e_j."""
        base = self.d_cro + 2 * self.d
        return base + self.d_coh if self.use_coherence else base

    def coherence_feature(self, k_cls):
        """tanh(W_coh k_cls); k_cls is (..., d)."""
        return self.act(k_cls @ self.W_coh.T)

    def development_feature(self, k_last_cls, k_cls):
        """Cross feature against the previous knowledge.

        ``k_last_cls`` is (d,) shared by all candidates, or None (first turn),
        in which case the feature is the zero vector.
        """
        if k_last_cls is None or not self.use_development:
            shape = k_cls.shape[:-1] + (self.d_cro,)
            return torch.zeros(shape, dtype=k_cls.dtype, device=k_cls.device)
        diff = k_last_cls - k_cls
        prod = k_last_cls * k_cls
        return self.act(torch.cat([diff, prod], dim=-1) @ self.W_cro.T)

    def transition_repr(self, v_coh, v_cro, k_cls, k_know):
        """Exact concatenation [v_coh; v_cro; k_cls; k_know].

        With coherence disabled ``v_coh`` must be None and is omitted.
        """
        blocks = []
        if self.use_coherence:
            if v_coh is None:
                raise ValueError("coherence feature required but missing")
            blocks.append(v_coh)
        elif v_coh is not None:
            raise ValueError("coherence feature supplied but disabled")
        blocks += [v_cro, k_cls, k_know]
        sizes = [b.shape[-1] for b in blocks]
        expected = [self.d_coh] if self.use_coherence else []
        expected += [self.d_cro, self.d, self.d]
        if sizes != expected:
            raise ValueError(f"component widths {sizes} != expected {expected}")
        return torch.cat(blocks, dim=-1)

    def forward(self, k_cls, k_know, k_last_cls=None):
        """Build e_j for all candidates; k_cls/k_know are (M, d).

        Returns (E (M, d_e), v_coh or None, v_cro).
        """
        v_coh = self.coherence_feature(k_cls) if self.use_coherence else None
        v_cro = self.development_feature(k_last_cls, k_cls)
        return self.transition_repr(v_coh, v_cro, k_cls, k_know), v_coh, v_cro
