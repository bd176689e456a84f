"""Sentence encoding for (context, candidate) pairs.

Every knowledge candidate is paired with the rendered dialogue context as
``[cls] context [sep] candidate`` and encoded by a bidirectional transformer.
Three vectors come out per pair: the [cls] hidden state (context-aware
knowledge representation), the mean-pooled context tokens, and the
mean-pooled candidate tokens. The per-candidate context vectors are then
fused into one context representation by a small attention module.
"""

from dataclasses import dataclass

import torch
import torch.nn as nn


class PairError(ValueError):
    """A (context, candidate) pair cannot be encoded."""


@dataclass(frozen=True)
class PairedInput:
    token_ids: tuple  # [cls] ctx [sep] cand, truncated
    context_span: tuple  # (start, end) token indices of the context
    knowledge_span: tuple  # (start, end) token indices of the candidate

    def __len__(self):
        return len(self.token_ids)


@dataclass
class EncodedPair:
    k_cls: torch.Tensor  # hidden state at position 0
    c_ctx: torch.Tensor  # mean over the context span
    k_know: torch.Tensor  # mean over the knowledge span


def make_pair(vocab, context_string, candidate_text, max_len=96):
    """Tokenize and truncate one pair.

    When over budget, context head tokens are dropped first, then candidate
    tail tokens. Both spans always keep at least one token; a candidate that
    would be truncated away entirely is a sample-level error.
    """
    ctx = vocab.encode(context_string)
    cand = vocab.encode(candidate_text)
    if not cand:
        raise PairError(f"candidate has no tokens: {candidate_text!r}")
    if not ctx:
        raise PairError("context has no tokens")
    budget = max_len - 2  # [cls] and [sep]
    if budget < 2:
        raise PairError(f"max_len {max_len} leaves no room for tokens")
    cand_keep = min(len(cand), budget - 1)
    if cand_keep < 1:
        raise PairError("candidate truncated away entirely")
    ctx_keep = min(len(ctx), budget - cand_keep)
    ctx = ctx[len(ctx) - ctx_keep:]
    cand = cand[:cand_keep]
    ids = [vocab.cls_id] + ctx + [vocab.sep_id] + cand
    return PairedInput(
        token_ids=tuple(ids),
        context_span=(1, 1 + ctx_keep),
        knowledge_span=(2 + ctx_keep, 2 + ctx_keep + cand_keep),
    )


@dataclass
class EncoderConfig:
    d_model: int = 128
    n_layers: int = 2
    n_heads: int = 4
    ffn_dim: int = 256
    max_len: int = 96
    dropout: float = 0.1
    norm_first: bool = False


class ToyTransformerEncoder(nn.Module):
    """Small bidirectional transformer with learned positional embeddings.

    Satisfies the backend contract: ``hidden_size`` attribute and a forward
    mapping (ids, padding mask) -> per-token hidden states.
    """

    mode = "toy_transformer"

    def __init__(self, vocab_size, config=None):
        super().__init__()
        self.config = config or EncoderConfig()
        d = self.config.d_model
        self.hidden_size = d
        self.token_emb = nn.Embedding(vocab_size, d)
        self.pos_emb = nn.Embedding(self.config.max_len, d)
        nn.init.normal_(self.token_emb.weight, std=0.02)
        nn.init.normal_(self.pos_emb.weight, std=0.02)
        layer = nn.TransformerEncoderLayer(
            d_model=d,
            nhead=self.config.n_heads,
            dim_feedforward=self.config.ffn_dim,
            dropout=self.config.dropout,
            batch_first=True,
            norm_first=self.config.norm_first,
        )
        self.layers = nn.TransformerEncoder(
            layer, self.config.n_layers, enable_nested_tensor=False
        )

    def forward(self, token_ids, attention_mask):
        """token_ids: (B, T) long; attention_mask: (B, T) bool, True = real."""
        B, T = token_ids.shape
        pos = torch.arange(T, device=token_ids.device).unsqueeze(0).expand(B, T)
        h = self.token_emb(token_ids) + self.pos_emb(pos)
        return self.layers(h, src_key_padding_mask=~attention_mask)


class PretrainedAdapter(nn.Module):
    """Wrap any masked-LM style provider as an encoder backend.

    The provider is a callable (token_ids, attention_mask) -> (B, T, d)
    hidden states; token ids must already be in the provider's vocabulary.
    """

    mode = "pretrained_adapter"

    def __init__(self, provider, hidden_size):
        super().__init__()
        self.provider = provider
        self.hidden_size = hidden_size

    def forward(self, token_ids, attention_mask):
        return self.provider(token_ids, attention_mask)


def collate_pairs(pairs, pad_id, device=None):
    """Pad a list of PairedInput into id / mask / span-mask tensors."""
    n = len(pairs)
    T = max(len(p) for p in pairs)
    ids = torch.full((n, T), pad_id, dtype=torch.long, device=device)
    attn = torch.zeros((n, T), dtype=torch.bool, device=device)
    ctx_mask = torch.zeros((n, T), dtype=torch.bool, device=device)
    know_mask = torch.zeros((n, T), dtype=torch.bool, device=device)
    for i, p in enumerate(pairs):
        L = len(p)
        ids[i, :L] = torch.tensor(p.token_ids, dtype=torch.long)
        attn[i, :L] = True
        ctx_mask[i, p.context_span[0]: p.context_span[1]] = True
        know_mask[i, p.knowledge_span[0]: p.knowledge_span[1]] = True
    return ids, attn, ctx_mask, know_mask


def _masked_mean(hidden, mask):
    weights = mask.unsqueeze(-1).to(hidden.dtype)
    total = weights.sum(dim=1)
    if (total == 0).any():
        raise PairError("empty pooling span")
    return (hidden * weights).sum(dim=1) / total


def encode_pairs(backend, pairs, pad_id):
    """Encode a batch of pairs; returns (k_cls, c_ctx, k_know), each (N, d)."""
    ids, attn, ctx_mask, know_mask = collate_pairs(pairs, pad_id)
    hidden = backend(ids, attn)
    k_cls = hidden[:, 0, :]
    c_ctx = _masked_mean(hidden, ctx_mask)
    k_know = _masked_mean(hidden, know_mask)
    return k_cls, c_ctx, k_know


def encode_pair(backend, pair, pad_id):
    """Encode a single pair into an :class:`EncodedPair`."""
    k_cls, c_ctx, k_know = encode_pairs(backend, [pair], pad_id)
    return EncodedPair(k_cls=k_cls[0], c_ctx=c_ctx[0], k_know=k_know[0])


class ContextAggregator(nn.Module):
    """Fuse per-candidate context vectors into one representation.

    ``h_j = tanh(W_c c_j)``, attention weights from ``V_c . h_j``, output is
    the attention-weighted sum of the ``h_j``.
    """

    def __init__(self, d):
        super().__init__()
        self.W_c = nn.Parameter(torch.empty(d, d))
        self.V_c = nn.Parameter(torch.empty(d))
        nn.init.xavier_uniform_(self.W_c)
        nn.init.normal_(self.V_c, std=1.0 / d ** 0.5)

    def forward(self, c_ctx):
        """c_ctx: (M, d) -> (context vector (d,), attention weights (M,))."""
        if c_ctx.shape[0] == 0:
            raise ValueError("cannot aggregate an empty candidate list")
        h = torch.tanh(c_ctx @ self.W_c.T)  # (M, d)
        scores = h @ self.V_c  # (M,)
        alpha = torch.softmax(scores, dim=0)
        return alpha @ h, alpha
