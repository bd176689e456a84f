"""Comparative knowledge selection.

Candidates are related through a tf-idf cosine-similarity graph, encoded by
one multi-head graph-attention layer plus a position-wise feed-forward block,
pooled into a graph state, and ranked by a single pointer-decoder step
conditioned on the aggregated dialogue context.
"""

import math
import re
from dataclasses import dataclass

import numpy as np
import torch
import torch.nn as nn
import torch.nn.functional as F

_WORD_RE = re.compile(r"[a-z0-9_']+")


def _tfidf_tokens(text):
    return _WORD_RE.findall(text.lower())


@dataclass
class KnowledgeGraph:
    adjacency: np.ndarray  # (M, M) bool, symmetric, self-loops on the diagonal
    sim: np.ndarray  # (M, M) cosine tf-idf similarities in [0, 1]

    @property
    def n_nodes(self):
        return self.adjacency.shape[0]

    def to_json(self):
        return {
            "adjacency": self.adjacency.astype(int).tolist(),
            "sim": [[round(float(s), 6) for s in row] for row in self.sim],
        }


def build_knowledge_graph(candidates, threshold=0.3):
    """tf-idf cosine graph over the candidate pool.

    The M candidate texts are the document collection: tf is the raw count,
    idf = ln(M/df) + 1. Edge (i, j) exists iff cosine >= threshold (i != j);
    self-loops are always present. Texts with no word tokens get zero vectors
    and stay isolated.
    """
    texts = [c.text if hasattr(c, "text") else str(c) for c in candidates]
    M = len(texts)
    if M < 1:
        raise ValueError("need at least one candidate")
    docs = [_tfidf_tokens(t) for t in texts]
    df = {}
    for toks in docs:
        for tok in set(toks):
            df[tok] = df.get(tok, 0) + 1
    vocab = sorted(df)
    col = {tok: i for i, tok in enumerate(vocab)}
    mat = np.zeros((M, len(vocab)), dtype=np.float64)
    for i, toks in enumerate(docs):
        for tok in toks:
            mat[i, col[tok]] += 1.0
    idf = np.array([math.log(M / df[tok]) + 1.0 for tok in vocab])
    mat *= idf
    norms = np.linalg.norm(mat, axis=1)
    safe = np.where(norms == 0, 1.0, norms)
    unit = mat / safe[:, None]
    sim = np.clip(unit @ unit.T, 0.0, 1.0)
    adjacency = sim >= threshold
    np.fill_diagonal(adjacency, True)
    adjacency = adjacency & adjacency.T
    return KnowledgeGraph(adjacency=adjacency, sim=sim)


class GraphAttention(nn.Module):
    """One multi-head GAT layer followed by a residual position-wise FFN.

    Per head: project nodes, score neighbor pairs with
    LeakyReLU(a . [Wh_i || Wh_j]), softmax over the neighborhood (self-loop
    included), and sum. Heads are concatenated back to width d.
    """

    def __init__(self, d, n_heads=8, ffn_hidden=256, attn_dropout=0.5,
                 ffn_dropout=0.1, negative_slope=0.2):
        super().__init__()
        if d % n_heads != 0:
            raise ValueError(f"head count {n_heads} must divide width {d}")
        self.d = d
        self.n_heads = n_heads
        self.d_head = d // n_heads
        self.W = nn.Parameter(torch.empty(n_heads, self.d_head, d))
        self.a_src = nn.Parameter(torch.empty(n_heads, self.d_head))
        self.a_dst = nn.Parameter(torch.empty(n_heads, self.d_head))
        for h in range(n_heads):
            nn.init.xavier_uniform_(self.W[h])
        nn.init.normal_(self.a_src, std=1.0 / self.d_head ** 0.5)
        nn.init.normal_(self.a_dst, std=1.0 / self.d_head ** 0.5)
        self.leaky = nn.LeakyReLU(negative_slope)
        self.attn_drop = nn.Dropout(attn_dropout)
        self.ffn = nn.Sequential(
            nn.Linear(d, ffn_hidden),
            nn.ReLU(),
            nn.Dropout(ffn_dropout),
            nn.Linear(ffn_hidden, d),
        )

    def forward(self, node_feats, adjacency):
        """node_feats: (M, d); adjacency: (M, M) bool tensor or array."""
        if not torch.is_tensor(adjacency):
            adjacency = torch.from_numpy(np.asarray(adjacency))
        adjacency = adjacency.to(torch.bool)
        M = node_feats.shape[0]
        proj = torch.einsum("hkd,md->hmk", self.W, node_feats)  # (H, M, d_head)
        # score_ij = leaky(a_src . Wh_i + a_dst . Wh_j) for edge i<-j
        s_src = torch.einsum("hmk,hk->hm", proj, self.a_src)  # (H, M)
        s_dst = torch.einsum("hmk,hk->hm", proj, self.a_dst)
        scores = self.leaky(s_src.unsqueeze(2) + s_dst.unsqueeze(1))  # (H, M, M)
        scores = scores.masked_fill(~adjacency.unsqueeze(0), float("-inf"))
        attn = torch.softmax(scores, dim=2)
        attn = self.attn_drop(attn)
        heads = torch.einsum("hij,hjk->hik", attn, proj)  # (H, M, d_head)
        out = heads.permute(1, 0, 2).reshape(M, self.d)
        return out + self.ffn(out)


def pool_graph(node_embeds):
    """Arithmetic mean over nodes: (M, d) -> (d,)."""
    return node_embeds.mean(dim=0)


class PointerScorer(nn.Module):
    """Single pointer-decoder step.

    An LSTM cell consumes the context vector with the pooled graph state as
    its initial hidden state (cell state zero); additive attention over the
    transition-aware representations yields the selection logits.
    """

    def __init__(self, d, d_e):
        super().__init__()
        self.cell = nn.LSTMCell(d, d)
        self.W_e = nn.Parameter(torch.empty(d, d_e))
        self.W_g = nn.Parameter(torch.empty(d, d))
        self.v = nn.Parameter(torch.empty(d))
        self.b = nn.Parameter(torch.zeros(d))
        nn.init.xavier_uniform_(self.W_e)
        nn.init.xavier_uniform_(self.W_g)
        nn.init.normal_(self.v, std=1.0 / d ** 0.5)

    def forward(self, c, g, E):
        """c: (d,), g: (d,), E: (M, d_e) -> logits (M,)."""
        zero = torch.zeros_like(g)
        h1, _ = self.cell(c.unsqueeze(0), (g.unsqueeze(0), zero.unsqueeze(0)))
        g1 = h1[0]
        pre = E @ self.W_e.T + (self.W_g @ g1) + self.b  # (M, d)
        return torch.tanh(pre) @ self.v


class AttentionScorer(nn.Module):
    """Plain attention ranking: logits_j = (W_a e_j) . c (pointer ablation)."""

    def __init__(self, d, d_e):
        super().__init__()
        self.W_a = nn.Parameter(torch.empty(d, d_e))
        nn.init.xavier_uniform_(self.W_a)

    def forward(self, c, g, E):
        return (E @ self.W_a.T) @ c


@dataclass
class SelectionDistribution:
    logits: torch.Tensor  # (M,)
    probs: torch.Tensor  # softmax of logits

    @property
    def argmax(self):
        return argmax_lowest(self.probs)


def argmax_lowest(values):
    """Index of the maximum, ties broken by the lowest index."""
    v = values.detach()
    return int(torch.nonzero(v == v.max(), as_tuple=True)[0][0])


def distribution_from_logits(logits):
    return SelectionDistribution(logits=logits, probs=torch.softmax(logits, dim=-1))


def sample_gumbel(shape, generator, dtype=torch.float32, eps=1e-20):
    u = torch.rand(shape, generator=generator, dtype=dtype)
    return -torch.log(-torch.log(u + eps) + eps)


def select(dist, mode="argmax", tau=1.0, generator=None, noise=None, hard=True):
    """Pick a candidate; returns (index, mixing weights y (M,)).

    ``argmax`` is the deterministic evaluation path (one-hot y). ``gumbel``
    perturbs the logits with Gumbel noise drawn from ``generator`` (or uses
    ``noise`` directly, for tests), softens by temperature ``tau`` and, when
    ``hard``, snaps the forward value to one-hot while keeping the soft
    sensitivities for backprop.
    """
    if mode == "argmax":
        idx = dist.argmax
        y = torch.zeros_like(dist.probs)
        y[idx] = 1.0
        return idx, y
    if mode != "gumbel":
        raise ValueError(f"unknown selection mode {mode!r}")
    if tau <= 0:
        raise ValueError("gumbel temperature must be positive")
    if noise is None:
        noise = sample_gumbel(dist.logits.shape, generator, dtype=dist.logits.dtype)
    y_soft = torch.softmax((dist.logits + noise) / tau, dim=-1)
    idx = argmax_lowest(y_soft)
    if not hard:
        return idx, y_soft
    y_hard = torch.zeros_like(y_soft)
    y_hard[idx] = 1.0
    return idx, y_hard - y_soft.detach() + y_soft
