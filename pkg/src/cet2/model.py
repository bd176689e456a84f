"""Full knowledge-selection model: encoder, transition features, selector.

``prepare_sample`` tokenizes and builds the candidate graph once per sample
so training epochs only pay for tensor work. ``SelectionModel.forward``
consumes prepared samples, batching all pair encodings in one transformer
pass. Inference over an episode walks turns in order, feeding each turn's
selected candidate to the next turn's development feature.
"""

from dataclasses import asdict, dataclass, field
from typing import Optional

import numpy as np
import torch
import torch.nn as nn

from .checkpoint import load_checkpoint, save_checkpoint
from .data import build_samples, render_context
from .encoder import (
    ContextAggregator,
    EncoderConfig,
    PairedInput,
    ToyTransformerEncoder,
    encode_pairs,
    make_pair,
)
from .selector import (
    AttentionScorer,
    GraphAttention,
    PointerScorer,
    build_knowledge_graph,
    distribution_from_logits,
    pool_graph,
)
from .tokenizer import Vocab
from .transition import TransitionFeatures


@dataclass
class ModelConfig:
    d_model: int = 128
    n_layers: int = 2
    n_heads: int = 4
    encoder_ffn_dim: int = 256
    max_len: int = 96
    encoder_dropout: float = 0.1
    encoder_norm_first: bool = False
    d_coh: Optional[int] = None  # None = d_model
    d_cro: Optional[int] = None
    transition_activation: str = "tanh"
    gat_heads: int = 8
    gat_ffn_hidden: int = 256
    gat_attn_dropout: float = 0.5
    gat_ffn_dropout: float = 0.1
    sim_threshold: float = 0.3
    window_l: int = 1
    # ablation switches (structure-level)
    use_coherence: bool = True
    use_development: bool = True
    use_pointer: bool = True

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, d):
        return cls(**d)


@dataclass
class PreparedSample:
    episode_id: str
    turn_index: int
    pairs: list  # one PairedInput per candidate
    last_pair: Optional[PairedInput]
    adjacency: np.ndarray
    gold_index: Optional[int]
    candidate_ids: list = field(default_factory=list)


@dataclass
class SampleOutput:
    dist: object  # SelectionDistribution
    k_cls: torch.Tensor  # (M, d)
    k_know: torch.Tensor  # (M, d)
    k_last_cls: Optional[torch.Tensor]  # (d,) or None
    v_coh: Optional[torch.Tensor]  # (M, d_coh) or None
    v_cro: torch.Tensor  # (M, d_cro)
    context_vec: torch.Tensor  # (d,)
    attn_weights: torch.Tensor  # (M,)


class SelectionModel(nn.Module):
    def __init__(self, vocab, config=None):
        super().__init__()
        self.vocab = vocab
        self.config = config or ModelConfig()
        cfg = self.config
        enc_cfg = EncoderConfig(
            d_model=cfg.d_model,
            n_layers=cfg.n_layers,
            n_heads=cfg.n_heads,
            ffn_dim=cfg.encoder_ffn_dim,
            max_len=cfg.max_len,
            dropout=cfg.encoder_dropout,
            norm_first=cfg.encoder_norm_first,
        )
        d = cfg.d_model
        self.backend = ToyTransformerEncoder(len(vocab), enc_cfg)
        self.aggregate = ContextAggregator(d)
        self.transition = TransitionFeatures(
            d,
            d_coh=cfg.d_coh,
            d_cro=cfg.d_cro,
            activation=cfg.transition_activation,
            use_coherence=cfg.use_coherence,
            use_development=cfg.use_development,
        )
        self.gat = GraphAttention(
            d,
            n_heads=cfg.gat_heads,
            ffn_hidden=cfg.gat_ffn_hidden,
            attn_dropout=cfg.gat_attn_dropout,
            ffn_dropout=cfg.gat_ffn_dropout,
        )
        d_e = self.transition.repr_dim
        if cfg.use_pointer:
            self.scorer = PointerScorer(d, d_e)
        else:
            self.scorer = AttentionScorer(d, d_e)

    def encoder_parameters(self):
        return list(self.backend.parameters())

    def head_parameters(self):
        enc = {id(p) for p in self.backend.parameters()}
        return [p for p in self.parameters() if id(p) not in enc]

    def prepare_sample(self, sample, prev_text=None, use_prev_gold=True):
        """Tokenize one SelectionSample and build its candidate graph.

        Training feeds the previous turn's gold knowledge; inference passes
        ``prev_text`` (the previously selected candidate) and sets
        ``use_prev_gold=False`` so gold never leaks into prediction.
        """
        cfg = self.config
        ctx_string = render_context(sample.context)
        pairs = [
            make_pair(self.vocab, ctx_string, cand.text, cfg.max_len)
            for cand in sample.candidates
        ]
        if prev_text is None and use_prev_gold and sample.prev_gold is not None:
            prev_text = sample.prev_gold.text
        last_pair = None
        if prev_text is not None:
            last_pair = make_pair(self.vocab, ctx_string, prev_text, cfg.max_len)
        graph = build_knowledge_graph(sample.candidates, cfg.sim_threshold)
        return PreparedSample(
            episode_id=sample.episode_id,
            turn_index=sample.turn_index,
            pairs=pairs,
            last_pair=last_pair,
            adjacency=graph.adjacency,
            gold_index=sample.gold_index,
            candidate_ids=[c.id for c in sample.candidates],
        )

    def forward(self, prepared):
        """Run a list of PreparedSample; returns a list of SampleOutput."""
        flat = []
        for ps in prepared:
            flat.extend(ps.pairs)
            if ps.last_pair is not None:
                flat.append(ps.last_pair)
        k_cls_all, c_ctx_all, k_know_all = encode_pairs(
            self.backend, flat, self.vocab.pad_id
        )
        outputs = []
        offset = 0
        for ps in prepared:
            M = len(ps.pairs)
            k_cls = k_cls_all[offset:offset + M]
            c_ctx = c_ctx_all[offset:offset + M]
            k_know = k_know_all[offset:offset + M]
            offset += M
            k_last = None
            if ps.last_pair is not None:
                k_last = k_cls_all[offset]
                offset += 1
            c, alpha = self.aggregate(c_ctx)
            E, v_coh, v_cro = self.transition(k_cls, k_know, k_last)
            adj = torch.from_numpy(ps.adjacency)
            nodes = self.gat(k_know, adj)
            g = pool_graph(nodes)
            logits = self.scorer(c, g, E)
            outputs.append(
                SampleOutput(
                    dist=distribution_from_logits(logits),
                    k_cls=k_cls,
                    k_know=k_know,
                    k_last_cls=k_last,
                    v_coh=v_coh,
                    v_cro=v_cro,
                    context_vec=c,
                    attn_weights=alpha,
                )
            )
        return outputs


def predict_episode(model, episode, window_l=None):
    """Sequential inference over one episode.

    The previous turn's *selected* candidate (not gold) feeds each turn's
    development feature. Returns prediction records in turn order.
    """
    window_l = window_l if window_l is not None else model.config.window_l
    was_training = model.training
    model.eval()
    records = []
    prev_selected_text = None
    with torch.no_grad():
        for sample in build_samples(episode, window_l):
            ps = model.prepare_sample(
                sample, prev_text=prev_selected_text, use_prev_gold=False
            )
            out = model([ps])[0]
            pred = out.dist.argmax
            prev_selected_text = sample.candidates[pred].text
            records.append(
                {
                    "episode_id": sample.episode_id,
                    "turn_index": sample.turn_index,
                    "predicted_index": pred,
                    "gold_index": sample.gold_index,
                }
            )
    if was_training:
        model.train()
    return records


def teacher_forced_outputs(model, samples, batch_size=8):
    """Eval-mode forward with gold previous knowledge (training-style feed)."""
    was_training = model.training
    model.eval()
    results = []
    with torch.no_grad():
        for i in range(0, len(samples), batch_size):
            chunk = samples[i:i + batch_size]
            prepared = [model.prepare_sample(s) for s in chunk]
            results.extend(model(prepared))
    if was_training:
        model.train()
    return results


def save_model(model, path, extra_manifest=None):
    tensors = {k: v.detach().cpu().numpy() for k, v in model.state_dict().items()}
    manifest = {
        "kind": "selector",
        "model_config": model.config.to_dict(),
        "vocab": model.vocab.tokens,
    }
    if extra_manifest:
        manifest.update(extra_manifest)
    save_checkpoint(path, tensors, manifest)


def load_model(path):
    tensors, manifest = load_checkpoint(path)
    if manifest.get("kind") != "selector":
        raise IOError(f"{path}: not a selector checkpoint")
    vocab = Vocab(manifest["vocab"])
    config = ModelConfig.from_dict(manifest["model_config"])
    model = SelectionModel(vocab, config)
    state = {k: torch.from_numpy(np.array(v)) for k, v in tensors.items()}
    model.load_state_dict(state)
    model.eval()
    return model, manifest
