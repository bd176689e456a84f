"""Knowledge-grounded response generation with a small causal LM.

Inputs are laid out knowledge-first: ``knowledge [sep] context [sep]
response [eos]``. Only response positions (including the terminator) carry
loss. During training the grounding knowledge is the gold sentence with
probability ``r = exp(-step * beta_decay)``, else the selector's prediction,
so generation gradually adapts to the selector it will be paired with.
"""

import math
import random
from dataclasses import asdict, dataclass
from typing import Optional

import numpy as np
import torch
import torch.nn as nn
import torch.nn.functional as F

from .checkpoint import load_checkpoint, save_checkpoint
from .data import build_samples, render_context
from .rng import derive_seed, generator_for
from .selector import argmax_lowest
from .tokenizer import Vocab


class GenerationError(ValueError):
    pass


@dataclass
class GeneratorConfig:
    d_model: int = 128
    n_layers: int = 2
    n_heads: int = 4
    ffn_dim: int = 256
    max_len: int = 160
    dropout: float = 0.1

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, d):
        return cls(**d)


@dataclass
class GenTrainConfig:
    lr: float = 5e-5
    batch_size: int = 32
    epochs: int = 10
    beta_decay: float = 1e-5
    seed: int = 0
    window_l: int = 1

    def to_dict(self):
        return asdict(self)


@dataclass
class DecodingConfig:
    max_new_tokens: int = 32
    strategy: str = "greedy"  # or "top_k"
    top_k: int = 10
    seed: int = 0

    def __post_init__(self):
        if self.max_new_tokens < 1:
            raise GenerationError("max_new_tokens must be >= 1")
        if self.strategy not in ("greedy", "top_k"):
            raise GenerationError(f"unknown decoding strategy {self.strategy!r}")


@dataclass
class GenSample:
    token_ids: list
    loss_mask: list  # True on response positions (incl. the [eos] terminator)

    def __post_init__(self):
        if len(self.token_ids) != len(self.loss_mask):
            raise GenerationError("ids and mask lengths differ")


def knowledge_ratio(step, beta_decay):
    """Ground-truth usage ratio r = exp(-step * beta_decay), in (0, 1]."""
    if step < 0:
        raise ValueError("step must be >= 0")
    if beta_decay <= 0:
        raise ValueError("beta_decay must be positive")
    return math.exp(-step * beta_decay)


def build_gen_input(vocab, context_string, knowledge_text, response_text,
                    max_len=160):
    """Assemble one training sample.

    Over budget, context head tokens are dropped first, then knowledge tail
    tokens; response tokens are never dropped. A response that cannot fit on
    its own is a sample-level error.
    """
    know = vocab.encode(knowledge_text)
    ctx = vocab.encode(context_string) if context_string else []
    resp = vocab.encode(response_text)
    if not resp:
        raise GenerationError("response has no tokens")
    resp = resp + [vocab.eos_id]
    fixed = len(resp) + 2  # two separators
    if fixed > max_len:
        raise GenerationError(
            f"response of {len(resp)} tokens exceeds max_len {max_len}"
        )
    remaining = max_len - fixed
    ctx_keep = min(len(ctx), max(0, remaining - len(know)))
    know_keep = min(len(know), remaining - ctx_keep)
    ctx = ctx[len(ctx) - ctx_keep:]
    know = know[:know_keep]
    ids = know + [vocab.sep_id] + ctx + [vocab.sep_id] + resp
    mask = [False] * (len(know) + 1 + len(ctx) + 1) + [True] * len(resp)
    return GenSample(token_ids=ids, loss_mask=mask)


class ToyCausalLM(nn.Module):
    """Decoder-only transformer over the shared vocabulary."""

    def __init__(self, vocab_size, config=None):
        super().__init__()
        self.config = config or GeneratorConfig()
        cfg = self.config
        self.token_emb = nn.Embedding(vocab_size, cfg.d_model)
        self.pos_emb = nn.Embedding(cfg.max_len, cfg.d_model)
        layer = nn.TransformerEncoderLayer(
            d_model=cfg.d_model,
            nhead=cfg.n_heads,
            dim_feedforward=cfg.ffn_dim,
            dropout=cfg.dropout,
            batch_first=True,
        )
        self.layers = nn.TransformerEncoder(layer, cfg.n_layers,
                                            enable_nested_tensor=False)
        self.lm_head = nn.Linear(cfg.d_model, vocab_size)

    def forward(self, token_ids, attention_mask=None):
        """token_ids: (B, T) -> logits (B, T, V) with causal masking."""
        B, T = token_ids.shape
        pos = torch.arange(T, device=token_ids.device).unsqueeze(0).expand(B, T)
        h = self.token_emb(token_ids) + self.pos_emb(pos)
        causal = torch.triu(
            torch.full((T, T), float("-inf"), device=token_ids.device), diagonal=1
        )
        pad_mask = None if attention_mask is None else ~attention_mask
        h = self.layers(h, mask=causal, src_key_padding_mask=pad_mask)
        return self.lm_head(h)


def lm_loss(model, gen_samples, pad_id):
    """Mean over samples of per-token cross-entropy on response positions."""
    B = len(gen_samples)
    T = max(len(s.token_ids) for s in gen_samples)
    ids = torch.full((B, T), pad_id, dtype=torch.long)
    attn = torch.zeros((B, T), dtype=torch.bool)
    mask = torch.zeros((B, T), dtype=torch.bool)
    for i, s in enumerate(gen_samples):
        L = len(s.token_ids)
        ids[i, :L] = torch.tensor(s.token_ids)
        attn[i, :L] = True
        mask[i, :L] = torch.tensor(s.loss_mask)
    logits = model(ids, attn)
    # predict position t from prefix < t
    logp = F.log_softmax(logits[:, :-1], dim=-1)
    targets = ids[:, 1:]
    target_mask = mask[:, 1:]
    per_sample = []
    for i in range(B):
        sel = target_mask[i]
        if not bool(sel.any()):
            raise GenerationError("sample has no response targets")
        tok_logp = logp[i, sel].gather(1, targets[i, sel].unsqueeze(1))
        per_sample.append(-tok_logp.mean())
    return torch.stack(per_sample).mean()


def _selector_predictions(selector_model, samples):
    """Teacher-forced argmax prediction for each sample (selector frozen)."""
    from .model import teacher_forced_outputs

    outputs = teacher_forced_outputs(selector_model, samples)
    return [argmax_lowest(o.dist.probs) for o in outputs]


def train_generator(episodes, selector_model=None, config=None,
                    gen_config=None, vocab=None, out_path=None):
    """Fit the causal LM on the train split.

    ``selector_model`` supplies predicted knowledge once the ground-truth
    ratio decays; without one, gold knowledge is always used. Returns
    (model, history) where history logs per-epoch loss and mean ratio.
    """
    config = config or GenTrainConfig()
    gen_config = gen_config or GeneratorConfig()
    train_eps = [e for e in episodes if e.split == "train"]
    if not train_eps:
        raise GenerationError("corpus has no train split")
    if vocab is None:
        vocab = selector_model.vocab if selector_model is not None else None
    if vocab is None:
        from .training import corpus_texts

        vocab = Vocab.build(corpus_texts(train_eps))

    samples = [s for e in train_eps for s in build_samples(e, config.window_l)]
    contexts = [render_context(s.context) for s in samples]
    preds = None
    if selector_model is not None:
        preds = _selector_predictions(selector_model, samples)

    gold_inputs, pred_inputs = [], []
    for i, s in enumerate(samples):
        gold_text = s.candidates[s.gold_index].text
        gold_inputs.append(
            build_gen_input(vocab, contexts[i], gold_text, s.gold_response,
                            gen_config.max_len)
        )
        if preds is None:
            pred_inputs.append(gold_inputs[-1])
        else:
            pred_text = s.candidates[preds[i]].text
            pred_inputs.append(
                build_gen_input(vocab, contexts[i], pred_text, s.gold_response,
                                gen_config.max_len)
            )

    torch.manual_seed(derive_seed(config.seed, "gen-init"))
    model = ToyCausalLM(len(vocab), gen_config)
    model.vocab = vocab
    optimizer = torch.optim.Adam(model.parameters(), lr=config.lr)
    ratio_rng = random.Random(derive_seed(config.seed, "gen-ratio"))

    torch.manual_seed(derive_seed(config.seed, "gen-dropout"))
    history = []
    step = 0
    order = list(range(len(samples)))
    for epoch in range(1, config.epochs + 1):
        model.train()
        random.Random(derive_seed(config.seed, "gen-shuffle", epoch)).shuffle(order)
        loss_sum = 0.0
        ratio_sum = 0.0
        n_batches = 0
        for start in range(0, len(order), config.batch_size):
            idx = order[start:start + config.batch_size]
            r = knowledge_ratio(step, config.beta_decay)
            batch = [
                gold_inputs[i] if ratio_rng.random() < r else pred_inputs[i]
                for i in idx
            ]
            loss = lm_loss(model, batch, vocab.pad_id)
            optimizer.zero_grad()
            loss.backward()
            optimizer.step()
            loss_sum += float(loss.detach())
            ratio_sum += r
            n_batches += 1
            step += 1
        history.append({
            "epoch": epoch,
            "loss": loss_sum / max(n_batches, 1),
            "mean_ratio": ratio_sum / max(n_batches, 1),
        })
    model.eval()
    if out_path is not None:
        save_generator(model, out_path, extra_manifest={
            "train_config": config.to_dict(), "history": history,
        })
    return model, history


def generate(model, context_string, knowledge_text, decoding=None):
    """Decode a response for (context, knowledge); greedy is deterministic."""
    decoding = decoding or DecodingConfig()
    vocab = model.vocab
    know = vocab.encode(knowledge_text)
    ctx = vocab.encode(context_string) if context_string else []
    prefix = know + [vocab.sep_id] + ctx + [vocab.sep_id]
    max_prefix = model.config.max_len - decoding.max_new_tokens
    if max_prefix < 2:
        raise GenerationError("max_new_tokens leaves no room for the prefix")
    if len(prefix) > max_prefix:
        prefix = prefix[len(prefix) - max_prefix:]
    ids = list(prefix)
    out_tokens = []
    gen = generator_for(decoding.seed, "decode") if decoding.strategy == "top_k" else None
    was_training = model.training
    model.eval()
    with torch.no_grad():
        for _ in range(decoding.max_new_tokens):
            inp = torch.tensor([ids], dtype=torch.long)
            logits = model(inp)[0, -1]
            if decoding.strategy == "greedy":
                nxt = argmax_lowest(logits)
            else:
                k = min(decoding.top_k, logits.shape[0])
                vals, cand = torch.topk(logits, k)
                probs = torch.softmax(vals, dim=0)
                pick = int(torch.multinomial(probs, 1, generator=gen))
                nxt = int(cand[pick])
            if nxt == vocab.eos_id:
                break
            ids.append(nxt)
            out_tokens.append(nxt)
            if len(ids) >= model.config.max_len:
                break
    if was_training:
        model.train()
    return vocab.decode(out_tokens)


def save_generator(model, path, extra_manifest=None):
    tensors = {k: v.detach().cpu().numpy() for k, v in model.state_dict().items()}
    manifest = {
        "kind": "generator",
        "model_config": model.config.to_dict(),
        "vocab": model.vocab.tokens,
    }
    if extra_manifest:
        manifest.update(extra_manifest)
    save_checkpoint(path, tensors, manifest)


def load_generator(path):
    tensors, manifest = load_checkpoint(path)
    if manifest.get("kind") != "generator":
        raise IOError(f"{path}: not a generator checkpoint")
    vocab = Vocab(manifest["vocab"])
    model = ToyCausalLM(len(vocab), GeneratorConfig.from_dict(manifest["model_config"]))
    state = {k: torch.from_numpy(np.array(v)) for k, v in tensors.items()}
    model.load_state_dict(state)
    model.vocab = vocab
    model.eval()
    return model, manifest
