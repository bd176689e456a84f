"""Selector training: Adam with split learning rates, seeded determinism,
best-valid checkpointing, and JSONL history.

All randomness flows through named streams derived from the config seed
(init, dropout, shuffle, per-sample gumbel), so two runs with the same seed
produce byte-identical history, checkpoints and reports.
"""

import copy
import json
import logging
import random
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import torch

from .data import build_samples
from .metrics import selection_accuracy
from .model import ModelConfig, SelectionModel, predict_episode, save_model
from .objective import TrainConfig, selector_loss
from .rng import derive_seed
from .selector import argmax_lowest
from .tokenizer import Vocab

log = logging.getLogger(__name__)


class TrainingError(ValueError):
    pass


@dataclass
class TrainResult:
    model: SelectionModel
    history: list
    best_epoch: int
    best_valid_acc: float
    checkpoint_path: Optional[str] = None
    history_path: Optional[str] = None
    vocab_path: Optional[str] = None


def corpus_texts(episodes):
    for ep in episodes:
        for turn in ep.turns:
            yield turn.user_utterance.text
            yield turn.agent_response.text
            for cand in turn.candidates:
                yield cand.text


def model_config_with_ablations(model_config, ablations):
    cfg = ModelConfig.from_dict(model_config.to_dict())
    cfg.use_development = ablations.cross_opt
    cfg.use_coherence = ablations.coher_opt
    cfg.use_pointer = ablations.pointer_net
    return cfg


def valid_accuracy(model, episodes, window_l):
    records = []
    for ep in episodes:
        records.extend(predict_episode(model, ep, window_l))
    if not records:
        raise TrainingError("validation split yielded no samples")
    return sum(1 for r in records if r["predicted_index"] == r["gold_index"]) / len(records)


def train_selector(episodes, config=None, model_config=None, out_dir=None):
    """Train the knowledge selector on the train split of ``episodes``.

    Returns a TrainResult holding the best-validation model and per-epoch
    history; when ``out_dir`` is given, writes selector.ckpt, history.jsonl,
    vocab.txt and config.json there.
    """
    config = config or TrainConfig()
    model_config = model_config or ModelConfig()
    model_config = model_config_with_ablations(model_config, config.ablations)
    model_config.window_l = config.window_l

    train_eps = [e for e in episodes if e.split == "train"]
    valid_eps = [e for e in episodes if e.split == "valid"]
    if not train_eps:
        raise TrainingError("corpus has no train split")
    if not valid_eps:
        raise TrainingError("corpus has no valid split")

    vocab = Vocab.build(corpus_texts(train_eps))
    torch.manual_seed(derive_seed(config.seed, "init"))
    model = SelectionModel(vocab, model_config)

    train_samples = [
        s for e in train_eps for s in build_samples(e, config.window_l)
    ]
    prepared = [model.prepare_sample(s) for s in train_samples]
    golds = [s.gold_index for s in train_samples]
    keys = [f"{s.episode_id}:{s.turn_index}" for s in train_samples]

    optimizer = torch.optim.Adam(
        [
            {"params": model.encoder_parameters(), "lr": config.lr_encoder},
            {"params": model.head_parameters(), "lr": config.lr_head},
        ],
        weight_decay=config.weight_decay,
    )

    history = []
    best_state = copy.deepcopy(model.state_dict())
    best_valid = float("-inf")
    best_epoch = 0

    torch.manual_seed(derive_seed(config.seed, "dropout"))
    order = list(range(len(prepared)))
    for epoch in range(1, config.epochs + 1):
        model.train()
        random.Random(derive_seed(config.seed, "shuffle", epoch)).shuffle(order)
        hits = total = 0
        ce_sum = sc_sum = 0.0
        sc_batches = 0
        for start in range(0, len(order), config.batch_size):
            idx = order[start:start + config.batch_size]
            batch = [prepared[i] for i in idx]
            batch_golds = [golds[i] for i in idx]
            batch_keys = [keys[i] for i in idx]
            outputs = model(batch)
            loss, breakdown = selector_loss(
                outputs, batch_golds, config, sample_keys=batch_keys, epoch=epoch
            )
            optimizer.zero_grad()
            loss.backward()
            optimizer.step()
            for out, gold in zip(outputs, batch_golds):
                hits += int(argmax_lowest(out.dist.probs) == gold)
                total += 1
            ce_sum += breakdown.l_ce * len(batch)
            if breakdown.n_shift_samples:
                sc_sum += breakdown.l_sc
                sc_batches += 1

        train_acc = hits / total if total else 0.0
        val_acc = valid_accuracy(model, valid_eps, config.window_l)
        entry = {
            "epoch": epoch,
            "train_acc": train_acc,
            "valid_acc": val_acc,
            "l_ce": ce_sum / total if total else 0.0,
            "l_sc": sc_sum / sc_batches if sc_batches else 0.0,
        }
        history.append(entry)
        log.info("epoch %d train_acc %.4f valid_acc %.4f l_ce %.4f l_sc %.4f",
                 epoch, train_acc, val_acc, entry["l_ce"], entry["l_sc"])

        if val_acc > best_valid:
            best_valid = val_acc
            best_epoch = epoch
            best_state = copy.deepcopy(model.state_dict())
        if (config.early_stop_train_acc is not None
                and train_acc >= config.early_stop_train_acc):
            log.info("early stop: train accuracy target reached")
            break

    if config.epochs == 0:
        best_valid = valid_accuracy(model, valid_eps, config.window_l)
    model.load_state_dict(best_state)
    model.eval()

    result = TrainResult(
        model=model,
        history=history,
        best_epoch=best_epoch,
        best_valid_acc=best_valid if best_valid != float("-inf") else 0.0,
    )
    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        ckpt_path = out / "selector.ckpt"
        save_model(
            model,
            ckpt_path,
            extra_manifest={
                "train_config": config.to_dict(),
                "best_epoch": best_epoch,
                "best_valid_acc": result.best_valid_acc,
            },
        )
        hist_path = out / "history.jsonl"
        with open(hist_path, "w", encoding="utf-8") as f:
            for entry in history:
                f.write(json.dumps(entry, sort_keys=True) + "\n")
        vocab_path = out / "vocab.txt"
        vocab.save(vocab_path)
        with open(out / "config.json", "w", encoding="utf-8") as f:
            json.dump(
                {"train": config.to_dict(), "model": model_config.to_dict()},
                f, indent=1, sort_keys=True,
            )
            f.write("\n")
        result.checkpoint_path = str(ckpt_path)
        result.history_path = str(hist_path)
        result.vocab_path = str(vocab_path)
    return result


def predict_corpus(model, episodes, window_l=None):
    """Inference over many episodes; returns prediction record dicts."""
    records = []
    for ep in episodes:
        records.extend(predict_episode(model, ep, window_l))
    return records


def evaluate_model(model, episodes, window_l=None):
    """Inference over episodes and a full metrics report, no files involved."""
    from .metrics import PredictionRecord, compute_report

    window_l = window_l if window_l is not None else model.config.window_l
    samples = [s for e in episodes for s in build_samples(e, window_l)]
    by_key = {(s.episode_id, s.turn_index): s for s in samples}
    records = []
    for r in predict_corpus(model, episodes, window_l):
        s = by_key[(r["episode_id"], r["turn_index"])]
        records.append(PredictionRecord(
            episode_id=r["episode_id"],
            turn_index=r["turn_index"],
            predicted_index=r["predicted_index"],
            gold_index=s.gold_index,
            candidates=s.candidates,
            gold_response=s.gold_response,
        ))
    return compute_report(records, samples)


def corpus_selection_accuracy(model, episodes, window_l=None):
    from .metrics import PredictionRecord

    records = [
        PredictionRecord(
            episode_id=r["episode_id"],
            turn_index=r["turn_index"],
            predicted_index=r["predicted_index"],
            gold_index=r["gold_index"],
        )
        for r in predict_corpus(model, episodes, window_l)
    ]
    return selection_accuracy(records)
