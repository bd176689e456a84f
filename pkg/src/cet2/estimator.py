"""Scikit-learn style facade over the selection pipeline.

``KnowledgeSelector`` exposes fit/predict/predict_proba/score with
``get_params``/``set_params`` from ``BaseEstimator``, so the selector drops
into sklearn tooling (cloning, grid search over toy configs, pipelines that
operate on episode lists). X is a list of DialogueEpisode; labels live
inside the episodes, so y is accepted and ignored.
"""

import numpy as np
import torch
from sklearn.base import BaseEstimator
from sklearn.exceptions import NotFittedError

from .data import DialogueEpisode, build_samples
from .model import ModelConfig
from .objective import AblationFlags, TrainConfig
from .training import predict_corpus, train_selector


def check_episodes(X, require_splits=False):
    """Validate estimator input: a non-empty list of DialogueEpisode."""
    if not isinstance(X, (list, tuple)):
        raise TypeError(
            f"expected a list of DialogueEpisode, got {type(X).__name__}"
        )
    if len(X) == 0:
        raise ValueError("episode list is empty")
    for i, ep in enumerate(X):
        if not isinstance(ep, DialogueEpisode):
            raise TypeError(
                f"X[{i}] is {type(ep).__name__}, expected DialogueEpisode"
            )
    if require_splits:
        splits = {ep.split for ep in X}
        if "train" not in splits:
            raise ValueError("fit requires episodes with split='train'")
        if "valid" not in splits:
            raise ValueError("fit requires episodes with split='valid'")
    return list(X)


class KnowledgeSelector(BaseEstimator):
    """Transition-aware comparative knowledge selector.

    Parameters mirror the model and training configuration; see ModelConfig
    and TrainConfig for semantics. After ``fit`` the trained torch model is
    available as ``model_`` and per-epoch history as ``history_``.
    """

    def __init__(self, d_model=128, n_layers=2, n_heads=4, encoder_ffn_dim=256,
                 max_len=96, window_l=1, sim_threshold=0.3, gat_heads=8,
                 gat_ffn_hidden=256, lambda_shift=0.5, lr_encoder=1e-5,
                 lr_head=1e-4, weight_decay=0.0, batch_size=4, epochs=5,
                 tau_gumbel=1.0, seed=0, shift_loss=True, cross_opt=True,
                 coher_opt=True, pointer_net=True, early_stop_train_acc=None):
        self.d_model = d_model
        self.n_layers = n_layers
        self.n_heads = n_heads
        self.encoder_ffn_dim = encoder_ffn_dim
        self.max_len = max_len
        self.window_l = window_l
        self.sim_threshold = sim_threshold
        self.gat_heads = gat_heads
        self.gat_ffn_hidden = gat_ffn_hidden
        self.lambda_shift = lambda_shift
        self.lr_encoder = lr_encoder
        self.lr_head = lr_head
        self.weight_decay = weight_decay
        self.batch_size = batch_size
        self.epochs = epochs
        self.tau_gumbel = tau_gumbel
        self.seed = seed
        self.shift_loss = shift_loss
        self.cross_opt = cross_opt
        self.coher_opt = coher_opt
        self.pointer_net = pointer_net
        self.early_stop_train_acc = early_stop_train_acc

    def _model_config(self):
        return ModelConfig(
            d_model=self.d_model,
            n_layers=self.n_layers,
            n_heads=self.n_heads,
            encoder_ffn_dim=self.encoder_ffn_dim,
            max_len=self.max_len,
            sim_threshold=self.sim_threshold,
            gat_heads=self.gat_heads,
            gat_ffn_hidden=self.gat_ffn_hidden,
            window_l=self.window_l,
        )

    def _train_config(self):
        return TrainConfig(
            lambda_shift=self.lambda_shift,
            lr_encoder=self.lr_encoder,
            lr_head=self.lr_head,
            weight_decay=self.weight_decay,
            batch_size=self.batch_size,
            epochs=self.epochs,
            tau_gumbel=self.tau_gumbel,
            seed=self.seed,
            window_l=self.window_l,
            early_stop_train_acc=self.early_stop_train_acc,
            ablations=AblationFlags(
                shift_loss=self.shift_loss,
                cross_opt=self.cross_opt,
                coher_opt=self.coher_opt,
                pointer_net=self.pointer_net,
            ),
        )

    def fit(self, X, y=None):
        episodes = check_episodes(X, require_splits=True)
        result = train_selector(
            episodes, config=self._train_config(), model_config=self._model_config()
        )
        self.model_ = result.model
        self.history_ = result.history
        self.best_epoch_ = result.best_epoch
        self.best_valid_acc_ = result.best_valid_acc
        return self

    def _check_fitted(self):
        if not hasattr(self, "model_"):
            raise NotFittedError(
                "this KnowledgeSelector instance is not fitted yet"
            )

    def predict(self, X):
        """Predicted candidate indices, one per gold-labeled turn in X."""
        self._check_fitted()
        episodes = check_episodes(X)
        records = predict_corpus(self.model_, episodes, self.window_l)
        return np.array([r["predicted_index"] for r in records], dtype=np.int64)

    def predict_records(self, X):
        """Full prediction records (episode_id, turn_index, indices)."""
        self._check_fitted()
        episodes = check_episodes(X)
        return predict_corpus(self.model_, episodes, self.window_l)

    def predict_proba(self, X):
        """Per-sample selection distributions (ragged: one array per turn)."""
        self._check_fitted()
        episodes = check_episodes(X)
        out = []
        for ep in episodes:
            prev_text = None
            with torch.no_grad():
                for sample in build_samples(ep, self.window_l):
                    ps = self.model_.prepare_sample(
                        sample, prev_text=prev_text, use_prev_gold=False
                    )
                    o = self.model_([ps])[0]
                    probs = o.dist.probs.detach().numpy().copy()
                    out.append(probs)
                    prev_text = sample.candidates[int(probs.argmax())].text
        return out

    def score(self, X, y=None):
        """Selection accuracy over the gold-labeled turns of X."""
        self._check_fitted()
        episodes = check_episodes(X)
        records = predict_corpus(self.model_, episodes, self.window_l)
        if not records:
            raise ValueError("no gold-labeled samples to score")
        hits = sum(1 for r in records if r["predicted_index"] == r["gold_index"])
        return hits / len(records)
