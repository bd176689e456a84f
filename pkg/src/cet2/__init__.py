"""Transition-aware knowledge selection for knowledge-grounded dialogue."""

from .data import (
    DialogueEpisode,
    DialogueTurn,
    KnowledgeCandidate,
    SelectionSample,
    SynthConfig,
    Utterance,
    build_samples,
    load_corpus,
    read_episodes,
    render_context,
    synth_corpus,
    write_episodes,
)
from .estimator import KnowledgeSelector, check_episodes
from .generator import (
    DecodingConfig,
    GeneratorConfig,
    GenTrainConfig,
    ToyCausalLM,
    generate,
    knowledge_ratio,
    load_generator,
    train_generator,
)
from .metrics import (
    MetricsReport,
    PredictionRecord,
    adhesion_diversity,
    bleu,
    evaluate_run,
    per_turn_accuracy,
    rouge,
    selection_accuracy,
    unigram_f1,
)
from .model import ModelConfig, SelectionModel, load_model, predict_episode, save_model
from .objective import (
    AblationFlags,
    LossBreakdown,
    TrainConfig,
    ce_loss,
    selector_loss,
    shift_loss,
    variance_profile,
)
from .selector import build_knowledge_graph, select
from .tokenizer import Vocab
from .training import TrainResult, predict_corpus, train_selector

__version__ = "0.1.0"

__all__ = [
    "AblationFlags",
    "DecodingConfig",
    "DialogueEpisode",
    "DialogueTurn",
    "GenTrainConfig",
    "GeneratorConfig",
    "KnowledgeCandidate",
    "KnowledgeSelector",
    "LossBreakdown",
    "MetricsReport",
    "ModelConfig",
    "PredictionRecord",
    "SelectionModel",
    "SelectionSample",
    "SynthConfig",
    "ToyCausalLM",
    "TrainConfig",
    "TrainResult",
    "Utterance",
    "Vocab",
    "adhesion_diversity",
    "bleu",
    "build_knowledge_graph",
    "build_samples",
    "ce_loss",
    "check_episodes",
    "evaluate_run",
    "generate",
    "knowledge_ratio",
    "load_corpus",
    "load_generator",
    "load_model",
    "per_turn_accuracy",
    "predict_corpus",
    "predict_episode",
    "read_episodes",
    "render_context",
    "rouge",
    "save_model",
    "select",
    "selection_accuracy",
    "selector_loss",
    "shift_loss",
    "synth_corpus",
    "train_generator",
    "train_selector",
    "unigram_f1",
    "variance_profile",
    "write_episodes",
]
