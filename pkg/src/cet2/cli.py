"""Command line interface: ingest, synth, train, train-gen, eval, generate,
serve."""

import argparse
import json
import logging
import sys
from pathlib import Path

from . import data
from .data import SynthConfig, load_corpus, read_episodes, synth_corpus, write_episodes
from .metrics import evaluate_run
from .model import ModelConfig, load_model
from .objective import AblationFlags, TrainConfig

log = logging.getLogger("cet2")


def cmd_ingest(args):
    episodes = load_corpus(args.input, args.format, args.split)
    write_episodes(episodes, args.out)
    print(f"wrote {len(episodes)} episodes to {args.out}")


def cmd_synth(args):
    cfg = SynthConfig(
        n_episodes=args.episodes,
        turns_per_episode=args.turns,
        m_candidates=args.candidates,
        vocab_size=args.vocab,
        p_adhere=args.p_adhere,
        seed=args.seed,
        split_fractions=(args.train_frac, args.valid_frac,
                         1.0 - args.train_frac - args.valid_frac),
    )
    episodes = synth_corpus(cfg)
    write_episodes(episodes, args.out)
    print(f"wrote {len(episodes)} synthetic episodes to {args.out}")


def _train_config_from_args(args):
    if args.config:
        with open(args.config, encoding="utf-8") as f:
            raw = json.load(f)
        cfg = TrainConfig(**raw)
    else:
        cfg = TrainConfig()
    for name in ("lambda_shift", "lr_encoder", "lr_head", "weight_decay",
                 "batch_size", "epochs", "tau_gumbel", "seed", "window_l",
                 "early_stop_train_acc"):
        val = getattr(args, name, None)
        if val is not None:
            setattr(cfg, name, val)
    for flag in ("shift_loss", "cross_opt", "coher_opt", "pointer_net"):
        if getattr(args, f"no_{flag}", False):
            setattr(cfg.ablations, flag, False)
    return cfg


def cmd_train(args):
    from .training import train_selector

    episodes = read_episodes(args.corpus)
    cfg = _train_config_from_args(args)
    model_cfg = ModelConfig()
    if args.model_config:
        with open(args.model_config, encoding="utf-8") as f:
            model_cfg = ModelConfig.from_dict(json.load(f))
    result = train_selector(episodes, cfg, model_config=model_cfg, out_dir=args.out)
    print(f"best epoch {result.best_epoch} valid_acc {result.best_valid_acc:.4f}")
    print(f"checkpoint: {result.checkpoint_path}")


def cmd_train_gen(args):
    from .generator import GenTrainConfig, train_generator

    episodes = read_episodes(args.corpus)
    selector = None
    if args.selector_ckpt:
        selector, _ = load_model(args.selector_ckpt)
    cfg = GenTrainConfig(lr=args.lr, batch_size=args.batch_size,
                         epochs=args.epochs, beta_decay=args.beta_decay,
                         seed=args.seed)
    _, history = train_generator(episodes, selector_model=selector, config=cfg,
                                 out_path=args.out)
    print(f"final loss {history[-1]['loss']:.4f}; checkpoint: {args.out}")


def cmd_eval(args):
    from .generator import DecodingConfig, generate, load_generator
    from .model import predict_episode
    from .data import render_context, build_samples

    model, _ = load_model(args.ckpt)
    episodes = read_episodes(args.corpus, split=args.split)
    if not episodes:
        print(f"no episodes in split {args.split!r}", file=sys.stderr)
        return 1
    generator = None
    if args.gen_ckpt:
        generator, _ = load_generator(args.gen_ckpt)

    predictions = []
    for ep in episodes:
        recs = predict_episode(model, ep)
        if generator is not None:
            samples = {s.turn_index: s for s in build_samples(ep, model.config.window_l)}
            for rec in recs:
                s = samples[rec["turn_index"]]
                knowledge = s.candidates[rec["predicted_index"]].text
                rec["generated_response"] = generate(
                    generator, render_context(s.context), knowledge,
                    DecodingConfig(max_new_tokens=args.max_new_tokens),
                )
        predictions.extend(recs)

    pred_path = args.pred_out or str(Path(args.out).with_suffix(".preds.jsonl"))
    with open(pred_path, "w", encoding="utf-8") as f:
        for rec in predictions:
            row = {k: rec[k] for k in ("episode_id", "turn_index", "predicted_index")}
            if "generated_response" in rec:
                row["generated_response"] = rec["generated_response"]
            f.write(json.dumps(row, sort_keys=True) + "\n")
    report = evaluate_run(pred_path, episodes, args.out)
    print(json.dumps(report.to_dict(), indent=1, sort_keys=True))
    return 0


def cmd_generate(args):
    from .generator import DecodingConfig, generate, load_generator

    model, _ = load_generator(args.ckpt)
    context = Path(args.context_file).read_text(encoding="utf-8").strip()
    out = generate(model, context, args.knowledge,
                   DecodingConfig(max_new_tokens=args.max_new_tokens))
    print(out)


def cmd_serve(args):
    import uvicorn

    from .generator import load_generator
    from .service import create_app

    model, _ = load_model(args.ckpt)
    generator = None
    if args.gen_ckpt:
        generator, _ = load_generator(args.gen_ckpt)
    episodes = read_episodes(args.corpus) if args.corpus else None
    host, _, port = args.addr.rpartition(":")
    app = create_app(model, generator=generator, episodes=episodes)
    uvicorn.run(app, host=host or "127.0.0.1", port=int(port))


def build_parser():
    p = argparse.ArgumentParser(prog="cet2",
                                description="knowledge selection toolkit")
    sub = p.add_subparsers(dest="command", required=True)

    sp = sub.add_parser("ingest", help="convert an upstream corpus release")
    sp.add_argument("--format", required=True, choices=["wow", "holle", "canonical"])
    sp.add_argument("--in", dest="input", required=True)
    sp.add_argument("--out", required=True)
    sp.add_argument("--split", default="train", choices=list(data.SPLITS))
    sp.set_defaults(func=cmd_ingest)

    sp = sub.add_parser("synth", help="generate a synthetic corpus")
    sp.add_argument("--out", required=True)
    sp.add_argument("--episodes", type=int, default=200)
    sp.add_argument("--turns", type=int, default=4)
    sp.add_argument("--candidates", type=int, default=8)
    sp.add_argument("--vocab", type=int, default=200)
    sp.add_argument("--p-adhere", type=float, default=0.6)
    sp.add_argument("--seed", type=int, default=7)
    sp.add_argument("--train-frac", type=float, default=0.9)
    sp.add_argument("--valid-frac", type=float, default=0.05)
    sp.set_defaults(func=cmd_synth)

    sp = sub.add_parser("train", help="train the knowledge selector")
    sp.add_argument("--corpus", required=True)
    sp.add_argument("--out", required=True)
    sp.add_argument("--config", help="JSON file mirroring TrainConfig keys")
    sp.add_argument("--model-config", help="JSON file mirroring ModelConfig keys")
    sp.add_argument("--lambda-shift", dest="lambda_shift", type=float)
    sp.add_argument("--lr-encoder", dest="lr_encoder", type=float)
    sp.add_argument("--lr-head", dest="lr_head", type=float)
    sp.add_argument("--weight-decay", dest="weight_decay", type=float)
    sp.add_argument("--batch-size", dest="batch_size", type=int)
    sp.add_argument("--epochs", type=int)
    sp.add_argument("--tau-gumbel", dest="tau_gumbel", type=float)
    sp.add_argument("--seed", type=int)
    sp.add_argument("--window-l", dest="window_l", type=int)
    sp.add_argument("--early-stop-train-acc", dest="early_stop_train_acc", type=float)
    sp.add_argument("--no-shift-loss", dest="no_shift_loss", action="store_true")
    sp.add_argument("--no-cross-opt", dest="no_cross_opt", action="store_true")
    sp.add_argument("--no-coher-opt", dest="no_coher_opt", action="store_true")
    sp.add_argument("--no-pointer-net", dest="no_pointer_net", action="store_true")
    sp.set_defaults(func=cmd_train)

    sp = sub.add_parser("train-gen", help="train the response generator")
    sp.add_argument("--corpus", required=True)
    sp.add_argument("--selector-ckpt", default=None)
    sp.add_argument("--out", required=True)
    sp.add_argument("--lr", type=float, default=5e-5)
    sp.add_argument("--batch-size", type=int, default=32)
    sp.add_argument("--epochs", type=int, default=10)
    sp.add_argument("--beta-decay", type=float, default=1e-5)
    sp.add_argument("--seed", type=int, default=0)
    sp.set_defaults(func=cmd_train_gen)

    sp = sub.add_parser("eval", help="run selection (and optional generation) "
                                     "over a split and write a metrics report")
    sp.add_argument("--ckpt", required=True)
    sp.add_argument("--corpus", required=True)
    sp.add_argument("--split", default="test_seen", choices=list(data.SPLITS))
    sp.add_argument("--out", required=True)
    sp.add_argument("--pred-out", default=None)
    sp.add_argument("--gen-ckpt", default=None)
    sp.add_argument("--max-new-tokens", type=int, default=24)
    sp.set_defaults(func=cmd_eval)

    sp = sub.add_parser("generate", help="spot-check the generator")
    sp.add_argument("--ckpt", required=True)
    sp.add_argument("--context-file", required=True)
    sp.add_argument("--knowledge", required=True)
    sp.add_argument("--max-new-tokens", type=int, default=24)
    sp.set_defaults(func=cmd_generate)

    sp = sub.add_parser("serve", help="start the session service")
    sp.add_argument("--ckpt", required=True)
    sp.add_argument("--addr", default="127.0.0.1:8000")
    sp.add_argument("--gen-ckpt", default=None)
    sp.add_argument("--corpus", default=None)
    sp.set_defaults(func=cmd_serve)
    return p


def main(argv=None):
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(message)s")
    args = build_parser().parse_args(argv)
    return args.func(args) or 0


if __name__ == "__main__":
    sys.exit(main())
