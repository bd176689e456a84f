import json

import pytest

from cet2.cli import main
from cet2.data import read_episodes


@pytest.fixture(scope="module")
def workspace(tmp_path_factory):
    """Synthesize a tiny corpus and train a tiny selector once for CLI tests."""
    root = tmp_path_factory.mktemp("cli")
    corpus = root / "corpus.json"
    main([
        "synth", "--out", str(corpus), "--episodes", "14", "--turns", "2",
        "--candidates", "3", "--vocab", "60", "--p-adhere", "0.5", "--seed", "3",
        "--train-frac", "0.7", "--valid-frac", "0.15",
    ])
    model_cfg = root / "model.json"
    model_cfg.write_text(json.dumps({
        "d_model": 16, "n_layers": 1, "n_heads": 2, "encoder_ffn_dim": 32,
        "max_len": 64, "gat_heads": 2, "gat_ffn_hidden": 16,
    }))
    out_dir = root / "run"
    main([
        "train", "--corpus", str(corpus), "--out", str(out_dir),
        "--model-config", str(model_cfg), "--epochs", "2", "--batch-size", "4",
        "--lr-encoder", "1e-3", "--lr-head", "1e-3", "--seed", "0",
    ])
    return root, corpus, out_dir


class TestSynthIngest:
    def test_synth_writes_corpus(self, workspace):
        _, corpus, _ = workspace
        eps = read_episodes(corpus)
        assert len(eps) == 14
        assert {e.split for e in eps} == {"train", "valid", "test_seen"}

    def test_ingest_canonical_relabels_split(self, workspace, tmp_path):
        root, corpus, _ = workspace
        out = tmp_path / "relabel.json"
        main(["ingest", "--format", "canonical", "--in", str(corpus),
              "--out", str(out), "--split", "test_unseen"])
        eps = read_episodes(out)
        assert all(e.split == "test_unseen" for e in eps)

    def test_ingest_wow_fixture(self, tmp_path):
        upstream = tmp_path / "wow.json"
        upstream.write_text(json.dumps([{
            "chosen_topic": "Blue",
            "dialog": [
                {"speaker": "0_Apprentice", "text": "tell me about blue"},
                {"speaker": "1_Wizard", "text": "blue is a color",
                 "retrieved_passages": [{"Blue": ["blue is a color fact"]}],
                 "checked_sentence": {"self_blue_0": "blue is a color fact"}},
            ],
        }]))
        out = tmp_path / "canonical.json"
        main(["ingest", "--format", "wow", "--in", str(upstream),
              "--out", str(out), "--split", "train"])
        eps = read_episodes(out)
        assert len(eps) == 1
        assert eps[0].turns[0].gold.text == "blue is a color fact"


class TestTrainEval:
    def test_train_outputs(self, workspace):
        _, _, out_dir = workspace
        assert (out_dir / "selector.ckpt").exists()
        assert (out_dir / "history.jsonl").exists()
        assert (out_dir / "vocab.txt").exists()

    def test_eval_writes_report_and_predictions(self, workspace, tmp_path):
        _, corpus, out_dir = workspace
        report_path = tmp_path / "report.json"
        pred_path = tmp_path / "preds.jsonl"
        rc = main([
            "eval", "--ckpt", str(out_dir / "selector.ckpt"), "--corpus",
            str(corpus), "--split", "test_seen", "--out", str(report_path),
            "--pred-out", str(pred_path),
        ])
        assert rc == 0
        report = json.loads(report_path.read_text())
        assert 0.0 <= report["acc"] <= 1.0
        lines = pred_path.read_text().strip().splitlines()
        rec = json.loads(lines[0])
        assert {"episode_id", "turn_index", "predicted_index"} <= set(rec)

    def test_eval_reports_deterministic(self, workspace, tmp_path):
        _, corpus, out_dir = workspace
        paths = [tmp_path / "r1.json", tmp_path / "r2.json"]
        for p in paths:
            main(["eval", "--ckpt", str(out_dir / "selector.ckpt"), "--corpus",
                  str(corpus), "--split", "valid", "--out", str(p)])
        assert paths[0].read_bytes() == paths[1].read_bytes()


class TestTrainConfigFile:
    def test_config_file_mirrors_train_config_keys(self, workspace, tmp_path):
        root, corpus, _ = workspace
        cfg_path = tmp_path / "train.json"
        cfg_path.write_text(json.dumps({
            "epochs": 1, "batch_size": 4, "lr_encoder": 1e-3, "lr_head": 1e-3,
            "seed": 5, "lambda_shift": 0.25,
            "ablations": {"shift_loss": True, "cross_opt": False,
                          "coher_opt": True, "pointer_net": True},
        }))
        model_cfg = tmp_path / "model.json"
        model_cfg.write_text(json.dumps({
            "d_model": 16, "n_layers": 1, "n_heads": 2, "encoder_ffn_dim": 32,
            "max_len": 64, "gat_heads": 2, "gat_ffn_hidden": 16,
        }))
        out_dir = tmp_path / "run"
        main(["train", "--corpus", str(corpus), "--out", str(out_dir),
              "--config", str(cfg_path), "--model-config", str(model_cfg)])
        saved = json.loads((out_dir / "config.json").read_text())
        assert saved["train"]["lambda_shift"] == 0.25
        assert saved["train"]["ablations"]["cross_opt"] is False
        assert saved["train"]["epochs"] == 1


class TestGeneratorCli:
    def test_train_gen_and_generate(self, workspace, tmp_path):
        _, corpus, out_dir = workspace
        gen_ckpt = tmp_path / "gen.ckpt"
        main([
            "train-gen", "--corpus", str(corpus), "--selector-ckpt",
            str(out_dir / "selector.ckpt"), "--out", str(gen_ckpt),
            "--epochs", "1", "--batch-size", "8", "--lr", "1e-3", "--seed", "0",
        ])
        assert gen_ckpt.exists()
        ctx_file = tmp_path / "ctx.txt"
        ctx_file.write_text("[usr]w000 w001")
        rc = main([
            "generate", "--ckpt", str(gen_ckpt), "--context-file", str(ctx_file),
            "--knowledge", "w002 w003", "--max-new-tokens", "4",
        ])
        assert rc == 0
