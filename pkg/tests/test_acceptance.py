"""Acceptance suite: one test per release criterion, each printing a
PASS/FAIL line. The overfit, ablation and smoke tests train real models and
dominate the suite's runtime (budget ~10 min on a 4-core CPU for the overfit
criterion alone; proportionally longer on fewer cores).
"""

import copy
import functools
import json
import math
import subprocess
import sys
import time
from types import SimpleNamespace

import numpy as np
import pytest
import torch

from cet2.data import SynthConfig, build_samples, synth_corpus, write_episodes
from cet2.metrics import bleu, rouge, unigram_f1
from cet2.model import ModelConfig, SelectionModel
from cet2.objective import AblationFlags, TrainConfig, selector_loss
from cet2.selector import argmax_lowest, distribution_from_logits
from cet2.tokenizer import Vocab
from cet2.training import evaluate_model, train_selector

from fd import check_grads
from oracle_metrics import oracle_bleu, oracle_rouge, oracle_unigram_f1
from test_metrics import CURATED_PAIRS


def criterion(name):
    """Print one PASS/FAIL line per acceptance criterion."""

    def wrap(fn):
        @functools.wraps(fn)
        def run(*args, **kwargs):
            try:
                fn(*args, **kwargs)
            except BaseException:
                print(f"\nACCEPTANCE {name}: FAIL", flush=True)
                raise
            print(f"\nACCEPTANCE {name}: PASS", flush=True)

        return run

    return wrap


OVERFIT_SYNTH = SynthConfig(
    n_episodes=200, turns_per_episode=4, m_candidates=8, vocab_size=200,
    p_adhere=0.6, seed=7, split_fractions=(0.9, 0.05, 0.05),
)

TOY_TRAIN = dict(batch_size=16, lr_encoder=1e-3, lr_head=1e-3)


def toy_train_config(**kw):
    base = dict(TOY_TRAIN)
    base.update(kw)
    return TrainConfig(**base)


class TestOverfitOracle:
    @criterion("overfit-oracle")
    def test_overfit_oracle(self):
        episodes = synth_corpus(copy.deepcopy(OVERFIT_SYNTH))
        config = toy_train_config(epochs=30, seed=7, early_stop_train_acc=0.97)
        t0 = time.time()
        result = train_selector(episodes, config)
        elapsed = time.time() - t0

        train_eps = [e for e in episodes if e.split == "train"]
        held_eps = [e for e in episodes if e.split != "train"]
        train_acc = evaluate_model(result.model, train_eps).acc
        held_acc = evaluate_model(result.model, held_eps).acc

        assert len(result.history) <= 30
        assert train_acc >= 0.95, f"train ACC {train_acc:.4f} < 0.95"
        assert held_acc >= 0.40, f"held-out ACC {held_acc:.4f} < 0.40"
        assert elapsed <= 600, f"training took {elapsed:.0f}s > 600s"


class TestAblationDirections:
    @criterion("ablation-direction")
    def test_ablation_directions(self):
        synth = copy.deepcopy(OVERFIT_SYNTH)
        synth.p_adhere = 0.5
        episodes = synth_corpus(synth)
        held = [e for e in episodes if e.split != "train"]

        def run(seed, flags):
            cfg = toy_train_config(epochs=14, seed=seed, ablations=flags)
            res = train_selector(episodes, cfg)
            report = evaluate_model(res.model, held)
            return report.adh, report.div

        seeds = (0, 1, 2)
        means = {}
        for name, flags in (
            ("full", AblationFlags()),
            ("no_cross", AblationFlags(cross_opt=False)),
            ("no_coher", AblationFlags(coher_opt=False)),
        ):
            vals = [run(s, flags) for s in seeds]
            means[name] = (
                sum(v[0] for v in vals) / len(vals),
                sum(v[1] for v in vals) / len(vals),
            )
        full_adh, full_div = means["full"]
        assert means["no_cross"][1] <= full_div, (
            f"w/o CrossOpt Div {means['no_cross'][1]:.3f} > full Div {full_div:.3f}"
        )
        assert means["no_coher"][0] <= full_adh, (
            f"w/o CoherOpt Adh {means['no_coher'][0]:.3f} > full Adh {full_adh:.3f}"
        )


def tiny_double_model(seed=2, **flags):
    torch.manual_seed(seed)
    vocab = Vocab.build([f"w{i}" for i in range(30)])
    cfg = ModelConfig(d_model=8, n_layers=1, n_heads=2, encoder_ffn_dim=16,
                      max_len=32, encoder_dropout=0.0, gat_heads=2,
                      gat_ffn_hidden=16, gat_attn_dropout=0.0,
                      gat_ffn_dropout=0.0, **flags)
    return SelectionModel(vocab, cfg).double().eval()


def tiny_prepared(model, n_episodes=2, seed=8):
    eps = synth_corpus(SynthConfig(
        n_episodes=n_episodes, turns_per_episode=3, m_candidates=3,
        vocab_size=30, p_adhere=0.5, seed=seed, signature_len=2, distinct_len=1,
        utterance_len=4, split_fractions=(1.0, 0.0, 0.0),
    ))
    samples = [s for e in eps for s in build_samples(e)]
    prepared = [model.prepare_sample(s) for s in samples]
    golds = [s.gold_index for s in samples]
    return prepared, golds


class TestGradientSuite:
    @criterion("gradient-suite")
    def test_every_parameter_group(self):
        model = tiny_double_model()
        prepared, golds = tiny_prepared(model)
        config = TrainConfig(lambda_shift=0.5, seed=1)
        gen = torch.Generator().manual_seed(13)
        frozen_noise = [
            torch.randn(len(p.pairs), generator=gen, dtype=torch.float64)
            for p in prepared
        ]

        def loss_fn():
            outputs = model(prepared)
            loss, _ = selector_loss(outputs, golds, config,
                                    gumbel_noise=frozen_noise, hard_select=False)
            return loss

        groups = {
            "aggregation": list(model.aggregate.named_parameters()),
            "W_coh": [("W_coh", model.transition.W_coh)],
            "W_cro": [("W_cro", model.transition.W_cro)],
            "gat": [(n, p) for n, p in model.gat.named_parameters()
                    if not n.startswith("ffn")],
            "ffn": [(n, p) for n, p in model.gat.named_parameters()
                    if n.startswith("ffn")],
            "lstm_cell": list(model.scorer.cell.named_parameters()),
            "pointer": [(n, p) for n, p in model.scorer.named_parameters()
                        if not n.startswith("cell")],
        }
        for group, named in groups.items():
            errs = check_grads(loss_fn, named, h=1e-4)
            bad = {k: round(v, 6) for k, v in errs.items() if v > 1e-3}
            assert not bad, f"group {group} exceeded 1e-3: {bad}"


def random_output(gen, m=4, d=6, with_last=True):
    logits = torch.randn(m, generator=gen)
    return SimpleNamespace(
        dist=distribution_from_logits(logits),
        k_cls=torch.randn(m, d, generator=gen),
        k_know=torch.randn(m, d, generator=gen),
        k_last_cls=torch.randn(d, generator=gen) if with_last else None,
        v_coh=None,
        v_cro=torch.zeros(m, d),
        context_vec=torch.zeros(d),
        attn_weights=torch.full((m,), 1 / m),
    )


class TestLossIdentities:
    @criterion("loss-identities")
    def test_identities_over_random_batches(self):
        gen = torch.Generator().manual_seed(99)
        config = TrainConfig(lambda_shift=0.5, seed=5)
        for batch_idx in range(1000):
            m = int(torch.randint(2, 6, (1,), generator=gen))
            n = int(torch.randint(1, 5, (1,), generator=gen))
            outputs = [
                random_output(gen, m=m, with_last=bool(
                    torch.randint(0, 2, (1,), generator=gen)))
                for _ in range(n)
            ]
            golds = [int(torch.randint(0, m, (1,), generator=gen)) for _ in range(n)]
            _, bd = selector_loss(outputs, golds, config,
                                  sample_keys=range(n), epoch=batch_idx)
            assert abs(bd.l_cls - (bd.l_ce + config.lambda_shift * bd.l_sc)) <= 1e-9
            assert bd.l_sc >= 0.0

    @criterion("loss-zero-on-gold-selection")
    def test_shift_loss_zero_when_selection_equals_gold(self):
        gen = torch.Generator().manual_seed(7)
        config = TrainConfig(lambda_shift=0.5)
        for _ in range(50):
            out = random_output(gen, m=5)
            gold = int(torch.randint(0, 5, (1,), generator=gen))
            noise = torch.full((5,), -1e4)
            noise[gold] = 1e4  # force the hardened selection onto gold
            _, bd = selector_loss([out], [gold], config, gumbel_noise=[noise])
            assert bd.l_sc == pytest.approx(0.0, abs=1e-9)


class TestPermutationEquivariance:
    @criterion("permutation-equivariance")
    def test_100_random_samples(self):
        torch.manual_seed(3)
        vocab = Vocab.build(
            [f"w{i:03d}" for i in range(120)] + [f"n{i:03d}" for i in range(40)]
        )
        cfg = ModelConfig(d_model=32, n_layers=1, n_heads=2, encoder_ffn_dim=64,
                          max_len=64, gat_heads=4, gat_ffn_hidden=32)
        model = SelectionModel(vocab, cfg).eval()
        gen = torch.Generator().manual_seed(17)
        checked = 0
        seed = 0
        with torch.no_grad():
            while checked < 100:
                seed += 1
                m = int(torch.randint(2, 13, (1,), generator=gen))
                eps = synth_corpus(SynthConfig(
                    n_episodes=1, turns_per_episode=2, m_candidates=m,
                    vocab_size=160, p_adhere=0.5, seed=seed,
                    split_fractions=(1.0, 0.0, 0.0),
                ))
                for sample in build_samples(eps[0]):
                    perm = torch.randperm(m, generator=gen).tolist()
                    base = model([model.prepare_sample(sample)])[0].dist.probs
                    shuffled = copy.deepcopy(sample)
                    shuffled.candidates = [sample.candidates[p] for p in perm]
                    shuffled.gold_index = perm.index(sample.gold_index)
                    permuted = model([model.prepare_sample(shuffled)])[0].dist.probs
                    for new_pos, old_pos in enumerate(perm):
                        assert abs(permuted[new_pos].item() - base[old_pos].item()) <= 1e-5
                    checked += 1
                    if checked >= 100:
                        break


class TestMetricOracles:
    @criterion("metric-oracle-equivalence")
    def test_text_metrics_match_brute_force(self):
        assert len(CURATED_PAIRS) == 20
        hyps = [h for h, _ in CURATED_PAIRS]
        refs = [r for _, r in CURATED_PAIRS]
        for hyp, ref in CURATED_PAIRS:
            assert unigram_f1(hyp, ref) == pytest.approx(
                oracle_unigram_f1(hyp, ref), abs=1e-6)
            for n in (1, 2):
                assert rouge(hyp, ref, n) == pytest.approx(
                    oracle_rouge(hyp, ref, n), abs=1e-6)
                assert bleu([hyp], [ref], n) == pytest.approx(
                    oracle_bleu([hyp], [ref], n), abs=1e-6)
        for n in (1, 2):
            assert bleu(hyps, refs, n) == pytest.approx(
                oracle_bleu(hyps, refs, n), abs=1e-6)

    @criterion("metric-fixture-counts")
    def test_grouped_fixtures_match_hand_counts(self):
        from test_metrics import TestAdhesionDiversity, TestPerTurnAccuracy

        TestAdhesionDiversity().test_hand_counted_fixture()
        TestAdhesionDiversity().test_decomposition_identity()
        TestPerTurnAccuracy().test_three_record_fixture()

    @criterion("decomposition-identity")
    def test_acc_decomposition_on_evaluated_run(self):
        # every evaluated run must satisfy the integer-count decomposition
        episodes = synth_corpus(SynthConfig(
            n_episodes=12, turns_per_episode=3, m_candidates=4, vocab_size=80,
            p_adhere=0.5, seed=5, split_fractions=(0.7, 0.3, 0.0),
        ))
        model = SelectionModel(
            Vocab.build([f"w{i:03d}" for i in range(80)] + ["n000"]),
            ModelConfig(d_model=16, n_layers=1, n_heads=2, encoder_ffn_dim=32,
                        max_len=64, gat_heads=2, gat_ffn_hidden=16),
        ).eval()
        report = evaluate_model(model, episodes)
        n = report.n_adhesive + report.n_changing
        lhs = report.n_adhesive * report.adh + report.n_changing * report.div
        total_correct_non_first = round(lhs)
        acc_non_first = total_correct_non_first / n
        assert abs(lhs / n - acc_non_first) < 1e-12


class TestDeterminism:
    @criterion("determinism")
    def test_byte_identical_artifacts(self, tmp_path):
        episodes = synth_corpus(SynthConfig(
            n_episodes=30, turns_per_episode=3, m_candidates=4, vocab_size=100,
            p_adhere=0.5, seed=21, split_fractions=(0.7, 0.15, 0.15),
        ))
        corpus_path = tmp_path / "corpus.json"
        write_episodes(episodes, corpus_path)
        outs = []
        for run in ("r1", "r2"):
            out_dir = tmp_path / run
            cfg = toy_train_config(epochs=2, seed=13)
            mc = ModelConfig(d_model=32, n_layers=1, n_heads=2,
                             encoder_ffn_dim=64, max_len=64, gat_heads=2,
                             gat_ffn_hidden=32)
            train_selector(episodes, cfg, model_config=mc, out_dir=out_dir)
            from cet2.cli import main as cli_main

            report = out_dir / "report.json"
            cli_main([
                "eval", "--ckpt", str(out_dir / "selector.ckpt"),
                "--corpus", str(corpus_path), "--split", "test_seen",
                "--out", str(report),
            ])
            outs.append(out_dir)
        for name in ("selector.ckpt", "history.jsonl", "report.json",
                     "report.preds.jsonl"):
            b1 = (outs[0] / name).read_bytes()
            b2 = (outs[1] / name).read_bytes()
            assert b1 == b2, f"{name} differs between identical runs"


class TestEndToEndSmoke:
    @criterion("end-to-end-cli-smoke")
    def test_ingest_train_eval_serve(self, tmp_path):
        import httpx

        t0 = time.time()
        corpus = tmp_path / "corpus.json"
        subprocess.run(
            [sys.executable, "-m", "cet2.cli", "synth", "--out", str(corpus),
             "--episodes", "60", "--turns", "3", "--candidates", "5",
             "--vocab", "120", "--p-adhere", "0.5", "--seed", "11"],
            check=True,
        )
        out_dir = tmp_path / "run"
        subprocess.run(
            [sys.executable, "-m", "cet2.cli", "train", "--corpus", str(corpus),
             "--out", str(out_dir), "--epochs", "3", "--batch-size", "16",
             "--lr-encoder", "1e-3", "--lr-head", "1e-3", "--seed", "0"],
            check=True,
        )
        report = tmp_path / "report.json"
        subprocess.run(
            [sys.executable, "-m", "cet2.cli", "eval",
             "--ckpt", str(out_dir / "selector.ckpt"), "--corpus", str(corpus),
             "--split", "test_seen", "--out", str(report)],
            check=True,
        )
        assert json.loads(report.read_text())["acc"] >= 0.0

        port = 891
        proc = subprocess.Popen(
            [sys.executable, "-m", "cet2.cli", "serve",
             "--ckpt", str(out_dir / "selector.ckpt"),
             "--addr", f"127.0.0.1:{port}", "--corpus", str(corpus)],
            stdout=subprocess.DEVNULL, stderr=subprocess.DEVNULL,
        )
        try:
            base = f"http://127.0.0.1:{port}"
            for _ in range(120):
                try:
                    if httpx.get(base + "/healthz", timeout=1).status_code == 200:
                        break
                except httpx.HTTPError:
                    time.sleep(0.5)
            else:
                raise AssertionError("service never became healthy")
            sid = httpx.post(base + "/sessions", json={
                "topic": "demo",
                "candidates": [
                    {"id": "k1", "text": "w000 w001 w002"},
                    {"id": "k2", "text": "w010 w011 w012"},
                    {"id": "k3", "text": "w020 w021 w022"},
                ],
            }, timeout=10).json()["session_id"]
            prev_selected = None
            for turn, text in enumerate(["w000 w001 tell me", "w010 more please",
                                         "w020 and now"]):
                body = httpx.post(
                    base + f"/sessions/{sid}/messages",
                    json={"text": text}, timeout=60,
                ).json()
                assert len(body["ranked"]) == 3
                probs = [r["prob"] for r in body["ranked"]]
                assert probs == sorted(probs, reverse=True)
                assert abs(sum(probs) - 1.0) <= 1e-6
                assert body["selected_id"] in {"k1", "k2", "k3"}
                assert body["response"]
                flags = {r["candidate_id"]: r["adhesive"] for r in body["ranked"]}
                if turn == 0:
                    assert all(v is None for v in flags.values())
                    assert all(r["v_cro_norm"] == 0.0 for r in body["ranked"])
                else:
                    assert flags[prev_selected] is True
                prev_selected = body["selected_id"]
            snap = httpx.get(base + f"/sessions/{sid}", timeout=10).json()
            assert len(snap["transcript"]) == 6
        finally:
            proc.terminate()
            proc.wait(timeout=10)
        assert time.time() - t0 <= 900, "end-to-end smoke exceeded 15 minutes"
