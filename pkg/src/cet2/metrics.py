"""Automatic evaluation: selection accuracy, adhesion/diversity, per-turn
accuracy buckets, and generation overlap metrics (uF1, BLEU, ROUGE).

A sample is topic-adhesive when its gold knowledge text equals the previous
turn's gold text, topic-changing otherwise; samples without a previous gold
are excluded from both groups. All text metrics lowercase, strip punctuation
and split on whitespace.
"""

import json
import math
import re
from collections import Counter
from dataclasses import dataclass, field
from typing import Optional

from .data import build_samples, read_episodes

_WORD_RE = re.compile(r"[a-z0-9_']+")


class MetricError(ValueError):
    """Metric undefined for the given inputs (e.g. empty record set)."""


def metric_tokens(text):
    return _WORD_RE.findall(text.lower())


@dataclass
class PredictionRecord:
    episode_id: str
    turn_index: int
    predicted_index: int
    gold_index: Optional[int] = None
    candidates: list = field(default_factory=list)
    generated_response: Optional[str] = None
    gold_response: str = ""

    @property
    def correct(self):
        return self.gold_index is not None and self.predicted_index == self.gold_index


@dataclass
class MetricsReport:
    acc: float
    adh: Optional[float]
    div: Optional[float]
    n_adhesive: int
    n_changing: int
    n_first_turn: int
    per_turn: list
    uf1: Optional[float] = None
    bleu1: Optional[float] = None
    bleu2: Optional[float] = None
    rouge1: Optional[float] = None
    rouge2: Optional[float] = None

    def to_dict(self):
        return {
            "acc": self.acc,
            "adh": self.adh,
            "div": self.div,
            "n_adhesive": self.n_adhesive,
            "n_changing": self.n_changing,
            "n_first_turn": self.n_first_turn,
            "per_turn": self.per_turn,
            "uf1": self.uf1,
            "bleu1": self.bleu1,
            "bleu2": self.bleu2,
            "rouge1": self.rouge1,
            "rouge2": self.rouge2,
        }


def selection_accuracy(records):
    if not records:
        raise MetricError("selection accuracy undefined on empty record set")
    return sum(1 for r in records if r.correct) / len(records)


def adhesion_diversity(records, samples):
    """Split records into adhesive/changing groups and score each.

    ``samples`` provide gold labels and previous-gold texts; joined by
    (episode_id, turn_index). A group with no members reports None.
    Returns (adh, div, counts dict).
    """
    by_key = {(s.episode_id, s.turn_index): s for s in samples}
    n_adh = n_chg = n_first = 0
    correct_adh = correct_chg = 0
    for r in records:
        key = (r.episode_id, r.turn_index)
        if key not in by_key:
            raise MetricError(f"record {key} has no matching sample")
        s = by_key[key]
        if s.prev_gold is None:
            n_first += 1
            continue
        gold_text = s.candidates[s.gold_index].text
        if gold_text == s.prev_gold.text:
            n_adh += 1
            correct_adh += int(r.correct)
        else:
            n_chg += 1
            correct_chg += int(r.correct)
    adh = correct_adh / n_adh if n_adh else None
    div = correct_chg / n_chg if n_chg else None
    counts = {
        "n_adhesive": n_adh,
        "n_changing": n_chg,
        "n_first_turn": n_first,
        "correct_adhesive": correct_adh,
        "correct_changing": correct_chg,
    }
    return adh, div, counts


TURN_BUCKETS = ["1", "2", "3", "4", "5", "6+"]


def per_turn_accuracy(records):
    """Accuracy per 1-based turn number, turns beyond 5 pooled into "6+"."""
    totals = Counter()
    hits = Counter()
    for r in records:
        turn_number = r.turn_index + 1
        bucket = str(turn_number) if turn_number <= 5 else "6+"
        totals[bucket] += 1
        hits[bucket] += int(r.correct)
    out = []
    for bucket in TURN_BUCKETS:
        n = totals[bucket]
        out.append({
            "turn": bucket,
            "acc": hits[bucket] / n if n else None,
            "count": n,
        })
    return out


# ---------------------------------------------------------------------------
# Generation overlap metrics
# ---------------------------------------------------------------------------

def unigram_f1(hypothesis, reference):
    hyp = metric_tokens(hypothesis)
    ref = metric_tokens(reference)
    if not hyp or not ref:
        return 0.0
    hc, rc = Counter(hyp), Counter(ref)
    overlap = sum(min(hc[w], rc[w]) for w in hc)
    if overlap == 0:
        return 0.0
    precision = overlap / len(hyp)
    recall = overlap / len(ref)
    return 2 * precision * recall / (precision + recall)


def _ngrams(tokens, n):
    return [tuple(tokens[i:i + n]) for i in range(len(tokens) - n + 1)]


def bleu(hypotheses, references, n=1):
    """Corpus-level BLEU-n with clipped precision and brevity penalty.

    BLEU-2 is the geometric mean of 1- and 2-gram precisions. The brevity
    penalty exp(1 - |ref|/|hyp|) applies only when the hypothesis corpus is
    shorter than the reference corpus.
    """
    if n not in (1, 2):
        raise MetricError("bleu supports n in {1, 2}")
    if len(hypotheses) != len(references):
        raise MetricError("hypothesis/reference count mismatch")
    if not hypotheses:
        raise MetricError("bleu undefined on an empty corpus")
    hyp_len = ref_len = 0
    matches = [0] * n
    totals = [0] * n
    for hyp_text, ref_text in zip(hypotheses, references):
        hyp = metric_tokens(hyp_text)
        ref = metric_tokens(ref_text)
        hyp_len += len(hyp)
        ref_len += len(ref)
        for k in range(1, n + 1):
            hgrams = Counter(_ngrams(hyp, k))
            rgrams = Counter(_ngrams(ref, k))
            matches[k - 1] += sum(min(c, rgrams[g]) for g, c in hgrams.items())
            totals[k - 1] += sum(hgrams.values())
    precisions = [m / t if t else 0.0 for m, t in zip(matches, totals)]
    if any(p == 0.0 for p in precisions):
        return 0.0
    log_mean = sum(math.log(p) for p in precisions) / n
    bp = 1.0 if hyp_len >= ref_len else math.exp(1.0 - ref_len / max(hyp_len, 1))
    return bp * math.exp(log_mean)


def rouge(hypothesis, reference, n=1):
    """n-gram overlap F1 between one hypothesis and one reference."""
    if n not in (1, 2):
        raise MetricError("rouge supports n in {1, 2}")
    hgrams = Counter(_ngrams(metric_tokens(hypothesis), n))
    rgrams = Counter(_ngrams(metric_tokens(reference), n))
    if not hgrams or not rgrams:
        return 0.0
    overlap = sum(min(c, rgrams[g]) for g, c in hgrams.items())
    if overlap == 0:
        return 0.0
    precision = overlap / sum(hgrams.values())
    recall = overlap / sum(rgrams.values())
    return 2 * precision * recall / (precision + recall)


def corpus_rouge(hypotheses, references, n=1):
    if not hypotheses:
        raise MetricError("rouge undefined on an empty corpus")
    return sum(rouge(h, r, n) for h, r in zip(hypotheses, references)) / len(hypotheses)


# ---------------------------------------------------------------------------
# Report assembly
# ---------------------------------------------------------------------------

def compute_report(records, samples):
    acc = selection_accuracy(records)
    adh, div, counts = adhesion_diversity(records, samples)
    n_adh, n_chg = counts["n_adhesive"], counts["n_changing"]

    # decomposition identity in integer arithmetic: the grouped corrects must
    # reconstruct the non-first-turn accuracy exactly
    non_first_correct = counts["correct_adhesive"] + counts["correct_changing"]
    by_key = {(s.episode_id, s.turn_index): s for s in samples}
    check = sum(
        1 for r in records
        if by_key[(r.episode_id, r.turn_index)].prev_gold is not None and r.correct
    )
    if non_first_correct != check:
        raise MetricError("adhesion/diversity decomposition failed")

    gen_records = [r for r in records if r.generated_response is not None]
    uf1 = bleu1 = bleu2 = rouge1 = rouge2 = None
    if gen_records:
        hyps = [r.generated_response for r in gen_records]
        refs = [r.gold_response for r in gen_records]
        uf1 = sum(unigram_f1(h, r) for h, r in zip(hyps, refs)) / len(hyps)
        bleu1 = bleu(hyps, refs, 1)
        bleu2 = bleu(hyps, refs, 2)
        rouge1 = corpus_rouge(hyps, refs, 1)
        rouge2 = corpus_rouge(hyps, refs, 2)
    return MetricsReport(
        acc=acc,
        adh=adh,
        div=div,
        n_adhesive=n_adh,
        n_changing=n_chg,
        n_first_turn=counts["n_first_turn"],
        per_turn=per_turn_accuracy(records),
        uf1=uf1,
        bleu1=bleu1,
        bleu2=bleu2,
        rouge1=rouge1,
        rouge2=rouge2,
    )


def load_prediction_file(path):
    preds = []
    with open(path, encoding="utf-8") as f:
        for ln, line in enumerate(f):
            line = line.strip()
            if not line:
                continue
            try:
                preds.append(json.loads(line))
            except json.JSONDecodeError as e:
                raise MetricError(f"{path}:{ln + 1}: bad prediction line: {e}")
    return preds


def join_predictions(preds, samples):
    """Attach gold labels and texts from samples to raw prediction dicts."""
    by_key = {(s.episode_id, s.turn_index): s for s in samples}
    records = []
    orphans = []
    for p in preds:
        key = (str(p["episode_id"]), int(p["turn_index"]))
        s = by_key.get(key)
        if s is None:
            orphans.append(key)
            continue
        records.append(
            PredictionRecord(
                episode_id=key[0],
                turn_index=key[1],
                predicted_index=int(p["predicted_index"]),
                gold_index=s.gold_index,
                candidates=s.candidates,
                generated_response=p.get("generated_response"),
                gold_response=s.gold_response,
            )
        )
    if orphans:
        raise MetricError(f"predictions without matching samples: {orphans[:10]}")
    return records


def evaluate_run(prediction_path, corpus, out_path=None, split=None, window_l=1):
    """Join a prediction file against a corpus and emit a metrics report.

    ``corpus`` is a canonical corpus path or a list of episodes. The report
    is written as deterministic JSON when ``out_path`` is given.
    """
    episodes = corpus if isinstance(corpus, list) else read_episodes(corpus, split=split)
    samples = [s for e in episodes for s in build_samples(e, window_l)]
    preds = load_prediction_file(prediction_path)
    records = join_predictions(preds, samples)
    report = compute_report(records, samples)
    if out_path is not None:
        write_report(report, out_path)
    return report


def write_report(report, out_path):
    with open(out_path, "w", encoding="utf-8") as f:
        json.dump(report.to_dict(), f, indent=1, sort_keys=True)
        f.write("\n")
