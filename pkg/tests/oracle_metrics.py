"""Brute-force reference metrics, written independently of cet2.metrics.

Everything here uses plain loops and dicts on purpose; these functions are
the oracle the package implementations are checked against.
"""

import math


def oracle_tokens(text):
    out = []
    word = ""
    for ch in text.lower():
        if ("a" <= ch <= "z") or ("0" <= ch <= "9") or ch in "_'":
            word += ch
        else:
            if word:
                out.append(word)
            word = ""
    if word:
        out.append(word)
    return out


def _count(items):
    d = {}
    for it in items:
        d[it] = d.get(it, 0) + 1
    return d


def oracle_unigram_f1(hyp_text, ref_text):
    hyp = oracle_tokens(hyp_text)
    ref = oracle_tokens(ref_text)
    if len(hyp) == 0 or len(ref) == 0:
        return 0.0
    hc = _count(hyp)
    rc = _count(ref)
    overlap = 0
    for w in hc:
        if w in rc:
            overlap += hc[w] if hc[w] < rc[w] else rc[w]
    if overlap == 0:
        return 0.0
    p = overlap / len(hyp)
    r = overlap / len(ref)
    return 2 * p * r / (p + r)


def _grams(tokens, n):
    out = []
    for i in range(len(tokens) - n + 1):
        out.append(tuple(tokens[i:i + n]))
    return out


def oracle_bleu(hyp_texts, ref_texts, n):
    hyp_total_len = 0
    ref_total_len = 0
    match = [0] * n
    total = [0] * n
    for hyp_text, ref_text in zip(hyp_texts, ref_texts):
        hyp = oracle_tokens(hyp_text)
        ref = oracle_tokens(ref_text)
        hyp_total_len += len(hyp)
        ref_total_len += len(ref)
        for k in range(1, n + 1):
            hg = _count(_grams(hyp, k))
            rg = _count(_grams(ref, k))
            for g in hg:
                if g in rg:
                    match[k - 1] += hg[g] if hg[g] < rg[g] else rg[g]
                total[k - 1] += 0  # placeholder, replaced below
            total[k - 1] += len(_grams(hyp, k))
    product = 1.0
    for k in range(n):
        if total[k] == 0 or match[k] == 0:
            return 0.0
        product *= match[k] / total[k]
    geo = product ** (1.0 / n)
    if hyp_total_len < ref_total_len:
        bp = math.exp(1.0 - ref_total_len / hyp_total_len)
    else:
        bp = 1.0
    return bp * geo


def oracle_rouge(hyp_text, ref_text, n):
    hg = _count(_grams(oracle_tokens(hyp_text), n))
    rg = _count(_grams(oracle_tokens(ref_text), n))
    if len(hg) == 0 or len(rg) == 0:
        return 0.0
    overlap = 0
    total_h = 0
    total_r = 0
    for g in hg:
        total_h += hg[g]
        if g in rg:
            overlap += hg[g] if hg[g] < rg[g] else rg[g]
    for g in rg:
        total_r += rg[g]
    if overlap == 0:
        return 0.0
    p = overlap / total_h
    r = overlap / total_r
    return 2 * p * r / (p + r)
