"""Whitespace + punctuation tokenizer with a fixed special-token inventory.

The same vocabulary is shared by the selector encoder and the response
generator. Vocabulary files are plain text, one token per line, in id order.
"""

import re

PAD = "[pad]"
UNK = "[unk]"
CLS = "[cls]"
SEP = "[sep]"
EOS = "[eos]"
USR = "[usr]"
AGT = "[agt]"

SPECIAL_TOKENS = [PAD, UNK, CLS, SEP, EOS, USR, AGT]

# Role tags survive as single tokens; everything else splits into
# word-ish runs or single punctuation marks.
_TOKEN_RE = re.compile(r"\[usr\]|\[agt\]|[a-z0-9_']+|[^\sa-z0-9_']")


def tokenize(text):
    """Lowercase and split into word / punctuation tokens."""
    return _TOKEN_RE.findall(text.lower())


class Vocab:
    """Token <-> id mapping. Ids are stable: position in the token list."""

    def __init__(self, tokens):
        self.tokens = list(tokens)
        self.index = {tok: i for i, tok in enumerate(self.tokens)}
        if len(self.index) != len(self.tokens):
            raise ValueError("duplicate tokens in vocabulary")
        for tok in SPECIAL_TOKENS:
            if tok not in self.index:
                raise ValueError(f"vocabulary missing special token {tok!r}")
        self.pad_id = self.index[PAD]
        self.unk_id = self.index[UNK]
        self.cls_id = self.index[CLS]
        self.sep_id = self.index[SEP]
        self.eos_id = self.index[EOS]

    def __len__(self):
        return len(self.tokens)

    def encode(self, text):
        return [self.index.get(tok, self.unk_id) for tok in tokenize(text)]

    def decode(self, ids, skip_special=True):
        toks = []
        for i in ids:
            tok = self.tokens[i]
            if skip_special and tok in (PAD, CLS, SEP, EOS):
                continue
            toks.append(tok)
        return " ".join(toks)

    @classmethod
    def build(cls, texts, max_size=None):
        """Build a vocabulary from an iterable of raw strings.

        Tokens are ordered by descending frequency (ties alphabetical) after
        the special tokens, so construction is deterministic.
        """
        counts = {}
        for text in texts:
            for tok in tokenize(text):
                counts[tok] = counts.get(tok, 0) + 1
        for tok in SPECIAL_TOKENS:
            counts.pop(tok, None)
        ordered = sorted(counts, key=lambda t: (-counts[t], t))
        if max_size is not None:
            ordered = ordered[: max(0, max_size - len(SPECIAL_TOKENS))]
        return cls(SPECIAL_TOKENS + ordered)

    def save(self, path):
        with open(path, "w", encoding="utf-8") as f:
            for tok in self.tokens:
                f.write(tok + "\n")

    @classmethod
    def load(cls, path):
        with open(path, encoding="utf-8") as f:
            tokens = [line.rstrip("\n") for line in f if line.rstrip("\n")]
        return cls(tokens)
