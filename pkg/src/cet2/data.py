"""Dialogue corpus model: episodes, selection samples, ingestion, synthesis.

The canonical on-disk format is a JSON array of episodes:

    [{"episode_id": ..., "topic": ..., "split": "train",
      "turns": [{"user": ..., "agent": ...,
                 "candidates": [{"id": ..., "text": ...}],
                 "gold_id": ...}, ...]}, ...]

``load_wow`` / ``load_holle`` convert the upstream release formats into this
schema; everything downstream consumes it.
"""

import json
import random
from dataclasses import dataclass, field
from typing import Optional

SPLITS = ("train", "valid", "test_seen", "test_unseen")

NO_PASSAGE_TOKEN = "no_passages_used"

USR_TAG = "[usr]"
AGT_TAG = "[agt]"


class CorpusError(ValueError):
    """Malformed corpus file or record."""


@dataclass(frozen=True)
class Utterance:
    speaker: str  # "user" or "agent"
    text: str

    def __post_init__(self):
        if self.speaker not in ("user", "agent"):
            raise CorpusError(f"unknown speaker {self.speaker!r}")
        if not self.text.strip():
            raise CorpusError("utterance text is empty")


@dataclass(frozen=True)
class KnowledgeCandidate:
    id: str
    text: str

    def __post_init__(self):
        if not self.text.strip():
            raise CorpusError(f"candidate {self.id!r} has empty text")


@dataclass
class DialogueTurn:
    user_utterance: Utterance
    agent_response: Utterance
    candidates: list = field(default_factory=list)
    gold_id: Optional[str] = None

    def __post_init__(self):
        ids = [c.id for c in self.candidates]
        if len(set(ids)) != len(ids):
            raise CorpusError("candidate ids are not unique within the pool")
        if self.gold_id is not None and self.gold_id not in ids:
            raise CorpusError(f"gold_id {self.gold_id!r} not in candidate pool")

    @property
    def gold(self) -> Optional[KnowledgeCandidate]:
        if self.gold_id is None:
            return None
        for c in self.candidates:
            if c.id == self.gold_id:
                return c
        return None


@dataclass
class DialogueEpisode:
    episode_id: str
    topic: str
    turns: list
    split: str = "train"

    def __post_init__(self):
        if not self.turns:
            raise CorpusError(f"episode {self.episode_id!r} has no turns")
        if self.split not in SPLITS:
            raise CorpusError(f"unknown split label {self.split!r}")


@dataclass
class SelectionSample:
    """One knowledge-selection decision point."""

    episode_id: str
    turn_index: int
    context: list  # list[Utterance], ends with the current user utterance
    candidates: list
    gold_index: Optional[int]
    prev_gold: Optional[KnowledgeCandidate]
    gold_response: str


def render_context(context):
    """Concatenate utterances into the tagged context string.

    ``[user:"a", agent:"b", user:"c"] -> "[usr]a[agt]b[usr]c"``
    """
    if not context:
        raise CorpusError("cannot render an empty context")
    parts = []
    for utt in context:
        tag = USR_TAG if utt.speaker == "user" else AGT_TAG
        parts.append(tag + utt.text)
    return "".join(parts)


def build_samples(episode, window_l=1):
    """Turn an episode into per-turn selection samples.

    The context is the last ``window_l`` user/agent exchanges plus the current
    user utterance. Turns without a candidate pool or without a gold label
    yield no sample (they are counted via the second return value of
    :func:`build_samples_counted`).
    """
    samples, _ = build_samples_counted(episode, window_l)
    return samples


def build_samples_counted(episode, window_l=1):
    if window_l < 1:
        raise ValueError("window_l must be >= 1")
    samples = []
    skipped = 0
    for t, turn in enumerate(episode.turns):
        if not turn.candidates or turn.gold_id is None:
            skipped += 1
            continue
        context = []
        for prev in episode.turns[max(0, t - window_l): t]:
            context.append(prev.user_utterance)
            context.append(prev.agent_response)
        context.append(turn.user_utterance)

        prev_gold = None
        if t > 0:
            prev_gold = episode.turns[t - 1].gold

        gold_index = next(
            i for i, c in enumerate(turn.candidates) if c.id == turn.gold_id
        )
        samples.append(
            SelectionSample(
                episode_id=episode.episode_id,
                turn_index=t,
                context=context,
                candidates=list(turn.candidates),
                gold_index=gold_index,
                prev_gold=prev_gold,
                gold_response=turn.agent_response.text,
            )
        )
    return samples, skipped


# ---------------------------------------------------------------------------
# Canonical JSON IO
# ---------------------------------------------------------------------------

def _episode_from_dict(rec, default_split=None, where=""):
    try:
        split = rec.get("split", default_split)
        turns = []
        for ti, tr in enumerate(rec["turns"]):
            candidates = [
                KnowledgeCandidate(id=str(c["id"]), text=c["text"])
                for c in tr.get("candidates", [])
            ]
            turns.append(
                DialogueTurn(
                    user_utterance=Utterance("user", tr["user"]),
                    agent_response=Utterance("agent", tr["agent"]),
                    candidates=candidates,
                    gold_id=tr.get("gold_id"),
                )
            )
        return DialogueEpisode(
            episode_id=str(rec["episode_id"]),
            topic=rec.get("topic", ""),
            turns=turns,
            split=split,
        )
    except (KeyError, TypeError, CorpusError) as e:
        ident = rec.get("episode_id", where) if isinstance(rec, dict) else where
        raise CorpusError(f"malformed episode {ident!r}: {e}") from e


def read_episodes(path, split=None):
    """Read a canonical corpus file. ``split`` filters when given."""
    with open(path, encoding="utf-8") as f:
        records = json.load(f)
    if not isinstance(records, list):
        raise CorpusError(f"{path}: expected a JSON array of episodes")
    episodes = [
        _episode_from_dict(rec, default_split="train", where=f"#{i}")
        for i, rec in enumerate(records)
    ]
    if split is not None:
        if split not in SPLITS:
            raise CorpusError(f"unknown split label {split!r}")
        episodes = [e for e in episodes if e.split == split]
    return episodes


def episode_to_dict(ep):
    return {
        "episode_id": ep.episode_id,
        "topic": ep.topic,
        "split": ep.split,
        "turns": [
            {
                "user": t.user_utterance.text,
                "agent": t.agent_response.text,
                "candidates": [{"id": c.id, "text": c.text} for c in t.candidates],
                "gold_id": t.gold_id,
            }
            for t in ep.turns
        ],
    }


def write_episodes(episodes, path):
    with open(path, "w", encoding="utf-8") as f:
        json.dump([episode_to_dict(e) for e in episodes], f, indent=1, sort_keys=True)
        f.write("\n")


# ---------------------------------------------------------------------------
# Upstream release formats
# ---------------------------------------------------------------------------

def load_corpus(path, format, split):
    """Load an upstream corpus release into episodes.

    ``format`` is "wow" or "holle"; "canonical" accepts the schema this
    package writes. The returned episodes carry ``split``.
    """
    if split not in SPLITS:
        raise CorpusError(f"unknown split label {split!r}")
    if format == "wow":
        return load_wow(path, split)
    if format == "holle":
        return load_holle(path, split)
    if format == "canonical":
        eps = read_episodes(path)
        for e in eps:
            e.split = split
        return eps
    raise CorpusError(f"unknown corpus format {format!r}")


def _wow_candidates(wizard_turn):
    candidates = []
    seen = set()
    for passage in wizard_turn.get("retrieved_passages", []):
        for title, sentences in passage.items():
            for si, sent in enumerate(sentences):
                if not sent.strip():
                    continue
                cid = f"{title}__{si}"
                if cid in seen:
                    continue
                seen.add(cid)
                candidates.append(KnowledgeCandidate(id=cid, text=sent))
    return candidates


def _wow_gold(wizard_turn, candidates):
    """Resolve the checked sentence to a candidate id, appending the
    no-passage sentinel when the wizard used none."""
    checked = wizard_turn.get("checked_sentence") or {}
    if not checked:
        return candidates, None
    key, sentence = next(iter(checked.items()))
    if key == NO_PASSAGE_TOKEN or sentence == NO_PASSAGE_TOKEN:
        sentinel = KnowledgeCandidate(id=NO_PASSAGE_TOKEN, text=NO_PASSAGE_TOKEN)
        return candidates + [sentinel], NO_PASSAGE_TOKEN
    for c in candidates:
        if c.text == sentence:
            return candidates, c.id
    # checked sentence missing from the retrieved pool: add it so the gold
    # index is always defined
    extra = KnowledgeCandidate(id=f"checked__{key}", text=sentence)
    return candidates + [extra], extra.id


def load_wow(path, split):
    """Parse a Wizard-of-Wikipedia release file.

    Episodes alternate apprentice/wizard; when the wizard opens the dialogue
    the chosen topic stands in for the missing apprentice utterance.
    """
    with open(path, encoding="utf-8") as f:
        data = json.load(f)
    episodes = []
    for di, dialog in enumerate(data):
        topic = dialog.get("chosen_topic", "")
        turns = []
        pending_user = None
        for mi, msg in enumerate(dialog.get("dialog", [])):
            speaker = msg.get("speaker", "")
            text = (msg.get("text") or "").strip()
            if not text:
                raise CorpusError(f"episode #{di} message #{mi}: empty text")
            if "Wizard" in speaker:
                user_text = pending_user if pending_user else topic
                if not user_text.strip():
                    user_text = "hello"
                candidates = _wow_candidates(msg)
                candidates, gold_id = _wow_gold(msg, candidates)
                turns.append(
                    DialogueTurn(
                        user_utterance=Utterance("user", user_text),
                        agent_response=Utterance("agent", text),
                        candidates=candidates,
                        gold_id=gold_id,
                    )
                )
                pending_user = None
            else:
                pending_user = text
        if turns:
            episodes.append(
                DialogueEpisode(
                    episode_id=f"wow-{split}-{di}",
                    topic=topic,
                    turns=turns,
                    split=split,
                )
            )
    return episodes


def load_holle(path, split):
    """Parse a Holl-E release file (movie chats with span-labeled knowledge).

    Expects records with "chat" (alternating utterances, user first) and
    per-wizard-turn candidate pools under "knowledge" / "spans".
    """
    with open(path, encoding="utf-8") as f:
        data = json.load(f)
    episodes = []
    for di, rec in enumerate(data):
        topic = rec.get("movie_name", rec.get("topic", ""))
        chat = rec.get("chat", [])
        all_candidates = rec.get("knowledge", [])
        spans = rec.get("spans", [])
        turns = []
        for ti in range(0, len(chat) - 1, 2):
            user_text = (chat[ti] or "").strip()
            agent_text = (chat[ti + 1] or "").strip()
            if not user_text or not agent_text:
                continue
            wiz_index = ti // 2
            if isinstance(all_candidates, list) and all_candidates and isinstance(all_candidates[0], list):
                pool_texts = all_candidates[wiz_index] if wiz_index < len(all_candidates) else []
            else:
                pool_texts = all_candidates
            candidates = [
                KnowledgeCandidate(id=f"k{ki}", text=ktext)
                for ki, ktext in enumerate(pool_texts)
                if ktext and ktext.strip()
            ]
            gold_id = None
            if wiz_index < len(spans) and spans[wiz_index]:
                span = spans[wiz_index]
                for c in candidates:
                    if c.text == span:
                        gold_id = c.id
                        break
                if gold_id is None and candidates:
                    extra = KnowledgeCandidate(id=f"span{wiz_index}", text=span)
                    candidates.append(extra)
                    gold_id = extra.id
            turns.append(
                DialogueTurn(
                    user_utterance=Utterance("user", user_text),
                    agent_response=Utterance("agent", agent_text),
                    candidates=candidates,
                    gold_id=gold_id,
                )
            )
        if turns:
            episodes.append(
                DialogueEpisode(
                    episode_id=f"holle-{split}-{rec.get('chat_id', di)}",
                    topic=topic,
                    turns=turns,
                    split=split,
                )
            )
    return episodes


# ---------------------------------------------------------------------------
# Synthetic corpus
# ---------------------------------------------------------------------------

@dataclass
class SynthConfig:
    n_episodes: int = 200
    turns_per_episode: int = 4
    m_candidates: int = 8
    vocab_size: int = 200
    p_adhere: float = 0.6
    seed: int = 0
    signature_len: int = 4  # tokens shared by a twin pair
    distinct_len: int = 2  # tokens unique to one candidate
    utterance_len: int = 12
    gold_token_ratio: float = 0.6  # share of utterance tokens drawn from gold
    distinct_token_prob: float = 0.15  # per-draw odds of a member-distinct token
    cue_tokens: int = 2  # stay/move discourse cue tokens per utterance
    twin_shift_prob: float = 0.7  # shifts land on the twin this often
    split_fractions: tuple = (0.8, 0.1, 0.1)  # train / valid / test_seen

    def validate(self):
        if min(self.n_episodes, self.turns_per_episode, self.m_candidates,
               self.vocab_size) < 1:
            raise ValueError("all synth counts must be >= 1")
        if not 0.0 <= self.p_adhere <= 1.0:
            raise ValueError("p_adhere must be in [0, 1]")
        if self.m_candidates < 2 and self.p_adhere < 1.0:
            raise ValueError("need m_candidates >= 2 to shift topics")
        if not 0.0 <= self.twin_shift_prob <= 1.0:
            raise ValueError("twin_shift_prob must be in [0, 1]")


STAY_CUES = ["more", "also", "continue", "again"]
MOVE_CUES = ["instead", "switch", "different", "other"]


def synth_corpus(config):
    """Generate a deterministic toy corpus whose selection signal needs both
    the context and the previous knowledge.

    Candidates form twin pairs sharing signature tokens and differing in a
    few distinct tokens. The user utterance samples gold-candidate tokens
    (which often, but not always, include a member-distinguishing token) plus
    a stay/move discourse cue; when the utterance is member-ambiguous, only
    the previous turn's knowledge resolves the twin. The gold sequence is a
    two-state chain: repeat with probability ``p_adhere``, else move to a
    different candidate (usually the twin, sometimes another pair).
    """
    config.validate()
    rng = random.Random(config.seed)
    n_content = max(1, int(config.vocab_size * 0.7))
    content_vocab = [f"w{i:03d}" for i in range(n_content)]
    noise_vocab = [f"n{i:03d}" for i in range(config.vocab_size - n_content)] or ["n000"]

    n_train = int(config.n_episodes * config.split_fractions[0])
    n_valid = int(config.n_episodes * config.split_fractions[1])

    episodes = []
    for ei in range(config.n_episodes):
        # twin pairs: signature tokens shared within a pair, distinct tokens
        # per member; an odd trailing candidate stands alone
        pool = []
        signatures = {}
        distincts = {}
        seen_texts = set()
        ci = 0
        while ci < config.m_candidates:
            signature = rng.sample(content_vocab, min(config.signature_len, n_content))
            members = 2 if ci + 1 < config.m_candidates else 1
            for _ in range(members):
                while True:
                    distinct = rng.sample(content_vocab, min(config.distinct_len,
                                                             n_content))
                    text = " ".join(signature + distinct)
                    if text not in seen_texts:
                        break
                seen_texts.add(text)
                pool.append(KnowledgeCandidate(id=f"c{ci}", text=text))
                signatures[ci] = list(signature)
                distincts[ci] = list(distinct)
                ci += 1

        def twin_of(idx):
            mate = idx + 1 if idx % 2 == 0 else idx - 1
            return mate if mate < config.m_candidates else None

        def user_text(gold_idx, cue):
            # gold draws lean heavily on the pair signature; member-distinct
            # tokens surface only occasionally, so many turns stay ambiguous
            # between twins until the previous knowledge breaks the tie
            n_gold = max(1, round(config.utterance_len * config.gold_token_ratio))
            toks = []
            for _ in range(n_gold):
                if distincts[gold_idx] and rng.random() < config.distinct_token_prob:
                    toks.append(rng.choice(distincts[gold_idx]))
                else:
                    toks.append(rng.choice(signatures[gold_idx]))
            n_cue = min(config.cue_tokens, config.utterance_len - n_gold)
            if cue is not None:
                toks += [rng.choice(cue) for _ in range(n_cue)]
            else:
                toks += [rng.choice(noise_vocab) for _ in range(n_cue)]
            toks += [rng.choice(noise_vocab)
                     for _ in range(config.utterance_len - len(toks))]
            rng.shuffle(toks)
            return " ".join(toks)

        def agent_text(gold_idx):
            gold_toks = pool[gold_idx].text.split()
            n_gold = max(1, round(config.utterance_len * config.gold_token_ratio))
            toks = [rng.choice(gold_toks) for _ in range(n_gold)]
            toks += [rng.choice(noise_vocab)
                     for _ in range(config.utterance_len - n_gold)]
            rng.shuffle(toks)
            return " ".join(toks)

        gold_idx = rng.randrange(config.m_candidates)
        turns = []
        prev_gold = None
        for _ in range(config.turns_per_episode):
            if prev_gold is None:
                cue = None
            else:
                cue = STAY_CUES if gold_idx == prev_gold else MOVE_CUES
            turns.append(
                DialogueTurn(
                    user_utterance=Utterance("user", user_text(gold_idx, cue)),
                    agent_response=Utterance("agent", agent_text(gold_idx)),
                    candidates=list(pool),
                    gold_id=pool[gold_idx].id,
                )
            )
            prev_gold = gold_idx
            if rng.random() >= config.p_adhere and config.m_candidates > 1:
                mate = twin_of(gold_idx)
                if mate is not None and rng.random() < config.twin_shift_prob:
                    gold_idx = mate
                else:
                    others = [i for i in range(config.m_candidates)
                              if i not in (gold_idx, mate)]
                    if others:
                        gold_idx = rng.choice(others)
                    elif mate is not None:
                        gold_idx = mate
        if ei < n_train:
            split = "train"
        elif ei < n_train + n_valid:
            split = "valid"
        else:
            split = "test_seen"
        episodes.append(
            DialogueEpisode(
                episode_id=f"synth-{ei:04d}",
                topic=f"topic-{ei:04d}",
                turns=turns,
                split=split,
            )
        )
    return episodes
