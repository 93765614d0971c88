"""Data model, JSONL ingestion, vocabulary, and synthetic corpus generation.

An instance pairs a short sequence of frame feature vectors with the
surrounding comments (concatenated into one token sequence), the video
title, and the ground-truth comment to produce. The synthetic generator
makes desk-scale corpora with planted cross-modal structure: the
target comment can only be fully predicted by reading both the frames
and the context comments.
"""

import collections
import json
import os
from dataclasses import dataclass, field

import numpy as np

from .numerics import seeded_rng

PAD, BOS, EOS, UNK = 0, 1, 2, 3
RESERVED = ["<pad>", "<bos>", "<eos>", "<unk>"]


class CorpusError(ValueError):
    pass


@dataclass
class Instance:
    id: str
    video_id: str
    frames: np.ndarray          # n x d_f float64
    context: list               # token ids, surrounding comments joined
    title: list
    target: list

    def check(self, vocab_size):
        if self.frames.ndim != 2 or self.frames.shape[0] < 1:
            raise CorpusError(f"{self.id}: frames must be a nonempty matrix")
        for name, seq in (("context", self.context), ("title", self.title),
                          ("target", self.target)):
            if len(seq) < 1:
                raise CorpusError(f"{self.id}: empty {name}")
            if any(not 0 <= t < vocab_size for t in seq):
                raise CorpusError(f"{self.id}: {name} token id out of range")


class Vocabulary:
    """token <-> id bijection with ids 0..3 reserved for pad/bos/eos/unk."""

    def __init__(self, tokens=()):
        self._tokens = list(RESERVED)
        self._ids = {tok: i for i, tok in enumerate(self._tokens)}
        for tok in tokens:
            self.add(tok)

    def add(self, token) -> int:
        if token in self._ids:
            return self._ids[token]
        if token in RESERVED:
            return self._ids[token]
        idx = len(self._tokens)
        self._tokens.append(token)
        self._ids[token] = idx
        return idx

    def __len__(self):
        return len(self._tokens)

    def __contains__(self, token):
        return token in self._ids

    def id_of(self, token) -> int:
        return self._ids.get(token, UNK)

    def token_of(self, idx) -> str:
        return self._tokens[idx]

    def encode(self, text) -> list:
        return [self.id_of(tok) for tok in text.split()]

    def decode(self, ids, strip_specials=True) -> str:
        toks = []
        for i in ids:
            if strip_specials and i in (PAD, BOS, EOS):
                continue
            toks.append(self._tokens[i])
        return " ".join(toks)

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8") as f:
            for tok in self._tokens[len(RESERVED):]:
                f.write(tok + "\n")

    @classmethod
    def load(cls, path) -> "Vocabulary":
        vocab = cls()
        with open(path, encoding="utf-8") as f:
            for line in f:
                tok = line.rstrip("\n")
                if tok:
                    vocab.add(tok)
        return vocab


def load_jsonl(path, vocab) -> list:
    """Read instances from JSONL, tokenizing text fields against vocab.

    Malformed lines raise CorpusError with the 1-based line number;
    frames must agree on their feature dimension across the whole file.
    """
    out = []
    d_f = None
    with open(path, encoding="utf-8") as f:
        for lineno, line in enumerate(f, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise CorpusError(f"{path}:{lineno}: bad JSON: {exc}") from exc
            try:
                frames = np.asarray(obj["frames"], dtype=np.float64)
                inst = Instance(
                    id=str(obj["id"]),
                    video_id=str(obj["video_id"]),
                    frames=frames,
                    context=vocab.encode(obj["context"]),
                    title=vocab.encode(obj["title"]),
                    target=vocab.encode(obj["target"]),
                )
            except (KeyError, TypeError, ValueError) as exc:
                raise CorpusError(f"{path}:{lineno}: missing/invalid field: {exc}") from exc
            if frames.ndim != 2:
                raise CorpusError(f"{path}:{lineno}: frames must be a list of equal-length vectors")
            if d_f is None:
                d_f = frames.shape[1]
            elif frames.shape[1] != d_f:
                raise CorpusError(
                    f"{path}:{lineno}: frame dim {frames.shape[1]} != {d_f} seen earlier")
            inst.check(len(vocab))
            out.append(inst)
    return out


def save_jsonl(path, records) -> None:
    """Write raw (untokenized) instance dicts, one JSON object per line."""
    with open(path, "w", encoding="utf-8") as f:
        for rec in records:
            f.write(json.dumps(rec, sort_keys=True) + "\n")


def popularity_table(instances) -> collections.Counter:
    """Surface-string frequency of target comments (for popular candidates)."""
    counts = collections.Counter()
    for inst in instances:
        counts[tuple(inst.target)] += 1
    return counts


# ----------------------------------------------------------------------
# synthetic corpus

TOPICS = ["cat", "dog", "chef", "dancer", "robot", "singer", "pilot", "wizard",
          "miner", "clown", "farmer", "skater"]
EVENTS = ["jumps", "spins", "falls", "waves", "eats", "sleeps", "runs", "hides"]
FILLERS = ["wow", "nice", "cool", "haha", "omg", "lol", "yes", "whoa"]
SEP_TOKEN = "<sep>"   # marks boundaries between concatenated comments

N_FRAMES = 6          # frames per instance
N_CONTEXT = 3         # surrounding comments per instance


def build_synthetic_vocab(vocab_size) -> tuple:
    """Allocate topic/event/keyword/filler tokens within vocab_size.

    Keywords scale with the requested size so larger vocabularies give
    harder retrieval; the fixed words come first so small sizes stay valid.
    """
    if vocab_size <= 20:
        raise CorpusError(f"vocab_size must exceed 20, got {vocab_size}")
    base = ["the", "a", "so", "look", SEP_TOKEN] + TOPICS + EVENTS + FILLERS
    n_keywords = vocab_size - len(RESERVED) - len(base)
    if n_keywords < 4:
        raise CorpusError(
            f"vocab_size {vocab_size} leaves fewer than 4 keyword slots")
    keywords = [f"kw{idx:03d}" for idx in range(n_keywords)]
    vocab = Vocabulary(base + keywords)
    assert len(vocab) == vocab_size
    return vocab, keywords


def gen_synthetic(out_dir, seed, videos=50, per_video=20, d_f=16, vocab_size=120):
    """Generate train/dev/test JSONL plus a vocab file under out_dir.

    Structure planted per video: a latent topic colors the frames (a
    per-topic template plus noise) and the context comments. Each
    instance additionally gets an event — visible ONLY in the frames as
    a spike pattern on one frame index — and a keyword that appears ONLY
    in the context comments. The target is the deterministic sentence

        the <topic> <event> the <keyword>

    so recovering the event requires the video stream and recovering the
    keyword requires the comment stream. Zeroing either modality leaves
    part of the target unpredictable, which is what makes the corpus a
    usable probe for cross-modal models.
    """
    rng = seeded_rng("synthetic", seed)
    vocab, keywords = build_synthetic_vocab(vocab_size)

    topic_templates = {t: rng.normal(0.0, 1.0, size=d_f) for t in TOPICS}
    event_spikes = {e: rng.normal(0.0, 1.0, size=d_f) * 2.0 for e in EVENTS}

    records = []
    for v in range(videos):
        topic = TOPICS[int(rng.integers(0, len(TOPICS)))]
        video_id = f"vid{v:04d}"
        title = f"a {topic} look"
        for j in range(per_video):
            event = EVENTS[int(rng.integers(0, len(EVENTS)))]
            keyword = keywords[int(rng.integers(0, len(keywords)))]
            event_at = int(rng.integers(0, N_FRAMES))

            frames = np.stack([
                topic_templates[topic] + rng.normal(0.0, 0.3, size=d_f)
                for _ in range(N_FRAMES)
            ])
            frames[event_at] += event_spikes[event]

            context_parts = [f"so {topic} {keyword}"]
            for _ in range(N_CONTEXT - 1):
                filler = FILLERS[int(rng.integers(0, len(FILLERS)))]
                context_parts.append(f"{filler} a {topic}")
            order = rng.permutation(N_CONTEXT)
            context = f" {SEP_TOKEN} ".join(context_parts[i] for i in order)

            records.append({
                "id": f"{video_id}-{j:03d}",
                "video_id": video_id,
                "frames": [[round(float(x), 6) for x in row] for row in frames],
                "context": context,
                "title": title,
                "target": f"the {topic} {event} the {keyword}",
            })

    # split by video id: 80/10/10, no video crosses splits
    n_train = max(1, int(videos * 0.8))
    n_dev = max(1, int(videos * 0.1)) if videos >= 3 else 0
    split_of = {}
    for v in range(videos):
        if v < n_train:
            split_of[f"vid{v:04d}"] = "train"
        elif v < n_train + n_dev:
            split_of[f"vid{v:04d}"] = "dev"
        else:
            split_of[f"vid{v:04d}"] = "test"

    os.makedirs(out_dir, exist_ok=True)
    paths = {}
    for split in ("train", "dev", "test"):
        recs = [r for r in records if split_of[r["video_id"]] == split]
        path = os.path.join(out_dir, f"{split}.jsonl")
        save_jsonl(path, recs)
        paths[split] = path
    vocab_path = os.path.join(out_dir, "vocab.txt")
    vocab.save(vocab_path)
    paths["vocab"] = vocab_path
    return paths
