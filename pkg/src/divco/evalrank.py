"""Candidate-set construction and rank-based retrieval metrics.

Each test instance is evaluated against 100 candidates: the ground
truth, 30 train comments most TF-IDF-similar to the video title
(plausible distractors), the 20 most frequent train comments (popular
distractors), and a seeded random fill of 49. Candidates are scored by
decoder likelihood, shuffled positions break score ties without
favoring the ground truth, and ranks aggregate into Recall@k / MR / MRR.
"""

import collections
import math
from dataclasses import dataclass, field

import numpy as np

from .numerics import seeded_rng


class EvalError(ValueError):
    pass


@dataclass
class TrainStats:
    """Distinct train comments with frequencies, surfaces, TF-IDF vectors."""
    comments: list            # distinct token tuples, first-seen order
    surface: dict             # tuple -> surface string
    freq: dict                # tuple -> count
    vectors: dict             # tuple -> (tfidf dict, norm)
    idf: dict                 # token -> ln(N/df)
    n_docs: int


def _tfidf_vector(tokens, idf) -> tuple:
    counts = collections.Counter(tokens)
    vec = {}
    for tok, tf in counts.items():
        w = idf.get(tok)
        if w is not None:           # df = 0 tokens carry no signal
            vec[tok] = tf * w
    norm = math.sqrt(sum(v * v for v in vec.values()))
    return vec, norm


def build_train_stats(instances, vocab) -> TrainStats:
    if not instances:
        raise EvalError("empty training corpus")
    n_docs = len(instances)
    df = collections.Counter()
    freq = collections.Counter()
    surface = {}
    comments = []
    for inst in instances:
        key = tuple(inst.target)
        freq[key] += 1
        if key not in surface:
            surface[key] = vocab.decode(inst.target)
            comments.append(key)
        for tok in set(inst.target):
            df[tok] += 1
    idf = {tok: math.log(n_docs / c) for tok, c in df.items()}
    vectors = {key: _tfidf_vector(key, idf) for key in comments}
    return TrainStats(comments=comments, surface=surface, freq=dict(freq),
                      vectors=vectors, idf=idf, n_docs=n_docs)


def tfidf_similarity(comment_tokens, title_tokens, stats: TrainStats) -> float:
    """Cosine between TF-IDF vectors; 0 when either vector vanishes."""
    key = tuple(comment_tokens)
    if key in stats.vectors:
        cvec, cnorm = stats.vectors[key]
    else:
        cvec, cnorm = _tfidf_vector(comment_tokens, stats.idf)
    tvec, tnorm = _tfidf_vector(title_tokens, stats.idf)
    if cnorm == 0.0 or tnorm == 0.0:
        return 0.0
    dot = sum(w * tvec[tok] for tok, w in cvec.items() if tok in tvec)
    return dot / (cnorm * tnorm)


GROUND_TRUTH, PLAUSIBLE, POPULAR, RANDOM = "ground-truth", "plausible", "popular", "random"
COMPOSITION = {GROUND_TRUTH: 1, PLAUSIBLE: 30, POPULAR: 20, RANDOM: 49}


def build_candidates(inst, stats: TrainStats, seed: int) -> list:
    """100 labeled candidates for one instance: [(token list, label), ...].

    Plausible = top title-similarity, popular = top frequency (both
    excluding anything already selected; ties broken by surface string),
    random = seeded uniform fill from the remaining distinct comments.
    """
    gt = tuple(inst.target)
    pool = [key for key in stats.comments if key != gt]
    if len(pool) < 99:
        raise EvalError(
            f"corpus too small: need 99 distinct non-target comments, "
            f"have {len(pool)}")

    chosen = [(list(gt), GROUND_TRUTH)]
    taken = {gt}

    sims = sorted(pool,
                  key=lambda k: (-tfidf_similarity(k, inst.title, stats),
                                 stats.surface[k]))
    for key in sims[:30]:
        chosen.append((list(key), PLAUSIBLE))
        taken.add(key)

    by_freq = sorted((k for k in pool if k not in taken),
                     key=lambda k: (-stats.freq[k], stats.surface[k]))
    for key in by_freq[:20]:
        chosen.append((list(key), POPULAR))
        taken.add(key)

    rest = [k for k in pool if k not in taken]
    rng = seeded_rng("candidates", seed, inst.id)
    picks = rng.choice(len(rest), size=49, replace=False)
    for i in picks:
        chosen.append((list(rest[int(i)]), RANDOM))
    return chosen


@dataclass
class RankReport:
    recall_at: dict
    mr: float
    mrr: float
    ranks: list = field(default_factory=list)

    def row(self) -> list:
        return [self.recall_at[1], self.recall_at[5], self.recall_at[10],
                self.mrr, self.mr]


def rank_metrics(ranks) -> RankReport:
    """Aggregate 1-based ground-truth ranks into the report metrics."""
    ranks = list(ranks)
    if not ranks:
        raise EvalError("no ranks to aggregate")
    n = len(ranks)
    recall = {k: 100.0 * sum(1 for r in ranks if r <= k) / n for k in (1, 5, 10)}
    return RankReport(recall_at=recall,
                      mr=sum(ranks) / n,
                      mrr=100.0 * sum(1.0 / r for r in ranks) / n,
                      ranks=ranks)


def rank_of_ground_truth(scores, labels, rng) -> int:
    """1-based rank after a tie-neutralizing shuffle; ties by position."""
    order = rng.permutation(len(scores))
    shuffled = [(scores[i], labels[i]) for i in order]
    ranked = sorted(range(len(shuffled)),
                    key=lambda i: (-shuffled[i][0], i))
    for pos, i in enumerate(ranked, start=1):
        if shuffled[i][1] == GROUND_TRUTH:
            return pos
    raise EvalError("ground truth missing from candidate set")


def evaluate(model, test_instances, stats: TrainStats, seed: int) -> RankReport:
    """Score candidate sets for every test instance and aggregate ranks."""
    ranks = []
    for inst in test_instances:
        cands = build_candidates(inst, stats, seed)
        scores = model.score_candidates(inst, [tokens for tokens, _ in cands])
        labels = [label for _, label in cands]
        rng = seeded_rng("tie-shuffle", seed, inst.id)
        ranks.append(rank_of_ground_truth(scores, labels, rng))
    return rank_metrics(ranks)
