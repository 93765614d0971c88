"""GRU comment decoder: teacher-forced loss, likelihood scoring, generation.

Each step recomputes the fused context g_t from the previous state,
feeds [e(y_{t-1}); g_t] to the recurrent cell, and projects the new
state to vocabulary logits. Training prepends BOS to the target and
appends EOS, so a length-l comment contributes l+1 prediction steps.
"""

import numpy as np

from .numerics import Tape, Node
from .corpus import BOS, EOS
from . import fusion

GRU_SUFFIXES = ("Wr", "br", "Wz", "bz", "Wh", "bh")


def make_context(tape: Tape, store, mems: dict, s_prev: Node, d: int,
                 gam_enabled: bool) -> Node:
    if gam_enabled:
        return fusion.context(tape, store, mems, s_prev, d)
    return fusion.context_plain(tape, store, mems, s_prev)


def decode_step(tape: Tape, store, s_prev: Node, y_prev: int, g: Node,
                emb_drop_mask=None):
    """One step: returns (logits 1xV, new state 1xd)."""
    e = tape.row(tape.param(store, "emb"), y_prev)
    if emb_drop_mask is not None:
        e = tape.mul_array(e, emb_drop_mask)
    inp = tape.concat_cols(e, g)
    Wr, br, Wz, bz, Wh, bh = (tape.param(store, f"dec.{s}") for s in GRU_SUFFIXES)
    s = tape.gru(s_prev, inp, Wr, Wz, Wh, br, bz, bh)
    logits = tape.matmul(s, tape.param(store, "dec.out"))
    return logits, s


def _steps(tape, store, d, mems, gam_enabled, target, emb_drop_masks=None):
    """Teacher-forced iterator over (logits, gold_token) pairs."""
    s = tape.const(np.zeros((1, d)))
    inputs = [BOS, *target]
    golds = [*target, EOS]
    for t, (y_prev, y_t) in enumerate(zip(inputs, golds)):
        g = make_context(tape, store, mems, s, d, gam_enabled)
        mask = None if emb_drop_masks is None else emb_drop_masks[t]
        logits, s = decode_step(tape, store, s, y_prev, g, mask)
        yield logits, y_t


def nll_sum(tape: Tape, store, d: int, mems: dict, gam_enabled: bool,
            target, emb_drop_masks=None):
    """Summed token NLL over the target (+EOS); returns (node, step count)."""
    if len(target) == 0:
        raise ValueError("cannot compute a loss for an empty target")
    total = None
    n = 0
    for logits, y_t in _steps(tape, store, d, mems, gam_enabled, target,
                              emb_drop_masks):
        loss_t = tape.nll_logits(logits, y_t)
        total = loss_t if total is None else tape.add(total, loss_t)
        n += 1
    return total, n


def score(tape: Tape, store, d: int, mems: dict, gam_enabled: bool,
          candidate, mode: str = "mean") -> float:
    """Log-likelihood of a candidate comment; mean per token by default."""
    total, n = nll_sum(tape, store, d, mems, gam_enabled, candidate)
    ll = -total.value[0, 0]
    return ll / n if mode == "mean" else ll


def token_hits(tape: Tape, store, d: int, mems: dict, gam_enabled: bool,
               target):
    """(correct argmax predictions, total steps) under teacher forcing."""
    hits = total = 0
    for logits, y_t in _steps(tape, store, d, mems, gam_enabled, target):
        hits += int(np.argmax(logits.value[0]) == y_t)
        total += 1
    return hits, total


def generate(tape: Tape, store, d: int, mems: dict, gam_enabled: bool,
             max_len: int, rng=None) -> list:
    """Greedy decode from BOS (or ancestral sampling when rng given)."""
    s = tape.const(np.zeros((1, d)))
    y = BOS
    out = []
    for _ in range(max_len):
        g = make_context(tape, store, mems, s, d, gam_enabled)
        logits, s = decode_step(tape, store, s, y, g)
        row = logits.value[0]
        if rng is None:
            y = int(np.argmax(row))
        else:
            p = np.exp(row - row.max())
            p /= p.sum()
            y = int(rng.choice(len(row), p=p))
        if y == EOS:
            break
        out.append(y)
    return out
