"""GRU encoders: frame features -> Hv (n x d), token ids -> Hx (m x d).

Frames enter as precomputed feature vectors and pass through a learned
d_f -> d input projection before the recurrent cell. Text tokens share
the embedding table with the decoder. Both encoders start from a zero
hidden state and are unidirectional single-layer GRUs.
"""

import numpy as np

from .numerics import Tape, Node

GRU_SUFFIXES = ("Wr", "br", "Wz", "bz", "Wh", "bh")


def gru_params(tape: Tape, store, prefix: str):
    return tuple(tape.param(store, f"{prefix}.{s}") for s in GRU_SUFFIXES)


def run_gru(tape: Tape, store, prefix: str, inputs, d: int) -> Node:
    """Fold a GRU over a list of 1xdin input nodes; stack hidden states."""
    Wr, br, Wz, bz, Wh, bh = gru_params(tape, store, prefix)
    h = tape.const(np.zeros((1, d)))
    states = []
    for x in inputs:
        h = tape.gru(h, x, Wr, Wz, Wh, br, bz, bh)
        states.append(h)
    return tape.stack_rows(states)


def embed(tape: Tape, store, tokens) -> list:
    """Embedding rows for a token-id sequence, as 1xd nodes."""
    table = tape.param(store, "emb")
    return [tape.row(table, int(t)) for t in tokens]


def encode_video(tape: Tape, store, frames: np.ndarray, d: int,
                 drop_mask=None) -> Node:
    """Hv: row i is the hidden state after consuming frames[0..i]."""
    proj = tape.matmul(tape.const(frames), tape.param(store, "enc_v.proj"))
    inputs = [tape.row(proj, i) for i in range(frames.shape[0])]
    Hv = run_gru(tape, store, "enc_v", inputs, d)
    if drop_mask is not None:
        Hv = tape.mul_array(Hv, drop_mask)
    return Hv


def encode_text(tape: Tape, store, tokens, d: int,
                emb_drop_masks=None, drop_mask=None) -> Node:
    """Hx over the concatenated surrounding comments (or any token seq)."""
    inputs = embed(tape, store, tokens)
    if emb_drop_masks is not None:
        inputs = [tape.mul_array(x, m) for x, m in zip(inputs, emb_drop_masks)]
    Hx = run_gru(tape, store, "enc_x", inputs, d)
    if drop_mask is not None:
        Hx = tape.mul_array(Hx, drop_mask)
    return Hx
