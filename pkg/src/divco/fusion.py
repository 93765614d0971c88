"""Gated fusion of co-dependent and original representations per decode step.

Four additive-attention mechanisms read (Cx, Hx, Cv, Hv) with the
decoder state as query; two gated units blend each co-dependent summary
with its original-stream counterpart; the two results combine through a
scaled outer product flattened into a feed-forward net, yielding the
per-step context vector g_t.

The reduced variant (gam disabled) attends over Hx and Hv only and maps
their concatenation through its own feed-forward net — co-attention
outputs are never consumed on that path.
"""

from .numerics import Tape, Node

ATTN_SUFFIXES = ("Wq", "Wm", "v")


def attend(tape: Tape, store, prefix: str, query: Node, memory: Node,
           mem_proj: Node = None) -> Node:
    """Additive attention: softmax_j v . tanh(q Wq + mem_j Wm), blend memory.

    mem_proj (memory @ Wm) can be precomputed once per instance and
    shared across decode steps.
    """
    q_proj = tape.matmul(query, tape.param(store, f"{prefix}.Wq"))
    if mem_proj is None:
        mem_proj = project_memory(tape, store, prefix, memory)
    return tape.attend(q_proj, mem_proj, memory, tape.param(store, f"{prefix}.v"))


def project_memory(tape: Tape, store, prefix: str, memory: Node) -> Node:
    return tape.matmul(memory, tape.param(store, f"{prefix}.Wm"))


def gate(tape: Tape, store, prefix: str, c_hat: Node, h_hat: Node) -> Node:
    return tape.gate(c_hat, h_hat,
                     tape.param(store, f"{prefix}.Uc"),
                     tape.param(store, f"{prefix}.Uh"),
                     tape.param(store, f"{prefix}.b"))


def ffn(tape: Tape, store, prefix: str, x: Node) -> Node:
    h = tape.tanh(tape.add_rowvec(
        tape.matmul(x, tape.param(store, f"{prefix}.W1")),
        tape.param(store, f"{prefix}.b1")))
    return tape.add_rowvec(
        tape.matmul(h, tape.param(store, f"{prefix}.W2")),
        tape.param(store, f"{prefix}.b2"))


def prepare_memories(tape: Tape, store, gam_enabled: bool,
                     Hv: Node, Hx: Node, Cx: Node = None, Cv: Node = None) -> dict:
    """Per-instance attention memories with their Wm projections."""
    if gam_enabled:
        return {
            "cx": (Cx, project_memory(tape, store, "gam.attn_cx", Cx)),
            "hx": (Hx, project_memory(tape, store, "gam.attn_hx", Hx)),
            "cv": (Cv, project_memory(tape, store, "gam.attn_cv", Cv)),
            "hv": (Hv, project_memory(tape, store, "gam.attn_hv", Hv)),
        }
    return {
        "hx": (Hx, project_memory(tape, store, "nogam.attn_hx", Hx)),
        "hv": (Hv, project_memory(tape, store, "nogam.attn_hv", Hv)),
    }


def context(tape: Tape, store, mems: dict, s_prev: Node, d: int) -> Node:
    """g_t from the full gated path: gate(attended C, attended H) per
    stream, then FFN(flatten(r_x^T (alpha * r_v)))."""
    c_hat_x = attend(tape, store, "gam.attn_cx", s_prev, *mems["cx"])
    h_hat_x = attend(tape, store, "gam.attn_hx", s_prev, *mems["hx"])
    c_hat_v = attend(tape, store, "gam.attn_cv", s_prev, *mems["cv"])
    h_hat_v = attend(tape, store, "gam.attn_hv", s_prev, *mems["hv"])
    r_x = gate(tape, store, "gam.gate_x", c_hat_x, h_hat_x)
    r_v = gate(tape, store, "gam.gate_v", c_hat_v, h_hat_v)
    scaled = tape.mul(tape.param(store, "gam.alpha"), r_v)
    outer = tape.matmul(tape.transpose(r_x), scaled)   # d x d
    flat = tape.reshape(outer, 1, d * d)               # row-major
    return ffn(tape, store, "gam.ffn", flat)


def context_plain(tape: Tape, store, mems: dict, s_prev: Node) -> Node:
    """Reduced context: FFN of [attended Hx; attended Hv]."""
    h_hat_x = attend(tape, store, "nogam.attn_hx", s_prev, *mems["hx"])
    h_hat_v = attend(tape, store, "nogam.attn_hv", s_prev, *mems["hv"])
    return ffn(tape, store, "nogam.ffn", tape.concat_cols(h_hat_x, h_hat_v))
