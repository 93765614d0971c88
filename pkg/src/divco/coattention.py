"""Metric-scored bidirectional co-attention with multi-perspective pooling.

Each perspective k owns a d x d matrix L_k inducing the similarity

    S_k = (Hv L_k)(Hx L_k)^T = Hv (L_k L_k^T) Hx^T,

a bilinear score under the positive-semidefinite metric L_k L_k^T.
Row-softmaxing S_k gives vision-over-text attention (and its transpose
the reverse), producing co-dependent representations that are averaged
over perspectives.
"""

from .numerics import Tape, Node


def similarity(tape: Tape, Hv: Node, Hx: Node, L: Node) -> Node:
    """S = (Hv L)(Hx L)^T, an n x m cross-modal score matrix."""
    Pv = tape.matmul(Hv, L)
    Px = tape.matmul(Hx, L)
    return tape.matmul(Pv, tape.transpose(Px))


def co_attend(tape: Tape, Hv: Node, Hx: Node, L: Node):
    """One perspective: returns (Cx n x d, Cv m x d, S n x m)."""
    S = similarity(tape, Hv, Hx, L)
    Ax = tape.softmax_rows(S)
    Av = tape.softmax_rows(tape.transpose(S))
    Cx = tape.matmul(Ax, Hx)
    Cv = tape.matmul(Av, Hv)
    return Cx, Cv, S


def dca_forward(tape: Tape, Hv: Node, Hx: Node, L_nodes):
    """Mean-pool co-dependent representations over all perspectives.

    Returns (Cx, Cv, S_list); with a single perspective the outputs are
    exactly that perspective's (no spurious scaling).
    """
    K = len(L_nodes)
    if K < 1:
        raise ValueError("need at least one perspective")
    S_list = []
    Cx_sum = Cv_sum = None
    for L in L_nodes:
        Cx_k, Cv_k, S_k = co_attend(tape, Hv, Hx, L)
        S_list.append(S_k)
        if Cx_sum is None:
            Cx_sum, Cv_sum = Cx_k, Cv_k
        else:
            Cx_sum = tape.add(Cx_sum, Cx_k)
            Cv_sum = tape.add(Cv_sum, Cv_k)
    if K > 1:
        Cx_sum = tape.affine(Cx_sum, 1.0 / K)
        Cv_sum = tape.affine(Cv_sum, 1.0 / K)
    return Cx_sum, Cv_sum, S_list
