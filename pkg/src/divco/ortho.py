"""Orthonormality pressure on the perspective matrices {L_k}.

r_beta measures how far the family is from Frobenius-orthonormality
(Gram matrix of trace inner products = identity); r_beta_grad is its
closed-form gradient; ortho_update applies one explicit step

    L_i <- (1 + beta) L_i - beta * sum_k tr(L_i L_k^T) L_k

outside the differentiated graph, i.e. exactly L_i - grad_i. The
loss-term variant (adding r_beta to the training objective) is kept as
an exercisable mode; it is known to be fragile in training.
"""

import numpy as np

from .numerics import Tape


def gram(L_list) -> np.ndarray:
    """K x K matrix of trace inner products tr(L_i L_j^T) = <L_i, L_j>_F."""
    K = len(L_list)
    G = np.empty((K, K))
    for i in range(K):
        for j in range(i, K):
            G[i, j] = G[j, i] = float(np.sum(L_list[i] * L_list[j]))
    return G


def r_beta(L_list, beta: float) -> float:
    G = gram(L_list)
    D = G - np.eye(len(L_list))
    return float(beta / 4.0 * np.sum(D * D))


def r_beta_grad(L_list, beta: float, i: int) -> np.ndarray:
    G = gram(L_list)
    acc = np.zeros_like(L_list[i])
    for k, Lk in enumerate(L_list):
        acc += G[i, k] * Lk
    return beta * (acc - L_list[i])


def ortho_update(L_list, beta: float, mode: str = "simultaneous"):
    """Push {L_k} toward orthonormality, in place.

    simultaneous: all traces and right-hand matrices read from the
    pre-update values (one joint gradient step). sequential: each L_i
    updates against the current (partially updated) family.
    """
    if mode == "simultaneous":
        G = gram(L_list)
        old = [L.copy() for L in L_list]
        for i in range(len(L_list)):
            acc = np.zeros_like(old[i])
            for k, Lk in enumerate(old):
                acc += G[i, k] * Lk
            L_list[i][:] = (1.0 + beta) * old[i] - beta * acc
    elif mode == "sequential":
        for i in range(len(L_list)):
            acc = np.zeros_like(L_list[i])
            for Lk in L_list:
                acc += float(np.sum(L_list[i] * Lk)) * Lk
            L_list[i][:] = (1.0 + beta) * L_list[i] - beta * acc
    else:
        raise ValueError(f"unknown ortho mode {mode!r}")
    return L_list


def r_beta_node(tape: Tape, L_nodes, beta: float):
    """r_beta as a differentiable node (for the loss-term mode)."""
    K = len(L_nodes)
    total = None
    for i in range(K):
        for j in range(K):
            tr = tape.sum_all(tape.mul(L_nodes[i], L_nodes[j]))
            delta = tape.affine(tr, 1.0, -1.0) if i == j else tr
            sq = tape.mul(delta, delta)
            total = sq if total is None else tape.add(total, sq)
    return tape.affine(total, beta / 4.0)


def off_diag_mass(L_list) -> float:
    """Sum of |tr(L_i L_j^T)| over i != j — the redundancy proxy."""
    G = gram(L_list)
    return float(np.sum(np.abs(G - np.diag(np.diag(G)))))
