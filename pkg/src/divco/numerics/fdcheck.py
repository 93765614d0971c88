"""Finite-difference gradient checking against the tape backward pass."""

import numpy as np

from .tape import Tape


class OracleInvalidError(RuntimeError):
    """The loss function is not deterministic, so the check is meaningless."""


def central_difference(f, x, epsilon):
    """Numerical d f / d x for scalar-valued f over a flat array view."""
    g = np.zeros_like(x)
    flat = x.ravel()
    gflat = g.ravel()
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + epsilon
        hi = f()
        flat[i] = orig - epsilon
        lo = f()
        flat[i] = orig
        gflat[i] = (hi - lo) / (2.0 * epsilon)
    return g


def fd_check(store, name, loss_fn, epsilon=1e-5):
    """Max relative error between analytic and numeric grad for one param.

    loss_fn takes a Tape and returns the 1x1 loss node. The analytic
    gradient comes from a recording tape; the numeric one from central
    differences with non-recording re-evaluations. Re-evaluating the
    unperturbed loss twice guards against nondeterministic loss_fn.
    """
    base1 = float(loss_fn(Tape(recording=False)).value[0, 0])
    base2 = float(loss_fn(Tape(recording=False)).value[0, 0])
    if base1 != base2:
        raise OracleInvalidError(
            f"loss_fn is nondeterministic: {base1!r} != {base2!r}")

    store.zero_grads()
    tape = Tape()
    loss = loss_fn(tape)
    tape.backward(loss)
    analytic = store.grads[name].copy()

    x = store.params[name]

    def evaluate():
        return float(loss_fn(Tape(recording=False)).value[0, 0])

    numeric = central_difference(evaluate, x, epsilon)
    rel = np.abs(analytic - numeric) / (np.abs(numeric) + 1e-8)
    return float(rel.max())
