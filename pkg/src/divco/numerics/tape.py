"""Reverse-mode autodiff over dense float64 matrices.

Every value is a 2-D row-major numpy array; vectors are 1xD or Dx1
matrices and scalars are 1x1. A Tape records operations in execution
order (a Wengert list); backward() replays the list in reverse and
accumulates gradients into the ParamStore buffers of every parameter
node created through the tape.

Ops that sit on a hot path (GRU cell, additive attention, gated unit,
NLL from logits) are fused single nodes with hand-written backward
rules; everything is checked against central finite differences in the
test suite.
"""

import numpy as np

DTYPE = np.float64


class ShapeError(ValueError):
    """Operand shapes incompatible with the requested operation."""


class TapeError(RuntimeError):
    """Tape misuse: double backward, backward on a non-recording tape."""


def as_matrix(x) -> np.ndarray:
    """Coerce to a 2-D float64 array (scalars become 1x1, 1-D rows 1xN)."""
    a = np.asarray(x, dtype=DTYPE)
    if a.ndim == 0:
        a = a.reshape(1, 1)
    elif a.ndim == 1:
        a = a.reshape(1, -1)
    elif a.ndim != 2:
        raise ShapeError(f"expected at most 2 dimensions, got shape {a.shape}")
    return np.ascontiguousarray(a)


class Node:
    """A matrix value in the computation graph."""

    __slots__ = ("value", "grad", "track", "_bp")

    def __init__(self, value, track):
        self.value = value
        self.grad = None
        self.track = track
        self._bp = None

    @property
    def shape(self):
        return self.value.shape


def _acc(node, g):
    # g is freshly allocated: the node may take ownership.
    if node.grad is None:
        node.grad = g
    else:
        node.grad += g


def _acc_view(node, g):
    # g aliases another node's gradient buffer: copy before owning.
    if node.grad is None:
        node.grad = g.copy()
    else:
        node.grad += g


def _sigmoid(x):
    # Stable on both tails: exp of a non-positive argument only.
    e = np.exp(-np.abs(x))
    return np.where(x >= 0, 1.0 / (1.0 + e), e / (1.0 + e))


def _softmax_rows(x):
    shifted = x - x.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=1, keepdims=True)


class Tape:
    """Operation recorder. One forward pass (or batch) per tape.

    With recording=False the same code path computes values only;
    backward() is unavailable. Constant subgraphs are pruned from the
    backward sweep automatically (track=False propagates).
    """

    def __init__(self, recording=True):
        self._recording = recording
        self._nodes = []
        self._param_nodes = []
        self._param_cache = {}
        self._used = False

    # ------------------------------------------------------------------
    # node constructors

    def const(self, value) -> Node:
        return Node(as_matrix(value), False)

    def param(self, store, name) -> Node:
        """Node backed by a ParamStore entry; gradients flow back into it."""
        key = (id(store), name)
        node = self._param_cache.get(key)
        if node is None:
            node = Node(store.params[name], self._recording)
            self._param_cache[key] = node
            if self._recording:
                self._param_nodes.append((store, name, node))
        return node

    def _emit(self, value, track, bp) -> Node:
        node = Node(value, track)
        if self._recording and track:
            node._bp = bp()
            self._nodes.append(node)
        return node

    # ------------------------------------------------------------------
    # backward

    def backward(self, loss: Node) -> None:
        """Accumulate d(loss)/d(param) into every registered ParamStore."""
        if not self._recording:
            raise TapeError("backward() on a non-recording tape")
        if self._used:
            raise TapeError("backward() already called on this tape")
        if loss.value.shape != (1, 1):
            raise ShapeError(f"loss must be 1x1, got {loss.value.shape}")
        self._used = True
        loss.grad = np.ones((1, 1), dtype=DTYPE)
        for node in reversed(self._nodes):
            if node.grad is not None:
                node._bp(node.grad)
        for store, name, node in self._param_nodes:
            if node.grad is not None:
                store.grads[name] += node.grad

    # ------------------------------------------------------------------
    # primitive ops

    def matmul(self, a: Node, b: Node) -> Node:
        av, bv = a.value, b.value
        if av.shape[1] != bv.shape[0]:
            raise ShapeError(f"matmul: {av.shape} x {bv.shape}")
        track = a.track or b.track

        def bp():
            def run(g):
                if a.track:
                    _acc(a, g @ bv.T)
                if b.track:
                    _acc(b, av.T @ g)
            return run

        return self._emit(av @ bv, track, bp)

    def transpose(self, a: Node) -> Node:
        def bp():
            def run(g):
                _acc(a, np.ascontiguousarray(g.T))
            return run

        return self._emit(np.ascontiguousarray(a.value.T), a.track, bp)

    def add(self, a: Node, b: Node) -> Node:
        av, bv = a.value, b.value
        if av.shape != bv.shape:
            raise ShapeError(f"add: {av.shape} vs {bv.shape}")
        track = a.track or b.track

        def bp():
            def run(g):
                if a.track:
                    _acc_view(a, g)
                if b.track:
                    _acc_view(b, g)
            return run

        return self._emit(av + bv, track, bp)

    def sub(self, a: Node, b: Node) -> Node:
        av, bv = a.value, b.value
        if av.shape != bv.shape:
            raise ShapeError(f"sub: {av.shape} vs {bv.shape}")
        track = a.track or b.track

        def bp():
            def run(g):
                if a.track:
                    _acc_view(a, g)
                if b.track:
                    _acc(b, -g)
            return run

        return self._emit(av - bv, track, bp)

    def mul(self, a: Node, b: Node) -> Node:
        av, bv = a.value, b.value
        if av.shape != bv.shape:
            raise ShapeError(f"mul: {av.shape} vs {bv.shape}")
        track = a.track or b.track

        def bp():
            def run(g):
                if a.track:
                    _acc(a, g * bv)
                if b.track:
                    _acc(b, g * av)
            return run

        return self._emit(av * bv, track, bp)

    def affine(self, a: Node, alpha: float, beta: float = 0.0) -> Node:
        """alpha * a + beta, elementwise with scalar constants."""

        def bp():
            def run(g):
                _acc(a, g * alpha)
            return run

        return self._emit(alpha * a.value + beta, a.track, bp)

    def mul_array(self, a: Node, arr: np.ndarray) -> Node:
        """Elementwise product with a constant array (dropout masks)."""
        if a.value.shape != arr.shape:
            raise ShapeError(f"mul_array: {a.value.shape} vs {arr.shape}")

        def bp():
            def run(g):
                _acc(a, g * arr)
            return run

        return self._emit(a.value * arr, a.track, bp)

    def add_rowvec(self, m: Node, v: Node) -> Node:
        """m (r x d) + v (1 x d) broadcast over rows."""
        mv, vv = m.value, v.value
        if vv.shape != (1, mv.shape[1]):
            raise ShapeError(f"add_rowvec: {mv.shape} + {vv.shape}")
        track = m.track or v.track

        def bp():
            def run(g):
                if m.track:
                    _acc_view(m, g)
                if v.track:
                    _acc(v, g.sum(axis=0, keepdims=True))
            return run

        return self._emit(mv + vv, track, bp)

    def sigmoid(self, a: Node) -> Node:
        out = _sigmoid(a.value)

        def bp():
            def run(g):
                _acc(a, g * out * (1.0 - out))
            return run

        return self._emit(out, a.track, bp)

    def tanh(self, a: Node) -> Node:
        out = np.tanh(a.value)

        def bp():
            def run(g):
                _acc(a, g * (1.0 - out * out))
            return run

        return self._emit(out, a.track, bp)

    def softmax_rows(self, a: Node) -> Node:
        """Row-wise softmax with per-row max subtraction."""
        out = _softmax_rows(a.value)

        def bp():
            def run(g):
                dot = (g * out).sum(axis=1, keepdims=True)
                _acc(a, out * (g - dot))
            return run

        return self._emit(out, a.track, bp)

    def sum_all(self, a: Node) -> Node:
        shape = a.value.shape

        def bp():
            def run(g):
                _acc(a, np.full(shape, g[0, 0], dtype=DTYPE))
            return run

        return self._emit(np.array([[a.value.sum()]], dtype=DTYPE), a.track, bp)

    def concat_cols(self, a: Node, b: Node) -> Node:
        av, bv = a.value, b.value
        if av.shape[0] != bv.shape[0]:
            raise ShapeError(f"concat_cols: {av.shape} | {bv.shape}")
        p = av.shape[1]
        track = a.track or b.track

        def bp():
            def run(g):
                if a.track:
                    _acc(a, np.ascontiguousarray(g[:, :p]))
                if b.track:
                    _acc(b, np.ascontiguousarray(g[:, p:]))
            return run

        return self._emit(np.concatenate([av, bv], axis=1), track, bp)

    def stack_rows(self, rows) -> Node:
        """Stack 1xD nodes into an NxD matrix."""
        rows = list(rows)
        if not rows:
            raise ShapeError("stack_rows: empty input")
        d = rows[0].value.shape[1]
        for r in rows:
            if r.value.shape != (1, d):
                raise ShapeError(f"stack_rows: expected (1, {d}), got {r.value.shape}")
        track = any(r.track for r in rows)

        def bp():
            def run(g):
                for i, r in enumerate(rows):
                    if r.track:
                        _acc_view(r, g[i:i + 1])
            return run

        return self._emit(np.concatenate([r.value for r in rows], axis=0), track, bp)

    def row(self, a: Node, i: int) -> Node:
        """Select row i as a 1xD node (embedding lookup)."""
        av = a.value
        if not 0 <= i < av.shape[0]:
            raise ShapeError(f"row: index {i} out of range for {av.shape}")

        def bp():
            def run(g):
                if a.grad is None:
                    a.grad = np.zeros_like(av)
                a.grad[i:i + 1] += g
            return run

        return self._emit(av[i:i + 1].copy(), a.track, bp)

    def element(self, a: Node, i: int, j: int) -> Node:
        av = a.value

        def bp():
            def run(g):
                if a.grad is None:
                    a.grad = np.zeros_like(av)
                a.grad[i, j] += g[0, 0]
            return run

        return self._emit(np.array([[av[i, j]]], dtype=DTYPE), a.track, bp)

    def reshape(self, a: Node, rows: int, cols: int) -> Node:
        av = a.value
        if rows * cols != av.size:
            raise ShapeError(f"reshape: {av.shape} -> ({rows}, {cols})")
        shape = av.shape

        def bp():
            def run(g):
                _acc_view(a, g.reshape(shape))
            return run

        return self._emit(av.reshape(rows, cols).copy(), a.track, bp)

    # ------------------------------------------------------------------
    # fused ops

    def gru(self, h: Node, x: Node, Wr: Node, Wz: Node, Wh: Node,
            br: Node, bz: Node, bh: Node) -> Node:
        """One GRU step, row-vector convention (y = x @ W).

        r = sigma([h,x] Wr + br), z = sigma([h,x] Wz + bz),
        hcand = tanh([r*h, x] Wh + bh), h' = (1-z)*h + z*hcand.
        """
        hv, xv = h.value, x.value
        d = hv.shape[1]
        din = xv.shape[1]
        if hv.shape[0] != 1 or xv.shape[0] != 1:
            raise ShapeError(f"gru: state {hv.shape} and input {xv.shape} must be rows")
        for W, b, tag in ((Wr, br, "r"), (Wz, bz, "z"), (Wh, bh, "h")):
            if W.value.shape != (d + din, d):
                raise ShapeError(f"gru W{tag}: {W.value.shape} vs ({d + din}, {d})")
            if b.value.shape != (1, d):
                raise ShapeError(f"gru b{tag}: {b.value.shape} vs (1, {d})")

        c = np.concatenate([hv, xv], axis=1)
        r = _sigmoid(c @ Wr.value + br.value)
        z = _sigmoid(c @ Wz.value + bz.value)
        ch = np.concatenate([r * hv, xv], axis=1)
        hh = np.tanh(ch @ Wh.value + bh.value)
        out = (1.0 - z) * hv + z * hh
        track = any(n.track for n in (h, x, Wr, Wz, Wh, br, bz, bh))

        def bp():
            Wrv, Wzv, Whv = Wr.value, Wz.value, Wh.value

            def run(g):
                dz = g * (hh - hv)
                dhh = g * z
                dh = g * (1.0 - z)
                da_h = dhh * (1.0 - hh * hh)
                dch = da_h @ Whv.T
                drh = dch[:, :d]
                dx = dch[:, d:].copy()
                dr = drh * hv
                dh = dh + drh * r
                da_r = dr * r * (1.0 - r)
                da_z = dz * z * (1.0 - z)
                dc = da_r @ Wrv.T + da_z @ Wzv.T
                dh = dh + dc[:, :d]
                dx += dc[:, d:]
                if Wh.track:
                    _acc(Wh, ch.T @ da_h)
                if bh.track:
                    _acc_view(bh, da_h)
                if Wr.track:
                    _acc(Wr, c.T @ da_r)
                if br.track:
                    _acc_view(br, da_r)
                if Wz.track:
                    _acc(Wz, c.T @ da_z)
                if bz.track:
                    _acc_view(bz, da_z)
                if h.track:
                    _acc(h, dh)
                if x.track:
                    _acc(x, dx)
            return run

        return self._emit(out, track, bp)

    def attend(self, q_proj: Node, mem_proj: Node, mem: Node, v: Node) -> Node:
        """Additive attention with a pre-projected query and memory.

        scores = tanh(mem_proj + q_proj) @ v, weights = softmax(scores),
        out = weights^T @ mem. q_proj is 1xd, mem_proj/mem are rxd, v is dx1.
        """
        qv, mpv, mv, vv = q_proj.value, mem_proj.value, mem.value, v.value
        r, d = mpv.shape
        if r == 0:
            raise ShapeError("attend: empty memory")
        if qv.shape != (1, d) or mv.shape[0] != r or vv.shape != (d, 1):
            raise ShapeError(
                f"attend: q {qv.shape}, mem_proj {mpv.shape}, mem {mv.shape}, v {vv.shape}")

        t = np.tanh(mpv + qv)
        scores = t @ vv
        shifted = scores - scores.max()
        e = np.exp(shifted)
        w = e / e.sum()
        out = w.T @ mv
        track = any(n.track for n in (q_proj, mem_proj, mem, v))

        def bp():
            def run(g):
                if mem.track:
                    _acc(mem, w @ g)
                dw = mv @ g.T
                de = w * (dw - (w.T @ dw).item())
                if v.track:
                    _acc(v, t.T @ de)
                dpre = (de @ vv.T) * (1.0 - t * t)
                if mem_proj.track:
                    _acc(mem_proj, dpre)
                if q_proj.track:
                    _acc(q_proj, dpre.sum(axis=0, keepdims=True))
            return run

        return self._emit(out, track, bp)

    def gate(self, c: Node, h: Node, Uc: Node, Uh: Node, b: Node) -> Node:
        """Gated blend: w = sigma(c Uc + h Uh + b); out = w*c + (1-w)*h."""
        cv, hv = c.value, h.value
        d = cv.shape[1]
        if cv.shape != (1, d) or hv.shape != (1, d):
            raise ShapeError(f"gate: {cv.shape} vs {hv.shape}")
        if Uc.value.shape != (d, d) or Uh.value.shape != (d, d) or b.value.shape != (1, d):
            raise ShapeError(
                f"gate params: Uc {Uc.value.shape}, Uh {Uh.value.shape}, b {b.value.shape}")

        w = _sigmoid(cv @ Uc.value + hv @ Uh.value + b.value)
        out = w * cv + (1.0 - w) * hv
        track = any(n.track for n in (c, h, Uc, Uh, b))

        def bp():
            Ucv, Uhv = Uc.value, Uh.value

            def run(g):
                dw = g * (cv - hv)
                dpre = dw * w * (1.0 - w)
                dc = g * w + dpre @ Ucv.T
                dh = g * (1.0 - w) + dpre @ Uhv.T
                if Uc.track:
                    _acc(Uc, cv.T @ dpre)
                if Uh.track:
                    _acc(Uh, hv.T @ dpre)
                if b.track:
                    _acc_view(b, dpre)
                if c.track:
                    _acc(c, dc)
                if h.track:
                    _acc(h, dh)
            return run

        return self._emit(out, track, bp)

    def nll_logits(self, logits: Node, target: int) -> Node:
        """-log softmax(logits)[target] for a 1xV logits row."""
        lv = logits.value
        if lv.shape[0] != 1:
            raise ShapeError(f"nll_logits: logits must be a row, got {lv.shape}")
        if not 0 <= target < lv.shape[1]:
            raise ShapeError(f"nll_logits: target {target} outside vocab {lv.shape[1]}")
        m = lv.max()
        e = np.exp(lv - m)
        s = e.sum()
        loss = (m + np.log(s)) - lv[0, target]

        def bp():
            def run(g):
                p = e / s
                p = p.copy()
                p[0, target] -= 1.0
                _acc(logits, g[0, 0] * p)
            return run

        return self._emit(np.array([[loss]], dtype=DTYPE), logits.track, bp)
