"""Model assembly: parameter manifest, per-instance graphs, checkpoint IO."""

import numpy as np

from .numerics import Tape, ParamStore, seeded_rng, glorot
from .config import RunConfig, to_dict, field_of
from . import encoders, coattention, fusion, decoder


class Model:
    def __init__(self, store: ParamStore, cfg: RunConfig, V: int, d_f: int):
        self.store = store
        self.cfg = cfg
        self.V = V
        self.d_f = d_f

    # ------------------------------------------------------------------
    # construction / checkpointing

    @classmethod
    def build(cls, cfg: RunConfig, V: int, d_f: int) -> "Model":
        """Initialize all parameters in manifest order from the run seed."""
        cfg.validate()
        d = cfg.d
        rng = seeded_rng("init", cfg.seed)
        store = ParamStore()

        def w(name, fan_in, fan_out, shape=None):
            store.add(name, glorot(rng, fan_in, fan_out, shape))

        def zeros(name, cols):
            store.add(name, np.zeros((1, cols)))

        def gru_block(prefix, d_in):
            for suffix in ("Wr", "Wz", "Wh"):
                w(f"{prefix}.{suffix}", d + d_in, d)
            for suffix in ("br", "bz", "bh"):
                zeros(f"{prefix}.{suffix}", d)

        store.add("emb", rng.uniform(-0.1, 0.1, size=(V, d)))
        w("enc_v.proj", d_f, d)
        gru_block("enc_v", d)
        gru_block("enc_x", d)
        if not cfg.dca_traditional:
            for k in range(cfg.K):
                # unit Frobenius norm: the perspectives start on the
                # sphere the orthonormality constraint pulls toward, so
                # constrained and unconstrained runs differ only in the
                # constraint, not in metric scale
                L0 = glorot(rng, d, d)
                store.add(f"dca.L.{k}", L0 / np.linalg.norm(L0))
        if cfg.gam_enabled:
            for mech in ("attn_cx", "attn_hx", "attn_cv", "attn_hv"):
                w(f"gam.{mech}.Wq", d, d)
                w(f"gam.{mech}.Wm", d, d)
                w(f"gam.{mech}.v", d, 1)
            for g in ("gate_x", "gate_v"):
                w(f"gam.{g}.Uc", d, d)
                w(f"gam.{g}.Uh", d, d)
                zeros(f"gam.{g}.b", d)
            store.add("gam.alpha", np.ones((1, d)))
            w("gam.ffn.W1", d * d, d)
            zeros("gam.ffn.b1", d)
            w("gam.ffn.W2", d, d)
            zeros("gam.ffn.b2", d)
        else:
            for mech in ("attn_hx", "attn_hv"):
                w(f"nogam.{mech}.Wq", d, d)
                w(f"nogam.{mech}.Wm", d, d)
                w(f"nogam.{mech}.v", d, 1)
            w("nogam.ffn.W1", 2 * d, d)
            zeros("nogam.ffn.b1", d)
            w("nogam.ffn.W2", d, d)
            zeros("nogam.ffn.b2", d)
        gru_block("dec", 2 * d)
        w("dec.out", d, V)

        store.meta = {"config": to_dict(cfg), "V": V, "d_f": d_f,
                      "epochs_done": 0}
        return cls(store, cfg, V, d_f)

    def save(self, path) -> None:
        self.store.meta["config"] = to_dict(self.cfg)
        self.store.meta["V"] = self.V
        self.store.meta["d_f"] = self.d_f
        self.store.save(path)

    @classmethod
    def load(cls, path) -> "Model":
        store = ParamStore.load(path)
        raw = store.meta["config"]
        cfg = RunConfig(**{field_of(k): v for k, v in raw.items()}).validate()
        return cls(store, cfg, int(store.meta["V"]), int(store.meta["d_f"]))

    @property
    def epochs_done(self) -> int:
        return int(self.store.meta.get("epochs_done", 0))

    # ------------------------------------------------------------------
    # perspective access

    def L_names(self) -> list:
        if self.cfg.dca_traditional:
            return []
        return [f"dca.L.{k}" for k in range(self.cfg.K)]

    def L_arrays(self) -> list:
        return [self.store.params[name] for name in self.L_names()]

    def L_nodes(self, tape: Tape) -> list:
        if self.cfg.dca_traditional:
            return [tape.const(np.eye(self.cfg.d))]
        return [tape.param(self.store, name) for name in self.L_names()]

    # ------------------------------------------------------------------
    # dropout

    def dropout_masks(self, rng, inst) -> dict:
        """Inverted-dropout masks for one instance (train time only)."""
        p = self.cfg.dropout
        d = self.cfg.d
        if p <= 0.0:
            return None

        def mask(shape):
            return (rng.random(shape) >= p) / (1.0 - p)

        n = inst.frames.shape[0]
        m = len(inst.context)
        steps = len(inst.target) + 1
        return {
            "emb_x": [mask((1, d)) for _ in range(m)],
            "hv": mask((n, d)),
            "hx": mask((m, d)),
            "dec_emb": [mask((1, d)) for _ in range(steps)],
        }

    # ------------------------------------------------------------------
    # per-instance graphs

    def memories(self, tape: Tape, inst, masks=None):
        """Encode one instance and prepare attention memories.

        Returns (mems, S_list); S_list is empty on paths that never
        build the co-attention (reduced fusion)."""
        cfg = self.cfg
        Hv = encoders.encode_video(
            tape, self.store, inst.frames, cfg.d,
            drop_mask=None if masks is None else masks["hv"])
        Hx = encoders.encode_text(
            tape, self.store, inst.context, cfg.d,
            emb_drop_masks=None if masks is None else masks["emb_x"],
            drop_mask=None if masks is None else masks["hx"])
        if cfg.gam_enabled:
            Cx, Cv, S_list = coattention.dca_forward(tape, Hv, Hx,
                                                     self.L_nodes(tape))
            mems = fusion.prepare_memories(tape, self.store, True, Hv, Hx, Cx, Cv)
        else:
            S_list = []
            mems = fusion.prepare_memories(tape, self.store, False, Hv, Hx)
        return mems, S_list

    def similarity_stack(self, inst) -> list:
        """S_k matrices for one instance (plain arrays, no recording)."""
        tape = Tape(recording=False)
        cfg = self.cfg
        Hv = encoders.encode_video(tape, self.store, inst.frames, cfg.d)
        Hx = encoders.encode_text(tape, self.store, inst.context, cfg.d)
        _, _, S_list = coattention.dca_forward(tape, Hv, Hx, self.L_nodes(tape))
        return [S.value.copy() for S in S_list]

    def instance_nll(self, tape: Tape, inst, masks=None):
        """Summed token NLL node for one instance; (node, steps)."""
        mems, _ = self.memories(tape, inst, masks)
        return decoder.nll_sum(
            tape, self.store, self.cfg.d, mems, self.cfg.gam_enabled,
            inst.target,
            emb_drop_masks=None if masks is None else masks["dec_emb"])

    def score_candidates(self, inst, candidates) -> list:
        """Log-likelihood score per candidate, sharing the encode work."""
        tape = Tape(recording=False)
        mems, _ = self.memories(tape, inst)
        return [
            decoder.score(tape, self.store, self.cfg.d, mems,
                          self.cfg.gam_enabled, cand, self.cfg.scoring)
            for cand in candidates
        ]

    def eval_nll(self, instances) -> float:
        """Mean per-token NLL over instances, no dropout."""
        total = 0.0
        steps = 0
        for inst in instances:
            tape = Tape(recording=False)
            node, n = self.instance_nll(tape, inst)
            total += node.value[0, 0]
            steps += n
        return total / max(steps, 1)

    def token_accuracy(self, instances) -> float:
        hits = total = 0
        for inst in instances:
            tape = Tape(recording=False)
            mems, _ = self.memories(tape, inst)
            h, n = decoder.token_hits(tape, self.store, self.cfg.d, mems,
                                      self.cfg.gam_enabled, inst.target)
            hits += h
            total += n
        return hits / max(total, 1)

    def generate(self, inst, max_len=None, rng=None) -> list:
        tape = Tape(recording=False)
        mems, _ = self.memories(tape, inst)
        return decoder.generate(tape, self.store, self.cfg.d, mems,
                                self.cfg.gam_enabled,
                                max_len or self.cfg.max_len, rng)
