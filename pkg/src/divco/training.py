"""Teacher-forced training loop: Adam steps, post-step orthogonalization,
per-epoch checkpoints and loss logging, deterministic resume."""

import os

import numpy as np

from .numerics import Tape, seeded_rng
from .ortho import ortho_update, r_beta, r_beta_node


class TrainingError(RuntimeError):
    pass


def _epoch_order(seed, epoch, n):
    return seeded_rng("shuffle", seed, epoch).permutation(n)


def run_training(model, train_insts, dev_insts, out_dir, log=print):
    """Train in place from model.epochs_done+1 up to cfg.epochs.

    Every epoch overwrites out_dir/model.ckpt (so interrupted runs
    resume exactly) and appends train/dev rows to out_dir/loss_log.csv.
    All randomness derives from (seed, epoch, step), which makes a
    resumed run bit-identical to an uninterrupted one.
    """
    cfg = model.cfg
    store = model.store
    if not train_insts:
        raise TrainingError("empty training split")
    os.makedirs(out_dir, exist_ok=True)
    ckpt_path = os.path.join(out_dir, "model.ckpt")
    log_path = os.path.join(out_dir, "loss_log.csv")
    if model.epochs_done == 0 or not os.path.exists(log_path):
        with open(log_path, "w", encoding="utf-8") as fh:
            fh.write("epoch,split,nll_per_token,r_beta\n")

    use_ortho = cfg.ortho_enabled and not cfg.dca_traditional
    loss_term = use_ortho and cfg.ortho_mode == "loss-term"

    for epoch in range(model.epochs_done + 1, cfg.epochs + 1):
        order = _epoch_order(cfg.seed, epoch, len(train_insts))
        epoch_nll = 0.0
        epoch_tokens = 0
        for step, start in enumerate(range(0, len(order), cfg.batch), start=1):
            batch = [train_insts[i] for i in order[start:start + cfg.batch]]
            total_tokens = sum(len(inst.target) + 1 for inst in batch)
            drop_rng = seeded_rng("dropout", cfg.seed, epoch, step)
            store.zero_grads()
            batch_nll = 0.0
            for inst in batch:
                tape = Tape()
                masks = model.dropout_masks(drop_rng, inst)
                node, _ = model.instance_nll(tape, inst, masks)
                tape.backward(tape.affine(node, 1.0 / total_tokens))
                batch_nll += node.value[0, 0]
            if not np.isfinite(batch_nll):
                raise TrainingError(
                    f"non-finite loss at epoch {epoch} step {step}")
            if loss_term:
                reg_tape = Tape()
                reg = r_beta_node(
                    reg_tape,
                    [reg_tape.param(store, n) for n in model.L_names()],
                    cfg.beta)
                reg_tape.backward(reg)
            try:
                store.adam_step(cfg.lr)
            except FloatingPointError as exc:
                raise TrainingError(
                    f"{exc} at epoch {epoch} step {step}") from exc
            if use_ortho and not loss_term:
                ortho_update(model.L_arrays(), cfg.beta, cfg.ortho_mode)
            epoch_nll += batch_nll
            epoch_tokens += total_tokens

        train_nll = epoch_nll / epoch_tokens
        dev_nll = model.eval_nll(dev_insts) if dev_insts else float("nan")
        L = model.L_arrays()
        reg_val = r_beta(L, cfg.beta) if L else 0.0
        with open(log_path, "a", encoding="utf-8") as fh:
            fh.write(f"{epoch},train,{train_nll:.17g},{reg_val:.17g}\n")
            fh.write(f"{epoch},dev,{dev_nll:.17g},{reg_val:.17g}\n")
        store.meta["epochs_done"] = epoch
        model.save(ckpt_path)
        if log:
            log(f"epoch {epoch}: train nll/token {train_nll:.4f}"
                f"  dev {dev_nll:.4f}  r_beta {reg_val:.3e}")
    return ckpt_path
