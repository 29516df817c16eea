"""End-to-end mini-batch training with cost-curve logging and checkpoints.

Each epoch shuffles the training ids (seed-deterministic), cuts mini-batches,
pads every batch to its own longest utterance, and accumulates per-utterance
CTC gradients (batch loss = mean utterance loss) before one Adam step.
Padding is storage-level only: the network always consumes the valid-length
slice, so a padded utterance contributes exactly the loss it would unpadded.

The same (seed, config, corpus) always reproduces the same batch stream,
cost values and checkpoint bytes; wall-clock stamps are the one
machine-dependent column.
"""

import logging
import os
import time
from dataclasses import dataclass, field, replace

import numpy as np

from . import ctc as ctc_mod
from . import evaluate
from .features import pad_to_length
from .network import NetworkConfig, build_network, get_config, save_config
from .numerics import adam_step, make_rng, save_checkpoint

log = logging.getLogger(__name__)


class TrainingAborted(ArithmeticError):
    pass


@dataclass
class TrainConfig:
    network: object = "RC2-toy"        # catalog name, config path, or NetworkConfig
    lr: float = 0.00005
    batch_size: int = 32
    epochs: int = 10
    seed: int = 0
    dropout: float = None              # None keeps the config's own rates
    log_path: str = None
    checkpoint_dir: str = None
    checkpoint_every: int = 0          # also checkpoints the final epoch when a dir is set
    clip_grad: float = None            # opt-in global-norm clipping
    input_dim: int = 39

    def __post_init__(self):
        if self.lr < 0:
            raise ValueError("learning rate must be >= 0")
        if self.batch_size < 1:
            raise ValueError("batch size must be >= 1")


@dataclass
class CurveRow:
    epoch: int
    wall_clock_minutes: float
    train_cost: float
    val_cost: float
    val_per: float


@dataclass
class CostCurve:
    rows: list = field(default_factory=list)

    CSV_HEADER = "epoch,wall_clock_minutes,train_cost,val_cost,val_per"

    def to_csv(self, path):
        with open(path, "w") as fh:
            fh.write(self.CSV_HEADER + "\n")
            for r in self.rows:
                fh.write(f"{r.epoch},{r.wall_clock_minutes:.6f},{r.train_cost:.17g},"
                         f"{r.val_cost:.17g},{r.val_per:.17g}\n")

    @classmethod
    def from_csv(cls, path):
        rows = []
        with open(path) as fh:
            header = fh.readline().strip()
            if header != cls.CSV_HEADER:
                raise ValueError(f"{path}: unexpected curve header {header!r}")
            for line in fh:
                e, w, tc, vc, vp = line.split(",")
                rows.append(CurveRow(int(e), float(w), float(tc), float(vc), float(vp)))
        return cls(rows=rows)


def _resolve_config(network):
    if isinstance(network, NetworkConfig):
        return network
    return get_config(network)


def _clip_gradients(store, max_norm):
    total = np.sqrt(sum(float(np.sum(p.grad ** 2)) for p in store.entries.values()))
    if total > max_norm and total > 0:
        scale = max_norm / total
        for p in store.entries.values():
            p.grad *= scale


def train(config, corpus, partition=None):
    """Run the training loop; returns (ParameterStore, CostCurve).

    Infeasible utterances (too few frames for their label) are skipped with
    a warning.  A non-finite loss aborts with epoch/batch context.
    """
    net_config = _resolve_config(config.network)
    alphabet = corpus.alphabet
    net = build_network(
        net_config,
        input_dim=config.input_dim,
        output_units=alphabet.size,
        rng=make_rng(config.seed, 1),
        dropout_override=config.dropout,
    )
    shuffle_rng = make_rng(config.seed, 2)
    dropout_rng = make_rng(config.seed, 3)

    train_ids = list(partition.train) if partition is not None else corpus.ids()
    val_ids = list(partition.val) if partition is not None else []
    feasible = [i for i in train_ids if corpus[i].ctc_feasible]
    skipped = sorted(set(train_ids) - set(feasible))
    if skipped:
        log.warning("train: skipping %d infeasible utterances: %s",
                    len(skipped), ", ".join(skipped[:5]))

    log_lines = []
    curve = CostCurve()
    start = time.monotonic()
    ckpt_dir = config.checkpoint_dir
    if ckpt_dir:
        os.makedirs(ckpt_dir, exist_ok=True)
        save_config(net_config, os.path.join(ckpt_dir, f"{net_config.name}.netcfg"))

    for epoch in range(1, config.epochs + 1):
        order = [feasible[i] for i in shuffle_rng.permutation(len(feasible))]
        epoch_losses = []
        for b0 in range(0, len(order), config.batch_size):
            batch_ids = order[b0:b0 + config.batch_size]
            batch_no = b0 // config.batch_size + 1
            log_lines.append(f"epoch {epoch} batch {batch_no} ids {','.join(batch_ids)}")
            t_max = max(corpus[i].n_frames for i in batch_ids)
            scale = 1.0 / len(batch_ids)
            for utt_id in batch_ids:
                utt = corpus[utt_id]
                padded, valid = pad_to_length(utt.features, t_max)
                x = padded[:valid]
                try:
                    logits, ctxs = net.forward(x, training=True, rng=dropout_rng)
                    loss, dlogits = ctc_mod.ctc_loss_and_grad(logits, alphabet.encode(utt.labels))
                except ctc_mod.InfeasibleLabel:
                    log.warning("train: skipping '%s' (infeasible) in epoch %d", utt_id, epoch)
                    continue
                except (ValueError, ArithmeticError) as exc:
                    raise TrainingAborted(
                        f"numeric failure at epoch {epoch}, batch {batch_no}, "
                        f"utterance '{utt_id}': {exc}"
                    ) from exc
                if not np.isfinite(loss):
                    raise TrainingAborted(
                        f"non-finite loss at epoch {epoch}, batch {batch_no}, utterance '{utt_id}'"
                    )
                net.backward(ctxs, dlogits * scale)
                epoch_losses.append(loss)
            if config.clip_grad is not None:
                _clip_gradients(net.store, config.clip_grad)
            adam_step(net.store, config.lr)

        train_cost = float(np.mean(epoch_losses)) if epoch_losses else float("nan")
        val_cost, val_per = _validate(net, corpus, alphabet, val_ids)
        minutes = (time.monotonic() - start) / 60.0
        curve.rows.append(CurveRow(epoch, minutes, train_cost, val_cost, val_per))
        log_lines.append(
            f"epoch {epoch} train_cost {train_cost:.17g} val_cost {val_cost:.17g} "
            f"val_per {val_per:.17g}"
        )
        if ckpt_dir and (
            (config.checkpoint_every and epoch % config.checkpoint_every == 0)
            or epoch == config.epochs
        ):
            save_checkpoint(net.store, os.path.join(ckpt_dir, f"{net_config.name}_{epoch}.ckpt"))

    if config.log_path:
        with open(config.log_path, "w") as fh:
            fh.write("\n".join(log_lines) + ("\n" if log_lines else ""))
    return net.store, curve


def _validate(net, corpus, alphabet, val_ids):
    if not val_ids:
        return float("nan"), float("nan")
    losses = []
    refs = {}
    hyps = {}
    for utt_id in val_ids:
        utt = corpus[utt_id]
        refs[utt_id] = utt.labels
        if not utt.ctc_feasible:
            hyps[utt_id] = ()
            continue
        logits, _ = net.forward(utt.features, training=False)
        loss, _ = ctc_mod.ctc_loss_and_grad(logits, alphabet.encode(utt.labels))
        losses.append(loss)
        y = ctc_mod.softmax(logits)
        hyps[utt_id] = alphabet.decode(ctc_mod.greedy_decode(y))
    val_cost = float(np.mean(losses)) if losses else float("nan")
    return val_cost, evaluate.per(refs, hyps).aggregate


def compare_architectures(names, config, corpus, partition, out_dir):
    """Train several catalog models on identical data/seed; one curve CSV each.

    Returns {name: curve_path} for the successes and {name: error} for the
    failures (a failing model never stops the others).
    """
    os.makedirs(out_dir, exist_ok=True)
    results = {}
    errors = {}
    for name in names:
        run_cfg = replace(
            config,
            network=name,
            log_path=os.path.join(out_dir, f"{name}_batches.log"),
            checkpoint_dir=None,
        )
        try:
            _, curve = train(run_cfg, corpus, partition)
        except Exception as exc:                      # noqa: BLE001 - isolate per model
            log.warning("compare: model %s failed: %s", name, exc)
            errors[name] = exc
            continue
        path = os.path.join(out_dir, f"{name}_curve.csv")
        curve.to_csv(path)
        results[name] = path
    return results, errors
