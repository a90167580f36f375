"""Training loop, per-example loss assembly, checkpoints, and the gradient
checker.

Total loss per example is L_sep + loss_weight * L_cls, where L_sep is the
MixIT loss (MoM examples only) and L_cls one of the exact/MI/AC cross
entropies over labels derived from the example kind: the optimal assignment's
top row for NOn/LOn MoMs, all ones for on-screen-only single mixtures, all
zeros for SOff/LOff. The batch is averaged in listing order.

Batches are regenerated from SeedSequence(seed, step), so resuming from a
checkpoint replays the identical stream an unbroken run would see.
"""

import json
import os
from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .avtk import read_avtk, write_avtk
from .classifier import ac_ce_terms, exact_ce_terms, mi_ce_terms
from .config import RunConfig
from .errors import ConfigError, DataError, TrainingError
from .metrics import _fmt
from .model.forward import GradientTape, backward, model_forward
from .model.losses import mixit_loss_graph
from .model.optim import AdamState, adam_step
from .model.params import ModelParams, init_model_params
from .synth import SynthPool, compose_minibatch, load_dataset, make_rng

LOSS_BUILDERS = {"exact": exact_ce_terms, "mi": mi_ce_terms, "ac": ac_ce_terms}


@dataclass
class Model:
    """Everything needed to run the network on an example."""

    params: ModelParams
    sep_cfg: object
    emb_cfg: object
    mean_pooling: bool = False
    joint_flow: bool = False

    def forward(self, example, tape=None):
        return model_forward(self.params, self.sep_cfg, self.emb_cfg, example,
                             tape=tape, mean_pooling=self.mean_pooling,
                             joint_flow=self.joint_flow)


def build_model(cfg: RunConfig, rng=None) -> Model:
    rng = rng if rng is not None else make_rng(cfg.seed)
    sep_cfg = cfg.separator_config()
    emb_cfg = cfg.embedder_config()
    params = init_model_params(rng, sep_cfg, emb_cfg, dtype=cfg.dtype())
    return Model(params=params, sep_cfg=sep_cfg, emb_cfg=emb_cfg,
                 mean_pooling=bool(cfg.ablations["mean_pool"]),
                 joint_flow=bool(cfg.training["joint_flow"]))


def example_labels(example, num_sources, assignment=None):
    """Per-source training labels from the example kind.

    SOff/LOff: all zero. NOn/LOn MoMs: the optimal assignment's top row.
    On-screen-only single mixtures: all one (the whole input is on-screen).
    """
    if example.family in ("SOff", "LOff"):
        return np.zeros(num_sources, dtype=np.int64)
    if example.is_mom:
        return assignment.top_row()
    return np.ones(num_sources, dtype=np.int64)


def example_loss_terms(model: Model, example, tape: GradientTape, loss_kind="exact"):
    """(L_sep tensor or None, L_cls tensor, assignment or None) for one example."""
    model.forward(example, tape=tape)
    stack = tape.outputs["stack"]
    preds = tape.outputs["preds"]
    sep_term, assignment = None, None
    if example.is_mom:
        sep_term, assignment = mixit_loss_graph(example.x1, example.x2, stack,
                                                example.x1.sample_rate)
    labels = example_labels(example, model.sep_cfg.num_sources, assignment)
    cls_term = LOSS_BUILDERS[loss_kind](labels, preds)
    return sep_term, cls_term, assignment


def batch_loss(model: Model, batch, loss_kind="exact", loss_weight=1.0):
    """One tape carrying mean(L_sep + w * L_cls) over the batch.

    Returns (tape, stats) with the loss under tape.outputs["loss"].
    """
    tape = GradientTape(model.params)
    total = None
    sep_values, cls_values = [], []
    for example in batch:
        sep_term, cls_term, _ = example_loss_terms(model, example, tape, loss_kind)
        term = ad.mul(cls_term, loss_weight)
        if sep_term is not None:
            term = ad.add(sep_term, term)
            sep_values.append(float(sep_term.value))
        cls_values.append(float(cls_term.value))
        total = term if total is None else ad.add(total, term)
    total = ad.mul(total, 1.0 / len(batch))
    tape.outputs["loss"] = total
    stats = {
        "loss_sep": float(np.mean(sep_values)) if sep_values else 0.0,
        "loss_cls": float(np.mean(cls_values)) if cls_values else 0.0,
        "total": float(total.value),
    }
    return tape, stats


def batch_rng(seed, step):
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence([seed, step])))


def save_checkpoint(ckpt_dir, model: Model, state: AdamState, step, cfg_echo, seed):
    os.makedirs(ckpt_dir, exist_ok=True)
    write_avtk(os.path.join(ckpt_dir, "params.avtk"), model.params.data)
    write_avtk(os.path.join(ckpt_dir, "adam_m.avtk"), state.m)
    write_avtk(os.path.join(ckpt_dir, "adam_v.avtk"), state.v)
    manifest = {
        "step": int(step),
        "seed": int(seed),
        "adam_step": int(state.step),
        "config": cfg_echo,
        "param_index": {name: [int(off), list(shape)]
                        for name, (off, shape) in model.params.index.items()},
    }
    with open(os.path.join(ckpt_dir, "manifest.json"), "w") as f:
        json.dump(manifest, f, indent=2, sort_keys=True)
        f.write("\n")


def load_checkpoint(ckpt_dir, cfg: RunConfig) -> tuple:
    """(model, adam_state, step). The checkpoint's model configs must match
    the current config; a mismatch is a versioned ConfigError."""
    manifest_path = os.path.join(ckpt_dir, "manifest.json")
    if not os.path.isfile(manifest_path):
        raise DataError(f"{ckpt_dir} is not a checkpoint (no manifest.json)")
    with open(manifest_path) as f:
        manifest = json.load(f)
    for section in ("separator", "embedder", "ablations"):
        if manifest["config"][section] != cfg.echo()[section]:
            raise ConfigError(
                f"checkpoint/config mismatch in {section!r}: "
                f"{manifest['config'][section]} vs {cfg.echo()[section]}"
            )
    data = read_avtk(os.path.join(ckpt_dir, "params.avtk")).astype(cfg.dtype())
    index = {name: (int(off), tuple(shape))
             for name, (off, shape) in manifest["param_index"].items()}
    params = ModelParams(data, index)
    state = AdamState(
        m=read_avtk(os.path.join(ckpt_dir, "adam_m.avtk")).astype(cfg.dtype()),
        v=read_avtk(os.path.join(ckpt_dir, "adam_v.avtk")).astype(cfg.dtype()),
        step=int(manifest["adam_step"]),
    )
    model = Model(params=params, sep_cfg=cfg.separator_config(),
                  emb_cfg=cfg.embedder_config(),
                  mean_pooling=bool(cfg.ablations["mean_pool"]),
                  joint_flow=bool(cfg.training["joint_flow"]))
    return model, state, int(manifest["step"])


class _DatasetStream:
    """Deterministic cycling batches over an exported dataset."""

    def __init__(self, data_dir, batch_size):
        self.examples = load_dataset(data_dir)
        if not self.examples:
            raise DataError(f"{data_dir} contains no examples")
        self.batch_size = batch_size

    def batch(self, step):
        n = len(self.examples)
        start = (step * self.batch_size) % n
        return [self.examples[(start + i) % n] for i in range(self.batch_size)]


def train(cfg: RunConfig, out_dir=None, resume=None, log_hook=None):
    """Run the configured training; returns (model, state, log_rows).

    Writes log.csv and checkpoints under out_dir. A non-finite loss or
    gradient aborts with TrainingError after the last good checkpoint is left
    in place.
    """
    out_dir = out_dir or cfg.out_dir
    os.makedirs(out_dir, exist_ok=True)
    spec = cfg.minibatch_spec()
    synth_cfg = cfg.synth_config()
    pool = SynthPool(synth_cfg)
    dataset = None
    if cfg.training["dataset_dir"]:
        dataset = _DatasetStream(cfg.resolve_path(cfg.training["dataset_dir"]),
                                 spec.batch_size)

    if resume:
        model, state, start_step = load_checkpoint(resume, cfg)
    else:
        model = build_model(cfg)
        state = AdamState.zeros(model.params.data.size, dtype=cfg.dtype())
        start_step = 0

    steps = int(cfg.training["steps"])
    interval = max(1, int(cfg.training["checkpoint_interval"]))
    lr = float(cfg.training["learning_rate"])
    loss_kind = cfg.loss_kind()
    loss_weight = float(cfg.training["loss_weight"])
    ckpt_dir = os.path.join(out_dir, "checkpoint")
    log_rows = []

    for step in range(start_step, steps):
        rng = batch_rng(cfg.seed, step)
        batch = (dataset.batch(step) if dataset is not None
                 else compose_minibatch(rng, spec, pool))
        tape, stats = batch_loss(model, batch, loss_kind, loss_weight)
        if not np.isfinite(stats["total"]):
            _write_log(out_dir, log_rows)
            raise TrainingError(f"non-finite loss {stats['total']} at step {step}; "
                                f"last checkpoint retained in {ckpt_dir}")
        grads = backward(model.params, tape)
        adam_step(model.params, grads, state, lr)
        row = {"step": step, **stats}
        log_rows.append(row)
        if log_hook is not None:
            log_hook(row)
        if (step + 1) % interval == 0 or step + 1 == steps:
            save_checkpoint(ckpt_dir, model, state, step + 1, cfg.echo(), cfg.seed)
    if steps == start_step:
        save_checkpoint(ckpt_dir, model, state, start_step, cfg.echo(), cfg.seed)
    _write_log(out_dir, log_rows)
    return model, state, log_rows


def _write_log(out_dir, rows):
    path = os.path.join(out_dir, "log.csv")
    with open(path, "w") as f:
        f.write("step,loss_sep,loss_cls,total\n")
        for row in rows:
            f.write(f"{row['step']},{_fmt(row['loss_sep'])},"
                    f"{_fmt(row['loss_cls'])},{_fmt(row['total'])}\n")
    return path


def gradient_check(model: Model, batch, loss_kind="exact", loss_weight=1.0,
                   samples=200, h=1e-5, rng=None, corrupt_tensor=None):
    """Analytic vs central-difference gradients on the full training loss.

    Samples at least ``samples`` parameter coordinates, covering every named
    tensor. Returns a report dict with the max relative error and the worst
    tensor. ``corrupt_tensor`` deliberately perturbs one tensor's analytic
    gradient (negative-control hook for the harness tests).
    """
    rng = rng if rng is not None else np.random.default_rng(0)
    params = model.params
    tape, _ = batch_loss(model, batch, loss_kind, loss_weight)
    analytic = backward(params, tape)
    if corrupt_tensor is not None:
        analytic = analytic.copy()
        analytic[params.slice_of(corrupt_tensor)] += 1.0

    names = params.names()
    per_tensor = max(1, int(np.ceil(samples / len(names))))
    checked = []
    for name in names:
        sl = params.slice_of(name)
        size = sl.stop - sl.start
        picks = rng.choice(size, size=min(per_tensor, size), replace=False)
        checked.extend(sl.start + int(p) for p in picks)

    def loss_at():
        t, _ = batch_loss(model, batch, loss_kind, loss_weight)
        return float(t.outputs["loss"].value)

    worst = (0.0, None)
    for flat_index in checked:
        original = params.data[flat_index]
        params.data[flat_index] = original + h
        hi = loss_at()
        params.data[flat_index] = original - h
        lo = loss_at()
        params.data[flat_index] = original
        numeric = (hi - lo) / (2 * h)
        denom = max(abs(numeric), abs(analytic[flat_index]), 1e-3)
        rel = abs(analytic[flat_index] - numeric) / denom
        if rel > worst[0]:
            worst = (rel, _tensor_of(params, flat_index))
    return {
        "samples": len(checked),
        "tensors": len(names),
        "max_rel_error": worst[0],
        "worst_tensor": worst[1],
    }


def _tensor_of(params, flat_index):
    for name in params.index:
        sl = params.slice_of(name)
        if sl.start <= flat_index < sl.stop:
            return name
    return "<unindexed>"
