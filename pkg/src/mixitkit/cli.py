"""Command-line entry point.

Subcommands: datagen, train, eval, gradcheck, losses, plot. Every command
writes a run_manifest.json echoing the resolved config and seed, so a run can
be reproduced byte-for-byte from its manifest. Exit codes: 0 ok, 2 config
error, 3 data error, 4 numeric failure.
"""

import argparse
import json
import math
import os
import sys

import numpy as np

from . import __version__
from .audio import SourceStack, Waveform, read_wav
from .avtk import read_avtk, write_avtk
from .classifier import SourceLabels, SourcePredictions, ac_ce, exact_ce, mi_ce
from .config import load_config
from .errors import (ConfigError, DataError, FormatError, InvalidInputError,
                     InvalidStateError, MixitKitError, TrainingError,
                     UndefinedMetricError, UnsupportedError)
from .metrics import (emit_report, evaluate_model, records_from_csv,
                      render_scatter_svgs, si_snr)
from .synth import SynthPool, compose_minibatch, export_dataset, make_eval_sets, make_rng
from .training import batch_rng, build_model, gradient_check, load_checkpoint, train

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_DATA = 3
EXIT_NUMERIC = 4


def _write_manifest(out_dir, command, cfg, extra=None):
    os.makedirs(out_dir, exist_ok=True)
    manifest = {
        "command": command,
        "version": __version__,
        "seed": cfg.seed,
        "config": cfg.echo(),
    }
    if extra:
        manifest.update(extra)
    path = os.path.join(out_dir, "run_manifest.json")
    with open(path, "w") as f:
        json.dump(manifest, f, indent=2, sort_keys=True)
        f.write("\n")
    return path


def cmd_datagen(args):
    cfg = load_config(args.config, seed=args.seed, out_dir=args.out)
    if args.n < 0:
        raise ConfigError(f"--n must be >= 0, got {args.n}")
    spec = cfg.minibatch_spec()
    pool = SynthPool(cfg.synth_config())
    examples = []
    step = 0
    while len(examples) < args.n:
        rng = batch_rng(cfg.seed, step)
        examples.extend(compose_minibatch(rng, spec, pool))
        step += 1
    examples = examples[:args.n]
    out_dir = cfg.out_dir
    manifest = export_dataset(out_dir, examples, cfg.seed)
    _write_manifest(out_dir, "datagen", cfg, {"dataset": manifest})
    print(f"wrote {len(examples)} examples to {out_dir}")
    return EXIT_OK


def cmd_train(args):
    cfg = load_config(args.config, seed=args.seed, out_dir=args.out)
    out_dir = cfg.out_dir
    _write_manifest(out_dir, "train", cfg)

    def log_hook(row):
        print(f"step {row['step']}: sep {row['loss_sep']:.4f} "
              f"cls {row['loss_cls']:.4f} total {row['total']:.4f}")

    train(cfg, out_dir=out_dir, resume=args.checkpoint, log_hook=log_hook)
    print(f"checkpoint in {os.path.join(out_dir, 'checkpoint')}")
    return EXIT_OK


def cmd_eval(args):
    cfg = load_config(args.config, seed=args.seed, out_dir=args.out)
    if args.checkpoint:
        model, _, _ = load_checkpoint(args.checkpoint, cfg)
    else:
        model = build_model(cfg)  # untrained evaluation is legal
    if args.dataset:
        from .synth import load_dataset
        kind_to_set = {"LOn-single": "on-single", "LOff-single": "off-single",
                       "LOn-MoM": "on-MoM", "LOff-MoM": "off-MoM"}
        eval_sets = {name: [] for name in kind_to_set.values()}
        for ex in load_dataset(args.dataset):
            if ex.kind in kind_to_set:
                eval_sets[kind_to_set[ex.kind]].append(ex)
    else:
        rng = make_rng(cfg.seed + 1)
        eval_sets = make_eval_sets(rng, cfg.synth_config(),
                                   int(cfg.raw["eval"]["examples_per_set"]))
    records, summaries = evaluate_model(model.params, model.sep_cfg, model.emb_cfg,
                                        eval_sets, mean_pooling=model.mean_pooling,
                                        joint_flow=model.joint_flow)
    out_dir = cfg.out_dir
    paths = emit_report(records, summaries, out_dir)
    _write_manifest(out_dir, "eval", cfg, {"reports": [os.path.basename(p) for p in paths]})
    if args.attention_out:
        _dump_attention(model, eval_sets, args.attention_out)
    for name, summary in summaries.items():
        print(f"{name}: count {summary.count} auc {summary.auc}")
    return EXIT_OK


def _dump_attention(model, eval_sets, out_dir):
    """Spatio-temporal attention grids for the first example of each set,
    as AVTK tensors and CSV grids (frames stacked vertically)."""
    os.makedirs(out_dir, exist_ok=True)
    for name, examples in eval_sets.items():
        _, _, aux = model.forward(examples[0])
        for m, grid in enumerate(aux["attention_grids"]):
            stem = os.path.join(out_dir, f"{name}-src{m}")
            write_avtk(f"{stem}.avtk", grid.astype(np.float32))
            with open(f"{stem}.csv", "w") as f:
                for frame in grid:
                    for row in frame:
                        f.write(",".join(repr(float(v)) for v in row) + "\n")
                    f.write("\n")


def cmd_gradcheck(args):
    cfg = load_config(args.config, seed=args.seed, out_dir=args.out)
    model = build_model(cfg)
    rng = batch_rng(cfg.seed, 0)
    pool = SynthPool(cfg.synth_config())
    spec = cfg.minibatch_spec()
    batch = compose_minibatch(rng, spec, pool)[:max(1, args.batch)]
    tolerance = 1e-4 if cfg.dtype() == np.float64 else 1e-2
    report = gradient_check(model, batch, loss_kind=cfg.loss_kind(),
                            loss_weight=float(cfg.training["loss_weight"]),
                            samples=args.samples, corrupt_tensor=args.corrupt)
    ok = report["max_rel_error"] <= tolerance
    print(f"gradcheck: {report['samples']} samples over {report['tensors']} tensors, "
          f"max rel error {report['max_rel_error']:.3e} "
          f"(worst tensor {report['worst_tensor']}), tolerance {tolerance:g} "
          f"-> {'PASS' if ok else 'FAIL'}")
    if args.out:
        _write_manifest(cfg.out_dir, "gradcheck", cfg, {"report": report})
    if not ok:
        raise TrainingError(
            f"gradient check failed: max rel error {report['max_rel_error']:.3e} "
            f"in tensor {report['worst_tensor']}"
        )
    return EXIT_OK


def _read_waveform(path):
    return read_wav(path)


def _parse_float_list(text):
    return np.array([float(tok) for tok in text.split(",") if tok != ""])


def cmd_losses(args):
    """Compute the objective/metric formulas on user-supplied files."""
    from .mixit import mixit_loss, snr_loss
    out = {}
    if args.target and args.estimate:
        target = _read_waveform(args.target)
        estimate = _read_waveform(args.estimate)
        out["snr_loss_db"] = snr_loss(target, estimate)
        sisnr = si_snr(target, estimate)
        out["si_snr_db"] = ("inf" if sisnr == math.inf
                            else "-inf" if sisnr == -math.inf else sisnr)
    if args.x1 and args.x2 and args.sources:
        x1 = _read_waveform(args.x1)
        x2 = _read_waveform(args.x2)
        sources = read_avtk(args.sources)
        if sources.ndim != 2:
            raise InvalidInputError(f"{args.sources}: sources tensor must be rank 2")
        result = mixit_loss(x1, x2, SourceStack(sources.astype(np.float64),
                                                x1.sample_rate))
        out["mixit_loss_db"] = result.loss
        out["mixit_assignment_top_row"] = [int(v) for v in result.assignment.entries[0]]
    if args.labels is not None and args.preds is not None:
        labels = SourceLabels(_parse_float_list(args.labels).astype(int))
        preds = SourcePredictions(_parse_float_list(args.preds))
        out["exact_ce"] = exact_ce(labels, preds)
        out["mi_ce"] = mi_ce(labels, preds)
        out["ac_ce"] = ac_ce(labels, preds)
    if not out:
        raise ConfigError(
            "losses needs --target/--estimate, --x1/--x2/--sources, or --labels/--preds"
        )
    text = json.dumps(out, indent=2, sort_keys=True)
    print(text)
    if args.out:
        os.makedirs(args.out, exist_ok=True)
        with open(os.path.join(args.out, "losses.json"), "w") as f:
            f.write(text + "\n")
    return EXIT_OK


def cmd_plot(args):
    with open(args.records) as f:
        records = records_from_csv(f.read())
    os.makedirs(args.out, exist_ok=True)
    for name, svg in render_scatter_svgs(records).items():
        with open(os.path.join(args.out, name), "w") as f:
            f.write(svg)
    print(f"wrote scatter SVGs to {args.out}")
    return EXIT_OK


def build_parser():
    parser = argparse.ArgumentParser(prog="mixitkit",
                                     description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", help="JSON run config (defaults apply when omitted)")
        p.add_argument("--seed", type=int, help="override the config seed")
        p.add_argument("--out", help="override the config output directory")

    p = sub.add_parser("datagen", help="export a synthetic dataset")
    common(p)
    p.add_argument("--n", type=int, required=True, help="number of examples")
    p.set_defaults(func=cmd_datagen)

    p = sub.add_parser("train", help="train the separator/classifier")
    common(p)
    p.add_argument("--checkpoint", help="resume from this checkpoint directory")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="run the four-set evaluation and reports")
    common(p)
    p.add_argument("--checkpoint", help="checkpoint directory (untrained model if omitted)")
    p.add_argument("--dataset", help="exported dataset directory with labeled kinds")
    p.add_argument("--attention-out", help="dump spatio-temporal attention grids here")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("gradcheck", help="verify analytic gradients against finite differences")
    common(p)
    p.add_argument("--samples", type=int, default=200, help="parameter samples (min)")
    p.add_argument("--batch", type=int, default=2, help="examples in the check batch")
    p.add_argument("--corrupt", help="testing aid: corrupt this tensor's gradient")
    p.set_defaults(func=cmd_gradcheck)

    p = sub.add_parser("losses", help="compute objective formulas on WAV/AVTK files")
    p.add_argument("--target")
    p.add_argument("--estimate")
    p.add_argument("--x1")
    p.add_argument("--x2")
    p.add_argument("--sources", help="AVTK rank-2 source stack")
    p.add_argument("--labels", help="comma-separated binary labels")
    p.add_argument("--preds", help="comma-separated probabilities")
    p.add_argument("--out")
    p.set_defaults(func=cmd_losses)

    p = sub.add_parser("plot", help="re-emit scatter SVGs from a records CSV")
    p.add_argument("--records", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_plot)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as err:
        print(f"config error: {err}", file=sys.stderr)
        return EXIT_CONFIG
    except (DataError, FormatError, UnsupportedError, InvalidInputError,
            UndefinedMetricError) as err:
        print(f"data error: {err}", file=sys.stderr)
        return EXIT_DATA
    except (TrainingError, InvalidStateError) as err:
        print(f"numeric failure: {err}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
