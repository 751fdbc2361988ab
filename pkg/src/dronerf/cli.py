"""``dronerf`` command line: synth, train, eval, embed, stream.

Exit codes: 0 success, 2 usage error, 3 data error, 4 runtime failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__, dataset, reports, stream, synth, tsne
from .errors import CheckpointError, ConfigurationError, DroneRFError
from .nn import Checkpoint, TrainConfig, VggConfig, VggNet, condition_inputs, load_checkpoint, save_checkpoint
from .nn import checkpoint as ckpt_io
from .nn.train import train as fit
from .nn.vgg import DESK_WIDTHS, PAPER_WIDTHS, STAGE_DEPTHS

log = logging.getLogger("dronerf")

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_RUNTIME = 0, 2, 3, 4
RUN_CONFIG_FILE = "run_config.json"
PRECISIONS = {"f32": np.float32, "f64": np.float64}


class UsageError(ConfigurationError):
    """Flags that parse individually but do not fit together or with their inputs."""

    exit_code = EXIT_USAGE


# helpers ---------------------------------------------------------------------
def _echo_config(args, out: Path):
    out.mkdir(parents=True, exist_ok=True)
    doc = {k: v for k, v in sorted(vars(args).items()) if k != "func"}
    doc = {k: (str(v) if isinstance(v, Path) else v) for k, v in doc.items()}
    doc["dronerf_version"] = __version__
    (out / RUN_CONFIG_FILE).write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")


def _check_profile(args, manifest_profile: dict):
    if args.profile and synth.PROFILES[args.profile].to_dict() != manifest_profile:
        raise UsageError(f"--profile {args.profile} does not match the dataset profile {manifest_profile['name']}")


def _split(ds, k, val_fraction, seed):
    return dataset.stratified_kfold(ds.labels, k, val_fraction, seed)


def _fold_list(spec: str, k: int) -> list[int]:
    if spec == "all":
        return list(range(k))
    folds = sorted({int(s) for s in spec.split(",")})
    if any(not 0 <= f < k for f in folds):
        raise UsageError(f"fold indices must lie in 0..{k - 1}")
    return folds


def _progress_printer(prefix):
    t0 = time.perf_counter()

    def show(epoch, loss, val):
        print(f"{prefix} epoch {epoch:3d}  loss {loss:.4f}  val_bacc {val:.4f}  ({time.perf_counter() - t0:.0f}s)",
              file=sys.stderr, flush=True)

    return show


def _eval_subset(ckpt: Checkpoint, ds, fold_arg, subset: str):
    meta = ckpt.metadata
    if subset == "all":
        return np.arange(len(ds))
    if "split_seed" not in meta:
        raise CheckpointError("checkpoint has no split metadata; use --subset all")
    fold = meta.get("fold", 0) if fold_arg is None else fold_arg
    plan = _split(ds, meta["k"], meta["val_fraction"], meta["split_seed"])
    if not 0 <= fold < plan.k:
        raise UsageError(f"--fold must lie in 0..{plan.k - 1}")
    return getattr(plan.folds[fold], subset)


def _load_pair(args):
    ckpt = load_checkpoint(args.checkpoint)
    ds = dataset.load_dataset(args.dataset)
    _check_profile(args, ds.manifest["profile"])
    if tuple(ds.manifest["spectrogram_shape"]) != ckpt.config.input_shape:
        raise ConfigurationError(
            f"dataset spectrograms {ds.manifest['spectrogram_shape']} do not fit model input {list(ckpt.config.input_shape)}"
        )
    return ckpt, ds


# subcommands -------------------------------------------------------------------
def cmd_synth(args) -> int:
    name = args.profile or "desk"
    prof = synth.PROFILES[name]
    counts = dict(dataset.DESK_CLASS_COUNTS if name == "desk" else dataset.PAPER_CLASS_COUNTS)
    if args.per_class is not None:
        counts = {c: args.per_class for c in dataset.CLASSES if c != "Noise"}
        counts["Noise"] = args.noise_count if args.noise_count is not None else 4 * args.per_class
    elif args.noise_count is not None:
        counts["Noise"] = args.noise_count
    cfg = dataset.DatasetConfig(counts=counts, profile=prof, seed=args.seed)
    out = Path(args.out)
    _echo_config(args, out)

    def progress(i, n):
        if i % 200 == 0 or i == n:
            print(f"synth {i}/{n}", file=sys.stderr, flush=True)

    ds = dataset.build_dataset(cfg, progress)
    dataset.save_dataset(ds, out / "dataset")
    print(out / "dataset")
    return EXIT_OK


def cmd_train(args) -> int:
    ds = dataset.load_dataset(args.dataset)
    _check_profile(args, ds.manifest["profile"])
    prof = synth.ScaleProfile.from_dict(ds.manifest["profile"])
    widths = tuple(args.widths) if args.widths else (DESK_WIDTHS if prof.name == "desk" else PAPER_WIDTHS)
    config = VggConfig(args.variant, widths, tuple(ds.manifest["spectrogram_shape"]))
    plan = _split(ds, args.folds, args.val_fraction, args.seed)
    out = Path(args.out)
    _echo_config(args, out)
    (out / "splits.json").write_text(json.dumps(plan.to_dict()) + "\n")
    dtype = PRECISIONS[args.precision]
    tcfg = TrainConfig(epochs=args.epochs, batch_size=args.batch_size, lr=args.lr, seed=args.seed,
                       phase_augment=args.phase_augment)
    for f in _fold_list(args.fold_index, plan.k):
        fold = plan.folds[f]
        x_tr, stats = condition_inputs(ds.planes[fold.train])
        x_va, _ = condition_inputs(ds.planes[fold.val], stats)
        model = VggNet(config, seed=args.seed, dtype=dtype)
        res = fit(model, x_tr, ds.labels[fold.train], x_va, ds.labels[fold.val], tcfg,
                              progress=_progress_printer(f"fold {f}"))
        ck = Checkpoint.from_model(
            model,
            epoch=res.best_epoch,
            val_balanced_acc=res.best_val_balanced_acc,
            seed=args.seed,
            fold=f,
            k=plan.k,
            split_seed=args.seed,
            val_fraction=args.val_fraction,
            manifest_hash=ds.manifest_hash(),
            input_stats=stats.to_dict(),
            profile=prof.to_dict(),
            classes=list(dataset.CLASSES),
            train_config={"epochs": tcfg.epochs, "batch_size": tcfg.batch_size, "lr": tcfg.lr,
                          "betas": list(tcfg.betas), "phase_augment": tcfg.phase_augment},
        )
        fdir = out / f"fold{f}"
        save_checkpoint(ck, fdir / "checkpoint")
        ckpt_io.write_history(res.history, fdir / "history.csv")
        if args.figures:
            from . import plotting

            plotting.plot_history(res.history, fdir / "history.png")
        print(fdir / "checkpoint")
    return EXIT_OK


def cmd_eval(args) -> int:
    ckpt, ds = _load_pair(args)
    idx = _eval_subset(ckpt, ds, args.fold, args.subset)
    x, _ = condition_inputs(ds.planes[idx], ckpt.input_stats)
    model = ckpt.build_model(PRECISIONS[args.precision])
    preds = model.predict_proba(x).argmax(axis=1)
    rep = reports.EvalReport.from_predictions(
        preds, ds.labels[idx], ds.snr_db[idx], dataset.CLASSES, dataset.SNR_GRID,
        checkpoint=str(args.checkpoint), subset=args.subset,
        fold=ckpt.metadata.get("fold") if args.fold is None else args.fold,
        manifest_hash=ds.manifest_hash(),
    )
    out = Path(args.out)
    _echo_config(args, out)
    reports.emit_reports(rep, out, figures=args.figures)
    s = rep.summary()
    print(f"balanced_accuracy {s['balanced_accuracy']:.4f}  accuracy {s['accuracy']:.4f}  n={s['n_samples']}")
    return EXIT_OK


def cmd_embed(args) -> int:
    ckpt, ds = _load_pair(args)
    idx = _eval_subset(ckpt, ds, args.fold, args.subset)
    if args.min_snr is not None:
        idx = idx[ds.snr_db[idx] >= args.min_snr]
    if args.max_samples and len(idx) > args.max_samples:
        rng = np.random.default_rng(args.seed)
        idx = np.sort(rng.choice(idx, args.max_samples, replace=False))
    x, _ = condition_inputs(ds.planes[idx], ckpt.input_stats)
    model = ckpt.build_model(PRECISIONS[args.precision])
    emb = reports.extract_embeddings(model, x, ds.labels[idx], ds.snr_db[idx], idx)
    res = tsne.run_tsne(emb.matrix, args.perplexity, args.iters, args.seed)
    preds = model.predict_proba(x).argmax(axis=1)
    rep = reports.EvalReport.from_predictions(
        preds, emb.labels, emb.snr_db, dataset.CLASSES, dataset.SNR_GRID,
        checkpoint=str(args.checkpoint), perplexity=args.perplexity, iterations=args.iters,
        tsne_kl={str(k): v for k, v in res.kl.items()},
    )
    rep.embedding, rep.points = emb, res.points
    out = Path(args.out)
    _echo_config(args, out)
    reports.emit_reports(rep, out, figures=args.figures)
    print(out / reports.EMBEDDINGS_FILE)
    return EXIT_OK


def cmd_stream(args) -> int:
    scenario = stream.load_scenario(args.scenario)
    if args.profile and scenario.profile.to_dict() != synth.PROFILES[args.profile].to_dict():
        raise UsageError(f"--profile {args.profile} does not match the scenario profile")
    ckpt = load_checkpoint(args.checkpoint)
    reps = stream.run_pipeline(scenario, ckpt, seed=args.seed, threshold=args.threshold)
    truth = stream.frame_truth(scenario, args.seed)
    summary = stream.summarize_run(reps, truth, scenario)
    summary["threshold"] = args.threshold
    out = Path(args.out)
    _echo_config(args, out)
    stream.write_reports_jsonl(reps, out / "reports.jsonl")
    # latency is wall-clock; keep it out of the reproducible summary file
    latency = summary.pop("latency", None)
    reports.write_json(summary, out / "stream_summary.json")
    if latency is not None:
        reports.write_json(latency, out / "latency.json")
    stream.write_field_table_csv(summary, out / "field_table.csv")
    if args.figures and summary["cells"]:
        from . import plotting

        plotting.plot_field_table(stream.field_table(summary), out / "field_table.png")
    if latency is not None:
        print(f"frames {summary['n_frames']}  mean realtime factor {latency['mean_realtime_factor']:.3f}")
    return EXIT_OK


# parser ----------------------------------------------------------------------
def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    g = common.add_argument_group("global options")
    g.add_argument("--seed", type=int, default=0, help="master random seed (default 0)")
    g.add_argument("--profile", choices=sorted(synth.PROFILES), default=None,
                   help="scale profile; synth defaults to desk, other commands check it against their inputs")
    g.add_argument("--out", type=Path, default=Path("out"), help="output directory (default ./out)")
    g.add_argument("--precision", choices=sorted(PRECISIONS), default="f32", help="network arithmetic (default f32)")
    g.add_argument("--no-figures", dest="figures", action="store_false", help="skip PNG rendering")
    g.add_argument("-v", "--verbose", action="store_true", help="log progress details")

    p = argparse.ArgumentParser(prog="dronerf", description="Drone RF classification from IQ spectrograms.")
    p.add_argument("--version", action="version", version=f"dronerf {__version__}")
    sub = p.add_subparsers(dest="command", required=True, metavar="COMMAND")

    s = sub.add_parser("synth", parents=[common], help="generate a labelled spectrogram dataset")
    s.add_argument("--per-class", type=int, default=None, help="samples per drone class (default: profile counts)")
    s.add_argument("--noise-count", type=int, default=None, help="Noise-class samples (default 4x per-class)")
    s.set_defaults(func=cmd_synth)

    t = sub.add_parser("train", parents=[common], help="k-fold training with best-on-validation checkpoints")
    t.add_argument("--dataset", type=Path, required=True, help="dataset directory from synth")
    t.add_argument("--variant", choices=sorted(STAGE_DEPTHS), default="vgg11", help="VGG-BN depth (default vgg11)")
    t.add_argument("--widths", type=int, nargs="+", default=None, help="stage widths (default by profile)")
    t.add_argument("--folds", type=int, default=5, help="number of folds k (default 5)")
    t.add_argument("--fold-index", default="all", help="folds to train: 'all' or comma list, e.g. 0,2")
    t.add_argument("--val-fraction", type=float, default=0.2, help="validation share of each training part")
    t.add_argument("--epochs", type=int, default=200, help="training epochs (default 200)")
    t.add_argument("--batch-size", type=int, default=8, help="mini-batch size (default 8)")
    t.add_argument("--lr", type=float, default=0.005, help="Adam learning rate (default 0.005)")
    t.add_argument("--phase-augment", action="store_true",
                   help="rotate each training sample by a random carrier phase")
    t.set_defaults(func=cmd_train)

    for name, func, hlp in (("eval", cmd_eval, "confusion matrix, SNR curve and summary"),
                            ("embed", cmd_embed, "dense-layer embeddings projected with t-SNE")):
        e = sub.add_parser(name, parents=[common], help=hlp)
        e.add_argument("--checkpoint", type=Path, required=True, help="checkpoint directory")
        e.add_argument("--dataset", type=Path, required=True, help="dataset directory")
        e.add_argument("--fold", type=int, default=None, help="fold to evaluate (default: the checkpoint's)")
        e.add_argument("--subset", choices=("test", "val", "train", "all"), default="test",
                       help="split part to evaluate (default test)")
        if name == "embed":
            e.add_argument("--perplexity", type=float, default=30.0, help="t-SNE perplexity (default 30)")
            e.add_argument("--iters", type=int, default=1000, help="t-SNE iterations (default 1000)")
            e.add_argument("--min-snr", type=float, default=None, help="keep samples at or above this SNR (dB)")
            e.add_argument("--max-samples", type=int, default=None, help="random subsample size")
        e.set_defaults(func=func)

    r = sub.add_parser("stream", parents=[common], help="simulated real-time detection run")
    r.add_argument("--scenario", type=Path, required=True, help="scenario JSON file")
    r.add_argument("--checkpoint", type=Path, required=True, help="checkpoint directory")
    r.add_argument("--threshold", type=float, default=stream.DEFAULT_THRESHOLD,
                   help="posterior a drone class needs for a Drone decision (default 0.5)")
    r.set_defaults(func=cmd_stream)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:  # argparse: --help is 0, usage errors are 2
        return int(e.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(name)s: %(message)s")
    try:
        return args.func(args)
    except DroneRFError as e:
        if isinstance(e, UsageError):
            parser.print_usage(sys.stderr)
        print(f"dronerf {args.command}: {type(e).__name__}: {e}", file=sys.stderr)
        return e.exit_code
    except (FileNotFoundError, NotADirectoryError, PermissionError) as e:
        print(f"dronerf {args.command}: {e}", file=sys.stderr)
        return EXIT_DATA
    except Exception as e:  # noqa: BLE001 - last-resort runtime failure
        log.debug("unhandled", exc_info=True)
        print(f"dronerf {args.command}: runtime failure: {type(e).__name__}: {e}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
