"""Command-line entry point (``sil``)."""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

from .pipeline.config import ConfigError

EXIT_OK, EXIT_CONFIG, EXIT_DATA, EXIT_NUMERIC = 0, 2, 3, 4
_THREAD_VARS = ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS")

log = logging.getLogger("sil")


def _data_dir(args) -> Path:
    if getattr(args, "dataset", None):
        return Path(args.dataset)
    env = os.environ.get("SIL_DATA_DIR")
    if env:
        return Path(env)
    return Path(args.out_dir) / "dataset"


def _config(args):
    from .pipeline.config import ExperimentConfig, load_config
    from .pipeline.experiment import with_seed

    cfg = load_config(args.config) if args.config else ExperimentConfig()
    if args.seed is not None:
        cfg = with_seed(cfg, args.seed)
    cfg.dataset = str(_data_dir(args)) if (getattr(args, "dataset", None) or not cfg.dataset) else cfg.dataset
    return cfg.validate()


def _out(args) -> Path:
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _progress(entry):
    log.info("epoch %3d  lr %.5f  loss %.5f", entry["epoch"], entry["lr"], entry["loss"])


def cmd_simulate(args) -> int:
    from dataclasses import replace

    from .pipeline.dataset import generate_dataset

    cfg = _config(args)
    gen = cfg.generation
    overrides = {k: v for k, v in (("count", args.count), ("test_count", args.test_count), ("size", args.size),
                                   ("pad_factor", args.pad_factor), ("digits", args.digits), ("trim", args.trim))
                 if v is not None}
    gen = replace(gen, **overrides)
    gen.validate()
    manifest = generate_dataset(gen, cfg.dataset, workers=args.threads)
    print(f"dataset\t{cfg.dataset}")
    print(f"samples\t{manifest.count}\ttrain\t{len(manifest.train_ids)}\ttest\t{len(manifest.test_ids)}")
    print(f"pad_factor\t{manifest.pad_factor}\tmeasured_F\t{manifest.measured_F:.3f}")
    return EXIT_OK


def cmd_analyze(args) -> int:
    import numpy as np

    from .pipeline.formats import load_pattern
    from .sampling import sampling_factor, sampling_table

    if args.input:
        pats = [load_pattern(p) for p in args.input]
        F = float(np.mean([sampling_factor(p) for p in pats]))
        pitch = args.pitch if args.pitch is not None else pats[0].pixel_pitch_um
    else:
        F, pitch = args.F, args.pitch if args.pitch is not None else 2.5
    spec = sampling_table(F, pitch, args.factors)
    print(spec.format_table())
    if args.json:
        Path(args.json).write_text(json.dumps(spec.to_dict(), indent=1) + "\n")
    return EXIT_OK


def cmd_bin(args) -> int:
    from .pipeline.formats import load_pattern, save_pattern
    from .sampling import bin_pattern

    out = bin_pattern(load_pattern(args.input), args.factor)
    save_pattern(args.output, out)
    print(f"{args.output}\t{out.size}x{out.size}\tpitch_index\t{out.pitch_index}")
    return EXIT_OK


def cmd_interp(args) -> int:
    import numpy as np

    from .nn.checkpoint import load_checkpoint
    from .optics import SpecklePattern
    from .pipeline.evaluate import internet_factor
    from .pipeline.formats import load_pattern, save_pattern
    from .interp import upsample_to

    pat = load_pattern(args.input)
    n = args.factor
    if n < 1 or n & (n - 1):
        raise ValueError(f"--factor must be a power of two, got {n}")
    target = pat.pitch_index - (n.bit_length() - 1) if pat.pitch_index >= 0 else 0
    if args.method == "internet":
        if not args.checkpoint:
            raise ConfigError("--method internet needs --checkpoint")
        model, _ = load_checkpoint(args.checkpoint)
        if internet_factor(model) != n:
            raise ConfigError(f"checkpoint interpolates by {internet_factor(model)}, not {n}")
        x = pat.intensity / pat.intensity.mean()
        out = SpecklePattern(np.maximum(model.predict(x[None])[0], 0.0), pat.pixel_pitch_um / n, max(target, 0))
    else:
        if pat.pitch_index < 0 or target < 0:
            from .interp import upsample

            out = SpecklePattern(np.maximum(upsample(pat.intensity, n, args.method), 0.0), pat.pixel_pitch_um / n, -1)
        else:
            out = upsample_to(pat, target, args.method)
    save_pattern(args.output, out)
    print(f"{args.output}\t{out.size}x{out.size}\tmethod\t{args.method}")
    return EXIT_OK


def cmd_train_specklenet(args) -> int:
    from dataclasses import replace

    from .pipeline.train import train_specklenet

    cfg = _config(args)
    if args.epochs:
        cfg.specklenet_training = replace(cfg.specklenet_training, epochs=args.epochs)
    out = _out(args) / "specklenet.sil"
    res = train_specklenet(cfg, out, progress=_progress)
    print(f"checkpoint\t{out}\tfinal_loss\t{res.final_loss:.6f}")
    return EXIT_OK


def cmd_train_internet(args) -> int:
    from dataclasses import replace

    from .pipeline.train import train_internet

    cfg = _config(args)
    for key in ("variant", "loss", "pitch_index"):
        if getattr(args, key) is not None:
            setattr(cfg, key, getattr(args, key))
    if args.epochs:
        cfg.internet_training = replace(cfg.internet_training, epochs=args.epochs)
    cfg.validate()
    out = _out(args) / f"internet{cfg.variant}_{cfg.loss}_d{cfg.pitch_index}.sil"
    res = train_internet(cfg, out, progress=_progress)
    if "flag" in res.metadata:
        print(f"warning\t{res.metadata['flag']}")
    print(f"checkpoint\t{out}\tfinal_loss\t{res.final_loss:.6f}")
    return EXIT_OK


def cmd_eval(args) -> int:
    from .nn.checkpoint import load_checkpoint
    from .pipeline.dataset import load_manifest
    from .pipeline.evaluate import evaluate_workflow
    from .pipeline.report import format_table, write_report

    cfg = _config(args)
    manifest = load_manifest(cfg.dataset)
    internet = load_checkpoint(args.internet)[0] if args.internet else None
    specklenet = load_checkpoint(args.specklenet)[0] if args.specklenet else None
    methods = args.methods or (["nearest", "bilinear", "bicubic"] + (["internet"] if internet else []))
    examples: dict = {}
    reports = evaluate_workflow(internet, specklenet, manifest, methods, threshold=cfg.success_threshold,
                                examples=examples)
    paths = write_report(reports, _out(args), examples, figures=not args.no_figures)
    print(format_table(reports), end="")
    for key, p in sorted(paths.items()):
        print(f"wrote\t{key}\t{p}")
    return EXIT_OK


def cmd_report(args) -> int:
    from .pipeline.report import format_table, reports_from_json, write_report

    reports = reports_from_json(Path(args.input).read_text())
    paths = write_report(reports, _out(args), figures=not args.no_figures)
    print(format_table(reports), end="")
    for key, p in sorted(paths.items()):
        print(f"wrote\t{key}\t{p}")
    return EXIT_OK


def cmd_run(args) -> int:
    from .pipeline.experiment import run_experiment
    from .pipeline.report import format_table

    cfg = _config(args)
    res = run_experiment(cfg, _out(args), workers=args.threads, figures=not args.no_figures, progress=_progress)
    print(format_table(res.reports), end="")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="sil", description="Speckle interpolation laboratory")
    p.add_argument("--config", help="JSON experiment config")
    p.add_argument("--seed", type=int, help="seed for generation and training")
    p.add_argument("--threads", type=int, default=1, help="worker threads (training stays deterministic only at 1)")
    p.add_argument("--out-dir", default="sil-out", help="output directory")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("simulate", help="generate a speckle/digit dataset")
    s.add_argument("--dataset", help="dataset root (default $SIL_DATA_DIR or OUT_DIR/dataset)")
    s.add_argument("--count", type=int)
    s.add_argument("--test-count", type=int)
    s.add_argument("--size", type=int)
    s.add_argument("--pad-factor", type=int)
    s.add_argument("--digits", help="MNIST IDX directory, 'mlxtend' or 'synthetic'")
    s.add_argument("--trim", type=int)
    s.set_defaults(func=cmd_simulate)

    s = sub.add_parser("analyze", help="sampling factor, grain size and pitch ladder")
    s.add_argument("input", nargs="*", help="SPK1 rasters to measure F from")
    s.add_argument("--F", type=float, default=17.0, help="sampling factor when no input is given")
    s.add_argument("--pitch", type=float, help="pixel pitch in um")
    s.add_argument("--factors", type=int, nargs="+", default=[1, 2, 4, 8, 16, 32, 64, 128])
    s.add_argument("--json", help="also write the table as JSON")
    s.set_defaults(func=cmd_analyze)

    s = sub.add_parser("bin", help="pixel-bin an SPK1 raster")
    s.add_argument("input")
    s.add_argument("output")
    s.add_argument("--factor", type=int, required=True)
    s.set_defaults(func=cmd_bin)

    s = sub.add_parser("interp", help="up-sample an SPK1 raster")
    s.add_argument("input")
    s.add_argument("output")
    s.add_argument("--method", choices=["nearest", "bilinear", "bicubic", "internet"], required=True)
    s.add_argument("--factor", type=int, required=True)
    s.add_argument("--checkpoint", help="InterNet checkpoint for --method internet")
    s.set_defaults(func=cmd_interp)

    for name, func in (("train-specklenet", cmd_train_specklenet), ("train-internet", cmd_train_internet)):
        s = sub.add_parser(name)
        s.add_argument("--dataset")
        s.add_argument("--epochs", type=int)
        if name == "train-internet":
            s.add_argument("--variant", type=int, choices=[1, 2])
            s.add_argument("--loss", choices=["npcc", "comloss"])
            s.add_argument("--pitch-index", type=int)
        s.set_defaults(func=func)

    s = sub.add_parser("eval", help="evaluate interpolators and reconstruction on the test split")
    s.add_argument("--dataset")
    s.add_argument("--internet")
    s.add_argument("--specklenet")
    s.add_argument("--methods", nargs="+", choices=["nearest", "bilinear", "bicubic", "internet"])
    s.add_argument("--no-figures", action="store_true")
    s.set_defaults(func=cmd_eval)

    s = sub.add_parser("report", help="render a report JSON as table, JSON and figures")
    s.add_argument("input")
    s.add_argument("--no-figures", action="store_true")
    s.set_defaults(func=cmd_report)

    s = sub.add_parser("run", help="generate, train, evaluate and report in one go")
    s.add_argument("--dataset")
    s.add_argument("--no-figures", action="store_true")
    s.set_defaults(func=cmd_run)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if args.threads < 1:
        print("error: --threads must be >= 1", file=sys.stderr)
        return EXIT_CONFIG
    for var in _THREAD_VARS:
        os.environ.setdefault(var, str(args.threads))

    from .errors import FormatError, NumericalFailure
    from .pipeline.dataset import DataError

    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except NumericalFailure as exc:
        print(f"numerical failure in epoch {exc.epoch}: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (DataError, FormatError, FileNotFoundError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
