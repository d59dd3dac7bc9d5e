"""``dfmx`` command line.

Run ``dfmx <command> --help`` for the flags of each command. Outputs default to
a run directory under ``$DFMX_OUTPUT_ROOT`` (``./runs`` when unset) named after
``[run] name`` in the config.
"""

from __future__ import annotations

import argparse
import dataclasses
import sys
from pathlib import Path
from typing import Sequence

import numpy as np

from . import pipeline, reports, storage
from .attacks import AttackConfig
from .augment import pick_foreign_dfm
from .config import ExperimentConfig, dump_config, load_config
from .corruptions import ALL_KINDS, SEVERITIES, CorruptionKind
from .datasets import DatasetFormatError, GenerationMarginError
from .dfm import DfmError
from .pipeline import RunLayout
from .reports import ReportFormatError
from .seeding import rng as derived_rng
from .spectral import filter_image
from .storage import StorageError


class CliError(Exception):
    pass


def _log(msg: str) -> None:
    print(msg, file=sys.stderr, flush=True)


def _config(path: str | None) -> ExperimentConfig:
    return load_config(path) if path else ExperimentConfig()


def _existing(path: str | Path, what: str) -> Path:
    p = Path(path)
    if not p.exists():
        raise CliError(f"{what} {p} does not exist")
    return p


def _run_dir(args, cfg: ExperimentConfig) -> Path:
    return Path(args.out) if getattr(args, "out", None) else cfg.run_dir()


def _step_text(step: float) -> str:
    return f"{step * 255:.6g}/255"


# --- commands -----------------------------------------------------------------------


def cmd_gen_data(args) -> None:
    cfg = _config(args.spec)
    out = Path(args.out) if args.out else cfg.run_dir() / "data"
    out.mkdir(parents=True, exist_ok=True)
    bundle = pipeline.make_dataset(cfg)
    path = out / "dataset.bin"
    storage.save_dataset(bundle, path)
    sizes = ", ".join(f"{s}={len(getattr(bundle, s))}" for s in ("train", "val", "test"))
    print(f"wrote {path} ({sizes})")


def cmd_train(args) -> None:
    cfg = _config(args.config)
    if (args.dfmx is None) != (args.x is None):
        raise CliError("--dfmx and --x must be given together")
    if args.x is not None and not 0 < args.x <= 100:
        raise CliError("--x must lie in (0, 100]")
    layout = RunLayout(_run_dir(args, cfg))
    layout.root.mkdir(parents=True, exist_ok=True)
    if not layout.config.exists():
        layout.config.write_text(dump_config(cfg))
    if args.data:
        bundle = storage.load_dataset(_existing(args.data, "dataset"))
    elif layout.dataset.exists():
        bundle = storage.load_dataset(layout.dataset)
    else:
        bundle = pipeline.make_dataset(cfg)
        layout.dataset.parent.mkdir(parents=True, exist_ok=True)
        storage.save_dataset(bundle, layout.dataset)
    dfms = storage.load_dfms(_existing(args.dfmx, "DFM directory")) if args.dfmx else None
    model, history = pipeline.train_stage(cfg, bundle, dfms, args.x or 0.0, args.spatial_aug,
                                          log=_log if args.verbose else pipeline._quiet)
    pipeline.save_model(layout, model, history)
    best = history.best_epoch
    print(f"wrote {layout.checkpoint(model.model_id)} (best epoch {best}, "
          f"val accuracy {history.val_accuracy[best]:.4f})")


def cmd_dfm_compute(args) -> None:
    cfg = _config(args.config)
    model = storage.load_checkpoint(_existing(args.checkpoint, "checkpoint"))
    bundle = storage.load_dataset(_existing(args.data, "dataset"))
    out = Path(args.out) if args.out else cfg.run_dir() / "dfm" / model.model_id
    dfms = pipeline.dfm_stage(cfg, model, bundle)
    pipeline.save_dfm_set(out, dfms)
    counts = " ".join(str(d.frequency_count) for d in dfms)
    print(f"wrote {len(dfms)} DFMs to {out} (frequency counts {counts})")


def cmd_augment_preview(args) -> None:
    bundle = storage.load_dataset(_existing(args.data, "dataset"))
    dfms = storage.load_dfms(_existing(args.dfm_dir, "DFM directory"))
    train = bundle.train
    n = min(args.n, len(train))
    idx = np.sort(derived_rng(args.seed, "preview").choice(len(train), size=n, replace=False))
    pick = derived_rng(args.seed, "preview-dfm")
    before = train.images[idx]
    after = np.empty_like(before)
    for j, i in enumerate(idx):
        dfm = pick_foreign_dfm(int(train.labels[i]), dfms, pick)
        after[j] = filter_image(before[j], dfm.mask)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    ext = "pgm" if before.shape[1] == 1 else "ppm"
    reports.write_pnm(reports.image_grid([before]), out / f"before.{ext}")
    reports.write_pnm(reports.image_grid([after]), out / f"after.{ext}")
    reports.write_pnm(reports.image_grid([before, after]), out / f"preview.{ext}")
    print(f"wrote {n} before/after pairs to {out}")


def cmd_eval_corruption(args) -> None:
    cfg = _config(args.config)
    model = storage.load_checkpoint(_existing(args.checkpoint, "checkpoint"))
    baseline = storage.load_checkpoint(_existing(args.baseline, "baseline checkpoint"))
    bundle = storage.load_dataset(_existing(args.data, "dataset"))
    if args.kinds:
        cfg = _replace(cfg, corruption_kinds=tuple(CorruptionKind(k) for k in args.kinds))
    if args.severities:
        cfg = _replace(cfg, severities=tuple(args.severities))
    report = pipeline.corruption_stage(cfg, model, baseline, bundle)
    out = Path(args.out) if args.out else cfg.run_dir() / "eval" / f"corruption_{model.model_id}.csv"
    out.parent.mkdir(parents=True, exist_ok=True)
    reports.write_corruption(report, out)
    print(f"{model.model_id} vs {baseline.model_id}: SA {report.sa:.4f} RA {report.ra:.4f} "
          f"mCE {report.mce:.2f} rCE {report.rce:.2f}")
    print(f"wrote {out}")


def cmd_eval_attack(args) -> None:
    cfg = _config(args.config)
    model = storage.load_checkpoint(_existing(args.checkpoint, "checkpoint"))
    bundle = storage.load_dataset(_existing(args.data, "dataset"))
    eps_255 = tuple(args.eps) if args.eps else cfg.eps_255
    attacks = tuple(args.attack) if args.attack else cfg.attacks
    steps = args.steps if args.steps is not None else cfg.attack_steps
    init = args.init or cfg.attack_init
    cfg = _replace(cfg, eps_255=eps_255, attacks=attacks, attack_steps=steps, attack_init=init)
    print(f"attack config: model={model.model_id} attacks={','.join(attacks)} steps={steps} init={init}")
    for e in eps_255:
        if e > 0 and "pgd" in attacks:
            step = AttackConfig(e / 255, steps, init=init).step_size
            print(f"  eps {e:g}/255: pgd step size {_step_text(step)}")
        else:
            print(f"  eps {e:g}/255")
    report = pipeline.attack_stage(cfg, model, bundle)
    out_dir = Path(args.out) if args.out else cfg.run_dir() / "eval"
    out_dir.mkdir(parents=True, exist_ok=True)
    csv_path = out_dir / f"attack_{model.model_id}.csv"
    reports.write_attack(report, csv_path)
    (out_dir / f"attack_{model.model_id}.svg").write_text(reports.attack_curve_svg(report))
    for name, accs in report.accuracy.items():
        cells = " ".join(f"{e:g}:{a:.4f}" for e, a in zip(eps_255, accs))
        print(f"  {name} accuracy {cells}")
    print(f"wrote {csv_path}")


def cmd_report(args) -> None:
    run_dir = _existing(args.run_dir, "run directory")
    rows = pipeline.build_report(run_dir)
    print(reports.format_summary(rows))


def cmd_run(args) -> None:
    cfg = _config(args.config)
    layout = pipeline.run_pipeline(cfg, _run_dir(args, cfg), log=_log)
    print((layout.report_dir / "summary.txt").read_text(), end="")
    print(f"run directory {layout.root}")


def _replace(cfg: ExperimentConfig, **changes) -> ExperimentConfig:
    return dataclasses.replace(cfg, **changes)


# --- parser ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="dfmx", description="Dominant frequency maps, DFM-X training and robustness evaluation.")
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen-data", help="render the synthetic dataset (or cache CIFAR-10)")
    g.add_argument("--spec", help="config file; its [synthetic] and [data] sections are used")
    g.add_argument("--out", help="output directory (default <run>/data)")
    g.set_defaults(func=cmd_gen_data)

    t = sub.add_parser("train", help="train a SmallCNN, optionally with DFM-X")
    t.add_argument("--config")
    t.add_argument("--data", help="dataset cache (default <run>/data/dataset.bin)")
    t.add_argument("--dfmx", metavar="DFM_DIR", help="directory of class DFMs for DFM-X")
    t.add_argument("--x", type=float, help="percentage of images augmented per epoch")
    t.add_argument("--spatial-aug", action="store_true", help="random flip and crop every epoch")
    t.add_argument("--out", help="run directory")
    t.add_argument("-v", "--verbose", action="store_true", help="log every epoch")
    t.set_defaults(func=cmd_train)

    d = sub.add_parser("dfm", help="dominant frequency maps")
    dsub = d.add_subparsers(dest="dfm_command", required=True)
    dc = dsub.add_parser("compute", help="one DFM per class plus stats.csv")
    dc.add_argument("--checkpoint", required=True)
    dc.add_argument("--data", required=True)
    dc.add_argument("--config")
    dc.add_argument("--out", help="output directory (default <run>/dfm/<model id>)")
    dc.set_defaults(func=cmd_dfm_compute)

    a = sub.add_parser("augment", help="augmentation utilities")
    asub = a.add_subparsers(dest="augment_command", required=True)
    ap = asub.add_parser("preview", help="write before/after DFM-X images")
    ap.add_argument("--data", required=True)
    ap.add_argument("--dfm-dir", required=True)
    ap.add_argument("--n", type=int, default=8)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--out", required=True)
    ap.set_defaults(func=cmd_augment_preview)

    e = sub.add_parser("eval", help="robustness evaluation")
    esub = e.add_subparsers(dest="eval_command", required=True)
    ec = esub.add_parser("corruption", help="corruption report against a baseline")
    ec.add_argument("--checkpoint", required=True)
    ec.add_argument("--baseline", required=True, help="baseline checkpoint")
    ec.add_argument("--data", required=True)
    ec.add_argument("--config")
    ec.add_argument("--kinds", nargs="+", choices=[k.value for k in ALL_KINDS])
    ec.add_argument("--severities", nargs="+", type=int, choices=SEVERITIES)
    ec.add_argument("--out", help="CSV path")
    ec.set_defaults(func=cmd_eval_corruption)
    ea = esub.add_parser("attack", help="FGSM / PGD accuracy over an epsilon grid")
    ea.add_argument("--checkpoint", required=True)
    ea.add_argument("--data", required=True)
    ea.add_argument("--config")
    ea.add_argument("--attack", nargs="+", choices=("fgsm", "pgd"))
    ea.add_argument("--eps", nargs="+", type=float, help="epsilon numerators over 255")
    ea.add_argument("--steps", type=int)
    ea.add_argument("--init", choices=("zero", "random"))
    ea.add_argument("--out", help="output directory")
    ea.set_defaults(func=cmd_eval_attack)

    r = sub.add_parser("report", help="consolidated SA / RA / mCE / rCE table of a run")
    r.add_argument("run_dir")
    r.set_defaults(func=cmd_report)

    f = sub.add_parser("run", help="full pipeline from one config")
    f.add_argument("--config")
    f.add_argument("--out", help="run directory")
    f.set_defaults(func=cmd_run)
    return p


_EXPECTED = (CliError, ValueError, OSError, StorageError, DatasetFormatError, DfmError,
             GenerationMarginError, ReportFormatError, KeyError)


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        args.func(args)
    except _EXPECTED as exc:
        msg = " ".join(str(exc).split()) or type(exc).__name__
        print(f"dfmx: error: {msg}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
