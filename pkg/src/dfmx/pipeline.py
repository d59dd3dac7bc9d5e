"""End-to-end experiment stages and the run-directory layout.

::

    <run>/config.ini                      canonical copy of the experiment config
    <run>/data/dataset.bin                dataset cache
    <run>/models/<id>.ckpt                checkpoints, <id>_history.csv beside them
    <run>/dfm/<id>/class_XXX.dfm|.json    DFMs of model <id>, stats.csv beside them
    <run>/eval/corruption_<id>.csv        corruption report against the baseline
    <run>/eval/attack_<id>.csv|.svg       attack accuracies and curve
    <run>/report/summary.csv|.txt         consolidated table

Each stage takes its inputs from disk, so stages can be re-run in isolation.
"""

from __future__ import annotations

from pathlib import Path
from typing import Callable, Sequence

from . import reports, storage
from .attacks import AttackReport, attack_accuracy
from .augment import DfmxAugmenter, DfmxConfig, SpatialAugmenter, spatial_augment
from .config import ExperimentConfig, dump_config, load_config
from .corruptions import CeTable, CorruptionReport, corruption_report
from .datasets import DatasetBundle, generate_synthetic, load_cifar10
from .dfm import DominantFrequencyMap, compute_all_dfms
from .model import ClassifierModel, TrainHistory, small_cnn, train
from .seeding import derive_seed

Log = Callable[[str], None]
BASELINE_ID = "baseline"


def _quiet(_: str) -> None:
    pass


def model_id(x_percent: float, spatial: bool = False) -> str:
    parts = []
    if x_percent > 0:
        parts.append(f"dfm-{x_percent:g}")
    if spatial:
        parts.append("spatial")
    return "+".join(parts) or BASELINE_ID


class RunLayout:
    def __init__(self, root: str | Path):
        self.root = Path(root)

    @property
    def config(self) -> Path:
        return self.root / "config.ini"

    @property
    def dataset(self) -> Path:
        return self.root / "data" / "dataset.bin"

    def checkpoint(self, mid: str) -> Path:
        return self.root / "models" / f"{mid}.ckpt"

    def history(self, mid: str) -> Path:
        return self.root / "models" / f"{mid}_history.csv"

    def dfm_dir(self, mid: str) -> Path:
        return self.root / "dfm" / mid

    def corruption_csv(self, mid: str) -> Path:
        return self.root / "eval" / f"corruption_{mid}.csv"

    def attack_csv(self, mid: str) -> Path:
        return self.root / "eval" / f"attack_{mid}.csv"

    def attack_svg(self, mid: str) -> Path:
        return self.root / "eval" / f"attack_{mid}.svg"

    @property
    def report_dir(self) -> Path:
        return self.root / "report"

    def model_ids(self) -> list[str]:
        return sorted(p.stem for p in (self.root / "models").glob("*.ckpt"))


def _ensure_parent(path: Path) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    return path


# --- stages -----------------------------------------------------------------------


def make_dataset(cfg: ExperimentConfig) -> DatasetBundle:
    if cfg.source == "cifar10":
        cfg.check_paths()
        return load_cifar10(cfg.cifar10_dir, cfg.val_fraction, seed=derive_seed(cfg.seed, "split"))
    return generate_synthetic(cfg.synthetic)


def train_stage(cfg: ExperimentConfig, bundle: DatasetBundle,
                dfms: Sequence[DominantFrequencyMap] | None = None, x_percent: float = 0.0,
                spatial: bool = False, log: Log = _quiet) -> tuple[ClassifierModel, TrainHistory]:
    """Train one SmallCNN; every model of a run starts from the same initial weights."""
    mid = model_id(x_percent if dfms else 0.0, spatial)
    net = small_cnn(bundle.train.image_shape, bundle.num_classes,
                    seed=derive_seed(cfg.seed, "init"), model_id=mid)
    hook = None
    if dfms and x_percent > 0:
        comp = cfg.composition if spatial else "none"
        hook = DfmxAugmenter(DfmxConfig(x_percent, list(dfms), seed=derive_seed(cfg.seed, "dfmx"),
                                        composition=comp,
                                        secondary=spatial_augment if spatial else None))
    elif spatial:
        hook = SpatialAugmenter(seed=derive_seed(cfg.seed, "spatial"))
    log(f"training {mid}")
    return train(net, bundle.train, bundle.val, cfg.train, augment=hook, log=log)


def dfm_stage(cfg: ExperimentConfig, model: ClassifierModel, bundle: DatasetBundle,
              log: Log = _quiet) -> list[DominantFrequencyMap]:
    log(f"computing DFMs of {model.model_id}")
    return compute_all_dfms(model, bundle.test, cfg.dfm)


def corruption_stage(cfg: ExperimentConfig, model: ClassifierModel, baseline: ClassifierModel,
                     bundle: DatasetBundle, baseline_ce: CeTable | None = None) -> CorruptionReport:
    test = bundle.test
    return corruption_report(model, baseline, test.images, test.labels, cfg.corruption_kinds,
                             severities=cfg.severities, seed=derive_seed(cfg.seed, "corruption"),
                             baseline_ce=baseline_ce)


def attack_stage(cfg: ExperimentConfig, model: ClassifierModel, bundle: DatasetBundle,
                 attacks: Sequence[str] | None = None,
                 epsilons: Sequence[float] | None = None) -> AttackReport:
    test = bundle.test
    return attack_accuracy(model, test.images, test.labels,
                           attacks=tuple(attacks or cfg.attacks),
                           epsilons=tuple(epsilons if epsilons is not None else cfg.epsilons),
                           seed=derive_seed(cfg.seed, "attack"), steps=cfg.attack_steps,
                           init=cfg.attack_init)


# --- persistence helpers -----------------------------------------------------------


def save_model(layout: RunLayout, model: ClassifierModel, history: TrainHistory | None) -> None:
    storage.save_checkpoint(model, _ensure_parent(layout.checkpoint(model.model_id)))
    if history is not None:
        reports.write_history(history, layout.history(model.model_id))


def save_dfm_set(directory: Path, dfms: Sequence[DominantFrequencyMap]) -> None:
    storage.save_dfms(dfms, directory)
    reports.write_dfm_stats(dfms, directory / "stats.csv")


def save_attack(layout: RunLayout, report: AttackReport) -> None:
    reports.write_attack(report, _ensure_parent(layout.attack_csv(report.model_id)))
    layout.attack_svg(report.model_id).write_text(reports.attack_curve_svg(report))


def build_report(run_dir: str | Path, cfg: ExperimentConfig | None = None) -> list[reports.SummaryRow]:
    """Write ``report/summary.csv`` and ``summary.txt``.

    Models without a corruption report are evaluated against the baseline
    first, which needs the run's config and dataset cache.
    """
    layout = RunLayout(run_dir)
    ids = layout.model_ids()
    if not ids:
        raise FileNotFoundError(f"no checkpoints under {layout.root / 'models'}")
    missing = [m for m in ids if not layout.corruption_csv(m).exists()]
    if missing:
        cfg = cfg or load_config(layout.config)
        if BASELINE_ID not in ids:
            raise FileNotFoundError(f"{layout.checkpoint(BASELINE_ID)} is required to score {missing}")
        bundle = storage.load_dataset(layout.dataset)
        baseline = storage.load_checkpoint(layout.checkpoint(BASELINE_ID))
        base_ce = None
        for mid in sorted(missing, key=lambda m: m != BASELINE_ID):
            model = baseline if mid == BASELINE_ID else storage.load_checkpoint(layout.checkpoint(mid))
            rep = corruption_stage(cfg, model, baseline, bundle, baseline_ce=base_ce)
            base_ce = rep.baseline_ce
            reports.write_corruption(rep, _ensure_parent(layout.corruption_csv(mid)))
    rows = [reports.summary_from_corruption_csv(layout.corruption_csv(m)) for m in ids]
    layout.report_dir.mkdir(parents=True, exist_ok=True)
    reports.write_summary(rows, layout.report_dir / "summary.csv")
    (layout.report_dir / "summary.txt").write_text(reports.format_summary(rows) + "\n")
    return rows


def run_pipeline(cfg: ExperimentConfig, run_dir: str | Path | None = None,
                 log: Log = _quiet) -> RunLayout:
    """Data, baseline, DFMs, DFM-X model, corruption and attack evaluation, report."""
    layout = RunLayout(run_dir if run_dir is not None else cfg.run_dir())
    layout.root.mkdir(parents=True, exist_ok=True)
    layout.config.write_text(dump_config(cfg))

    log("generating data")
    bundle = make_dataset(cfg)
    storage.save_dataset(bundle, _ensure_parent(layout.dataset))

    baseline, hist = train_stage(cfg, bundle, log=log)
    save_model(layout, baseline, hist)
    base_dfms = dfm_stage(cfg, baseline, bundle, log=log)
    save_dfm_set(layout.dfm_dir(baseline.model_id), base_dfms)
    models = [baseline]
    if cfg.x_percent > 0 or cfg.spatial_aug:
        aug, hist = train_stage(cfg, bundle, base_dfms, cfg.x_percent, cfg.spatial_aug, log=log)
        save_model(layout, aug, hist)
        save_dfm_set(layout.dfm_dir(aug.model_id), dfm_stage(cfg, aug, bundle, log=log))
        models.append(aug)

    log("corruption evaluation")
    base_rep = corruption_stage(cfg, baseline, baseline, bundle)
    for m in models:
        rep = base_rep if m is baseline else corruption_stage(cfg, m, baseline, bundle, base_rep.ce)
        reports.write_corruption(rep, _ensure_parent(layout.corruption_csv(m.model_id)))
    log("attack evaluation")
    for m in models:
        save_attack(layout, attack_stage(cfg, m, bundle))
    build_report(layout.root, cfg)
    return layout


def csv_files(run_dir: str | Path) -> list[Path]:
    root = Path(run_dir)
    return sorted(p.relative_to(root) for p in root.rglob("*.csv"))
