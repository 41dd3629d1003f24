"""End-to-end training: fold loop, SSL two-step updates, and evaluation.

One training step builds the joint loss on a labeled batch (reconstruction
plus the weighted correlation term) and applies one Adam update. In the
semi-supervised mode each step first applies a reconstruction-only update on
an unlabeled half-batch (touching only encoder/decoder parameters, never the
projection head) and then the joint update on a labeled half-batch.
"""

from __future__ import annotations

import csv
import json
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from confae import metrics as M
from confae.config import TrainConfig, write_config_echo
from confae.data.dataset import Dataset, realized_target_confounder_corr
from confae.engine import Adam, Tape, Tensor
from confae.errors import ConfigError, NumericFault
from confae.model import ModelState, as_image_batch, corr_upper_bound, save_model
from confae.model.losses import loss_joint, loss_rec
from confae.train.folds import Fold, split_folds
from confae.train.predictor import Predictor, fit_predictor

VAL_EVERY = 25


@dataclass
class ConfounderMetrics:
    name: str
    corrected: bool
    r: float
    dcor2: float
    mi: float


@dataclass
class MetricsReport:
    err_kind: str                 # "rmse" for continuous targets, "auc" for binary
    err: float
    r_target: float
    confounders: list[ConfounderMetrics]
    l1: float
    ncc: float | None
    degenerate_batches: int
    n_test: int

    def __post_init__(self):
        values = [self.err, self.r_target, self.l1] + \
            [v for c in self.confounders for v in (c.r, c.dcor2, c.mi)]
        if self.ncc is not None:
            values.append(self.ncc)
        if not np.all(np.isfinite(values)):
            raise NumericFault("non-finite value in metrics report")

    def to_dict(self) -> dict:
        return {
            "err_kind": self.err_kind,
            "err": self.err,
            "r_target": self.r_target,
            "confounders": [vars(c).copy() for c in self.confounders],
            "l1": self.l1,
            "ncc": self.ncc,
            "degenerate_batches": self.degenerate_batches,
            "n_test": self.n_test,
        }


@dataclass
class FoldHistory:
    rec: list[float] = field(default_factory=list)     # per-epoch means
    corr: list[float] = field(default_factory=list)
    joint: list[float] = field(default_factory=list)
    degenerate_batches: int = 0
    skipped_unlabeled: int = 0
    skipped_labeled: int = 0
    val: list[dict] = field(default_factory=list)


def _fold_seed(seed: int, fold_index: int) -> int:
    return int(np.random.SeedSequence((int(seed), 4, int(fold_index))).generate_state(1)[0])


def _labels_for(ds: Dataset, cfg: TrainConfig):
    for name in cfg.confounders:
        if name not in ds.attribute_names:
            raise ConfigError(f"confounder {name!r} not in dataset attributes "
                              f"{ds.attribute_names}")
        if name == ds.target_name:
            raise ConfigError(f"{name!r} is the learning target, not a confounder")
    t = ds.column(ds.target_name).astype(np.float32)
    cols = [(name, ds.column(name).astype(np.float32)) for name in cfg.confounders]
    return t, cols


class _EpochStream:
    """Cycles a sample pool with per-wrap reshuffles, deterministically."""

    def __init__(self, pool: np.ndarray, seed_parts: tuple):
        self.pool = pool
        self.seed_parts = seed_parts
        self.wrap = 0
        self.pos = 0
        self.order = self._permute()

    def _permute(self) -> np.ndarray:
        rng = np.random.default_rng(self.seed_parts + (self.wrap,))
        return self.pool[rng.permutation(self.pool.shape[0])]

    def take(self, k: int) -> np.ndarray:
        if self.pool.shape[0] < k:
            return np.empty(0, dtype=np.int64)
        if self.pos + k > self.order.shape[0]:
            self.wrap += 1
            self.order = self._permute()
            self.pos = 0
        batch = self.order[self.pos:self.pos + k]
        self.pos += k
        return batch


def _joint_step(model, opt, images, t_col, c_cols, idx, cfg, history, where):
    x = Tensor(images[idx])
    t = Tensor(t_col[idx])
    confs = [(name, Tensor(col[idx])) for name, col in c_cols]
    with Tape() as tape:
        d = model.encode(x)
        x_rec = model.decode(d)
        zp = model.project_raw(d)
        loss, skipped = loss_joint(x, x_rec, zp, t, confs, eta=cfg.eta,
                                   lam=cfg.lam, ncc=cfg.ncc)
    value = loss.item()
    if not np.isfinite(value):
        raise NumericFault(f"non-finite joint loss at {where}")
    tape.backward(loss)
    history.degenerate_batches += len(skipped)
    for p in model.parameters():
        if p.grad is None:  # correlation term fully skipped for this batch
            p.grad = np.zeros_like(p.data)
    opt.step()
    return value


def _rec_step(model, opt, images, idx, where):
    x = Tensor(images[idx])
    with Tape() as tape:
        d = model.encode(x)
        x_rec = model.decode(d)
        loss = loss_rec(x, x_rec)
    value = loss.item()
    if not np.isfinite(value):
        raise NumericFault(f"non-finite reconstruction loss at {where}")
    tape.backward(loss)
    opt.step(model.ae_parameters())
    return value


def train_step_ssl(model, opt, images, t_col, c_cols, unlabeled_idx, labeled_idx,
                   cfg, history, where) -> tuple[float | None, float | None]:
    """One SSL step: reconstruction update on the unlabeled half-batch, then
    the joint update on the labeled half-batch (order fixed)."""
    rec_value = None
    joint_value = None
    if unlabeled_idx.size:
        rec_value = _rec_step(model, opt, images, unlabeled_idx, where)
    else:
        history.skipped_unlabeled += 1
    if labeled_idx.size:
        joint_value = _joint_step(model, opt, images, t_col, c_cols,
                                  labeled_idx, cfg, history, where)
    else:
        history.skipped_labeled += 1
    return rec_value, joint_value


def train_fold(ds: Dataset, cfg: TrainConfig, fold: Fold) -> tuple[ModelState, FoldHistory]:
    """Train one fold to the final epoch; returns the model and loss history."""
    images = as_image_batch(ds.images)
    t_col, c_cols = _labels_for(ds, cfg)
    model = ModelState(cfg.latent_dim, len(cfg.confounders), seed=_fold_seed(cfg.seed, fold.index))
    opt = Adam(model.parameters(), lr=cfg.learning_rate)
    history = FoldHistory()

    labeled = fold.core_idx[ds.mask[fold.core_idx]]
    unlabeled = fold.core_idx[~ds.mask[fold.core_idx]]
    if cfg.ssl:
        half = cfg.batch_size // 2
        if labeled.size < 2 * half:
            raise ConfigError(f"fold {fold.index}: {labeled.size} labeled samples "
                              f"cannot fill two labeled half-batches of {half}")
    else:
        if labeled.size < 2 * cfg.batch_size:
            raise ConfigError(f"fold {fold.index}: need >= {2 * cfg.batch_size} labeled "
                              f"samples for supervised training, have {labeled.size}")

    for epoch in range(cfg.epochs):
        rec_sum, corr_sum, joint_sum, steps = 0.0, 0.0, 0.0, 0
        if cfg.ssl:
            half = cfg.batch_size // 2
            lab_stream = _EpochStream(labeled, (cfg.seed, 5, fold.index, epoch, 0))
            unl_stream = _EpochStream(unlabeled, (cfg.seed, 5, fold.index, epoch, 1))
            n_steps = max(labeled.size, unlabeled.size) // half
            for step in range(n_steps):
                where = f"epoch {epoch} step {step} (fold {fold.index})"
                rec_v, joint_v = train_step_ssl(
                    model, opt, images, t_col, c_cols,
                    unl_stream.take(half), lab_stream.take(half), cfg, history, where)
                if joint_v is not None:
                    joint_sum += joint_v
                    steps += 1
                if rec_v is not None:
                    rec_sum += rec_v
        else:
            rng = np.random.default_rng((cfg.seed, 5, fold.index, epoch))
            order = labeled[rng.permutation(labeled.shape[0])]
            n_steps = order.shape[0] // cfg.batch_size  # drop the partial remainder
            for step in range(n_steps):
                idx = order[step * cfg.batch_size:(step + 1) * cfg.batch_size]
                where = f"epoch {epoch} step {step} (fold {fold.index})"
                joint_sum += _joint_step(model, opt, images, t_col, c_cols,
                                         idx, cfg, history, where)
                steps += 1
        history.joint.append(joint_sum / max(steps, 1))
        history.rec.append(rec_sum / max(steps, 1) if cfg.ssl else float("nan"))
        history.corr.append(float("nan"))

        if fold.val_idx.size and ((epoch + 1) % VAL_EVERY == 0 or epoch + 1 == cfg.epochs):
            history.val.append(_validation_snapshot(model, ds, fold.val_idx, cfg, epoch))

    if model.pe_norm() == 0.0:
        raise NumericFault("projection estimator collapsed to the zero vector")
    return model, history


def _validation_snapshot(model, ds, val_idx, cfg, epoch) -> dict:
    d = model.encode_array(ds.images[val_idx])
    zp = model.project_array(d)
    t = ds.column(ds.target_name)[val_idx]
    snap = {"epoch": epoch + 1}
    try:
        snap["r_target"] = M.pearson(zp, t)
    except ValueError:
        snap["r_target"] = None
    for name in cfg.confounders:
        try:
            snap[f"r_{name}"] = M.pearson(zp, ds.column(name)[val_idx])
        except ValueError:
            snap[f"r_{name}"] = None
    return snap


def _is_binary(t: np.ndarray) -> bool:
    return np.all(np.isin(np.unique(t), (0.0, 1.0)))


def evaluate(model: ModelState, predictor: Predictor, ds: Dataset,
             test_idx: np.ndarray, cfg: TrainConfig,
             degenerate_batches: int = 0) -> MetricsReport:
    """Test-phase metrics: prediction error, dependence audit, reconstruction."""
    images = ds.images[test_idx]
    d = model.encode_array(images)
    zp = model.project_array(d)
    t = ds.column(ds.target_name)[test_idx].astype(np.float64)
    t_hat = predictor.predict(zp)

    if _is_binary(t):
        err_kind, err = "auc", M.auc(t_hat, t.astype(int))
    else:
        err_kind, err = "rmse", M.rmse(t_hat, t)

    confs = []
    for name in ds.confounder_names:
        c = ds.column(name)[test_idx].astype(np.float64)
        confs.append(ConfounderMetrics(
            name=name,
            corrected=name in cfg.confounders,
            r=M.pearson(zp, c),
            dcor2=M.dcor2(zp, c),
            mi=M.mutual_info(zp, c),
        ))

    x_rec = model.decode_array(d)
    x_true = as_image_batch(images)
    report = MetricsReport(
        err_kind=err_kind,
        err=err,
        r_target=M.pearson(zp, t),
        confounders=confs,
        l1=M.l1_metric(x_true, x_rec),
        ncc=M.ncc_metric(x_true, x_rec) if cfg.ncc else None,
        degenerate_batches=degenerate_batches,
        n_test=int(test_idx.size),
    )
    return report


@dataclass
class RunArtifacts:
    run_dir: Path | None
    config: TrainConfig
    folds: list[Fold]
    models: list[ModelState]
    predictors: list[Predictor]
    reports: list[MetricsReport]
    summary: dict
    histories: list[FoldHistory]


def _aggregate(reports: list[MetricsReport]) -> dict:
    def stats(values):
        arr = np.asarray(values, dtype=np.float64)
        return {"mean": float(arr.mean()), "sd": float(arr.std(ddof=1) if arr.size > 1 else 0.0)}

    summary = {
        "err_kind": reports[0].err_kind,
        "err": stats([r.err for r in reports]),
        "r_target": stats([r.r_target for r in reports]),
        "l1": stats([r.l1 for r in reports]),
        "confounders": {},
        "degenerate_batches": int(sum(r.degenerate_batches for r in reports)),
    }
    if reports[0].ncc is not None:
        summary["ncc"] = stats([r.ncc for r in reports])
    for i, c in enumerate(reports[0].confounders):
        summary["confounders"][c.name] = {
            "corrected": c.corrected,
            "r": stats([r.confounders[i].r for r in reports]),
            "dcor2": stats([r.confounders[i].dcor2 for r in reports]),
            "mi": stats([r.confounders[i].mi for r in reports]),
        }
    return summary


def format_summary_table(summary: dict) -> str:
    """Render the aggregate as mean+-sd rows, one metric per line."""
    def fmt(s):
        return f"{s['mean']:+.3f}±{s['sd']:.3f}"

    lines = [f"{'metric':<22s} value",
             f"{summary['err_kind']:<22s} {fmt(summary['err'])}",
             f"{'r(zp, target)':<22s} {fmt(summary['r_target'])}"]
    for name, c in summary["confounders"].items():
        tag = "*" if c["corrected"] else " "
        lines.append(f"{f'r(zp, {name}){tag}':<22s} {fmt(c['r'])}")
        lines.append(f"{f'dcor2(zp, {name})':<22s} {fmt(c['dcor2'])}")
        lines.append(f"{f'MI(zp, {name})':<22s} {fmt(c['mi'])}")
    lines.append(f"{'L1':<22s} {fmt(summary['l1'])}")
    if "ncc" in summary:
        lines.append(f"{'NCC':<22s} {fmt(summary['ncc'])}")
    return "\n".join(lines)


def run_experiment(ds: Dataset, cfg: TrainConfig, run_dir=None,
                   predictor_kind: str = "auto", groups=None,
                   progress: bool = False) -> RunArtifacts:
    """Full protocol: k-fold training, predictor fits, per-fold and aggregate metrics."""
    folds = split_folds(ds, cfg.folds, cfg.seed, groups=groups)
    t_all = ds.column(ds.target_name)
    if predictor_kind == "auto":
        predictor_kind = "logistic" if _is_binary(t_all.astype(np.float64)) else "linear"

    out = Path(run_dir) if run_dir is not None else None
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)
        write_config_echo(cfg, out)

    models, predictors, reports, histories = [], [], [], []
    for fold in folds:
        t0 = time.perf_counter()
        try:
            model, history = train_fold(ds, cfg, fold)
        except NumericFault as exc:
            raise NumericFault(f"fold {fold.index}: {exc}") from exc
        labeled_core = fold.core_idx[ds.mask[fold.core_idx]]
        zp_train = model.project_array(model.encode_array(ds.images[labeled_core]))
        predictor = fit_predictor(zp_train, t_all[labeled_core], predictor_kind)
        report = evaluate(model, predictor, ds, fold.test_idx, cfg,
                          degenerate_batches=history.degenerate_batches)
        models.append(model)
        predictors.append(predictor)
        reports.append(report)
        histories.append(history)
        if progress:
            print(f"fold {fold.index}: {report.err_kind}={report.err:.4f} "
                  f"r_t={report.r_target:+.4f} l1={report.l1:.4f} "
                  f"[{time.perf_counter() - t0:.1f}s]", flush=True)
        if out is not None:
            fold_dir = out / f"fold_{fold.index}"
            fold_dir.mkdir(exist_ok=True)
            save_model(model, fold_dir / "model.ckpt", cfg.to_dict())
            payload = report.to_dict()
            payload["predictor"] = predictor.to_dict()
            (fold_dir / "metrics.json").write_text(
                json.dumps(payload, indent=2, sort_keys=True) + "\n", encoding="utf-8")

    summary = _aggregate(reports)
    summary["config"] = cfg.to_dict()
    summary["predictor_kind"] = predictor_kind
    if cfg.confounders:
        realized = realized_target_confounder_corr(ds, list(cfg.confounders))
        summary["realized_target_confounder_r"] = realized
        summary["corr_upper_bound"] = corr_upper_bound(realized)
    summary["table"] = format_summary_table(summary)

    if out is not None:
        (out / "summary.json").write_text(
            json.dumps(summary, indent=2, sort_keys=True) + "\n", encoding="utf-8")
        with open(out / "loss_history.csv", "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(["fold", "epoch", "joint", "rec_unlabeled"])
            for fold, history in zip(folds, histories):
                for e, joint in enumerate(history.joint):
                    rec = history.rec[e]
                    writer.writerow([fold.index, e + 1, f"{joint:.6f}",
                                     "" if np.isnan(rec) else f"{rec:.6f}"])

    return RunArtifacts(run_dir=out, config=cfg, folds=folds, models=models,
                        predictors=predictors, reports=reports,
                        summary=summary, histories=histories)
