"""Fold splitting, predictors, training-loop invariants, and small end-to-end runs."""

import json

import numpy as np
import pytest

from confae.config import TrainConfig
from confae.data import generate_dataset
from confae.errors import ConfigError
from confae.train import (
    evaluate,
    fit_predictor,
    run_experiment,
    split_indices,
    train_fold,
)
from confae.train.trainer import _fold_seed


# -- fold splitting -----------------------------------------------------------

def test_folds_disjoint_exhaustive():
    folds = split_indices(10, 5, seed=0)
    assert all(f.test_idx.size == 2 for f in folds)
    combined = np.sort(np.concatenate([f.test_idx for f in folds]))
    np.testing.assert_array_equal(combined, np.arange(10))


def test_folds_deterministic():
    a = split_indices(100, 5, seed=3)
    b = split_indices(100, 5, seed=3)
    for fa, fb in zip(a, b):
        np.testing.assert_array_equal(fa.test_idx, fb.test_idx)
        np.testing.assert_array_equal(fa.core_idx, fb.core_idx)
    c = split_indices(100, 5, seed=4)
    assert not np.array_equal(a[0].test_idx, c[0].test_idx)


def test_fold0_has_validation_split():
    folds = split_indices(1000, 5, seed=1)
    f0 = folds[0]
    assert f0.val_idx.size == f0.train_idx.size // 8  # 10% of the total
    assert np.intersect1d(f0.val_idx, f0.core_idx).size == 0
    combined = np.sort(np.concatenate([f0.val_idx, f0.core_idx]))
    np.testing.assert_array_equal(combined, np.sort(f0.train_idx))
    for f in folds[1:]:
        assert f.val_idx.size == 0
        np.testing.assert_array_equal(f.core_idx, f.train_idx)


def test_folds_validation_errors():
    with pytest.raises(ValueError, match="folds"):
        split_indices(3, 5, seed=0)


def test_grouped_folds_keep_groups_together():
    groups = np.repeat(np.arange(20), 3)  # 20 subjects x 3 scans
    folds = split_indices(60, 5, seed=2, groups=groups)
    for f in folds:
        test_groups = set(groups[f.test_idx])
        train_groups = set(groups[f.train_idx])
        assert not test_groups & train_groups


# -- predictors ----------------------------------------------------------------

def test_linear_predictor_exact():
    zp = np.linspace(-1, 1, 50)
    t = 2.0 * zp + 1.0
    p = fit_predictor(zp, t, "linear")
    assert p.slope == pytest.approx(2.0)
    assert p.intercept == pytest.approx(1.0)


def test_linear_predictor_noise_slope_near_zero():
    rng = np.random.default_rng(0)
    zp = rng.standard_normal(4000)
    t = rng.standard_normal(4000)
    p = fit_predictor(zp, t, "linear")
    assert abs(p.slope) < 0.05


def test_predictor_validation():
    with pytest.raises(ValueError, match="zero variance"):
        fit_predictor(np.ones(10), np.arange(10.0), "linear")
    with pytest.raises(ValueError, match="at least 2"):
        fit_predictor([1.0], [1.0], "linear")
    with pytest.raises(ValueError, match="both classes"):
        fit_predictor(np.arange(10.0), np.ones(10), "logistic")


def test_logistic_perfect_separation_capped():
    from confae.metrics import auc

    zp = np.concatenate([np.linspace(-2, -1, 20), np.linspace(1, 2, 20)])
    y = np.concatenate([np.zeros(20), np.ones(20)])
    p = fit_predictor(zp, y, "logistic")
    assert np.isfinite(p.slope) and np.isfinite(p.intercept)
    assert auc(p.predict(zp), y) == 1.0


def test_logistic_recovers_known_coefficients():
    rng = np.random.default_rng(5)
    z = rng.standard_normal(20000)
    prob = 1.0 / (1.0 + np.exp(-(1.5 * z - 0.5)))
    y = (rng.random(20000) < prob).astype(float)
    p = fit_predictor(z, y, "logistic")
    assert p.slope == pytest.approx(1.5, abs=0.1)
    assert p.intercept == pytest.approx(-0.5, abs=0.1)


# -- training loop -----------------------------------------------------------------

@pytest.fixture(scope="module")
def tiny_circles():
    return generate_dataset("circles", n=120, seed=11)


def _tiny_cfg(**kw):
    base = dict(eta=2.0, lam=5.0, latent_dim=2, batch_size=16, epochs=2,
                learning_rate=1e-3, seed=3, confounders=("radius",), folds=2)
    base.update(kw)
    return TrainConfig(**base)


def test_train_fold_runs_and_records_history(tiny_circles):
    from confae.train import split_folds
    cfg = _tiny_cfg()
    fold = split_folds(tiny_circles, cfg.folds, cfg.seed)[0]
    model, history = train_fold(tiny_circles, cfg, fold)
    assert len(history.joint) == cfg.epochs
    assert model.pe_norm() > 0


def test_train_fold_requires_enough_labeled(tiny_circles):
    from confae.train import split_folds
    cfg = _tiny_cfg(batch_size=64)
    fold = split_folds(tiny_circles, cfg.folds, cfg.seed)[0]
    with pytest.raises(ConfigError, match="labeled"):
        train_fold(tiny_circles, cfg, fold)


def test_lambda_zero_leaves_projection_untouched(tiny_circles):
    from confae.train import split_folds
    cfg = _tiny_cfg(lam=0.0, epochs=1)
    fold = split_folds(tiny_circles, cfg.folds, cfg.seed)[0]
    from confae.model import ModelState
    from confae.train.trainer import _fold_seed as fs
    reference = ModelState(cfg.latent_dim, 1, seed=fs(cfg.seed, fold.index))
    model, _ = train_fold(tiny_circles, cfg, fold)
    np.testing.assert_array_equal(model.params["pe.p"].data,
                                  reference.params["pe.p"].data)
    assert not np.array_equal(model.params["enc.conv1.w"].data,
                              reference.params["enc.conv1.w"].data)


def test_ssl_unlabeled_step_never_touches_projection():
    ds = generate_dataset("circles", n=160, seed=13, labeled_fraction=0.5)
    from confae.engine import Adam
    from confae.model import ModelState, as_image_batch
    from confae.train.trainer import FoldHistory, _labels_for, train_step_ssl

    cfg = _tiny_cfg(ssl=True)
    images = as_image_batch(ds.images)
    t_col, c_cols = _labels_for(ds, cfg)
    model = ModelState(2, 1, seed=0)
    opt = Adam(model.parameters())
    history = FoldHistory()
    unlabeled = np.flatnonzero(~ds.mask)[:8]
    labeled = np.flatnonzero(ds.mask)[:8]

    p_before = model.params["pe.p"].data.copy()
    rec_v, joint_v = train_step_ssl(model, opt, images, t_col, c_cols,
                                    unlabeled, np.empty(0, dtype=np.int64),
                                    cfg, history, "t")
    assert rec_v is not None and joint_v is None
    assert history.skipped_labeled == 1
    np.testing.assert_array_equal(model.params["pe.p"].data, p_before)

    rec_v, joint_v = train_step_ssl(model, opt, images, t_col, c_cols,
                                    np.empty(0, dtype=np.int64), labeled,
                                    cfg, history, "t")
    assert rec_v is None and joint_v is not None
    assert history.skipped_unlabeled == 1
    assert not np.array_equal(model.params["pe.p"].data, p_before)


def test_ssl_with_full_labels_degenerates_to_supervised():
    ds = generate_dataset("circles", n=120, seed=17, labeled_fraction=1.0)
    from confae.train import split_folds
    cfg = _tiny_cfg(ssl=True, epochs=1)
    fold = split_folds(ds, cfg.folds, cfg.seed)[0]
    model, history = train_fold(ds, cfg, fold)
    assert history.skipped_labeled == 0
    assert history.skipped_unlabeled > 0  # unlabeled pool is empty; always skipped


def test_ssl_run_completes_with_partial_labels():
    ds = generate_dataset("circles", n=200, seed=19, labeled_fraction=0.3)
    cfg = _tiny_cfg(ssl=True, epochs=1, folds=2)
    arts = run_experiment(ds, cfg)
    assert len(arts.reports) == 2
    for r in arts.reports:
        assert np.isfinite(r.err)


# -- evaluation ----------------------------------------------------------------------

def test_evaluate_identity_predictor_zero_error(tiny_circles):
    from confae.model import ModelState
    from confae.train.predictor import Predictor

    model = ModelState(2, 1, seed=1)
    idx = np.arange(60)
    # target := the model's own zp, so the identity predictor is exact
    zp = model.project_array(model.encode_array(tiny_circles.images[idx]))
    ds = generate_dataset("circles", n=120, seed=11)
    ds.labels[idx, 0] = zp.astype(np.float32)
    cfg = _tiny_cfg()
    report = evaluate(model, Predictor("linear", 1.0, 0.0), ds, idx, cfg)
    assert report.err_kind == "rmse"
    assert report.err == pytest.approx(0.0, abs=1e-5)
    assert report.r_target == pytest.approx(1.0, abs=1e-5)


def test_evaluate_binary_target_uses_auc(tiny_circles):
    from confae.model import ModelState
    from confae.train.predictor import Predictor

    model = ModelState(2, 1, seed=1)
    idx = np.arange(80)
    ds = generate_dataset("circles", n=120, seed=11)
    zp = model.project_array(model.encode_array(ds.images[idx]))
    ds.labels[idx, 0] = (zp > np.median(zp)).astype(np.float32)
    report = evaluate(model, Predictor("linear", 1.0, 0.0), ds, idx, _tiny_cfg())
    assert report.err_kind == "auc"
    assert report.err == pytest.approx(1.0)


# -- experiment harness -----------------------------------------------------------------

def test_run_experiment_writes_artifacts(tmp_path, tiny_circles):
    cfg = _tiny_cfg(epochs=1)
    arts = run_experiment(tiny_circles, cfg, run_dir=tmp_path / "run")
    root = tmp_path / "run"
    assert (root / "config.echo").is_file()
    assert (root / "summary.json").is_file()
    assert (root / "loss_history.csv").is_file()
    for i in range(cfg.folds):
        assert (root / f"fold_{i}" / "model.ckpt").is_file()
        assert (root / f"fold_{i}" / "metrics.json").is_file()
    summary = json.loads((root / "summary.json").read_text())
    assert summary["err_kind"] == "rmse"
    assert "radius" in summary["confounders"]
    from confae.data import realized_target_confounder_corr
    from confae.model import corr_upper_bound
    want = corr_upper_bound(realized_target_confounder_corr(tiny_circles, ["radius"]))
    assert summary["corr_upper_bound"] == pytest.approx(want)
    echoed = (root / "config.echo").read_text()
    from confae.config import parse_config_text
    assert parse_config_text(echoed) == cfg


def test_run_experiment_bit_deterministic(tiny_circles):
    cfg = _tiny_cfg(epochs=1)
    a = run_experiment(tiny_circles, cfg)
    b = run_experiment(tiny_circles, cfg)
    assert json.dumps(a.summary, sort_keys=True) == json.dumps(b.summary, sort_keys=True)
    for ma, mb in zip(a.models, b.models):
        for k in ma.params:
            assert ma.params[k].data.tobytes() == mb.params[k].data.tobytes()


def test_fold_seeds_differ_per_fold():
    assert _fold_seed(1, 0) != _fold_seed(1, 1)
    assert _fold_seed(1, 0) == _fold_seed(1, 0)
