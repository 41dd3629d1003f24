"""Latent traversal, frame solving, heatmaps, and PNG export."""

import json

import numpy as np
import pytest
from PIL import Image

from confae.model import ModelState
from confae.train.predictor import Predictor
from confae.viz import (
    aggregate_heatmaps,
    estimate_circle_radius,
    export_png,
    heatmap,
    mean_latent,
    sample_frames,
    solve_k,
    target_sequence,
)


@pytest.fixture(scope="module")
def model():
    return ModelState(latent_dim=2, n_confounders=1, seed=4)


# -- mean latent --------------------------------------------------------------

def test_mean_latent_single_sample(model):
    img = np.random.default_rng(0).random((1, 64, 64)).astype(np.float32)
    d = mean_latent(model, img)
    np.testing.assert_allclose(d, model.encode_array(img)[0], rtol=1e-6)


def test_mean_latent_linearity(model):
    imgs = np.random.default_rng(1).random((6, 64, 64)).astype(np.float32)
    d_all = model.encode_array(imgs)
    np.testing.assert_allclose(mean_latent(model, imgs), d_all.mean(axis=0), rtol=1e-5)
    with pytest.raises(ValueError, match="empty"):
        mean_latent(model, np.empty((0, 64, 64), dtype=np.float32))


def test_mean_latent_deterministic(model):
    imgs = np.random.default_rng(2).random((5, 64, 64)).astype(np.float32)
    np.testing.assert_array_equal(mean_latent(model, imgs), mean_latent(model, imgs))


# -- target sequences -----------------------------------------------------------

def test_target_sequence_policies():
    t_hat = np.array([0.0, 1.0, 2.0, 3.0, 4.0])
    seq = target_sequence(t_hat, "mean1sd", 11)
    assert seq.size == 11
    assert seq[0] == pytest.approx(t_hat.mean() - t_hat.std())
    assert seq[-1] == pytest.approx(t_hat.mean() + t_hat.std())
    assert np.all(np.diff(seq) > 0)
    diffs = np.diff(seq)
    np.testing.assert_allclose(diffs, diffs[0])  # arithmetic
    seq3 = target_sequence(t_hat, "mean3sd", 5)
    assert seq3[-1] == pytest.approx(t_hat.mean() + 3 * t_hat.std())
    ex = target_sequence(None, "explicit", 3, explicit=(0.2, 1.0))
    np.testing.assert_allclose(ex, [0.2, 0.6, 1.0])
    with pytest.raises(ValueError, match="policy"):
        target_sequence(t_hat, "mean2sd", 5)


# -- solve_k ------------------------------------------------------------------------

def test_solve_k_identity_at_mean(model):
    imgs = np.random.default_rng(3).random((8, 64, 64)).astype(np.float32)
    d_bar = mean_latent(model, imgs)
    zp0 = float(model.project_array(d_bar[None, :])[0])
    predictor = Predictor("linear", 2.0, 0.5)
    t0 = 2.0 * zp0 + 0.5
    assert solve_k(t0, model, predictor, d_bar) == pytest.approx(0.0, abs=1e-5)


def test_solve_k_linear_closed_form(model):
    imgs = np.random.default_rng(4).random((8, 64, 64)).astype(np.float32)
    d_bar = mean_latent(model, imgs)
    zp0 = float(model.project_array(d_bar[None, :])[0])
    predictor = Predictor("linear", -1.5, 0.2)
    target = 0.9
    k = solve_k(target, model, predictor, d_bar)
    assert k == pytest.approx((target - 0.2) / -1.5 - zp0, rel=1e-4)


def test_solve_k_zero_slope_errors(model):
    d_bar = np.zeros(2, dtype=np.float32)
    with pytest.raises(ValueError, match="slope"):
        solve_k(0.5, model, Predictor("linear", 0.0, 0.0), d_bar)


def test_solve_k_logistic_bisection(model):
    imgs = np.random.default_rng(5).random((8, 64, 64)).astype(np.float32)
    d_bar = mean_latent(model, imgs)
    predictor = Predictor("logistic", 1.2, -0.3)
    for target in (0.1, 0.5, 0.9):
        k = solve_k(target, model, predictor, d_bar)
        zp = model.project_array((d_bar + k * model.pe_unit())[None, :])
        achieved = float(predictor.predict(zp)[0])
        assert abs(achieved - target) / target <= 1e-3


def test_solve_k_logistic_asymptote_errors(model):
    d_bar = np.zeros(2, dtype=np.float32)
    with pytest.raises(ValueError, match="achievable|interval"):
        solve_k(1.5, model, Predictor("logistic", 1.0, 0.0), d_bar)


# -- frames ---------------------------------------------------------------------------

def test_sample_frames_projection_shift_identity(model):
    # project(d_bar + k p_hat) == project(d_bar) + k for a unit direction:
    # exact up to rounding in float64, close in the float32 model path
    rng = np.random.default_rng(6)
    d_bar = rng.standard_normal(2)
    p_hat = model.pe_unit().astype(np.float64)
    p_hat /= np.linalg.norm(p_hat)  # renormalize in float64
    zp0 = float(d_bar @ p_hat)
    for k in (-3.0, 0.5, 7.25):
        assert (d_bar + k * p_hat) @ p_hat == pytest.approx(zp0 + k, abs=1e-12)
    zp32 = model.project_array((d_bar[None, :] + 2.5 * model.pe_unit()[None, :])
                               .astype(np.float32))
    assert zp32[0] == pytest.approx(float(model.project_array(
        d_bar[None, :].astype(np.float32))[0]) + 2.5, abs=1e-5)


def test_sample_frames_counts_and_tolerance(model):
    imgs = np.random.default_rng(7).random((10, 64, 64)).astype(np.float32)
    d_bar = mean_latent(model, imgs)
    zp = model.project_array(model.encode_array(imgs))
    predictor = Predictor("linear", 1.0, 0.0)
    t_hat = predictor.predict(zp)
    frames, spec = sample_frames(model, predictor, d_bar, policy="mean3sd",
                                 count=11, t_hat=t_hat)
    assert frames.shape == (11, 64, 64)
    assert spec.ks.size == 11
    rel = np.abs(spec.predicted - spec.targets) / np.maximum(np.abs(spec.targets), 1e-6)
    assert rel.max() <= 1e-3
    assert np.all(np.diff(spec.ks) > 0)  # monotone targets -> monotone steps


def test_sample_single_frame_is_mean_reconstruction(model):
    imgs = np.random.default_rng(8).random((6, 64, 64)).astype(np.float32)
    d_bar = mean_latent(model, imgs)
    zp0 = float(model.project_array(d_bar[None, :])[0])
    predictor = Predictor("linear", 1.0, 0.0)
    frames, spec = sample_frames(model, predictor, d_bar, policy="explicit",
                                 count=1, explicit=(zp0, zp0))
    np.testing.assert_allclose(frames[0], model.decode_array(d_bar[None, :])[0, 0],
                               atol=1e-6)
    assert spec.ks[0] == pytest.approx(0.0, abs=1e-5)


# -- heatmaps ----------------------------------------------------------------------------

def test_heatmap_identity_and_antisymmetry():
    rng = np.random.default_rng(9)
    frames = rng.random((5, 64, 64))
    np.testing.assert_array_equal(heatmap(np.stack([frames[0], frames[0]])), 0.0)
    fwd = heatmap(frames)
    rev = heatmap(frames[::-1])
    np.testing.assert_allclose(rev, -fwd)
    with pytest.raises(ValueError, match="two frames"):
        heatmap(frames[:1])


def test_aggregate_identical_folds_unmasked():
    h = np.random.default_rng(10).random((8, 8)) + 0.5
    agg = aggregate_heatmaps([h, h, h, h, h])
    np.testing.assert_allclose(agg, h)


def test_aggregate_sign_alternating_masked_out():
    h = np.ones((4, 4))
    agg = aggregate_heatmaps([h, -h, h, -h])
    np.testing.assert_array_equal(agg, 0.0)


def test_aggregate_shape_mismatch():
    with pytest.raises(ValueError, match="shapes"):
        aggregate_heatmaps([np.zeros((2, 2)), np.zeros((3, 3))])


# -- radius recovery -----------------------------------------------------------------------

@pytest.mark.parametrize("radius", [6.0, 12.0, 24.0])
def test_radius_recovery_on_rendered_circles(radius):
    from confae.data import render_circle
    img = render_circle(0.8, radius)
    assert estimate_circle_radius(img) == pytest.approx(radius, abs=0.6)


def test_radius_recovery_empty_image():
    assert estimate_circle_radius(np.zeros((64, 64))) == 0.0


# -- png export ------------------------------------------------------------------------------

def test_export_gray_round_trip(tmp_path):
    rng = np.random.default_rng(11)
    img = rng.random((32, 32))
    path = export_png(img, tmp_path / "img.png", mode="gray")
    back = np.asarray(Image.open(path))
    np.testing.assert_array_equal(back, np.round(img * 255).astype(np.uint8))


def test_export_gray_extremes(tmp_path):
    ones = np.ones((8, 8))
    back = np.asarray(Image.open(export_png(ones, tmp_path / "w.png")))
    assert (back == 255).all()


def test_export_diverging_zero_is_white(tmp_path):
    path = export_png(np.zeros((8, 8)), tmp_path / "z.png", mode="diverging")
    back = np.asarray(Image.open(path))
    assert back.shape == (8, 8, 3)
    assert (back == 255).all()


def test_export_diverging_signs(tmp_path):
    arr = np.array([[-1.0, 0.0, 1.0]])
    back = np.asarray(Image.open(export_png(arr, tmp_path / "d.png", mode="diverging")))
    assert tuple(back[0, 0]) == (0, 0, 255)      # negative -> blue
    assert tuple(back[0, 1]) == (255, 255, 255)  # zero -> white
    assert tuple(back[0, 2]) == (255, 0, 0)      # positive -> red


def test_export_deterministic_bytes(tmp_path):
    img = np.random.default_rng(12).random((16, 16))
    a = export_png(img, tmp_path / "a.png").read_bytes()
    b = export_png(img, tmp_path / "b.png").read_bytes()
    assert a == b


def test_write_traversal_sidecar(tmp_path, model):
    from confae.viz import write_traversal, FrameSpec
    frames = np.random.default_rng(13).random((3, 64, 64))
    spec = FrameSpec(count=3, range_policy="explicit",
                     targets=np.array([0.1, 0.2, 0.3]),
                     ks=np.array([-1.0, 0.0, 1.0]),
                     predicted=np.array([0.1, 0.2, 0.3]))
    out = write_traversal(tmp_path / "viz", frames, spec, heat=heatmap(frames))
    assert (out / "frame_00.png").is_file()
    assert (out / "heatmap.png").is_file()
    sidecar = json.loads((out / "frames.json").read_text())
    assert len(sidecar["frames"]) == 3
    assert sidecar["frames"][0]["k"] == -1.0
