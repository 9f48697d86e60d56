import math

import numpy as np
import pytest

import burstdepth as bd


def test_geometry_round_trip():
    rng = np.random.default_rng(0)
    w = rng.uniform(0.0, 1.0, size=(8, 9))
    w[2, 3] = np.nan
    T = (3.5, -1.25)
    flow = bd.flow_from_inverse_depth(w, T)
    assert flow.shape == (8, 9, 2)
    assert np.isnan(flow[2, 3]).all()
    back = bd.inverse_depth_from_flow(flow, T)
    np.testing.assert_allclose(back[~np.isnan(w)], w[~np.isnan(w)], atol=1e-12)
    assert np.isnan(back[2, 3])


def test_transform_vector_and_projection():
    K = bd.CameraIntrinsics(500, 500, 320, 240)
    tx, ty = bd.translation_transform_vector(K, [0.002, -0.001, 0.001])
    assert tx == pytest.approx(1.32) and ty == pytest.approx(-0.26)
    np.testing.assert_allclose(bd.project([2.0, 4.0, 2.0]), [1.0, 2.0])
    with pytest.raises(bd.BurstDepthError):
        bd.project([1.0, 1.0, 0.0])


def test_degenerate_baseline_raises():
    with pytest.raises(bd.BurstDepthError):
        bd.inverse_depth_from_flow(np.zeros((4, 4, 2)), (0.0, 0.0))


def test_network_size():
    assert bd.network_parameter_count() == 240050


def test_metrics():
    gt = np.full((16, 16), 10.0)
    assert bd.rmse(gt + 1.0, gt) == pytest.approx(1.0)
    assert bd.bad_pixel_rate(gt + 1.5, gt) == pytest.approx(100.0)
    assert bd.bad_pixel_rate(gt + 0.5, gt) == pytest.approx(0.0)
    m = bd.evaluate_depth(gt * 3.0, gt)
    assert m["rmse"] == pytest.approx(0.0, abs=1e-12)
    assert m["scale"] == pytest.approx(1.0 / 3.0)


def test_refocus_aperture_zero_is_identity():
    img = np.random.default_rng(1).uniform(size=(20, 24, 3)).astype(np.float32)
    w = np.full((20, 24), 0.5)
    np.testing.assert_array_equal(bd.refocus(img, w, 2.0, 0.0), img)


def test_small_burst_end_to_end():
    burst = bd.synthetic_burst(frames=10, width=320, height=240, seed=5)
    assert len(burst["frames"]) == 10
    assert burst["frames"][0].shape == (240, 320, 3)
    out = bd.estimate_depth(burst["frames"], burst["K"])
    assert out["depth"].shape == (240, 320)
    assert len(out["poses"]) == 10
    metrics = bd.evaluate_depth(out["depth"], burst["depth"])
    assert math.isfinite(metrics["rmse"])
    assert metrics["rmse"] < 0.1 * np.nanmax(burst["depth"])
