import math

import numpy as np
import pytest
import torch

from taylornet.evaluation.metrics import (
    METRICS,
    MetricAccumulator,
    frame_metrics,
    gaussian_window,
    per_frame_metrics,
    psnr,
    ssim,
)


def _direct_ssim(x: np.ndarray, y: np.ndarray) -> float:
    """Mean local SSIM over valid 11x11 windows, summed explicitly."""
    window = gaussian_window().numpy()
    c1, c2 = 0.01**2, 0.03**2
    h, w = x.shape
    values = []
    for r in range(h - 10):
        for c in range(w - 10):
            px, py = x[r : r + 11, c : c + 11], y[r : r + 11, c : c + 11]
            mx, my = (window * px).sum(), (window * py).sum()
            vx = (window * px * px).sum() - mx * mx
            vy = (window * py * py).sum() - my * my
            cov = (window * px * py).sum() - mx * my
            values.append(((2 * mx * my + c1) * (2 * cov + c2)) / ((mx * mx + my * my + c1) * (vx + vy + c2)))
    return float(np.mean(values))


class TestFrameMetrics:
    def test_identical_frames(self):
        frames = torch.rand(2, 3, 1, 16, 16)
        metrics = frame_metrics(frames, frames)
        assert metrics["mse"] == 0.0
        assert metrics["mae"] == 0.0
        assert metrics["ssim"] == pytest.approx(1.0, abs=1e-12)
        assert math.isinf(metrics["psnr"])

    def test_constant_offset(self):
        target = torch.full((1, 1, 64, 64), 0.3, dtype=torch.float64)
        metrics = frame_metrics(target + 0.1, target)
        assert metrics["mse"] == pytest.approx(40.96, abs=1e-9)
        assert metrics["mae"] == pytest.approx(409.6, abs=1e-9)
        assert metrics["mse_pixel"] == pytest.approx(0.01, abs=1e-12)
        assert metrics["psnr"] == pytest.approx(20.0, abs=1e-9)

    def test_per_frame_shape(self):
        values = per_frame_metrics(torch.rand(2, 5, 1, 12, 12), torch.rand(2, 5, 1, 12, 12))
        assert set(values) == set(METRICS)
        assert all(v.shape == (2, 5) for v in values.values())

    def test_bce_clamps_predictions(self):
        zeros = torch.zeros(1, 1, 12, 12, dtype=torch.float64)
        expected = -144 * math.log1p(-1e-7)
        assert frame_metrics(zeros, zeros)["bce"] == pytest.approx(expected, rel=1e-9)
        assert math.isfinite(frame_metrics(zeros, torch.ones_like(zeros))["bce"])

    def test_ssim_matches_direct_formula(self):
        rng = np.random.default_rng(0)
        for _ in range(5):
            x, y = rng.random((16, 18)), rng.random((16, 18))
            value = ssim(torch.from_numpy(x)[None, None], torch.from_numpy(y)[None, None])
            assert value == pytest.approx(_direct_ssim(x, y), abs=1e-6)

    def test_ssim_matches_scikit_image(self):
        metrics = pytest.importorskip("skimage.metrics")
        rng = np.random.default_rng(1)
        x = rng.random((32, 32))
        y = np.clip(x + 0.1 * rng.standard_normal((32, 32)), 0, 1)
        expected = metrics.structural_similarity(
            x, y, gaussian_weights=True, sigma=1.5, use_sample_covariance=False, data_range=1.0
        )
        assert ssim(torch.from_numpy(x)[None, None], torch.from_numpy(y)[None, None]) == pytest.approx(expected, abs=1e-6)

    def test_psnr_shortcut(self):
        target = torch.zeros(1, 1, 12, 12, dtype=torch.float64)
        assert psnr(target + 0.01, target) == pytest.approx(40.0, abs=1e-9)

    def test_shape_mismatch(self):
        with pytest.raises(ValueError, match="differs"):
            frame_metrics(torch.zeros(1, 1, 12, 12), torch.zeros(1, 1, 12, 13))

    def test_out_of_range(self):
        with pytest.raises(ValueError, match=r"\[0, 1\]"):
            frame_metrics(torch.full((1, 1, 12, 12), 1.5), torch.zeros(1, 1, 12, 12))

    def test_frames_smaller_than_window(self):
        with pytest.raises(ValueError, match="SSIM window"):
            frame_metrics(torch.zeros(1, 1, 8, 8), torch.zeros(1, 1, 8, 8))


class TestMetricAccumulator:
    def test_sharded_equals_whole(self):
        pred, target = torch.rand(6, 4, 1, 12, 12), torch.rand(6, 4, 1, 12, 12)
        whole = MetricAccumulator(4)
        whole.add(pred, target)

        first, second = MetricAccumulator(4), MetricAccumulator(4)
        first.add(pred[:2], target[:2])
        second.add(pred[2:], target[2:])
        merged = first.merge(second)

        assert merged.count == 6
        assert merged.aggregate() == pytest.approx(whole.aggregate(), rel=1e-12)
        for name, curve in whole.curves().items():
            assert merged.curves()[name] == pytest.approx(curve, rel=1e-12)

    def test_order_of_shards_does_not_matter(self):
        pred, target = torch.rand(4, 3, 1, 12, 12), torch.rand(4, 3, 1, 12, 12)
        first, second = MetricAccumulator(3), MetricAccumulator(3)
        first.add(pred[:1], target[:1])
        second.add(pred[1:], target[1:])
        assert first.merge(second).aggregate() == second.merge(first).aggregate()

    def test_prefix_horizon(self):
        pred, target = torch.rand(3, 5, 1, 12, 12), torch.rand(3, 5, 1, 12, 12)
        accumulator = MetricAccumulator(5)
        accumulator.add(pred, target)

        short = accumulator.aggregate(2)
        direct = frame_metrics(pred[:, :2], target[:, :2])
        assert short["mse"] == pytest.approx(direct["mse"], rel=1e-12)
        assert short["mse_sequence"] == pytest.approx(2 * direct["mse"], rel=1e-12)
        assert len(accumulator.curves(2)["ssim"]) == 2

    def test_wrong_length(self):
        with pytest.raises(ValueError):
            MetricAccumulator(3).add(torch.rand(1, 2, 1, 12, 12), torch.rand(1, 2, 1, 12, 12))

    def test_empty(self):
        with pytest.raises(ValueError, match="No sequences"):
            MetricAccumulator(3).aggregate()

    def test_merge_lengths_must_match(self):
        with pytest.raises(ValueError):
            MetricAccumulator(3).merge(MetricAccumulator(4))
