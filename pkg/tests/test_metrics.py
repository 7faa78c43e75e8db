"""Tests for PSNR, SSIM and whole-video scoring."""

import csv
import json
import math

import numpy as np
import pytest

from fstrn.errors import ConfigError, DimensionError
from fstrn.metrics import evaluate_video, psnr, ssim, write_scores
from fstrn.video_io import RawVideo


@pytest.fixture
def frame():
    """A 32x32 random frame."""
    return np.random.default_rng(21).random((32, 32))


def test_psnr_identical_is_infinite(frame):
    """No error means infinite PSNR."""
    assert psnr(frame, frame.copy()) == math.inf


def test_psnr_one_code_value():
    """A uniform error of one 8-bit code is 20 log10(255) dB."""
    ref = np.zeros((8, 8))
    assert psnr(ref, ref + 1 / 255) == pytest.approx(48.1308, abs=1e-4)


def test_psnr_error_equal_to_peak_is_zero():
    """An error as large as the peak gives 0 dB."""
    assert psnr(np.zeros((4, 4)), np.ones((4, 4))) == pytest.approx(0.0)


def test_psnr_peak_scaling():
    """The same error on a 255 scale matches the unit scale result."""
    ref = np.zeros((4, 4))
    assert psnr(ref, ref + 1.0, peak=255.0) == pytest.approx(psnr(ref, ref + 1 / 255))


def test_psnr_shape_mismatch():
    """Frames must agree in size."""
    with pytest.raises(DimensionError):
        psnr(np.zeros((4, 4)), np.zeros((4, 5)))


def test_ssim_identical_is_one(frame):
    """A frame is perfectly similar to itself."""
    assert ssim(frame, frame.copy()) == pytest.approx(1.0)


def test_ssim_constant_frames():
    """Two equal flat frames score one despite zero variance."""
    flat = np.full((16, 16), 0.3)
    assert ssim(flat, flat.copy()) == pytest.approx(1.0)


def test_ssim_inverted_binary_is_negative():
    """A binary pattern and its inverse are anti-correlated."""
    ref = (np.random.default_rng(3).random((32, 32)) > 0.5).astype(float)
    assert ssim(ref, 1.0 - ref) < 0.0


def test_ssim_noise_lowers_score(frame):
    """More noise means lower similarity."""
    rng = np.random.default_rng(4)
    light = np.clip(frame + 0.01 * rng.standard_normal(frame.shape), 0, 1)
    heavy = np.clip(frame + 0.2 * rng.standard_normal(frame.shape), 0, 1)

    assert 1.0 > ssim(frame, light) > ssim(frame, heavy)


def test_scores_are_symmetric(frame):
    """Swapping reference and test changes neither score."""
    other = np.clip(frame + 0.05 * np.random.default_rng(5).standard_normal(frame.shape), 0, 1)

    assert psnr(frame, other) == pytest.approx(psnr(other, frame), rel=1e-12)
    assert ssim(frame, other) == pytest.approx(ssim(other, frame), rel=1e-12)


def test_psnr_falls_as_noise_grows(frame):
    """Scaling the same noise pattern up strictly lowers PSNR."""
    noise = np.random.default_rng(6).standard_normal(frame.shape)
    scores = [psnr(frame, frame + amplitude * noise) for amplitude in (0.001, 0.01, 0.05, 0.1, 0.3)]

    assert all(later < earlier for earlier, later in zip(scores, scores[1:]))


def test_ssim_ignores_small_common_offset():
    """Adding the same small constant to both frames barely moves SSIM."""
    rng = np.random.default_rng(7)
    ref = 0.2 + 0.6 * rng.random((32, 32))
    test = ref + 0.05 * rng.standard_normal(ref.shape)

    assert ssim(ref + 0.01, test + 0.01) == pytest.approx(ssim(ref, test), abs=1e-4)


def test_ssim_frame_smaller_than_window():
    """Frames under 11x11 cannot be scored."""
    with pytest.raises(DimensionError):
        ssim(np.zeros((8, 20)), np.zeros((8, 20)))


def test_evaluate_identical_video():
    """Perfect frames are counted separately and excluded from the PSNR mean."""
    video = RawVideo(np.random.default_rng(1).random((3, 16, 16)))
    score = evaluate_video(video, video)

    assert score.mean_psnr is None
    assert score.infinite_psnr_frames == 3
    assert score.mean_ssim == pytest.approx(1.0)


def test_evaluate_mixed_video():
    """The PSNR mean covers finite frames only."""
    hr = np.zeros((2, 16, 16), dtype=np.float32)
    sr = hr.copy()
    sr[1] += 0.1
    score = evaluate_video(RawVideo(sr), RawVideo(hr))

    assert score.infinite_psnr_frames == 1
    assert score.mean_psnr == pytest.approx(20.0, abs=1e-4)
    assert math.isinf(score.frames[0].psnr)


def test_evaluate_border_shaves_edges():
    """Errors confined to the border vanish once it is shaved."""
    hr = np.zeros((1, 24, 24), dtype=np.float32)
    sr = hr.copy()
    sr[:, :2] = 1.0

    assert evaluate_video(RawVideo(sr), RawVideo(hr)).mean_psnr is not None
    assert evaluate_video(RawVideo(sr), RawVideo(hr), border=2).infinite_psnr_frames == 1


def test_evaluate_frame_count_mismatch():
    """Both videos need the same number of frames."""
    with pytest.raises(DimensionError) as excinfo:
        evaluate_video(RawVideo(np.zeros((2, 16, 16))), RawVideo(np.zeros((3, 16, 16))))
    assert excinfo.value.axis == 't'


def test_evaluate_invalid_border():
    """A border that eats the whole frame is rejected."""
    video = RawVideo(np.zeros((1, 16, 16)))
    with pytest.raises(ConfigError):
        evaluate_video(video, video, border=8)


def test_write_scores(tmp_path):
    """Per-frame rows and a JSON summary are written."""
    hr = np.zeros((2, 16, 16), dtype=np.float32)
    sr = hr + np.float32(0.1)
    csv_path, json_path = write_scores(evaluate_video(RawVideo(sr), RawVideo(hr)), tmp_path)

    with csv_path.open() as f:
        rows = list(csv.DictReader(f))
    assert [r['frame'] for r in rows] == ['0', '1']
    summary = json.loads(json_path.read_text())
    assert summary['frames'] == 2
    assert summary['ssim_settings']['window'] == 11
