"""PSNR and SSIM on luma frames in ``[0, 1]``."""

import csv
from dataclasses import dataclass
import math
from pathlib import Path
from typing import Any

import numpy as np
from skimage.metrics import structural_similarity

from .constants.defaults import SSIM_K1, SSIM_K2, SSIM_SIGMA, SSIM_WINDOW
from .errors import ConfigError, DimensionError
from .report_utils import json_safe, write_json
from .video_io import RawVideo

SSIM_SETTINGS: dict[str, Any] = {
    'window': SSIM_WINDOW,
    'gaussian_sigma': SSIM_SIGMA,
    'K1': SSIM_K1,
    'K2': SSIM_K2,
    'data_range': 1.0,
    'sample_covariance': False,
}


@dataclass(frozen=True)
class FrameScore:
    """Scores of one frame; ``psnr`` is ``inf`` for a perfect match."""

    psnr: float
    ssim: float


@dataclass(frozen=True)
class VideoScore:
    """Per-frame scores and their means.

    ``mean_psnr`` averages finite frames only and is ``None`` when every
    frame matched exactly; those frames are counted in ``infinite_psnr_frames``.
    """

    frames: tuple[FrameScore, ...]
    mean_psnr: float | None
    mean_ssim: float
    infinite_psnr_frames: int
    border: int = 0

    def summary(self) -> dict[str, Any]:
        """JSON-ready summary including the SSIM constants."""
        return {
            'frames': len(self.frames),
            'mean_psnr': self.mean_psnr,
            'mean_ssim': self.mean_ssim,
            'infinite_psnr_frames': self.infinite_psnr_frames,
            'border': self.border,
            'ssim_settings': SSIM_SETTINGS,
        }


def _check_pair(ref: np.ndarray, test: np.ndarray) -> None:
    if ref.shape != test.shape:
        axis = 'h' if ref.shape[:1] != test.shape[:1] else 'w'
        msg = f'Frame shapes differ: {ref.shape} vs {test.shape}'
        raise DimensionError(msg, axis=axis)


def psnr(ref: np.ndarray, test: np.ndarray, peak: float = 1.0) -> float:
    """Peak signal-to-noise ratio in dB, ``inf`` when the frames are identical.

    Raises:
        DimensionError: If the shapes differ.
    """
    ref = np.asarray(ref, dtype=np.float64)
    test = np.asarray(test, dtype=np.float64)
    _check_pair(ref, test)
    mse = float(np.mean((ref - test) ** 2))
    if mse == 0.0:
        return math.inf
    return 10.0 * math.log10(peak * peak / mse)


def ssim(ref: np.ndarray, test: np.ndarray) -> float:
    """Mean local SSIM with an 11x11 Gaussian window (sigma 1.5), K1=0.01, K2=0.03, range 1.

    Raises:
        DimensionError: If the shapes differ or a side is shorter than the window.
    """
    ref = np.asarray(ref, dtype=np.float64)
    test = np.asarray(test, dtype=np.float64)
    _check_pair(ref, test)
    if ref.ndim != 2 or min(ref.shape) < SSIM_WINDOW:
        msg = f'SSIM needs 2-D frames of at least {SSIM_WINDOW}x{SSIM_WINDOW}, got {ref.shape}'
        raise DimensionError(msg, axis='h' if ref.ndim == 2 and ref.shape[0] < SSIM_WINDOW else 'w')
    return float(structural_similarity(
        ref,
        test,
        win_size=SSIM_WINDOW,
        gaussian_weights=True,
        sigma=SSIM_SIGMA,
        use_sample_covariance=False,
        K1=SSIM_K1,
        K2=SSIM_K2,
        data_range=1.0,
    ))


def evaluate_video(sr: RawVideo, hr: RawVideo, border: int = 0) -> VideoScore:
    """Score every frame of ``sr`` against ``hr``.

    Args:
        sr: Super-resolved video.
        hr: Reference video.
        border: Pixels shaved from each side before scoring.

    Raises:
        DimensionError: If frame counts or sizes differ.
        ConfigError: If ``border`` is negative or leaves nothing to score.
    """
    if sr.num_frames != hr.num_frames:
        msg = f'Frame counts differ: {sr.num_frames} vs {hr.num_frames}'
        raise DimensionError(msg, axis='t')
    if border < 0 or 2 * border >= min(hr.height, hr.width):
        msg = f'Border {border} is invalid for {hr.height}x{hr.width} frames'
        raise ConfigError(msg)
    crop = (slice(border, hr.height - border), slice(border, hr.width - border))
    scores = tuple(
        FrameScore(psnr(h[crop], s[crop]), ssim(h[crop], s[crop]))
        for s, h in zip(sr.frames, hr.frames, strict=True)
    )
    finite = [s.psnr for s in scores if math.isfinite(s.psnr)]
    return VideoScore(
        frames=scores,
        mean_psnr=float(np.mean(finite)) if finite else None,
        mean_ssim=float(np.mean([s.ssim for s in scores])),
        infinite_psnr_frames=len(scores) - len(finite),
        border=border,
    )


def write_scores(score: VideoScore, directory: Path) -> tuple[Path, Path]:
    """Write ``scores.csv`` (frame, psnr, ssim) and ``summary.json``."""
    directory.mkdir(parents=True, exist_ok=True)
    csv_path = directory / 'scores.csv'
    with csv_path.open('w', newline='') as f:
        writer = csv.writer(f, lineterminator='\n')
        writer.writerow(['frame', 'psnr', 'ssim'])
        for i, frame in enumerate(score.frames):
            writer.writerow([i, repr(frame.psnr) if math.isfinite(frame.psnr) else 'inf', repr(frame.ssim)])
    json_path = write_json(directory / 'summary.json', json_safe(score.summary()))
    return csv_path, json_path
