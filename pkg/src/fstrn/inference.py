"""Whole-video super-resolution with frame padding and feathered spatial tiles."""

import logging

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator

from .constants.defaults import TILE_OVERLAP, TILE_SIZE
from .data import pad_frames
from .model import FstrnModel, fstrn_forward
from .tensor import VideoTensor, no_grad
from .video_io import RawVideo

logger = logging.getLogger(__name__)


class InferenceConfig(BaseModel):
    """Tiling of large frames, in LR pixels.

    Attributes:
        tile (int): Side of a square LR tile.
        overlap (int): LR pixels shared by neighbouring tiles.
        batch_frames (int): Centre windows run through the network together.
    """

    model_config = ConfigDict(frozen=True, extra='forbid')

    tile: int = Field(default=TILE_SIZE, ge=1)
    overlap: int = Field(default=TILE_OVERLAP, ge=0)
    batch_frames: int = Field(default=8, ge=1)

    @model_validator(mode='after')
    def _overlap_below_tile(self) -> 'InferenceConfig':
        if self.overlap >= self.tile:
            msg = f'overlap ({self.overlap}) must be smaller than tile ({self.tile})'
            raise ValueError(msg)
        return self


def tile_starts(extent: int, tile: int, overlap: int) -> list[int]:
    """Start offsets covering ``[0, extent)``; the last tile is flush with the edge."""
    if extent <= tile:
        return [0]
    starts = list(range(0, extent - tile + 1, tile - overlap))
    if starts[-1] + tile < extent:
        starts.append(extent - tile)
    return starts


def feather(length: int, ramp: int) -> np.ndarray:
    """1-D blending weights rising linearly over ``ramp`` samples at both ends."""
    if ramp <= 0:
        return np.ones(length)
    idx = np.arange(length)
    return np.minimum(np.minimum(idx + 1, length - idx), ramp) / ramp


def super_resolve(model: FstrnModel, video: RawVideo, icfg: InferenceConfig | None = None) -> RawVideo:
    """Upscale every frame of ``video`` by the model's scale.

    The video is edge-padded by ``in_frames // 2`` frames so each input frame
    is the centre of one window; the output therefore has as many frames as
    the input. Frames larger than one tile are processed as overlapping
    tiles whose outputs are blended with feathered weights.

    Args:
        model (FstrnModel): Trained parameters; run in eval mode without gradients.
        video (RawVideo): LR luma video.
        icfg (InferenceConfig, optional): Tiling; defaults apply when omitted.

    Returns:
        RawVideo: ``(T, H*r, W*r)`` frames clipped to ``[0, 1]``.
    """
    icfg = icfg or InferenceConfig()
    cfg = model.config
    r = cfg.scale
    half = cfg.center_index
    dtype = model.lfe.weight.data.dtype
    padded = pad_frames(video, half).frames
    # (T, in_frames, H, W): window t is centred on input frame t
    windows = np.moveaxis(np.lib.stride_tricks.sliding_window_view(padded, cfg.in_frames, axis=0), -1, 1)

    t, h, w = video.num_frames, video.height, video.width
    ys = tile_starts(h, icfg.tile, icfg.overlap)
    xs = tile_starts(w, icfg.tile, icfg.overlap)
    th, tw = min(icfg.tile, h), min(icfg.tile, w)
    weight = np.outer(feather(th * r, icfg.overlap * r), feather(tw * r, icfg.overlap * r))
    out = np.zeros((t, h * r, w * r))
    norm = np.zeros((h * r, w * r))
    logger.info('Super-resolving %d frames of %dx%d in %d tiles', t, w, h, len(ys) * len(xs))

    with no_grad():
        for y0 in ys:
            for x0 in xs:
                rows = slice(y0 * r, (y0 + th) * r)
                cols = slice(x0 * r, (x0 + tw) * r)
                for b in range(0, t, icfg.batch_frames):
                    clip = windows[b:b + icfg.batch_frames, :, y0:y0 + th, x0:x0 + tw]
                    sr = fstrn_forward(VideoTensor(clip[:, None], dtype=dtype), model, training=False)
                    out[b:b + icfg.batch_frames, rows, cols] += sr.data[:, 0, half] * weight
                norm[rows, cols] += weight

    frames = np.clip(out / norm, 0.0, 1.0).astype(np.float32)
    return RawVideo(frames, video.fps, video.source_format)
