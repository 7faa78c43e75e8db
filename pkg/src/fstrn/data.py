"""Training data: degradation, volume cropping with augmentation, frame padding and dataset files."""

from collections.abc import Callable, Sequence
from dataclasses import dataclass
import json
import logging
import math
from pathlib import Path
from typing import Any, Literal

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, ValidationError
from scipy import ndimage

from .archive import TensorArchive
from .config import ScaleFactor, format_validation_error
from .constants.defaults import (
    AUGMENTATIONS,
    DEFAULT_FRAMES,
    DEFAULT_SCALE,
    GAUSSIAN_SIGMA,
    PATCH_SIZE,
    SPATIAL_STRIDE,
    TEMPORAL_STRIDE,
)
from .errors import AlignmentError, ConfigError, DegradationError, DimensionError, FormatError, IngestionError
from .resample import resample_planes
from .tensor import VideoTensor
from .video_io import RawVideo

logger = logging.getLogger(__name__)

DATASET_MANIFEST = 'manifest.json'
DATASET_BLOB = 'volumes.fstrn'


class DegradationSpec(BaseModel):
    """How LR frames are synthesised from HR frames."""

    model_config = ConfigDict(frozen=True, extra='forbid')

    gaussian_sigma: float = Field(default=GAUSSIAN_SIGMA, gt=0.0)
    blur_radius: int | None = Field(default=None, ge=1)
    scale: ScaleFactor = DEFAULT_SCALE
    downsample: Literal['bicubic'] = 'bicubic'

    @property
    def radius(self) -> int:
        """Kernel truncation radius, ``ceil(3 sigma)`` unless set."""
        return self.blur_radius if self.blur_radius is not None else math.ceil(3.0 * self.gaussian_sigma)


class VolumeSpec(BaseModel):
    """Sliding-window volume geometry on the HR side."""

    model_config = ConfigDict(frozen=True, extra='forbid')

    patch: int = Field(default=PATCH_SIZE, ge=1)
    frames_per_volume: int = Field(default=DEFAULT_FRAMES, ge=1)
    spatial_stride: int = Field(default=SPATIAL_STRIDE, ge=1)
    temporal_stride: int = Field(default=TEMPORAL_STRIDE, ge=1)
    augment: bool = False

    @property
    def augmentations(self) -> tuple[str, ...]:
        """Augmentation tags applied to every window."""
        return AUGMENTATIONS if self.augment else AUGMENTATIONS[:1]


AUGMENT_FNS: dict[str, Callable[[np.ndarray], np.ndarray]] = {
    'identity': lambda v: v,
    'rot90': lambda v: np.rot90(v, 1, axes=(-2, -1)),
    'hflip': lambda v: v[..., ::-1],
    'vflip': lambda v: v[..., ::-1, :],
}


@dataclass(frozen=True)
class VolumeOrigin:
    """Where a stored volume pair came from (HR coordinates)."""

    video_id: str
    t0: int
    y0: int
    x0: int
    aug: str

    def to_dict(self) -> dict[str, Any]:
        """JSON form."""
        return {'video_id': self.video_id, 't0': self.t0, 'y0': self.y0, 'x0': self.x0, 'aug': self.aug}


@dataclass(frozen=True)
class ClipDataset:
    """Immutable aligned LR/HR volume pairs.

    Attributes:
        lr (np.ndarray): Read-only ``(N, T, p/r, p/r)`` LR volumes.
        hr (np.ndarray): Read-only ``(N, T, p, p)`` HR volumes.
        origins (tuple[VolumeOrigin, ...]): Provenance of every pair.
        scale (int): HR/LR size ratio.
        spec (VolumeSpec): Cropping geometry.
        degradation (DegradationSpec | None): How the LR side was produced.
    """

    lr: np.ndarray
    hr: np.ndarray
    origins: tuple[VolumeOrigin, ...]
    scale: int
    spec: VolumeSpec
    degradation: DegradationSpec | None = None

    def __post_init__(self) -> None:
        """Check pair geometry and freeze the arrays."""
        n = len(self.origins)
        if self.lr.shape[0] != n or self.hr.shape[0] != n:
            msg = f'{n} origins for {self.lr.shape[0]} LR and {self.hr.shape[0]} HR volumes'
            raise DimensionError(msg, axis='n')
        if n and (self.lr.shape[1] != self.hr.shape[1]
                  or self.lr.shape[2] * self.scale != self.hr.shape[2]
                  or self.lr.shape[3] * self.scale != self.hr.shape[3]):
            msg = f'LR volumes {self.lr.shape[1:]} are not HR volumes {self.hr.shape[1:]} downscaled x{self.scale}'
            raise DimensionError(msg, axis='h')
        for array in (self.lr, self.hr):
            array.flags.writeable = False

    def __len__(self) -> int:
        """Number of volume pairs."""
        return len(self.origins)

    @property
    def frames(self) -> int:
        """Frames per volume."""
        return int(self.hr.shape[1]) if len(self) else self.spec.frames_per_volume

    def pair(self, index: int) -> tuple[VideoTensor, VideoTensor]:
        """One pair as ``(1, 1, T, h, w)`` tensors."""
        return VideoTensor(self.lr[index][None, None]), VideoTensor(self.hr[index][None, None])

    def batch(self, indices: Sequence[int] | np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Stack the selected pairs as ``(B, 1, T, h, w)`` float32 copies."""
        idx = np.asarray(indices, dtype=np.int64)
        return self.lr[idx][:, None].astype(np.float32), self.hr[idx][:, None].astype(np.float32)

    @classmethod
    def concat(cls, parts: Sequence['ClipDataset']) -> 'ClipDataset':
        """Join datasets with the same scale and volume geometry.

        Raises:
            ConfigError: If the parts disagree on scale or geometry.
        """
        if not parts:
            msg = 'Nothing to concatenate'
            raise ConfigError(msg)
        first = parts[0]
        for part in parts[1:]:
            if part.scale != first.scale or part.spec != first.spec:
                msg = 'Datasets differ in scale or volume geometry'
                raise ConfigError(msg)
        return cls(
            lr=np.concatenate([p.lr for p in parts]),
            hr=np.concatenate([p.hr for p in parts]),
            origins=tuple(o for p in parts for o in p.origins),
            scale=first.scale,
            spec=first.spec,
            degradation=first.degradation,
        )


def crop_to_multiple(v: RawVideo, scale: int) -> RawVideo:
    """Centre-crop frames so height and width are multiples of ``scale``."""
    h = v.height - v.height % scale
    w = v.width - v.width % scale
    if (h, w) == (v.height, v.width):
        return v
    top = (v.height - h) // 2
    left = (v.width - w) // 2
    return RawVideo(v.frames[:, top:top + h, left:left + w], v.fps, v.source_format)


def blur_frames(frames: np.ndarray, sigma: float, radius: int) -> np.ndarray:
    """Normalised Gaussian blur of every ``(h, w)`` plane, reflect-padded and truncated at ``radius``."""
    return ndimage.gaussian_filter(
        np.asarray(frames, dtype=np.float64), sigma=sigma, mode='reflect', radius=radius, axes=(-2, -1),
    )


def degrade(v: RawVideo, spec: DegradationSpec) -> RawVideo:
    """Blur then bicubically downsample every frame by ``spec.scale``.

    Frames are centre-cropped to a multiple of the scale first.

    Raises:
        DegradationError: If a frame side is shorter than twice the blur radius.
    """
    cropped = crop_to_multiple(v, spec.scale)
    if min(cropped.height, cropped.width) < 2 * spec.radius:
        msg = (f'Frames of {cropped.height}x{cropped.width} are smaller than twice the blur radius '
               f'{spec.radius}')
        raise DegradationError(msg)
    blurred = blur_frames(cropped.frames, spec.gaussian_sigma, spec.radius)
    lr = resample_planes(blurred, cropped.height // spec.scale, cropped.width // spec.scale, spec.downsample)
    return RawVideo(np.clip(lr, 0.0, 1.0), v.fps, v.source_format)


def window_count(extent: int, size: int, stride: int) -> int:
    """Sliding windows of ``size`` with ``stride`` that fit in ``extent``."""
    return (extent - size) // stride + 1 if extent >= size else 0


def volume_grid(frames: int, height: int, width: int, spec: VolumeSpec) -> list[tuple[int, int, int]]:
    """HR ``(t0, y0, x0)`` corners in ``t``, ``y``, ``x`` order."""
    nt = window_count(frames, spec.frames_per_volume, spec.temporal_stride)
    ny = window_count(height, spec.patch, spec.spatial_stride)
    nx = window_count(width, spec.patch, spec.spatial_stride)
    return [
        (it * spec.temporal_stride, iy * spec.spatial_stride, ix * spec.spatial_stride)
        for it in range(nt) for iy in range(ny) for ix in range(nx)
    ]


def extract_volume(
    hr: np.ndarray,
    lr: np.ndarray,
    origin: VolumeOrigin,
    spec: VolumeSpec,
    scale: int,
) -> tuple[np.ndarray, np.ndarray]:
    """Cut one co-located pair described by ``origin`` and apply its augmentation.

    Raises:
        AlignmentError: If the HR corner does not fall on a whole LR pixel.
    """
    if origin.y0 % scale or origin.x0 % scale or spec.patch % scale:
        msg = f'HR crop at y={origin.y0}, x={origin.x0}, size {spec.patch} is not divisible by scale {scale}'
        raise AlignmentError(msg)
    t = slice(origin.t0, origin.t0 + spec.frames_per_volume)
    p, lp = spec.patch, spec.patch // scale
    ly, lx = origin.y0 // scale, origin.x0 // scale
    augment = AUGMENT_FNS[origin.aug]
    hr_vol = augment(hr[t, origin.y0:origin.y0 + p, origin.x0:origin.x0 + p])
    lr_vol = augment(lr[t, ly:ly + lp, lx:lx + lp])
    return np.ascontiguousarray(lr_vol), np.ascontiguousarray(hr_vol)


def crop_volumes(
    hr: RawVideo,
    lr: RawVideo,
    spec: VolumeSpec,
    scale: int,
    video_id: str = 'video0',
    degradation: DegradationSpec | None = None,
) -> ClipDataset:
    """Cut aligned LR/HR volumes with a sliding window over ``(t, y, x)``.

    Each window yields the identity pair and, with ``spec.augment``, its
    rot90, hflip and vflip copies right after it.

    Raises:
        DimensionError: If the LR video is not the HR video downscaled by ``scale``.
        ConfigError: If the patch is smaller than the scale or no window fits.
        AlignmentError: If a crop corner is not divisible by ``scale``.
    """
    if lr.num_frames != hr.num_frames:
        msg = f'LR has {lr.num_frames} frames, HR has {hr.num_frames}'
        raise DimensionError(msg, axis='t')
    if lr.height * scale != hr.height or lr.width * scale != hr.width:
        axis = 'h' if lr.height * scale != hr.height else 'w'
        msg = f'Axis {axis}: LR {lr.height}x{lr.width} is not HR {hr.height}x{hr.width} divided by {scale}'
        raise DimensionError(msg, axis=axis)
    if spec.patch < scale:
        msg = f'Patch {spec.patch} is smaller than scale {scale}'
        raise ConfigError(msg)
    grid = volume_grid(hr.num_frames, hr.height, hr.width, spec)
    if not grid:
        msg = (f'{video_id}: {hr.num_frames} frames of {hr.height}x{hr.width} cannot hold one '
               f'{spec.frames_per_volume}x{spec.patch}x{spec.patch} volume')
        raise ConfigError(msg)

    origins = [VolumeOrigin(video_id, t0, y0, x0, aug) for t0, y0, x0 in grid for aug in spec.augmentations]
    lp = spec.patch // scale
    lr_out = np.empty((len(origins), spec.frames_per_volume, lp, lp), dtype=np.float32)
    hr_out = np.empty((len(origins), spec.frames_per_volume, spec.patch, spec.patch), dtype=np.float32)
    for i, origin in enumerate(origins):
        lr_out[i], hr_out[i] = extract_volume(hr.frames, lr.frames, origin, spec, scale)
    logger.info('%s: %d windows, %d volumes', video_id, len(grid), len(origins))
    return ClipDataset(lr_out, hr_out, tuple(origins), scale, spec, degradation)


def build_dataset(
    videos: Sequence[tuple[str, RawVideo]],
    degradation: DegradationSpec,
    spec: VolumeSpec,
) -> ClipDataset:
    """Degrade each HR video and crop aligned volumes from all of them."""
    parts = []
    for video_id, video in videos:
        hr = crop_to_multiple(video, degradation.scale)
        lr = degrade(hr, degradation)
        parts.append(crop_volumes(hr, lr, spec, degradation.scale, video_id, degradation))
    return ClipDataset.concat(parts)


def pad_frames(v: RawVideo, half_window: int) -> RawVideo:
    """Replicate the first and last frames ``half_window`` times at each end.

    Raises:
        ConfigError: If ``half_window`` is negative.
    """
    if half_window < 0:
        msg = f'half_window must be >= 0, got {half_window}'
        raise ConfigError(msg)
    if v.num_frames == 0:
        msg = 'Cannot pad an empty video'
        raise IngestionError(msg, 0)
    if half_window == 0:
        return v
    padded = np.pad(v.frames, ((half_window, half_window), (0, 0), (0, 0)), mode='edge')
    return RawVideo(padded, v.fps, v.source_format)


def save_dataset(ds: ClipDataset, directory: Path | str) -> Path:
    """Write ``manifest.json`` and the ``volumes.fstrn`` blob into ``directory``."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    manifest = {
        'kind': 'fstrn-dataset',
        'count': len(ds),
        'scale': ds.scale,
        'volume_spec': ds.spec.model_dump(mode='json'),
        'degradation': ds.degradation.model_dump(mode='json') if ds.degradation else None,
        'augmentations': list(ds.spec.augmentations),
        'blob': DATASET_BLOB,
        'origins': [o.to_dict() for o in ds.origins],
    }
    TensorArchive(directory / DATASET_BLOB).write({'kind': 'fstrn-volumes', 'count': len(ds)},
                                                  {'lr': ds.lr, 'hr': ds.hr})
    (directory / DATASET_MANIFEST).write_text(json.dumps(manifest, indent=2, sort_keys=True) + '\n')
    return directory


def load_dataset(directory: Path | str) -> ClipDataset:
    """Read a dataset written by ``save_dataset``.

    Raises:
        FormatError: If the manifest or blob is missing, damaged or inconsistent.
    """
    directory = Path(directory)
    try:
        manifest = json.loads((directory / DATASET_MANIFEST).read_text())
    except (OSError, json.JSONDecodeError) as e:
        msg = f'Cannot read dataset manifest in {directory}: {e!s}'
        raise FormatError(msg, getattr(e, 'pos', 0)) from e
    if manifest.get('kind') != 'fstrn-dataset':
        msg = f'{directory} is not a dataset (kind={manifest.get("kind")!r})'
        raise FormatError(msg, 0)
    _, tensors = TensorArchive(directory / manifest.get('blob', DATASET_BLOB)).read()
    try:
        spec = VolumeSpec.model_validate(manifest['volume_spec'])
        degradation = DegradationSpec.model_validate(manifest['degradation']) if manifest.get('degradation') else None
        origins = tuple(VolumeOrigin(**o) for o in manifest['origins'])
        return ClipDataset(tensors['lr'], tensors['hr'], origins, int(manifest['scale']), spec, degradation)
    except ValidationError as e:
        msg = f'Invalid dataset manifest: {format_validation_error(e)}'
        raise FormatError(msg, 0) from e
    except (KeyError, TypeError, DimensionError) as e:
        msg = f'Inconsistent dataset in {directory}: {e!s}'
        raise FormatError(msg, 0) from e
