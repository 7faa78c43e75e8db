"""Luma-plane video reading and writing: y4m, raw YUV 4:2:0 and PNG sequences."""

from dataclasses import dataclass
from fractions import Fraction
import logging
from pathlib import Path
import re
from typing import Literal

import numpy as np
from PIL import Image

from .constants.defaults import LUMA_WEIGHTS
from .errors import ConfigError, DimensionError, IngestionError

logger = logging.getLogger(__name__)

VideoFormat = Literal['auto', 'y4m', 'yuv', 'png']

Y4M_MAGIC = b'YUV4MPEG2'
FRAME_INDICATOR = b'FRAME'
DEFAULT_FPS = 25.0

# (horizontal, vertical) chroma subsampling divisors; None marks luma-only
_Y4M_CHROMA: dict[str, tuple[int, int] | None] = {
    '420': (2, 2),
    '420jpeg': (2, 2),
    '420paldv': (2, 2),
    '420mpeg2': (2, 2),
    '422': (2, 1),
    '444': (1, 1),
    'mono': None,
}


@dataclass(frozen=True)
class RawVideo:
    """A luma-only video with values in ``[0, 1]``.

    Attributes:
        frames (np.ndarray): Read-only float32 array ``(T, H, W)``.
        fps (float | None): Frame rate, when the source declares one.
        source_format (str): Tag of the reader that produced it.
    """

    frames: np.ndarray
    fps: float | None = None
    source_format: str = 'array'

    def __post_init__(self) -> None:
        """Normalise to a read-only float32 array and check the shape."""
        frames = np.array(self.frames, dtype=np.float32)
        if frames.ndim != 3:
            msg = f'RawVideo frames must be (T, H, W), got shape {frames.shape}'
            raise DimensionError(msg, axis='rank')
        if frames.shape[0] == 0:
            msg = 'Video has no frames'
            raise IngestionError(msg, 0)
        frames.flags.writeable = False
        object.__setattr__(self, 'frames', frames)

    @classmethod
    def from_planes(cls, planes: list[np.ndarray], fps: float | None = None, source_format: str = 'array') -> 'RawVideo':
        """Stack equally sized planes; 8-bit planes are scaled by 1/255.

        Raises:
            DimensionError: If planes differ in size.
        """
        if not planes:
            msg = 'Video has no frames'
            raise IngestionError(msg, 0)
        shape = planes[0].shape
        for i, plane in enumerate(planes):
            if plane.shape != shape:
                msg = f'Frame {i} is {plane.shape}, frame 0 is {shape}'
                raise DimensionError(msg, axis='h' if plane.shape[:1] != shape[:1] else 'w')
        stack = np.stack(planes)
        if stack.dtype == np.uint8:
            stack = stack.astype(np.float32) / 255.0
        return cls(stack, fps, source_format)

    @property
    def num_frames(self) -> int:
        """Number of frames ``T``."""
        return int(self.frames.shape[0])

    @property
    def height(self) -> int:
        """Frame height ``H``."""
        return int(self.frames.shape[1])

    @property
    def width(self) -> int:
        """Frame width ``W``."""
        return int(self.frames.shape[2])


def detect_format(path: Path) -> str:
    """Infer the container from the path: directory -> png, else by suffix.

    Raises:
        IngestionError: If the suffix is not recognised.
    """
    if path.is_dir():
        return 'png'
    suffix = path.suffix.lower()
    if suffix == '.y4m':
        return 'y4m'
    if suffix == '.yuv':
        return 'yuv'
    msg = f'Cannot infer video format of {path}; use a .y4m or .yuv file or a PNG directory'
    raise IngestionError(msg, 0)


def _chroma_bytes(width: int, height: int, subsampling: tuple[int, int] | None) -> int:
    if subsampling is None:
        return 0
    sx, sy = subsampling
    return 2 * (-(-width // sx)) * (-(-height // sy))


def _parse_y4m_header(raw: bytes) -> tuple[int, int, float | None, str, int]:
    end = raw.find(b'\n')
    if not raw.startswith(Y4M_MAGIC) or end < 0:
        msg = 'Missing YUV4MPEG2 header'
        raise IngestionError(msg, 0)
    width = height = None
    fps: float | None = None
    colorspace = '420jpeg'
    position = len(Y4M_MAGIC) + 1
    for token in raw[len(Y4M_MAGIC):end].decode('ascii', errors='replace').split():
        key, value = token[0], token[1:]
        try:
            if key == 'W':
                width = int(value)
            elif key == 'H':
                height = int(value)
            elif key == 'F':
                num, den = value.split(':')
                fps = int(num) / int(den) if int(den) else None
            elif key == 'C':
                colorspace = value
        except ValueError as e:
            msg = f'Malformed y4m header token {token!r}'
            raise IngestionError(msg, position) from e
        position += len(token) + 1
    if not width or not height or width < 1 or height < 1:
        msg = 'y4m header must declare positive W and H'
        raise IngestionError(msg, 0)
    if colorspace not in _Y4M_CHROMA:
        msg = f'Unsupported y4m colorspace C{colorspace}; only 8-bit 4:2:0, 4:2:2, 4:4:4 and mono are read'
        raise IngestionError(msg, 0)
    return width, height, fps, colorspace, end + 1


def read_y4m(path: Path) -> RawVideo:
    """Read the Y plane of every frame of a y4m file.

    Raises:
        IngestionError: On a bad header, a bad frame marker or a truncated frame.
    """
    raw = path.read_bytes()
    width, height, fps, colorspace, offset = _parse_y4m_header(raw)
    luma = width * height
    frame_bytes = luma + _chroma_bytes(width, height, _Y4M_CHROMA[colorspace])
    planes = []
    while offset < len(raw):
        if not raw.startswith(FRAME_INDICATOR, offset):
            msg = f'Expected FRAME marker for frame {len(planes)}'
            raise IngestionError(msg, offset)
        line_end = raw.find(b'\n', offset)
        if line_end < 0:
            msg = f'Unterminated FRAME line for frame {len(planes)}'
            raise IngestionError(msg, offset)
        start = line_end + 1
        if start + frame_bytes > len(raw):
            msg = f'Truncated frame {len(planes)}: need {frame_bytes} bytes, {len(raw) - start} left'
            raise IngestionError(msg, start)
        planes.append(np.frombuffer(raw, dtype=np.uint8, count=luma, offset=start).reshape(height, width))
        offset = start + frame_bytes
    if not planes:
        msg = 'y4m file has no frames'
        raise IngestionError(msg, offset)
    return RawVideo.from_planes(planes, fps, 'y4m')


def read_yuv420(path: Path, width: int, height: int) -> RawVideo:
    """Read the Y planes of headerless planar 8-bit YUV 4:2:0.

    Raises:
        IngestionError: If the size is not a whole number of frames.
    """
    raw = path.read_bytes()
    luma = width * height
    frame_bytes = luma + _chroma_bytes(width, height, (2, 2))
    if not raw or len(raw) % frame_bytes:
        msg = f'{path.name}: {len(raw)} bytes is not a whole number of {width}x{height} 4:2:0 frames'
        raise IngestionError(msg, len(raw) - len(raw) % frame_bytes)
    planes = [
        np.frombuffer(raw, dtype=np.uint8, count=luma, offset=i * frame_bytes).reshape(height, width)
        for i in range(len(raw) // frame_bytes)
    ]
    return RawVideo.from_planes(planes, None, 'yuv')


def _frame_number(path: Path) -> tuple[int, str]:
    digits = re.findall(r'\d+', path.stem)
    return (int(digits[-1]) if digits else -1, path.name)


def _png_luma(image: Image.Image) -> np.ndarray:
    if image.mode in ('I;16', 'I;16B', 'I;16L', 'I'):
        return np.asarray(image, dtype=np.float64) / 65535.0
    if image.mode == 'L':
        return np.asarray(image, dtype=np.float64) / 255.0
    rgb = np.asarray(image.convert('RGB'), dtype=np.float64) / 255.0
    return rgb @ np.asarray(LUMA_WEIGHTS)


def read_png_sequence(directory: Path) -> RawVideo:
    """Read numbered PNGs in frame order; colour images are reduced to BT.601 luma.

    Raises:
        IngestionError: If the directory holds no PNG or a file cannot be decoded.
    """
    files = sorted(directory.glob('*.png'), key=_frame_number)
    if not files:
        msg = f'No PNG frames in {directory}'
        raise IngestionError(msg, 0)
    planes = []
    for file in files:
        try:
            with Image.open(file) as image:
                planes.append(_png_luma(image).astype(np.float32))
        except OSError as e:
            msg = f'Cannot decode {file.name}: {e!s}'
            raise IngestionError(msg, 0) from e
    try:
        return RawVideo.from_planes(planes, None, 'png')
    except DimensionError as e:
        raise IngestionError(str(e), 0) from e


def load_video(
    path: Path | str,
    fmt: VideoFormat = 'auto',
    width: int | None = None,
    height: int | None = None,
) -> RawVideo:
    """Load the luma plane of a video as floats in ``[0, 1]``.

    Args:
        path: A ``.y4m`` file, a raw ``.yuv`` file or a directory of numbered PNGs.
        fmt: Container; ``auto`` infers it from the path.
        width: Frame width, required for raw YUV.
        height: Frame height, required for raw YUV.

    Returns:
        The decoded video.

    Raises:
        ConfigError: If raw YUV is requested without dimensions.
        IngestionError: If the file is missing, unknown, truncated or inconsistent.
    """
    path = Path(path)
    if not path.exists():
        msg = f'Video {path} does not exist'
        raise IngestionError(msg, 0)
    kind = detect_format(path) if fmt == 'auto' else fmt
    if kind == 'yuv':
        if not width or not height:
            msg = 'Raw YUV input needs explicit width and height'
            raise ConfigError(msg)
        video = read_yuv420(path, width, height)
    elif kind == 'y4m':
        video = read_y4m(path)
    elif kind == 'png':
        video = read_png_sequence(path)
    else:
        msg = f'Unknown video format {kind!r}'
        raise IngestionError(msg, 0)
    logger.debug('Loaded %s: %d frames of %dx%d', path, video.num_frames, video.width, video.height)
    return video


def quantize(frames: np.ndarray) -> np.ndarray:
    """Round ``[0, 1]`` floats to 8-bit codes."""
    return np.clip(np.rint(np.asarray(frames, dtype=np.float64) * 255.0), 0, 255).astype(np.uint8)


def write_y4m(video: RawVideo, path: Path) -> Path:
    """Write 8-bit 4:2:0 y4m with neutral chroma."""
    rate = Fraction(video.fps or DEFAULT_FPS).limit_denominator(1001)
    header = f'YUV4MPEG2 W{video.width} H{video.height} F{rate.numerator}:{rate.denominator} Ip A1:1 C420jpeg\n'
    chroma = bytes([128]) * _chroma_bytes(video.width, video.height, (2, 2))
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open('wb') as f:
        f.write(header.encode('ascii'))
        for plane in quantize(video.frames):
            f.write(FRAME_INDICATOR + b'\n')
            f.write(plane.tobytes())
            f.write(chroma)
    return path


def write_png_sequence(video: RawVideo, directory: Path) -> Path:
    """Write one 8-bit grayscale PNG per frame as ``frame_00000.png``..."""
    directory.mkdir(parents=True, exist_ok=True)
    for i, plane in enumerate(quantize(video.frames)):
        Image.fromarray(plane).save(directory / f'frame_{i:05d}.png')
    return directory


def save_video(video: RawVideo, path: Path | str, fmt: VideoFormat = 'auto') -> Path:
    """Write a video as y4m (``.y4m`` path) or as a PNG sequence (any other path, used as a directory).

    Raises:
        ConfigError: If raw YUV output is requested.
    """
    path = Path(path)
    kind = fmt if fmt != 'auto' else ('y4m' if path.suffix.lower() == '.y4m' else 'png')
    if kind == 'y4m':
        return write_y4m(video, path)
    if kind == 'png':
        return write_png_sequence(video, path)
    msg = f'Cannot write video format {kind!r}; use y4m or png'
    raise ConfigError(msg)
