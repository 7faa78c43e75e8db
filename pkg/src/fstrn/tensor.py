"""Rank-5 video tensors with exact reverse-mode gradients.

A ``VideoTensor`` holds an ``(n, c, t, h, w)`` array. Every operation in this
module records a closure that pushes the upstream gradient to its inputs and
accumulates parameter gradients into ``Parameter.grad``; calling
``VideoTensor.backward`` replays those closures in reverse topological order.
Convolution inner products are accumulated in float64 and stored back in the
input precision.
"""

from collections.abc import Callable, Iterator
from concurrent.futures import ThreadPoolExecutor
from contextlib import contextmanager
from dataclasses import dataclass
import threading

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .errors import ConfigError, DimensionError, NumericError
from .resample import RESIZE_MODES, ResizeMode, resample_matrix
from .settings import get_settings

AXES = ('n', 'c', 't', 'h', 'w')
Triple = tuple[int, int, int]

_grad_mode = threading.local()


def is_grad_enabled() -> bool:
    """Return whether operations currently record a backward graph."""
    return getattr(_grad_mode, 'enabled', True)


@contextmanager
def no_grad() -> Iterator[None]:
    """Disable graph recording in the current thread."""
    previous = is_grad_enabled()
    _grad_mode.enabled = False
    try:
        yield
    finally:
        _grad_mode.enabled = previous


def _require_finite(array: np.ndarray, what: str) -> None:
    if not np.isfinite(array).all():
        msg = f'{what} contains NaN or infinite values'
        raise NumericError(msg)


class Parameter:
    """A learnable array with a same-shaped gradient buffer.

    Attributes:
        name (str): Dotted name used in checkpoints and censuses.
        data (np.ndarray): Parameter values.
        grad (np.ndarray): Accumulated gradient, same shape and dtype as ``data``.
    """

    __slots__ = ('data', 'grad', 'name')

    def __init__(self, data: np.ndarray, name: str = '') -> None:
        """Wrap an array; the gradient buffer starts at zero."""
        self.data = np.ascontiguousarray(data)
        self.grad = np.zeros_like(self.data)
        self.name = name

    @property
    def shape(self) -> tuple[int, ...]:
        """Shape of the parameter array."""
        return self.data.shape

    @property
    def size(self) -> int:
        """Number of scalar entries."""
        return int(self.data.size)

    def zero_grad(self) -> None:
        """Reset the gradient buffer."""
        self.grad = np.zeros_like(self.data)

    def __repr__(self) -> str:
        """Short description with name and shape."""
        return f'Parameter({self.name!r}, shape={self.data.shape}, dtype={self.data.dtype})'


class VideoTensor:
    """Rank-5 ``(n, c, t, h, w)`` array that participates in reverse-mode differentiation.

    Attributes:
        data (np.ndarray): Values, row-major ``(n, c, t, h, w)``.
        grad (np.ndarray | None): Gradient of the seeded objective, filled by ``backward``.
        requires_grad (bool): Whether gradients are propagated to this tensor.
    """

    __slots__ = ('_backward', '_op', '_parents', 'data', 'grad', 'requires_grad')

    def __init__(
        self,
        data: np.ndarray,
        *,
        requires_grad: bool = False,
        dtype: type | np.dtype = np.float32,
    ) -> None:
        """Create a leaf tensor.

        Args:
            data (np.ndarray): Array-like with five axes.
            requires_grad (bool): Keep a gradient for this leaf.
            dtype: Storage precision; float32 by default, float64 for gradient checks.

        Raises:
            DimensionError: If the array is not rank 5.
            NumericError: If the array contains NaN or infinity.
        """
        array = np.ascontiguousarray(data, dtype=dtype)
        if array.ndim != len(AXES):
            msg = f'VideoTensor needs {len(AXES)} axes (n, c, t, h, w), got shape {array.shape}'
            raise DimensionError(msg, axis='rank')
        _require_finite(array, 'VideoTensor input')
        self.data = array
        self.grad: np.ndarray | None = None
        self.requires_grad = requires_grad
        self._parents: tuple[VideoTensor, ...] = ()
        self._backward: Callable[[], None] | None = None
        self._op = ''

    @classmethod
    def _from_op(cls, data: np.ndarray, *, requires_grad: bool, op: str) -> 'VideoTensor':
        out = cls.__new__(cls)
        out.data = data
        out.grad = None
        out.requires_grad = requires_grad
        out._parents = ()
        out._backward = None
        out._op = op
        return out

    @property
    def shape(self) -> tuple[int, int, int, int, int]:
        """The ``(n, c, t, h, w)`` shape."""
        return self.data.shape  # type: ignore[return-value]

    @property
    def dtype(self) -> np.dtype:
        """Storage dtype."""
        return self.data.dtype

    def numpy(self) -> np.ndarray:
        """Return a copy of the values."""
        return self.data.copy()

    def zero_grad(self) -> None:
        """Drop the accumulated gradient."""
        self.grad = None

    def _accumulate(self, grad: np.ndarray) -> None:
        if not self.requires_grad:
            return
        grad = grad.astype(self.data.dtype, copy=False)
        self.grad = grad.copy() if self.grad is None else self.grad + grad

    def _topological_order(self) -> list['VideoTensor']:
        order: list[VideoTensor] = []
        visited: set[int] = set()
        stack: list[tuple[VideoTensor, bool]] = [(self, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                order.append(node)
                continue
            if id(node) in visited:
                continue
            visited.add(id(node))
            stack.append((node, True))
            stack.extend((parent, False) for parent in node._parents if id(parent) not in visited)
        return order

    def backward(self, grad: np.ndarray | None = None) -> None:
        """Propagate ``grad`` (default all-ones) to every tensor and parameter upstream.

        Args:
            grad (np.ndarray, optional): Gradient of the objective with respect to this tensor.

        Raises:
            DimensionError: If ``grad`` does not match this tensor's shape.
            NumericError: If ``grad`` is not finite.
        """
        seed = np.ones_like(self.data) if grad is None else np.asarray(grad, dtype=self.data.dtype)
        if seed.shape != self.data.shape:
            msg = f'Seed gradient shape {seed.shape} does not match tensor shape {self.data.shape}'
            raise DimensionError(msg, axis=_first_mismatch(seed.shape, self.data.shape))
        _require_finite(seed, 'seed gradient')
        if not self.requires_grad:
            return
        self._accumulate(seed)
        for node in reversed(self._topological_order()):
            if node._backward is not None and node.grad is not None:
                node._backward()

    def __repr__(self) -> str:
        """Short description with shape and origin."""
        origin = self._op or 'leaf'
        return f'VideoTensor(shape={self.data.shape}, dtype={self.data.dtype}, op={origin})'


def _first_mismatch(a: tuple[int, ...], b: tuple[int, ...]) -> str:
    if len(a) != len(b):
        return 'rank'
    for axis, da, db in zip(AXES, a, b, strict=False):
        if da != db:
            return axis
    return 'rank'


def _record(
    data: np.ndarray,
    inputs: tuple[VideoTensor, ...],
    backward: Callable[[np.ndarray], None],
    op: str,
    *,
    has_params: bool = False,
) -> VideoTensor:
    track = is_grad_enabled() and (has_params or any(x.requires_grad for x in inputs))
    out = VideoTensor._from_op(data, requires_grad=track, op=op)
    if track:
        out._parents = inputs

        def run() -> None:
            backward(out.grad)

        out._backward = run
    return out


@dataclass(frozen=True)
class Conv3dSpec:
    """Geometry of a 3-D convolution or transposed convolution.

    Attributes:
        kernel (tuple[int, int, int]): ``(kt, kh, kw)``.
        in_channels (int): Input channel count.
        out_channels (int): Output channel count.
        stride (tuple[int, int, int]): ``(st, sh, sw)``.
        padding (tuple[int, int, int]): Zero padding ``(pt, ph, pw)`` on both sides.
        bias (bool): Whether the layer carries a bias vector.
        output_padding (tuple[int, int, int]): Extra trailing output samples, transposed only.
    """

    kernel: Triple
    in_channels: int
    out_channels: int
    stride: Triple = (1, 1, 1)
    padding: Triple = (0, 0, 0)
    bias: bool = True
    output_padding: Triple = (0, 0, 0)

    def __post_init__(self) -> None:
        """Validate the geometry."""
        for label, values, low in (('kernel', self.kernel, 1), ('stride', self.stride, 1),
                                   ('padding', self.padding, 0), ('output_padding', self.output_padding, 0)):
            if len(values) != 3 or any(int(v) != v or v < low for v in values):
                msg = f'Conv3dSpec.{label} must be three integers >= {low}, got {values}'
                raise ConfigError(msg)
        if self.in_channels < 1 or self.out_channels < 1:
            msg = f'Channel counts must be positive, got in={self.in_channels} out={self.out_channels}'
            raise ConfigError(msg)
        if any(op >= s for op, s in zip(self.output_padding, self.stride, strict=True)):
            msg = f'output_padding {self.output_padding} must be smaller than stride {self.stride}'
            raise ConfigError(msg)

    @classmethod
    def full(cls, in_channels: int, out_channels: int, k: int = 3, *, bias: bool = True) -> 'Conv3dSpec':
        """Same-padded ``k x k x k`` convolution."""
        return cls((k, k, k), in_channels, out_channels, padding=(k // 2, k // 2, k // 2), bias=bias)

    @classmethod
    def spatial(cls, in_channels: int, out_channels: int, k: int = 3, *, bias: bool = True) -> 'Conv3dSpec':
        """Same-padded ``1 x k x k`` convolution (spatial half of a factorized pair)."""
        return cls((1, k, k), in_channels, out_channels, padding=(0, k // 2, k // 2), bias=bias)

    @classmethod
    def temporal(cls, in_channels: int, out_channels: int, k: int = 3, *, bias: bool = True) -> 'Conv3dSpec':
        """Same-padded ``k x 1 x 1`` convolution (temporal half of a factorized pair)."""
        return cls((k, 1, 1), in_channels, out_channels, padding=(k // 2, 0, 0), bias=bias)

    @classmethod
    def upscale(cls, in_channels: int, out_channels: int, scale: int, *, bias: bool = True) -> 'Conv3dSpec':
        """Transposed ``1 x 2r x 2r`` convolution that enlarges h and w exactly ``scale`` times."""
        pad = (scale + 1) // 2
        extra = 2 * pad - scale
        return cls(
            (1, 2 * scale, 2 * scale),
            in_channels,
            out_channels,
            stride=(1, scale, scale),
            padding=(0, pad, pad),
            bias=bias,
            output_padding=(0, extra, extra),
        )

    @property
    def is_spatial(self) -> bool:
        """True for a ``1 x k x k`` kernel."""
        return self.kernel[0] == 1

    @property
    def is_temporal(self) -> bool:
        """True for a ``k x 1 x 1`` kernel."""
        return self.kernel[1] == 1 and self.kernel[2] == 1

    @property
    def kernel_volume(self) -> int:
        """``kt * kh * kw``."""
        kt, kh, kw = self.kernel
        return kt * kh * kw

    @property
    def weight_shape(self) -> tuple[int, int, int, int, int]:
        """``(out_channels, in_channels, kt, kh, kw)``."""
        return (self.out_channels, self.in_channels, *self.kernel)

    def output_dims(self, dims: Triple, *, transposed: bool = False) -> Triple:
        """Compute ``(t, h, w)`` of the output for input dims.

        Raises:
            DimensionError: If any output extent would be smaller than 1.
        """
        out = []
        for axis, d, k, s, p, op in zip(AXES[2:], dims, self.kernel, self.stride, self.padding,
                                         self.output_padding, strict=True):
            size = (d - 1) * s - 2 * p + k + op if transposed else (d + 2 * p - k) // s + 1
            if size < 1:
                msg = f'Axis {axis}: input extent {d} too small for kernel {k}, stride {s}, padding {p}'
                raise DimensionError(msg, axis=axis)
            out.append(size)
        return tuple(out)  # type: ignore[return-value]


@dataclass
class LayerParams:
    """Weights and optional bias of one convolution layer.

    Attributes:
        weight (Parameter): Array shaped ``(out_channels, in_channels, kt, kh, kw)``.
        bias (Parameter | None): Array shaped ``(out_channels,)``.
    """

    weight: Parameter
    bias: Parameter | None = None

    @classmethod
    def init(
        cls,
        spec: Conv3dSpec,
        rng: np.random.Generator,
        name: str,
        dtype: type = np.float32,
    ) -> 'LayerParams':
        """He (fan-in scaled normal) initialisation with zero bias."""
        std = np.sqrt(2.0 / (spec.in_channels * spec.kernel_volume))
        weight = Parameter((rng.standard_normal(spec.weight_shape) * std).astype(dtype), f'{name}.weight')
        bias = Parameter(np.zeros(spec.out_channels, dtype=dtype), f'{name}.bias') if spec.bias else None
        return cls(weight, bias)

    @classmethod
    def zeros(cls, spec: Conv3dSpec, name: str, dtype: type = np.float32) -> 'LayerParams':
        """All-zero layer."""
        bias = Parameter(np.zeros(spec.out_channels, dtype=dtype), f'{name}.bias') if spec.bias else None
        return cls(Parameter(np.zeros(spec.weight_shape, dtype=dtype), f'{name}.weight'), bias)

    def parameters(self) -> Iterator[Parameter]:
        """Yield weight, then bias when present."""
        yield self.weight
        if self.bias is not None:
            yield self.bias


def _map_batches(fn: Callable[[slice], np.ndarray], n: int) -> np.ndarray:
    workers = min(get_settings().threads, n)
    if workers <= 1:
        return fn(slice(0, n))
    bounds = np.linspace(0, n, workers + 1).astype(int)
    chunks = [slice(lo, hi) for lo, hi in zip(bounds[:-1], bounds[1:], strict=True) if hi > lo]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return np.concatenate(list(pool.map(fn, chunks)), axis=0)


def _pad(array: np.ndarray, padding: Triple, extra: Triple = (0, 0, 0)) -> np.ndarray:
    if not any(padding) and not any(extra):
        return array
    width = ((0, 0), (0, 0), *((p, p + e) for p, e in zip(padding, extra, strict=True)))
    return np.pad(array, width)


def _windows(array: np.ndarray, kernel: Triple, stride: Triple, out_dims: Triple) -> np.ndarray:
    view = sliding_window_view(array, kernel, axis=(2, 3, 4))
    st, sh, sw = stride
    ot, oh, ow = out_dims
    return view[:, :, ::st, ::sh, ::sw][:, :, :ot, :oh, :ow]


def _correlate(array: np.ndarray, weight: np.ndarray, stride: Triple, out_dims: Triple) -> np.ndarray:
    """Strided cross-correlation of padded input with ``(o, c, k...)`` weights, float64 result."""
    w64 = weight.astype(np.float64)

    def run(rows: slice) -> np.ndarray:
        win = _windows(array[rows], weight.shape[2:], stride, out_dims)
        out = np.tensordot(win.astype(np.float64), w64, axes=([1, 5, 6, 7], [1, 2, 3, 4]))
        return np.moveaxis(out, -1, 1)

    return _map_batches(run, array.shape[0])


def _scatter(grad: np.ndarray, weight: np.ndarray, stride: Triple, full_dims: Triple) -> np.ndarray:
    """Adjoint of ``_correlate``: spread ``(n, o, ...)`` values back through ``(o, c, k...)`` weights."""
    n, _, ot, oh, ow = grad.shape
    channels = weight.shape[1]
    st, sh, sw = stride
    g64 = grad.astype(np.float64)
    w64 = weight.astype(np.float64)
    out = np.zeros((n, channels, *full_dims), dtype=np.float64)
    kt, kh, kw = weight.shape[2:]
    for i in range(kt):
        for j in range(kh):
            for k in range(kw):
                contrib = np.tensordot(g64, w64[:, :, i, j, k], axes=([1], [0]))
                out[:, :, i:i + st * (ot - 1) + 1:st, j:j + sh * (oh - 1) + 1:sh, k:k + sw * (ow - 1) + 1:sw] += (
                    np.moveaxis(contrib, -1, 1)
                )
    return out


def _weight_grad(array: np.ndarray, grad: np.ndarray, kernel: Triple, stride: Triple) -> np.ndarray:
    """Gradient of ``_correlate`` with respect to its weights, shaped ``(o, c, k...)``."""
    win = _windows(array, kernel, stride, grad.shape[2:])
    return np.tensordot(grad.astype(np.float64), win.astype(np.float64), axes=([0, 2, 3, 4], [0, 2, 3, 4]))


def _check_layer(x: VideoTensor, p: LayerParams, spec: Conv3dSpec, weight_shape: tuple[int, ...]) -> None:
    if x.shape[1] != spec.in_channels:
        msg = f'Axis c: input has {x.shape[1]} channels, layer expects {spec.in_channels}'
        raise DimensionError(msg, axis='c')
    if p.weight.shape != weight_shape:
        msg = f'Weight shape {p.weight.shape} does not match layer geometry {weight_shape}'
        raise DimensionError(msg, axis='weights')
    if spec.bias != (p.bias is not None):
        msg = 'Layer bias presence does not match Conv3dSpec.bias'
        raise ConfigError(msg)
    if p.bias is not None and p.bias.shape != (spec.out_channels,):
        msg = f'Bias shape {p.bias.shape} does not match {spec.out_channels} output channels'
        raise DimensionError(msg, axis='bias')
    _require_finite(x.data, 'conv input')


def conv3d(x: VideoTensor, p: LayerParams, spec: Conv3dSpec) -> VideoTensor:
    """3-D cross-correlation (no kernel flip) with bias.

    Args:
        x (VideoTensor): Input ``(n, in_channels, t, h, w)``.
        p (LayerParams): Weights ``(out, in, kt, kh, kw)`` and optional bias.
        spec (Conv3dSpec): Kernel, stride and padding.

    Returns:
        VideoTensor: ``(n, out_channels, t', h', w')`` with each extent ``(d + 2p - k) // s + 1``.

    Raises:
        DimensionError: On channel, weight or extent mismatch, naming the axis.
        NumericError: If the input is not finite.
    """
    _check_layer(x, p, spec, spec.weight_shape)
    dims = spec.output_dims(x.shape[2:])
    padded = _pad(x.data, spec.padding)
    out = _correlate(padded, p.weight.data, spec.stride, dims)
    if p.bias is not None:
        out += p.bias.data.astype(np.float64)[None, :, None, None, None]

    def backward(grad: np.ndarray) -> None:
        g64 = grad.astype(np.float64)
        p.weight.grad += _weight_grad(padded, g64, spec.kernel, spec.stride).astype(p.weight.grad.dtype)
        if p.bias is not None:
            p.bias.grad += g64.sum(axis=(0, 2, 3, 4)).astype(p.bias.grad.dtype)
        if x.requires_grad:
            full = _scatter(g64, p.weight.data, spec.stride, padded.shape[2:])
            pt, ph, pw = spec.padding
            _, _, t, h, w = x.shape
            x._accumulate(full[:, :, pt:pt + t, ph:ph + h, pw:pw + w])

    return _record(out.astype(x.dtype), (x,), backward, 'conv3d', has_params=True)


def check_upscale_spec(spec: Conv3dSpec) -> int:
    """Validate a transposed-convolution spec and return its spatial scale factor.

    Raises:
        ConfigError: If the temporal axis is not preserved or the spatial axes are not enlarged
            exactly ``stride`` times for every input size.
    """
    kt, kh, kw = spec.kernel
    st, sh, sw = spec.stride
    if kt != 1 or st != 1 or spec.padding[0] != 0 or spec.output_padding[0] != 0:
        msg = f'Transposed convolution must keep the temporal axis: kernel {spec.kernel}, stride {spec.stride}'
        raise ConfigError(msg)
    if sh != sw:
        msg = f'Spatial strides must match for an isotropic upscale, got {sh} and {sw}'
        raise ConfigError(msg)
    for k, s, p, op in ((kh, sh, spec.padding[1], spec.output_padding[1]), (kw, sw, spec.padding[2], spec.output_padding[2])):
        if k + op - 2 * p != s:
            msg = f'Kernel {k}, stride {s}, padding {p}, output padding {op} do not give an exact x{s} upscale'
            raise ConfigError(msg)
    return sh


def deconv3d(x: VideoTensor, p: LayerParams, spec: Conv3dSpec) -> VideoTensor:
    """Transposed 3-D convolution used for spatial upscaling.

    ``spec.in_channels`` is the channel count of ``x``; weights follow the
    ``(out_channels, in_channels, kt, kh, kw)`` layout of every other layer.

    Args:
        x (VideoTensor): Input ``(n, in_channels, t, h, w)``.
        p (LayerParams): Weights and optional bias.
        spec (Conv3dSpec): Geometry, typically ``Conv3dSpec.upscale``.

    Returns:
        VideoTensor: ``(n, out_channels, t, h * r, w * r)``.

    Raises:
        ConfigError: If the geometry is not an exact spatial upscale.
        DimensionError: On channel or weight mismatch.
    """
    check_upscale_spec(spec)
    _check_layer(x, p, spec, spec.weight_shape)
    dims = spec.output_dims(x.shape[2:], transposed=True)
    full_dims = tuple(
        (d - 1) * s + k + op
        for d, s, k, op in zip(x.shape[2:], spec.stride, spec.kernel, spec.output_padding, strict=True)
    )
    conv_weight = np.swapaxes(p.weight.data, 0, 1)
    crop = (slice(None), slice(None), *(slice(pad, pad + d) for pad, d in zip(spec.padding, dims, strict=True)))
    out = _scatter(x.data, conv_weight, spec.stride, full_dims)[crop]
    if p.bias is not None:
        out += p.bias.data.astype(np.float64)[None, :, None, None, None]

    def backward(grad: np.ndarray) -> None:
        g_full = np.zeros((grad.shape[0], spec.out_channels, *full_dims), dtype=np.float64)
        g_full[crop] = grad
        p.weight.grad += np.swapaxes(
            _weight_grad(g_full, x.data, spec.kernel, spec.stride), 0, 1,
        ).astype(p.weight.grad.dtype)
        if p.bias is not None:
            p.bias.grad += grad.astype(np.float64).sum(axis=(0, 2, 3, 4)).astype(p.bias.grad.dtype)
        if x.requires_grad:
            x._accumulate(_correlate(g_full, conv_weight, spec.stride, x.shape[2:]))

    return _record(np.ascontiguousarray(out, dtype=x.dtype), (x,), backward, 'deconv3d', has_params=True)


def prelu(x: VideoTensor, slope: Parameter) -> VideoTensor:
    """Parametric ReLU with one learned negative slope per channel.

    Raises:
        DimensionError: If ``slope`` length differs from the channel count.
    """
    if slope.shape != (x.shape[1],):
        msg = f'Axis c: slope shape {slope.shape} does not match {x.shape[1]} channels'
        raise DimensionError(msg, axis='c')
    _require_finite(x.data, 'prelu input')
    _require_finite(slope.data, 'prelu slope')
    a = slope.data.reshape(1, -1, 1, 1, 1)
    negative = x.data < 0
    out = np.where(negative, a * x.data, x.data).astype(x.dtype)

    def backward(grad: np.ndarray) -> None:
        slope.grad += (grad * x.data * negative).sum(axis=(0, 2, 3, 4), dtype=np.float64).astype(slope.grad.dtype)
        if x.requires_grad:
            x._accumulate(np.where(negative, a * grad, grad))

    return _record(out, (x,), backward, 'prelu', has_params=True)


def dropout(x: VideoTensor, rate: float, training: bool, rng: np.random.Generator) -> VideoTensor:
    """Inverted elementwise dropout.

    In training mode each element is kept with probability ``1 - rate`` and
    survivors are scaled by ``1 / (1 - rate)``; in eval mode, or with a zero
    rate, the input is returned unchanged.

    Raises:
        ConfigError: If ``rate`` is outside ``[0, 1)``.
    """
    if not 0.0 <= rate < 1.0:
        msg = f'Dropout rate must lie in [0, 1), got {rate}'
        raise ConfigError(msg)
    if not training or rate == 0.0:
        return x
    _require_finite(x.data, 'dropout input')
    keep = (rng.random(x.shape) >= rate).astype(x.dtype) * x.dtype.type(1.0 / (1.0 - rate))
    out = x.data * keep

    def backward(grad: np.ndarray) -> None:
        x._accumulate(grad * keep)

    return _record(out, (x,), backward, 'dropout')


def add(x: VideoTensor, y: VideoTensor) -> VideoTensor:
    """Elementwise sum of two equally shaped tensors.

    Raises:
        DimensionError: If the shapes differ.
    """
    if x.shape != y.shape:
        axis = _first_mismatch(x.shape, y.shape)
        msg = f'Axis {axis}: cannot add shapes {x.shape} and {y.shape}'
        raise DimensionError(msg, axis=axis)
    _require_finite(x.data, 'add operand')
    _require_finite(y.data, 'add operand')

    def backward(grad: np.ndarray) -> None:
        x._accumulate(grad)
        y._accumulate(grad)

    return _record(x.data + y.data.astype(x.dtype, copy=False), (x, y), backward, 'add')


def resize_spatial(x: VideoTensor, scale: int, mode: ResizeMode) -> VideoTensor:
    """Upscale every frame by an integer factor.

    Temporal and channel axes are untouched. Samples outside a frame
    replicate its edge; bicubic uses the Catmull-Rom kernel.

    Raises:
        ConfigError: If ``scale < 1`` or the mode is unknown.
    """
    if int(scale) != scale or scale < 1:
        msg = f'Resize scale must be a positive integer, got {scale}'
        raise ConfigError(msg)
    if mode not in RESIZE_MODES:
        msg = f'Unknown resize mode {mode!r}; expected one of {", ".join(RESIZE_MODES)}'
        raise ConfigError(msg)
    _require_finite(x.data, 'resize input')
    _, _, _, h, w = x.shape
    mh = resample_matrix(h, h * scale, mode)
    mw = resample_matrix(w, w * scale, mode)
    out = np.einsum('ncthw,Hh,Ww->nctHW', x.data.astype(np.float64), mh, mw, optimize=True)

    def backward(grad: np.ndarray) -> None:
        x._accumulate(np.einsum('nctHW,Hh,Ww->ncthw', grad.astype(np.float64), mh, mw, optimize=True))

    return _record(out.astype(x.dtype), (x,), backward, f'resize_{mode}')
