"""Central finite-difference checks of every differentiable operation.

Each check builds a float64 graph, seeds ``backward`` with a random
projection ``g`` and compares the analytic gradient of ``sum(g * out)``
against ``(f(x + h) - f(x - h)) / 2h`` for sampled coordinates of every
input and parameter.
"""

from collections.abc import Callable
from dataclasses import dataclass
import logging

import numpy as np

from .model import FstrnConfig, FstrnModel, fstrn_forward
from .resample import RESIZE_MODES, ResizeMode
from .tensor import (
    Conv3dSpec,
    LayerParams,
    Parameter,
    VideoTensor,
    add,
    conv3d,
    deconv3d,
    dropout,
    no_grad,
    prelu,
    resize_spatial,
)
from .train import charbonnier_loss

logger = logging.getLogger(__name__)

OP_STEP = 1e-4
OP_TOLERANCE = 1e-4
NETWORK_STEP = 1e-6
NETWORK_TOLERANCE = 1e-3
LOSS_STEP = 1e-6
LOSS_TOLERANCE = 1e-5
DEFAULT_SAMPLES = 24

# returns the graph output plus every array the check perturbs, keyed by name
Case = tuple[Callable[[], VideoTensor], dict[str, np.ndarray], Callable[[], dict[str, np.ndarray]]]


@dataclass(frozen=True)
class GradCheckResult:
    """Outcome of one check trial."""

    op: str
    trial: int
    max_rel_error: float
    tolerance: float

    @property
    def passed(self) -> bool:
        """Whether the error is within tolerance."""
        return self.max_rel_error <= self.tolerance


def relative_error(analytic: np.ndarray, numeric: np.ndarray) -> float:
    """Largest absolute difference relative to the largest magnitude of either side."""
    scale = max(float(np.max(np.abs(analytic), initial=0.0)), float(np.max(np.abs(numeric), initial=0.0)), 1e-12)
    return float(np.max(np.abs(analytic - numeric), initial=0.0)) / scale


def _sample(shape: tuple[int, ...], samples: int, rng: np.random.Generator) -> list[tuple[int, ...]]:
    size = int(np.prod(shape))
    flat = np.arange(size) if size <= samples else rng.choice(size, samples, replace=False)
    return [tuple(int(i) for i in np.unravel_index(k, shape)) for k in flat]


def check_gradients(
    case: Case,
    rng: np.random.Generator,
    step: float = OP_STEP,
    samples: int = DEFAULT_SAMPLES,
) -> float:
    """Return the worst relative error over every perturbed array of ``case``."""
    forward, arrays, collect = case
    out = forward()
    projection = rng.standard_normal(out.shape)
    out.backward(projection)
    analytic = collect()

    def objective() -> float:
        with no_grad():
            return float(np.sum(forward().data * projection))

    worst = 0.0
    for name, array in arrays.items():
        coords = _sample(array.shape, samples, rng)
        numeric = np.empty(len(coords))
        for k, idx in enumerate(coords):
            original = array[idx]
            array[idx] = original + step
            upper = objective()
            array[idx] = original - step
            lower = objective()
            array[idx] = original
            numeric[k] = (upper - lower) / (2.0 * step)
        expected = np.array([analytic[name][idx] for idx in coords])
        worst = max(worst, relative_error(expected, numeric))
    return worst


def _leaf(rng: np.random.Generator, shape: tuple[int, ...], *, away_from_zero: bool = False) -> VideoTensor:
    data = rng.standard_normal(shape)
    if away_from_zero:
        data = np.where(data < 0, -1.0, 1.0) * (0.1 + np.abs(data))
    return VideoTensor(data, requires_grad=True, dtype=np.float64)


def _layer(spec: Conv3dSpec, rng: np.random.Generator) -> LayerParams:
    layer = LayerParams.init(spec, rng, 'layer', np.float64)
    if layer.bias is not None:
        layer.bias.data[...] = rng.standard_normal(layer.bias.shape)
    return layer


def _collector(x: VideoTensor, params: list[Parameter]) -> Callable[[], dict[str, np.ndarray]]:
    def collect() -> dict[str, np.ndarray]:
        grads = {'x': x.grad.copy()}
        grads.update({p.name: p.grad.copy() for p in params})
        return grads
    return collect


def _arrays(x: VideoTensor, params: list[Parameter]) -> dict[str, np.ndarray]:
    return {'x': x.data, **{p.name: p.data for p in params}}


def conv_case(rng: np.random.Generator) -> Case:
    """Random geometry 3-D convolution."""
    kernel = [(1, 3, 3), (3, 1, 1), (3, 3, 3), (2, 2, 1)][rng.integers(4)]
    stride = tuple(int(s) for s in rng.integers(1, 3, size=3))
    padding = tuple(int(rng.integers(0, k // 2 + 1)) for k in kernel)
    spec = Conv3dSpec(kernel, int(rng.integers(1, 4)), int(rng.integers(1, 4)), stride, padding,
                      bias=bool(rng.integers(2)))
    x = _leaf(rng, (int(rng.integers(1, 3)), spec.in_channels, *(int(d) for d in rng.integers(3, 6, size=3))))
    layer = _layer(spec, rng)
    params = list(layer.parameters())
    return (lambda: conv3d(x, layer, spec)), _arrays(x, params), _collector(x, params)


def deconv_case(rng: np.random.Generator) -> Case:
    """Transposed upscale convolution for a random scale."""
    scale = int(rng.integers(2, 5))
    spec = Conv3dSpec.upscale(int(rng.integers(1, 3)), int(rng.integers(1, 3)), scale)
    x = _leaf(rng, (1, spec.in_channels, 2, int(rng.integers(2, 4)), int(rng.integers(2, 4))))
    layer = _layer(spec, rng)
    params = list(layer.parameters())
    return (lambda: deconv3d(x, layer, spec)), _arrays(x, params), _collector(x, params)


def prelu_case(rng: np.random.Generator) -> Case:
    """PReLU with inputs kept off the kink."""
    channels = int(rng.integers(1, 4))
    x = _leaf(rng, (2, channels, 2, 3, 3), away_from_zero=True)
    slope = Parameter(rng.uniform(0.05, 0.5, channels), 'slope')
    return (lambda: prelu(x, slope)), _arrays(x, [slope]), _collector(x, [slope])


def dropout_case(rng: np.random.Generator) -> Case:
    """Training-mode dropout with a fixed mask."""
    x = _leaf(rng, (2, 2, 2, 3, 3))
    seed = int(rng.integers(2 ** 31))
    return (lambda: dropout(x, 0.3, training=True, rng=np.random.default_rng(seed))), _arrays(x, []), _collector(x, [])


def add_case(rng: np.random.Generator) -> Case:
    """Elementwise sum; both operands checked."""
    x = _leaf(rng, (1, 2, 2, 3, 3))
    y = _leaf(rng, (1, 2, 2, 3, 3))

    def collect() -> dict[str, np.ndarray]:
        return {'x': x.grad.copy(), 'y': y.grad.copy()}

    return (lambda: add(x, y)), {'x': x.data, 'y': y.data}, collect


def resize_case(mode: ResizeMode) -> Callable[[np.random.Generator], Case]:
    """Integer upscale with one interpolation mode."""
    def build(rng: np.random.Generator) -> Case:
        x = _leaf(rng, (1, 1, 2, int(rng.integers(2, 6)), int(rng.integers(2, 6))))
        scale = int(rng.integers(2, 5))
        return (lambda: resize_spatial(x, scale, mode)), _arrays(x, []), _collector(x, [])
    return build


def network_case(rng: np.random.Generator, variant: str = 'F1C1L1', crl_mode: str = 'bilinear') -> Case:
    """Whole eval-mode network at a tiny size: 1 block, 4 channels, 3 frames, 6x6, x2."""
    cfg = FstrnConfig.for_variant(variant, d_blocks=1, feat_channels=4, scale=2, in_frames=3, crl_mode=crl_mode)
    model = FstrnModel.init(cfg, seed=int(rng.integers(2 ** 31)), dtype=np.float64)
    for p in model.parameters().values():
        if p.name.endswith('.bias'):
            p.data[...] = 0.1 * rng.standard_normal(p.shape)
    x = _leaf(rng, (1, 1, 3, 6, 6))
    params = list(model.parameters().values())
    return (lambda: fstrn_forward(x, model)), _arrays(x, params), _collector(x, params)


OP_CASES: dict[str, Callable[[np.random.Generator], Case]] = {
    'conv3d': conv_case,
    'deconv3d': deconv_case,
    'prelu': prelu_case,
    'dropout': dropout_case,
    'add': add_case,
    **{f'resize_{mode}': resize_case(mode) for mode in RESIZE_MODES},
}


def check_charbonnier(rng: np.random.Generator, eps: float = 1e-3) -> float:
    """Relative error of the loss gradient on random 3x4x4 volumes."""
    sr = rng.standard_normal((1, 1, 3, 4, 4))
    hr = rng.standard_normal((1, 1, 3, 4, 4))
    _, grad = charbonnier_loss(sr, hr, eps, center_only=False)
    numeric = np.empty_like(sr)
    for idx in np.ndindex(sr.shape):
        original = sr[idx]
        sr[idx] = original + LOSS_STEP
        upper, _ = charbonnier_loss(sr, hr, eps, center_only=False)
        sr[idx] = original - LOSS_STEP
        lower, _ = charbonnier_loss(sr, hr, eps, center_only=False)
        sr[idx] = original
        numeric[idx] = (upper - lower) / (2.0 * LOSS_STEP)
    return relative_error(grad, numeric)


def run_suite(trials: int = 20, seed: int = 0, *, network_trials: int = 2) -> list[GradCheckResult]:
    """Check every op ``trials`` times, the loss once per trial and the network ``network_trials`` times."""
    rng = np.random.default_rng(seed)
    results = []
    for name, build in OP_CASES.items():
        for trial in range(trials):
            error = check_gradients(build(rng), rng, OP_STEP)
            results.append(GradCheckResult(name, trial, error, OP_TOLERANCE))
    for trial in range(trials):
        results.append(GradCheckResult('charbonnier_loss', trial, check_charbonnier(rng), LOSS_TOLERANCE))
    for variant, mode in (('F1C1L1', 'bilinear'), ('F1C1L1', 'deconv'), ('F1C0L0', 'bilinear')):
        for trial in range(network_trials):
            error = check_gradients(network_case(rng, variant, mode), rng, NETWORK_STEP)
            results.append(GradCheckResult(f'fstrn_{variant}_{mode}', trial, error, NETWORK_TOLERANCE))
    failed = [r for r in results if not r.passed]
    logger.info('Gradient checks: %d run, %d failed', len(results), len(failed))
    return results


def summarize(results: list[GradCheckResult]) -> list[dict[str, object]]:
    """One row per op: trials, worst error, tolerance and pass flag."""
    rows: dict[str, dict[str, object]] = {}
    for r in results:
        row = rows.setdefault(r.op, {'op': r.op, 'trials': 0, 'max_rel_error': 0.0, 'tolerance': r.tolerance,
                                     'passed': True})
        row['trials'] = int(row['trials']) + 1
        row['max_rel_error'] = max(float(row['max_rel_error']), r.max_rel_error)
        row['passed'] = bool(row['passed']) and r.passed
    return list(rows.values())
