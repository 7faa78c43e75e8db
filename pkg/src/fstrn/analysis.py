"""Parameter and MAC census, spectral norms, and the covering and generalization bounds.

Counts are shape arithmetic only. The bound evaluators take measured weight
norms and evaluate the closed-form expressions term by term so that every
intermediate quantity can be audited in the JSON report.
"""

import logging
import math
from typing import Any, Literal

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, NonNegativeFloat, model_validator

from .errors import ConfigError, DomainError
from .model import C3dBlockParams, FrbParams, FstrnConfig, FstrnModel, layer_specs
from .resample import ResizeMode, resample_matrix
from .tensor import Conv3dSpec, LayerParams, Parameter

logger = logging.getLogger(__name__)

BLOCK_KINDS = ('frb', 'c3drb')
POWER_TOL = 1e-6
POWER_MAX_ITER = 1000
EPS3_FLAG = 'epsilon_3 is not defined in closed form; evaluated as epsilon_2 * (1 + s2)'


class CostReport(BaseModel):
    """Census of one residual block for a stated input volume.

    The reduction ratios always compare FRB against C3DRB at the same
    channels and input, whichever ``kind`` the report describes.
    """

    model_config = ConfigDict(frozen=True)

    kind: Literal['frb', 'c3drb']
    channels: int
    input: tuple[int, int, int]
    params_conv: int
    params_bias: int
    params_act: int
    macs: int
    flops: int
    flop_factor: int
    reduce_ratio_params: float
    reduce_ratio_conv: float
    reduce_ratio_flops: float

    @property
    def params_total(self) -> int:
        """All learnable scalars of the block."""
        return self.params_conv + self.params_bias + self.params_act


def _block_specs(kind: str, channels: int) -> list[Conv3dSpec]:
    if kind == 'frb':
        return [Conv3dSpec.spatial(channels, channels), Conv3dSpec.temporal(channels, channels)]
    return [Conv3dSpec.full(channels, channels)]


def conv_macs(spec: Conv3dSpec, input_thw: tuple[int, int, int], *, transposed: bool = False) -> int:
    """Multiply-accumulates of one layer: output voxels x kernel volume x in x out.

    A transposed layer scatters every input voxel through the whole kernel,
    so its count uses input voxels instead.
    """
    voxels = math.prod(input_thw) if transposed else math.prod(spec.output_dims(input_thw))
    return voxels * spec.kernel_volume * spec.in_channels * spec.out_channels


def _raw_census(kind: str, channels: int, input_thw: tuple[int, int, int]) -> tuple[int, int, int, int]:
    specs = _block_specs(kind, channels)
    conv = sum(math.prod(s.weight_shape) for s in specs)
    bias = sum(s.out_channels for s in specs if s.bias)
    macs = sum(conv_macs(s, input_thw) for s in specs)
    return conv, bias, channels, macs


def count_block_cost(
    kind: Literal['frb', 'c3drb'],
    channels: int,
    input_thw: tuple[int, int, int],
    flop_factor: Literal[1, 2] = 1,
) -> CostReport:
    """Exact parameter and MAC census of one residual block.

    Args:
        kind: ``frb`` (1x3x3 then 3x1x1) or ``c3drb`` (one 3x3x3).
        channels: Feature channels ``c``.
        input_thw: Input volume ``(t, h, w)``; convolutions are same-padded.
        flop_factor: 1 counts a multiply-add as one FLOP, 2 as two.

    Raises:
        ConfigError: On an unknown kind, non-positive channels or extents, or a bad factor.
    """
    if kind not in BLOCK_KINDS:
        msg = f'Unknown block kind {kind!r}; expected frb or c3drb'
        raise ConfigError(msg)
    if channels < 1 or len(input_thw) != 3 or min(input_thw) < 1:
        msg = f'Need channels >= 1 and a positive (t, h, w) input, got {channels} and {input_thw}'
        raise ConfigError(msg)
    if flop_factor not in (1, 2):
        msg = f'flop_factor must be 1 or 2, got {flop_factor}'
        raise ConfigError(msg)

    conv, bias, act, macs = _raw_census(kind, channels, tuple(input_thw))
    frb = _raw_census('frb', channels, tuple(input_thw))
    c3d = _raw_census('c3drb', channels, tuple(input_thw))
    return CostReport(
        kind=kind,
        channels=channels,
        input=tuple(input_thw),
        params_conv=conv,
        params_bias=bias,
        params_act=act,
        macs=macs,
        flops=macs * flop_factor,
        flop_factor=flop_factor,
        reduce_ratio_params=100.0 * (1.0 - (frb[0] + frb[1]) / (c3d[0] + c3d[1])),
        reduce_ratio_conv=100.0 * (1.0 - frb[0] / c3d[0]),
        reduce_ratio_flops=100.0 * (1.0 - frb[3] / c3d[3]),
    )


def compare_blocks(channels: int, input_thw: tuple[int, int, int], flop_factor: Literal[1, 2] = 1) -> dict[str, Any]:
    """Side-by-side C3DRB / FRB census shaped like the published comparison table."""
    c3d = count_block_cost('c3drb', channels, input_thw, flop_factor)
    frb = count_block_cost('frb', channels, input_thw, flop_factor)
    return {
        'channels': channels,
        'input': list(input_thw),
        'flop_factor': flop_factor,
        'c3drb': c3d.model_dump(mode='json') | {'params_total': c3d.params_total},
        'frb': frb.model_dump(mode='json') | {'params_total': frb.params_total},
        'reduce_ratio_params': frb.reduce_ratio_params,
        'reduce_ratio_conv': frb.reduce_ratio_conv,
        'reduce_ratio_flops': frb.reduce_ratio_flops,
    }


class LayerCost(BaseModel):
    """Census row of one named layer."""

    name: str
    params_conv: int = 0
    params_bias: int = 0
    params_act: int = 0
    macs: int = 0


def count_model_cost(cfg: FstrnConfig, input_thw: tuple[int, int, int]) -> dict[str, Any]:
    """Per-layer parameters and MACs of a whole network for an LR input ``(t, h, w)``.

    Interpolating cross-space residuals have no parameters and are not counted as MACs.
    """
    specs = layer_specs(cfg)
    t, h, w = input_thw
    c = cfg.feat_channels
    hr_thw = (t, h * cfg.scale, w * cfg.scale)
    rows: list[LayerCost] = []

    def conv_row(name: str, spec: Conv3dSpec, thw: tuple[int, int, int], *, transposed: bool = False) -> None:
        rows.append(LayerCost(
            name=name,
            params_conv=math.prod(spec.weight_shape),
            params_bias=spec.out_channels if spec.bias else 0,
            macs=conv_macs(spec, thw, transposed=transposed),
        ))

    conv_row('lfe', specs['lfe'], input_thw)
    for i in range(cfg.active_blocks):
        rows.append(LayerCost(name=f'blocks.{i}.slope', params_act=c))
        for part in ('spatial', 'temporal') if cfg.block_kind == 'frb' else ('conv',):
            conv_row(f'blocks.{i}.{part}', specs[f'block.{part}'], input_thw)
    if cfg.ablation.use_lrl:
        rows.append(LayerCost(name='lrl.slope', params_act=c))
    conv_row('lsr.fuse', specs['lsr.fuse'], input_thw)
    conv_row('lsr.up', specs['lsr.up'], input_thw, transposed=True)
    conv_row('lsr.tune', specs['lsr.tune'], hr_thw)
    if cfg.ablation.use_crl and cfg.crl_mode == 'deconv':
        conv_row('crl.deconv', specs['crl.deconv'], input_thw, transposed=True)

    totals = {key: sum(getattr(r, key) for r in rows) for key in ('params_conv', 'params_bias', 'params_act', 'macs')}
    totals['params_total'] = totals['params_conv'] + totals['params_bias'] + totals['params_act']
    return {
        'variant': cfg.ablation.name,
        'block_kind': cfg.block_kind,
        'input': list(input_thw),
        'layers': [r.model_dump() for r in rows],
        'totals': totals,
    }


def _as_matrix(weights: LayerParams | Parameter | np.ndarray) -> np.ndarray:
    if isinstance(weights, LayerParams):
        weights = weights.weight
    if isinstance(weights, Parameter):
        weights = weights.data
    array = np.asarray(weights, dtype=np.float64)
    if array.size == 0:
        msg = 'Cannot take the spectral norm of an empty weight array'
        raise ConfigError(msg)
    return array.reshape(array.shape[0], -1) if array.ndim > 1 else array.reshape(1, -1)


def spectral_norm(
    weights: LayerParams | Parameter | np.ndarray,
    *,
    tol: float = POWER_TOL,
    max_iter: int = POWER_MAX_ITER,
    seed: int = 0,
) -> float:
    """Largest singular value of the ``out x (in * kt * kh * kw)`` unfolding, by power iteration.

    Args:
        weights: Conv weights ``(out, in, kt, kh, kw)`` or any matrix-like array.
        tol: Stop when successive estimates differ by less than this relative amount.
        max_iter: Iteration cap.
        seed: Seed of the random start vector.

    Returns:
        The estimate; exactly 0.0 for an all-zero matrix.
    """
    matrix = _as_matrix(weights)
    if not matrix.any():
        return 0.0
    rng = np.random.default_rng(seed)
    v = rng.standard_normal(matrix.shape[1])
    v /= np.linalg.norm(v)
    sigma = 0.0
    for _ in range(max_iter):
        u = matrix @ v
        norm_u = np.linalg.norm(u)
        if norm_u == 0.0:
            # start vector orthogonal to the row space; restart
            v = rng.standard_normal(matrix.shape[1])
            v /= np.linalg.norm(v)
            continue
        u /= norm_u
        v = matrix.T @ u
        estimate = float(np.linalg.norm(v))
        v /= estimate
        if abs(estimate - sigma) <= tol * estimate:
            return estimate
        sigma = estimate
    logger.debug('Power iteration hit the %d iteration cap', max_iter)
    return sigma


class BoundInputs(BaseModel):
    """Measured quantities for the covering bound.

    Per-block lists are indexed by block, all of equal length ``D``.
    ``b*`` are spectral distances to reference matrices.
    """

    model_config = ConfigDict(frozen=True, extra='forbid')

    s1_blocks: list[NonNegativeFloat] = Field(default_factory=list)
    s2_blocks: list[NonNegativeFloat] = Field(default_factory=list)
    b1_blocks: list[NonNegativeFloat] = Field(default_factory=list)
    b2_blocks: list[NonNegativeFloat] = Field(default_factory=list)
    rho_blocks: list[NonNegativeFloat] = Field(default_factory=list)
    s1: NonNegativeFloat
    s2: NonNegativeFloat
    s3: NonNegativeFloat
    s_hr: NonNegativeFloat
    b1: NonNegativeFloat
    b2: NonNegativeFloat
    b3: NonNegativeFloat
    b_hr: NonNegativeFloat
    rho1: NonNegativeFloat
    x_norm: NonNegativeFloat
    width: int = Field(ge=1)
    eps: float = Field(gt=0.0)
    n_samples: int = Field(default=1, ge=1)
    delta: float = Field(default=0.05, gt=0.0, lt=1.0)

    @model_validator(mode='after')
    def _equal_block_lists(self) -> 'BoundInputs':
        lengths = {len(self.s1_blocks), len(self.s2_blocks), len(self.b1_blocks), len(self.b2_blocks),
                   len(self.rho_blocks)}
        if len(lengths) != 1:
            msg = 'Per-block lists s1_blocks, s2_blocks, b1_blocks, b2_blocks and rho_blocks must have equal length'
            raise ValueError(msg)
        return self

    @property
    def depth(self) -> int:
        """Number of residual blocks ``D``."""
        return len(self.s1_blocks)


class BoundReport(BaseModel):
    """Covering-bound value with every intermediate term."""

    log_covering: float
    r_complexity: float
    alpha_bar: float
    eps_blocks: list[float]
    eps2: float
    eps3: float
    n_frb: list[float]
    star: float
    terms: dict[str, float]
    flags: list[str]
    inputs: dict[str, Any]


def _positive(value: float, term: str) -> float:
    if not value > 0.0 or not math.isfinite(value):
        msg = f'{term} = {value!r} must be positive and finite; increase eps'
        raise DomainError(msg, term)
    return value


def covering_bound(b: BoundInputs) -> BoundReport:
    """Evaluate the covering-number bound of the network term by term.

    The result ``log_covering`` is the right-hand side of the bound;
    ``r_complexity`` is that value times ``eps``, the quantity the
    generalization bound consumes.

    Raises:
        DomainError: If ``eps - s_hr - 1``, ``alpha_bar`` or any derived radius is not positive.
    """
    log_w = math.log(2.0 * b.width ** 2)
    growth = [rho * (1.0 + s1) * (1.0 + s2) + 1.0
              for rho, s1, s2 in zip(b.rho_blocks, b.s1_blocks, b.s2_blocks, strict=True)]
    contraction = [(rho * s1 * s2) ** 2 + 1.0
                   for rho, s1, s2 in zip(b.rho_blocks, b.s1_blocks, b.s2_blocks, strict=True)]
    chain = math.prod(growth)
    alpha_bar = _positive(chain * b.rho1 * (1.0 + b.s2), 'alpha_bar')
    margin = _positive(b.eps - b.s_hr - 1.0, 'eps - s_hr - 1')
    base = margin / alpha_bar

    eps_blocks = [_positive(base * math.prod(growth[:d]), f'eps^{d}') for d in range(1, b.depth + 1)]
    eps2 = _positive(base * (chain + 1.0) * b.rho1 * (1.0 + b.s2) + b.s_hr + 1.0, 'eps_2')
    eps3 = _positive(eps2 * (1.0 + b.s2), 'eps_3')

    n_frb = []
    for d in range(1, b.depth + 1):
        i = d - 1
        lead = (b.x_norm * b.s1 * b.rho_blocks[i] / eps_blocks[i]) ** 2
        tail = (b.b1_blocks[i] ** 2) * (1.0 + b.s2_blocks[i]) ** 2 + (b.b2_blocks[i] * b.s1_blocks[i]) ** 2
        n_frb.append(lead * math.prod(contraction[:d]) * tail)
    star = (b.x_norm * b.s1 * b.rho1) ** 2 * math.prod(contraction)

    terms = {
        'stem_input': b.b1 ** 2 * b.x_norm ** 2 * alpha_bar / b.eps ** 2 * log_w,
        'blocks': math.fsum(n_frb),
        'stem_upscale': star * b.b2 ** 2 / eps2 ** 2 * log_w * ((b.b2 / eps2) ** 2 + (b.s2 * b.b3 / eps3) ** 2),
        'cross_space': b.b_hr ** 2 * b.x_norm ** 2 / b.eps ** 2 * log_w,
    }
    value = math.fsum(terms.values())
    return BoundReport(
        log_covering=value,
        r_complexity=value * b.eps,
        alpha_bar=alpha_bar,
        eps_blocks=eps_blocks,
        eps2=eps2,
        eps3=eps3,
        n_frb=n_frb,
        star=star,
        terms=terms,
        flags=[EPS3_FLAG],
        inputs=b.model_dump(mode='json'),
    )


def generalization_bound(r: float, empirical_risk: float, n: int, delta: float) -> float:
    """Upper bound on the expected risk from the complexity ``r`` and ``n`` samples.

    ``empirical_risk + 8/n^1.5 + 36/n * sqrt(r) * log(n) + 3 * sqrt(log(2/delta) / (2n))``

    Raises:
        DomainError: If ``r < 0``, ``n < 2`` or ``delta`` is outside ``(0, 1)``.
    """
    if not 0.0 < delta < 1.0:
        msg = f'delta must lie in (0, 1), got {delta}'
        raise DomainError(msg, 'delta')
    if n < 2:
        msg = f'Sample size must be at least 2, got {n}'
        raise DomainError(msg, 'N')
    if r < 0.0 or not math.isfinite(r):
        msg = f'Complexity R must be finite and non-negative, got {r}'
        raise DomainError(msg, 'R')
    return (
        empirical_risk
        + 8.0 / n ** 1.5
        + 36.0 / n * math.sqrt(r) * math.log(n)
        + 3.0 * math.sqrt(math.log(2.0 / delta) / (2.0 * n))
    )


def _lipschitz(slope: Parameter) -> float:
    return max(1.0, float(np.max(np.abs(slope.data))))


def _width(model: FstrnModel) -> int:
    widths = [max(_as_matrix(p.data).shape) for name, p in model.parameters().items() if name.endswith('.weight')]
    return max(widths)


def crl_operator_norm(mode: ResizeMode, scale: int, lr_size: tuple[int, int]) -> float:
    """Spectral norm of the separable interpolation operator on ``lr_size`` frames."""
    h, w = lr_size
    return spectral_norm(resample_matrix(h, h * scale, mode)) * spectral_norm(resample_matrix(w, w * scale, mode))


def measure_bound_inputs(
    model: FstrnModel,
    *,
    x_norm: float,
    eps: float,
    n_samples: int = 1,
    delta: float = 0.05,
    lr_size: tuple[int, int] = (32, 32),
) -> BoundInputs:
    """Derive bound inputs from trained weights, using zero reference matrices.

    Plain (C3DRB) blocks have a single conv, so their second layer is the
    identity: ``s2 = 1`` and ``b2 = 0``.
    """
    cfg = model.config
    s1_blocks, s2_blocks, b2_blocks, rho_blocks = [], [], [], []
    for block in model.blocks:
        rho_blocks.append(_lipschitz(block.act_slope))
        if isinstance(block, FrbParams):
            s1_blocks.append(spectral_norm(block.spatial))
            s2 = spectral_norm(block.temporal)
            s2_blocks.append(s2)
            b2_blocks.append(s2)
        elif isinstance(block, C3dBlockParams):
            s1_blocks.append(spectral_norm(block.conv))
            s2_blocks.append(1.0)
            b2_blocks.append(0.0)

    s1 = spectral_norm(model.lfe)
    s2 = spectral_norm(model.lsr_fuse) * spectral_norm(model.lsr_up)
    s3 = spectral_norm(model.lsr_tune)
    if not cfg.ablation.use_crl:
        s_hr = b_hr = 0.0
    elif model.crl_deconv is not None:
        s_hr = b_hr = spectral_norm(model.crl_deconv)
    else:
        s_hr, b_hr = crl_operator_norm(cfg.crl_mode, cfg.scale, lr_size), 0.0
    return BoundInputs(
        s1_blocks=s1_blocks,
        s2_blocks=s2_blocks,
        b1_blocks=list(s1_blocks),
        b2_blocks=b2_blocks,
        rho_blocks=rho_blocks,
        s1=s1,
        s2=s2,
        s3=s3,
        s_hr=s_hr,
        b1=s1,
        b2=s2,
        b3=s3,
        b_hr=b_hr,
        rho1=_lipschitz(model.lrl_slope) if model.lrl_slope is not None else 1.0,
        x_norm=x_norm,
        width=_width(model),
        eps=eps,
        n_samples=n_samples,
        delta=delta,
    )


def bound_summary(b: BoundInputs, empirical_risk: float) -> dict[str, Any]:
    """Covering and generalization bounds together, as a JSON-ready mapping."""
    report = covering_bound(b)
    return {
        'covering': report.model_dump(mode='json'),
        'generalization_bound': generalization_bound(report.r_complexity, empirical_risk, b.n_samples, b.delta),
        'empirical_risk': empirical_risk,
    }
