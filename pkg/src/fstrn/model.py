"""The FSTRN network: configuration, parameters, forward pass and checkpoints.

The network maps ``T`` low-resolution luma frames ``(n, 1, T, h, w)`` to
``(n, 1, T, h*r, w*r)``:

* LFENet: one 3x3x3 convolution lifting luma to ``C`` feature channels
* ``D`` residual blocks, each PReLU -> 1x3x3 conv -> 3x1x1 conv plus identity
* LRL: the block output plus the LFENet output, then PReLU and dropout
* LSRNet: 3x3x3 fuse, 1x2r x2r transposed upscale, 3x3x3 tune down to one channel
* CRL: interpolated (or learned transposed-conv) upscale of the input added to the output
"""

from collections.abc import Iterator
from dataclasses import dataclass, field, replace
import logging
from pathlib import Path
from typing import Any, Literal

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from . import __version__
from .archive import TensorArchive
from .config import ScaleFactor, format_validation_error
from .constants.defaults import (
    DEFAULT_BLOCKS,
    DEFAULT_DROPOUT,
    DEFAULT_FEAT_CHANNELS,
    DEFAULT_FRAMES,
    DEFAULT_SCALE,
    PRELU_INIT,
)
from .errors import ConfigError, DimensionError, FormatError
from .resample import ResizeMode
from .tensor import (
    Conv3dSpec,
    LayerParams,
    Parameter,
    VideoTensor,
    add,
    conv3d,
    deconv3d,
    dropout,
    prelu,
    resize_spatial,
)

logger = logging.getLogger(__name__)

ABLATION_VARIANTS: tuple[str, ...] = ('F0C0L0', 'F1C0L0', 'F1C0L1', 'F1C1L1')
CrlMode = Literal[ResizeMode, 'deconv']
BlockKind = Literal['frb', 'c3drb']


class AblationFlags(BaseModel):
    """Which optional components of the network are enabled."""

    model_config = ConfigDict(frozen=True, extra='forbid')

    use_frb: bool = True
    use_crl: bool = True
    use_lrl: bool = True

    @property
    def name(self) -> str:
        """Variant code such as ``F1C0L1``."""
        return f'F{int(self.use_frb)}C{int(self.use_crl)}L{int(self.use_lrl)}'

    @model_validator(mode='after')
    def _known_variant(self) -> 'AblationFlags':
        if self.name not in ABLATION_VARIANTS:
            msg = f'Unsupported component combination {self.name}; expected one of {", ".join(ABLATION_VARIANTS)}'
            raise ValueError(msg)
        return self

    @classmethod
    def from_name(cls, name: str) -> 'AblationFlags':
        """Parse a variant code.

        Raises:
            ConfigError: If the code is not one of the supported variants.
        """
        if name not in ABLATION_VARIANTS:
            msg = f'Unknown variant {name!r}; expected one of {", ".join(ABLATION_VARIANTS)}'
            raise ConfigError(msg)
        return cls(use_frb=name[1] == '1', use_crl=name[3] == '1', use_lrl=name[5] == '1')


class FstrnConfig(BaseModel):
    """Network hyper-parameters.

    Attributes:
        d_blocks (int): Number of residual blocks ``D``.
        feat_channels (int): Feature channel count ``C``.
        scale (int): Spatial upscale factor ``r``.
        in_frames (int): Odd temporal window ``T``.
        dropout_rate (float): LRL dropout rate in ``[0, 1)``.
        crl_mode (str): Interpolation used by the cross-space residual, or ``deconv``.
        ablation (AblationFlags): Enabled components.
        block_kind (str): ``frb`` (factorized) or ``c3drb`` (plain 3x3x3 residual block).
    """

    model_config = ConfigDict(frozen=True, extra='forbid')

    d_blocks: int = Field(default=DEFAULT_BLOCKS, ge=0)
    feat_channels: int = Field(default=DEFAULT_FEAT_CHANNELS, ge=1)
    scale: ScaleFactor = DEFAULT_SCALE
    in_frames: int = Field(default=DEFAULT_FRAMES, ge=1)
    dropout_rate: float = Field(default=DEFAULT_DROPOUT, ge=0.0, lt=1.0)
    crl_mode: CrlMode = 'bilinear'
    ablation: AblationFlags = Field(default_factory=AblationFlags)
    block_kind: BlockKind = 'frb'

    @field_validator('in_frames')
    @classmethod
    def _odd_window(cls, value: int) -> int:
        if value % 2 == 0:
            msg = f'in_frames must be odd, got {value}'
            raise ValueError(msg)
        return value

    @property
    def active_blocks(self) -> int:
        """Blocks actually built; zero when residual blocks are ablated."""
        return self.d_blocks if self.ablation.use_frb else 0

    @property
    def center_index(self) -> int:
        """Index of the centre frame within the window."""
        return self.in_frames // 2

    @classmethod
    def for_variant(cls, name: str, **overrides: Any) -> 'FstrnConfig':
        """Build a config for one of the ablation variants.

        Raises:
            ConfigError: If the variant or an override is invalid.
        """
        try:
            return cls(ablation=AblationFlags.from_name(name), **overrides)
        except ValidationError as e:
            raise ConfigError(format_validation_error(e, 'model')) from e


def layer_specs(cfg: FstrnConfig) -> dict[str, Conv3dSpec]:
    """Geometry of every named convolution layer in the network."""
    c = cfg.feat_channels
    specs = {'lfe': Conv3dSpec.full(1, c)}
    if cfg.block_kind == 'frb':
        specs['block.spatial'] = Conv3dSpec.spatial(c, c)
        specs['block.temporal'] = Conv3dSpec.temporal(c, c)
    else:
        specs['block.conv'] = Conv3dSpec.full(c, c)
    specs['lsr.fuse'] = Conv3dSpec.full(c, c)
    specs['lsr.up'] = Conv3dSpec.upscale(c, c, cfg.scale)
    specs['lsr.tune'] = Conv3dSpec.full(c, 1)
    specs['crl.deconv'] = Conv3dSpec.upscale(1, 1, cfg.scale)
    return specs


def _slope(channels: int, name: str, dtype: type) -> Parameter:
    return Parameter(np.full(channels, PRELU_INIT, dtype=dtype), name)


@dataclass
class FrbParams:
    """One factorized residual block: PReLU, 1x3x3 spatial conv, 3x1x1 temporal conv."""

    spatial: LayerParams
    temporal: LayerParams
    act_slope: Parameter

    def parameters(self) -> Iterator[Parameter]:
        """Yield slope, spatial and temporal parameters."""
        yield self.act_slope
        yield from self.spatial.parameters()
        yield from self.temporal.parameters()


@dataclass
class C3dBlockParams:
    """One plain residual block: PReLU then a single 3x3x3 conv."""

    conv: LayerParams
    act_slope: Parameter

    def parameters(self) -> Iterator[Parameter]:
        """Yield slope and conv parameters."""
        yield self.act_slope
        yield from self.conv.parameters()


BlockParams = FrbParams | C3dBlockParams


@dataclass
class FstrnModel:
    """All learnable state of one network.

    Attributes:
        config (FstrnConfig): Hyper-parameters the tensors were built for.
        lfe (LayerParams): Feature extraction conv.
        blocks (list[BlockParams]): Residual blocks, ``config.active_blocks`` long.
        lrl_slope (Parameter | None): PReLU slope of the LR residual, only when it is enabled.
        lsr_fuse (LayerParams): First LSRNet conv.
        lsr_up (LayerParams): Transposed upscale conv.
        lsr_tune (LayerParams): Output conv to one channel.
        crl_deconv (LayerParams | None): Learned cross-space upscale, only for ``crl_mode='deconv'``.
    """

    config: FstrnConfig
    lfe: LayerParams
    blocks: list[BlockParams]
    lrl_slope: Parameter | None
    lsr_fuse: LayerParams
    lsr_up: LayerParams
    lsr_tune: LayerParams
    crl_deconv: LayerParams | None = None
    init_info: dict[str, Any] = field(default_factory=dict)

    @classmethod
    def _build(cls, cfg: FstrnConfig, make_layer: Any, dtype: type) -> 'FstrnModel':
        specs = layer_specs(cfg)
        c = cfg.feat_channels
        blocks: list[BlockParams] = []
        for i in range(cfg.active_blocks):
            prefix = f'blocks.{i}'
            if cfg.block_kind == 'frb':
                blocks.append(FrbParams(
                    spatial=make_layer(specs['block.spatial'], f'{prefix}.spatial'),
                    temporal=make_layer(specs['block.temporal'], f'{prefix}.temporal'),
                    act_slope=_slope(c, f'{prefix}.slope', dtype),
                ))
            else:
                blocks.append(C3dBlockParams(
                    conv=make_layer(specs['block.conv'], f'{prefix}.conv'),
                    act_slope=_slope(c, f'{prefix}.slope', dtype),
                ))
        use_deconv = cfg.ablation.use_crl and cfg.crl_mode == 'deconv'
        return cls(
            config=cfg,
            lfe=make_layer(specs['lfe'], 'lfe'),
            blocks=blocks,
            lrl_slope=_slope(c, 'lrl.slope', dtype) if cfg.ablation.use_lrl else None,
            lsr_fuse=make_layer(specs['lsr.fuse'], 'lsr.fuse'),
            lsr_up=make_layer(specs['lsr.up'], 'lsr.up'),
            lsr_tune=make_layer(specs['lsr.tune'], 'lsr.tune'),
            crl_deconv=make_layer(specs['crl.deconv'], 'crl.deconv') if use_deconv else None,
        )

    @classmethod
    def init(cls, cfg: FstrnConfig, seed: int = 0, dtype: type = np.float32) -> 'FstrnModel':
        """He-initialised weights, zero biases and PReLU slopes of 0.25, reproducible from ``seed``."""
        rng = np.random.default_rng(seed)
        model = cls._build(cfg, lambda spec, name: LayerParams.init(spec, rng, name, dtype), dtype)
        model.init_info = {'scheme': 'he_normal', 'bias': 'zeros', 'prelu_slope': PRELU_INIT, 'seed': seed}
        return model

    @classmethod
    def zeros(cls, cfg: FstrnConfig, dtype: type = np.float32) -> 'FstrnModel':
        """All weights and biases zero; PReLU slopes keep their 0.25 start value."""
        model = cls._build(cfg, lambda spec, name: LayerParams.zeros(spec, name, dtype), dtype)
        model.init_info = {'scheme': 'zeros', 'bias': 'zeros', 'prelu_slope': PRELU_INIT}
        return model

    def parameters(self) -> dict[str, Parameter]:
        """All parameters keyed by dotted name, in a fixed order."""
        params: list[Parameter] = [*self.lfe.parameters()]
        for block in self.blocks:
            params.extend(block.parameters())
        if self.lrl_slope is not None:
            params.append(self.lrl_slope)
        for layer in (self.lsr_fuse, self.lsr_up, self.lsr_tune):
            params.extend(layer.parameters())
        if self.crl_deconv is not None:
            params.extend(self.crl_deconv.parameters())
        return {p.name: p for p in params}

    def zero_grad(self) -> None:
        """Reset every parameter gradient."""
        for p in self.parameters().values():
            p.zero_grad()

    def census(self) -> dict[str, int]:
        """Count learnable scalars by kind: conv weights, biases and activation slopes."""
        counts = {'conv': 0, 'bias': 0, 'act': 0}
        for name, p in self.parameters().items():
            kind = 'act' if name.endswith('.slope') else 'bias' if name.endswith('.bias') else 'conv'
            counts[kind] += p.size
        counts['total'] = sum(counts.values())
        return counts

    def astype(self, dtype: type) -> 'FstrnModel':
        """Copy of the model with every parameter cast to ``dtype``."""
        clone = FstrnModel.zeros(self.config, dtype)
        clone.init_info = dict(self.init_info)
        source = self.parameters()
        for name, p in clone.parameters().items():
            p.data[...] = source[name].data
        return clone


def lfenet(x: VideoTensor, m: FstrnModel) -> VideoTensor:
    """Lift ``(n, 1, T, h, w)`` luma to ``(n, C, T, h, w)`` features.

    Raises:
        ConfigError: If the input does not carry one channel and ``in_frames`` frames.
    """
    cfg = m.config
    if x.shape[1] != 1:
        msg = f'Axis c: network input must have 1 channel, got {x.shape[1]}'
        raise ConfigError(msg)
    if x.shape[2] != cfg.in_frames:
        msg = f'Axis t: network input must have {cfg.in_frames} frames, got {x.shape[2]}'
        raise ConfigError(msg)
    return conv3d(x, m.lfe, Conv3dSpec.full(1, cfg.feat_channels))


def frb_forward(features: VideoTensor, block: BlockParams, kind: BlockKind | None = None) -> VideoTensor:
    """Apply one residual block, keeping the feature shape.

    Args:
        features (VideoTensor): ``(n, C, T, h, w)``.
        block (BlockParams): Factorized or plain block parameters.
        kind (str, optional): Expected block kind; checked against ``block`` when given.

    Returns:
        VideoTensor: ``features + block(features)``.

    Raises:
        ConfigError: If ``kind`` does not match the parameter layout.
        DimensionError: If the channel count does not match the block.
    """
    c = features.shape[1]
    actual: BlockKind = 'frb' if isinstance(block, FrbParams) else 'c3drb'
    if kind is not None and kind != actual:
        msg = f'Block parameters are {actual}, but {kind} was requested'
        raise ConfigError(msg)
    act = prelu(features, block.act_slope)
    if isinstance(block, FrbParams):
        spatial = conv3d(act, block.spatial, Conv3dSpec.spatial(c, c))
        residual = conv3d(spatial, block.temporal, Conv3dSpec.temporal(c, c))
    else:
        residual = conv3d(act, block.conv, Conv3dSpec.full(c, c))
    return add(features, residual)


def lrl(
    f_d: VideoTensor,
    f_0: VideoTensor,
    m: FstrnModel,
    *,
    training: bool = False,
    rng: np.random.Generator | None = None,
) -> VideoTensor:
    """LR residual: ``dropout(prelu(f_d + f_0))``, or ``f_d`` unchanged when disabled.

    Raises:
        DimensionError: If the two feature tensors differ in shape.
        ConfigError: If dropout is active in training mode and no generator was given.
    """
    cfg = m.config
    if not cfg.ablation.use_lrl:
        return f_d
    if f_d.shape != f_0.shape:
        msg = f'LR residual operands differ: {f_d.shape} vs {f_0.shape}'
        raise DimensionError(msg, axis='features')
    if m.lrl_slope is None:
        msg = 'LR residual is enabled but the model has no lrl.slope parameter'
        raise ConfigError(msg)
    act = prelu(add(f_d, f_0), m.lrl_slope)
    if training and cfg.dropout_rate > 0.0:
        if rng is None:
            msg = 'Training-mode dropout needs a random generator'
            raise ConfigError(msg)
        return dropout(act, cfg.dropout_rate, training=True, rng=rng)
    return act


def lsrnet(features: VideoTensor, m: FstrnModel) -> VideoTensor:
    """Fuse, upscale by ``r`` and reduce ``(n, C, T, h, w)`` to ``(n, 1, T, h*r, w*r)``."""
    cfg = m.config
    c = cfg.feat_channels
    fused = conv3d(features, m.lsr_fuse, Conv3dSpec.full(c, c))
    up = deconv3d(fused, m.lsr_up, Conv3dSpec.upscale(c, c, cfg.scale))
    return conv3d(up, m.lsr_tune, Conv3dSpec.full(c, 1))


def crl(x: VideoTensor, m: FstrnModel) -> VideoTensor:
    """Cross-space residual: upscale the LR input itself by ``r``.

    Raises:
        ConfigError: If ``crl_mode`` is ``deconv`` but the model has no learned upscale layer.
    """
    cfg = m.config
    if cfg.crl_mode == 'deconv':
        if m.crl_deconv is None:
            msg = 'crl_mode is deconv but the model has no crl.deconv layer'
            raise ConfigError(msg)
        return deconv3d(x, m.crl_deconv, Conv3dSpec.upscale(1, 1, cfg.scale))
    return resize_spatial(x, cfg.scale, cfg.crl_mode)


def fstrn_forward(
    x: VideoTensor,
    m: FstrnModel,
    cfg: FstrnConfig | None = None,
    *,
    training: bool = False,
    rng: np.random.Generator | None = None,
) -> VideoTensor:
    """Full network forward pass.

    Args:
        x (VideoTensor): LR window ``(n, 1, T, h, w)``.
        m (FstrnModel): Parameters.
        cfg (FstrnConfig, optional): Variant to run; defaults to ``m.config`` and must share its layer layout.
        training (bool): Enables dropout in the LR residual.
        rng (np.random.Generator, optional): Dropout randomness, required when training with dropout.

    Returns:
        VideoTensor: ``(n, 1, T, h*r, w*r)``.
    """
    if cfg is not None and cfg != m.config:
        _check_layout(m, cfg)
        m = replace(m, config=cfg)
    f_0 = lfenet(x, m)
    features = f_0
    for block in m.blocks:
        features = frb_forward(features, block, m.config.block_kind)
    features = lrl(features, f_0, m, training=training, rng=rng)
    out = lsrnet(features, m)
    if m.config.ablation.use_crl:
        out = add(out, crl(x, m))
    return out


def _check_layout(m: FstrnModel, cfg: FstrnConfig) -> None:
    expected = FstrnModel.zeros(cfg).parameters()
    actual = m.parameters()
    if list(expected) != list(actual) or any(expected[k].shape != actual[k].shape for k in expected):
        msg = f'Model parameters do not match config (variant {cfg.ablation.name}, {cfg.active_blocks} blocks)'
        raise ConfigError(msg)


def save_checkpoint(
    m: FstrnModel,
    cfg: FstrnConfig,
    path: Path | str,
    extra: dict[str, Any] | None = None,
) -> Path:
    """Write the config echo, init description and every parameter tensor.

    Args:
        m (FstrnModel): Model to persist.
        cfg (FstrnConfig): Config to echo; must describe the same layer layout as ``m``.
        path (Path | str): Target file.
        extra (dict, optional): Additional JSON metadata such as the training epoch.

    Returns:
        Path: The written file.
    """
    _check_layout(m, cfg)
    path = Path(path)
    meta = {
        'kind': 'fstrn-checkpoint',
        'fstrn_version': __version__,
        'config': cfg.model_dump(mode='json'),
        'init': m.init_info,
        'extra': extra or {},
    }
    TensorArchive(path).write(meta, {name: p.data for name, p in m.parameters().items()})
    logger.debug('Saved checkpoint %s', path)
    return path


def load_checkpoint(path: Path | str, dtype: type = np.float32) -> tuple[FstrnModel, FstrnConfig]:
    """Read a checkpoint written by ``save_checkpoint``.

    The stored ``extra`` metadata is available as ``model.init_info['extra']``.

    Returns:
        tuple[FstrnModel, FstrnConfig]: The restored model and its config.

    Raises:
        FormatError: If the container is damaged or its tensors do not match the stored config.
    """
    meta, tensors = TensorArchive(path).read()
    if meta.get('kind') != 'fstrn-checkpoint':
        msg = f'{path} is not a checkpoint (kind={meta.get("kind")!r})'
        raise FormatError(msg, 0)
    try:
        cfg = FstrnConfig.model_validate(meta.get('config', {}))
    except ValidationError as e:
        msg = f'Stored config is invalid: {format_validation_error(e, "config")}'
        raise FormatError(msg, 0) from e

    model = FstrnModel.zeros(cfg, dtype)
    params = model.parameters()
    if set(params) != set(tensors):
        missing = sorted(set(params) - set(tensors))
        unexpected = sorted(set(tensors) - set(params))
        msg = f'Checkpoint tensors do not match the config: missing {missing}, unexpected {unexpected}'
        raise FormatError(msg, 0)
    for name, p in params.items():
        if tensors[name].shape != p.shape:
            msg = f'Tensor {name!r} has shape {tensors[name].shape}, expected {p.shape}'
            raise FormatError(msg, 0)
        p.data[...] = tensors[name]
    model.init_info = {**meta.get('init', {}), 'extra': meta.get('extra', {})}
    return model, cfg
