"""Charbonnier objective, Adam updates, plateau step decay and the training loop."""

from collections.abc import Mapping, Sequence
import csv
from dataclasses import dataclass, field
import logging
from pathlib import Path

import numpy as np
from pydantic import BaseModel, ConfigDict, Field

from .constants.defaults import (
    ADAM_BETAS,
    ADAM_EPS,
    CHARBONNIER_EPS,
    DECAY_FACTOR,
    DEFAULT_BATCH_SIZE,
    DEFAULT_EPOCHS,
    DEFAULT_LR,
    PLATEAU_PATIENCE,
    PLATEAU_THRESHOLD,
)
from .data import ClipDataset
from .errors import ConfigError, DimensionError, DivergenceError, NumericError
from .model import FstrnModel, fstrn_forward, load_checkpoint, save_checkpoint
from .tensor import Parameter, VideoTensor

logger = logging.getLogger(__name__)

CHECKPOINT_NAME = 'model.fstrn'
LOSS_CSV_NAME = 'loss.csv'


class TrainConfig(BaseModel):
    """Optimisation hyper-parameters.

    ``lr`` may be zero, which freezes the parameters.
    """

    model_config = ConfigDict(frozen=True, extra='forbid')

    lr: float = Field(default=DEFAULT_LR, ge=0.0)
    decay_factor: float = Field(default=DECAY_FACTOR, gt=1.0)
    plateau_patience: int = Field(default=PLATEAU_PATIENCE, ge=1)
    plateau_threshold: float = Field(default=PLATEAU_THRESHOLD, ge=0.0)
    batch_size: int = Field(default=DEFAULT_BATCH_SIZE, ge=1)
    epochs: int = Field(default=DEFAULT_EPOCHS, ge=1)
    max_steps: int | None = Field(default=None, ge=1)
    eps_charbonnier: float = Field(default=CHARBONNIER_EPS, gt=0.0)
    seed: int = 0
    adam_betas: tuple[float, float] = ADAM_BETAS
    adam_eps: float = Field(default=ADAM_EPS, gt=0.0)
    center_only: bool = True


@dataclass
class OptimizerState:
    """Adam moment buffers (float64) keyed by parameter name, plus the step count."""

    m: dict[str, np.ndarray]
    v: dict[str, np.ndarray]
    step: int = 0

    @classmethod
    def for_params(cls, params: Mapping[str, np.ndarray]) -> 'OptimizerState':
        """Zero moments congruent to ``params``."""
        return cls(
            m={name: np.zeros(np.shape(p), dtype=np.float64) for name, p in params.items()},
            v={name: np.zeros(np.shape(p), dtype=np.float64) for name, p in params.items()},
        )


def charbonnier_loss(
    sr: VideoTensor | np.ndarray,
    hr: VideoTensor | np.ndarray,
    eps: float = CHARBONNIER_EPS,
    *,
    center_only: bool = True,
) -> tuple[float, np.ndarray]:
    """Mean Charbonnier penalty ``sqrt((hr - sr)^2 + eps^2)`` and its gradient with respect to ``sr``.

    Args:
        sr: Network output ``(n, 1, T, H, W)``.
        hr: Reference of the same shape.
        eps: Smoothing constant.
        center_only: Restrict the mean to the middle frame along ``t``.

    Returns:
        The loss and a gradient array shaped and typed like ``sr`` (zero off-centre when ``center_only``).

    Raises:
        DimensionError: If the shapes differ.
        ConfigError: If ``eps`` is not positive.
    """
    sr_data = sr.data if isinstance(sr, VideoTensor) else np.asarray(sr)
    hr_data = hr.data if isinstance(hr, VideoTensor) else np.asarray(hr)
    if sr_data.shape != hr_data.shape:
        msg = f'Prediction shape {sr_data.shape} does not match reference {hr_data.shape}'
        raise DimensionError(msg, axis='shape')
    if eps <= 0:
        msg = f'Charbonnier eps must be positive, got {eps}'
        raise ConfigError(msg)

    selection: tuple[slice | int, ...] = (Ellipsis,)
    if center_only and sr_data.ndim == 5:
        centre = sr_data.shape[2] // 2
        selection = (slice(None), slice(None), slice(centre, centre + 1))
    diff = sr_data[selection].astype(np.float64) - hr_data[selection].astype(np.float64)
    root = np.sqrt(diff * diff + eps * eps)
    loss = float(root.mean())

    grad = np.zeros(sr_data.shape, dtype=np.float64)
    grad[selection] = diff / root / diff.size
    return loss, grad.astype(sr_data.dtype)


def adam_step(
    params: Mapping[str, np.ndarray],
    grads: Mapping[str, np.ndarray],
    state: OptimizerState,
    cfg: TrainConfig,
    lr: float | None = None,
) -> OptimizerState:
    """Apply one bias-corrected Adam update to ``params`` in place.

    Args:
        params: Parameter arrays, updated in place.
        grads: Gradients with the same keys and shapes.
        state: Moment buffers; advanced by exactly one step.
        cfg: Betas and epsilon.
        lr: Step size; defaults to ``cfg.lr``.

    Returns:
        The advanced optimizer state.

    Raises:
        DimensionError: If keys or shapes are not congruent.
        NumericError: If any gradient is not finite; nothing is modified in that case.
    """
    if set(params) != set(grads) or set(params) != set(state.m):
        msg = 'Parameters, gradients and optimizer state must share the same names'
        raise DimensionError(msg, axis='params')
    for name, p in params.items():
        if np.shape(grads[name]) != np.shape(p) or state.m[name].shape != np.shape(p):
            msg = f'{name}: gradient {np.shape(grads[name])} or moment {state.m[name].shape} differs from {np.shape(p)}'
            raise DimensionError(msg, axis=name)
        if not np.isfinite(grads[name]).all():
            msg = f'Gradient of {name} contains NaN or infinite values'
            raise NumericError(msg)

    step_size = cfg.lr if lr is None else lr
    beta1, beta2 = cfg.adam_betas
    state.step += 1
    bias1 = 1.0 - beta1 ** state.step
    bias2 = 1.0 - beta2 ** state.step
    for name, p in params.items():
        g = np.asarray(grads[name], dtype=np.float64)
        m = state.m[name] = beta1 * state.m[name] + (1.0 - beta1) * g
        v = state.v[name] = beta2 * state.v[name] + (1.0 - beta2) * g * g
        p -= (step_size * (m / bias1) / (np.sqrt(v / bias2) + cfg.adam_eps)).astype(p.dtype)
    return state


class Adam:
    """Adam bound to a set of named ``Parameter`` objects."""

    def __init__(self, params: Mapping[str, Parameter], cfg: TrainConfig) -> None:
        """Create zero moments for ``params``."""
        self.params = dict(params)
        self.cfg = cfg
        self.state = OptimizerState.for_params({name: p.data for name, p in self.params.items()})

    def step(self, lr: float) -> None:
        """Update every parameter from its accumulated gradient."""
        adam_step(
            {name: p.data for name, p in self.params.items()},
            {name: p.grad for name, p in self.params.items()},
            self.state,
            self.cfg,
            lr,
        )


def lr_schedule(history: Sequence[float], cfg: TrainConfig) -> float:
    """Step size to use after the epochs in ``history``.

    Starting from ``cfg.lr``, the best loss so far is tracked; an epoch
    improves on it only when lower by more than ``plateau_threshold``
    relative. After ``plateau_patience`` consecutive epochs without
    improvement the step size is divided by ``decay_factor`` and the count
    restarts, so each plateau decays once.

    Raises:
        ConfigError: If ``history`` is empty.
    """
    if not history:
        msg = 'lr_schedule needs at least one epoch of loss history'
        raise ConfigError(msg)
    lr = cfg.lr
    best = float('inf')
    stale = 0
    for loss in history:
        if loss < best * (1.0 - cfg.plateau_threshold) or best == float('inf'):
            best = loss
            stale = 0
            continue
        stale += 1
        if stale >= cfg.plateau_patience:
            lr /= cfg.decay_factor
            stale = 0
    return lr


@dataclass(frozen=True)
class EpochRecord:
    """One row of the loss curve."""

    epoch: int
    lr: float
    mean_loss: float


@dataclass
class TrainResult:
    """Outcome of ``train``."""

    model: FstrnModel
    curve: list[EpochRecord] = field(default_factory=list)
    step_losses: list[float] = field(default_factory=list)
    checkpoint: Path | None = None

    @property
    def steps(self) -> int:
        """Optimizer steps taken."""
        return len(self.step_losses)


def write_loss_csv(curve: Sequence[EpochRecord], path: Path) -> Path:
    """Write ``epoch,lr,mean_loss`` rows."""
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open('w', newline='') as f:
        writer = csv.writer(f, lineterminator='\n')
        writer.writerow(['epoch', 'lr', 'mean_loss'])
        for record in curve:
            writer.writerow([record.epoch, repr(record.lr), repr(record.mean_loss)])
    return path


def _restore(model: FstrnModel, checkpoint: Path | None) -> None:
    if checkpoint is None:
        return
    good, _ = load_checkpoint(checkpoint, model.lfe.weight.data.dtype)
    source = good.parameters()
    for name, p in model.parameters().items():
        p.data[...] = source[name].data


def train(
    model: FstrnModel,
    dataset: ClipDataset,
    tcfg: TrainConfig,
    out_dir: Path | None = None,
) -> TrainResult:
    """Optimise ``model`` on ``dataset`` with shuffled minibatches.

    Dropout is active only here. Each epoch appends a loss-curve row and,
    when ``out_dir`` is given, rewrites ``model.fstrn`` and ``loss.csv``.

    Args:
        model: Parameters, updated in place.
        dataset: Training volumes; never modified.
        tcfg: Optimisation settings.
        out_dir: Directory for the per-epoch checkpoint and loss curve.

    Returns:
        The trained model with its loss curve.

    Raises:
        ConfigError: If the dataset is empty or does not match the model.
        DivergenceError: If a loss or gradient becomes non-finite; the last good
            checkpoint is restored into ``model`` and named on the error.
    """
    cfg = model.config
    if len(dataset) == 0:
        msg = 'Training dataset is empty'
        raise ConfigError(msg)
    if dataset.scale != cfg.scale:
        msg = f'Dataset scale x{dataset.scale} does not match model scale x{cfg.scale}'
        raise ConfigError(msg)
    if dataset.frames != cfg.in_frames:
        msg = f'Dataset volumes have {dataset.frames} frames, model expects {cfg.in_frames}'
        raise ConfigError(msg)

    shuffle_rng, dropout_rng = np.random.default_rng(tcfg.seed).spawn(2)
    optimizer = Adam(model.parameters(), tcfg)
    dtype = model.lfe.weight.data.dtype
    result = TrainResult(model=model)
    lr = tcfg.lr
    history: list[float] = []
    last_good: Path | None = None
    logger.info('Training %s on %d volumes for %d epochs', cfg.ablation.name, len(dataset), tcfg.epochs)

    for epoch in range(1, tcfg.epochs + 1):
        losses: list[float] = []
        order = shuffle_rng.permutation(len(dataset))
        for start in range(0, len(order), tcfg.batch_size):
            lr_batch, hr_batch = dataset.batch(order[start:start + tcfg.batch_size])
            model.zero_grad()
            try:
                sr = fstrn_forward(VideoTensor(lr_batch, dtype=dtype), model, training=True, rng=dropout_rng)
                loss, grad = charbonnier_loss(sr, hr_batch, tcfg.eps_charbonnier, center_only=tcfg.center_only)
                if not np.isfinite(loss):
                    msg = f'Loss became {loss}'
                    raise NumericError(msg)
                sr.backward(grad)
                optimizer.step(lr)
            except NumericError as e:
                _restore(model, last_good)
                msg = f'Training diverged at epoch {epoch}, step {result.steps + 1}: {e!s}'
                raise DivergenceError(msg, checkpoint=str(last_good) if last_good else None) from e
            losses.append(loss)
            result.step_losses.append(loss)
            if tcfg.max_steps is not None and result.steps >= tcfg.max_steps:
                break

        record = EpochRecord(epoch=epoch, lr=lr, mean_loss=float(np.mean(losses)))
        result.curve.append(record)
        history.append(record.mean_loss)
        logger.info('epoch %d  lr %.3g  loss %.6f', epoch, lr, record.mean_loss)
        next_lr = lr_schedule(history, tcfg)
        if next_lr != lr:
            logger.info('Loss plateaued, step size %.3g -> %.3g', lr, next_lr)
        lr = next_lr

        if out_dir is not None:
            last_good = save_checkpoint(
                model, cfg, Path(out_dir) / CHECKPOINT_NAME, extra={'epoch': epoch, 'steps': result.steps},
            )
            write_loss_csv(result.curve, Path(out_dir) / LOSS_CSV_NAME)
            result.checkpoint = last_good
        if tcfg.max_steps is not None and result.steps >= tcfg.max_steps:
            break
    return result
