"""Command line for preparing data, training, inference, evaluation and analysis."""

from collections.abc import Iterator
from contextlib import contextmanager
import json
import logging
from pathlib import Path
import re
import time
from typing import Annotated, Any

from pydantic import BaseModel, ValidationError
from rich.console import Console
from rich.table import Table
import typer

from . import __version__
from .analysis import BoundInputs, bound_summary, compare_blocks, count_model_cost, measure_bound_inputs
from .config import format_validation_error, load_config_file, parse_section
from .constants import app_help, config_help, format_help
from .data import DATASET_BLOB, DATASET_MANIFEST, DegradationSpec, VolumeSpec, build_dataset, load_dataset, save_dataset
from .errors import ConfigError, FormatError, FstrnError
from .gradcheck import run_suite, summarize
from .inference import InferenceConfig, super_resolve
from .metrics import evaluate_video, write_scores
from .model import AblationFlags, FstrnConfig, FstrnModel, load_checkpoint
from .report_utils import create_error_report, create_report, file_digest, write_json
from .settings import configure_logging
from .train import CHECKPOINT_NAME, LOSS_CSV_NAME, TrainConfig, train
from .video_io import RawVideo, detect_format, load_video, save_video

logger = logging.getLogger(__name__)

RUN_MANIFEST_NAME = 'run_manifest.json'

app = typer.Typer(name='fstrn', help=app_help, no_args_is_help=True, add_completion=False)
analyze_app = typer.Typer(help='Parameter census and generalization bounds.', no_args_is_help=True)
app.add_typer(analyze_app, name='analyze')

console = Console()

ConfigOption = Annotated[Path | None, typer.Option('--config', '-c', help=config_help, exists=True, dir_okay=False)]
FormatOption = Annotated[str, typer.Option('--format', help=format_help)]
WidthOption = Annotated[int | None, typer.Option('--width', min=1, help='Frame width of raw YUV input.')]
HeightOption = Annotated[int | None, typer.Option('--height', min=1, help='Frame height of raw YUV input.')]
SeedOption = Annotated[int, typer.Option('--seed', help='Seed echoed in the run manifest and used by random steps.')]


class RunManifest(BaseModel):
    """Provenance record written next to the outputs of a command.

    Attributes:
        command (str): Command name, e.g. ``prepare`` or ``analyze params``.
        config (dict): Every validated config section the command used.
        seed (int | None): Seed of the run.
        tool_version (str): ``fstrn`` version.
        inputs (dict[str, str]): sha256 digest per input path.
        outputs (dict[str, str]): sha256 digest per output path.
        wall_clock_seconds (float): Elapsed time of the command.
    """

    command: str
    config: dict[str, Any]
    seed: int | None = None
    tool_version: str = __version__
    inputs: dict[str, str]
    outputs: dict[str, str]
    wall_clock_seconds: float


def digests(paths: list[Path]) -> dict[str, str]:
    """sha256 of every path, keyed by its string form."""
    return {str(p): file_digest(p) for p in paths}


def sidecar_path(output: Path) -> Path:
    """Run manifest location for a single file or directory output: ``<name>.run_manifest.json`` beside it."""
    return output.parent / f'{output.name}.{RUN_MANIFEST_NAME}'


def write_manifest(
    path: Path,
    command: str,
    config: dict[str, Any],
    seed: int | None,
    inputs: list[Path],
    outputs: list[Path],
    started: float,
) -> Path:
    """Digest inputs and outputs and write one ``RunManifest``."""
    manifest = RunManifest(
        command=command,
        config=config,
        seed=seed,
        inputs=digests(inputs),
        outputs=digests(outputs),
        wall_clock_seconds=time.perf_counter() - started,
    )
    write_json(path, manifest.model_dump(mode='json'))
    logger.debug('Wrote run manifest %s', path)
    return path


def emit(payload: dict[str, Any]) -> None:
    """Print a JSON payload on stdout."""
    typer.echo(json.dumps(payload, indent=2, sort_keys=True, default=str))


@contextmanager
def reported_errors() -> Iterator[None]:
    """Turn package errors into a JSON error report and exit code 1."""
    try:
        yield
    except FstrnError as e:
        fields: dict[str, Any] = {}
        for attr in ('axis', 'offset', 'term', 'checkpoint', 'path'):
            if getattr(e, attr, None) is not None:
                fields[attr] = getattr(e, attr)
        typer.echo(json.dumps(create_error_report(type(e).__name__, str(e), **fields), indent=2), err=True)
        raise typer.Exit(code=1) from e


def parse_thw(value: str) -> tuple[int, int, int]:
    """Parse ``TxHxW`` such as ``5x32x32``."""
    match = re.fullmatch(r'(\d+)x(\d+)x(\d+)', value.strip().lower())
    if not match:
        msg = f'expected TxHxW such as 5x32x32, got {value!r}'
        raise typer.BadParameter(msg)
    return int(match[1]), int(match[2]), int(match[3])


def check_video_args(path: Path, fmt: str, width: int | None, height: int | None) -> None:
    """Reject raw YUV input without explicit dimensions as a usage error."""
    kind = fmt
    if fmt == 'auto':
        with reported_errors():
            kind = detect_format(path)
    if kind == 'yuv' and (width is None or height is None):
        msg = f'{path}: raw YUV input needs both --width and --height'
        raise typer.BadParameter(msg)


def read_input(path: Path, fmt: str, width: int | None, height: int | None) -> RawVideo:
    """Load a video, tagging decoding errors with the file name."""
    try:
        return load_video(path, fmt, width, height)
    except FormatError as e:
        e.path = str(path)
        raise


def model_overrides(**flags: Any) -> dict[str, Any]:
    """Map CLI model flags onto ``FstrnConfig`` fields."""
    variant = flags.pop('variant', None)
    if variant is not None:
        flags['ablation'] = AblationFlags.from_name(variant).model_dump()
    return flags


@app.callback()
def callback(
    log_level: Annotated[str | None, typer.Option('--log-level', help='Overrides FSTRN_LOG_LEVEL.')] = None,
) -> None:
    """FSTRN video super-resolution."""
    configure_logging(log_level)


@app.command()
def prepare(
    inputs: Annotated[list[Path], typer.Argument(help='HR videos: .y4m, .yuv or PNG directories.', exists=True)],
    out: Annotated[Path, typer.Option('--out', '-o', help='Dataset directory to create.')],
    config: ConfigOption = None,
    fmt: FormatOption = 'auto',
    width: WidthOption = None,
    height: HeightOption = None,
    scale: Annotated[int | None, typer.Option('--scale', help='Downscale factor r.')] = None,
    sigma: Annotated[float | None, typer.Option('--sigma', help='Gaussian blur sigma.')] = None,
    patch: Annotated[int | None, typer.Option('--patch', help='HR volume side.')] = None,
    frames: Annotated[int | None, typer.Option('--frames', help='Frames per volume.')] = None,
    stride_s: Annotated[int | None, typer.Option('--stride-s', help='Spatial stride on the HR grid.')] = None,
    stride_t: Annotated[int | None, typer.Option('--stride-t', help='Temporal stride.')] = None,
    augment: Annotated[bool | None, typer.Option('--augment/--no-augment', help='Add rotation and flips.')] = None,
    seed: SeedOption = 0,
) -> None:
    """Degrade HR videos and crop aligned LR/HR training volumes."""
    started = time.perf_counter()
    for path in inputs:
        check_video_args(path, fmt, width, height)
    with reported_errors():
        file_config = load_config_file(config)
        degradation = _degradation(file_config, scale, sigma)
        volume_spec = _volume_spec(file_config, patch, frames, stride_s, stride_t, augment)
        videos = [(path.name, read_input(path, fmt, width, height)) for path in inputs]
        ds = build_dataset(videos, degradation, volume_spec)
        save_dataset(ds, out)
        write_manifest(
            out / RUN_MANIFEST_NAME,
            'prepare',
            {'degradation': degradation.model_dump(mode='json'), 'volumes': volume_spec.model_dump(mode='json')},
            seed,
            list(inputs),
            [out / DATASET_MANIFEST, out / DATASET_BLOB],
            started,
        )
    typer.echo(f'volumes: {len(ds)}')


def _data_section(file_config: dict[str, Any]) -> dict[str, Any]:
    raw = file_config.get('data', {})
    if not isinstance(raw, dict):
        msg = f'data: expected an object, got {type(raw).__name__}'
        raise ConfigError(msg)
    return raw


def _validate(schema: type[BaseModel], section: str, values: dict[str, Any]) -> Any:
    try:
        return schema.model_validate(values)
    except ValidationError as e:
        raise ConfigError(format_validation_error(e, section)) from e


def _degradation(file_config: dict[str, Any], scale: int | None, sigma: float | None) -> DegradationSpec:
    raw = dict(_data_section(file_config).get('degradation', {}))
    raw.update({k: v for k, v in {'scale': scale, 'gaussian_sigma': sigma}.items() if v is not None})
    return _validate(DegradationSpec, 'data.degradation', raw)


def _volume_spec(
    file_config: dict[str, Any],
    patch: int | None,
    frames: int | None,
    stride_s: int | None,
    stride_t: int | None,
    augment: bool | None,
) -> VolumeSpec:
    raw = dict(_data_section(file_config).get('volumes', {}))
    flags = {'patch': patch, 'frames_per_volume': frames, 'spatial_stride': stride_s, 'temporal_stride': stride_t,
             'augment': augment}
    raw.update({k: v for k, v in flags.items() if v is not None})
    return _validate(VolumeSpec, 'data.volumes', raw)


@app.command('train')
def train_command(
    dataset: Annotated[Path, typer.Argument(help='Directory written by prepare.', exists=True, file_okay=False)],
    out: Annotated[Path, typer.Option('--out', '-o', help='Run directory for checkpoint and loss curve.')],
    config: ConfigOption = None,
    variant: Annotated[str | None, typer.Option('--variant', help='F0C0L0, F1C0L0, F1C0L1 or F1C1L1.')] = None,
    blocks: Annotated[int | None, typer.Option('--blocks', help='Residual blocks D.')] = None,
    channels: Annotated[int | None, typer.Option('--channels', help='Feature channels C.')] = None,
    crl_mode: Annotated[str | None, typer.Option('--crl-mode', help='bilinear, nearest, bicubic, area or deconv.')] = None,
    block_kind: Annotated[str | None, typer.Option('--block-kind', help='frb or c3drb.')] = None,
    dropout: Annotated[float | None, typer.Option('--dropout', help='LR residual dropout rate.')] = None,
    lr: Annotated[float | None, typer.Option('--lr', help='Initial Adam step size.')] = None,
    batch_size: Annotated[int | None, typer.Option('--batch-size')] = None,
    epochs: Annotated[int | None, typer.Option('--epochs')] = None,
    max_steps: Annotated[int | None, typer.Option('--max-steps', help='Stop after this many optimizer steps.')] = None,
    seed: Annotated[int | None, typer.Option('--seed', help='Initialisation, shuffling and dropout seed.')] = None,
) -> None:
    """Train a network on a prepared dataset."""
    started = time.perf_counter()
    with reported_errors():
        file_config = load_config_file(config)
        ds = load_dataset(dataset)
        tcfg = parse_section(TrainConfig, file_config, 'train', {
            'lr': lr, 'batch_size': batch_size, 'epochs': epochs, 'max_steps': max_steps, 'seed': seed,
        })
        section = file_config.get('model', {})
        overrides = model_overrides(
            variant=variant, d_blocks=blocks, feat_channels=channels, crl_mode=crl_mode, block_kind=block_kind,
            dropout_rate=dropout,
        )
        if 'scale' not in section:
            overrides['scale'] = ds.scale
        if 'in_frames' not in section:
            overrides['in_frames'] = ds.frames
        cfg = parse_section(FstrnConfig, file_config, 'model', overrides)
        model = FstrnModel.init(cfg, seed=tcfg.seed)
        out.mkdir(parents=True, exist_ok=True)
        result = train(model, ds, tcfg, out)
        write_manifest(
            out / RUN_MANIFEST_NAME,
            'train',
            {'model': cfg.model_dump(mode='json'), 'train': tcfg.model_dump(mode='json')},
            tcfg.seed,
            [dataset / DATASET_MANIFEST, dataset / DATASET_BLOB],
            [out / CHECKPOINT_NAME, out / LOSS_CSV_NAME],
            started,
        )
    emit(create_report(
        variant=cfg.ablation.name,
        epochs=len(result.curve),
        steps=result.steps,
        initial_loss=result.step_losses[0],
        final_loss=result.curve[-1].mean_loss,
        checkpoint=str(result.checkpoint),
    ))


@app.command()
def infer(
    checkpoint: Annotated[Path, typer.Argument(help='Checkpoint written by train.', exists=True, dir_okay=False)],
    video: Annotated[Path, typer.Argument(help='LR video.', exists=True)],
    output: Annotated[Path, typer.Option('--output', '-o', help='.y4m file or PNG directory to write.')],
    config: ConfigOption = None,
    fmt: FormatOption = 'auto',
    width: WidthOption = None,
    height: HeightOption = None,
    tile: Annotated[int | None, typer.Option('--tile', help='LR tile side.')] = None,
    overlap: Annotated[int | None, typer.Option('--overlap', help='LR overlap between tiles.')] = None,
    seed: SeedOption = 0,
) -> None:
    """Super-resolve every frame of a video; the output has as many frames as the input."""
    started = time.perf_counter()
    check_video_args(video, fmt, width, height)
    with reported_errors():
        file_config = load_config_file(config)
        icfg = parse_section(InferenceConfig, file_config, 'inference', {'tile': tile, 'overlap': overlap})
        model, cfg = load_checkpoint(checkpoint)
        lr_video = read_input(video, fmt, width, height)
        sr = super_resolve(model, lr_video, icfg)
        written = save_video(sr, output)
        write_manifest(
            sidecar_path(written),
            'infer',
            {'model': cfg.model_dump(mode='json'), 'inference': icfg.model_dump(mode='json')},
            seed,
            [checkpoint, video],
            [written],
            started,
        )
    emit(create_report(frames=sr.num_frames, width=sr.width, height=sr.height, output=str(written)))


@app.command('eval')
def eval_command(
    sr: Annotated[Path, typer.Argument(help='Super-resolved video.', exists=True)],
    hr: Annotated[Path, typer.Argument(help='Reference HR video.', exists=True)],
    out: Annotated[Path, typer.Option('--out', '-o', help='Directory for scores.csv and summary.json.')],
    fmt: FormatOption = 'auto',
    width: WidthOption = None,
    height: HeightOption = None,
    border: Annotated[int, typer.Option('--border', min=0, help='Pixels shaved from each side.')] = 0,
) -> None:
    """PSNR and SSIM of every frame of ``sr`` against ``hr``."""
    started = time.perf_counter()
    for path in (sr, hr):
        check_video_args(path, fmt, width, height)
    with reported_errors():
        score = evaluate_video(read_input(sr, fmt, width, height), read_input(hr, fmt, width, height), border)
        csv_path, json_path = write_scores(score, out)
        write_manifest(out / RUN_MANIFEST_NAME, 'eval', {'border': border}, None, [sr, hr], [csv_path, json_path],
                       started)
    emit(create_report(**score.summary()))


@analyze_app.command('params')
def analyze_params(
    channels: Annotated[int, typer.Option('--channels', min=1, help='Feature channels C.')] = 64,
    input_thw: Annotated[str, typer.Option('--input', help='LR input volume TxHxW.')] = '5x32x32',
    flop_factor: Annotated[int, typer.Option('--flop-factor', min=1, max=2, help='FLOPs per MAC.')] = 1,
    model: Annotated[bool, typer.Option('--model', help='Add a whole-network census for the config.')] = False,
    config: ConfigOption = None,
    out: Annotated[Path | None, typer.Option('--out', '-o', help='JSON file to write.')] = None,
) -> None:
    """Compare the plain 3-D residual block with the factorized block."""
    started = time.perf_counter()
    thw = parse_thw(input_thw)
    with reported_errors():
        report = compare_blocks(channels, thw, flop_factor)
        echo: dict[str, Any] = {'channels': channels, 'input': list(thw), 'flop_factor': flop_factor}
        if model:
            cfg = parse_section(FstrnConfig, load_config_file(config), 'model', {'feat_channels': channels})
            report['model'] = count_model_cost(cfg, thw)
            echo['model'] = cfg.model_dump(mode='json')
        if out is not None:
            write_json(out, report)
            write_manifest(sidecar_path(out), 'analyze params', echo, None, [c for c in (config,) if c], [out], started)
    emit(report)


@analyze_app.command('bound')
def analyze_bound(
    checkpoint: Annotated[Path | None, typer.Argument(help='Checkpoint to measure.', dir_okay=False)] = None,
    inputs: Annotated[Path | None, typer.Option('--inputs', help='JSON BoundInputs instead of a checkpoint.',
                                               exists=True, dir_okay=False)] = None,
    x_norm: Annotated[float, typer.Option('--x-norm', help='Bound on the input norm.')] = 1.0,
    eps: Annotated[float, typer.Option('--eps', help='Covering radius.')] = 1.0,
    n_samples: Annotated[int, typer.Option('--n-samples', min=1, help='Training sample size.')] = 1,
    delta: Annotated[float, typer.Option('--delta', help='Failure probability.')] = 0.05,
    empirical_risk: Annotated[float, typer.Option('--empirical-risk', help='Training risk.')] = 0.0,
    lr_size: Annotated[str, typer.Option('--lr-size', help='LR frame HxW for interpolation norms.')] = '32x32',
    out: Annotated[Path | None, typer.Option('--out', '-o', help='JSON file to write.')] = None,
) -> None:
    """Covering number and generalization bound from measured weight norms."""
    started = time.perf_counter()
    if (checkpoint is None) == (inputs is None):
        msg = 'give either a checkpoint or --inputs'
        raise typer.BadParameter(msg)
    size = re.fullmatch(r'(\d+)x(\d+)', lr_size.strip().lower())
    if not size:
        msg = f'expected HxW, got {lr_size!r}'
        raise typer.BadParameter(msg)
    with reported_errors():
        if inputs is not None:
            try:
                bound_inputs = BoundInputs.model_validate_json(inputs.read_text())
            except ValidationError as e:
                raise ConfigError(format_validation_error(e, 'inputs')) from e
        else:
            model, _ = load_checkpoint(checkpoint)
            bound_inputs = measure_bound_inputs(
                model, x_norm=x_norm, eps=eps, n_samples=n_samples, delta=delta,
                lr_size=(int(size[1]), int(size[2])),
            )
        report = bound_summary(bound_inputs, empirical_risk)
        if out is not None:
            write_json(out, report)
            source = inputs if inputs is not None else checkpoint
            write_manifest(sidecar_path(out), 'analyze bound', {'empirical_risk': empirical_risk}, None, [source],
                           [out], started)
    emit(report)


@app.command()
def gradcheck(
    trials: Annotated[int, typer.Option('--trials', min=1, help='Random trials per op.')] = 20,
    network_trials: Annotated[int, typer.Option('--network-trials', min=0, help='Trials per network variant.')] = 2,
    seed: SeedOption = 0,
    out: Annotated[Path | None, typer.Option('--out', '-o', help='JSON file for the per-op rows.')] = None,
) -> None:
    """Finite-difference check of every differentiable operation."""
    started = time.perf_counter()
    rows = summarize(run_suite(trials, seed, network_trials=network_trials))
    table = Table(title='gradient check')
    for column in ('op', 'trials', 'max rel error', 'tolerance', 'result'):
        table.add_column(column)
    for row in rows:
        table.add_row(str(row['op']), str(row['trials']), f'{row["max_rel_error"]:.2e}', f'{row["tolerance"]:.0e}',
                      'pass' if row['passed'] else 'FAIL')
    console.print(table)
    if out is not None:
        write_json(out, create_report(rows=rows))
        write_manifest(sidecar_path(out), 'gradcheck', {'trials': trials, 'network_trials': network_trials}, seed, [],
                       [out], started)
    if not all(row['passed'] for row in rows):
        raise typer.Exit(code=1)


def main() -> None:
    """Run the command line."""
    app()


if __name__ == '__main__':
    main()
