"""End-to-end tests of the command line."""

import json

import numpy as np
import pytest
from typer.testing import CliRunner

from fstrn.main import RUN_MANIFEST_NAME, app
from fstrn.video_io import RawVideo, load_video, save_video

runner = CliRunner()


def invoke(*args):
    """Run the app with string arguments."""
    return runner.invoke(app, [str(a) for a in args])


def payload(result):
    """Parse the JSON object printed on stdout."""
    text = result.stdout
    return json.loads(text[text.index('{'):])


@pytest.fixture
def hr_clip(tmp_path):
    """A smooth 15x176x176 clip stored as y4m."""
    t, y, x = np.meshgrid(np.arange(15), np.arange(176), np.arange(176), indexing='ij')
    frames = 0.5 + 0.4 * np.sin(x / 9.0 + t / 4.0) * np.cos(y / 7.0)
    return save_video(RawVideo(frames), tmp_path / 'hr.y4m')


@pytest.fixture
def small_clip(tmp_path):
    """A 6x32x32 clip for quick runs."""
    frames = np.random.default_rng(2).random((6, 32, 32))
    return save_video(RawVideo(frames), tmp_path / 'small.y4m')


def prepare_small(small_clip, out):
    """Cut x2 volumes of 3x16x16 from the small clip."""
    return invoke('prepare', small_clip, '--out', out, '--scale', 2, '--sigma', 1.0, '--patch', 16,
                  '--frames', 3, '--stride-s', 16, '--stride-t', 3)


def test_prepare_counts_volumes(hr_clip, tmp_path):
    """Default geometry gives eight volumes from a 15x176x176 clip."""
    result = invoke('prepare', hr_clip, '--out', tmp_path / 'ds')

    assert result.exit_code == 0, result.output
    assert 'volumes: 8' in result.stdout
    manifest = json.loads((tmp_path / 'ds' / RUN_MANIFEST_NAME).read_text())
    assert manifest['command'] == 'prepare'
    assert manifest['seed'] == 0
    assert str(hr_clip) in manifest['inputs']


def test_prepare_augment(hr_clip, tmp_path):
    """Augmentation quadruples the volume count."""
    result = invoke('prepare', hr_clip, '--out', tmp_path / 'ds', '--augment')

    assert 'volumes: 32' in result.stdout


def test_prepare_is_reproducible(small_clip, tmp_path):
    """Two runs with the same inputs write byte-identical datasets."""
    prepare_small(small_clip, tmp_path / 'a')
    prepare_small(small_clip, tmp_path / 'b')
    first = json.loads((tmp_path / 'a' / RUN_MANIFEST_NAME).read_text())
    second = json.loads((tmp_path / 'b' / RUN_MANIFEST_NAME).read_text())

    assert sorted(first['outputs'].values()) == sorted(second['outputs'].values())


def test_prepare_raw_yuv_needs_size(tmp_path):
    """Raw YUV without --height is a usage error."""
    clip = tmp_path / 'clip.yuv'
    clip.write_bytes(bytes(96))
    result = invoke('prepare', clip, '--out', tmp_path / 'ds', '--width', 8)

    assert result.exit_code == 2


def test_prepare_schema_violation(small_clip, tmp_path):
    """A bad config value is reported by its JSON path."""
    config = tmp_path / 'config.json'
    config.write_text(json.dumps({'data': {'volumes': {'patch': 0}}}))
    result = invoke('prepare', small_clip, '--out', tmp_path / 'ds', '--config', config)

    assert result.exit_code == 1
    assert 'data.volumes.patch' in result.output
    assert 'ConfigError' in result.output


def test_train_infer_eval_pipeline(small_clip, tmp_path):
    """Prepare, train for one epoch, upscale an LR clip and score it."""
    assert prepare_small(small_clip, tmp_path / 'ds').exit_code == 0

    trained = invoke('train', tmp_path / 'ds', '--out', tmp_path / 'run', '--blocks', 1, '--channels', 4,
                     '--epochs', 1, '--batch-size', 4)
    assert trained.exit_code == 0, trained.output
    report = payload(trained)
    assert report['variant'] == 'F1C1L1'
    assert report['steps'] == 2
    assert (tmp_path / 'run' / 'model.fstrn').exists()
    assert (tmp_path / 'run' / 'loss.csv').exists()

    lr = save_video(RawVideo(np.random.default_rng(3).random((4, 8, 10))), tmp_path / 'lr.y4m')
    inferred = invoke('infer', tmp_path / 'run' / 'model.fstrn', lr, '--output', tmp_path / 'sr.y4m')
    assert inferred.exit_code == 0, inferred.output
    assert payload(inferred)['frames'] == 4
    assert load_video(tmp_path / 'sr.y4m').frames.shape == (4, 16, 20)
    assert (tmp_path / f'sr.y4m.{RUN_MANIFEST_NAME}').exists()

    scored = invoke('eval', tmp_path / 'sr.y4m', tmp_path / 'sr.y4m', '--out', tmp_path / 'scores')
    assert scored.exit_code == 0, scored.output
    summary = payload(scored)
    assert summary['mean_ssim'] == pytest.approx(1.0)
    assert summary['infinite_psnr_frames'] == 4
    assert (tmp_path / 'scores' / 'scores.csv').exists()


def run_pipeline(small_clip, lr_clip, root):
    """Prepare, train for 50 steps, upscale and score under ``root``."""
    assert prepare_small(small_clip, root / 'ds').exit_code == 0
    trained = invoke('train', root / 'ds', '--out', root / 'run', '--blocks', 1, '--channels', 4, '--epochs', 25,
                     '--batch-size', 4, '--max-steps', 50, '--seed', 7)
    assert trained.exit_code == 0, trained.output
    assert payload(trained)['steps'] == 50
    inferred = invoke('infer', root / 'run' / 'model.fstrn', lr_clip, '--output', root / 'sr.y4m')
    assert inferred.exit_code == 0, inferred.output
    scored = invoke('eval', root / 'sr.y4m', lr_clip.parent / 'hr.y4m', '--out', root / 'scores')
    assert scored.exit_code == 0, scored.output
    return (root / 'run' / 'model.fstrn').read_bytes(), (root / 'scores' / 'scores.csv').read_bytes()


def test_pipeline_is_byte_reproducible(small_clip, tmp_path):
    """Two seeded runs write identical checkpoints and score tables."""
    rng = np.random.default_rng(3)
    lr_clip = save_video(RawVideo(rng.random((4, 8, 10))), tmp_path / 'lr.y4m')
    save_video(RawVideo(rng.random((4, 16, 20))), tmp_path / 'hr.y4m')

    first = run_pipeline(small_clip, lr_clip, tmp_path / 'a')
    second = run_pipeline(small_clip, lr_clip, tmp_path / 'b')

    assert first[0] == second[0]
    assert first[1] == second[1]


def test_infer_corrupt_checkpoint(small_clip, tmp_path):
    """A damaged checkpoint is a JSON error report with exit code 1."""
    bad = tmp_path / 'model.fstrn'
    bad.write_bytes(b'not a checkpoint')
    result = invoke('infer', bad, small_clip, '--output', tmp_path / 'sr.y4m')

    assert result.exit_code == 1
    assert '"FormatError"' in result.output
    assert '"offset": 0' in result.output


def test_eval_size_mismatch(small_clip, tmp_path):
    """Videos of different sizes cannot be scored."""
    other = save_video(RawVideo(np.zeros((6, 32, 30))), tmp_path / 'other.y4m')
    result = invoke('eval', small_clip, other, '--out', tmp_path / 'scores')

    assert result.exit_code == 1
    assert 'DimensionError' in result.output


def test_analyze_params(tmp_path):
    """The block comparison is printed as JSON and written with a run manifest."""
    out = tmp_path / 'params.json'
    result = invoke('analyze', 'params', '--channels', 64, '--input', '5x32x32', '--out', out)

    assert result.exit_code == 0, result.output
    table = payload(result)
    assert table['c3drb']['macs'] == 566_231_040
    assert table['reduce_ratio_conv'] == pytest.approx(55.56, abs=0.01)
    assert json.loads(out.read_text()) == table
    assert (tmp_path / f'params.json.{RUN_MANIFEST_NAME}').exists()


def test_analyze_params_bad_input_shape():
    """The input volume must be written TxHxW."""
    assert invoke('analyze', 'params', '--input', '5x32').exit_code == 2


def test_analyze_bound_from_inputs(tmp_path):
    """Bound inputs given as JSON are evaluated directly."""
    inputs = tmp_path / 'inputs.json'
    inputs.write_text(json.dumps({
        's1_blocks': [1.0], 's2_blocks': [1.0], 'b1_blocks': [1.0], 'b2_blocks': [1.0], 'rho_blocks': [1.0],
        's1': 1.0, 's2': 1.0, 's3': 1.0, 's_hr': 1.0, 'b1': 1.0, 'b2': 1.0, 'b3': 1.0, 'b_hr': 1.0,
        'rho1': 1.0, 'x_norm': 1.0, 'width': 4, 'eps': 10.0, 'n_samples': 100,
    }))
    result = invoke('analyze', 'bound', '--inputs', inputs, '--empirical-risk', 0.01)

    assert result.exit_code == 0, result.output
    report = payload(result)
    assert report['covering']['log_covering'] > 0
    assert report['generalization_bound'] > 0.01


def test_analyze_bound_domain_error(tmp_path):
    """A covering radius below s_hr + 1 names the failing term."""
    inputs = tmp_path / 'inputs.json'
    inputs.write_text(json.dumps({
        's1': 1.0, 's2': 1.0, 's3': 1.0, 's_hr': 1.0, 'b1': 1.0, 'b2': 1.0, 'b3': 1.0, 'b_hr': 1.0,
        'rho1': 1.0, 'x_norm': 1.0, 'width': 4, 'eps': 1.5,
    }))
    result = invoke('analyze', 'bound', '--inputs', inputs)

    assert result.exit_code == 1
    assert 'DomainError' in result.output
    assert 'eps - s_hr - 1' in result.output


def test_analyze_bound_needs_one_source():
    """Neither a checkpoint nor --inputs is a usage error."""
    assert invoke('analyze', 'bound').exit_code == 2


def test_gradcheck_table(tmp_path):
    """A short check run passes and prints its table."""
    result = invoke('gradcheck', '--trials', 1, '--network-trials', 0, '--out', tmp_path / 'grad.json')

    assert result.exit_code == 0, result.output
    assert 'conv3d' in result.stdout
    assert json.loads((tmp_path / 'grad.json').read_text())['success'] is True
