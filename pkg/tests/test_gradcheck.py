"""Tests for the finite-difference gradient checker."""

import numpy as np
import pytest

from fstrn.gradcheck import (
    OP_CASES,
    GradCheckResult,
    check_gradients,
    network_case,
    relative_error,
    run_suite,
    summarize,
)
from fstrn.tensor import Parameter, VideoTensor, prelu


def test_relative_error():
    """Differences are scaled by the larger magnitude."""
    assert relative_error(np.array([1.0, 2.0]), np.array([1.0, 2.0])) == 0.0
    assert relative_error(np.array([4.0]), np.array([3.0])) == pytest.approx(0.25)
    assert relative_error(np.zeros(3), np.zeros(3)) == 0.0


@pytest.mark.parametrize('name', sorted(OP_CASES))
def test_op_gradients(name):
    """Every differentiable op agrees with central differences."""
    rng = np.random.default_rng(3)
    assert check_gradients(OP_CASES[name](rng), rng) < 1e-4


@pytest.mark.parametrize(('variant', 'mode'), [('F1C1L1', 'bilinear'), ('F1C1L1', 'deconv'), ('F0C0L0', 'nearest')])
def test_network_gradients(variant, mode):
    """The whole network backpropagates correctly into input and weights."""
    rng = np.random.default_rng(4)
    assert check_gradients(network_case(rng, variant, mode), rng, step=1e-6) < 1e-3


def test_wrong_gradient_is_detected():
    """A collector that reports a doubled gradient fails the check."""
    rng = np.random.default_rng(5)
    x = VideoTensor(rng.standard_normal((1, 1, 1, 3, 3)) + 3.0, requires_grad=True)
    slope = Parameter(np.full(1, 0.25), 'slope')

    def collect():
        return {'x': 2.0 * x.grad}

    case = (lambda: prelu(x, slope), {'x': x.data}, collect)
    assert check_gradients(case, rng) > 0.4


def test_run_suite_passes_and_summarizes():
    """A short suite passes and folds into one row per op."""
    results = run_suite(trials=2, seed=1, network_trials=1)
    rows = summarize(results)

    assert all(r.passed for r in results)
    assert {row['op'] for row in rows} >= {'conv3d', 'deconv3d', 'charbonnier_loss', 'fstrn_F1C1L1_deconv'}
    conv = next(row for row in rows if row['op'] == 'conv3d')
    assert conv['trials'] == 2


def test_result_pass_flag():
    """A result passes when its error is within tolerance."""
    assert GradCheckResult('op', 0, 1e-5, 1e-4).passed
    assert not GradCheckResult('op', 0, 1e-3, 1e-4).passed
