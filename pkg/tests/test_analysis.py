"""Tests for the cost census, spectral norms and the bound evaluators."""

import math

import numpy as np
import pytest

from fstrn.analysis import (
    BoundInputs,
    bound_summary,
    compare_blocks,
    count_block_cost,
    count_model_cost,
    covering_bound,
    generalization_bound,
    measure_bound_inputs,
    spectral_norm,
)
from fstrn.errors import ConfigError, DomainError
from fstrn.model import FstrnConfig, FstrnModel


def unit_inputs(depth, **overrides):
    """Every norm, distance and slope set to one."""
    values = {
        's1_blocks': [1.0] * depth,
        's2_blocks': [1.0] * depth,
        'b1_blocks': [1.0] * depth,
        'b2_blocks': [1.0] * depth,
        'rho_blocks': [1.0] * depth,
        's1': 1.0, 's2': 1.0, 's3': 1.0, 's_hr': 1.0,
        'b1': 1.0, 'b2': 1.0, 'b3': 1.0, 'b_hr': 1.0,
        'rho1': 1.0, 'x_norm': 1.0, 'width': 4, 'eps': 10.0,
    }
    return BoundInputs(**(values | overrides))


def test_published_block_comparison():
    """64 channels on a 5x32x32 volume: about 110.7K/566.2M against 49.3K/251.7M."""
    table = compare_blocks(64, (5, 32, 32))

    assert table['c3drb']['params_conv'] + table['c3drb']['params_bias'] == 110_656
    assert table['c3drb']['macs'] == 566_231_040
    assert table['frb']['params_conv'] + table['frb']['params_bias'] == 49_280
    assert table['frb']['macs'] == 251_658_240
    for key in ('reduce_ratio_params', 'reduce_ratio_conv', 'reduce_ratio_flops'):
        assert table[key] == pytest.approx(55.5, abs=1.0)


def test_single_channel_block():
    """One channel: 27 weights against 12, a 55.56% reduction."""
    c3d = count_block_cost('c3drb', 1, (1, 1, 1))
    frb = count_block_cost('frb', 1, (1, 1, 1))

    assert (c3d.params_conv, frb.params_conv) == (27, 12)
    assert frb.reduce_ratio_conv == pytest.approx(100 * 15 / 27)
    assert c3d.reduce_ratio_conv == frb.reduce_ratio_conv


def test_flop_factor_doubles_flops():
    """Counting multiply and add separately doubles FLOPs but not MACs."""
    one = count_block_cost('frb', 8, (3, 8, 8), flop_factor=1)
    two = count_block_cost('frb', 8, (3, 8, 8), flop_factor=2)

    assert two.macs == one.macs
    assert two.flops == 2 * one.flops


def test_block_cost_params_total():
    """Totals include one PReLU slope per channel."""
    report = count_block_cost('frb', 64, (5, 32, 32))
    assert report.params_total == 49_280 + 64


@pytest.mark.parametrize(
    ('kind', 'channels', 'thw', 'factor'),
    [
        ('conv', 64, (5, 32, 32), 1),
        ('frb', 0, (5, 32, 32), 1),
        ('frb', 64, (5, 0, 32), 1),
        ('frb', 64, (5, 32, 32), 3),
    ],
)
def test_block_cost_rejects_bad_arguments(kind, channels, thw, factor):
    """Unknown kinds, empty shapes and odd FLOP factors are configuration errors."""
    with pytest.raises(ConfigError):
        count_block_cost(kind, channels, thw, factor)


def test_model_cost_matches_parameters():
    """The per-layer census adds up to the model's own parameter count."""
    cfg = FstrnConfig(d_blocks=3, feat_channels=8, scale=4)
    census = count_model_cost(cfg, (5, 16, 16))
    model = FstrnModel.init(cfg)

    assert census['totals']['params_total'] == sum(p.data.size for p in model.parameters().values())
    assert census['variant'] == 'F1C1L1'


def test_model_cost_counts_deconv_crl():
    """A learned cross-space residual adds its own layer."""
    plain = count_model_cost(FstrnConfig(d_blocks=1, feat_channels=4), (5, 8, 8))
    learned = count_model_cost(FstrnConfig(d_blocks=1, feat_channels=4, crl_mode='deconv'), (5, 8, 8))

    assert [r['name'] for r in learned['layers']][-1] == 'crl.deconv'
    assert learned['totals']['macs'] > plain['totals']['macs']


def test_spectral_norm_identity():
    """The identity has norm one."""
    assert spectral_norm(np.eye(4)) == pytest.approx(1.0)


def test_spectral_norm_rank_one():
    """The norm of u v^T is |u| |v|."""
    u = np.array([2.0, 0.0, 0.0])
    v = np.array([0.0, 3.0, 0.0, 0.0])
    assert spectral_norm(np.outer(u, v)) == pytest.approx(6.0)


def test_spectral_norm_matches_svd():
    """Power iteration on conv weights agrees with the SVD of their unfolding."""
    weights = np.random.default_rng(6).standard_normal((8, 4, 1, 3, 3))
    expected = np.linalg.svd(weights.reshape(8, -1), compute_uv=False)[0]

    assert spectral_norm(weights, tol=1e-10) == pytest.approx(expected, rel=1e-5)


def test_spectral_norm_zero():
    """An all-zero matrix has norm exactly zero."""
    assert spectral_norm(np.zeros((3, 5))) == 0.0


def test_covering_bound_without_blocks_or_distances():
    """With no blocks and zero distances every term vanishes."""
    b = unit_inputs(0, b1=0.0, b2=0.0, b3=0.0, b_hr=0.0)
    report = covering_bound(b)

    assert report.log_covering == 0.0
    assert report.eps_blocks == []
    assert report.r_complexity == 0.0


def test_covering_bound_two_unit_blocks():
    """Two blocks with unit norms evaluated by hand."""
    report = covering_bound(unit_inputs(2))
    log_w = math.log(2 * 4 ** 2)
    # growth 5, contraction 2, alpha_bar 50, base (10 - 2) / 50
    eps2 = 0.16 * 26 * 2 + 2
    eps3 = eps2 * 2
    expected = {
        'stem_input': 50 / 100 * log_w,
        'blocks': (1 / 0.8) ** 2 * 2 * 5 + (1 / 4) ** 2 * 4 * 5,
        'stem_upscale': 4 / eps2 ** 2 * log_w * ((1 / eps2) ** 2 + (1 / eps3) ** 2),
        'cross_space': log_w / 100,
    }

    assert report.alpha_bar == pytest.approx(50.0)
    assert report.eps_blocks == pytest.approx([0.8, 4.0])
    assert report.eps2 == pytest.approx(eps2)
    assert report.n_frb == pytest.approx([15.625, 1.25])
    assert report.star == pytest.approx(4.0)
    for term, value in expected.items():
        assert report.terms[term] == pytest.approx(value)
    assert report.log_covering == pytest.approx(sum(expected.values()))
    assert report.r_complexity == pytest.approx(10 * sum(expected.values()))
    assert report.flags


def test_covering_bound_eps_too_small():
    """eps must exceed s_hr + 1."""
    with pytest.raises(DomainError) as excinfo:
        covering_bound(unit_inputs(1, eps=1.5))
    assert excinfo.value.term == 'eps - s_hr - 1'


def test_covering_bound_zero_alpha():
    """A zero LRL slope leaves alpha_bar at zero."""
    with pytest.raises(DomainError) as excinfo:
        covering_bound(unit_inputs(1, rho1=0.0))
    assert excinfo.value.term == 'alpha_bar'


def test_bound_inputs_need_equal_lists():
    """Per-block lists must all be D long."""
    with pytest.raises(ValueError):
        unit_inputs(2, rho_blocks=[1.0])


def test_generalization_bound_without_complexity():
    """With R = 0 only the sample terms remain."""
    value = generalization_bound(0.0, 0.2, 50, 0.1)
    assert value == pytest.approx(0.2 + 8 / 50 ** 1.5 + 3 * math.sqrt(math.log(20) / 100))


def test_generalization_bound_hundred_samples():
    """N = 100, R = 4, delta = 0.05 by hand."""
    value = generalization_bound(4.0, 0.1, 100, 0.05)

    assert value == pytest.approx(3.831153, abs=1e-5)


def test_generalization_bound_quadrupled_samples():
    """Four times the data at least halves the sample terms."""
    gap = generalization_bound(0.0, 0.0, 1000, 0.05)
    assert generalization_bound(0.0, 0.0, 4000, 0.05) <= gap / 2 + 1e-15


@pytest.mark.parametrize(
    ('r', 'n', 'delta', 'term'),
    [
        (1.0, 100, 0.0, 'delta'),
        (1.0, 100, 1.0, 'delta'),
        (1.0, 1, 0.05, 'N'),
        (-1.0, 100, 0.05, 'R'),
        (math.inf, 100, 0.05, 'R'),
    ],
)
def test_generalization_bound_domain(r, n, delta, term):
    """Out-of-range arguments name the offending term."""
    with pytest.raises(DomainError) as excinfo:
        generalization_bound(r, 0.0, n, delta)
    assert excinfo.value.term == term


def test_measure_bound_inputs_frb():
    """Factorized blocks contribute both of their norms."""
    model = FstrnModel.init(FstrnConfig(d_blocks=2, feat_channels=4, scale=2), seed=1)
    b = measure_bound_inputs(model, x_norm=1.0, eps=100.0, lr_size=(8, 8))

    assert b.depth == 2
    assert b.s2_blocks == b.b2_blocks
    assert b.b_hr == 0.0
    assert b.s_hr > 0.0
    assert b.rho_blocks == [1.0, 1.0]


def test_measure_bound_inputs_plain_blocks_and_deconv():
    """Plain blocks have an identity second layer; a learned CRL is its own distance."""
    cfg = FstrnConfig(d_blocks=1, feat_channels=4, scale=2, block_kind='c3drb', crl_mode='deconv')
    b = measure_bound_inputs(FstrnModel.init(cfg, seed=1), x_norm=1.0, eps=100.0)

    assert (b.s2_blocks, b.b2_blocks) == ([1.0], [0.0])
    assert b.s_hr == b.b_hr > 0.0


def test_bound_summary_keys():
    """Both bounds are reported together."""
    summary = bound_summary(unit_inputs(1, n_samples=100), empirical_risk=0.01)

    assert set(summary) == {'covering', 'generalization_bound', 'empirical_risk'}
    assert summary['generalization_bound'] > 0.01


def literal_covering(b):
    """Covering-number bound written out term by term with explicit loops."""
    depth = len(b.s1_blocks)
    log_w = math.log(2 * b.width * b.width)
    growth = []
    contraction = []
    for d in range(depth):
        growth.append(b.rho_blocks[d] * (1 + b.s1_blocks[d]) * (1 + b.s2_blocks[d]) + 1)
        contraction.append((b.rho_blocks[d] * b.s1_blocks[d] * b.s2_blocks[d]) ** 2 + 1)
    chain = 1.0
    for g in growth:
        chain *= g
    alpha_bar = chain * b.rho1 * (1 + b.s2)
    base = (b.eps - b.s_hr - 1) / alpha_bar
    eps2 = base * (chain + 1) * b.rho1 * (1 + b.s2) + b.s_hr + 1
    eps3 = eps2 * (1 + b.s2)

    blocks = 0.0
    for d in range(depth):
        radius = base
        shrink = 1.0
        for k in range(d + 1):
            radius *= growth[k]
            shrink *= contraction[k]
        lead = (b.x_norm * b.s1 * b.rho_blocks[d] / radius) ** 2
        tail = b.b1_blocks[d] ** 2 * (1 + b.s2_blocks[d]) ** 2 + (b.b2_blocks[d] * b.s1_blocks[d]) ** 2
        blocks += lead * shrink * tail
    star = (b.x_norm * b.s1 * b.rho1) ** 2
    for c in contraction:
        star *= c

    stem_input = b.b1 ** 2 * b.x_norm ** 2 * alpha_bar / b.eps ** 2 * log_w
    stem_upscale = star * b.b2 ** 2 / eps2 ** 2 * log_w * ((b.b2 / eps2) ** 2 + (b.s2 * b.b3 / eps3) ** 2)
    cross_space = b.b_hr ** 2 * b.x_norm ** 2 / b.eps ** 2 * log_w
    return stem_input + blocks + stem_upscale + cross_space


def random_inputs(rng):
    """Valid bound inputs with one to four blocks."""
    depth = int(rng.integers(1, 5))

    def norms(low=0.1, high=2.0):
        return [float(v) for v in rng.uniform(low, high, depth)]

    s_hr = float(rng.uniform(0.5, 2.0))
    return BoundInputs(
        s1_blocks=norms(), s2_blocks=norms(), b1_blocks=norms(0.0), b2_blocks=norms(0.0),
        rho_blocks=norms(1.0, 1.5),
        s1=float(rng.uniform(0.1, 2.0)), s2=float(rng.uniform(0.1, 2.0)), s3=float(rng.uniform(0.1, 2.0)),
        s_hr=s_hr,
        b1=float(rng.uniform(0.0, 2.0)), b2=float(rng.uniform(0.0, 2.0)), b3=float(rng.uniform(0.0, 2.0)),
        b_hr=float(rng.uniform(0.0, 2.0)),
        rho1=float(rng.uniform(1.0, 1.5)), x_norm=float(rng.uniform(0.5, 5.0)),
        width=int(rng.integers(1, 128)), eps=s_hr + 1.0 + float(rng.uniform(0.5, 50.0)),
    )


def test_covering_bound_matches_literal_evaluation():
    """Ten random inputs agree with a loop-by-loop evaluation."""
    rng = np.random.default_rng(17)
    for _ in range(10):
        b = random_inputs(rng)
        expected = literal_covering(b)
        report = covering_bound(b)

        assert report.log_covering == pytest.approx(expected, rel=1e-10)
        assert report.r_complexity == pytest.approx(expected * b.eps, rel=1e-10)


def test_covering_bound_grows_with_distances():
    """Scaling every reference distance up never lowers the bound."""
    b = random_inputs(np.random.default_rng(2))
    values = []
    for k in np.linspace(0.0, 2.0, 20):
        scaled = b.model_copy(update={
            'b1_blocks': [k * v for v in b.b1_blocks],
            'b2_blocks': [k * v for v in b.b2_blocks],
            'b1': k * b.b1, 'b2': k * b.b2, 'b3': k * b.b3, 'b_hr': k * b.b_hr,
        })
        values.append(covering_bound(scaled).log_covering)

    assert all(later >= earlier for earlier, later in zip(values, values[1:]))


def test_generalization_bound_monotone_grid():
    """On a 20x20 grid the bound falls with more samples and rises with complexity."""
    samples = np.unique(np.geomspace(3, 1_000_000, 20).astype(int))
    complexities = np.linspace(0.0, 500.0, 20)
    grid = np.array([[generalization_bound(r, 0.05, int(n), 0.05) for r in complexities] for n in samples])

    assert samples.size == 20
    assert (np.diff(grid, axis=0) <= 0).all()
    assert (np.diff(grid, axis=1) >= 0).all()


def test_model_cost_matches_random_models():
    """The formula census equals the instantiated parameters for random configs."""
    rng = np.random.default_rng(23)
    for _ in range(5):
        cfg = FstrnConfig.for_variant(
            str(rng.choice(['F0C0L0', 'F1C0L0', 'F1C0L1', 'F1C1L1'])),
            d_blocks=int(rng.integers(0, 5)),
            feat_channels=int(rng.integers(1, 17)),
            scale=int(rng.choice([2, 3, 4])),
            crl_mode=str(rng.choice(['bilinear', 'deconv'])),
            block_kind=str(rng.choice(['frb', 'c3drb'])),
        )
        totals = count_model_cost(cfg, (5, 8, 8))['totals']
        census = FstrnModel.init(cfg).census()

        assert (totals['params_conv'], totals['params_bias'], totals['params_act']) == (
            census['conv'], census['bias'], census['act'])
        assert totals['params_total'] == census['total']


def test_model_cost_skips_disabled_lr_residual():
    """Without the LR residual there is no slope row to count."""
    census = count_model_cost(FstrnConfig.for_variant('F1C0L0', d_blocks=1, feat_channels=4), (5, 8, 8))

    assert 'lrl.slope' not in [r['name'] for r in census['layers']]
    assert census['totals']['params_act'] == 4
