import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.integrate import quad
from scipy.special import expit

from conftest import make_dataset
from funbayes.dataset import Dataset, DiscreteKind
from funbayes.errdensity import loo_kde
from funbayes.kernels import BandwidthParams
from funbayes.posterior import ParamLayout, Posterior, PriorSpec, log_kernel_likelihood, log_prior
from funbayes.regression import FitContext, residuals

IG = PriorSpec("ig", 1.0, 0.05)


def test_inverse_gamma_values():
    assert math.exp(IG.log_density(0.05)) == pytest.approx(7.3576, abs=1e-4)
    assert IG.log_density(0.05) == pytest.approx(math.log(20) - 1, abs=1e-12)
    assert IG.log_density(0.05) == pytest.approx(1.995732, abs=1e-6)
    mode = IG.log_density(0.025)
    assert mode > IG.log_density(0.05) and mode > IG.log_density(0.01)


def test_half_cauchy_density():
    c = PriorSpec("cauchy")
    assert math.exp(c.log_density(1.0)) == pytest.approx(1 / math.pi, rel=1e-14)
    total, _ = quad(lambda x: math.exp(c.log_density(x)), 0, np.inf)
    assert total == pytest.approx(1.0, abs=1e-8)


def test_uniform_lambda_prior():
    kinds = (DiscreteKind(2), DiscreteKind(5, ordered=True))
    base = BandwidthParams(1.0, (), (0.1, 0.2), 1.0)
    shifted = BandwidthParams(1.0, (), (0.4, 0.9), 1.0)
    diff = log_prior(base, IG, kinds) - 2 * IG.log_density(1.0)
    assert diff == pytest.approx(math.log(2), abs=1e-14)
    assert log_prior(shifted, IG, kinds) == log_prior(base, IG, kinds)


def test_prior_parse():
    assert PriorSpec.parse("ig:5:0.25") == PriorSpec("ig", 5.0, 0.25)
    assert PriorSpec.parse("cauchy") == PriorSpec("cauchy")
    assert PriorSpec.parse("Cauchy:2").scale == 2.0
    for bad in ("ig:1", "gamma:1:1", "ig:a:b", "ig:-1:1"):
        with pytest.raises(ValueError):
            PriorSpec.parse(bad)


def test_prior_favours_small_squared_bandwidth():
    dens = lambda x: math.exp(IG.log_density(x))
    below, _ = quad(dens, 0, 0.5)
    assert below > 0.5 and below > 1 - below


@pytest.mark.parametrize("prior", [IG, PriorSpec("ig", 5, 0.25), PriorSpec("cauchy")])
def test_jacobian_integrates_prior_to_one(prior):
    # each coordinate separately: the density in u must integrate to one
    log_sq = lambda u: math.exp(prior.log_density(math.exp(u)) + u)
    total, _ = quad(log_sq, -60, 60, limit=400, points=[-5, 0, 5])
    assert total == pytest.approx(1.0, abs=1e-3)
    for kind in (DiscreteKind(2), DiscreteKind(4, ordered=True)):
        layout = ParamLayout(0, (kind,))
        f = lambda v: math.exp(-math.log(kind.bound) + layout.log_jacobian(np.array([0.0, v, 0.0])))
        total, _ = quad(f, -50, 50)
        assert total == pytest.approx(1.0, abs=1e-3)
    layout = ParamLayout(0, (), localized=True)
    f = lambda v: math.exp(layout.log_jacobian(np.array([0.0, 0.0, v])))
    assert quad(f, -50, 50)[0] == pytest.approx(1.0, abs=1e-3)


def identical_ctx(y):
    n = len(y)
    grid = np.linspace(0, 1, 20)
    return FitContext.build(Dataset(grid, np.tile(grid ** 2, (n, 1)), np.zeros((n, 1)),
                                    np.zeros((n, 1), dtype=int), np.asarray(y, float), (DiscreteKind(2),)))


def test_likelihood_composition():
    ctx = identical_ctx([1.0, 2.0, 3.5])
    bw = BandwidthParams(0.8, (1.0,), (0.3,), 0.9)
    res = residuals(ctx, bw)
    expected = sum(math.log(loo_kde(res, i, 0.9)) for i in range(3))
    assert abs(log_kernel_likelihood(ctx, bw) - expected) < 1e-12


def test_likelihood_location_invariance_and_tail():
    ds = make_dataset(n=12, seed=2)
    ctx = FitContext.build(ds)
    moved = FitContext.build(Dataset(ds.grid, ds.curves, ds.xc, ds.xd, ds.y + 37.0, ds.kinds))
    bw = BandwidthParams(0.5, (0.7,), (0.2,), 0.4)
    assert log_kernel_likelihood(moved, bw) == pytest.approx(log_kernel_likelihood(ctx, bw), abs=1e-9)
    values = [log_kernel_likelihood(ctx, BandwidthParams(0.5, (0.7,), (0.2,), b)) for b in (1e2, 1e4, 1e6)]
    assert values[0] > values[1] > values[2]
    assert values[2] < 12 * (-math.log(1e6) + 1)


def test_degenerate_weights_give_minus_infinity():
    ctx = identical_ctx([1.0, 2.0, 3.0])
    ds = ctx.dataset
    ctx = FitContext.build(Dataset(ds.grid, ds.curves, ds.xc, np.array([[0], [1], [1]]), ds.y, ds.kinds))
    assert log_kernel_likelihood(ctx, BandwidthParams(1.0, (1.0,), (0.0,), 1.0)) == -math.inf


@pytest.fixture(scope="module")
def post_local():
    return Posterior(FitContext.build(make_dataset(n=15, seed=5, q=2, ordered=True)), IG, localized=True)


@settings(max_examples=40, deadline=None)
@given(u=st.lists(st.floats(-6, 6), min_size=6, max_size=6))
def test_posterior_decomposition(post_local, u):
    u = np.array(u)
    params = post_local.layout.to_params(u)
    total = post_local(u)
    rest = post_local.log_likelihood(params)
    assert abs(total - post_local.layout.log_jacobian(u) - post_local.log_prior(params) - rest) < 1e-12
    back = post_local.layout.from_params(params)
    np.testing.assert_allclose(back, u, atol=1e-8)


def test_lambda_closer_to_bound_changes_only_jacobian():
    # discrete regressor with a single observed category: lambda never enters the weights
    ds = make_dataset(n=10, seed=3)
    ds = Dataset(ds.grid, ds.curves, ds.xc, np.zeros_like(ds.xd), ds.y, ds.kinds)
    post = Posterior(FitContext.build(ds), IG)
    u1, u2 = np.array([0.1, -0.2, 0.5, -1.0]), np.array([0.1, -0.2, 4.0, -1.0])
    p1, p2 = post.layout.to_params(u1), post.layout.to_params(u2)
    lik1 = post.log_likelihood(p1)
    # the only lambda-dependence is a common factor (1 - lambda) that cancels in the NW ratio
    assert post.log_likelihood(p2) == pytest.approx(lik1, abs=1e-12)
    jac = lambda v: math.log(0.5) + math.log(expit(v)) + math.log(expit(-v))
    assert post(u2) - post(u1) == pytest.approx(jac(4.0) - jac(0.5), abs=1e-12)


def test_non_finite_u_rejected(post_local):
    with pytest.raises(ValueError):
        post_local(np.array([0.0, np.nan, 0, 0, 0, 0]))
    with pytest.raises(ValueError):
        post_local(np.zeros(3))


def test_posterior_finite_on_random_points(model1_n50):
    ds, _ = model1_n50
    post = Posterior(FitContext.build(ds), IG, localized=True)
    rng = np.random.default_rng(0)
    finite = [math.isfinite(post(rng.uniform(-3, 3, post.dim))) for _ in range(100)]
    assert np.mean(finite) > 0.9
    assert math.isfinite(post(post.default_init()))


def test_layout_names_and_natural_transform(post_local):
    layout = post_local.layout
    assert layout.names == ["delta", "h1", "lambda1", "lambda2", "b", "tau"]
    u = np.array([[0.4, -1.0, 0.3, -2.0, 1.2, 0.7]])
    p = layout.to_params(u[0])
    np.testing.assert_allclose(layout.to_natural(u)[0], [p.delta, *p.h, *p.lam, p.b, p.tau], rtol=1e-12)
