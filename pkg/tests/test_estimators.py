import numpy as np
import pytest

import nestedrisk as nr
from nestedrisk.estimators import _kernel_nodes_1d

from naive import mean_spec, nested_empirical


def msd(kappa=0.5, p=2.0):
    return nr.make_mean_semideviation(nr.MeasureParams(kappa=kappa, p=p))


def uniform_plan(layers={2}, schedule=None, nodes=64):
    return nr.SmoothingPlan(frozenset(layers), nr.KernelSpec("uniform", 1, 2.0),
                            schedule or nr.BandwidthSchedule("silverman"),
                            convolution_nodes=nodes)


# --- estimate_empirical -------------------------------------------------------

def test_empirical_constant_sample():
    s = nr.Sample(np.full(50, 3.0))
    assert nr.estimate_empirical(msd(), s).value[0] == pytest.approx(3.0, abs=1e-14)


def test_empirical_two_point():
    s = nr.Sample(np.array([0.0, 2.0]))
    est = nr.estimate_empirical(msd(), s)
    assert est.value[0] == pytest.approx(1.3535533905932737, abs=1e-14)
    assert est.chain.value is est.value


def test_empirical_k0_mean():
    s = nr.Sample(np.array([1.0, 2.0, 3.0]))
    assert nr.estimate_empirical(mean_spec(), s).value[0] == pytest.approx(2.0)


def test_empirical_matches_nested_sums_exactly():
    rng = np.random.default_rng(3)
    x = rng.normal(10, 2, size=7)
    spec = msd(0.4, 2.0)
    est = nr.estimate_empirical(spec, nr.Sample(x))
    assert est.value[0] == nested_empirical(spec, x)[0]


def test_empirical_reports_nonfinite_with_indices():
    from nestedrisk.core import CompositeSpec, DimSignature, LayerFn

    def f1(x):
        return np.where(x[:, 0] == 2.0, np.nan, x[:, 0])

    spec = CompositeSpec(DimSignature(1, 0, (1,)), (LayerFn(1, f1),))
    with pytest.raises(nr.EvaluationError) as err:
        nr.estimate_empirical(spec, nr.Sample(np.arange(5.0)))
    assert err.value.layer == 1 and err.value.sample_index == 2


def test_dimension_mismatch_rejected():
    s = nr.Sample(np.zeros((4, 2)))
    with pytest.raises(nr.ConfigError):
        nr.estimate_empirical(msd(), s)


def test_permutation_invariance():
    rng = np.random.default_rng(8)
    x = rng.normal(size=40)
    perm = rng.permutation(40)
    spec = msd()
    a = nr.estimate_empirical(spec, nr.Sample(x)).value[0]
    b = nr.estimate_empirical(spec, nr.Sample(x[perm])).value[0]
    assert a == pytest.approx(b, rel=1e-12)
    plan = uniform_plan()
    am = nr.estimate_mixed(spec, nr.Sample(x), plan).value[0]
    bm = nr.estimate_mixed(spec, nr.Sample(x[perm]), plan).value[0]
    assert am == pytest.approx(bm, rel=1e-12)


# --- estimate_mixed -----------------------------------------------------------

def test_mixed_empty_smoothing_set_bit_identical():
    rng = np.random.default_rng(1)
    s = nr.Sample(rng.normal(10, 2, size=64))
    spec = msd()
    plain = nr.estimate_empirical(spec, s)
    mixed = nr.estimate_mixed(spec, s, uniform_plan(layers=set()))
    assert np.array_equal(plain.value, mixed.value)
    assert all(np.array_equal(a, b)
               for a, b in zip(plain.chain.eta, mixed.chain.eta))


def test_mixed_small_bandwidth_limit_matches_empirical():
    s = nr.Sample(np.array([0.0, 2.0]))
    spec = msd()
    target = nr.estimate_empirical(spec, s).value[0]
    sched = nr.BandwidthSchedule("power", scale=1e-8, exponent=1e-12)
    got = nr.estimate_mixed(spec, s, uniform_plan(schedule=sched)).value[0]
    assert got == pytest.approx(target, abs=1e-6)


def test_mixed_small_bandwidth_error_shrinks_monotonically():
    rng = np.random.default_rng(9)
    s = nr.Sample(rng.normal(1.0, 0.5, size=32))
    spec = msd()
    target = nr.estimate_empirical(spec, s).value[0]
    errs = []
    for h in (1e-2, 1e-4, 1e-6):
        sched = nr.BandwidthSchedule("power", scale=h, exponent=1e-12)
        errs.append(abs(nr.estimate_mixed(spec, s, uniform_plan(schedule=sched)).value[0]
                        - target))
    assert errs[0] >= errs[1] >= errs[2]


def test_mixed_single_point_smoothed_inner_mean_is_one_sixth():
    # analytic oracle: integral over (0,1) of y^2/2 dy = 1/6
    fam = nr.make_higher_order_family(nr.MeasureParams(c=2.0, p=2.0))
    u = 0.7
    spec = fam(u)
    s = nr.Sample(np.array([u]))
    sched = nr.BandwidthSchedule("power", scale=1.0, exponent=1e-12)
    est = nr.estimate_mixed(spec, s, uniform_plan(schedule=sched))
    inner = est.chain.eta[0][0]
    assert inner == pytest.approx(1.0 / 6.0, abs=1e-14)


def test_mixed_gaussian_kernel_quadrature_path():
    rng = np.random.default_rng(12)
    s = nr.Sample(rng.normal(10, 2, size=50))
    spec = msd()
    plan = nr.SmoothingPlan(frozenset({2}), nr.KernelSpec("gaussian", 1, 2.0),
                            nr.BandwidthSchedule("power", 0.3, 0.2))
    est = nr.estimate_mixed(spec, s, plan)
    assert np.isfinite(est.value[0])
    # smoothing a convex tail power cannot reduce the inner mean
    emp = nr.estimate_empirical(spec, s)
    assert est.chain.eta[1][0] >= emp.chain.eta[1][0] - 1e-12


def test_convolution_node_underflow_rejected():
    with pytest.raises(nr.ConfigError):
        uniform_plan(nodes=2)
    with pytest.raises(nr.ConfigError):
        _kernel_nodes_1d("uniform", 2)


# --- uniform_kernel_powermax ----------------------------------------------------

def test_powermax_single_point_at_u():
    s = nr.Sample(np.array([0.0]))
    assert nr.uniform_kernel_powermax(s, 0.0, 2.0, 1.0) == pytest.approx(1 / 6, abs=1e-15)


def test_powermax_all_below_window():
    s = nr.Sample(np.array([-3.0, -2.5, -4.0]))
    assert nr.uniform_kernel_powermax(s, 0.0, 2.0, 1.0) == 0.0


def test_powermax_hand_value():
    # ((5.1)^3 - (4.9)^3) / (2*(p+1)*h) with n=1, p=2, h=0.1
    s = nr.Sample(np.array([5.0]))
    assert nr.uniform_kernel_powermax(s, 0.0, 2.0, 0.1) == pytest.approx(
        25.003333333333252, rel=1e-12)


def _split_convolution_quadrature(x, u, p, h, nodes=1000):
    """Oracle: integrate (max(0, x + z - u))^p against U(-h, h) by
    Gauss-Legendre, splitting each sample's window at its kink."""
    zn, zw = np.polynomial.legendre.leggauss(nodes // 2)
    total = 0.0
    for xi in x:
        kink = u - xi  # z at which xi + z = u
        a, b = -h, h
        pieces = []
        if a < kink < b:
            pieces = [(a, kink), (kink, b)]
        else:
            pieces = [(a, b)]
        acc = 0.0
        for lo, hi in pieces:
            z = 0.5 * (hi - lo) * zn + 0.5 * (hi + lo)
            w = 0.5 * (hi - lo) * zw
            acc += np.sum(w * np.maximum(0.0, xi + z - u) ** p) / (2 * h)
        total += acc
    return total / len(x)


def test_powermax_matches_split_quadrature():
    rng = np.random.default_rng(77)
    for _ in range(25):
        n = rng.integers(1, 6)
        x = rng.normal(0.0, 2.0, size=n)
        u = rng.normal(0.0, 2.0)
        h = 10 ** rng.uniform(-3, 0.3)
        p = rng.uniform(1.01, 3.0)
        closed = nr.uniform_kernel_powermax(nr.Sample(x), u, p, h)
        quad = _split_convolution_quadrature(x, u, p, h)
        assert abs(closed - quad) <= 1e-8 * max(1.0, abs(closed))


def test_powermax_input_validation():
    s = nr.Sample(np.array([1.0]))
    with pytest.raises(nr.ConfigError):
        nr.uniform_kernel_powermax(s, 0.0, 2.0, 0.0)
    with pytest.raises(nr.ConfigError):
        nr.uniform_kernel_powermax(s, 0.0, 1.0, 0.5)
    with pytest.raises(nr.ConfigError):
        nr.uniform_kernel_powermax(nr.Sample(np.zeros((3, 2))), 0.0, 2.0, 0.5)


# --- bandwidth ------------------------------------------------------------------

def test_bandwidth_values():
    assert nr.bandwidth(nr.BandwidthSchedule("silverman"), 1, 1.0) == pytest.approx(1.06)
    assert nr.bandwidth(nr.BandwidthSchedule("power", 1.0, 0.6), 100) == pytest.approx(
        0.06309573444801933, rel=1e-14)
    # direct arithmetic: 1.06 * 3 * 200^(-1/5)
    assert nr.bandwidth(nr.BandwidthSchedule("silverman"), 200, 3.0) == pytest.approx(
        1.1021003006166827, rel=1e-14)


def test_bandwidth_monotone_in_n():
    sched = nr.BandwidthSchedule("power", 2.0, 0.51)
    hs = [nr.bandwidth(sched, n) for n in (1, 2, 10, 100, 10_000)]
    assert all(a >= b for a, b in zip(hs, hs[1:]))
    assert all(h > 0 for h in hs)


def test_silverman_degenerate_sigma_rejected():
    with pytest.raises(nr.EvaluationError):
        nr.bandwidth(nr.BandwidthSchedule("silverman"), 10, 0.0)
    # a constant sample routed through estimate_mixed hits the same guard
    s = nr.Sample(np.full(8, 2.0))
    with pytest.raises(nr.EvaluationError):
        nr.estimate_mixed(msd(), s, uniform_plan())


# --- kernels ----------------------------------------------------------------------

@pytest.mark.parametrize("family", ["uniform", "gaussian", "epanechnikov"])
@pytest.mark.parametrize("dim", [1, 2])
def test_kernel_density_and_moment_invariants(family, dim):
    kernel = nr.KernelSpec(family, dim, moment_order=2.0)
    rule = kernel.convolution_rule(96)
    # density integrates to one
    total = float(np.sum(rule.weights))
    assert total == pytest.approx(1.0, abs=1e-8)
    # symmetry: first moment vector vanishes
    first = rule.weights @ rule.nodes
    np.testing.assert_allclose(first, np.zeros(dim), atol=1e-10)
    # stored p-th absolute moment matches quadrature
    mp_quad = float(rule.weights @ np.linalg.norm(rule.nodes, axis=1) ** 2.0)
    assert kernel.mp == pytest.approx(mp_quad, abs=1e-6)
    # density() agrees with the quadrature weights construction on a grid
    if dim == 1:
        pts = np.linspace(-0.95, 0.95, 9)[:, None]
        assert np.all(kernel.density(pts) > 0)


def test_kernel_moment_closed_forms():
    k = nr.KernelSpec("uniform", 1, 2.0)
    assert k.m1 == pytest.approx(0.5) and k.mp == pytest.approx(1 / 3)
    k = nr.KernelSpec("epanechnikov", 1, 2.0)
    assert k.m1 == pytest.approx(3 / 8) and k.mp == pytest.approx(1 / 5)
    k = nr.KernelSpec("gaussian", 1, 2.0)
    assert k.m1 == pytest.approx(np.sqrt(2 / np.pi)) and k.mp == pytest.approx(1.0)


# --- check_strong_identity ----------------------------------------------------------

def test_identity_check_pass_and_fail_exponents():
    kernel = nr.KernelSpec("uniform", 1, 2.0)
    ok = nr.check_strong_identity(nr.BandwidthSchedule("power", 1.0, 0.6), kernel, 2.0)
    assert ok.passes and ok.s2b_ok
    assert ok.exponent_identity == pytest.approx(-0.1)
    bad = nr.check_strong_identity(nr.BandwidthSchedule("power", 1.0, 0.2), kernel, 2.0)
    assert not bad.passes and not bad.s2b_ok
    assert bad.exponent_identity == pytest.approx(0.3)
    silver = nr.check_strong_identity(nr.BandwidthSchedule("silverman"), kernel, 2.0)
    assert not silver.passes and silver.exponent_identity == pytest.approx(0.3)


def test_identity_check_degenerate_huge_gamma_passes():
    kernel = nr.KernelSpec("uniform", 1, 2.0)
    check = nr.check_strong_identity(nr.BandwidthSchedule("power", 1.0, 50.0),
                                     kernel, 2.0)
    assert check.passes and check.s2b_ok


# --- consistency ---------------------------------------------------------------------

def test_estimator_consistency_rate_on_normal_law():
    # median |rho_hat - rho| over 200 seeded replications should shrink by
    # at least 2.5x per decade of n (root-n rate gives ~3.16x)
    spec = msd()
    oracle = nr.normal_oracle(10.0, np.sqrt(3.0))
    exact = nr.eval_exact_chain(spec, oracle).value[0]
    law = nr.Normal(10.0, np.sqrt(3.0))
    medians = []
    for n in (100, 1000, 10_000):
        tab = nr.run_replications(
            lambda s: nr.estimate_empirical(spec, s).value,
            nr.SamplerConfig(law, 0), n, 200, seed=1234)
        medians.append(np.median(np.abs(tab.estimates[:, 0] - exact)))
    assert medians[0] / medians[1] >= 2.5
    assert medians[1] / medians[2] >= 2.5
