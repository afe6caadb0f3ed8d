"""Counter-based increments, trace diagnostics and hypothesis discrimination."""

import numpy as np
import pytest

import vesiflow as vf
from vesiflow import noise as nz
from vesiflow.errors import ShapeError, TraceClassError

SPEC = nz.NoiseSpec(zeta_a=1.0, p_a=2.0, zeta_b=0.5, p_b=2.0, seed=4242, stream_id=1)


def test_zero_amplitude_is_deterministic(domain):
    spec = nz.NoiseSpec()
    dw, dz = nz.increments(spec, domain, 1e-3, step=0)
    assert np.all(dw == 0.0) and np.all(dz == 0.0)


def test_bitwise_replay(domain):
    a = nz.increments(SPEC, domain, 1e-3, step=123)
    b = nz.increments(SPEC, domain, 1e-3, step=123)
    assert np.array_equal(a[0], b[0]) and np.array_equal(a[1], b[1])


def test_streams_steps_and_equations_differ(domain):
    dw, dz = nz.increments(SPEC, domain, 1e-3, step=5)
    dw2, _ = nz.increments(SPEC, domain, 1e-3, step=6)
    other = nz.NoiseSpec(zeta_a=1.0, p_a=2.0, zeta_b=0.5, p_b=2.0, seed=4242,
                         stream_id=2)
    dw3, _ = nz.increments(other, domain, 1e-3, step=5)
    assert not np.array_equal(dw, dw2)
    assert not np.array_equal(dw, dw3)
    assert not np.array_equal(dw / SPEC.sigma_a(domain),
                              dz / SPEC.sigma_b(domain))


def test_refinement_consistency(domain, domain16):
    # mode (j,k) keeps its increments when the band grows
    small = nz.increments(SPEC, domain, 1e-3, step=9)
    large = nz.increments(SPEC, domain16, 1e-3, step=9)
    n = domain.modes_per_axis
    assert np.array_equal(large[0][:n, :n], small[0])
    assert np.array_equal(large[1][:n, :n], small[1])


def test_galerkin_mask(domain):
    dw, dz = nz.increments(SPEC, domain, 1e-3, step=3, galerkin_n=4)
    assert np.all(dw[4:, :] == 0.0) and np.all(dw[:, 4:] == 0.0)
    assert np.all(dz[4:, :] == 0.0) and np.all(dz[:, 4:] == 0.0)


def test_variance_monte_carlo(domain):
    # sample variance of dZ_11 against sigma^2 dt within 3 standard errors
    dt = 1e-3
    n_draws = 100_000
    spec = nz.NoiseSpec(zeta_b=0.5, p_b=2.0, seed=7, stream_id=0)
    # vary the step to get independent draws of the same mode
    vals = np.array([nz.increments(spec, domain, dt, step=s)[1][0, 0]
                     for s in range(n_draws // 50)])
    target = spec.sigma_b(domain)[0, 0] ** 2 * dt
    se = target * np.sqrt(2.0 / (len(vals) - 1))
    assert abs(vals.var(ddof=1) - target) <= 3 * se


def test_mode_independence(domain):
    n_samples = 10_000
    spec = nz.NoiseSpec(zeta_b=1.0, p_b=0.0, seed=11, override=True)
    draws = np.array([nz.increments(spec, domain, 1.0, step=s)[1]
                      for s in range(n_samples)])
    a = draws[:, 0, 0]
    b = draws[:, 3, 5]
    corr = np.corrcoef(a, b)[0, 1]
    assert abs(corr) <= 4 / np.sqrt(n_samples)


def test_trace_class_guard(domain):
    bad = nz.NoiseSpec(zeta_b=1.0, p_b=1.0)
    assert not bad.hypothesis_holds
    with pytest.raises(TraceClassError):
        nz.increments(bad, domain, 1e-3, step=0)
    overridden = nz.NoiseSpec(zeta_b=1.0, p_b=1.0, override=True)
    nz.increments(overridden, domain, 1e-3, step=0)
    # zero amplitude ignores the decay exponent
    assert nz.NoiseSpec(zeta_b=0.0, p_b=0.0).hypothesis_holds


def test_trace_diagnostics_single_mode(domain):
    spec = nz.NoiseSpec(zeta_a=1.0, p_a=0.0)
    td = nz.trace_diagnostics(spec, domain, n=1, alpha=1.0)
    assert td.tr_a_weighted == pytest.approx(1 / 3, rel=1e-15)


def test_trace_partial_sums_discriminate(domain16):
    # p_b = 2: partial sums of sigma^2 lam^2 are increasing and bounded;
    # p_b = 1: they grow without visible saturation
    good = nz.NoiseSpec(zeta_b=1.0, p_b=2.0)
    bad = nz.NoiseSpec(zeta_b=1.0, p_b=1.0)
    ns = np.arange(1, 257)
    good_sums = np.array([nz.trace_diagnostics(good, domain16, int(n), 1.0).tr_b_delta2
                          for n in ns])
    bad_sums = np.array([nz.trace_diagnostics(bad, domain16, int(n), 1.0).tr_b_delta2
                         for n in ns])
    assert np.all(np.diff(good_sums) >= -1e-15)
    # saturation of the convergent series: late increments are tiny
    assert good_sums[-1] - good_sums[128] <= 0.02 * good_sums[-1]
    # divergent: the second half adds a large share, and tail increments
    # do not decay (each new mode adds ~1)
    assert bad_sums[-1] - bad_sums[128] >= 0.3 * bad_sums[-1]
    assert bad.hypothesis_holds is False and good.hypothesis_holds is True


def test_sobolev_sums_closed_forms(domain):
    spec = nz.NoiseSpec(zeta_b=1.0, p_b=2.0)
    zero = nz.sobolev_sums(nz.NoiseSpec(), domain, domain.n_modes)
    assert zero.sum_inf == zero.sum_w22 == zero.sum_grad3 == 0.0
    one = nz.sobolev_sums(spec, domain, 1)
    sigma11 = spec.sigma_b(domain)[0, 0]
    assert one.sum_inf == pytest.approx((sigma11 * 2 / np.pi) ** 2, rel=1e-13)
    # W22 norm of eta_jk is 1 + lam + lam^2 (all second derivatives included)
    assert one.sum_w22 == pytest.approx(sigma11 ** 2 * (1 + 2 + 4), rel=1e-12)


def test_sobolev_sums_controlled_by_trace(domain16):
    spec = nz.NoiseSpec(zeta_b=1.0, p_b=2.0)
    ratios = []
    for n in (16, 64, 128, 256):
        s = nz.sobolev_sums(spec, domain16, n)
        td = nz.trace_diagnostics(spec, domain16, n, 1.0)
        ratios.append((s.sum_inf + s.sum_w22 + s.sum_grad3) / td.tr_b_delta2)
    # bounded, and not growing beyond the small-n transient
    assert all(np.isfinite(r) for r in ratios)
    assert ratios[-1] <= ratios[1] * 1.05


def test_mode_cap(domain):
    spec = nz.NoiseSpec(zeta_a=1.0)
    with pytest.raises(ShapeError):
        nz.increments(spec, vf.DomainSpec(65), 1e-3, 0)
    with pytest.raises(ShapeError):
        nz.increments(spec, domain, -1.0, 0)
