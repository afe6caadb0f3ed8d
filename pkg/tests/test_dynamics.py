"""Right-hand side assembly, stepping schemes and trajectory integration."""

import numpy as np
import pytest

import vesiflow as vf
from vesiflow import dynamics as dy
from vesiflow import energy as en
from vesiflow import fluid as fl
from vesiflow import ledger as lg
from vesiflow import noise as nz
from vesiflow.errors import BlowUpError, ShapeError, StabilityError

from conftest import decayed_coeffs

QUIET = nz.NoiseSpec()


def make_problem(domain, gamma=1.0, feasible=True):
    a = -np.pi ** 2 if feasible else -np.pi ** 2 + 0.5
    b = 0.0 if feasible else 0.4
    return dy.Problem(domain, fl.AlphaParams(alpha=1.0, nu=1.0),
                      en.EnergyParams(m1=1.0, m2=1.0, a=a, b=b, gamma=gamma))


def random_state(domain, rng, v_amp=0.5, c_amp=0.3):
    return dy.SystemState(decayed_coeffs(domain, rng, v_amp, 2.0),
                          decayed_coeffs(domain, rng, c_amp, 2.0))


def test_equilibrium_is_fixed_point(domain):
    prob = make_problem(domain)
    dv, dphi = dy.drift(dy.equilibrium_state(domain), prob)
    assert np.abs(dv).max() == 0.0 and np.abs(dphi).max() == 0.0
    cfg = dy.StepperConfig(dt=1e-3, t_final=0.01)
    final = dy.run(dy.equilibrium_state(domain), prob, cfg, QUIET)
    assert np.abs(final.v).max() <= 1e-15 and np.abs(final.phi).max() <= 1e-15


def test_phase_drift_matches_chemical_potential(domain, rng):
    # with w = 0 the transport vanishes and dphi = -gamma * mu
    prob = make_problem(domain, gamma=0.7, feasible=False)
    c = decayed_coeffs(domain, rng, 0.3, 2.0)
    state = dy.SystemState(np.zeros_like(c), c)
    _, dphi = dy.drift(state, prob)
    mu = en.chemical_potential(vf.ScalarField(domain, c, offset=True),
                               prob.energy)
    assert np.abs(dphi + 0.7 * mu.coeffs).max() <= 1e-13 * max(
        np.abs(mu.coeffs).max(), 1.0)


def test_single_mode_velocity_decay_closed_form(domain):
    # frozen phi = -1, single stream mode: w(t) = w0 exp(-nu lam t); the
    # nonlinear term of a mode with itself projects to zero on that mode
    prob = make_problem(domain)
    lam = 2.0
    w0 = 0.1
    v0 = np.zeros((8, 8))
    v0[0, 0] = (1 + lam) * w0
    state = dy.SystemState(v0, np.zeros((8, 8)))
    t_final = 0.004
    cfg = dy.StepperConfig(dt=1e-4, t_final=t_final, scheme="imex_em")
    final = dy.run(state, prob, cfg, QUIET)
    w_num = final.v[0, 0] / (1 + lam)
    w_exact = w0 * np.exp(-prob.fluid.nu * lam * t_final)
    assert abs(w_num - w_exact) / w_exact <= 1e-6
    off = final.v.copy()
    off[0, 0] = 0.0
    assert np.abs(off).max() <= 1e-16
    assert np.abs(final.phi).max() <= 1e-16


def test_single_mode_decay_is_first_order_in_dt(domain):
    prob = make_problem(domain)
    lam, w0, t_final = 2.0, 0.1, 0.1
    errs = []
    for dt in (2e-4, 1e-4, 5e-5):
        v0 = np.zeros((8, 8))
        v0[0, 0] = (1 + lam) * w0
        final = dy.run(dy.SystemState(v0, np.zeros((8, 8))), prob,
                       dy.StepperConfig(dt=dt, t_final=t_final), QUIET)
        w_num = final.v[0, 0] / (1 + lam)
        errs.append(abs(w_num - w0 * np.exp(-2 * t_final)))
    order = np.log2(errs[0] / errs[1])
    assert 0.9 <= order <= 1.1


def test_energy_exchange_cancels(domain, rng):
    # <dv_coupling, w> == <mu, transport> so dF/dt = -dissipation exactly
    prob = make_problem(domain, feasible=False)
    for _ in range(10):
        state = random_state(domain, rng)
        ev = dy.RhsEval(state, prob, domain.modes_per_axis)
        df_dt = float(np.vdot(ev.w, ev.dv)) + float(np.vdot(ev.mu, ev.dphi))
        assert abs(df_dt + ev.dissipation) <= 1e-11 * max(ev.dissipation, 1.0)


def test_schemes_agree_to_second_order(domain, rng):
    prob = make_problem(domain)
    state = random_state(domain, rng, v_amp=0.2, c_amp=0.1)
    diffs = []
    for dt in (1e-5, 5e-6):
        cfg_e = dy.StepperConfig(dt=dt, t_final=dt, scheme="explicit_em")
        cfg_i = dy.StepperConfig(dt=dt, t_final=dt, scheme="imex_em")
        se = dy.run(state, prob, cfg_e, QUIET)
        si = dy.run(state, prob, cfg_i, QUIET)
        diffs.append(np.abs(se.v - si.v).max() + np.abs(se.phi - si.phi).max())
    # one-step difference between the schemes shrinks at O(dt^2)
    order = np.log2(diffs[0] / diffs[1])
    assert order >= 1.7


def test_strong_self_convergence_order(domain):
    # Richardson order estimate with coupled noise paths: per-step increments
    # at dt are independent across levels, so compare against a fine reference
    # driven by the same expanded path; with additive noise the strong order
    # is 1. Use the deterministic part: zero-noise Richardson on a rough state.
    rng = np.random.default_rng(1)
    prob = make_problem(domain, feasible=False)
    state = random_state(domain, rng, v_amp=0.4, c_amp=0.2)
    t_final = 0.02
    finals = []
    for dt in (4e-4, 2e-4, 1e-4):
        finals.append(dy.run(state, prob,
                             dy.StepperConfig(dt=dt, t_final=t_final), QUIET))
    d1 = np.abs(finals[0].v - finals[1].v).max() + np.abs(finals[0].phi - finals[1].phi).max()
    d2 = np.abs(finals[1].v - finals[2].v).max() + np.abs(finals[1].phi - finals[2].phi).max()
    order = np.log2(d1 / d2)
    assert 0.8 <= order <= 1.2


def test_run_determinism_and_zero_horizon(domain, rng):
    prob = make_problem(domain)
    state = random_state(domain, rng)
    spec = nz.NoiseSpec(zeta_a=0.1, zeta_b=0.1, seed=5)
    cfg = dy.StepperConfig(dt=1e-3, t_final=0.02)
    a = dy.run(state, prob, cfg, spec)
    b = dy.run(state, prob, cfg, spec)
    assert np.array_equal(a.v, b.v) and np.array_equal(a.phi, b.phi)
    zero = dy.run(state, prob, dy.StepperConfig(dt=1e-3, t_final=0.0), spec)
    assert zero.t == 0.0 and np.array_equal(zero.v, state.v)


def test_explicit_stability_guard(domain):
    prob = make_problem(domain)
    cfg = dy.StepperConfig(dt=0.5, t_final=1.0, scheme="explicit_em")
    with pytest.raises(StabilityError):
        dy.run(dy.equilibrium_state(domain), prob, cfg, QUIET)


def test_blow_up_guard_reports_state(domain, rng):
    prob = make_problem(domain)
    state = random_state(domain, rng)
    cfg = dy.StepperConfig(dt=1e-3, t_final=0.1)
    with pytest.raises(BlowUpError) as err:
        dy.run(state, prob, cfg, QUIET, f_max=1e-9)
    assert err.value.state is not None
    assert "f_value" in err.value.diagnostics


def test_galerkin_mask_confines_evolution(domain, rng):
    prob = make_problem(domain, feasible=False)
    state = random_state(domain, rng)
    masked = state.v.copy()
    masked[4:, :] = 0.0
    masked[:, 4:] = 0.0
    cmask = state.phi.copy()
    cmask[4:, :] = 0.0
    cmask[:, 4:] = 0.0
    start = dy.SystemState(masked, cmask)
    spec = nz.NoiseSpec(zeta_a=0.1, zeta_b=0.1, seed=3)
    cfg = dy.StepperConfig(dt=1e-3, t_final=0.02, galerkin_n=4)
    final = dy.run(start, prob, cfg, spec)
    assert np.abs(final.v[4:, :]).max() == 0.0
    assert np.abs(final.phi[:, 4:]).max() == 0.0
    assert np.abs(final.v[:4, :4]).max() > 0.0


def test_config_validation():
    with pytest.raises(ShapeError):
        dy.StepperConfig(dt=0.0, t_final=1.0)
    with pytest.raises(ShapeError):
        dy.StepperConfig(dt=1e-3, t_final=1.0, scheme="rk4")
    with pytest.raises(ShapeError):
        dy.StepperConfig(dt=2.0, t_final=1.0)


def test_run_ensemble_ordering(domain, rng):
    prob = make_problem(domain)
    state = random_state(domain, rng, v_amp=0.1, c_amp=0.05)
    cfg = dy.StepperConfig(dt=1e-3, t_final=0.01)
    base = nz.NoiseSpec(zeta_a=0.05, zeta_b=0.05, seed=17)
    seq = dy.run_ensemble(state, prob, cfg, base, 4, threads=1)
    par = dy.run_ensemble(state, prob, cfg, base, 4, threads=4)
    for a, b in zip(seq, par):
        assert np.array_equal(a.v, b.v) and np.array_equal(a.phi, b.phi)


def _run_coupled_em(state, prob, spec, scheme, t_final, dt, fine_dt):
    """Euler-Maruyama at step dt whose increments are sums of the fine-level
    increments, so every dt level sees the same underlying noise path."""
    domain = prob.domain
    n_sub = int(round(dt / fine_dt))
    n_steps = int(round(t_final / dt))
    cfg = dy.StepperConfig(dt=dt, t_final=t_final, scheme=scheme)
    for k in range(n_steps):
        dw = np.zeros_like(state.v)
        dz = np.zeros_like(state.phi)
        for i in range(n_sub):
            a, b = nz.increments(spec, domain, fine_dt, step=k * n_sub + i)
            dw += a
            dz += b
        ev = dy.RhsEval(state, prob, domain.modes_per_axis)
        state = dy._advance(state, ev, prob, cfg, dw, dz)
    return state


def test_strong_order_with_coupled_noise(domain, rng):
    # Richardson order against a fine reference sharing the Brownian path:
    # strong order 1 for additive noise, for both schemes
    prob = make_problem(domain, gamma=0.01)   # keep explicit stable
    state = dy.SystemState(decayed_coeffs(domain, rng, 0.2, 2.5),
                           decayed_coeffs(domain, rng, 0.1, 2.5))
    t_final, fine_dt = 0.02, 5e-5
    levels = (4e-4, 2e-4, 1e-4, 5e-5)
    for scheme in ("explicit_em", "imex_em"):
        finals = {dt: [] for dt in levels}
        for r in range(4):
            spec = nz.NoiseSpec(zeta_a=0.05, zeta_b=0.05, seed=21, stream_id=r)
            for dt in levels:
                finals[dt].append(_run_coupled_em(state, prob, spec, scheme,
                                                  t_final, dt, fine_dt))
        # consecutive-level differences on the shared path are unbiased
        diffs = []
        for i in range(len(levels) - 1):
            vals = [np.abs(a.v - b.v).max() + np.abs(a.phi - b.phi).max()
                    for a, b in zip(finals[levels[i]], finals[levels[i + 1]])]
            diffs.append(np.mean(vals))
        orders = [np.log2(diffs[i] / diffs[i + 1]) for i in range(2)]
        assert all(0.8 <= o <= 1.2 for o in orders), (scheme, orders, diffs)
