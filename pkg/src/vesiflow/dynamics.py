"""Galerkin right-hand side assembly and Euler-Maruyama time integration.

The state carries the momentum coefficients v = (I + alpha^2 A) w together
with the sine part of phi = -1 + psi.  One right-hand-side evaluation
produces, from a single set of grid values,

    dv   = -nu lambda v - <b_tilde(w, u), e_jk> + <mu grad(phi), e_jk>,
    dphi = -<w . grad(phi), eta_jk> - gamma mu_jk,

with mu the band-projected chemical potential.  Because the velocity
coupling and the transport term are built from the same mu grid and the same
gradient grids, the energy exchange between the two equations cancels to
rounding in the discrete balance, exactly as in the continuous derivation.

Schemes: plain Euler-Maruyama, and an IMEX variant whose implicit part is
the diagonal stiffness (nu A on the momentum; the mobility times the
(lap^2 - lap + 1) symbol, i.e. the linear half of the uniqueness split, on
the phase field).  Both are strong order 1 for this additive-noise system.

A trajectory is sequential; ensembles parallelize across trajectories with
stateless noise, and results are reduced in stream-id order so aggregates do
not depend on the thread count.
"""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .basis import DomainSpec
from .energy import EnergyParams, PhiPipeline, mn_symbol
from .errors import BlowUpError, ShapeError, StabilityError
from .fluid import AlphaParams
from .ledger import BalanceRecord
from .noise import NoiseSpec, increments

SCHEMES = ("explicit_em", "imex_em")


@dataclass(frozen=True)
class Problem:
    """Static problem data: discretization, fluid constants, energy constants."""

    domain: DomainSpec
    fluid: AlphaParams
    energy: EnergyParams


@dataclass(frozen=True)
class SystemState:
    v: np.ndarray                  # momentum coefficients (I + alpha^2 A) w
    phi: np.ndarray                # sine coefficients of phi + 1
    t: float = 0.0
    step: int = 0

    def __post_init__(self):
        for name in ("v", "phi"):
            arr = np.asarray(getattr(self, name), dtype=float)
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        if self.v.shape != self.phi.shape or self.v.ndim != 2:
            raise ShapeError("state arrays must be two identically shaped squares")


@dataclass(frozen=True)
class StepperConfig:
    dt: float
    t_final: float
    scheme: str = "imex_em"
    galerkin_n: int = 0            # active modes per axis; 0 means all

    def __post_init__(self):
        if self.scheme not in SCHEMES:
            raise ShapeError(f"unknown scheme {self.scheme!r}; pick from {SCHEMES}")
        if self.dt <= 0 or self.t_final < 0:
            raise ShapeError("need dt > 0 and t_final >= 0")
        if self.dt > self.t_final > 0:
            raise ShapeError("dt must not exceed the horizon")


def equilibrium_state(domain: DomainSpec) -> SystemState:
    n = domain.modes_per_axis
    return SystemState(np.zeros((n, n)), np.zeros((n, n)))


def _mask_outside(arr: np.ndarray, n_active: int):
    arr[n_active:, :] = 0.0
    arr[:, n_active:] = 0.0


class RhsEval:
    """One full right-hand-side evaluation plus the balance quantities."""

    __slots__ = ("dv", "dphi", "mu", "w", "phi_work", "kinetic", "grad_kinetic",
                 "breakdown", "f_value", "dissipation")

    def __init__(self, state: SystemState, prob: Problem, n_active: int):
        domain = prob.domain
        tr = domain.transforms()
        alpha, nu = prob.fluid.alpha, prob.fluid.nu
        gamma = prob.energy.gamma
        lam = tr.lam

        v = state.v
        w = v / (1.0 + alpha * alpha * lam)
        scale = tr.eta_norm / np.sqrt(lam)
        w1 = tr.synth_sc(w * scale * tr.k)
        w2 = -tr.synth_cs(w * scale * tr.j)
        omega = tr.scalar_synthesis(np.sqrt(lam) * v)      # curl of u, u = v in modes
        bt = scale * (tr.k * tr.anal_sc(-w2 * omega) - tr.j * tr.anal_cs(w1 * omega))

        work = PhiPipeline(domain, state.phi)
        mu = work.mu_coeffs(prob.energy)
        if n_active < domain.modes_per_axis:
            _mask_outside(mu, n_active)
            _mask_outside(bt, n_active)
        dxpsi = tr.eta_norm * tr.synth_cs(tr.j * state.phi)
        dypsi = tr.eta_norm * tr.synth_sc(tr.k * state.phi)
        transport = tr.scalar_analysis(w1 * dxpsi + w2 * dypsi)
        mu_grid = tr.scalar_synthesis(mu)
        coupling = scale * (tr.k * tr.anal_sc(mu_grid * dxpsi)
                            - tr.j * tr.anal_cs(mu_grid * dypsi))
        if n_active < domain.modes_per_axis:
            _mask_outside(transport, n_active)
            _mask_outside(coupling, n_active)

        self.dv = -nu * lam * v - bt + coupling
        self.dphi = -transport - gamma * mu
        self.mu = mu
        self.w = w
        self.phi_work = work
        self.kinetic = 0.5 * float(np.vdot(w, w))
        self.grad_kinetic = 0.5 * alpha * alpha * float(np.vdot(w, lam * w))
        self.breakdown = work.breakdown(prob.energy)
        self.f_value = self.kinetic + self.grad_kinetic + self.breakdown.total
        self.dissipation = (nu * float(np.vdot(w, lam * w)
                                       + alpha * alpha * np.vdot(w, lam ** 2 * w))
                            + gamma * float(np.vdot(mu, mu)))


def drift(state: SystemState, prob: Problem,
          galerkin_n: int | None = None) -> tuple[np.ndarray, np.ndarray]:
    """Deterministic right-hand side (dv, dphi) at the given state."""
    n_active = galerkin_n or prob.domain.modes_per_axis
    ev = RhsEval(state, prob, n_active)
    return ev.dv, ev.dphi


def _check_guards(cfg: StepperConfig, prob: Problem, n_active: int):
    tr = prob.domain.transforms()
    lam_max = float(tr.lam[:n_active, :n_active].max())
    if cfg.scheme == "explicit_em":
        if cfg.dt * prob.fluid.nu * lam_max > 2.0:
            raise StabilityError(
                f"explicit scheme violates dt*nu*lambda_max <= 2 "
                f"(dt={cfg.dt}, nu={prob.fluid.nu}, lambda_max={lam_max})")
        stiff = prob.energy.gamma * mn_symbol(np.array(lam_max))
        if cfg.dt * float(stiff) > 2.0:
            raise StabilityError(
                f"explicit scheme violates dt*gamma*(lam^2+lam+1) <= 2 "
                f"(dt={cfg.dt}, stiffness={float(stiff)})")


def _advance(state: SystemState, ev: RhsEval, prob: Problem, cfg: StepperConfig,
             dw: np.ndarray, dz: np.ndarray) -> SystemState:
    tr = prob.domain.transforms()
    lam = tr.lam
    dt = cfg.dt
    if cfg.scheme == "explicit_em":
        v_new = state.v + dt * ev.dv + dw
        c_new = state.phi + dt * ev.dphi + dz
    else:
        nu = prob.fluid.nu
        gamma = prob.energy.gamma
        stiff_phi = gamma * mn_symbol(lam)
        v_new = (state.v + dt * (ev.dv + nu * lam * state.v) + dw) / (1.0 + dt * nu * lam)
        c_new = (state.phi + dt * (ev.dphi + stiff_phi * state.phi) + dz) / (1.0 + dt * stiff_phi)
    return SystemState(v_new, c_new, state.t + dt, state.step + 1)


def step(state: SystemState, prob: Problem, cfg: StepperConfig,
         nspec: NoiseSpec) -> SystemState:
    """Single Euler-Maruyama step (explicit or IMEX) with fresh noise."""
    n_active = cfg.galerkin_n or prob.domain.modes_per_axis
    _check_guards(cfg, prob, n_active)
    ev = RhsEval(state, prob, n_active)
    gal = cfg.galerkin_n or None
    dw, dz = increments(nspec, prob.domain, cfg.dt, state.step, galerkin_n=gal)
    new = _advance(state, ev, prob, cfg, dw, dz)
    if not (np.isfinite(new.v).all() and np.isfinite(new.phi).all()):
        raise BlowUpError("non-finite state after step", state=state,
                          diagnostics={"t": state.t, "step": state.step})
    return new


def _make_record(prob: Problem, nspec: NoiseSpec, n_active: int, dt: float,
                 ev: RhsEval, f_after: float, dw: np.ndarray, dz: np.ndarray,
                 t: float) -> BalanceRecord:
    tr = prob.domain.transforms()
    alpha = prob.fluid.alpha
    trace_input = 0.0
    if nspec.zeta_a > 0.0:
        sa2 = nspec.sigma_a(prob.domain) ** 2
        if n_active < prob.domain.modes_per_axis:
            _mask_outside(sa2, n_active)
        trace_input += 0.5 * float((sa2 / (1.0 + alpha * alpha * tr.lam)).sum())
    if nspec.zeta_b > 0.0:
        sb2 = nspec.sigma_b(prob.domain) ** 2
        if n_active < prob.domain.modes_per_axis:
            _mask_outside(sb2, n_active)
        trace_input += 0.5 * ev.phi_work.hessian_diag_weighted(prob.energy, sb2)
    martingale = float(np.vdot(ev.w, dw)) + float(np.vdot(ev.mu, dz))
    residual = (f_after - ev.f_value + ev.dissipation * dt
                - trace_input * dt - martingale)
    bd = ev.breakdown
    return BalanceRecord(
        t=t, f_value=ev.f_value, kinetic=ev.kinetic, grad_kinetic=ev.grad_kinetic,
        e_bending=bd.bending, e_volume=bd.volume_penalty, e_area=bd.area_penalty,
        dissipation=ev.dissipation, trace_input=trace_input,
        martingale_increment=martingale, residual=residual)


def run(initial: SystemState, prob: Problem, cfg: StepperConfig, nspec: NoiseSpec,
        *, f_max: float | None = None, record_sink=None, record_every: int = 1,
        snapshot_sink=None, snapshot_every: int = 0) -> SystemState:
    """Integrate from t = 0 to the horizon, emitting balance records and
    state snapshots to the given sinks.

    Records are per-step It{o} ledgers evaluated at the pre-step state (the
    Euler-Maruyama convention); ``record_every`` thins emission, not
    computation of the step itself.  Blow-up (non-finite state or balance
    value above ``f_max``) raises with the last finite state attached.
    """
    n_active = cfg.galerkin_n or prob.domain.modes_per_axis
    _check_guards(cfg, prob, n_active)
    nspec.require_trace_class()
    gal = cfg.galerkin_n or None
    n_steps = int(round(cfg.t_final / cfg.dt))
    state = initial
    ev = RhsEval(state, prob, n_active)
    if snapshot_sink is not None and snapshot_every > 0:
        snapshot_sink(state)
    for _ in range(n_steps):
        if f_max is not None and ev.f_value > f_max:
            raise BlowUpError(
                f"balance value {ev.f_value:.6g} exceeded the guard {f_max:.6g}",
                state=state, diagnostics={"t": state.t, "step": state.step,
                                          "f_value": ev.f_value})
        dw, dz = increments(nspec, prob.domain, cfg.dt, state.step, galerkin_n=gal)
        new = _advance(state, ev, prob, cfg, dw, dz)
        if not (np.isfinite(new.v).all() and np.isfinite(new.phi).all()):
            raise BlowUpError("non-finite state after step", state=state,
                              diagnostics={"t": state.t, "step": state.step})
        new_ev = RhsEval(new, prob, n_active)
        if record_sink is not None and state.step % record_every == 0:
            record_sink(_make_record(prob, nspec, n_active, cfg.dt, ev,
                                     new_ev.f_value, dw, dz, t=state.t))
        state, ev = new, new_ev
        if snapshot_sink is not None and snapshot_every > 0 \
                and state.step % snapshot_every == 0:
            snapshot_sink(state)
    return state


def thread_count(requested: int | None = None) -> int:
    """Worker count: explicit request, else VESIFLOW_THREADS, else all cores."""
    if requested and requested > 0:
        return requested
    env = os.environ.get("VESIFLOW_THREADS", "")
    if env.isdigit() and int(env) > 0:
        return int(env)
    return os.cpu_count() or 1


def run_ensemble(initial: SystemState, prob: Problem, cfg: StepperConfig,
                 base_spec: NoiseSpec, n_traj: int, *, threads: int | None = None,
                 trajectory_fn=None) -> list:
    """Run ``n_traj`` trajectories with stream ids 0..n_traj-1 in parallel.

    ``trajectory_fn(stream_spec)`` defaults to a plain run returning the
    final state; results come back ordered by stream id, so any reduction
    over them is thread-count invariant.
    """
    from dataclasses import replace

    if trajectory_fn is None:
        def trajectory_fn(spec):
            return run(initial, prob, cfg, spec)
    specs = [replace(base_spec, stream_id=r) for r in range(n_traj)]
    workers = thread_count(threads)
    if workers == 1:
        return [trajectory_fn(s) for s in specs]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(trajectory_fn, specs))
