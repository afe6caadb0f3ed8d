"""Lockstep ensemble integration.

Runs R trajectories of the same problem/configuration simultaneously.
Coefficient states are stacked as (R, N, N); grid values live in the layout
(M, R*M) with the ensemble axis in the middle, chosen so that both stages of
every spectral transform are single large GEMMs on contiguous reshapes (the
per-axis tables contract the outer dimensions directly).  At desk scale this
runs an ensemble step in roughly the time two or three sequential steps
take, instead of R.

Semantics match the sequential runner exactly: member r draws the
counter-based noise of its own spec, so trajectories coincide with single
runs at those stream ids, and the whole computation is deterministic and
independent of any thread pool.  Members may carry different Galerkin masks
(used by the self-convergence study, where several truncations share one
noise path); masks multiply the coefficient updates and the noise.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ._kernels import cross_pointwise, phase_pointwise, transport_pointwise
from .dynamics import Problem, StepperConfig, SystemState, _check_guards
from .energy import mn_symbol
from .errors import BlowUpError, ShapeError
from .noise import NoiseSpec, _normal_block


@dataclass
class BatchResult:
    times: np.ndarray                 # (S+1,) record times, t_0 = 0
    f_series: np.ndarray              # (R, S+1) balance values incl. initial
    dissipation_series: np.ndarray    # (R, S) at pre-step states
    cum_residual: np.ndarray          # (R,)
    cum_martingale: np.ndarray        # (R,)
    final_v: np.ndarray               # (R, N, N)
    final_phi: np.ndarray             # (R, N, N)
    snap_times: np.ndarray            # (K,)
    snap_v: np.ndarray                # (K, R, N, N)
    snap_phi: np.ndarray              # (K, R, N, N)


class _BatchKernel:
    """Precomputed tables and the batched right-hand side."""

    def __init__(self, prob: Problem, specs: list[NoiseSpec],
                 galerkin_ns: list[int] | None):
        domain = prob.domain
        tr = domain.transforms()
        self.prob = prob
        self.tr = tr
        self.n = domain.modes_per_axis
        self.m = domain.collocation_per_axis
        self.specs = specs
        self.r = len(specs)
        ref = specs[0]
        for s in specs:
            if (s.zeta_a, s.p_a, s.zeta_b, s.p_b, s.seed, s.override) != \
               (ref.zeta_a, ref.p_a, ref.zeta_b, ref.p_b, ref.seed, ref.override):
                raise ShapeError("batch members must share the noise law and seed")
        ref.require_trace_class()
        self.sigma_a = ref.sigma_a(domain)
        self.sigma_b = ref.sigma_b(domain)
        self.zeta_a, self.zeta_b = ref.zeta_a, ref.zeta_b
        self.alpha = prob.fluid.alpha
        self.nu = prob.fluid.nu
        self.gamma = prob.energy.gamma
        self.lam = tr.lam
        self.inv_helm = 1.0 / (1.0 + self.alpha ** 2 * self.lam)
        self.vel_scale = tr.eta_norm / np.sqrt(self.lam)
        self.root_lam = np.sqrt(self.lam)
        if galerkin_ns is None:
            self.masks = None
        else:
            masks = np.zeros((self.r, self.n, self.n))
            for i, gn in enumerate(galerkin_ns):
                masks[i, :gn, :gn] = 1.0
            self.masks = masks
        sa2 = self.sigma_a ** 2
        sb2 = self.sigma_b ** 2
        if self.masks is None:
            self.trace_a = np.full(self.r, 0.5 * float((sa2 * self.inv_helm).sum()))
            self.sb2_masked = np.broadcast_to(sb2, (self.r, self.n, self.n))
        else:
            self.trace_a = 0.5 * (self.masks * sa2 * self.inv_helm).sum(axis=(1, 2))
            self.sb2_masked = self.masks * sb2
        # scratch grids, reused every step; the kernel object is therefore
        # owned by one run and not shared between threads
        names = ("w1", "w2", "omega", "p1", "p2", "psi", "neg_lap", "cubic",
                 "gf", "fphi", "g2", "g", "dx", "dy", "mug", "tp", "cp1", "cp2")
        self.buf = {k: np.empty((self.m, self.r * self.m)) for k in names}
        self.bend = np.empty(self.r)
        self.area = np.empty(self.r)

    # -- transforms between (R, N, N) coefficients and (M, R*M) grids --------

    def _synth(self, b1, a, b2, out=None):
        """grid[m, r*M + l] = sum_jk b1[m,j] a[r,j,k] b2[l,k]."""
        n, r = self.n, self.r
        t = np.ascontiguousarray(a.transpose(1, 0, 2)).reshape(n * r, n) @ b2.T
        return np.matmul(b1, t.reshape(n, -1), out=out)

    def _anal(self, b1w, g, b2w):
        """coeff[r,j,k] = sum_ml g[m, r*M+l] b1w[m,j] b2w[l,k]."""
        m, r = self.m, self.r
        h = (b1w.T @ g).reshape(-1, m) @ b2w
        nj, nk = b1w.shape[1], b2w.shape[1]
        return np.ascontiguousarray(h.reshape(nj, r, nk).transpose(1, 0, 2))

    def quad(self, g):
        """(R,) integrals of an (M, R*M) grid."""
        w = self.tr.weights
        return (w @ g).reshape(self.r, self.m) @ w

    def rhs(self, v, c, want_trace: bool):
        """Batched drift plus balance quantities at the given states."""
        tr = self.tr
        lam, eta = self.lam, tr.eta_norm
        buf = self.buf
        w = v * self.inv_helm
        self._synth(tr.sin, w * (self.vel_scale * tr.k), tr.cos, out=buf["w1"])
        self._synth(tr.cos, w * (-self.vel_scale * tr.j), tr.sin, out=buf["w2"])
        self._synth(tr.sin, (eta * self.root_lam) * v, tr.sin, out=buf["omega"])
        w1, w2 = buf["w1"], buf["w2"]
        cross_pointwise(w1, w2, buf["omega"], self.m, buf["p1"], buf["p2"])
        bt = self.vel_scale * (
            tr.k * self._anal(tr.sin_w, buf["p1"], tr.cos_w)
            - tr.j * self._anal(tr.cos_w, buf["p2"], tr.sin_w))

        self._synth(tr.sin, eta * c, tr.sin, out=buf["psi"])
        self._synth(tr.sin, (eta * lam) * c, tr.sin, out=buf["neg_lap"])
        phase_pointwise(buf["psi"], buf["neg_lap"], tr.weights, self.m,
                        buf["cubic"], buf["gf"], buf["fphi"], buf["g2"],
                        buf["g"], self.bend, self.area,
                        want_trace and self.zeta_b > 0.0)
        h_coeffs = eta * self._anal(tr.sin_w, buf["cubic"], tr.sin_w)
        f_coeffs = lam * c + h_coeffs
        quintic = eta * self._anal(tr.sin_w, buf["gf"], tr.sin_w)
        p = self.prob.energy
        a_phi = np.einsum("jk,rjk->r", tr.ones_coeffs, c) - np.pi ** 2
        grad_sq = np.einsum("rjk,jk,rjk->r", c, lam, c, optimize=True)
        b_phi = 0.5 * grad_sq + 0.25 * self.area
        mu = (lam ** 2 * c + lam * h_coeffs + quintic
              + p.m1 * (a_phi - p.a)[:, None, None] * tr.ones_coeffs
              + p.m2 * (b_phi - p.b)[:, None, None] * f_coeffs)
        if self.masks is not None:
            mu = mu * self.masks
            bt = bt * self.masks

        self._synth(tr.cos, (eta * tr.j) * c, tr.sin, out=buf["dx"])
        self._synth(tr.sin, (eta * tr.k) * c, tr.cos, out=buf["dy"])
        self._synth(tr.sin, eta * mu, tr.sin, out=buf["mug"])
        transport_pointwise(w1, w2, buf["dx"], buf["dy"], buf["mug"], self.m,
                            buf["tp"], buf["cp1"], buf["cp2"])
        transport = eta * self._anal(tr.sin_w, buf["tp"], tr.sin_w)
        coupling = self.vel_scale * (
            tr.k * self._anal(tr.sin_w, buf["cp1"], tr.cos_w)
            - tr.j * self._anal(tr.cos_w, buf["cp2"], tr.sin_w))
        if self.masks is not None:
            transport = transport * self.masks
            coupling = coupling * self.masks

        dv = -self.nu * lam * v - bt + coupling
        dphi = -transport - self.gamma * mu

        kinetic = 0.5 * np.einsum("rjk,rjk->r", w, w)
        grad_kin = 0.5 * self.alpha ** 2 * np.einsum("rjk,jk,rjk->r", w, lam, w,
                                                     optimize=True)
        bending = 0.5 * self.bend
        e_total = (bending + 0.5 * p.m1 * (a_phi - p.a) ** 2
                   + 0.5 * p.m2 * (b_phi - p.b) ** 2)
        f_value = kinetic + grad_kin + e_total
        dissipation = (self.nu * (np.einsum("rjk,jk,rjk->r", w, lam, w, optimize=True)
                                  + self.alpha ** 2
                                  * np.einsum("rjk,jk,rjk->r", w, lam ** 2, w,
                                              optimize=True))
                       + self.gamma * np.einsum("rjk,rjk->r", mu, mu))

        trace_input = None
        if want_trace:
            trace_input = self.trace_a.copy()
            if self.zeta_b > 0.0:
                trace_input = trace_input + 0.5 * self._hessian_trace(
                    f_coeffs, b_phi, p)
        return dict(dv=dv, dphi=dphi, mu=mu, w=w, f_value=f_value,
                    dissipation=dissipation, trace_input=trace_input)

    def _hessian_trace(self, f_coeffs, b_phi, p):
        tr = self.tr
        lam = self.lam
        q_g = self._eta_sq(self.buf["g"])
        q_g2 = self._eta_sq(self.buf["g2"])
        q_fp = self._eta_sq(self.buf["fphi"])
        t = lam * lam + 2.0 * lam * q_g + q_g2 + 6.0 * q_fp
        if p.m1:
            t = t + p.m1 * tr.ones_coeffs ** 2
        if p.m2:
            t = t + p.m2 * f_coeffs ** 2
            t = t + p.m2 * (b_phi - p.b)[:, None, None] * (lam + q_g)
        return np.einsum("rjk,rjk->r", self.sb2_masked, t)

    def _eta_sq(self, u):
        """int u * eta_jk^2 per member, from even-cosine integrals of u."""
        ints = self._anal(self.tr.cos_even_w, u, self.tr.cos_even_w)
        n = self.n
        jj = np.arange(1, n + 1)
        return (ints[:, 0, 0, None, None] - ints[:, jj, 0][:, :, None]
                - ints[:, 0, jj][:, None, :] + ints[:, 1:, 1:]) / np.pi ** 2

    def noise(self, step: int, root_dt: float):
        n = self.n
        dw = np.zeros((self.r, n, n))
        dz = np.zeros((self.r, n, n))
        for i, s in enumerate(self.specs):
            if self.zeta_a > 0.0:
                dw[i] = self.sigma_a * root_dt * _normal_block(
                    s.seed, s.stream_id, 0, step, n)
            if self.zeta_b > 0.0:
                dz[i] = self.sigma_b * root_dt * _normal_block(
                    s.seed, s.stream_id, 1, step, n)
        if self.masks is not None:
            dw *= self.masks
            dz *= self.masks
        return dw, dz


def run_batch(initial: SystemState, prob: Problem, cfg: StepperConfig,
              specs: list[NoiseSpec], *, galerkin_ns: list[int] | None = None,
              f_max: float | None = None, snapshot_every: int = 0,
              with_ledger: bool = True) -> BatchResult:
    """Integrate an ensemble in lockstep and accumulate its ledger.

    All members start from ``initial`` (already masked members stay masked,
    since updates and noise are masked consistently).  Per-member cumulative
    residual and martingale are exact sums of the per-step records the
    sequential runner would emit.  ``with_ledger=False`` skips the residual,
    martingale and trace accounting (the F and dissipation series are always
    produced), which removes the Hessian-trace transforms from the hot loop
    for moment studies that do not audit the balance identity.
    """
    kern = _BatchKernel(prob, specs, galerkin_ns)
    n_active = max(galerkin_ns) if galerkin_ns else prob.domain.modes_per_axis
    _check_guards(cfg, prob, n_active)
    r, n = kern.r, kern.n
    n_steps = int(round(cfg.t_final / cfg.dt))
    dt = cfg.dt
    lam = kern.lam
    v = np.broadcast_to(initial.v, (r, n, n)).copy()
    c = np.broadcast_to(initial.phi, (r, n, n)).copy()
    if kern.masks is not None:
        v *= kern.masks
        c *= kern.masks

    want_noise = (kern.zeta_a > 0.0 or kern.zeta_b > 0.0) and with_ledger
    f_series = np.empty((r, n_steps + 1))
    diss_series = np.empty((r, n_steps))
    cum_res = np.zeros(r)
    cum_mart = np.zeros(r)
    snap_times, snap_v, snap_phi = [], [], []

    imex = cfg.scheme == "imex_em"
    denom_v = 1.0 + dt * kern.nu * lam
    stiff_phi = kern.gamma * mn_symbol(lam)
    denom_phi = 1.0 + dt * stiff_phi
    root_dt = np.sqrt(dt)

    ev = kern.rhs(v, c, want_trace=want_noise)
    f_series[:, 0] = ev["f_value"]
    if snapshot_every > 0:
        snap_times.append(0.0)
        snap_v.append(v.copy())
        snap_phi.append(c.copy())
    for s in range(n_steps):
        if f_max is not None and ev["f_value"].max() > f_max:
            worst = int(np.argmax(ev["f_value"]))
            raise BlowUpError(
                f"member {worst} exceeded the balance guard at step {s}",
                diagnostics={"step": s, "member": worst,
                             "f_value": float(ev["f_value"][worst])})
        dw, dz = kern.noise(s, root_dt)
        if imex:
            v = (v + dt * (ev["dv"] + kern.nu * lam * v) + dw) / denom_v
            c = (c + dt * (ev["dphi"] + stiff_phi * c) + dz) / denom_phi
        else:
            v = v + dt * ev["dv"] + dw
            c = c + dt * ev["dphi"] + dz
        if not (np.isfinite(v).all() and np.isfinite(c).all()):
            raise BlowUpError("non-finite state in batch",
                              diagnostics={"step": s})
        new_ev = kern.rhs(v, c, want_trace=want_noise)
        diss_series[:, s] = ev["dissipation"]
        f_series[:, s + 1] = new_ev["f_value"]
        if with_ledger:
            mart = (np.einsum("rjk,rjk->r", ev["w"], dw)
                    + np.einsum("rjk,rjk->r", ev["mu"], dz))
            trace = ev["trace_input"] if ev["trace_input"] is not None else 0.0
            cum_res += (new_ev["f_value"] - ev["f_value"]
                        + ev["dissipation"] * dt - trace * dt - mart)
            cum_mart += mart
        ev = new_ev
        if snapshot_every > 0 and (s + 1) % snapshot_every == 0:
            snap_times.append((s + 1) * dt)
            snap_v.append(v.copy())
            snap_phi.append(c.copy())

    times = dt * np.arange(n_steps + 1)
    return BatchResult(
        times=times, f_series=f_series, dissipation_series=diss_series,
        cum_residual=cum_res, cum_martingale=cum_mart,
        final_v=v, final_phi=c,
        snap_times=np.array(snap_times),
        snap_v=np.array(snap_v) if snap_v else np.zeros((0, r, n, n)),
        snap_phi=np.array(snap_phi) if snap_phi else np.zeros((0, r, n, n)))
