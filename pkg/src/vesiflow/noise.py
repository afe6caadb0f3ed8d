"""Trace-class Q-Wiener increments and the trace diagnostics that decide
whether the noise is admissible.

Both covariance operators are diagonal in their eigenbases with power-law
decay sigma_jk = zeta * lambda_jk^(-p).  In 2D the eigenvalue counting
#{lambda <= L} ~ L makes

    Tr[C_A* C_A]        finite  iff  p_A > 1/2   (or zeta_A = 0),
    Tr[C_B* lap^2 C_B]  finite  iff  p_B > 3/2   (or zeta_B = 0),

which is checked before any increment is generated; a violating spec refuses
to simulate unless the override flag is set.

Increment generation is counter-based: the normal deviate of mode (j, k) at
step s is a pure function of (seed, stream_id, equation, s, j, k), produced
by keying a Philox generator per (seed, stream, equation, step) block with a
fixed 64 x 64 mode layout and mapping the raw 64-bit words through the
inverse normal CDF.  Mode (j, k) therefore keeps its path when the Galerkin
truncation grows, ensemble members and steps can be generated in any order
or thread, and replay is bit-exact.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numpy.random import Philox
from scipy.special import ndtri

from .basis import DomainSpec
from .errors import ShapeError, TraceClassError

MODE_LAYOUT = 64                       # fixed (j, k) block, caps modes_per_axis
_WORDS_PER_STEP = MODE_LAYOUT * MODE_LAYOUT
_COUNTERS_PER_STEP = _WORDS_PER_STEP // 4   # Philox yields 4 words per counter
_U64 = np.uint64
_EQ_VELOCITY = 0
_EQ_PHASE = 1


@dataclass(frozen=True)
class NoiseSpec:
    """Diagonal covariance decay laws, seed and stream identity."""

    zeta_a: float = 0.0
    p_a: float = 2.0
    zeta_b: float = 0.0
    p_b: float = 2.0
    seed: int = 0
    stream_id: int = 0
    override: bool = False

    def __post_init__(self):
        if self.zeta_a < 0 or self.zeta_b < 0:
            raise ShapeError("noise amplitudes must be nonnegative")

    @property
    def hypothesis_holds(self) -> bool:
        ok_a = self.zeta_a == 0.0 or self.p_a > 0.5
        ok_b = self.zeta_b == 0.0 or self.p_b > 1.5
        return ok_a and ok_b

    def require_trace_class(self):
        if not self.hypothesis_holds and not self.override:
            raise TraceClassError(
                f"noise decay (p_a={self.p_a}, p_b={self.p_b}) is not trace "
                f"class (need p_a > 1/2, p_b > 3/2); set the override flag "
                f"to simulate anyway"
            )

    def sigma_a(self, domain: DomainSpec) -> np.ndarray:
        tr = domain.transforms()
        return self.zeta_a * tr.lam ** (-self.p_a)

    def sigma_b(self, domain: DomainSpec) -> np.ndarray:
        tr = domain.transforms()
        return self.zeta_b * tr.lam ** (-self.p_b)


import threading

_philox_pool = threading.local()


def _keyed_philox(seed: int, stream_id: int, equation: int, step: int) -> Philox:
    """Philox positioned at the (seed, stream, equation, step) counter block.

    The generator object is reused per thread with its state injected
    directly; constructing a fresh Philox would pull entropy for an unused
    seed sequence on every call.
    """
    gen = getattr(_philox_pool, "gen", None)
    if gen is None:
        gen = Philox(key=0)
        _philox_pool.gen = gen
    state = gen.state
    state["state"]["counter"][:] = (step * _COUNTERS_PER_STEP, equation, 0, 0)
    state["state"]["key"][:] = (seed & 0xFFFFFFFFFFFFFFFF,
                                stream_id & 0xFFFFFFFFFFFFFFFF)
    state["buffer_pos"] = 4                      # discard any buffered words
    state["has_uint32"] = 0
    gen.state = state
    return gen


def _normal_block(seed: int, stream_id: int, equation: int, step: int, n: int) -> np.ndarray:
    """Standard normals for modes {1..n}^2 at one step, from the fixed layout."""
    if n > MODE_LAYOUT:
        raise ShapeError(f"noise layout supports at most {MODE_LAYOUT} modes per axis")
    gen = _keyed_philox(seed, stream_id, equation, step)
    # draw just enough raw words to cover the {1..n}^2 corner of the layout
    n_words = (n - 1) * MODE_LAYOUT + n
    raw = gen.random_raw(n_words)
    idx = np.arange(n)[:, None] * MODE_LAYOUT + np.arange(n)[None, :]
    raw = raw[idx]
    # 53-bit uniform strictly inside (0, 1), then inverse CDF.
    u = (raw >> np.uint64(11)) * 2.0 ** -53 + 2.0 ** -54
    return ndtri(u)


def increments(spec: NoiseSpec, domain: DomainSpec, dt: float, step: int,
               galerkin_n: int | None = None) -> tuple[np.ndarray, np.ndarray]:
    """One step of (C_A dW, C_B dZ) in coefficients: Normal(0, sigma^2 dt) per mode.

    Zero-amplitude equations skip generation entirely, so deterministic runs
    draw nothing.  ``galerkin_n`` masks modes outside {1..n}^2.
    """
    if dt <= 0:
        raise ShapeError("dt must be positive")
    spec.require_trace_class()
    n = domain.modes_per_axis
    root_dt = np.sqrt(dt)
    if spec.zeta_a > 0.0:
        dw = spec.sigma_a(domain) * root_dt * _normal_block(
            spec.seed, spec.stream_id, _EQ_VELOCITY, step, n)
    else:
        dw = np.zeros((n, n))
    if spec.zeta_b > 0.0:
        dz = spec.sigma_b(domain) * root_dt * _normal_block(
            spec.seed, spec.stream_id, _EQ_PHASE, step, n)
    else:
        dz = np.zeros((n, n))
    if galerkin_n is not None and galerkin_n < n:
        dw[galerkin_n:, :] = 0.0
        dw[:, galerkin_n:] = 0.0
        dz[galerkin_n:, :] = 0.0
        dz[:, galerkin_n:] = 0.0
    return dw, dz


@dataclass(frozen=True)
class TraceDiagnostics:
    tr_a_weighted: float            # sum sigma_A^2 / (1 + alpha^2 lambda)
    tr_b: float                     # sum sigma_B^2
    tr_b_delta2: float              # sum sigma_B^2 lambda^2


def trace_diagnostics(spec: NoiseSpec, domain: DomainSpec, n: int,
                      alpha: float) -> TraceDiagnostics:
    """Partial traces over the first n modes in (lambda, j, k) order."""
    tr = domain.transforms()
    if not (0 <= n <= domain.n_modes):
        raise ShapeError(f"n must lie in 0..{domain.n_modes}")
    sel = tr.mode_order[:n]
    lam = tr.lam.ravel()[sel]
    sa2 = (spec.sigma_a(domain).ravel()[sel]) ** 2
    sb2 = (spec.sigma_b(domain).ravel()[sel]) ** 2
    return TraceDiagnostics(
        float((sa2 / (1.0 + alpha * alpha * lam)).sum()),
        float(sb2.sum()),
        float((sb2 * lam * lam).sum()),
    )


@dataclass(frozen=True)
class SobolevSums:
    sum_inf: float                  # sum |C_B eta_i|_inf^2
    sum_w22: float                  # sum ||C_B eta_i||_W22^2
    sum_grad3: float                # sum |grad C_B eta_i|_3^2


def sobolev_sums(spec: NoiseSpec, domain: DomainSpec, n: int) -> SobolevSums:
    """Partial sums of the three mode-wise quantities controlled by the
    trace Tr[C_B* lap^2 C_B].

    The sup norm is closed-form (each eta attains 2/pi inside Q); the W^{2,2}
    norm uses exact 1D quadratures of the factorized derivatives; the L3 norm
    of the gradient is a grid quadrature per mode (its integrand is not a
    trigonometric polynomial, but the 8x-oversampled grid makes the error
    irrelevant for these bounded-ratio diagnostics).
    """
    tr = domain.transforms()
    if not (0 <= n <= domain.n_modes):
        raise ShapeError(f"n must lie in 0..{domain.n_modes}")
    sel = tr.mode_order[:n]
    js = tr.j.ravel()[sel]
    ks = tr.k.ravel()[sel]
    sb = spec.sigma_b(domain).ravel()[sel]
    eta_max = 2.0 / np.pi

    sum_inf = float((sb ** 2).sum()) * eta_max ** 2

    # 1D quadratures of sin^2 / cos^2 per frequency (exact: frequency 2j).
    w = tr.weights
    s2 = np.einsum("m,mj->j", w, tr.sin ** 2)
    c2 = np.einsum("m,mj->j", w, tr.cos ** 2)
    norm2 = (2.0 / np.pi) ** 2
    s2j, s2k = s2[js - 1], s2[ks - 1]
    c2j, c2k = c2[js - 1], c2[ks - 1]
    jf, kf = js.astype(float), ks.astype(float)
    w22 = norm2 * (
        s2j * s2k
        + jf ** 2 * c2j * s2k + kf ** 2 * s2j * c2k
        + jf ** 4 * s2j * s2k + kf ** 4 * s2j * s2k
        + 2.0 * jf ** 2 * kf ** 2 * c2j * c2k
    )
    sum_w22 = float((sb ** 2 * w22).sum())

    sum_grad3 = 0.0
    norm3 = (2.0 / np.pi) ** 3
    for jj, kk, s in zip(js, ks, sb):
        if s == 0.0:
            continue
        gx = jj * np.outer(tr.cos[:, jj - 1], tr.sin[:, kk - 1])
        gy = kk * np.outer(tr.sin[:, jj - 1], tr.cos[:, kk - 1])
        mag3 = (gx * gx + gy * gy) ** 1.5
        l3_cubed = norm3 * tr.quad(mag3)
        sum_grad3 += s * s * l3_cubed ** (2.0 / 3.0)
    return SobolevSums(sum_inf, sum_w22, float(sum_grad3))
