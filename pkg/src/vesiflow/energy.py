"""Bending/penalty energy of the phase field, its variational derivatives,
and the linear/nonlinear split used for implicit stepping and twin-run tests.

With the interface-width and stiffness constants frozen at 1, the energy is

    E(phi) = 1/2 |f(phi)|_2^2 + 1/2 M1 (A(phi) - a)^2 + 1/2 M2 (B(phi) - b)^2,
    f(phi) = -lap(phi) + phi^3 - phi,
    A(phi) = int phi,    B(phi) = int ( 1/2 |grad phi|^2 + 1/4 (phi^2 - 1)^2 ).

Its first variation is

    dE/dphi = lap^2 phi - lap(phi^3 - phi) + (3 phi^2 - 1) f(phi)
              + M1 (A(phi) - a) + M2 (B(phi) - b) f(phi),

realized here as the exact sine-band projection (the constant and
cross-parity parts of the nonlinearity are projected, mirroring the Galerkin
truncation).  All quadratures below involve per-axis frequencies <= 6N and
are exact on the Gauss grid with M >= 6N.

``phi`` always carries the -1 boundary offset; test directions are plain
band-limited fields.  Everything here is pure and thread-safe.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .basis import DOMAIN_AREA, DomainSpec, Transforms
from .errors import ShapeError
from .field import ScalarField

EQUILIBRIUM_VOLUME = -DOMAIN_AREA  # A(phi) for the uniform state phi = -1


@dataclass(frozen=True)
class EnergyParams:
    """Penalty weights, targets and mobility of the phase-field energy."""

    m1: float = 0.0
    m2: float = 0.0
    a: float = EQUILIBRIUM_VOLUME
    b: float = 0.0
    gamma: float = 1.0

    def __post_init__(self):
        if self.m1 < 0 or self.m2 < 0:
            raise ShapeError("penalty weights must be nonnegative")
        if self.gamma <= 0:
            raise ShapeError("mobility gamma must be positive")


@dataclass(frozen=True)
class EnergyBreakdown:
    bending: float
    volume_penalty: float
    area_penalty: float
    total: float
    a_phi: float
    b_phi: float


class PhiPipeline:
    """Shared grid/coefficient quantities of one phase-field state.

    Built once per evaluation and reused by the energy, the chemical
    potential, the Hessian trace and the coupled dynamics, so that every
    consumer sees bit-identical grid products.
    """

    __slots__ = ("domain", "tr", "coeffs", "psi_grid", "phi_grid", "neg_lap_grid",
                 "cubic_grid", "f_grid", "g_grid", "h_coeffs", "f_coeffs",
                 "a_phi", "b_phi", "grad_sq")

    def __init__(self, domain: DomainSpec, coeffs: np.ndarray):
        tr = domain.transforms()
        self.domain = domain
        self.tr = tr
        self.coeffs = coeffs
        self.psi_grid = tr.scalar_synthesis(coeffs)
        self.phi_grid = self.psi_grid - 1.0
        self.neg_lap_grid = tr.scalar_synthesis(tr.lam * coeffs)
        self.cubic_grid = self.phi_grid ** 3 - self.phi_grid
        self.f_grid = self.neg_lap_grid + self.cubic_grid
        self.g_grid = 3.0 * self.phi_grid ** 2 - 1.0
        self.h_coeffs = tr.scalar_analysis(self.cubic_grid)
        self.f_coeffs = tr.lam * coeffs + self.h_coeffs
        self.a_phi = float(np.vdot(tr.ones_coeffs, coeffs)) - DOMAIN_AREA
        self.grad_sq = float(np.vdot(coeffs, tr.lam * coeffs))
        sq = self.phi_grid ** 2 - 1.0
        self.b_phi = 0.5 * self.grad_sq + 0.25 * tr.quad(sq * sq)

    def mu_coeffs(self, p: EnergyParams) -> np.ndarray:
        """Sine-band coefficients of dE/dphi."""
        tr = self.tr
        quintic = tr.scalar_analysis(self.g_grid * self.f_grid)
        return (tr.lam ** 2 * self.coeffs + tr.lam * self.h_coeffs + quintic
                + p.m1 * (self.a_phi - p.a) * tr.ones_coeffs
                + p.m2 * (self.b_phi - p.b) * self.f_coeffs)

    def breakdown(self, p: EnergyParams) -> EnergyBreakdown:
        bending = 0.5 * self.tr.quad(self.f_grid * self.f_grid)
        vol = 0.5 * p.m1 * (self.a_phi - p.a) ** 2
        area = 0.5 * p.m2 * (self.b_phi - p.b) ** 2
        return EnergyBreakdown(bending, vol, area, bending + vol + area,
                               self.a_phi, self.b_phi)

    def hessian_diag_weighted(self, p: EnergyParams, weights: np.ndarray) -> float:
        """sum_i weights_i * d2E(phi)(eta_i, eta_i), vectorized over the band.

        Uses eta_i^2 = (1 - cos 2jx)(1 - cos 2ky) / pi^2 to reduce every
        int u eta_i^2 to four even-cosine integrals of u; one transform per
        distinct u covers all modes at once.
        """
        tr = self.tr
        lam = tr.lam
        q_g = _eta_sq_integrals(tr, self.g_grid)
        q_g2 = _eta_sq_integrals(tr, self.g_grid * self.g_grid)
        q_fphi = _eta_sq_integrals(tr, self.f_grid * self.phi_grid)
        t = lam * lam + 2.0 * lam * q_g + q_g2          # |f'(phi) eta_i|^2
        t += 6.0 * q_fphi                                # int f * 6 phi eta_i^2
        if p.m1:
            t = t + p.m1 * tr.ones_coeffs ** 2
        if p.m2:
            t = t + p.m2 * self.f_coeffs ** 2
            t = t + p.m2 * (self.b_phi - p.b) * (lam + q_g)
        return float(np.vdot(weights, t))


def _eta_sq_integrals(tr: Transforms, u_grid: np.ndarray) -> np.ndarray:
    """int u * eta_jk^2 for every band mode, via even-cosine analysis."""
    ints = tr.anal_cos_even(u_grid)                     # (N+1, N+1)
    n = tr.n
    jj = np.arange(1, n + 1)
    return (ints[0, 0] - ints[jj, 0][:, None] - ints[0, jj][None, :]
            + ints[1:, 1:]) / DOMAIN_AREA


def _require_offset(phi: ScalarField, op: str):
    if not phi.offset:
        raise ShapeError(f"{op} expects a phase field carrying the -1 boundary offset")


def _require_plain(psi: ScalarField, op: str):
    if psi.offset:
        raise ShapeError(f"{op} expects a plain (non-offset) direction field")


def f_of_phi(phi: ScalarField) -> ScalarField:
    """Sine-band projection of f(phi) = -lap(phi) + phi^3 - phi."""
    _require_offset(phi, "f_of_phi")
    work = PhiPipeline(phi.domain, phi.coeffs)
    return ScalarField(phi.domain, work.f_coeffs, degree=3)


def energy(phi: ScalarField, p: EnergyParams) -> EnergyBreakdown:
    """Exact quadrature of the bending energy and both penalty terms."""
    _require_offset(phi, "energy")
    return PhiPipeline(phi.domain, phi.coeffs).breakdown(p)


def chemical_potential(phi: ScalarField, p: EnergyParams) -> ScalarField:
    """Sine-band projection of the first variation dE/dphi."""
    _require_offset(phi, "chemical_potential")
    work = PhiPipeline(phi.domain, phi.coeffs)
    return ScalarField(phi.domain, work.mu_coeffs(p), degree=5)


def second_variation(phi: ScalarField, psi: ScalarField, rho: ScalarField,
                     p: EnergyParams) -> float:
    """Second variation d2E(phi)(psi, rho), assembled term by term.

    The formula is manifestly symmetric in (psi, rho): the mixed f'-term is
    evaluated through the symmetric splitting <(-lap psi), rho> + <g psi, rho>.
    """
    _require_offset(phi, "second_variation")
    _require_plain(psi, "second_variation")
    _require_plain(rho, "second_variation")
    work = PhiPipeline(phi.domain, phi.coeffs)
    tr = work.tr
    psi_grid = tr.scalar_synthesis(psi.coeffs)
    rho_grid = tr.scalar_synthesis(rho.coeffs)
    fp_psi = tr.scalar_synthesis(tr.lam * psi.coeffs) + work.g_grid * psi_grid
    fp_rho = tr.scalar_synthesis(tr.lam * rho.coeffs) + work.g_grid * rho_grid
    val = tr.quad(fp_psi * fp_rho)
    val += 6.0 * tr.quad(work.f_grid * work.phi_grid * psi_grid * rho_grid)
    if p.m1:
        a_psi = float(np.vdot(tr.ones_coeffs, psi.coeffs))
        a_rho = float(np.vdot(tr.ones_coeffs, rho.coeffs))
        val += p.m1 * a_psi * a_rho
    if p.m2:
        f_psi = tr.quad(work.f_grid * psi_grid)
        f_rho = tr.quad(work.f_grid * rho_grid)
        val += p.m2 * f_psi * f_rho
        cross = float(np.vdot(psi.coeffs, tr.lam * rho.coeffs)) \
            + tr.quad(work.g_grid * psi_grid * rho_grid)
        val += p.m2 * (work.b_phi - p.b) * cross
    return float(val)


def hessian_trace_reference(phi: ScalarField, p: EnergyParams,
                            weights: np.ndarray) -> float:
    """Per-mode loop over second_variation(phi, eta_i, eta_i); test oracle
    for the vectorized hessian_diag_weighted path."""
    from .field import scalar_eigenpair

    total = 0.0
    n = phi.domain.modes_per_axis
    for j in range(1, n + 1):
        for k in range(1, n + 1):
            w = weights[j - 1, k - 1]
            if w == 0.0:
                continue
            _, eta = scalar_eigenpair(phi.domain, j, k)
            total += w * second_variation(phi, eta, eta, p)
    return total


MN_SYMBOL_POWERS = (2, 1, 0)  # diagonal symbol lambda^2 + lambda + 1 of M


def mn_symbol(lam: np.ndarray) -> np.ndarray:
    """Diagonal symbol of M = lap^2 - lap + 1 on the sine band."""
    return lam * lam + lam + 1.0


def mn_split(phi: ScalarField, p: EnergyParams) -> tuple[ScalarField, ScalarField]:
    """Split dE/dphi = M(phi) + N(phi) with M = lap^2 - lap + 1.

    M acts on the full field including the -1 offset: M(-1) = -1 enters
    through its band-limited projection, so M_phi + N_phi reproduces the
    chemical potential exactly in coefficients.
    """
    _require_offset(phi, "mn_split")
    tr = phi.domain.transforms()
    work = PhiPipeline(phi.domain, phi.coeffs)
    m_coeffs = mn_symbol(tr.lam) * phi.coeffs - tr.ones_coeffs
    n_coeffs = work.mu_coeffs(p) - m_coeffs
    return (ScalarField(phi.domain, m_coeffs, degree=1),
            ScalarField(phi.domain, n_coeffs, degree=5))
