"""Field algebra over the sine and stream-function bases.

ScalarField stores the sine-band coefficients of the varying part of a
scalar field; the physical field is ``offset_value + sum c_jk eta_jk`` where
the offset is -1 for phase fields (so the Dirichlet data phi = -1,
Laplacian(phi) = 0 on the boundary is exact by construction and never drifts).
VelocityField stores coefficients over the divergence-free stream-function
modes.  All values are immutable; every operation returns fresh arrays, so
the whole module is reentrant.

Pointwise products are evaluated on the collocation grid and projected back;
with M >= 6N this is exact (no aliasing) for cumulative polynomial degree
up to 5, which covers the quintic terms of the chemical potential.  The
``degree`` attribute tracks that budget through product chains.
"""

from __future__ import annotations

from dataclasses import dataclass, field as dc_field, replace
from functools import cached_property

import numpy as np

from .basis import DOMAIN_AREA, DomainSpec, Transforms
from .errors import DealiasError, ShapeError

MAX_PRODUCT_DEGREE = 5


def _frozen(arr: np.ndarray) -> np.ndarray:
    out = np.asarray(arr, dtype=float)
    out.setflags(write=False)
    return out


@dataclass(frozen=True)
class ScalarField:
    """Band-limited scalar field, optionally carrying the -1 boundary offset."""

    domain: DomainSpec
    coeffs: np.ndarray
    offset: bool = False
    degree: int = 1

    def __post_init__(self):
        n = self.domain.modes_per_axis
        if self.coeffs.shape != (n, n):
            raise ShapeError(f"coefficients must be ({n},{n}), got {self.coeffs.shape}")
        object.__setattr__(self, "coeffs", _frozen(self.coeffs))

    @cached_property
    def grid(self) -> np.ndarray:
        """Physical values on the collocation grid (offset included)."""
        tr = self.domain.transforms()
        g = tr.scalar_synthesis(self.coeffs)
        if self.offset:
            g = g - 1.0
        return _frozen(g)

    @property
    def offset_value(self) -> float:
        return -1.0 if self.offset else 0.0


@dataclass(frozen=True)
class VelocityField:
    """Divergence-free velocity field in stream-function mode coefficients."""

    domain: DomainSpec
    coeffs: np.ndarray
    degree: int = 1

    def __post_init__(self):
        n = self.domain.modes_per_axis
        if self.coeffs.shape != (n, n):
            raise ShapeError(f"coefficients must be ({n},{n}), got {self.coeffs.shape}")
        object.__setattr__(self, "coeffs", _frozen(self.coeffs))

    @cached_property
    def grids(self) -> tuple[np.ndarray, np.ndarray]:
        """Component values (u1, u2) on the collocation grid."""
        g1, g2 = velocity_grids(self.domain, self.coeffs)
        return _frozen(g1), _frozen(g2)


@dataclass(frozen=True)
class NormBundle:
    l2: float
    grad_l2: float
    lap_l2: float
    l4: float
    l6: float
    linf: float
    phi_grad_phi_l2: float


# -- constructors -------------------------------------------------------------


def zero_scalar(domain: DomainSpec, offset: bool = False) -> ScalarField:
    n = domain.modes_per_axis
    return ScalarField(domain, np.zeros((n, n)), offset=offset)


def zero_velocity(domain: DomainSpec) -> VelocityField:
    n = domain.modes_per_axis
    return VelocityField(domain, np.zeros((n, n)))


def scalar_eigenpair(domain: DomainSpec, j: int, k: int) -> tuple[float, ScalarField]:
    """Eigenvalue and one-hot eta_jk field of the Dirichlet Laplacian."""
    domain.check_index(j, k)
    n = domain.modes_per_axis
    c = np.zeros((n, n))
    c[j - 1, k - 1] = 1.0
    return float(j * j + k * k), ScalarField(domain, c)


def velocity_eigenpair(domain: DomainSpec, j: int, k: int) -> tuple[float, VelocityField]:
    """Eigenvalue and one-hot e_jk field of the Stokes operator."""
    domain.check_index(j, k)
    n = domain.modes_per_axis
    c = np.zeros((n, n))
    c[j - 1, k - 1] = 1.0
    return float(j * j + k * k), VelocityField(domain, c)


# -- grid evaluation / projection ---------------------------------------------


def to_grid(f: ScalarField | VelocityField):
    """Exact collocation values; scalars give one grid, velocities a pair."""
    if isinstance(f, ScalarField):
        return f.grid
    return f.grids


def from_grid(domain: DomainSpec, values: np.ndarray, degree: int = 1) -> ScalarField:
    """L2-projection of grid values onto the sine N-band."""
    tr = domain.transforms()
    return ScalarField(domain, tr.scalar_analysis(values), degree=degree)


def evaluate(f: ScalarField, x: float, y: float) -> float:
    """Pointwise value of the trigonometric polynomial at an arbitrary point."""
    n = f.domain.modes_per_axis
    j = np.arange(1, n + 1)
    sx, sy = np.sin(j * x), np.sin(j * y)
    return float((2.0 / np.pi) * sx @ f.coeffs @ sy) + f.offset_value


def velocity_grids(domain: DomainSpec, coeffs: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Grid components of sum a_jk e_jk: e_jk = (d_y, -d_x) eta_jk / sqrt(lambda)."""
    tr = domain.transforms()
    scale = tr.eta_norm / np.sqrt(tr.lam)
    g1 = tr.synth_sc(coeffs * scale * tr.k)
    g2 = -tr.synth_cs(coeffs * scale * tr.j)
    return g1, g2


def velocity_from_grid(domain: DomainSpec, g1: np.ndarray, g2: np.ndarray) -> VelocityField:
    """L2-projection of a grid vector field onto the divergence-free band.

    This is the Leray projection restricted to the resolved modes: gradient
    parts and out-of-band content integrate to zero against every e_jk.
    """
    tr = domain.transforms()
    scale = tr.eta_norm / np.sqrt(tr.lam)
    coeffs = scale * (tr.k * tr.anal_sc(g1) - tr.j * tr.anal_cs(g2))
    return VelocityField(domain, coeffs)


# -- algebra -------------------------------------------------------------------


def product(f: ScalarField, g: ScalarField, degree: int | None = None) -> ScalarField:
    """Dealiased pointwise product, projected back onto the N-band.

    The result degree is the sum of the operand degrees (override with
    ``degree`` when the caller tracks a longer chain); beyond degree 5 the
    quadrature against degree-N test functions is no longer exact and a
    DealiasError is raised.
    """
    if f.domain != g.domain:
        raise ShapeError("operands live on different domains")
    total = f.degree + g.degree if degree is None else degree
    if total > MAX_PRODUCT_DEGREE:
        raise DealiasError(
            f"product degree {total} exceeds the exact-quadrature budget {MAX_PRODUCT_DEGREE}"
        )
    tr = f.domain.transforms()
    return ScalarField(f.domain, tr.scalar_analysis(f.grid * g.grid), degree=total)


def inner(f: ScalarField, g: ScalarField) -> float:
    """L2 inner product of the physical fields (offsets included)."""
    if f.domain != g.domain:
        raise ShapeError("operands live on different domains")
    tr = f.domain.transforms()
    val = float(np.vdot(f.coeffs, g.coeffs))
    if f.offset:
        val += f.offset_value * float(np.vdot(tr.ones_coeffs, g.coeffs))
    if g.offset:
        val += g.offset_value * float(np.vdot(tr.ones_coeffs, f.coeffs))
    if f.offset and g.offset:
        val += f.offset_value * g.offset_value * DOMAIN_AREA
    return val


def inner_vec(u: VelocityField, v: VelocityField) -> float:
    if u.domain != v.domain:
        raise ShapeError("operands live on different domains")
    return float(np.vdot(u.coeffs, v.coeffs))


def mean_integral(f: ScalarField) -> float:
    """Integral of the physical field over Q (exact)."""
    tr = f.domain.transforms()
    val = float(np.vdot(tr.ones_coeffs, f.coeffs))
    if f.offset:
        val += f.offset_value * DOMAIN_AREA
    return val


def gradient(f: ScalarField) -> tuple[np.ndarray, np.ndarray]:
    """Exact grid values of the gradient (the offset is constant and drops)."""
    tr = f.domain.transforms()
    gx = tr.eta_norm * tr.synth_cs(tr.j * f.coeffs)
    gy = tr.eta_norm * tr.synth_sc(tr.k * f.coeffs)
    return gx, gy


def divergence_residual(u: VelocityField) -> float:
    """Max-norm of div u on the grid, evaluating both derivative terms separately.

    The stream-function basis is divergence-free analytically; this measures
    only floating-point cancellation, so it should sit at rounding level.
    """
    tr = u.domain.transforms()
    scale = tr.eta_norm / np.sqrt(tr.lam)
    cross = u.coeffs * scale * tr.j * tr.k
    d1 = tr.synth_cc(cross)        # d_x of component 1
    d2 = -tr.synth_cc(cross)       # d_y of component 2
    return float(np.abs(d1 + d2).max())


def norms(f: ScalarField | VelocityField) -> NormBundle:
    """Norm bundle: spectral where diagonal, collocation quadrature otherwise.

    linf is the grid maximum (a lower bound of the true sup); the grid is
    oversampled 6-8x so every inequality check tolerance absorbs the gap.
    """
    tr = f.domain.transforms()
    if isinstance(f, ScalarField):
        c = f.coeffs
        l2_sq = float(np.vdot(c, c))
        if f.offset:
            l2_sq += 2.0 * f.offset_value * float(np.vdot(tr.ones_coeffs, c))
            l2_sq += DOMAIN_AREA
        grad_sq = float(np.vdot(c, tr.lam * c))
        lap_sq = float(np.vdot(c, tr.lam ** 2 * c))
        g = f.grid
        g_sq = g * g
        l4 = tr.quad(g_sq * g_sq) ** 0.25
        l6 = tr.quad(g_sq * g_sq * g_sq) ** (1.0 / 6.0)
        linf = float(np.abs(g).max())
        gx, gy = gradient(f)
        pgp = np.sqrt(tr.quad(g_sq * (gx * gx + gy * gy)))
        return NormBundle(np.sqrt(max(l2_sq, 0.0)), np.sqrt(grad_sq), np.sqrt(lap_sq),
                          l4, l6, linf, float(pgp))
    c = f.coeffs
    l2 = np.sqrt(float(np.vdot(c, c)))
    grad = np.sqrt(float(np.vdot(c, tr.lam * c)))
    lap = np.sqrt(float(np.vdot(c, tr.lam ** 2 * c)))
    g1, g2 = f.grids
    mag_sq = g1 * g1 + g2 * g2
    l4 = tr.quad(mag_sq * mag_sq) ** 0.25
    l6 = tr.quad(mag_sq * mag_sq * mag_sq) ** (1.0 / 6.0)
    linf = float(np.sqrt(mag_sq.max()))
    return NormBundle(l2, grad, lap, l4, l6, linf, 0.0)


# -- Sobolev-scale helpers used by the checks and the twin metric --------------


def g_functional(f: ScalarField) -> float:
    """G(phi) = |lap phi|^2 + |grad phi|^2 + |phi|^2, the H^2-equivalent form."""
    nb = norms(f)
    return nb.lap_l2 ** 2 + nb.grad_l2 ** 2 + nb.l2 ** 2


def h2_norm(f: ScalarField) -> float:
    """H^2-scale norm used in ratio sweeps: sqrt of the G functional."""
    return float(np.sqrt(g_functional(f)))


def h2_weight_norm_sq(f: ScalarField) -> float:
    """sum (1+lambda)^2 c^2, the diagonal H^2 reference norm (plain fields)."""
    tr = f.domain.transforms()
    return float(np.vdot(f.coeffs, (1.0 + tr.lam) ** 2 * f.coeffs))


def v_norm(u: VelocityField) -> float:
    """Velocity V-norm: sqrt(sum (1+lambda) u^2)."""
    tr = u.domain.transforms()
    return float(np.sqrt(np.vdot(u.coeffs, (1.0 + tr.lam) * u.coeffs)))


def da_norm(u: VelocityField) -> float:
    """Velocity D(A)-norm: sqrt(sum (1+lambda^2) u^2)."""
    tr = u.domain.transforms()
    return float(np.sqrt(np.vdot(u.coeffs, (1.0 + tr.lam ** 2) * u.coeffs)))


def perturb(f: ScalarField, delta_coeffs: np.ndarray) -> ScalarField:
    """Field with shifted sine coefficients (offset and degree preserved)."""
    return replace(f, coeffs=f.coeffs + delta_coeffs)
