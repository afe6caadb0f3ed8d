"""Fluid-side operators: Leray projection, Stokes action, Helmholtz inverse
and the rotational (Camassa-Holm) bilinear form.

In the stream-function basis the Stokes operator is diagonal, so its action
and the inverse of (I + alpha^2 A) are coefficient rescalings.  The bilinear
form is

    b_tilde(w, u) = -P[ w x (curl u) ],

with the 2D conventions  curl u = d_x u2 - d_y u1  (a scalar) and
w x omega = (w2 omega, -w1 omega), fixed so that (w x omega) . w = 0 at
every point; energy neutrality of the form against w is therefore an exact
pointwise identity, not a cancellation of quadrature sums.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .basis import DomainSpec
from .errors import ShapeError
from .field import VelocityField, velocity_from_grid, velocity_grids


@dataclass(frozen=True)
class AlphaParams:
    """Filter width and viscosity of the regularized fluid model (density 1)."""

    alpha: float = 1.0
    nu: float = 1.0

    def __post_init__(self):
        if self.alpha <= 0 or self.nu <= 0:
            raise ShapeError("alpha and nu must be strictly positive")


def leray_project(domain: DomainSpec, g1: np.ndarray, g2: np.ndarray) -> VelocityField:
    """L2-orthogonal projection of a grid vector field onto the resolved
    divergence-free modes; gradients project to zero, members are fixed points."""
    return velocity_from_grid(domain, g1, g2)


def stokes_apply(u: VelocityField) -> VelocityField:
    """A u, diagonal with the sine eigenvalues."""
    tr = u.domain.transforms()
    return VelocityField(u.domain, tr.lam * u.coeffs)


def helmholtz_inverse(u: VelocityField, alpha: float) -> VelocityField:
    """(I + alpha^2 A)^{-1} u, the diagonal inverse of the momentum map."""
    tr = u.domain.transforms()
    return VelocityField(u.domain, u.coeffs / (1.0 + alpha * alpha * tr.lam))


def curl_grid(u: VelocityField) -> np.ndarray:
    """Scalar vorticity curl u on the grid: curl e_jk = sqrt(lambda) eta_jk."""
    tr = u.domain.transforms()
    return tr.scalar_synthesis(np.sqrt(tr.lam) * u.coeffs)


def b_tilde(w: VelocityField, u: VelocityField) -> VelocityField:
    """Rotational-form bilinear term -P[w x (curl u)].

    The curl is formed spectrally from u's coefficients, the cross product
    pointwise on the grid, and the result projected back; all quadratures
    involve three band-limited factors and are exact.
    """
    if w.domain != u.domain:
        raise ShapeError("operands live on different domains")
    omega = curl_grid(u)
    g1, g2 = velocity_grids(w.domain, w.coeffs)
    return leray_project(w.domain, -g2 * omega, g1 * omega)


def b_tilde_pairing(w: VelocityField, u: VelocityField, v: VelocityField) -> float:
    """<b_tilde(w, u), v> without assembling the projection (v is already
    divergence-free, so the Leray projector drops)."""
    omega = curl_grid(u)
    w1, w2 = velocity_grids(w.domain, w.coeffs)
    v1, v2 = velocity_grids(v.domain, v.coeffs)
    tr = w.domain.transforms()
    return tr.quad(omega * (v2 * w1 - v1 * w2))
