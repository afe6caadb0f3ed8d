"""Fused pointwise kernels for the lockstep ensemble integrator.

The batched right-hand side is memory-bound: its grids are far larger than
cache, so every separate numpy ufunc costs a full read/write sweep.  These
numba kernels compute each pointwise stage in a single pass, writing all
derived products at once and folding the quadrature reductions (bending and
area integrals) into the same sweep.  Grids are (M, R*M) row-major with the
ensemble member identified by the column block; kernels parallelize over
member blocks, so no two threads touch the same output column.

Everything here is an implementation detail of ``batch``; the sequential
integrator keeps the plain numpy path, and equivalence of the two is pinned
by tests.
"""

import numba
import numpy as np


@numba.njit(cache=True, parallel=True)
def phase_pointwise(psi, neg_lap, w, m, cubic, gf, fphi, g2, g_out,
                    bend, area, want_hessian):
    """From psi and -lap(phi) grids, fill phi-derived product grids and the
    bending/area quadrature sums per member.

    cubic = phi^3 - phi, gf = (3 phi^2 - 1) f, fphi = f * phi, g2 = g^2,
    g_out = g, bend[r] = int f^2, area[r] = int (phi^2 - 1)^2,
    with f = neg_lap + cubic and g = 3 phi^2 - 1.
    """
    rows, cols = psi.shape
    r_members = cols // m
    for r in numba.prange(r_members):
        base = r * m
        bsum = 0.0
        asum = 0.0
        for i in range(rows):
            wi = w[i]
            for l in range(m):
                jj = base + l
                phi = psi[i, jj] - 1.0
                p2 = phi * phi
                cu = p2 * phi - phi
                f = neg_lap[i, jj] + cu
                g = 3.0 * p2 - 1.0
                cubic[i, jj] = cu
                gf[i, jj] = g * f
                g_out[i, jj] = g
                if want_hessian:
                    fphi[i, jj] = f * phi
                    g2[i, jj] = g * g
                wv = wi * w[l]
                bsum += wv * f * f
                sq = p2 - 1.0
                asum += wv * sq * sq
        bend[r] = bsum
        area[r] = asum


@numba.njit(cache=True, parallel=True)
def cross_pointwise(w1, w2, omega, m, p1, p2):
    """p1 = -w2 * omega, p2 = w1 * omega (the rotational-form cross product)."""
    rows, cols = w1.shape
    r_members = cols // m
    for r in numba.prange(r_members):
        base = r * m
        for i in range(rows):
            for l in range(m):
                jj = base + l
                om = omega[i, jj]
                p1[i, jj] = -w2[i, jj] * om
                p2[i, jj] = w1[i, jj] * om


@numba.njit(cache=True, parallel=True)
def transport_pointwise(w1, w2, dx, dy, mug, m, tp, cp1, cp2):
    """tp = w.grad(phi), cp1/cp2 = mu grad(phi) on the grid."""
    rows, cols = w1.shape
    r_members = cols // m
    for r in numba.prange(r_members):
        base = r * m
        for i in range(rows):
            for l in range(m):
                jj = base + l
                dxv = dx[i, jj]
                dyv = dy[i, jj]
                tp[i, jj] = w1[i, jj] * dxv + w2[i, jj] * dyv
                mu = mug[i, jj]
                cp1[i, jj] = mu * dxv
                cp2[i, jj] = mu * dyv
