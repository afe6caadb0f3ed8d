"""Analytic eigenbases and spectral transforms on the square Q = (0, pi)^2.

Scalar fields are expanded in the Dirichlet sine eigenbasis of the Laplacian,

    eta_jk(x, y) = (2/pi) sin(j x) sin(k y),      lambda_jk = j^2 + k^2,

and divergence-free velocity fields in the free-slip stream-function family

    e_jk = (d_y eta_jk, -d_x eta_jk) / sqrt(lambda_jk),

which is L2-orthonormal, pointwise divergence-free, satisfies e.n = 0 on the
boundary and diagonalizes the Stokes operator (-P Laplacian) with the same
eigenvalues.

Collocation uses the M-point Gauss-Legendre rule per axis, mapped to (0, pi).
An M-point Gauss rule integrates cos(p x) and sin(p x) to machine precision
once M >= p/2 + O(p^(1/3)); with M >= 6N every integrand this package forms
for identities (products of up to five band-limited factors against a
degree-N test function, per-axis frequency <= 6N) is integrated exactly.
Uniform grids cannot do this: they are exact only for even-parity content,
and the cross-parity couplings of cubic and quintic products would poison
the 1e-9 identity checks.

Transforms are dense matrix products against precomputed sine/cosine tables;
at desk scale (N <= 64) this beats FFT transforms and leaves no aliasing
error to reason about.  All tables are immutable, so a transform object is
safe to share across threads.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .errors import ModeIndexError, ShapeError

SIDE_LENGTH = np.pi
DOMAIN_AREA = np.pi * np.pi


@dataclass(frozen=True)
class DomainSpec:
    """Square domain (0, pi)^2 with N modes and an M-node quadrature grid per axis.

    M >= 6N guarantees exact quadrature for quintic spectral products tested
    against degree-N functions.  The default M = 8N leaves headroom for the
    degree-10 integrands appearing in norm diagnostics.
    """

    modes_per_axis: int
    collocation_per_axis: int = 0

    def __post_init__(self):
        n = self.modes_per_axis
        if n < 2:
            raise ShapeError(f"modes_per_axis must be >= 2, got {n}")
        if self.collocation_per_axis == 0:
            object.__setattr__(self, "collocation_per_axis", 8 * n)
        m = self.collocation_per_axis
        if m < 6 * n:
            raise ShapeError(
                f"collocation_per_axis must be >= 6*modes_per_axis for exact "
                f"dealiasing, got M={m} with N={n}"
            )

    @property
    def side_length(self) -> float:
        return SIDE_LENGTH

    @property
    def n_modes(self) -> int:
        return self.modes_per_axis * self.modes_per_axis

    def transforms(self) -> "Transforms":
        return _transforms(self.modes_per_axis, self.collocation_per_axis)

    def check_index(self, j: int, k: int):
        n = self.modes_per_axis
        if not (1 <= j <= n and 1 <= k <= n):
            raise ModeIndexError(f"mode ({j},{k}) outside 1..{n} per axis")


def eigenvalue(j: int, k: int) -> float:
    """Dirichlet Laplacian eigenvalue of the (j,k) sine mode."""
    return float(j * j + k * k)


class Transforms:
    """Precomputed transform tables for one (N, M) discretization.

    Grid layout: ``grid[m, l]`` holds the value at ``(x_m, y_l)`` where x_m
    are the Gauss nodes.  Coefficient layout: ``c[j-1, k-1]`` for the (j, k)
    mode.  ``anal_*`` methods return plain integrals against raw sin/cos
    products (no normalization); the eta-normalized pair is
    ``scalar_synthesis`` / ``scalar_analysis``.
    """

    def __init__(self, n: int, m: int):
        self.n = n
        self.m = m
        t, wt = np.polynomial.legendre.leggauss(m)
        x = 0.5 * np.pi * (t + 1.0)
        w = 0.5 * np.pi * wt
        j = np.arange(1, n + 1)
        self.nodes = x
        self.weights = w
        self.sin = np.sin(np.outer(x, j))            # (M, N), sin(j x_m)
        self.cos = np.cos(np.outer(x, j))            # (M, N), cos(j x_m)
        self.cos_even = np.cos(np.outer(x, 2 * np.arange(n + 1)))  # (M, N+1)
        self.sin_w = self.sin * w[:, None]           # quadrature-weighted tables
        self.cos_w = self.cos * w[:, None]
        self.cos_even_w = self.cos_even * w[:, None]
        self.eta_norm = 2.0 / np.pi

        jj, kk = np.meshgrid(j, j, indexing="ij")
        self.j = jj
        self.k = kk
        self.lam = (jj * jj + kk * kk).astype(float)
        # Sine-band coefficients of the constant function 1: <1, eta_jk>.
        sine_int = (1.0 - np.cos(j * np.pi)) / j     # int_0^pi sin(j x) dx
        self.ones_coeffs = self.eta_norm * np.outer(sine_int, sine_int)

        for arr in (self.nodes, self.weights, self.sin, self.cos, self.cos_even,
                    self.sin_w, self.cos_w, self.cos_even_w,
                    self.j, self.k, self.lam, self.ones_coeffs):
            arr.setflags(write=False)

        lam_flat = self.lam.ravel()
        order = np.lexsort((kk.ravel(), jj.ravel(), lam_flat))
        self.mode_order = order                      # flat indices, (lam, j, k) ascending
        self.mode_order.setflags(write=False)

    # -- quadrature ---------------------------------------------------------

    def quad(self, grid: np.ndarray) -> float:
        """Integral over Q of grid values (exact for per-axis frequency well under 2M)."""
        return float(self.weights @ grid @ self.weights)

    def _check_grid(self, grid):
        if grid.shape != (self.m, self.m):
            raise ShapeError(f"expected grid shape {(self.m, self.m)}, got {grid.shape}")

    def _check_coeffs(self, c):
        if c.shape != (self.n, self.n):
            raise ShapeError(f"expected coefficient shape {(self.n, self.n)}, got {c.shape}")

    # -- eta-normalized scalar pair ------------------------------------------

    def scalar_synthesis(self, c: np.ndarray) -> np.ndarray:
        """Grid values of sum_jk c_jk eta_jk."""
        self._check_coeffs(c)
        return self.eta_norm * (self.sin @ c @ self.sin.T)

    def scalar_analysis(self, grid: np.ndarray) -> np.ndarray:
        """eta-coefficients of the L2 projection of grid values onto the N-band."""
        self._check_grid(grid)
        return self.eta_norm * (self.sin_w.T @ grid @ self.sin_w)

    # -- raw mixed-parity transforms ------------------------------------------

    def synth_ss(self, a: np.ndarray) -> np.ndarray:
        """sum a_jk sin(j x) sin(k y) on the grid."""
        return self.sin @ a @ self.sin.T

    def synth_sc(self, a: np.ndarray) -> np.ndarray:
        """sum a_jk sin(j x) cos(k y) on the grid."""
        return self.sin @ a @ self.cos.T

    def synth_cs(self, a: np.ndarray) -> np.ndarray:
        """sum a_jk cos(j x) sin(k y) on the grid."""
        return self.cos @ a @ self.sin.T

    def synth_cc(self, a: np.ndarray) -> np.ndarray:
        """sum a_jk cos(j x) cos(k y) on the grid."""
        return self.cos @ a @ self.cos.T

    def anal_sc(self, grid: np.ndarray) -> np.ndarray:
        """Integrals of grid against sin(j x) cos(k y), j,k = 1..N."""
        self._check_grid(grid)
        return self.sin_w.T @ grid @ self.cos_w

    def anal_cs(self, grid: np.ndarray) -> np.ndarray:
        """Integrals of grid against cos(j x) sin(k y), j,k = 1..N."""
        self._check_grid(grid)
        return self.cos_w.T @ grid @ self.sin_w

    def anal_cos_even(self, grid: np.ndarray) -> np.ndarray:
        """Integrals of grid against cos(2j x) cos(2k y), j,k = 0..N."""
        self._check_grid(grid)
        return self.cos_even_w.T @ grid @ self.cos_even_w


@lru_cache(maxsize=16)
def _transforms(n: int, m: int) -> Transforms:
    return Transforms(n, m)


def sorted_modes(domain: DomainSpec) -> list[tuple[float, int, int]]:
    """Triples (lambda, j, k) for the full tensor band, sorted by (lambda, j, k)."""
    tr = domain.transforms()
    js = tr.j.ravel()[tr.mode_order]
    ks = tr.k.ravel()[tr.mode_order]
    lams = tr.lam.ravel()[tr.mode_order]
    return [(float(l), int(a), int(b)) for l, a, b in zip(lams, js, ks)]
