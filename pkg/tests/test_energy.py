"""Energy, variational derivatives and the linear/nonlinear split."""

import numpy as np
import pytest

import vesiflow as vf
from vesiflow import energy as en
from vesiflow.energy import EnergyParams, PhiPipeline
from vesiflow.errors import ShapeError
from vesiflow.field import h2_norm, perturb

from conftest import random_phi, random_scalar

FEASIBLE = EnergyParams(m1=2.0, m2=3.0, a=-np.pi ** 2, b=0.0, gamma=1.0)
GENERIC = EnergyParams(m1=2.0, m2=3.0, a=-np.pi ** 2 + 0.5, b=0.4, gamma=1.0)


def test_equilibrium_is_critical(domain):
    phi = vf.zero_scalar(domain, offset=True)
    eb = en.energy(phi, FEASIBLE)
    assert eb.total == 0.0 and eb.bending == 0.0
    assert eb.a_phi == pytest.approx(-np.pi ** 2, rel=1e-14)
    assert eb.b_phi == 0.0
    assert np.abs(en.f_of_phi(phi).coeffs).max() == 0.0
    assert np.abs(en.chemical_potential(phi, FEASIBLE).coeffs).max() == 0.0


def test_offset_required(domain, rng):
    plain = random_scalar(domain, rng)
    with pytest.raises(ShapeError):
        en.energy(plain, FEASIBLE)
    with pytest.raises(ShapeError):
        en.chemical_potential(plain, FEASIBLE)


def test_f_linearization_at_equilibrium(domain):
    # f'(-1) psi = -lap psi + 2 psi, so mode (1,1) carries factor lam + 2 = 4
    n = domain.modes_per_axis
    delta = 1e-7
    c = np.zeros((n, n))
    c[0, 0] = delta
    fc = en.f_of_phi(vf.ScalarField(domain, c, offset=True)).coeffs
    assert fc[0, 0] / delta == pytest.approx(4.0, rel=1e-6)


def test_volume_linear_term(domain):
    # A(-1 + d eta11) = -pi^2 + d * 8/pi
    n = domain.modes_per_axis
    c = np.zeros((n, n))
    c[0, 0] = 0.05
    eb = en.energy(vf.ScalarField(domain, c, offset=True), FEASIBLE)
    assert eb.a_phi == pytest.approx(-np.pi ** 2 + 0.05 * 8 / np.pi, rel=1e-13)


def test_area_term_closed_form(domain):
    # B(-1 + d eta11) by 1D sine-power integrals:
    #   B = d^2 |grad eta|^2/2 + (1/4) int (d eta (d eta - 2))^2
    d_amp = 0.1
    n = domain.modes_per_axis
    c = np.zeros((n, n))
    c[0, 0] = d_amp
    eb = en.energy(vf.ScalarField(domain, c, offset=True), FEASIBLE)
    s1 = 2.0                    # int_0^pi sin = 2
    s2 = np.pi / 2              # int sin^2
    s3 = 4.0 / 3.0              # int sin^3
    s4 = 3.0 * np.pi / 8.0      # int sin^4
    k = 2 / np.pi
    int_eta2 = (k * s2) ** 2 * np.pi ** 0  # = 1 by normalization
    int_eta3 = k ** 3 * s3 ** 2
    int_eta4 = k ** 4 * s4 ** 2
    expected = 0.5 * d_amp ** 2 * 2.0 + 0.25 * (
        d_amp ** 4 * int_eta4 - 4 * d_amp ** 3 * int_eta3 + 4 * d_amp ** 2 * int_eta2)
    assert eb.b_phi == pytest.approx(expected, rel=1e-12)
    assert int_eta2 == pytest.approx(1.0)
    # leading order is 2 d^2
    assert eb.b_phi == pytest.approx(2 * d_amp ** 2, rel=0.1)


def test_energy_decomposition_consistent(domain, rng):
    phi = random_phi(domain, rng)
    eb = en.energy(phi, GENERIC)
    assert eb.total == pytest.approx(
        eb.bending + eb.volume_penalty + eb.area_penalty, rel=1e-14)
    assert eb.bending >= 0 and eb.volume_penalty >= 0 and eb.area_penalty >= 0


def test_chemical_potential_matches_central_differences(domain, rng):
    # 200 random (phi, psi) pairs at h = 1e-5, relative error <= 1e-5
    worst = 0.0
    for _ in range(200):
        phi = random_phi(domain, rng, amplitude=0.5)
        psi = random_scalar(domain, rng, amplitude=1.0)
        h = 1e-5
        e_plus = en.energy(perturb(phi, h * psi.coeffs), GENERIC).total
        e_minus = en.energy(perturb(phi, -h * psi.coeffs), GENERIC).total
        fd = (e_plus - e_minus) / (2 * h)
        pairing = float(np.vdot(en.chemical_potential(phi, GENERIC).coeffs,
                                psi.coeffs))
        worst = max(worst, abs(fd - pairing) / max(abs(pairing), 1e-8))
    assert worst <= 1e-5


def test_second_variation_equilibrium_value(domain):
    phi = vf.zero_scalar(domain, offset=True)
    _, eta = vf.scalar_eigenpair(domain, 1, 1)
    val = en.second_variation(phi, eta, eta, EnergyParams())
    assert val == pytest.approx(16.0, rel=1e-13)


def test_second_variation_symmetry(domain, rng):
    phi = random_phi(domain, rng)
    psi = random_scalar(domain, rng)
    rho = random_scalar(domain, rng)
    a = en.second_variation(phi, psi, rho, GENERIC)
    b = en.second_variation(phi, rho, psi, GENERIC)
    assert abs(a - b) <= 1e-12 * max(abs(a), 1.0)


def test_second_variation_matches_second_differences(domain, rng):
    worst = 0.0
    for _ in range(50):
        phi = random_phi(domain, rng, amplitude=0.5)
        psi = random_scalar(domain, rng, amplitude=1.0)
        h = 1e-4
        e0 = en.energy(phi, GENERIC).total
        ep = en.energy(perturb(phi, h * psi.coeffs), GENERIC).total
        em = en.energy(perturb(phi, -h * psi.coeffs), GENERIC).total
        fd = (ep - 2 * e0 + em) / h ** 2
        sv = en.second_variation(phi, psi, psi, GENERIC)
        worst = max(worst, abs(fd - sv) / max(abs(sv), 1e-8))
    assert worst <= 1e-4


def test_chemical_potential_linearization_consistent_with_hessian(domain):
    # mu(-1 + d eta) tested against d * d2E(-1)(eta, eta) for small d
    p = EnergyParams(m1=2.0, m2=0.0, a=-np.pi ** 2, b=0.0)
    n = domain.modes_per_axis
    d_amp = 1e-6
    c = np.zeros((n, n))
    c[0, 0] = d_amp
    mu = en.chemical_potential(vf.ScalarField(domain, c, offset=True), p)
    _, eta = vf.scalar_eigenpair(domain, 1, 1)
    expected = d_amp * en.second_variation(vf.zero_scalar(domain, offset=True),
                                           eta, eta, p)
    assert mu.coeffs[0, 0] == pytest.approx(expected, rel=1e-5)


def test_mn_split_reconstructs_potential(domain, rng):
    for _ in range(10):
        phi = random_phi(domain, rng)
        m_phi, n_phi = en.mn_split(phi, GENERIC)
        mu = en.chemical_potential(phi, GENERIC)
        scale = max(np.abs(mu.coeffs).max(), 1.0)
        assert np.abs(m_phi.coeffs + n_phi.coeffs - mu.coeffs).max() <= 1e-12 * scale


def test_mn_split_diagonal_action(domain):
    # pure sine mode: M contributes (lam^2 + lam + 1) c on that mode, plus the
    # band-limited projection of M(-1) = -1
    n = domain.modes_per_axis
    c = np.zeros((n, n))
    c[0, 1] = 0.7                       # mode (1,2), lam = 5
    m_phi, _ = en.mn_split(vf.ScalarField(domain, c, offset=True), FEASIBLE)
    tr = vf.DomainSpec(n).transforms()
    assert m_phi.coeffs[0, 1] == pytest.approx(
        (25 + 5 + 1) * 0.7 - tr.ones_coeffs[0, 1], rel=1e-14)


def test_lipschitz_ratio_of_nonlinear_part(domain, rng):
    # ratio |N(phi1)-N(phi2)| / ((1 + ||phi1||^6 + ||phi2||^6) ||phi1-phi2||)
    # stays finite over a random sweep
    worst = 0.0
    for _ in range(200):
        phi1 = random_phi(domain, rng, amplitude=rng.choice([0.1, 1.0, 5.0]),
                          decay=rng.choice([1.0, 1.5, 2.0]))
        phi2 = random_phi(domain, rng, amplitude=rng.choice([0.1, 1.0, 5.0]),
                          decay=rng.choice([1.0, 1.5, 2.0]))
        _, n1 = en.mn_split(phi1, GENERIC)
        _, n2 = en.mn_split(phi2, GENERIC)
        num = np.sqrt(float(((n1.coeffs - n2.coeffs) ** 2).sum()))
        diff = vf.ScalarField(domain, phi1.coeffs - phi2.coeffs)
        den = (1 + h2_norm(phi1) ** 6 + h2_norm(phi2) ** 6) * h2_norm(diff)
        worst = max(worst, num / den)
    assert np.isfinite(worst) and worst > 0


def test_energy_identity_integration_by_parts(domain, rng):
    # |f(phi)|^2 = |lap|^2 + 6|phi grad phi|^2 - 2|grad|^2 + |phi|_6^6
    #              - 2|phi|_4^4 + |phi|_2^2   (exact under the boundary data)
    tr = domain.transforms()
    for _ in range(100):
        phi = random_phi(domain, rng, amplitude=rng.choice([0.1, 1.0, 5.0]),
                         decay=rng.choice([1.0, 1.5, 2.0]))
        work = PhiPipeline(domain, phi.coeffs)
        nb = vf.norms(phi)
        lhs = tr.quad(work.f_grid ** 2)
        rhs = (nb.lap_l2 ** 2 + 6 * nb.phi_grad_phi_l2 ** 2 - 2 * nb.grad_l2 ** 2
               + nb.l6 ** 6 - 2 * nb.l4 ** 4 + nb.l2 ** 2)
        assert lhs == pytest.approx(rhs, rel=1e-9, abs=1e-12)


def test_hessian_diag_fast_equals_reference(domain, rng):
    phi = random_phi(domain, rng)
    tr = domain.transforms()
    weights = (0.7 * tr.lam ** -2.0) ** 2
    work = PhiPipeline(domain, phi.coeffs)
    fast = work.hessian_diag_weighted(GENERIC, weights)
    slow = en.hessian_trace_reference(phi, GENERIC, weights)
    assert fast == pytest.approx(slow, rel=1e-9)


def test_f_projection_refined_grid_oracle(domain, rng):
    # in-band coefficients of f(phi) against a refined-grid quadrature of the
    # true nonlinearity times the basis function
    from conftest import refined_quad

    phi = random_phi(domain, rng, amplitude=0.4)
    fc = en.f_of_phi(phi).coeffs
    n = domain.modes_per_axis
    j = np.arange(1, n + 1)
    c = phi.coeffs

    def integrand(xg, yg):
        psi = np.zeros_like(xg)
        lap = np.zeros_like(xg)
        for a in range(n):
            for b in range(n):
                base = np.sin(j[a] * xg) * np.sin(j[b] * yg)
                psi += c[a, b] * base
                lap += (j[a] ** 2 + j[b] ** 2) * c[a, b] * base
        psi *= 2 / np.pi
        lap *= 2 / np.pi
        ph = psi - 1.0
        f_true = lap + ph ** 3 - ph
        return f_true * (2 / np.pi) * np.sin(2 * xg) * np.sin(3 * yg)

    oracle = refined_quad(domain, integrand)
    assert fc[1, 2] == pytest.approx(oracle, rel=1e-11)
