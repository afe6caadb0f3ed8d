import numpy as np
import pytest

from vesiflow import DomainSpec, ScalarField, VelocityField


@pytest.fixture
def domain():
    return DomainSpec(8)


@pytest.fixture
def domain16():
    return DomainSpec(16)


@pytest.fixture
def rng():
    return np.random.default_rng(20240817)


def decayed_coeffs(domain, rng, amplitude=1.0, decay=1.5):
    tr = domain.transforms()
    return amplitude * rng.standard_normal(tr.lam.shape) / tr.lam ** decay


def random_phi(domain, rng, amplitude=0.5, decay=1.5):
    """Phase field with the -1 offset and spectrally decaying sine part."""
    return ScalarField(domain, decayed_coeffs(domain, rng, amplitude, decay),
                       offset=True)


def random_scalar(domain, rng, amplitude=1.0, decay=1.5):
    return ScalarField(domain, decayed_coeffs(domain, rng, amplitude, decay))


def random_velocity(domain, rng, amplitude=1.0, decay=1.5):
    return VelocityField(domain, decayed_coeffs(domain, rng, amplitude, decay))


def refined_quad(domain, func_on_grid):
    """Independent quadrature oracle: same integrand evaluated on the 2M rule.

    The 2M Gauss rule has entirely different nodes and weights, so agreement
    pins down the base-rule quadrature rather than re-running it.
    """
    fine = DomainSpec(domain.modes_per_axis, 2 * domain.collocation_per_axis)
    tr = fine.transforms()
    xs = tr.nodes
    xg, yg = np.meshgrid(xs, xs, indexing="ij")
    return tr.quad(func_on_grid(xg, yg))
