"""Verification-harness behavior on reduced sweeps."""

import numpy as np
import pytest

from vesiflow import veriflab as vl
from vesiflow.errors import ShapeError

SMALL = vl.SweepConfig(n_samples=100, resolutions=(8, 12), seed=3)


def test_config_validation():
    with pytest.raises(ShapeError):
        vl.SweepConfig(n_samples=10)
    with pytest.raises(ShapeError):
        vl.SweepConfig(resolutions=(8,))


def test_identity_termef_passes():
    rep = vl.check_identity_termef(SMALL)
    assert rep.passed and rep.kind == "identity"
    assert rep.max_ratio <= 1e-9
    assert set(rep.per_resolution) == {8, 12}


def test_exact_identities_pass():
    for rep in vl.check_exact_identities(SMALL):
        assert rep.passed, rep.name
        assert rep.max_ratio <= 1e-9


def test_bilinear_reports():
    reports = vl.check_bilinear_bounds(SMALL)
    names = {r.name: r for r in reports}
    assert names["identity_btilde_skew"].max_ratio <= 1e-11
    assert names["identity_btilde_antisym"].max_ratio <= 1e-11
    for key in ("ratio_btilde_interp1", "ratio_btilde_interp2",
                "ratio_btilde_domain"):
        assert names[key].passed
        assert np.isfinite(names[key].max_ratio)


def test_g_norm_bracket():
    rep = vl.check_g_norm_equivalence(SMALL)
    assert rep.passed and rep.max_ratio == 0.0


def test_inequality_sweeps_bounded():
    reports = vl.check_inequalities(SMALL)
    assert len(reports) == 6
    for rep in reports:
        assert rep.passed, rep.name
        assert np.isfinite(rep.max_ratio)


def test_reports_deterministic():
    a = vl.check_identity_termef(SMALL)
    b = vl.check_identity_termef(SMALL)
    assert a.max_ratio == b.max_ratio and a.per_resolution == b.per_resolution


def test_seed_changes_values_not_verdicts():
    other = vl.SweepConfig(n_samples=100, resolutions=(8, 12), seed=4)
    a = vl.check_inequalities(SMALL)
    b = vl.check_inequalities(other)
    for ra, rb in zip(a, b):
        assert ra.passed == rb.passed


def test_worst_sample_serialized(tmp_path):
    cfg = vl.SweepConfig(n_samples=100, resolutions=(8, 12), seed=3,
                         snapshot_dir=str(tmp_path))
    rep = vl.check_identity_termef(cfg)
    assert rep.worst_sample is not None
    data = np.load(rep.worst_sample)
    assert "phi" in data
