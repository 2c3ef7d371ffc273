"""Estimator wrappers over the decomposition and detection pipelines."""

import numpy as np
import pytest
from sklearn.base import clone
from sklearn.exceptions import NotFittedError

from hamflow.action import builtin_field
from hamflow.detect import HamiltonianDetector
from hamflow.forms import Cochain, MeasureDensity, d, de_rham, norm
from hamflow.hodge import HodgeDecomposition


def _dtheta_rows(surface):
    a = de_rham(
        lambda p: np.column_stack([np.ones(len(p)), np.zeros(len(p))]), surface, 1
    )
    b = de_rham(
        lambda p: np.column_stack([np.zeros(len(p)), np.ones(len(p))]), surface, 1
    )
    return np.vstack([a.values, b.values])


# ---------------------------------------------------------------------------
# HodgeDecomposition


def test_hodge_estimator_fit_attributes(torus8):
    est = HodgeDecomposition().fit(torus8)
    assert est.n_components_ == 2
    assert est.surface_ is torus8
    assert est.basis_.gram_defect < 1e-12


def test_hodge_estimator_transform_round_trip(torus8):
    est = HodgeDecomposition().fit(torus8)
    rows = _dtheta_rows(torus8)
    coeffs = est.transform(rows)
    assert coeffs.shape == (2, 2)
    back = est.inverse_transform(coeffs)
    # both rows are harmonic, so the round trip reproduces them
    np.testing.assert_allclose(back, rows, atol=1e-10)


def test_hodge_estimator_single_row(torus8):
    est = HodgeDecomposition().fit(torus8)
    row = _dtheta_rows(torus8)[0]
    coeffs = est.transform(row)
    assert coeffs.shape == (2,)
    assert est.inverse_transform(coeffs).shape == (torus8.n_edges,)


def test_hodge_estimator_exact_rows_project_to_zero(torus8, rng):
    est = HodgeDecomposition().fit(torus8)
    g = Cochain(torus8, 0, rng.standard_normal(torus8.n_vertices))
    coeffs = est.transform(d(g).values)
    assert np.abs(coeffs).max() < 1e-10


def test_hodge_estimator_decompose(torus8, rng):
    est = HodgeDecomposition().fit(torus8)
    g = Cochain(torus8, 0, rng.standard_normal(torus8.n_vertices))
    res = est.decompose(d(g).values)
    assert norm(res.harmonic, est.triple_) < 1e-10
    bad = rng.standard_normal(torus8.n_edges)
    with pytest.raises(ValueError, match="not closed"):
        est.decompose(bad)


def test_hodge_estimator_shape_guards(torus8):
    est = HodgeDecomposition().fit(torus8)
    with pytest.raises(ValueError, match="rows of length"):
        est.transform(np.zeros((2, 7)))
    with pytest.raises(ValueError, match="coefficients"):
        est.inverse_transform(np.zeros((2, 5)))


def test_hodge_estimator_requires_surface_and_fit(torus8):
    with pytest.raises(TypeError, match="SimplicialSurface"):
        HodgeDecomposition().fit(np.zeros((4, 4)))
    with pytest.raises(NotFittedError):
        HodgeDecomposition().transform(np.zeros(4))


def test_hodge_estimator_density_forms(torus8, rng):
    weights = np.exp(rng.uniform(0.0, 1.0, torus8.n_vertices))
    est = HodgeDecomposition(density=weights).fit(torus8)
    assert est.density_.condition_ratio > 1.0
    est2 = HodgeDecomposition(density=MeasureDensity(torus8, weights)).fit(torus8)
    np.testing.assert_array_equal(
        est.density_.vertex_weights, est2.density_.vertex_weights
    )


def test_hodge_estimator_density_surface_mismatch(torus8, torus4):
    density = MeasureDensity(torus4, np.ones(torus4.n_vertices))
    with pytest.raises(ValueError, match="different surface"):
        HodgeDecomposition(density=density).fit(torus8)


def test_hodge_estimator_clone(torus8):
    est = HodgeDecomposition(solver_rtol=1e-10, closed_tol=1e-6)
    dup = clone(est)
    assert dup.get_params() == est.get_params()
    assert dup.solver_rtol == 1e-10


# ---------------------------------------------------------------------------
# HamiltonianDetector


def test_detector_fit_predict(torus8):
    det = HamiltonianDetector().fit(torus8)
    assert det.n_components_ == 2
    assert det.j_defect_ < 1e-12
    fields = [
        builtin_field("torus_hamiltonian", torus8),
        builtin_field("torus_translation", torus8),
    ]
    verdicts = det.predict(fields)
    assert list(verdicts) == ["Hamiltonian", "NonHamiltonian"]
    rho = det.decision_function(fields)
    assert rho[0] < 1e-10
    assert rho[1] > 0.99


def test_detector_report(torus8):
    det = HamiltonianDetector().fit(torus8)
    report = det.report([builtin_field("torus_hamiltonian", torus8)])
    assert report.verdict_labels() == ["Hamiltonian"]
    assert "torus_hamiltonian" in report.momentum


def test_detector_foreign_generators(torus8, torus4):
    det = HamiltonianDetector().fit(torus8)
    with pytest.raises(ValueError, match="different surface"):
        det.predict([builtin_field("torus_translation", torus4)])


def test_detector_unfitted(torus8):
    with pytest.raises(NotFittedError):
        HamiltonianDetector().predict([builtin_field("torus_translation", torus8)])


def test_detector_threshold_params(torus8):
    det = HamiltonianDetector(tol_hamiltonian=1e-9, tol_nonhamiltonian=0.5).fit(torus8)
    report = det.report([builtin_field("torus_translation", torus8)])
    assert report.tolerances["hamiltonian"] == 1e-9
    assert report.tolerances["nonhamiltonian"] == 0.5


def test_detector_clone(torus8):
    det = HamiltonianDetector(quadrature_order=4, rank_tol=1e-7)
    dup = clone(det)
    assert dup.get_params() == det.get_params()
    assert dup.quadrature_order == 4
