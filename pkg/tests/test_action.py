"""Builtin generators, fixed-point detection, and field serialization."""

import numpy as np
import pytest

from hamflow import action, mesh
from hamflow.action import (
    GeneratorSet,
    builtin_field,
    fixed_points,
    read_field_csv,
    trig_hamiltonian,
    write_field_csv,
)
from hamflow.forms import TangentField

TWO_PI = 2.0 * np.pi


# ---------------------------------------------------------------------------
# builtin fields


def test_polar_rotation_vectors_and_poles(icosphere2):
    f = builtin_field("sphere_polar_rotation", icosphere2)
    x = icosphere2.vertices
    np.testing.assert_array_equal(f.vectors[:, 0], -x[:, 1])
    np.testing.assert_array_equal(f.vectors[:, 1], x[:, 0])
    assert np.all(f.vectors[:, 2] == 0)
    # the two poles are the only exact zeros
    assert int(np.sum(f.magnitudes() == 0.0)) == 2


def test_polar_rotation_rejects_params_and_chart_surface(icosphere2, torus4):
    with pytest.raises(ValueError, match="unexpected parameters"):
        builtin_field("sphere_polar_rotation", icosphere2, speed=2.0)
    with pytest.raises(ValueError, match="embedded"):
        builtin_field("sphere_polar_rotation", torus4)


def test_translation_field(torus8):
    f = builtin_field("torus_translation", torus8, a=2.0, b=-1.0)
    assert f.label == "torus_translation(2,-1)"
    np.testing.assert_array_equal(f.vectors, np.tile([2.0, -1.0], (torus8.n_vertices, 1)))
    rows = f.contraction_form(np.zeros((4, 2)))
    np.testing.assert_array_equal(rows, np.tile([1.0, 2.0], (4, 1)))


def test_translation_default_is_unit_vertical(torus8):
    f = builtin_field("torus_translation", torus8)
    np.testing.assert_array_equal(f.vectors, np.tile([0.0, 1.0], (torus8.n_vertices, 1)))


def test_translation_needs_chart(icosphere2):
    with pytest.raises(ValueError, match="chart"):
        builtin_field("torus_translation", icosphere2)


def test_hamiltonian_field_magnitude(torus8):
    f = builtin_field("torus_hamiltonian", torus8)
    t1 = torus8.chart[:, 0]
    np.testing.assert_allclose(
        f.magnitudes(), TWO_PI * np.abs(np.sin(TWO_PI * t1)), atol=1e-12
    )


def test_hamiltonian_field_is_rotated_gradient(torus8):
    value, gradient = trig_hamiltonian(k1=0, k2=2, amplitude=0.5)
    f = builtin_field("torus_hamiltonian", torus8, hamiltonian=value, gradient=gradient)
    g = gradient(torus8.chart)
    np.testing.assert_allclose(f.vectors[:, 0], g[:, 1], atol=1e-14)
    np.testing.assert_allclose(f.vectors[:, 1], -g[:, 0], atol=1e-14)


def test_hamiltonian_needs_gradient(torus8):
    with pytest.raises(ValueError, match="gradient"):
        builtin_field(
            "torus_hamiltonian", torus8, hamiltonian=lambda p: np.zeros(len(p))
        )


def test_unknown_builtin(torus8):
    with pytest.raises(ValueError, match="unknown builtin"):
        builtin_field("torus_rotation", torus8)


def test_trig_hamiltonian_gradient_consistent():
    value, gradient = trig_hamiltonian(k1=2, k2=-1, amplitude=1.3, phase=0.4)
    rng = np.random.default_rng(7)
    pts = rng.uniform(0.0, 1.0, (40, 2))
    h = 1e-6
    for axis in range(2):
        step = np.zeros(2)
        step[axis] = h
        fd = (value(pts + step) - value(pts - step)) / (2 * h)
        np.testing.assert_allclose(gradient(pts)[:, axis], fd, atol=1e-5)


# ---------------------------------------------------------------------------
# fixed points


def test_fixed_points_polar_rotation(icosphere2):
    fp = fixed_points(builtin_field("sphere_polar_rotation", icosphere2))
    assert fp.vertices.size == 2
    assert fp.all_components_fixed
    assert not fp.is_empty
    assert fp.component_margins[0] == 0.0
    assert "components [+]" in repr(fp)


def test_fixed_points_translation_empty(torus8):
    fp = fixed_points(builtin_field("torus_translation", torus8))
    assert fp.is_empty
    assert not fp.all_components_fixed
    # constant magnitude: the margin is the full field scale
    assert fp.component_margins[0] == 1.0


def test_fixed_points_hamiltonian_grid_zeros(torus8):
    fp = fixed_points(builtin_field("torus_hamiltonian", torus8))
    # sin(2 pi t1) vanishes on the columns t1 = 0 and t1 = 1/2
    t1 = torus8.chart[:, 0]
    expected = np.nonzero(np.isin(t1, [0.0, 0.5]))[0]
    np.testing.assert_array_equal(fp.vertices, expected)
    assert fp.all_components_fixed


def test_fixed_points_tolerance_superset(torus8):
    f = builtin_field("torus_hamiltonian", torus8)
    small = fixed_points(f, rel_tol=1e-8)
    large = fixed_points(f, rel_tol=0.9)
    assert set(small.vertices) <= set(large.vertices)
    assert large.vertices.size > small.vertices.size


def test_fixed_points_rel_tol_guard(torus8):
    f = builtin_field("torus_translation", torus8)
    for bad in (0.0, 1.0, -0.5):
        with pytest.raises(ValueError, match="rel_tol"):
            fixed_points(f, rel_tol=bad)


def test_fixed_points_zero_field(torus4):
    f = TangentField(torus4, np.zeros((torus4.n_vertices, 2)))
    fp = fixed_points(f)
    assert fp.vertices.size == torus4.n_vertices


def test_fixed_points_sampled_default_is_wider(torus8):
    f = builtin_field("torus_hamiltonian", torus8)
    noisy = TangentField(torus8, f.vectors + 1e-5, sampled=True)
    assert fixed_points(noisy).rel_tol == 1e-3
    assert fixed_points(f).rel_tol == 1e-6


def test_interior_minimum_warns_without_flag(torus4):
    vectors = np.tile([1.0, 0.0], (torus4.n_vertices, 1))
    tri = torus4.triangles[0]
    # corner vectors whose hull surrounds the origin while every corner
    # magnitude stays near one
    vectors[tri[1]] = [-0.6, 0.9]
    vectors[tri[2]] = [-0.6, -0.9]
    f = TangentField(torus4, vectors)
    with pytest.warns(UserWarning, match="interpolated minima"):
        fp = fixed_points(f, rel_tol=1e-3)
    assert fp.is_empty
    assert 0 in fp.interior_minima
    assert not fp.component_has_fixed.any()


# ---------------------------------------------------------------------------
# generator sets


def test_generator_set_labels_and_combination(torus8):
    gens = GeneratorSet(
        [
            builtin_field("torus_translation", torus8, a=1.0, b=0.0),
            builtin_field("torus_translation", torus8, a=0.0, b=1.0),
        ]
    )
    assert len(gens) == 2
    assert gens.labels == ["torus_translation(1,0)", "torus_translation(0,1)"]
    combo = gens.combination([2.0, -3.0])
    np.testing.assert_allclose(combo.vectors, np.tile([2.0, -3.0], (torus8.n_vertices, 1)))
    assert "2*" in combo.label and "-3*" in combo.label
    with pytest.raises(ValueError, match="coefficients"):
        gens.combination([1.0])


def test_generator_set_guards(torus8, torus4):
    with pytest.raises(ValueError, match="at least one"):
        GeneratorSet([])
    a = builtin_field("torus_translation", torus8)
    b = builtin_field("torus_translation", torus4)
    with pytest.raises(ValueError, match="one surface"):
        GeneratorSet([a, b])
    with pytest.raises(ValueError, match="distinct"):
        GeneratorSet([a, a])


def test_lattice_translations_reexport(torus4):
    assert action.lattice_translations is mesh.lattice_translations
    assert len(action.lattice_translations(torus4)) == 16


# ---------------------------------------------------------------------------
# field CSV round trips


def test_field_csv_round_trip_chart(tmp_path, torus8):
    f = builtin_field("torus_hamiltonian", torus8)
    path = tmp_path / "field.csv"
    write_field_csv(f, path)
    back = read_field_csv(torus8, path, label="imported")
    assert back.sampled
    assert back.label == "imported"
    np.testing.assert_array_equal(back.vectors, f.vectors)


def test_field_csv_round_trip_embedded(tmp_path, icosphere2):
    f = builtin_field("sphere_polar_rotation", icosphere2)
    path = tmp_path / "field.csv"
    write_field_csv(f, path)
    back = read_field_csv(icosphere2, path)
    np.testing.assert_array_equal(back.vectors, f.vectors)


def test_field_csv_missing_vertex(tmp_path, torus4):
    f = builtin_field("torus_translation", torus4)
    path = tmp_path / "field.csv"
    write_field_csv(f, path)
    lines = path.read_text().splitlines()
    path.write_text("\n".join(lines[:-1]) + "\n")
    with pytest.raises(ValueError, match="every vertex"):
        read_field_csv(torus4, path)


def test_field_csv_rejects_offchart_component(tmp_path, torus4):
    path = tmp_path / "field.csv"
    rows = ["# tangent field bad", "index,v0,v1,v2"]
    rows += [f"{i},1.0,0.0,0.5" for i in range(torus4.n_vertices)]
    path.write_text("\n".join(rows) + "\n")
    with pytest.raises(ValueError, match="third component"):
        read_field_csv(torus4, path)


def test_field_csv_bad_width(tmp_path, torus4):
    path = tmp_path / "field.csv"
    rows = ["# tangent field bad", "index,v0,v1"]
    rows += [f"{i},1.0,0.0" for i in range(torus4.n_vertices)]
    path.write_text("\n".join(rows) + "\n")
    with pytest.raises(ValueError, match="three components"):
        read_field_csv(torus4, path)
