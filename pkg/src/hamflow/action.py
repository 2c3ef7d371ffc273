"""Infinitesimal generators of group actions and their fixed points.

Builtin generators come with analytic contraction covectors, so the
downstream obstruction test integrates exact expressions instead of
rotated samples.  Fixed points are detected at vertices: a vertex is
fixed when its field magnitude falls below a relative threshold, and a
zero of the piecewise-linear interpolant hiding inside a triangle with
nonzero corners is surfaced as a warning plus a report entry, never as a
flag (generators are vertex data; see ``fixed_points``).

Exact grid symmetries of generated tori live in ``mesh``; the
``lattice_translations`` re-export keeps them reachable from the action
namespace they conceptually belong to.
"""

from __future__ import annotations

import warnings

import numpy as np

from .forms import TangentField
from .mesh import lattice_translations

__all__ = [
    "GeneratorSet",
    "FixedPointSet",
    "builtin_field",
    "trig_hamiltonian",
    "fixed_points",
    "lattice_translations",
    "write_field_csv",
    "read_field_csv",
]

BUILTIN_FIELDS = ("sphere_polar_rotation", "torus_translation", "torus_hamiltonian")


class GeneratorSet:
    """An ordered basis of generator fields on one surface.

    Combination coefficients are understood against this basis, so reports
    and the momentum map are indexed by the labels stored here.
    """

    def __init__(self, fields, labels=None):
        fields = list(fields)
        if not fields:
            raise ValueError("a generator set needs at least one field")
        surface = fields[0].surface
        for f in fields:
            if f.surface is not surface:
                raise ValueError("all generators must live on one surface")
        if labels is None:
            labels = [f.label or f"e{i + 1}" for i, f in enumerate(fields)]
        labels = [str(x) for x in labels]
        if len(labels) != len(fields):
            raise ValueError("one label per field")
        if len(set(labels)) != len(labels):
            raise ValueError("generator labels must be distinct")
        self.fields = fields
        self.labels = labels
        self.surface = surface

    def __len__(self):
        return len(self.fields)

    def __iter__(self):
        return iter(self.fields)

    def __getitem__(self, i):
        return self.fields[i]

    def combination(self, coeffs):
        """The field with the given coordinates in this basis."""
        coeffs = np.asarray(coeffs, dtype=float)
        if coeffs.shape != (len(self.fields),):
            raise ValueError(f"expected {len(self.fields)} coefficients")
        out = coeffs[0] * self.fields[0]
        for c, f in zip(coeffs[1:], self.fields[1:]):
            out = out + c * f
        out.label = "+".join(
            f"{c:g}*{lab}" for c, lab in zip(coeffs, self.labels)
        )
        return out

    def __repr__(self):
        return f"GeneratorSet({', '.join(self.labels)})"


class FixedPointSet:
    """Vertices where a generator vanishes, with per-component margins.

    Attributes
    ----------
    vertices : int array of fixed vertex indices.
    component_has_fixed : bool array, one entry per connected component.
    component_margins : float array, smallest relative magnitude on each
        component; the margin behind each flag, reported so borderline
        cases are visible rather than swallowed by the boolean.
    rel_tol, threshold : the relative tolerance used and the absolute
        magnitude it translated to.
    interior_minima : triangle indices whose interpolated field dips below
        the threshold although no corner does (documented limitation of
        vertex-level detection).
    """

    def __init__(
        self,
        vertices,
        component_has_fixed,
        component_margins,
        rel_tol,
        threshold,
        interior_minima,
    ):
        self.vertices = vertices
        self.component_has_fixed = component_has_fixed
        self.component_margins = component_margins
        self.rel_tol = rel_tol
        self.threshold = threshold
        self.interior_minima = interior_minima

    @property
    def all_components_fixed(self):
        return bool(self.component_has_fixed.all())

    @property
    def is_empty(self):
        return self.vertices.size == 0

    def __repr__(self):
        flags = "".join("+" if f else "-" for f in self.component_has_fixed)
        return (
            f"FixedPointSet({self.vertices.size} vertices, components [{flags}], "
            f"rel_tol={self.rel_tol:g})"
        )


def trig_hamiltonian(k1=1, k2=0, amplitude=1.0, phase=0.0):
    """Closed forms of H = amplitude * cos(2 pi (k1 t1 + k2 t2) + phase).

    Returns (value, gradient) callables on chart points, the named energy
    family the scenario format exposes for torus Hamiltonian generators.
    """
    two_pi = 2.0 * np.pi

    def value(points):
        points = np.asarray(points, dtype=float)
        return amplitude * np.cos(
            two_pi * (k1 * points[:, 0] + k2 * points[:, 1]) + phase
        )

    def gradient(points):
        points = np.asarray(points, dtype=float)
        s = -amplitude * two_pi * np.sin(
            two_pi * (k1 * points[:, 0] + k2 * points[:, 1]) + phase
        )
        return np.column_stack([k1 * s, k2 * s])

    return value, gradient


def _constant_rows(components):
    components = np.asarray(components, dtype=float)

    def form(points):
        return np.tile(components, (len(points), 1))

    return form


def builtin_field(name, surface, **params):
    """Construct a named generator on a compatible surface.

    Names and parameters:

    - ``sphere_polar_rotation``: rotation about the z axis of an embedded
      surface, ``x -> e_z x x``; its area-form contraction is the constant
      ambient covector dz.
    - ``torus_translation``: constant chart field ``(a, b)`` on a flat
      torus; contraction is the constant covector ``(-b, a)``.
    - ``torus_hamiltonian``: the 90-degree-rotated gradient
      ``(dH/dt2, -dH/dt1)`` of an energy ``hamiltonian`` with callable
      ``gradient`` (both on chart points); defaults to the
      ``trig_hamiltonian()`` fixture cos(2 pi t1).  Contraction is dH.
    """
    if name == "sphere_polar_rotation":
        if not surface.is_embedded:
            raise ValueError("sphere_polar_rotation needs an embedded surface")
        if params:
            raise ValueError(f"unexpected parameters {sorted(params)}")
        x = surface.vertices
        vectors = np.column_stack([-x[:, 1], x[:, 0], np.zeros(len(x))])
        return TangentField(
            surface,
            vectors,
            label="sphere_polar_rotation",
            analytic=lambda p: np.column_stack(
                [-p[:, 1], p[:, 0], np.zeros(len(p))]
            ),
            contraction_form=_constant_rows([0.0, 0.0, 1.0]),
        )
    if name == "torus_translation":
        if surface.chart is None:
            raise ValueError("torus_translation needs a flat torus with chart")
        a = float(params.pop("a", 0.0))
        b = float(params.pop("b", 1.0))
        if params:
            raise ValueError(f"unexpected parameters {sorted(params)}")
        vectors = np.tile([a, b], (surface.n_vertices, 1))
        return TangentField(
            surface,
            vectors,
            label=f"torus_translation({a:g},{b:g})",
            analytic=_constant_rows([a, b]),
            contraction_form=_constant_rows([-b, a]),
        )
    if name == "torus_hamiltonian":
        if surface.chart is None:
            raise ValueError("torus_hamiltonian needs a flat torus with chart")
        hamiltonian = params.pop("hamiltonian", None)
        gradient = params.pop("gradient", None)
        if params:
            raise ValueError(f"unexpected parameters {sorted(params)}")
        if hamiltonian is None and gradient is None:
            hamiltonian, gradient = trig_hamiltonian()
        if gradient is None:
            raise ValueError("torus_hamiltonian needs the gradient callable")

        def field_vectors(points, grad=gradient):
            g = np.asarray(grad(points), dtype=float)
            return np.column_stack([g[:, 1], -g[:, 0]])

        return TangentField(
            surface,
            field_vectors(surface.chart),
            label="torus_hamiltonian",
            analytic=field_vectors,
            contraction_form=gradient,
        )
    raise ValueError(f"unknown builtin field {name!r}; choose from {BUILTIN_FIELDS}")


def _interpolant_minima(corner_vectors):
    """Min interpolated magnitude per triangle.

    The linear interpolant's values over a triangle form the convex hull
    of the three corner vectors, so the minimum magnitude is the distance
    from the origin to that hull: checked on the three boundary segments
    and, when the normal equations are well posed, in the interior.
    """
    a = corner_vectors[:, 0]
    b = corner_vectors[:, 1]
    c = corner_vectors[:, 2]

    def segment(p, q):
        d = q - p
        dd = np.einsum("td,td->t", d, d)
        t = np.einsum("td,td->t", -p, d) / np.where(dd > 0, dd, 1.0)
        t = np.clip(t, 0.0, 1.0)
        return np.linalg.norm(p + t[:, None] * d, axis=1)

    best = np.minimum(segment(a, b), np.minimum(segment(b, c), segment(c, a)))

    d1 = b - a
    d2 = c - a
    g11 = np.einsum("td,td->t", d1, d1)
    g12 = np.einsum("td,td->t", d1, d2)
    g22 = np.einsum("td,td->t", d2, d2)
    r1 = -np.einsum("td,td->t", a, d1)
    r2 = -np.einsum("td,td->t", a, d2)
    det = g11 * g22 - g12 * g12
    ok = det > 1e-30 * np.maximum(g11 * g22, 1e-300)
    safe = np.where(ok, det, 1.0)
    s = (g22 * r1 - g12 * r2) / safe
    t = (g11 * r2 - g12 * r1) / safe
    inside = ok & (s >= 0.0) & (t >= 0.0) & (s + t <= 1.0)
    interior = np.linalg.norm(a + s[:, None] * d1 + t[:, None] * d2, axis=1)
    return np.where(inside, np.minimum(best, interior), best)


def fixed_points(field, rel_tol=None):
    """Vertices where the field magnitude drops below a relative cut.

    ``rel_tol`` defaults to 1e-6 for fields built from closed forms and
    1e-3 for imported samples, separating exact zeros from sampling noise.
    The identically zero field fixes every vertex.  Larger tolerances give
    supersets.  Sub-threshold minima of the triangle interpolant that no
    vertex reflects are recorded in ``interior_minima`` and warned about,
    but do not set component flags.
    """
    if rel_tol is None:
        rel_tol = 1e-3 if field.sampled else 1e-6
    if not 0.0 < rel_tol < 1.0:
        raise ValueError("rel_tol must lie strictly between 0 and 1")
    surface = field.surface
    mag = field.magnitudes()
    scale = mag.max()
    threshold = rel_tol * scale
    fixed_mask = mag <= threshold
    vertices = np.nonzero(fixed_mask)[0]

    labels = surface.component_labels
    n_comp = surface.n_components
    component_has_fixed = np.zeros(n_comp, dtype=bool)
    component_margins = np.zeros(n_comp)
    for comp in range(n_comp):
        in_comp = labels == comp
        component_has_fixed[comp] = bool(fixed_mask[in_comp].any())
        component_margins[comp] = (
            mag[in_comp].min() / scale if scale > 0 else 0.0
        )

    interior = np.array([], dtype=np.int64)
    if scale > 0:
        tri_min = _interpolant_minima(field.vectors[surface.triangles])
        corner_clear = ~fixed_mask[surface.triangles].any(axis=1)
        interior = np.nonzero(corner_clear & (tri_min <= threshold))[0]
        if interior.size:
            warnings.warn(
                f"{interior.size} triangles have interpolated minima below the "
                "fixed-point threshold without a fixed vertex; flags unchanged",
                stacklevel=2,
            )
    return FixedPointSet(
        vertices,
        component_has_fixed,
        component_margins,
        float(rel_tol),
        float(threshold),
        interior,
    )


def write_field_csv(field, path):
    """Write a field as ``index,v0,v1,v2`` rows; chart fields pad with 0."""
    vec = field.vectors
    if vec.shape[1] == 2:
        vec = np.column_stack([vec, np.zeros(len(vec))])
    lines = [f"# tangent field {field.label or 'unnamed'}", "index,v0,v1,v2"]
    for i, row in enumerate(vec):
        lines.append(f"{i},{float(row[0])!r},{float(row[1])!r},{float(row[2])!r}")
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def read_field_csv(surface, path, label=None):
    """Read a sampled field written by ``write_field_csv``.

    Every vertex must appear exactly once; on chart surfaces the third
    component must vanish (it is a pad, not data).  The result is marked
    ``sampled``, which widens the default fixed-point tolerance.
    """
    table = np.loadtxt(
        path, delimiter=",", comments="#", skiprows=2, ndmin=2, dtype=float
    )
    if table.shape[1] != 4:
        raise ValueError("field CSV needs rows of index plus three components")
    idx = table[:, 0].astype(np.int64)
    if not np.array_equal(np.sort(idx), np.arange(surface.n_vertices)):
        raise ValueError("field CSV must cover every vertex index exactly once")
    vec = np.zeros((surface.n_vertices, 3))
    vec[idx] = table[:, 1:]
    if not surface.is_embedded:
        pad = np.abs(vec[:, 2]).max()
        if pad > 1e-12 * max(np.abs(vec).max(), 1.0):
            raise ValueError("chart fields must have zero third component")
        vec = vec[:, :2]
    return TangentField(surface, vec, label=label, sampled=True)
