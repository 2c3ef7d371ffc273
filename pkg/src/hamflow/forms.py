"""Cochains, weighted inner products, and first-order Whitney operators.

Degree-0 cochains hold vertex values, degree 1 edge integrals along the
canonical low-to-high orientation, degree 2 triangle integrals.  A measure
density assigns positive vertex weights (edge and triangle weights are the
arithmetic means of their incident vertices); the weighted mass matrices
make the codifferential the exact matrix adjoint of the exterior
derivative, so the discrete integration-by-parts identity holds to
round-off by construction.

The rotation operator on 1-cochains follows the convention that a
compatible rotation J acts on tangent vectors by +90 degrees in the
oriented tangent plane and on covectors through (J beta)(X) = beta(J X),
which rotates the covector's vector proxy by -90 degrees.  The discrete
operator Whitney-interpolates, rotates the per-triangle average, restricts
back to edges, and area-averages across the two triangles of each edge; it
squares to -I only up to a mesh-dependent defect, which callers should
treat as O(h) data rather than an identity.
"""

from __future__ import annotations

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import splu

from .mesh import SimplicialSurface

__all__ = [
    "Cochain",
    "MeasureDensity",
    "CompatibleTriple",
    "TangentField",
    "build_triple",
    "d",
    "de_rham",
    "inner",
    "norm",
    "codifferential",
    "flat",
    "j_apply",
    "contract_omega",
    "pullback",
    "write_cochain_csv",
    "cochain_to_vtk_data",
]


class Cochain:
    """Values of a discrete k-form on the k-simplices of a surface."""

    def __init__(self, surface, degree, values):
        if degree not in (0, 1, 2):
            raise ValueError("degree must be 0, 1, or 2")
        expected = (surface.n_vertices, surface.n_edges, surface.n_triangles)[degree]
        values = np.asarray(values, dtype=float)
        if values.shape != (expected,):
            raise ValueError(
                f"degree {degree} cochain needs shape ({expected},), got {values.shape}"
            )
        self.surface = surface
        self.degree = degree
        self.values = values

    @classmethod
    def zeros(cls, surface, degree):
        n = (surface.n_vertices, surface.n_edges, surface.n_triangles)[degree]
        return cls(surface, degree, np.zeros(n))

    def copy(self):
        return Cochain(self.surface, self.degree, self.values.copy())

    def _binary(self, other, op):
        if not isinstance(other, Cochain):
            return NotImplemented
        if other.surface is not self.surface or other.degree != self.degree:
            raise ValueError("cochains live on different spaces")
        return Cochain(self.surface, self.degree, op(self.values, other.values))

    def __add__(self, other):
        return self._binary(other, np.add)

    def __sub__(self, other):
        return self._binary(other, np.subtract)

    def __mul__(self, scalar):
        return Cochain(self.surface, self.degree, self.values * float(scalar))

    __rmul__ = __mul__

    def __neg__(self):
        return Cochain(self.surface, self.degree, -self.values)

    def __repr__(self):
        return f"Cochain(degree={self.degree}, n={self.values.size})"


class MeasureDensity:
    """A positive vertex density defining the weighted measure.

    Edge and triangle weights are the arithmetic means of the incident
    vertex weights.  ``condition_ratio`` (max over min weight) is the
    conditioning figure quoted by the robustness guarantees.
    """

    def __init__(self, surface, vertex_weights):
        w = np.asarray(vertex_weights, dtype=float)
        if w.shape != (surface.n_vertices,):
            raise ValueError(
                f"vertex weights need shape ({surface.n_vertices},), got {w.shape}"
            )
        if not np.isfinite(w).all() or w.min() <= 0:
            raise ValueError("density weights must be positive and finite")
        self.surface = surface
        self.vertex_weights = w
        self.edge_weights = w[surface.edges].mean(axis=1)
        self.triangle_weights = w[surface.triangles].mean(axis=1)

    @classmethod
    def uniform(cls, surface):
        return cls(surface, np.ones(surface.n_vertices))

    @classmethod
    def from_potential(cls, surface, potential):
        """Density exp(-U) from vertex values of a potential U."""
        return cls(surface, np.exp(-np.asarray(potential, dtype=float)))

    @property
    def condition_ratio(self):
        return float(self.vertex_weights.max() / self.vertex_weights.min())

    def __repr__(self):
        return f"MeasureDensity(condition_ratio={self.condition_ratio:.3g})"


# Directed local edges of a triangle: (corner u, corner v) for columns of
# tri_edges, i.e. (v0,v1), (v1,v2), (v2,v0).
_LOC_U = np.array([0, 1, 2])
_LOC_V = np.array([1, 2, 0])


def _barycentric_gradients(surface):
    """Per-triangle gradients of the corner hat functions, local 2D frame."""
    q = surface.corners_2d
    area = surface.areas
    grads = np.empty((surface.n_triangles, 3, 2))
    for k in range(3):
        opp = q[:, (k + 2) % 3] - q[:, (k + 1) % 3]
        grads[:, k, 0] = -opp[:, 1]
        grads[:, k, 1] = opp[:, 0]
    grads /= (2.0 * area)[:, None, None]
    return grads


class CompatibleTriple:
    """Weighted mass matrices, the area 2-cochain, and the rotation operator.

    Parameters
    ----------
    surface : SimplicialSurface
    density : MeasureDensity, optional
        Defaults to the uniform density.

    Attributes
    ----------
    m0 : diagonal sparse matrix, lumped weighted vertex areas.
    m1 : sparse SPD Whitney mass matrix with per-triangle density weights.
    m2 : diagonal sparse matrix, density over area per triangle.
    omega : Cochain of degree 2 holding plain triangle areas (density-free).
    j_matrix : sparse operator applying the edge rotation.
    """

    def __init__(self, surface, density=None):
        if density is None:
            density = MeasureDensity.uniform(surface)
        if density.surface is not surface:
            raise ValueError("density belongs to a different surface")
        self.surface = surface
        self.density = density
        self.h_max = surface.h_max

        self.m0_diag = density.vertex_weights * surface.vertex_areas
        self.m0 = sp.diags(self.m0_diag)
        self.m2_diag = density.triangle_weights / surface.areas
        self.m2 = sp.diags(self.m2_diag)
        self.omega = Cochain(surface, 2, surface.areas.copy())

        grads = _barycentric_gradients(surface)
        gram = np.einsum("tad,tbd->tab", grads, grads)
        # Whitney 1-form products integrate to combinations of the hat
        # gradients weighted by A/12; u,v index the directed local edges.
        cus = 1.0 + (_LOC_U[:, None] == _LOC_U[None, :])
        cut = 1.0 + (_LOC_U[:, None] == _LOC_V[None, :])
        cvs = 1.0 + (_LOC_V[:, None] == _LOC_U[None, :])
        cvt = 1.0 + (_LOC_V[:, None] == _LOC_V[None, :])
        g_vt = gram[:, _LOC_V[:, None], _LOC_V[None, :]]
        g_vs = gram[:, _LOC_V[:, None], _LOC_U[None, :]]
        g_ut = gram[:, _LOC_U[:, None], _LOC_V[None, :]]
        g_us = gram[:, _LOC_U[:, None], _LOC_U[None, :]]
        local = cus * g_vt - cut * g_vs - cvs * g_ut + cvt * g_us
        local *= (surface.areas / 12.0 * density.triangle_weights)[:, None, None]
        signs = surface.tri_edge_signs.astype(float)
        local *= signs[:, :, None] * signs[:, None, :]
        rows = np.repeat(surface.tri_edges, 3, axis=1).ravel()
        cols = np.tile(surface.tri_edges, (1, 3)).ravel()
        self.m1 = sp.csr_matrix(
            (local.ravel(), (rows, cols)),
            shape=(surface.n_edges, surface.n_edges),
        )

        self.j_matrix = self._assemble_j(grads)
        self._m1_lu = None
        self._l0 = None
        self._m1_pairs = None

    def m1_symmetric_pairs(self):
        """Strictly-upper COO entries of m1 plus its diagonal.

        Backing data for the pairing evaluation in :func:`inner`, which
        sums each off-diagonal entry against the symmetrized product so
        the result is bit-identical under argument swap.
        """
        if self._m1_pairs is None:
            coo = sp.triu(self.m1, k=1).tocoo()
            self._m1_pairs = (coo.row, coo.col, coo.data, self.m1.diagonal())
        return self._m1_pairs

    def _assemble_j(self, grads):
        surface = self.surface
        # Average of the Whitney interpolant over a triangle, per local edge.
        base = (grads[:, _LOC_V] - grads[:, _LOC_U]) / 3.0
        signs = surface.tri_edge_signs.astype(float)
        base *= signs[:, :, None]
        # Covector proxies rotate by -90 degrees: (x, y) -> (y, -x).
        rot = np.empty_like(base)
        rot[:, :, 0] = base[:, :, 1]
        rot[:, :, 1] = -base[:, :, 0]
        evec = surface.corners_2d[:, _LOC_V] - surface.corners_2d[:, _LOC_U]
        evec = evec * signs[:, :, None]
        # local[t, beta, alpha]: edge beta value from unit cochain on alpha.
        local = np.einsum("tbd,tad->tba", evec, rot)
        pair_area = (
            surface.areas[surface.tri_left] + surface.areas[surface.tri_right]
        )
        weight = surface.areas[:, None] / pair_area[surface.tri_edges]
        local *= weight[:, :, None]
        rows = np.repeat(surface.tri_edges, 3, axis=1).ravel()
        cols = np.tile(surface.tri_edges, (1, 3)).ravel()
        return sp.csr_matrix(
            (local.ravel(), (rows, cols)),
            shape=(surface.n_edges, surface.n_edges),
        )

    @property
    def m1_solver(self):
        """Factorized solve with M1, refined toward machine precision."""
        if self._m1_lu is None:
            lu = splu(self.m1.tocsc())
            m1 = self.m1

            def solve(b):
                x = lu.solve(b)
                for _ in range(2):
                    r = b - m1 @ x
                    x = x + lu.solve(r)
                return x

            self._m1_lu = solve
        return self._m1_lu

    @property
    def weighted_laplacian0(self):
        """The SPD matrix of the weighted 0-form Poisson problem."""
        if self._l0 is None:
            d0 = self.surface.d0
            self._l0 = (d0.T @ self.m1 @ d0).tocsr()
        return self._l0

    def mass(self, degree):
        return (self.m0, self.m1, self.m2)[degree]

    def j_squared_defect(self):
        """1-norm estimate of ||J J + I||, the almost-complex defect."""
        n = self.surface.n_edges
        op = self.j_matrix @ self.j_matrix + sp.identity(n)
        return float(sp.linalg.onenormest(op.tocsc()))


_TRIPLE_CACHE = {}


def build_triple(surface, density=None):
    """Return the CompatibleTriple for a surface and density, cached by
    object identity.  Densities are treated as immutable."""
    key = (id(surface), id(density))
    hit = _TRIPLE_CACHE.get(key)
    if hit is not None and hit.surface is surface and (
        density is None or hit.density is density
    ):
        return hit
    triple = CompatibleTriple(surface, density)
    _TRIPLE_CACHE[key] = triple
    return triple


def _resolve_triple(surface, weighting):
    if weighting is None:
        return build_triple(surface, None)
    if isinstance(weighting, CompatibleTriple):
        if weighting.surface is not surface:
            raise ValueError("triple belongs to a different surface")
        return weighting
    if isinstance(weighting, MeasureDensity):
        return build_triple(surface, weighting)
    raise TypeError("expected a MeasureDensity, CompatibleTriple, or None")


# ---------------------------------------------------------------------------
# exterior derivative and de Rham map


def d(cochain):
    """Exterior derivative via exact signed incidence; d(d(f)) is exactly 0."""
    s = cochain.surface
    if cochain.degree == 0:
        return Cochain(s, 1, s.d0 @ cochain.values)
    if cochain.degree == 1:
        return Cochain(s, 2, s.d1 @ cochain.values)
    raise ValueError("no exterior derivative above the top degree")


_TRI_RULES = {
    1: [((1 / 3, 1 / 3, 1 / 3), 1.0)],
    2: [
        ((2 / 3, 1 / 6, 1 / 6), 1 / 3),
        ((1 / 6, 2 / 3, 1 / 6), 1 / 3),
        ((1 / 6, 1 / 6, 2 / 3), 1 / 3),
    ],
    3: [
        ((1 / 3, 1 / 3, 1 / 3), -27 / 48),
        ((0.6, 0.2, 0.2), 25 / 48),
        ((0.2, 0.6, 0.2), 25 / 48),
        ((0.2, 0.2, 0.6), 25 / 48),
    ],
}


def _symmetric_rule(interior, weights):
    pts = []
    for (a, b), w in zip(interior, weights):
        if a == b:
            pts.append(((a, a, 1 - 2 * a), w))
            pts.append(((a, 1 - 2 * a, a), w))
            pts.append(((1 - 2 * a, a, a), w))
        else:
            pts.append(((a, b, b), w))
            pts.append(((b, a, b), w))
            pts.append(((b, b, a), w))
    return pts


_TRI_RULES[4] = _symmetric_rule(
    [(0.108103018168070, 0.445948490915965), (0.816847572980459, 0.091576213509771)],
    [0.223381589678011, 0.109951743655322],
)
_TRI_RULES[5] = [((1 / 3, 1 / 3, 1 / 3), 0.225)] + _symmetric_rule(
    [(0.059715871789770, 0.470142064105115), (0.797426985353087, 0.101286507323456)],
    [0.132394152788506, 0.125939180544827],
)


def _edge_rule(order):
    nodes, weights = np.polynomial.legendre.leggauss((order + 2) // 2)
    return (nodes + 1.0) / 2.0, weights / 2.0


def _edge_geometry(surface):
    if surface.is_embedded:
        p = surface.vertices
        start = p[surface.edges[:, 0]]
        vec = p[surface.edges[:, 1]] - start
    elif surface.chart is not None:
        start = surface.chart[surface.edges[:, 0]]
        vec = surface.edge_lifts
    else:
        raise ValueError("surface has no coordinates for analytic evaluation")
    return start, vec


def _eval_points(surface, pts):
    if surface.chart is not None and not surface.is_embedded:
        return np.mod(pts, 1.0)
    return pts


def de_rham(form, surface, degree, order=3):
    """Integrate an analytic form over the k-simplices by Gauss quadrature.

    Parameters
    ----------
    form : callable
        For degree 1, maps an (n, dim) array of points to (n, dim) covector
        components (dim 3 for embedded surfaces, 2 for chart tori).  For
        degree 2, maps points to the scalar coefficient of the metric area
        form.  Chart points are wrapped into the unit square before
        evaluation.
    degree : {1, 2}
        Degree 0 has no integral to take; pass vertex samples directly.
    order : int
        Polynomial exactness degree of the rule, 1 through 5.
    """
    order = int(order)
    if order not in _TRI_RULES:
        raise ValueError("quadrature order must be between 1 and 5")
    if degree == 0:
        raise ValueError("degree 0 cochains are point samples, not integrals")
    if degree == 1:
        start, vec = _edge_geometry(surface)
        nodes, weights = _edge_rule(order)
        total = np.zeros(surface.n_edges)
        for t, w in zip(nodes, weights):
            pts = _eval_points(surface, start + t * vec)
            values = np.asarray(form(pts), dtype=float)
            total += w * np.einsum("ed,ed->e", values, vec)
        return Cochain(surface, 1, total)
    if degree == 2:
        if surface.is_embedded:
            corners = surface.vertices[surface.triangles]
        elif surface.chart is not None:
            base = surface.chart[surface.triangles[:, 0]]
            corners = base[:, None, :] + np.concatenate(
                [np.zeros((surface.n_triangles, 1, 2)), surface.corners_2d[:, 1:]],
                axis=1,
            )
        else:
            raise ValueError("surface has no coordinates for analytic evaluation")
        total = np.zeros(surface.n_triangles)
        for bary, w in _TRI_RULES[order]:
            pts = np.einsum("k,tkd->td", np.asarray(bary), corners)
            values = np.asarray(form(_eval_points(surface, pts)), dtype=float)
            total += w * values
        return Cochain(surface, 2, total * surface.areas)
    raise ValueError("degree must be 1 or 2")


# ---------------------------------------------------------------------------
# weighted inner product and codifferential


def inner(a, b, weighting=None):
    """Weighted L2 pairing of two cochains of equal degree.

    Evaluated so that inner(a, b) == inner(b, a) bitwise: diagonal masses
    contract elementwise products, and the Whitney matrix is summed over
    symmetrized off-diagonal pairs.  A plain matvec breaks the identity
    at the last ulp because float addition does not associate.
    """
    if a.surface is not b.surface or a.degree != b.degree:
        raise ValueError("cochains live on different spaces")
    triple = _resolve_triple(a.surface, weighting)
    av, bv = a.values, b.values
    if a.degree == 0:
        return float(np.dot(av * bv, triple.m0_diag))
    if a.degree == 2:
        return float(np.dot(av * bv, triple.m2_diag))
    ui, uj, uv, dv = triple.m1_symmetric_pairs()
    off = np.dot(uv, av[ui] * bv[uj] + av[uj] * bv[ui])
    return float(off + np.dot(dv, av * bv))


def norm(a, weighting=None):
    """Weighted L2 norm of a cochain."""
    return float(np.sqrt(max(inner(a, a, weighting), 0.0)))


def codifferential(cochain, weighting=None):
    """Adjoint of d in the weighted inner products, one degree down.

    Degree 1 uses the diagonal vertex mass directly; degree 2 solves with
    the Whitney matrix through a cached factorization refined to machine
    precision, so the adjointness identity holds at round-off level.
    """
    triple = _resolve_triple(cochain.surface, weighting)
    s = cochain.surface
    if cochain.degree == 1:
        rhs = s.d0.T @ (triple.m1 @ cochain.values)
        return Cochain(s, 0, rhs / triple.m0_diag)
    if cochain.degree == 2:
        rhs = s.d1.T @ (triple.m2_diag * cochain.values)
        return Cochain(s, 1, triple.m1_solver(rhs))
    raise ValueError("degree 0 has no codifferential")


# ---------------------------------------------------------------------------
# fields, rotation, contraction


class TangentField:
    """A vertex-sampled tangent field, optionally with analytic attachments.

    ``vectors`` holds (V, 3) ambient vectors in the vertex tangent planes
    on embedded surfaces, or (V, 2) chart components on intrinsic tori.
    When closed-form expressions exist they ride along: ``analytic`` maps
    evaluation points to field vectors, ``contraction_form`` maps them to
    the covector of the pointwise area-form contraction, which lets
    ``contract_omega`` integrate the contraction exactly up to quadrature
    instead of rotating a sampled proxy.  ``sampled`` marks imported data
    and widens the default fixed-point tolerance downstream.

    Fields form a vector space: +, -, and scalar multiples combine the
    samples and, when all operands carry them, the analytic attachments.
    """

    def __init__(
        self,
        surface,
        vectors,
        label=None,
        analytic=None,
        contraction_form=None,
        sampled=False,
        tangency_tol=1e-10,
    ):
        vectors = np.asarray(vectors, dtype=float)
        if surface.is_embedded:
            if vectors.shape != (surface.n_vertices, 3):
                raise ValueError("embedded field needs (V, 3) vectors")
            scale = np.abs(vectors).max()
            if scale > 0 and surface.vertex_normals is not None:
                normal_part = np.abs(
                    np.einsum("vd,vd->v", vectors, surface.vertex_normals)
                )
                worst = normal_part.max() / scale
                if worst > tangency_tol:
                    raise ValueError(
                        f"field is not tangent (relative normal component {worst:.3g})"
                    )
        elif surface.chart is not None:
            if vectors.shape != (surface.n_vertices, 2):
                raise ValueError("chart field needs (V, 2) vectors")
        else:
            raise ValueError("surface has no frames for tangent fields")
        self.surface = surface
        self.vectors = vectors
        self.label = label
        self.analytic = analytic
        self.contraction_form = contraction_form
        self.sampled = bool(sampled)

    def magnitudes(self):
        """Euclidean vector length at each vertex."""
        return np.linalg.norm(self.vectors, axis=1)

    @staticmethod
    def _combine_callables(fa, fb, ca, cb):
        if fa is None or fb is None:
            return None
        return lambda points: ca * fa(points) + cb * fb(points)

    def _linear(self, other, ca, cb, label):
        if other.surface is not self.surface:
            raise ValueError("fields live on different surfaces")
        return TangentField(
            self.surface,
            ca * self.vectors + cb * other.vectors,
            label=label,
            analytic=self._combine_callables(self.analytic, other.analytic, ca, cb),
            contraction_form=self._combine_callables(
                self.contraction_form, other.contraction_form, ca, cb
            ),
            sampled=self.sampled or other.sampled,
        )

    def __add__(self, other):
        label = (
            f"{self.label}+{other.label}" if self.label and other.label else None
        )
        return self._linear(other, 1.0, 1.0, label)

    def __sub__(self, other):
        label = (
            f"{self.label}-{other.label}" if self.label and other.label else None
        )
        return self._linear(other, 1.0, -1.0, label)

    def __mul__(self, scalar):
        c = float(scalar)
        analytic = None if self.analytic is None else (
            lambda points, f=self.analytic: c * f(points)
        )
        contraction = None if self.contraction_form is None else (
            lambda points, f=self.contraction_form: c * f(points)
        )
        return TangentField(
            self.surface,
            c * self.vectors,
            label=f"{c:g}*{self.label}" if self.label else None,
            analytic=analytic,
            contraction_form=contraction,
            sampled=self.sampled,
        )

    __rmul__ = __mul__

    def __neg__(self):
        return self * -1.0

    def __repr__(self):
        kind = "embedded" if self.surface.is_embedded else "chart"
        return f"TangentField({self.label or 'unnamed'}, {kind}, V={len(self.vectors)})"


def _field_components(field, triple):
    """Per-triangle corner components of a vertex field in local frames."""
    surface = triple.surface
    vec = field.vectors
    tris = surface.triangles
    if surface.is_embedded:
        corner_vec = vec[tris]
        u = np.einsum("tkd,td->tk", corner_vec, surface.triangle_frames[:, 0])
        v = np.einsum("tkd,td->tk", corner_vec, surface.triangle_frames[:, 1])
        return np.stack([u, v], axis=2)
    if surface.chart is not None:
        return vec[tris]
    raise ValueError("surface has no frames for tangent fields")


def flat(field, weighting=None, tangency_tol=1e-10):
    """Edge integrals of the metric dual of a vertex tangent field.

    Uses the trapezoidal rule: the mean of the endpoint vectors dotted with
    the edge vector (the chart lift on intrinsic tori).  Embedded fields
    must be tangent: the component along the stored vertex normal may not
    exceed ``tangency_tol`` relative to the largest vector.
    """
    triple = _resolve_triple(field.surface, weighting)
    surface = field.surface
    vec = field.vectors
    if surface.is_embedded:
        if vec.shape != (surface.n_vertices, 3):
            raise ValueError("embedded field needs (V, 3) vectors")
        scale = np.abs(vec).max()
        if scale > 0 and surface.vertex_normals is not None:
            normal_part = np.abs(np.einsum("vd,vd->v", vec, surface.vertex_normals))
            worst = normal_part.max() / scale
            if worst > tangency_tol:
                raise ValueError(
                    f"field is not tangent (relative normal component {worst:.3g})"
                )
        edge_vec = surface.vertices[surface.edges[:, 1]] - surface.vertices[surface.edges[:, 0]]
    elif surface.chart is not None:
        if vec.shape != (surface.n_vertices, 2):
            raise ValueError("chart field needs (V, 2) vectors")
        edge_vec = surface.edge_lifts
    else:
        raise ValueError("surface has no frames for tangent fields")
    mean = (vec[surface.edges[:, 0]] + vec[surface.edges[:, 1]]) / 2.0
    return Cochain(surface, 1, np.einsum("ed,ed->e", mean, edge_vec))


def j_apply(cochain, weighting=None):
    """Rotate a 1-cochain by the discrete compatible rotation.

    Constant forms on chart-aligned grids rotate exactly; in general the
    result carries an O(h) interpolation defect, so downstream checks use
    h-scaled tolerances.
    """
    triple = _resolve_triple(cochain.surface, weighting)
    if cochain.degree != 1:
        raise ValueError("the rotation acts on 1-cochains")
    return Cochain(cochain.surface, 1, triple.j_matrix @ cochain.values)


def contract_omega(field, weighting=None, mode="direct", order=3):
    """The 1-cochain of the area form contracted with a tangent field.

    ``mode='direct'`` integrates the analytic contraction when the field
    carries one (exact up to quadrature), otherwise rotates a per-triangle
    constant proxy of the sampled field.  ``mode='via_j'`` computes
    -J(flat(field)); the two agree to O(h), which is the discrete trace of
    the identity relating contraction, rotation, and the metric dual.
    """
    triple = _resolve_triple(field.surface, weighting)
    surface = field.surface
    if mode == "via_j":
        return -j_apply(flat(field, triple), triple)
    if mode != "direct":
        raise ValueError("mode must be 'direct' or 'via_j'")

    contraction = getattr(field, "contraction_form", None)
    if contraction is not None:
        return de_rham(contraction, surface, 1, order=order)

    comp = _field_components(field, triple)
    xi = comp.mean(axis=1)
    # omega(xi, .) has vector proxy J xi with J the +90 degree rotation.
    rot = np.column_stack([-xi[:, 1], xi[:, 0]])
    signs = surface.tri_edge_signs.astype(float)
    evec = surface.corners_2d[:, _LOC_V] - surface.corners_2d[:, _LOC_U]
    per_tri = np.einsum("tkd,td->tk", evec, rot) * signs
    pair_area = surface.areas[surface.tri_left] + surface.areas[surface.tri_right]
    weight = surface.areas[:, None] / pair_area[surface.tri_edges]
    values = np.zeros(surface.n_edges)
    np.add.at(values, surface.tri_edges.ravel(), (per_tri * weight).ravel())
    return Cochain(surface, 1, values)


def pullback(cochain, automorphism):
    """Pull a cochain back along a simplicial automorphism.

    (phi^* c)(sigma) = c(phi(sigma)) with the orientation sign of the
    simplex image; commutes with d exactly because both are pure indexing.
    """
    phi = automorphism
    if phi.surface is not cochain.surface:
        raise ValueError("automorphism acts on a different surface")
    if cochain.degree == 0:
        return Cochain(cochain.surface, 0, cochain.values[phi.vertex_perm])
    if cochain.degree == 1:
        return Cochain(
            cochain.surface, 1, phi.edge_signs * cochain.values[phi.edge_perm]
        )
    return Cochain(cochain.surface, 2, phi.tri_signs * cochain.values[phi.tri_perm])


# ---------------------------------------------------------------------------
# export


def write_cochain_csv(cochain, path):
    """Write a cochain as ``index,value`` rows with a degree header."""
    lines = [f"# degree {cochain.degree}", "index,value"]
    for i, v in enumerate(cochain.values):
        lines.append(f"{i},{float(v)!r}")
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def cochain_to_vtk_data(cochain, weighting=None):
    """Map a cochain to VTK data arrays understood by ``mesh.save_vtk``.

    Degree 0 becomes point scalars and degree 2 cell scalars.  Degree 1 is
    visualized as the per-triangle Whitney average vector (embedded in the
    triangle frames), returned as cell vectors.
    """
    if cochain.degree == 0:
        return {"point_data": {"value": cochain.values}}
    if cochain.degree == 2:
        return {"cell_data": {"value": cochain.values}}
    triple = _resolve_triple(cochain.surface, weighting)
    surface = cochain.surface
    grads = _barycentric_gradients(surface)
    base = (grads[:, _LOC_V] - grads[:, _LOC_U]) / 3.0
    base *= surface.tri_edge_signs[:, :, None]
    local = np.einsum(
        "tk,tkd->td", cochain.values[surface.tri_edges], base
    )
    if surface.is_embedded:
        world = np.einsum("tfd,tf->td", surface.triangle_frames, local)
    else:
        world = local
    return {"cell_vectors": {"value": world}}
