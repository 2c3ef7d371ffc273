"""Weighted Hodge decomposition of closed 1-cochains and harmonic bases.

The decomposition splits a closed 1-cochain into an exact part and a
harmonic remainder, orthogonally in the weighted inner product.  The
harmonic space (kernel of d intersected with the kernel of the weighted
codifferential) has dimension equal to the first Betti number for every
admissible density; representatives are found by projecting integer
cohomology cocycles built from a spanning tree and cotree, then
orthonormalized by modified Gram-Schmidt in the weighted metric.

The Poisson solves use conjugate gradients with diagonal preconditioning
(relative residual 1e-12 or tighter, iteration cap 10 V) followed by a
refinement pass, and fix the additive gauge to weighted mean zero per
connected component.  All tie-breaks are by simplex index, so results are
deterministic.
"""

from __future__ import annotations

from collections import deque

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import cg, eigsh
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from .forms import (
    Cochain,
    MeasureDensity,
    _resolve_triple,
    codifferential,
    d,
    inner,
    j_apply,
    norm,
)

__all__ = [
    "SolverError",
    "HodgeResult",
    "HarmonicBasis",
    "KernelIdentityReport",
    "decompose_closed",
    "harmonic_basis",
    "harmonic_project",
    "j_invariance_defect",
    "laplacian0_kernel_dim",
    "kernel_identity_check",
    "HodgeDecomposition",
]


class SolverError(RuntimeError):
    """A linear solve failed to reach its residual target."""


def _component_masks(surface):
    labels = surface.component_labels
    return [labels == c for c in range(surface.n_components)]


def _gauge_mean_zero(values, triple):
    """Subtract the weighted mean on each connected component."""
    out = values.copy()
    w = triple.m0_diag
    for mask in _component_masks(triple.surface):
        out[mask] -= np.dot(w[mask], out[mask]) / w[mask].sum()
    return out


def solve_poisson(triple, rhs, rtol=1e-12, maxiter_factor=10):
    """Solve the weighted 0-form Poisson problem L f = rhs.

    The matrix is singular with constants per component in its kernel; the
    right side coming from d-transpose data is consistent exactly, and the
    returned solution is gauged to weighted mean zero per component.
    """
    surface = triple.surface
    lap = triple.weighted_laplacian0
    masks = _component_masks(surface)

    def deflate(v):
        # Project out the kernel (constants per component); round-off in
        # the right side would otherwise make CG drift along the kernel.
        out = v.copy()
        for mask in masks:
            out[mask] -= out[mask].mean()
        return out

    rhs = deflate(rhs)
    scale = float(np.linalg.norm(rhs))
    if scale == 0.0:
        return np.zeros(surface.n_vertices)
    diag = lap.diagonal()
    precond = sp.diags(1.0 / np.where(diag > 0, diag, 1.0))
    maxiter = maxiter_factor * surface.n_vertices
    x, info = cg(lap, rhs, rtol=min(rtol, 1e-13), atol=0.0, maxiter=maxiter, M=precond)
    if info < 0:
        raise SolverError("conjugate gradients broke down on the weighted Laplacian")
    x = deflate(x)
    residual = rhs - lap @ x
    if np.linalg.norm(residual) > 1e-14 * scale:
        dx, info2 = cg(
            lap, deflate(residual), rtol=1e-2, atol=0.0, maxiter=maxiter, M=precond
        )
        if info2 >= 0:
            candidate = deflate(x + dx)
            refined = rhs - lap @ candidate
            if np.linalg.norm(refined) < np.linalg.norm(residual):
                x, residual = candidate, refined
    if np.linalg.norm(residual) > rtol * scale:
        raise SolverError(
            "weighted Laplacian solve stalled at relative residual "
            f"{np.linalg.norm(residual) / scale:.3g} (target {rtol:.3g})"
        )
    return _gauge_mean_zero(x, triple)


class HodgeResult:
    """Orthogonal splitting of a closed 1-cochain.

    Attributes
    ----------
    potential : degree-0 Cochain f with weighted mean zero per component.
    harmonic : degree-1 Cochain, the input minus d(potential).
    residuals : dict of relative diagnostics (input closedness, harmonic
        closedness and coexactness, orthogonality of the two parts).
    """

    def __init__(self, potential, harmonic, residuals):
        self.potential = potential
        self.harmonic = harmonic
        self.residuals = residuals

    def __repr__(self):
        rs = ", ".join(f"{k}={v:.2e}" for k, v in self.residuals.items())
        return f"HodgeResult({rs})"


def decompose_closed(alpha, weighting=None, closed_tol=1e-8, solver_rtol=1e-12):
    """Split a closed 1-cochain into exact and harmonic parts.

    Parameters
    ----------
    alpha : degree-1 Cochain with ``|d alpha| <= closed_tol * |alpha|``.
    weighting : MeasureDensity or CompatibleTriple, optional.
    closed_tol : float
        Relative closedness gate on the input.
    solver_rtol : float
        Residual target of the Poisson solve.

    Returns
    -------
    HodgeResult
    """
    if alpha.degree != 1:
        raise ValueError("decompose_closed expects a 1-cochain")
    triple = _resolve_triple(alpha.surface, weighting)
    surface = alpha.surface
    alpha_norm = norm(alpha, triple)
    if alpha_norm > 0:
        closed_defect = norm(d(alpha), triple) / alpha_norm
        if closed_defect > closed_tol:
            raise ValueError(
                f"input is not closed (relative d-residual {closed_defect:.3g} "
                f"exceeds {closed_tol:.3g})"
            )
    else:
        closed_defect = 0.0
    rhs = surface.d0.T @ (triple.m1 @ alpha.values)
    f = solve_poisson(triple, rhs, rtol=solver_rtol)
    potential = Cochain(surface, 0, f)
    chi = Cochain(surface, 1, alpha.values - surface.d0 @ f)
    denom = alpha_norm if alpha_norm > 0 else 1.0
    residuals = {
        "input_closedness": closed_defect,
        "harmonic_closedness": norm(d(chi), triple) / denom,
        "harmonic_coexactness": norm(codifferential(chi, triple), triple) / denom,
        "orthogonality": abs(inner(d(potential), chi, triple)) / denom**2,
    }
    return HodgeResult(potential, chi, residuals)


# ---------------------------------------------------------------------------
# cohomology cocycles from a spanning tree and cotree


def _spanning_forest(n_nodes, edge_nodes, n_edges, allowed, start_offset):
    """BFS forest over nodes using allowed edges in index order.

    Returns (in_forest mask, parent_node, parent_edge, depth).
    """
    adjacency = [[] for _ in range(n_nodes)]
    for e in range(n_edges):
        if not allowed[e]:
            continue
        u, v = edge_nodes[e]
        adjacency[u].append((e, v))
        adjacency[v].append((e, u))

    in_forest = np.zeros(n_edges, dtype=bool)
    parent_node = np.full(n_nodes, -1, dtype=np.int64)
    parent_edge = np.full(n_nodes, -1, dtype=np.int64)
    depth = np.full(n_nodes, -1, dtype=np.int64)
    order = np.roll(np.arange(n_nodes), -int(start_offset) % max(n_nodes, 1))
    for seed in order:
        if depth[seed] >= 0:
            continue
        depth[seed] = 0
        queue = deque([seed])
        while queue:
            node = queue.popleft()
            for e, nxt in adjacency[node]:
                if depth[nxt] >= 0:
                    continue
                depth[nxt] = depth[node] + 1
                parent_node[nxt] = node
                parent_edge[nxt] = e
                in_forest[e] = True
                queue.append(nxt)
    return in_forest, parent_node, parent_edge, depth


def homology_cocycles(surface, tree_offset=0):
    """Integer closed 1-cochains generating the degree-1 cohomology.

    Builds a spanning tree of the vertex graph, then a spanning cotree of
    the triangle adjacency using only edges not in the tree; the leftover
    edges (one per independent cycle class, 2 genus in total) each close a
    loop in the cotree, and the signed crossing counts of that loop form a
    cocycle.  Ties are broken by simplex index; ``tree_offset`` rotates the
    starting simplex for the rare retry after a rank-deficiency report.
    """
    n_e = surface.n_edges
    tree, _, _, _ = _spanning_forest(
        surface.n_vertices, surface.edges, n_e, np.ones(n_e, dtype=bool), tree_offset
    )
    dual_nodes = np.column_stack([surface.tri_left, surface.tri_right])
    cotree, parent_tri, parent_edge, depth = _spanning_forest(
        surface.n_triangles, dual_nodes, n_e, ~tree, tree_offset
    )
    leftover = np.nonzero(~tree & ~cotree)[0]

    d1 = surface.d1.tocsr()

    def entry_sign(tri, e):
        # +1 when tri traverses e canonically, i.e. tri is its left triangle.
        return 1.0 if surface.tri_left[e] == tri else -1.0

    def climb(tri):
        path = []
        while parent_tri[tri] >= 0:
            path.append((tri, parent_edge[tri], parent_tri[tri]))
            tri = parent_tri[tri]
        return path, tri

    cocycles = []
    for x in leftover:
        z = np.zeros(n_e)
        t_left = surface.tri_left[x]
        t_right = surface.tri_right[x]
        # Cross x from its right triangle into its left one, then return
        # through the cotree.  Each crossing into a triangle S over edge e
        # adds the incidence sign of (S, e), which makes d z vanish.
        z[x] += entry_sign(t_left, x)
        up_a, root_a = climb(t_left)
        up_b, root_b = climb(t_right)
        if root_a != root_b:
            raise SolverError("cotree is disconnected within a component")
        # Trim the shared tail above the lowest common ancestor; forest
        # parents are unique, so equal children force identical steps.
        while up_a and up_b and up_a[-1][0] == up_b[-1][0]:
            up_a.pop()
            up_b.pop()
        for _, e, parent in up_a:
            z[e] += entry_sign(parent, e)
        for child, e, _ in reversed(up_b):
            z[e] += entry_sign(child, e)
        closure = np.abs(d1 @ z).max() if n_e else 0.0
        if closure != 0.0:
            raise SolverError("cocycle construction failed to close")
        cocycles.append(z)
    return cocycles


# ---------------------------------------------------------------------------
# harmonic basis


class HarmonicBasis:
    """A weighted-orthonormal basis of the harmonic 1-cochain space.

    Attributes
    ----------
    elements : list of degree-1 Cochains, orthonormal in the weighted
        metric.
    matrix : (E, dim) array with the elements as columns.
    triple : the CompatibleTriple the basis is orthonormal against.
    gram_defect : max deviation of the Gram matrix from the identity.
    residuals : list of per-element dicts (closedness, coexactness).
    """

    def __init__(self, triple, elements, residuals):
        self.triple = triple
        self.surface = triple.surface
        self.elements = elements
        self.matrix = (
            np.column_stack([e.values for e in elements])
            if elements
            else np.zeros((triple.surface.n_edges, 0))
        )
        self.residuals = residuals
        gram = self.matrix.T @ (triple.m1 @ self.matrix)
        self.gram_defect = (
            float(np.abs(gram - np.eye(self.dimension)).max()) if elements else 0.0
        )

    @property
    def dimension(self):
        return len(self.elements)

    def coefficients(self, alpha):
        """Weighted inner products of a 1-cochain with each basis element."""
        if alpha.degree != 1 or alpha.surface is not self.surface:
            raise ValueError("cochain does not live on the basis surface")
        return self.matrix.T @ (self.triple.m1 @ alpha.values)

    def combination(self, coeffs):
        coeffs = np.asarray(coeffs, dtype=float)
        if coeffs.shape != (self.dimension,):
            raise ValueError(f"expected {self.dimension} coefficients")
        return Cochain(self.surface, 1, self.matrix @ coeffs)

    def project(self, alpha):
        """(coefficients, harmonic projection) of a 1-cochain."""
        coeffs = self.coefficients(alpha)
        return coeffs, self.combination(coeffs)


def harmonic_basis(surface, weighting=None, solver_rtol=1e-12, tree_offset=0):
    """Orthonormal harmonic 1-cochains spanning ker d within ker delta.

    The dimension equals the first Betti number (twice the total genus)
    for every admissible density.  Raises SolverError with a retry hint if
    the projected cocycles are numerically dependent, which signals a
    broken mesh rather than an expected failure mode.
    """
    triple = _resolve_triple(surface, weighting)
    cocycles = homology_cocycles(surface, tree_offset=tree_offset)
    raw = []
    for z in cocycles:
        result = decompose_closed(
            Cochain(surface, 1, z), triple, closed_tol=1e-12, solver_rtol=solver_rtol
        )
        raw.append(result.harmonic)

    elements = []
    residuals = []
    for chi in raw:
        before = norm(chi, triple)
        work = chi.values.copy()
        # Modified Gram-Schmidt, two passes for orthogonality at round-off.
        for _ in range(2):
            for e in elements:
                work -= inner(Cochain(surface, 1, work), e, triple) * e.values
        after = norm(Cochain(surface, 1, work), triple)
        if before == 0.0 or after <= 1e-8 * before:
            raise SolverError(
                "harmonic representatives are numerically dependent; retry "
                "with a different cotree order (tree_offset) or check the mesh"
            )
        unit = Cochain(surface, 1, work / after)
        elements.append(unit)
        residuals.append(
            {
                "closedness": norm(d(unit), triple),
                "coexactness": norm(codifferential(unit, triple), triple),
            }
        )
    return HarmonicBasis(triple, elements, residuals)


def harmonic_project(alpha, basis):
    """Coefficients and harmonic part of a 1-cochain in a harmonic basis."""
    return basis.project(alpha)


def j_invariance_defect(basis, weighting=None):
    """How far the rotation maps the harmonic space outside itself.

    Returns the worst relative distance of J(basis element) from its own
    projection back onto the harmonic span; zero when the harmonic space
    is J-invariant.  Genus-0 surfaces have an empty basis and defect 0.
    """
    if basis.dimension == 0:
        return 0.0
    triple = basis.triple if weighting is None else _resolve_triple(
        basis.surface, weighting
    )
    worst = 0.0
    for e in basis.elements:
        je = j_apply(e, triple)
        je_norm = norm(je, triple)
        if je_norm == 0.0:
            continue
        _, proj = basis.project(je)
        defect = norm(je - proj, triple) / je_norm
        worst = max(worst, defect)
    return worst


def laplacian0_kernel_dim(surface, weighting=None, rel_tol=1e-8):
    """Dimension of the weighted 0-form Laplacian kernel.

    Counted from connected components and cross-checked by a small
    shift-inverted eigensolve; a mismatch raises SolverError because it
    means the assembled operator contradicts the mesh topology.
    """
    triple = _resolve_triple(surface, weighting)
    expected = surface.n_components
    lap = triple.weighted_laplacian0.tocsc()
    n = surface.n_vertices
    k = min(expected + 2, n - 1)
    v0 = np.full(n, 1.0 / np.sqrt(n))
    scale = float(lap.diagonal().max())
    vals = eigsh(
        lap + 1e-8 * scale * sp.identity(n),
        k=k,
        sigma=0.0,
        which="LM",
        v0=v0,
        return_eigenvectors=False,
    )
    vals = np.sort(np.abs(vals)) - 1e-8 * scale
    counted = int(np.sum(vals < rel_tol * scale))
    if counted != expected:
        raise SolverError(
            f"kernel dimension {counted} from the eigensolve contradicts "
            f"{expected} connected components"
        )
    return expected


class KernelIdentityReport:
    """Residuals certifying harmonic elements sit in both kernels."""

    def __init__(self, dimension, element_residuals, separation, gram_defect):
        self.dimension = dimension
        self.element_residuals = element_residuals
        self.separation = separation
        self.gram_defect = gram_defect

    @property
    def max_residual(self):
        if not self.element_residuals:
            return 0.0
        return max(max(r.values()) for r in self.element_residuals)

    def __repr__(self):
        return (
            f"KernelIdentityReport(dim={self.dimension}, "
            f"max_residual={self.max_residual:.2e}, separation={self.separation:.2e})"
        )


def _laplacian1(c, triple):
    """Weighted 1-form Laplacian d delta + delta d applied to a 1-cochain."""
    up = codifferential(d(c), triple)
    down = d(codifferential(c, triple))
    return up + down


def kernel_identity_check(surface, weighting=None, basis=None, probe=None, seed=0):
    """Verify harmonic elements lie in ker d and ker delta jointly.

    Reports, per basis element, the relative closedness, coexactness, and
    full 1-form Laplacian residuals, plus a separation figure: the
    Laplacian residual of an exact probe d(g), which must stay far from
    zero (the kernels coincide only on the harmonic space).
    """
    triple = _resolve_triple(surface, weighting)
    if basis is None:
        basis = harmonic_basis(surface, triple)
    element_residuals = []
    for e in basis.elements:
        element_residuals.append(
            {
                "closedness": norm(d(e), triple),
                "coexactness": norm(codifferential(e, triple), triple),
                "laplacian": norm(_laplacian1(e, triple), triple),
            }
        )
    if probe is None:
        rng = np.random.default_rng(seed)
        g = Cochain(surface, 0, rng.standard_normal(surface.n_vertices))
        probe = d(g)
    probe_norm = norm(probe, triple)
    separation = (
        norm(_laplacian1(probe, triple), triple) / probe_norm if probe_norm else 0.0
    )
    return KernelIdentityReport(
        basis.dimension, element_residuals, separation, basis.gram_defect
    )


# ---------------------------------------------------------------------------
# estimator surface


class HodgeDecomposition(BaseEstimator, TransformerMixin):
    """Weighted Hodge analysis of closed 1-cochains in estimator form.

    ``fit`` assembles the weighted operators and the harmonic basis of a
    surface; ``transform`` maps rows of closed 1-cochain values to their
    harmonic coefficients, and ``inverse_transform`` rebuilds the harmonic
    representatives from coefficients.

    Parameters
    ----------
    density : None, array of vertex weights, or MeasureDensity
        Weighting measure; None means uniform.
    solver_rtol : float
        Relative residual target of the Poisson solves.
    closed_tol : float
        Closedness gate applied by ``decompose``.

    Attributes
    ----------
    surface_ : the fitted surface.
    density_ : resolved MeasureDensity.
    triple_ : assembled mass matrices and rotation.
    basis_ : HarmonicBasis.
    n_components_ : harmonic dimension (first Betti number).
    """

    def __init__(self, density=None, solver_rtol=1e-12, closed_tol=1e-8):
        self.density = density
        self.solver_rtol = solver_rtol
        self.closed_tol = closed_tol

    def _resolve_density(self, surface):
        if self.density is None:
            return MeasureDensity.uniform(surface)
        if isinstance(self.density, MeasureDensity):
            if self.density.surface is not surface:
                raise ValueError("density belongs to a different surface")
            return self.density
        return MeasureDensity(surface, np.asarray(self.density, dtype=float))

    def fit(self, X, y=None):
        """Assemble operators and the harmonic basis for a surface."""
        surface = X
        if not hasattr(surface, "n_edges"):
            raise TypeError("X must be a SimplicialSurface")
        self.surface_ = surface
        self.density_ = self._resolve_density(surface)
        self.triple_ = _resolve_triple(surface, self.density_)
        self.basis_ = harmonic_basis(
            surface, self.triple_, solver_rtol=self.solver_rtol
        )
        self.n_components_ = self.basis_.dimension
        return self

    def _as_rows(self, X):
        arr = np.asarray(X, dtype=float)
        single = arr.ndim == 1
        if single:
            arr = arr[None, :]
        if arr.ndim != 2 or arr.shape[1] != self.surface_.n_edges:
            raise ValueError(
                f"expected rows of length {self.surface_.n_edges}, got {arr.shape}"
            )
        return arr, single

    def transform(self, X):
        """Harmonic coefficients of closed 1-cochain rows, shape (n, dim)."""
        check_is_fitted(self)
        arr, single = self._as_rows(X)
        out = np.array(
            [
                self.basis_.coefficients(Cochain(self.surface_, 1, row))
                for row in arr
            ]
        ).reshape(arr.shape[0], self.n_components_)
        return out[0] if single else out

    def inverse_transform(self, C):
        """Harmonic 1-cochain rows from coefficient rows."""
        check_is_fitted(self)
        arr = np.asarray(C, dtype=float)
        single = arr.ndim == 1
        if single:
            arr = arr[None, :]
        if arr.shape[1] != self.n_components_:
            raise ValueError(f"expected {self.n_components_} coefficients per row")
        out = arr @ self.basis_.matrix.T
        return out[0] if single else out

    def decompose(self, alpha):
        """Full HodgeResult of one closed 1-cochain (array or Cochain)."""
        check_is_fitted(self)
        if not isinstance(alpha, Cochain):
            alpha = Cochain(self.surface_, 1, np.asarray(alpha, dtype=float))
        return decompose_closed(
            alpha, self.triple_, closed_tol=self.closed_tol,
            solver_rtol=self.solver_rtol,
        )
