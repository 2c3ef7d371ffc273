"""Closed oriented triangulated surfaces, generators, file I/O, and quotients.

A surface is a pure simplicial 2-complex in which every edge borders exactly
two consistently oriented triangles.  The metric comes either from an
embedding in R^3 or intrinsically from edge lengths; flat tori additionally
carry chart coordinates in the unit square so analytic forms and tangent
fields can be evaluated in the chart.

All incidence data is assembled once at construction.  The exterior
derivative matrices ``d0`` and ``d1`` are exact signed incidence matrices
(entries in {-1, 0, +1}) and satisfy ``d1 @ d0 == 0`` identically, not just
numerically.  Edges are oriented canonically from the lower to the higher
vertex index and indexed in lexicographic order of their vertex pairs.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np
import scipy.sparse as sp
from scipy.sparse.csgraph import connected_components
from scipy.spatial import cKDTree

__all__ = [
    "SimplicialSurface",
    "SimplicialAutomorphism",
    "QuotientCover",
    "IntegralCheck",
    "gen_icosphere",
    "gen_flat_torus",
    "load_off",
    "save_off",
    "save_vtk",
    "euler_characteristic",
    "disjoint_union",
    "subdivide",
    "automorphism_from_points",
    "lattice_translations",
    "build_quotient",
    "quotient_integral_check",
    "product_integral_check",
    "genus2_surface",
]

_DATA_DIR = Path(__file__).parent / "data"


class MeshError(ValueError):
    """Raised for inputs that do not describe a closed oriented surface."""


def _as_triangle_array(triangles):
    tris = np.asarray(triangles, dtype=np.int64)
    if tris.ndim != 2 or tris.shape[1] != 3:
        raise MeshError("triangles must be an (F, 3) integer array")
    return tris


def _extract_edges(tris, n_vertices):
    """Return canonical edges, per-triangle edge indices and incidence signs.

    The sign is +1 where the triangle traverses the edge in its canonical
    (low vertex to high vertex) direction and -1 otherwise.
    """
    directed = np.stack(
        [tris[:, [0, 1]], tris[:, [1, 2]], tris[:, [2, 0]]], axis=1
    )
    lo = directed.min(axis=2)
    hi = directed.max(axis=2)
    keys = lo.astype(np.int64) * n_vertices + hi
    uniq, inverse = np.unique(keys, return_inverse=True)
    edges = np.column_stack([uniq // n_vertices, uniq % n_vertices])
    tri_edges = inverse.reshape(tris.shape[0], 3)
    tri_edge_signs = np.where(directed[:, :, 0] < directed[:, :, 1], 1, -1)
    return edges, tri_edges, tri_edge_signs.astype(np.int64)


def _check_vertex_links(tris, tri_edges, tri_edge_signs, edges, n_vertices):
    """Reject pinched vertices: every vertex link must be a single cycle."""
    n_faces = tris.shape[0]
    n_edges = edges.shape[0]
    left = np.full(n_edges, -1, dtype=np.int64)
    right = np.full(n_edges, -1, dtype=np.int64)
    flat_e = tri_edges.ravel()
    flat_s = tri_edge_signs.ravel()
    flat_t = np.repeat(np.arange(n_faces), 3)
    left[flat_e[flat_s > 0]] = flat_t[flat_s > 0]
    right[flat_e[flat_s < 0]] = flat_t[flat_s < 0]

    # Union corners (triangle, vertex) of the two triangles across each edge.
    corner_id = {}
    parent = np.arange(3 * n_faces)

    def find(x):
        root = x
        while parent[root] != root:
            root = parent[root]
        while parent[x] != root:
            parent[x], x = root, parent[x]
        return root

    def corner_key(t, v):
        key = (int(t), int(v))
        if key not in corner_id:
            corner_id[key] = len(corner_id)
        return corner_id[key]

    for e in range(n_edges):
        t1, t2 = left[e], right[e]
        for v in edges[e]:
            a = corner_key(t1, v)
            b = corner_key(t2, v)
            ra, rb = find(a), find(b)
            if ra != rb:
                parent[ra] = rb

    comps_per_vertex = np.zeros(n_vertices, dtype=np.int64)
    seen = set()
    for (t, v), cid in corner_id.items():
        root = find(cid)
        if (v, root) not in seen:
            seen.add((v, root))
            comps_per_vertex[v] += 1
    bad = np.nonzero(comps_per_vertex > 1)[0]
    if bad.size:
        raise MeshError(f"non-manifold vertex link at vertices {bad[:5].tolist()}")
    return left, right


def _wrap_half(delta):
    """Wrap chart displacements to the minimal image in (-1/2, 1/2]."""
    return delta - np.round(delta)


class SimplicialSurface:
    """A closed oriented triangulated surface with a piecewise flat metric.

    Parameters
    ----------
    triangles : (F, 3) int array
        Consistently oriented triangles (counterclockwise as seen from the
        positive side of the surface).
    vertices : (V, 3) float array, optional
        Embedded vertex positions.  Exactly one metric source is required:
        ``vertices``, ``chart``, or ``edge_lengths``.
    chart : (V, 2) float array, optional
        Chart coordinates in the unit square for intrinsic flat tori.
        Requires ``torus_periods``; edge geometry uses minimal-image lifts,
        which is valid because the generators enforce at least three cells
        per period.
    torus_periods : (n, m) pair of ints, optional
        Grid periods of a flat torus chart.
    edge_lengths : (E,) float array, optional
        Intrinsic edge lengths in canonical edge order.
    vertex_normals : (V, 3) float array, optional
        Analytic unit normals overriding the per-face average (embedded
        surfaces only).
    name : str
        Informal label used in reports.

    Attributes
    ----------
    n_vertices, n_edges, n_triangles : int
    edges : (E, 2) int array, canonical low-to-high vertex pairs.
    d0 : (E, V) sparse matrix, exterior derivative on 0-cochains.
    d1 : (F, E) sparse matrix, exterior derivative on 1-cochains.
    areas : (F,) triangle areas, all strictly positive.
    vertex_areas : (V,) barycentric dual areas (one third of incident
        triangle areas).
    corners_2d : (F, 3, 2) triangle corner coordinates in positively
        oriented orthonormal frames.
    h_max : float, the longest edge length.
    """

    def __init__(
        self,
        triangles,
        vertices=None,
        chart=None,
        torus_periods=None,
        edge_lengths=None,
        vertex_normals=None,
        name="surface",
    ):
        tris = _as_triangle_array(triangles)
        if tris.shape[0] == 0:
            raise MeshError("empty triangle list")
        if np.any(tris < 0):
            raise MeshError("negative vertex index in triangles")
        if (
            tris[:, 0] == tris[:, 1]
        ).any() or (tris[:, 1] == tris[:, 2]).any() or (tris[:, 0] == tris[:, 2]).any():
            raise MeshError("triangle with repeated vertex")
        if len(np.unique(np.sort(tris, axis=1), axis=0)) != len(tris):
            raise MeshError("two triangles share the same vertex set")

        self.name = name
        self.triangles = tris
        self.vertices = None if vertices is None else np.asarray(vertices, dtype=float)
        self.chart = None if chart is None else np.asarray(chart, dtype=float)
        self.torus_periods = None if torus_periods is None else tuple(torus_periods)

        if self.vertices is not None:
            n_vertices = self.vertices.shape[0]
        elif self.chart is not None:
            n_vertices = self.chart.shape[0]
        else:
            n_vertices = int(tris.max()) + 1
        if int(tris.max()) >= n_vertices:
            raise MeshError("triangle references a vertex beyond the vertex array")
        self.n_vertices = n_vertices
        self.n_triangles = tris.shape[0]

        edges, tri_edges, tri_edge_signs = _extract_edges(tris, n_vertices)
        self.edges = edges
        self.n_edges = edges.shape[0]
        self.tri_edges = tri_edges
        self.tri_edge_signs = tri_edge_signs

        counts = np.bincount(tri_edges.ravel(), minlength=self.n_edges)
        boundary = np.nonzero(counts == 1)[0]
        if boundary.size:
            raise MeshError(
                f"boundary edges found ({boundary.size} edges border one triangle)"
            )
        if counts.max() > 2:
            bad = np.nonzero(counts > 2)[0]
            raise MeshError(
                f"non-manifold edges found ({bad.size} edges border >2 triangles)"
            )
        sign_sums = np.bincount(
            tri_edges.ravel(), weights=tri_edge_signs.ravel(), minlength=self.n_edges
        )
        if np.any(sign_sums != 0):
            raise MeshError("inconsistent triangle orientation across an edge")

        self.tri_left, self.tri_right = _check_vertex_links(
            tris, tri_edges, tri_edge_signs, edges, n_vertices
        )

        self.d0 = sp.csr_matrix(
            (
                np.concatenate([np.ones(self.n_edges), -np.ones(self.n_edges)]),
                (
                    np.concatenate([np.arange(self.n_edges)] * 2),
                    np.concatenate([edges[:, 1], edges[:, 0]]),
                ),
            ),
            shape=(self.n_edges, n_vertices),
        )
        self.d1 = sp.csr_matrix(
            (
                tri_edge_signs.ravel().astype(float),
                (np.repeat(np.arange(self.n_triangles), 3), tri_edges.ravel()),
            ),
            shape=(self.n_triangles, self.n_edges),
        )

        self._build_geometry(edge_lengths)
        if self.areas.min() <= 0 or not np.isfinite(self.areas).all():
            raise MeshError("degenerate triangle (non-positive area)")

        self.vertex_areas = np.zeros(n_vertices)
        np.add.at(self.vertex_areas, tris.ravel(), np.repeat(self.areas / 3.0, 3))

        adj = sp.csr_matrix(
            (np.ones(self.n_edges), (edges[:, 0], edges[:, 1])),
            shape=(n_vertices, n_vertices),
        )
        self.n_components, self.component_labels = connected_components(
            adj, directed=False
        )
        self.h_max = float(self.edge_lengths.max())

        if vertex_normals is not None:
            self.vertex_normals = np.asarray(vertex_normals, dtype=float)
        elif self.is_embedded:
            self.vertex_normals = self._average_normals()
        else:
            self.vertex_normals = None

    def _build_geometry(self, edge_lengths):
        tris = self.triangles
        edges = self.edges
        if self.vertices is not None:
            p = self.vertices
            e01 = p[tris[:, 1]] - p[tris[:, 0]]
            e02 = p[tris[:, 2]] - p[tris[:, 0]]
            normal = np.cross(e01, e02)
            two_area = np.linalg.norm(normal, axis=1)
            self.areas = two_area / 2.0
            safe = np.where(two_area > 0, two_area, 1.0)
            fw = normal / safe[:, None]
            l01 = np.linalg.norm(e01, axis=1)
            fu = e01 / np.where(l01 > 0, l01, 1.0)[:, None]
            fv = np.cross(fw, fu)
            self.triangle_frames = np.stack([fu, fv], axis=1)
            self.triangle_normals = fw
            corners = np.zeros((self.n_triangles, 3, 2))
            corners[:, 1, 0] = l01
            corners[:, 2, 0] = np.einsum("ij,ij->i", e02, fu)
            corners[:, 2, 1] = np.einsum("ij,ij->i", e02, fv)
            self.corners_2d = corners
            self.edge_lengths = np.linalg.norm(
                p[edges[:, 1]] - p[edges[:, 0]], axis=1
            )
        elif self.chart is not None:
            if self.torus_periods is None:
                raise MeshError("chart coordinates require torus_periods")
            self.edge_lifts = _wrap_half(self.chart[edges[:, 1]] - self.chart[edges[:, 0]])
            self.edge_lengths = np.linalg.norm(self.edge_lifts, axis=1)
            corners = np.zeros((self.n_triangles, 3, 2))
            corners[:, 1] = _wrap_half(self.chart[tris[:, 1]] - self.chart[tris[:, 0]])
            corners[:, 2] = _wrap_half(self.chart[tris[:, 2]] - self.chart[tris[:, 0]])
            self.corners_2d = corners
            cross = (
                corners[:, 1, 0] * corners[:, 2, 1]
                - corners[:, 1, 1] * corners[:, 2, 0]
            )
            if np.any(cross <= 0):
                raise MeshError("chart triangles must be counterclockwise")
            self.areas = cross / 2.0
            self.triangle_frames = None
            self.triangle_normals = None
        elif edge_lengths is not None:
            lengths = np.asarray(edge_lengths, dtype=float)
            if lengths.shape != (self.n_edges,):
                raise MeshError(
                    f"edge_lengths must have shape ({self.n_edges},), got {lengths.shape}"
                )
            if lengths.min() <= 0:
                raise MeshError("edge lengths must be positive")
            self.edge_lengths = lengths
            # Lay each triangle out in the plane from its three edge lengths.
            key = {}
            tri_lengths = np.zeros((self.n_triangles, 3))
            for k, (i, j) in enumerate([(0, 1), (1, 2), (0, 2)]):
                lo = np.minimum(tris[:, i], tris[:, j])
                hi = np.maximum(tris[:, i], tris[:, j])
                idx = np.searchsorted(
                    self.edges[:, 0] * self.n_vertices + self.edges[:, 1],
                    lo * self.n_vertices + hi,
                )
                tri_lengths[:, k] = lengths[idx]
            a, b, c = tri_lengths[:, 0], tri_lengths[:, 1], tri_lengths[:, 2]
            # a = |v0 v1|, b = |v1 v2|, c = |v0 v2|
            x2 = (a**2 + c**2 - b**2) / (2.0 * a)
            y2sq = c**2 - x2**2
            if np.any(y2sq <= 0):
                raise MeshError("edge lengths violate the triangle inequality")
            corners = np.zeros((self.n_triangles, 3, 2))
            corners[:, 1, 0] = a
            corners[:, 2, 0] = x2
            corners[:, 2, 1] = np.sqrt(y2sq)
            self.corners_2d = corners
            self.areas = a * np.sqrt(y2sq) / 2.0
            self.triangle_frames = None
            self.triangle_normals = None
        else:
            raise MeshError(
                "a metric is required: vertices, chart + torus_periods, or edge_lengths"
            )

    def _average_normals(self):
        normals = np.zeros((self.n_vertices, 3))
        weighted = self.triangle_normals * self.areas[:, None]
        np.add.at(normals, self.triangles.ravel(), np.repeat(weighted, 3, axis=0))
        norm = np.linalg.norm(normals, axis=1)
        return normals / np.where(norm > 0, norm, 1.0)[:, None]

    @property
    def is_embedded(self):
        return self.vertices is not None

    def euler_characteristic(self):
        return self.n_vertices - self.n_edges + self.n_triangles

    @property
    def genus(self):
        """Total genus, summed over connected components."""
        chi = self.euler_characteristic()
        g2 = 2 * self.n_components - chi
        if g2 % 2:
            raise MeshError("odd Euler defect; surface is not closed orientable")
        return g2 // 2

    @property
    def first_betti_number(self):
        return 2 * self.genus

    def edge_index(self, u, v):
        """Index of the canonical edge between vertices u and v."""
        lo, hi = (u, v) if u < v else (v, u)
        key = lo * self.n_vertices + hi
        keys = self.edges[:, 0] * self.n_vertices + self.edges[:, 1]
        idx = int(np.searchsorted(keys, key))
        if idx >= self.n_edges or keys[idx] != key:
            raise KeyError(f"no edge between vertices {u} and {v}")
        return idx

    def __repr__(self):
        kind = "embedded" if self.is_embedded else "intrinsic"
        return (
            f"SimplicialSurface({self.name!r}, {kind}, V={self.n_vertices}, "
            f"E={self.n_edges}, F={self.n_triangles}, genus={self.genus})"
        )


def euler_characteristic(surface):
    """V - E + F of a surface."""
    return surface.euler_characteristic()


# ---------------------------------------------------------------------------
# generators


def gen_icosphere(subdivisions):
    """Geodesic sphere from 4-to-1 subdivision of a polar icosahedron.

    The base icosahedron is oriented with two antipodal vertices exactly on
    the z axis (indices 0 and 11), so rotations about z have exact fixed
    vertices at the poles.  Midpoints are projected to the unit sphere after
    each subdivision round; existing vertices never move.

    Parameters
    ----------
    subdivisions : int
        Number of 4-to-1 rounds, between 0 and 8.
    """
    subdivisions = int(subdivisions)
    if not 0 <= subdivisions <= 8:
        raise MeshError("subdivisions must be between 0 and 8")

    z = 1.0 / np.sqrt(5.0)
    r = 2.0 / np.sqrt(5.0)
    upper = [
        (r * np.cos(2 * np.pi * k / 5), r * np.sin(2 * np.pi * k / 5), z)
        for k in range(5)
    ]
    lower = [
        (
            r * np.cos(2 * np.pi * k / 5 + np.pi / 5),
            r * np.sin(2 * np.pi * k / 5 + np.pi / 5),
            -z,
        )
        for k in range(5)
    ]
    verts = np.array([(0.0, 0.0, 1.0)] + upper + lower + [(0.0, 0.0, -1.0)])
    u = lambda k: 1 + k % 5
    l = lambda k: 6 + k % 5
    tris = []
    for k in range(5):
        tris.append((0, u(k), u(k + 1)))
        tris.append((u(k), l(k), u(k + 1)))
        tris.append((l(k), l(k + 1), u(k + 1)))
        tris.append((11, l(k + 1), l(k)))
    tris = np.array(tris, dtype=np.int64)

    for _ in range(subdivisions):
        verts, tris = _subdivide_arrays(verts, tris, project_unit=True)

    normals = verts.copy()
    return SimplicialSurface(
        tris,
        vertices=verts,
        vertex_normals=normals,
        name=f"icosphere_{subdivisions}",
    )


def _subdivide_arrays(verts, tris, project_unit=False):
    n_vertices = verts.shape[0]
    edges, tri_edges, _ = _extract_edges(tris, n_vertices)
    mid = (verts[edges[:, 0]] + verts[edges[:, 1]]) / 2.0
    if project_unit:
        mid /= np.linalg.norm(mid, axis=1)[:, None]
    new_verts = np.vstack([verts, mid])
    m01 = n_vertices + tri_edges[:, 0]
    m12 = n_vertices + tri_edges[:, 1]
    m20 = n_vertices + tri_edges[:, 2]
    a, b, c = tris[:, 0], tris[:, 1], tris[:, 2]
    new_tris = np.concatenate(
        [
            np.column_stack([a, m01, m20]),
            np.column_stack([m01, b, m12]),
            np.column_stack([m20, m12, c]),
            np.column_stack([m01, m12, m20]),
        ]
    )
    return new_verts, new_tris


def subdivide(surface):
    """One 4-to-1 midpoint subdivision of an embedded surface.

    Midpoints stay on the chords, so the refined meshes converge to the
    original polyhedron, which is what refinement studies on bundled
    fixtures need.
    """
    if not surface.is_embedded:
        raise MeshError("subdivide requires an embedded surface")
    verts, tris = _subdivide_arrays(surface.vertices, surface.triangles)
    return SimplicialSurface(tris, vertices=verts, name=surface.name + "_sub")


def gen_flat_torus(n, m):
    """Intrinsic flat torus on an n-by-m periodic grid, each cell split in two.

    Vertices sit at chart points (i/n, j/m) with index i*m + j; the unit
    square has total area one, so every triangle has area 1/(2 n m).  Both
    periods must be at least 3 so that minimal-image lifts are unambiguous.
    """
    n, m = int(n), int(m)
    if n < 3 or m < 3:
        raise MeshError("flat torus periods must be at least 3")
    ii, jj = np.meshgrid(np.arange(n), np.arange(m), indexing="ij")
    chart = np.column_stack([(ii / n).ravel(), (jj / m).ravel()])

    def v(i, j):
        return (i % n) * m + (j % m)

    tris = []
    for i in range(n):
        for j in range(m):
            tris.append((v(i, j), v(i + 1, j), v(i + 1, j + 1)))
            tris.append((v(i, j), v(i + 1, j + 1), v(i, j + 1)))
    return SimplicialSurface(
        np.array(tris, dtype=np.int64),
        chart=chart,
        torus_periods=(n, m),
        name=f"flat_torus_{n}x{m}",
    )


def disjoint_union(a, b):
    """Disjoint union of two surfaces as one multi-component surface."""
    tris = np.vstack([a.triangles, b.triangles + a.n_vertices])
    if a.is_embedded and b.is_embedded:
        return SimplicialSurface(
            tris,
            vertices=np.vstack([a.vertices, b.vertices]),
            name=f"{a.name}+{b.name}",
        )
    # Intrinsic union: component A vertex indices all precede component B,
    # so canonical edge order is the concatenation of the two edge orders.
    lengths = np.concatenate([a.edge_lengths, b.edge_lengths])
    return SimplicialSurface(tris, edge_lengths=lengths, name=f"{a.name}+{b.name}")


def genus2_surface():
    """The bundled genus-2 fixture (embedded, closed, oriented)."""
    return load_off(_DATA_DIR / "genus2.off")


# ---------------------------------------------------------------------------
# OFF / VTK files


def _orient_triangles(tris, n_vertices):
    """Flip triangles to a consistent orientation; raise if impossible."""
    n_faces = tris.shape[0]
    incident = {}
    for t in range(n_faces):
        a, b, c = tris[t]
        for u, v in ((a, b), (b, c), (c, a)):
            key = (min(u, v), max(u, v))
            incident.setdefault(key, []).append((t, u < v))
    for key, hits in incident.items():
        if len(hits) == 1:
            raise MeshError("boundary edges found (open surface)")
        if len(hits) > 2:
            raise MeshError("non-manifold OFF input (edge borders >2 triangles)")

    flipped = np.zeros(n_faces, dtype=bool)
    visited = np.zeros(n_faces, dtype=bool)
    for seed in range(n_faces):
        if visited[seed]:
            continue
        stack = [seed]
        visited[seed] = True
        while stack:
            t = stack.pop()
            a, b, c = tris[t]
            for u, v in ((a, b), (b, c), (c, a)):
                key = (min(u, v), max(u, v))
                for t2, fwd2 in incident[key]:
                    if t2 == t:
                        continue
                    fwd_here = (u < v) != flipped[t]
                    fwd_there = fwd2 != flipped[t2]
                    # Consistent orientation: the shared edge must be
                    # traversed in opposite directions by the two triangles.
                    if not visited[t2]:
                        flipped[t2] = fwd_here == fwd_there
                        visited[t2] = True
                        stack.append(t2)
                    elif fwd_here == fwd_there:
                        raise MeshError(
                            "inconsistent orientation unfixable by triangle flips"
                        )
    out = tris.copy()
    out[flipped] = out[flipped][:, ::-1]
    return out


def _signed_volume(verts, tris):
    p0 = verts[tris[:, 0]]
    p1 = verts[tris[:, 1]]
    p2 = verts[tris[:, 2]]
    return float(np.einsum("ij,ij->i", p0, np.cross(p1, p2)).sum() / 6.0)


def load_off(path):
    """Read an OFF file as a closed oriented surface.

    Orientation is normalized: triangles are flipped to mutual consistency
    (error if the surface is non-orientable) and each connected component is
    flipped as a whole so its enclosed signed volume is positive.  A JSON
    sidecar ``<path>.json`` written by the torus generator switches to the
    intrinsic flat metric it records.
    """
    path = Path(path)
    tokens = []
    with open(path) as fh:
        for line in fh:
            line = line.split("#", 1)[0].strip()
            if line:
                tokens.extend(line.split())
    if not tokens or tokens[0] != "OFF":
        raise MeshError(f"{path}: not an OFF file (missing OFF header)")
    ptr = 1
    nv, nf = int(tokens[ptr]), int(tokens[ptr + 1])
    ptr += 3  # edge count in the header is ignored
    verts = np.array(tokens[ptr : ptr + 3 * nv], dtype=float).reshape(nv, 3)
    ptr += 3 * nv
    tris = np.zeros((nf, 3), dtype=np.int64)
    for f in range(nf):
        k = int(tokens[ptr])
        if k != 3:
            raise MeshError(f"{path}: face with {k} sides; only triangles supported")
        tris[f] = [int(tokens[ptr + 1]), int(tokens[ptr + 2]), int(tokens[ptr + 3])]
        ptr += 4

    tris = _orient_triangles(tris, nv)

    sidecar = path.with_name(path.name + ".json")
    if sidecar.exists():
        meta = json.loads(sidecar.read_text())
        if meta.get("format") != "hamflow-intrinsic-v1":
            raise MeshError(f"{sidecar}: unknown sidecar format")
        n, m = meta["flat_torus"]["n"], meta["flat_torus"]["m"]
        torus = gen_flat_torus(n, m)
        if torus.n_vertices != nv or torus.n_triangles != nf:
            raise MeshError(f"{sidecar}: sidecar does not match the OFF combinatorics")
        return torus

    surface = SimplicialSurface(tris, vertices=verts, name=path.stem)
    # Outward orientation per component, decided by enclosed volume.
    flip = []
    for comp in range(surface.n_components):
        mask = surface.component_labels[tris[:, 0]] == comp
        if _signed_volume(verts, tris[mask]) < 0:
            flip.append(comp)
    if flip:
        mask = np.isin(surface.component_labels[tris[:, 0]], flip)
        tris[mask] = tris[mask][:, ::-1]
        surface = SimplicialSurface(tris, vertices=verts, name=path.stem)
    return surface


def _fmt(x):
    return repr(float(x))


def save_off(surface, path):
    """Write a surface as OFF; intrinsic tori get a JSON metric sidecar."""
    path = Path(path)
    if surface.is_embedded:
        verts = surface.vertices
    elif surface.chart is not None:
        verts = np.column_stack([surface.chart, np.zeros(surface.n_vertices)])
    else:
        raise MeshError("surface has no embedding or chart to write")
    lines = ["OFF", f"{surface.n_vertices} {surface.n_triangles} {surface.n_edges}"]
    for p in verts:
        lines.append(f"{_fmt(p[0])} {_fmt(p[1])} {_fmt(p[2])}")
    for t in surface.triangles:
        lines.append(f"3 {t[0]} {t[1]} {t[2]}")
    path.write_text("\n".join(lines) + "\n")
    if not surface.is_embedded and surface.chart is not None:
        n, m = surface.torus_periods
        sidecar = {
            "format": "hamflow-intrinsic-v1",
            "flat_torus": {"n": n, "m": m},
            "comment": "chart coordinates embedded at z=0; metric is the flat torus",
        }
        path.with_name(path.name + ".json").write_text(
            json.dumps(sidecar, indent=2) + "\n"
        )


def save_vtk(surface, path, point_data=None, cell_data=None, point_vectors=None,
             cell_vectors=None, title="hamflow surface"):
    """Write a legacy ASCII VTK PolyData file with optional data arrays.

    ``point_data`` and ``cell_data`` map names to scalar arrays; the vector
    variants map names to (n, 3) arrays.
    """
    path = Path(path)
    if surface.is_embedded:
        verts = surface.vertices
    elif surface.chart is not None:
        verts = np.column_stack([surface.chart, np.zeros(surface.n_vertices)])
    else:
        raise MeshError("surface has no embedding or chart to write")
    lines = [
        "# vtk DataFile Version 3.0",
        title,
        "ASCII",
        "DATASET POLYDATA",
        f"POINTS {surface.n_vertices} double",
    ]
    for p in verts:
        lines.append(f"{_fmt(p[0])} {_fmt(p[1])} {_fmt(p[2])}")
    lines.append(f"POLYGONS {surface.n_triangles} {4 * surface.n_triangles}")
    for t in surface.triangles:
        lines.append(f"3 {t[0]} {t[1]} {t[2]}")

    def data_block(header, scalars, vectors):
        out = []
        if scalars or vectors:
            out.append(header)
        for name, values in (scalars or {}).items():
            out.append(f"SCALARS {name} double 1")
            out.append("LOOKUP_TABLE default")
            out.extend(_fmt(v) for v in np.asarray(values))
        for name, values in (vectors or {}).items():
            out.append(f"VECTORS {name} double")
            arr = np.asarray(values, dtype=float)
            if arr.shape[1] == 2:
                arr = np.column_stack([arr, np.zeros(arr.shape[0])])
            out.extend(f"{_fmt(v[0])} {_fmt(v[1])} {_fmt(v[2])}" for v in arr)
        return out

    lines += data_block(f"POINT_DATA {surface.n_vertices}", point_data, point_vectors)
    lines += data_block(f"CELL_DATA {surface.n_triangles}", cell_data, cell_vectors)
    path.write_text("\n".join(lines) + "\n")


# ---------------------------------------------------------------------------
# automorphisms


class SimplicialAutomorphism:
    """A simplicial self-map given by a vertex permutation.

    The permutation must send triangles to triangles preserving orientation
    (cyclic order), which the constructor verifies.  Induced edge and
    triangle permutations with signs are precomputed; for canonical edges
    the sign records whether the image pair keeps or reverses the canonical
    direction.
    """

    def __init__(self, surface, vertex_perm, name=""):
        self.surface = surface
        perm = np.asarray(vertex_perm, dtype=np.int64)
        if perm.shape != (surface.n_vertices,):
            raise MeshError("vertex permutation has wrong length")
        if np.bincount(perm, minlength=surface.n_vertices).max() != 1:
            raise MeshError("vertex map is not a permutation")
        self.vertex_perm = perm
        self.name = name or "automorphism"

        edges = surface.edges
        img = perm[edges]
        lo = img.min(axis=1)
        hi = img.max(axis=1)
        keys = surface.edges[:, 0] * surface.n_vertices + surface.edges[:, 1]
        want = lo * surface.n_vertices + hi
        idx = np.searchsorted(keys, want)
        ok = (idx < surface.n_edges) & (keys[np.minimum(idx, surface.n_edges - 1)] == want)
        if not ok.all():
            raise MeshError("vertex permutation does not preserve the edge set")
        self.edge_perm = idx
        self.edge_signs = np.where(img[:, 0] < img[:, 1], 1, -1).astype(np.int64)

        tris = surface.triangles
        timg = perm[tris]
        # Locate the image triangle by its sorted vertex triple.
        order = np.lexsort(
            (np.sort(tris, axis=1)[:, 2], np.sort(tris, axis=1)[:, 1],
             np.sort(tris, axis=1)[:, 0])
        )
        skeys = np.sort(tris, axis=1)[order]
        want3 = np.sort(timg, axis=1)
        pos = np.searchsorted(
            skeys[:, 0] * surface.n_vertices**2 + skeys[:, 1] * surface.n_vertices + skeys[:, 2],
            want3[:, 0] * surface.n_vertices**2 + want3[:, 1] * surface.n_vertices + want3[:, 2],
        )
        if (pos >= surface.n_triangles).any():
            raise MeshError("vertex permutation does not preserve the triangle set")
        found = order[pos]
        fkeys = np.sort(tris[found], axis=1)
        if not (fkeys == want3).all():
            raise MeshError("vertex permutation does not preserve the triangle set")
        self.tri_perm = found

        signs = np.zeros(surface.n_triangles, dtype=np.int64)
        for rot in range(3):
            rolled = np.roll(tris[found], rot, axis=1)
            signs[np.all(rolled == timg, axis=1)] = 1
            signs[np.all(rolled[:, ::-1] == timg, axis=1)] = -1
        if (signs == 0).any():
            raise MeshError("triangle image is not a triangle of the complex")
        if (signs < 0).any():
            raise MeshError("automorphism reverses orientation")
        self.tri_signs = signs

        self.isometry_defect = float(
            np.max(
                np.abs(surface.edge_lengths[self.edge_perm] - surface.edge_lengths)
                / surface.edge_lengths
            )
        )

    @property
    def is_isometry(self):
        return self.isometry_defect <= 1e-9

    @classmethod
    def identity(cls, surface):
        return cls(surface, np.arange(surface.n_vertices), name="identity")

    def compose(self, other):
        """self after other: (self * other)(v) = self(other(v))."""
        if other.surface is not self.surface:
            raise MeshError("automorphisms act on different surfaces")
        return SimplicialAutomorphism(
            self.surface,
            self.vertex_perm[other.vertex_perm],
            name=f"{self.name}*{other.name}",
        )

    def inverse(self):
        inv = np.empty_like(self.vertex_perm)
        inv[self.vertex_perm] = np.arange(self.vertex_perm.size)
        return SimplicialAutomorphism(self.surface, inv, name=f"{self.name}^-1")

    def is_identity(self):
        return bool(np.all(self.vertex_perm == np.arange(self.vertex_perm.size)))

    def __eq__(self, other):
        return (
            isinstance(other, SimplicialAutomorphism)
            and other.surface is self.surface
            and np.array_equal(other.vertex_perm, self.vertex_perm)
        )

    def __hash__(self):
        return hash(self.vertex_perm.tobytes())

    def __repr__(self):
        return f"SimplicialAutomorphism({self.name!r})"


def automorphism_from_points(surface, mapped_points, tol=1e-9, name=""):
    """Build the automorphism sending each vertex to its mapped position.

    ``mapped_points`` are the images of the embedded vertices under some
    ambient isometry; each must coincide with an existing vertex within
    ``tol``.
    """
    if not surface.is_embedded:
        raise MeshError("automorphism_from_points needs an embedded surface")
    tree = cKDTree(surface.vertices)
    dist, idx = tree.query(mapped_points)
    if dist.max() > tol:
        raise MeshError(
            f"mapped points miss the vertex set (max distance {dist.max():.3g})"
        )
    return SimplicialAutomorphism(surface, idx, name=name)


def lattice_translations(torus):
    """All grid translations of a flat torus, identity first.

    Returns n*m automorphisms ordered lexicographically by the step pair
    (di, dj); each is an exact simplicial isometry of the grid.
    """
    if torus.torus_periods is None:
        raise MeshError("lattice_translations requires a flat torus with chart")
    n, m = torus.torus_periods
    ii = np.arange(n * m) // m
    jj = np.arange(n * m) % m
    out = []
    for di in range(n):
        for dj in range(m):
            perm = ((ii + di) % n) * m + (jj + dj) % m
            out.append(SimplicialAutomorphism(torus, perm, name=f"t({di},{dj})"))
    return out


# ---------------------------------------------------------------------------
# quotients


class QuotientCover:
    """A free simplicial quotient together with its projection maps.

    Attributes
    ----------
    total : SimplicialSurface
    quotient : SimplicialSurface
    deck : list of SimplicialAutomorphism, the full deck group.
    vertex_map, tri_map : arrays projecting total simplices to the quotient.
    fundamental_triangles : sorted indices of the greedy fundamental domain
        (lowest total-triangle index in each orbit).
    """

    def __init__(self, total, quotient, deck, vertex_map, tri_map, fundamental_triangles):
        self.total = total
        self.quotient = quotient
        self.deck = deck
        self.vertex_map = vertex_map
        self.tri_map = tri_map
        self.fundamental_triangles = fundamental_triangles

    @property
    def group_order(self):
        return len(self.deck)


def build_quotient(total, deck):
    """Quotient a surface by a free deck group of isometric automorphisms.

    Parameters
    ----------
    total : SimplicialSurface
    deck : sequence of SimplicialAutomorphism
        Must form a group (closed under composition and inverse, containing
        the identity) acting freely on vertices, edges, and triangles.

    Raises
    ------
    MeshError
        If the deck set is not a group, the action has a fixed simplex, the
        deck maps are not isometries, or the quotient fails to be a
        simplicial surface (for example when distinct edge orbits collapse
        onto the same vertex pair).
    """
    deck = list(deck)
    if not deck:
        raise MeshError("deck group is empty")
    for g in deck:
        if g.surface is not total:
            raise MeshError("deck automorphism acts on a different surface")
        if not g.is_isometry:
            raise MeshError(
                f"deck automorphism {g.name} is not an isometry "
                f"(length defect {g.isometry_defect:.3g})"
            )
    perms = {g.vertex_perm.tobytes(): g for g in deck}
    if len(perms) != len(deck):
        raise MeshError("deck group has repeated elements")
    if not any(g.is_identity() for g in deck):
        raise MeshError("deck set is not a group (identity missing)")
    for g in deck:
        if g.inverse().vertex_perm.tobytes() not in perms:
            raise MeshError("deck set is not a group (inverse missing)")
        for h in deck:
            if g.vertex_perm[h.vertex_perm].tobytes() not in perms:
                raise MeshError("deck set is not a group (not closed under composition)")

    for g in deck:
        if g.is_identity():
            continue
        if np.any(g.vertex_perm == np.arange(total.n_vertices)):
            raise MeshError(f"action is not free: {g.name} fixes a vertex")
        if np.any(g.edge_perm == np.arange(total.n_edges)):
            raise MeshError(f"action is not free: {g.name} fixes an edge")
        if np.any(g.tri_perm == np.arange(total.n_triangles)):
            raise MeshError(f"action is not free: {g.name} fixes a triangle")

    # Vertex orbits, renumbered in order of their smallest representative.
    orbit_min = np.arange(total.n_vertices)
    for g in deck:
        orbit_min = np.minimum(orbit_min, orbit_min[g.vertex_perm])
    # Iterate to a fixed point; deck orbits are closed so this stabilizes.
    while True:
        nxt = orbit_min.copy()
        for g in deck:
            nxt = np.minimum(nxt, orbit_min[g.vertex_perm])
        if np.array_equal(nxt, orbit_min):
            break
        orbit_min = nxt
    reps = np.unique(orbit_min)
    if reps.size * len(deck) != total.n_vertices:
        raise MeshError("vertex orbits have unequal size; action is not free")
    vertex_map = np.searchsorted(reps, orbit_min)

    tri_orbit_min = np.arange(total.n_triangles)
    for g in deck:
        tri_orbit_min = np.minimum(tri_orbit_min, tri_orbit_min[g.tri_perm])
    while True:
        nxt = tri_orbit_min.copy()
        for g in deck:
            nxt = np.minimum(nxt, tri_orbit_min[g.tri_perm])
        if np.array_equal(nxt, tri_orbit_min):
            break
        tri_orbit_min = nxt
    fundamental = np.unique(tri_orbit_min)
    tri_map = np.searchsorted(fundamental, tri_orbit_min)

    q_tris = vertex_map[total.triangles[fundamental]]
    if (
        (q_tris[:, 0] == q_tris[:, 1]).any()
        or (q_tris[:, 1] == q_tris[:, 2]).any()
        or (q_tris[:, 0] == q_tris[:, 2]).any()
    ):
        raise MeshError("quotient collapses a triangle; not a simplicial complex")

    # Distinct edge orbits must stay distinct vertex pairs downstairs.
    edge_orbit_min = np.arange(total.n_edges)
    for g in deck:
        edge_orbit_min = np.minimum(edge_orbit_min, edge_orbit_min[g.edge_perm])
    while True:
        nxt = edge_orbit_min.copy()
        for g in deck:
            nxt = np.minimum(nxt, edge_orbit_min[g.edge_perm])
        if np.array_equal(nxt, edge_orbit_min):
            break
        edge_orbit_min = nxt
    edge_reps = np.unique(edge_orbit_min)
    proj = vertex_map[total.edges[edge_reps]]
    pair_keys = np.unique(
        proj.min(axis=1).astype(np.int64) * reps.size + proj.max(axis=1)
    )
    if pair_keys.size != edge_reps.size:
        raise MeshError(
            "quotient has parallel edges between the same vertices; "
            "not a simplicial complex"
        )

    # Quotient metric from representative edge lengths (deck maps are
    # isometries, so lengths are constant along orbits).
    nq = reps.size
    lo = proj.min(axis=1)
    hi = proj.max(axis=1)
    order = np.argsort(lo.astype(np.int64) * nq + hi)
    q_lengths = total.edge_lengths[edge_reps][order]

    quotient = SimplicialSurface(
        q_tris,
        edge_lengths=q_lengths,
        name=f"{total.name}/deck{len(deck)}",
    )
    return QuotientCover(total, quotient, deck, vertex_map, tri_map, fundamental)


class IntegralCheck:
    """Two independent evaluations of the same discrete integral."""

    def __init__(self, lhs, rhs):
        self.lhs = float(lhs)
        self.rhs = float(rhs)
        self.abs_err = abs(self.lhs - self.rhs)
        scale = max(abs(self.lhs), abs(self.rhs), 1.0)
        self.rel_err = self.abs_err / scale

    def __repr__(self):
        return f"IntegralCheck(lhs={self.lhs!r}, rhs={self.rhs!r}, abs_err={self.abs_err:.3g})"


def quotient_integral_check(cover, f):
    """Compare a quotient integral against its fundamental-domain evaluation.

    ``f`` is a function on quotient vertices.  The left side integrates on
    the quotient with lumped vertex areas; the right side integrates the
    pullback over the fundamental domain upstairs, triangle by triangle.
    The two sums agree to round-off for any f.
    """
    f = np.asarray(getattr(f, "values", f), dtype=float)
    if f.shape != (cover.quotient.n_vertices,):
        raise ValueError(
            f"f must be a ({cover.quotient.n_vertices},) array on quotient vertices"
        )
    lhs = float(np.dot(f, cover.quotient.vertex_areas))
    tris = cover.total.triangles[cover.fundamental_triangles]
    pulled = f[cover.vertex_map[tris]]
    rhs = float(
        np.dot(pulled.mean(axis=1), cover.total.areas[cover.fundamental_triangles])
    )
    return IntegralCheck(lhs, rhs)


def product_integral_check(m1, cover, f, rel_tol=1e-12):
    """Check the product-space integral identity with the group acting on
    the second factor only.

    ``f`` may be a vector on the vertices of ``m1`` or an
    (m1.n_vertices, quotient.n_vertices) table; a table must be constant
    across the second axis, since the identity only holds for functions
    pulled back from the first factor.  The left side is the literal double
    sum over the product of ``m1`` and the quotient; the right side is the
    fundamental-domain area upstairs times the integral over ``m1``.
    """
    f = np.asarray(getattr(f, "values", f), dtype=float)
    nq = cover.quotient.n_vertices
    if f.ndim == 2:
        if f.shape != (m1.n_vertices, nq):
            raise ValueError(
                f"f table must have shape ({m1.n_vertices}, {nq}), got {f.shape}"
            )
        spread = np.max(np.abs(f - f[:, :1]))
        scale = max(np.max(np.abs(f)), 1.0)
        if spread > rel_tol * scale:
            raise ValueError(
                "f depends on the second factor; the product identity needs "
                "a function pulled back from the first factor"
            )
        f1 = f[:, 0]
    elif f.shape == (m1.n_vertices,):
        f1 = f
    else:
        raise ValueError(f"f must have shape ({m1.n_vertices},) or a product table")

    lhs = float(np.sum(np.outer(f1 * m1.vertex_areas, cover.quotient.vertex_areas)))
    domain_area = float(cover.total.areas[cover.fundamental_triangles].sum())
    rhs = domain_area * float(np.dot(f1, m1.vertex_areas))
    return IntegralCheck(lhs, rhs)
