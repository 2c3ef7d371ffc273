"""Generate the bundled genus-2 test mesh.

Runs marching cubes on the product of two overlapping torus implicits
(a smoothed union: two rings side by side sharing a neck), keeps the
largest connected component, and validates the result as a closed
oriented surface of genus 2 before writing src/hamflow/data/genus2.off.

The bundled file is frozen; re-running this script is only needed when
regenerating the fixture from scratch.  Counts printed here are recorded
in the test suite.
"""

import sys
from pathlib import Path

import numpy as np
from skimage.measure import marching_cubes

sys.path.insert(0, str(Path(__file__).resolve().parents[1] / "src"))

from hamflow.mesh import SimplicialSurface, save_off  # noqa: E402

MAJOR = 1.0
MINOR = 0.35
CENTER = 1.08
BLEND = 0.04
RESOLUTION = 80


def torus_implicit(x, y, z, cx):
    q = (x - cx) ** 2 + y**2
    return (q + z**2 + MAJOR**2 - MINOR**2) ** 2 - 4.0 * MAJOR**2 * q


def field(x, y, z):
    return torus_implicit(x, y, z, -CENTER) * torus_implicit(x, y, z, CENTER) - BLEND


def field_gradient(p):
    x, y, z = p[:, 0], p[:, 1], p[:, 2]
    grads = []
    values = []
    for cx in (-CENTER, CENTER):
        q = (x - cx) ** 2 + y**2
        s = q + z**2 + MAJOR**2 - MINOR**2
        t = s**2 - 4.0 * MAJOR**2 * q
        coef = 2.0 * s - 4.0 * MAJOR**2
        g = np.column_stack(
            [coef * 2.0 * (x - cx), coef * 2.0 * y, 4.0 * s * z]
        )
        grads.append(g)
        values.append(t)
    return values[1][:, None] * grads[0] + values[0][:, None] * grads[1]


def smooth_on_surface(verts, faces, rounds=25, relax=0.5):
    """Tangential Laplacian smoothing with reprojection onto the zero set.

    Marching cubes emits sliver triangles that wreck downstream
    conditioning; relaxing each vertex toward its neighbor centroid and
    Newton-projecting back onto the implicit surface equalizes the
    triangles without changing the topology.
    """
    n = len(verts)
    edges = np.vstack([faces[:, [0, 1]], faces[:, [1, 2]], faces[:, [2, 0]]])
    verts = verts.copy()
    for _ in range(rounds):
        centroid = np.zeros_like(verts)
        degree = np.zeros(n)
        np.add.at(centroid, edges[:, 0], verts[edges[:, 1]])
        np.add.at(centroid, edges[:, 1], verts[edges[:, 0]])
        np.add.at(degree, edges[:, 0], 1.0)
        np.add.at(degree, edges[:, 1], 1.0)
        centroid /= degree[:, None]
        verts = verts + relax * (centroid - verts)
        for _ in range(3):
            value = field(verts[:, 0], verts[:, 1], verts[:, 2])
            grad = field_gradient(verts)
            gg = np.einsum("vd,vd->v", grad, grad)
            verts = verts - (value / np.where(gg > 0, gg, 1.0))[:, None] * grad
    return verts


def largest_component(verts, faces):
    import scipy.sparse as sp
    from scipy.sparse.csgraph import connected_components

    edges = np.vstack([faces[:, [0, 1]], faces[:, [1, 2]], faces[:, [2, 0]]])
    n = len(verts)
    graph = sp.coo_matrix(
        (np.ones(len(edges)), (edges[:, 0], edges[:, 1])), shape=(n, n)
    )
    n_comp, labels = connected_components(graph, directed=False)
    if n_comp > 1:
        counts = np.bincount(labels)
        keep = counts.argmax()
        vmask = labels == keep
        remap = -np.ones(n, dtype=np.int64)
        remap[vmask] = np.arange(vmask.sum())
        fmask = vmask[faces].all(axis=1)
        verts = verts[vmask]
        faces = remap[faces[fmask]]
    return verts, faces


def main():
    lim = CENTER + MAJOR + MINOR + 0.4
    axis = np.linspace(-lim, lim, RESOLUTION)
    spacing = axis[1] - axis[0]
    x, y, z = np.meshgrid(axis, axis, axis, indexing="ij")
    volume = field(x, y, z)
    verts, faces, _, _ = marching_cubes(volume, level=0.0, spacing=(spacing,) * 3)
    verts = verts + np.array([-lim, -lim, -lim])
    verts, faces = largest_component(verts, np.asarray(faces, dtype=np.int64))
    verts = smooth_on_surface(verts, faces)

    surface = SimplicialSurface(faces, vertices=verts, name="genus2")
    chi = surface.euler_characteristic()
    print(
        f"V={surface.n_vertices} E={surface.n_edges} F={surface.n_triangles} "
        f"chi={chi} genus={surface.genus} components={surface.n_components}"
    )
    areas = surface.areas
    print(
        f"area total={areas.sum():.4f} min={areas.min():.3e} "
        f"h_max={surface.h_max:.4f}"
    )
    if surface.genus != 2 or surface.n_components != 1:
        raise SystemExit("fixture is not a connected genus-2 surface; tune knobs")

    out = Path(__file__).resolve().parents[1] / "src" / "hamflow" / "data" / "genus2.off"
    save_off(surface, out)
    print(f"wrote {out}")


if __name__ == "__main__":
    main()
