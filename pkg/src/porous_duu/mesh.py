"""2D triangular meshes for the square and L-shaped design domains.

Meshes are structured right-triangle triangulations (each grid quad split
along one diagonal), immutable after construction.  Boundary facets carry an
Inner/Outer tag; the L-shape builder tags the two re-entrant notch edges as
Inner and everything else as Outer.
"""

from dataclasses import dataclass, field
from enum import IntEnum
from functools import cached_property

import numpy as np

from .exceptions import MeshResourceError

# Hard cap on vertices produced by the builders; guards accidental h -> 0.
DEFAULT_NODE_BUDGET = 400_000


class BoundaryTag(IntEnum):
    OUTER = 0
    INNER = 1


@dataclass(eq=False)
class Mesh:
    """Triangulated 2D domain with tagged boundary facets.

    vertices: (nv, 2) float64 coordinates.
    triangles: (nt, 3) int vertex triples, counterclockwise.
    facets: (nb, 2) int boundary edge endpoints.
    facet_tags: (nb,) int, values from BoundaryTag.
    """

    vertices: np.ndarray
    triangles: np.ndarray
    facets: np.ndarray
    facet_tags: np.ndarray

    def __post_init__(self):
        self.vertices = np.ascontiguousarray(self.vertices, dtype=np.float64)
        self.triangles = np.ascontiguousarray(self.triangles, dtype=np.int64)
        self.facets = np.ascontiguousarray(self.facets, dtype=np.int64)
        self.facet_tags = np.ascontiguousarray(self.facet_tags, dtype=np.int64)

    @property
    def num_vertices(self):
        return self.vertices.shape[0]

    @property
    def num_triangles(self):
        return self.triangles.shape[0]

    @cached_property
    def triangle_areas(self):
        p = self.vertices[self.triangles]
        d1 = p[:, 1] - p[:, 0]
        d2 = p[:, 2] - p[:, 0]
        return 0.5 * (d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0])

    @cached_property
    def facet_lengths(self):
        p = self.vertices[self.facets]
        return np.linalg.norm(p[:, 1] - p[:, 0], axis=1)

    def facets_with_tag(self, tag):
        mask = self.facet_tags == int(tag)
        return self.facets[mask], self.facet_lengths[mask]

    def nodes_with_tag(self, tag):
        """Sorted unique vertex indices on facets carrying ``tag``."""
        facets, _ = self.facets_with_tag(tag)
        return np.unique(facets)

    def total_area(self):
        return float(self.triangle_areas.sum())

    def boundary_length(self, tag=None):
        if tag is None:
            return float(self.facet_lengths.sum())
        _, lengths = self.facets_with_tag(tag)
        return float(lengths.sum())

    def validate(self):
        """Check structural invariants; raises AssertionError on violation."""
        nv = self.num_vertices
        assert self.triangles.min() >= 0 and self.triangles.max() < nv
        if self.facets.size:
            assert self.facets.min() >= 0 and self.facets.max() < nv
        assert np.all(self.triangle_areas > 0), "negative/zero triangle area"
        # Each boundary facet must belong to exactly one triangle.
        edge_count = {}
        for tri in self.triangles:
            for a, b in ((tri[0], tri[1]), (tri[1], tri[2]), (tri[2], tri[0])):
                key = (min(a, b), max(a, b))
                edge_count[key] = edge_count.get(key, 0) + 1
        boundary_edges = {k for k, c in edge_count.items() if c == 1}
        facet_set = {(min(a, b), max(a, b)) for a, b in self.facets}
        assert facet_set == boundary_edges, "facets do not match mesh boundary"
        assert set(np.unique(self.facet_tags)) <= {int(t) for t in BoundaryTag}


def _grid_triangulation(nx, ny, keep_cell=None):
    """Structured triangulation of the unit grid, optionally dropping cells.

    keep_cell(i, j) decides whether grid cell (i, j) is meshed.  Returns
    vertices, triangles and the set of boundary edges (as index pairs).
    """
    xs = np.linspace(0.0, 1.0, nx + 1)
    ys = np.linspace(0.0, 1.0, ny + 1)
    full_index = -np.ones((nx + 1, ny + 1), dtype=np.int64)

    cells = [
        (i, j)
        for i in range(nx)
        for j in range(ny)
        if keep_cell is None or keep_cell(i, j)
    ]
    used = np.zeros((nx + 1, ny + 1), dtype=bool)
    for i, j in cells:
        used[i : i + 2, j : j + 2] = True
    order = np.argwhere(used)
    for k, (i, j) in enumerate(order):
        full_index[i, j] = k
    vertices = np.column_stack([xs[order[:, 0]], ys[order[:, 1]]])

    triangles = []
    for i, j in cells:
        v00 = full_index[i, j]
        v10 = full_index[i + 1, j]
        v01 = full_index[i, j + 1]
        v11 = full_index[i + 1, j + 1]
        # Split along the (v00, v11) diagonal, counterclockwise children.
        triangles.append((v00, v10, v11))
        triangles.append((v00, v11, v01))
    triangles = np.asarray(triangles, dtype=np.int64)

    edge_count = {}
    for tri in triangles:
        for a, b in ((tri[0], tri[1]), (tri[1], tri[2]), (tri[2], tri[0])):
            key = (min(a, b), max(a, b))
            edge_count[key] = edge_count.get(key, 0) + 1
    boundary = sorted(k for k, c in edge_count.items() if c == 1)
    return vertices, triangles, np.asarray(boundary, dtype=np.int64)


def build_unit_square_mesh(nx, ny):
    """Structured triangulation of [0,1]^2; all boundary facets tagged Outer."""
    if nx < 1 or ny < 1:
        raise ValueError(f"cell counts must be >= 1, got nx={nx}, ny={ny}")
    if (nx + 1) * (ny + 1) > DEFAULT_NODE_BUDGET:
        raise MeshResourceError(
            f"square mesh {nx}x{ny} exceeds node budget {DEFAULT_NODE_BUDGET}"
        )
    vertices, triangles, boundary = _grid_triangulation(int(nx), int(ny))
    tags = np.full(boundary.shape[0], int(BoundaryTag.OUTER), dtype=np.int64)
    return Mesh(vertices, triangles, boundary, tags)


def build_lshape_mesh(h, node_budget=DEFAULT_NODE_BUDGET):
    """L-shape [0,1]^2 minus the open quadrant (0.5,1] x (0.5,1].

    The two re-entrant edges (x=0.5, y in [0.5,1]) and (y=0.5, x in [0.5,1])
    are tagged Inner; the remaining boundary is Outer.  Max edge length is
    sqrt(2)/n <= 1.5 h with n chosen as an even integer near 1/h.
    """
    if not 0.0 < h < 1.0:
        raise ValueError(f"target edge length must lie in (0, 1), got {h}")
    n = max(2, 2 * round(1.0 / (2.0 * h)))
    while np.sqrt(2.0) / n > 1.5 * h:
        n += 2
    if (n + 1) ** 2 > node_budget:
        raise MeshResourceError(
            f"L-shape at h={h} needs ~{(n + 1) ** 2} vertices, "
            f"budget is {node_budget}"
        )

    half = n // 2

    def keep(i, j):
        return not (i >= half and j >= half)

    vertices, triangles, boundary = _grid_triangulation(n, n, keep)
    tags = np.empty(boundary.shape[0], dtype=np.int64)
    for k, (a, b) in enumerate(boundary):
        pa, pb = vertices[a], vertices[b]
        mid = 0.5 * (pa + pb)
        on_x = np.isclose(pa[0], 0.5) and np.isclose(pb[0], 0.5) and mid[1] > 0.5
        on_y = np.isclose(pa[1], 0.5) and np.isclose(pb[1], 0.5) and mid[0] > 0.5
        tags[k] = int(BoundaryTag.INNER) if (on_x or on_y) else int(BoundaryTag.OUTER)
    return Mesh(vertices, triangles, boundary, tags)


def refine_uniform(mesh):
    """Split every triangle into 4 congruent children; tags are inherited."""
    nv = mesh.num_vertices
    midpoints = {}
    new_vertices = [mesh.vertices]

    def midpoint(a, b):
        key = (min(a, b), max(a, b))
        idx = midpoints.get(key)
        if idx is None:
            idx = nv + len(midpoints)
            midpoints[key] = idx
            new_vertices.append(
                0.5 * (mesh.vertices[a] + mesh.vertices[b])[None, :]
            )
        return idx

    triangles = []
    for a, b, c in mesh.triangles:
        mab, mbc, mca = midpoint(a, b), midpoint(b, c), midpoint(c, a)
        triangles.extend(
            [(a, mab, mca), (mab, b, mbc), (mca, mbc, c), (mab, mbc, mca)]
        )

    facets = []
    tags = []
    for (a, b), tag in zip(mesh.facets, mesh.facet_tags):
        m = midpoint(a, b)
        facets.extend([(a, m), (m, b)])
        tags.extend([tag, tag])

    return Mesh(
        np.vstack(new_vertices),
        np.asarray(triangles, dtype=np.int64),
        np.asarray(facets, dtype=np.int64),
        np.asarray(tags, dtype=np.int64),
    )


def write_vtk(mesh, path, point_data=None, point_vectors=None):
    """Write the mesh (and optional nodal fields) as legacy-VTK ASCII."""
    point_data = point_data or {}
    point_vectors = point_vectors or {}
    lines = [
        "# vtk DataFile Version 3.0",
        "porous-duu mesh",
        "ASCII",
        "DATASET UNSTRUCTURED_GRID",
        f"POINTS {mesh.num_vertices} double",
    ]
    for x, y in mesh.vertices:
        lines.append(f"{x:.16e} {y:.16e} 0.0")
    nt = mesh.num_triangles
    lines.append(f"CELLS {nt} {4 * nt}")
    for a, b, c in mesh.triangles:
        lines.append(f"3 {a} {b} {c}")
    lines.append(f"CELL_TYPES {nt}")
    lines.extend(["5"] * nt)
    if point_data or point_vectors:
        lines.append(f"POINT_DATA {mesh.num_vertices}")
        for name, values in point_data.items():
            values = np.asarray(values, dtype=np.float64)
            lines.append(f"SCALARS {name} double 1")
            lines.append("LOOKUP_TABLE default")
            lines.extend(f"{v:.16e}" for v in values)
        for name, vec in point_vectors.items():
            vec = np.asarray(vec, dtype=np.float64)
            lines.append(f"VECTORS {name} double")
            for vx, vy in vec:
                lines.append(f"{vx:.16e} {vy:.16e} 0.0")
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")
