"""Triangulations of the polygonal parameter domain.

Meshes are immutable after construction.  Interior edges store a fixed
orientation (side 1 = the adjacent triangle with the smaller index) and the
flat unit normal pointing out of side 1, so jump terms are reproducible.
Boundary edges carry one of the labels D (clamped), S (soft simply
supported), F (free).

Structured rectangle meshes are the default; newest-vertex bisection with
conforming closure provides shape-regular local refinement.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

BOUNDARY_LABELS = ("D", "S", "F")
INTERIOR = "interior"


class MeshError(Exception):
    """Raised for invalid mesh construction or degenerate elements."""


@dataclass(frozen=True)
class Edge:
    """A mesh edge: endpoints (global vertex ids), adjacency and label.

    ``tri1`` is side 1 (the lower adjacent triangle index); ``tri2`` is -1
    for boundary edges.  ``normal`` is the flat unit normal out of side 1
    (out of the domain for boundary edges), ``length`` the flat length.
    """

    v0: int
    v1: int
    tri1: int
    tri2: int
    label: str
    normal: np.ndarray
    length: float

    @property
    def is_interior(self):
        return self.tri2 >= 0


class Mesh:
    """Conforming triangulation with labeled boundary edges.

    Parameters
    ----------
    vertices : (nv, 2) array
    triangles : (nt, 3) int array
        Counterclockwise vertex triples.  Vertex 0 of each triangle is its
        "newest vertex": the refinement edge for bisection is the opposite
        edge (vertices 1, 2).
    boundary_labels : dict
        Maps frozenset({v0, v1}) of each boundary edge to a label in
        {"D", "S", "F"}.
    """

    def __init__(self, vertices, triangles, boundary_labels):
        self.vertices = np.asarray(vertices, dtype=float)
        self.triangles = np.asarray(triangles, dtype=int)
        if self.vertices.ndim != 2 or self.vertices.shape[1] != 2:
            raise MeshError("vertices must be an (nv, 2) array")
        if self.triangles.ndim != 2 or self.triangles.shape[1] != 3:
            raise MeshError("triangles must be an (nt, 3) array")
        self._check_orientation()
        self._build_edges(dict(boundary_labels))
        self._compute_element_metrics()

    # -- construction helpers -------------------------------------------------

    def _check_orientation(self):
        v = self.vertices
        t = self.triangles
        e1 = v[t[:, 1]] - v[t[:, 0]]
        e2 = v[t[:, 2]] - v[t[:, 0]]
        area2 = e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0]
        if np.any(area2 <= 0):
            bad = int(np.argmin(area2))
            raise MeshError(f"triangle {bad} is degenerate or clockwise")

    def _build_edges(self, boundary_labels):
        edge_tris = {}
        for it, tri in enumerate(self.triangles):
            for k in range(3):
                key = frozenset((int(tri[(k + 1) % 3]), int(tri[(k + 2) % 3])))
                edge_tris.setdefault(key, []).append(it)

        edges = []
        edge_index = {}
        for key in sorted(edge_tris, key=lambda k: tuple(sorted(k))):
            tris = sorted(edge_tris[key])
            v0, v1 = sorted(key)
            if len(tris) > 2:
                raise MeshError(f"edge {key} has {len(tris)} adjacent triangles")
            if len(tris) == 2:
                tri1, tri2 = tris
                label = INTERIOR
            else:
                tri1, tri2 = tris[0], -1
                label = boundary_labels.get(key)
                if label is None:
                    raise MeshError(f"boundary edge {tuple(sorted(key))} has no label")
                if label not in BOUNDARY_LABELS:
                    raise MeshError(f"invalid boundary label {label!r}")
            p0, p1 = self.vertices[v0], self.vertices[v1]
            tang = p1 - p0
            length = float(np.hypot(*tang))
            if length == 0.0:
                raise MeshError("zero-length edge")
            nrm = np.array([tang[1], -tang[0]]) / length
            # orient out of side 1: away from side 1's opposite vertex
            opp = [w for w in self.triangles[tri1] if w != v0 and w != v1][0]
            if nrm @ (self.vertices[opp] - p0) > 0:
                nrm = -nrm
            edge_index[key] = len(edges)
            edges.append(
                Edge(v0=v0, v1=v1, tri1=tri1, tri2=tri2, label=label,
                     normal=nrm, length=length)
            )
        self.edges = tuple(edges)
        self._edge_index = edge_index

        tri_edges = np.empty((len(self.triangles), 3), dtype=int)
        for it, tri in enumerate(self.triangles):
            for k in range(3):
                key = frozenset((int(tri[(k + 1) % 3]), int(tri[(k + 2) % 3])))
                tri_edges[it, k] = edge_index[key]
        self.tri_edges = tri_edges  # local edge k is opposite local vertex k

    def _compute_element_metrics(self):
        nt = len(self.triangles)
        self.h_tri = np.empty(nt)
        self.area_tri = np.empty(nt)
        self.shape_ratio_tri = np.empty(nt)
        for it, tri in enumerate(self.triangles):
            p = self.vertices[tri]
            sides = [
                np.linalg.norm(p[1] - p[0]),
                np.linalg.norm(p[2] - p[1]),
                np.linalg.norm(p[0] - p[2]),
            ]
            a, b, c = sides
            area = 0.5 * abs(
                (p[1][0] - p[0][0]) * (p[2][1] - p[0][1])
                - (p[2][0] - p[0][0]) * (p[1][1] - p[0][1])
            )
            if area <= 0:
                raise MeshError(f"triangle {it} has zero area")
            s = 0.5 * (a + b + c)
            circum_r = a * b * c / (4.0 * area)
            in_r = area / s
            self.h_tri[it] = max(sides)
            self.area_tri[it] = area
            self.shape_ratio_tri[it] = circum_r / in_r

    # -- queries ---------------------------------------------------------------

    @property
    def n_vertices(self):
        return len(self.vertices)

    @property
    def n_triangles(self):
        return len(self.triangles)

    @property
    def h_max(self):
        return float(self.h_tri.max())

    def interior_edges(self):
        return [e for e in self.edges if e.is_interior]

    def boundary_edges(self, labels=None):
        if labels is None:
            return [e for e in self.edges if not e.is_interior]
        return [e for e in self.edges if e.label in labels]

    def boundary_label_map(self):
        return {
            frozenset((e.v0, e.v1)): e.label
            for e in self.edges
            if not e.is_interior
        }

    def element_free_edges(self, it):
        """Local edge indices (opposite-vertex convention) labeled F."""
        return [
            k for k in range(3) if self.edges[self.tri_edges[it, k]].label == "F"
        ]

    def element_corners(self, it):
        return self.vertices[self.triangles[it]]

    def total_area(self):
        return float(self.area_tri.sum())


def shape_regularity(mesh):
    """Max over triangles of circumscribed/inscribed circle diameter ratio."""
    return float(mesh.shape_ratio_tri.max())


def build_structured(bounds, n, side_labels):
    """Structured triangulation of a rectangle with 2 n^2 triangles.

    Parameters
    ----------
    bounds : (x0, x1, y0, y1)
        Rectangle extent, x0 < x1 and y0 < y1.
    n : int
        Subdivisions per side (n >= 1).
    side_labels : dict
        Labels for "bottom", "right", "top", "left", each in {"D", "S", "F"}.

    Each cell is split along its southwest-northeast diagonal, and triangle
    tuples are rotated so that the refinement edge is the diagonal.
    """
    if n < 1:
        raise MeshError("n must be >= 1")
    x0, x1, y0, y1 = map(float, bounds)
    if not (x1 > x0 and y1 > y0):
        raise MeshError("invalid rectangle bounds")
    required = {"bottom", "right", "top", "left"}
    if set(side_labels) != required:
        raise MeshError(f"side_labels must have exactly the keys {sorted(required)}")
    for side, lab in side_labels.items():
        if lab not in BOUNDARY_LABELS:
            raise MeshError(f"invalid label {lab!r} for side {side!r}")

    xs = np.linspace(x0, x1, n + 1)
    ys = np.linspace(y0, y1, n + 1)
    vid = lambda i, j: j * (n + 1) + i
    vertices = np.array([(xs[i], ys[j]) for j in range(n + 1) for i in range(n + 1)])

    triangles = []
    for j in range(n):
        for i in range(n):
            v00 = vid(i, j)
            v10 = vid(i + 1, j)
            v01 = vid(i, j + 1)
            v11 = vid(i + 1, j + 1)
            # newest vertex first; refinement edge = diagonal (v00, v11)
            triangles.append((v10, v11, v00))
            triangles.append((v01, v00, v11))

    labels = {}
    for i in range(n):
        labels[frozenset((vid(i, 0), vid(i + 1, 0)))] = side_labels["bottom"]
        labels[frozenset((vid(i, n), vid(i + 1, n)))] = side_labels["top"]
    for j in range(n):
        labels[frozenset((vid(0, j), vid(0, j + 1)))] = side_labels["left"]
        labels[frozenset((vid(n, j), vid(n, j + 1)))] = side_labels["right"]

    return Mesh(vertices, triangles, labels)


def _split_label(labels, va, vb, vm):
    key = frozenset((va, vb))
    if key in labels:
        lab = labels.pop(key)
        labels[frozenset((va, vm))] = lab
        labels[frozenset((vm, vb))] = lab


def refine_uniform(mesh):
    """Red refinement: every triangle into 4 similar children."""
    vertices = list(map(tuple, mesh.vertices))
    labels = mesh.boundary_label_map()
    midpoint = {}

    def mid(a, b):
        key = frozenset((a, b))
        if key not in midpoint:
            vertices.append(
                tuple(0.5 * (np.asarray(vertices[a]) + np.asarray(vertices[b])))
            )
            midpoint[key] = len(vertices) - 1
            _split_label(labels, a, b, midpoint[key])
        return midpoint[key]

    triangles = []
    for tri in mesh.triangles:
        v0, v1, v2 = map(int, tri)
        m01, m12, m20 = mid(v0, v1), mid(v1, v2), mid(v2, v0)
        # corner children keep the parent's newest-vertex role; the central
        # child refines toward the edge parallel to the parent's.
        triangles.extend(
            [(v0, m01, m20), (v1, m12, m01), (v2, m20, m12), (m12, m20, m01)]
        )
    return Mesh(np.array(vertices), triangles, labels)


def refine_bisect(mesh, marked):
    """Newest-vertex bisection of ``marked`` triangles with conforming closure.

    Triangle tuples store the newest vertex first; the refinement edge is
    the opposite one.  Closure bisects recursively until no hanging vertex
    remains, which terminates for compatibly ordered meshes and keeps the
    shape-regularity ratio within a fixed multiple of the parent's.
    """
    marked = set(int(m) for m in marked)
    if not marked:
        raise MeshError("marked set must be nonempty for bisection refinement")
    if marked - set(range(mesh.n_triangles)):
        raise MeshError("marked set contains invalid triangle indices")

    vertices = list(map(tuple, mesh.vertices))
    labels = mesh.boundary_label_map()
    midpoint = {}

    def mid(a, b):
        key = frozenset((a, b))
        if key not in midpoint:
            vertices.append(
                tuple(0.5 * (np.asarray(vertices[a]) + np.asarray(vertices[b])))
            )
            midpoint[key] = len(vertices) - 1
            _split_label(labels, a, b, midpoint[key])
        return midpoint[key]

    def bisect(tri):
        p, a, b = tri
        m = mid(a, b)
        return [(m, p, a), (m, b, p)]

    triangles = [tuple(map(int, t)) for t in mesh.triangles]
    work = [(t, i in marked) for i, t in enumerate(triangles)]
    result = []
    # bisect marked triangles, then sweep for hanging vertices until stable
    pending = [t for t, m in work if m]
    keep = [t for t, m in work if not m]
    for t in pending:
        result.extend(bisect(t))
    result = keep + result

    for _sweep in range(200):
        changed = False
        next_result = []
        for tri in result:
            has_hanging = any(
                frozenset((tri[(k + 1) % 3], tri[(k + 2) % 3])) in midpoint
                for k in range(3)
            )
            if has_hanging:
                # bisection must go through the refinement edge; if the
                # hanging vertex is elsewhere, bisecting exposes it to the
                # children whose refinement edge it lies on.
                next_result.extend(bisect(tri))
                changed = True
            else:
                next_result.append(tri)
        result = next_result
        if not changed:
            break
    else:
        raise MeshError("conforming closure did not terminate")

    return Mesh(np.array(vertices), result, labels)


def refine(mesh, mode="uniform", marked=None):
    """Refine ``mesh`` uniformly or by marked newest-vertex bisection."""
    if mode == "uniform":
        return refine_uniform(mesh)
    if mode == "marked-bisection":
        return refine_bisect(mesh, marked if marked is not None else ())
    raise MeshError(f"unknown refinement mode {mode!r}")


def dump_mesh(mesh, path):
    """Write the mesh in a plain-text format (for golden tests)."""
    with open(path, "w") as f:
        f.write(f"vertices {mesh.n_vertices}\n")
        for p in mesh.vertices:
            f.write(f"v {float(p[0])!r} {float(p[1])!r}\n")
        f.write(f"triangles {mesh.n_triangles}\n")
        for t in mesh.triangles:
            f.write(f"t {t[0]} {t[1]} {t[2]}\n")
        boundary = [e for e in mesh.edges if not e.is_interior]
        f.write(f"boundary_edges {len(boundary)}\n")
        for e in boundary:
            f.write(f"e {e.v0} {e.v1} {e.label}\n")


def load_mesh(path):
    """Read a mesh written by :func:`dump_mesh`."""
    vertices = []
    triangles = []
    labels = {}
    with open(path) as f:
        for line in f:
            parts = line.split()
            if not parts:
                continue
            if parts[0] == "v":
                vertices.append((float(parts[1]), float(parts[2])))
            elif parts[0] == "t":
                triangles.append(tuple(int(x) for x in parts[1:4]))
            elif parts[0] == "e":
                labels[frozenset((int(parts[1]), int(parts[2])))] = parts[3]
    return Mesh(np.array(vertices), triangles, labels)
