# -*- coding: utf-8 -*-

"""
Triangular meshes: representation, generators and Lagrangian motion.

A mesh is an immutable unstructured triangulation with labelled boundary
edges.  The same class serves two roles in the solvers: a fixed Eulerian
background mesh covering the whole flow domain, and a moving Lagrangian
mesh for the solid, which is translated vertex-by-vertex each time step.
"""

import io

import numpy as np

__all__ = [
    "Mesh",
    "MeshError",
    "InvertedElementError",
    "generate_unit_square",
    "generate_disc",
    "load_msh",
    "move_mesh",
]


class MeshError(Exception):
    """Invalid mesh data (connectivity, orientation or file format)."""


class InvertedElementError(MeshError):
    """A moved triangle has non-positive area.

    Attributes
    ----------
    element : int
        index of the first inverted triangle
    """

    def __init__(self, element, area):
        self.element = int(element)
        self.area = float(area)
        super().__init__(
            "element %d inverted after motion (signed area %.3e); "
            "the time step is too large" % (self.element, self.area)
        )


def _signed_areas(vertices, triangles):
    p0 = vertices[triangles[:, 0]]
    p1 = vertices[triangles[:, 1]]
    p2 = vertices[triangles[:, 2]]
    return 0.5 * ((p1[:, 0] - p0[:, 0]) * (p2[:, 1] - p0[:, 1])
                  - (p2[:, 0] - p0[:, 0]) * (p1[:, 1] - p0[:, 1]))


class Mesh:
    """
    Unstructured triangulation with labelled boundary segments.

    Parameters
    ----------
    vertices : array, shape (V, 2)
        vertex coordinates
    triangles : array, shape (T, 3)
        vertex indices per triangle, counter-clockwise
    boundary_edges : array, shape (B, 2)
        vertex index pairs of the boundary segments
    boundary_labels : array, shape (B,)
        integer label of each boundary segment

    Attributes
    ----------
    edges : array, shape (E, 2)
        unique edges as sorted vertex pairs, in lexicographic order
    tri_edges : array, shape (T, 3)
        global edge index of local edge k = (v_k, v_{k+1 mod 3})
    num_holes : int
        number of interior holes, derived from the Euler relation

    The constructor validates positive orientation, edge-manifoldness
    (boundary edges in exactly one triangle, interior edges in exactly
    two) and the Euler relation V - E + T = 1 - num_holes.  All arrays
    are frozen after construction; motion produces a new mesh.
    """

    def __init__(self, vertices, triangles, boundary_edges, boundary_labels):
        self.vertices = np.ascontiguousarray(vertices, dtype=np.float64)
        self.triangles = np.ascontiguousarray(triangles, dtype=np.int64)
        self.boundary_edges = np.ascontiguousarray(boundary_edges, dtype=np.int64)
        self.boundary_labels = np.ascontiguousarray(boundary_labels, dtype=np.int64)

        if self.vertices.ndim != 2 or self.vertices.shape[1] != 2:
            raise MeshError("vertices must have shape (V, 2)")
        if self.triangles.ndim != 2 or self.triangles.shape[1] != 3:
            raise MeshError("triangles must have shape (T, 3)")
        if self.boundary_edges.shape[0] != self.boundary_labels.shape[0]:
            raise MeshError("boundary_edges and boundary_labels length mismatch")
        if self.triangles.size and self.triangles.max() >= len(self.vertices):
            raise MeshError("triangle references a missing vertex")

        areas = _signed_areas(self.vertices, self.triangles)
        bad = np.nonzero(areas <= 0.0)[0]
        if bad.size:
            raise MeshError("triangle %d has non-positive area %.3e"
                            % (bad[0], areas[bad[0]]))

        # Unique edge table, lexicographically sorted: this ordering is the
        # contract used for midside degrees of freedom downstream.
        raw = np.concatenate([self.triangles[:, [0, 1]],
                              self.triangles[:, [1, 2]],
                              self.triangles[:, [2, 0]]])
        raw_sorted = np.sort(raw, axis=1)
        self.edges, inverse, counts = np.unique(
            raw_sorted, axis=0, return_inverse=True, return_counts=True)
        self.tri_edges = inverse.reshape(3, -1).T.copy()

        if counts.max(initial=0) > 2:
            eid = int(np.argmax(counts))
            raise MeshError("edge %s shared by more than two triangles"
                            % (self.edges[eid],))

        boundary_set_ids = np.nonzero(counts == 1)[0]
        declared = np.sort(np.sort(self.boundary_edges, axis=1), axis=0)
        actual = self.edges[boundary_set_ids]
        actual = actual[np.lexsort((actual[:, 1], actual[:, 0]))]
        declared = np.sort(self.boundary_edges, axis=1)
        declared = declared[np.lexsort((declared[:, 1], declared[:, 0]))]
        if declared.shape != actual.shape or not np.array_equal(declared, actual):
            raise MeshError(
                "declared boundary edges do not match the topological "
                "boundary (%d declared, %d actual)"
                % (len(self.boundary_edges), len(actual)))

        loops = self._count_boundary_loops()
        euler = len(self.vertices) - len(self.edges) + len(self.triangles)
        self.num_holes = 1 - euler
        if self.num_holes != loops - 1:
            raise MeshError(
                "Euler relation inconsistent: V-E+T=%d but %d boundary loops"
                % (euler, loops))

        for arr in (self.vertices, self.triangles, self.boundary_edges,
                    self.boundary_labels, self.edges, self.tri_edges):
            arr.setflags(write=False)

    def _count_boundary_loops(self):
        nxt = {}
        for a, b in self.boundary_edges:
            nxt.setdefault(int(a), []).append(int(b))
            nxt.setdefault(int(b), []).append(int(a))
        seen = set()
        loops = 0
        for start in nxt:
            if start in seen:
                continue
            loops += 1
            stack = [start]
            while stack:
                v = stack.pop()
                if v in seen:
                    continue
                seen.add(v)
                stack.extend(nxt[v])
        return loops

    @property
    def num_vertices(self):
        return len(self.vertices)

    @property
    def num_triangles(self):
        return len(self.triangles)

    @property
    def num_edges(self):
        return len(self.edges)

    def areas(self):
        """Signed triangle areas (all positive by construction)."""
        return _signed_areas(self.vertices, self.triangles)

    def diameter(self):
        """Length of the longest triangle edge."""
        d = self.vertices[self.edges[:, 0]] - self.vertices[self.edges[:, 1]]
        return float(np.sqrt((d * d).sum(axis=1)).max())

    def label_set(self):
        return sorted(set(self.boundary_labels.tolist()))

    def with_vertices(self, vertices):
        """New mesh sharing this connectivity with replaced coordinates."""
        return Mesh(vertices, self.triangles, self.boundary_edges,
                    self.boundary_labels)


def generate_unit_square(n):
    """
    Structured crossed-diagonal triangulation of [0, 1]^2.

    Parameters
    ----------
    n : int
        subdivisions per side (n >= 1)

    Returns
    -------
    Mesh
        (n+1)^2 vertices and 2 n^2 triangles; diagonal orientation
        alternates per cell.  Boundary labels: bottom=1, right=2,
        top=3, left=4.
    """
    n = int(n)
    if n < 1:
        raise ValueError("subdivision count must be >= 1, got %d" % n)
    line = np.linspace(0.0, 1.0, n + 1)
    X, Y = np.meshgrid(line, line)
    vertices = np.column_stack([X.ravel(), Y.ravel()])

    def vid(i, j):
        return j * (n + 1) + i

    tris = []
    for j in range(n):
        for i in range(n):
            v00, v10 = vid(i, j), vid(i + 1, j)
            v01, v11 = vid(i, j + 1), vid(i + 1, j + 1)
            if (i + j) % 2 == 0:
                tris.append((v00, v10, v11))
                tris.append((v00, v11, v01))
            else:
                tris.append((v00, v10, v01))
                tris.append((v10, v11, v01))

    bedges = []
    blabels = []
    for i in range(n):
        bedges.append((vid(i, 0), vid(i + 1, 0)))
        blabels.append(1)
        bedges.append((vid(n, i), vid(n, i + 1)))
        blabels.append(2)
        bedges.append((vid(i, n), vid(i + 1, n)))
        blabels.append(3)
        bedges.append((vid(0, i), vid(0, i + 1)))
        blabels.append(4)
    return Mesh(vertices, np.array(tris), np.array(bedges), np.array(blabels))


def generate_disc(center, r, n, rings=None, label=1):
    """
    Polar triangulation of a disc.

    Parameters
    ----------
    center : pair of float
    r : float
        radius (> 0)
    n : int
        boundary segments (>= 8); vertex count grows ~ n^2 / (4*pi)
    rings : int, optional
        radial rings; defaults to round(n / 6) which gives near-uniform
        triangle size
    label : int
        boundary label for the circle

    Points are placed on concentric rings (ring k holds round(n*k/rings)
    points) and triangulated by Delaunay; the disc is convex so the
    triangulation covers it exactly, with the polygonal boundary through
    the outer ring.
    """
    from scipy.spatial import Delaunay

    r = float(r)
    n = int(n)
    if r <= 0.0:
        raise ValueError("disc radius must be positive, got %g" % r)
    if n < 8:
        raise ValueError("need at least 8 boundary segments, got %d" % n)
    if rings is None:
        rings = max(1, int(round(n / 6.0)))
    cx, cy = float(center[0]), float(center[1])

    pts = [(cx, cy)]
    for k in range(1, rings + 1):
        nk = max(3, int(round(n * k / rings)))
        if k == rings:
            nk = n
        rad = r * k / rings
        # stagger alternate rings by half a segment for rounder triangles
        phase = np.pi / nk * (k % 2)
        ang = phase + 2.0 * np.pi * np.arange(nk) / nk
        for a in ang:
            pts.append((cx + rad * np.cos(a), cy + rad * np.sin(a)))
    pts = np.asarray(pts)

    dela = Delaunay(pts)
    tris = dela.simplices.copy()
    # qhull does not guarantee orientation
    areas = _signed_areas(pts, tris)
    flip = areas < 0
    tris[flip] = tris[flip][:, [0, 2, 1]]
    # degenerate slivers cannot occur for ring layouts, but guard anyway
    keep = np.abs(_signed_areas(pts, tris)) > 1e-14 * r * r
    tris = tris[keep]

    hull = dela.convex_hull
    labels = np.full(len(hull), int(label))
    return Mesh(pts, tris, hull, labels)


def _msh_error(lineno, message):
    return MeshError("MSH parse error at line %d: %s" % (lineno, message))


def load_msh(stream):
    """
    Read a (version 2.2, ASCII) MSH file.

    Parameters
    ----------
    stream : file-like or str
        open text stream, or the file content itself

    Only the ``$Nodes`` and ``$Elements`` sections are interpreted.
    Element type 2 (3-node triangle) populates the triangulation and
    type 1 (2-node line) the boundary, carrying its first tag as the
    boundary label.  The z coordinate of nodes is ignored; all other
    sections are skipped verbatim.  Malformed input raises ``MeshError``
    with the offending line number.
    """
    if isinstance(stream, str):
        stream = io.StringIO(stream)
    lines = stream.read().splitlines()

    i = 0
    nodes = {}
    node_order = []
    tri_nodes = []
    line_elems = []

    def expect(cond, lineno, msg):
        if not cond:
            raise _msh_error(lineno, msg)

    nlines = len(lines)
    saw_nodes = saw_elements = False
    while i < nlines:
        line = lines[i].strip()
        i += 1
        if not line.startswith("$"):
            continue
        section = line[1:]
        if section == "MeshFormat":
            expect(i < nlines, i, "truncated $MeshFormat")
            parts = lines[i].split()
            expect(len(parts) >= 1 and parts[0].startswith("2."), i + 1,
                   "unsupported MSH version %r (need 2.x ASCII)"
                   % (parts[0] if parts else "?",))
        elif section == "Nodes":
            expect(i < nlines, i, "truncated $Nodes")
            try:
                count = int(lines[i])
            except ValueError:
                raise _msh_error(i + 1, "node count expected")
            i += 1
            for k in range(count):
                expect(i < nlines, i, "truncated node list")
                parts = lines[i].split()
                expect(len(parts) >= 3, i + 1,
                       "node needs 'index x y [z]', got %r" % lines[i])
                try:
                    tag = int(parts[0])
                    xy = (float(parts[1]), float(parts[2]))
                except ValueError:
                    raise _msh_error(i + 1, "malformed node record %r" % lines[i])
                nodes[tag] = xy
                node_order.append(tag)
                i += 1
            saw_nodes = True
        elif section == "Elements":
            expect(i < nlines, i, "truncated $Elements")
            try:
                count = int(lines[i])
            except ValueError:
                raise _msh_error(i + 1, "element count expected")
            i += 1
            for k in range(count):
                expect(i < nlines, i, "truncated element list")
                parts = lines[i].split()
                expect(len(parts) >= 3, i + 1, "malformed element record")
                try:
                    etype = int(parts[1])
                    ntags = int(parts[2])
                    tags = [int(t) for t in parts[3:3 + ntags]]
                    conn = [int(t) for t in parts[3 + ntags:]]
                except ValueError:
                    raise _msh_error(i + 1, "malformed element record %r" % lines[i])
                if etype == 1:
                    expect(len(conn) == 2, i + 1, "line element needs 2 nodes")
                    label = tags[0] if tags else 0
                    line_elems.append((conn[0], conn[1], label, i + 1))
                elif etype == 2:
                    expect(len(conn) == 3, i + 1, "triangle needs 3 nodes")
                    tri_nodes.append((conn[0], conn[1], conn[2], i + 1))
                elif etype == 15:
                    pass  # point elements carry no geometry we use
                else:
                    raise _msh_error(
                        i + 1, "unsupported element type %d "
                        "(only 2-node lines and 3-node triangles)" % etype)
                i += 1
            saw_elements = True
        # any other section: skip until its $End marker
        elif not section.startswith("End"):
            while i < nlines and not lines[i].strip().startswith("$End"):
                i += 1

    if not saw_nodes or not saw_elements:
        raise MeshError("missing $Nodes or $Elements section")

    index = {tag: k for k, tag in enumerate(node_order)}
    vertices = np.array([nodes[t] for t in node_order], dtype=float)

    tris = np.zeros((len(tri_nodes), 3), dtype=np.int64)
    for k, (a, b, c, lineno) in enumerate(tri_nodes):
        for m, t in enumerate((a, b, c)):
            if t not in index:
                raise _msh_error(lineno, "triangle references missing node %d" % t)
            tris[k, m] = index[t]
    areas = _signed_areas(vertices, tris)
    neg = areas < 0
    tris[neg] = tris[neg][:, [0, 2, 1]]

    bedges = np.zeros((len(line_elems), 2), dtype=np.int64)
    blabels = np.zeros(len(line_elems), dtype=np.int64)
    for k, (a, b, label, lineno) in enumerate(line_elems):
        if a not in index or b not in index:
            raise _msh_error(lineno, "line references missing node")
        bedges[k] = (index[a], index[b])
        blabels[k] = label

    return Mesh(vertices, tris, bedges, blabels)


def move_mesh(mesh, vx, vy, dt):
    """
    Translate every vertex by dt times the velocity at that vertex.

    Parameters
    ----------
    mesh : Mesh
    vx, vy : FieldCoefficients
        velocity components on a quadratic space built over this mesh;
        only nodal values at vertices are used
    dt : float

    Returns
    -------
    Mesh
        same connectivity and labels on moved coordinates

    Raises
    ------
    InvertedElementError
        if any moved triangle has non-positive area
    """
    for comp in (vx, vy):
        if comp.space.mesh is not mesh:
            raise MeshError("velocity space was not built over this mesh")
    nv = mesh.num_vertices
    shift = dt * np.column_stack([vx.values[:nv], vy.values[:nv]])
    new_vertices = mesh.vertices + shift
    areas = _signed_areas(new_vertices, mesh.triangles)
    bad = np.nonzero(areas <= 0.0)[0]
    if bad.size:
        raise InvertedElementError(bad[0], areas[bad[0]])
    return mesh.with_vertices(new_vertices)
