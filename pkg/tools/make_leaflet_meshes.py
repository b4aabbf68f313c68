#!/usr/bin/env python3
# -*- coding: utf-8 -*-

"""
Generate the channel-with-cylinder background meshes and the leaflet
solid meshes shipped as package data (src/fsictrl/data/*.msh).

The background mesh is produced by a force-equilibrium (distmesh-style)
generator with a size field graded toward the cylinder and the leaflet
band; the solid leaflet is a mapped structured grid whose left end
follows the cylinder arc.  Run from the repository root:

    python3 tools/make_leaflet_meshes.py

Outputs are deterministic (fixed seed, fixed iteration count).
"""

import os
import sys

import numpy as np
from scipy.spatial import Delaunay

sys.path.insert(0, os.path.join(os.path.dirname(__file__), "..", "src"))
from fsictrl.mesh import Mesh  # noqa: E402

# channel geometry
L, H = 2.5, 0.41
X0, Y0, R = 0.2, 0.2, 0.05
LEAF_H = 0.02
LEAF_TIP = 0.6
THETA = 0.2013579208
X1 = X0 + R * np.cos(THETA)
Y1, Y2 = Y0 - LEAF_H / 2, Y0 + LEAF_H / 2


def dcircle(p):
    return np.hypot(p[:, 0] - X0, p[:, 1] - Y0) - R


def drectangle(p):
    return -np.minimum(np.minimum(p[:, 1], H - p[:, 1]),
                       np.minimum(p[:, 0], L - p[:, 0]))


def dchannel(p):
    return np.maximum(drectangle(p), -dcircle(p))


def dist_to_box(p, xa, xb, ya, yb):
    dx = np.maximum(np.maximum(xa - p[:, 0], p[:, 0] - xb), 0.0)
    dy = np.maximum(np.maximum(ya - p[:, 1], p[:, 1] - yb), 0.0)
    return np.hypot(dx, dy)


def size_field(p, scale, near_scale=None):
    # the near-cylinder and leaflet-band resolution anchors the leaflet
    # root (velocity interpolated from no-slip elements); coarsening it
    # lets the root creep off the cylinder, so the coarse variant keeps
    # the near field and only relaxes the bulk
    if near_scale is None:
        near_scale = scale
    h = np.full(len(p), 0.030 * scale)
    h = np.minimum(h, near_scale * (0.0068 + 0.28 * np.abs(dcircle(p))))
    band = dist_to_box(p, X0, LEAF_TIP + 0.03, Y1 - 0.01, Y2 + 0.01)
    h = np.minimum(h, near_scale * (0.0068 + 0.22 * band))
    wake = dist_to_box(p, LEAF_TIP, 1.1, Y0 - 0.08, Y0 + 0.08)
    h = np.minimum(h, scale * (0.011 + 0.25 * wake))
    return h


def distmesh(fd, fh, h0, bbox, pfix, n_iter=220, seed=20240801):
    """Persson-Strang style mesh generation by truss relaxation."""
    geps = 1e-3 * h0
    deps = np.sqrt(np.finfo(float).eps) * h0
    fscale, deltat = 1.2, 0.2

    x, y = np.meshgrid(np.arange(bbox[0], bbox[1] + h0, h0),
                       np.arange(bbox[2], bbox[3] + h0 * np.sqrt(3) / 2,
                                 h0 * np.sqrt(3) / 2))
    x[1::2] += h0 / 2
    p = np.column_stack([x.ravel(), y.ravel()])
    p = p[fd(p) < geps]
    r0 = 1.0 / fh(p) ** 2
    rng = np.random.default_rng(seed)
    p = p[rng.random(len(p)) < r0 / r0.max()]
    p = np.vstack([pfix, p])
    nfix = len(pfix)

    pold = np.full_like(p, np.inf)
    for it in range(n_iter):
        if np.max(np.hypot(*(p - pold).T)) > 0.1 * h0:
            pold = p.copy()
            tri = Delaunay(p).simplices
            cent = p[tri].mean(axis=1)
            tri = tri[fd(cent) < -geps]
            bars = np.unique(np.sort(np.concatenate(
                [tri[:, [0, 1]], tri[:, [1, 2]], tri[:, [2, 0]]]), axis=1),
                axis=0)
        vec = p[bars[:, 0]] - p[bars[:, 1]]
        lengths = np.hypot(vec[:, 0], vec[:, 1])
        mid = 0.5 * (p[bars[:, 0]] + p[bars[:, 1]])
        want = fh(mid)
        want *= fscale * np.sqrt((lengths ** 2).sum() / (want ** 2).sum())
        force = np.maximum(want - lengths, 0.0)
        fvec = vec * (force / np.maximum(lengths, 1e-30))[:, None]
        move = np.zeros_like(p)
        np.add.at(move, bars[:, 0], fvec)
        np.add.at(move, bars[:, 1], -fvec)
        move[:nfix] = 0.0
        p = p + deltat * move

        d = fd(p)
        out = d > 0
        if out.any():
            q = p[out]
            dgx = (fd(q + [deps, 0.0]) - fd(q - [deps, 0.0])) / (2 * deps)
            dgy = (fd(q + [0.0, deps]) - fd(q - [0.0, deps])) / (2 * deps)
            norm2 = dgx ** 2 + dgy ** 2
            p[out] = q - np.column_stack([d[out] * dgx / norm2,
                                          d[out] * dgy / norm2])
    return p


def snap_boundary(p, tol):
    """Project near-boundary points exactly onto the channel geometry."""
    p = p.copy()
    dc = dcircle(p)
    on_circle = np.abs(dc) < tol
    ang = np.arctan2(p[on_circle, 1] - Y0, p[on_circle, 0] - X0)
    p[on_circle, 0] = X0 + R * np.cos(ang)
    p[on_circle, 1] = Y0 + R * np.sin(ang)
    for axis, value in ((0, 0.0), (0, L), (1, 0.0), (1, H)):
        on = np.abs(p[:, axis] - value) < tol
        p[on, axis] = value
    return p


def build_mesh(p, fd, geps):
    tri = Delaunay(p).simplices
    cent = p[tri].mean(axis=1)
    tri = tri[fd(cent) < -geps]
    # orient counter-clockwise
    a = p[tri[:, 1]] - p[tri[:, 0]]
    b = p[tri[:, 2]] - p[tri[:, 0]]
    neg = a[:, 0] * b[:, 1] - a[:, 1] * b[:, 0] < 0
    tri[neg] = tri[neg][:, [0, 2, 1]]
    # drop unreferenced points
    used = np.unique(tri)
    remap = -np.ones(len(p), dtype=int)
    remap[used] = np.arange(len(used))
    return p[used], remap[tri]


def classify_boundary(p, tri):
    """Boundary edges (used once) with channel labels."""
    raw = np.sort(np.concatenate(
        [tri[:, [0, 1]], tri[:, [1, 2]], tri[:, [2, 0]]]), axis=1)
    edges, counts = np.unique(raw, axis=0, return_counts=True)
    bedges = edges[counts == 1]
    mids = 0.5 * (p[bedges[:, 0]] + p[bedges[:, 1]])
    labels = np.zeros(len(bedges), dtype=int)
    tol = 1e-9
    labels[np.abs(mids[:, 1]) < tol] = 1
    labels[np.abs(mids[:, 1] - H) < tol] = 1
    labels[np.abs(mids[:, 0] - L) < tol] = 2
    labels[np.abs(mids[:, 0]) < tol] = 3
    on_circle = np.abs(np.hypot(mids[:, 0] - X0, mids[:, 1] - Y0) - R) < R * 0.05
    labels[on_circle] = 4
    if (labels == 0).any():
        bad = mids[labels == 0]
        raise RuntimeError("unclassified boundary edges near %s" % bad[:3])
    return bedges, labels


def write_msh(path, mesh):
    with open(path, "w") as f:
        f.write("$MeshFormat\n2.2 0 8\n$EndMeshFormat\n")
        f.write("$Nodes\n%d\n" % mesh.num_vertices)
        for i, (x, y) in enumerate(mesh.vertices, start=1):
            f.write("%d %.17g %.17g 0\n" % (i, x, y))
        f.write("$EndNodes\n$Elements\n%d\n"
                % (len(mesh.boundary_edges) + mesh.num_triangles))
        eid = 1
        for (a, b), lab in zip(mesh.boundary_edges, mesh.boundary_labels):
            f.write("%d 1 2 %d %d %d %d\n" % (eid, lab, lab, a + 1, b + 1))
            eid += 1
        for a, b, c in mesh.triangles:
            f.write("%d 2 2 0 0 %d %d %d\n" % (eid, a + 1, b + 1, c + 1))
            eid += 1
        f.write("$EndElements\n")


def channel_mesh(scale, near_scale=None, n_iter=220):
    h0 = 0.0062 * (near_scale if near_scale is not None else scale)

    def fh(p):
        return size_field(p, scale, near_scale)

    corners = np.array([[0.0, 0.0], [L, 0.0], [L, H], [0.0, H]])
    p = distmesh(dchannel, fh, h0, (0.0, L, 0.0, H), corners, n_iter=n_iter)
    p = snap_boundary(p, tol=0.3 * h0)
    p, tri = build_mesh(p, dchannel, geps=1e-3 * h0)
    bedges, labels = classify_boundary(p, tri)
    return Mesh(p, tri, bedges, labels)


def leaflet_mesh(nx, ny):
    """Mapped structured grid; left end follows the cylinder arc."""
    ys = np.linspace(Y1, Y2, ny + 1)
    x_arc = X0 + np.sqrt(R ** 2 - (ys - Y0) ** 2)
    pts = np.zeros(((nx + 1) * (ny + 1), 2))
    for j, (y, xa) in enumerate(zip(ys, x_arc)):
        xs = xa + (LEAF_TIP - xa) * np.linspace(0.0, 1.0, nx + 1)
        for i, x in enumerate(xs):
            pts[j * (nx + 1) + i] = (x, y)

    def vid(i, j):
        return j * (nx + 1) + i

    tris = []
    for j in range(ny):
        for i in range(nx):
            v00, v10 = vid(i, j), vid(i + 1, j)
            v01, v11 = vid(i, j + 1), vid(i + 1, j + 1)
            if (i + j) % 2 == 0:
                tris.append((v00, v10, v11))
                tris.append((v00, v11, v01))
            else:
                tris.append((v00, v10, v01))
                tris.append((v10, v11, v01))
    bedges = []
    for i in range(nx):
        bedges.append((vid(i, 0), vid(i + 1, 0)))
        bedges.append((vid(i, ny), vid(i + 1, ny)))
    for j in range(ny):
        bedges.append((vid(0, j), vid(0, j + 1)))
        bedges.append((vid(nx, j), vid(nx, j + 1)))
    bedges = np.array(bedges)
    return Mesh(pts, np.array(tris), bedges, np.full(len(bedges), 5))


def quality(mesh):
    v = mesh.vertices
    t = mesh.triangles
    a = np.linalg.norm(v[t[:, 1]] - v[t[:, 0]], axis=1)
    b = np.linalg.norm(v[t[:, 2]] - v[t[:, 1]], axis=1)
    c = np.linalg.norm(v[t[:, 0]] - v[t[:, 2]], axis=1)
    s = 0.5 * (a + b + c)
    area = np.sqrt(np.maximum(s * (s - a) * (s - b) * (s - c), 0.0))
    q = 4.0 * np.sqrt(3.0) * area / (a * a + b * b + c * c)
    return q.min(), q.mean()


def main():
    outdir = os.path.join(os.path.dirname(__file__), "..", "src", "fsictrl",
                          "data")
    os.makedirs(outdir, exist_ok=True)

    for tag, scale, near, nx, ny in (("", 0.878, None, 52, 3),
                                     ("_coarse", 1.756, 0.878, 26, 2)):
        bg = channel_mesh(scale, near_scale=near)
        qmin, qmean = quality(bg)
        print("background%s: %d vertices, %d triangles, %d boundary "
              "edges, q_min=%.3f q_mean=%.3f, holes=%d"
              % (tag, bg.num_vertices, bg.num_triangles,
                 len(bg.boundary_edges), qmin, qmean, bg.num_holes))
        write_msh(os.path.join(outdir, "leaflet_bg%s.msh" % tag), bg)

        solid = leaflet_mesh(nx, ny)
        print("solid%s: %d vertices, %d triangles"
              % (tag, solid.num_vertices, solid.num_triangles))
        write_msh(os.path.join(outdir, "leaflet_solid%s.msh" % tag), solid)


if __name__ == "__main__":
    main()
