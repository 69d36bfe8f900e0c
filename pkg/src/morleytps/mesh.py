"""Uniform triangulations of axis-aligned rectangles.

Every rectangle cell of an ``m x m`` grid is split along the diagonal running
from its lower-left to its upper-right corner.  Edges carry a global unit
normal (the lower-to-higher vertex direction rotated by +90 degrees) which
fixes the sign of the Morley edge degrees of freedom.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidArgument, PointOutsideDomain

EPS_LOC = 1e-12

UNIT_SQUARE = (0.0, 1.0, 0.0, 1.0)


@dataclass(frozen=True, eq=False)
class Mesh2D:
    """Conforming triangulation with globally oriented edges.

    ``tri_edges[k, i]`` is the edge opposite local vertex ``i`` of triangle
    ``k`` and ``tri_edge_signs[k, i]`` is +1 when the outward normal of the
    triangle on that edge equals the global edge normal.
    """

    vertices: np.ndarray
    triangles: np.ndarray
    edges: np.ndarray
    normals: np.ndarray
    tri_edges: np.ndarray
    tri_edge_signs: np.ndarray
    m: int
    domain: tuple
    h: float
    _inv_maps: np.ndarray = field(repr=False)

    @property
    def n_vertices(self) -> int:
        return len(self.vertices)

    @property
    def n_triangles(self) -> int:
        return len(self.triangles)

    @property
    def n_edges(self) -> int:
        return len(self.edges)

    @property
    def areas(self) -> np.ndarray:
        p = self.vertices[self.triangles]
        d1 = p[:, 1] - p[:, 0]
        d2 = p[:, 2] - p[:, 0]
        return 0.5 * (d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0])

    @property
    def edge_lengths(self) -> np.ndarray:
        d = self.vertices[self.edges[:, 1]] - self.vertices[self.edges[:, 0]]
        return np.hypot(d[:, 0], d[:, 1])

    @property
    def edge_midpoints(self) -> np.ndarray:
        return 0.5 * (self.vertices[self.edges[:, 0]] + self.vertices[self.edges[:, 1]])

    def boundary_edge_mask(self) -> np.ndarray:
        counts = np.bincount(self.tri_edges.ravel(), minlength=self.n_edges)
        return counts == 1

    def edge_triangles(self) -> np.ndarray:
        """(E, 2) array of incident triangles per edge, -1 marking a missing neighbour."""
        out = np.full((self.n_edges, 2), -1, dtype=np.int64)
        tri = np.repeat(np.arange(self.n_triangles), 3)
        eid = self.tri_edges.ravel()
        order = np.lexsort((tri, eid))
        eid, tri = eid[order], tri[order]
        first = np.ones(len(eid), dtype=bool)
        first[1:] = eid[1:] != eid[:-1]
        out[eid[first], 0] = tri[first]
        out[eid[~first], 1] = tri[~first]
        return out

    def barycentric(self, tri, points) -> np.ndarray:
        """Barycentric coordinates of ``points`` (n, 2) with respect to triangles ``tri`` (n,)."""
        tri = np.asarray(tri)
        points = np.asarray(points, dtype=float)
        a = self.vertices[self.triangles[tri, 0]]
        l12 = np.einsum("nij,nj->ni", self._inv_maps[tri], points - a)
        return np.column_stack([1.0 - l12[:, 0] - l12[:, 1], l12[:, 0], l12[:, 1]])

    def locate_many(self, points):
        """Vectorised point location.

        Returns ``(point_index, triangle, bary)`` listing every triangle whose
        closure contains each point, with closure membership decided at
        barycentric tolerance ``EPS_LOC``.
        """
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        if self.m == 0:
            return self._locate_brute(pts)
        x0, x1, y0, y1 = self.domain
        m = self.m
        sx = (pts[:, 0] - x0) / (x1 - x0) * m
        sy = (pts[:, 1] - y0) / (y1 - y0) * m
        tol = 1e-9
        ix = np.clip(np.floor([sx - tol, sx + tol]), 0, m - 1).astype(np.int64)
        iy = np.clip(np.floor([sy - tol, sy + tol]), 0, m - 1).astype(np.int64)
        cand, valid = [], []
        for a in (0, 1):
            for b in (0, 1):
                cell = iy[b] * m + ix[a]
                ok = np.ones(len(pts), dtype=bool)
                if a:
                    ok &= ix[1] != ix[0]
                if b:
                    ok &= iy[1] != iy[0]
                for lower in (0, 1):
                    cand.append(2 * cell + lower)
                    valid.append(ok)
        cand = np.stack(cand, axis=1)
        valid = np.stack(valid, axis=1)
        pidx = np.repeat(np.arange(len(pts)), cand.shape[1])
        cand = cand.ravel()
        valid = valid.ravel()
        return self._keep_inside(pts, pidx[valid], cand[valid])

    def _locate_brute(self, pts):
        T = self.n_triangles
        return self._keep_inside(pts, np.repeat(np.arange(len(pts)), T), np.tile(np.arange(T), len(pts)))

    def _keep_inside(self, pts, pidx, cand):
        bary = self.barycentric(cand, pts[pidx])
        inside = np.all(bary >= -EPS_LOC, axis=1)
        pidx, cand, bary = pidx[inside], cand[inside], bary[inside]
        found = np.bincount(pidx, minlength=len(pts))
        if np.any(found == 0):
            bad = pts[np.argmax(found == 0)]
            raise PointOutsideDomain(f"point {bad.tolist()} is outside the mesh domain")
        order = np.lexsort((cand, pidx))
        return pidx[order], cand[order], bary[order]


def build_uniform_mesh(m: int, domain=UNIT_SQUARE) -> Mesh2D:
    """Split an ``m x m`` grid of rectangles on ``domain = (x0, x1, y0, y1)``."""
    if int(m) != m or m < 1:
        raise InvalidArgument(f"number of divisions must be a positive integer, got {m!r}")
    m = int(m)
    x0, x1, y0, y1 = map(float, domain)
    if not (np.isfinite([x0, x1, y0, y1]).all() and x1 > x0 and y1 > y0):
        raise InvalidArgument(f"degenerate rectangle {domain!r}")

    xs = np.linspace(x0, x1, m + 1)
    ys = np.linspace(y0, y1, m + 1)
    X, Y = np.meshgrid(xs, ys)
    vertices = np.column_stack([X.ravel(), Y.ravel()])

    j, i = np.divmod(np.arange(m * m), m)
    v00 = j * (m + 1) + i
    v10 = v00 + 1
    v01 = v00 + m + 1
    v11 = v01 + 1
    triangles = np.empty((2 * m * m, 3), dtype=np.int64)
    triangles[0::2] = np.column_stack([v00, v10, v11])
    triangles[1::2] = np.column_stack([v00, v11, v01])
    return triangulation(vertices, triangles, m=m, domain=(x0, x1, y0, y1))


def triangulation(vertices, triangles, m: int = 0, domain=None) -> Mesh2D:
    """Connectivity, edge normals and signs for a CCW triangle list.

    ``m > 0`` marks the structured mesh of ``build_uniform_mesh`` (enables the
    grid index in ``locate_many``); ``m = 0`` is a general triangulation
    located by brute force, meant for small test meshes.
    """
    vertices = np.asarray(vertices, dtype=float)
    triangles = np.asarray(triangles, dtype=np.int64)
    if domain is None:
        lo, hi = vertices.min(axis=0), vertices.max(axis=0)
        domain = (float(lo[0]), float(hi[0]), float(lo[1]), float(hi[1]))

    # local edge i is opposite local vertex i
    local = np.stack(
        [triangles[:, [1, 2]], triangles[:, [2, 0]], triangles[:, [0, 1]]], axis=1
    )
    pairs = np.sort(local.reshape(-1, 2), axis=1)
    edges, inverse = np.unique(pairs, axis=0, return_inverse=True)
    tri_edges = inverse.reshape(-1, 3)

    d = vertices[edges[:, 1]] - vertices[edges[:, 0]]
    lengths = np.hypot(d[:, 0], d[:, 1])
    if np.any(lengths == 0):
        raise InvalidArgument("zero-length edge")
    normals = np.column_stack([-d[:, 1], d[:, 0]]) / lengths[:, None]

    # outward normal of a CCW triangle on directed edge p->q is (q - p) rotated by -90 degrees
    p = vertices[local[..., 0]]
    q = vertices[local[..., 1]]
    t = q - p
    outward = np.stack([t[..., 1], -t[..., 0]], axis=-1)
    signs = np.sign(np.einsum("tij,tij->ti", outward, normals[tri_edges])).astype(np.int8)

    a = vertices[triangles[:, 0]]
    jac = np.stack(
        [vertices[triangles[:, 1]] - a, vertices[triangles[:, 2]] - a], axis=2
    )
    if np.any(np.linalg.det(jac) <= 0):
        raise InvalidArgument("triangles must be non-degenerate and counter-clockwise")
    inv_maps = np.linalg.inv(jac)

    return Mesh2D(
        vertices=vertices,
        triangles=triangles,
        edges=edges,
        normals=normals,
        tri_edges=tri_edges,
        tri_edge_signs=signs,
        m=int(m),
        domain=tuple(domain),
        h=float(lengths.max()),
        _inv_maps=inv_maps,
    )


def locate(mesh: Mesh2D, p) -> list:
    """All ``(triangle, barycentric)`` pairs whose closed triangle contains ``p``."""
    _, tri, bary = mesh.locate_many(np.asarray(p, dtype=float).reshape(1, 2))
    return [(int(t), b) for t, b in zip(tri, bary)]


def edge_normal(mesh: Mesh2D, edge: int) -> np.ndarray:
    return mesh.normals[edge].copy()
