"""C1 enrichment of Morley functions into the quintic Argyris space.

Vertex derivatives of order <= 2 of the Argyris function are the averages of
the one-sided derivatives of the Morley function over the elements sharing the
vertex; the edge-midpoint normal derivatives are copied from the Morley edge
coefficients.  Only used as a diagnostic, never inside the solver.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DegenerateElement, InvalidArgument
from .mesh import Mesh2D
from .morley import MorleyFunction
from .poly import monomials, triangle_rule

# per-vertex DOFs: value, d/dx, d/dy, d2/dx2, d2/dxdy, d2/dy2
VERTEX_DERIVS = ((0, 0), (1, 0), (0, 1), (2, 0), (1, 1), (0, 2))
QUAD_DEGREE = 11


class ArgyrisSpace:
    def __init__(self, mesh: Mesh2D):
        self.mesh = mesh
        nv = mesh.n_vertices
        self.n_dofs = 6 * nv + mesh.n_edges
        vdofs = 6 * mesh.triangles[:, :, None] + np.arange(6)[None, None, :]
        self.dofs = np.hstack([vdofs.reshape(-1, 18), 6 * nv + mesh.tri_edges])
        p = mesh.vertices[mesh.triangles]
        self.origin = p[:, 0].copy()
        sides = p[:, [1, 2, 0]] - p[:, [2, 0, 1]]
        self.scale = np.hypot(sides[..., 0], sides[..., 1]).max(axis=1)
        self.areas = mesh.areas
        self.coef = self._local_bases()

    def _local_bases(self) -> np.ndarray:
        mesh = self.mesh
        T = mesh.n_triangles
        L = self.scale
        D = np.empty((T, 21, 21))
        colscale = np.ones((T, 21))
        for i in range(3):
            s = (mesh.vertices[mesh.triangles[:, i]] - self.origin) / L[:, None]
            for k, (dx, dy) in enumerate(VERTEX_DERIVS):
                D[:, 6 * i + k] = monomials(s[:, 0], s[:, 1], 5, ds=dx, dt=dy)
                colscale[:, 6 * i + k] = L ** (dx + dy)
        mids = mesh.edge_midpoints[mesh.tri_edges]
        nrm = mesh.normals[mesh.tri_edges]
        for i in range(3):
            s = (mids[:, i] - self.origin) / L[:, None]
            D[:, 18 + i] = (
                nrm[:, i, 0:1] * monomials(s[:, 0], s[:, 1], 5, ds=1)
                + nrm[:, i, 1:2] * monomials(s[:, 0], s[:, 1], 5, dt=1)
            )
            colscale[:, 18 + i] = L
        cond = np.linalg.cond(D)
        if not np.all(np.isfinite(cond)) or cond.max() > 1e13:
            raise DegenerateElement("singular Argyris DOF matrix")
        return np.linalg.inv(D) * colscale[:, None, :]


@dataclass(eq=False)
class ArgyrisFunction:
    space: ArgyrisSpace
    coeffs: np.ndarray

    def element_polynomials(self, tri=None) -> np.ndarray:
        sp = self.space
        if tri is None:
            tri = slice(None)
        return np.einsum("tjk,tk->tj", sp.coef[tri], self.coeffs[sp.dofs[tri]])

    def derivative(self, tri, points, dx: int = 0, dy: int = 0) -> np.ndarray:
        sp = self.space
        tri = np.asarray(tri)
        s = (np.asarray(points, dtype=float) - sp.origin[tri]) / sp.scale[tri][:, None]
        mono = monomials(s[:, 0], s[:, 1], 5, ds=dx, dt=dy)
        return np.einsum("nj,nj->n", mono, self.element_polynomials(tri)) / sp.scale[tri] ** (dx + dy)

    def evaluate(self, points) -> np.ndarray:
        """Point values (averaged over containing elements, which agree for a C1 function)."""
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        pidx, tri, _ = self.space.mesh.locate_many(pts)
        vals = self.derivative(tri, pts[pidx])
        return np.bincount(pidx, weights=vals, minlength=len(pts)) / np.bincount(pidx, minlength=len(pts))

    def h2_seminorm(self) -> float:
        return _broken_seminorm(self.space.mesh, self.space.areas, lambda t, p, dx, dy: self.derivative(t, p, dx, dy), 2)


def enrich(v: MorleyFunction, space: ArgyrisSpace | None = None) -> ArgyrisFunction:
    mesh = v.space.mesh
    if space is None:
        space = ArgyrisSpace(mesh)
    elif space.mesh is not mesh:
        raise InvalidArgument("Argyris space built on a different mesh")
    nv = mesh.n_vertices
    T = mesh.n_triangles
    tri = np.repeat(np.arange(T), 3)
    verts = mesh.triangles.ravel()
    pts = mesh.vertices[verts]
    count = np.bincount(verts, minlength=nv)
    vertex_dofs = np.empty((nv, 6))
    for k, (dx, dy) in enumerate(VERTEX_DERIVS):
        d = v.derivative(tri, pts, dx, dy)
        vertex_dofs[:, k] = np.bincount(verts, weights=d, minlength=nv) / count
    coeffs = np.concatenate([vertex_dofs.ravel(), v.coeffs[nv:]])
    return ArgyrisFunction(space, coeffs)


def _element_quadrature(mesh: Mesh2D, degree: int = QUAD_DEGREE):
    ref, w = triangle_rule(degree)
    p = mesh.vertices[mesh.triangles]
    pts = (
        p[:, None, 0]
        + ref[None, :, 0:1] * (p[:, None, 1] - p[:, None, 0])
        + ref[None, :, 1:2] * (p[:, None, 2] - p[:, None, 0])
    ).reshape(-1, 2)
    tri = np.repeat(np.arange(mesh.n_triangles), len(w))
    return tri, pts, w


_ORDER_TERMS = {
    0: (((0, 0), 1.0),),
    1: (((1, 0), 1.0), ((0, 1), 1.0)),
    2: (((2, 0), 1.0), ((1, 1), 2.0), ((0, 2), 1.0)),
}


def _broken_seminorm(mesh, areas, deriv, order: int) -> float:
    tri, pts, w = _element_quadrature(mesh)
    jac = 2.0 * areas[:, None] * w[None, :]
    total = 0.0
    for (dx, dy), mult in _ORDER_TERMS[order]:
        d = deriv(tri, pts, dx, dy).reshape(mesh.n_triangles, -1)
        total += mult * np.sum(jac * d * d)
    return float(np.sqrt(total))


def broken_distance(v: MorleyFunction, w: ArgyrisFunction, order: int) -> float:
    """Element-wise Sobolev seminorm of order 0, 1 or 2 of ``v - w``."""
    if order not in _ORDER_TERMS:
        raise InvalidArgument(f"order must be 0, 1 or 2, got {order!r}")
    mesh = v.space.mesh
    if w.space.mesh is not mesh:
        raise InvalidArgument("functions live on different meshes")
    return _broken_seminorm(
        mesh, v.space.areas, lambda t, p, dx, dy: v.derivative(t, p, dx, dy) - w.derivative(t, p, dx, dy), order
    )


def hat_distance_n(v: MorleyFunction, w: ArgyrisFunction, samples) -> float:
    """Empirical norm of ``hat(v) - w`` over the sample locations."""
    pts = getattr(samples, "points", samples)
    diff = v.hat_eval(pts) - w.evaluate(pts)
    return float(np.sqrt(np.mean(diff * diff)))


def edge_mismatch(f, points_per_edge: int = 5) -> dict:
    """Largest two-sided disagreement of value and gradient across interior edges.

    ``f`` is any object with ``derivative(tri, points, dx, dy)``.  Returns
    absolute maxima together with the maxima of the compared quantities.
    """
    mesh = f.space.mesh
    et = mesh.edge_triangles()
    interior = np.flatnonzero(et[:, 1] >= 0)
    a = mesh.vertices[mesh.edges[interior, 0]]
    b = mesh.vertices[mesh.edges[interior, 1]]
    ts = (np.arange(points_per_edge) + 1.0) / (points_per_edge + 1.0)
    pts = (a[:, None, :] + ts[None, :, None] * (b - a)[:, None, :]).reshape(-1, 2)
    k1 = np.repeat(et[interior, 0], points_per_edge)
    k2 = np.repeat(et[interior, 1], points_per_edge)
    out = {}
    for name, (dx, dy) in (("value", (0, 0)), ("dx", (1, 0)), ("dy", (0, 1))):
        d1 = f.derivative(k1, pts, dx, dy)
        d2 = f.derivative(k2, pts, dx, dy)
        out[name] = float(np.max(np.abs(d1 - d2)))
        out[name + "_scale"] = float(max(np.max(np.abs(d1)), np.max(np.abs(d2))))
    return out
