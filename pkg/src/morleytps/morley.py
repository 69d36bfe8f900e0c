"""Morley finite element space.

Local space P2 on each triangle, degrees of freedom: the three vertex values
followed by the normal derivatives at the midpoints of the edges opposite
vertices 1, 2, 3.  Edge derivatives are always taken along the *global* edge
normal, so an edge coefficient means the same thing in both neighbouring
elements.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .errors import DegenerateElement, InvalidArgument
from .mesh import EPS_LOC, Mesh2D
from .poly import monomials, triangle_rule

# monomial order: 1, s, t, s^2, s t, t^2
_XX, _XY, _YY = 3, 4, 5


class MorleySpace:
    """Global Morley space on ``mesh``.

    Global DOF numbering: vertex ``v`` -> ``v``, edge ``e`` -> ``n_vertices + e``.
    On each element the polynomial is expanded in monomials of the scaled
    local coordinates ``(x - origin) / scale``.
    """

    def __init__(self, mesh: Mesh2D):
        self.mesh = mesh
        self.n_dofs = mesh.n_vertices + mesh.n_edges
        self.dofs = np.hstack([mesh.triangles, mesh.n_vertices + mesh.tri_edges])
        p = mesh.vertices[mesh.triangles]
        self.origin = p[:, 0].copy()
        sides = p[:, [1, 2, 0]] - p[:, [2, 0, 1]]
        self.scale = np.hypot(sides[..., 0], sides[..., 1]).max(axis=1)
        self.areas = mesh.areas
        self.coef = self._local_bases()

    def to_local(self, tri, points):
        tri = np.asarray(tri)
        return (np.asarray(points, dtype=float) - self.origin[tri]) / self.scale[tri][:, None]

    def dof_matrices(self) -> np.ndarray:
        """DOF functionals applied to the scaled monomials; edge rows multiplied by the element scale."""
        mesh = self.mesh
        T = mesh.n_triangles
        D = np.empty((T, 6, 6))
        L = self.scale[:, None]
        for i in range(3):
            s = (mesh.vertices[mesh.triangles[:, i]] - self.origin) / L
            D[:, i] = monomials(s[:, 0], s[:, 1], 2)
        mids = mesh.edge_midpoints[mesh.tri_edges]
        nrm = mesh.normals[mesh.tri_edges]
        for i in range(3):
            s = (mids[:, i] - self.origin) / L
            D[:, 3 + i] = (
                nrm[:, i, 0:1] * monomials(s[:, 0], s[:, 1], 2, ds=1)
                + nrm[:, i, 1:2] * monomials(s[:, 0], s[:, 1], 2, dt=1)
            )
        return D

    def _local_bases(self) -> np.ndarray:
        D = self.dof_matrices()
        cond = np.linalg.cond(D)
        if not np.all(np.isfinite(cond)) or cond.max() > 1e12:
            raise DegenerateElement("singular Morley DOF matrix")
        C = np.linalg.inv(D)
        C[:, :, 3:] *= self.scale[:, None, None]
        return C

    def local_basis(self, tri: int) -> np.ndarray:
        """(6, 6) monomial coefficients; column k is the basis function dual to local DOF k."""
        return self.coef[tri].copy()

    def basis_values(self, tri, points) -> np.ndarray:
        s = self.to_local(tri, points)
        return np.einsum("nj,njk->nk", monomials(s[:, 0], s[:, 1], 2), self.coef[tri])

    def basis_hessians(self) -> np.ndarray:
        """Constant Hessians of all local basis functions, shape (T, 6, 2, 2)."""
        c = self.coef
        L2 = (self.scale**2)[:, None]
        H = np.empty(c.shape[:1] + (6, 2, 2))
        H[:, :, 0, 0] = 2.0 * c[:, _XX] / L2
        H[:, :, 0, 1] = H[:, :, 1, 0] = c[:, _XY] / L2
        H[:, :, 1, 1] = 2.0 * c[:, _YY] / L2
        return H


@dataclass(eq=False)
class MorleyFunction:
    space: MorleySpace
    coeffs: np.ndarray

    def __post_init__(self):
        self.coeffs = np.asarray(self.coeffs, dtype=float)
        if self.coeffs.shape != (self.space.n_dofs,):
            raise InvalidArgument(
                f"expected {self.space.n_dofs} coefficients, got shape {self.coeffs.shape}"
            )

    def element_polynomials(self, tri=None) -> np.ndarray:
        """Monomial coefficients of the local quadratics, shape (T, 6)."""
        sp = self.space
        if tri is None:
            tri = slice(None)
        return np.einsum("tjk,tk->tj", sp.coef[tri], self.coeffs[sp.dofs[tri]])

    def derivative(self, tri, points, dx: int = 0, dy: int = 0) -> np.ndarray:
        """Partial derivative ``d^dx/dx d^dy/dy`` of the local quadratic of ``tri`` at ``points``."""
        sp = self.space
        tri = np.asarray(tri)
        s = sp.to_local(tri, points)
        mono = monomials(s[:, 0], s[:, 1], 2, ds=dx, dt=dy)
        return np.einsum("nj,nj->n", mono, self.element_polynomials(tri)) / sp.scale[tri] ** (dx + dy)

    def values_on(self, tri, points) -> np.ndarray:
        return self.derivative(tri, points)

    def gradients_on(self, tri, points) -> np.ndarray:
        return np.column_stack([self.derivative(tri, points, 1, 0), self.derivative(tri, points, 0, 1)])

    def eval(self, tri: int, p) -> float:
        mesh = self.space.mesh
        p = np.asarray(p, dtype=float).reshape(1, 2)
        if np.any(mesh.barycentric([tri], p) < -EPS_LOC):
            raise InvalidArgument(f"point {p[0].tolist()} is not in triangle {tri}")
        return float(self.values_on([tri], p)[0])

    def hat_eval(self, points) -> np.ndarray:
        """Average of the one-sided element values over every closed triangle containing each point."""
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        pidx, tri, _ = self.space.mesh.locate_many(pts)
        vals = self.values_on(tri, pts[pidx])
        count = np.bincount(pidx, minlength=len(pts))
        return np.bincount(pidx, weights=vals, minlength=len(pts)) / count

    def hessians(self) -> np.ndarray:
        """Constant element Hessians, shape (T, 2, 2)."""
        H = self.space.basis_hessians()
        return np.einsum("tkij,tk->tij", H, self.coeffs[self.space.dofs])

    def eval_hessian(self, tri: int) -> np.ndarray:
        return self.hessians()[tri]

    def h2_seminorm(self) -> float:
        H = self.hessians()
        return float(np.sqrt(np.sum(self.space.areas * np.sum(H**2, axis=(1, 2)))))


def interpolate(u, space: MorleySpace) -> MorleyFunction:
    """Canonical Morley interpolant.

    ``u(points)`` must return ``(values, gradients)`` (extra items ignored).
    """
    mesh = space.mesh
    vals = u(mesh.vertices)[0]
    grads = u(mesh.edge_midpoints)[1]
    edge_dofs = np.einsum("ei,ei->e", np.asarray(grads, dtype=float), mesh.normals)
    return MorleyFunction(space, np.concatenate([np.asarray(vals, dtype=float), edge_dofs]))


def h2_seminorm(f: MorleyFunction) -> float:
    return f.h2_seminorm()


def interpolation_errors(f: MorleyFunction, u, degree: int = 11) -> dict:
    """Broken L2 norm, H1 and H2 seminorms of ``u - f`` by element quadrature.

    ``u(points)`` returns ``(values, gradients[, hessians])``; the H2 entry is
    NaN when no Hessian is supplied.
    """
    sp = f.space
    mesh = sp.mesh
    ref, w = triangle_rule(degree)
    T = mesh.n_triangles
    p = mesh.vertices[mesh.triangles]
    pts = (
        p[:, None, 0]
        + ref[None, :, 0:1] * (p[:, None, 1] - p[:, None, 0])
        + ref[None, :, 1:2] * (p[:, None, 2] - p[:, None, 0])
    ).reshape(-1, 2)
    tri = np.repeat(np.arange(T), len(w))
    out = u(pts)
    ev = (np.asarray(out[0]) - f.values_on(tri, pts)).reshape(T, -1)
    eg = (np.asarray(out[1]) - f.gradients_on(tri, pts)).reshape(T, -1, 2)
    jac = 2.0 * sp.areas[:, None] * w[None, :]
    h2 = float("nan")
    if len(out) > 2:
        eh = (np.asarray(out[2]) - f.hessians()[tri]).reshape(T, -1, 4)
        h2 = float(np.sqrt(np.sum(jac * np.sum(eh**2, axis=2))))
    return {
        "l2": float(np.sqrt(np.sum(jac * ev**2))),
        "h1": float(np.sqrt(np.sum(jac * np.sum(eg**2, axis=2)))),
        "h2": h2,
    }


def write_function_csv(f: MorleyFunction, path) -> None:
    nv = f.space.mesh.n_vertices
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["dof_id", "kind", "entity_id", "coeff"])
        for i, c in enumerate(f.coeffs.tolist()):
            if i < nv:
                w.writerow([i, "vertex", i, repr(c)])
            else:
                w.writerow([i, "edge", i - nv, repr(c)])


def read_function_csv(path, space: MorleySpace) -> MorleyFunction:
    nv = space.mesh.n_vertices
    coeffs = np.full(space.n_dofs, np.nan)
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames != ["dof_id", "kind", "entity_id", "coeff"]:
            raise InvalidArgument(f"unexpected header {reader.fieldnames!r} in {path}")
        for row in reader:
            i = int(row["dof_id"])
            ent = int(row["entity_id"])
            expect = ("vertex", i) if i < nv else ("edge", i - nv)
            if not 0 <= i < space.n_dofs or (row["kind"], ent) != expect:
                raise InvalidArgument(f"inconsistent DOF row {row!r}")
            coeffs[i] = float(row["coeff"])
    if np.isnan(coeffs).any():
        raise InvalidArgument(f"{path}: missing DOF rows for this mesh")
    return MorleyFunction(space, coeffs)
