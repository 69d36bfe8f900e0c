"""Assembly and solution of the discrete smoothing problem.

For a Morley space with stiffness ``S`` (broken H2 form) and hat-evaluation
operator ``B`` (n x N) the fit solves

    (lam * S + B^T B / n) c = B^T y / n

with Jacobi-preconditioned conjugate gradients.
"""
from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import CollinearSamples, InvalidArgument, SolverError
from .morley import MorleyFunction, MorleySpace
from .poly import monomials, triangle_rule

log = logging.getLogger(__name__)

CG_TOL = 1e-10
COLLINEAR_RTOL = 1e-10


@dataclass(eq=False)
class SampleSet:
    points: np.ndarray
    values: np.ndarray
    truth: np.ndarray | None = None

    def __post_init__(self):
        self.points = np.asarray(self.points, dtype=float).reshape(-1, 2)
        self.values = np.asarray(self.values, dtype=float).ravel()
        if self.truth is not None:
            self.truth = np.asarray(self.truth, dtype=float).ravel()
        n = len(self.points)
        if n < 3:
            raise InvalidArgument(f"need at least 3 samples, got {n}")
        if self.values.shape != (n,) or (self.truth is not None and self.truth.shape != (n,)):
            raise InvalidArgument("points, values and truth must have the same length")
        if not (np.isfinite(self.points).all() and np.isfinite(self.values).all()):
            raise InvalidArgument("non-finite sample data")
        check_noncollinear(self.points)

    @property
    def n(self) -> int:
        return len(self.points)

    def with_values(self, values) -> "SampleSet":
        return SampleSet(self.points, values, self.truth)


def check_noncollinear(points) -> None:
    P = np.column_stack([np.ones(len(points)), points])
    sv = np.linalg.svd(P, compute_uv=False)
    if sv[-1] <= COLLINEAR_RTOL * sv[0]:
        raise CollinearSamples("sample locations are collinear")


def empirical_norm(v) -> float:
    v = np.asarray(v, dtype=float)
    return float(np.sqrt(np.mean(v * v)))


def assemble_stiffness(space: MorleySpace) -> sp.csr_matrix:
    """Broken H2 stiffness matrix; mixed derivatives enter twice through the Frobenius product."""
    H = space.basis_hessians()
    Ke = np.einsum("t,taij,tbij->tab", space.areas, H, H)
    rows = np.repeat(space.dofs, 6, axis=1).ravel()
    cols = np.tile(space.dofs, (1, 6)).ravel()
    S = sp.coo_matrix((Ke.ravel(), (rows, cols)), shape=(space.n_dofs, space.n_dofs)).tocsr()
    # duplicate entries are summed in different orders above and below the diagonal
    return ((S + S.T) * 0.5).tocsr()


def assemble_stiffness_quadrature(space: MorleySpace) -> sp.csr_matrix:
    """Slow reference assembly: second derivatives of each basis function evaluated
    at quadrature points of every element, one element at a time."""
    ref, w = triangle_rule(3)
    mesh = space.mesh
    S = sp.lil_matrix((space.n_dofs, space.n_dofs))
    for t in range(mesh.n_triangles):
        p = mesh.vertices[mesh.triangles[t]]
        pts = p[0] + ref[:, :1] * (p[1] - p[0]) + ref[:, 1:] * (p[2] - p[0])
        s = space.to_local(np.full(len(pts), t), pts)
        L = space.scale[t]
        c = space.coef[t]
        d = {
            (2, 0): monomials(s[:, 0], s[:, 1], 2, ds=2) @ c / L**2,
            (1, 1): monomials(s[:, 0], s[:, 1], 2, ds=1, dt=1) @ c / L**2,
            (0, 2): monomials(s[:, 0], s[:, 1], 2, dt=2) @ c / L**2,
        }
        jw = 2.0 * space.areas[t] * w
        Ke = np.zeros((6, 6))
        for key, mult in (((2, 0), 1.0), ((1, 1), 2.0), ((0, 2), 1.0)):
            Ke += mult * np.einsum("q,qa,qb->ab", jw, d[key], d[key])
        for a in range(6):
            for b in range(6):
                S[space.dofs[t, a], space.dofs[t, b]] += Ke[a, b]
    return S.tocsr()


def assemble_data(space: MorleySpace, samples) -> sp.csr_matrix:
    """Hat-evaluation operator: row i averages the local basis values over every
    element whose closure contains sample point i."""
    pts = samples.points if isinstance(samples, SampleSet) else np.atleast_2d(samples)
    pidx, tri, _ = space.mesh.locate_many(pts)
    count = np.bincount(pidx, minlength=len(pts))
    vals = space.basis_values(tri, pts[pidx]) / count[pidx][:, None]
    rows = np.repeat(pidx, 6)
    cols = space.dofs[tri].ravel()
    B = sp.coo_matrix((vals.ravel(), (rows, cols)), shape=(len(pts), space.n_dofs))
    return B.tocsr()


@dataclass(eq=False)
class FitResult:
    function: MorleyFunction
    lam: float
    residual_n: float
    seminorm_2h: float
    energy: float
    solver_iters: int
    solver_relres: float
    fitted: np.ndarray = field(repr=False)

    @property
    def coefficients(self) -> np.ndarray:
        return self.function.coeffs

    @property
    def mesh_div(self) -> int:
        return self.function.space.mesh.m


class DiscreteSmoother:
    """Assembled normal equations for one (mesh, sample locations) pair.

    The stiffness and data operators are built once so that sweeps over
    ``lam`` or over noise replicates only pay for the solve.
    """

    def __init__(self, space: MorleySpace, samples: SampleSet):
        self.space = space
        self.samples = samples
        self.S = assemble_stiffness(space)
        self.B = assemble_data(space, samples)
        n = samples.n
        self.BtB = (self.B.T @ self.B).tocsr() / n

    def matrix(self, lam: float) -> sp.csr_matrix:
        return (lam * self.S + self.BtB).tocsr()

    def rhs(self, y) -> np.ndarray:
        return self.B.T @ np.asarray(y, dtype=float) / self.samples.n

    def solve(self, lam: float, y=None, tol: float = CG_TOL, maxiter: int | None = None) -> FitResult:
        if not lam > 0:
            raise InvalidArgument(f"lambda must be positive, got {lam!r}")
        y = self.samples.values if y is None else np.asarray(y, dtype=float)
        A = self.matrix(lam)
        b = self.rhs(y)
        c, iters, relres = pcg_jacobi(A, b, tol=tol, maxiter=maxiter, x0=self.affine_start(y))
        return self.result(lam, c, y, iters, relres)

    def affine_start(self, y) -> np.ndarray:
        """DOFs of the least-squares affine fit to ``y``.

        The affine part lies in the kernel of S, so this start is the exact
        solution for affine data and CG only has to resolve the rest.
        """
        P = np.column_stack([np.ones(self.samples.n), self.samples.points])
        a = np.linalg.lstsq(P, y, rcond=None)[0]
        mesh = self.space.mesh
        vals = a[0] + mesh.vertices @ a[1:]
        return np.concatenate([vals, mesh.normals @ a[1:]])

    def result(self, lam, c, y, iters=0, relres=0.0) -> FitResult:
        f = MorleyFunction(self.space, c)
        fitted = self.B @ c
        res = empirical_norm(fitted - y)
        semi = f.h2_seminorm()
        return FitResult(
            function=f,
            lam=float(lam),
            residual_n=res,
            seminorm_2h=semi,
            energy=lam * semi**2 + res**2,
            solver_iters=int(iters),
            solver_relres=float(relres),
            fitted=fitted,
        )


def pcg_jacobi(A, b, tol: float = CG_TOL, maxiter: int | None = None, x0=None):
    """Conjugate gradients with diagonal preconditioning.

    Returns ``(x, iterations, relative residual)``; raises SolverError when the
    relative residual does not drop below ``tol`` within ``maxiter`` steps
    (default ``20 * N``).  With a start ``x0`` the residual is also accepted
    once it reaches the rounding floor ``16 eps |||A| |x0|||``.
    """
    N = A.shape[0]
    maxiter = 20 * N if maxiter is None else maxiter
    bnorm = np.linalg.norm(b)
    if bnorm == 0.0:
        return np.zeros(N), 0, 0.0
    d = A.diagonal()
    if np.any(d <= 0):
        raise SolverError("matrix has non-positive diagonal entries")
    M = spla.LinearOperator(A.shape, matvec=lambda r: r / d, dtype=float)
    count = [0]

    def cb(_):
        count[0] += 1

    # a start already exact up to rounding in A @ x0 should not be "improved"
    atol = 0.0 if x0 is None else 16 * np.finfo(float).eps * float(np.linalg.norm(abs(A) @ np.abs(x0)))
    x, info = spla.cg(A, b, x0=x0, rtol=tol, atol=atol, maxiter=maxiter, M=M, callback=cb)
    relres = float(np.linalg.norm(b - A @ x) / bnorm)
    if info != 0 or not np.isfinite(relres):
        raise SolverError(f"CG did not converge: {count[0]} iterations, relative residual {relres:.3e}")
    log.debug("cg: N=%d iters=%d relres=%.3e", N, count[0], relres)
    return x, count[0], relres


def solve_fit(space: MorleySpace, samples: SampleSet, lam: float, **kw) -> FitResult:
    return DiscreteSmoother(space, samples).solve(lam, **kw)


def read_samples_csv(path) -> SampleSet:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = [h.strip() for h in next(reader)]
        if header not in (["x", "y", "value"], ["x", "y", "value", "truth"]):
            raise InvalidArgument(f"unexpected sample header {header!r}")
        rows = [r for r in reader if r]
    try:
        data = np.array([[float(v) for v in r] for r in rows], dtype=float)
    except ValueError as exc:
        raise InvalidArgument(f"{path}: {exc}") from None
    if data.ndim != 2 or data.shape[1] != len(header):
        raise InvalidArgument(f"{path}: ragged sample rows")
    truth = data[:, 3] if len(header) == 4 else None
    return SampleSet(data[:, :2], data[:, 2], truth)


def write_samples_csv(samples: SampleSet, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        if samples.truth is None:
            w.writerow(["x", "y", "value"])
            for (x, y), v in zip(samples.points.tolist(), samples.values.tolist()):
                w.writerow([repr(x), repr(y), repr(v)])
        else:
            w.writerow(["x", "y", "value", "truth"])
            for (x, y), v, u in zip(samples.points.tolist(), samples.values.tolist(), samples.truth.tolist()):
                w.writerow([repr(x), repr(y), repr(v), repr(u)])
