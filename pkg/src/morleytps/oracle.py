"""Dense whole-plane thin-plate spline smoother.

Representer form ``u(x) = sum_i c_i phi(|x - x_i|) + a0 + a1 x + a2 y`` with
the biharmonic fundamental solution ``phi(r) = r^2 log(r) / (8 pi)``, for
which ``c^T K c`` is the squared H2 seminorm over the plane whenever the
coefficients annihilate affine functions.  Meant for a few thousand points
at most; it is an oracle for the finite element path, not a competitor.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla

from .errors import IllConditionedSystem, InvalidArgument
from .system import SampleSet, check_noncollinear

MAX_DENSE_N = 5000
PIVOT_RTOL = 1e-14


def tps_kernel(r) -> np.ndarray:
    r = np.asarray(r, dtype=float)
    out = np.zeros_like(r)
    pos = r > 0
    out[pos] = r[pos] ** 2 * np.log(r[pos]) / (8.0 * np.pi)
    return out


def kernel_matrix(x, z) -> np.ndarray:
    d = np.asarray(x, dtype=float)[:, None, :] - np.asarray(z, dtype=float)[None, :, :]
    return tps_kernel(np.hypot(d[..., 0], d[..., 1]))


def affine_design(points) -> np.ndarray:
    return np.column_stack([np.ones(len(points)), points])


@dataclass(eq=False)
class DenseTpsModel:
    centers: np.ndarray
    c: np.ndarray
    a: np.ndarray
    lam: float

    def __call__(self, points) -> np.ndarray:
        return eval_dense(self, points)

    @property
    def seminorm_sq(self) -> float:
        """``c^T K c``."""
        return float(self.c @ kernel_matrix(self.centers, self.centers) @ self.c)


def fit_dense(samples: SampleSet, lam: float) -> DenseTpsModel:
    """Solve ``[K + n lam I, P; P^T, 0] [c; a] = [y; 0]`` by pivoted LU."""
    x = samples.points
    n = len(x)
    if n > MAX_DENSE_N:
        raise InvalidArgument(f"dense oracle limited to n <= {MAX_DENSE_N}, got {n}")
    if not lam > 0:
        raise InvalidArgument(f"lambda must be positive, got {lam!r}")
    check_noncollinear(x)
    K = kernel_matrix(x, x)
    P = affine_design(x)
    A = np.zeros((n + 3, n + 3))
    A[:n, :n] = K + n * lam * np.eye(n)
    # scale the constraint block so its Schur complement is O(1) whatever lam is
    s = np.sqrt(np.abs(A[:n, :n]).max())
    A[:n, n:] = s * P
    A[n:, :n] = s * P.T
    rhs = np.concatenate([samples.values, np.zeros(3)])
    lu, piv = sla.lu_factor(A)
    diag = np.abs(np.diag(lu))
    if diag.min() <= PIVOT_RTOL * diag.max():
        raise IllConditionedSystem(f"pivot ratio {diag.min() / diag.max():.2e} below threshold")
    sol = sla.lu_solve((lu, piv), rhs)
    return DenseTpsModel(centers=x.copy(), c=sol[:n], a=s * sol[n:], lam=float(lam))


def eval_dense(model: DenseTpsModel, points) -> np.ndarray:
    p = np.atleast_2d(np.asarray(points, dtype=float))
    return kernel_matrix(p, model.centers) @ model.c + affine_design(p) @ model.a


def dense_objective(model: DenseTpsModel, samples: SampleSet, c=None, a=None) -> float:
    """``||u - y||_n^2 + lam c^T K c`` for the model, or for substitute coefficients."""
    c = model.c if c is None else c
    a = model.a if a is None else a
    K = kernel_matrix(model.centers, model.centers)
    u = K @ c + affine_design(model.centers) @ a
    r = u - samples.values
    return float(np.mean(r * r) + model.lam * c @ K @ c)


def seminorm_identity_check(model: DenseTpsModel, radius: float = 20.0, spacing: float = 0.02, inner: float = 2.0) -> float:
    """Relative gap between ``c^T K c`` and a finite-difference quadrature of
    ``sum_ij (d_ij u)^2`` over ``[-radius, radius]^2`` around the centres.

    The box near the centres uses ``spacing``; the far field a spacing ten
    times coarser.  Truncation of the box dominates the error, a few per cent
    at the default radius.
    """
    if len(model.centers) > 20:
        raise InvalidArgument("identity check is meant for models with at most 20 centres")
    exact = model.seminorm_sq
    mid = 0.5 * (model.centers.min(axis=0) + model.centers.max(axis=0))
    coarse = 10 * spacing
    base = mid - radius
    # snap the fine box to the coarse cells so the two sums tile the box exactly
    lo = base + np.floor((model.centers.min(axis=0) - inner - base) / coarse) * coarse
    hi = base + np.ceil((model.centers.max(axis=0) + inner - base) / coarse) * coarse
    fine = _fd_energy(model, lo, hi, spacing)
    outer = _fd_energy(model, base, mid + radius, coarse, hole=(lo, hi))
    approx = fine + outer
    if exact == 0.0:
        return float(abs(approx))
    return float(abs(approx - exact) / abs(exact))


def _fd_energy(model, lo, hi, step, hole=None) -> float:
    """Midpoint sum of sum_ij (d_ij u)^2 on cells of size ``step`` using central differences."""
    nx = max(1, int(np.ceil((hi[0] - lo[0]) / step)))
    ny = max(1, int(np.ceil((hi[1] - lo[1]) / step)))
    hx = (hi[0] - lo[0]) / nx
    hy = (hi[1] - lo[1]) / ny
    xs = lo[0] + (np.arange(nx) + 0.5) * hx
    ys = lo[1] + (np.arange(ny) + 0.5) * hy
    e = 0.25 * min(hx, hy)
    total = 0.0
    for yrow in np.array_split(ys, max(1, len(ys) // 100)):
        X, Y = np.meshgrid(xs, yrow)
        pts = np.column_stack([X.ravel(), Y.ravel()])
        if hole is not None:
            keep = ~np.all((pts > hole[0]) & (pts < hole[1]), axis=1)
            pts = pts[keep]
            if not len(pts):
                continue

        def u(dx, dy):
            return eval_dense(model, pts + np.array([dx, dy]))

        u0 = u(0, 0)
        uxx = (u(e, 0) - 2 * u0 + u(-e, 0)) / e**2
        uyy = (u(0, e) - 2 * u0 + u(0, -e)) / e**2
        uxy = (u(e, e) - u(e, -e) - u(-e, e) + u(-e, -e)) / (4 * e**2)
        total += np.sum(uxx**2 + 2 * uxy**2 + uyy**2) * hx * hy
    return float(total)
