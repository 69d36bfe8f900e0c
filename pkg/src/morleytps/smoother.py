"""Smoothing-parameter rules and the self-consistent selection loop."""
from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidArgument
from .mesh import UNIT_SQUARE, build_uniform_mesh
from .morley import MorleySpace
from .system import CG_TOL, DiscreteSmoother, FitResult, SampleSet, empirical_norm

log = logging.getLogger(__name__)

DIM = 2


def lambda_exponent(d: int = DIM) -> float:
    return 1.0 / (0.5 + d / 8.0)


def optimal_lambda(sigma: float, n: int, rho: float, d: int = DIM) -> float:
    """``[s / (rho + s)] ** (1 / (1/2 + d/8))`` with ``s = sigma / sqrt(n)``."""
    if not (sigma >= 0 and rho >= 0 and n >= 1) or (sigma == 0 and rho == 0):
        raise InvalidArgument(f"invalid inputs sigma={sigma!r}, n={n!r}, rho={rho!r}")
    s = sigma / math.sqrt(n)
    return (s / (rho + s)) ** lambda_exponent(d)


def mesh_divisions_for_lambda(lam: float, m_max: int | None = None) -> int:
    """Divisions per side for mesh size ``h = lam ** (1/4)``, rounded half up."""
    if not lam > 0:
        raise InvalidArgument(f"lambda must be positive, got {lam!r}")
    m = max(1, int(math.floor(lam**-0.25 + 0.5)))
    return m if m_max is None else min(m, m_max)


def initial_lambda(n: int, d: int = DIM) -> float:
    return float(n) ** (-4.0 / (4 + d))


@dataclass(frozen=True)
class SmootherConfig:
    lam_min: float = 1e-14
    tol_lam: float = 1e-3
    max_iter: int = 30
    m_max: int = 200
    cg_tol: float = CG_TOL
    zero_tol: float = 1e-10
    domain: tuple = UNIT_SQUARE
    d: int = DIM

    def __post_init__(self):
        if not (self.lam_min > 0 and 0 < self.tol_lam < 1 and self.max_iter >= 1 and self.m_max >= 1):
            raise InvalidArgument(f"invalid smoother configuration {self!r}")
        if self.d != DIM:
            raise InvalidArgument("only d = 2 is supported")


@dataclass(frozen=True)
class LambdaIterate:
    k: int
    lam: float
    mesh_div: int
    residual_n: float
    seminorm_2h: float
    error_n: float = float("nan")


@dataclass(eq=False)
class LambdaTrace:
    """History of the self-consistent iteration.

    ``lam`` is the last value produced by the update rule; ``fit`` was
    computed with the last recorded iterate (the two agree to ``tol_lam``
    when ``converged``, except that the zero-residual branch reports
    ``lam_min``).
    """

    iterations: list
    converged: bool
    lam: float
    fit: FitResult = field(repr=False)


def update_lambda(residual_n: float, seminorm: float, n: int, d: int = DIM) -> float:
    s = residual_n / math.sqrt(n)
    if s == 0.0:
        return 0.0
    return (s / (seminorm + s)) ** lambda_exponent(d)


def fit_on_lambda_mesh(samples: SampleSet, lam: float, config: SmootherConfig = SmootherConfig()) -> FitResult:
    m = mesh_divisions_for_lambda(lam, config.m_max)
    space = MorleySpace(build_uniform_mesh(m, config.domain))
    return DiscreteSmoother(space, samples).solve(lam, tol=config.cg_tol)


def self_consistent_lambda(samples: SampleSet, lam0: float | None = None, config: SmootherConfig = SmootherConfig()) -> LambdaTrace:
    """Alternate fitting on the mesh ``h = lam**(1/4)`` with the update

    ``lam_{k+1} = [s / (r + s)] ** (1 / (1/2 + d/8))``, ``s = ||u_h - y||_n / sqrt(n)``,
    ``r = |u_h|_{2,h}``,

    until the relative change is below ``tol_lam`` or ``max_iter`` fits were done.
    """
    n = samples.n
    lam = initial_lambda(n, config.d) if lam0 is None else float(lam0)
    if not lam > 0:
        raise InvalidArgument(f"initial lambda must be positive, got {lam0!r}")
    lam = min(max(lam, config.lam_min), 1.0)
    scale = max(1.0, float(np.sqrt(np.mean(samples.values**2))))
    iterations = []
    cache = {}
    converged = False
    for k in range(config.max_iter):
        m = mesh_divisions_for_lambda(lam, config.m_max)
        if m not in cache:
            space = MorleySpace(build_uniform_mesh(m, config.domain))
            cache[m] = DiscreteSmoother(space, samples)
        fit = cache[m].solve(lam, tol=config.cg_tol)
        err = empirical_norm(fit.fitted - samples.truth) if samples.truth is not None else float("nan")
        iterations.append(LambdaIterate(k, lam, m, fit.residual_n, fit.seminorm_2h, err))
        log.info("k=%d lam=%.4e m=%d residual=%.5f seminorm=%.3f", k, lam, m, fit.residual_n, fit.seminorm_2h)
        if fit.residual_n <= config.zero_tol * scale:
            lam, converged = config.lam_min, True
            break
        new = min(max(update_lambda(fit.residual_n, fit.seminorm_2h, n, config.d), config.lam_min), 1.0)
        done = abs(new - lam) <= config.tol_lam * lam
        lam = new
        if done:
            converged = True
            break
    return LambdaTrace(iterations=iterations, converged=converged, lam=lam, fit=fit)


def fit_auto(samples: SampleSet, config: SmootherConfig = SmootherConfig()) -> FitResult:
    return self_consistent_lambda(samples, None, config).fit


def write_trace_csv(trace: LambdaTrace, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["k", "lambda", "mesh_div", "residual_n", "seminorm_2h"])
        for it in trace.iterations:
            w.writerow([it.k, repr(it.lam), it.mesh_div, repr(it.residual_n), repr(it.seminorm_2h)])


def read_trace_csv(path) -> list:
    with open(path, newline="") as fh:
        return [
            LambdaIterate(int(r["k"]), float(r["lambda"]), int(r["mesh_div"]), float(r["residual_n"]), float(r["seminorm_2h"]))
            for r in csv.DictReader(fh)
        ]
