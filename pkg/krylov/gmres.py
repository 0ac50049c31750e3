"""
Restarted GMRES(m) with right preconditioning
Arnoldi uses classical Gram-Schmidt with one re-orthogonalization pass,
each pass a single reduction over all basis vectors.
"""

from typing import Optional, Tuple

import numpy as np
from scipy.linalg import solve_triangular

from krylov.config import (BREAKDOWN, SolveReport, SolverConfig, apply_matrix, apply_pc,
                           check_system, global_norm, initial_guess)
from linalg.vector import DistVector, combine, multi_dot
from reporting.run_logger import get_run_logger


def _givens(a: float, b: float) -> Tuple[float, float]:
    if b == 0.0:
        return 1.0, 0.0
    h = np.hypot(a, b)
    return a / h, b / h


def gmres(A, b: DistVector, x0: Optional[DistVector] = None, config: Optional[SolverConfig] = None,
          precond=None) -> Tuple[DistVector, SolveReport]:
    """Collective: solve A x = b"""
    config = config or SolverConfig(method="gmres")
    check_system(A, b)
    ctx = A.ctx
    x = initial_guess(A, x0)
    rhs = np.asarray(b.owned, dtype=float)
    bnorm = global_norm(rhs, ctx)

    r = rhs - apply_matrix(A, x.owned)
    beta = global_norm(r, ctx)
    r0 = beta
    tol = config.tolerance(r0, bnorm)
    history = [beta]
    its = 0
    broke_down = False
    m = config.restart
    n = A.nlocal

    while beta > tol and its < config.maxit and not broke_down:
        V = np.zeros((m + 1, n))
        H = np.zeros((m + 1, m))
        cs = np.zeros(m)
        sn = np.zeros(m)
        g = np.zeros(m + 1)
        g[0] = beta
        V[0] = r / beta
        k = 0
        for j in range(m):
            if its >= config.maxit:
                break
            w = apply_matrix(A, apply_pc(precond, A, V[j]))
            basis = V[:j + 1]
            h = multi_dot(basis, w, ctx)
            w = w - combine(basis, h)
            h2 = multi_dot(basis, w, ctx)
            w = w - combine(basis, h2)
            h = h + h2
            hnorm = global_norm(w, ctx)
            H[:j + 1, j] = h
            H[j + 1, j] = hnorm
            for i in range(j):
                t = cs[i] * H[i, j] + sn[i] * H[i + 1, j]
                H[i + 1, j] = -sn[i] * H[i, j] + cs[i] * H[i + 1, j]
                H[i, j] = t
            cs[j], sn[j] = _givens(H[j, j], H[j + 1, j])
            H[j, j] = cs[j] * H[j, j] + sn[j] * H[j + 1, j]
            H[j + 1, j] = 0.0
            g[j + 1] = -sn[j] * g[j]
            g[j] = cs[j] * g[j]
            its += 1
            k = j + 1
            res = abs(g[j + 1])
            history.append(res)
            if hnorm < BREAKDOWN:
                broke_down = True
                break
            V[j + 1] = w / hnorm
            if res <= tol:
                break
        if k == 0:
            break
        y = solve_triangular(H[:k, :k], g[:k], lower=False, check_finite=False)
        x.owned = x.owned + apply_pc(precond, A, combine(V[:k], y))
        r = rhs - apply_matrix(A, x.owned)
        beta = global_norm(r, ctx)

    reason = config.stop_reason(beta, r0, bnorm)
    converged = reason is not None
    if not converged:
        reason = "breakdown" if broke_down else "maxit"
    report = SolveReport("gmres", its, beta, converged, reason, history)
    if ctx.rank == 0:
        get_run_logger().log_solve("gmres", its, beta, converged, reason)
    return x, report
