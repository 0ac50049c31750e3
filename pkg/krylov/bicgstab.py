"""
BiCGSTAB with right preconditioning
Convergence at the half step counts as one iteration. When the recursive
residual meets the tolerance but the true residual does not, the method
restarts from the true residual.
"""

from typing import Optional, Tuple

import numpy as np

from krylov.config import (BREAKDOWN, SolveReport, SolverConfig, apply_matrix, apply_pc,
                           check_system, global_dot, global_norm, initial_guess)
from linalg.vector import DistVector
from reporting.run_logger import get_run_logger


def bicgstab(A, b: DistVector, x0: Optional[DistVector] = None, config: Optional[SolverConfig] = None,
             precond=None) -> Tuple[DistVector, SolveReport]:
    """Collective: solve A x = b"""
    config = config or SolverConfig(method="bicgstab")
    check_system(A, b)
    ctx = A.ctx
    x = initial_guess(A, x0)
    rhs = np.asarray(b.owned, dtype=float)
    bnorm = global_norm(rhs, ctx)

    def true_residual():
        res = rhs - apply_matrix(A, x.owned)
        return res, global_norm(res, ctx)

    r, rnorm = true_residual()
    r0 = rnorm
    tol = config.tolerance(r0, bnorm)
    history = [rnorm]
    its = 0
    broke_down = False

    def fresh_start(res):
        return res.copy(), 1.0, 1.0, 1.0, np.zeros_like(res), np.zeros_like(res)

    r_hat, rho_prev, alpha, omega, v, p = fresh_start(r)
    restarted = True
    while rnorm > tol and its < config.maxit:
        rho = global_dot(r_hat, r, ctx)
        if abs(rho) < BREAKDOWN:
            broke_down = True
            break
        if restarted:
            p = r.copy()
            restarted = False
        else:
            beta = (rho / rho_prev) * (alpha / omega)
            p = r + beta * (p - omega * v)
        p_hat = apply_pc(precond, A, p)
        v = apply_matrix(A, p_hat)
        denom = global_dot(r_hat, v, ctx)
        if abs(denom) < BREAKDOWN:
            broke_down = True
            break
        alpha = rho / denom
        s = r - alpha * v
        snorm = global_norm(s, ctx)
        its += 1
        if snorm <= tol:
            x.owned = x.owned + alpha * p_hat
            history.append(snorm)
            r, rnorm = true_residual()
            if rnorm > tol:
                r_hat, rho_prev, alpha, omega, v, p = fresh_start(r)
                restarted = True
            continue
        s_hat = apply_pc(precond, A, s)
        t = apply_matrix(A, s_hat)
        tt, ts = ctx.allreduce_fsum(np.stack([t * t, t * s]))
        if tt < BREAKDOWN:
            x.owned = x.owned + alpha * p_hat
            broke_down = True
            break
        omega = float(ts / tt)
        x.owned = x.owned + alpha * p_hat + omega * s_hat
        r = s - omega * t
        rnorm = global_norm(r, ctx)
        history.append(rnorm)
        if rnorm <= tol:
            r, rnorm = true_residual()
            if rnorm > tol:
                r_hat, rho_prev, alpha, omega, v, p = fresh_start(r)
                restarted = True
            continue
        if abs(omega) < BREAKDOWN:
            broke_down = True
            break
        rho_prev = rho

    _, final = true_residual()
    reason = config.stop_reason(final, r0, bnorm)
    converged = reason is not None
    if not converged:
        reason = "breakdown" if broke_down else "maxit"
    report = SolveReport("bicgstab", its, final, converged, reason, history)
    if ctx.rank == 0:
        get_run_logger().log_solve("bicgstab", its, final, converged, reason)
    return x, report
