"""Damped Gauss-Newton (Levenberg-Marquardt) least squares with box bounds."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass
class LMResult:
    x: np.ndarray
    cost: float  # 0.5 * sum(r**2)
    residuals: np.ndarray
    jac: np.ndarray
    iterations: int
    converged: bool
    message: str
    cost_history: list = field(default_factory=list)


def numeric_jacobian(fun, x, r0, rel_step, lower, upper, floor):
    """Central-difference Jacobian; one-sided at an active bound."""
    m, n = r0.size, x.size
    jac = np.empty((m, n))
    for j in range(n):
        h = rel_step * max(abs(x[j]), floor[j])
        xp, xm = x.copy(), x.copy()
        xp[j] = min(x[j] + h, upper[j])
        xm[j] = max(x[j] - h, lower[j])
        if xp[j] == xm[j]:
            jac[:, j] = 0.0
            continue
        rp = r0 if xp[j] == x[j] else fun(xp)
        rm = r0 if xm[j] == x[j] else fun(xm)
        jac[:, j] = (rp - rm) / (xp[j] - xm[j])
    return jac


def levenberg_marquardt(fun, x0, lower=None, upper=None, x_scale=None, jac=None,
                        max_iter=200, ftol=1e-12, xtol=1e-10, gtol=1e-12,
                        rel_step=1e-6, lam0=1e-3):
    """Minimize 0.5*||fun(x)||^2 subject to lower <= x <= upper.

    Only steps that lower the cost are accepted, so ``cost_history`` is
    non-increasing. On hitting ``max_iter`` the best point so far is
    returned with ``converged=False``.
    """
    x = np.array(x0, dtype=float)
    n = x.size
    lower = np.full(n, -np.inf) if lower is None else np.asarray(lower, dtype=float)
    upper = np.full(n, np.inf) if upper is None else np.asarray(upper, dtype=float)
    if np.any(x < lower) or np.any(x > upper):
        raise ValueError("initial point outside bounds")
    floor = np.ones(n) if x_scale is None else np.asarray(x_scale, dtype=float)

    def jacobian(x, r):
        if jac is not None:
            return np.asarray(jac(x), dtype=float)
        return numeric_jacobian(fun, x, r, rel_step, lower, upper, floor)

    r = np.asarray(fun(x), dtype=float)
    if not np.all(np.isfinite(r)):
        raise ValueError("residuals not finite at the initial point")
    cost = 0.5 * float(r @ r)
    history = [cost]
    J = jacobian(x, r)
    lam = lam0
    message = "maximum iterations reached"
    converged = False
    it = 0
    while it < max_iter:
        it += 1
        g = J.T @ r
        if np.max(np.abs(g * floor)) <= gtol * max(cost, 1e-300):
            converged, message = True, "gradient tolerance reached"
            break
        A = J.T @ J
        d = np.diag(A).copy()
        d[d == 0.0] = 1.0
        accepted = False
        while lam < 1e16:
            try:
                step = np.linalg.solve(A + lam * np.diag(d), -g)
            except np.linalg.LinAlgError:
                lam *= 10.0
                continue
            x_new = np.clip(x + step, lower, upper)
            r_new = np.asarray(fun(x_new), dtype=float)
            cost_new = 0.5 * float(r_new @ r_new) if np.all(np.isfinite(r_new)) else np.inf
            if cost_new < cost:
                accepted = True
                break
            lam *= 10.0
        if not accepted:
            converged, message = True, "no further decrease possible"
            break
        dx = x_new - x
        drop = cost - cost_new
        x, r, cost = x_new, r_new, cost_new
        history.append(cost)
        lam = max(lam / 10.0, 1e-12)
        J = jacobian(x, r)
        if drop <= ftol * cost or np.all(np.abs(dx) <= xtol * np.maximum(np.abs(x), floor)):
            converged, message = True, "tolerance on cost or step reached"
            break
    return LMResult(x, cost, r, J, it, converged, message, history)


def covariance(J, cost, m, n, rcond=1e-12):
    """Parameter covariance from the Gauss-Newton curvature.

    Returns ``(cov, singular)``; parameters along a numerically null
    direction of J^T J are marked in ``singular`` and get inf variance.
    """
    A = J.T @ J
    s2 = 2.0 * cost / max(m - n, 1)
    norms = np.sqrt(np.diag(A))
    singular = norms == 0.0
    safe = np.where(singular, 1.0, norms)
    An = A / np.outer(safe, safe)
    w, V = np.linalg.eigh(An)
    keep = w > rcond * max(w.max(), 1e-300)
    inv = (V[:, keep] / w[keep]) @ V[:, keep].T
    null = V[:, ~keep]
    if null.size:
        singular |= np.any(np.abs(null) > 1e-3, axis=1)
    cov = s2 * inv / np.outer(safe, safe)
    cov[singular, :] = np.inf
    cov[:, singular] = np.inf
    return cov, singular
