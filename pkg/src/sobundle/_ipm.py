"""Dense primal-dual interior-point core for small convex QP/QCQP instances.

Canonical form over z = [d, vhat] or [d, vhat, uhat]:

    minimize    0.5 d^T W d + vhat
    subject to  Lmat z <= rvec                                   (linear)
                rq_i + svecs_i^T z + 0.5 d^T Pmats_i d <= 0      (quadratic)

with W SPD on the d-block and every Pmats_i positive semidefinite, so the
problem is convex.  The caller provides a strictly feasible z0.

Slack formulation with Mehrotra-style predictor-corrector steps; each
iteration eliminates the slack and multiplier blocks and solves one dense
normal-equations system per direction.  The function is written in
numba-compatible numpy and compiled via the package backend switch.
"""

import numpy as np

from ._backend import maybe_jit

STATUS_OPTIMAL = 0
STATUS_MAX_ITER = 1

_FTB = 0.995          # fraction-to-boundary
_SIGMA_MIN = 0.1      # centering clip
_SIGMA_MAX = 0.9


def _ipm_core(W, Lmat, rvec, Pmats, svecs, rq, z0, tol_kkt, tol_gap, max_iter):
    n = W.shape[0]
    nz = z0.shape[0]
    mL = Lmat.shape[0]
    mq = rq.shape[0]
    m = mL + mq

    z = z0.copy()
    qv = np.zeros(m)
    J = np.zeros((m, nz))
    for i in range(mL):
        J[i, :] = Lmat[i, :]

    # constraint values and Jacobian at the starting point
    d = z[:n]
    for i in range(mL):
        qv[i] = Lmat[i, :] @ z - rvec[i]
    for i in range(mq):
        Pd = Pmats[i] @ d
        qv[mL + i] = rq[i] + svecs[i, :] @ z + 0.5 * (d @ Pd)
        J[mL + i, :] = svecs[i, :]
        J[mL + i, :n] += Pd

    s = -qv
    mu = np.empty(m)
    for i in range(m):
        si = s[i]
        if si < 1e-12:
            si = 1e-12
        mu[i] = min(max(1.0 / si, 1e-8), 1e8)

    rd_norm = np.inf
    rp_norm = np.inf
    comp = np.inf
    status = STATUS_MAX_ITER
    iters = 0

    for it in range(max_iter + 1):
        d = z[:n]
        Wd = W @ d
        obj = z[n] + 0.5 * (d @ Wd)

        grad = np.zeros(nz)
        grad[:n] = Wd
        grad[n] += 1.0
        rd = grad + J.T @ mu
        rp = qv + s
        comp = s @ mu
        gap = comp / m

        rd_norm = np.max(np.abs(rd))
        rp_norm = np.max(np.abs(rp))
        scale = 1.0 + abs(obj)
        if rd_norm <= tol_kkt * scale and rp_norm <= tol_kkt * scale \
                and comp <= tol_gap * scale:
            status = STATUS_OPTIMAL
            break
        if it == max_iter:
            break

        # curvature block: W plus the active quadratic-constraint Hessians
        H = np.zeros((nz, nz))
        H[:n, :n] = W
        for i in range(mq):
            H[:n, :n] += mu[mL + i] * Pmats[i]
        Dscale = mu / s
        M = H + J.T @ (Dscale.reshape(m, 1) * J)

        # predictor (affine scaling, tau = 0)
        rc = mu * s
        rhs = -rd - J.T @ ((mu * rp - rc) / s)
        dz_aff = np.linalg.solve(M, rhs)
        ds_aff = -rp - J @ dz_aff
        dmu_aff = (-rc - mu * ds_aff) / s

        alpha_aff = 1.0
        for i in range(m):
            if ds_aff[i] < 0.0:
                step = -s[i] / ds_aff[i]
                if step < alpha_aff:
                    alpha_aff = step
            if dmu_aff[i] < 0.0:
                step = -mu[i] / dmu_aff[i]
                if step < alpha_aff:
                    alpha_aff = step
        gap_aff = ((s + alpha_aff * ds_aff) @ (mu + alpha_aff * dmu_aff)) / m
        sigma = (gap_aff / gap) ** 3
        if sigma < _SIGMA_MIN:
            sigma = _SIGMA_MIN
        elif sigma > _SIGMA_MAX:
            sigma = _SIGMA_MAX

        # corrector with centering
        rc = mu * s - sigma * gap + ds_aff * dmu_aff
        rhs = -rd - J.T @ ((mu * rp - rc) / s)
        dz = np.linalg.solve(M, rhs)
        ds = -rp - J @ dz
        dmu = (-rc - mu * ds) / s

        alpha = 1.0
        for i in range(m):
            if ds[i] < 0.0:
                step = -_FTB * s[i] / ds[i]
                if step < alpha:
                    alpha = step
            if dmu[i] < 0.0:
                step = -_FTB * mu[i] / dmu[i]
                if step < alpha:
                    alpha = step

        z += alpha * dz
        s += alpha * ds
        mu += alpha * dmu
        iters += 1

        # refresh constraint data at the new point
        d = z[:n]
        for i in range(mL):
            qv[i] = Lmat[i, :] @ z - rvec[i]
        for i in range(mq):
            Pd = Pmats[i] @ d
            qv[mL + i] = rq[i] + svecs[i, :] @ z + 0.5 * (d @ Pd)
            J[mL + i, :] = svecs[i, :]
            J[mL + i, :n] += Pd

    return z, mu, s, status, iters, rd_norm, rp_norm, comp


ipm_core = maybe_jit(_ipm_core)
