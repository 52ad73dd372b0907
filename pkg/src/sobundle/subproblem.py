"""Search-direction subproblems: convex QP and QCQP assembly plus solver.

Three variants share one canonical form handed to the interior-point core:

* ``l``: every constraint cut enters linearly (a QP),
* ``full``: each constraint cut carries its own SPD curvature matrix,
* ``reduced``: cuts are linearized through an extra variable ``uhat`` that a
  single shared quadratic constraint bounds from below.

Multipliers of the objective cuts form a simplex (their sum is one by the
stationarity of the vhat coordinate); the solver rescales tiny deviations
and treats larger ones as numerical failure.
"""

import time
from dataclasses import dataclass, field

import numpy as np

from ._ipm import STATUS_OPTIMAL, ipm_core

VARIANTS = ("l", "full", "reduced")

SIMPLEX_TOL = 1e-6
DEFAULT_TOL_KKT = 1e-9
DEFAULT_TOL_GAP = 1e-9
DEFAULT_MAX_ITER = 100


@dataclass
class SubproblemSpec:
    """One search-direction instance.

    ``obj_alpha[i]``/``obj_g[i]`` give the objective cuts; ``con_A``/
    ``con_ghat`` the constraint cuts.  ``con_G`` is a (q, n, n) stack for
    the full variant, a single shared (n, n) matrix for the reduced
    variant, and ``None`` for the QP variant.  When aggregate cuts are
    supplied they occupy the last row of their block (``has_obj_p`` /
    ``has_con_p``).  ``b_shift`` holds ``b - B x_k`` so linear rows read
    ``B d <= b_shift``.
    """

    variant: str
    W: np.ndarray
    Fx: float
    obj_alpha: np.ndarray
    obj_g: np.ndarray
    con_A: np.ndarray = None
    con_ghat: np.ndarray = None
    con_G: np.ndarray = None
    B: np.ndarray = None
    b_shift: np.ndarray = None
    has_obj_p: bool = False
    has_con_p: bool = False

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ValueError(f"unknown variant {self.variant!r}")
        self.W = np.ascontiguousarray(self.W, dtype=float)
        n = self.W.shape[0]
        if self.W.shape != (n, n):
            raise ValueError("W must be square")
        self.Fx = float(self.Fx)
        if not self.Fx < 0:
            raise ValueError(f"F(x_k) must be negative, got {self.Fx}")
        self.obj_alpha = np.atleast_1d(np.asarray(self.obj_alpha, dtype=float))
        self.obj_g = np.ascontiguousarray(
            np.asarray(self.obj_g, dtype=float).reshape(-1, n))
        if self.obj_alpha.size != self.obj_g.shape[0] or self.obj_alpha.size == 0:
            raise ValueError("need at least one objective cut, with matching alphas")
        if np.any(self.obj_alpha < 0):
            raise ValueError("objective cut errors must be nonnegative")
        if self.con_A is None:
            self.con_A = np.zeros(0)
            self.con_ghat = np.zeros((0, n))
        self.con_A = np.atleast_1d(np.asarray(self.con_A, dtype=float))
        self.con_ghat = np.ascontiguousarray(
            np.asarray(self.con_ghat, dtype=float).reshape(-1, n))
        if self.con_A.size != self.con_ghat.shape[0]:
            raise ValueError("constraint cut count mismatch")
        if np.any(self.con_A < 0):
            raise ValueError("constraint cut errors must be nonnegative")
        q = self.con_A.size
        if self.variant == "full":
            self.con_G = np.ascontiguousarray(
                np.asarray(self.con_G, dtype=float).reshape(q, n, n))
        elif self.variant == "reduced":
            self.con_G = np.ascontiguousarray(
                np.asarray(self.con_G if self.con_G is not None
                           else np.zeros((n, n)), dtype=float).reshape(n, n))
        else:
            self.con_G = None
        if self.B is None:
            self.B = np.zeros((0, n))
        self.B = np.asarray(self.B, dtype=float).reshape(-1, n)
        if self.b_shift is None:
            self.b_shift = np.zeros(self.B.shape[0])
        self.b_shift = np.atleast_1d(np.asarray(self.b_shift, dtype=float))
        if self.b_shift.size != self.B.shape[0]:
            raise ValueError("B and b_shift row counts differ")

    @property
    def n(self):
        return self.W.shape[0]

    @property
    def n_obj_cuts(self):
        return self.obj_alpha.size

    @property
    def n_con_cuts(self):
        return self.con_A.size


@dataclass
class SubproblemSolution:
    d: np.ndarray
    vhat: float
    uhat: float
    lam: np.ndarray
    lam_p: float
    mu: np.ndarray
    mu_p: float
    nu: np.ndarray
    status: str
    iterations: int
    solve_time: float
    rows_relaxed: bool = False
    residuals: dict = field(default_factory=dict)


@dataclass
class ResidualReport:
    stationarity: float
    primal: float
    dual: float
    complementarity: float
    gap: float

    def max_kkt(self):
        return max(self.stationarity, self.primal, self.dual,
                   self.complementarity)


def _nz(spec):
    # The uhat coordinate exists only when the reduced variant actually has
    # constraint cuts; otherwise the column would be unconstrained.
    if spec.variant == "reduced" and spec.n_con_cuts:
        return spec.n + 2
    return spec.n + 1


def _canonical(spec, relax_rows=True):
    """Flatten a spec into the kernel's (Lmat, rvec, Pmats, svecs, rq) form.

    Returns the arrays plus index maps telling which canonical row carries
    which multiplier, and a flag if linear rows had to be relaxed to keep
    d = 0 strictly interior.
    """
    n = spec.n
    nz = _nz(spec)
    q = spec.n_con_cuts
    p = spec.n_obj_cuts

    lin_rows = []
    lin_rhs = []
    lin_tags = []          # ('obj', i) | ('con', i) | ('nu', i) | ('upos', -1)
    quad_P = []
    quad_s = []
    quad_r = []
    quad_tags = []         # ('con', i) | ('quad', -1)

    for i in range(p):
        row = np.zeros(nz)
        row[:n] = spec.obj_g[i]
        row[n] = -1.0
        lin_rows.append(row)
        lin_rhs.append(spec.obj_alpha[i])
        lin_tags.append(("obj", i))

    if spec.variant == "reduced" and q:
        for i in range(q):
            row = np.zeros(nz)
            row[:n] = spec.con_ghat[i]
            row[n + 1] = 1.0
            lin_rows.append(row)
            lin_rhs.append(spec.con_A[i] - spec.Fx)
            lin_tags.append(("con", i))
        if q:
            if np.linalg.norm(spec.con_G) == 0.0:
                row = np.zeros(nz)
                row[n + 1] = -1.0
                lin_rows.append(row)
                lin_rhs.append(0.0)
                lin_tags.append(("upos", -1))
            else:
                svec = np.zeros(nz)
                svec[n + 1] = -1.0
                quad_P.append(spec.con_G)
                quad_s.append(svec)
                quad_r.append(0.0)
                quad_tags.append(("quad", -1))
    elif spec.variant == "full":
        for i in range(q):
            if np.linalg.norm(spec.con_G[i]) == 0.0:
                row = np.zeros(nz)
                row[:n] = spec.con_ghat[i]
                lin_rows.append(row)
                lin_rhs.append(spec.con_A[i] - spec.Fx)
                lin_tags.append(("con", i))
            else:
                svec = np.zeros(nz)
                svec[:n] = spec.con_ghat[i]
                quad_P.append(spec.con_G[i])
                quad_s.append(svec)
                quad_r.append(spec.Fx - spec.con_A[i])
                quad_tags.append(("con", i))
    else:
        for i in range(q):
            row = np.zeros(nz)
            row[:n] = spec.con_ghat[i]
            lin_rows.append(row)
            lin_rhs.append(spec.con_A[i] - spec.Fx)
            lin_tags.append(("con", i))

    relaxed = False
    b_shift = spec.b_shift
    if relax_rows and b_shift.size and np.any(b_shift <= 0):
        eps_lin = 1e-10 * (1.0 + float(np.max(np.abs(b_shift))))
        b_shift = np.maximum(b_shift, eps_lin)
        relaxed = True
    for i in range(spec.B.shape[0]):
        row = np.zeros(nz)
        row[:n] = spec.B[i]
        lin_rows.append(row)
        lin_rhs.append(b_shift[i])
        lin_tags.append(("nu", i))

    Lmat = np.ascontiguousarray(lin_rows, dtype=float).reshape(-1, nz)
    rvec = np.ascontiguousarray(lin_rhs, dtype=float)
    if quad_P:
        Pmats = np.ascontiguousarray(quad_P, dtype=float)
        svecs = np.ascontiguousarray(quad_s, dtype=float)
        rq = np.ascontiguousarray(quad_r, dtype=float)
    else:
        Pmats = np.zeros((0, n, n))
        svecs = np.zeros((0, nz))
        rq = np.zeros(0)
    return Lmat, rvec, Pmats, svecs, rq, lin_tags, quad_tags, relaxed, nz


def strictly_feasible_start(spec):
    """Interior point of the canonical feasible set: d = 0, generous slacks.

    Returns (z0, relaxed): the stacked starting point [d, vhat(, uhat)] and
    whether linear rows required a relaxation because some row of
    ``B x_k <= b`` was active or violated.
    """
    n = spec.n
    nz = _nz(spec)
    z0 = np.zeros(nz)
    z0[n] = float(np.max(-spec.obj_alpha)) + 1.0
    if nz == n + 2:
        z0[n + 1] = -spec.Fx / 2.0
    relaxed = bool(spec.b_shift.size and np.any(spec.b_shift <= 0))
    return z0, relaxed


def solve(spec, tol_kkt=DEFAULT_TOL_KKT, tol_gap=DEFAULT_TOL_GAP,
          max_iter=DEFAULT_MAX_ITER):
    """Solve the search-direction problem of the given variant.

    Returns a :class:`SubproblemSolution` with the primal point, the
    multipliers grouped by cut kind, and KKT residuals from a fresh
    evaluation at the returned point.
    """
    t_start = time.perf_counter()
    Lmat, rvec, Pmats, svecs, rq, lin_tags, quad_tags, relaxed, nz = \
        _canonical(spec)
    z0, _ = strictly_feasible_start(spec)
    n = spec.n

    status = "optimal"
    try:
        z, mu_all, _slack, code, iters, _rd, _rp, _comp = ipm_core(
            Lmat, rvec, Pmats, svecs, rq, z0,
            float(tol_kkt), float(tol_gap), int(max_iter))
        if code != STATUS_OPTIMAL:
            status = "max-iter"
    except np.linalg.LinAlgError:
        z = z0
        mu_all = np.zeros(Lmat.shape[0] + rq.shape[0])
        iters = 0
        status = "numerical-failure"

    d = z[:n].copy()
    vhat = float(z[n])

    p = spec.n_obj_cuts
    q = spec.n_con_cuts
    lam_all = np.zeros(p)
    mu_con = np.zeros(q)
    nu = np.zeros(spec.B.shape[0])
    mu_quad = 0.0
    tags = list(lin_tags) + list(quad_tags)
    for value, (kind, idx) in zip(mu_all, tags):
        if kind == "obj":
            lam_all[idx] = value
        elif kind == "con":
            mu_con[idx] = value
        elif kind == "nu":
            nu[idx] = value
        elif kind == "quad":
            mu_quad = value

    lam_sum = float(np.sum(lam_all))
    if status == "optimal":
        if abs(lam_sum - 1.0) <= SIMPLEX_TOL:
            lam_all = lam_all / lam_sum
        else:
            status = "numerical-failure"

    if spec.variant == "reduced":
        uhat = float(z[n + 1])
        if q:
            quad_val = 0.5 * float(d @ spec.con_G @ d)
            slack_tol = 1e-8 * (1.0 + abs(spec.Fx) + float(np.max(spec.con_A)))
            lin_slack = spec.con_A - spec.Fx - spec.con_ghat @ d - uhat
            if uhat - quad_val > slack_tol and np.all(lin_slack > slack_tol):
                uhat = quad_val
        else:
            uhat = 0.0
    elif spec.variant == "full":
        if spec.has_con_p and q:
            uhat = 0.5 * float(d @ spec.con_G[q - 1] @ d)
        else:
            uhat = 0.0
    else:
        uhat = 0.0

    lam_p = float(lam_all[p - 1]) if spec.has_obj_p else 0.0
    lam = lam_all[:p - 1] if spec.has_obj_p else lam_all
    mu_p = float(mu_con[q - 1]) if (spec.has_con_p and q) else 0.0
    mu = mu_con[:q - 1] if (spec.has_con_p and q) else mu_con

    sol = SubproblemSolution(
        d=d, vhat=vhat, uhat=uhat, lam=lam.copy(), lam_p=lam_p,
        mu=mu.copy(), mu_p=mu_p, nu=nu, status=status, iterations=int(iters),
        solve_time=time.perf_counter() - t_start, rows_relaxed=relaxed)
    report = kkt_residual(spec, sol)
    sol.residuals = {
        "stationarity": report.stationarity, "primal": report.primal,
        "dual": report.dual, "complementarity": report.complementarity,
        "gap": report.gap,
    }
    return sol


def _stack_multipliers(spec, sol):
    lam_all = np.concatenate([sol.lam, [sol.lam_p]]) if spec.has_obj_p \
        else np.asarray(sol.lam, dtype=float)
    if spec.n_con_cuts:
        mu_all = np.concatenate([sol.mu, [sol.mu_p]]) if spec.has_con_p \
            else np.asarray(sol.mu, dtype=float)
    else:
        mu_all = np.zeros(0)
    return lam_all, mu_all


def kkt_residual(spec, sol):
    """Recompute KKT residual norms for a candidate solution from scratch."""
    n = spec.n
    lam_all, mu_all = _stack_multipliers(spec, sol)
    d = np.asarray(sol.d, dtype=float)
    vhat = float(sol.vhat)
    q = spec.n_con_cuts

    # stationarity in (d, vhat[, uhat])
    r_d = spec.W @ d + spec.obj_g.T @ lam_all
    if q:
        r_d = r_d + spec.con_ghat.T @ mu_all
        if spec.variant == "full":
            for i in range(q):
                r_d = r_d + mu_all[i] * (spec.con_G[i] @ d)
        elif spec.variant == "reduced":
            r_d = r_d + float(np.sum(mu_all)) * (spec.con_G @ d)
    if spec.B.shape[0]:
        r_d = r_d + spec.B.T @ np.asarray(sol.nu, dtype=float)
    r_v = 1.0 - float(np.sum(lam_all))
    stationarity = max(float(np.max(np.abs(r_d))), abs(r_v))
    # reduced variant: uhat stationarity ties the quadratic-row multiplier
    # to the sum of the linearized-cut multipliers, which holds by
    # construction, so it adds nothing beyond r_v-style bookkeeping.

    viol = []
    comp = []
    obj_q = spec.obj_g @ d - vhat - spec.obj_alpha
    for i in range(spec.n_obj_cuts):
        viol.append(obj_q[i])
        comp.append(abs(lam_all[i] * obj_q[i]))
    if q:
        if spec.variant == "full":
            for i in range(q):
                qi = spec.Fx - spec.con_A[i] + spec.con_ghat[i] @ d \
                    + 0.5 * (d @ spec.con_G[i] @ d)
                viol.append(qi)
                comp.append(abs(mu_all[i] * qi))
        elif spec.variant == "reduced":
            uhat = float(sol.uhat)
            for i in range(q):
                qi = spec.Fx - spec.con_A[i] + spec.con_ghat[i] @ d + uhat
                viol.append(qi)
                comp.append(abs(mu_all[i] * qi))
            viol.append(0.5 * (d @ spec.con_G @ d) - uhat)
        else:
            for i in range(q):
                qi = spec.Fx - spec.con_A[i] + spec.con_ghat[i] @ d
                viol.append(qi)
                comp.append(abs(mu_all[i] * qi))
    if spec.B.shape[0]:
        rows = spec.B @ d - spec.b_shift
        nu = np.asarray(sol.nu, dtype=float)
        for i in range(spec.B.shape[0]):
            viol.append(rows[i])
            comp.append(abs(nu[i] * rows[i]))

    primal = max(0.0, float(np.max(viol))) if viol else 0.0
    duals = np.concatenate([lam_all, mu_all, np.asarray(sol.nu, dtype=float)])
    dual = max(0.0, -float(np.min(duals))) if duals.size else 0.0
    complementarity = float(np.max(comp)) if comp else 0.0
    gap = float(np.sum(comp))
    return ResidualReport(stationarity=stationarity, primal=primal, dual=dual,
                          complementarity=complementarity, gap=gap)


def kkt_size(spec):
    """(linear rows, quadratic-block rows) of the interior-point KKT system.

    The quadratic block contributes one n x n block per quadratic
    constraint: (number of constraint cuts) * n for the full variant, n for
    the reduced variant, 0 for the QP variant.
    """
    base = spec.n_obj_cuts + spec.n_con_cuts + spec.B.shape[0] + 1
    if spec.variant == "full":
        return base, spec.n_con_cuts * spec.n
    if spec.variant == "reduced":
        return base + 1, spec.n
    return base, 0


def dump_spec(spec, path):
    """Debug dump of a spec as JSON for offline cross-checking."""
    import json

    doc = {
        "variant": spec.variant,
        "W": spec.W.tolist(),
        "Fx": spec.Fx,
        "obj_alpha": spec.obj_alpha.tolist(),
        "obj_g": spec.obj_g.tolist(),
        "con_A": spec.con_A.tolist(),
        "con_ghat": spec.con_ghat.tolist(),
        "con_G": None if spec.con_G is None else spec.con_G.tolist(),
        "B": spec.B.tolist(),
        "b_shift": spec.b_shift.tolist(),
        "has_obj_p": spec.has_obj_p,
        "has_con_p": spec.has_con_p,
    }
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=1)
        fh.write("\n")
