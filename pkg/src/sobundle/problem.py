"""Problem definitions: max-of-smooth oracles, built-in examples, random
piecewise-quadratic instances, and instance file I/O.

A problem supplies, for the objective and for the single nonsmooth
constraint, an oracle ``x -> (value, subgradient, hessian substitute)``,
optional linear rows ``B x <= b``, and a strictly feasible starting point.
"""

import json
import math
from dataclasses import dataclass, field

import numpy as np

from ._backend import maybe_jit
from .linalg import sym

INSTANCE_FORMAT = "sobundle-instance"
INSTANCE_VERSION = 1


class EvaluationError(ValueError):
    """Oracle returned a non-finite quantity (or was fed a bad point)."""

    def __init__(self, message, y=None):
        super().__init__(message)
        self.y = None if y is None else np.asarray(y, dtype=float)


class InstanceFormatError(ValueError):
    """Instance file is malformed or violates a problem invariant."""


@dataclass
class SmoothPiece:
    """One quadratic piece: alpha + a^T (x - center) + 1/2 (x - center)^T A (x - center)."""

    alpha: float
    a: np.ndarray
    A: np.ndarray
    center: np.ndarray

    def __post_init__(self):
        self.alpha = float(self.alpha)
        self.a = np.asarray(self.a, dtype=float).reshape(-1)
        self.center = np.asarray(self.center, dtype=float).reshape(-1)
        self.A = sym(np.asarray(self.A, dtype=float))
        n = self.a.size
        if self.center.size != n or self.A.shape != (n, n):
            raise ValueError(
                f"inconsistent piece dimensions: a has {n}, center has "
                f"{self.center.size}, A is {self.A.shape}"
            )

    @property
    def n(self):
        return self.a.size

    def value(self, x):
        dx = x - self.center
        return self.alpha + self.a @ dx + 0.5 * (dx @ self.A @ dx)

    def gradient(self, x):
        return self.a + self.A @ (x - self.center)


def _piece_values_kernel(alphas, avecs, mats, centers, weights, x):
    m = alphas.shape[0]
    out = np.empty(m)
    for i in range(m):
        dx = x - centers[i]
        out[i] = weights[i] * (
            alphas[i] + avecs[i] @ dx + 0.5 * (dx @ (mats[i] @ dx))
        )
    return out


piece_values_kernel = maybe_jit(_piece_values_kernel)


class MaxOfSmooth:
    """Oracle for max_i c_i f_i(x) over weighted quadratic pieces.

    Derivative data comes from one active piece; ties break to the lowest
    index, which keeps the oracle deterministic (any maximizing piece gives
    a valid subgradient).
    """

    def __init__(self, pieces, weights=None):
        if not pieces:
            raise ValueError("max_of_smooth needs at least one piece")
        self.pieces = list(pieces)
        n = self.pieces[0].n
        for p in self.pieces:
            if p.n != n:
                raise ValueError("pieces have mismatched dimensions")
        m = len(self.pieces)
        if weights is None:
            weights = np.ones(m)
        self.weights = np.asarray(weights, dtype=float).reshape(-1)
        if self.weights.size != m:
            raise ValueError("one weight per piece required")
        if np.any(self.weights <= 0):
            raise ValueError("weights must be positive")
        self.n = n
        self._alphas = np.ascontiguousarray([p.alpha for p in self.pieces])
        self._avecs = np.ascontiguousarray([p.a for p in self.pieces])
        self._mats = np.ascontiguousarray([p.A for p in self.pieces])
        self._centers = np.ascontiguousarray([p.center for p in self.pieces])

    def piece_values(self, x):
        """Weighted values c_i f_i(x) of every piece."""
        x = np.ascontiguousarray(x, dtype=float)
        return piece_values_kernel(
            self._alphas, self._avecs, self._mats, self._centers, self.weights, x
        )

    def __call__(self, x):
        x = np.ascontiguousarray(x, dtype=float)
        vals = self.piece_values(x)
        i = int(np.argmax(vals))
        c = self.weights[i]
        g = c * (self._avecs[i] + self._mats[i] @ (x - self._centers[i]))
        return float(vals[i]), g, c * self._mats[i]


def max_of_smooth(pieces, weights=None):
    """Build the max-of-weighted-pieces oracle (see :class:`MaxOfSmooth`)."""
    return MaxOfSmooth(pieces, weights)


@dataclass
class Problem:
    """Nonsmooth problem: min f(x) s.t. F(x) <= 0 and B x <= b.

    ``objective`` and ``constraint`` are oracles ``x -> (value, subgradient,
    hessian substitute)``.  ``x0`` must be strictly feasible: F(x0) < 0 and
    B x0 <= b.  Problems are immutable after construction and safe to share
    across concurrent runs; evaluation counters live in the run.
    """

    n: int
    objective: object
    constraint: object
    x0: np.ndarray
    B: np.ndarray = None
    b: np.ndarray = None
    name: str = ""
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.n = int(self.n)
        self.x0 = np.asarray(self.x0, dtype=float).reshape(-1)
        if self.x0.size != self.n:
            raise ValueError(f"x0 has size {self.x0.size}, expected {self.n}")
        if self.B is None:
            self.B = np.zeros((0, self.n))
        self.B = np.asarray(self.B, dtype=float).reshape(-1, self.n)
        if self.b is None:
            self.b = np.zeros(self.B.shape[0])
        self.b = np.asarray(self.b, dtype=float).reshape(-1)
        if self.b.size != self.B.shape[0]:
            raise ValueError("B and b have mismatched row counts")
        F0 = self.constraint(self.x0)[0]
        if not F0 < 0:
            raise ValueError(
                f"starting point not strictly feasible: F(x0) = {F0}"
            )
        if self.B.shape[0] and np.any(self.B @ self.x0 > self.b):
            raise ValueError("starting point violates the linear rows B x <= b")


@dataclass
class EvalRecord:
    """All six quantities from one logical oracle call at a trial point."""

    y: np.ndarray
    f: float
    g: np.ndarray
    G: np.ndarray
    F: float
    gF: np.ndarray
    GF: np.ndarray


def evaluate(problem, y):
    """Evaluate objective and constraint oracles at y (one logical call).

    Callers that track evaluation counts (the solver run, the benchmark)
    increment their counter once per call to this function.
    """
    y = np.asarray(y, dtype=float).reshape(-1)
    if y.size != problem.n or not np.all(np.isfinite(y)):
        raise EvaluationError("trial point is non-finite or has wrong size", y)
    f, g, G = problem.objective(y)
    F, gF, GF = problem.constraint(y)
    rec = EvalRecord(y=y, f=float(f), g=np.asarray(g, dtype=float),
                     G=np.asarray(G, dtype=float), F=float(F),
                     gF=np.asarray(gF, dtype=float), GF=np.asarray(GF, dtype=float))
    if not (math.isfinite(rec.f) and math.isfinite(rec.F)):
        raise EvaluationError("oracle returned a non-finite value", y)
    if not (np.all(np.isfinite(rec.g)) and np.all(np.isfinite(rec.gF))
            and np.all(np.isfinite(rec.G)) and np.all(np.isfinite(rec.GF))):
        raise EvaluationError("oracle returned non-finite derivative data", y)
    return rec


def _disk(cx, cy):
    # (x1-cx)^2 + (x2-cy)^2 - 1
    return SmoothPiece(alpha=-1.0, a=np.zeros(2), A=2.0 * np.eye(2),
                       center=np.array([cx, cy]))


def _e1_objective():
    # (x1 + 1/2)^2 + (x2 + 3/2)^2
    return MaxOfSmooth([SmoothPiece(alpha=0.0, a=np.zeros(2), A=2.0 * np.eye(2),
                                    center=np.array([-0.5, -1.5]))])


def example_E1():
    """Two-disk example: minimize a shifted paraboloid over a lens."""
    constraint = MaxOfSmooth([_disk(0.0, 0.0), _disk(1.0, -1.0)])
    return Problem(n=2, objective=_e1_objective(), constraint=constraint,
                   x0=np.array([0.5, -0.5]), name="E1")


class _E2CombinedConstraint:
    """max(-max(disk1, disk2), parabola) variant of the E2 constraint."""

    n = 2

    def __init__(self):
        self._disks = MaxOfSmooth([_disk(0.0, 0.0), _disk(1.0, -1.0)])
        self._para = SmoothPiece(alpha=-1.0, a=np.array([0.0, -1.0]),
                                 A=np.diag([2.0, 0.0]), center=np.array([1.0, 0.0]))

    def piece_values(self, x):
        x = np.asarray(x, dtype=float)
        inner = self._disks.piece_values(x)
        return np.array([-np.max(inner), self._para.value(x)])

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        dv, dg, dG = self._disks(x)
        pv = self._para.value(x)
        if -dv >= pv:
            return -dv, -dg, -dG
        return float(pv), self._para.gradient(x), self._para.A


def example_E2(combined_max=False):
    """Nonconvex companion of E1: feasible outside both disks, below a parabola.

    ``combined_max=True`` switches to the alternative reading
    max(-max(disk1, disk2), parabola); its minimizer should not be treated
    as ground truth either way.
    """
    if combined_max:
        constraint = _E2CombinedConstraint()
        name = "E2alt"
    else:
        neg_disk1 = SmoothPiece(alpha=1.0, a=np.zeros(2), A=-2.0 * np.eye(2),
                                center=np.array([0.0, 0.0]))
        neg_disk2 = SmoothPiece(alpha=1.0, a=np.zeros(2), A=-2.0 * np.eye(2),
                                center=np.array([1.0, -1.0]))
        para = SmoothPiece(alpha=-1.0, a=np.array([0.0, -1.0]),
                           A=np.diag([2.0, 0.0]), center=np.array([1.0, 0.0]))
        constraint = MaxOfSmooth([neg_disk1, neg_disk2, para])
        name = "E2"
    return Problem(n=2, objective=_e1_objective(), constraint=constraint,
                   x0=np.array([1.0, 1.5]), name=name)


BUILTIN_EXAMPLES = {"E1": example_E1, "E2": example_E2}

FEASIBILITY_MARGIN = 0.5


def _random_spectral(rng, n, lo, hi):
    q, _ = np.linalg.qr(rng.normal(size=(n, n)))
    u = rng.uniform(lo, hi, size=n)
    return sym(q.T @ (u[:, None] * q))


def gen_piecewise_quadratic(seed, N, m1, m2, difficulty="easy"):
    """Random max-of-quadratics instance with a bounded feasible set.

    The objective is a max of ``m1`` quadratic pieces with possibly
    indefinite curvature; the constraint is a max of ``m2`` quadratic
    pieces, one of which is positive definite so the feasible set is
    bounded.  The constant terms are fixed last so that F(x0) = -0.5
    exactly, giving every instance the same strict-feasibility margin.

    ``difficulty`` steers how many constraint pieces are near-active around
    the generated region: "hard" clusters ceil(m2/3) constraint centers in
    a unit ball around a common point and shifts their constants so the
    zero surfaces nearly coincide there; "easy" scatters all constraint
    centers uniformly in [-5, 5]^N.
    """
    if N < 2 or m1 < 1 or m2 < 1:
        raise ValueError("need N >= 2, m1 >= 1, m2 >= 1")
    if difficulty not in ("easy", "hard"):
        raise ValueError(f"unknown difficulty {difficulty!r}")
    rng = np.random.default_rng(seed)

    obj_pieces = []
    for _ in range(m1):
        center = rng.uniform(-1.0, 1.0, size=N)
        a = rng.uniform(-1.0, 1.0, size=N)
        A = _random_spectral(rng, N, -1.0, 2.0)
        alpha = rng.uniform(-1.0, 1.0)
        obj_pieces.append(SmoothPiece(alpha=alpha, a=a, A=A, center=center))

    x0 = rng.uniform(-1.0, 1.0, size=N)
    hub = rng.uniform(-1.0, 1.0, size=N)
    n_cluster = math.ceil(m2 / 3) if difficulty == "hard" else 0

    con_pieces = []
    for j in range(m2):
        if j < n_cluster:
            direction = rng.normal(size=N)
            direction /= np.linalg.norm(direction)
            radius = rng.uniform() ** (1.0 / N)
            center = hub + radius * direction
        else:
            center = rng.uniform(-5.0, 5.0, size=N)
        bvec = rng.uniform(-1.0, 1.0, size=N)
        if j == 0:
            B = _random_spectral(rng, N, 0.5, 2.0)
        else:
            B = _random_spectral(rng, N, -1.0, 2.0)
        jitter = rng.uniform(-0.05, 0.05) if j < n_cluster else 0.0

        def homogeneous(x, c=center, bv=bvec, M=B):
            dx = x - c
            return bv @ dx + 0.5 * (dx @ M @ dx)

        beta = -homogeneous(x0) - FEASIBILITY_MARGIN
        if j < n_cluster:
            # Pin the piece's zero surface (nearly) through the hub, but never
            # above the value that keeps the margin at x0.
            beta = min(beta, -homogeneous(hub) + jitter)
        con_pieces.append(SmoothPiece(alpha=beta, a=bvec, A=B, center=center))

    name = f"pwq-N{N}-m1{m1}-m2{m2}-{difficulty}-s{seed}"
    meta = {"seed": int(seed), "m1": int(m1), "m2": int(m2),
            "difficulty": difficulty}
    return Problem(n=N, objective=MaxOfSmooth(obj_pieces),
                   constraint=MaxOfSmooth(con_pieces), x0=x0,
                   name=name, meta=meta)


def _piece_to_json(piece, weight):
    alpha = piece.alpha * weight
    a = piece.a * weight
    A = piece.A * weight
    return {"alpha": alpha, "a": a.tolist(), "center": piece.center.tolist(),
            "A": A.tolist()}


def _require_max_of_smooth(oracle, what):
    if not isinstance(oracle, MaxOfSmooth):
        raise InstanceFormatError(
            f"{what} oracle is not a max-of-smooth composite; cannot serialize"
        )


def save_instance(problem, path):
    """Write a problem to the JSON instance format.

    Piece weights are folded into the stored coefficients, so loading
    always reconstructs unit-weight pieces with identical oracle values.
    """
    _require_max_of_smooth(problem.objective, "objective")
    _require_max_of_smooth(problem.constraint, "constraint")
    obj = problem.objective
    con = problem.constraint
    doc = {
        "format": INSTANCE_FORMAT,
        "version": INSTANCE_VERSION,
        "name": problem.name,
        "n": problem.n,
        "m1": len(obj.pieces),
        "m2": len(con.pieces),
        "objective_pieces": [
            _piece_to_json(p, w) for p, w in zip(obj.pieces, obj.weights)
        ],
        "constraint_pieces": [
            _piece_to_json(p, w) for p, w in zip(con.pieces, con.weights)
        ],
        "B": problem.B.tolist(),
        "b": problem.b.tolist(),
        "x0": problem.x0.tolist(),
    }
    if "seed" in problem.meta:
        doc["seed"] = problem.meta["seed"]
    if "difficulty" in problem.meta:
        doc["difficulty"] = problem.meta["difficulty"]
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=1)
        fh.write("\n")


def _parse_piece(obj, n, where):
    for key in ("alpha", "a", "center", "A"):
        if key not in obj:
            raise InstanceFormatError(f"{where}: missing field {key!r}")
    a = np.asarray(obj["a"], dtype=float)
    center = np.asarray(obj["center"], dtype=float)
    A = np.asarray(obj["A"], dtype=float)
    if a.shape != (n,) or center.shape != (n,):
        raise InstanceFormatError(
            f"{where}: vector length mismatch (expected {n})"
        )
    if A.shape != (n, n):
        raise InstanceFormatError(
            f"{where}: matrix shape {A.shape} does not match n = {n}"
        )
    if not np.array_equal(A, A.T):
        raise InstanceFormatError(f"{where}: matrix is not symmetric")
    return SmoothPiece(alpha=float(obj["alpha"]), a=a, A=A, center=center)


def load_instance(path):
    """Read a problem from the JSON instance format, enforcing invariants."""
    with open(path) as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise InstanceFormatError(
                f"{path}: not valid JSON (line {exc.lineno}, col {exc.colno}): "
                f"{exc.msg}"
            ) from None
    if doc.get("format") != INSTANCE_FORMAT:
        raise InstanceFormatError(f"{path}: missing or wrong 'format' marker")
    for key in ("n", "objective_pieces", "constraint_pieces", "x0"):
        if key not in doc:
            raise InstanceFormatError(f"{path}: missing field {key!r}")
    n = int(doc["n"])
    obj_pieces = [
        _parse_piece(p, n, f"{path}: objective_pieces[{i}]")
        for i, p in enumerate(doc["objective_pieces"])
    ]
    con_pieces = [
        _parse_piece(p, n, f"{path}: constraint_pieces[{i}]")
        for i, p in enumerate(doc["constraint_pieces"])
    ]
    if not obj_pieces or not con_pieces:
        raise InstanceFormatError(f"{path}: empty piece list")
    x0 = np.asarray(doc["x0"], dtype=float)
    if x0.shape != (n,):
        raise InstanceFormatError(f"{path}: x0 length does not match n")
    B = np.asarray(doc.get("B", []), dtype=float).reshape(-1, n) if doc.get("B") \
        else np.zeros((0, n))
    b = np.asarray(doc.get("b", []), dtype=float).reshape(-1)
    if b.size != B.shape[0]:
        raise InstanceFormatError(f"{path}: B and b row counts differ")
    constraint = MaxOfSmooth(con_pieces)
    F0 = constraint(x0)[0]
    if not F0 < 0:
        raise InstanceFormatError(
            f"{path}: starting point not strictly feasible (F(x0) = {F0})"
        )
    meta = {}
    for key in ("seed", "difficulty"):
        if key in doc:
            meta[key] = doc[key]
    meta["m1"] = len(obj_pieces)
    meta["m2"] = len(con_pieces)
    return Problem(n=n, objective=MaxOfSmooth(obj_pieces), constraint=constraint,
                   x0=x0, B=B, b=b, name=doc.get("name", ""), meta=meta)
