"""Small conic-program builder on top of a real interior-point backend.

Complex Hermitian PSD variables are stored as real symmetric 2n x 2n PSD
blocks ``[[Re X, -Im X], [Im X, Re X]]`` plus the coupling equalities that
force that structure.  Helpers that turn traces into affine expressions say
how they account for the doubled trace.
"""

from __future__ import annotations

import enum
import logging
from dataclasses import dataclass, field
from pathlib import Path

import cvxpy as cp
import numpy as np
import scipy.sparse as sp

log = logging.getLogger(__name__)


class ConicBuildError(ValueError):
    pass


class Status(str, enum.Enum):
    OPTIMAL = "Optimal"
    INFEASIBLE = "Infeasible"
    UNBOUNDED = "Unbounded"
    NUMERICAL_FAILURE = "NumericalFailure"


def realify_hermitian(H: np.ndarray, tol: float = 1e-10) -> np.ndarray:
    """[[Re H, -Im H], [Im H, Re H]] for a Hermitian H."""
    H = np.asarray(H, dtype=complex)
    if H.ndim != 2 or H.shape[0] != H.shape[1]:
        raise ValueError("expected a square matrix")
    if np.abs(H - H.conj().T).max(initial=0.0) > tol * max(1.0, np.abs(H).max(initial=0.0)):
        raise ValueError("matrix is not Hermitian")
    return np.block([[H.real, -H.imag], [H.imag, H.real]])


def complexify(Z: np.ndarray) -> np.ndarray:
    """Inverse of :func:`realify_hermitian` (reads the left block column)."""
    n = Z.shape[0] // 2
    return Z[:n, :n] + 1j * Z[n:, :n]


class HermitianVar:
    """An n x n complex Hermitian PSD matrix variable."""

    def __init__(self, name: str, n: int):
        self.name = name
        self.n = n
        self.Z = cp.Variable((2 * n, 2 * n), PSD=True, name=name)
        self.re = self.Z[:n, :n]
        self.im = self.Z[n:, :n]
        self.coupling = [self.Z[:n, :n] == self.Z[n:, n:], self.Z[n:, :n] == -self.Z[:n, n:]]

    def trace(self):
        """tr(X); half of the realified trace."""
        return cp.trace(self.re)

    def inner(self, G: np.ndarray):
        """Re tr(G X) as an affine expression.

        Equals tr(realify(G) Z) / 2; for Hermitian G this is tr(G X) itself.
        """
        G = np.asarray(G, dtype=complex)
        return cp.sum(cp.multiply(G.real.T, self.re)) - cp.sum(cp.multiply(G.imag.T, self.im))

    def inner_complex(self, G: np.ndarray):
        """(Re, Im) of tr(G X) for a general complex G."""
        G = np.asarray(G, dtype=complex)
        re = cp.sum(cp.multiply(G.real.T, self.re)) - cp.sum(cp.multiply(G.imag.T, self.im))
        im = cp.sum(cp.multiply(G.real.T, self.im)) + cp.sum(cp.multiply(G.imag.T, self.re))
        return re, im

    def value(self) -> np.ndarray | None:
        if self.Z.value is None:
            return None
        X = complexify(self.Z.value)
        return (X + X.conj().T) / 2


@dataclass
class ConicSolution:
    values: dict
    objective: float | None
    status: Status
    primal_residual: float
    solver_status: str = ""
    solve_time: float = 0.0

    @property
    def ok(self) -> bool:
        return self.status is Status.OPTIMAL


@dataclass
class ConicProblem:
    """Hermitian PSD and real scalar variables, affine/SOC/LMI constraints, linear objective."""

    hermitians: dict = field(default_factory=dict)
    scalars: dict = field(default_factory=dict)
    constraints: list = field(default_factory=list)
    objective: object = None
    sense: str = "max"
    _compiled: object = field(default=None, repr=False)

    def hermitian(self, name: str, n: int) -> HermitianVar:
        if name in self.hermitians or name in self.scalars:
            raise ConicBuildError(f"duplicate variable {name!r}")
        v = HermitianVar(name, n)
        self.hermitians[name] = v
        self.constraints.extend(v.coupling)
        self._compiled = None
        return v

    def scalar(self, name: str, shape=(), nonneg: bool = False):
        if name in self.hermitians or name in self.scalars:
            raise ConicBuildError(f"duplicate variable {name!r}")
        v = cp.Variable(shape, name=name, nonneg=nonneg)
        self.scalars[name] = v
        self._compiled = None
        return v

    def add(self, constraint):
        """Affine (in)equality given as a cvxpy constraint."""
        self.constraints.append(constraint)
        self._compiled = None

    def add_soc(self, t, u):
        """||u||_2 <= t."""
        u = cp.hstack([cp.reshape(e, (1,), order="F") if not isinstance(e, (int, float)) else np.array([e])
                       for e in u])
        self.constraints.append(cp.SOC(t, u))
        self._compiled = None

    def add_hermitian_lmi(self, entries):
        """Hermitian LMI from an n x n grid of (re, im) affine entries, realified to 2n x 2n."""
        n = len(entries)
        if any(len(row) != n for row in entries):
            raise ConicBuildError("LMI entries must form a square grid")
        name = f"lmi{sum(1 for c in self.constraints if isinstance(c, cp.constraints.PSD))}"
        W = cp.Variable((2 * n, 2 * n), PSD=True, name=name)
        for i in range(n):
            for j in range(n):
                re, im = entries[i][j]
                self.constraints += [W[i, j] == re, W[n + i, n + j] == re,
                                     W[n + i, j] == im, W[i, n + j] == -im]
        self._compiled = None

    def maximize(self, expr):
        self.objective, self.sense, self._compiled = expr, "max", None

    def minimize(self, expr):
        self.objective, self.sense, self._compiled = expr, "min", None

    def to_cvxpy(self) -> cp.Problem:
        """The cvxpy problem; cached so parameter-only changes reuse the compiled form."""
        if self.objective is None:
            raise ConicBuildError("objective not set")
        if self._compiled is None:
            obj = cp.Maximize(self.objective) if self.sense == "max" else cp.Minimize(self.objective)
            self._compiled = cp.Problem(obj, self.constraints)
        return self._compiled


class CvxpyBackend:
    """Adapter binding the builder to a cvxpy interior-point solver."""

    def __init__(self, solver: str = "CLARABEL", max_iter: int = 50_000):
        self.solver = solver
        self.max_iter = max_iter

    def options(self, tol: float) -> dict:
        if self.solver == "CLARABEL":
            return dict(tol_feas=tol, tol_gap_abs=tol, tol_gap_rel=tol, max_iter=min(self.max_iter, 500))
        if self.solver == "SCS":
            return dict(eps=tol, max_iters=self.max_iter)
        return {}

    def solve(self, prob: cp.Problem, tol: float) -> str:
        prob.solve(solver=self.solver, **self.options(tol))
        return prob.status


DEFAULT_BACKEND = CvxpyBackend()


def _violation(constraints) -> float:
    worst = 0.0
    for c in constraints:
        try:
            v = c.violation()
        except (ValueError, TypeError):
            return float("inf")
        if v is None:
            return float("inf")
        worst = max(worst, float(np.max(v)) if np.size(v) else 0.0)
    return worst


def solve(problem: ConicProblem, tol: float = 1e-7, backend: CvxpyBackend | None = None) -> ConicSolution:
    backend = backend or DEFAULT_BACKEND
    prob = problem.to_cvxpy()
    try:
        raw = backend.solve(prob, tol)
    except cp.error.SolverError as exc:
        log.debug("solver error: %s", exc)
        return ConicSolution({}, None, Status.NUMERICAL_FAILURE, float("inf"), solver_status=str(exc))
    time = float(prob.solver_stats.solve_time or 0.0) if prob.solver_stats else 0.0
    if raw in (cp.INFEASIBLE, cp.INFEASIBLE_INACCURATE):
        return ConicSolution({}, None, Status.INFEASIBLE, float("inf"), raw, time)
    if raw in (cp.UNBOUNDED, cp.UNBOUNDED_INACCURATE):
        return ConicSolution({}, None, Status.UNBOUNDED, float("inf"), raw, time)
    values = {name: v.value() for name, v in problem.hermitians.items()}
    values.update({name: v.value for name, v in problem.scalars.items()})
    resid = _violation(problem.constraints)
    status = Status.OPTIMAL
    if raw == cp.OPTIMAL_INACCURATE:
        # accepted only when the returned point is still essentially feasible
        if resid > 1e3 * tol:
            status = Status.NUMERICAL_FAILURE
    elif raw != cp.OPTIMAL:
        status = Status.NUMERICAL_FAILURE
    return ConicSolution(values, float(prob.value), status, resid, raw, time)


def dump(problem: ConicProblem, path: str | Path, solver: str = "CLARABEL") -> None:
    """Write the canonical conic data as sparse triplets for offline debugging."""
    data, _, _ = problem.to_cvxpy().get_problem_data(solver)
    A = sp.coo_matrix(data["A"])
    lines = [f"# cone dims: {data['dims']}", f"# A {A.shape[0]} x {A.shape[1]}, nnz {A.nnz}"]
    lines.append("[c]")
    lines += [f"{i} {v:.17g}" for i, v in enumerate(np.asarray(data["c"]).ravel()) if v != 0]
    lines.append("[A]")
    lines += [f"{r} {c} {v:.17g}" for r, c, v in zip(A.row, A.col, A.data)]
    lines.append("[b]")
    lines += [f"{i} {v:.17g}" for i, v in enumerate(np.asarray(data["b"]).ravel()) if v != 0]
    Path(path).write_text("\n".join(lines) + "\n")
